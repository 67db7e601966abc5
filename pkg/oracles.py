# oracles.py: closed-form evolutions used as ground truth
#
# Points are passed with their components on axis 0, shape (d,) or (d, ...),
# like every other field in the package.
import logging
import math

import numpy as np
from scipy import integrate
from scipy.spatial import ConvexHull

from anisotropy import Ellipse, Euclidean, LInfinity, Polyhedral, WeightedL1
from errors import OracleError
from flow_checks import Report
from grid_fields import IndicatorField

log = logging.getLogger(__name__)


def _points(x, d=2):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != d:
        raise OracleError(f"expected {d} components on axis 0, got shape {x.shape}")
    return x


class OracleSolution:
    """Exact evolution E(t) with its arrival time, perimeter, volume and BV energy."""

    kind = "abstract"
    dimension = 2

    @property
    def extinction_time(self):
        raise NotImplementedError

    def contains(self, points, t):
        raise NotImplementedError

    def arrival(self, points):
        raise NotImplementedError

    def perimeter(self, t):
        raise NotImplementedError

    def volume(self, t):
        raise NotImplementedError

    def bv_energy(self):
        """Integral over time of the perimeter, i.e. int phi(-Du)."""
        val, _ = integrate.quad(self.perimeter, 0.0, self.extinction_time, limit=200)
        return float(val)

    def rasterize(self, dom, t):
        """Cells whose centres lie in the closed set E(t)."""
        return IndicatorField(dom, self.contains(dom.centers(), t))

    def describe(self):
        return {"kind": self.kind}


# -----------------------
# Cross
# -----------------------
class CrossOracle(OracleSolution):
    """Union of [-1,1]x[-L,L] and [-L,L]x[-1,1] under phi = psi = l1.

    Arms retract at unit speed until t = L - 1; the remaining square
    [-a, a]^2 shrinks with a = sqrt(1 - 2 (t - L + 1)) and vanishes half a
    time unit later.
    """

    kind = "cross"

    def __init__(self, L=2.0):
        if L < 1:
            raise OracleError(f"cross arms need L >= 1, got {L}")
        self.L = float(L)

    @property
    def extinction_time(self):
        return self.L - 0.5

    def _phase(self, t):
        """('arms', half-length) or ('square', half-side) or ('empty', 0)."""
        if t < 0:
            raise OracleError(f"time must be nonnegative, got {t}")
        if t <= self.L - 1:
            return "arms", self.L - t
        s = t - (self.L - 1)
        if s <= 0.5:
            return "square", math.sqrt(max(1.0 - 2.0 * s, 0.0))
        return "empty", 0.0

    def contains(self, points, t):
        x = _points(points)
        hi = np.max(np.abs(x), axis=0)
        lo = np.min(np.abs(x), axis=0)
        phase, size = self._phase(t)
        if phase == "arms":
            return (hi <= size) & (lo <= 1.0)
        if phase == "square":
            return hi <= size
        return np.zeros(hi.shape, dtype=bool)

    def arrival(self, points):
        x = _points(points)
        hi = np.max(np.abs(x), axis=0)
        lo = np.min(np.abs(x), axis=0)
        inside = (lo <= 1.0) & (hi <= self.L)
        core = (self.L - 1.0) + 0.5 * (1.0 - hi ** 2)
        return np.where(inside, np.where(hi > 1.0, self.L - hi, core), 0.0)

    def perimeter(self, t):
        phase, size = self._phase(t)
        return 8.0 * size if phase != "empty" else 0.0

    def volume(self, t):
        phase, size = self._phase(t)
        if phase == "arms":
            return 8.0 * size - 4.0
        return 4.0 * size ** 2 if phase == "square" else 0.0

    def bv_energy(self):
        return 8.0 * (self.L * (self.L - 1) - 0.5 * (self.L - 1) ** 2) + 8.0 / 3.0

    def polygon(self, t):
        return cross_set(t, self.L)

    def describe(self):
        return {"kind": self.kind, "L": self.L}


def square_polygon(a, center=(0.0, 0.0)):
    cx, cy = center
    return np.array([[cx - a, cy - a], [cx + a, cy - a], [cx + a, cy + a], [cx - a, cy + a]])


def cross_set(t, L=2.0):
    """Exact counter-clockwise vertex list of E(t) for the cross; shape (0, 2) once extinct."""
    phase, size = CrossOracle(L)._phase(t)
    if phase == "square":
        return square_polygon(size)
    if phase == "empty":
        return np.zeros((0, 2))
    a = size
    return np.array([
        [1, -a], [1, -1], [a, -1], [a, 1], [1, 1], [1, a],
        [-1, a], [-1, 1], [-a, 1], [-a, -1], [-1, -1], [-1, -a],
    ], dtype=float)


def polygon_area(vertices):
    if len(vertices) < 3:
        return 0.0
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def cross_arrival(x, L=2.0):
    """sup{t : x in E(t)} for the cross; 0 outside E0."""
    return CrossOracle(L).arrival(x)


def calibration_field(points):
    """z = (x, y) in the centre square, (x, sign y) in the vertical arms, (sign x, y) in the horizontal ones."""
    x = _points(points)
    ax, ay = np.abs(x[0]), np.abs(x[1])
    zx = np.where(ax <= 1.0, x[0], np.sign(x[0]))
    zy = np.where(ay <= 1.0, x[1], np.sign(x[1]))
    return np.stack([zx, zy])


def calibration_divergence(points):
    """div z = 1 + indicator of [-1,1]^2."""
    x = _points(points)
    return 1.0 + ((np.abs(x[0]) <= 1.0) & (np.abs(x[1]) <= 1.0))


def _edge_flux(p, q):
    """Integral of z . n along the segment p -> q (outer normal of a counter-clockwise polygon)."""
    edge = q - p
    length = float(np.hypot(*edge))
    if length == 0.0:
        return 0.0
    normal = np.array([edge[1], -edge[0]]) / length

    def integrand(s):
        pt = p + s * edge
        return float(np.dot(calibration_field(pt), normal))

    val, _ = integrate.quad(integrand, 0.0, 1.0, points=[0.5])
    return val * length


def calibration_check(sample_points, L=2.0, psi=None, n_flux=8, fd_step=1e-4):
    """Dual feasibility, divergence and flux identity of the cross calibration field."""
    psi = psi or WeightedL1(2)
    x = _points(sample_points)
    if x.ndim == 1:
        x = x[:, None]
    oracle = CrossOracle(L)
    if not np.all(oracle.contains(x, 0.0)):
        raise OracleError("calibration points must lie in the initial cross")

    z = calibration_field(x)
    dual = np.asarray(psi.dual_eval(z))
    div_exact = calibration_divergence(x)
    # centred differences, skipped next to the lines |x| = 1 and |y| = 1 where z has kinks
    smooth = (np.abs(np.abs(x[0]) - 1) > 2 * fd_step) & (np.abs(np.abs(x[1]) - 1) > 2 * fd_step)
    div_fd = np.zeros(x.shape[1])
    for k in range(2):
        e = np.zeros((2, 1))
        e[k] = fd_step
        div_fd += (calibration_field(x + e)[k] - calibration_field(x - e)[k]) / (2 * fd_step)
    div_err = float(np.max(np.abs(div_fd - div_exact)[smooth])) if smooth.any() else 0.0

    flux_err = 0.0
    levels = np.linspace(1.0, L, n_flux)
    for ell in levels:
        poly = cross_set(L - ell, L)
        flux = sum(_edge_flux(poly[i], poly[(i + 1) % len(poly)]) for i in range(len(poly)))
        flux_err = max(flux_err, abs(flux - 8.0 * ell))

    max_dual = float(dual.max())
    passed = max_dual <= 1.0 + 1e-12 and div_err <= 1e-6 and flux_err <= 1e-8
    report = Report(
        name="calibration",
        passed=bool(passed),
        worst_margin=1.0 - max_dual,
        samples=int(x.shape[1]),
        details={
            "max_dual": max_dual,
            "divergence_error": div_err,
            "flux_error": float(flux_err),
            "z": z.T.tolist(),
            "div_z": div_exact.tolist(),
        },
    )
    log.info("calibration: max dual %.6f, div err %.2e, flux err %.2e", max_dual, div_err, flux_err)
    return report


# -----------------------
# Shrinking Wulff shapes and balls (phi = psi)
# -----------------------
def _wulff_volume(phi):
    """Volume of {phi° <= 1}."""
    d = phi.dimension
    if isinstance(phi, Euclidean):
        return math.pi if d == 2 else 4.0 * math.pi / 3.0
    if isinstance(phi, WeightedL1):
        return float(np.prod(2.0 * phi.weights))
    if isinstance(phi, LInfinity):
        return float(2.0 ** d / math.factorial(d) * np.prod(phi.weights))
    if isinstance(phi, Ellipse):
        unit = math.pi if d == 2 else 4.0 * math.pi / 3.0
        return unit * math.sqrt(float(np.linalg.det(phi.matrix)))
    if isinstance(phi, Polyhedral):
        return float(ConvexHull(phi.directions).volume)
    if d == 2:
        # polar integral of the radial function 1 / phi°(theta)
        val, _ = integrate.quad(
            lambda th: 0.5 / float(phi.dual_eval(np.array([math.cos(th), math.sin(th)]))) ** 2,
            0.0, 2.0 * math.pi, limit=200,
        )
        return float(val)
    raise OracleError(f"no Wulff volume formula for {phi.kind} in 3-D")


class WulffOracle(OracleSolution):
    """Self-similar shrinking Wulff shape {phi°(x - c) <= r(t)} with r = sqrt(R0^2 - 2 (d-1) t)."""

    kind = "wulff"

    def __init__(self, phi, R0, center=None):
        if R0 <= 0:
            raise OracleError(f"initial radius must be positive, got {R0}")
        self.phi = phi
        self.dimension = phi.dimension
        self.R0 = float(R0)
        self.center = np.zeros(self.dimension) if center is None else np.asarray(center, dtype=float)
        self.unit_volume = _wulff_volume(phi)

    @property
    def extinction_time(self):
        return self.R0 ** 2 / (2.0 * (self.dimension - 1))

    def radius(self, t):
        return math.sqrt(max(self.R0 ** 2 - 2.0 * (self.dimension - 1) * t, 0.0))

    def _gauge(self, points):
        x = _points(points, self.dimension)
        c = self.center.reshape((-1,) + (1,) * (x.ndim - 1))
        return self.phi.dual_eval(x - c)

    def contains(self, points, t):
        if t > self.extinction_time:
            return np.zeros(np.shape(points)[1:], dtype=bool)
        return self._gauge(points) <= self.radius(t)

    def arrival(self, points):
        g = self._gauge(points)
        return np.clip(self.R0 ** 2 - g ** 2, 0.0, None) / (2.0 * (self.dimension - 1))

    def perimeter(self, t):
        # P_phi of the Wulff shape of radius r is d |W_1| r^(d-1)
        return self.dimension * self.unit_volume * self.radius(t) ** (self.dimension - 1)

    def volume(self, t):
        return self.unit_volume * self.radius(t) ** self.dimension

    def bv_energy(self):
        d = self.dimension
        # int_0^T d |W| (R0^2 - 2(d-1)t)^((d-1)/2) dt
        return d * self.unit_volume * self.R0 ** (d + 1) / ((d + 1) * (d - 1))

    def describe(self):
        return {"kind": self.kind, "phi": self.phi.describe(), "R0": self.R0, "center": self.center.tolist()}


class BallOracle(WulffOracle):
    kind = "shrinking_ball"

    def __init__(self, R0, dim=2, center=None):
        super().__init__(Euclidean(dim), R0, center)


class SquareL1Oracle(WulffOracle):
    """Square [-a, a]^2 under phi = psi = l1 with a = sqrt(a0^2 - 2t)."""

    kind = "shrinking_square_l1"

    def __init__(self, a0, center=None):
        super().__init__(WeightedL1(2), a0, center)

    def polygon(self, t):
        return square_polygon(self.radius(t), tuple(self.center))


def shrinking_ball(R0, t, dim=2):
    """Radius sqrt(R0^2 - 2(dim-1)t), clipped at 0."""
    if t < 0:
        raise OracleError(f"time must be nonnegative, got {t}")
    return math.sqrt(max(R0 ** 2 - 2.0 * (dim - 1) * t, 0.0))


# -----------------------
# Disk family
# -----------------------
def _check_disjoint(centers, radii):
    for i in range(len(radii)):
        for j in range(i + 1, len(radii)):
            if np.hypot(*(centers[i] - centers[j])) < radii[i] + radii[j]:
                raise OracleError(f"disks {i} and {j} overlap")


class DiskFamilyOracle(OracleSolution):
    """Disjoint disks evolving independently: u(x) = sum (r_n^2 - |x - x_n|^2)^+ / 2."""

    kind = "disk_family"

    def __init__(self, centers, radii):
        self.centers = np.asarray(centers, dtype=float).reshape(-1, 2)
        self.radii = np.asarray(radii, dtype=float).reshape(-1)
        if len(self.centers) != len(self.radii) or np.any(self.radii < 0):
            raise OracleError("need one nonnegative radius per centre")
        _check_disjoint(self.centers, self.radii)

    @property
    def extinction_time(self):
        return float(np.max(self.radii) ** 2 / 2.0) if len(self.radii) else 0.0

    def _radii(self, t):
        return np.sqrt(np.clip(self.radii ** 2 - 2.0 * t, 0.0, None))

    def contains(self, points, t):
        x = _points(points)
        out = np.zeros(x.shape[1:], dtype=bool)
        for c, r, r0 in zip(self.centers, self._radii(t), self.radii):
            if r0 ** 2 >= 2.0 * t:
                out |= np.sum((x - c.reshape((-1,) + (1,) * (x.ndim - 1))) ** 2, axis=0) <= r ** 2
        return out

    def arrival(self, points):
        x = _points(points)
        u = np.zeros(x.shape[1:])
        for c, r in zip(self.centers, self.radii):
            dist2 = np.sum((x - c.reshape((-1,) + (1,) * (x.ndim - 1))) ** 2, axis=0)
            u += np.clip(r ** 2 - dist2, 0.0, None) / 2.0
        return u

    def perimeter(self, t):
        return float(2.0 * math.pi * self._radii(t).sum())

    def volume(self, t):
        return float(math.pi * (self._radii(t) ** 2).sum())

    def bv_energy(self):
        return float(np.sum(2.0 * math.pi * self.radii ** 3 / 3.0))

    def describe(self):
        return {"kind": self.kind, "centers": self.centers.tolist(), "radii": self.radii.tolist()}


def disk_family_arrival(x, centers, radii):
    return DiskFamilyOracle(centers, radii).arrival(x)


def disk_constant(delta):
    """C = max(18 / (pi - 2), 3 (2 delta + 9) / 2)."""
    return max(18.0 / (math.pi - 2.0), 1.5 * (2.0 * delta + 9.0))


def disk_radius_bound(n, d_n, delta):
    """Upper bound on r_{n+1}: min(1/2 (1/n - 1/(n+1)) delta d_n^2 / (2 pi C), d_n / 6)."""
    if n < 1 or d_n <= 0:
        return 0.0
    C = disk_constant(delta)
    return min(0.5 * (1.0 / n - 1.0 / (n + 1)) * delta * d_n ** 2 / (2.0 * math.pi * C), d_n / 6.0)


def disk_family_generate(n_disks, seed=0, delta=0.25, max_draws=None):
    """Greedy finite union of disjoint disks in B(0, 1) whose partial unions are delta-mean-convex.

    Centres are seeded points with coordinates on the 1/1024 lattice; a draw
    that falls inside the current union (d_n = 0) is skipped but still advances
    n, so exactly n_disks disks come back. Returns (centers, radii, delta).
    """
    if n_disks < 1:
        raise OracleError(f"need at least one disk, got {n_disks}")
    rng = np.random.default_rng(seed)
    max_draws = max_draws or 1000 * n_disks
    centers, radii = [], []
    n = 0
    for _ in range(max_draws):
        p = rng.uniform(-1.0, 1.0, 2)
        p = np.round(p * 1024.0) / 1024.0
        rho = float(np.hypot(*p))
        if rho >= 1.0:
            continue
        if not centers:
            centers.append(p)
            radii.append(0.5 * min(1.0, 1.0 - rho))
            n = 1
            continue
        d_n = max(min(float(np.hypot(*(p - c))) - r for c, r in zip(centers, radii)), 0.0)
        if d_n <= 0.0:
            n += 1
            continue
        r = min(disk_radius_bound(n, d_n, delta), 0.999 * 2.0 ** (-n), 0.999 * (1.0 - rho))
        n += 1
        if r <= 0:
            continue
        centers.append(p)
        radii.append(r)
        if len(radii) == n_disks:
            break
    if len(radii) < n_disks:
        raise OracleError(f"only {len(radii)} disks after {max_draws} draws")
    log.debug("disk family: %d disks over %d draws, delta=%g", n_disks, n, delta)
    return np.array(centers), np.array(radii), float(delta)


ORACLES = ("cross", "ball", "square", "disk-family", "calibration")


def make_oracle(kind, **params):
    """Build an OracleSolution by name (cross, ball, square, wulff, disk-family)."""
    if kind == "cross":
        return CrossOracle(params.get("L", 2.0))
    if kind == "ball":
        return BallOracle(params.get("R0", params.get("radius", 1.0)), params.get("dim", 2), params.get("center"))
    if kind == "square":
        return SquareL1Oracle(params.get("a0", params.get("radius", 1.0)), params.get("center"))
    if kind == "wulff":
        return WulffOracle(params["phi"], params.get("R0", params.get("radius", 1.0)), params.get("center"))
    if kind == "disk-family":
        return DiskFamilyOracle(params["centers"], params["radii"])
    raise OracleError(f"unknown oracle {kind!r}")
