# anisotropy.py: convex one-homogeneous gauges for surface tension (phi) and mobility (psi)
#
# Every method works on a single vector of shape (d,) or on a whole field of
# vectors with the components on axis 0, shape (d, n1, n2[, n3]).
import logging

import numpy as np
from scipy.spatial import ConvexHull

from errors import AnisotropyError, ProjectionError

log = logging.getLogger(__name__)

_TIE = 1e-12


def _bcast(v, ndim):
    """Reshape a per-component vector (d,) so it broadcasts against (d, ...)."""
    return np.asarray(v, dtype=float).reshape((-1,) + (1,) * (ndim - 1))


class Anisotropy:
    """Base gauge. Subclasses fill in the _eval/_dual/_subgradient/_project hooks."""

    kind = "abstract"
    symmetric = True

    def __init__(self, dimension):
        if dimension not in (2, 3):
            raise AnisotropyError(f"dimension must be 2 or 3, got {dimension}")
        self.dimension = int(dimension)

    def _vec(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[0] != self.dimension:
            raise AnisotropyError(
                f"{self.kind}: expected {self.dimension} components on axis 0, got shape {x.shape}"
            )
        return x

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        return self._eval(self._vec(x))

    def dual_eval(self, y):
        return self._dual(self._vec(y))

    def subgradient(self, x):
        x = self._vec(x)
        if np.any(np.all(x == 0, axis=0)):
            raise AnisotropyError(f"{self.kind}: subgradient requested at the zero vector")
        return self._subgradient(x)

    def project_dual_ball(self, y):
        y = self._vec(y)
        out = y.copy()
        outside = self._dual(y) > 1.0
        if not np.any(outside):
            return out
        if y.ndim == 1:
            return self._project(y[:, None])[:, 0]
        out[:, outside] = self._project(y[:, outside])
        return out

    def axis_scale(self):
        """Largest gauge value of a signed unit axis vector (tolerance scale for perimeters)."""
        eye = np.eye(self.dimension)
        return float(max(self.eval(eye).max(), self.eval(-eye).max()))

    def describe(self):
        return {"kind": self.kind}

    def __repr__(self):
        params = {k: v for k, v in self.describe().items() if k != "kind"}
        return f"Anisotropy({self.kind}, d={self.dimension}, {params})"

    # hooks
    def _eval(self, x):
        raise NotImplementedError

    def _dual(self, y):
        raise NotImplementedError

    def _subgradient(self, x):
        raise NotImplementedError

    def _project(self, y):
        raise NotImplementedError


class Euclidean(Anisotropy):
    kind = "euclidean"

    def _eval(self, x):
        return np.sqrt(np.sum(x * x, axis=0))

    _dual = _eval

    def _subgradient(self, x):
        return x / self._eval(x)

    def _project(self, y):
        return y / np.maximum(1.0, self._eval(y))


class WeightedL1(Anisotropy):
    """phi(x) = sum_i w_i |x_i|; the dual ball is the box |y_i| <= w_i."""

    kind = "weighted-l1"

    def __init__(self, dimension, weights=None):
        super().__init__(dimension)
        w = np.ones(dimension) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (dimension,) or np.any(w <= 0):
            raise AnisotropyError(f"weights must be {dimension} positive numbers, got {weights}")
        self.weights = w

    def _eval(self, x):
        return np.sum(_bcast(self.weights, x.ndim) * np.abs(x), axis=0)

    def _dual(self, y):
        return np.max(np.abs(y) / _bcast(self.weights, y.ndim), axis=0)

    def _subgradient(self, x):
        # minimal-norm element: zero components pick 0 inside [-w_i, w_i]
        return _bcast(self.weights, x.ndim) * np.sign(x)

    def _project(self, y):
        w = _bcast(self.weights, y.ndim)
        return np.clip(y, -w, w)

    def describe(self):
        return {"kind": self.kind, "weights": self.weights.tolist()}


class LInfinity(Anisotropy):
    """phi(x) = max_i w_i |x_i|; the dual ball is the weighted l1 ball sum |y_i|/w_i <= 1."""

    kind = "l-infinity"

    def __init__(self, dimension, weights=None):
        super().__init__(dimension)
        w = np.ones(dimension) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (dimension,) or np.any(w <= 0):
            raise AnisotropyError(f"weights must be {dimension} positive numbers, got {weights}")
        self.weights = w

    def _eval(self, x):
        return np.max(_bcast(self.weights, x.ndim) * np.abs(x), axis=0)

    def _dual(self, y):
        return np.sum(np.abs(y) / _bcast(self.weights, y.ndim), axis=0)

    def _subgradient(self, x):
        w = _bcast(self.weights, x.ndim)
        scaled = w * np.abs(x)
        top = scaled.max(axis=0)
        active = scaled >= top * (1.0 - _TIE)
        # minimal-norm point of conv{w_i sign(x_i) e_i : i active}
        lam = np.where(active, 1.0 / w**2, 0.0)
        lam = lam / lam.sum(axis=0)
        return lam * w * np.sign(x)

    def _project(self, y):
        c = _bcast(1.0 / self.weights, y.ndim) * np.ones_like(y)
        a = np.abs(y)
        order = np.argsort(-(a / c), axis=0, kind="stable")
        a_s = np.take_along_axis(a, order, axis=0)
        c_s = np.take_along_axis(c, order, axis=0)
        lam_k = (np.cumsum(c_s * a_s, axis=0) - 1.0) / np.cumsum(c_s**2, axis=0)
        valid = a_s / c_s > lam_k
        idx = np.arange(y.shape[0]).reshape((-1,) + (1,) * (y.ndim - 1))
        k = np.max(np.where(valid, idx, 0), axis=0)
        lam = np.maximum(np.take_along_axis(lam_k, k[None], axis=0)[0], 0.0)
        return np.sign(y) * np.maximum(a - lam * c, 0.0)

    def describe(self):
        return {"kind": self.kind, "weights": self.weights.tolist()}


class PNorm(Anisotropy):
    """phi(x) = ||x||_p with 1 < p < inf; dual is the conjugate q-norm.

    The dual-ball projection is a nested bisection and is far slower than
    the closed-form kinds.
    """

    kind = "p-norm"

    def __init__(self, dimension, p=2.0):
        super().__init__(dimension)
        p = float(p)
        if not (1.0 < p < np.inf):
            raise AnisotropyError(f"p-norm needs 1 < p < inf, got {p}")
        self.p = p
        self.q = p / (p - 1.0)

    def _eval(self, x):
        return np.sum(np.abs(x) ** self.p, axis=0) ** (1.0 / self.p)

    def _dual(self, y):
        return np.sum(np.abs(y) ** self.q, axis=0) ** (1.0 / self.q)

    def _subgradient(self, x):
        n = self._eval(x)
        return np.sign(x) * (np.abs(x) / n) ** (self.p - 1.0)

    def _project(self, y, outer=48, inner=40):
        q = self.q
        a = np.abs(y)
        t_star = (1.0 / y.shape[0]) ** (1.0 / q)
        lo = np.zeros(y.shape[1:])
        hi = a.max(axis=0) / (q * t_star ** (q - 1.0)) + 1.0

        def solve_t(mu):
            # t + mu q t^(q-1) = a on [0, a], monotone in t
            tl = np.zeros_like(a)
            th = a.copy()
            for _ in range(inner):
                tm = 0.5 * (tl + th)
                big = tm + mu * q * tm ** (q - 1.0) > a
                th = np.where(big, tm, th)
                tl = np.where(big, tl, tm)
            return 0.5 * (tl + th)

        for _ in range(outer):
            mu = 0.5 * (lo + hi)
            inside = np.sum(solve_t(mu) ** q, axis=0) <= 1.0
            hi = np.where(inside, mu, hi)
            lo = np.where(inside, lo, mu)
        z = np.sign(y) * solve_t(hi)
        # the bisection lands on the feasible side; renormalise away the residue
        return z / np.maximum(1.0, self._dual(z))

    def describe(self):
        return {"kind": self.kind, "p": self.p}


class Ellipse(Anisotropy):
    """phi(x) = sqrt(x^T A x) for a symmetric positive definite A."""

    kind = "ellipse"

    def __init__(self, dimension, matrix):
        super().__init__(dimension)
        A = np.asarray(matrix, dtype=float)
        if A.shape != (dimension, dimension) or not np.allclose(A, A.T):
            raise AnisotropyError(f"ellipse matrix must be symmetric {dimension}x{dimension}")
        evals = np.linalg.eigvalsh(A)
        if np.any(evals <= 0):
            raise AnisotropyError(f"ellipse matrix must be positive definite, eigenvalues {evals}")
        self.matrix = A
        self.inverse = np.linalg.inv(A)
        # eigen-frame of A^-1, used by the projection
        self._mu, self._Q = np.linalg.eigh(self.inverse)

    @staticmethod
    def _quad(M, x):
        return np.sum(x * np.tensordot(M, x, axes=1), axis=0)

    def _eval(self, x):
        return np.sqrt(np.maximum(self._quad(self.matrix, x), 0.0))

    def _dual(self, y):
        return np.sqrt(np.maximum(self._quad(self.inverse, y), 0.0))

    def _subgradient(self, x):
        return np.tensordot(self.matrix, x, axes=1) / self._eval(x)

    def _project(self, y, iters=60):
        yt = np.tensordot(self._Q.T, y, axes=1)
        mu = _bcast(self._mu, y.ndim)
        lam = np.zeros(y.shape[1:])
        # f(lam) = sum mu_i yt_i^2 / (1 + lam mu_i)^2 - 1 is convex decreasing: Newton from 0 is monotone
        for _ in range(iters):
            den = 1.0 + lam * mu
            f = np.sum(mu * yt**2 / den**2, axis=0) - 1.0
            df = -2.0 * np.sum(mu**2 * yt**2 / den**3, axis=0)
            step = f / df
            lam = lam - step
            if np.max(np.abs(step)) < 1e-15 * (1.0 + np.max(lam)):
                break
        z = np.tensordot(self._Q, yt / (1.0 + lam * mu), axes=1)
        return z / np.maximum(1.0, self._dual(z))

    def describe(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist()}


class Polyhedral(Anisotropy):
    """Crystalline gauge phi(x) = max_k a_k . x.

    The dual unit ball is the Wulff shape conv{a_k}; phi° is evaluated over
    the hull facets (one per vertex of the primal ball), precomputed here.
    """

    kind = "polyhedral"

    def __init__(self, dimension, directions, weights=None, max_iter=20000, tol=1e-10):
        super().__init__(dimension)
        a = np.asarray(directions, dtype=float)
        if a.ndim != 2 or a.shape[1] != dimension or a.shape[0] <= dimension:
            raise AnisotropyError(f"need more than {dimension} support directions of length {dimension}")
        if weights is not None:
            w = np.asarray(weights, dtype=float)
            if w.shape != (a.shape[0],) or np.any(w <= 0):
                raise AnisotropyError("support weights must be positive, one per direction")
            a = a * w[:, None]
        try:
            hull = ConvexHull(a)
        except Exception as exc:
            raise AnisotropyError(f"degenerate support directions: {exc}") from exc
        offsets = hull.equations[:, -1]
        if np.any(offsets >= -1e-12):
            raise AnisotropyError("the hull of the support directions must contain 0 in its interior")
        facets = hull.equations[:, :-1] / (-offsets[:, None])
        # coplanar triangles of a 3d hull repeat the same facet
        self.facets = np.unique(np.round(facets, 12), axis=0)
        # lexicographic order makes argmax pick the lexicographically smallest tie
        self.directions = a[np.lexsort(a.T[::-1])]
        self.max_iter = int(max_iter)
        self.tol = float(tol)
        as_set = {tuple(np.round(v, 12)) for v in self.directions}
        self.symmetric = all(tuple(np.round(-v, 12)) in as_set for v in self.directions)

    def _eval(self, x):
        return np.max(np.tensordot(self.directions, x, axes=1), axis=0)

    def _dual(self, y):
        return np.maximum(np.max(np.tensordot(self.facets, y, axes=1), axis=0), 0.0)

    def _subgradient(self, x):
        scores = np.tensordot(self.directions, x, axes=1)
        top = scores.max(axis=0)
        tied = scores >= top - _TIE * np.abs(top)
        k = np.argmax(tied, axis=0)
        return np.moveaxis(self.directions[k], -1, 0)

    def _project(self, y):
        # Dykstra's alternating projections onto the facet half-spaces g.y <= 1
        g = self.facets
        gn2 = np.sum(g * g, axis=1)
        x = y.copy()
        incr = np.zeros((g.shape[0],) + y.shape)
        for it in range(self.max_iter):
            x_prev = x
            for f in range(g.shape[0]):
                v = x + incr[f]
                s = np.tensordot(g[f], v, axes=1)
                viol = np.maximum(s - 1.0, 0.0) / gn2[f]
                x = v - _bcast(g[f], v.ndim) * viol
                incr[f] = v - x
            if np.max(np.abs(x - x_prev)) < self.tol and np.all(self._dual(x) <= 1.0 + 1e-8):
                return x
        raise ProjectionError(
            f"polyhedral projection did not converge in {self.max_iter} sweeps "
            f"(last change {np.max(np.abs(x - x_prev)):.3e})"
        )

    def describe(self):
        return {"kind": self.kind, "directions": self.directions.tolist()}


class ShiftedBall(Anisotropy):
    """Gauge of the Euclidean ball B(c, rho) with |c| < rho (non-symmetric when c != 0).

    phi°(y) = rho |y| + c . y is the support function of that ball.
    """

    kind = "shifted"
    symmetric = False

    def __init__(self, dimension, center, radius=1.0):
        super().__init__(dimension)
        c = np.asarray(center, dtype=float)
        rho = float(radius)
        if c.shape != (dimension,):
            raise AnisotropyError(f"shift must have {dimension} components")
        if not (np.linalg.norm(c) < rho):
            raise AnisotropyError("the shifted ball must contain 0 in its interior (|c| < radius)")
        self.center = c
        self.radius = rho
        self.symmetric = bool(np.all(c == 0))

    def _eval(self, x):
        c = _bcast(self.center, x.ndim)
        xc = np.sum(x * c, axis=0)
        xx = np.sum(x * x, axis=0)
        k = self.radius**2 - float(self.center @ self.center)
        disc = np.sqrt(xc * xc + k * xx)
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(xc >= 0, xx / (xc + disc), (disc - xc) / k)
        return np.where(xx > 0, t, 0.0)

    def _dual(self, y):
        c = _bcast(self.center, y.ndim)
        return self.radius * np.sqrt(np.sum(y * y, axis=0)) + np.sum(c * y, axis=0)

    def _subgradient(self, x):
        c = _bcast(self.center, x.ndim)
        p = x / self._eval(x)
        n = (p - c) / self.radius
        return n / np.sum(n * p, axis=0)

    def _project(self, y, iters=100):
        c = _bcast(self.center, y.ndim)

        def prox(lam):
            v = y - lam * c
            nv = np.sqrt(np.sum(v * v, axis=0))
            with np.errstate(invalid="ignore", divide="ignore"):
                scale = np.where(nv > 0, np.maximum(0.0, 1.0 - lam * self.radius / nv), 0.0)
            return v * scale

        lo = np.zeros(y.shape[1:])
        hi = np.sqrt(np.sum(y * y, axis=0)) / (self.radius - np.linalg.norm(self.center)) + 1.0
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            inside = self._dual(prox(mid)) <= 1.0
            hi = np.where(inside, mid, hi)
            lo = np.where(inside, lo, mid)
        return prox(hi)

    def describe(self):
        return {"kind": self.kind, "center": self.center.tolist(), "radius": self.radius}


_ALIASES = {"l1": "weighted-l1", "linf": "l-infinity", "l-inf": "l-infinity", "pnorm": "p-norm"}


def make_anisotropy(descriptor, dimension):
    """Build a gauge from a scenario descriptor, e.g. {"kind": "weighted-l1", "weights": [1, 1]}."""
    if isinstance(descriptor, Anisotropy):
        return descriptor
    if isinstance(descriptor, str):
        descriptor = {"kind": descriptor}
    if not isinstance(descriptor, dict) or "kind" not in descriptor:
        raise AnisotropyError(f"anisotropy descriptor needs a 'kind': {descriptor!r}")
    params = dict(descriptor)
    kind = params.pop("kind")
    kind = _ALIASES.get(kind, kind)
    builders = {
        "euclidean": (Euclidean, set()),
        "weighted-l1": (WeightedL1, {"weights"}),
        "l-infinity": (LInfinity, {"weights"}),
        "p-norm": (PNorm, {"p"}),
        "ellipse": (Ellipse, {"matrix"}),
        "polyhedral": (Polyhedral, {"directions", "weights"}),
        "shifted": (ShiftedBall, {"center", "radius"}),
    }
    if kind not in builders:
        raise AnisotropyError(f"unknown anisotropy kind {kind!r}; known: {sorted(builders)}")
    cls, allowed = builders[kind]
    unknown = set(params) - allowed
    if unknown:
        raise AnisotropyError(f"{kind}: unknown parameters {sorted(unknown)}")
    return cls(dimension, **params)


def cahn_hoffman_field(phi, grad):
    """Selection n in d phi(grad) per cell, zero where the gradient vanishes."""
    grad = np.asarray(grad, dtype=float)
    out = np.zeros_like(grad)
    nz = np.any(grad != 0, axis=0)
    if np.any(nz):
        out[:, nz] = phi.subgradient(grad[:, nz])
    return out
