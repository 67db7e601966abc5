# flow_checks.py: sampled property checks on sets, arrival times and flow traces
#
# Every check returns a Report; none of them raise on failure.
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, Delaunay, QhullError

from distance_transform import signed_distance
from grid_fields import IndicatorField, ScalarField, perimeter_phi, total_variation, volume

log = logging.getLogger(__name__)


@dataclass
class Report:
    name: str
    passed: bool
    worst_margin: float
    samples: int
    details: dict = field(default_factory=dict)

    def to_dict(self):
        out = asdict(self)
        out["worst_margin"] = _json_float(self.worst_margin)
        return out


def _json_float(v):
    v = float(v)
    return v if np.isfinite(v) else None


def combine_reports(reports):
    """report.json payload: overall verdict plus one entry per check."""
    return {"passed": all(r.passed for r in reports), "checks": [r.to_dict() for r in reports]}


def _map(fn, items, workers):
    # results keep submission order whatever the worker count
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _perimeter_tol(dom, phi):
    return 4.0 * max(dom.spacing) ** (dom.dimension - 1) * phi.axis_scale()


# -----------------------
# Outward minimality
# -----------------------
def _ball_mask(dom, center, radius):
    x = dom.centers()
    c = np.asarray(center, dtype=float).reshape((-1,) + (1,) * dom.dimension)
    return np.sum((x - c) ** 2, axis=0) <= radius ** 2


def _concave_cells(e):
    """Non-members with member neighbours along at least two different axes."""
    hits = np.zeros(e.mask.shape, dtype=int)
    for axis in range(e.mask.ndim):
        near = np.roll(e.mask, 1, axis=axis) | np.roll(e.mask, -1, axis=axis)
        hits += near
    return (hits >= 2) & ~e.mask


def _convex_fill(e, rng, free, r_max):
    """Fill the convex hull of the members in a window around a concave (or any boundary) cell."""
    dom = e.domain
    cells = np.argwhere(_concave_cells(e) & free)
    if not len(cells) or rng.uniform() < 0.25:
        cells = np.argwhere(e.boundary_cells())
    center = cells[rng.integers(len(cells))]
    r = int(rng.integers(3, max(4, r_max) + 1))
    lo = np.maximum(center - r, 0)
    hi = np.minimum(center + r + 1, dom.shape)
    window = tuple(slice(a, b) for a, b in zip(lo, hi))
    pts = np.argwhere(e.mask[window])
    if len(pts) <= dom.dimension + 1:
        return None
    try:
        hull = Delaunay(pts[ConvexHull(pts).vertices])
    except QhullError:
        return None
    grid = np.argwhere(np.ones(tuple(hi - lo), dtype=bool))
    inside = hull.find_simplex(grid) >= 0
    fill = np.zeros(dom.shape, dtype=bool)
    fill[tuple((grid[inside] + lo).T)] = True
    return (e.mask | fill) & free


def _competitors(e, n_samples, rng):
    """Supersets and arbitrary sets F compactly inside the box, deterministic for a given rng."""
    dom = e.domain
    free = ~dom.frame_mask()
    full = np.ones((3,) * dom.dimension, dtype=bool)
    out = [("self", e.mask.copy())]
    for k in (1, 2, 3):
        out.append((f"dilate{k}", ndimage.binary_dilation(e.mask, structure=full, iterations=k) & free))
    if e.is_empty():
        return out
    boundary = np.argwhere(e.boundary_cells())
    outer = np.argwhere(e.outer_boundary_cells() & free)
    extent = np.ptp(np.argwhere(e.mask), axis=0).max() + 1
    spacing = np.asarray(dom.spacing)
    origin = np.asarray(dom.origin)
    kinds = ("ball", "bump", "hull", "free-ball", "free-box")
    while len(out) < n_samples:
        kind = kinds[len(out) % len(kinds)]
        if kind == "ball":
            cell = boundary[rng.integers(len(boundary))]
            c = origin + (cell + 0.5 + rng.uniform(-2, 2, dom.dimension)) * spacing
            r = rng.uniform(2, max(3, extent / 4)) * spacing.max()
            out.append((kind, (e.mask | _ball_mask(dom, c, r)) & free))
        elif kind == "bump" and len(outer):
            cell = outer[rng.integers(len(outer))]
            size = rng.integers(1, 4, dom.dimension)
            m = e.mask.copy()
            m[tuple(slice(i, i + s) for i, s in zip(cell, size))] = True
            out.append((kind, m & free))
        elif kind == "hull":
            m = _convex_fill(e, rng, free, int(extent // 4))
            if m is not None:
                out.append((kind, m))
            else:
                out.append(("dilate1", out[1][1]))
        elif kind == "free-ball":
            lo = origin + 2 * spacing
            hi = origin + (np.asarray(dom.shape) - 2) * spacing
            c = rng.uniform(lo, hi)
            r = rng.uniform(2, max(3, extent / 2)) * spacing.max()
            out.append((kind, _ball_mask(dom, c, r) & free))
        else:
            a = rng.integers(2, np.asarray(dom.shape) - 3)
            b = rng.integers(a + 1, np.asarray(dom.shape) - 1)
            m = np.zeros(dom.shape, dtype=bool)
            m[tuple(slice(i, j) for i, j in zip(a, b))] = True
            out.append(("free-box", m & free))
    return out[:max(n_samples, 1)]


def check_mc_delta(e, phi, delta, n_samples=64, seed=0, workers=1):
    """Sampled delta-mean-convexity: P(E n F) <= P(F) - delta |F \\ E| for competitors F."""
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    dom = e.domain
    rng = np.random.default_rng(seed)
    tol = _perimeter_tol(dom, phi)
    comps = _competitors(e, n_samples, rng)

    def margin(item):
        kind, m = item
        f = IndicatorField(dom, m)
        inter = IndicatorField(dom, m & e.mask)
        extra = int(np.sum(m & ~e.mask)) * dom.cell_volume
        return kind, perimeter_phi(f, phi) - delta * extra - perimeter_phi(inter, phi)

    results = _map(margin, comps, workers)
    margins = np.array([m for _, m in results])
    worst = int(np.argmin(margins))
    failures = [k for k, m in results if m < -tol]
    report = Report(
        name="mc-delta",
        passed=not failures,
        worst_margin=float(margins[worst]),
        samples=len(results),
        details={"delta": delta, "tolerance": tol, "worst_kind": results[worst][0], "failed_kinds": sorted(set(failures))},
    )
    log.info("mc-delta delta=%g: worst margin %.4g (%s), passed=%s", delta, report.worst_margin, results[worst][0], report.passed)
    return report


def mc_spot_check(e, phi, n_samples=24, seed=0):
    """Quick mean-convexity check: check_mc_delta at delta = 0."""
    return check_mc_delta(e, phi, 0.0, n_samples=n_samples, seed=seed)


# -----------------------
# Arrival-time checks
# -----------------------
def check_superharmonic(u, phi, n_samples=100, delta=0.0, seed=0, eps=None, workers=1, tol=1e-6):
    """TV(u) <= TV(v) - delta * int (v - u)^+ + tol for sampled compactly supported v >= u."""
    f = u.field if hasattr(u, "field") else u
    dom = f.domain
    rng = np.random.default_rng(seed)
    free = ~dom.frame_mask()
    x = dom.centers()
    umax = float(f.values.max())
    eps = eps if eps is not None else 0.05 * max(umax, 1.0)
    base = total_variation(f, phi)
    support = f.values > 0

    candidates = [("self", f.values.copy())]
    if support.any():
        candidates.append(("lift-support", f.values + eps * support))
    lo = np.asarray(dom.origin) + 3 * np.asarray(dom.spacing)
    hi = np.asarray(dom.origin) + np.asarray(dom.extent) - 3 * np.asarray(dom.spacing)
    while len(candidates) < n_samples:
        c = rng.uniform(lo, hi)
        r = rng.uniform(3, 12) * max(dom.spacing)
        dist2 = np.sum((x - c.reshape((-1,) + (1,) * dom.dimension)) ** 2, axis=0)
        a = rng.uniform(0.01, 0.5) * max(umax, 1.0)
        if len(candidates) % 2:
            bump = a * np.clip(1.0 - dist2 / r ** 2, 0.0, None) * free
            candidates.append(("bump", f.values + bump))
        else:
            ball = (dist2 <= r ** 2) & free
            candidates.append(("max-indicator", np.maximum(f.values, a * ball)))

    def margin(item):
        kind, v = item
        lift = np.clip(v - f.values, 0.0, None)
        gain = float(lift.sum()) * dom.cell_volume
        return kind, total_variation(ScalarField(dom, v), phi) - delta * gain - base, float(lift.max())

    results = _map(margin, candidates, workers)
    fails = [k for k, m, _ in results if m < -tol]
    margins = np.array([m for _, m, _ in results])
    worst = int(np.argmin(margins))
    report = Report(
        name="superharmonic",
        passed=not fails,
        worst_margin=float(margins[worst]),
        samples=len(results),
        details={"delta": delta, "tolerance": tol, "tv": base, "worst_kind": results[worst][0], "failed_kinds": sorted(set(fails))},
    )
    log.info("superharmonic: worst margin %.4g, passed=%s", report.worst_margin, report.passed)
    return report


def check_lipschitz(u, psi, delta, h=None, n_pairs=2000, seed=0):
    """u(x) - u(y) <= h + psi°(y - x) / delta + 2 * spacing / delta on sampled cell pairs."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    f = u.field if hasattr(u, "field") else u
    h = h if h is not None else getattr(u, "h", 0.0)
    dom = f.domain
    vals = f.values
    rng = np.random.default_rng(seed)
    x = dom.centers().reshape(dom.dimension, -1)
    flat = vals.ravel()
    slack = 2.0 * max(dom.spacing) / delta

    margins = []
    # every axis-adjacent pair in both directions
    for axis in range(dom.dimension):
        for sign in (1, -1):
            nb = np.roll(vals, -sign, axis=axis)
            step = np.zeros(dom.dimension)
            step[axis] = sign * dom.spacing[axis]
            bound = h + float(psi.dual_eval(step)) / delta + slack
            idx = [slice(None)] * dom.dimension
            idx[axis] = slice(0, -1) if sign == 1 else slice(1, None)
            diff = (vals - nb)[tuple(idx)]
            margins.append(float(np.min(bound - diff)))
    i = rng.integers(0, flat.size, n_pairs)
    j = rng.integers(0, flat.size, n_pairs)
    bound = h + psi.dual_eval(x[:, j] - x[:, i]) / delta + slack
    margins.append(float(np.min(bound - (flat[i] - flat[j]))))
    worst = float(min(margins))
    report = Report(
        name="lipschitz",
        passed=worst >= 0.0,
        worst_margin=worst,
        samples=n_pairs + 2 * dom.dimension,
        details={"delta": delta, "h": h, "slack": slack},
    )
    log.info("lipschitz delta=%g: worst margin %.4g, passed=%s", delta, worst, report.passed)
    return report


# -----------------------
# Trace checks
# -----------------------
def _xor_volume(a, b):
    return int(np.count_nonzero(a.mask ^ b.mask)) * a.domain.cell_volume


def check_holder_volume(trace, min_exponent=0.45, t_window=None):
    """|E_h(t) xor E_h(s)| <= C sqrt(|t - s|): fitted constant and log-log exponent over dyadic gaps."""
    steps = trace.steps
    if t_window is not None:
        steps = [s for s in steps if t_window[0] - 1e-12 <= s.t <= t_window[1] + 1e-12]
    n = len(steps)
    const = 0.0
    gaps, worst = [], []
    for i in range(n):
        for j in range(i + 1, n):
            const = max(const, _xor_volume(steps[i].set, steps[j].set) / np.sqrt(steps[j].t - steps[i].t))
    g = 1
    while g < n:
        m = max(_xor_volume(steps[i].set, steps[i + g].set) for i in range(n - g))
        if m > 0:
            gaps.append(g * trace.h)
            worst.append(m)
        g *= 2
    if len(gaps) >= 2:
        exponent = float(np.polyfit(np.log(gaps), np.log(worst), 1)[0])
    else:
        exponent = float("nan")
    passed = not np.isfinite(exponent) or exponent >= min_exponent
    report = Report(
        name="holder",
        passed=bool(passed),
        worst_margin=(exponent - min_exponent) if np.isfinite(exponent) else 0.0,
        samples=n * (n - 1) // 2,
        details={"constant": float(const), "exponent": _json_float(exponent), "gaps": gaps, "max_diff": worst},
    )
    log.info("holder: C=%.4g exponent=%s passed=%s", const, exponent, report.passed)
    return report


def check_nesting(trace, slack_cells=0):
    """E_{n+1} is contained in E_n up to `slack_cells` tie cells per step."""
    worst = 0
    bad = []
    for a, b in zip(trace.steps, trace.steps[1:]):
        extra = int(np.sum(b.set.mask & ~a.set.mask))
        worst = max(worst, extra)
        if extra > slack_cells:
            bad.append(b.n)
    return Report("nesting", not bad, float(slack_cells - worst), len(trace.steps) - 1, {"violating_steps": bad, "max_extra_cells": worst})


def check_perimeter_monotone(trace, rel_tol=1e-6, with_certificate=False):
    """P(E_{n+1}) <= P(E_n) (1 + rel_tol), optionally sharpened by - delta * (|E_n| - |E_{n+1}|).

    The sharpened form uses the trace's smallest certified delta.
    """
    delta = trace.min_certificate() if with_certificate else 0.0
    margins = [
        a.perimeter * (1.0 + rel_tol) - delta * (a.volume - b.volume) - b.perimeter
        for a, b in zip(trace.steps, trace.steps[1:])
    ]
    worst = float(min(margins)) if margins else 0.0
    return Report("perimeter", worst >= 0.0, worst, len(margins), {"delta": delta, "rel_tol": rel_tol})


def check_certificate_persistence(trace, rel_tol=1e-3):
    """delta(E_{n+1}) >= delta(E_n) - rel_tol * delta_0 wherever both certificates exist.

    delta_0 is the first finite certificate of the trace.
    """
    certs = [s.delta_certificate for s in trace.steps if np.isfinite(s.delta_certificate)]
    tol = rel_tol * abs(certs[0]) if certs else 0.0
    margins = []
    for a, b in zip(trace.steps, trace.steps[1:]):
        if np.isfinite(a.delta_certificate) and np.isfinite(b.delta_certificate):
            margins.append(b.delta_certificate - a.delta_certificate + tol)
    worst = float(min(margins)) if margins else 0.0
    return Report("certificate", worst >= 0.0, worst, len(margins), {"rel_tol": rel_tol, "tolerance": tol})


def check_isoperimetric(trace, tol=None):
    """delta * |F| <= P(F) for every recorded set; also reports the Cheeger-type bound min P/|F|."""
    delta = trace.min_certificate()
    tol = tol if tol is not None else _perimeter_tol(trace.domain, trace.scheme.phi)
    live = [s for s in trace.steps if s.volume > 0]
    margins = [s.perimeter + tol - delta * s.volume for s in live]
    cheeger = min((s.perimeter / s.volume for s in live), default=float("inf"))
    worst = float(min(margins)) if margins else 0.0
    return Report(
        "isoperimetric",
        worst >= 0.0 and delta <= cheeger + tol,
        worst,
        len(margins),
        {"delta": delta, "cheeger_bound": _json_float(cheeger)},
    )


def _distance_scale(psi, dom):
    eye = np.diag(dom.spacing)
    return float(max(psi.dual_eval(eye).max(), psi.dual_eval(-eye).max()))


def check_quantitative_inclusion(trace, slack=2.0):
    """Members of E_{n+1} satisfy d_{E_n} <= -delta_n h + slack * spacing (delta_n certifies E_n)."""
    scheme = trace.scheme
    unit = slack * _distance_scale(scheme.psi, trace.domain)
    margins = []
    for a, b in zip(trace.steps, trace.steps[1:]):
        cert = a.delta_certificate
        if not np.isfinite(cert) or cert <= 0 or b.set.is_empty():
            continue
        d = signed_distance(a.set, scheme.psi, method=scheme.distance)
        margins.append(float(np.min(-cert * trace.h + unit - d.values[b.set.mask])))
    worst = float(min(margins)) if margins else 0.0
    return Report("inclusion", worst >= 0.0, worst, len(margins), {"slack": unit})


def check_distance_growth(trace, slack=2.0):
    """d_{E_n} >= d_{E_0} + delta n h - slack n spacing off the frame."""
    scheme = trace.scheme
    delta = trace.min_certificate()
    dom = trace.domain
    unit = slack * _distance_scale(scheme.psi, dom)
    live = [s for s in trace.steps if not s.set.is_empty()]
    if len(live) < 2:
        return Report("distance-growth", True, 0.0, 0, {"delta": delta})
    free = ~dom.frame_mask()
    d0 = signed_distance(live[0].set, scheme.psi, method=scheme.distance).values
    margins = []
    for s in live[1:]:
        dn = signed_distance(s.set, scheme.psi, method=scheme.distance).values
        margins.append(float(np.min((dn - d0 - delta * s.n * trace.h + unit * s.n)[free])))
    worst = float(min(margins))
    return Report("distance-growth", worst >= 0.0, worst, len(margins), {"delta": delta, "slack": unit})


def _ball_kernel(dom, r):
    half = [int(np.ceil(r / s)) for s in dom.spacing]
    axes = [np.arange(-k, k + 1) * s for k, s in zip(half, dom.spacing)]
    grid = np.meshgrid(*axes, indexing="ij")
    return (sum(g ** 2 for g in grid) <= r ** 2).astype(float)


def check_density(trace, r0=1.0, gamma_min=0.1, n_radii=4):
    """|B(x, r) n E| >= gamma r^d at boundary cells x for r in [2 spacing, r0 h]; reports the fitted gamma."""
    dom = trace.domain
    r_lo = 2.0 * max(dom.spacing)
    r_hi = max(r_lo, r0 * trace.h)
    radii = np.unique(np.linspace(r_lo, r_hi, n_radii))
    gamma = float("inf")
    for s in trace.steps[1:]:
        if s.set.is_empty():
            continue
        boundary = s.set.boundary_cells()
        mask = s.set.mask.astype(float)
        for r in radii:
            mass = ndimage.correlate(mask, _ball_kernel(dom, r), mode="constant") * dom.cell_volume
            gamma = min(gamma, float(mass[boundary].min()) / r ** dom.dimension)
    if not np.isfinite(gamma):
        return Report("density", True, 0.0, 0, {"radii": radii.tolist()})
    return Report("density", gamma >= gamma_min, gamma - gamma_min, len(trace.steps) - 1, {"gamma": gamma, "radii": radii.tolist()})


CHECKS = {
    "holder": check_holder_volume,
    "nesting": check_nesting,
    "perimeter": check_perimeter_monotone,
    "certificate": check_certificate_persistence,
    "isoperimetric": check_isoperimetric,
    "inclusion": check_quantitative_inclusion,
    "distance-growth": check_distance_growth,
    "density": check_density,
}


def run_trace_checks(trace, names=None):
    """Run the named trace checks (all of them by default) in a fixed order."""
    names = names or list(CHECKS)
    return [CHECKS[n](trace) for n in names]
