# distance_transform.py: anisotropic signed distances d_E = inf_{y in E} psi°(x-y) - inf_{y not in E} psi°(y-x)
#
# Every function takes the mobility gauge psi and measures lengths with its
# dual psi.dual_eval. Inside and outside use opposite argument orders so
# non-symmetric gauges are handled exactly as the definition writes them.
import heapq
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import gcd

import numpy as np

from anisotropy import Anisotropy
from errors import DistanceError
from grid_fields import IndicatorField, ScalarField, _grad

log = logging.getLogger(__name__)

try:
    from numba import njit
    NUMBA_AVAILABLE = True
except ImportError:
    NUMBA_AVAILABLE = False

    # pass-through decorator so the kernel still runs as plain Python
    def njit(*args, **kwargs):
        def decorator(func):
            return func
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return decorator


METHODS = ("subcell", "sweep", "bruteforce")


@dataclass
class SignedDistance:
    field: ScalarField
    gauge: Anisotropy
    source: IndicatorField
    method: str = "sweep"

    @property
    def values(self):
        return self.field.values

    @property
    def domain(self):
        return self.field.domain


def _check_source(e):
    if e.is_empty():
        raise DistanceError("signed distance of an empty set is undefined")
    if e.mask.all():
        raise DistanceError("signed distance of the full box is undefined")


# -----------------------
# Brute force (boundary cells only)
# -----------------------
def _min_gauge(psi, targets, sources, outward, chunk):
    """For each target t: min over sources s of psi°(t - s) (outward) or psi°(s - t)."""
    out = np.empty(targets.shape[1])
    for start in range(0, targets.shape[1], chunk):
        t = targets[:, start:start + chunk, None]
        diff = t - sources[:, None, :] if outward else sources[:, None, :] - t
        out[start:start + chunk] = psi.dual_eval(diff).min(axis=1)
    return out


def signed_distance_bruteforce(e, psi, workers=1, budget=4_000_000):
    """Exact definition evaluated at cell centres, with the inf taken over boundary cells."""
    _check_source(e)
    dom = e.domain
    x = dom.centers().reshape(dom.dimension, -1)
    members = e.mask.ravel()
    inner_src = x[:, e.boundary_cells().ravel()]
    outer_src = x[:, e.outer_boundary_cells().ravel()]
    values = np.zeros(members.size)

    jobs = []
    for idx, src, outward in ((np.flatnonzero(~members), inner_src, True), (np.flatnonzero(members), outer_src, False)):
        chunk = max(1, budget // max(src.shape[1], 1))
        for start in range(0, idx.size, chunk):
            jobs.append((idx[start:start + chunk], src, outward, chunk))

    def run(job):
        idx, src, outward, chunk = job
        return _min_gauge(psi, x[:, idx], src, outward, chunk)

    # results come back in submission order, so the output is worker-count independent
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    for (idx, _, outward, _), vals in zip(jobs, results):
        values[idx] = vals if outward else -vals

    log.debug("bruteforce distance: %d inner and %d outer sources", inner_src.shape[1], outer_src.shape[1])
    return SignedDistance(ScalarField(dom, values.reshape(dom.shape)), psi, e, "bruteforce")


# -----------------------
# Graph propagation
# -----------------------
def stencil_offsets(dimension):
    """16-neighbour stencil in 2-D (primitive offsets with |a|,|b| <= 2), 26-neighbour in 3-D."""
    if dimension == 2:
        offs = [(a, b, 0) for a in range(-2, 3) for b in range(-2, 3) if (a, b) != (0, 0) and gcd(abs(a), abs(b)) == 1]
    else:
        offs = [(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1) if (a, b, c) != (0, 0, 0)]
    return np.asarray(offs, dtype=np.int64)


def _edge_weights(psi, offsets, spacing, outward):
    d = len(spacing)
    steps = offsets[:, :d].T.astype(float) * np.asarray(spacing).reshape(-1, 1)
    return np.asarray(psi.dual_eval(steps if outward else -steps), dtype=float)


@njit
def _propagate(dist, seeds, offsets, weights, n0, n1, n2):
    heap = [(dist[seeds[0]], seeds[0])]
    for s in range(1, seeds.shape[0]):
        heap.append((dist[seeds[s]], seeds[s]))
    heapq.heapify(heap)
    done = np.zeros(dist.shape[0], dtype=np.bool_)
    while len(heap) > 0:
        du, u = heapq.heappop(heap)
        if done[u] or du > dist[u]:
            continue
        done[u] = True
        i = u // (n1 * n2)
        j = (u // n2) % n1
        k = u % n2
        for m in range(offsets.shape[0]):
            a = i + offsets[m, 0]
            b = j + offsets[m, 1]
            c = k + offsets[m, 2]
            if a < 0 or a >= n0 or b < 0 or b >= n1 or c < 0 or c >= n2:
                continue
            v = (a * n1 + b) * n2 + c
            nd = du + weights[m]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def _run(seed_values, psi, spacing, outward):
    """Shortest paths from seeded cells (finite entries) to every other cell."""
    shape = seed_values.shape + (1,) * (3 - seed_values.ndim)
    offsets = stencil_offsets(len(spacing))
    weights = _edge_weights(psi, offsets, spacing, outward)
    dist = seed_values.astype(float).ravel().copy()
    seeds = np.flatnonzero(np.isfinite(dist)).astype(np.int64)
    # heap pops seeds in (value, index) order
    seeds = seeds[np.lexsort((seeds, dist[seeds]))]
    out = _propagate(dist, seeds, offsets, weights, shape[0], shape[1], shape[2])
    return np.asarray(out).reshape(seed_values.shape)


def _combine(e, psi, outer_seed, inner_seed, method):
    dom = e.domain
    if not NUMBA_AVAILABLE:
        log.warning("numba not installed; distance propagation runs in pure Python")
    out = _run(outer_seed, psi, dom.spacing, outward=True)
    inn = _run(inner_seed, psi, dom.spacing, outward=False)
    values = np.where(e.mask, -inn, out)
    return SignedDistance(ScalarField(dom, values), psi, e, method)


def signed_distance_sweep(e, psi):
    """Dijkstra on the cell graph, seeded at cell centres; an upper bound within the stencil factor."""
    _check_source(e)
    outer_seed = np.where(e.mask, 0.0, np.inf)
    inner_seed = np.where(e.mask, np.inf, 0.0)
    return _combine(e, psi, outer_seed, inner_seed, "sweep")


def _interface_fractions(mask, level):
    """Yields (axis, sign, edge, theta) for the neighbour at +sign along each axis.

    `edge` marks cells whose neighbour is on the other side of the interface;
    theta in [0, 1] is the fraction of that edge between the cell and the
    interface.
    """
    for axis in range(mask.ndim):
        for sign in (1, -1):
            nb_mask = np.roll(mask, -sign, axis=axis)
            nb_level = np.roll(level, -sign, axis=axis)
            edge = mask != nb_mask
            # roll wraps around; the frame keeps sets away from the box edges
            idx = [slice(None)] * mask.ndim
            idx[axis] = -1 if sign == 1 else 0
            edge[tuple(idx)] = False
            denom = level - nb_level
            with np.errstate(divide="ignore", invalid="ignore"):
                theta = np.where(
                    (mask & (denom < 0)) | (~mask & (denom > 0)), level / denom, 0.5
                )
            yield axis, sign, edge, np.clip(theta, 0.0, 1.0)


def signed_distance_subcell(e, psi, level=None):
    """Graph propagation seeded on the interface with sub-cell fractions.

    The interface is located by linear interpolation of `level` along axis
    edges between members and non-members. Without a level function it sits on
    cell faces (theta = 1/2). Cells away from the interface agree with
    signed_distance_sweep up to the sub-cell shift of the front.
    """
    _check_source(e)
    dom = e.domain
    if level is None:
        lv = np.where(e.mask, -0.5, 0.5)
    else:
        lv = level.values if isinstance(level, ScalarField) else np.asarray(level, dtype=float)
        if lv.shape != dom.shape:
            raise DistanceError(f"level shape {lv.shape} does not match {dom.shape}")
    outer_seed = np.where(e.mask, 0.0, np.inf)
    inner_seed = np.where(e.mask, np.inf, 0.0)
    for axis, sign, edge, theta in _interface_fractions(e.mask, lv):
        step = np.zeros(dom.dimension)
        step[axis] = sign * dom.spacing[axis]
        # neighbour lies at +step: outside cells look back along -step, inside cells forward
        out_len = float(psi.dual_eval(-step))
        in_len = float(psi.dual_eval(step))
        outer_seed = np.where(edge & ~e.mask, np.minimum(outer_seed, theta * out_len), outer_seed)
        inner_seed = np.where(edge & e.mask, np.minimum(inner_seed, theta * in_len), inner_seed)
    return _combine(e, psi, outer_seed, inner_seed, "subcell")


def signed_distance(e, psi, method="subcell", level=None, workers=1):
    """Dispatch on the distance method name."""
    if method == "subcell":
        return signed_distance_subcell(e, psi, level)
    if method == "sweep":
        return signed_distance_sweep(e, psi)
    if method == "bruteforce":
        return signed_distance_bruteforce(e, psi, workers=workers)
    raise DistanceError(f"unknown distance method {method!r}; expected one of {METHODS}")


def eikonal_residual(d, psi, band=2.0):
    """|psi(grad d) - 1| on cells further than `band` spacings from the zero level, 0 elsewhere."""
    dom = d.domain
    g = _grad(d.values, dom.spacing)
    res = np.abs(psi.eval(g) - 1.0)
    region = np.abs(d.values) > band * max(dom.spacing)
    # forward differences vanish on the top layer of every axis
    region &= ~dom.frame_mask()
    return ScalarField(dom, np.where(region, res, 0.0))
