# grid_fields.py: uniform box domains, grid fields, discrete calculus, perimeters and shapes
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from anisotropy import Anisotropy, cahn_hoffman_field
from errors import FrameViolation, GridError

log = logging.getLogger(__name__)

FRAME = 2  # outermost cell layers that must stay empty (E compactly contained in the box)


@dataclass(frozen=True)
class GridDomain:
    origin: tuple
    extent: tuple
    cells: tuple

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        extent = tuple(float(v) for v in self.extent)
        cells = tuple(int(v) for v in self.cells)
        if not (len(origin) == len(extent) == len(cells)) or len(cells) not in (2, 3):
            raise GridError(f"domain needs 2 or 3 matching axes, got {origin}, {extent}, {cells}")
        if any(e <= 0 for e in extent):
            raise GridError(f"extent must be positive, got {extent}")
        if any(n < 4 for n in cells):
            raise GridError(f"need at least 4 cells per axis, got {cells}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def square(cls, half_width, n, dimension=2):
        """Centred box [-half_width, half_width]^d with n cells per axis."""
        return cls((-half_width,) * dimension, (2.0 * half_width,) * dimension, (n,) * dimension)

    @property
    def dimension(self):
        return len(self.cells)

    @property
    def shape(self):
        return self.cells

    @property
    def spacing(self):
        return tuple(e / n for e, n in zip(self.extent, self.cells))

    @property
    def min_spacing(self):
        return min(self.spacing)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axis_centers(self, axis):
        return self.origin[axis] + (np.arange(self.cells[axis]) + 0.5) * self.spacing[axis]

    def centers(self):
        """Cell-centre coordinates, shape (d, *cells)."""
        return np.stack(np.meshgrid(*[self.axis_centers(i) for i in range(self.dimension)], indexing="ij"))

    def frame_mask(self):
        m = np.ones(self.cells, dtype=bool)
        m[tuple(slice(FRAME, n - FRAME) for n in self.cells)] = False
        return m

    def index_of(self, point):
        """Index of the cell containing a point (clipped to the box)."""
        idx = [int(np.floor((p - o) / s)) for p, o, s in zip(point, self.origin, self.spacing)]
        return tuple(min(max(i, 0), n - 1) for i, n in zip(idx, self.cells))

    def describe(self):
        return {"origin": list(self.origin), "extent": list(self.extent), "cells": list(self.cells)}


def _check_domain(a, b):
    if a != b:
        raise GridError(f"fields live on different domains: {a} vs {b}")


@dataclass
class ScalarField:
    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.shape:
            raise GridError(f"scalar field shape {self.values.shape} does not match {self.domain.shape}")
        if not np.all(np.isfinite(self.values)):
            raise GridError("scalar field holds non-finite values")

    def at(self, point):
        return float(self.values[self.domain.index_of(point)])

    def integral(self):
        return float(self.values.sum() * self.domain.cell_volume)


@dataclass
class VectorField:
    domain: GridDomain
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.shape != (self.domain.dimension,) + self.domain.shape:
            raise GridError(f"vector field shape {self.vectors.shape} does not match {self.domain.shape}")
        if not np.all(np.isfinite(self.vectors)):
            raise GridError("vector field holds non-finite values")


class IndicatorField:
    """Binary set on a grid. Members may not touch the two-layer frame."""

    def __init__(self, domain, mask, check_frame=True):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != domain.shape:
            raise GridError(f"mask shape {mask.shape} does not match {domain.shape}")
        if check_frame and np.any(mask & domain.frame_mask()):
            raise FrameViolation(
                f"set has {int(np.sum(mask & domain.frame_mask()))} member cells in the "
                f"{FRAME}-layer frame of the domain"
            )
        self.domain = domain
        self.mask = mask

    @classmethod
    def empty(cls, domain):
        return cls(domain, np.zeros(domain.shape, dtype=bool))

    @property
    def count(self):
        return int(self.mask.sum())

    def is_empty(self):
        return not self.mask.any()

    def __or__(self, other):
        _check_domain(self.domain, other.domain)
        return IndicatorField(self.domain, self.mask | other.mask)

    def __and__(self, other):
        _check_domain(self.domain, other.domain)
        return IndicatorField(self.domain, self.mask & other.mask)

    def __sub__(self, other):
        _check_domain(self.domain, other.domain)
        return IndicatorField(self.domain, self.mask & ~other.mask)

    def __eq__(self, other):
        return (
            isinstance(other, IndicatorField)
            and self.domain == other.domain
            and np.array_equal(self.mask, other.mask)
        )

    def __repr__(self):
        return f"IndicatorField({self.count} cells on {self.domain.cells})"

    def issubset(self, other, slack=0):
        """True when at most `slack` member cells lie outside `other`."""
        return int(np.sum(self.mask & ~other.mask)) <= slack

    def shifted(self, offset):
        """Translate by whole cells; the translate must stay clear of the frame."""
        offset = tuple(int(k) for k in offset)
        if self.is_empty():
            return IndicatorField.empty(self.domain)
        idx = np.argwhere(self.mask)
        lo, hi = idx.min(axis=0) + offset, idx.max(axis=0) + offset
        if np.any(lo < FRAME) or np.any(hi >= np.array(self.domain.shape) - FRAME):
            raise FrameViolation(f"shift by {offset} moves the set into the frame")
        return IndicatorField(self.domain, np.roll(self.mask, offset, axis=tuple(range(self.domain.dimension))))

    def boundary_cells(self):
        """Members with at least one non-member among their 3^d - 1 neighbours."""
        full = np.ones((3,) * self.domain.dimension, dtype=bool)
        return self.mask & ~ndimage.binary_erosion(self.mask, structure=full)

    def outer_boundary_cells(self):
        full = np.ones((3,) * self.domain.dimension, dtype=bool)
        return ndimage.binary_dilation(self.mask, structure=full) & ~self.mask

    def eroded(self, k):
        """Cells at least k cells (Chebyshev) inside the set."""
        if k <= 0:
            return self.mask.copy()
        full = np.ones((3,) * self.domain.dimension, dtype=bool)
        return ndimage.binary_erosion(self.mask, structure=full, iterations=k)

    def as_level(self):
        """Level function with the interface on cell faces: -1/2 inside, +1/2 outside."""
        return ScalarField(self.domain, np.where(self.mask, -0.5, 0.5))

    def mid_slice(self):
        """2-D cut through the middle of a 3-D set (identity in 2-D)."""
        if self.domain.dimension == 2:
            return self
        k = self.domain.cells[2] // 2
        dom = GridDomain(self.domain.origin[:2], self.domain.extent[:2], self.domain.cells[:2])
        return IndicatorField(dom, self.mask[:, :, k], check_frame=False)


# -----------------------
# Discrete calculus
# -----------------------
def _grad(values, spacing):
    """Forward differences with a zero last difference on every axis."""
    out = np.empty((values.ndim,) + values.shape)
    for i, h in enumerate(spacing):
        last = np.take(values, [-1], axis=i)
        out[i] = np.diff(values, axis=i, append=last) / h
    return out


def _div(p, spacing):
    """Backward divergence, the exact negative adjoint of _grad."""
    out = np.zeros(p.shape[1:])
    for i, h in enumerate(spacing):
        q = p[i].copy()
        idx = [slice(None)] * q.ndim
        idx[i] = -1
        q[tuple(idx)] = 0.0
        out += np.diff(q, axis=i, prepend=0.0) / h
    return out


def grad_forward(f):
    return VectorField(f.domain, _grad(f.values, f.domain.spacing))


def div_backward(p):
    return ScalarField(p.domain, _div(p.vectors, p.domain.spacing))


def volume(e):
    return e.count * e.domain.cell_volume


def perimeter_phi(e, phi):
    """Discrete anisotropic perimeter: sum over cells of phi(-grad chi_E) times the cell volume."""
    if e.is_empty():
        return 0.0
    g = _grad(e.mask.astype(float), e.domain.spacing)
    return float(np.sum(phi.eval(-g)) * e.domain.cell_volume)


def total_variation(f, phi):
    """Anisotropic total variation sum phi(-grad f) * cellvol, integrated layer by layer.

    Each forward-difference stencil (the cell and its d upper neighbours) is
    split into its superlevel sets, so the discrete coarea formula holds exactly
    for every gauge. For indicators and separable gauges this equals the
    pointwise sum of phi(-grad_forward f).
    """
    values = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)
    domain = f.domain
    d = domain.dimension
    stencil = [values]
    for i in range(d):
        idx = np.minimum(np.arange(values.shape[i]) + 1, values.shape[i] - 1)
        stencil.append(np.take(values, idx, axis=i))
    V = np.stack(stencil)
    order = np.argsort(-V, axis=0, kind="stable")
    S = np.take_along_axis(V, order, axis=0)
    rank = np.argsort(order, axis=0, kind="stable")
    spacing = np.asarray(domain.spacing).reshape((-1,) + (1,) * d)
    total = 0.0
    for k in range(d):
        gap = S[k] - S[k + 1]
        if not np.any(gap):
            continue
        member = (rank <= k).astype(float)
        jump = (member[1:] - member[0]) / spacing
        total += float(np.sum(gap * phi.eval(-jump)))
    return total * domain.cell_volume


def anisotropic_curvature(d, phi):
    """kappa_phi = div n_phi with n_phi a selection of d phi(grad d); smooth-case diagnostic."""
    n = cahn_hoffman_field(phi, _grad(d.values, d.domain.spacing))
    return ScalarField(d.domain, _div(n, d.domain.spacing))


def hausdorff_distance(a, b):
    """Hausdorff distance between two sets of cell centres, in length units."""
    _check_domain(a.domain, b.domain)
    if a.is_empty() and b.is_empty():
        return 0.0
    if a.is_empty() or b.is_empty():
        return float("inf")
    sampling = a.domain.spacing
    to_b = ndimage.distance_transform_edt(~b.mask, sampling=sampling)
    to_a = ndimage.distance_transform_edt(~a.mask, sampling=sampling)
    return float(max(to_b[a.mask].max(), to_a[b.mask].max()))


# -----------------------
# Shapes
# -----------------------
def _as_point(v, d, name):
    v = np.zeros(d) if v is None else np.asarray(v, dtype=float)
    if v.shape != (d,):
        raise GridError(f"{name} must have {d} components, got {v}")
    return v


def _box_level(x, lower, upper):
    lo = np.asarray(lower, dtype=float).reshape((-1,) + (1,) * (x.ndim - 1))
    hi = np.asarray(upper, dtype=float).reshape((-1,) + (1,) * (x.ndim - 1))
    return np.max(np.maximum(lo - x, x - hi), axis=0)


def shape_level(kind, dom, **params):
    """Lipschitz level function of a shape: negative inside, zero on its boundary."""
    x = dom.centers()
    d = dom.dimension
    if kind == "ball":
        c = _as_point(params.get("center"), d, "center")
        r = float(params["radius"])
        return ScalarField(dom, np.sqrt(np.sum((x - c.reshape((-1,) + (1,) * d)) ** 2, axis=0)) - r)
    if kind == "rectangle":
        return ScalarField(dom, _box_level(x, params["lower"], params["upper"]))
    if kind == "cross":
        L = float(params.get("L", 2.0))
        w = float(params.get("width", 1.0))
        c = _as_point(params.get("center"), d, "center")
        level = None
        for axis in range(d):
            half = np.full(d, w)
            half[axis] = L
            box = _box_level(x, c - half, c + half)
            level = box if level is None else np.minimum(level, box)
        return ScalarField(dom, level)
    if kind == "wulff":
        phi = params["phi"]
        if not isinstance(phi, Anisotropy):
            raise GridError("wulff shape needs an Anisotropy instance as 'phi'")
        c = _as_point(params.get("center"), d, "center")
        r = float(params["radius"])
        return ScalarField(dom, phi.dual_eval(x - c.reshape((-1,) + (1,) * d)) - r)
    if kind == "disk-union":
        centers = np.asarray(params["centers"], dtype=float).reshape(-1, d)
        radii = np.asarray(params["radii"], dtype=float).reshape(-1)
        if len(radii) != len(centers):
            raise GridError("disk-union needs one radius per centre")
        level = np.full(dom.shape, np.inf)
        for c, r in zip(centers, radii):
            if r > 0:
                dist = np.sqrt(np.sum((x - c.reshape((-1,) + (1,) * d)) ** 2, axis=0))
                level = np.minimum(level, dist - r)
        # an empty union still needs a finite level
        return ScalarField(dom, np.where(np.isfinite(level), level, 1.0))
    raise GridError(f"unknown shape kind {kind!r}")


def shape(kind, dom, **params):
    """Rasterise a shape: a cell belongs to the set iff its centre lies in the closed shape."""
    if kind == "ball" and float(params["radius"]) <= 0:
        return IndicatorField.empty(dom)
    level = shape_level(kind, dom, **params)
    mask = level.values <= 0.0
    if np.any(mask & dom.frame_mask()):
        raise FrameViolation(f"{kind} shape touches the {FRAME}-cell frame of the domain")
    return IndicatorField(dom, mask)


# -----------------------
# Contours (marching squares on the cell-centre lattice, threshold 1/2)
# -----------------------
# lattice square corners c0=(i,j) c1=(i+1,j) c2=(i+1,j+1) c3=(i,j+1)
# edges e0=c0c1 e1=c1c2 e2=c2c3 e3=c3c0
_EDGE_CORNERS = ((0, 1), (1, 2), (2, 3), (3, 0))
_CORNER_OFFSETS = ((0, 0), (1, 0), (1, 1), (0, 1))
# saddles keep diagonal members apart
_SADDLES = {5: ((0, 3), (1, 2)), 10: ((0, 1), (2, 3))}


def _edge_key(i, j, edge):
    (a, b) = _EDGE_CORNERS[edge]
    (ai, aj), (bi, bj) = _CORNER_OFFSETS[a], _CORNER_OFFSETS[b]
    return (2 * i + ai + bi, 2 * j + aj + bj)


def contour_extract(e):
    """Closed polylines (arrays of shape (m, 2), not repeating the first point) around a 2-D set."""
    e = e.mid_slice()
    if e.is_empty():
        return []
    m = np.pad(e.mask, 1)
    b0, b1, b2, b3 = m[:-1, :-1], m[1:, :-1], m[1:, 1:], m[:-1, 1:]
    case = b0 * 1 + b1 * 2 + b2 * 4 + b3 * 8
    neighbours = {}

    def link(p, q):
        neighbours.setdefault(p, []).append(q)
        neighbours.setdefault(q, []).append(p)

    for i, j in zip(*np.nonzero((case > 0) & (case < 15))):
        c = int(case[i, j])
        if c in _SADDLES:
            for ea, eb in _SADDLES[c]:
                link(_edge_key(i, j, ea), _edge_key(i, j, eb))
            continue
        bits = [(c >> k) & 1 for k in range(4)]
        crossing = [k for k, (a, b) in enumerate(_EDGE_CORNERS) if bits[a] != bits[b]]
        link(_edge_key(i, j, crossing[0]), _edge_key(i, j, crossing[1]))

    spacing = np.asarray(e.domain.spacing)
    origin = np.asarray(e.domain.origin)
    loops, seen = [], set()
    for start in sorted(neighbours):
        if start in seen:
            continue
        loop, prev, cur = [start], None, start
        seen.add(start)
        while True:
            nxt = [p for p in neighbours[cur] if p != prev]
            nxt = nxt[0] if nxt else neighbours[cur][0]
            if nxt == start:
                break
            if nxt in seen:
                break
            loop.append(nxt)
            seen.add(nxt)
            prev, cur = cur, nxt
        keys = np.asarray(loop, dtype=float)
        # key/2 is the padded lattice index; undo the pad and move to cell centres
        loops.append(origin + (keys / 2.0 - 1.0 + 0.5) * spacing)
    return loops


def polyline_length(poly):
    closed = np.vstack([poly, poly[:1]])
    return float(np.sum(np.sqrt(np.sum(np.diff(closed, axis=0) ** 2, axis=1))))


# -----------------------
# Raster export
# -----------------------
_MAGIC = b"ATWF"
_HEADER = struct.Struct("<4sBBH3I3f")  # 32 bytes: magic, ndim, kind, reserved, dims, spacing
_KINDS = {"scalar": 0, "indicator": 1, "vector": 2}


def write_raster(field, path):
    """Little-endian float64 row-major body behind a 32-byte ATWF header."""
    if isinstance(field, IndicatorField):
        values, kind, spacing = field.mask.astype("<f8"), "indicator", field.domain.spacing
    elif isinstance(field, ScalarField):
        values, kind, spacing = field.values.astype("<f8"), "scalar", field.domain.spacing
    elif isinstance(field, VectorField):
        if field.domain.dimension != 2:
            raise GridError("vector rasters are written per component in 3-D")
        values, kind, spacing = field.vectors.astype("<f8"), "vector", field.domain.spacing
    else:
        raise GridError(f"cannot write {type(field).__name__} as a raster")
    if values.ndim > 3:
        raise GridError("rasters hold at most three axes")
    dims = tuple(values.shape) + (1,) * (3 - values.ndim)
    sp = tuple(spacing) + (0.0,) * (3 - len(spacing))
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, values.ndim, _KINDS[kind], 0, *dims, *sp))
        fh.write(np.ascontiguousarray(values).tobytes(order="C"))
    log.debug("wrote %s raster %s %s", kind, dims, path)
    return path


def read_raster(path):
    """Returns (values, spacing, kind) from an ATWF file."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise GridError(f"{path}: too short for an ATWF header")
    magic, ndim, kind_code, _, n0, n1, n2, s0, s1, s2 = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise GridError(f"{path}: bad magic {magic!r}")
    kind = {v: k for k, v in _KINDS.items()}.get(kind_code)
    shape = (n0, n1, n2)[:ndim]
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != int(np.prod(shape)):
        raise GridError(f"{path}: body holds {body.size} values, header says {shape}")
    spacing = tuple(float(s) for s in (s0, s1, s2) if s > 0)
    return body.reshape(shape).copy(), spacing, kind


def write_pgm(field, path):
    """Plain-text P2 image of a 2-D field (middle slice in 3-D), values rescaled to 0..255."""
    values = field.mask.astype(float) if isinstance(field, IndicatorField) else field.values
    if values.ndim == 3:
        values = values[:, :, values.shape[2] // 2]
    lo, hi = float(values.min()), float(values.max())
    scaled = np.zeros_like(values) if hi <= lo else (values - lo) / (hi - lo)
    pix = np.round(scaled * 255).astype(int)
    lines = ["P2", f"# atwflow raster min={lo:.6g} max={hi:.6g}", f"{pix.shape[1]} {pix.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in pix]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)
