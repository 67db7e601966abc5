# atw_solver.py: one minimizing-movements step T_h E by a first-order primal-dual method
#
# The step is solved in its level-set form
#     min_w  h * sum phi(grad w) + 1/2 * sum (w - d)^2,   w = d on the frame
# and T_h E is read off as {w <= 0}. Dual variables z live in {phi°(z) <= 1}.
import logging
from dataclasses import dataclass, field

import numpy as np

from distance_transform import SignedDistance, signed_distance
from errors import GridError
from grid_fields import IndicatorField, ScalarField, VectorField, _div, _grad, perimeter_phi

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    tol_gap: float = 1e-7
    max_iters: int = 20000
    level_tol: float = 1e-9
    check_every: int = 25
    accelerate: bool = True
    step_safety: float = 0.99
    level: str = "largest"

    def __post_init__(self):
        if self.tol_gap <= 0 or self.max_iters < 1 or self.check_every < 1:
            raise ValueError("tol_gap, max_iters and check_every must be positive")
        if not 0 < self.step_safety <= 1:
            raise ValueError(f"step_safety must lie in (0, 1], got {self.step_safety}")
        if self.level not in ("largest", "smallest"):
            raise ValueError(f"level must be 'largest' or 'smallest', got {self.level!r}")

    def step_sizes(self, h, spacing):
        """Initial (tau, sigma) with tau * sigma * ||h grad||^2 <= step_safety^2."""
        norm = h * np.sqrt(sum(4.0 / s ** 2 for s in spacing))
        step = self.step_safety / norm
        return step, step


@dataclass
class SolveInfo:
    residual: float  # relative primal-dual gap
    el_residual: float  # max |w - h div z - d| off the frame
    iterations: int
    certified: bool
    gap_history: list = field(default_factory=list)


@dataclass
class AtwStepResult:
    next_set: IndicatorField
    w: ScalarField
    z: VectorField
    residual: float
    iterations: int
    delta_certificate: float
    energy: float = 0.0
    certified: bool = True
    distance: SignedDistance = None
    el_residual: float = 0.0
    gap_history: list = field(default_factory=list)


def _primal(w, d, h, phi, spacing):
    return h * float(np.sum(phi.eval(_grad(w, spacing)))) + 0.5 * float(np.sum((w - d) ** 2))


def _dual(div_z, d, h, free):
    return -h * float(np.sum(div_z * d)) - 0.5 * h * h * float(np.sum(div_z[free] ** 2))


def solve_w(d, h, phi, cfg=None):
    """Chambolle-Pock iterations for the level-set problem of one step.

    Returns (w, z, info). A run that hits max_iters above tol_gap returns the
    iterate with the smallest gap, flagged with info.certified = False.
    """
    cfg = cfg or SolverConfig()
    if h <= 0:
        raise ValueError(f"time step must be positive, got {h}")
    dom = d.domain
    spacing = dom.spacing
    dv = d.values
    frame = dom.frame_mask()
    free = ~frame

    w = dv.copy()
    w_bar = w.copy()
    z = np.zeros((dom.dimension,) + dom.shape)
    tau, sigma = cfg.step_sizes(h, spacing)

    best = (np.inf, w.copy(), z.copy(), 0.0)
    history = []
    it = 0
    for it in range(1, cfg.max_iters + 1):
        # dual ascent, then projection onto {phi° <= 1}
        z = phi.project_dual_ball(z + sigma * h * _grad(w_bar, spacing))
        # primal descent: prox of 1/2 |w - d|^2 with w = d on the frame
        w_old = w
        div_z = _div(z, spacing)
        w = (w + tau * h * div_z + tau * dv) / (1.0 + tau)
        w[frame] = dv[frame]
        if cfg.accelerate:
            theta = 1.0 / np.sqrt(1.0 + 2.0 * tau)
            tau, sigma = theta * tau, sigma / theta
        else:
            theta = 1.0
        w_bar = w + theta * (w - w_old)

        if it % cfg.check_every == 0 or it == cfg.max_iters:
            div_z = _div(z, spacing)
            p = _primal(w, dv, h, phi, spacing)
            q = _dual(div_z, dv, h, free)
            gap = max(p - q, 0.0) / max(abs(p), abs(q), 1e-300)
            history.append((it, gap))
            log.debug("iter %d: primal %.6e dual %.6e rel gap %.3e", it, p, q, gap)
            if gap < best[0]:
                el = float(np.max(np.abs(w - h * div_z - dv)[free]))
                best = (gap, w.copy(), z.copy(), el)
            if gap <= cfg.tol_gap:
                break

    gap, w, z, el = best
    certified = gap <= cfg.tol_gap
    if not certified:
        log.warning("solver stopped after %d iterations at relative gap %.3e (tol %.1e)", it, gap, cfg.tol_gap)
    info = SolveInfo(residual=float(gap), el_residual=el, iterations=it, certified=certified, gap_history=history)
    return ScalarField(dom, w), VectorField(dom, z), info


def threshold_set(w, cfg=None):
    """Largest minimizer {w <= level_tol} by default; {w < -level_tol} when cfg.level is 'smallest'."""
    cfg = cfg or SolverConfig()
    if cfg.level == "smallest":
        mask = w.values < -cfg.level_tol
    else:
        mask = w.values <= cfg.level_tol
    return IndicatorField(w.domain, mask)


def atw_energy(f, d, h, phi):
    """P_phi(F) + (1/h) * integral over F of d."""
    if f.is_empty():
        return 0.0
    return perimeter_phi(f, phi) + float(np.sum(d.values[f.mask])) * f.domain.cell_volume / h


def certify_set(result, margin=2):
    """min of div z over next_set cells at least `margin` cells inside; NaN when no such cell."""
    inner = result.next_set.eroded(margin)
    if not inner.any():
        return float("nan")
    div_z = _div(result.z.vectors, result.z.domain.spacing)
    return float(div_z[inner].min())


def _empty_result(e, h):
    dom = e.domain
    return AtwStepResult(
        next_set=IndicatorField.empty(dom),
        w=ScalarField(dom, np.full(dom.shape, h)),
        z=VectorField(dom, np.zeros((dom.dimension,) + dom.shape)),
        residual=0.0,
        iterations=0,
        delta_certificate=float("nan"),
    )


def atw_step(e, h, phi, psi, cfg=None, distance="subcell", level=None, margin=2, workers=1):
    """One step E -> T_h E: signed distance, level-set solve, threshold, certificate."""
    cfg = cfg or SolverConfig()
    if e.is_empty():
        return _empty_result(e, h)
    d = signed_distance(e, psi, method=distance, level=level, workers=workers)
    w, z, info = solve_w(d, h, phi, cfg)
    try:
        nxt = threshold_set(w, cfg)
    except GridError:
        log.error("thresholded set reaches the frame; the domain is too small for h=%g", h)
        raise
    result = AtwStepResult(
        next_set=nxt,
        w=w,
        z=z,
        residual=info.residual,
        iterations=info.iterations,
        delta_certificate=float("nan"),
        energy=atw_energy(nxt, d, h, phi),
        certified=info.certified,
        distance=d,
        el_residual=info.el_residual,
        gap_history=info.gap_history,
    )
    result.delta_certificate = certify_set(result, margin)
    return result
