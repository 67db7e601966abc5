# cli.py: scenario files and the atwflow command line (run, step, distance, check, oracle)
import argparse
import json
import logging
import os
import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from anisotropy import make_anisotropy
from atw_solver import SolverConfig, atw_step
from distance_transform import METHODS, eikonal_residual, signed_distance
from errors import AtwFlowError, FrameViolation, GridError, ScenarioError, SolverNotCertified
from flow_checks import (
    CHECKS,
    Report,
    check_lipschitz,
    check_mc_delta,
    check_superharmonic,
    combine_reports,
)
from flow_engine import SchemeConfig, arrival_time, bv_energy, probe_distances, refine_study, run_flow
from grid_fields import (
    GridDomain,
    IndicatorField,
    ScalarField,
    perimeter_phi,
    read_raster,
    shape,
    shape_level,
    volume,
    write_pgm,
    write_raster,
)
from oracles import (
    BallOracle,
    CrossOracle,
    DiskFamilyOracle,
    SquareL1Oracle,
    WulffOracle,
    calibration_check,
    cross_set,
    disk_family_generate,
    square_polygon,
)
import render

log = logging.getLogger(__name__)

TOP_KEYS = {"domain", "shape", "phi", "psi", "h", "t_max", "solver", "probes", "output", "seed"}
DOMAIN_KEYS = {"origin", "extent", "cells"}
SHAPE_KEYS = {
    "ball": {"center", "radius"},
    "rectangle": {"lower", "upper"},
    "cross": {"L", "width", "center"},
    "wulff": {"phi", "radius", "center"},
    "disk-union": {"centers", "radii", "generate", "seed"},
    "raster": {"path"},
}
SCHEME_KEYS = {"distance", "require_certified", "certificate_margin"}
SOLVER_KEYS = {f.name for f in fields(SolverConfig)}
PROPERTIES = (
    "mc-delta", "superharmonic", "lipschitz", "holder", "nesting", "perimeter", "certificate",
    "isoperimetric", "inclusion", "distance-growth", "density", "refine", "all",
)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2


# ----------------- Scenario -----------------
def _line_of(text, key):
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


@dataclass
class Scenario:
    domain: GridDomain
    shape: dict
    phi: object
    psi: object
    h: float
    t_max: float
    solver: SolverConfig = field(default_factory=SolverConfig)
    distance: str = "subcell"
    require_certified: bool = True
    certificate_margin: int = 2
    probes: list = field(default_factory=list)
    output: Path = Path("out")
    seed: int = 0
    source: Path = None

    @property
    def name(self):
        return self.source.stem if self.source else "scenario"

    def domain_for(self, cells=None):
        if cells is None:
            return self.domain
        cells = (cells,) * self.domain.dimension if np.isscalar(cells) else tuple(cells)
        return GridDomain(self.domain.origin, self.domain.extent, cells)

    def _shape_params(self):
        params = {k: v for k, v in self.shape.items() if k != "kind"}
        kind = self.shape["kind"]
        if kind == "wulff":
            params["phi"] = make_anisotropy(params["phi"], self.domain.dimension) if "phi" in params else self.phi
        if kind == "disk-union" and "generate" in params:
            centers, radii, _ = disk_family_generate(int(params["generate"]), seed=int(params.get("seed", self.seed)))
            params = {"centers": centers, "radii": radii}
        params.pop("seed", None)
        return kind, params

    def build(self, cells=None):
        """(domain, initial set, level function or None) at the given resolution."""
        dom = self.domain_for(cells)
        kind, params = self._shape_params()
        if kind == "raster":
            values, _, _ = read_raster(params["path"])
            if values.shape != dom.shape:
                raise GridError(f"raster shape {values.shape} does not match domain {dom.shape}")
            return dom, IndicatorField(dom, values > 0.5), None
        return dom, shape(kind, dom, **params), shape_level(kind, dom, **params)

    def scheme(self, h=None):
        return SchemeConfig(
            h=self.h if h is None else h,
            phi=self.phi,
            psi=self.psi,
            solver=self.solver,
            distance=self.distance,
            require_certified=self.require_certified,
            certificate_margin=self.certificate_margin,
        )

    def oracle(self):
        """Closed-form solution when phi = psi and the shape has one."""
        if self.phi.describe() != self.psi.describe():
            return None
        kind, params = self._shape_params()
        center = params.get("center")
        l1 = self.phi.kind == "weighted-l1" and np.allclose(self.phi.weights, 1.0)
        if kind == "cross" and l1 and self.domain.dimension == 2 and float(params.get("width", 1.0)) == 1.0:
            if center is None or np.allclose(center, 0.0):
                return CrossOracle(float(params.get("L", 2.0)))
        if kind == "ball" and self.phi.kind == "euclidean":
            return BallOracle(float(params["radius"]), self.domain.dimension, center)
        if kind == "wulff" and params["phi"].describe() == self.phi.describe():
            if l1 and self.domain.dimension == 2:
                return SquareL1Oracle(float(params["radius"]), center)
            return WulffOracle(self.phi, float(params["radius"]), center)
        if kind == "disk-union" and self.phi.kind == "euclidean" and self.domain.dimension == 2:
            return DiskFamilyOracle(params["centers"], params["radii"])
        return None


def _require(obj, key, text, where=""):
    if key not in obj:
        raise ScenarioError(f"{where}{key} required", _line_of(text, where.rstrip(".") or key))
    return obj[key]


def _reject_unknown(obj, allowed, text, where=""):
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ScenarioError(f"unknown key {where}{extra[0]}", _line_of(text, extra[0]))


def parse_scenario(path):
    """Validated Scenario from a JSON file; errors carry the line of the offending key."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a JSON object", 1)
    _reject_unknown(raw, TOP_KEYS, text)

    dom_raw = _require(raw, "domain", text)
    _reject_unknown(dom_raw, DOMAIN_KEYS, text, "domain.")
    try:
        dom = GridDomain(
            _require(dom_raw, "origin", text, "domain."),
            _require(dom_raw, "extent", text, "domain."),
            _require(dom_raw, "cells", text, "domain."),
        )
    except GridError as exc:
        raise ScenarioError(str(exc), _line_of(text, "domain")) from exc
    d = dom.dimension

    try:
        phi = make_anisotropy(_require(raw, "phi", text), d)
        psi = make_anisotropy(_require(raw, "psi", text), d)
    except AtwFlowError as exc:
        raise ScenarioError(str(exc), _line_of(text, "phi")) from exc

    if "h" not in raw:
        raise ScenarioError("h required")
    h = float(raw["h"])
    if not h > 0:
        raise ScenarioError(f"h must be positive, got {h}", _line_of(text, "h"))
    if "t_max" not in raw:
        raise ScenarioError("t_max required")
    t_max = float(raw["t_max"])
    if not t_max > 0:
        raise ScenarioError(f"t_max must be positive, got {t_max}", _line_of(text, "t_max"))

    solver_raw = dict(raw.get("solver", {}))
    _reject_unknown(solver_raw, SOLVER_KEYS | SCHEME_KEYS, text, "solver.")
    scheme_opts = {k: solver_raw.pop(k) for k in list(solver_raw) if k in SCHEME_KEYS}
    try:
        solver = SolverConfig(**solver_raw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"solver: {exc}", _line_of(text, "solver")) from exc
    distance = scheme_opts.get("distance", "subcell")
    if distance not in METHODS:
        raise ScenarioError(f"solver.distance must be one of {METHODS}", _line_of(text, "distance"))

    probes = [float(t) for t in raw.get("probes", [])]
    if any(t < 0 or t > t_max for t in probes):
        raise ScenarioError("probe times must lie in [0, t_max]", _line_of(text, "probes"))

    shape_raw = dict(_require(raw, "shape", text))
    kind = shape_raw.get("kind")
    if kind not in SHAPE_KEYS:
        raise ScenarioError(f"unknown shape kind {kind!r}", _line_of(text, "kind"))
    _reject_unknown({k: v for k, v in shape_raw.items() if k != "kind"}, SHAPE_KEYS[kind], text, "shape.")
    if kind == "raster":
        shape_raw["path"] = str((path.parent / shape_raw["path"]).resolve())

    output = Path(raw.get("output", f"out/{path.stem}"))
    scenario = Scenario(
        domain=dom,
        shape=shape_raw,
        phi=phi,
        psi=psi,
        h=h,
        t_max=t_max,
        solver=solver,
        distance=distance,
        require_certified=bool(scheme_opts.get("require_certified", True)),
        certificate_margin=int(scheme_opts.get("certificate_margin", 2)),
        probes=probes,
        output=output,
        seed=int(raw.get("seed", 0)),
        source=path,
    )
    try:
        scenario.build()
    except FrameViolation as exc:
        raise FrameViolation(f"line {_line_of(text, 'shape')}: frame violation: {exc}") from exc
    except (KeyError, TypeError, GridError, AtwFlowError) as exc:
        raise ScenarioError(f"shape: {exc}", _line_of(text, "shape")) from exc
    return scenario


# ----------------- Helpers -----------------
def _workers(args):
    if args.workers is not None:
        return max(1, args.workers)
    raw = os.environ.get("ATWFLOW_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ScenarioError(f"ATWFLOW_WORKERS must be an integer, got {raw!r}") from None


def _outdir(args, scenario=None):
    out = Path(args.output) if args.output else (scenario.output if scenario else Path("out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    log.info("wrote %s", path)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _finite(v):
    return None if v is None or not np.isfinite(v) else float(v)


def _initial(args, scenario):
    """Initial set from --set (raster) or the scenario shape, plus its level function."""
    if getattr(args, "set", None):
        values, _, _ = read_raster(args.set)
        if values.shape != scenario.domain.shape:
            raise GridError(f"raster shape {values.shape} does not match domain {scenario.domain.shape}")
        return scenario.domain, IndicatorField(scenario.domain, values > 0.5), None
    return scenario.build()


def _emit_arrival(out, u, trace):
    write_raster(u.field, out / "arrival.atwf")
    write_pgm(u.field, out / "arrival.pgm")
    render.snapshot(u.field, out / "arrival.png", contour_of=trace.steps[0].set, caption="arrival time")


def _emit_probes(out, trace, oracle, probes):
    for t in probes:
        try:
            e = trace.set_at(t)
        except AtwFlowError:
            continue
        poly = oracle.polygon(t) if oracle is not None and hasattr(oracle, "polygon") else None
        tag = f"{t:g}"
        render.write_set_svg(e, out / f"probe_{tag}.svg", title=f"t={tag}", oracle_polygon=poly)
        render.snapshot(e, out / f"probe_{tag}.png", contour_of=e, oracle_polygon=poly, caption=f"t={tag}")


def _flow(scenario, args, workers):
    dom, e0, level = _initial(args, scenario)
    return run_flow(e0, scenario.scheme(), scenario.t_max, level=level, progress=args.progress, workers=workers)


# ----------------- Commands -----------------
def cmd_run(args):
    scenario = parse_scenario(args.scenario)
    out = _outdir(args, scenario)
    workers = _workers(args)
    try:
        trace = _flow(scenario, args, workers)
    except SolverNotCertified as exc:
        log.error("flow aborted: %s", exc)
        if exc.trace is not None:
            exc.trace.write_csv(out / "trace.csv")
        _write_json(out / "report.json", {"scenario": scenario.name, "aborted": str(exc), "passed": False})
        return EXIT_CHECK_FAILED
    trace.write_csv(out / "trace.csv")

    summary = {
        "scenario": scenario.name,
        "h": scenario.h,
        "cells": list(scenario.domain.cells),
        "steps": len(trace.steps) - 1,
        "extinct": trace.extinct,
        "extinction_time": trace.extinction_time,
        "min_delta_certificate": trace.min_certificate(),
    }
    oracle = scenario.oracle()
    if trace.extinct:
        u = arrival_time(trace)
        summary["bv_energy"] = bv_energy(u, scenario.phi, trace)
        _emit_arrival(out, u, trace)
    if oracle is not None:
        summary["oracle"] = {
            "kind": oracle.kind,
            "extinction_time": oracle.extinction_time,
            "bv_energy": oracle.bv_energy(),
            "probe_hausdorff": probe_distances(trace, oracle, scenario.probes) if trace.extinct else [],
        }
    _emit_probes(out, trace, oracle, scenario.probes)
    reports = [CHECKS[name](trace) for name in ("nesting", "perimeter", "isoperimetric", "certificate", "holder")]
    _write_json(out / "report.json", {**summary, **combine_reports(reports)})
    log.info("run finished: %d steps, extinction time %s", summary["steps"], summary["extinction_time"])
    return EXIT_OK


def cmd_step(args):
    scenario = parse_scenario(args.scenario)
    out = _outdir(args, scenario)
    dom, e, level = _initial(args, scenario)
    h = args.h if args.h is not None else scenario.h
    result = atw_step(
        e, h, scenario.phi, scenario.psi, scenario.solver,
        distance=scenario.distance, level=level, margin=scenario.certificate_margin, workers=_workers(args),
    )
    write_raster(result.next_set, out / "next_set.atwf")
    write_raster(result.w, out / "w.atwf")
    for k in range(dom.dimension):
        write_raster(ScalarField(dom, result.z.vectors[k]), out / f"z{k + 1}.atwf")
    render.write_set_svg(result.next_set, out / "next_set.svg", title=f"T_h E, h={h:g}")
    record = {
        "h": h,
        "energy": result.energy,
        "residual": result.residual,
        "el_residual": result.el_residual,
        "iterations": result.iterations,
        "certified": result.certified,
        "delta_certificate": _finite(result.delta_certificate),
        "volume": volume(result.next_set),
        "P_phi": perimeter_phi(result.next_set, scenario.phi),
        "input_volume": volume(e),
        "input_P_phi": perimeter_phi(e, scenario.phi),
    }
    _write_json(out / "step.json", record)
    return EXIT_OK if result.certified or not scenario.require_certified else EXIT_CHECK_FAILED


def cmd_distance(args):
    scenario = parse_scenario(args.scenario)
    out = _outdir(args, scenario)
    dom, e, level = _initial(args, scenario)
    d = signed_distance(e, scenario.psi, method=args.method, level=level, workers=_workers(args))
    write_raster(d.field, out / "distance.atwf")
    write_pgm(d.field, out / "distance.pgm")
    render.snapshot(d.field, out / "distance.png", contour_of=e, caption=f"distance ({args.method})")
    res = eikonal_residual(d, scenario.psi)
    _write_json(out / "distance.json", {
        "method": args.method,
        "min": float(d.values.min()),
        "max": float(d.values.max()),
        "eikonal_residual_max": float(res.values.max()),
    })
    return EXIT_OK


def _not_run(name, reason):
    log.error("%s: not evaluated, %s", name, reason)
    return Report(name, False, float("nan"), 0, {"not_run": reason})


def _refine(scenario, args, workers):
    levels = max(2, args.levels)
    h_list = [scenario.h * 2 ** (levels - 1 - k) for k in range(levels)]
    cells = np.array(scenario.domain.cells)
    grid_list = [tuple(int(max(8, c // 2 ** (levels - 1 - k))) for c in cells) for k in range(levels)]
    table = refine_study(scenario, h_list, grid_list, workers=workers, progress=args.progress)
    return Report("refine", table.passed, 0.0, len(table.rows), {"rows": table.rows, **table.details})


def cmd_check(args):
    scenario = parse_scenario(args.scenario)
    out = _outdir(args, scenario)
    workers = _workers(args)
    seed = args.seed if args.seed is not None else scenario.seed
    wanted = [p for p in PROPERTIES if p != "all"] if args.property == "all" else [args.property]

    reports = []
    dom, e0, level = _initial(args, scenario)
    if "mc-delta" in wanted:
        reports.append(check_mc_delta(e0, scenario.phi, args.delta, n_samples=args.samples, seed=seed, workers=workers))
    needs_flow = [p for p in wanted if p not in ("mc-delta", "refine")]
    if needs_flow:
        try:
            trace = run_flow(e0, scenario.scheme(), scenario.t_max, level=level, progress=args.progress, workers=workers)
        except SolverNotCertified as exc:
            log.error("flow aborted: %s", exc)
            reports.append(Report("flow", False, float("nan"), 0, {"aborted": str(exc)}))
            trace = None
        if trace is not None:
            u = arrival_time(trace) if trace.extinct else None
            for name in needs_flow:
                if name == "superharmonic":
                    if u is None:
                        reports.append(_not_run(name, "flow did not reach extinction before t_max"))
                    else:
                        reports.append(check_superharmonic(u, scenario.phi, n_samples=args.samples, delta=args.delta, seed=seed, workers=workers))
                elif name == "lipschitz":
                    delta = args.delta if args.delta > 0 else trace.min_certificate()
                    if u is None:
                        reports.append(_not_run(name, "flow did not reach extinction before t_max"))
                    elif not delta > 0:
                        reports.append(_not_run(name, f"no positive delta (certified minimum {delta})"))
                    else:
                        reports.append(check_lipschitz(u, scenario.psi, delta, seed=seed))
                else:
                    reports.append(CHECKS[name](trace))
    if "refine" in wanted:
        reports.append(_refine(scenario, args, workers))

    payload = {"scenario": scenario.name, "seed": seed, **combine_reports(reports)}
    _write_json(out / "report.json", payload)
    for r in reports:
        log.info("%-16s %s (worst margin %s)", r.name, "pass" if r.passed else "FAIL", r.worst_margin)
    return EXIT_OK if payload["passed"] else EXIT_CHECK_FAILED


def _parse_point(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise ScenarioError(f"bad point {text!r}; expected comma-separated numbers") from exc


def _emit_polygon(args, poly, name, out):
    if args.emit == "svg":
        pad = 0.25
        if len(poly):
            lo, hi = poly.min(axis=0) - pad, poly.max(axis=0) + pad
        else:
            lo, hi = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
        text = render.svg_document([poly], (lo[0], lo[1], hi[0], hi[1]), title=name)
    elif args.emit == "csv":
        text = "x,y\n" + "".join(f"{x:.12g},{y:.12g}\n" for x, y in poly)
    else:
        text = json.dumps({"oracle": name, "t": args.t, "vertices": poly.tolist()}, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        path = out / f"{name}.{args.emit}"
        path.write_text(text)
        log.info("wrote %s", path)


def cmd_oracle(args):
    out = _outdir(args) if args.output else None
    payload = {"oracle": args.kind}
    if args.kind == "calibration":
        pts = np.array([[0.5, 0.5], [0.5, 1.5], [1.5, 0.5], [-0.25, -1.75], [0.0, 0.0]]).T
        if args.x:
            pts = _parse_point(args.x).reshape(2, 1)
        report = calibration_check(pts, L=args.L)
        payload.update(report.to_dict())
        text = json.dumps(payload, indent=2, default=_json_default) + "\n"
        if out is None:
            sys.stdout.write(text)
        else:
            (out / "calibration.json").write_text(text)
        return EXIT_OK if report.passed else EXIT_CHECK_FAILED

    if args.kind == "cross":
        oracle = CrossOracle(args.L)
        poly = cross_set(args.t, args.L)
    elif args.kind == "ball":
        oracle = BallOracle(args.R0)
        r = oracle.radius(args.t)
        th = np.linspace(0.0, 2.0 * np.pi, 256, endpoint=False)
        poly = np.stack([r * np.cos(th), r * np.sin(th)], axis=1) if r > 0 else np.zeros((0, 2))
    elif args.kind == "square":
        oracle = SquareL1Oracle(args.R0)
        poly = square_polygon(oracle.radius(args.t)) if oracle.radius(args.t) > 0 else np.zeros((0, 2))
    else:
        centers, radii, delta = disk_family_generate(args.n_disks, seed=args.seed or 0)
        oracle = DiskFamilyOracle(centers, radii)
        payload["delta"] = delta
        poly = np.zeros((0, 2))

    payload.update({
        "t": args.t,
        "extinction_time": oracle.extinction_time,
        "perimeter": oracle.perimeter(args.t),
        "volume": oracle.volume(args.t),
        "bv_energy": oracle.bv_energy(),
        **oracle.describe(),
    })
    if args.x:
        payload["arrival"] = float(np.asarray(oracle.arrival(_parse_point(args.x))))
    if args.emit in ("svg", "csv") and args.kind != "disk-family":
        _emit_polygon(args, poly, args.kind, out)
        return EXIT_OK
    text = json.dumps({**payload, "vertices": poly.tolist()}, indent=2, default=_json_default) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        (out / f"{args.kind}.json").write_text(text)
    return EXIT_OK


# ----------------- Entry point -----------------
def build_parser():
    parser = argparse.ArgumentParser(prog="atwflow", description="Anisotropic mean curvature flow by minimizing movements")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--output", help="output directory (default: the scenario's)")
        p.add_argument("--workers", type=int, default=None, help="worker threads (env ATWFLOW_WORKERS)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--progress", action="store_true", help="progress bar on stderr")

    p = sub.add_parser("run", help="run a flow to extinction or t_max")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("step", help="one ATW step")
    common(p)
    p.add_argument("--set", help="ATWF raster to use instead of the scenario shape")
    p.add_argument("--h", type=float, default=None, help="time step (default: the scenario's)")
    p.set_defaults(func=cmd_step)

    p = sub.add_parser("distance", help="anisotropic signed distance of the initial set")
    common(p)
    p.add_argument("--set", help="ATWF raster to use instead of the scenario shape")
    p.add_argument("--method", choices=METHODS, default="subcell")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("check", help="property checks")
    common(p)
    p.add_argument("--set", help="ATWF raster to use instead of the scenario shape")
    p.add_argument("--property", choices=PROPERTIES, default="all")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--levels", type=int, default=3, help="refinement levels for --property refine")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("oracle", help="evaluate a closed-form solution")
    common(p, scenario=False)
    p.add_argument("kind", choices=("cross", "ball", "square", "disk-family", "calibration"))
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--x", help="point as x,y")
    p.add_argument("--L", type=float, default=2.0, help="cross arm half-length")
    p.add_argument("--R0", type=float, default=1.0, help="initial radius / half-side")
    p.add_argument("--n-disks", type=int, default=10)
    p.add_argument("--emit", choices=("svg", "csv", "json"), default="json")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ScenarioError, GridError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except AtwFlowError as exc:
        log.error("%s", exc)
        return EXIT_CHECK_FAILED
