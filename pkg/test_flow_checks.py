# test_flow_checks.py: sampled property checks and trace invariants
import json

import numpy as np
import pytest

from anisotropy import Euclidean, WeightedL1
from flow_checks import (
    CHECKS,
    Report,
    check_certificate_persistence,
    check_density,
    check_holder_volume,
    check_isoperimetric,
    check_lipschitz,
    check_mc_delta,
    check_nesting,
    check_perimeter_monotone,
    check_superharmonic,
    combine_reports,
    mc_spot_check,
    run_trace_checks,
)
from flow_engine import ArrivalTime, FlowStep, FlowTrace, SchemeConfig
from grid_fields import GridDomain, IndicatorField, ScalarField, perimeter_phi, shape, volume


def _trace(sizes, certs=None, h=0.05):
    """Trace of centred squares with the given half-sides (0 means empty) under phi = psi = l1."""
    dom = GridDomain.square(1.5, 48)
    l1 = WeightedL1(2)
    certs = certs or [float("nan")] * len(sizes)
    steps = []
    for n, (a, c) in enumerate(zip(sizes, certs)):
        e = shape("rectangle", dom, lower=(-a, -a), upper=(a, a)) if a > 0 else IndicatorField.empty(dom)
        steps.append(FlowStep(n, n * h, e, volume(e), perimeter_phi(e, l1), c, 0.0))
    extinct = len(sizes) - 1 if sizes[-1] == 0 else None
    return FlowTrace(h, SchemeConfig(h=h, phi=l1, psi=l1), steps, extinct)


SHRINKING = [1.0, 0.9375, 0.875, 0.75, 0.625, 0.5, 0.0]


@pytest.fixture(scope="module")
def plus_domain():
    return GridDomain.square(2.5, 80)


class TestReport:
    def test_to_dict_is_json_safe(self):
        r = Report("x", True, float("inf"), 3, {"a": 1})
        d = r.to_dict()
        assert d["worst_margin"] is None
        assert json.loads(json.dumps(d))["samples"] == 3

    def test_combine(self):
        out = combine_reports([Report("a", True, 1.0, 1), Report("b", False, -1.0, 1)])
        assert out["passed"] is False
        assert [c["name"] for c in out["checks"]] == ["a", "b"]


class TestMcDelta:
    def test_convex_ball(self, disk, euclid):
        report = check_mc_delta(disk, euclid, 0.0, n_samples=48)
        assert report.passed
        assert report.samples == 48
        assert report.name == "mc-delta"

    def test_large_delta_fails(self, disk, euclid):
        report = check_mc_delta(disk, euclid, 50.0, n_samples=16)
        assert not report.passed
        assert report.worst_margin < 0

    def test_plus_sign_is_not_mean_convex_for_euclidean(self, plus_domain):
        e = shape("cross", plus_domain, L=2.0)
        report = check_mc_delta(e, Euclidean(2), 0.0, n_samples=96)
        assert not report.passed

    def test_plus_sign_under_l1(self, plus_domain):
        e = shape("cross", plus_domain, L=2.0)
        assert check_mc_delta(e, WeightedL1(2), 0.0, n_samples=96).passed

    def test_deterministic_and_worker_invariant(self, disk, euclid):
        a = check_mc_delta(disk, euclid, 0.5, n_samples=24, seed=7)
        b = check_mc_delta(disk, euclid, 0.5, n_samples=24, seed=7, workers=3)
        assert a.worst_margin == b.worst_margin
        assert a.details == b.details

    def test_negative_delta(self, disk, euclid):
        with pytest.raises(ValueError):
            check_mc_delta(disk, euclid, -1.0)

    def test_spot_check(self, disk, euclid):
        report = mc_spot_check(disk, euclid, n_samples=8)
        assert report.passed
        assert report.details["delta"] == 0.0


class TestSuperharmonic:
    @pytest.fixture
    def square_u(self, small_domain):
        e = shape("rectangle", small_domain, lower=(-1, -1), upper=(1, 1))
        return ScalarField(small_domain, 0.75 * e.mask.astype(float))

    def test_scaled_indicator_passes(self, square_u, l1):
        report = check_superharmonic(square_u, l1, n_samples=40)
        assert report.passed
        assert report.details["tv"] == pytest.approx(6.0)

    def test_large_delta_fails(self, square_u, l1):
        report = check_superharmonic(square_u, l1, n_samples=10, delta=10.0)
        assert not report.passed
        assert "lift-support" in report.details["failed_kinds"]

    def test_default_tolerance(self, square_u, l1):
        report = check_superharmonic(square_u, l1, n_samples=4)
        assert report.details["tolerance"] == 1e-6
        assert report.worst_margin >= -1e-6

    def test_accepts_arrival_time(self, square_u, l1):
        report = check_superharmonic(ArrivalTime(square_u, 0.1), l1, n_samples=4)
        assert report.samples == 4


class TestLipschitz:
    @pytest.fixture
    def disk_arrival(self, small_domain):
        r2 = np.sum(small_domain.centers() ** 2, axis=0)
        return ScalarField(small_domain, np.clip(1.0 - r2, 0.0, None) / 2.0)

    def test_disk_arrival_passes(self, disk_arrival, euclid):
        report = check_lipschitz(disk_arrival, euclid, 1.0)
        assert report.passed
        assert report.details["h"] == 0.0

    def test_too_large_delta_fails(self, disk_arrival, euclid):
        assert not check_lipschitz(disk_arrival, euclid, 10.0).passed

    def test_h_from_arrival_time(self, disk_arrival, euclid):
        report = check_lipschitz(ArrivalTime(disk_arrival, 0.5), euclid, 10.0)
        assert report.details["h"] == 0.5
        assert report.passed

    def test_delta_must_be_positive(self, disk_arrival, euclid):
        with pytest.raises(ValueError):
            check_lipschitz(disk_arrival, euclid, 0.0)


class TestTraceChecks:
    def test_holder_shrinking(self):
        report = check_holder_volume(_trace(SHRINKING))
        assert report.passed
        assert report.details["exponent"] > 0.6
        assert report.details["constant"] > 0

    def test_holder_sudden_jump(self):
        report = check_holder_volume(_trace([1.0, 1.0, 1.0, 1.0, 0.0]))
        assert not report.passed
        assert report.details["exponent"] == pytest.approx(0.0, abs=1e-12)

    def test_nesting(self):
        assert check_nesting(_trace(SHRINKING)).passed
        report = check_nesting(_trace([0.5, 0.75, 0.0]))
        assert not report.passed
        assert report.details["violating_steps"] == [1]

    def test_perimeter(self):
        assert check_perimeter_monotone(_trace(SHRINKING)).passed
        assert not check_perimeter_monotone(_trace([0.5, 0.75, 0.0])).passed

    def test_perimeter_tolerance_is_relative(self):
        report = check_perimeter_monotone(_trace([1.0, 1.0, 0.0]))
        assert report.passed
        assert report.details["rel_tol"] == 1e-6
        assert report.worst_margin == pytest.approx(8e-6)

    def test_perimeter_sharpened_by_certificate(self):
        certs = [1.0 / a if a else float("nan") for a in SHRINKING]
        assert check_perimeter_monotone(_trace(SHRINKING, certs), with_certificate=True).passed
        strong = [10.0] * (len(SHRINKING) - 1) + [float("nan")]
        assert not check_perimeter_monotone(_trace(SHRINKING, strong), with_certificate=True).passed

    def test_certificates(self):
        certs = [1.0 / a if a else float("nan") for a in SHRINKING]
        trace = _trace(SHRINKING, certs)
        assert trace.min_certificate() == pytest.approx(1.0)
        assert check_certificate_persistence(trace).passed
        assert check_isoperimetric(trace).passed
        dropping = _trace([1.0, 0.75, 0.0], [5.0, 1.0, float("nan")])
        assert not check_certificate_persistence(dropping).passed

    def test_certificate_tolerance_follows_first_value(self):
        sizes = [1.0, 0.9375, 0.875, 0.0]
        small_drop = _trace(sizes, [2.0, 1.9992, 1.9985, float("nan")])
        report = check_certificate_persistence(small_drop)
        assert report.passed
        assert report.details["tolerance"] == pytest.approx(2e-3)
        assert not check_certificate_persistence(_trace(sizes, [2.0, 1.997, 1.997, float("nan")])).passed

    def test_isoperimetric_rejects_oversized_certificate(self):
        # l1 perimeter over volume of the half-side 1 square is 2
        assert not check_isoperimetric(_trace([1.0, 0.0], [10.0, float("nan")])).passed

    def test_density(self):
        report = check_density(_trace(SHRINKING))
        assert report.passed
        assert report.details["gamma"] > 0.5

    def test_run_all(self):
        certs = [1.0 / a if a else float("nan") for a in SHRINKING]
        reports = run_trace_checks(_trace(SHRINKING, certs))
        assert [r.name for r in reports] == [
            "holder", "nesting", "perimeter", "certificate", "isoperimetric", "inclusion", "distance-growth", "density",
        ]
        assert len(reports) == len(CHECKS)
        assert combine_reports(reports)["passed"]

    def test_run_subset(self):
        reports = run_trace_checks(_trace(SHRINKING), ["nesting"])
        assert len(reports) == 1 and reports[0].passed
