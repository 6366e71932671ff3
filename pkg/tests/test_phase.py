import numpy as np
import pytest

from flowlin import catalog
from flowlin.phase import (
    AttractorModel,
    EmptyAttractor,
    GeometricSchedule,
    estimate_phase,
    verify_phase_properties,
)

TWO_PI = 2.0 * np.pi


def test_schedule_validation():
    with pytest.raises(ValueError):
        GeometricSchedule(1.0, 1.0, 8)
    with pytest.raises(ValueError):
        GeometricSchedule(1.0, 2.0, 1)
    assert GeometricSchedule(1.0, 2.0, 4).horizons == [1.0, 2.0, 4.0, 8.0]


def test_attractor_model_needs_cloud():
    sys = catalog.get("log_radial").attractor.restricted_flow
    with pytest.raises(EmptyAttractor):
        AttractorModel(cloud=np.zeros((10, 2)), restricted_flow=sys)


def test_retraction_on_attractor_points():
    entry = catalog.get("log_radial")
    x = np.array([1.0, 2.0])
    est = estimate_phase(entry.system, entry.attractor, x, GeometricSchedule(1, 2, 6))
    for e in est.estimates:
        assert entry.system.chart.distance(e, x) <= 1e-9


def test_log_radial_limit_is_sheared_angle():
    # from (r, theta) = (e, 0) the asymptotic phase angle is theta + ln r = 1
    entry = catalog.get("log_radial")
    est = estimate_phase(entry.system, entry.attractor, [np.e, 0.0],
                         GeometricSchedule(1, 2, 8))
    cls = est.classification
    assert cls.kind == "converged"
    assert entry.system.chart.distance(cls.limit, [1.0, 1.0]) <= 1e-12


def test_log_radial_converges_to_exact_phase():
    entry = catalog.get("log_radial")
    rng = np.random.default_rng(21)
    schedule = GeometricSchedule(1, 2, 8)
    for x in entry.sample_states(rng, 10):
        est = estimate_phase(entry.system, entry.attractor, x, schedule)
        assert est.classification.kind == "converged"
        exact = entry.exact_phase(x)
        for T, e in zip(est.horizons, est.estimates):
            # 3 e^{-T} is below float resolution past T ~ 36; allow the
            # rounding floor of the wrapped-angle arithmetic
            assert entry.system.chart.distance(e, exact) <= 3 * np.exp(-T) + 1e-12


def test_log_radial_fitted_rate_constant():
    entry = catalog.get("log_radial")
    rng = np.random.default_rng(22)
    schedule = GeometricSchedule(1, 2, 6)
    for x in entry.sample_states(rng, 50):
        est = estimate_phase(entry.system, entry.attractor, x, schedule)
        exact = entry.exact_phase(x)
        errs = np.array(
            [entry.system.chart.distance(e, exact) for e in est.estimates]
        )
        keep = errs > 1e-12
        C = np.max(errs[keep] * np.exp(np.array(est.horizons)[keep]))
        assert C <= 5.0


def test_annulus_diverges():
    entry = catalog.get("annulus_cubic")
    rng = np.random.default_rng(23)
    schedule = GeometricSchedule(1, 2, 12)
    outcomes = []
    for x in entry.sample_states(rng, 20):
        est = estimate_phase(entry.system, entry.attractor, x, schedule)
        outcomes.append(est.classification.kind)
    assert outcomes.count("diverged") >= 19


def test_annulus_gap_growth_matches_drift_oracle():
    # with a gentle ratio the chart gaps stay below the fold (pi) long enough
    # to observe the sqrt(2T) drift directly: consecutive-estimate gaps are
    # d_k = sqrt(2 rho T_k + c) - sqrt(2 T_k + c) -> (sqrt(rho)-1) sqrt(2 T_k)
    entry = catalog.get("annulus_cubic")
    ratio = 1.1
    schedule = GeometricSchedule(1.0, ratio, 30)
    est = estimate_phase(entry.system, entry.attractor, [2.0, 0.0], schedule)
    gaps = est.classification.drift["gaps"]
    tail = gaps[-6:]
    assert all(b > a for a, b in zip(tail, tail[1:]))
    for k in range(len(gaps) - 3, len(gaps)):
        T_k = schedule.horizons[k]
        assert gaps[k] >= 0.5 * (np.sqrt(ratio) - 1.0) * np.sqrt(2.0 * T_k)


def test_divergence_schedule_robust():
    # doubling T0 must not flip the verdicts on the calibration systems
    log_entry = catalog.get("log_radial")
    ann_entry = catalog.get("annulus_cubic")
    for t0 in (1.0, 2.0):
        est = estimate_phase(
            log_entry.system, log_entry.attractor, [1.5, 0.7], GeometricSchedule(t0, 2, 8)
        )
        assert est.classification.kind == "converged"
        est = estimate_phase(
            ann_entry.system, ann_entry.attractor, [1.8, 0.7], GeometricSchedule(t0, 2, 12)
        )
        assert est.classification.kind == "diverged"


def test_short_schedule_is_inconclusive():
    entry = catalog.get("log_radial")
    est = estimate_phase(entry.system, entry.attractor, [1.5, 0.0], GeometricSchedule(1, 2, 2))
    assert est.classification.kind == "inconclusive"


def test_cloud_projection_refinement():
    # drop the exact projector; the cloud + quadratic refinement along the
    # flow must localize the nearest circle point well below cloud resolution
    entry = catalog.get("log_radial")
    exact = entry.attractor
    cloud_only = AttractorModel(cloud=exact.cloud, restricted_flow=exact.restricted_flow)
    for theta in (0.3, 2.0, 5.1):
        projected = cloud_only.nearest_point(np.array([1.4, theta]))
        assert entry.system.chart.distance(projected, [1.0, theta]) <= 5e-3


# --- phase-map property checks --------------------------------------------------


def test_log_radial_exact_phase_passes():
    entry = catalog.get("log_radial")
    rng = np.random.default_rng(24)
    samples = entry.sample_states(rng, 100)
    report = verify_phase_properties(
        entry.system, entry.exact_phase, samples, entry.attractor.cloud[:50],
        t_grid=(0.0, 0.5, 1.0, 2.0, 4.0), tol=1e-9,
    )
    assert report.passed, report


def test_product_projection_phase_passes():
    entry = catalog.get("product_attractor")
    rng = np.random.default_rng(25)
    samples = entry.sample_states(rng, 50)
    report = verify_phase_properties(
        entry.system, entry.exact_phase, samples, entry.attractor.cloud[:50],
        t_grid=(0.0, 0.5, 1.0, 2.0), tol=1e-9,
    )
    assert report.passed, report


def test_identity_on_attractor_passes_trivially():
    entry = catalog.get("log_radial")
    att_samples = entry.attractor.cloud[:30]
    report = verify_phase_properties(
        entry.system, lambda x: np.asarray(x, float), att_samples, att_samples,
        t_grid=(0.0, 1.0), tol=1e-9,
    )
    assert report.passed


def test_bad_phase_map_fails():
    entry = catalog.get("log_radial")
    rng = np.random.default_rng(26)
    samples = entry.sample_states(rng, 30)
    # ignoring the ln r correction breaks equivariance
    bad = lambda x: np.array([1.0, x[1]])
    report = verify_phase_properties(
        entry.system, bad, samples, entry.attractor.cloud[:20],
        t_grid=(0.0, 1.0, 2.0), tol=1e-9,
    )
    assert not report.passed
