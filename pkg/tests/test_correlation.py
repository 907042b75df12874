import numpy as np
import pytest

from src.hbt import analytic
from src.hbt.apparatus import slit_mask, with_updates
from src.hbt.correlation import (
    PairEstimator,
    compare_to_oracle,
    estimate_g2,
    estimate_g2_pairs,
    extract_peaks,
    flatness,
    oracle_curve,
    peak_spacing,
    peak_spacing_ratio,
    singles_spectrum,
)
from src.hbt.exceptions import EstimationError
from src.hbt.field_mc import (
    aperture_nodes,
    detect,
    emitter_positions,
    expected_coherence,
    propagate,
    sample_field,
)
from src.hbt.rng import stream
from src.hbt.schemas import CorrelationResult, Peak, ResultMeta, ScanMode, ScanSpec

GRID = np.linspace(-10e-3, 10e-3, 81)


def _analytic_result(config, mode=ScanMode.FIXED_D1, positions=GRID, stderr=0.0):
    spec = ScanSpec(mode=mode, positions=list(positions), ensemble_size=100)
    x1, x2 = spec.detector_pairs()
    g2 = analytic.g2_finite_aperture(config, x1, x2)
    ones = np.ones_like(g2)
    return CorrelationResult(
        positions=list(positions),
        g2=g2.tolist(),
        stderr=(stderr * ones).tolist(),
        singles_d1=ones.tolist(),
        singles_d2=ones.tolist(),
        meta=ResultMeta(spec=spec, config_hash="test", seed=0),
    )


def test_estimate_is_reproducible_and_worker_independent(default_config):
    spec = ScanSpec(mode=ScanMode.COUNTER_SCAN, positions=list(GRID[::4]), ensemble_size=400)
    first = estimate_g2(default_config, spec, seed=11)
    again = estimate_g2(default_config, spec, seed=11)
    threaded = estimate_g2(default_config, spec, seed=11, workers=4)
    other = estimate_g2(default_config, spec, seed=12)

    assert first.g2 == again.g2
    assert first.g2 == threaded.g2
    assert first.stderr == threaded.stderr
    assert first.g2 != other.g2
    assert first.meta.seed == 11
    assert first.mode == ScanMode.COUNTER_SCAN


def test_detector_swap_symmetry(default_config):
    x1 = np.array([-3e-3, 0.0, 1e-3])
    x2 = np.array([2e-3, 4e-3, -5e-3])
    forward = estimate_g2_pairs(default_config, x1, x2, 200, seed=5, batches=4)
    swapped = estimate_g2_pairs(default_config, x2, x1, 200, seed=5, batches=4)

    np.testing.assert_array_equal(forward["g2"], swapped["g2"])
    np.testing.assert_array_equal(forward["singles_d1"], swapped["singles_d2"])


def test_ensemble_smaller_than_batches(default_config):
    with pytest.raises(EstimationError):
        estimate_g2_pairs(default_config, [0.0], [0.0], 10, seed=1, batches=20)


def test_point_detectors_reach_thermal_bound(point_config):
    estimate = estimate_g2_pairs(point_config, [0.0, 2e-3], [0.0, 2e-3], 20000, seed=3)
    assert np.all(np.abs(estimate["g2"] - 2.0) < 4 * estimate["stderr"])
    assert np.all(estimate["stderr"] > 0)
    np.testing.assert_allclose(estimate["singles_d1"], 1.0, atol=0.05)


def test_fixed_scan_follows_finite_aperture_law(default_config):
    spec = ScanSpec(mode=ScanMode.FIXED_D1, positions=list(GRID[::2]), ensemble_size=4000)
    result = estimate_g2(default_config, spec, seed=21)
    report = compare_to_oracle(result, default_config)
    assert report.fraction_within_3sigma >= 0.9
    assert report.chi2_per_dof < 3.0


def test_oracle_self_comparison_is_exact(default_config):
    result = _analytic_result(default_config)
    report = compare_to_oracle(result, default_config)
    assert report.chi2_per_dof == 0.0
    assert report.max_sigma_deviation == 0.0
    assert report.fraction_within_3sigma == 1.0


def test_scaled_point_oracle_at_zero_separation(default_config):
    result = _analytic_result(default_config, positions=[0.0])
    scaled = oracle_curve(result, default_config, oracle="scaled_point")
    assert scaled[0] == pytest.approx(1.0 + analytic.beta_spatial(default_config))


def test_oracle_needs_metadata(default_config):
    result = _analytic_result(default_config).model_copy(update={"meta": None})
    with pytest.raises(EstimationError):
        compare_to_oracle(result, default_config)


def test_extract_peaks_on_fixed_detector_law(point_config):
    """The single-groove envelope pulls the first-order peaks slightly inwards."""
    period = point_config.fringe_period
    fine = np.linspace(-10e-3, 10e-3, 401)
    peaks = extract_peaks(_analytic_result(point_config, positions=fine, stderr=1e-3))

    positions = [p.position for p in peaks]
    assert len(peaks) == 3
    np.testing.assert_allclose(positions, [-period, 0.0, period], atol=1e-4)
    assert positions[1] == pytest.approx(0.0, abs=1e-9)
    assert peak_spacing(peaks) == pytest.approx(period, abs=1e-4)


def test_no_peaks_on_flat_curve(default_config):
    result = _analytic_result(default_config, stderr=0.01).model_copy(
        update={"g2": [1.5] * GRID.size}
    )
    assert extract_peaks(result) == []
    assert flatness(result) == 1.0


def test_peak_spacing_uses_nearest_neighbours():
    peaks = [Peak(position=p, height=1.5) for p in (-12e-3, -6e-3, 0.1e-3, 6.2e-3)]
    assert peak_spacing(peaks) == pytest.approx(6.1e-3)
    assert peak_spacing(peaks[:1]) is None


def test_counter_scan_halves_the_period(default_config):
    """g2 depends on x2 - x1 only, so a counter-scan on half the grid repeats the fixed curve."""
    grid = np.arange(-200, 201) * 0.05e-3
    fixed = _analytic_result(default_config, ScanMode.FIXED_D1, positions=grid)
    counter = _analytic_result(default_config, ScanMode.COUNTER_SCAN, positions=grid / 2)
    np.testing.assert_allclose(fixed.g2, counter.g2, atol=1e-12)
    assert peak_spacing_ratio(fixed, counter) == pytest.approx(2.0, abs=1e-9)
    assert peak_spacing_ratio(counter, fixed) == pytest.approx(2.0, abs=1e-9)

    with pytest.raises(EstimationError):
        peak_spacing_ratio(fixed, fixed)


def test_singles_spectrum(default_config):
    flat = _analytic_result(default_config)
    assert singles_spectrum(flat, default_config)["amplitude"] == pytest.approx(0.0, abs=1e-9)

    fringes = 1.0 + 0.2 * np.cos(2 * np.pi * GRID / default_config.fringe_period)
    noise = np.random.default_rng(0).normal(0.0, 0.01, GRID.size)
    modulated = flat.model_copy(update={"singles_d2": (fringes + noise).tolist()})
    spectrum = singles_spectrum(modulated, default_config)
    assert spectrum["frequency"] == pytest.approx(1.0 / default_config.fringe_period, rel=0.2)
    assert spectrum["ratio"] > 5.0


def _discrete_g2(config, density, x1, x2):
    """Exact ensemble g2 of the discretized source: 1 + node-pair mean of |<E1 E2*>|^2."""
    positions = emitter_positions(slit_mask(config), density, config.groove_width)
    nodes1 = aperture_nodes(config, x1)
    nodes2 = aperture_nodes(config, x2)
    gamma = expected_coherence(positions, config, nodes1[:, None], nodes2[None, :])
    return 1.0 + float(np.mean(np.abs(gamma) ** 2))


def test_singles_carry_no_fringes_at_grating_frequency(default_config):
    spec = ScanSpec(mode=ScanMode.FIXED_D1, positions=list(GRID), ensemble_size=2000)
    result = estimate_g2(default_config, spec, seed=31)
    spectrum = singles_spectrum(result, default_config)
    assert spectrum["ratio"] <= 5.0
    np.testing.assert_allclose(result.singles_d2, 1.0, atol=0.15)


def test_scan_positions_draw_independent_realizations(default_config):
    estimator = PairEstimator(default_config, [1e-3, 1e-3], [2e-3, 2e-3])
    first, _ = estimator.pair_intensities(seed=8, batch=0, pair=0, start=0, size=50)
    second, _ = estimator.pair_intensities(seed=8, batch=0, pair=1, start=0, size=50)
    again, _ = estimator.pair_intensities(seed=8, batch=0, pair=0, start=0, size=50)

    np.testing.assert_array_equal(first, again)
    assert not np.allclose(first, second)


def test_estimator_intensity_equals_detect_on_node_grid(default_config):
    x1, x2 = -1e-3, 2.5e-3
    estimator = PairEstimator(default_config, [x1], [x2])
    i1, i2 = estimator.pair_intensities(seed=4, batch=2, pair=0, start=0, size=6)

    field = sample_field(
        slit_mask(default_config),
        default_config.emitter_density,
        stream(4, "field", 2, 0),
        config=default_config,
        size=6,
    )
    grid = np.union1d(aperture_nodes(default_config, x1), aperture_nodes(default_config, x2))
    amplitudes = propagate(field, default_config, grid) / np.sqrt(field.emitter_positions.size)
    for r in range(6):
        assert i1[r] == pytest.approx(detect(grid, amplitudes[r], default_config, x1).intensity, rel=1e-10)
        assert i2[r] == pytest.approx(detect(grid, amplitudes[r], default_config, x2).intensity, rel=1e-10)


def test_monte_carlo_g2_stays_above_one(default_config):
    spec = ScanSpec(mode=ScanMode.FIXED_D1, positions=list(GRID[::2]), ensemble_size=4000)
    result = estimate_g2(default_config, spec, seed=41)
    assert np.all(np.asarray(result.g2) >= 1.0 - 3 * np.asarray(result.stderr))


def test_fresnel_phase_leaves_g2_unchanged(default_config):
    x1 = np.array([0.0, 0.0, -1.58e-3])
    x2 = np.array([0.0, 6.318e-3, 1.58e-3])
    plain = estimate_g2_pairs(default_config, x1, x2, 4000, seed=13)
    curved = estimate_g2_pairs(with_updates(default_config, fresnel_phase=True), x1, x2, 4000, seed=13)
    combined = np.hypot(plain["stderr"], curved["stderr"])
    assert np.all(np.abs(plain["g2"] - curved["g2"]) < 4 * combined)


def test_doubling_emitter_density_moves_g2_less_than_its_error(default_config):
    x = np.array([0.0, 1.58e-3, 3.159e-3, 6.318e-3, 9e-3])
    estimate = estimate_g2_pairs(default_config, np.zeros_like(x), x, 4000, seed=17)
    coarse = np.array([_discrete_g2(default_config, 32, 0.0, v) for v in x])
    fine = np.array([_discrete_g2(default_config, 64, 0.0, v) for v in x])
    assert np.all(np.abs(fine - coarse) < estimate["stderr"])
    np.testing.assert_allclose(
        coarse, analytic.g2_finite_aperture(default_config, np.zeros_like(x), x), atol=0.01
    )
