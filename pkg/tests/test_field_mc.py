import numpy as np
import pytest

from src.hbt import analytic
from src.hbt.apparatus import slit_mask, with_updates
from src.hbt.exceptions import GridCoverageError
from src.hbt.field_mc import (
    aperture_intensity,
    aperture_nodes,
    detect,
    emitter_phases,
    emitter_positions,
    expected_coherence,
    propagate,
    sample_field,
)
from src.hbt.rng import complex_normal
from src.hbt.schemas import FieldRealization


def test_emitters_fill_every_slit(default_config):
    mask = slit_mask(default_config)
    positions = emitter_positions(mask, 32, default_config.groove_width)

    assert positions.size == 5 * 32
    for left, right in mask.intervals:
        inside = positions[(positions > left) & (positions < right)]
        assert inside.size == 32
        np.testing.assert_allclose(np.diff(inside), (right - left) / 32)


def test_clipped_slit_gets_proportional_emitters(default_config):
    config = with_updates(default_config, illum_diameter=0.8e-3)
    positions = emitter_positions(slit_mask(config), 32, config.groove_width)
    # Outer slits [0.36, 0.44] mm are cut at 0.40 mm by the 0.8 mm spot
    assert positions.size == 3 * 32 + 2 * 16


def test_sample_field_has_unit_mean_intensity(default_config, rng):
    field = sample_field(slit_mask(default_config), 32, rng, config=default_config, size=2000)
    assert field.amplitudes.shape == (2000, 160)
    assert np.mean(np.abs(field.amplitudes) ** 2) == pytest.approx(1.0, abs=0.01)


def test_propagation_conserves_power_over_one_lattice_period(default_config, rng):
    """
    Emitters lie on a common lattice of pitch b/32, so |E|^2 is periodic in x with
    period lambda*z*32/b and its mean over one period equals the total source power.
    """
    field = sample_field(slit_mask(default_config), 32, rng)
    pitch = default_config.groove_width / 32
    period = default_config.wavelength * default_config.propagation_distance / pitch
    x = np.arange(512) * period / 512

    intensity = np.abs(propagate(field, default_config, x)) ** 2
    assert intensity.mean() == pytest.approx(np.sum(np.abs(field.amplitudes) ** 2), rel=1e-9)


def test_propagate_rejects_non_finite_positions(default_config, rng):
    field = sample_field(slit_mask(default_config), 32, rng)
    with pytest.raises(ValueError):
        propagate(field, default_config, [0.0, np.inf])


def test_aperture_nodes(default_config, point_config):
    nodes = aperture_nodes(default_config, 1e-3)
    assert nodes.size == 8
    assert nodes.mean() == pytest.approx(1e-3)
    assert nodes[0] == pytest.approx(1e-3 - 1e-3 + 0.125e-3)
    np.testing.assert_array_equal(aperture_nodes(point_config, 2e-3), [2e-3])


def test_detect_averages_over_aperture(default_config):
    x = np.linspace(-5e-3, 5e-3, 1001)
    amplitudes = np.sqrt(1.0 + x / 5e-3)
    sample = detect(x, amplitudes, default_config, 1e-3)
    assert sample.position == 1e-3
    assert sample.intensity == pytest.approx(1.2)


def test_detect_outside_grid(default_config):
    x = np.linspace(-2e-3, 2e-3, 101)
    with pytest.raises(GridCoverageError):
        detect(x, np.ones_like(x), default_config, 1.5e-3)


def test_discretized_coherence_matches_continuous_source(default_config):
    positions = emitter_positions(slit_mask(default_config), 32, default_config.groove_width)
    dx = np.array([0.0, 1e-3, 3.159e-3, 6.318e-3])

    discrete = expected_coherence(positions, default_config, 0.0, dx)
    continuous = analytic.mutual_coherence(default_config, 0.0, dx)
    assert discrete[0] == pytest.approx(1.0)
    np.testing.assert_allclose(np.abs(discrete), np.abs(continuous), atol=5e-3)


def _two_emitters(config):
    half = config.groove_spacing / 2
    return FieldRealization(
        emitter_positions=np.array([-half, half]), amplitudes=np.ones(2, dtype=complex)
    )


def test_amplitudes_are_circular(rng):
    n = 100_000
    a = complex_normal(rng, n)
    assert abs(a.mean()) < 4 / np.sqrt(n)
    assert abs(np.mean(a**2)) < 4 * np.sqrt(2 / n)
    assert np.mean(np.abs(a) ** 2) == pytest.approx(1.0, abs=0.02)


def test_single_emitter_gives_flat_intensity(default_config):
    field = FieldRealization(emitter_positions=np.array([0.03e-3]), amplitudes=np.array([2.0 + 0j]))
    x = np.linspace(-10e-3, 10e-3, 51)
    np.testing.assert_allclose(np.abs(propagate(field, default_config, x)) ** 2, 4.0, rtol=1e-12)


def test_two_emitters_give_cosine_fringes(default_config):
    x = np.linspace(-10e-3, 10e-3, 201)
    intensity = np.abs(propagate(_two_emitters(default_config), default_config, x)) ** 2
    expected = 2.0 + 2.0 * np.cos(2 * np.pi * x / default_config.fringe_period)
    np.testing.assert_allclose(intensity, expected, atol=1e-9)
    assert default_config.fringe_period == pytest.approx(6.32e-3, rel=1e-3)


def test_propagation_is_linear_in_the_amplitudes(default_config, rng):
    mask = slit_mask(default_config)
    first = sample_field(mask, 32, rng)
    second = sample_field(mask, 32, rng)
    combined = FieldRealization(
        emitter_positions=first.emitter_positions,
        amplitudes=first.amplitudes + 2.0 * second.amplitudes,
    )
    x = np.linspace(-8e-3, 8e-3, 33)
    np.testing.assert_allclose(
        propagate(combined, default_config, x),
        propagate(first, default_config, x) + 2.0 * propagate(second, default_config, x),
        atol=1e-9,
    )


def test_fresnel_phase_is_absorbed_by_the_amplitudes(default_config, rng):
    """A fixed per-emitter phase only relabels circular amplitudes."""
    curved = with_updates(default_config, fresnel_phase=True)
    field = sample_field(slit_mask(default_config), 32, rng)
    rotated = FieldRealization(
        emitter_positions=field.emitter_positions,
        amplitudes=field.amplitudes * np.conj(emitter_phases(field.emitter_positions, curved)),
    )
    x = np.linspace(-10e-3, 10e-3, 41)
    np.testing.assert_allclose(
        propagate(rotated, curved, x), propagate(field, default_config, x), atol=1e-9
    )


def test_detect_over_one_fringe_period_gives_the_mean(default_config):
    period = default_config.fringe_period
    config = with_updates(default_config, detector_aperture=period, aperture_points=64)
    x = np.linspace(-period, period, 20001)
    amplitudes = propagate(_two_emitters(config), config, x)
    assert detect(x, amplitudes, config, 1.3e-3).intensity == pytest.approx(2.0, abs=1e-3)


def test_detect_reads_nodes_on_the_grid_exactly(default_config, rng):
    field = sample_field(slit_mask(default_config), 32, rng)
    nodes = aperture_nodes(default_config, 2e-3)
    grid = np.union1d(nodes, np.linspace(-5e-3, 5e-3, 11))

    sample = detect(grid, propagate(field, default_config, grid), default_config, 2e-3)
    exact = aperture_intensity(propagate(field, default_config, nodes))
    assert sample.intensity == pytest.approx(float(exact), rel=1e-10)


def test_ensemble_coherence_matches_mutual_coherence(default_config, rng):
    field = sample_field(slit_mask(default_config), 32, rng, config=default_config, size=10_000)
    x1 = np.array([0.0, -2e-3, 1e-3, -3.159e-3, 0.5e-3])
    x2 = np.array([0.0, 2e-3, 4e-3, 3.159e-3, 6.818e-3])
    scale = np.sqrt(field.emitter_positions.size)
    e1 = propagate(field, default_config, x1) / scale
    e2 = propagate(field, default_config, x2) / scale

    products = e1 * np.conj(e2)
    stderr = np.sqrt(products.real.var(axis=0) + products.imag.var(axis=0)) / np.sqrt(
        products.shape[0]
    )
    deviation = np.abs(products.mean(axis=0) - analytic.mutual_coherence(default_config, x1, x2))
    assert np.all(deviation < 3 * stderr)
