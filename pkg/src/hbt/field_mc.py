"""
Stochastic thermal field on the grating plane and its far-field propagation.

The source is a set of independent point emitters laid on a uniform grid inside
each transmitting interval, each with a circular complex Gaussian amplitude.
"""

import logging
from typing import Optional

import numpy as np

from src.hbt.apparatus import ApparatusConfig, source_weight
from src.hbt.exceptions import GridCoverageError
from src.hbt.rng import complex_normal
from src.hbt.schemas import DetectorSample, FieldRealization, SlitMask

logger = logging.getLogger(__name__)


def emitter_positions(mask: SlitMask, density: int, groove_width: float) -> np.ndarray:
    """
    Midpoints of a uniform grid inside every mask interval.

    A full-width slit gets `density` emitters; clipped slits get a proportional
    number (at least one).
    """
    if density < 1:
        raise ValueError("density must be >= 1")
    positions = []
    for left, right in mask.intervals:
        width = right - left
        count = max(1, int(round(density * width / groove_width)))
        step = width / count
        positions.append(left + (np.arange(count) + 0.5) * step)
    return np.concatenate(positions) if positions else np.empty(0)


def sample_field(
    mask: SlitMask,
    density: int,
    rng: np.random.Generator,
    config: Optional[ApparatusConfig] = None,
    size: Optional[int] = None,
    seed_tag: int = 0,
) -> FieldRealization:
    """
    Draw thermal-field realizations on the grating plane.

    Args:
        mask: Transmitting intervals
        density: Emitters per full slit
        rng: Random stream for this realization (or batch)
        config: Apparatus config; only needed for non-uniform illumination
        size: Number of realizations to draw at once (None for a single one)
        seed_tag: Index of the first realization in its run

    Returns:
        FieldRealization; amplitudes have shape (n,) or (size, n)
    """
    positions = emitter_positions(
        mask, density, config.groove_width if config else _nominal_width(mask)
    )
    shape = positions.shape if size is None else (size, positions.size)
    amplitudes = complex_normal(rng, shape)

    if config is not None:
        weights = source_weight(config, positions)
        # Unit mean-square modulus averaged over emitters
        weights = weights / weights.mean()
        amplitudes = amplitudes * np.sqrt(weights)

    return FieldRealization(
        emitter_positions=positions, amplitudes=amplitudes, seed_tag=seed_tag
    )


def _nominal_width(mask: SlitMask) -> float:
    return float(mask.widths.max()) if mask.intervals else 1.0


def emitter_phases(positions: np.ndarray, config: ApparatusConfig) -> np.ndarray:
    """Deterministic per-emitter phase factors: illumination tilt and optional Fresnel term."""
    phase = 2 * np.pi * np.sin(config.incidence_angle) * positions / config.wavelength
    if config.fresnel_phase:
        phase = phase + np.pi * positions**2 / (
            config.wavelength * config.propagation_distance
        )
    return np.exp(1j * phase)


def propagation_kernel(
    positions: np.ndarray, config: ApparatusConfig, x_points
) -> np.ndarray:
    """
    Fraunhofer propagation matrix of shape (n_emitters, n_points).

    E(x) = sum_j a_j * exp(-i*2*pi*x*xi_j/(lambda*z)), times the emitter phases.
    """
    x = np.asarray(x_points, dtype=float)
    scale = 2 * np.pi / (config.wavelength * config.propagation_distance)
    kernel = np.exp(-1j * scale * np.outer(positions, x))
    return kernel * emitter_phases(positions, config)[:, None]


def propagate(
    field: FieldRealization, config: ApparatusConfig, x_points
) -> np.ndarray:
    """
    Far-field amplitudes at detector-plane positions.

    Args:
        field: Source realization (single or batched amplitudes)
        config: Apparatus config
        x_points: Detection-plane positions in metres

    Returns:
        Complex amplitudes, shape (n_points,) or (size, n_points)
    """
    x = np.asarray(x_points, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x_points must be finite")
    kernel = propagation_kernel(field.emitter_positions, config, x)
    return field.amplitudes @ kernel


def aperture_nodes(config: ApparatusConfig, position: float) -> np.ndarray:
    """Midpoint-rule sub-points of a detector aperture centered at position."""
    m = config.aperture_points
    if m == 1:
        return np.array([float(position)])
    width = config.detector_aperture
    return position - width / 2 + (np.arange(m) + 0.5) * width / m


def aperture_intensity(node_amplitudes) -> np.ndarray:
    """Midpoint-rule aperture average of |E|^2 from the field at the aperture nodes (last axis)."""
    return np.mean(np.abs(np.asarray(node_amplitudes)) ** 2, axis=-1)


def detect(
    x_grid, amplitudes, config: ApparatusConfig, detector_position: float
) -> DetectorSample:
    """
    Aperture-averaged intensity of one realization.

    The intensity |E|^2 is interpolated linearly on the supplied grid at the
    aperture's quadrature nodes and averaged. Nodes lying on the grid are
    read exactly, so on a grid that contains aperture_nodes() the result
    equals aperture_intensity() of the field at those nodes.

    Args:
        x_grid: Increasing detection-plane positions at which amplitudes are known
        amplitudes: Complex field on x_grid
        config: Apparatus config
        detector_position: Detector center

    Returns:
        DetectorSample
    """
    x_grid = np.asarray(x_grid, dtype=float)
    intensity = np.abs(np.asarray(amplitudes)) ** 2
    nodes = aperture_nodes(config, detector_position)

    tolerance = 1e-9 * max(config.detector_aperture, 1e-12)
    if nodes[0] < x_grid[0] - tolerance or nodes[-1] > x_grid[-1] + tolerance:
        raise GridCoverageError(
            f"aperture at {detector_position:.6g} m spans [{nodes[0]:.6g}, {nodes[-1]:.6g}] "
            f"outside grid [{x_grid[0]:.6g}, {x_grid[-1]:.6g}]"
        )

    value = float(np.mean(np.interp(nodes, x_grid, intensity)))
    return DetectorSample(position=detector_position, intensity=max(value, 0.0))


def expected_coherence(
    positions: np.ndarray, config: ApparatusConfig, x1, x2
) -> np.ndarray:
    """
    Exact ensemble coherence <E(x1)E*(x2)> / <|E|^2> of a discretized source.

    Useful for separating discretization error from Monte-Carlo noise.
    """
    weights = source_weight(config, positions)
    weights = weights / weights.sum()
    delta = np.asarray(x2, dtype=float) - np.asarray(x1, dtype=float)
    scale = 2 * np.pi / (config.wavelength * config.propagation_distance)
    return np.exp(1j * scale * np.multiply.outer(delta, positions)) @ weights
