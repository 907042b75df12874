import hashlib
import logging
import math
from pathlib import Path
from typing import Union

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, ValidationError

from src.hbt.exceptions import ConfigurationError
from src.hbt.schemas import IlluminationProfile, SlitMask, TemporalLineshape

logger = logging.getLogger(__name__)

# FWHM of a Gaussian in units of its standard deviation
FWHM_PER_SIGMA = 2.355


class ApparatusConfig(BaseModel):
    """
    Physical parameters of the source, grating, propagation, detectors and electronics.

    All quantities are SI. Construction only coerces types; call validate() (or use
    load_config / with_updates, which do) before handing a config to the simulator.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    # Source and grating
    wavelength: float = 780e-9
    groove_width: float = 0.08e-3
    groove_spacing: float = 0.2e-3
    num_slits: int = 5
    illum_diameter: float = 1.0e-3
    illumination_profile: IlluminationProfile = IlluminationProfile.TOP_HAT
    incidence_angle: float = 0.0

    # Propagation and detection
    propagation_distance: float = 1.62
    detector_aperture: float = 2.0e-3
    aperture_points: int = 8
    emitter_density: int = 32
    fresnel_phase: bool = False

    # Temporal statistics
    coherence_time: float = 0.2e-9
    temporal_lineshape: TemporalLineshape = TemporalLineshape.LORENTZIAN
    trace_step: float = 0.02e-9
    intensity_cap: float = 12.0

    # Electronics
    timing_resolution: float = 1.0e-9
    coincidence_window_near: float = 0.25e-9
    coincidence_window_far: float = 1.3e-9
    mean_rate_d1: float = 1.0e5
    mean_rate_d2: float = 1.0e5
    acquisition_time: float = 60.0
    stop_delay: float = 5e-9
    histogram_bin_width: float = 0.1e-9
    histogram_min: float = -5e-9
    histogram_max: float = 5e-9
    tac_dead_time: float = 0.0
    event_x1: float = 0.0
    event_x2: float = 0.0

    @property
    def fringe_period(self) -> float:
        """Period lambda*z/d of the fixed-detector fringe in dx."""
        return self.wavelength * self.propagation_distance / self.groove_spacing

    @property
    def envelope_scale(self) -> float:
        """First zero lambda*z/b of the single-groove envelope in dx."""
        return self.wavelength * self.propagation_distance / self.groove_width

    @property
    def jitter_sigma(self) -> float:
        """Per-detector Gaussian timing jitter, reading timing_resolution as a FWHM."""
        return self.timing_resolution / FWHM_PER_SIGMA


_LENGTHS = (
    "wavelength",
    "groove_width",
    "groove_spacing",
    "illum_diameter",
    "propagation_distance",
    "detector_aperture",
)
_TIMES = (
    "coherence_time",
    "timing_resolution",
    "coincidence_window_near",
    "coincidence_window_far",
    "acquisition_time",
    "trace_step",
    "histogram_bin_width",
)
_RATES = ("mean_rate_d1", "mean_rate_d2")


def validate(config: ApparatusConfig) -> ApparatusConfig:
    """
    Check every apparatus invariant.

    Args:
        config: Configuration to check

    Returns:
        The same config object, unchanged

    Raises:
        ConfigurationError: naming the first violated invariant
    """
    for name, value in config.model_dump().items():
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigurationError("finite values", name)

    checks = [
        ("positive lengths", _LENGTHS),
        ("positive times", _TIMES),
        ("positive rates", _RATES),
    ]
    for invariant, names in checks:
        for name in names:
            if not getattr(config, name) > 0:
                raise ConfigurationError(invariant, name)

    if config.num_slits < 1:
        raise ConfigurationError("num_slits >= 1")
    if config.emitter_density < 1:
        raise ConfigurationError("emitter_density >= 1")
    if config.aperture_points < 1:
        raise ConfigurationError("aperture_points >= 1")
    if not config.coincidence_window_near < config.coincidence_window_far:
        raise ConfigurationError("coincidence_window_near < coincidence_window_far")
    if not config.groove_width < config.groove_spacing:
        raise ConfigurationError("groove_width < groove_spacing")
    if not config.histogram_min < config.histogram_max:
        raise ConfigurationError("histogram_min < histogram_max")
    if config.stop_delay < 0 or config.tac_dead_time < 0:
        raise ConfigurationError("non-negative delays")
    if not config.intensity_cap > 1:
        raise ConfigurationError("intensity_cap > 1")
    if config.trace_step > config.coherence_time / 10 * (1 + 1e-9):
        raise ConfigurationError("trace_step <= coherence_time/10")
    if abs(config.incidence_angle) >= math.pi / 2:
        raise ConfigurationError("|incidence_angle| < pi/2")

    return config


def with_updates(config: ApparatusConfig, **fields) -> ApparatusConfig:
    """Return a validated copy of config with some fields replaced."""
    try:
        updated = ApparatusConfig.model_validate({**config.model_dump(), **fields})
    except ValidationError as e:
        raise ConfigurationError("field types", str(e)) from e
    return validate(updated)


def load_config(path: Union[str, Path]) -> ApparatusConfig:
    """
    Load a flat KEY=VALUE apparatus file.

    Keys must be ApparatusConfig field names; missing keys take their defaults.

    Args:
        path: Path to the config file

    Returns:
        Validated ApparatusConfig
    """
    if not Path(path).is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    values = dotenv_values(path)
    unknown = sorted(set(values) - set(ApparatusConfig.model_fields))
    if unknown:
        raise ConfigurationError("unknown key", ", ".join(unknown))
    missing = [key for key, value in values.items() if value is None or value == ""]
    if missing:
        raise ConfigurationError("empty value", ", ".join(missing))

    try:
        config = ApparatusConfig.model_validate(values)
    except ValidationError as e:
        raise ConfigurationError("field types", str(e)) from e

    logger.info(f"Loaded apparatus config from {path}")
    return validate(config)


def dump_config(config: ApparatusConfig) -> str:
    """Render config in the flat KEY=VALUE format read by load_config."""
    lines = []
    for name, value in config.model_dump(mode="json").items():
        if isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{name}={value}")
    return "\n".join(lines) + "\n"


def config_hash(config: ApparatusConfig) -> str:
    """Short, stable digest of a configuration."""
    return hashlib.sha256(config.model_dump_json().encode("utf-8")).hexdigest()[:16]


def slit_mask(config: ApparatusConfig) -> SlitMask:
    """
    Transmitting parts of the grating.

    Slits are centered on the origin (the middle slit sits at x = 0 for odd
    num_slits) and clipped to the illuminated region; slits wholly outside it
    are dropped.

    Args:
        config: Validated apparatus config

    Returns:
        SlitMask with sorted, disjoint intervals
    """
    n = config.num_slits
    half_width = config.groove_width / 2
    if config.illumination_profile == IlluminationProfile.TOP_HAT:
        edge = config.illum_diameter / 2
    else:
        # Gaussian spot: truncate where the intensity is exp(-8) of its peak
        edge = config.illum_diameter

    intervals = []
    for m in range(n):
        center = (m - (n - 1) / 2) * config.groove_spacing
        left = max(center - half_width, -edge)
        right = min(center + half_width, edge)
        if right - left > 1e-12 * config.groove_width:
            intervals.append((left, right))
        else:
            logger.debug(f"Slit at {center:.3e} m lies outside the illuminated region")

    return SlitMask(intervals=intervals)


def source_weight(config: ApparatusConfig, xi) -> np.ndarray:
    """
    Relative source intensity at grating positions xi (1 at the spot center).

    Args:
        config: Validated apparatus config
        xi: Grating-plane positions in metres

    Returns:
        Array of weights, same shape as xi
    """
    xi = np.asarray(xi, dtype=float)
    if config.illumination_profile == IlluminationProfile.TOP_HAT:
        return np.where(np.abs(xi) <= config.illum_diameter / 2 * (1 + 1e-12), 1.0, 0.0)
    # illum_diameter is the 1/e^2 intensity diameter
    return np.exp(-8.0 * xi**2 / config.illum_diameter**2)
