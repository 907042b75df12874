from datetime import datetime
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class IlluminationProfile(str, Enum):
    """Intensity profile of the incoherent spot on the grating."""

    TOP_HAT = "top_hat"
    GAUSSIAN = "gaussian"


class TemporalLineshape(str, Enum):
    """Spectral line shape; sets the complex degree of temporal coherence."""

    LORENTZIAN = "lorentzian"
    GAUSSIAN = "gaussian"


class ScanMode(str, Enum):
    """Detector scan geometries."""

    FIXED_D1 = "fixed_d1"
    COUNTER_SCAN = "counter_scan"
    CO_SCAN = "co_scan"


class DetectorId(str, Enum):
    """Start (D1) and stop (D2) detectors."""

    D1 = "D1"
    D2 = "D2"


class Experiment(str, Enum):
    """Named experiments runnable from the CLI and the HTTP service."""

    SINGLES_SCAN = "singles-scan"
    G2_FIXED = "g2-fixed"
    G2_COUNTER = "g2-counter"
    G2_COSCAN = "g2-coscan"
    COINCIDENCE_HISTOGRAM = "coincidence-histogram"
    FULL_PAPER = "full-paper"


class SlitMask(BaseModel):
    """Transmitting intervals (left, right) on the grating plane, in metres."""

    model_config = ConfigDict(frozen=True)

    intervals: List[Tuple[float, float]]

    @property
    def centers(self) -> np.ndarray:
        return np.array([(left + right) / 2 for left, right in self.intervals])

    @property
    def widths(self) -> np.ndarray:
        return np.array([right - left for left, right in self.intervals])

    @property
    def total_width(self) -> float:
        return float(self.widths.sum()) if self.intervals else 0.0


class FieldRealization(BaseModel):
    """One stochastic sample of the source field on the grating plane."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    emitter_positions: np.ndarray
    amplitudes: np.ndarray
    seed_tag: int = 0

    @model_validator(mode="after")
    def _check_lengths(self):
        if self.emitter_positions.shape[-1] != self.amplitudes.shape[-1]:
            raise ValueError("amplitudes length must equal positions length")
        return self


class DetectorSample(BaseModel):
    """Aperture-integrated intensity of one realization at one detector position."""

    position: float
    intensity: float = Field(..., ge=0.0)


class FringeLaw(BaseModel):
    """Parameters of the second-order fringe law g2 = 1 + beta*|mu(dx)|^2."""

    beta: float = Field(..., ge=0.0, le=1.0)
    envelope_scale: float = Field(..., gt=0.0, description="lambda*z/b")
    fringe_period: float = Field(..., gt=0.0, description="lambda*z/d")
    num_slits: int = Field(..., ge=1)

    @model_validator(mode="after")
    def _period_inside_envelope(self):
        if not self.fringe_period < self.envelope_scale:
            raise ValueError("fringe_period must be smaller than envelope_scale")
        return self


class GratingOrder(BaseModel):
    """One diffraction order of the grating equation."""

    m: int
    angle: float = Field(..., description="Diffraction angle in radians")
    plane_position: float = Field(..., description="z*tan(angle) in metres")


class ScanSpec(BaseModel):
    """A g2 scan request."""

    mode: ScanMode
    positions: List[float]
    ensemble_size: int = Field(..., ge=2)
    fixed_position: float = 0.0
    batches: int = Field(20, ge=2)

    @field_validator("positions")
    @classmethod
    def _strictly_increasing(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("positions must be non-empty")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("positions must be strictly increasing")
        return value

    def detector_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        """Return the (x1, x2) detector positions visited by the scan."""
        x = np.asarray(self.positions, dtype=float)
        if self.mode == ScanMode.FIXED_D1:
            return np.full_like(x, self.fixed_position), x
        if self.mode == ScanMode.COUNTER_SCAN:
            return -x, x
        return x.copy(), x.copy()


class ResultMeta(BaseModel):
    """Provenance of a correlation result."""

    spec: ScanSpec
    config_hash: str
    seed: int


class CorrelationResult(BaseModel):
    """Estimated g2 curve with batch-means standard errors and singles profiles."""

    positions: List[float]
    g2: List[float]
    stderr: List[float]
    singles_d1: List[float]
    singles_d2: List[float]
    meta: Optional[ResultMeta] = None

    @model_validator(mode="after")
    def _check_lengths(self):
        n = len(self.positions)
        for name in ("g2", "stderr", "singles_d1", "singles_d2"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length must match positions")
        return self

    @property
    def mode(self) -> Optional[ScanMode]:
        return self.meta.spec.mode if self.meta else None


class Peak(BaseModel):
    """A local maximum of a g2 curve."""

    position: float
    height: float


class OracleReport(BaseModel):
    """Agreement between a Monte-Carlo curve and the closed-form law."""

    chi2_per_dof: float
    max_sigma_deviation: float
    fraction_within_3sigma: float
    peak_spacing_ratio: Optional[float] = None


class PhotonEventStream(BaseModel):
    """Time-tagged detections of one detector."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    detector_id: DetectorId
    timestamps: np.ndarray
    duration: float = Field(..., gt=0.0)

    @model_validator(mode="after")
    def _check_timestamps(self):
        t = self.timestamps
        if t.ndim != 1:
            raise ValueError("timestamps must be one-dimensional")
        if t.size and (t[0] < 0.0 or t[-1] > self.duration):
            raise ValueError("timestamps must lie within [0, duration]")
        if t.size > 1 and np.any(np.diff(t) <= 0.0):
            raise ValueError("timestamps must be strictly increasing")
        return self

    @property
    def count(self) -> int:
        return int(self.timestamps.size)


class CoincidenceHistogram(BaseModel):
    """MCA histogram of start-stop intervals."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    bin_width: float = Field(..., gt=0.0)
    tau_min: float
    tau_max: float
    counts: np.ndarray

    @model_validator(mode="after")
    def _check_bins(self):
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        expected = int(round((self.tau_max - self.tau_min) / self.bin_width))
        if self.counts.shape != (expected,):
            raise ValueError(f"expected {expected} bins, got {self.counts.shape}")
        return self

    @property
    def centers(self) -> np.ndarray:
        k = np.arange(self.counts.size)
        return self.tau_min + (k + 0.5) * self.bin_width

    @property
    def total(self) -> int:
        return int(self.counts.sum())


class GaussianPeakFit(BaseModel):
    """Gaussian-plus-baseline fit of a coincidence peak."""

    baseline: float
    amplitude: float
    center: float
    sigma: float


class RunManifest(BaseModel):
    """Record of one CLI or service run."""

    experiment: Experiment
    config_hash: str
    seed: int
    started_at: datetime
    finished_at: Optional[datetime] = None
    outputs: Dict[str, str] = Field(default_factory=dict)
    metrics: Dict[str, Union[bool, int, float, str, None]] = Field(default_factory=dict)

    class Config:
        json_schema_extra = {
            "example": {
                "experiment": "g2-fixed",
                "config_hash": "3f1c2a9e0b7d4c11",
                "seed": 20240101,
                "started_at": "2024-01-01T00:00:00",
                "outputs": {"g2-fixed": "out/g2-fixed.csv"},
                "metrics": {"g2_fixed.peak_spacing_m": 0.00632},
            }
        }


class IntensityTrace(BaseModel):
    """Piecewise-constant intensity I(t) sampled every `step` seconds from t = 0."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    step: float = Field(..., gt=0.0)
    intensity: np.ndarray

    @field_validator("intensity")
    @classmethod
    def _non_negative(cls, value: np.ndarray) -> np.ndarray:
        if value.ndim != 1 or value.size == 0:
            raise ValueError("intensity must be a non-empty 1-D array")
        if np.any(value < 0):
            raise ValueError("intensity must be non-negative")
        return value

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.intensity.size) * self.step

    @property
    def duration(self) -> float:
        return self.intensity.size * self.step

    def at(self, t) -> np.ndarray:
        """Intensity at times t (sample-and-hold)."""
        index = np.floor(np.asarray(t, dtype=float) / self.step).astype(int)
        return self.intensity[np.clip(index, 0, self.intensity.size - 1)]
