"""
Closed-form oracles: grating orders, far-field mutual coherence of the
incoherent grating source, second-order fringe laws and visibility factors.
"""

import logging
import math
from typing import Dict, List, Optional

import numpy as np
from scipy import integrate, special

from src.hbt.apparatus import ApparatusConfig, slit_mask, source_weight
from src.hbt.field_mc import aperture_nodes
from src.hbt.schemas import (
    FringeLaw,
    GratingOrder,
    IlluminationProfile,
    TemporalLineshape,
)

logger = logging.getLogger(__name__)


def grating_orders(config: ApparatusConfig, max_m: int) -> List[GratingOrder]:
    """
    Solve sin(theta) - sin(theta0) = m*lambda/d for |m| <= max_m.

    Orders with |sin(theta)| > 1 are evanescent and omitted.

    Args:
        config: Apparatus config
        max_m: Largest order magnitude

    Returns:
        Orders sorted by m, with angles and detection-plane positions
    """
    orders = []
    for m in range(-abs(max_m), abs(max_m) + 1):
        s = math.sin(config.incidence_angle) + m * config.wavelength / config.groove_spacing
        if abs(s) > 1.0:
            continue
        theta = math.asin(s)
        orders.append(
            GratingOrder(
                m=m,
                angle=theta,
                plane_position=config.propagation_distance * math.tan(theta),
            )
        )
    return orders


def dirichlet_kernel(n: int, u) -> np.ndarray:
    """Normalized N-slit kernel sin(n*u)/(n*sin(u)); equals cos(u) for n = 2."""
    u = np.asarray(u, dtype=float)
    sin_u = np.sin(u)
    singular = np.abs(sin_u) < 1e-12
    safe = np.where(singular, 1.0, sin_u)
    regular = np.sin(n * u) / (n * safe)
    # Limit at u = k*pi
    limit = np.cos(n * u) / np.cos(u)
    return np.where(singular, limit, regular)


def _spatial_frequency(config: ApparatusConfig, delta) -> np.ndarray:
    return 2 * np.pi * np.asarray(delta, dtype=float) / (
        config.wavelength * config.propagation_distance
    )


def _top_hat_transform(config: ApparatusConfig, q: np.ndarray) -> np.ndarray:
    mask = slit_mask(config)
    total = np.zeros_like(q, dtype=complex)
    for left, right in mask.intervals:
        width = right - left
        center = (left + right) / 2
        total += width * np.exp(1j * q * center) * np.sinc(q * width / (2 * np.pi))
    return total / mask.total_width


def _weighted_transform(config: ApparatusConfig, q: np.ndarray) -> np.ndarray:
    mask = slit_mask(config)

    def weight(xi):
        return float(source_weight(config, xi))

    norm = sum(
        integrate.quad(weight, left, right, epsabs=0.0)[0] for left, right in mask.intervals
    )

    def transform(qk: float) -> complex:
        if qk == 0.0:
            return 1.0 + 0.0j
        re = sum(
            integrate.quad(weight, left, right, weight="cos", wvar=qk, epsabs=0.0)[0]
            for left, right in mask.intervals
        )
        im = sum(
            integrate.quad(weight, left, right, weight="sin", wvar=qk, epsabs=0.0)[0]
            for left, right in mask.intervals
        )
        return complex(re, im) / norm

    return np.vectorize(transform, otypes=[complex])(q)


def mutual_coherence(config: ApparatusConfig, x1, x2) -> np.ndarray:
    """
    Normalized far-field mutual coherence mu(x2 - x1) of the grating source.

    The normalized Fourier transform of the source intensity over the slit
    mask at spatial frequency (x2 - x1)/(lambda*z); mu(0) = 1.

    Args:
        config: Apparatus config
        x1, x2: Detection-plane positions (scalars or arrays)

    Returns:
        Complex coherence, broadcast shape of x1 and x2
    """
    q = _spatial_frequency(config, np.asarray(x2, dtype=float) - np.asarray(x1, dtype=float))
    if config.illumination_profile == IlluminationProfile.TOP_HAT:
        return _top_hat_transform(config, q)
    return _weighted_transform(config, q)


def g2_analytic(config: ApparatusConfig, x1, x2, beta: float) -> np.ndarray:
    """
    Point-detector second-order correlation g2 = 1 + beta*|mu(x2 - x1)|^2.

    For N unclipped slits |mu|^2 = sinc^2(pi*b*dx/(lambda*z)) * D_N^2(pi*d*dx/(lambda*z)).
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    return 1.0 + beta * np.abs(mutual_coherence(config, x1, x2)) ** 2


def fringe_law(config: ApparatusConfig, beta: float) -> FringeLaw:
    """Parameters of the fringe law for this apparatus."""
    return FringeLaw(
        beta=beta,
        envelope_scale=config.envelope_scale,
        fringe_period=config.fringe_period,
        num_slits=config.num_slits,
    )


def fringe_law_value(law: FringeLaw, delta) -> np.ndarray:
    """Evaluate 1 + beta*sinc^2*D_N^2 directly from a FringeLaw."""
    delta = np.asarray(delta, dtype=float)
    envelope = np.sinc(delta / law.envelope_scale) ** 2
    kernel = dirichlet_kernel(law.num_slits, np.pi * delta / law.fringe_period) ** 2
    return 1.0 + law.beta * envelope * kernel


def beta_spatial(config: ApparatusConfig) -> float:
    """
    Mean of |mu(u2 - u1)|^2 with u1, u2 uniform over the two detector apertures.

    The double average reduces exactly to a triangle-weighted integral over
    the separation v = u2 - u1 in [-A, A].
    """
    width = config.detector_aperture

    def integrand(v: float) -> float:
        tri = (1.0 - abs(v) / width) / width
        return tri * float(np.abs(mutual_coherence(config, 0.0, v)) ** 2)

    # Kernel structure repeats every fringe period; give quad the break points
    period = config.fringe_period / max(config.num_slits, 1)
    breaks = np.arange(-width, width, period)[1:]
    value, _ = integrate.quad(
        integrand, -width, width, points=list(breaks[:100]), limit=500
    )
    return float(min(max(value, 0.0), 1.0))


def spatial_factor(config: ApparatusConfig, x1, x2) -> np.ndarray:
    """
    Aperture-averaged |mu|^2 for detectors centered at x1 and x2.

    Uses the detectors' own quadrature nodes, so it is the exact ensemble
    expectation of the simulated detectors' excess correlation.
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    offsets = aperture_nodes(config, 0.0)
    separation = (
        x2[:, None, None] + offsets[None, None, :] - x1[:, None, None] - offsets[None, :, None]
    )
    mu2 = np.abs(mutual_coherence(config, 0.0, separation)) ** 2
    return mu2.mean(axis=(1, 2))


def g2_finite_aperture(
    config: ApparatusConfig, x1, x2, beta_temporal: float = 1.0
) -> np.ndarray:
    """g2 = 1 + beta_temporal * spatial_factor(x1, x2) for finite detector apertures."""
    return 1.0 + beta_temporal * spatial_factor(config, x1, x2)


def gamma_squared(config: ApparatusConfig, tau) -> np.ndarray:
    """|gamma(tau)|^2; both line shapes integrate to the coherence time."""
    tau = np.asarray(tau, dtype=float)
    tau0 = config.coherence_time
    if config.temporal_lineshape == TemporalLineshape.LORENTZIAN:
        return np.exp(-2.0 * np.abs(tau) / tau0)
    return np.exp(-np.pi * tau**2 / tau0**2)


def relative_jitter_sigma(config: ApparatusConfig) -> float:
    """Standard deviation of the start-stop timing difference."""
    return math.sqrt(2.0) * config.jitter_sigma


def smeared_excess(
    config: ApparatusConfig, lower: float, upper: float, sigma: Optional[float] = None
) -> float:
    """
    Integral over [lower, upper] of |gamma|^2 convolved with a Gaussian of width sigma.

    sigma = 0 gives the bare |gamma|^2 integral.
    """
    if sigma is None:
        sigma = relative_jitter_sigma(config)
    span = 40.0 * config.coherence_time
    if sigma <= 0.0:
        a, b = max(lower, -span), min(upper, span)

        def integrand(t: float) -> float:
            return float(gamma_squared(config, t))

        candidates = (0.0,)
    else:
        # The ndtr window is negligible beyond 10 sigma of its edges
        a, b = max(lower - 10.0 * sigma, -span), min(upper + 10.0 * sigma, span)

        def integrand(t: float) -> float:
            window = special.ndtr((upper - t) / sigma) - special.ndtr((lower - t) / sigma)
            return float(gamma_squared(config, t)) * window

        candidates = (lower, 0.0, upper)
    if b <= a:
        return 0.0
    breaks = sorted({p for p in candidates if a < p < b}) or None
    # Values are O(tau0), far below quad's default absolute tolerance
    value, _ = integrate.quad(integrand, a, b, points=breaks, limit=400, epsabs=0.0)
    return value


def beta_temporal(config: ApparatusConfig, include_jitter: bool = False) -> float:
    """
    Window average of |gamma|^2 over |tau| <= coincidence_window_near.

    Args:
        config: Apparatus config
        include_jitter: Also smear |gamma|^2 by the detectors' timing jitter

    Returns:
        Temporal degradation factor in (0, 1]
    """
    window = 2.0 * config.coincidence_window_near
    tau0 = config.coherence_time
    if include_jitter:
        half = window / 2
        return smeared_excess(config, -half, half) / window
    if config.temporal_lineshape == TemporalLineshape.LORENTZIAN:
        return (tau0 / window) * (1.0 - math.exp(-window / tau0))
    return (tau0 / window) * float(special.erf(math.sqrt(math.pi) * window / (2.0 * tau0)))


def coincidence_peak_sigma(config: ApparatusConfig) -> float:
    """Width of the coincidence peak: quadrature sum of the |gamma|^2 width and the jitter."""
    tau0 = config.coherence_time
    if config.temporal_lineshape == TemporalLineshape.LORENTZIAN:
        intrinsic = tau0**2 / 2.0
    else:
        intrinsic = tau0**2 / (2.0 * math.pi)
    return math.sqrt(relative_jitter_sigma(config) ** 2 + intrinsic)


def visibility(g2_values) -> Dict[str, float]:
    """Fringe visibility in both conventions: (max-min)/(max+min) and max-1."""
    values = np.asarray(g2_values, dtype=float)
    high, low = float(values.max()), float(values.min())
    return {
        "michelson": (high - low) / (high + low),
        "excess": high - 1.0,
    }
