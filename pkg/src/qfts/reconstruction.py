"""Inverse path: recover F+-(w) from a sampled fringe.

Two routes are offered. The FFT route inverts a densely sampled fringe
directly. The analytic route takes fitted decay and oscillation parameters
(the fine-scan / coarse-scan protocol used when dense NOON sampling is not
practical) and returns the closed-form Lorentzian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AliasingRiskError, EmptySpectrumError, InsufficientSupportError, InvalidInputError
from .spectral_core import (
    FrequencyGrid,
    FringePattern,
    Spectrum,
    fwhm,
    lorentzian,
    trapezoid_integral,
)

BASELINES = ("fixed_half", "tail_mean", "fitted")
WINDOWS = ("none", "hann")
ALIASING_FRACTION = 0.8
TAIL_FRACTION = 0.1


@dataclass(frozen=True)
class ReconstructionConfig:
    baseline_strategy: str = "fixed_half"
    window: str = "none"
    zero_pad_factor: int = 8
    output_half: str = "positive_frequencies"

    def __post_init__(self):
        if self.baseline_strategy not in BASELINES:
            raise InvalidInputError(f"baseline_strategy must be one of {BASELINES}")
        if self.window not in WINDOWS:
            raise InvalidInputError(f"window must be one of {WINDOWS}")
        if int(self.zero_pad_factor) != self.zero_pad_factor or not 1 <= self.zero_pad_factor <= 64:
            raise InvalidInputError("zero_pad_factor must be an integer in [1, 64]")
        if self.output_half != "positive_frequencies":
            raise InvalidInputError("only output_half='positive_frequencies' is supported")


@dataclass(frozen=True)
class SpectralMetrics:
    peak_frequency: float  # rad/s
    fwhm: float  # rad/s
    centroid: float  # rad/s
    peak_height: float  # 1/(rad/s)

    def to_record(self) -> dict:
        return {
            "peak_frequency": {"value": self.peak_frequency, "unit": "rad/s"},
            "fwhm": {"value": self.fwhm, "unit": "rad/s"},
            "centroid": {"value": self.centroid, "unit": "rad/s"},
            "peak_height": {"value": self.peak_height, "unit": "s/rad"},
        }


def estimate_baseline(fringe: FringePattern, strategy: str) -> float:
    if strategy == "fixed_half":
        return 0.5
    if strategy == "tail_mean":
        n = max(1, int(round(TAIL_FRACTION * fringe.grid.count)))
        v = fringe.values
        return float(np.mean(np.concatenate([v[:n], v[-n:]])))
    if strategy == "fitted":
        # local import: fitting depends on this module for the analytic route
        from .fitting import fit_hom_dip, fit_noon_oscillation

        if fringe.kind == "HOM":
            return float(fit_hom_dip(fringe).params.baseline)
        return float(fit_noon_oscillation(fringe, gamma=0.0).params.amplitude)
    raise InvalidInputError(f"unknown baseline strategy {strategy!r}")


def interference_term(fringe: FringePattern, config: ReconstructionConfig) -> np.ndarray:
    """g(tau) = +-2 (P(tau) - baseline), windowed; equals Re G(tau) for an ideal fringe."""
    b = estimate_baseline(fringe, config.baseline_strategy)
    g = fringe.sign * 2.0 * (fringe.values - b)
    if config.window == "hann":
        g = g * np.hanning(g.size)
    return g


def fourier_transform(g: np.ndarray, delay_step: float, zero_pad_factor: int = 1):
    """One-sided transform of real samples: returns (w >= 0, |ghat(w)|).

    ghat(w) = sum_j g_j exp(i w tau_j) dtau, so that
    integral |g|^2 dtau = (1/2pi) integral |ghat|^2 dw over both signs of w.
    """
    n_pad = g.size * int(zero_pad_factor)
    spec = np.fft.rfft(g, n_pad) * delay_step
    omega = 2.0 * np.pi * np.arange(spec.size) / (n_pad * delay_step)
    return omega, np.abs(spec)


def reconstruct_spectrum(fringe: FringePattern, config: ReconstructionConfig | None = None) -> Spectrum:
    """FFT reconstruction of the sum (NOON) or difference (HOM) spectrum.

    Baseline subtraction, sign convention, optional Hann window, zero padding
    by ``config.zero_pad_factor``, magnitude of the one-sided transform,
    normalized to unit integral on w >= 0. Bin spacing is 2 pi / (N_pad dtau).
    """
    config = config or ReconstructionConfig()
    g = interference_term(fringe, config)
    scale = float(np.max(np.abs(fringe.values))) or 1.0
    if np.max(np.abs(g)) <= 1e-12 * scale:
        raise EmptySpectrumError("fringe carries no interference term (numerically zero spectrum)")
    omega, mag = fourier_transform(g, fringe.grid.step, config.zero_pad_factor)
    density = mag / (2.0 * np.pi)
    peak = int(np.argmax(density))
    if peak > ALIASING_FRACTION * (density.size - 1):
        raise AliasingRiskError(
            f"spectral peak at {omega[peak]:.4g} rad/s is above {ALIASING_FRACTION:.0%} of the "
            f"Nyquist frequency {omega[-1]:.4g} rad/s; sample the fringe more finely"
        )
    grid = FrequencyGrid(0.0, float(omega[1]), omega.size)
    md = {
        "kind": fringe.kind,
        "baseline_strategy": config.baseline_strategy,
        "window": config.window,
        "zero_pad_factor": int(config.zero_pad_factor),
        "integral_before_normalization": trapezoid_integral(density, grid.step),
    }
    return Spectrum(grid, density, md).normalized()


def analytic_fit_spectrum(params, grid: FrequencyGrid) -> Spectrum:
    """Closed-form spectrum of a fitted fringe.

    The transform of exp(-gamma |tau|) cos(w0 tau) has, on w >= 0, a
    Lorentzian of HWHM gamma at w0; its FWHM is 2 gamma, i.e. 2 hbar gamma in
    energy. Accepts NOON fit parameters (gamma, omega) or HOM fit parameters
    (gamma_total, delta).
    """
    if hasattr(params, "omega"):
        center, gamma = params.omega, params.gamma
    else:
        center, gamma = params.delta, params.gamma_total
    if not gamma > 0:
        raise InvalidInputError("decay rate must be > 0 for the analytic spectrum")
    if grid.start > center - 10 * gamma or grid.stop < center + 10 * gamma:
        raise InsufficientSupportError(
            f"grid [{grid.start:.6g}, {grid.stop:.6g}] does not cover {center:.6g} +/- 10 x {gamma:.6g}"
        )
    values = lorentzian(grid.points - center, gamma)
    return Spectrum(grid, values, {"route": "analytic", "center": center, "hwhm": gamma}).normalized()


def analytic_grid(center: float, gamma: float, n_widths: float = 50.0, points_per_hwhm: float = 20.0) -> FrequencyGrid:
    """Convenience grid for :func:`analytic_fit_spectrum`."""
    return FrequencyGrid.centered(center, n_widths * gamma, gamma / points_per_hwhm)


def spectral_metrics(spectrum: Spectrum) -> SpectralMetrics:
    """Peak (parabolic interpolation), FWHM, centroid and peak height."""
    y = spectrum.values
    x = spectrum.grid.points
    width = fwhm(spectrum)  # raises for boundary peaks before the stencil below
    i = int(np.argmax(y))
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denom = y0 - 2.0 * y1 + y2
    shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
    peak = x[i] + shift * spectrum.grid.step
    height = y1 - 0.25 * (y0 - y2) * shift
    norm = trapezoid_integral(y, spectrum.grid.step)
    centroid = trapezoid_integral(x * y, spectrum.grid.step) / norm
    return SpectralMetrics(float(peak), width, float(centroid), float(height))



def to_thz(omega: float) -> float:
    return omega / (2.0 * math.pi * 1e12)
