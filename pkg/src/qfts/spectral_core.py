"""Units, uniform grids, value types and shared numeric primitives.

Canonical units are rad/s for angular frequency and seconds for delay. Values
quoted in THz, eV, nm or ps are converted at the boundary with
:func:`unit_convert`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import (
    DimensionalMismatchError,
    InvalidGridError,
    InvalidInputError,
    PeakTruncatedError,
    WidthUndefinedError,
)

# CODATA 2018 (exact SI defining constants)
SPEED_OF_LIGHT = 299_792_458.0  # m/s
PLANCK = 6.626_070_15e-34  # J s
ELEMENTARY_CHARGE = 1.602_176_634e-19  # C
HBAR = PLANCK / (2.0 * math.pi)  # J s
HBAR_EV = HBAR / ELEMENTARY_CHARGE  # eV s
HC_EV_NM = PLANCK * SPEED_OF_LIGHT / ELEMENTARY_CHARGE * 1e9  # eV nm

_FREQUENCY_UNITS = ("rad/s", "Hz", "THz", "eV", "meV", "nm")
_TIME_UNITS = ("s", "ps", "fs")
_TIME_SCALE = {"s": 1.0, "ps": 1e-12, "fs": 1e-15}


def _to_rad_s(value: float, unit: str) -> float:
    if unit == "rad/s":
        return value
    if unit == "Hz":
        return 2.0 * math.pi * value
    if unit == "THz":
        return 2.0 * math.pi * value * 1e12
    if unit == "eV":
        return value / HBAR_EV
    if unit == "meV":
        return value * 1e-3 / HBAR_EV
    # nm: wavelength, lambda = 2 pi c / omega
    if value == 0:
        return math.inf
    return 2.0 * math.pi * SPEED_OF_LIGHT / (value * 1e-9)


def _from_rad_s(omega: float, unit: str) -> float:
    if unit == "rad/s":
        return omega
    if unit == "Hz":
        return omega / (2.0 * math.pi)
    if unit == "THz":
        return omega / (2.0 * math.pi) / 1e12
    if unit == "eV":
        return omega * HBAR_EV
    if unit == "meV":
        return omega * HBAR_EV * 1e3
    if omega == 0:
        return math.inf
    return 2.0 * math.pi * SPEED_OF_LIGHT / omega * 1e9


def unit_convert(value: float, from_unit: str, to_unit: str) -> float:
    """Convert between frequency-like units or between time units.

    Frequency-like units are ``rad/s``, ``Hz``, ``THz``, ``eV``, ``meV`` and
    ``nm`` (vacuum wavelength). Time units are ``s``, ``ps`` and ``fs``.

    >>> round(unit_convert(173.0, "nm", "eV"), 3)
    7.167
    """
    value = float(value)
    if from_unit in _FREQUENCY_UNITS and to_unit in _FREQUENCY_UNITS:
        if from_unit == to_unit:
            return value
        return _from_rad_s(_to_rad_s(value, from_unit), to_unit)
    if from_unit in _TIME_UNITS and to_unit in _TIME_UNITS:
        return value * _TIME_SCALE[from_unit] / _TIME_SCALE[to_unit]
    known = _FREQUENCY_UNITS + _TIME_UNITS
    for u in (from_unit, to_unit):
        if u not in known:
            raise DimensionalMismatchError(f"unknown unit {u!r}; expected one of {known}")
    raise DimensionalMismatchError(f"cannot convert {from_unit!r} to {to_unit!r}")


def path_to_delay(path_m: float) -> float:
    """Optical path difference in metres to time delay in seconds."""
    return path_m / SPEED_OF_LIGHT


def delay_to_path(delay_s: float) -> float:
    return delay_s * SPEED_OF_LIGHT


def _frozen(values: Any, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class UniformGrid:
    start: float
    step: float
    count: int

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.step)):
            raise InvalidGridError("grid start and step must be finite")
        if self.step <= 0:
            raise InvalidGridError(f"grid step must be > 0, got {self.step}")
        if int(self.count) != self.count or self.count < 2:
            raise InvalidGridError(f"grid count must be an integer >= 2, got {self.count}")
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "step", float(self.step))
        object.__setattr__(self, "count", int(self.count))

    @property
    def points(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    @property
    def stop(self) -> float:
        return self.start + self.step * (self.count - 1)

    @property
    def span(self) -> float:
        return self.step * (self.count - 1)

    @classmethod
    def centered(cls, center: float, half_width: float, step: float):
        """Grid with an odd number of points whose middle sample is exactly ``center``."""
        n_half = int(math.ceil(half_width / step - 1e-9))
        return cls(center - n_half * step, step, 2 * n_half + 1)

    @classmethod
    def from_points(cls, points, rtol: float = 1e-9):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise InvalidGridError("need at least two grid points")
        step = (pts[-1] - pts[0]) / (pts.size - 1)
        dev = np.abs(np.diff(pts) - step)
        if step <= 0 or np.max(dev) > rtol * max(abs(step), 1e-300) + 1e-12 * np.max(np.abs(pts)):
            raise InvalidGridError("grid points are not uniformly spaced")
        return cls(float(pts[0]), float(step), int(pts.size))

    def is_symmetric(self, rtol: float = 1e-9) -> bool:
        return abs(self.start + self.stop) <= rtol * self.span


class FrequencyGrid(UniformGrid):
    """Uniform angular-frequency grid in rad/s."""


class DelayGrid(UniformGrid):
    """Uniform delay grid in seconds; symmetric grids are the canonical form."""

    @classmethod
    def symmetric(cls, half_span: float, count: int) -> "DelayGrid":
        """``count`` points on ``[-half_span, half_span]``.

        Odd counts put a sample exactly at zero delay.
        """
        step = 2.0 * half_span / (count - 1)
        return cls(-(count - 1) * step / 2.0, step, count)


def trapezoid_weights(count: int, step: float) -> np.ndarray:
    w = np.full(count, float(step))
    w[0] = w[-1] = 0.5 * step
    return w


def trapezoid_integral(values, step: float) -> float:
    """Trapezoid-rule integral of uniformly spaced samples."""
    y = np.asarray(values)
    if y.ndim != 1 or y.size < 2:
        raise InvalidInputError("trapezoid_integral needs at least two samples")
    if not step > 0:
        raise InvalidInputError(f"step must be > 0, got {step}")
    return float(step * (np.sum(y) - 0.5 * (y[0] + y[-1])))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Nonnegative spectral density F(omega) on a uniform grid, 1/(rad/s)."""

    grid: FrequencyGrid
    values: np.ndarray
    metadata: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.count,):
            raise InvalidInputError(
                f"spectrum has {vals.shape} values for a grid of {self.grid.count} points"
            )
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("spectrum values must be finite")
        if np.any(vals < 0):
            raise InvalidInputError("spectrum values must be nonnegative")
        object.__setattr__(self, "values", vals)

    def __eq__(self, other):
        if not isinstance(other, Spectrum):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    __hash__ = None

    @property
    def omega(self) -> np.ndarray:
        return self.grid.points

    def integral(self) -> float:
        return trapezoid_integral(self.values, self.grid.step)

    def normalized(self) -> "Spectrum":
        total = self.integral()
        if not total > 0:
            raise InvalidInputError("cannot normalize a spectrum with zero integral")
        return Spectrum(self.grid, self.values / total, dict(self.metadata))

    def is_normalized(self, tol: float = 1e-9) -> bool:
        return abs(self.integral() - 1.0) <= tol


FRINGE_KINDS = ("HOM", "NOON")


@dataclass(frozen=True, eq=False)
class FringePattern:
    """Two-photon interference fringe sampled on a delay grid.

    ``values`` are detection probabilities for ideal fringes, or count-domain
    numbers for simulated and measured scans, in which case ``sigma`` holds the
    per-point one-standard-deviation uncertainty.
    """

    grid: DelayGrid
    values: np.ndarray
    kind: str
    sigma: np.ndarray | None = None
    metadata: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in FRINGE_KINDS:
            raise InvalidInputError(f"fringe kind must be one of {FRINGE_KINDS}, got {self.kind!r}")
        vals = _frozen(self.values)
        if vals.shape != (self.grid.count,):
            raise InvalidInputError(
                f"fringe has {vals.shape} values for a grid of {self.grid.count} points"
            )
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("fringe values must be finite")
        object.__setattr__(self, "values", vals)
        if self.sigma is not None:
            sig = _frozen(self.sigma)
            if sig.shape != vals.shape or np.any(sig < 0) or not np.all(np.isfinite(sig)):
                raise InvalidInputError("sigma must be finite, nonnegative and match values")
            object.__setattr__(self, "sigma", sig)

    def __eq__(self, other):
        if not isinstance(other, FringePattern):
            return NotImplemented
        if (self.sigma is None) != (other.sigma is None):
            return False
        return (
            self.grid == other.grid
            and self.kind == other.kind
            and np.array_equal(self.values, other.values)
            and (self.sigma is None or np.array_equal(self.sigma, other.sigma))
        )

    __hash__ = None

    @property
    def delays(self) -> np.ndarray:
        return self.grid.points

    @property
    def sign(self) -> int:
        """+1 for NOON (sum frequency), -1 for HOM (difference frequency)."""
        return 1 if self.kind == "NOON" else -1


def fwhm(spectrum: Spectrum) -> float:
    """Full width at half maximum of the dominant peak, in rad/s.

    The dominant peak is the global maximum; ties go to the lower frequency.
    Half-maximum crossings are located by linear interpolation between the
    bracketing samples, so no line shape is assumed.
    """
    y = spectrum.values
    x = spectrum.grid.points
    i = int(np.argmax(y))
    if i == 0 or i == y.size - 1:
        raise PeakTruncatedError("spectral maximum lies on the grid boundary")
    half = 0.5 * y[i]
    if half <= 0:
        raise WidthUndefinedError("spectrum is identically zero")

    below_left = np.nonzero(y[:i] < half)[0]
    below_right = np.nonzero(y[i + 1:] < half)[0]
    if below_left.size == 0 or below_right.size == 0:
        raise WidthUndefinedError("no half-maximum crossing on one side of the peak")
    l = below_left[-1]
    r = i + 1 + below_right[0]
    x_left = x[l] + (half - y[l]) * (x[l + 1] - x[l]) / (y[l + 1] - y[l])
    x_right = x[r - 1] + (half - y[r - 1]) * (x[r] - x[r - 1]) / (y[r] - y[r - 1])
    return float(x_right - x_left)


def lorentzian(x, hwhm: float):
    """Unit-area Lorentzian (hwhm/pi) / (hwhm**2 + x**2)."""
    x = np.asarray(x, dtype=float)
    return (hwhm / math.pi) / (hwhm * hwhm + x * x)


def gaussian(x, sigma: float):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
