"""Parametric two-photon joint spectral densities.

A JSD is |f2|^2 stored in rotated coordinates: rows follow the sum frequency
w+ = w1 + w2, columns the difference frequency w- = w1 - w2. Densities are
per unit dw+ dw-, so data given in (w1, w2) pick up the Jacobian factor 1/2
(see :func:`jsd_from_pair_density`).

The biexciton model is separable, a Lorentzian in w+ centred on the biexciton
frequency times a symmetric pair of Lorentzians at +/-delta in w-. That
separability is a modelling choice; the single-peak widths of the preset are
read off the emission spectrum, not measured values.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import GridAsymmetryError, InsufficientSupportError, InvalidInputError
from .spectral_core import (
    FrequencyGrid,
    Spectrum,
    _frozen,
    gaussian,
    lorentzian,
    trapezoid_weights,
    unit_convert,
)

MIN_CAPTURED_MASS = 0.99


@dataclass(frozen=True)
class BiexcitonModelParams:
    omega_xx: float  # sum-frequency centre, rad/s
    gamma_xx: float  # sum-frequency HWHM, rad/s (NOON envelope decay rate)
    delta: float  # HEP-LEP separation, rad/s
    gamma_hep: float  # single-peak HWHM, rad/s
    gamma_lep: float

    def __post_init__(self):
        for name in ("omega_xx", "gamma_xx", "delta", "gamma_hep", "gamma_lep"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise InvalidInputError(f"{name} must be a finite number, got {v!r}")
        for name in ("gamma_xx", "gamma_hep", "gamma_lep"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be > 0")
        if self.delta < 0:
            raise InvalidInputError("delta must be >= 0")
        if self.omega_xx <= self.delta:
            raise InvalidInputError("omega_xx must exceed delta (both photon frequencies positive)")

    @property
    def gamma_diff(self) -> float:
        """HWHM of each difference-frequency peak, the convolved width."""
        return self.gamma_hep + self.gamma_lep

    @classmethod
    def cucl_default(cls, coherence_time: float = 17e-12) -> "BiexcitonModelParams":
        """CuCl biexciton at 6.3722 eV with 2.0 THz HEP-LEP splitting.

        ``coherence_time`` sets gamma_xx = 1/coherence_time; pass 16e-12 for the
        four-wave-mixing dephasing time instead of the NOON envelope value.
        """
        return cls(
            omega_xx=unit_convert(6.3722, "eV", "rad/s"),
            gamma_xx=1.0 / coherence_time,
            delta=unit_convert(2.0, "THz", "rad/s"),
            gamma_hep=unit_convert(0.1, "THz", "rad/s"),
            gamma_lep=unit_convert(0.1, "THz", "rad/s"),
        )

    @classmethod
    def cucl_as_measured(cls, coherence_time: float = 17e-12) -> "BiexcitonModelParams":
        """Same as :meth:`cucl_default` but with the sum frequency of a 173 nm NOON period."""
        base = cls.cucl_default(coherence_time)
        return cls(
            omega_xx=unit_convert(173.0, "nm", "rad/s"),
            gamma_xx=base.gamma_xx,
            delta=base.delta,
            gamma_hep=base.gamma_hep,
            gamma_lep=base.gamma_lep,
        )


@dataclass(frozen=True)
class GaussianModelParams:
    omega_sum_center: float
    sigma_sum: float
    omega_diff_center: float
    sigma_diff: float

    def __post_init__(self):
        for name in ("omega_sum_center", "sigma_sum", "omega_diff_center", "sigma_diff"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise InvalidInputError(f"{name} must be a finite number, got {v!r}")
        if self.sigma_sum <= 0 or self.sigma_diff <= 0:
            raise InvalidInputError("sigmas must be > 0")

    @classmethod
    def test_default(cls) -> "GaussianModelParams":
        # Sum centre kept low enough that a +/-40 ps, 2**16 point scan samples it.
        return cls(
            omega_sum_center=unit_convert(200.0, "THz", "rad/s"),
            sigma_sum=unit_convert(1.0, "THz", "rad/s"),
            omega_diff_center=unit_convert(3.0, "THz", "rad/s"),
            sigma_diff=unit_convert(0.5, "THz", "rad/s"),
        )


@dataclass(frozen=True, eq=False)
class JointSpectralDensity:
    sum_grid: FrequencyGrid
    diff_grid: FrequencyGrid
    values: np.ndarray
    metadata: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        vals = _frozen(self.values)
        shape = (self.sum_grid.count, self.diff_grid.count)
        if vals.shape != shape:
            raise InvalidInputError(f"JSD values have shape {vals.shape}, expected {shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise InvalidInputError("JSD values must be finite and nonnegative")
        object.__setattr__(self, "values", vals)

    def __eq__(self, other):
        if not isinstance(other, JointSpectralDensity):
            return NotImplemented
        return (
            self.sum_grid == other.sum_grid
            and self.diff_grid == other.diff_grid
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    @property
    def sum_weights(self) -> np.ndarray:
        return trapezoid_weights(self.sum_grid.count, self.sum_grid.step)

    @property
    def diff_weights(self) -> np.ndarray:
        return trapezoid_weights(self.diff_grid.count, self.diff_grid.step)

    def integral(self) -> float:
        return float(self.sum_weights @ self.values @ self.diff_weights)

    def normalized(self) -> "JointSpectralDensity":
        total = self.integral()
        if not total > 0:
            raise InvalidInputError("cannot normalize a JSD with zero integral")
        return JointSpectralDensity(self.sum_grid, self.diff_grid, self.values / total, dict(self.metadata))


def _check_covers(grid: FrequencyGrid, center: float, width: float, n_widths: float, what: str):
    if grid.start > center - n_widths * width or grid.stop < center + n_widths * width:
        raise InsufficientSupportError(
            f"{what} grid [{grid.start:.6g}, {grid.stop:.6g}] does not cover "
            f"{center:.6g} +/- {n_widths:g} x {width:.6g} rad/s"
        )


def _separable(sum_grid, diff_grid, sum_factor, diff_factor, metadata) -> JointSpectralDensity:
    ws = trapezoid_weights(sum_grid.count, sum_grid.step)
    wd = trapezoid_weights(diff_grid.count, diff_grid.step)
    mass = float(ws @ sum_factor) * float(wd @ diff_factor)
    if mass < MIN_CAPTURED_MASS:
        raise InsufficientSupportError(
            f"grids capture only {mass:.4f} of the model's probability (need >= {MIN_CAPTURED_MASS})"
        )
    values = np.outer(sum_factor, diff_factor) / mass
    md = dict(metadata)
    md["captured_mass"] = mass
    return JointSpectralDensity(sum_grid, diff_grid, values, md)


def default_biexciton_grids(
    params: BiexcitonModelParams, n_widths: float = 200.0, points_per_hwhm: float = 4.0
) -> tuple[FrequencyGrid, FrequencyGrid]:
    """Grids spanning ``n_widths`` HWHM around each peak, ``points_per_hwhm`` samples per HWHM.

    Lorentzian tails are heavy: +/-8 HWHM holds only 92% of the mass, so the
    default span is far wider than the minimum coverage check.
    """
    sum_grid = FrequencyGrid.centered(params.omega_xx, n_widths * params.gamma_xx, params.gamma_xx / points_per_hwhm)
    g = params.gamma_diff
    diff_grid = FrequencyGrid.centered(0.0, params.delta + n_widths * g, g / points_per_hwhm)
    return sum_grid, diff_grid


def default_gaussian_grids(
    params: GaussianModelParams, n_sigma: float = 8.0, points_per_sigma: float = 10.0
) -> tuple[FrequencyGrid, FrequencyGrid]:
    sum_grid = FrequencyGrid.centered(params.omega_sum_center, n_sigma * params.sigma_sum, params.sigma_sum / points_per_sigma)
    half = abs(params.omega_diff_center) + n_sigma * params.sigma_diff
    diff_grid = FrequencyGrid.centered(0.0, half, params.sigma_diff / points_per_sigma)
    return sum_grid, diff_grid


def build_biexciton_jsd(
    params: BiexcitonModelParams,
    sum_grid: FrequencyGrid | None = None,
    diff_grid: FrequencyGrid | None = None,
) -> JointSpectralDensity:
    """Separable biexciton JSD, normalized to unit integral.

    values(w+, w-) ~ L_gxx(w+ - W_xx) * 1/2 [L_G(w- - delta) + L_G(w- + delta)]
    with G = gamma_hep + gamma_lep.
    """
    if sum_grid is None or diff_grid is None:
        ds, dd = default_biexciton_grids(params)
        sum_grid = sum_grid or ds
        diff_grid = diff_grid or dd
    g = params.gamma_diff
    _check_covers(sum_grid, params.omega_xx, params.gamma_xx, 8, "sum")
    _check_covers(diff_grid, params.delta, g, 8, "difference")
    _check_covers(diff_grid, -params.delta, g, 8, "difference")
    s = lorentzian(sum_grid.points - params.omega_xx, params.gamma_xx)
    wm = diff_grid.points
    d = 0.5 * (lorentzian(wm - params.delta, g) + lorentzian(wm + params.delta, g))
    md = {"model": "biexciton", "params": asdict(params)}
    return _separable(sum_grid, diff_grid, s, d, md)


def build_gaussian_jsd(
    params: GaussianModelParams,
    sum_grid: FrequencyGrid | None = None,
    diff_grid: FrequencyGrid | None = None,
) -> JointSpectralDensity:
    """Separable Gaussian JSD, symmetrized in w- and normalized."""
    if sum_grid is None or diff_grid is None:
        ds, dd = default_gaussian_grids(params)
        sum_grid = sum_grid or ds
        diff_grid = diff_grid or dd
    _check_covers(sum_grid, params.omega_sum_center, params.sigma_sum, 6, "sum")
    for c in (params.omega_diff_center, -params.omega_diff_center):
        _check_covers(diff_grid, c, params.sigma_diff, 6, "difference")
    s = gaussian(sum_grid.points - params.omega_sum_center, params.sigma_sum)
    wm = diff_grid.points
    c = params.omega_diff_center
    d = 0.5 * (gaussian(wm - c, params.sigma_diff) + gaussian(wm + c, params.sigma_diff))
    md = {"model": "gaussian", "params": asdict(params)}
    return _separable(sum_grid, diff_grid, s, d, md)


def jsd_from_pair_density(
    density: Callable[[np.ndarray, np.ndarray], np.ndarray],
    sum_grid: FrequencyGrid,
    diff_grid: FrequencyGrid,
    normalize: bool = True,
) -> JointSpectralDensity:
    """Resample a density given per unit dw1 dw2 onto rotated (w+, w-) grids."""
    wp, wm = np.meshgrid(sum_grid.points, diff_grid.points, indexing="ij")
    values = 0.5 * np.asarray(density(0.5 * (wp + wm), 0.5 * (wp - wm)), dtype=float)
    jsd = JointSpectralDensity(sum_grid, diff_grid, values, {"model": "pair-density"})
    return jsd.normalized() if normalize else jsd


def model_marginal(
    params: BiexcitonModelParams | GaussianModelParams,
    axis: str,
    grid: FrequencyGrid | None = None,
    max_delay: float | None = None,
) -> Spectrum:
    """Analytic marginal F+ (``axis='sum'``) or F- (``axis='diff'``) of a separable model.

    Equals the numerical marginal of the corresponding JSD on the same grid,
    without building the 2-D array. With ``max_delay`` the default grid is made
    fine enough that its transform stays unambiguous out to that delay.
    """
    if axis not in ("sum", "diff"):
        raise InvalidInputError(f"axis must be 'sum' or 'diff', got {axis!r}")
    if isinstance(params, BiexcitonModelParams):
        center, width = (params.omega_xx, params.gamma_xx) if axis == "sum" else (params.delta, params.gamma_diff)
        if grid is None:
            step = width / 8.0
            if max_delay:
                step = min(step, math.pi / (1.25 * max_delay))
            grid = FrequencyGrid.centered(0.0 if axis == "diff" else center, (center if axis == "diff" else 0.0) + 200.0 * width, step)
        x = grid.points
        if axis == "sum":
            _check_covers(grid, center, width, 8, "sum")
            values = lorentzian(x - center, width)
        else:
            _check_covers(grid, center, width, 8, "difference")
            _check_covers(grid, -center, width, 8, "difference")
            values = 0.5 * (lorentzian(x - center, width) + lorentzian(x + center, width))
    elif isinstance(params, GaussianModelParams):
        center, width = (
            (params.omega_sum_center, params.sigma_sum) if axis == "sum" else (params.omega_diff_center, params.sigma_diff)
        )
        if grid is None:
            step = width / 10.0
            if max_delay:
                step = min(step, math.pi / (1.25 * max_delay))
            if axis == "sum":
                grid = FrequencyGrid.centered(center, 8.0 * width, step)
            else:
                grid = FrequencyGrid.centered(0.0, abs(center) + 8.0 * width, step)
        x = grid.points
        _check_covers(grid, center, width, 6, axis)
        if axis == "sum":
            values = gaussian(x - center, width)
        else:
            _check_covers(grid, -center, width, 6, axis)
            values = 0.5 * (gaussian(x - center, width) + gaussian(x + center, width))
    else:
        raise InvalidInputError(f"unsupported model parameters {type(params).__name__}")
    spec = Spectrum(grid, values, {"axis": axis, "model": type(params).__name__})
    mass = spec.integral()
    if mass < MIN_CAPTURED_MASS:
        raise InsufficientSupportError(f"grid captures only {mass:.4f} of the marginal's probability")
    return spec.normalized()


def _require_symmetric_diff(jsd: JointSpectralDensity):
    if not jsd.diff_grid.is_symmetric():
        raise GridAsymmetryError(
            f"difference grid [{jsd.diff_grid.start:.6g}, {jsd.diff_grid.stop:.6g}] is not symmetric about 0"
        )


def symmetrize(jsd: JointSpectralDensity) -> JointSpectralDensity:
    """Average the JSD with its reflection w- -> -w- and renormalize."""
    _require_symmetric_diff(jsd)
    values = 0.5 * (jsd.values + jsd.values[:, ::-1])
    md = dict(jsd.metadata)
    md["symmetrized"] = True
    return JointSpectralDensity(jsd.sum_grid, jsd.diff_grid, values, md).normalized()


def symmetry_defect(jsd: JointSpectralDensity) -> float:
    """Total-variation distance between the JSD and its w- reflection, in [0, 1]."""
    _require_symmetric_diff(jsd)
    v = jsd.normalized().values
    diff = np.abs(v - v[:, ::-1])
    return float(0.5 * (jsd.sum_weights @ diff @ jsd.diff_weights))
