"""Forward model: correlation functions and two-photon fringes.

G(tau) = integral F(w) exp(-i w tau) dw, and the detection probability
P(tau) = 1/2 {1 +/- Re G(tau)} with + for the NOON (sum-frequency) fringe and
- for the HOM (difference-frequency) fringe.

Everything here is direct trapezoid quadrature, never an FFT, so the forward
path stays independent of the FFT used for reconstruction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AsymmetricSpectrumError, AsymmetricSpectrumWarning, InvalidInputError
from .jsa_models import JointSpectralDensity
from .spectral_core import DelayGrid, FringePattern, Spectrum, trapezoid_weights

IMAG_TOLERANCE = 1e-6
_BLOCK = 2048

SIGNS = {"plus": 1, "minus": -1, "+": 1, "-": -1, 1: 1, -1: -1}


def _sign(sign) -> int:
    try:
        return SIGNS[sign]
    except (KeyError, TypeError):
        raise InvalidInputError(f"sign must be 'plus' or 'minus', got {sign!r}") from None


@dataclass(frozen=True, eq=False)
class ComplexCorrelation:
    grid: DelayGrid
    values: np.ndarray

    @property
    def delays(self) -> np.ndarray:
        return self.grid.points


def _require_normalized(spectrum: Spectrum):
    if not spectrum.is_normalized(1e-9):
        raise InvalidInputError(f"spectrum is not normalized (integral {spectrum.integral():.12g})")


def _fourier_sum(omega_start, omega_step, amplitudes, delays: DelayGrid) -> np.ndarray:
    """sum_k a_k exp(-i w_k tau_j) for uniform w_k and tau_j.

    With w_k = w0 + k dw and tau_j = t0 + j dt, the phase splits into a factor
    per delay, a factor per block of delays, and a fixed (block x k) matrix, so
    only O(N_w (B + N_tau / B)) exponentials are evaluated and the double sum
    becomes one complex matrix product. Still an exact direct quadrature.
    """
    n_w = amplitudes.size
    n_t = delays.count
    k = np.arange(n_w)
    block = min(_BLOCK, n_t)
    n_blocks = -(-n_t // block)
    # integer products keep the phases exact before the single float multiply
    m_k = np.outer(np.arange(block), k).astype(float)
    inner = np.exp(-1j * (omega_step * delays.step) * m_k)
    block_starts = delays.start + delays.step * block * np.arange(n_blocks)
    outer = amplitudes[:, None] * np.exp(-1j * omega_step * np.outer(k, block_starts))
    g = (inner @ outer).T.reshape(-1)[:n_t]
    return g * np.exp(-1j * omega_start * delays.points)


def max_unambiguous_delay(frequency_step: float) -> float:
    """Largest |tau| a frequency grid of this step represents without wrap-around.

    A sampled spectrum has a periodic transform with period 2 pi / step.
    """
    return np.pi / frequency_step


def _require_delay_range(delays: DelayGrid, frequency_step: float):
    limit = max_unambiguous_delay(frequency_step)
    reach = max(abs(delays.start), abs(delays.stop))
    if reach > limit:
        raise InvalidInputError(
            f"delays reach {reach:.4g} s but the frequency grid step only resolves "
            f"|tau| <= {limit:.4g} s; use a finer frequency grid"
        )


def correlation_function(spectrum: Spectrum, delays: DelayGrid) -> ComplexCorrelation:
    """Second-order correlation G(tau) of a normalized spectrum."""
    _require_normalized(spectrum)
    _require_delay_range(delays, spectrum.grid.step)
    grid = spectrum.grid
    a = spectrum.values * trapezoid_weights(grid.count, grid.step)
    return ComplexCorrelation(delays, _fourier_sum(grid.start, grid.step, a, delays))


def _fringe_from_g(g: np.ndarray, delays: DelayGrid, s: int, strict: bool, source: str) -> FringePattern:
    imag = float(np.max(np.abs(g.imag)))
    if s < 0 and imag > IMAG_TOLERANCE:
        msg = f"difference spectrum is asymmetric: max |Im G| = {imag:.3g}"
        if strict:
            raise AsymmetricSpectrumError(msg)
        warnings.warn(msg, AsymmetricSpectrumWarning, stacklevel=3)
    values = 0.5 * (1.0 + s * g.real)
    kind = "NOON" if s > 0 else "HOM"
    return FringePattern(delays, values, kind, metadata={"max_abs_imag": imag, "source": source})


def fringe_pattern(spectrum: Spectrum, delays: DelayGrid, sign, strict: bool = True) -> FringePattern:
    """Ideal fringe P(tau) = 1/2 {1 +/- Re G(tau)} from a marginal spectrum.

    ``sign='minus'`` expects a difference-frequency spectrum symmetric about
    zero; residual imaginary parts above 1e-6 raise (``strict``) or warn.
    The maximum |Im G| is kept in ``metadata['max_abs_imag']``.
    """
    s = _sign(sign)
    g = correlation_function(spectrum, delays).values
    return _fringe_from_g(g, delays, s, strict, "marginal")


def marginal_spectrum(jsd: JointSpectralDensity, axis: str) -> Spectrum:
    """F+(w+) (``axis='sum'``) or F-(w-) (``axis='diff'``), trapezoid marginal, normalized."""
    if axis in ("sum", "plus", "+"):
        values = jsd.values @ jsd.diff_weights
        grid = jsd.sum_grid
    elif axis in ("diff", "minus", "-"):
        values = jsd.sum_weights @ jsd.values
        grid = jsd.diff_grid
    else:
        raise InvalidInputError(f"axis must be 'sum' or 'diff', got {axis!r}")
    return Spectrum(grid, values, {"axis": "sum" if grid is jsd.sum_grid else "diff"}).normalized()


def fringe_from_jsd(jsd: JointSpectralDensity, delays: DelayGrid, sign, strict: bool = True) -> FringePattern:
    """Fringe by direct double quadrature over the JSD.

    The phase exp(-i w+- tau) is integrated along its own axis first and the
    complementary axis last, the reverse of marginal-then-transform, so this
    serves as an independent check on :func:`fringe_pattern` of the marginal.
    """
    s = _sign(sign)
    if abs(jsd.integral() - 1.0) > 1e-9:
        raise InvalidInputError("JSD is not normalized")
    _require_delay_range(delays, jsd.sum_grid.step if s > 0 else jsd.diff_grid.step)
    tau = delays.points
    ws, wd = jsd.sum_weights, jsd.diff_weights
    g = np.empty(tau.size, dtype=complex)
    chunk = max(1, 2_000_000 // max(jsd.sum_grid.count, jsd.diff_grid.count))
    for lo in range(0, tau.size, chunk):
        t = tau[lo:lo + chunk]
        if s > 0:
            phase = np.exp(-1j * np.outer(t, jsd.sum_grid.points)) * ws
            g[lo:lo + chunk] = (phase @ jsd.values) @ wd
        else:
            phase = np.exp(-1j * np.outer(jsd.diff_grid.points, t)) * wd[:, None]
            g[lo:lo + chunk] = ws @ (jsd.values @ phase)
    return _fringe_from_g(g, delays, s, strict, "jsd")


def with_visibility(fringe: FringePattern, visibility: float) -> FringePattern:
    """Scale the interference term: P -> 1/2 + V (P - 1/2).

    Models partial distinguishability or mixedness; V = 1 leaves the ideal
    fringe unchanged.
    """
    if not 0.0 <= visibility <= 1.0:
        raise InvalidInputError("visibility must lie in [0, 1]")
    md = dict(fringe.metadata)
    md["visibility"] = visibility
    return FringePattern(fringe.grid, 0.5 + visibility * (fringe.values - 0.5), fringe.kind, metadata=md)


def nyquist_ok(spectrum: Spectrum, delays: DelayGrid, fraction: float = 0.8) -> bool:
    """True when the spectral peak lies below ``fraction`` of the delay grid's Nyquist frequency."""
    peak = abs(spectrum.grid.points[int(np.argmax(spectrum.values))])
    return peak <= fraction * np.pi / delays.step
