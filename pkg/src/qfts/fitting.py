"""Weighted nonlinear least-squares fits of interference fringes.

Models
------
NOON oscillation: I(tau) = A exp(-gamma |tau|) (1 + V cos(omega tau + phi)).
HOM dip:          P(tau) = B [1 - V exp(-G |t|) cos(D t)],  t = tau - tau0.
Envelope:         second moment of the coarse-scan deviation, fitted to
                  a exp(-2 gamma |tau|) (see :func:`fit_envelope`).

All fits run a damped Gauss-Newton (Levenberg-Marquardt) iteration in
internally rescaled coordinates. Covariances come from the Jacobian at the
optimum and are scaled by the reduced chi-square.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .errors import (
    AliasingRiskError,
    DipNotFoundError,
    InvalidInputError,
    UnderconstrainedError,
)
from .spectral_core import DelayGrid, FringePattern

MAX_ITER = 200
XTOL = 1e-10
N_PHASE_STARTS = 8


@dataclass(frozen=True)
class NoonFitParams:
    gamma: float  # 1/s
    visibility: float
    omega: float  # rad/s
    phase: float = 0.0  # rad
    amplitude: float = 1.0  # counts scale

    def __post_init__(self):
        if not self.gamma >= 0:
            raise InvalidInputError("gamma must be >= 0")
        if not 0.0 <= self.visibility <= 1.0:
            raise InvalidInputError("visibility must lie in [0, 1]")
        if not self.omega > 0:
            raise InvalidInputError("omega must be > 0")

    UNITS = {"gamma": "1/s", "visibility": "1", "omega": "rad/s", "phase": "rad", "amplitude": "counts"}


@dataclass(frozen=True)
class HomFitParams:
    delta: float  # rad/s
    gamma_total: float  # 1/s
    visibility: float
    baseline: float  # counts
    center: float = 0.0  # s

    def __post_init__(self):
        if not self.gamma_total > 0:
            raise InvalidInputError("gamma_total must be > 0")
        if not 0.0 <= self.visibility <= 1.0:
            raise InvalidInputError("visibility must lie in [0, 1]")

    UNITS = {"delta": "rad/s", "gamma_total": "1/s", "visibility": "1", "baseline": "counts", "center": "s"}


@dataclass
class FitReport:
    params: NoonFitParams | HomFitParams
    names: list[str]  # fitted parameters, in covariance order
    covariance: np.ndarray
    reduced_chi_square: float
    iterations: int
    converged: bool
    model: str
    flags: list[str] = field(default_factory=list)
    dof: int = 0

    @property
    def uncertainties(self) -> dict[str, float]:
        d = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))
        return dict(zip(self.names, d.tolist()))

    def value(self, name: str) -> float:
        return float(getattr(self.params, name))

    def sigma(self, name: str) -> float:
        return self.uncertainties[name]


# ---------------------------------------------------------------------------
# solver


@dataclass
class _Solution:
    p: np.ndarray
    jac: np.ndarray
    cost: float
    iterations: int
    converged: bool


def _levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    p0: np.ndarray,
    max_iter: int = MAX_ITER,
    xtol: float = XTOL,
) -> _Solution:
    p = np.array(p0, dtype=float)
    r = residual(p)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = jacobian(p)
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag = np.maximum(diag, 1e-12 * max(float(diag.max()), 1e-300))
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_new = p + step
            r_new = residual(p_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no downhill step at any damping: stationary to working precision
            converged = True
            break
        small = np.linalg.norm(step) <= xtol * (np.linalg.norm(p) + xtol)
        p, r, cost = p_new, r_new, cost_new
        lam = max(lam / 10.0, 1e-15)
        if small or cost == 0.0:
            converged = True
            break
    return _Solution(p, jacobian(p), cost, it, converged)


def _covariance(jac: np.ndarray, chi2_red: float) -> tuple[np.ndarray, list[int]]:
    """Scaled (J^T J)^-1 and the indices of parameters the data do not constrain."""
    A = jac.T @ jac
    scale = np.sqrt(np.diag(A))
    norm = scale.max() if scale.size else 1.0
    weak = [i for i, s in enumerate(scale) if s <= 1e-8 * norm]
    safe = np.where(scale > 0, scale, 1.0)
    An = A / np.outer(safe, safe)
    u, s, vt = np.linalg.svd(An)
    cutoff = 1e-12 * s.max()
    inv_s = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    cov_n = (vt.T * inv_s) @ vt
    for k in np.nonzero(s <= cutoff)[0]:
        for i in np.nonzero(np.abs(vt[k]) > 0.1)[0]:
            if i not in weak:
                weak.append(int(i))
    cov = cov_n / np.outer(safe, safe) * chi2_red
    for i in weak:
        cov[i, :] = cov[:, i] = 0.0
        cov[i, i] = np.inf
    return cov, sorted(weak)


def _weights(fringe: FringePattern, weights) -> np.ndarray:
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if w.shape != fringe.values.shape or np.any(w < 0):
            raise InvalidInputError("weights must be nonnegative and match the fringe")
        return w
    if fringe.sigma is not None and np.all(fringe.sigma > 0):
        return 1.0 / fringe.sigma**2
    return 1.0 / np.maximum(np.abs(fringe.values), 1.0)


# ---------------------------------------------------------------------------
# models


def _noon(p, t):
    a, v, w, phi, gam = p
    env = np.exp(-gam * np.abs(t))
    c = np.cos(w * t + phi)
    return a * env * (1.0 + v * c)


def _noon_jac(p, t):
    a, v, w, phi, gam = p
    env = np.exp(-gam * np.abs(t))
    c = np.cos(w * t + phi)
    s = np.sin(w * t + phi)
    model = a * env * (1.0 + v * c)
    return np.column_stack(
        [env * (1.0 + v * c), a * env * c, -a * env * v * s * t, -a * env * v * s, -np.abs(t) * model]
    )


def _hom(p, t):
    b, v, g, d, t0 = p
    u = t - t0
    return b * (1.0 - v * np.exp(-g * np.abs(u)) * np.cos(d * u))


def _hom_jac(p, t):
    b, v, g, d, t0 = p
    u = t - t0
    e = np.exp(-g * np.abs(u))
    c, s = np.cos(d * u), np.sin(d * u)
    return np.column_stack(
        [
            1.0 - v * e * c,
            -b * e * c,
            b * v * np.abs(u) * e * c,
            b * v * e * s * u,
            -b * v * e * (g * np.sign(u) * c + d * s),
        ]
    )


def evaluate_model(params: NoonFitParams | HomFitParams, delays: DelayGrid) -> FringePattern:
    """Evaluate a fitted model on a delay grid (NOON or HOM fringe)."""
    tau = delays.points
    if isinstance(params, NoonFitParams):
        p = (params.amplitude, params.visibility, params.omega, params.phase, params.gamma)
        return FringePattern(delays, _noon(p, tau), "NOON", metadata={"model": "noon"})
    if isinstance(params, HomFitParams):
        p = (params.baseline, params.visibility, params.gamma_total, params.delta, params.center)
        return FringePattern(delays, _hom(p, tau), "HOM", metadata={"model": "hom"})
    raise InvalidInputError(f"cannot evaluate {type(params).__name__}")


# ---------------------------------------------------------------------------
# helpers


def dominant_frequency(values: np.ndarray, step: float, pad: int = 16) -> tuple[float, float]:
    """Angular frequency of the strongest non-DC component and its relative strength.

    Zero-padded periodogram with parabolic refinement of the peak bin.
    """
    y = values - np.mean(values)
    n_pad = pad * y.size
    mag = np.abs(np.fft.rfft(y, n_pad))
    mag[0] = 0.0
    k = int(np.argmax(mag))
    strength = float(mag[k] / max(np.sum(np.abs(values)), 1e-300))
    if 0 < k < mag.size - 1:
        a, b, c = np.log(np.maximum(mag[k - 1:k + 2], 1e-300))
        den = a - 2 * b + c
        shift = 0.5 * (a - c) / den if den != 0 else 0.0
    else:
        shift = 0.0
    return 2.0 * np.pi * (k + shift) / (n_pad * step), strength


def _canonical_phase(phi: float) -> float:
    return float((phi + math.pi) % (2.0 * math.pi) - math.pi)


# ---------------------------------------------------------------------------
# fits


def fit_noon_oscillation(
    fringe: FringePattern,
    weights=None,
    gamma: float | None = None,
    max_iter: int = MAX_ITER,
) -> FitReport:
    """Fit A exp(-gamma |tau|) (1 + V cos(omega tau + phi)) to a fine scan.

    ``gamma=None`` fits the decay rate; a number holds it fixed (the fine stage
    of the two-stage protocol typically fixes it, often at 0, because a short
    scan around zero delay cannot see the envelope). The initial omega comes
    from the periodogram peak; the fit is started from 8 phases and the lowest
    chi-square wins.
    """
    tau = fringe.delays
    y = fringe.values
    w = _weights(fringe, weights)
    n = y.size
    tscale = float(np.max(np.abs(tau))) or fringe.grid.step
    yscale = float(np.max(np.abs(y))) or 1.0
    t = tau / tscale
    ys = y / yscale
    sw = np.sqrt(w) * yscale
    flags: list[str] = []

    nyquist = math.pi / fringe.grid.step
    omega0, strength = dominant_frequency(y, fringe.grid.step)
    no_oscillation = strength < 1e-9
    if no_oscillation:
        omega0 = 0.5 * nyquist
        flags.append("no-oscillation-detected")
    else:
        if omega0 > 0.8 * nyquist:
            raise AliasingRiskError(
                f"oscillation at {omega0:.4g} rad/s is above 80% of Nyquist ({nyquist:.4g} rad/s)"
            )
        samples_per_period = 2.0 * math.pi / (omega0 * fringe.grid.step)
        periods = omega0 * fringe.grid.span / (2.0 * math.pi)
        if samples_per_period < 4:
            flags.append("fewer-than-4-samples-per-period")
        if periods < 3:
            flags.append("fewer-than-3-periods")

    free_gamma = gamma is None
    g_fixed = 0.0 if free_gamma else float(gamma) * tscale
    a0 = float(np.average(ys, weights=w)) or 1.0
    v0 = float(np.clip((ys.max() - ys.min()) / max(ys.max() + ys.min(), 1e-300), 0.05, 1.0))
    g0 = 0.1 if free_gamma else g_fixed

    def full(q):
        return np.array([q[0], q[1], q[2], q[3], q[4] if free_gamma else g_fixed])

    def residual(q):
        return sw * (_noon(full(q), t) - ys)

    def jacobian(q):
        J = _noon_jac(full(q), t)
        if not free_gamma:
            J = J[:, :4]
        return sw[:, None] * J

    best = None
    for k in range(N_PHASE_STARTS):
        q0 = [a0, v0, omega0 * tscale, 2.0 * math.pi * k / N_PHASE_STARTS]
        if free_gamma:
            q0.append(g0)
        sol = _levenberg_marquardt(residual, jacobian, np.array(q0), max_iter=max_iter)
        if best is None or sol.cost < best.cost:
            best = sol

    q = best.p.copy()
    if q[1] < 0:
        q[1] = -q[1]
        q[3] += math.pi
    if q[2] < 0:
        q[2] = -q[2]
        q[3] = -q[3]
    names = ["amplitude", "visibility", "omega", "phase"] + (["gamma"] if free_gamma else [])
    dof = max(n - len(names), 1)
    chi2_red = best.cost / dof
    J = jacobian(q)
    cov_s, weak = _covariance(J, chi2_red)
    scale = np.array([yscale, 1.0, 1.0 / tscale, 1.0] + ([1.0 / tscale] if free_gamma else []))
    cov = cov_s * np.outer(scale, scale)
    cov = np.where(np.isnan(cov), 0.0, cov)

    vis = float(q[1])
    if vis > 1.0:
        flags.append("near-boundary:visibility")
        vis = 1.0
    sig_v = math.sqrt(cov[1, 1]) if np.isfinite(cov[1, 1]) else math.inf
    if no_oscillation or vis <= 3.0 * sig_v or vis < 1e-6:
        for nm in ("omega", "phase"):
            flags.append(f"unidentifiable:{nm}")
    for i in weak:
        tag = f"unidentifiable:{names[i]}"
        if tag not in flags:
            flags.append(tag)
    gam = float(q[4]) / tscale if free_gamma else float(gamma)
    if free_gamma and gam < 0:
        flags.append("near-boundary:gamma")
        gam = 0.0
    params = NoonFitParams(
        gamma=gam,
        visibility=vis,
        omega=float(q[2]) / tscale,
        phase=_canonical_phase(q[3]),
        amplitude=float(q[0]) * yscale,
    )
    if not best.converged:
        flags.append("not-converged")
    return FitReport(params, names, cov, chi2_red, best.iterations, best.converged, "noon", flags, dof)


def fit_envelope(
    coarse_fringe: FringePattern,
    visibility: float,
    omega: float,
    baseline: float | None = None,
    center: float = 0.0,
    max_iter: int = MAX_ITER,
) -> FitReport:
    """Decay rate from a coarse (sub-Nyquist) NOON scan with V and omega held fixed.

    A coarse scan samples the oscillation at effectively random phase, so the
    relative deviation d = I/B - 1 scatters inside +/- V exp(-gamma |tau|). The
    fit uses its noise-corrected second moment, d**2 - (sigma/B)**2, whose
    expectation is a exp(-2 gamma |tau|), with iteratively updated weights.
    ``baseline`` defaults to the mean count level of the scan.
    """
    tau = coarse_fringe.delays - center
    y = coarse_fringe.values
    if baseline is None:
        baseline = float(np.mean(y))
    if not baseline > 0:
        raise InvalidInputError("baseline must be > 0")
    if coarse_fringe.sigma is not None:
        var = (coarse_fringe.sigma / baseline) ** 2
    else:
        var = np.zeros_like(y)
    d = y / baseline - 1.0
    m2 = d * d - var
    t_abs = np.abs(tau)
    tscale = float(t_abs.max()) or 1.0
    t = t_abs / tscale

    # log-linear start on the points with a clearly positive moment
    pos = m2 > 0
    if np.count_nonzero(pos) >= 2 and np.ptp(t[pos]) > 0:
        slope, icpt = np.polyfit(t[pos], np.log(m2[pos]), 1)
        q = np.array([math.exp(icpt), max(-0.5 * slope, 1e-3)])
    else:
        q = np.array([max(float(np.mean(m2)), 1e-12), 1e-3])

    def model(p):
        return p[0] * np.exp(-2.0 * p[1] * t)

    sol = None
    for _ in range(4):
        mod = np.maximum(model(q), 0.0)
        var_m = 2.0 * var**2 + 4.0 * var * mod + 0.5 * mod**2
        sw = 1.0 / np.sqrt(np.maximum(var_m, 1e-30 * max(float(np.max(var_m)), 1e-300)))

        def residual(p, sw=sw):
            return sw * (model(p) - m2)

        def jacobian(p, sw=sw):
            e = np.exp(-2.0 * p[1] * t)
            return sw[:, None] * np.column_stack([e, -2.0 * t * p[0] * e])

        sol = _levenberg_marquardt(residual, jacobian, q, max_iter=max_iter)
        q = sol.p
    n = y.size
    dof = max(n - 2, 1)
    chi2_red = sol.cost / dof
    cov_s, weak = _covariance(sol.jac, chi2_red)
    scale = np.array([1.0, 1.0 / tscale])
    cov = cov_s * np.outer(scale, scale)
    gam = float(q[1]) / tscale
    sig = math.sqrt(cov[1, 1]) if np.isfinite(cov[1, 1]) else math.inf
    flags = []
    span = 2.0 * float(t_abs.max())
    if gam <= 2.0 * sig:
        flags.append("near-boundary:gamma")
    else:
        if span * gam < 1.0:
            raise UnderconstrainedError(
                f"scan span {span:.3g} s is shorter than one decay time {1.0 / gam:.3g} s"
            )
        if span * gam < 2.0:
            flags.append("scan-shorter-than-2-decay-times")
    if not sol.converged:
        flags.append("not-converged")
    params = NoonFitParams(
        gamma=max(gam, 0.0), visibility=float(visibility), omega=float(omega), phase=0.0, amplitude=baseline
    )
    return FitReport(
        params, ["envelope_moment", "gamma"], cov, chi2_red, sol.iterations, sol.converged, "envelope", flags, dof
    )


def fit_hom_dip(fringe: FringePattern, weights=None, max_iter: int = MAX_ITER) -> FitReport:
    """Fit B [1 - V exp(-G |tau - tau0|) cos(D (tau - tau0))] to a HOM scan.

    The reported visibility is (B - P_min) / B, which for this model equals V.
    Start values come from a grid over (G, D) with B and B V solved linearly.
    """
    tau = fringe.delays
    y = fringe.values
    w = _weights(fringe, weights)
    n = y.size
    if n < 7:
        raise InvalidInputError("need at least 7 samples for a HOM fit")
    tscale = float(np.max(np.abs(tau - np.mean(tau)))) or fringe.grid.step
    yscale = float(np.max(np.abs(y))) or 1.0
    t = tau / tscale
    ys = y / yscale
    sw = np.sqrt(w) * yscale

    kernel = np.ones(3) / 3.0
    smooth = np.convolve(ys, kernel, mode="same")
    smooth[0], smooth[-1] = ys[0], ys[-1]
    i_min = int(np.argmin(smooth))
    n_tail = max(2, n // 10)
    b0 = float(np.mean(np.concatenate([ys[:n_tail], ys[-n_tail:]])))
    if i_min < 2 or i_min > n - 3 or smooth[i_min] >= b0:
        raise DipNotFoundError("no interior minimum below the baseline in the scanned range")
    t0 = t[i_min]

    step_s = fringe.grid.step / tscale
    d_fft, strength = dominant_frequency(b0 - ys, fringe.grid.step)
    d_candidates = {0.0}
    if strength > 1e-9:
        d_candidates.add(d_fft * tscale)
    g_candidates = np.geomspace(1.0 / (t.max() - t.min()), 0.5 / step_s, 16)

    best_lin = None
    for d in sorted(d_candidates):
        for g in g_candidates:
            for tc in (t0 - step_s, t0, t0 + step_s):
                h = np.exp(-g * np.abs(t - tc)) * np.cos(d * (t - tc))
                X = np.column_stack([np.ones(n), -h]) * sw[:, None]
                coef, *_ = np.linalg.lstsq(X, sw * ys, rcond=None)
                cost = float(np.sum((X @ coef - sw * ys) ** 2))
                if coef[0] > 0 and (best_lin is None or cost < best_lin[0]):
                    best_lin = (cost, coef[0], coef[1] / coef[0], g, d, tc)
    _, b_i, v_i, g_i, d_i, tc_i = best_lin

    def residual(q):
        return sw * (_hom(q, t) - ys)

    def jacobian(q):
        return sw[:, None] * _hom_jac(q, t)

    sol = _levenberg_marquardt(residual, jacobian, np.array([b_i, v_i, g_i, d_i, tc_i]), max_iter=max_iter)
    q = sol.p.copy()
    q[3] = abs(q[3])
    names = ["baseline", "visibility", "gamma_total", "delta", "center"]
    dof = max(n - 5, 1)
    chi2_red = sol.cost / dof
    cov_s, weak = _covariance(jacobian(q), chi2_red)
    scale = np.array([yscale, 1.0, 1.0 / tscale, 1.0 / tscale, tscale])
    cov = cov_s * np.outer(scale, scale)
    cov = np.where(np.isnan(cov), 0.0, cov)
    flags = [f"unidentifiable:{names[i]}" for i in weak]
    sig_d = math.sqrt(cov[3, 3]) if np.isfinite(cov[3, 3]) else math.inf
    if q[3] / tscale <= 2.0 * sig_d and "unidentifiable:delta" not in flags:
        flags.append("unidentifiable:delta")
    vis = float(q[1])
    if not 0.0 <= vis <= 1.0:
        flags.append("near-boundary:visibility")
        vis = min(max(vis, 0.0), 1.0)
    if not sol.converged:
        flags.append("not-converged")
    params = HomFitParams(
        delta=float(q[3]) / tscale,
        gamma_total=abs(float(q[2])) / tscale,
        visibility=vis,
        baseline=float(q[0]) * yscale,
        center=float(q[4]) * tscale,
    )
    return FitReport(params, names, cov, chi2_red, sol.iterations, sol.converged, "hom", flags, dof)


def combine_two_stage(fine: FitReport, envelope: FitReport) -> NoonFitParams:
    """omega, V (and phase, amplitude) from the fine scan; gamma from the coarse envelope."""
    p = fine.params
    return NoonFitParams(
        gamma=envelope.params.gamma,
        visibility=p.visibility,
        omega=p.omega,
        phase=p.phase,
        amplitude=p.amplitude,
    )


def params_to_dict(params) -> dict:
    return asdict(params)


def params_from_dict(model: str, data: dict):
    cls = HomFitParams if model == "hom" else NoonFitParams
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise InvalidInputError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**{k: float(v) for k, v in data.items()})
