"""Presets, pipeline configuration and the two end-to-end reproduction scenarios.

``run_fig3`` simulates a noisy HOM scan of the biexciton source, fits the dip
and reconstructs the difference-frequency spectrum. ``run_fig4`` runs the
two-stage NOON protocol: a dense fine scan near zero delay fixes omega and V,
a sub-Nyquist coarse scan fixes the decay rate, and the sum-frequency
spectrum follows from the fitted model.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .coincidence import SourceConfig, scan_experiment
from .errors import InvalidInputError
from .fitting import (
    FitReport,
    HomFitParams,
    NoonFitParams,
    combine_two_stage,
    fit_envelope,
    fit_hom_dip,
    fit_noon_oscillation,
)
from .interference import fringe_pattern, with_visibility
from .jsa_models import BiexcitonModelParams, GaussianModelParams, model_marginal
from .reconstruction import (
    ReconstructionConfig,
    analytic_fit_spectrum,
    analytic_grid,
    reconstruct_spectrum,
    spectral_metrics,
    to_thz,
)
from .spectral_core import (
    HBAR_EV,
    DelayGrid,
    FringePattern,
    Spectrum,
    delay_to_path,
    path_to_delay,
    unit_convert,
)

CONFIG_DIR_ENV = "QFTS_CONFIG_DIR"

PRESETS = {
    "cucl-default": BiexcitonModelParams.cucl_default,
    "cucl-as-measured": BiexcitonModelParams.cucl_as_measured,
    "gaussian-test": GaussianModelParams.test_default,
}
# fig4 scenarios: the biexciton energy versus the sum energy implied by the measured period
SCENARIOS = {"nominal": "cucl-default", "as-measured": "cucl-as-measured"}
MODEL_CLASSES = {"biexciton": BiexcitonModelParams, "gaussian": GaussianModelParams}

FIG3_VISIBILITY = 0.61
FIG4_VISIBILITY = 0.82


# ---------------------------------------------------------------------------
# model parameters


def params_to_record(params) -> dict:
    model = "biexciton" if isinstance(params, BiexcitonModelParams) else "gaussian"
    return {"model": model, "units": "rad/s and 1/s", "params": asdict(params)}


def params_from_record(record: dict, source: str = "params"):
    """Model parameters from ``{"model": ..., "params": {...}}`` with field-level errors."""
    if not isinstance(record, dict):
        raise InvalidInputError(f"{source}: expected a JSON object")
    model = record.get("model")
    if model not in MODEL_CLASSES:
        raise InvalidInputError(f"{source}: field 'model' must be one of {sorted(MODEL_CLASSES)}, got {model!r}")
    cls = MODEL_CLASSES[model]
    raw = record.get("params")
    if not isinstance(raw, dict):
        raise InvalidInputError(f"{source}: field 'params' must be an object")
    names = [f.name for f in fields(cls)]
    unknown = sorted(set(raw) - set(names))
    if unknown:
        raise InvalidInputError(f"{source}: unknown field(s) {unknown} for model {model!r}")
    missing = [n for n in names if n not in raw]
    if missing:
        raise InvalidInputError(f"{source}: missing field(s) {missing} for model {model!r}")
    values = {}
    for n in names:
        v = raw[n]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise InvalidInputError(f"{source}: field 'params.{n}' must be a number, got {v!r}")
        values[n] = float(v)
    try:
        return cls(**values)
    except InvalidInputError as exc:
        raise InvalidInputError(f"{source}: {exc}") from exc


def config_search_path() -> list[Path]:
    raw = os.environ.get(CONFIG_DIR_ENV, "")
    return [Path(p) for p in raw.split(os.pathsep) if p]


def resolve_preset(name: str):
    """Built-in preset, or ``<name>.json`` found on the QFTS_CONFIG_DIR search path."""
    if name in PRESETS:
        return PRESETS[name]()
    for d in config_search_path():
        candidate = d / f"{name}.json"
        if candidate.is_file():
            try:
                record = json.loads(candidate.read_text())
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{candidate}: invalid JSON ({exc})") from exc
            return params_from_record(record, str(candidate))
    raise InvalidInputError(
        f"unknown preset {name!r}; built-ins are {sorted(PRESETS)}"
        + (f", searched {CONFIG_DIR_ENV}" if config_search_path() else "")
    )


def load_params_file(path) -> Any:
    path = Path(path)
    try:
        record = json.loads(path.read_text())
    except OSError as exc:
        from .errors import FormatError

        raise FormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid JSON ({exc})") from exc
    return params_from_record(record, str(path))


# ---------------------------------------------------------------------------
# pipeline configuration


@dataclass(frozen=True)
class ScanSpec:
    half_span: float  # s
    step: float  # s
    dwell: float = 5.0  # s

    def __post_init__(self):
        for name in ("half_span", "step", "dwell"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidInputError(f"scan.{name} must be a positive number, got {v!r}")
        if self.step > self.half_span:
            raise InvalidInputError("scan.step must not exceed scan.half_span")

    def grid(self) -> DelayGrid:
        n_half = int(round(self.half_span / self.step))
        return DelayGrid(-n_half * self.step, self.step, 2 * n_half + 1)


PROTOCOLS = ("two-stage", "single-stage")


@dataclass(frozen=True)
class PipelineConfig:
    model: Any = "cucl-default"  # preset name or {"model": ..., "params": {...}}
    scan: ScanSpec | None = None
    reconstruction: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    fit_protocol: str = "two-stage"
    seed: int = 0
    out_dir: str = "qfts-out"

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        """Validate every field against its owning module before anything runs."""
        if not isinstance(data, dict):
            raise InvalidInputError("config must be a JSON object")
        allowed = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise InvalidInputError(f"config: unknown field(s) {unknown}")
        kw: dict[str, Any] = {}
        if "model" in data:
            m = data["model"]
            if isinstance(m, str):
                resolve_preset(m)
            else:
                params_from_record(m, "config.model")
            kw["model"] = m
        if "scan" in data and data["scan"] is not None:
            s = data["scan"]
            if not isinstance(s, dict):
                raise InvalidInputError("config.scan must be an object")
            extra = sorted(set(s) - {"half_span", "step", "dwell"})
            if extra:
                raise InvalidInputError(f"config.scan: unknown field(s) {extra}")
            try:
                kw["scan"] = ScanSpec(**s)
            except TypeError as exc:
                raise InvalidInputError(f"config.scan: {exc}") from exc
        if "reconstruction" in data:
            r = data["reconstruction"]
            if not isinstance(r, dict):
                raise InvalidInputError("config.reconstruction must be an object")
            extra = sorted(set(r) - {f.name for f in fields(ReconstructionConfig)})
            if extra:
                raise InvalidInputError(f"config.reconstruction: unknown field(s) {extra}")
            kw["reconstruction"] = ReconstructionConfig(**r)
        if "fit_protocol" in data:
            if data["fit_protocol"] not in PROTOCOLS:
                raise InvalidInputError(f"config.fit_protocol must be one of {PROTOCOLS}")
            kw["fit_protocol"] = data["fit_protocol"]
        if "seed" in data:
            seed = data["seed"]
            if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
                raise InvalidInputError("config.seed must be a nonnegative integer")
            kw["seed"] = seed
        if "out_dir" in data:
            if not isinstance(data["out_dir"], str):
                raise InvalidInputError("config.out_dir must be a string")
            kw["out_dir"] = data["out_dir"]
        return cls(**kw)

    def model_params(self):
        if isinstance(self.model, str):
            return resolve_preset(self.model)
        return params_from_record(self.model, "config.model")


# ---------------------------------------------------------------------------
# shared steps


def ideal_fringe(params, delays: DelayGrid, sign: str, visibility: float = 1.0) -> FringePattern:
    """Forward fringe from the analytic marginal on a grid fine enough for ``delays``."""
    axis = "sum" if sign in ("plus", "+") else "diff"
    reach = max(abs(delays.start), abs(delays.stop))
    spec = model_marginal(params, axis, max_delay=reach)
    fringe = fringe_pattern(spec, delays, sign)
    return with_visibility(fringe, visibility) if visibility != 1.0 else fringe


def default_source(dwell: float = 5.0) -> SourceConfig:
    """Calibrated to 1600 coincidences/s at P = 1/2 and 650 kcps singles per detector."""
    return SourceConfig.from_rates(1600.0, 650e3, dwell_time=dwell)


def reproduced_noon_fringe(params: NoonFitParams, delays: DelayGrid) -> FringePattern:
    """Interference term of a fitted NOON model as an ideal fringe.

    P = 1/2 [1 + V exp(-gamma |tau|) cos(omega tau + phi)]. The fitted
    amplitude and the non-oscillating part only contribute at w = 0 and are
    left out so the FFT route sees the sum-frequency line alone.
    """
    t = delays.points
    g = params.visibility * np.exp(-params.gamma * np.abs(t)) * np.cos(params.omega * t + params.phase)
    return FringePattern(delays, 0.5 * (1.0 + g), "NOON", metadata={"source": "fit"})


def reproduced_hom_fringe(params: HomFitParams, delays: DelayGrid) -> FringePattern:
    """Fitted HOM dip as an ideal fringe, P = 1/2 [1 - V exp(-G |t|) cos(D t)], t = tau - tau0."""
    t = delays.points - params.center
    g = params.visibility * np.exp(-params.gamma_total * np.abs(t)) * np.cos(params.delta * t)
    return FringePattern(delays, 0.5 * (1.0 - g), "HOM", metadata={"source": "fit"})


def fft_of_fit(params, n_decay: float = 10.0, nyquist_fraction: float = 0.4, zero_pad_factor: int = 2) -> Spectrum:
    """FFT route on a fitted model, sampled densely over +/- n_decay decay lengths."""
    if isinstance(params, HomFitParams):
        center, gamma = params.delta, params.gamma_total
        reproduce = reproduced_hom_fringe
    else:
        center, gamma = params.omega, params.gamma
        reproduce = reproduced_noon_fringe
    if not gamma > 0:
        raise InvalidInputError("the FFT route needs a fitted decay rate > 0")
    step = nyquist_fraction * math.pi / max(center, gamma)
    n_half = int(math.ceil(n_decay / gamma / step))
    if n_half > 4_000_000:
        raise InvalidInputError("model needs more than 8e6 delay samples; use the analytic route")
    delays = DelayGrid(-n_half * step, step, 2 * n_half + 1)
    return reconstruct_spectrum(reproduce(params, delays), ReconstructionConfig(zero_pad_factor=zero_pad_factor))


def analytic_spectrum_of_fit(params) -> Spectrum:
    if isinstance(params, HomFitParams):
        grid = analytic_grid(params.delta, params.gamma_total)
    else:
        grid = analytic_grid(params.omega, params.gamma)
    return analytic_fit_spectrum(params, grid)


def two_stage_report(fine: FitReport, envelope: FitReport) -> FitReport:
    """Combined NOON report: V, omega (and their covariance) from the fine fit, gamma from the envelope."""
    params = combine_two_stage(fine, envelope)
    names = ["visibility", "omega", "gamma"]
    cov = np.zeros((3, 3))
    idx = [fine.names.index(n) for n in names[:2]]
    cov[:2, :2] = fine.covariance[np.ix_(idx, idx)]
    g = envelope.names.index("gamma")
    cov[2, 2] = envelope.covariance[g, g]
    flags = [f"fine:{f}" for f in fine.flags] + [f"envelope:{f}" for f in envelope.flags]
    return FitReport(
        params, names, cov, fine.reduced_chi_square, fine.iterations + envelope.iterations,
        fine.converged and envelope.converged, "noon-two-stage", flags, fine.dof,
    )


def metrics_summary(spectrum: Spectrum) -> dict:
    m = spectral_metrics(spectrum)
    return {
        **m.to_record(),
        "peak_THz": to_thz(m.peak_frequency),
        "fwhm_THz": to_thz(m.fwhm),
        "peak_eV": m.peak_frequency * HBAR_EV,
        "fwhm_meV": m.fwhm * HBAR_EV * 1e3,
        "bin_rad_s": spectrum.grid.step,
    }


# ---------------------------------------------------------------------------
# fig3: HOM scan, dip fit, difference-frequency spectrum


FIG3_SCAN = ScanSpec(half_span=6e-12, step=0.05e-12, dwell=5.0)


@dataclass
class Fig3Result:
    ideal: FringePattern
    scan: FringePattern
    fit: FitReport
    spectrum_fft: Spectrum
    spectrum_analytic: Spectrum
    metrics: dict


def run_fig3(
    seed: int = 0,
    params=None,
    visibility: float = FIG3_VISIBILITY,
    scan: ScanSpec = FIG3_SCAN,
    source: SourceConfig | None = None,
    config: ReconstructionConfig | None = None,
    method: str = "peaks",
) -> Fig3Result:
    params = params or BiexcitonModelParams.cucl_default()
    source = source or default_source(scan.dwell)
    config = config or ReconstructionConfig(baseline_strategy="tail_mean")
    ideal = ideal_fringe(params, scan.grid(), "minus", visibility)
    data = scan_experiment(source, ideal, seed, method=method)
    fit = fit_hom_dip(data)
    spec_fft = reconstruct_spectrum(data, config)
    p = fit.params
    spec_an = analytic_spectrum_of_fit(p)
    fft_m = metrics_summary(spec_fft)
    an_m = metrics_summary(spec_an)
    metrics = {
        "format": "metrics",
        "figure": "fig3",
        "seed": seed,
        "peak_THz": fft_m["peak_THz"],
        "fwhm_THz": fft_m["fwhm_THz"],
        "visibility": p.visibility,
        "visibility_sigma": fit.sigma("visibility"),
        "fft_route": fft_m,
        "analytic_route": an_m,
        "fit": {
            "delta_THz": to_thz(p.delta),
            "gamma_total_per_s": p.gamma_total,
            "reduced_chi_square": fit.reduced_chi_square,
            "flags": list(fit.flags),
        },
        "beat_period_path_um": delay_to_path(2 * math.pi / p.delta) * 1e6,
    }
    return Fig3Result(ideal, data, fit, spec_fft, spec_an, metrics)


# ---------------------------------------------------------------------------
# fig4: two-stage NOON protocol, sum-frequency spectrum


FIG4_FINE = ScanSpec(half_span=path_to_delay(400e-9), step=path_to_delay(20e-9), dwell=5.0)
FIG4_COARSE = ScanSpec(half_span=path_to_delay(5.2e-3), step=path_to_delay(5e-6), dwell=5.0)


@dataclass
class Fig4Result:
    fine_ideal: FringePattern
    fine: FringePattern
    coarse: FringePattern
    fine_fit: FitReport
    envelope_fit: FitReport
    combined: NoonFitParams
    combined_report: FitReport
    spectrum_analytic: Spectrum
    spectrum_fft: Spectrum | None
    metrics: dict


def run_fig4(
    seed: int = 0,
    scenario: str = "as-measured",
    visibility: float = FIG4_VISIBILITY,
    fine: ScanSpec = FIG4_FINE,
    coarse: ScanSpec = FIG4_COARSE,
    source: SourceConfig | None = None,
    method: str = "peaks",
    with_fft: bool = True,
) -> Fig4Result:
    if scenario not in SCENARIOS:
        raise InvalidInputError(f"scenario must be one of {sorted(SCENARIOS)}, got {scenario!r}")
    params = resolve_preset(SCENARIOS[scenario])
    fine_ideal = ideal_fringe(params, fine.grid(), "plus", visibility)
    coarse_ideal = ideal_fringe(params, coarse.grid(), "plus", visibility)
    src_fine = source or default_source(fine.dwell)
    src_coarse = source or default_source(coarse.dwell)
    # independent seed streams for the two scans
    fine_data = scan_experiment(src_fine, fine_ideal, seed, method=method)
    coarse_data = scan_experiment(src_coarse, coarse_ideal, seed + 1_000_003, method=method)

    fine_fit = fit_noon_oscillation(fine_data, gamma=0.0)
    env_fit = fit_envelope(coarse_data, fine_fit.params.visibility, fine_fit.params.omega)
    combined = combine_two_stage(fine_fit, env_fit)
    spec_an = analytic_spectrum_of_fit(combined)
    spec_fft = fft_of_fit(combined) if with_fft else None

    w = fine_fit.params.omega
    w_sig = fine_fit.sigma("omega")
    period_nm = delay_to_path(2 * math.pi / w) * 1e9
    period_sig_nm = period_nm * w_sig / w
    an_m = metrics_summary(spec_an)
    metrics = {
        "format": "metrics",
        "figure": "fig4",
        "scenario": scenario,
        "seed": seed,
        "period_nm": period_nm,
        "period_sigma_nm": period_sig_nm,
        "two_photon_energy_eV": unit_convert(period_nm, "nm", "eV"),
        "two_photon_energy_sigma_eV": unit_convert(period_nm, "nm", "eV") * period_sig_nm / period_nm,
        "visibility": fine_fit.params.visibility,
        "visibility_sigma": fine_fit.sigma("visibility"),
        "gamma_per_s": env_fit.params.gamma,
        "gamma_sigma_per_s": env_fit.sigma("gamma"),
        "coherence_time_ps": 1e12 / env_fit.params.gamma if env_fit.params.gamma > 0 else math.inf,
        "sum_fwhm_meV": an_m["fwhm_meV"],
        "sum_fwhm_expected_meV": 2.0 * env_fit.params.gamma * HBAR_EV * 1e3,
        "analytic_route": an_m,
        "fine_flags": list(fine_fit.flags),
        "envelope_flags": list(env_fit.flags),
    }
    if spec_fft is not None:
        metrics["fft_route"] = metrics_summary(spec_fft)
    report = two_stage_report(fine_fit, env_fit)
    return Fig4Result(fine_ideal, fine_data, coarse_data, fine_fit, env_fit, combined, report, spec_an, spec_fft, metrics)
