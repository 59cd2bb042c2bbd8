"""Command-line interface: ``qfts {model,fringe,simulate,fit,reconstruct,reproduce}``.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure
(non-convergence, aliasing), 4 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import shlex
import sys
from pathlib import Path

from . import __version__
from . import io as qio
from .coincidence import METHODS, SourceConfig, scan_experiment
from .errors import AliasingRiskError, FormatError, InvalidInputError, QFTSError
from .fitting import fit_envelope, fit_hom_dip, fit_noon_oscillation
from .interference import fringe_pattern, marginal_spectrum, nyquist_ok, with_visibility
from .jsa_models import BiexcitonModelParams, build_biexciton_jsd, build_gaussian_jsd, model_marginal
from .pipeline import (
    SCENARIOS,
    PipelineConfig,
    ScanSpec,
    analytic_spectrum_of_fit,
    fft_of_fit,
    load_params_file,
    metrics_summary,
    resolve_preset,
    run_fig3,
    run_fig4,
    two_stage_report,
)
from .reconstruction import BASELINES, WINDOWS, ReconstructionConfig, reconstruct_spectrum
from .spectral_core import HBAR_EV, DelayGrid

log = logging.getLogger("qfts")


class _Context:
    def __init__(self, args, argv):
        self.args = args
        self.command_line = "qfts " + shlex.join(argv)
        self.config = PipelineConfig()
        if args.config:
            self.config = PipelineConfig.from_dict(qio.read_json(args.config))
        self.seed = args.seed if args.seed is not None else self.config.seed
        if self.seed < 0:
            raise InvalidInputError("--seed must be a nonnegative integer")
        self.out_dir = Path(args.out_dir if args.out_dir is not None else self.config.out_dir)

    def out(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else self.out_dir / p

    def say(self, msg: str):
        log.info(msg)


# ---------------------------------------------------------------------------
# helpers


def _model_params(ctx: _Context, preset: str | None, params_file: str | None):
    if preset and params_file:
        raise InvalidInputError("give either --preset or --params, not both")
    if params_file:
        return load_params_file(params_file)
    if preset:
        return resolve_preset(preset)
    return ctx.config.model_params()


def _delay_grid(ctx: _Context, args) -> DelayGrid:
    spec = ctx.config.scan
    half = args.half_span_ps * 1e-12 if args.half_span_ps is not None else (spec.half_span if spec else None)
    if args.points is not None:
        if half is None:
            raise InvalidInputError("--points needs --half-span-ps (or a scan in --config)")
        if args.points < 3:
            raise InvalidInputError("--points must be >= 3")
        return DelayGrid.symmetric(half, args.points)
    step = args.step_fs * 1e-15 if args.step_fs is not None else (spec.step if spec else None)
    if half is None or step is None:
        raise InvalidInputError("define the scan with --half-span-ps and --step-fs (or --points), or a scan in --config")
    return ScanSpec(half, step).grid()


def _recon_config(ctx: _Context, args) -> ReconstructionConfig:
    base = ctx.config.reconstruction
    return ReconstructionConfig(
        baseline_strategy=args.baseline or base.baseline_strategy,
        window=args.window or base.window,
        zero_pad_factor=args.zero_pad if args.zero_pad is not None else base.zero_pad_factor,
    )


# ---------------------------------------------------------------------------
# commands


def cmd_model(ctx: _Context, args) -> int:
    params = _model_params(ctx, args.preset, args.params)
    if isinstance(params, BiexcitonModelParams):
        jsd = build_biexciton_jsd(params)
        ctx.say(f"sum-frequency peak {params.omega_xx * HBAR_EV:.4f} eV, beat {params.delta / (2 * math.pi) / 1e12:.3f} THz")
    else:
        jsd = build_gaussian_jsd(params)
    path = qio.write_jsd(ctx.out(args.out), jsd, ctx.command_line)
    ctx.say(f"wrote {path}")
    return 0


def cmd_fringe(ctx: _Context, args) -> int:
    delays = _delay_grid(ctx, args)
    axis = "sum" if args.sign == "plus" else "diff"
    if args.jsd:
        if args.preset or args.params:
            raise InvalidInputError("give either --jsd or a model (--preset/--params), not both")
        spectrum = marginal_spectrum(qio.read_jsd(args.jsd), axis)
    else:
        params = _model_params(ctx, args.preset, args.params)
        reach = max(abs(delays.start), abs(delays.stop))
        spectrum = model_marginal(params, axis, max_delay=reach)
    if not args.allow_undersampled and not nyquist_ok(spectrum, delays):
        raise AliasingRiskError(
            f"delay step {delays.step:.4g} s undersamples the {axis}-frequency peak "
            "(above 80% of Nyquist); refine the step or pass --allow-undersampled"
        )
    fringe = fringe_pattern(spectrum, delays, args.sign)
    if args.visibility != 1.0:
        fringe = with_visibility(fringe, args.visibility)
    path = qio.write_fringe_csv(ctx.out(args.out), fringe, ctx.command_line)
    ctx.say(f"wrote {path} ({delays.count} points, {fringe.kind})")
    return 0


def cmd_simulate(ctx: _Context, args) -> int:
    fringe = qio.read_fringe_csv(args.fringe)
    dwell = args.dwell if args.dwell is not None else (ctx.config.scan.dwell if ctx.config.scan else 5.0)
    source = SourceConfig.from_rates(
        args.coincidence_rate,
        args.singles_rate,
        detector_efficiency_1=args.efficiency,
        detector_efficiency_2=args.efficiency,
        timing_jitter_sigma=args.jitter_ns * 1e-9,
        dwell_time=dwell,
        rep_rate=args.rep_rate,
    )
    result = scan_experiment(
        source, fringe, ctx.seed, method=args.method, subtract_accidentals=not args.raw,
        keep_histograms=args.histograms,
    )
    scan, hists = result if args.histograms else (result, None)
    path = qio.write_fringe_csv(ctx.out(args.out), scan, ctx.command_line, value_unit="counts")
    if hists is not None:
        width = len(str(len(hists) - 1))
        for i, h in enumerate(hists):
            qio.write_histogram(ctx.out(f"histograms/point_{i:0{width}d}.csv"), h, ctx.command_line)
    ctx.say(f"wrote {path} (seed {ctx.seed}, method {args.method})")
    return 0


def cmd_fit(ctx: _Context, args) -> int:
    data = qio.read_fringe_csv(args.data)
    protocol = args.protocol or ("hom" if data.kind == "HOM" else "noon")
    if protocol == "hom":
        report = fit_hom_dip(data)
    elif protocol == "noon":
        report = fit_noon_oscillation(data, gamma=args.gamma)
    elif protocol == "envelope":
        if args.fine_report:
            fine = qio.read_fit_report(args.fine_report)
            visibility, omega = fine.params.visibility, fine.params.omega
        elif args.visibility is not None and args.omega is not None:
            visibility, omega = args.visibility, args.omega
        else:
            raise InvalidInputError("the envelope protocol needs --fine-report or both --visibility and --omega")
        report = fit_envelope(data, visibility, omega)
    else:  # two-stage
        if not args.coarse:
            raise InvalidInputError("the two-stage protocol needs --coarse <coarse scan CSV>")
        coarse = qio.read_fringe_csv(args.coarse)
        fine = fit_noon_oscillation(data, gamma=0.0 if args.gamma is None else args.gamma)
        env = fit_envelope(coarse, fine.params.visibility, fine.params.omega)
        stem = Path(args.out).stem
        qio.write_fit_report(ctx.out(f"{stem}_fine.json"), fine)
        qio.write_fit_report(ctx.out(f"{stem}_envelope.json"), env)
        report = two_stage_report(fine, env)
    path = qio.write_fit_report(ctx.out(args.out), report)
    if not report.converged:
        log.warning("fit did not converge; see flags in %s", path)
    ctx.say(f"wrote {path} (model {report.model}, converged {report.converged})")
    return 0


def cmd_reconstruct(ctx: _Context, args) -> int:
    if bool(args.fringe) == bool(args.fit_report):
        raise InvalidInputError("give exactly one of --fringe or --fit-report")
    if args.fringe:
        spectrum = reconstruct_spectrum(qio.read_fringe_csv(args.fringe), _recon_config(ctx, args))
        route = "fft"
    else:
        report = qio.read_fit_report(args.fit_report)
        route = args.route
        spectrum = analytic_spectrum_of_fit(report.params) if route == "analytic" else fft_of_fit(report.params)
    spath = qio.write_spectrum_csv(ctx.out(args.out), spectrum, ctx.command_line)
    metrics = {"format": "metrics", "route": route, **metrics_summary(spectrum)}
    mpath = qio.write_json(ctx.out(args.metrics), metrics)
    ctx.say(f"wrote {spath} and {mpath}: peak {metrics['peak_THz']:.4f} THz, FWHM {metrics['fwhm_THz']:.4f} THz")
    return 0


def cmd_reproduce(ctx: _Context, args) -> int:
    out = ctx.out(args.figure)
    cl = ctx.command_line
    if args.figure == "fig3":
        r = run_fig3(seed=ctx.seed, method=args.method)
        qio.write_fringe_csv(out / "hom_fringe_ideal.csv", r.ideal, cl)
        qio.write_fringe_csv(out / "hom_scan.csv", r.scan, cl, value_unit="counts")
        qio.write_fit_report(out / "hom_fit.json", r.fit)
        qio.write_spectrum_csv(out / "diff_spectrum_fft.csv", r.spectrum_fft, cl)
        qio.write_spectrum_csv(out / "diff_spectrum_analytic.csv", r.spectrum_analytic, cl)
        metrics = r.metrics
        ctx.say(
            f"fig3: peak {metrics['peak_THz']:.3f} THz, FWHM {metrics['fwhm_THz']:.3f} THz, "
            f"V {metrics['visibility']:.3f}"
        )
    else:
        r = run_fig4(seed=ctx.seed, scenario=args.scenario, method=args.method)
        qio.write_fringe_csv(out / "noon_fine_ideal.csv", r.fine_ideal, cl)
        qio.write_fringe_csv(out / "noon_fine_scan.csv", r.fine, cl, value_unit="counts")
        qio.write_fringe_csv(out / "noon_coarse_scan.csv", r.coarse, cl, value_unit="counts")
        qio.write_fit_report(out / "fit_fine.json", r.fine_fit)
        qio.write_fit_report(out / "fit_envelope.json", r.envelope_fit)
        qio.write_fit_report(out / "fit_combined.json", r.combined_report)
        qio.write_spectrum_csv(out / "sum_spectrum_analytic.csv", r.spectrum_analytic, cl)
        if r.spectrum_fft is not None:
            qio.write_spectrum_csv(out / "sum_spectrum_fft.csv", r.spectrum_fft, cl)
        metrics = r.metrics
        ctx.say(
            f"fig4 ({args.scenario}): period {metrics['period_nm']:.2f} +/- {metrics['period_sigma_nm']:.2f} nm, "
            f"V {metrics['visibility']:.3f}, coherence {metrics['coherence_time_ps']:.2f} ps, "
            f"FWHM {metrics['sum_fwhm_meV']:.4f} meV"
        )
    qio.write_json(out / "metrics.json", {**metrics, "command": cl, "qfts_version": __version__})
    ctx.say(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _global_flags(parser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="RNG seed (default 0 or the config's seed)")
    parser.add_argument("--out-dir", default=default, help="output directory (default qfts-out)")
    parser.add_argument("--config", default=default, help="pipeline config JSON, validated before running")
    parser.add_argument("--quiet", action="store_true", default=default, help="only report errors")


def _scan_flags(p):
    p.add_argument("--half-span-ps", type=float, help="scan half-width in ps")
    p.add_argument("--step-fs", type=float, help="delay step in fs")
    p.add_argument("--points", type=int, help="number of delay points (alternative to --step-fs)")


def _recon_flags(p):
    p.add_argument("--baseline", choices=BASELINES)
    p.add_argument("--window", choices=WINDOWS)
    p.add_argument("--zero-pad", type=int, help="zero-padding factor, 1..64")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qfts", description="Two-photon interference spectroscopy toolkit")
    parser.add_argument("--version", action="version", version=f"qfts {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("model", help="build a joint spectral density")
    _global_flags(p, suppress=True)
    p.add_argument("--preset", help="cucl-default, cucl-as-measured, gaussian-test, or a QFTS_CONFIG_DIR preset")
    p.add_argument("--params", help="model parameters JSON")
    p.add_argument("--out", default="jsd.json")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("fringe", help="ideal HOM (minus) or NOON (plus) fringe")
    _global_flags(p, suppress=True)
    p.add_argument("--sign", choices=("plus", "minus"), required=True)
    p.add_argument("--jsd", help="JSD header written by 'model'")
    p.add_argument("--preset")
    p.add_argument("--params")
    _scan_flags(p)
    p.add_argument("--visibility", type=float, default=1.0)
    p.add_argument("--allow-undersampled", action="store_true",
                   help="permit steps above the Nyquist limit (coarse envelope scans)")
    p.add_argument("--out", default="fringe.csv")
    p.set_defaults(func=cmd_fringe)

    p = sub.add_parser("simulate", help="Monte Carlo coincidence scan of a fringe")
    _global_flags(p, suppress=True)
    p.add_argument("--fringe", required=True)
    p.add_argument("--coincidence-rate", type=float, default=1600.0, help="pair coincidences/s at P = 1/2")
    p.add_argument("--singles-rate", type=float, default=650e3, help="singles/s per detector")
    p.add_argument("--efficiency", type=float, default=0.1, help="detector efficiency (both)")
    p.add_argument("--jitter-ns", type=float, default=0.3, help="per-detector timing jitter sigma, ns")
    p.add_argument("--dwell", type=float, help="seconds per delay point (default 5)")
    p.add_argument("--rep-rate", type=float, default=76e6, help="pump repetition rate, Hz")
    p.add_argument("--method", choices=METHODS, default="peaks")
    p.add_argument("--raw", action="store_true", help="report raw central-peak counts (no accidental subtraction)")
    p.add_argument("--histograms", action="store_true", help="also write every point's histogram")
    p.add_argument("--out", default="scan.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a fringe")
    _global_flags(p, suppress=True)
    p.add_argument("--data", required=True, help="fringe CSV (fine scan for two-stage)")
    p.add_argument("--protocol", choices=("hom", "noon", "envelope", "two-stage"))
    p.add_argument("--gamma", type=float, help="hold the NOON decay rate fixed (1/s)")
    p.add_argument("--coarse", help="coarse scan CSV for the two-stage protocol")
    p.add_argument("--fine-report", help="fine-scan FitReport supplying V and omega for the envelope fit")
    p.add_argument("--visibility", type=float)
    p.add_argument("--omega", type=float, help="rad/s")
    p.add_argument("--out", default="fit.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("reconstruct", help="spectrum from a fringe (FFT) or a FitReport")
    _global_flags(p, suppress=True)
    p.add_argument("--fringe")
    p.add_argument("--fit-report")
    p.add_argument("--route", choices=("analytic", "fft"), default="analytic", help="route for --fit-report")
    _recon_flags(p)
    p.add_argument("--out", default="spectrum.csv")
    p.add_argument("--metrics", default="metrics.json")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("reproduce", help="end-to-end figure data")
    _global_flags(p, suppress=True)
    p.add_argument("figure", choices=("fig3", "fig4"))
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="as-measured", help="fig4 only")
    p.add_argument("--method", choices=METHODS, default="peaks")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr, force=True
    )
    try:
        ctx = _Context(args, argv)
        return args.func(ctx, args)
    except QFTSError as exc:
        log.error("error: %s", exc)
        return exc.exit_code
    except OSError as exc:
        log.error("error: %s", exc)
        return FormatError.exit_code


if __name__ == "__main__":
    sys.exit(main())
