"""CSV and JSON readers/writers with schema checks.

Every CSV starts with a block of ``# key: value`` comment lines (toolkit
version, command line, units, exact grid parameters) followed by one column
header line and the data. Floats are written with 17 significant digits so a
write/read round trip reproduces every float64 exactly. The body (header
line plus data) depends only on the data, never on the command line or
paths, so reruns give byte-identical bodies.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .coincidence import HistogramData
from .errors import FormatError, QFTSError
from .fitting import FitReport, HomFitParams, NoonFitParams, params_from_dict, params_to_dict
from .jsa_models import JointSpectralDensity
from .reconstruction import SpectralMetrics
from .spectral_core import DelayGrid, FrequencyGrid, FringePattern, Spectrum

FLOAT_FMT = "%.17g"
FRINGE_UNITS = {"probability": "1", "counts": "counts"}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if obj is None or isinstance(obj, (str, int, bool)):
        return obj
    return str(obj)


def _header_lines(fmt: str, command: str | None, fields: dict) -> list[str]:
    lines = [f"# qfts {__version__}", f"# format: {fmt}"]
    if command:
        lines.append(f"# command: {command}")
    for k, v in fields.items():
        if isinstance(v, float):
            v = FLOAT_FMT % v
        elif isinstance(v, (dict, list)):
            v = json.dumps(_jsonable(v), sort_keys=True)
        lines.append(f"# {k}: {v}")
    return lines


def _write_csv(path, header: list[str], columns: list[str], data: list[np.ndarray], fmts: list[str]):
    path = Path(path)
    rows = np.column_stack(data)
    line_fmt = ",".join(fmts)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(header) + "\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(line_fmt % tuple(row) + "\n")
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc
    return path


def _read_csv(path, fmt: str):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    meta: dict[str, str] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        body = lines[i][1:].strip()
        if ":" in body:
            k, v = body.split(":", 1)
            meta[k.strip()] = v.strip()
        i += 1
    if meta.get("format") != fmt:
        raise FormatError(f"{path}: expected format {fmt!r}, found {meta.get('format')!r}")
    if i >= len(lines):
        raise FormatError(f"{path}: missing column header")
    columns = [c.strip() for c in lines[i].split(",")]
    rows = [ln for ln in lines[i + 1:] if ln.strip()]
    try:
        data = np.array([[float(x) for x in ln.split(",")] for ln in rows], dtype=float)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric data ({exc})") from exc
    if data.size == 0:
        data = data.reshape(0, len(columns))
    if data.ndim != 2 or data.shape[1] != len(columns):
        raise FormatError(f"{path}: every row must have {len(columns)} fields")
    return meta, columns, data


def _meta_float(meta, key, path):
    try:
        return float(meta[key])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: missing or invalid header field {key!r}") from exc


def _meta_int(meta, key, path):
    try:
        return int(meta[key])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: missing or invalid header field {key!r}") from exc


def _meta_json(meta, key, default=None):
    if key not in meta:
        return default
    try:
        return json.loads(meta[key])
    except json.JSONDecodeError:
        return default


def _check_axis(path, axis: np.ndarray, grid, name: str):
    expected = grid.points
    if axis.shape != expected.shape:
        raise FormatError(f"{path}: {axis.size} rows but the header grid has {grid.count} points")
    tol = 1e-9 * max(abs(grid.step), 1e-300)
    if np.max(np.abs(axis - expected)) > tol + 1e-12 * np.max(np.abs(expected)):
        raise FormatError(f"{path}: {name} column does not match the header grid")


def _grid_fields(grid) -> dict:
    return {"grid_start": grid.start, "grid_step": grid.step, "grid_count": grid.count}


def _wrap(exc_types=(QFTSError,)):
    """Re-raise validation failures of loaded content as format errors."""

    def deco(fn):
        def inner(path, *a, **kw):
            try:
                return fn(path, *a, **kw)
            except FormatError:
                raise
            except exc_types as exc:
                raise FormatError(f"{path}: invalid content: {exc}") from exc

        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner

    return deco


# ---------------------------------------------------------------------------
# fringes


def write_fringe_csv(path, fringe: FringePattern, command: str | None = None, value_unit: str | None = None):
    """Columns ``delay_s, value[, sigma]``."""
    if value_unit is None:
        value_unit = "counts" if fringe.sigma is not None else "probability"
    fields = {
        "kind": fringe.kind,
        "units": f"delay_s=s, value={value_unit}" + (f", sigma={value_unit}" if fringe.sigma is not None else ""),
        "value_unit": value_unit,
        **_grid_fields(fringe.grid),
        "metadata": dict(fringe.metadata),
    }
    cols = ["delay_s", "value"]
    data = [fringe.delays, fringe.values]
    if fringe.sigma is not None:
        cols.append("sigma")
        data.append(fringe.sigma)
    return _write_csv(path, _header_lines("fringe", command, fields), cols, data, [FLOAT_FMT] * len(cols))


@_wrap()
def read_fringe_csv(path) -> FringePattern:
    meta, cols, data = _read_csv(path, "fringe")
    if cols not in (["delay_s", "value"], ["delay_s", "value", "sigma"]):
        raise FormatError(f"{path}: fringe columns must be delay_s,value[,sigma], got {cols}")
    grid = DelayGrid(_meta_float(meta, "grid_start", path), _meta_float(meta, "grid_step", path),
                     _meta_int(meta, "grid_count", path))
    _check_axis(path, data[:, 0], grid, "delay_s")
    sigma = data[:, 2] if len(cols) == 3 else None
    if meta.get("value_unit") == "probability" and np.any((data[:, 1] < -1e-12) | (data[:, 1] > 1 + 1e-12)):
        raise FormatError(f"{path}: probability values outside [0, 1]")
    kind = meta.get("kind")
    return FringePattern(grid, data[:, 1], kind, sigma, _meta_json(meta, "metadata", {}))


# ---------------------------------------------------------------------------
# spectra


def write_spectrum_csv(path, spectrum: Spectrum, command: str | None = None):
    """Columns ``omega_rad_s, density`` (density in s/rad, unit integral)."""
    fields = {
        "units": "omega_rad_s=rad/s, density=s/rad",
        **_grid_fields(spectrum.grid),
        "metadata": dict(spectrum.metadata),
    }
    return _write_csv(
        path, _header_lines("spectrum", command, fields), ["omega_rad_s", "density"],
        [spectrum.omega, spectrum.values], [FLOAT_FMT, FLOAT_FMT],
    )


@_wrap()
def read_spectrum_csv(path) -> Spectrum:
    meta, cols, data = _read_csv(path, "spectrum")
    if cols != ["omega_rad_s", "density"]:
        raise FormatError(f"{path}: spectrum columns must be omega_rad_s,density, got {cols}")
    grid = FrequencyGrid(_meta_float(meta, "grid_start", path), _meta_float(meta, "grid_step", path),
                         _meta_int(meta, "grid_count", path))
    _check_axis(path, data[:, 0], grid, "omega_rad_s")
    return Spectrum(grid, data[:, 1], _meta_json(meta, "metadata", {}))


# ---------------------------------------------------------------------------
# histograms


def write_histogram(path, hist: HistogramData, command: str | None = None):
    """CSV ``bin_center_s, count`` plus a JSON sidecar ``<path>.json`` (config, seed, generator)."""
    fields = {
        "units": "bin_center_s=s, count=counts",
        "bin_width": hist.bin_width,
        "pulse_period": hist.pulse_period,
        "start": hist.start,
        "timing_jitter_sigma": "none" if hist.timing_jitter_sigma is None else FLOAT_FMT % hist.timing_jitter_sigma,
    }
    path = _write_csv(
        path, _header_lines("histogram", command, fields), ["bin_center_s", "count"],
        [hist.bin_centers, hist.counts.astype(float)], [FLOAT_FMT, "%d"],
    )
    write_json(sidecar_path(path), {"format": "histogram-sidecar", **_jsonable(dict(hist.metadata))})
    return path


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


@_wrap()
def read_histogram(path) -> HistogramData:
    meta, cols, data = _read_csv(path, "histogram")
    if cols != ["bin_center_s", "count"]:
        raise FormatError(f"{path}: histogram columns must be bin_center_s,count, got {cols}")
    jit = meta.get("timing_jitter_sigma", "none")
    side = sidecar_path(path)
    md = read_json(side) if side.exists() else {}
    md.pop("format", None)
    hist = HistogramData(
        _meta_float(meta, "bin_width", path), data[:, 1], _meta_float(meta, "pulse_period", path),
        _meta_float(meta, "start", path), None if jit == "none" else float(jit), md,
    )
    if np.max(np.abs(hist.bin_centers - data[:, 0]), initial=0.0) > 1e-9 * hist.bin_width:
        raise FormatError(f"{path}: bin_center_s column does not match the header binning")
    return hist


# ---------------------------------------------------------------------------
# joint spectral densities


def write_jsd(path, jsd: JointSpectralDensity, command: str | None = None) -> Path:
    """JSON header ``<path>`` plus the value array in ``<stem>.npy`` next to it."""
    path = Path(path)
    npy = path.with_suffix(".npy")
    header = {
        "format": "jsd",
        "qfts_version": __version__,
        "command": command,
        "units": {"sum_grid": "rad/s", "diff_grid": "rad/s", "values": "(s/rad)^2"},
        "layout": "rows follow sum_grid (w+ = w1+w2), columns follow diff_grid (w- = w1-w2)",
        "sum_grid": _grid_fields(jsd.sum_grid),
        "diff_grid": _grid_fields(jsd.diff_grid),
        "values_file": npy.name,
        "metadata": _jsonable(dict(jsd.metadata)),
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.save(npy, np.asarray(jsd.values), allow_pickle=False)
    except OSError as exc:
        raise FormatError(f"cannot write {npy}: {exc}") from exc
    write_json(path, header)
    return path


@_wrap()
def read_jsd(path) -> JointSpectralDensity:
    path = Path(path)
    header = read_json(path)
    if header.get("format") != "jsd":
        raise FormatError(f"{path}: not a JSD header")
    try:
        sg, dg = header["sum_grid"], header["diff_grid"]
        sum_grid = FrequencyGrid(sg["grid_start"], sg["grid_step"], sg["grid_count"])
        diff_grid = FrequencyGrid(dg["grid_start"], dg["grid_step"], dg["grid_count"])
        values = np.load(path.parent / header["values_file"], allow_pickle=False)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed JSD header ({exc})") from exc
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: cannot load JSD values ({exc})") from exc
    return JointSpectralDensity(sum_grid, diff_grid, values, header.get("metadata", {}))


# ---------------------------------------------------------------------------
# JSON records


def write_json(path, record: dict) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc
    return path


def read_json(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise FormatError(f"{path}: top-level JSON must be an object")
    return data


def _float_or_inf(v) -> float:
    return float(v)  # float("inf") / float("nan") accept the string forms written by _jsonable


def fit_report_to_dict(report: FitReport) -> dict[str, Any]:
    units = type(report.params).UNITS
    sig = report.uncertainties
    params = {
        k: {"value": v, "unit": units.get(k, "1"), "sigma": sig.get(k)}
        for k, v in params_to_dict(report.params).items()
    }
    return {
        "format": "fit-report",
        "qfts_version": __version__,
        "model": report.model,
        "params": params,
        "fitted": list(report.names),
        "covariance": np.asarray(report.covariance).tolist(),
        "reduced_chi_square": report.reduced_chi_square,
        "dof": report.dof,
        "iterations": report.iterations,
        "converged": bool(report.converged),
        "flags": list(report.flags),
    }


def fit_report_from_dict(data: dict) -> FitReport:
    if data.get("format") != "fit-report":
        raise FormatError("not a fit-report record")
    try:
        model = data["model"]
        raw = {k: v["value"] for k, v in data["params"].items()}
        params = params_from_dict("hom" if model == "hom" else "noon", raw)
        cov = np.array([[_float_or_inf(x) for x in row] for row in data["covariance"]], dtype=float)
        return FitReport(
            params, list(data["fitted"]), cov.reshape(len(data["fitted"]), len(data["fitted"])),
            float(data["reduced_chi_square"]), int(data["iterations"]), bool(data["converged"]),
            model, list(data.get("flags", [])), int(data.get("dof", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed fit report: {exc}") from exc


def write_fit_report(path, report: FitReport) -> Path:
    return write_json(path, fit_report_to_dict(report))


@_wrap()
def read_fit_report(path) -> FitReport:
    return fit_report_from_dict(read_json(path))


def write_metrics(path, metrics: SpectralMetrics, extra: dict | None = None) -> Path:
    record = {"format": "metrics", "qfts_version": __version__, **metrics.to_record()}
    if extra:
        record.update(extra)
    return write_json(path, record)


__all__ = [
    "write_fringe_csv", "read_fringe_csv", "write_spectrum_csv", "read_spectrum_csv",
    "write_histogram", "read_histogram", "sidecar_path", "write_jsd", "read_jsd",
    "write_json", "read_json", "fit_report_to_dict", "fit_report_from_dict",
    "write_fit_report", "read_fit_report", "write_metrics",
    "NoonFitParams", "HomFitParams",
]
