import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfts.coincidence import SourceConfig, simulate_histogram
from qfts.errors import FormatError
from qfts.fitting import NoonFitParams, evaluate_model, fit_hom_dip, fit_noon_oscillation, HomFitParams
from qfts.io import (
    read_fit_report,
    read_fringe_csv,
    read_histogram,
    read_jsd,
    read_json,
    read_spectrum_csv,
    sidecar_path,
    write_fit_report,
    write_fringe_csv,
    write_histogram,
    write_jsd,
    write_json,
    write_spectrum_csv,
)
from qfts.jsa_models import GaussianModelParams, build_gaussian_jsd
from qfts.spectral_core import DelayGrid, FrequencyGrid, FringePattern, Spectrum, lorentzian


def _body(path):
    return "".join(ln for ln in open(path) if not ln.startswith("#"))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 60), with_sigma=st.booleans())
def test_fringe_round_trip(tmp_path_factory, seed, n, with_sigma):
    rng = np.random.default_rng(seed)
    d = DelayGrid(rng.uniform(-1e-11, 0), rng.uniform(1e-16, 1e-13), n)
    sigma = rng.random(n) + 0.1 if with_sigma else None
    f = FringePattern(d, rng.random(n), "HOM", sigma, {"seed": seed, "note": "x"})
    path = tmp_path_factory.mktemp("io") / "f.csv"
    write_fringe_csv(path, f, command="qfts fringe")
    g = read_fringe_csv(path)
    assert np.array_equal(g.values, f.values)
    assert np.array_equal(g.delays, f.delays)
    assert g.grid.start == d.start and g.grid.step == d.step and g.grid.count == n
    assert g.kind == "HOM" and g.metadata == {"seed": seed, "note": "x"}
    if with_sigma:
        assert np.array_equal(g.sigma, sigma)
    else:
        assert g.sigma is None


def test_fringe_rewrite_byte_identical(tmp_path):
    d = DelayGrid.symmetric(1e-12, 11)
    f = FringePattern(d, np.linspace(0, 1, 11), "NOON")
    write_fringe_csv(tmp_path / "a.csv", f)
    write_fringe_csv(tmp_path / "b.csv", read_fringe_csv(tmp_path / "a.csv"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_fringe_header(tmp_path):
    d = DelayGrid.symmetric(1e-12, 3)
    write_fringe_csv(tmp_path / "f.csv", FringePattern(d, [0.5, 0.0, 0.5], "HOM"), command="qfts fringe --seed 0")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0].startswith("# qfts ")
    assert lines[1] == "# format: fringe"
    assert lines[2] == "# command: qfts fringe --seed 0"
    assert "delay_s,value" in lines


def test_spectrum_round_trip(tmp_path):
    g = FrequencyGrid.centered(1e13, 5e12, 1e10)
    s = Spectrum(g, lorentzian(g.points - 1e13, 1e11), {"route": "fft"}).normalized()
    write_spectrum_csv(tmp_path / "s.csv", s)
    r = read_spectrum_csv(tmp_path / "s.csv")
    assert np.array_equal(r.values, s.values) and r.metadata == {"route": "fft"}


def test_histogram_round_trip(tmp_path):
    cfg = SourceConfig.from_rates(1600.0, 650e3, dwell_time=0.1)
    h = simulate_histogram(cfg, 0.5, 4, "peaks")
    p = write_histogram(tmp_path / "h.csv", h)
    assert sidecar_path(p).exists()
    side = read_json(sidecar_path(p))
    assert side["seed"] == 4 and side["generator"] == "numpy.random.PCG64"
    assert side["config"]["rep_rate"] == 76e6
    r = read_histogram(p)
    assert r == h
    assert r.timing_jitter_sigma == h.timing_jitter_sigma


def test_jsd_round_trip(tmp_path):
    jsd = build_gaussian_jsd(GaussianModelParams(1e15, 2e12, 4e12, 1e12))
    write_jsd(tmp_path / "j.json", jsd)
    r = read_jsd(tmp_path / "j.json")
    assert np.array_equal(r.values, jsd.values)
    assert r.sum_grid.count == jsd.sum_grid.count and r.diff_grid.step == jsd.diff_grid.step


@pytest.mark.parametrize("which", ["noon", "hom"])
def test_fit_report_round_trip(tmp_path, which):
    if which == "noon":
        d = DelayGrid.symmetric(1.3e-15, 41)
        rep = fit_noon_oscillation(evaluate_model(NoonFitParams(0.0, 0.8, 1.09e16, 0.2, 1e3), d), gamma=0.0)
    else:
        rng = np.random.default_rng(0)
        d = DelayGrid.symmetric(6e-12, 121)
        f = evaluate_model(HomFitParams(1.2566e13, 1.2566e12, 0.6, 4000.0), d)
        rep = fit_hom_dip(FringePattern(d, rng.poisson(f.values).astype(float), "HOM"))
    write_fit_report(tmp_path / "r.json", rep)
    back = read_fit_report(tmp_path / "r.json")
    assert back.params == rep.params
    assert back.names == rep.names and back.flags == rep.flags
    assert np.array_equal(back.covariance, rep.covariance)
    rec = read_json(tmp_path / "r.json")
    assert rec["params"][rep.names[0]]["unit"]


def test_json_handles_inf(tmp_path):
    write_json(tmp_path / "x.json", {"a": float("inf"), "b": np.float64(1.5), "c": np.arange(2)})
    assert read_json(tmp_path / "x.json") == {"a": "inf", "b": 1.5, "c": [0, 1]}


def _good_fringe(tmp_path):
    d = DelayGrid.symmetric(1e-12, 5)
    return write_fringe_csv(tmp_path / "f.csv", FringePattern(d, [0.5, 0.2, 0.0, 0.2, 0.5], "HOM"))


@pytest.mark.parametrize(
    "mutate",
    [
        lambda t: t.replace("# format: fringe", "# format: spectrum"),
        lambda t: t.replace("delay_s,value", "delay,value"),
        lambda t: t.replace("0.20000000000000001", "abc", 1),
        lambda t: t.replace("# kind: HOM", "# kind: XYZ"),
        lambda t: t.replace("# grid_count: 5", "# grid_count: 6"),
        lambda t: t.rsplit("\n", 2)[0] + "\n",
        lambda t: t.replace("0.5\n", "1.5\n", 1),
        lambda t: "",
    ],
    ids=["format", "columns", "non-numeric", "kind", "count", "truncated", "out-of-range", "empty"],
)
def test_malformed_fringe(tmp_path, mutate):
    p = _good_fringe(tmp_path)
    p.write_text(mutate(p.read_text()))
    with pytest.raises(FormatError):
        read_fringe_csv(p)


def test_missing_files(tmp_path):
    with pytest.raises(FormatError):
        read_fringe_csv(tmp_path / "nope.csv")
    with pytest.raises(FormatError):
        read_fit_report(tmp_path / "nope.json")
    (tmp_path / "bad.json").write_text("[1, 2]")
    with pytest.raises(FormatError):
        read_json(tmp_path / "bad.json")
    (tmp_path / "r.json").write_text('{"format": "fit-report", "model": "noon"}')
    with pytest.raises(FormatError):
        read_fit_report(tmp_path / "r.json")


def test_format_error_is_oserror():
    assert issubclass(FormatError, OSError)
