import numpy as np
import pytest

from qfts.errors import GridAsymmetryError, InsufficientSupportError, InvalidInputError
from qfts.interference import marginal_spectrum
from qfts.jsa_models import (
    BiexcitonModelParams,
    GaussianModelParams,
    JointSpectralDensity,
    build_biexciton_jsd,
    build_gaussian_jsd,
    default_biexciton_grids,
    jsd_from_pair_density,
    model_marginal,
    symmetrize,
    symmetry_defect,
)
from qfts.spectral_core import FrequencyGrid, fwhm, gaussian, lorentzian, unit_convert


@pytest.fixture(scope="module")
def cucl():
    return BiexcitonModelParams.cucl_default()


@pytest.fixture(scope="module")
def cucl_jsd(cucl):
    return build_biexciton_jsd(cucl)


def _peaks(x, y):
    inner = (y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])
    return x[1:-1][inner]


def test_cucl_preset_values(cucl):
    # 6.3722 eV / hbar with CODATA hbar
    assert cucl.omega_xx == pytest.approx(9.6811e15, rel=1e-4)
    assert cucl.delta == pytest.approx(1.2566e13, rel=1e-4)
    assert cucl.gamma_diff == pytest.approx(unit_convert(0.2, "THz", "rad/s"))
    assert cucl.gamma_xx == pytest.approx(1 / 17e-12)


def test_as_measured_preset():
    p = BiexcitonModelParams.cucl_as_measured()
    assert unit_convert(p.omega_xx, "rad/s", "nm") == pytest.approx(173.0)
    assert unit_convert(p.omega_xx, "rad/s", "eV") == pytest.approx(7.167, abs=1e-3)


def test_param_validation():
    with pytest.raises(InvalidInputError):
        BiexcitonModelParams(1e15, -1.0, 1e13, 1e12, 1e12)
    with pytest.raises(InvalidInputError):
        BiexcitonModelParams(1e12, 1e10, 1e13, 1e12, 1e12)  # omega_xx <= delta
    with pytest.raises(InvalidInputError):
        GaussianModelParams(1e15, 0.0, 0.0, 1e12)


def test_jsd_normalized_and_nonnegative(cucl_jsd):
    assert cucl_jsd.integral() == pytest.approx(1.0, abs=1e-9)
    assert np.all(cucl_jsd.values >= 0)
    assert cucl_jsd.metadata["captured_mass"] > 0.99


def test_diff_marginal_peaks_at_plus_minus_delta(cucl, cucl_jsd):
    m = marginal_spectrum(cucl_jsd, "diff")
    peaks = _peaks(m.omega, m.values)
    assert len(peaks) == 2
    assert peaks == pytest.approx([-1.2566e13, 1.2566e13], rel=1e-3)
    assert peaks == pytest.approx([-cucl.delta, cucl.delta], abs=m.grid.step)


def test_sum_marginal_peak(cucl, cucl_jsd):
    m = marginal_spectrum(cucl_jsd, "sum")
    assert m.omega[np.argmax(m.values)] == pytest.approx(cucl.omega_xx, abs=m.grid.step)


def test_degenerate_single_peak():
    p = BiexcitonModelParams(1e16, 1e11, 0.0, 1e12, 1e12)
    jsd = build_biexciton_jsd(p)
    m = marginal_spectrum(jsd, "diff")
    assert m.omega[np.argmax(m.values)] == 0.0
    assert len(_peaks(m.omega, m.values)) == 1
    assert symmetry_defect(jsd) < 1e-12


def test_biexciton_symmetric_by_construction(cucl_jsd):
    assert symmetry_defect(cucl_jsd) < 1e-12


def test_marginals_are_analytic_lorentzians(cucl, cucl_jsd):
    for axis in ("sum", "diff"):
        m = marginal_spectrum(cucl_jsd, axis)
        x = m.omega
        if axis == "sum":
            f = lorentzian(x - cucl.omega_xx, cucl.gamma_xx)
        else:
            g = cucl.gamma_diff
            f = 0.5 * (lorentzian(x - cucl.delta, g) + lorentzian(x + cucl.delta, g))
        f = f / np.trapezoid(f, x)
        assert np.max(np.abs(m.values - f)) <= 1e-6 * f.max()


def test_model_marginal_matches_jsd_marginal(cucl, cucl_jsd):
    for axis in ("sum", "diff"):
        grid = cucl_jsd.sum_grid if axis == "sum" else cucl_jsd.diff_grid
        a = model_marginal(cucl, axis, grid)
        b = marginal_spectrum(cucl_jsd, axis)
        assert np.max(np.abs(a.values - b.values)) <= 1e-9 * b.values.max()


def test_diff_marginal_fwhm(cucl):
    m = model_marginal(cucl, "diff", max_delay=20e-12)
    # each peak has FWHM 2 (gamma_hep + gamma_lep) = 0.4 THz; the twin's tail widens it ~0.3%
    assert fwhm(m) == pytest.approx(2 * cucl.gamma_diff, rel=1e-2)


def test_model_marginal_respects_max_delay(cucl):
    m = model_marginal(cucl, "diff", max_delay=40e-12)
    assert np.pi / m.grid.step >= 40e-12


def test_insufficient_support(cucl):
    sg, dg = default_biexciton_grids(cucl)
    narrow = FrequencyGrid.centered(0.0, cucl.delta + 2 * cucl.gamma_diff, dg.step)
    with pytest.raises(InsufficientSupportError):
        build_biexciton_jsd(cucl, sg, narrow)
    # covers +/-8 HWHM but Lorentzian tails leave < 99% of the mass
    tight = FrequencyGrid.centered(0.0, cucl.delta + 9 * cucl.gamma_diff, dg.step)
    with pytest.raises(InsufficientSupportError):
        build_biexciton_jsd(cucl, sg, tight)


def test_gaussian_zero_diff_center_symmetric():
    p = GaussianModelParams(1e15, 1e12, 0.0, 1e12)
    assert symmetry_defect(build_gaussian_jsd(p)) < 1e-15


def test_gaussian_matching_sigmas_give_matching_marginals():
    p = GaussianModelParams(1e15, 2e12, 5e12, 2e12)
    jsd = build_gaussian_jsd(p)
    ms, md = marginal_spectrum(jsd, "sum"), marginal_spectrum(jsd, "diff")
    x = ms.omega
    assert np.max(np.abs(ms.values - gaussian(x - 1e15, 2e12))) < 1e-6 * ms.values.max()
    # each diff peak is a Gaussian of the same sigma (weight 1/2)
    i = np.argmax(md.values)
    assert md.values[i] == pytest.approx(0.5 * gaussian(0.0, 2e12), rel=1e-3)


def test_gaussian_test_preset():
    p = GaussianModelParams.test_default()
    jsd = build_gaussian_jsd(p)
    assert jsd.integral() == pytest.approx(1.0, abs=1e-12)


def test_symmetrize_idempotent(cucl_jsd):
    s = symmetrize(cucl_jsd)
    assert np.max(np.abs(s.values - cucl_jsd.values)) <= 1e-12 * cucl_jsd.values.max()
    ss = symmetrize(s)
    assert np.array_equal(ss.values, symmetrize(s).values)
    assert np.max(np.abs(ss.values - s.values)) <= 1e-15 * s.values.max()


def _one_sided_jsd(weight_plus=1.0, weight_minus=0.0):
    sg = FrequencyGrid.centered(1e15, 8e12, 1e11)
    dg = FrequencyGrid.centered(0.0, 20e12, 1e11)
    s = gaussian(sg.points - 1e15, 1e12)
    d = weight_plus * gaussian(dg.points - 8e12, 1e12) + weight_minus * gaussian(dg.points + 8e12, 1e12)
    return JointSpectralDensity(sg, dg, np.outer(s, d)).normalized()


def test_symmetrize_off_center_peak():
    jsd = _one_sided_jsd()
    s = symmetrize(jsd)
    m = marginal_spectrum(s, "diff")
    peaks = _peaks(m.omega, m.values)
    assert peaks == pytest.approx([-8e12, 8e12])
    i_neg, i_pos = np.argmin(np.abs(m.omega + 8e12)), np.argmin(np.abs(m.omega - 8e12))
    assert m.values[i_neg] == pytest.approx(m.values[i_pos], rel=1e-12)


def test_symmetrize_keeps_sum_marginal(cucl_jsd):
    jsd = _one_sided_jsd(0.7, 0.3)
    a = marginal_spectrum(jsd, "sum").values
    b = marginal_spectrum(symmetrize(jsd), "sum").values
    assert np.max(np.abs(a - b)) <= 1e-12 * a.max()


def test_symmetry_defect_disjoint():
    assert symmetry_defect(_one_sided_jsd()) == pytest.approx(1.0, abs=1e-9)


def test_symmetry_defect_90_10():
    assert symmetry_defect(_one_sided_jsd(0.9, 0.1)) == pytest.approx(0.8, abs=1e-9)


def test_asymmetric_grid_rejected():
    sg = FrequencyGrid(0.9e15, 1e12, 201)
    dg = FrequencyGrid(-1e13, 1e11, 150)
    jsd = JointSpectralDensity(sg, dg, np.ones((201, 150))).normalized()
    with pytest.raises(GridAsymmetryError):
        symmetrize(jsd)


def test_pair_density_jacobian():
    # a product density in (w1, w2) keeps unit mass after rotation
    sg = FrequencyGrid.centered(2e15, 3e13, 2e11)
    dg = FrequencyGrid.centered(0.0, 3e13, 2e11)

    def dens(w1, w2):
        return gaussian(w1 - 1e15, 3e12) * gaussian(w2 - 1e15, 3e12)

    raw = jsd_from_pair_density(dens, sg, dg, normalize=False)
    assert raw.integral() == pytest.approx(1.0, rel=1e-6)
