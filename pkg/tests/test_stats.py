import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from pilotwave import stats as S
from pilotwave.units import LAMBDA_C


def run(y, theta, good="exited_downstream"):
    return SimpleNamespace(y=y, theta_out=theta if good == "exited_downstream" else None, good=good)


# --- Fraunhofer model -------------------------------------------------------

@pytest.mark.parametrize("w,d,lam", [(4.07, 0.0, 0.9), (2.03, 3.66, 0.5), (1.0, 0.0, 0.3)])
def test_fraunhofer_normalized_and_peaked(w, d, lam):
    total, _ = integrate.quad(S.fraunhofer_density, -math.pi / 2, math.pi / 2, args=(w, d, lam),
                              limit=400, points=[0.0])
    assert total == pytest.approx(1.0, abs=1e-8)
    th = np.linspace(-1.5, 1.5, 3001)
    vals = S.fraunhofer_density(th, w, d, lam)
    assert S.fraunhofer_density(0.0, w, d, lam) >= vals.max()


def test_fraunhofer_zeros_single_slit():
    w, lam = 4.07, 0.7
    for k in range(1, 6):
        th = math.asin(k * lam / w)
        assert S.fraunhofer_density(th, w, 0.0, lam) < 1e-25
        assert S.fraunhofer_density(-th, w, 0.0, lam) < 1e-25
        # and is not zero just beside the root
        assert S.fraunhofer_density(th + 1e-3, w, 0.0, lam) > 1e-9


def test_fraunhofer_zeros_double_slit():
    w, d, lam = 2.03, 3.66, 0.5
    for k in range(0, 4):
        th = math.asin((k + 0.5) * lam / d)
        assert S.fraunhofer_density(th, w, d, lam) < 1e-25


def test_fraunhofer_rejects_bad_wavelength():
    with pytest.raises(S.StatsError):
        S.fraunhofer_density(0.1, 1.0, 0.0, 0.0)


def test_tabulated_zeros_on_grid():
    tab = S.fraunhofer_table(4.07, 0.0, 0.8)
    assert tab.integral() == pytest.approx(1.0, abs=1e-12)
    zero = math.asin(0.8 / 4.07)
    k = np.argmin(np.abs(tab.theta - zero))
    assert abs(tab.theta[k] - zero) <= tab.step
    assert tab.values[k] < 1e-6 * tab.values.max()


# --- effective wavelength and smoothing --------------------------------------

@given(st.floats(1e-3, 1e3))
def test_unit_coupling_gives_de_broglie(p):
    assert S.effective_wavelength(68.0, p) == pytest.approx(2 * math.pi / p, rel=1e-15)


def test_effective_wavelength_values():
    assert S.effective_wavelength(0.0, 0.3) == 0.0
    lam_db = 2 * math.pi / 0.3
    assert S.effective_wavelength(25.0, 0.3) / lam_db == pytest.approx((25 / 68) ** 2)
    assert (25 / 68) ** 2 == pytest.approx(0.1352, abs=1e-4)
    with pytest.raises(S.StatsError):
        S.effective_wavelength(10.0, 0.0)


def test_smoothing_sigma():
    assert S.smoothing_sigma(LAMBDA_C ** 2, 1.0) == pytest.approx(0.02)
    lam = S.effective_wavelength(16.7, 0.3)
    w = 4.07 * LAMBDA_C
    assert S.smoothing_sigma(lam, w) == pytest.approx(0.02 * lam * w / LAMBDA_C ** 2)
    assert S.smoothing_sigma(lam, 2 * w) == pytest.approx(2 * S.smoothing_sigma(lam, w))


def test_smooth_density_identity_and_spike():
    tab = S.fraunhofer_table(4.07, 0.0, 0.8)
    same = S.smooth_density(tab, 0.0)
    np.testing.assert_allclose(same.values, tab.values, rtol=1e-12)
    spike = np.zeros_like(tab.values)
    spike[len(spike) // 2] = 1.0
    out = S.smooth_density(S.TabulatedDensity(tab.theta, spike), 0.05)
    assert out.integral() == pytest.approx(1.0, abs=1e-8)
    assert math.sqrt(out.moment(2)) == pytest.approx(0.05, rel=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(0.0, 0.3))
def test_smoothed_density_normalized(lam, sigma):
    out = S.smooth_density(lambda th: S.fraunhofer_density(th, 2.0, 0.0, lam), sigma)
    assert out.integral() == pytest.approx(1.0, abs=1e-8)
    assert np.all(out.values >= 0)


# --- histograms and chi-square -------------------------------------------------

def test_impact_weights():
    assert S.impact_weights([0.0], (0.0,))[0] == 1.0
    np.testing.assert_allclose(S.impact_weights([-0.41, 0.41], (0.0,)), math.exp(-0.5), rtol=1e-15)
    # each run is weighted about its nearest slit
    w = S.impact_weights([-1.83, 1.83 + 0.41], (-1.83, 1.83))
    np.testing.assert_allclose(w, [1.0, math.exp(-0.5)], rtol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-1.5, 1.5)), min_size=1, max_size=80))
def test_histogram_total_weight(pairs):
    results = [run(y, th) for y, th in pairs] + [run(0.1, None, "reflected")]
    hist = S.weighted_histogram(results)
    direct = sum(math.exp(-0.5 * (y / 0.41) ** 2) for y, _ in pairs)
    assert hist.total_weight == pytest.approx(direct, rel=1e-12)
    assert np.all(hist.weights >= 0) and np.all(np.diff(hist.bin_edges) > 0)
    assert hist.n_bins == max(1, round(math.sqrt(len(pairs))))


def test_histogram_flat_for_uniform_angles():
    th = np.linspace(-1, 1, 10_000)
    hist = S.weighted_histogram([run(0.0, t) for t in th], n_bins=20)
    assert np.allclose(hist.weights, 500, atol=1)


def test_histogram_needs_good_runs():
    with pytest.raises(S.StatsError):
        S.weighted_histogram([run(0.0, None, "reflected")])


def test_chi_square_hand_values():
    hist = S.AngularHistogram(np.array([0.0, 1.0, 2.0]), np.array([4.0, 0.0]))
    # model places E = 2 in the first bin and 2 in the second
    model = S.TabulatedDensity(np.array([0.25, 0.75, 1.25, 1.75]), np.array([0.5] * 4))
    rep = S.chi_square(hist, model)
    assert rep.expected == pytest.approx([2.0, 2.0])
    # first bin alone: (4-2)^2/2 = 2 and (2-0.5)^2/2 = 1.125
    assert rep.chi2_pearson == pytest.approx(2.0 + 2.0)
    assert rep.chi2_yates == pytest.approx(1.125 + 1.125)
    assert rep.dof == 1


def test_chi_square_zero_for_perfect_fit():
    tab = S.fraunhofer_table(4.07, 0.0, 0.8)
    edges = np.linspace(-0.5, 0.5, 12)
    frac = tab.bin_integrals(edges)
    hist = S.AngularHistogram(edges, 1000 * frac / frac.sum())
    rep = S.chi_square(hist, S.TabulatedDensity(tab.theta, tab.values / frac.sum()))
    assert rep.chi2_pearson == pytest.approx(0.0, abs=1e-18)
    assert rep.chi2_yates == 0.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 50.0), min_size=3, max_size=30), st.floats(0.05, 1.0))
def test_chi_square_matches_brute_force(obs, lam):
    edges = np.linspace(-0.6, 0.6, len(obs) + 1)
    model = S.smooth_density(lambda th: S.fraunhofer_density(th, 1.0, 0.0, lam), 0.05)
    hist = S.AngularHistogram(edges, np.array(obs))
    if hist.total_weight == 0:
        return
    rep = S.chi_square(hist, model, n_constraints=2)
    p = y = 0.0
    for row in rep.table():
        o, e = row["observed"], row["expected"]
        p += (o - e) ** 2 / e
        y += max(abs(o - e) - 0.5, 0.0) ** 2 / e
    assert rep.chi2_pearson == pytest.approx(p, rel=1e-12)
    assert rep.chi2_yates == pytest.approx(y, rel=1e-12, abs=1e-300)
    assert rep.dof == len(obs) - 2


def test_chi_square_errors():
    hist = S.AngularHistogram(np.array([0.0, 1.0]), np.array([3.0]))
    with pytest.raises(S.StatsError, match="degrees of freedom"):
        S.chi_square(hist, S.gaussian_density(0.1))
    hist = S.AngularHistogram(np.array([1.5, 1.55, 1.56]), np.array([3.0, 1.0]))
    with pytest.raises(S.StatsError, match="zero expected"):
        S.chi_square(hist, S.gaussian_density(0.01), n_constraints=0)


def test_gaussian_reference():
    hist = S.AngularHistogram(np.array([-0.3, -0.1, 0.1, 0.3]), np.array([5.0, 0.0, 5.0]))
    ref = S.gaussian_reference(hist)
    assert ref.moment(2) == pytest.approx(0.2 ** 2, rel=1e-6)
    rng = np.random.default_rng(1)
    th = rng.normal(0, 0.2, 20_000)
    hist = S.weighted_histogram([run(0.0, t) for t in th], n_bins=41, theta_range=(-0.8, 0.8))
    rep = S.chi_square(hist, S.gaussian_reference(hist), n_constraints=2)
    assert 0.5 < rep.reduced_pearson < 2.0
    with pytest.raises(S.StatsError):
        S.gaussian_reference(S.AngularHistogram(np.array([-0.1, 0.1]), np.array([3.0])))


def test_central_node_width():
    hist = S.AngularHistogram(np.linspace(-0.05, 0.05, 2), np.array([10.0]))
    assert S.central_node_width(hist, 1.0, 4.0) == 0.0
    a = math.asin(0.25)
    edges = np.linspace(-a, a, 2001)
    hist = S.AngularHistogram(edges, np.ones(2000))
    assert S.central_node_width(hist, 1.0, 4.0) == pytest.approx(a / math.sqrt(3), rel=1e-5)
    with pytest.raises(S.StatsError):
        S.central_node_width(hist, 5.0, 4.0)


# --- diffraction map ---------------------------------------------------------

def test_map_derivative_and_free_space():
    y = np.linspace(-2, 2, 41)
    dm = S.diffraction_map((y, 0.3 * y))
    np.testing.assert_allclose(dm.slope, 0.3, rtol=1e-12)
    dm = S.diffraction_map([run(v, 0.0) for v in y])
    assert np.all(dm.theta == 0)
    with pytest.raises(S.StatsError):
        S.diffraction_map([run(0.0, 0.1), run(1.0, None, "reflected"), run(2.0, 0.2)])


def test_map_skips_bad_runs():
    res = [run(v, 0.1 * v) if k % 3 else run(v, None, "reflected")
           for k, v in enumerate(np.linspace(-1, 1, 30))]
    dm = S.diffraction_map(res)
    assert len(dm.y_all) == 30 and len(dm.y) == 20
    np.testing.assert_allclose(dm.slope, 0.1, rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 0.4), st.floats(0.0, 1.0))
def test_fold_peaks_on_sinusoid(period, phase):
    y = np.linspace(-2, 2, 801)
    dm = S.diffraction_map((y, 0.01 * np.sin(2 * np.pi * y / period + phase)))
    peaks, spacing = S.fold_peaks(dm)
    step = y[1] - y[0]
    assert spacing == pytest.approx(period / 2, abs=step)
    analytic = ((np.arange(-40, 40) + 0.5) * np.pi - phase) * period / (2 * np.pi)
    lo, hi = y[0] + 2 * step, y[-1] - 2 * step
    analytic = analytic[(analytic > lo) & (analytic < hi)]
    inner = peaks[(peaks > lo) & (peaks < hi)]
    assert len(inner) == len(analytic)
    assert np.max(np.abs(inner - analytic)) < step


def test_fold_peaks_edge_band_and_monotone():
    y = np.linspace(-2, 2, 401)
    dm = S.diffraction_map((y, np.sin(2 * np.pi * y / 0.5)))
    all_peaks, _ = S.fold_peaks(dm)
    inner, _ = S.fold_peaks(dm, edge_band=0.5)
    assert len(inner) < len(all_peaks)
    assert np.all(np.abs(inner) <= 1.5)
    with pytest.raises(S.StatsError):
        S.fold_peaks(S.diffraction_map((y, y ** 3)))


@pytest.mark.parametrize("slope", [1.0, 10.0, 0.1, -3.0])
def test_lyapunov_exact_on_affine_maps(slope):
    y = np.linspace(-2, 2, 57)
    dm = S.diffraction_map((y, slope * y + 0.2))
    _, ell = S.lyapunov_local(dm)
    np.testing.assert_allclose(ell, math.log(abs(slope)), atol=1e-12)
    assert S.lyapunov_global(dm) == pytest.approx(math.log(abs(slope)), abs=1e-12)


def test_lyapunov_floor_at_flat_map():
    y = np.linspace(0, 1, 11)
    _, ell = S.lyapunov_local(S.diffraction_map((y, np.zeros_like(y))))
    assert np.all(ell == pytest.approx(math.log(S.LYAPUNOV_FLOOR)))


def test_smoothness_classifier():
    y = np.linspace(-2, 2, 129)
    assert S.smoothness_classifier(S.diffraction_map((y, 0.2 * y))).verdict == "monotone"
    smooth_peak = S.smoothness_classifier(S.diffraction_map((y, np.exp(-y ** 2))))
    assert smooth_peak.verdict == "sharp_peaks_expected"
    rng = np.random.default_rng(0)
    rough = S.smoothness_classifier(S.diffraction_map((y, rng.uniform(-1, 1, len(y)))))
    assert rough.verdict == "nondifferentiable"
    few_y = np.linspace(-1, 1, 8)
    few = S.smoothness_classifier(S.diffraction_map((few_y, np.cos(few_y))))
    assert few.verdict == "inconclusive"
    # weight profile excluding the extremum turns the map into a monotone one
    half = S.smoothness_classifier(S.diffraction_map((y, np.exp(-y ** 2))),
                                   rho_in=lambda v: (v > 0.1).astype(float))
    assert half.verdict == "monotone"


def test_fold_grid_fit():
    peaks = -1.1 + 0.28 * np.array([0, 1, 2, 4, 5, 6, 7])   # one missing peak
    spacing, offset = S.fold_grid_fit(peaks + 0.01 * np.sin(np.arange(7)))
    assert spacing == pytest.approx(0.28, abs=0.01)
    assert offset == pytest.approx(-1.1, abs=0.02)
    with pytest.raises(S.StatsError):
        S.fold_grid_fit([0.0, 0.3])
