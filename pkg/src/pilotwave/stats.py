"""Ensemble statistics: Fraunhofer predictions, histograms, chi-square fits,
diffraction maps and their fold / Lyapunov diagnostics.

Conventions: angles in radians; impact parameters, slit widths and
separations in Compton wavelengths unless a function says otherwise.
Wavelengths passed to :func:`fraunhofer_density` only need to share units
with ``w`` and ``d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.ndimage import gaussian_filter1d

from .units import LAMBDA_C

# Coupling at which the effective wavelength equals the de Broglie wavelength.
B_UNIT = 68.0
# Angular smoothing coefficient, fitted at b = 16.7 and p0 = 0.3.
SMOOTHING_COEFF = 0.02
# Impact-parameter weighting about each slit centre (lambda_c).
WEIGHT_SIGMA = 0.41
# |dS/dy| below this (per lambda_c) is clamped before taking the logarithm.
LYAPUNOV_FLOOR = 1e-9

N_TABLE = 20001


class StatsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# densities


@dataclass
class TabulatedDensity:
    """Density sampled at the midpoints of a uniform grid on (-pi/2, pi/2)."""

    theta: np.ndarray
    values: np.ndarray

    @property
    def step(self):
        return float(self.theta[1] - self.theta[0])

    def integral(self):
        return float(self.values.sum()) * self.step

    def normalized(self):
        return TabulatedDensity(self.theta, self.values / self.integral())

    def __call__(self, theta):
        return np.interp(theta, self.theta, self.values, left=0.0, right=0.0)

    def bin_integrals(self, edges):
        """Integral of the density over each bin of ``edges``."""
        h = self.step
        left = self.theta[0] - 0.5 * h
        cum_x = left + h * np.arange(len(self.values) + 1)
        cum = np.concatenate([[0.0], np.cumsum(self.values) * h])
        return np.diff(np.interp(edges, cum_x, cum))

    def moment(self, k, mean=0.0):
        return float(np.sum(self.values * (self.theta - mean) ** k)) * self.step


def theta_table(n=N_TABLE):
    h = math.pi / n
    return -0.5 * math.pi + h * (np.arange(n) + 0.5)


def _sinc(x):
    return np.sinc(np.asarray(x) / np.pi)


def _fraunhofer_raw(theta, w, d, lam):
    s = np.sin(theta)
    out = _sinc(np.pi * w * s / lam) ** 2
    if d > 0:
        out = out * np.cos(np.pi * d * s / lam) ** 2
    return out


_NORM_CACHE = {}


def _fraunhofer_norm(w, d, lam):
    key = (float(w), float(d), float(lam))
    if key not in _NORM_CACHE:
        # split at the sinc zeros so quad sees smooth pieces
        kmax = int(w / lam)
        pts = [math.asin(k * lam / w) for k in range(-kmax, kmax + 1) if abs(k * lam / w) < 1]
        total, _ = integrate.quad(_fraunhofer_raw, -0.5 * math.pi, 0.5 * math.pi,
                                  args=(w, d, lam), points=pts or None, limit=max(200, 4 * len(pts)),
                                  epsabs=1e-13, epsrel=1e-12)
        _NORM_CACHE[key] = total
    return _NORM_CACHE[key]


def fraunhofer_density(theta, w, d, lam):
    """Normalized slit diffraction density on (-pi/2, pi/2).

    ``cos^2(pi d sin(theta) / lam) * sinc^2(pi w sin(theta) / lam)``, with
    ``d = 0`` giving the single slit.
    """
    if lam <= 0:
        raise StatsError("wavelength must be positive")
    if w <= 0 or d < 0:
        raise StatsError("need w > 0 and d >= 0")
    return _fraunhofer_raw(np.asarray(theta, dtype=float), w, d, lam) / _fraunhofer_norm(w, d, lam)


def fraunhofer_table(w, d, lam, n=N_TABLE):
    th = theta_table(n)
    return TabulatedDensity(th, fraunhofer_density(th, w, d, lam)).normalized()


def effective_wavelength(b, p):
    """Effective de Broglie wavelength ``(b / 68)^2 * 2 pi / p`` (natural units)."""
    if p <= 0:
        raise StatsError("momentum must be positive")
    return (b / B_UNIT) ** 2 * (2.0 * math.pi / p)


def smoothing_sigma(lam_eff, w):
    """Angular smoothing width ``0.02 * lam_eff * w / lambda_c^2`` (radians).

    Both lengths in natural units.
    """
    return SMOOTHING_COEFF * lam_eff * w / LAMBDA_C ** 2


def smooth_density(density, sigma, n=N_TABLE):
    """Convolve a density with a Gaussian of width ``sigma`` (radians).

    ``density`` may be a callable on angles or a :class:`TabulatedDensity`.
    The convolution wraps around the (-pi/2, pi/2) interval, and the result
    is renormalized to unit integral.
    """
    if sigma < 0:
        raise StatsError("sigma must be >= 0")
    if isinstance(density, TabulatedDensity):
        tab = density
    else:
        th = theta_table(n)
        tab = TabulatedDensity(th, np.asarray(density(th), dtype=float))
    values = tab.values
    # a kernel far narrower than one sample is the identity
    if sigma > 1e-3 * tab.step:
        values = gaussian_filter1d(values, sigma / tab.step, mode="wrap", truncate=8.0)
    return TabulatedDensity(tab.theta, values).normalized()


def fraunhofer_prediction(w, d, lam_eff, sigma=None):
    """Smoothed Fraunhofer table; ``sigma`` defaults to :func:`smoothing_sigma`.

    Lengths in lambda_c except ``lam_eff`` which is natural units.
    """
    lam = lam_eff / LAMBDA_C
    if sigma is None:
        sigma = smoothing_sigma(lam_eff, w * LAMBDA_C)
    return smooth_density(fraunhofer_table(w, d, lam), sigma)


def gaussian_density(sigma, n=N_TABLE):
    th = theta_table(n)
    return TabulatedDensity(th, np.exp(-0.5 * (th / sigma) ** 2)).normalized()


# ---------------------------------------------------------------------------
# histograms and chi-square


@dataclass
class AngularHistogram:
    bin_edges: np.ndarray
    weights: np.ndarray
    counts: np.ndarray = None

    @property
    def n_bins(self):
        return len(self.weights)

    @property
    def total_weight(self):
        return float(self.weights.sum())

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])


def _good(results):
    return [r for r in results if r.good == "exited_downstream" and r.theta_out is not None
            and np.isfinite(r.theta_out)]


def impact_weights(y, slit_centers, weight_sigma=WEIGHT_SIGMA):
    """Gaussian weight of each impact parameter about its nearest slit centre."""
    y = np.asarray(y, dtype=float)
    c = np.asarray(slit_centers, dtype=float)
    nearest = c[np.argmin(np.abs(y[:, None] - c[None, :]), axis=1)]
    return np.exp(-0.5 * ((y - nearest) / weight_sigma) ** 2)


def weighted_histogram(results, slit_centers=(0.0,), weight_sigma=WEIGHT_SIGMA, n_bins=None,
                       theta_range=None):
    """Histogram of exit angles of the good runs, Gaussian-weighted in y.

    ``n_bins`` defaults to ``round(sqrt(N_good))``; bins are uniform over
    the observed angle range unless ``theta_range`` is given.
    """
    if weight_sigma <= 0:
        raise StatsError("weight_sigma must be positive")
    good = _good(results)
    if not good:
        raise StatsError("no good runs")
    theta = np.array([r.theta_out for r in good])
    w = impact_weights([r.y for r in good], slit_centers, weight_sigma)
    if n_bins is None:
        n_bins = max(1, int(round(math.sqrt(len(good)))))
    if theta_range is None:
        lo, hi = float(theta.min()), float(theta.max())
        if hi <= lo:
            lo, hi = lo - 1e-3, hi + 1e-3
        theta_range = (lo, hi)
    edges = np.linspace(theta_range[0], theta_range[1], n_bins + 1)
    weights, _ = np.histogram(theta, bins=edges, weights=w)
    counts, _ = np.histogram(theta, bins=edges)
    return AngularHistogram(edges, weights.astype(float), counts)


@dataclass
class FitReport:
    chi2_pearson: float
    chi2_yates: float
    dof: int
    observed: np.ndarray
    expected: np.ndarray
    bin_edges: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def reduced_pearson(self):
        return self.chi2_pearson / self.dof

    @property
    def reduced_yates(self):
        return self.chi2_yates / self.dof

    def table(self):
        return [dict(theta_lo=float(a), theta_hi=float(b), observed=float(o), expected=float(e))
                for a, b, o, e in zip(self.bin_edges[:-1], self.bin_edges[1:], self.observed, self.expected)]

    def to_dict(self):
        return dict(chi2_pearson=self.chi2_pearson, chi2_yates=self.chi2_yates, dof=self.dof,
                    reduced_pearson=self.reduced_pearson, reduced_yates=self.reduced_yates,
                    params=self.params, table=self.table())


def chi_square(hist, model, n_constraints=1, params=None):
    """Pearson and Yates-corrected chi-square of ``hist`` against ``model``.

    Expected bin contents are ``total_weight * integral of model over the bin``.
    """
    dof = hist.n_bins - n_constraints
    if dof < 1:
        raise StatsError(f"no degrees of freedom: {hist.n_bins} bins, {n_constraints} constraints")
    if isinstance(model, TabulatedDensity):
        frac = model.bin_integrals(hist.bin_edges)
    else:
        frac = np.array([integrate.quad(model, a, b)[0]
                         for a, b in zip(hist.bin_edges[:-1], hist.bin_edges[1:])])
    expected = hist.total_weight * frac
    if np.any(expected <= 0):
        raise StatsError("zero expected count in a bin; re-bin required")
    obs = hist.weights
    diff = np.abs(obs - expected)
    pearson = float(np.sum(diff ** 2 / expected))
    yates = float(np.sum(np.maximum(diff - 0.5, 0.0) ** 2 / expected))
    return FitReport(pearson, yates, dof, obs.copy(), expected, hist.bin_edges.copy(), dict(params or {}))


def histogram_variance(hist, mean=0.0):
    c = hist.centers
    return float(np.sum(hist.weights * (c - mean) ** 2) / hist.total_weight)


def gaussian_reference(hist):
    """Zero-mean Gaussian whose variance matches the histogram's."""
    if hist.total_weight <= 0:
        raise StatsError("empty histogram")
    var = histogram_variance(hist)
    if var <= 0:
        raise StatsError("histogram has zero variance")
    return gaussian_density(math.sqrt(var))


def _node_cut(lam_eff, w):
    arg = lam_eff / w
    if not 0 < arg < 1:
        raise StatsError(f"central node undefined for lam_eff / w = {arg:g}")
    return math.asin(arg)


def central_node_width(hist, lam_eff, w):
    """Weighted standard deviation of the angles inside the central node.

    The node is ``|theta| <= asin(lam_eff / w)`` (same length units).
    """
    cut = _node_cut(lam_eff, w)
    c = hist.centers
    sel = (np.abs(c) <= cut) & (hist.weights > 0)
    if not np.any(sel):
        raise StatsError("no histogram bins inside the central node")
    wts = hist.weights[sel]
    mean = float(np.sum(wts * c[sel]) / wts.sum())
    return math.sqrt(float(np.sum(wts * (c[sel] - mean) ** 2) / wts.sum()))


def central_node_width_model(density, lam_eff, w):
    """Central-node standard deviation of a tabulated density."""
    cut = _node_cut(lam_eff, w)
    sel = np.abs(density.theta) <= cut
    v = density.values[sel]
    th = density.theta[sel]
    mean = float(np.sum(v * th) / v.sum())
    return math.sqrt(float(np.sum(v * (th - mean) ** 2) / v.sum()))


def central_node_width_samples(theta, weights, lam_eff, w):
    """Same statistic computed directly from weighted per-run angles."""
    cut = _node_cut(lam_eff, w)
    theta = np.asarray(theta, dtype=float)
    weights = np.asarray(weights, dtype=float)
    sel = np.abs(theta) <= cut
    if not np.any(sel):
        raise StatsError("no runs inside the central node")
    wt = weights[sel]
    mean = float(np.sum(wt * theta[sel]) / wt.sum())
    return math.sqrt(float(np.sum(wt * (theta[sel] - mean) ** 2) / wt.sum()))


# ---------------------------------------------------------------------------
# diffraction map


@dataclass
class DiffractionMap:
    """Exit angle as a function of impact parameter over the good runs.

    ``y_all``/``theta_all`` keep every run (``nan`` angle when not good);
    ``y``/``theta`` are the good runs only, and ``slope`` is dtheta/dy there
    (central differences on the possibly irregular grid).
    """

    y_all: np.ndarray
    theta_all: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    slope: np.ndarray


def _map_from_arrays(y, theta):
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    order = np.argsort(y, kind="stable")
    y, theta = y[order], theta[order]
    if np.any(np.diff(y) <= 0):
        raise StatsError("impact parameters must be distinct")
    ok = np.isfinite(theta)
    yg, tg = y[ok], theta[ok]
    if len(yg) < 3:
        raise StatsError(f"need at least 3 good runs for a diffraction map, got {len(yg)}")
    return DiffractionMap(y, theta, yg, tg, np.gradient(tg, yg))


def diffraction_map(results):
    """Assemble S: y -> theta from run results (or ``(y, theta)`` arrays)."""
    if isinstance(results, tuple) and len(results) == 2:
        return _map_from_arrays(*results)
    y = [r.y for r in results]
    theta = [r.theta_out if (r.good == "exited_downstream" and r.theta_out is not None) else np.nan
             for r in results]
    return _map_from_arrays(y, theta)


def fold_peaks(dmap, window=None, edge_band=0.0):
    """Local extrema of the map and their mean spacing.

    Extrema are located where consecutive finite differences change sign and
    refined with a parabola through the three neighbouring samples.  Only
    extrema inside ``window = (ymin, ymax)`` (default: the sampled range) and
    at least ``edge_band`` from its ends are kept.
    Returns ``(peak_positions, mean_spacing)``.
    """
    y, th = dmap.y, dmap.theta
    d = np.diff(th) / np.diff(y)
    peaks = []
    for k in range(1, len(y) - 1):
        if d[k - 1] * d[k] < 0 or (d[k - 1] != 0 and d[k] == 0 and k + 1 < len(d) and d[k - 1] * d[k + 1] < 0):
            peaks.append(_parabola_vertex(y[k - 1:k + 2], th[k - 1:k + 2]))
    peaks = np.array(peaks)
    lo, hi = window if window is not None else (y[0], y[-1])
    lo, hi = lo + edge_band, hi - edge_band
    peaks = peaks[(peaks >= lo) & (peaks <= hi)] if len(peaks) else peaks
    if len(peaks) < 2:
        raise StatsError(f"found {len(peaks)} interior extrema; need at least 2")
    return peaks, float(np.mean(np.diff(peaks)))


def fold_grid_fit(peaks, window=(-1.2, 1.2)):
    """Least-squares equispaced grid ``y_k = offset + k * spacing`` through peaks.

    Only peaks inside ``window`` (lambda_c) are used; consecutive peaks are
    assigned consecutive integers after merging gaps of about twice the
    median spacing.  Returns ``(spacing, offset)``.
    """
    p = np.sort(np.asarray(peaks, dtype=float))
    p = p[(p >= window[0]) & (p <= window[1])]
    if len(p) < 3:
        raise StatsError(f"need at least 3 peaks inside {window} for a grid fit, got {len(p)}")
    gaps = np.diff(p)
    k = np.concatenate([[0], np.cumsum(np.maximum(1, np.round(gaps / np.median(gaps))))])
    spacing, offset = np.polyfit(k, p, 1)
    return float(spacing), float(offset)


def _parabola_vertex(ys, ts):
    a, b, _ = np.polyfit(ys - ys[1], ts, 2)
    if a == 0:
        return float(ys[1])
    v = ys[1] - b / (2 * a)
    return float(np.clip(v, ys[0], ys[2]))


def lyapunov_local(dmap, window=1.0, floor=LYAPUNOV_FLOOR):
    """Windowed mean of ``ln|lambda_c * dS/dy|`` at every good sample.

    ``window`` is the full width in lambda_c.  Slopes below ``floor`` are
    clamped so folds contribute ``ln(floor)`` instead of ``-inf``.
    Returns ``(y, ell)`` arrays.
    """
    logs = np.log(np.maximum(np.abs(dmap.slope), floor))
    y = dmap.y
    ell = np.empty_like(y)
    lo = np.searchsorted(y, y - 0.5 * window, side="left")
    hi = np.searchsorted(y, y + 0.5 * window, side="right")
    cs = np.concatenate([[0.0], np.cumsum(logs)])
    ell = (cs[hi] - cs[lo]) / (hi - lo)
    return y.copy(), ell


def lyapunov_global(dmap, floor=LYAPUNOV_FLOOR):
    """Trapezoid average of ``ln|lambda_c dS/dy|`` over the sampled range."""
    logs = np.log(np.maximum(np.abs(dmap.slope), floor))
    return float(np.trapezoid(logs, dmap.y) / (dmap.y[-1] - dmap.y[0]))


@dataclass
class SmoothnessReport:
    monotone: bool              # no slope sign change where rho_in > threshold
    nondifferentiable: object   # True / False / None (inconclusive)
    variance_ratios: tuple
    mean_lyapunov: float
    verdict: str


def smoothness_classifier(dmap, rho_in=None, weight_threshold=1e-3, ratio_threshold=1.5,
                          min_samples=16):
    """Check which condition for a smooth diffraction pattern the map meets.

    Condition 1: the slope never changes sign where the impact-parameter
    weight ``rho_in(y)`` exceeds ``weight_threshold``.  Condition 2, a proxy
    for nondifferentiability: the variance of finite-difference slopes keeps
    growing as the y-sampling is refined (ratio above ``ratio_threshold`` for
    both of two successive 2x refinements).
    """
    y, th = dmap.y, dmap.theta
    wts = np.ones_like(y) if rho_in is None else np.asarray(rho_in(y), dtype=float)
    d = np.diff(th) / np.diff(y)
    mid_w = np.minimum(wts[1:], wts[:-1])
    active = mid_w > weight_threshold
    signs = np.sign(d[active])
    monotone = bool(len(signs) > 0 and (np.all(signs > 0) or np.all(signs < 0)))

    if len(y) < min_samples:
        nondiff = None
        ratios = ()
    else:
        v = [float(np.var(np.diff(th[::s]) / np.diff(y[::s]))) for s in (1, 2, 4)]
        ratios = (v[0] / v[1] if v[1] > 0 else math.inf, v[1] / v[2] if v[2] > 0 else math.inf)
        nondiff = bool(ratios[0] > ratio_threshold and ratios[1] > ratio_threshold)

    ell = lyapunov_global(dmap)
    if monotone:
        verdict = "monotone"
    elif nondiff is None:
        verdict = "inconclusive"
    elif nondiff:
        verdict = "nondifferentiable"
    else:
        verdict = "sharp_peaks_expected"
    return SmoothnessReport(monotone, nondiff, ratios, ell, verdict)
