"""Least-squares and Poisson-likelihood fits for the virtual instruments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .errors import FitError

_LN2 = math.log(2.0)


@dataclass
class FitResult:
    model: str
    parameters: dict[str, float]
    uncertainties: dict[str, float]
    reduced_chi2: float
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.parameters = {k: float(v) for k, v in self.parameters.items()}
        self.uncertainties = {k: float(v) for k, v in self.uncertainties.items()}
        self.reduced_chi2 = float(self.reduced_chi2)

    def __getitem__(self, name: str) -> float:
        return self.parameters[name]

    def error(self, name: str) -> float:
        return self.uncertainties[name]

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "parameters": dict(self.parameters),
            "uncertainties": dict(self.uncertainties),
            "reduced_chi2": self.reduced_chi2,
            **self.extra,
        }


def poisson_sigma(counts) -> np.ndarray:
    return np.sqrt(np.maximum(np.asarray(counts, dtype=float), 1.0))


def _least_squares(model, x, y, sigma, p0, bounds=(-np.inf, np.inf), max_nfev=2000):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)

    def resid(p):
        return (model(x, *p) - y) / sigma

    try:
        res = optimize.least_squares(
            resid, p0, bounds=bounds, method="trf", x_scale="jac",
            ftol=1e-14, xtol=1e-14, gtol=1e-14, max_nfev=max_nfev,
        )
    except (ValueError, FloatingPointError) as exc:
        raise FitError(f"fit failed: {exc}", {"p0": list(p0)}) from exc
    if not res.success or not np.all(np.isfinite(res.x)):
        raise FitError(
            f"fit did not converge: {res.message}",
            {"p0": list(p0), "nfev": res.nfev, "status": res.status, "x": res.x.tolist()},
        )
    dof = max(len(y) - len(p0), 1)
    chi2 = float(np.sum(res.fun**2))
    try:
        cov = np.linalg.pinv(res.jac.T @ res.jac)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular Jacobian at the optimum", {"x": res.x.tolist()}) from exc
    err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return res.x, err, chi2 / dof, cov


def _count_fit(model, x, counts, p0, bounds, passes=4):
    """Fit raw counts: a sqrt(n)-weighted start, then refits weighted by the model.

    Re-solving with weights 1/model(x) converges to the Poisson maximum
    likelihood estimate; the sqrt(n) start alone biases widths low when
    bins hold a few counts.
    """
    x = np.asarray(x, dtype=float)
    p, err, rchi2, cov = _least_squares(model, x, counts, poisson_sigma(counts), p0, bounds)
    for _ in range(passes):
        sigma = np.sqrt(np.maximum(model(x, *p), 1e-2))
        q, err, rchi2, cov = _least_squares(model, x, counts, sigma, p, bounds)
        done = np.allclose(q, p, rtol=1e-6, atol=0.0)
        p = q
        if done:
            break
    return p, err, rchi2, cov


def _require_bins(counts, minimum=5):
    if np.count_nonzero(np.asarray(counts) > 0) < minimum:
        raise FitError(f"need at least {minimum} non-empty bins")


def lorentzian_model(x, center, fwhm, amplitude, offset):
    h2 = 0.25 * fwhm * fwhm
    return offset + amplitude * h2 / ((x - center) ** 2 + h2)


def _half_max_width(x, y, base):
    peak = int(np.argmax(y))
    half = base + 0.5 * (y[peak] - base)
    above = np.flatnonzero(y >= half)
    width = x[above.max()] - x[above.min()] if above.size > 1 else 0.0
    return max(width, 2.0 * np.min(np.diff(np.sort(x))) if len(x) > 1 else 1.0)


def fit_lorentzian(x, counts, sigma=None) -> FitResult:
    """Fit ``offset + amplitude * L(x; center, fwhm)`` with a peak-normalised L.

    Without ``sigma`` the input is taken as raw counts and fitted by
    Poisson likelihood (iteratively reweighted least squares).

    ``x`` may be absolute optical frequencies; the fit runs on a centred,
    rescaled axis internally.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(counts, dtype=float)
    _require_bins(y)
    x_ref = x[int(np.argmax(y))]
    scale = float(np.ptp(x)) or 1.0
    u = (x - x_ref) / scale
    base = float(np.percentile(y, 10))
    p0 = [0.0, _half_max_width(u, y, base), float(y.max() - base), base]
    bounds = ([-np.inf, 1e-12, 0.0, -np.inf], [np.inf, np.inf, np.inf, np.inf])
    if sigma is None:
        p, err, rchi2, _ = _count_fit(lorentzian_model, u, y, p0, bounds)
    else:
        p, err, rchi2, _ = _least_squares(lorentzian_model, u, y, np.asarray(sigma, dtype=float), p0, bounds)
    names = ("center", "fwhm", "amplitude", "offset")
    factors = (scale, scale, 1.0, 1.0)
    params = {n: v * f for n, v, f in zip(names, p, factors)}
    params["center"] += x_ref
    errors = {n: e * f for n, e, f in zip(names, err, factors)}
    return FitResult("lorentzian", params, errors, rchi2)


# ---------------------------------------------------------------- antibunching

def _exp_bin_average(lo, hi, tau):
    """Mean of exp(-|t|/tau) over [lo, hi]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    lp, hp = np.clip(lo, 0.0, None), np.clip(hi, 0.0, None)
    ln, hn = np.clip(lo, None, 0.0), np.clip(hi, None, 0.0)
    integral = tau * (np.exp(-lp / tau) - np.exp(-hp / tau)) + tau * (np.exp(hn / tau) - np.exp(ln / tau))
    return integral / (hi - lo)


def exp_smeared(t, tau, sigma):
    """E[exp(-|t + X| / tau)] for X ~ N(0, sigma^2), in closed form."""
    t = np.asarray(t, dtype=float)
    if sigma <= 0:
        return np.exp(-np.abs(t) / tau)
    rt2s = math.sqrt(2.0) * sigma
    a = sigma * sigma / tau
    gauss = np.exp(-t * t / (2.0 * sigma * sigma))
    out = np.zeros_like(t)
    with np.errstate(over="ignore", invalid="ignore"):
        for sign in (-1.0, 1.0):
            z = (a + sign * t) / rt2s
            expo = 0.5 * a / tau + sign * t / tau
            term = np.where(
                z >= 0,
                gauss * special.erfcx(np.maximum(z, 0.0)),
                np.exp(np.minimum(expo, 0.0)) * special.erfc(np.minimum(z, 0.0)),
            )
            out += 0.5 * term
    return out


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _smeared_bin_average(lo, hi, tau, sigma):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    total = np.zeros_like(lo)
    # split bins straddling zero so each piece is smooth enough for Gauss-Legendre
    for a, b in ((lo, np.clip(hi, None, np.maximum(lo, 0.0))), (np.clip(lo, np.minimum(hi, 0.0), None), hi)):
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
        total += half * (exp_smeared(nodes, tau, sigma) @ _GL_W)
    return total / (hi - lo)


def antibunching_model(tau_edges, g2_floor, tau_ab, irf_sigma=0.0):
    """Bin-averaged 1 - (1 - g2_floor) * [exp(-|t|/tau_ab) (*) Gaussian(irf_sigma)]."""
    edges = np.asarray(tau_edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    if irf_sigma > 0:
        shape = _smeared_bin_average(lo, hi, tau_ab, irf_sigma)
    else:
        shape = _exp_bin_average(lo, hi, tau_ab)
    return 1.0 - (1.0 - g2_floor) * shape


def fit_antibunching(hist, irf_sigma: float = 0.0, tau0: float = 5e-9) -> FitResult:
    """Fit the antibunching dip of a :class:`CorrelationHistogram`.

    ``irf_sigma`` is the Gaussian width of the timing response on the delay
    variable (sqrt(2) x the per-detector jitter).  The fit returns the
    intrinsic ``tau_ab`` and floor ``g2_0_intrinsic``; ``g2_0`` is the
    model evaluated at zero delay with the timing response included, i.e.
    the value an ideal-resolution readout of the measured curve gives.
    """
    edges = np.asarray(hist.tau_edges, dtype=float)
    coinc = np.asarray(hist.coincidences, dtype=float)
    norm = np.broadcast_to(np.asarray(hist.normalization, dtype=float), coinc.shape)
    if np.any(norm <= 0):
        raise FitError("histogram normalisation must be positive")
    _require_bins(coinc)
    g2 = coinc / norm
    sigma = poisson_sigma(coinc) / norm
    unit = 1e-9
    e = edges / unit

    def model(_, floor, tau):
        return antibunching_model(e, floor, tau, irf_sigma / unit)

    p0 = [max(min(float(g2[len(g2) // 2]), 0.9), 0.0), tau0 / unit]
    bounds = ([-1.0, 1e-3], [1.0, np.inf])
    p, err, rchi2, cov = _least_squares(model, e[:-1], g2, sigma, p0, bounds)
    floor, tau = p

    def apparent(fl, ta):
        return 1.0 - (1.0 - fl) * float(exp_smeared(np.array(0.0), ta, irf_sigma / unit))

    g0 = apparent(floor, tau)
    h = 1e-6
    grad = np.array([
        (apparent(floor + h, tau) - apparent(floor - h, tau)) / (2 * h),
        (apparent(floor, tau + h) - apparent(floor, tau - h)) / (2 * h),
    ])
    g0_err = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    return FitResult(
        "antibunching",
        {"g2_0": g0, "tau_ab": tau * unit, "g2_0_intrinsic": floor},
        {"g2_0": g0_err, "tau_ab": err[1] * unit, "g2_0_intrinsic": err[0]},
        rchi2,
        {"irf_sigma": irf_sigma},
    )


# ---------------------------------------------------------------- spot / saturation

def gaussian_spot_model(xy, x0, y0, fwhm, amplitude, offset):
    x, y = xy
    return offset + amplitude * np.exp(-4.0 * _LN2 * ((x - x0) ** 2 + (y - y0) ** 2) / (fwhm * fwhm))


def fit_gaussian_spot(x_centers, y_centers, counts) -> FitResult:
    """Symmetric 2-D Gaussian plus constant; ``counts`` is indexed [iy, ix]."""
    counts = np.asarray(counts, dtype=float)
    _require_bins(counts.ravel())
    xx, yy = np.meshgrid(np.asarray(x_centers, float), np.asarray(y_centers, float))
    iy, ix = np.unravel_index(int(np.argmax(counts)), counts.shape)
    base = float(np.percentile(counts, 10))
    amp = float(counts.max() - base)
    above = counts >= base + 0.5 * amp
    px = abs(float(x_centers[1] - x_centers[0])) if len(x_centers) > 1 else 1.0
    w0 = max(2.0 * math.sqrt(above.sum() * px * px / math.pi), 2 * px)
    xy = np.vstack([xx.ravel(), yy.ravel()])
    p0 = [xx[iy, ix], yy[iy, ix], w0, amp, base]
    bounds = ([-np.inf, -np.inf, 1e-9, 0.0, -np.inf], [np.inf] * 5)
    p, err, rchi2, _ = _count_fit(gaussian_spot_model, xy, counts.ravel(), p0, bounds)
    names = ("x0", "y0", "fwhm", "amplitude", "offset")
    return FitResult("gaussian_spot", dict(zip(names, map(float, p))), dict(zip(names, map(float, err))), rchi2)


def saturation_model(power, r_inf, p_sat, offset):
    return offset + r_inf * power / (power + p_sat)


def fit_saturation(powers, rates, sigma) -> FitResult:
    """Fit ``offset + r_inf * s / (1 + s)`` with ``s = power / p_sat``."""
    powers = np.asarray(powers, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if len(powers) < 4:
        raise FitError("need at least four saturation points")
    scale = float(np.median(powers))
    u = powers / scale
    p0 = [float(rates.max()) * 1.2, 1.0, float(max(rates.min(), 0.0)) * 0.1]
    bounds = ([0.0, 1e-9, -np.inf], [np.inf, np.inf, np.inf])
    p, err, rchi2, _ = _least_squares(saturation_model, u, rates, sigma, p0, bounds)
    return FitResult(
        "saturation",
        {"r_inf": p[0], "p_sat": p[1] * scale, "offset": p[2]},
        {"r_inf": err[0], "p_sat": err[1] * scale, "offset": err[2]},
        rchi2,
    )


def linear_fit(x, y, sigma=None) -> FitResult:
    """Weighted straight line; used for Stark slopes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = None if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    (slope, intercept), cov = np.polyfit(x, y, 1, w=w, cov="unscaled" if sigma is not None else True)
    resid = (y - (slope * x + intercept)) * (w if w is not None else 1.0)
    dof = max(len(x) - 2, 1)
    return FitResult(
        "linear",
        {"slope": float(slope), "intercept": float(intercept)},
        {"slope": float(math.sqrt(cov[0, 0])), "intercept": float(math.sqrt(cov[1, 1]))},
        float(np.sum(resid**2) / dof),
    )
