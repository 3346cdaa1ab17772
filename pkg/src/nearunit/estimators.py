"""LAD and OLS estimation of the autoregressive coefficient.

The LAD objective ``sum_i |y_i - rho * y_{i-1}|`` is convex and piecewise
linear in ``rho`` with kinks at ``y_i / y_{i-1}``.  Writing each term as
``|y_{i-1}| * |y_i / y_{i-1} - rho|`` shows that its minimizers are the
weighted medians of the kinks with weights ``|y_{i-1}|``; :func:`lad_solve`
computes that set exactly, including the flat segment when the minimizer is
not unique.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, RegimeError
from .ar1_sim import Ar1Config, FullPastInit, TruncatedInit

# relative tolerance on the slope when deciding that a segment is flat
FLAT_TOL = 1e-12

FIT_COLUMNS = ("rho_lad_lo", "rho_lad_hi", "rho_lad", "rho_ols", "f0_hat", "bandwidth", "t_stat", "norm_stat")


@dataclass(frozen=True)
class LadSolution:
    lo: float
    hi: float
    point: float
    objective: float


@dataclass(frozen=True)
class FitRecord:
    lad: LadSolution
    rho_ols: float
    f0_hat: float
    bandwidth: float
    t_stat: float
    norm_stat: float | None
    regime: str

    @property
    def rho_lad(self) -> float:
        return self.lad.point

    def row(self) -> dict:
        return {
            "rho_lad_lo": self.lad.lo,
            "rho_lad_hi": self.lad.hi,
            "rho_lad": self.lad.point,
            "rho_ols": self.rho_ols,
            "f0_hat": self.f0_hat,
            "bandwidth": self.bandwidth,
            "t_stat": self.t_stat,
            "norm_stat": math.nan if self.norm_stat is None else self.norm_stat,
        }


def lad_objective(x, y, rho) -> np.ndarray | float:
    """``sum_i |y_i - rho x_i|``; vectorized over ``rho``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.asarray(rho, dtype=float)
    out = np.abs(y[None, :] - np.multiply.outer(r.ravel(), x)).sum(axis=1)
    return float(out[0]) if r.ndim == 0 else out.reshape(r.shape)


def lad_solve(x, y) -> LadSolution:
    """Exact minimizer set of ``sum_i |y_i - rho x_i|`` over ``rho``.

    Parameters
    ----------
    x, y : array_like
        Regressors and responses of equal length.

    Returns
    -------
    LadSolution
        ``[lo, hi]`` is the full minimizer interval, ``point`` its midpoint.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    active = x != 0.0
    if not np.any(active):
        raise DegenerateError("all regressors are zero; the LAD objective is constant")

    # tiny |x| may overflow to +-inf; such kinks carry negligible weight and sort last
    with np.errstate(over="ignore"):
        kinks = y[active] / x[active]
    weights = np.abs(x[active])
    order = np.argsort(kinks, kind="stable")
    kinks = kinks[order]
    cum = np.cumsum(weights[order])
    total = cum[-1]

    # slope of the objective just to the right of kink k
    slope = 2.0 * cum - total
    tol = FLAT_TOL * total
    k = int(np.argmax(slope >= -tol))
    lo = kinks[k]
    if abs(slope[k]) <= tol and k + 1 < len(kinks):
        hi = kinks[k + 1]
    else:
        hi = lo
    point = 0.5 * (lo + hi)
    return LadSolution(float(lo), float(hi), float(point), lad_objective(x, y, point))


def lad_fit(y0: float, y) -> LadSolution:
    """LAD estimate of rho from a series ``y_0, y_1..y_n``."""
    y = np.asarray(y, dtype=float)
    return lad_solve(np.concatenate(([y0], y[:-1])), y)


def ols_fit(y0: float, y) -> float:
    y = np.asarray(y, dtype=float)
    x = np.concatenate(([y0], y[:-1]))
    den = float(x @ x)
    if den == 0.0:
        raise DegenerateError("sum of squared regressors is zero")
    return float(x @ y) / den


def residuals(y0: float, y, rho_hat: float) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y - rho_hat * np.concatenate(([y0], y[:-1]))


def silverman_bandwidth(samples) -> float:
    """``0.9 * min(sd, IQR/1.349) * n**(-1/5)``; falls back to sd when IQR is 0."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2:
        raise DegenerateError("need at least two samples for a bandwidth")
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.349) if iqr > 0 else sd
    bw = 0.9 * spread * n ** (-0.2)
    if not bw > 0:
        raise DegenerateError("zero bandwidth: all samples are identical")
    return bw


def f0_estimate(resid) -> tuple[float, float]:
    """Gaussian-kernel density estimate at zero and the bandwidth used."""
    r = np.asarray(resid, dtype=float)
    b = silverman_bandwidth(r)
    u = r / b
    f0 = float(np.exp(-0.5 * u * u).sum()) / (r.size * b * math.sqrt(2.0 * math.pi))
    return f0, b


def t_statistic(rho_lad: float, f0_hat: float, y0: float, y, rho_true: float) -> float:
    """``2 f0_hat sqrt(sum y_{i-1}^2) (rho_lad - rho_true)``."""
    y = np.asarray(y, dtype=float)
    x = np.concatenate(([y0], y[:-1]))
    return 2.0 * f0_hat * math.sqrt(float(x @ x)) * (rho_lad - rho_true)


def normalization(config: Ar1Config) -> float:
    """Rate multiplying ``rho_lad - rho`` in the regime's Cauchy limit."""
    rho, n = config.rho, config.n
    if isinstance(config.init, FullPastInit):
        return math.sqrt(n / (1.0 - rho * rho))
    if isinstance(config.init, TruncatedInit):
        return math.sqrt(n * config.kappa)
    raise RegimeError("normalized statistic is defined only for full-past or truncated starts")


def normalized_stat(rho_lad: float, f0_hat: float, config: Ar1Config) -> float:
    """``2 sigma f0_hat * rate * (rho_lad - rho)`` with the true sigma."""
    return 2.0 * config.innovation.sigma * f0_hat * normalization(config) * (rho_lad - config.rho)


def regime_of(config: Ar1Config) -> str:
    if isinstance(config.init, FullPastInit):
        return "near-stationary"
    if isinstance(config.init, TruncatedInit):
        return "near-explosive"
    return "local"


def fit_series(y0: float, y, config: Ar1Config | None = None, rho_true: float | None = None) -> FitRecord:
    """Run every estimator on one path.

    The t-type statistic is centred at ``rho_true``, which defaults to
    ``config.rho``; at least one of the two must be given.
    """
    if rho_true is None:
        if config is None:
            raise ValueError("fit_series needs config or rho_true")
        rho_true = config.rho
    lad = lad_fit(y0, y)
    rho_ols = ols_fit(y0, y)
    f0_hat, bw = f0_estimate(residuals(y0, y, lad.point))
    t = t_statistic(lad.point, f0_hat, y0, y, rho_true)
    norm = None
    regime = "unspecified"
    if config is not None:
        regime = regime_of(config)
        if regime != "local":
            norm = normalized_stat(lad.point, f0_hat, config)
    return FitRecord(lad, rho_ols, f0_hat, bw, t, norm, regime)


def knight_integral(x, y):
    """Closed form of ``int_0^y (1{x <= s} - 1{x <= 0}) ds``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pos = (y > 0) & (x > 0) & (x <= y)
    neg = (y < 0) & (x < 0) & (x >= y)
    return np.where(pos, y - x, 0.0) + np.where(neg, x - y, 0.0)


def knight_residual(x, y):
    """``|x - y| - |x| - (-y sign(x) + 2 G(x, y))``; zero for ``x != 0``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.abs(x - y) - np.abs(x) - (-y * np.sign(x) + 2.0 * knight_integral(x, y))
