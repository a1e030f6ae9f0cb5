"""Shifted-exponential CDF fits, reliability and headway regressions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .distribution import DelayDistribution
from .errors import FitError


@dataclass(frozen=True)
class CdfFit:
    shift: float  # seconds
    rate: float  # 1/ms
    rms_error: float

    def cdf(self, t_seconds):
        x_ms = (np.asarray(t_seconds, dtype=float) - self.shift) * 1e3
        return np.where(x_ms >= 0, -np.expm1(-self.rate * np.maximum(x_ms, 0.0)), 0.0)


def shifted_exponential_cdf(x_ms, rate: float, shift_ms: float):
    x = np.asarray(x_ms, dtype=float) - shift_ms
    return np.where(x >= 0, -np.expm1(-rate * np.maximum(x, 0.0)), 0.0)


def cdf_fit(dist: DelayDistribution, t_tr: float) -> CdfFit:
    """Least-squares rate of ``1 - exp(-rate (x - T_tr))`` against the exact CDF.

    The shift is held at ``t_tr`` (seconds).  Residuals are taken at the
    atom support points and weighted by atom mass, so ``rms_error`` is the
    probability-weighted RMS distance between the two CDFs.
    """
    if dist.probs.size < 2:
        raise FitError("cannot fit a distribution concentrated on a single atom")
    shift_ms = t_tr * 1e3
    x = dist.delays_us / 1e3
    y = np.cumsum(dist.probs) / dist.total_mass
    mean_ms = dist.mean_ms()
    if not mean_ms > shift_ms:
        raise FitError(f"mean {mean_ms:.4g} ms does not exceed the shift {shift_ms:.4g} ms")

    weights = np.sqrt(dist.probs / dist.total_mass)

    def resid(theta):
        return (shifted_exponential_cdf(x, theta[0], shift_ms) - y) * weights

    # the objective can be multimodal on coarse lattices; start from the best grid point
    grid = np.logspace(-4, 4, 801)
    sse = [float(np.sum(resid([r]) ** 2)) for r in grid]
    guess = float(grid[int(np.argmin(sse))])
    res = least_squares(resid, x0=[guess], bounds=([1e-12], [np.inf]), xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if not res.success:
        raise FitError(f"rate fit failed: {res.message}")
    rate = float(res.x[0])
    rms = float(np.sqrt(np.sum(res.fun**2)))
    return CdfFit(shift=t_tr, rate=rate, rms_error=rms)


@dataclass(frozen=True)
class Reliability:
    exact: float | None
    fitted: float | None
    budget: float


def reliability(budget: float, dist: DelayDistribution | None = None, fit: CdfFit | None = None) -> Reliability:
    """Probability that the access delay stays within ``budget`` seconds.

    Reported from the exact distribution and/or from the fitted curve,
    whichever are supplied.
    """
    if not budget > 0:
        raise ValueError("critical packet delay must be positive")
    exact = float(dist.cdf(budget)) if dist is not None else None
    fitted = float(fit.cdf(budget)) if fit is not None else None
    return Reliability(exact=exact, fitted=fitted, budget=budget)


@dataclass(frozen=True)
class RateRegression:
    slope: float
    intercept: float

    def predict(self, y_star):
        return self.slope * np.asarray(y_star, dtype=float) + self.intercept


def headway_rate_regression(headways, rates) -> RateRegression:
    """Least-squares line ``rate = slope * y_star + intercept``."""
    y = np.asarray(headways, dtype=float)
    r = np.asarray(rates, dtype=float)
    if y.size < 3 or y.size != r.size:
        raise FitError("need at least three (headway, rate) pairs")
    A = np.column_stack([y, np.ones_like(y)])
    coef, _, rank, _ = np.linalg.lstsq(A, r, rcond=None)
    if rank < 2:
        raise FitError("headway grid is rank deficient (all headways equal)")
    return RateRegression(slope=float(coef[0]), intercept=float(coef[1]))


def exponential_rate_from_mean(dist: DelayDistribution, t_tr: float) -> float:
    """Rate of the shifted exponential with the same mean, in 1/ms."""
    excess = dist.mean_ms() - t_tr * 1e3
    return 1.0 / excess if excess > 0 else math.inf
