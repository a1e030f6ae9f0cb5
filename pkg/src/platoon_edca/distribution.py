"""Exact MAC access delay distributions built from their generating functions.

Every backoff step costs either one idle slot or one blocked step
(``T_tr + AIFS``), so each distribution is a bivariate polynomial in
``x = z^slot`` and ``y = z^busy`` times a transmission shift.  Because all
steps share the same law, stage products are formed as polynomials in the
step variable and expanded binomially once, then mapped to integer
microsecond delays.

The moment path (:class:`Jet`) evaluates the same generating functions and
their first two derivatives at ``z = 1`` without building any atoms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .edca import EdcaParams, stage_windows
from .errors import TruncationError

MASS_TOL = 1e-9


@dataclass(frozen=True)
class DelayDistribution:
    """Sparse pmf over integer-microsecond delays."""

    delays_us: np.ndarray
    probs: np.ndarray
    truncation_loss: float = 0.0

    def __post_init__(self):
        if self.delays_us.shape != self.probs.shape:
            raise ValueError("delay and probability arrays differ in shape")
        if np.any(self.probs <= 0):
            raise ValueError("atom probabilities must be positive")
        if self.delays_us.size > 1 and np.any(np.diff(self.delays_us) <= 0):
            raise ValueError("delays must be strictly increasing")

    @property
    def atoms(self) -> list[tuple[float, float]]:
        """``[(delay_seconds, probability)]``."""
        return [(d * 1e-6, p) for d, p in zip(self.delays_us.tolist(), self.probs.tolist())]

    @property
    def total_mass(self) -> float:
        return float(self.probs.sum())

    def mean_us(self) -> float:
        return float(np.dot(self.delays_us, self.probs) / self.total_mass)

    def variance_us2(self) -> float:
        m = self.mean_us()
        return float(np.dot((self.delays_us - m) ** 2, self.probs) / self.total_mass)

    def mean_ms(self) -> float:
        return self.mean_us() / 1e3

    def std_ms(self) -> float:
        return float(np.sqrt(self.variance_us2())) / 1e3

    def cdf_us(self, t_us) -> np.ndarray:
        """P(delay <= t) for microsecond arguments."""
        c = np.cumsum(self.probs)
        idx = np.searchsorted(self.delays_us, np.asarray(t_us, dtype=float), side="right")
        return np.where(idx > 0, c[np.maximum(idx - 1, 0)], 0.0)

    def cdf(self, t_seconds) -> np.ndarray:
        return self.cdf_us(np.asarray(t_seconds, dtype=float) * 1e6)


@dataclass(frozen=True)
class Jet:
    """Value, first and second derivative of a generating function at ``z = 1``."""

    p: float
    d1: float
    d2: float

    @classmethod
    def power(cls, c: float) -> Jet:
        """``z^c``."""
        return cls(1.0, c, c * (c - 1.0))

    def __add__(self, o: Jet) -> Jet:
        return Jet(self.p + o.p, self.d1 + o.d1, self.d2 + o.d2)

    def __mul__(self, o):
        if isinstance(o, Jet):
            return Jet(self.p * o.p, self.d1 * o.p + self.p * o.d1, self.d2 * o.p + 2 * self.d1 * o.d1 + self.p * o.d2)
        return Jet(self.p * o, self.d1 * o, self.d2 * o)

    __rmul__ = __mul__

    def mean(self) -> float:
        return self.d1

    def variance(self) -> float:
        """``P''(1) + P'(1) - P'(1)^2``."""
        return self.d2 + self.d1 - self.d1**2


ZERO = Jet(0.0, 0.0, 0.0)
ONE = Jet(1.0, 0.0, 0.0)


def _step_jet(p: EdcaParams, ac: int, pb: float) -> Jet:
    return (1 - pb) * Jet.power(p.slot_us) + pb * Jet.power(p.busy_step_us(ac))


def _uniform_backoff_jet(step: Jet, w: int) -> Jet:
    acc, hk = ZERO, ONE
    for _ in range(w):
        acc = acc + hk
        hk = hk * step
    return acc * (1.0 / w)


def service_jet(p: EdcaParams, ac: int, pb: float, pv1: float = 0.0) -> Jet:
    """Moments of the access delay generating function for one access category."""
    tr = Jet.power(p.ttr_us)
    step = _step_jet(p, ac, pb)
    if ac == 0:
        return tr * _uniform_backoff_jet(step, p.window(0))
    stages = [_uniform_backoff_jet(step, w) for w in stage_windows(p)]
    acc, prod = ZERO, ONE
    for n, b in enumerate(stages):
        prod = prod * b
        acc = acc + (pv1**n) * prod
    return (1 - pv1) * tr * acc + (pv1 ** len(stages)) * prod


def _expand_steps(coef_h: np.ndarray, pb: float) -> np.ndarray:
    """Map ``sum_n c_n h^n`` with ``h = (1-pb) x + pb y`` to coefficients ``c[a, b]`` of ``x^a y^b``."""
    n = coef_h.size
    a = np.arange(n)[:, None]
    b = np.arange(n)[None, :]
    k = a + b
    inside = k < n
    return np.where(inside, coef_h[np.minimum(k, n - 1)] * binom.pmf(b, k, pb), 0.0)


def _uniform_backoff_poly(w: int, pb: float) -> np.ndarray:
    """Coefficients ``c[a, b]`` of ``x^a y^b`` in ``(1/w) sum_{k<w} ((1-pb) x + pb y)^k``."""
    return _expand_steps(np.full(w, 1.0 / w), pb)


def _to_distribution(parts, slot_us: int, busy_us: int) -> DelayDistribution:
    delays, probs = [], []
    for shift, coef in parts:
        a, b = np.nonzero(coef)
        delays.append(shift + a * slot_us + b * busy_us)
        probs.append(coef[a, b])
    d = np.concatenate(delays).astype(np.int64)
    q = np.concatenate(probs)
    keys, inv = np.unique(d, return_inverse=True)
    mass = np.bincount(inv, weights=q)
    keep = mass > 0
    dist = DelayDistribution(delays_us=keys[keep], probs=mass[keep])
    loss = abs(1.0 - dist.total_mass)
    if loss > MASS_TOL:
        raise TruncationError(f"distribution mass deviates from one by {loss:.3g}")
    return dist


def access_delay_distribution(p: EdcaParams, ac: int, pb: float, pv1: float = 0.0) -> DelayDistribution:
    """Exact access delay pmf for AC ``ac`` given its blocking probability.

    For AC1 the packet is retried after each virtual collision (probability
    ``pv1``) with the stage window, and discarded after ``retry_limit + 1``
    of them; the discarded branch carries no transmission time.
    """
    ttr, slot, busy = p.ttr_us, p.slot_us, p.busy_step_us(ac)
    if ac == 0:
        return _to_distribution([(ttr, _uniform_backoff_poly(p.window(0), pb))], slot, busy)
    # every stage is a polynomial in the single step variable h, so stages combine in 1-D
    prod = np.ones(1)
    served = np.zeros(1)
    for n, w in enumerate(stage_windows(p)):
        prod = np.convolve(prod, np.full(w, 1.0 / w))
        grown = np.zeros(prod.size)
        grown[: served.size] = served
        served = grown + (1 - pv1) * pv1**n * prod
    parts = [(ttr, _expand_steps(served, pb))]
    dropped = pv1 ** len(stage_windows(p))
    if dropped > 0:
        parts.append((0, dropped * _expand_steps(prod, pb)))
    return _to_distribution(parts, slot, busy)
