"""Coupled AC0/AC1 Markov-chain fixed point for a single contention domain."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from .distribution import DelayDistribution, access_delay_distribution, service_jet
from .edca import EdcaParams, aifs_gap, arrival_probabilities, backoff_stages
from .errors import ConvergenceError, DegenerateRegimeError

TOL = 1e-10
MAX_ITER = 10_000
DAMPING = 0.5


@dataclass(frozen=True)
class FixedPointSolution:
    omega0: float
    omega1: float
    tau0: float
    tau1: float
    tau_total: float
    pb0: float
    pb1: float
    pa0: float
    pa1: float
    rho0: float
    rho1: float
    n_cs: int
    iterations: int
    residual: float
    mean_us: tuple[float, float] = (0.0, 0.0)
    var_us2: tuple[float, float] = (0.0, 0.0)
    saturated: tuple[bool, bool] = (False, False)

    @property
    def pv0(self) -> float:
        return 0.0

    @property
    def pv1(self) -> float:
        return self.omega0


def neighbour_idle_probability(tau_total: float, n_cs: int, terms: int | None = None) -> float:
    """Probability that no neighbour transmits, with a Poisson(N_cs - 1) neighbour count.

    With ``terms`` set, the Poisson series is summed explicitly instead of
    using its closed form ``exp(-tau (N_cs - 1))``.
    """
    lam = n_cs - 1
    if terms is None:
        return math.exp(-tau_total * lam)
    if lam == 0:
        return 1.0
    # sum_k (1-tau)^k lam^k e^{-lam} / k! = e^{-tau lam} * sum_k Poisson((1-tau) lam) pmf
    mu = (1 - tau_total) * lam
    return math.exp(-tau_total * lam) * float(np.sum(poisson.pmf(np.arange(terms), mu)))


def blocking_probability(omega_other: float, tau_total: float, n_cs: int, aifs_slots: int) -> float:
    """Probability a backoff step is blocked by a neighbour or by the station's other AC."""
    idle = neighbour_idle_probability(tau_total, n_cs) * (1 - omega_other)
    return 1 - idle ** (aifs_slots + 1)


def _geom(r: float, n: int) -> float:
    """``sum_{j<n} r^j``, exact at ``r = 1``."""
    if n <= 0:
        return 0.0
    if abs(1 - r) < 1e-12:
        return float(n)
    return (1 - r**n) / (1 - r)


def omega0_closed_form(pb0: float, pa0: float, rho0: float, w00: int) -> float:
    if pb0 >= 1:
        raise DegenerateRegimeError(f"AC0 blocking probability {pb0} leaves the backoff chain absorbing")
    idle = _idle_term(rho0, pa0, "AC0")
    return 1.0 / (1.0 + (w00 - 1) / (2 * (1 - pb0)) + idle)


def omega1_closed_form(pb1: float, pa1: float, rho1: float, pv1: float, p: EdcaParams) -> float:
    if pb1 >= 1:
        raise DegenerateRegimeError(f"AC1 blocking probability {pb1} leaves the backoff chain absorbing")
    L, M = p.retry_limit, backoff_stages(p)
    w10 = p.window(1)
    g = _geom(pv1, L + 1)
    # sum_{j=1}^{M} (2 pv)^j W10 - sum_{j=1}^{M} pv^j + (2^M W10 - 1) sum_{j=M+1}^{L} pv^j
    doubled = w10 * 2 * pv1 * _geom(2 * pv1, M)
    plain = pv1 * _geom(pv1, M)
    flat = (2**M * w10 - 1) * pv1 ** (M + 1) * _geom(pv1, L - M)
    idle = _idle_term(rho1, pa1, "AC1")
    denom = g + (w10 - 1) / (2 * (1 - pb1)) + (doubled - plain + flat) / (2 * (1 - pb1)) + idle
    return g / denom


def _idle_term(rho: float, pa: float, label: str) -> float:
    if rho >= 1:
        return 0.0
    if pa <= 0:
        raise DegenerateRegimeError(f"{label} arrival probability is zero while utilisation {rho} < 1")
    return (1 - rho) / pa


def omega_closed_forms(pb0, pb1, pa0, pa1, rho0, rho1, p: EdcaParams, pv1: float = 0.0) -> tuple[float, float]:
    """Internal transmission probabilities ``(omega0, omega1)``.

    ``pv1`` is the AC1 virtual-collision probability, which the coupled
    model sets to ``omega0``.
    """
    return omega0_closed_form(pb0, pa0, rho0, p.window(0)), omega1_closed_form(pb1, pa1, rho1, pv1, p)


def _update(w0, w1, lambdas, pas, p, n_cs, a_gaps):
    tau0 = w0
    tau1 = w1 * (1 - w0)
    tau = tau0 + tau1
    pb0 = blocking_probability(w1, tau, n_cs, a_gaps[0])
    pb1 = blocking_probability(w0, tau, n_cs, a_gaps[1])
    j0 = service_jet(p, 0, pb0)
    j1 = service_jet(p, 1, pb1, pv1=w0)
    means = (j0.mean() * 1e-6, j1.mean() * 1e-6)
    raw_rho = (lambdas[0] * means[0], lambdas[1] * means[1])
    rho = tuple(min(1.0, r) for r in raw_rho)
    n0 = omega0_closed_form(pb0, pas[0], rho[0], p.window(0)) if lambdas[0] > 0 else 0.0
    n1 = omega1_closed_form(pb1, pas[1], rho[1], w0, p) if lambdas[1] > 0 else 0.0
    info = dict(
        tau0=tau0, tau1=tau1, tau_total=tau, pb0=pb0, pb1=pb1, rho0=rho[0], rho1=rho[1],
        mean_us=(j0.mean(), j1.mean()), var_us2=(j0.variance(), j1.variance()),
        saturated=(raw_rho[0] >= 1, raw_rho[1] >= 1),
    )
    return n0, n1, info


def solve_fixed_point(
    lambda0: float,
    lambda1: float,
    p: EdcaParams,
    n_cs: int,
    tol: float = TOL,
    max_iter: int = MAX_ITER,
    damping: float = DAMPING,
) -> FixedPointSolution:
    """Damped Picard iteration on ``(omega0, omega1)``.

    Each sweep derives transmission and blocking probabilities, the mean
    access delays, utilisations ``rho = lambda * T_S`` (capped at one) and
    new omegas.  Stops when the largest update falls below ``tol``.
    """
    pa0, pa1 = arrival_probabilities(lambda0, lambda1, p.slot)
    a_gaps = (aifs_gap(p, 0), aifs_gap(p, 1))
    lambdas = (lambda0, lambda1)
    w0 = 0.01 if lambda0 > 0 else 0.0
    w1 = 0.01 if lambda1 > 0 else 0.0
    history = []
    for it in range(1, max_iter + 1):
        n0, n1, info = _update(w0, w1, lambdas, (pa0, pa1), p, n_cs, a_gaps)
        residual = max(abs(n0 - w0), abs(n1 - w1))
        history.append(residual)
        if residual < tol:
            # polish undamped while it still contracts, so omega and the
            # reported blocking/utilisation agree to near machine precision
            for _ in range(100):
                m0, m1, info = _update(n0, n1, lambdas, (pa0, pa1), p, n_cs, a_gaps)
                step = max(abs(m0 - n0), abs(m1 - n1))
                if step >= residual:
                    break
                n0, n1, residual = m0, m1, step
                it += 1
            info = _update(n0, n1, lambdas, (pa0, pa1), p, n_cs, a_gaps)[2]
            return FixedPointSolution(
                omega0=n0, omega1=n1, pa0=pa0, pa1=pa1, n_cs=n_cs,
                iterations=it, residual=residual, **info,
            )
        w0 = (1 - damping) * w0 + damping * n0
        w1 = (1 - damping) * w1 + damping * n1
    raise ConvergenceError(
        f"fixed point did not converge in {max_iter} iterations (last residual {history[-1]:.3g})",
        residuals=history,
    )


def delay_pgf(sol: FixedPointSolution, p: EdcaParams, ac: int) -> DelayDistribution:
    """Exact access delay distribution of AC ``ac`` at a solved operating point."""
    if ac == 0:
        return access_delay_distribution(p, 0, sol.pb0)
    return access_delay_distribution(p, 1, sol.pb1, pv1=sol.pv1)
