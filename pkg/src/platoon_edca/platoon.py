"""Delayed car-following dynamics of a connected platoon.

The platoon follows the full velocity difference (FVD) law with a common
feedback delay; ``l = 0`` turns it into the modified optimal velocity
model (MOVM).  Headways and relative velocities are the state variables
and the optimal velocity function is the Bando ``tanh`` form.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import (
    ConfigError,
    InvalidEquilibriumError,
    NoRealRootError,
    RootFindingError,
)

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class OvfParams:
    v0: float
    y_m: float = 5.0
    y_tilde: float = 10.0

    def __post_init__(self):
        if not self.y_tilde > 0:
            raise ConfigError("y_tilde must be positive", [("ovf.y_tilde", "must be > 0")])
        if not self.v0 > 0:
            raise ConfigError("v0 must be positive", [("ovf.v0", "must be > 0")])
        if not self.y_m >= 0:
            raise ConfigError("y_m must be non-negative", [("ovf.y_m", "must be >= 0")])


@dataclass(frozen=True)
class PlatoonModel:
    """Car-following parameters.  ``l == 0`` selects MOVM, ``l > 0`` FVD."""

    a: float = 5.0
    l: float = 2.0
    ovf: OvfParams | None = None
    lead_speed: float = 25.0
    n_vehicles: int = 1
    tau: float = 0.0

    def __post_init__(self):
        problems = []
        if not self.a > 0:
            problems.append(("platoon.a", "must be > 0"))
        if not self.l >= 0:
            problems.append(("platoon.l", "must be >= 0"))
        if not self.lead_speed > 0:
            problems.append(("platoon.lead_speed", "must be > 0"))
        if int(self.n_vehicles) != self.n_vehicles or self.n_vehicles < 1:
            problems.append(("platoon.n_vehicles", "must be an integer >= 1"))
        if not self.tau >= 0:
            problems.append(("platoon.tau", "must be >= 0"))
        if problems:
            raise ConfigError("invalid platoon model", problems)

    @property
    def kind(self) -> str:
        return "movm" if self.l == 0 else "fvd"

    def with_equilibrium(self, y_star: float, y_m: float = 5.0, y_tilde: float = 10.0) -> PlatoonModel:
        """Copy of the model whose OVF puts the equilibrium headway at ``y_star``."""
        if self.ovf is not None:
            y_m, y_tilde = self.ovf.y_m, self.ovf.y_tilde
        v0 = solve_v0_for_equilibrium(y_star, self.lead_speed, y_m, y_tilde)
        return replace(self, ovf=OvfParams(v0=v0, y_m=y_m, y_tilde=y_tilde))


@dataclass(frozen=True)
class Equilibrium:
    headway_star: float
    v_prime: float
    d_tilde: float


@dataclass(frozen=True)
class DdeTrajectory:
    times: np.ndarray
    headway_perturbations: np.ndarray  # shape (n_samples, n_vehicles)
    relative_velocities: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if self.headway_perturbations.shape[0] != n or self.relative_velocities.shape[0] != n:
            raise ValueError("time and state arrays differ in length")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")


class Convergence(str, Enum):
    NON_OSCILLATORY = "non_oscillatory"
    OSCILLATORY = "oscillatory"
    DIVERGING = "diverging"


def ovf_velocity(y, p: OvfParams):
    """Bando optimal velocity ``V0 (tanh((y - y_m)/y~) + tanh(y_m/y~))``."""
    return p.v0 * (np.tanh((y - p.y_m) / p.y_tilde) + math.tanh(p.y_m / p.y_tilde))


def ovf_slope(y, p: OvfParams):
    return p.v0 / p.y_tilde / np.cosh((y - p.y_m) / p.y_tilde) ** 2


def solve_v0_for_equilibrium(y_star: float, lead_speed: float, y_m: float, y_tilde: float) -> float:
    """Speed scale V0 that makes ``y_star`` the equilibrium headway at ``lead_speed``."""
    if not y_star > 0:
        raise InvalidEquilibriumError(f"equilibrium headway must be positive, got {y_star}")
    bracket = math.tanh((y_star - y_m) / y_tilde) + math.tanh(y_m / y_tilde)
    if not bracket > 0:
        raise InvalidEquilibriumError(
            f"no positive V0 reaches speed {lead_speed} at headway {y_star} "
            f"(tanh bracket = {bracket:.3g})"
        )
    return lead_speed / bracket


def equilibrium(model: PlatoonModel, y_star: float) -> Equilibrium:
    if model.ovf is None:
        raise InvalidEquilibriumError("model has no OVF parameters; call with_equilibrium first")
    v_prime = float(ovf_slope(y_star, model.ovf))
    d_tilde = model.a * v_prime / (model.a + model.l)
    return Equilibrium(headway_star=y_star, v_prime=v_prime, d_tilde=d_tilde)


def critical_delay(model: PlatoonModel, eq: Equilibrium) -> float:
    """Largest feedback delay for which the headways converge without oscillating.

    Closed form obtained by forcing a real characteristic root at
    ``sigma = d~(-2 - sqrt 2)``.
    """
    if not eq.d_tilde > 0:
        raise NoRealRootError(f"d_tilde must be positive, got {eq.d_tilde}")
    sigma = eq.d_tilde * (-2.0 - SQRT2)
    arg = (-eq.d_tilde * (model.a + model.l) * (-2.0 - SQRT2) - model.a * eq.v_prime) / sigma**2
    if not arg > 0:
        raise NoRealRootError(
            f"logarithm argument {arg:.6g} is not positive; no real root at sigma={sigma:.6g}"
        )
    return math.log(arg) / sigma


def real_root_conditions(model: PlatoonModel, eq: Equilibrium, sigma: float, tau: float):
    """Residuals of the two conditions for a purely real characteristic root.

    Returns ``(squared_sum, uniqueness)`` as relative residuals:
    ``(sigma (a+l) + a V')^2 = sigma^4 e^{2 sigma tau}`` and
    ``2 sigma^2 e^{2 sigma tau} = (a+l)^2``.
    """
    al = model.a + model.l
    lhs1 = (sigma * al + model.a * eq.v_prime) ** 2
    rhs1 = sigma**4 * math.exp(2 * sigma * tau)
    lhs2 = 2 * sigma**2 * math.exp(2 * sigma * tau)
    rhs2 = al**2
    return (lhs1 - rhs1) / rhs1, (lhs2 - rhs2) / rhs2


def _char(lam, tau, al, q):
    e = cmath.exp(-lam * tau)
    f = lam * lam + (al * lam + q) * e
    df = 2 * lam + (al - tau * (al * lam + q)) * e
    return f, df


def _newton(lam, tau, al, q, max_iter=100, tol=1e-13):
    for _ in range(max_iter):
        f, df = _char(lam, tau, al, q)
        if df == 0:
            raise RootFindingError("zero derivative in Newton iteration", lam)
        step = f / df
        lam -= step
        if abs(step) <= tol * max(1.0, abs(lam)):
            f, _ = _char(lam, tau, al, q)
            if abs(f) <= 1e-8 * max(1.0, abs(lam) ** 2):
                return lam
            break
    raise RootFindingError(f"Newton did not converge at tau={tau}", lam)


def characteristic_roots(model: PlatoonModel, eq: Equilibrium, tau: float, n_steps: int = 200) -> complex:
    """Rightmost root of ``l^2 + (a+l) l e^{-l tau} + a V' e^{-l tau} = 0``.

    Both roots of the delay-free quadratic are continued in ``n_steps``
    increments of the delay with Newton corrections.  Roots that enter from
    the far left half-plane are picked up by a seeded search at the final
    delay; the rightmost of everything found is returned (upper half-plane
    member of a complex pair).
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    al = model.a + model.l
    q = model.a * eq.v_prime
    disc = cmath.sqrt(al * al - 4 * q)
    quad = [(-al + disc) / 2, (-al - disc) / 2]
    if tau == 0:
        return _canonical(max(quad, key=lambda z: (z.real, abs(z.imag))))

    tracked = []
    for lam in quad:
        # nudge off the real axis so a coalescing pair can split into complex roots
        lam = complex(lam.real, lam.imag if lam.imag != 0 else 1e-7)
        try:
            for t in np.linspace(tau / n_steps, tau, n_steps):
                lam = _newton(lam, t, al, q)
            tracked.append(lam)
        except RootFindingError:
            continue

    scale = max(abs(al), math.sqrt(q), 1.0 / tau)
    for re in np.linspace(-6 * scale, scale, 15):
        for im in np.linspace(0.0, 6 * scale + 2 * math.pi / tau, 15):
            try:
                tracked.append(_newton(complex(re, im), tau, al, q))
            except RootFindingError:
                continue
    if not tracked:
        raise RootFindingError(f"no characteristic root located at tau={tau}", None)
    best = max(tracked, key=lambda z: z.real)
    # prefer the real representative when a real root and a complex root tie
    ties = [z for z in tracked if abs(z.real - best.real) < 1e-9 * max(1.0, abs(best.real))]
    return _canonical(min(ties, key=lambda z: abs(z.imag)))


def _canonical(z: complex) -> complex:
    if abs(z.imag) < 1e-7 * max(1.0, abs(z.real)):
        return complex(z.real, 0.0)
    return complex(z.real, abs(z.imag))


def simulate_dde(
    model: PlatoonModel,
    y_star: float,
    perturbation,
    horizon: float,
    dt: float,
    linearized: bool = True,
    check_horizon: bool = True,
) -> DdeTrajectory:
    """Integrate the delayed platoon equations from a constant history.

    ``perturbation`` is the initial headway offset ``u`` in metres, either a
    scalar (applied to the first follower) or one value per vehicle.  The
    history for ``t <= 0`` is held at that offset with zero relative
    velocity.  Uses fixed-step RK4 with linear interpolation into the delay
    buffer; ``linearized=False`` integrates the nonlinear equations.
    """
    n = int(model.n_vehicles)
    tau = model.tau
    if dt <= 0:
        raise ConfigError("dt must be positive", [("dde.dt", "must be > 0")])
    if tau > 0 and dt > tau / 10 + 1e-15:
        raise ConfigError(
            f"step {dt} too large for delay {tau}", [("dde.dt", "must be <= tau/10")]
        )
    if model.ovf is None or not math.isclose(float(ovf_velocity(y_star, model.ovf)), model.lead_speed, rel_tol=1e-9):
        model = model.with_equilibrium(y_star)
    eq = equilibrium(model, y_star)
    if check_horizon and horizon < 20 / eq.d_tilde:
        raise ConfigError(
            f"horizon {horizon} shorter than 20/d_tilde = {20 / eq.d_tilde:.3g}",
            [("dde.horizon", "must be >= 20/d_tilde")],
        )

    u0 = np.zeros(n)
    if np.ndim(perturbation) == 0:
        u0[0] = float(perturbation)
    else:
        u0[:] = np.asarray(perturbation, dtype=float)

    a, l = model.a, model.l
    vp = eq.v_prime
    ovf = model.ovf

    def rhs(u, v, ud, vd):
        du = v
        dv = np.empty(n)
        if linearized:
            dv[0] = -a * vp * ud[0] - (a + l) * vd[0]
            if n > 1:
                dv[1:] = a * vp * (ud[:-1] - ud[1:]) - a * vd[1:] + l * (vd[:-1] - vd[1:])
        else:
            vy = ovf_velocity(y_star + ud, ovf)
            # constant-speed leader: second derivative of its position is zero
            dv[0] = a * (model.lead_speed - vy[0] - vd[0]) - l * vd[0]
            if n > 1:
                dv[1:] = a * (vy[:-1] - vy[1:] - vd[1:]) + l * (vd[:-1] - vd[1:])
        return du, dv

    steps = int(math.ceil(horizon / dt - 1e-9))
    times = np.arange(steps + 1) * dt
    U = np.empty((steps + 1, n))
    V = np.empty((steps + 1, n))
    U[0], V[0] = u0, 0.0

    def delayed(k, frac):
        """State at time (k + frac) * dt - tau, from history."""
        s = (k + frac) - tau / dt
        if s <= 0:
            return u0, np.zeros(n)
        i = int(math.floor(s))
        w = s - i
        if w < 1e-12 or i >= k:
            i = min(i, k)
            return U[i], V[i]
        return U[i] * (1 - w) + U[i + 1] * w, V[i] * (1 - w) + V[i + 1] * w

    def stage(u, v, d):
        return rhs(u, v, u, v) if d is None else rhs(u, v, *d)

    for k in range(steps):
        u, v = U[k], V[k]
        if tau > 0:
            d0, dh, d1 = delayed(k, 0.0), delayed(k, 0.5), delayed(k, 1.0)
        else:
            d0 = dh = d1 = None
        k1u, k1v = stage(u, v, d0)
        k2u, k2v = stage(u + dt / 2 * k1u, v + dt / 2 * k1v, dh)
        k3u, k3v = stage(u + dt / 2 * k2u, v + dt / 2 * k2v, dh)
        k4u, k4v = stage(u + dt * k3u, v + dt * k3v, d1)
        U[k + 1] = u + dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        V[k + 1] = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)

    return DdeTrajectory(times=times, headway_perturbations=U, relative_velocities=V)


def oscillation_detector(traj: DdeTrajectory, settle_fraction: float = 0.2) -> Convergence:
    """Classify the first follower's headway perturbation.

    Diverging when the peak over the last 10 % of samples exceeds the peak
    over the first 10 %; otherwise oscillatory iff ``u_1`` changes sign after
    the first ``settle_fraction`` of the horizon.  Samples below ``1e-9`` of
    the overall peak are treated as zero.
    """
    u = np.asarray(traj.headway_perturbations)
    u = u[:, 0] if u.ndim == 2 else u
    if u.size == 0:
        raise ValueError("empty trajectory")
    tenth = max(1, u.size // 10)
    if np.max(np.abs(u[-tenth:])) > np.max(np.abs(u[:tenth])):
        return Convergence.DIVERGING
    peak = np.max(np.abs(u))
    tail = u[int(settle_fraction * u.size):]
    signs = np.sign(np.where(np.abs(tail) > 1e-9 * peak, tail, 0.0))
    signs = signs[signs != 0]
    crossings = int(np.count_nonzero(signs[1:] != signs[:-1]))
    return Convergence.OSCILLATORY if crossings else Convergence.NON_OSCILLATORY


def critical_delay_curve(model: PlatoonModel, headways, y_m: float = 5.0, y_tilde: float = 10.0):
    """``[(y_star, tau_cr)]`` over a headway grid."""
    out = []
    for y in headways:
        m = model.with_equilibrium(float(y), y_m, y_tilde)
        out.append((float(y), critical_delay(m, equilibrium(m, float(y)))))
    return out


def packet_delay_budget(tau_cr: float, fraction: float = 0.10) -> float:
    """Share of the feedback-delay bound available to the channel."""
    if not 0 < fraction <= 1:
        raise ConfigError("delay_budget_fraction must lie in (0, 1]", [("delay_budget_fraction", "out of range")])
    return fraction * tau_cr
