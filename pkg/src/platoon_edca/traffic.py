"""Two-wheeler gap acceptance and the resulting per-vehicle packet rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError

RATE_KINDS = ("linear", "quadratic", "sigmoidal", "logarithmic")


@dataclass(frozen=True)
class GapModelParams:
    alpha: float = -1.933
    beta0: float = 0.652

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta0)):
            raise ConfigError("gap model parameters must be finite", [("traffic.gap", "non-finite")])


@dataclass(frozen=True)
class RateModel:
    kind: str = "linear"
    k: float = 500.0

    def __post_init__(self):
        problems = []
        if self.kind not in RATE_KINDS:
            problems.append(("traffic.rate.kind", f"must be one of {RATE_KINDS}"))
        if not self.k > 0:
            problems.append(("traffic.rate.k", "must be > 0"))
        if problems:
            raise ConfigError("invalid rate model", problems)


@dataclass(frozen=True)
class TrafficMix:
    gap: GapModelParams = field(default_factory=GapModelParams)
    rate: RateModel = field(default_factory=RateModel)
    # periodic beacon rate (pkts/s); not given by the source model, 10 Hz is the usual beaconing rate
    lambda1: float = 10.0

    def __post_init__(self):
        if not self.lambda1 > 0:
            raise ConfigError("lambda1 must be positive", [("traffic.lambda1", "must be > 0")])


def gap_probability(y_star: float, lead_speed: float, p: GapModelParams = GapModelParams()) -> float:
    """Logistic probability that a two-wheeler takes the gap ``y_star`` at ``lead_speed``."""
    if not lead_speed > 0:
        raise ValueError("lead_speed must be positive")
    if y_star < 0:
        raise ValueError("y_star must be non-negative")
    x = p.alpha + p.beta0 * (y_star / lead_speed)
    # numerically stable logistic
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def lambda0(P: float, m: RateModel = RateModel()) -> float:
    """Event-driven (AC0) packet rate in pkts/s as a function of gap acceptance ``P``."""
    if not 0 <= P <= 1:
        raise ValueError(f"P must be a probability, got {P}")
    if m.kind == "linear":
        return m.k * P
    if m.kind == "quadratic":
        return m.k * (P * P + P)
    if m.kind == "sigmoidal":
        return m.k * math.tanh(P)
    if P >= 1:
        raise ValueError("logarithmic rate model is undefined at P = 1")
    # additive 1 pkt/s floor is intentional
    return 1.0 - m.k * math.log(1.0 - P)
