"""IEEE 802.11p EDCA access parameters and timing for two access categories.

AC0 carries event-driven safety messages and has a single backoff stage;
AC1 carries periodic beacons and doubles its window ``M`` times on virtual
collisions, up to ``retry_limit`` retries.  Durations are handled as whole
microseconds internally so that delay atoms have exact integer keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError


def to_us(seconds: float) -> int:
    """Round a duration to whole microseconds, halves rounded up."""
    return int(math.floor(seconds * 1e6 + 0.5))


@dataclass(frozen=True)
class EdcaParams:
    # AC0 values follow the 802.11p AC_VO defaults; AC1 values are the reference set
    cw_min: tuple[int, int] = (3, 15)
    cw_max: tuple[int, int] = (3, 31)
    aifsn: tuple[int, int] = (2, 3)
    retry_limit: int = 2
    sifs: float = 32e-6
    slot: float = 13e-6
    phy_header: float = 48.0  # bits
    mac_header: float = 112.0  # bits
    basic_rate: float = 1e6  # bit/s
    data_rate: float = 3e6  # bit/s
    mean_payload: float = 500.0  # bytes
    prop_delay: float = 2e-6
    tx_range: float = 500.0
    cs_range: float = 700.0

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(f"{k}: {v}" for k, v in problems), problems)

    def problems(self) -> list[tuple[str, str]]:
        out = []
        for i in (0, 1):
            if self.cw_min[i] < 0 or self.cw_max[i] < 0:
                out.append((f"edca.cw_min[{i}]", "contention windows must be non-negative"))
            if self.cw_min[i] > self.cw_max[i]:
                out.append((f"edca.cw_max[{i}]", f"CWmin {self.cw_min[i]} exceeds CWmax {self.cw_max[i]}"))
            if self.aifsn[i] < 0:
                out.append((f"edca.aifsn[{i}]", "must be >= 0"))
        ratio = (self.cw_max[1] + 1) / (self.cw_min[1] + 1)
        m = math.log2(ratio) if ratio > 0 else -1
        if ratio < 1 or abs(m - round(m)) > 1e-12:
            out.append(("edca.cw_max[1]", f"(CWmax+1)/(CWmin+1) = {ratio:g} is not a power of two"))
        elif self.retry_limit < round(m):
            out.append(("edca.retry_limit", f"retry limit {self.retry_limit} below doubling count {round(m)}"))
        if not self.aifsn[1] > self.aifsn[0]:
            out.append(("edca.aifsn[1]", "AC1 AIFSN must exceed AC0 AIFSN"))
        if self.retry_limit < 0:
            out.append(("edca.retry_limit", "must be >= 0"))
        for name in ("sifs", "slot", "basic_rate", "data_rate", "prop_delay", "tx_range", "cs_range"):
            if not getattr(self, name) > 0:
                out.append((f"edca.{name}", "must be > 0"))
        for name in ("phy_header", "mac_header", "mean_payload"):
            if getattr(self, name) < 0:
                out.append((f"edca.{name}", "must be >= 0"))
        if self.slot > 0 and to_us(self.slot) < 1:
            out.append(("edca.slot", "must be at least 1 microsecond"))
        return out

    @property
    def slot_us(self) -> int:
        return to_us(self.slot)

    @property
    def sifs_us(self) -> int:
        return to_us(self.sifs)

    @property
    def ttr_us(self) -> int:
        return to_us(transmission_time(self))

    def window(self, ac: int, stage: int = 0) -> int:
        """Backoff window size ``W`` (number of equally likely counter values)."""
        if ac == 0:
            return self.cw_min[0] + 1
        return 2 ** min(stage, backoff_stages(self)) * (self.cw_min[1] + 1)

    def busy_step_us(self, ac: int) -> int:
        """Cost of a blocked backoff step: one transmission plus the AC's AIFS."""
        return self.ttr_us + aifs_us(self, ac)


def transmission_time(p: EdcaParams) -> float:
    """Mean frame airtime in seconds: PHY header at basic rate, MAC frame at data rate, plus propagation."""
    return p.phy_header / p.basic_rate + (p.mac_header + 8.0 * p.mean_payload) / p.data_rate + p.prop_delay


def backoff_stages(p: EdcaParams) -> int:
    """Number of times the AC1 window may double."""
    ratio = (p.cw_max[1] + 1) / (p.cw_min[1] + 1)
    m = math.log2(ratio) if ratio > 0 else float("nan")
    if ratio < 1 or abs(m - round(m)) > 1e-12:
        raise ConfigError(
            f"(CWmax+1)/(CWmin+1) = {ratio:g} is not a power of two",
            [("edca.cw_max[1]", "not a power of two ratio")],
        )
    return int(round(m))


def stage_windows(p: EdcaParams) -> list[int]:
    """AC1 window per backoff stage ``j = 0..L``; flat at ``2^M W`` beyond stage M."""
    return [p.window(1, j) for j in range(p.retry_limit + 1)]


def aifs(p: EdcaParams, ac: int) -> float:
    return p.sifs + p.aifsn[ac] * p.slot


def aifs_us(p: EdcaParams, ac: int) -> int:
    return p.sifs_us + p.aifsn[ac] * p.slot_us


def aifs_gap(p: EdcaParams, ac: int) -> int:
    """Extra idle slots AC ``ac`` waits beyond AC0 (zero for AC0 itself)."""
    return p.aifsn[ac] - p.aifsn[0]


def contender_count(y_star: float, cs_range: float, platoon_size: int | None = None) -> int:
    """Vehicles within carrier-sense range on both sides, plus the station itself."""
    if not y_star > 0:
        raise ValueError("y_star must be positive")
    n = int(math.floor(2.0 * cs_range / y_star + 1e-9)) + 1
    if platoon_size is not None:
        n = min(n, int(platoon_size))
    return n


def arrival_probabilities(lambda0: float, lambda1: float, slot: float) -> tuple[float, float]:
    """Per-slot arrival probabilities: Poisson for AC0, periodic for AC1."""
    pa1 = lambda1 * slot
    if pa1 > 1:
        raise ConfigError(
            f"lambda1 * slot = {pa1:g} exceeds 1", [("traffic.lambda1", "lambda1 * slot must be <= 1")]
        )
    return -math.expm1(-lambda0 * slot), pa1
