"""Slot-synchronous simulation of broadcast 802.11p stations with two EDCA queues.

Each station sees the medium on its own slot grid, anchored ``SIFS`` after
the end of the last busy period it sensed.  An access category may act at
grid index ``n >= AIFSN`` of that category; at each such boundary it either
transmits (counter at zero) or decrements its counter.  A busy period
freezes every counter in carrier-sense range until the grid restarts.
When both categories of one station reach zero together, AC0 transmits
and AC1 moves to its next backoff stage (dropped after ``retry_limit``
retries).  Broadcasts are never acknowledged or retried, so overlapping
transmissions are only counted as external collisions.

Counters are advanced lazily: each category stores the grid index at which
it will transmit if nothing interrupts it, and the loop jumps straight to
the earliest such index or the next arrival.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .edca import EdcaParams
from .errors import ConfigError

RNG_ALGORITHM = "numpy.PCG64 via SeedSequence.spawn (one stream per station)"

OK, COLLIDED, DROPPED = "ok", "collided", "dropped"
_OUTCOME_CODE = {OK: 0, COLLIDED: 1, DROPPED: 2}
_OUTCOMES = (OK, COLLIDED, DROPPED)


@dataclass(frozen=True)
class SimConfig:
    n_vehicles: int
    headway: float
    edca: EdcaParams = field(default_factory=EdcaParams)
    lambda0: float = 0.0
    lambda1: float = 10.0
    seed: int = 0
    duration: float = 13.0
    warmup: float = 1.0
    topology: str = "single_domain"

    def __post_init__(self):
        problems = []
        if int(self.n_vehicles) != self.n_vehicles or self.n_vehicles < 1:
            problems.append(("des.n_vehicles", "must be an integer >= 1"))
        if not self.headway > 0:
            problems.append(("des.headway", "must be > 0"))
        if self.lambda0 < 0 or self.lambda1 < 0:
            problems.append(("des.lambda", "arrival rates must be >= 0"))
        if not (self.duration > self.warmup >= 0):
            problems.append(("des.duration", "need duration > warmup >= 0"))
        if self.topology not in ("single_domain", "line_with_ranges"):
            problems.append(("des.topology", "must be single_domain or line_with_ranges"))
        if problems:
            raise ConfigError("invalid simulation config", problems)

    def param_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class SimStats:
    access_delay_us: tuple[np.ndarray, np.ndarray]
    sojourn_us: tuple[np.ndarray, np.ndarray]
    transmissions: tuple[int, int]
    virtual_collisions: int
    external_collisions: int
    drops: int
    arrived: tuple[int, int]
    queued: tuple[int, int]
    transmitted: tuple[int, int]
    dropped: tuple[int, int]
    records: np.ndarray  # structured per-packet log

    def mean_ms(self, ac: int) -> float:
        d = self.access_delay_us[ac]
        return float(np.mean(d)) / 1e3 if d.size else math.nan

    def std_ms(self, ac: int) -> float:
        d = self.access_delay_us[ac]
        return float(np.std(d)) / 1e3 if d.size else math.nan

    def summary(self) -> dict:
        out = {}
        for ac in (0, 1):
            d = self.access_delay_us[ac]
            s = self.sojourn_us[ac]
            out[f"ac{ac}_samples"] = int(d.size)
            out[f"ac{ac}_mean_ms"] = self.mean_ms(ac)
            out[f"ac{ac}_std_ms"] = self.std_ms(ac)
            out[f"ac{ac}_sojourn_mean_ms"] = float(np.mean(s)) / 1e3 if s.size else math.nan
            out[f"ac{ac}_transmissions"] = self.transmissions[ac]
        out["virtual_collisions"] = self.virtual_collisions
        out["external_collisions"] = self.external_collisions
        out["drops"] = self.drops
        return out


RECORD_DTYPE = np.dtype(
    [("station", "i4"), ("ac", "i1"), ("arrival_us", "i8"), ("hol_us", "i8"), ("done_us", "i8"), ("outcome", "i1")]
)


class _Backoff:
    """Per-station uniform streams drawn in blocks."""

    def __init__(self, seed: int, n: int, block: int = 512):
        self.gens = [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]
        self.block = block
        self.buf = np.stack([g.random(block) for g in self.gens])
        self.ptr = np.zeros(n, dtype=np.int64)

    def uniform(self, stations: np.ndarray) -> np.ndarray:
        """One uniform per entry; ``stations`` must not repeat."""
        full = stations[self.ptr[stations] >= self.block]
        for s in full.tolist():
            self.buf[s] = self.gens[s].random(self.block)
            self.ptr[s] = 0
        u = self.buf[stations, self.ptr[stations]]
        self.ptr[stations] += 1
        return u

    def counters(self, stations: np.ndarray, windows) -> np.ndarray:
        return np.floor(self.uniform(stations) * windows).astype(np.int64)


def _arrivals(gen: np.random.Generator, rate: float, periodic: bool, horizon_us: int) -> np.ndarray:
    if rate <= 0:
        return np.empty(0, dtype=np.int64)
    if periodic:
        period = 1e6 / rate
        phase = gen.uniform(0.0, period)
        t = phase + period * np.arange(int(horizon_us / period) + 2)
    else:
        n = gen.poisson(rate * horizon_us * 1e-6)
        t = np.sort(gen.uniform(0.0, horizon_us, size=n))
    t = np.floor(t).astype(np.int64)
    return t[t <= horizon_us]


def run_simulation(cfg: SimConfig) -> SimStats:
    p = cfg.edca
    N = int(cfg.n_vehicles)
    slot, sifs, ttr = p.slot_us, p.sifs_us, p.ttr_us
    aifsn = np.array(p.aifsn, dtype=np.int64)
    L = p.retry_limit
    end_us = int(round(cfg.duration * 1e6))
    warm_us = int(round(cfg.warmup * 1e6))

    pos = np.arange(N) * cfg.headway
    if cfg.topology == "single_domain":
        sense = None
        interfere = None
    else:
        dist = np.abs(pos[:, None] - pos[None, :])
        sense = dist <= p.cs_range
        interfere = dist <= 2 * p.tx_range

    # arrivals: separate stream family from backoff draws
    arr_gens = [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence([cfg.seed, 1]).spawn(N)]
    arrivals = [
        [_arrivals(g, cfg.lambda0, False, end_us), _arrivals(g, cfg.lambda1, True, end_us)] for g in arr_gens
    ]
    n_arr = np.array([[len(a[0]), len(a[1])] for a in arrivals], dtype=np.int64)
    backoff = _Backoff(cfg.seed, N)

    INF = np.iinfo(np.int64).max // 4
    head = np.zeros((N, 2), dtype=np.int64)
    free_at = np.zeros((N, 2), dtype=np.int64)  # when the category finished its previous packet

    def head_time(s, i):
        k = head[s, i]
        return arrivals[s][i][k] if k < n_arr[s, i] else INF

    next_arr = np.array([[head_time(s, 0), head_time(s, 1)] for s in range(N)], dtype=np.int64)

    active = np.zeros((N, 2), dtype=bool)
    nstart = np.zeros((N, 2), dtype=np.int64)
    ntx = np.zeros((N, 2), dtype=np.int64)
    stage = np.zeros((N, 2), dtype=np.int64)
    retries = np.zeros((N, 2), dtype=np.int64)
    hol = np.zeros((N, 2), dtype=np.int64)
    grid = np.full(N, sifs, dtype=np.int64)  # time of grid index 0
    busy_until = np.zeros(N, dtype=np.int64)

    windows0 = np.array([p.window(0), p.window(1, 0)], dtype=np.int64)
    stage_window = np.array([p.window(1, j) for j in range(L + 2)], dtype=np.int64)

    log: list[tuple] = []
    tx_count = [0, 0]
    drop_count = [0, 0]
    vc_count = 0
    recent = deque()  # (start, station, log index) for overlap checks off the single domain

    def activate(mask):
        for i in (0, 1):
            ss = np.nonzero(mask[:, i])[0]
            if ss.size == 0:
                continue
            eff = np.maximum(next_arr[ss, i], free_at[ss, i])
            na = -((grid[ss] - eff) // slot)  # ceil((eff - grid) / slot)
            ns = np.maximum(na, aifsn[i])
            c = backoff.counters(ss, windows0[i])
            active[ss, i] = True
            stage[ss, i] = 0
            retries[ss, i] = 0
            nstart[ss, i] = ns
            ntx[ss, i] = ns + c
            hol[ss, i] = grid[ss] + ns * slot

    def finish(s, i, t_done, outcome):
        k = head[s, i]
        log.append((s, i, int(arrivals[s][i][k]), int(hol[s, i]), int(t_done), _OUTCOME_CODE[outcome]))
        head[s, i] = k + 1
        active[s, i] = False
        free_at[s, i] = t_done
        next_arr[s, i] = head_time(s, i)
        return len(log) - 1

    while True:
        tx_time = np.where(active, grid[:, None] + ntx * slot, INF)
        t = int(tx_time.min())
        # a new packet may get a boundary before t, so repeat until stable
        while True:
            eff = np.where(active | (next_arr >= INF), INF, np.maximum(next_arr, free_at))
            horizon = t if t < INF else int(eff.min())
            waiting = eff <= min(horizon, end_us)
            if not waiting.any():
                break
            activate(waiting)
            tx_time = np.where(active, grid[:, None] + ntx * slot, INF)
            t = int(tx_time.min())
        if t > end_us:
            break

        fire = tx_time == t
        both = fire[:, 0] & fire[:, 1]
        vc = np.nonzero(both)[0]
        fire[vc, 1] = False
        senders = np.nonzero(fire.any(axis=1))[0]
        done = t + ttr

        # range of stations that sense the new busy period
        if sense is None:
            in_range = np.ones(N, dtype=bool)
        else:
            in_range = sense[senders].any(axis=0)

        # freeze counters of every active category in range
        rs = np.nonzero(in_range)[0]
        consumed = np.clip((t - grid[rs])[:, None] // slot - nstart[rs] + 1, 0, ntx[rs] - nstart[rs])
        remaining = ntx[rs] - nstart[rs] - consumed

        new_idx = []
        for s in senders.tolist():
            i = 0 if fire[s, 0] else 1
            tx_count[i] += 1
            new_idx.append((s, finish(s, i, done, OK)))

        for s in vc.tolist():
            vc_count += 1
            retries[s, 1] += 1
            if retries[s, 1] > L:
                drop_count[1] += 1
                finish(s, 1, t, DROPPED)
            else:
                stage[s, 1] += 1

        rank = np.full(N, -1, dtype=np.int64)
        rank[rs] = np.arange(rs.size)
        if vc.size:
            keep = active[vc, 1]
            vs = vc[keep]
            if vs.size:
                remaining[rank[vs], 1] = backoff.counters(vs, stage_window[stage[vs, 1]])

        busy_until[rs] = np.maximum(busy_until[rs], done)
        grid[rs] = busy_until[rs] + sifs
        nstart[rs] = aifsn[None, :]
        ntx[rs] = nstart[rs] + remaining

        # broadcast collision bookkeeping
        if interfere is None:
            if len(new_idx) > 1:
                for _, k in new_idx:
                    log[k] = log[k][:5] + (_OUTCOME_CODE[COLLIDED],)
        else:
            while recent and recent[0][0] <= t - ttr:
                recent.popleft()
            for s, k in new_idx:
                for t0, s0, k0 in recent:
                    if interfere[s, s0]:
                        log[k] = log[k][:5] + (_OUTCOME_CODE[COLLIDED],)
                        log[k0] = log[k0][:5] + (_OUTCOME_CODE[COLLIDED],)
                for s1, k1 in new_idx:
                    if s1 != s and interfere[s, s1]:
                        log[k] = log[k][:5] + (_OUTCOME_CODE[COLLIDED],)
            recent.extend((t, s, k) for s, k in new_idx)

    records = np.array(log, dtype=RECORD_DTYPE) if log else np.empty(0, dtype=RECORD_DTYPE)
    arrived = tuple(int(sum(int(np.count_nonzero(a[i] <= end_us)) for a in arrivals)) for i in (0, 1))
    transmitted = tuple(int(np.count_nonzero((records["ac"] == i) & (records["outcome"] != 2))) for i in (0, 1))
    dropped = tuple(int(np.count_nonzero((records["ac"] == i) & (records["outcome"] == 2))) for i in (0, 1))
    queued = tuple(arrived[i] - transmitted[i] - dropped[i] for i in (0, 1))

    sent = records[(records["outcome"] != 2) & (records["hol_us"] >= warm_us)]
    access = tuple((sent["done_us"][sent["ac"] == i] - sent["hol_us"][sent["ac"] == i]) for i in (0, 1))
    sojourn = tuple((sent["done_us"][sent["ac"] == i] - sent["arrival_us"][sent["ac"] == i]) for i in (0, 1))
    return SimStats(
        access_delay_us=access,
        sojourn_us=sojourn,
        transmissions=(tx_count[0], tx_count[1]),
        virtual_collisions=vc_count,
        external_collisions=int(np.count_nonzero(records["outcome"] == 1)),
        drops=sum(drop_count),
        arrived=arrived,
        queued=queued,
        transmitted=transmitted,
        dropped=dropped,
        records=records,
    )


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float
    ci_low: float
    ci_high: float


@dataclass
class ReplicatedStats:
    seeds: list[int]
    runs: list[SimStats]
    metrics: dict[str, MetricSummary]


def replicate(cfg: SimConfig, n_reps: int) -> ReplicatedStats:
    """Run ``n_reps`` independent replications (seeds ``cfg.seed + k``) and summarise.

    Confidence intervals are 95 % normal approximations over replication
    means; with a single replication the interval collapses to the value.
    """
    if n_reps < 1:
        raise ConfigError("n_reps must be >= 1", [("des.n_reps", "must be >= 1")])
    from dataclasses import replace

    seeds = [cfg.seed + k for k in range(n_reps)]
    runs = [run_simulation(replace(cfg, seed=s)) for s in seeds]
    summaries = [r.summary() for r in runs]
    metrics = {}
    for key in summaries[0]:
        vals = np.array([s[key] for s in summaries], dtype=float)
        mean = float(np.mean(vals))
        std = float(np.std(vals, ddof=1)) if n_reps > 1 else 0.0
        half = 1.959963984540054 * std / math.sqrt(n_reps)
        metrics[key] = MetricSummary(mean=mean, std=std, ci_low=mean - half, ci_high=mean + half)
    return ReplicatedStats(seeds=seeds, runs=runs, metrics=metrics)


def write_packet_csv(stats: SimStats, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station", "ac", "arrival_us", "hol_us", "done_us", "outcome"])
        for r in stats.records:
            w.writerow([int(r["station"]), int(r["ac"]), int(r["arrival_us"]), int(r["hol_us"]), int(r["done_us"]), _OUTCOMES[int(r["outcome"])]])


def write_manifest(cfg: SimConfig, path, extra: dict | None = None) -> None:
    lines = [f"param_hash = {cfg.param_hash()}", f"seed = {cfg.seed}", f"rng = {RNG_ALGORITHM}"]
    for k, v in sorted(asdict(cfg).items()):
        lines.append(f"{k} = {v}")
    for k, v in sorted((extra or {}).items()):
        lines.append(f"{k} = {v}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
