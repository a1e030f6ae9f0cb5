"""YAML scenario configuration with defaults and aggregated validation.

Grammar (every key optional except ``sweep``)::

    platoon:
      a: 5.0              # sensitivity, 1/s
      l_fvd: 2.0          # velocity-difference gain for the FVD variant (MOVM uses 0)
      lead_speed: 25.0    # m/s
      y_m: 5.0            # OVF inflection, m
      y_tilde: 10.0       # OVF width, m
    traffic:
      alpha: -1.933
      beta0: 0.652
      k: 500.0            # rate-model scale
      lambda1: 10.0       # periodic beacons per second
    edca:                 # any EdcaParams field; pairs are [AC0, AC1]
      cw_min: [3, 15]
      cw_max: [3, 31]
      aifsn: [2, 3]
      retry_limit: 2
    sweep: {start: 2.0, stop: 10.0, step: 1.0}   # inclusive, metres
    rate_models: [linear, quadratic, sigmoidal, logarithmic]
    delay_budget_fraction: 0.10
    models: [fvd, movm]
    des:
      enabled: false
      headways: null      # null: every sweep headway
      n_vehicles: null    # null: the carrier-sense contender count at each headway
      duration: 13.0      # s
      warmup: 1.0         # s
      n_reps: 8
      topology: single_domain
    seed: 0
    workers: 1
    output_dir: out
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .edca import EdcaParams, arrival_probabilities
from .errors import ConfigError
from .traffic import RATE_KINDS

MODELS = ("fvd", "movm")
TOPOLOGIES = ("single_domain", "line_with_ranges")


@dataclass(frozen=True)
class PlatoonSection:
    a: float = 5.0
    l_fvd: float = 2.0
    lead_speed: float = 25.0
    y_m: float = 5.0
    y_tilde: float = 10.0


@dataclass(frozen=True)
class TrafficSection:
    alpha: float = -1.933
    beta0: float = 0.652
    k: float = 500.0
    lambda1: float = 10.0


@dataclass(frozen=True)
class SweepSection:
    start: float = 2.0
    stop: float = 10.0
    step: float = 1.0

    def headways(self) -> list[float]:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + i * self.step, 10) for i in range(n)]


@dataclass(frozen=True)
class DesSection:
    enabled: bool = False
    headways: tuple[float, ...] | None = None
    n_vehicles: int | None = None
    duration: float = 13.0
    warmup: float = 1.0
    n_reps: int = 8
    topology: str = "single_domain"


@dataclass(frozen=True)
class ScenarioConfig:
    platoon: PlatoonSection = field(default_factory=PlatoonSection)
    traffic: TrafficSection = field(default_factory=TrafficSection)
    edca: EdcaParams = field(default_factory=EdcaParams)
    sweep: SweepSection = field(default_factory=SweepSection)
    rate_models: tuple[str, ...] = RATE_KINDS
    delay_budget_fraction: float = 0.10
    models: tuple[str, ...] = MODELS
    des: DesSection = field(default_factory=DesSection)
    seed: int = 0
    workers: int = 1
    output_dir: str = "out"

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """Hash of every field except where outputs go and how many workers run."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_SECTIONS = {"platoon": PlatoonSection, "traffic": TrafficSection, "sweep": SweepSection, "des": DesSection}
_TOP_KEYS = {f.name for f in fields(ScenarioConfig)}


def _coerce(v):
    # YAML 1.1 reads exponent literals without a dot (1e6) as strings
    if isinstance(v, str):
        try:
            f = float(v)
        except ValueError:
            return v
        return int(f) if f.is_integer() and "." not in v and "e" not in v.lower() else f
    return v


def _number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _section(name, cls, raw, problems):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        problems.append((name, "must be a mapping"))
        return cls()
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for k, v in raw.items():
        if k not in known:
            problems.append((f"{name}.{k}", "unknown key"))
            continue
        default = known[k].default
        v = _coerce(v)
        if isinstance(default, bool):
            if not isinstance(v, bool):
                problems.append((f"{name}.{k}", "must be true or false"))
                continue
        elif isinstance(default, (int, float)) and not _number(v):
            problems.append((f"{name}.{k}", "must be a finite number"))
            continue
        kwargs[k] = v
    return cls(**kwargs)


def _edca(raw, problems) -> EdcaParams:
    if raw is None:
        return EdcaParams()
    if not isinstance(raw, dict):
        problems.append(("edca", "must be a mapping"))
        return EdcaParams()
    known = {f.name for f in fields(EdcaParams)}
    kwargs = {}
    for k, v in raw.items():
        if k not in known:
            problems.append((f"edca.{k}", "unknown key"))
        elif k in ("cw_min", "cw_max", "aifsn"):
            if not (isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, int) and not isinstance(x, bool) for x in v)):
                problems.append((f"edca.{k}", "must be a pair of integers [AC0, AC1]"))
            else:
                kwargs[k] = tuple(v)
        elif k == "retry_limit":
            if not (isinstance(v, int) and not isinstance(v, bool)):
                problems.append(("edca.retry_limit", "must be an integer"))
            else:
                kwargs[k] = v
        elif not _number(_coerce(v)):
            problems.append((f"edca.{k}", "must be a finite number"))
        else:
            kwargs[k] = float(_coerce(v))
    try:
        return EdcaParams(**kwargs)
    except ConfigError as exc:
        problems.extend(exc.problems)
        return None


def _check(cfg: ScenarioConfig, problems):
    pl, tr, sw, ds = cfg.platoon, cfg.traffic, cfg.sweep, cfg.des
    for name in ("a", "lead_speed", "y_tilde"):
        if not getattr(pl, name) > 0:
            problems.append((f"platoon.{name}", "must be > 0"))
    if not pl.l_fvd > 0:
        problems.append(("platoon.l_fvd", "must be > 0 (l = 0 is the MOVM variant)"))
    if pl.y_m < 0:
        problems.append(("platoon.y_m", "must be >= 0"))
    if not tr.k > 0:
        problems.append(("traffic.k", "must be > 0"))
    if not tr.lambda1 > 0:
        problems.append(("traffic.lambda1", "must be > 0"))
    if cfg.edca is not None and tr.lambda1 > 0:
        try:
            arrival_probabilities(0.0, tr.lambda1, cfg.edca.slot)
        except ConfigError:
            problems.append(("traffic.lambda1", f"lambda1 * slot = {tr.lambda1 * cfg.edca.slot:g} exceeds 1"))
    if not sw.step > 0:
        problems.append(("sweep.step", "must be > 0"))
    elif sw.stop < sw.start:
        problems.append(("sweep.stop", "must be >= sweep.start"))
    else:
        cs = cfg.edca.cs_range if cfg.edca is not None else EdcaParams().cs_range
        hs = sw.headways()
        if not all(0 < h < 2 * cs for h in hs):
            problems.append(("sweep", f"headways must lie in (0, {2 * cs:g}) m"))
    bad = [m for m in cfg.rate_models if m not in RATE_KINDS]
    if bad:
        problems.append(("rate_models", f"unknown kinds {bad}; choose from {list(RATE_KINDS)}"))
    bad = [m for m in cfg.models if m not in MODELS]
    if bad or not cfg.models:
        problems.append(("models", f"must be a non-empty subset of {list(MODELS)}"))
    if not 0 < cfg.delay_budget_fraction <= 1:
        problems.append(("delay_budget_fraction", "must lie in (0, 1]"))
    if not (ds.duration > ds.warmup >= 0):
        problems.append(("des.duration", "need duration > warmup >= 0"))
    if int(ds.n_reps) != ds.n_reps or ds.n_reps < 1:
        problems.append(("des.n_reps", "must be an integer >= 1"))
    if ds.n_vehicles is not None and (int(ds.n_vehicles) != ds.n_vehicles or ds.n_vehicles < 1):
        problems.append(("des.n_vehicles", "must be an integer >= 1"))
    if ds.topology not in TOPOLOGIES:
        problems.append(("des.topology", f"must be one of {list(TOPOLOGIES)}"))
    if ds.headways is not None and not all(_number(h) and h > 0 for h in ds.headways):
        problems.append(("des.headways", "must be positive numbers"))
    if int(cfg.workers) != cfg.workers or cfg.workers < 1:
        problems.append(("workers", "must be an integer >= 1"))
    if int(cfg.seed) != cfg.seed or cfg.seed < 0:
        problems.append(("seed", "must be a non-negative integer"))


def _string_list(raw, path, problems):
    if isinstance(raw, str):
        raw = [raw]
    if not isinstance(raw, (list, tuple)) or not all(isinstance(x, str) for x in raw):
        problems.append((path, "must be a list of names"))
        return None
    return tuple(raw)


def parse_config(data: dict | None) -> ScenarioConfig:
    """Build a config from an already-parsed mapping; raises ConfigError listing every problem."""
    problems: list[tuple[str, str]] = []
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", [("<root>", "must be a mapping")])
    for k in data:
        if k not in _TOP_KEYS:
            problems.append((k, "unknown key"))
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            raw = data[name]
            if name == "des" and isinstance(raw, dict) and raw.get("headways") is not None:
                raw = dict(raw)
                hs = raw.pop("headways")
                sec = _section(name, cls, raw, problems)
                if isinstance(hs, (list, tuple)):
                    kwargs[name] = DesSection(**{**asdict(sec), "headways": tuple(hs)})
                else:
                    problems.append(("des.headways", "must be a list of headways"))
                    kwargs[name] = sec
            else:
                kwargs[name] = _section(name, cls, raw, problems)
    edca = _edca(data.get("edca"), problems)
    for key in ("rate_models", "models"):
        if key in data:
            v = _string_list(data[key], key, problems)
            if v is not None:
                kwargs[key] = v
    for key in ("delay_budget_fraction", "seed", "workers"):
        if key in data:
            v = _coerce(data[key])
            if not _number(v):
                problems.append((key, "must be a finite number"))
            else:
                kwargs[key] = v
    if "output_dir" in data:
        if not isinstance(data["output_dir"], str):
            problems.append(("output_dir", "must be a path string"))
        else:
            kwargs["output_dir"] = data["output_dir"]
    cfg = ScenarioConfig(edca=edca if edca is not None else EdcaParams(), **kwargs)
    _check(cfg, problems)
    if problems:
        raise ConfigError(
            f"{len(problems)} configuration problem(s): " + "; ".join(f"{p}: {m}" for p, m in problems), problems
        )
    return cfg


def validate_config(text: str) -> ScenarioConfig:
    """Parse YAML text into a fully defaulted :class:`ScenarioConfig`.

    All violations are collected and raised together as one ConfigError
    whose ``problems`` list pairs a dotted field path with a message.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}", [("<root>", "YAML syntax error")]) from exc
    return parse_config(data)


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", [("<file>", str(exc))]) from exc
    return validate_config(text)


def headway_array(cfg: ScenarioConfig) -> np.ndarray:
    return np.asarray(cfg.sweep.headways(), dtype=float)
