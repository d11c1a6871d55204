"""Experiment configuration: an INI file with one ``[experiment]`` section.

Every field of ``ExperimentConfig`` may appear as ``key = value``; lists are
comma-separated. ``latency_matrix`` is ``aws14`` (the bundled 14-region
table), ``uniform:<ms>`` or ``uniform:<ms>:<mbps>``, or a CSV path.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

from ..adversary import AdversaryKind
from ..core import ProposerMode, default_t
from ..netsim import LatencyMatrix
from ..node import DEFAULT_VERIFY_COST_MS


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    protocol: str = "rbbc"
    n: int = 4
    t: int | None = None
    beta: int = 100
    proposer_mode: str = "all_n"
    adversary: str = "none"
    byzantine_count: int | None = None
    seed: int = 0
    rounds: int = 10
    duration_ms: float | None = None
    warmup_rounds: int = 0
    warmup_ms: float | None = None
    latency_matrix: str = "aws14"
    regions: list[str] = field(default_factory=list)
    jitter_ms: float = 0.0
    gst_ms: float = 0.0
    pre_gst_delay_factor: float = 0.0
    pre_gst_delay_ms: float = 0.0
    verify_cost_ms: float = DEFAULT_VERIFY_COST_MS
    timer_base_ms: float = 10.0
    max_bin_rounds: int = 20
    fetch_timeout_ms: float | None = None
    allow_chained: bool = True
    leader: int | None = None
    accounts_per_proposer: int | None = None
    requesters: int = 0
    requester_regions: list[str] = field(default_factory=list)
    genesis_per_requester: int = 100_000
    genesis_utxos_per_requester: int = 1
    secondary_delay_rounds: int = 1
    out_dir: str = "bench-out"

    @property
    def faults(self) -> int:
        return default_t(self.n) if self.t is None else self.t

    def validate(self) -> None:
        if self.protocol not in ("rbbc", "cons1"):
            raise ConfigError("protocol", f"expected rbbc or cons1, got {self.protocol!r}")
        if self.n < 1:
            raise ConfigError("n", "must be positive")
        t = self.faults
        if t < 0 or self.n < 3 * t + 1:
            raise ConfigError("t", f"need n >= 3t+1 (n={self.n}, t={t})")
        if self.beta < 1:
            raise ConfigError("beta", "must be >= 1")
        try:
            ProposerMode(self.proposer_mode)
        except ValueError:
            raise ConfigError("proposer_mode", f"unknown mode {self.proposer_mode!r}") from None
        try:
            kind = AdversaryKind(self.adversary)
        except ValueError:
            raise ConfigError("adversary", f"unknown adversary {self.adversary!r}") from None
        if kind is not AdversaryKind.NONE and self.protocol != "rbbc":
            raise ConfigError("adversary", "attacks are only defined for rbbc")
        if self.byzantine_count is not None and not 0 <= self.byzantine_count <= t:
            raise ConfigError("byzantine_count", f"must lie in [0, t={t}]")
        if self.duration_ms is None:
            if self.rounds < 1:
                raise ConfigError("rounds", "must be >= 1")
            if self.warmup_rounds >= self.rounds:
                raise ConfigError("warmup_rounds", "duration must exceed warmup")
        else:
            if self.duration_ms <= 0:
                raise ConfigError("duration_ms", "must be positive")
            if self.warmup_ms is not None and self.warmup_ms >= self.duration_ms:
                raise ConfigError("warmup_ms", "duration must exceed warmup")
        m = self.latency_matrix
        if not (m == "aws14" or m.startswith("uniform:") or Path(m).is_file()):
            raise ConfigError("latency_matrix", f"file not found: {m}")
        if self.leader is not None and not 0 <= self.leader < self.n:
            raise ConfigError("leader", "must be a node id")
        for name in ("jitter_ms", "gst_ms", "pre_gst_delay_factor", "pre_gst_delay_ms",
                     "verify_cost_ms"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be >= 0")
        if self.requesters < 0:
            raise ConfigError("requesters", "must be >= 0")
        if self.genesis_utxos_per_requester < 1 or self.genesis_per_requester < 1:
            raise ConfigError("genesis_per_requester", "must be >= 1")

    def matrix(self) -> LatencyMatrix:
        """A uniform matrix has one region per node, so every pair of nodes
        is at the same latency."""
        m = self.latency_matrix
        if m == "aws14":
            full = LatencyMatrix.aws14()
        elif m.startswith("uniform:"):
            parts = m.split(":")[1:]
            try:
                lat = float(parts[0])
                bw = float(parts[1]) if len(parts) > 1 else math.inf
            except (ValueError, IndexError):
                raise ConfigError("latency_matrix", f"bad uniform spec {m!r}") from None
            return LatencyMatrix.uniform(self.n, lat, bw)
        else:
            full = LatencyMatrix.load(m)
        if self.regions:
            try:
                return full.subset(self.regions)
            except ValueError as exc:
                raise ConfigError("regions", str(exc)) from None
        return full

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _convert(name: str, raw: str):
    hint = typing.get_type_hints(ExperimentConfig)[name]
    text = raw.strip()
    args = typing.get_args(hint)
    optional = type(None) in args
    if optional and text.lower() in ("", "none", "null"):
        return None
    base = next(a for a in args if a is not type(None)) if optional else hint
    origin = typing.get_origin(base)
    try:
        if origin is list:
            return [x.strip() for x in text.split(",") if x.strip()]
        if base is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if base is int:
            return int(text)
        if base is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(name, f"cannot parse {raw!r}") from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string(text, source=source)
    if not cp.has_section("experiment"):
        raise ConfigError("experiment", f"{source} has no [experiment] section")
    values = {}
    for key, raw in cp.items("experiment"):
        name = key.replace("-", "_")
        if name not in _FIELDS:
            raise ConfigError(name, "unknown field")
        values[name] = _convert(name, raw)
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config", f"file not found: {p}")
    return parse_config(p.read_text(), str(p))


def dump_config(cfg: ExperimentConfig) -> str:
    lines = ["[experiment]"]
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            v = "none"
        elif isinstance(v, list):
            v = ", ".join(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
