"""Deterministic discrete-event network simulation.

Virtual time is in milliseconds. A message from ``src`` to ``dst`` is
delivered after the link latency, plus its serialisation time at the link
bandwidth, plus optional seeded jitter, plus (for messages sent before GST)
a seeded adversarial delay. Events fire in (time, dst, src, sequence) order.
"""

from __future__ import annotations

import csv
import heapq
import io
import logging
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .core.messages import Message

log = logging.getLogger(__name__)

DEFAULT_INTRA_REGION_MBPS = 10_000.0
NOMINAL_MBPS = 750.0

# the US/EU datacenters used for the low-end and remote-requester experiments
US_EU_REGIONS = ("Oregon", "N. California", "Ohio", "Ireland", "Frankfurt")


class SimulationDeadlock(RuntimeError):
    pass


@dataclass
class LatencyMatrix:
    regions: list[str]
    latency_ms: list[list[float]]
    bandwidth_mbps: list[list[float]]

    def __post_init__(self):
        k = len(self.regions)
        if len(self.latency_ms) != k or any(len(r) != k for r in self.latency_ms):
            raise ValueError("latency matrix dimensions do not match region count")
        if len(self.bandwidth_mbps) != k or any(len(r) != k for r in self.bandwidth_mbps):
            raise ValueError("bandwidth matrix dimensions do not match region count")
        for i in range(k):
            if self.latency_ms[i][i] != 0:
                raise ValueError(f"diagonal latency for {self.regions[i]} must be 0")
            for j in range(k):
                if self.latency_ms[i][j] < 0 or self.bandwidth_mbps[i][j] <= 0:
                    raise ValueError(f"invalid link {self.regions[i]}->{self.regions[j]}")

    def index(self, region: str) -> int:
        return self.regions.index(region)

    def latency(self, a: str, b: str) -> float:
        return self.latency_ms[self.index(a)][self.index(b)]

    def bandwidth(self, a: str, b: str) -> float:
        return self.bandwidth_mbps[self.index(a)][self.index(b)]

    def warnings(self, nominal_mbps: float = NOMINAL_MBPS) -> list[str]:
        out = []
        for i, a in enumerate(self.regions):
            for j, b in enumerate(self.regions):
                bw = self.bandwidth_mbps[i][j]
                if i < j and math.isfinite(bw) and bw > nominal_mbps:
                    out.append(f"{a}<->{b} bandwidth {bw:g} Mbps exceeds nominal {nominal_mbps:g}")
        return out

    def subset(self, names) -> LatencyMatrix:
        idx = [self.index(r) for r in names]
        return LatencyMatrix(
            [self.regions[i] for i in idx],
            [[self.latency_ms[i][j] for j in idx] for i in idx],
            [[self.bandwidth_mbps[i][j] for j in idx] for i in idx],
        )

    @classmethod
    def uniform(cls, n_regions: int, latency_ms: float,
                bandwidth_mbps: float = math.inf) -> LatencyMatrix:
        """Every pair of distinct regions at the same latency and bandwidth."""
        lat = [[0.0 if i == j else float(latency_ms) for j in range(n_regions)]
               for i in range(n_regions)]
        bw = [[float(bandwidth_mbps)] * n_regions for _ in range(n_regions)]
        return cls([f"r{i}" for i in range(n_regions)], lat, bw)

    @classmethod
    def parse_csv(cls, text: str, intra_mbps: float = DEFAULT_INTRA_REGION_MBPS,
                  warn: bool = True) -> LatencyMatrix:
        """Cells are ``latency_ms/bandwidth_mbps``; an empty side is taken from
        the mirrored cell, and an empty diagonal bandwidth from ``intra_mbps``."""
        rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
        names = [c.strip() for c in rows[0][1:]]
        k = len(names)
        if len(rows) - 1 != k:
            raise ValueError(f"expected {k} data rows, got {len(rows) - 1}")
        lat: list[list[float | None]] = [[None] * k for _ in range(k)]
        bw: list[list[float | None]] = [[None] * k for _ in range(k)]
        for i, row in enumerate(rows[1:]):
            if row[0].strip() != names[i]:
                raise ValueError(f"row {i + 1} is {row[0]!r}, expected {names[i]!r}")
            if len(row) - 1 != k:
                raise ValueError(f"row {names[i]!r} has {len(row) - 1} cells, expected {k}")
            for j, cell in enumerate(row[1:]):
                a, _, b = cell.strip().partition("/")
                lat[i][j] = float(a) if a.strip() else None
                bw[i][j] = float(b) if b.strip() else None
        for i in range(k):
            for j in range(k):
                if lat[i][j] is None:
                    lat[i][j] = 0.0 if i == j else lat[j][i]
                if bw[i][j] is None:
                    bw[i][j] = intra_mbps if i == j else bw[j][i]
                if lat[i][j] is None or bw[i][j] is None:
                    raise ValueError(f"missing entry {names[i]}->{names[j]} in both directions")
        m = cls(names, lat, bw)  # type: ignore[arg-type]
        if warn:
            for w in m.warnings():
                log.warning("latency matrix: %s", w)
        return m

    @classmethod
    def load(cls, path: str | Path, **kw) -> LatencyMatrix:
        return cls.parse_csv(Path(path).read_text(), **kw)

    @classmethod
    def aws14(cls, warn: bool = False) -> LatencyMatrix:
        text = resources.files("rbbc").joinpath("data/aws14.csv").read_text()
        return cls.parse_csv(text, warn=warn)

    def to_csv(self) -> str:
        out = ["region," + ",".join(self.regions)]
        for i, r in enumerate(self.regions):
            cells = [f"{self.latency_ms[i][j]:g}/{self.bandwidth_mbps[i][j]:g}"
                     for j in range(len(self.regions))]
            out.append(r + "," + ",".join(cells))
        return "\n".join(out) + "\n"


@dataclass
class NetStats:
    egress: dict[int, int] = field(default_factory=lambda: defaultdict(int))
    ingress: dict[int, int] = field(default_factory=lambda: defaultdict(int))
    # (consensus instance, message kind) -> [bytes, count]
    by_kind: dict[tuple[int, int], list[int]] = field(default_factory=dict)
    # (consensus instance, broadcaster) -> reliable-broadcast bytes
    rb_instance: dict[tuple[int, int], int] = field(default_factory=lambda: defaultdict(int))
    messages: int = 0


class Simulator:
    def __init__(self, matrix: LatencyMatrix, *, seed: int = 0, jitter_ms: float = 0.0,
                 gst_ms: float = 0.0, pre_gst_delay_factor: float = 0.0,
                 pre_gst_delay_ms: float = 0.0):
        self.matrix = matrix
        self.now = 0.0
        self.jitter_ms = jitter_ms
        self.gst_ms = gst_ms
        self.pre_gst_delay_factor = pre_gst_delay_factor
        self.pre_gst_delay_ms = pre_gst_delay_ms
        self._jitter_rng = random.Random(f"jitter/{seed}")
        self._gst_rng = random.Random(f"gst/{seed}")
        self._queue: list = []
        self._seq = 0
        self.actors: dict[int, object] = {}
        self.region_of: dict[int, int] = {}
        self.stats = NetStats()
        self.stopped = False
        self.events = 0
        k = len(matrix.regions)
        self._lat = matrix.latency_ms
        # ms per byte = 8 bits / (Mbps * 1000 bits per ms)
        self._ms_per_byte = [[8.0 / (matrix.bandwidth_mbps[i][j] * 1000.0) for j in range(k)]
                             for i in range(k)]

    def add_actor(self, actor_id: int, actor, region: str | int) -> None:
        if actor_id in self.actors:
            raise ValueError(f"duplicate actor id {actor_id}")
        self.actors[actor_id] = actor
        self.region_of[actor_id] = (region if isinstance(region, int)
                                    else self.matrix.index(region))

    def link_latency(self, a: int, b: int) -> float:
        if a == b:
            return 0.0
        return self._lat[self.region_of[a]][self.region_of[b]]

    def transit_time(self, src: int, dst: int, size: int) -> float:
        ra, rb = self.region_of[src], self.region_of[dst]
        return self._lat[ra][rb] + size * self._ms_per_byte[ra][rb]

    def send(self, src: int, dst: int, msg: Message, hop: int) -> None:
        if src == dst:
            # local hand-off: no network hop, no bytes
            self._push(self.now, dst, src, hop, msg, None)
            return
        size = msg.wire_size
        ra, rb = self.region_of[src], self.region_of[dst]
        lat = self._lat[ra][rb]
        delay = lat + size * self._ms_per_byte[ra][rb]
        if self.jitter_ms:
            delay += self._jitter_rng.uniform(0.0, self.jitter_ms)
        if self.now < self.gst_ms and (self.pre_gst_delay_factor or self.pre_gst_delay_ms):
            delay += self._gst_rng.uniform(0.0, self.pre_gst_delay_factor * lat
                                           + self.pre_gst_delay_ms)
        st = self.stats
        st.messages += 1
        st.egress[src] += size
        st.ingress[dst] += size
        key = (msg.k, msg.KIND)
        rec = st.by_kind.get(key)
        if rec is None:
            st.by_kind[key] = [size, 1]
        else:
            rec[0] += size
            rec[1] += 1
        if msg.PHASE == "rb":
            st.rb_instance[(msg.k, msg.broadcaster)] += size
        self._push(self.now + delay, dst, src, hop, msg, None)

    def schedule(self, delay: float, actor_id: int, fn, *args) -> None:
        """Run ``fn(*args)`` on behalf of ``actor_id`` after ``delay`` ms."""
        self._push(self.now + max(0.0, delay), actor_id, -1, 0, fn, args)

    def _push(self, at, dst, src, hop, item, args):
        self._seq += 1
        heapq.heappush(self._queue, (at, dst, src, self._seq, hop, item, args))

    def stop(self) -> None:
        self.stopped = True

    def pending(self) -> int:
        return len(self._queue)

    def run(self, until_ms: float | None = None) -> None:
        """Process events until stopped, ``until_ms`` is reached, or the
        queue drains (which is a deadlock unless ``until_ms`` was given)."""
        q = self._queue
        actors = self.actors
        pop = heapq.heappop
        while q and not self.stopped:
            if until_ms is not None and q[0][0] > until_ms:
                self.now = until_ms
                return
            at, dst, src, _, hop, item, args = pop(q)
            self.now = at
            self.events += 1
            if args is None:
                actors[dst].receive(src, item, hop)
            else:
                item(*args)
        if not self.stopped and until_ms is None:
            raise SimulationDeadlock(
                f"event queue drained at t={self.now:.3f} ms before the stop condition")
        if not self.stopped and until_ms is not None:
            self.now = max(self.now, until_ms)


class Cpu:
    """Serial processor: jobs queue behind each other in virtual time."""

    __slots__ = ("sim", "owner", "free_at", "busy_ms")

    def __init__(self, sim: Simulator, owner: int):
        self.sim = sim
        self.owner = owner
        self.free_at = 0.0
        self.busy_ms = 0.0

    def run(self, cost_ms: float, fn, *args) -> None:
        start = max(self.sim.now, self.free_at)
        self.free_at = start + cost_ms
        self.busy_ms += cost_ms
        self.sim.schedule(self.free_at - self.sim.now, self.owner, fn, *args)


def round_robin_placement(count: int, regions) -> list[str]:
    regions = list(regions)
    return [regions[i % len(regions)] for i in range(count)]
