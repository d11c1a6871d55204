"""Metrics computed from a finished run's block log and network counters."""

from __future__ import annotations

import statistics
from dataclasses import asdict, dataclass, field

from ..core.messages import _BY_KIND
from ..shardverify import assign
from .world import RunResult

PHASE_OF_KIND = {kind: cls.PHASE for kind, cls in _BY_KIND.items()}


@dataclass
class BlockSummary:
    index: int
    hash: str
    commit_ms: float
    valid: int
    invalid: int
    duplicates: int
    proposals: str
    hops: int
    rejected: dict[str, int] = field(default_factory=dict)


@dataclass
class MetricsReport:
    protocol: str
    n: int
    t: int
    beta: int
    proposer_mode: str
    adversary: str
    seed: int
    blocks: int
    window_blocks: int
    window_ms: float
    valid_tx_per_sec: float
    read_per_sec: float
    rw_ratio: float
    commit_latency_mean_ms: float
    commit_latency_p50_ms: float
    commit_latency_p99_ms: float
    inter_block_ms: float
    valid_tx_per_block: float
    invalid_tx_per_block: float
    verif_mean: float
    verif_min: int
    verif_max: int
    bytes_per_instance: float
    rb_bytes_per_instance: float
    hops_min: int
    hops_max: int
    egress_max: int
    egress_median: float
    events: int
    chain_digest: str
    block_log: list[BlockSummary] = field(default_factory=list, repr=False)
    bytes_by_phase: dict[str, float] = field(default_factory=dict, repr=False)
    verif_hist: dict[int, int] = field(default_factory=dict, repr=False)
    egress: dict[int, int] = field(default_factory=dict, repr=False)

    ROW_FIELDS = ("protocol", "n", "t", "beta", "proposer_mode", "adversary", "seed", "blocks",
                  "window_blocks", "window_ms", "valid_tx_per_sec", "read_per_sec", "rw_ratio",
                  "commit_latency_mean_ms", "commit_latency_p50_ms", "commit_latency_p99_ms",
                  "inter_block_ms", "valid_tx_per_block", "invalid_tx_per_block", "verif_mean",
                  "verif_min", "verif_max", "bytes_per_instance", "rb_bytes_per_instance",
                  "hops_min", "hops_max", "egress_max", "egress_median", "events",
                  "chain_digest")

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in self.ROW_FIELDS}


def _percentile(sorted_vals: list[float], q: float) -> float:
    if not sorted_vals:
        return 0.0
    i = min(len(sorted_vals) - 1, max(0, round(q * (len(sorted_vals) - 1))))
    return sorted_vals[i]


def commit_times(result: RunResult) -> list[float]:
    """Commit time of each block = mean of the correct nodes' append times.
    Index 0 (genesis) is at time 0."""
    h = result.height
    out = [0.0]
    for k in range(1, h + 1):
        out.append(statistics.fmean(result.nodes[i].records[k - 1].time_ms
                                    for i in result.correct))
    return out


def block_log(result: RunResult) -> list[BlockSummary]:
    times = commit_times(result)
    ref = result.nodes[result.correct[0]]
    out = []
    for k in range(1, result.height + 1):
        rec = ref.records[k - 1]
        hops = max(result.nodes[i].records[k - 1].hops for i in result.correct)
        out.append(BlockSummary(k, rec.digest.hex(), round(times[k], 6), rec.valid, rec.invalid,
                                rec.duplicates, "".join("1" if b else "0" for b in rec.included),
                                hops, dict(sorted(rec.rejected.items()))))
    return out


def verification_counts(result: RunResult) -> list[int]:
    """Distinct verifiers per decided tx: its primary window plus every
    extension verifier that stepped in (RBBC); every checking node (CONS1)."""
    n, t = result.params.n, result.params.t
    out = []
    for (k, txid), nodes in sorted(result.verifiers.items()):
        if result.config.protocol == "rbbc":
            out.append(len(set(assign(txid, k, n, t).primary) | nodes))
        else:
            out.append(len(nodes))
    return out


def compute(result: RunResult) -> MetricsReport:
    cfg = result.config
    blocks = block_log(result)
    times = commit_times(result)
    h = result.height
    # measurement window: blocks committed after the warmup
    if cfg.warmup_ms is not None:
        first = next((k for k in range(1, h + 1) if times[k] > cfg.warmup_ms), h + 1)
    else:
        first = min(cfg.warmup_rounds + 1, h + 1)
    window = list(range(first, h + 1))
    t0 = times[first - 1] if window else 0.0
    t1 = times[h] if window else 0.0
    span = t1 - t0
    valid = sum(blocks[k - 1].valid for k in window)
    invalid = sum(blocks[k - 1].invalid for k in window)
    tps = valid * 1000.0 / span if span > 0 else 0.0

    reads = sum(1 for r in result.requesters for at in r.read_times if t0 < at <= t1)
    rps = reads * 1000.0 / span if span > 0 else 0.0
    rw = rps / tps if tps > 0 else (float("inf") if rps > 0 else 0.0)

    ref = result.nodes[result.correct[0]]
    latencies = []
    for k in window:
        for tx in ref.chain[k].txs:
            c = result.created.get(tx.txid)
            if c is not None:
                latencies.append(times[k] - c)
    latencies.sort()
    gaps = [times[k] - times[k - 1] for k in window]

    counts = verification_counts(result)
    hist: dict[int, int] = {}
    for c in counts:
        hist[c] = hist.get(c, 0) + 1

    by_k: dict[int, int] = {}
    rb_k: dict[int, int] = {}
    phase_bytes: dict[str, int] = {}
    for (k, kind), (size, _count) in result.sim.stats.by_kind.items():
        phase = PHASE_OF_KIND[kind]
        if phase == "client":
            continue
        if k in window:
            phase_bytes[phase] = phase_bytes.get(phase, 0) + size
        by_k[k] = by_k.get(k, 0) + size
        if phase == "rb":
            rb_k[k] = rb_k.get(k, 0) + size
    nw = max(len(window), 1)
    egress = {i: result.sim.stats.egress.get(i, 0) for i in range(result.params.n)}
    hops = [blocks[k - 1].hops for k in window] or [0]

    return MetricsReport(
        protocol=cfg.protocol, n=result.params.n, t=result.params.t, beta=cfg.beta,
        proposer_mode=cfg.proposer_mode, adversary=cfg.adversary, seed=cfg.seed,
        blocks=h, window_blocks=len(window), window_ms=round(span, 6),
        valid_tx_per_sec=round(tps, 6), read_per_sec=round(rps, 6), rw_ratio=round(rw, 6),
        commit_latency_mean_ms=round(statistics.fmean(latencies), 6) if latencies else 0.0,
        commit_latency_p50_ms=round(_percentile(latencies, 0.5), 6),
        commit_latency_p99_ms=round(_percentile(latencies, 0.99), 6),
        inter_block_ms=round(statistics.fmean(gaps), 6) if gaps else 0.0,
        valid_tx_per_block=round(valid / nw, 6), invalid_tx_per_block=round(invalid / nw, 6),
        verif_mean=round(statistics.fmean(counts), 6) if counts else 0.0,
        verif_min=min(counts, default=0), verif_max=max(counts, default=0),
        bytes_per_instance=round(sum(by_k.get(k, 0) for k in window) / nw, 3),
        rb_bytes_per_instance=round(sum(rb_k.get(k, 0) for k in window) / nw, 3),
        hops_min=min(hops), hops_max=max(hops),
        egress_max=max(egress.values(), default=0),
        egress_median=float(statistics.median(egress.values())) if egress else 0.0,
        events=result.sim.events,
        chain_digest=ref.chain[h].digest.hex(),
        block_log=blocks,
        bytes_by_phase={p: round(b / nw, 3) for p, b in sorted(phase_bytes.items())},
        verif_hist=dict(sorted(hist.items())),
        egress=egress,
    )


def rb_bytes(result: RunResult, k: int) -> int:
    return sum(size for (kk, kind), (size, _) in result.sim.stats.by_kind.items()
               if kk == k and PHASE_OF_KIND[kind] == "rb")
