"""Assemble a simulated deployment from a config, run it, check safety."""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field

from ..adversary import AdversaryKind, AdversarySpec, byz2_victims, install
from ..binconsensus import TerminationFailure
from ..cons1 import Cons1Node, central_node
from ..core import Params, ProposerMode, Transaction
from ..ledger import genesis_block, genesis_outpoint, genesis_table
from ..netsim import SimulationDeadlock, Simulator, round_robin_placement
from ..node import Node, node_keys
from ..superblock import MempoolSource, RbbcNode
from ..workload import (
    Requester, SyntheticSource, proposer_keys, proposer_rank, requester_keys,
)
from .config import ExperimentConfig


class RunFailure(RuntimeError):
    """The run could not reach its stop condition."""


@dataclass
class RunResult:
    config: ExperimentConfig
    params: Params
    nodes: list[Node]
    correct: tuple[int, ...]
    byzantine: tuple[int, ...]
    sim: Simulator
    genesis_supply: int
    verifiers: dict[tuple[int, bytes], set[int]]
    created: dict[bytes, float]
    issued: dict[bytes, Transaction]
    requesters: list[Requester]
    violations: list[str]
    wall_s: float
    leader: int | None = None
    victims: tuple[int, ...] = ()
    extra: dict = field(default_factory=dict)

    def chain(self, node: int | None = None):
        return self.nodes[self.correct[0] if node is None else node].chain

    @property
    def height(self) -> int:
        return min(self.nodes[i].height for i in self.correct)


class World:
    def __init__(self, cfg: ExperimentConfig):
        cfg.validate()
        self.cfg = cfg
        n, t = cfg.n, cfg.faults
        self.params = Params(n=n, t=t, beta=cfg.beta, proposer_mode=ProposerMode(cfg.proposer_mode))
        matrix = cfg.matrix()
        self.sim = Simulator(matrix, seed=cfg.seed, jitter_ms=cfg.jitter_ms, gst_ms=cfg.gst_ms,
                             pre_gst_delay_factor=cfg.pre_gst_delay_factor,
                             pre_gst_delay_ms=cfg.pre_gst_delay_ms)
        node_regions = round_robin_placement(n, matrix.regions)
        for i in range(n):
            self.sim.region_of[i] = matrix.index(node_regions[i])
        self.spec = AdversarySpec(AdversaryKind(cfg.adversary), cfg.byzantine_count)
        self.byzantine = self.spec.byzantine(n, t)
        self.correct = tuple(i for i in range(n) if i not in self.byzantine)
        self.leader = None
        if cfg.protocol == "cons1":
            self.leader = cfg.leader if cfg.leader is not None else central_node(self.sim, range(n))
        self.verifiers: dict[tuple[int, bytes], set[int]] = {}
        self.created: dict[bytes, float] = {}
        self.issued: dict[bytes, Transaction] = {}
        self.violations: list[str] = []
        self.requesters: list[Requester] = []
        self._build(matrix, node_regions)

    # -- construction -------------------------------------------------------

    def _proposer_ids(self) -> tuple[int, ...]:
        if self.cfg.protocol == "cons1":
            return (self.leader,)
        return self.params.proposers

    def _build(self, matrix, node_regions) -> None:
        cfg, params, sim = self.cfg, self.params, self.sim
        n, t = params.n, params.t
        entries = []
        synthetic = cfg.requesters == 0
        if synthetic:
            owners = {}
            for p in self._proposer_ids():
                owners[p] = SyntheticSource.genesis(p, cfg.beta, cfg.accounts_per_proposer)
                entries += owners[p]
            accounts_per = cfg.accounts_per_proposer or min(cfg.beta, 10)
            recipients = [proposer_keys(p, j).account for p in self._proposer_ids()
                          for j in range(accounts_per)]
        else:
            req_keys = [requester_keys(i) for i in range(cfg.requesters)]
            for kp in req_keys:
                entries += [(kp.account, cfg.genesis_per_requester)] * cfg.genesis_utxos_per_requester
            recipients = [kp.account for kp in req_keys]
        table = genesis_table(entries)
        genesis = genesis_block(entries)
        self.genesis_supply = table.supply

        rtt_max = 2 * max(max(row) for row in matrix.latency_ms)
        # slowest payload transfer over the thinnest link, both ways
        payload_bytes = cfg.beta * 260 + 64
        min_bw = min(min(row) for row in matrix.bandwidth_mbps)
        transfer = payload_bytes * 8 / (min_bw * 1000.0)
        fetch_timeout = cfg.fetch_timeout_ms if cfg.fetch_timeout_ms is not None else (
            2 * rtt_max + 4 * transfer + 50.0)
        verifier_keys = {i: node_keys(i).public for i in range(n)}

        def record_verifier(k, txid, node):
            self.verifiers.setdefault((k, txid), set()).add(node)

        self.nodes: list[Node] = []
        for i in range(n):
            if synthetic:
                if i in self._proposer_ids():
                    accounts_per = cfg.accounts_per_proposer or min(cfg.beta, 10)
                    keys = [proposer_keys(i, j) for j in range(accounts_per)]
                    source = SyntheticSource(keys, recipients,
                                             random.Random(f"workload/{cfg.seed}/{i}"))
                else:
                    source = SyntheticSource([], recipients, random.Random(0))
            else:
                if cfg.protocol == "cons1":
                    rank_of = (lambda node, tx: 0)
                else:
                    rank_of = (lambda node, tx, _n=n, _t=t: proposer_rank(node, tx, _n, _t))
                source = MempoolSource(cfg.secondary_delay_rounds, rank_of)
            common = dict(source=source, allow_chained=cfg.allow_chained,
                          record_verifier=record_verifier, verify_cost_ms=cfg.verify_cost_ms)
            if cfg.protocol == "rbbc":
                node = RbbcNode(i, params, sim, genesis, table, verifier_keys=verifier_keys,
                                rtt_max_ms=rtt_max, fetch_timeout_ms=fetch_timeout,
                                timer_base_ms=cfg.timer_base_ms,
                                max_bin_rounds=cfg.max_bin_rounds, **common)
            else:
                node = Cons1Node(i, params, sim, genesis, table, leader=self.leader,
                                 round_timeout_ms=max(10_000.0, 20 * rtt_max), **common)
            node.stop_after = cfg.rounds if cfg.duration_ms is None else None
            node.on_block = self._on_block
            node.on_round_start = self._on_round_start
            sim.actors[i] = node
            self.nodes.append(node)
        self.victims = ()
        if self.byzantine:
            install(self.nodes, self.spec, n, t)
            if self.spec.kind == AdversaryKind.BYZ2:
                self.victims = byz2_victims(n, t, self.byzantine)

        if not synthetic:
            req_regions = cfg.requester_regions or list(dict.fromkeys(node_regions))
            placement = round_robin_placement(cfg.requesters, req_regions)
            cons1_props = None
            if cfg.protocol == "cons1":
                cons1_props = tuple((self.leader + i) % n for i in range(t + 1))
            for i, kp in enumerate(req_keys):
                actor = n + i
                sim.add_actor(actor, None, placement[i])
                first = i * cfg.genesis_utxos_per_requester
                utxos = [(genesis_outpoint(first + j), cfg.genesis_per_requester)
                         for j in range(cfg.genesis_utxos_per_requester)]
                r = Requester(actor, i, sim, n=n, t=t, keys=kp, genesis_utxos=utxos,
                              recipients=recipients,
                              rng=random.Random(f"requester/{cfg.seed}/{i}"),
                              proposers=cons1_props, log=self._log_tx)
                sim.actors[actor] = r
                self.requesters.append(r)

    # -- hooks --------------------------------------------------------------

    def _log_tx(self, tx: Transaction, at: float) -> None:
        self.issued[tx.txid] = tx
        self.created.setdefault(tx.txid, at)

    def _on_round_start(self, node, k, txs) -> None:
        now = self.sim.now
        for tx in txs:
            self.created.setdefault(tx.txid, now)

    def _on_block(self, node: Node, block, record) -> None:
        table = node.table
        if table.supply + table.burned != self.genesis_supply or table.burned != 0:
            self.violations.append(
                f"node {node.id} height {block.index}: supply {table.supply} "
                f"burned {table.burned} != genesis {self.genesis_supply}")
        if node.id in self.correct:
            ref = None
            for j in self.correct:
                other = self.nodes[j]
                if other is not node and other.height >= block.index:
                    ref = other.chain[block.index]
                    break
            if ref is not None and ref.digest != block.digest:
                self.violations.append(
                    f"fork at height {block.index}: node {node.id} disagrees with node {j}")
        if self.cfg.duration_ms is None and all(
                self.nodes[i].height >= self.cfg.rounds for i in self.correct):
            self.sim.stop()

    # -- run ----------------------------------------------------------------

    def run(self) -> RunResult:
        start = time.perf_counter()
        sim = self.sim
        for i in range(self.params.n):
            if not self.nodes[i].inert:
                sim.schedule(0.0, i, self.nodes[i].start)
        for r in self.requesters:
            sim.schedule(0.0, r.id, r.start)
        try:
            if self.cfg.duration_ms is None:
                sim.run()
            else:
                sim.run(until_ms=self.cfg.duration_ms)
        except SimulationDeadlock as exc:
            heights = {i: self.nodes[i].height for i in range(self.params.n)}
            raise RunFailure(f"{exc}; node heights {heights}; pending events "
                             f"{sim.pending()}") from exc
        except TerminationFailure as exc:
            raise RunFailure(str(exc)) from exc
        for r in self.requesters:
            r.stopped = True
        result = RunResult(self.cfg, self.params, self.nodes, self.correct, self.byzantine, sim,
                           self.genesis_supply, self.verifiers, self.created, self.issued,
                           self.requesters, self.violations, time.perf_counter() - start,
                           leader=self.leader, victims=self.victims)
        self._final_checks(result)
        return result

    def _final_checks(self, result: RunResult) -> None:
        h = result.height
        ref = self.nodes[self.correct[0]].chain
        for i in self.correct[1:]:
            chain = self.nodes[i].chain
            for k in range(1, min(len(chain), len(ref))):
                if chain[k].digest != ref[k].digest:
                    self.violations.append(f"fork at height {k}: nodes {self.correct[0]} and {i}")
                    break
        for k in range(1, h + 1):
            b = ref[k]
            if b.prev != ref[k - 1].digest:
                self.violations.append(f"broken prev link at height {k}")


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    return World(cfg).run()
