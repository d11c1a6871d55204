"""Leader-based three-phase BFT baseline.

The leader sends its proposal in PRE_PREPARE; nodes answer with digest-only
PREPARE and COMMIT messages and decide on a quorum of COMMITs. Every node
then verifies every transaction of the decided proposal itself. View change
is not implemented: if a round stalls, the same leader re-sends it.
"""

from __future__ import annotations

from .core import Block, DecodeError, Proposal, Transaction, hash_bytes
from .core.messages import C1Commit, C1PrePrepare, C1Prepare, ReadReq, TxSubmit
from .ledger import Verdict, check_stateless, filter_conflicts
from .node import BlockRecord, Node
from .superblock import decode_proposal


def central_node(sim, nodes) -> int:
    """Node whose mean latency to all nodes is smallest (lowest id on ties)."""
    nodes = list(nodes)
    return min(nodes, key=lambda a: (sum(sim.link_latency(a, b) for b in nodes), a))


class _Instance:
    __slots__ = ("payload", "digest", "prepares", "commits", "prepare_sent", "commit_sent",
                 "decided", "started_at")

    def __init__(self):
        self.payload: bytes | None = None
        self.digest: bytes | None = None
        self.prepares: dict[bytes, set[int]] = {}
        self.commits: dict[bytes, set[int]] = {}
        self.prepare_sent = False
        self.commit_sent = False
        self.decided: bytes | None = None
        self.started_at: float | None = None


class Cons1Node(Node):
    def __init__(self, node_id, params, sim, genesis, table, *, source, leader: int,
                 round_timeout_ms: float = 10_000.0, allow_chained: bool = True,
                 record_verifier=None, **kw):
        super().__init__(node_id, params, sim, genesis, table, **kw)
        self.source = source
        self.leader = leader
        self.round_timeout_ms = round_timeout_ms
        self.allow_chained = allow_chained
        self.record_verifier = record_verifier
        self.instances: dict[int, _Instance] = {}
        self.k = 0
        self.verifying = False
        self.stop_after: int | None = None
        self.proposed: dict[int, list[Transaction]] = {}
        self.on_round_start = None
        self.resends = 0

    def _inst(self, k: int) -> _Instance:
        inst = self.instances.get(k)
        if inst is None:
            inst = self.instances[k] = _Instance()
        return inst

    def start(self) -> None:
        self._start_round(1)

    def _start_round(self, k: int) -> None:
        self.k = k
        inst = self._inst(k)
        inst.started_at = self.sim.now
        if self.id == self.leader:
            txs = list(self.source.propose_batch(self, k))
            self.proposed[k] = txs
            if self.on_round_start is not None:
                self.on_round_start(self, k, txs)
            payload = Proposal(self.id, k, tuple(txs)).encoded
            self.broadcast(C1PrePrepare(self.id, k, payload))
            self.timer(self.round_timeout_ms, self._stalled, k, payload)
        self._try_verify()

    def _stalled(self, k: int, payload: bytes) -> None:
        if self.height < k:
            self.resends += 1
            self.broadcast(C1PrePrepare(self.id, k, payload))
            self.timer(self.round_timeout_ms, self._stalled, k, payload)

    def on_message(self, src: int, msg) -> None:
        kind = type(msg)
        if kind is C1Prepare or kind is C1Commit:
            if msg.k <= self.height:
                return
            inst = self._inst(msg.k)
            votes = inst.prepares if kind is C1Prepare else inst.commits
            senders = votes.setdefault(msg.digest, set())
            if src in senders:
                return
            senders.add(src)
            self._advance(msg.k, inst)
        elif kind is C1PrePrepare:
            if src != self.leader or msg.k <= self.height:
                return
            inst = self._inst(msg.k)
            if inst.payload is not None:
                if not inst.prepare_sent:
                    return
                # re-sent proposal: repeat our votes so a stalled round can finish
                self.broadcast(C1Prepare(self.id, msg.k, inst.digest))
                if inst.commit_sent:
                    self.broadcast(C1Commit(self.id, msg.k, inst.digest))
                return
            prop = decode_proposal(msg.payload)
            if prop is None or prop.proposer != src or prop.instance != msg.k \
                    or len(prop.txs) > self.params.beta:
                return
            inst.payload = msg.payload
            inst.digest = hash_bytes(msg.payload)
            inst.prepare_sent = True
            self.broadcast(C1Prepare(self.id, msg.k, inst.digest))
            self._advance(msg.k, inst)
        elif kind is TxSubmit:
            self._on_submit(msg)
        elif kind is ReadReq:
            self.answer_read(src, msg)

    def _advance(self, k: int, inst: _Instance) -> None:
        d = inst.digest
        if d is None:
            return
        q = self.quorum
        if not inst.commit_sent and len(inst.prepares.get(d, ())) >= q:
            inst.commit_sent = True
            self.broadcast(C1Commit(self.id, k, d))
        if inst.decided is None and len(inst.commits.get(d, ())) >= q:
            inst.decided = d
            self._try_verify()

    def _try_verify(self) -> None:
        if self.verifying:
            return
        k = self.height + 1
        inst = self.instances.get(k)
        if inst is None or inst.decided is None or k > self.k:
            return
        self.verifying = True
        prop = decode_proposal(inst.payload)
        if self.record_verifier is not None:
            for tx in prop.txs:
                self.record_verifier(k, tx.txid, self.id)
        self.cpu.run(self.verify_cost_ms * len(prop.txs), self._finalize, k, prop)

    def _finalize(self, k: int, prop: Proposal) -> None:
        self.verifying = False
        inst = self.instances[k]
        seen: set[bytes] = set()
        candidate, duplicates = [], 0
        for tx in prop.txs:
            if tx.txid in seen:
                duplicates += 1
                continue
            seen.add(tx.txid)
            candidate.append(tx)
        rejected_by: dict[str, int] = {}
        valid = []
        for tx in candidate:
            v = check_stateless(tx)
            if v is Verdict.VALID:
                valid.append(tx)
            else:
                rejected_by[v.name] = rejected_by.get(v.name, 0) + 1
        included, rejected = filter_conflicts(self.table, valid, check_signatures=False,
                                              allow_chained=self.allow_chained)
        for _, v in rejected:
            rejected_by[v.name] = rejected_by.get(v.name, 0) + 1
        if duplicates:
            rejected_by["DUPLICATE"] = duplicates
        block = Block(index=self.height + 1, prev=self.chain[-1].digest, txs=tuple(included),
                      instance=k, included=(True,))
        table = self.table._apply_txs(included)
        record = BlockRecord(block.index, block.digest, self.sim.now, self.depth.get(k, 0),
                             len(included), len(prop.txs) - len(included), duplicates,
                             block.included, rejected_by, decisions=(1,),
                             started_at=inst.started_at)
        self.append_block(block, record, table)
        self.source.on_committed(self, block)
        inst.payload = None
        self.instances.pop(k - 2, None)
        if self.stop_after is None or k < self.stop_after:
            self._start_round(k + 1)

    def _on_submit(self, msg: TxSubmit) -> None:
        if self.id != self.leader or getattr(self.source, "admit", None) is None:
            return
        try:
            tx = Transaction.decode(msg.tx)
        except (DecodeError, ValueError):
            return
        self.cpu.run(self.verify_cost_ms, self._admit, tx)

    def _admit(self, tx: Transaction) -> None:
        if check_stateless(tx) is Verdict.VALID:
            self.source.admit(self, tx)
