"""DBFT superblock consensus: one reliable broadcast and one binary consensus
per proposer, reduced to the union of the proposals that were decided 1.

Round k at a node: broadcast its proposal (if it is a proposer); vote 1 in
binary instance i as soon as proposal i is delivered; once P - t instances
(P = number of proposers) have decided 1, vote 0 in every instance it has
not voted in yet. When every instance has decided and every accepted
proposal is held, the concatenation of accepted proposals in proposer order
is the candidate. It goes through sharded verification, then the attested
valid transactions are conflict-filtered in order to form block k.
"""

from __future__ import annotations

from collections import OrderedDict
from collections.abc import Callable
from functools import lru_cache

from .binconsensus import DEFAULT_MAX_ROUNDS, DEFAULT_TIMER_BASE_MS, BinaryConsensus
from .core import Block, DecodeError, Params, Proposal, Transaction
from .core.messages import Attest, ReadReq, TxSubmit
from .ledger import UtxoTable, Verdict, check_stateless, filter_conflicts
from .node import BlockRecord, Node
from .rbcast import ReliableBroadcast
from .shardverify import VerificationRound, escalation_delay_ms


@lru_cache(maxsize=1 << 12)
def decode_proposal(payload: bytes) -> Proposal | None:
    # shared across simulated nodes: every node decodes the same INIT bytes
    try:
        return Proposal.decode(payload)
    except (DecodeError, ValueError):
        return None


class Mempool:
    """FIFO of stateless-valid transactions awaiting proposal.

    Each entry carries the first consensus instance in which it may be
    proposed, so that secondary proposers hold back their copies.
    """

    def __init__(self):
        self.entries: OrderedDict[bytes, tuple[Transaction, int]] = OrderedDict()
        self.in_flight: dict[bytes, Transaction] = {}
        self.rejected = 0

    def __len__(self) -> int:
        return len(self.entries)

    def admit(self, tx: Transaction, eligible_from: int = 0) -> bool:
        txid = tx.txid
        if txid in self.entries or txid in self.in_flight:
            self.rejected += 1
            return False
        self.entries[txid] = (tx, eligible_from)
        return True

    def take(self, k: int, beta: int, table: UtxoTable) -> list[Transaction]:
        out: list[Transaction] = []
        used: set = set()
        stale = []
        for txid, (tx, eligible) in self.entries.items():
            if len(out) >= beta:
                break
            ops = tx.outpoints
            if any(op not in table for op in ops):
                stale.append(txid)
                continue
            if eligible > k or any(op in used for op in ops):
                continue
            used.update(ops)
            out.append(tx)
        for txid in stale:
            del self.entries[txid]
        for tx in out:
            del self.entries[tx.txid]
            self.in_flight[tx.txid] = tx
        return out

    def settle(self, table: UtxoTable) -> None:
        """After a block: uncommitted in-flight txs return to the front."""
        back = [tx for tx in self.in_flight.values()
                if all(op in table for op in tx.outpoints)]
        self.in_flight.clear()
        for tx in reversed(back):
            self.entries[tx.txid] = (tx, 0)
            self.entries.move_to_end(tx.txid, last=False)
        for txid in [x for x, (tx, _) in self.entries.items()
                     if any(op not in table for op in tx.outpoints)]:
            del self.entries[txid]


class MempoolSource:
    """Proposal source backed by a mempool fed by requesters."""

    def __init__(self, secondary_delay_rounds: int = 1, rank_of: Callable | None = None):
        self.pool = Mempool()
        self.secondary_delay_rounds = secondary_delay_rounds
        self.rank_of = rank_of

    def admit(self, node: Node, tx: Transaction) -> None:
        rank = self.rank_of(node.id, tx) if self.rank_of is not None else 0
        if rank < 0:
            return
        # the current round's proposal is already out, so the primary's
        # first chance is the next round and secondaries wait beyond it
        nxt = getattr(node, "k", 0) + 1
        self.pool.admit(tx, nxt + rank * self.secondary_delay_rounds)

    def propose_batch(self, node: Node, k: int) -> list[Transaction]:
        return self.pool.take(k, node.params.beta, node.table)

    def on_committed(self, node: Node, block: Block) -> None:
        self.pool.settle(node.table)


class _Round:
    __slots__ = ("k", "proposals", "inputs", "decided", "ones", "verif", "attests",
                 "started_at", "bin_rounds", "duplicates", "candidate", "finalized")

    def __init__(self, k: int):
        self.k = k
        self.proposals: dict[int, Proposal | None] = {}
        self.inputs: set[int] = set()
        self.decided: dict[int, int] = {}
        self.bin_rounds: dict[int, int] = {}
        self.ones = 0
        self.verif: VerificationRound | None = None
        self.attests: list[tuple[int, Attest]] = []
        self.started_at: float | None = None
        self.duplicates = 0
        self.candidate: list[Transaction] = []
        self.finalized = False


class RbbcNode(Node):
    def __init__(self, node_id, params: Params, sim, genesis, table, *, source,
                 verifier_keys: dict[int, bytes], rtt_max_ms: float,
                 fetch_timeout_ms: float = 1000.0,
                 timer_base_ms: float = DEFAULT_TIMER_BASE_MS,
                 max_bin_rounds: int = DEFAULT_MAX_ROUNDS, allow_chained: bool = True,
                 record_verifier: Callable[[int, bytes, int], None] | None = None,
                 **kw):
        super().__init__(node_id, params, sim, genesis, table, **kw)
        self.source = source
        self.verifier_keys = verifier_keys
        self.rtt_max_ms = rtt_max_ms
        self.timer_base_ms = timer_base_ms
        self.max_bin_rounds = max_bin_rounds
        self.allow_chained = allow_chained
        self.record_verifier = record_verifier
        self.proposers = params.proposers
        self.slot_of = {p: i for i, p in enumerate(self.proposers)}
        self.threshold = max(len(self.proposers) - self.t, 1)
        self.rb = ReliableBroadcast(self, self._on_rb_deliver,
                                    fetch_timeout_ms=fetch_timeout_ms, accept=self._accept_init)
        self.bins: dict[tuple[int, int], BinaryConsensus] = {}
        self.rounds: dict[int, _Round] = {}
        self.k = 0
        self.stop_after: int | None = None
        self.proposed: dict[int, list[Transaction]] = {}
        self.on_round_start: Callable[[RbbcNode, int, list[Transaction]], None] | None = None

    def start(self) -> None:
        self._start_round(1)

    def _round(self, k: int) -> _Round:
        st = self.rounds.get(k)
        if st is None:
            st = self.rounds[k] = _Round(k)
        return st

    def _bin(self, k: int, slot: int) -> BinaryConsensus:
        key = (k, slot)
        inst = self.bins.get(key)
        if inst is None:
            inst = self.bins[key] = BinaryConsensus(
                self, k, slot, self._on_bin_decide, timer_base_ms=self.timer_base_ms,
                max_rounds=self.max_bin_rounds)
        return inst

    # -- round lifecycle ----------------------------------------------------

    def _start_round(self, k: int) -> None:
        self.k = k
        st = self._round(k)
        st.started_at = self.sim.now
        if self.id in self.slot_of:
            txs = list(self.source.propose_batch(self, k))
            self.proposed[k] = txs
            if self.on_round_start is not None:
                self.on_round_start(self, k, txs)
            self.rb.broadcast(k, Proposal(self.id, k, tuple(txs)).encoded)
        for slot, prop in list(st.proposals.items()):
            if prop is not None and slot not in st.inputs:
                self._input(st, slot, 1)
        if st.ones >= self.threshold:
            self._fill_zeros(st)
        self._check_complete(st)

    def _input(self, st: _Round, slot: int, bit: int) -> None:
        st.inputs.add(slot)
        self._bin(st.k, slot).propose(bit)

    def _fill_zeros(self, st: _Round) -> None:
        for slot in range(len(self.proposers)):
            if slot not in st.inputs:
                self._input(st, slot, 0)

    def _accept_init(self, k: int, broadcaster: int, payload: bytes) -> bool:
        if k < 1 or broadcaster not in self.slot_of:
            return False
        prop = decode_proposal(payload)
        return (prop is not None and prop.proposer == broadcaster and prop.instance == k
                and len(prop.txs) <= self.params.beta)

    def _on_rb_deliver(self, k: int, broadcaster: int, payload: bytes) -> None:
        slot = self.slot_of.get(broadcaster)
        if slot is None or k < self.k:
            return
        prop = decode_proposal(payload)
        if prop is not None and (prop.proposer != broadcaster or prop.instance != k
                                 or len(prop.txs) > self.params.beta):
            prop = None
        st = self._round(k)
        st.proposals[slot] = prop
        if k == self.k:
            if prop is not None and slot not in st.inputs:
                self._input(st, slot, 1)
            self._check_complete(st)

    def _on_bin_decide(self, k: int, slot: int, bit: int, rnd: int) -> None:
        st = self._round(k)
        st.decided[slot] = bit
        st.bin_rounds[slot] = rnd
        if bit:
            st.ones += 1
        if k == self.k:
            if st.ones >= self.threshold:
                self._fill_zeros(st)
            self._check_complete(st)

    def _check_complete(self, st: _Round) -> None:
        if st.verif is not None or st.k != self.k:
            return
        if len(st.decided) < len(self.proposers):
            return
        for slot, bit in st.decided.items():
            if bit and slot not in st.proposals:
                return  # decided 1 but not yet delivered: RB totality will bring it
        seen: set[bytes] = set()
        candidate: list[Transaction] = []
        included = []
        for slot in range(len(self.proposers)):
            prop = st.proposals.get(slot) if st.decided[slot] else None
            included.append(prop is not None)
            if prop is None:
                continue
            for tx in prop.txs:
                txid = tx.txid
                if txid in seen:
                    st.duplicates += 1
                    continue
                seen.add(txid)
                candidate.append(tx)
        st.candidate = candidate
        k = st.k
        record = None
        if self.record_verifier is not None:
            def record(j, node, _k=k, _c=candidate):
                self.record_verifier(_k, _c[j].txid, node)
        verif = VerificationRound(self, k, tuple(included), candidate, escalation_ms=0.0,
                                  on_final=lambda verdicts: self._finalize(st, verdicts),
                                  record=record)
        load = verif.primary_load()
        verif.escalation_ms = escalation_delay_ms(self.rtt_max_ms, self.verify_cost_ms,
                                                  max(load.values(), default=0))
        st.verif = verif
        verif.start()
        for src, msg in st.attests:
            verif.on_attest(src, msg)
        st.attests.clear()

    def _finalize(self, st: _Round, verdicts: list[Verdict]) -> None:
        if st.finalized:
            return
        st.finalized = True
        valid = [tx for tx, v in zip(st.candidate, verdicts) if v is Verdict.VALID]
        rejected_by: dict[str, int] = {}
        for v in verdicts:
            if v is not Verdict.VALID:
                rejected_by[v.name] = rejected_by.get(v.name, 0) + 1
        included, rejected = filter_conflicts(self.table, valid, check_signatures=False,
                                              allow_chained=self.allow_chained)
        for _, v in rejected:
            rejected_by[v.name] = rejected_by.get(v.name, 0) + 1
        if st.duplicates:
            rejected_by["DUPLICATE"] = st.duplicates
        block = Block(index=self.height + 1, prev=self.chain[-1].digest, txs=tuple(included),
                      instance=st.k, included=st.verif.proposers)
        table = self.table._apply_txs(included)
        invalid = len(st.candidate) - len(included) + st.duplicates
        slots = range(len(self.proposers))
        record = BlockRecord(block.index, block.digest, self.sim.now, self.depth.get(st.k, 0),
                             len(included), invalid, st.duplicates, block.included, rejected_by,
                             decisions=tuple(st.decided[s] for s in slots),
                             bin_rounds=tuple(st.bin_rounds[s] for s in slots),
                             started_at=st.started_at)
        self.append_block(block, record, table)
        self.source.on_committed(self, block)
        self._prune(st.k)
        if self.stop_after is None or st.k < self.stop_after:
            self._start_round(st.k + 1)

    def _prune(self, k: int) -> None:
        old = self.rounds.get(k - 1)
        if old is not None:
            old.candidate = []
            old.verif = None
            old.proposals = {}

    # -- dispatch -----------------------------------------------------------

    def on_message(self, src: int, msg) -> None:
        phase = msg.PHASE
        if phase == "rb":
            self.rb.handle(src, msg)
        elif phase == "bin":
            if msg.proposer >= len(self.proposers) or msg.k < 1:
                return
            self._bin(msg.k, msg.proposer).handle(src, msg)
        elif phase == "attest":
            if msg.k < self.k:
                return
            st = self._round(msg.k)
            if st.verif is not None:
                st.verif.on_attest(src, msg)
            elif not st.finalized:
                st.attests.append((src, msg))
        elif type(msg) is TxSubmit:
            self._on_submit(msg)
        elif type(msg) is ReadReq:
            self.answer_read(src, msg)

    def _on_submit(self, msg: TxSubmit) -> None:
        admit = getattr(self.source, "admit", None)
        if admit is None:
            return
        try:
            tx = Transaction.decode(msg.tx)
        except (DecodeError, ValueError):
            return
        self.cpu.run(self.verify_cost_ms, self._admit, tx)

    def _admit(self, tx: Transaction) -> None:
        if check_stateless(tx) is Verdict.VALID:
            self.source.admit(self, tx)
