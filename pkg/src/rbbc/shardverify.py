"""Sharded transaction verification.

Every decided transaction is checked by a window of the node ring seeded by
its hash: t+1 primary verifiers always, plus up to t extension verifiers
that step in only when the primaries have not produced t+1 agreeing verdicts
in time. Verdicts travel in signed per-verifier batches (``Attest``) and a
transaction's verdict is final once t+1 assigned verifiers agree on it.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

from .core import KeyPair, Transaction, hash_bytes, sign, verify
from .core.codec import u64
from .core.messages import Attest
from .ledger import Verdict, check_stateless


@dataclass(frozen=True)
class Assignment:
    primary: tuple[int, ...]
    extension: tuple[int, ...]

    @property
    def members(self) -> tuple[int, ...]:
        return self.primary + self.extension

    def position(self, node: int) -> int:
        """0 for primary verifiers, 1..t along the extension, -1 otherwise."""
        if node in self.primary:
            return 0
        if node in self.extension:
            return self.extension.index(node) + 1
        return -1


def ring_start(txid: bytes, instance: int, n: int) -> int:
    return int.from_bytes(hash_bytes(txid + u64(instance))[:8], "little") % n


def window(h: int, n: int, t: int) -> Assignment:
    return Assignment(tuple((h + i) % n for i in range(t + 1)),
                      tuple((h + t + 1 + i) % n for i in range(t)))


def assign(txid: bytes, instance: int, n: int, t: int) -> Assignment:
    return window(ring_start(txid, instance, n), n, t)


def sign_attest(keys: KeyPair, msg: Attest) -> Attest:
    return Attest(msg.sender, msg.k, msg.proposers, msg.covered, msg.verdicts,
                  sign(keys, msg.signing_bytes()))


def escalation_delay_ms(rtt_max_ms: float, verify_cost_ms: float, max_primary_load: int) -> float:
    # time for the slowest primary to verify its batch and for the batch to
    # cross the widest link, with a factor 2 of slack on both
    return 2.0 * rtt_max_ms + 2.0 * verify_cost_ms * max_primary_load


class VerificationRound:
    """Verification of one decided candidate at one node.

    ``host`` provides ``id``, ``n``, ``t``, ``cpu``, ``verify_cost_ms``,
    ``broadcast``, ``timer``, ``keys`` and ``verifier_keys`` (node -> public key).
    ``on_final(verdicts)`` fires once with one verdict per candidate tx.
    ``record(tx_index, node)`` is told each time some node starts checking a tx.
    """

    def __init__(self, host, k: int, proposers: tuple[bool, ...],
                 candidate: Sequence[Transaction], *, escalation_ms: float,
                 on_final: Callable[[list[Verdict]], None],
                 record: Callable[[int, int], None] | None = None):
        self.host = host
        self.k = k
        self.proposers = proposers
        self.candidate = list(candidate)
        n, t = host.n, host.t
        self.assignments = [assign(tx.txid, k, n, t) for tx in self.candidate]
        self.escalation_ms = escalation_ms
        self.on_final = on_final
        self.record = record
        m = len(self.candidate)
        self.votes: list[dict[int, set[int]]] = [dict() for _ in range(m)]
        self.voted: list[set[int]] = [set() for _ in range(m)]
        self.final: list[Verdict | None] = [None] * m
        self.pending = m
        self.mine_done: set[int] = set()
        self.escalations = 0
        self.unassigned = 0
        self.bad_attest = 0
        self.done = False
        self.checks = 0

    def primary_load(self) -> dict[int, int]:
        load: dict[int, int] = {}
        for a in self.assignments:
            for v in a.primary:
                load[v] = load.get(v, 0) + 1
        return load

    def start(self) -> None:
        me = self.host.id
        mine = [j for j, a in enumerate(self.assignments) if me in a.primary]
        if mine:
            self._verify(mine)
        if any(me in a.extension for a in self.assignments):
            self.host.timer(self.escalation_ms, self._escalate, 1)
        if not self.candidate:
            self._finish()

    def _verify(self, idxs: list[int]) -> None:
        self.mine_done.update(idxs)
        if self.record is not None:
            for j in idxs:
                self.record(j, self.host.id)
        h = self.host
        h.cpu.run(h.verify_cost_ms * len(idxs), self._attest, idxs)

    def _attest(self, idxs: list[int]) -> None:
        self.checks += len(idxs)
        covered = [False] * len(self.candidate)
        for j in idxs:
            covered[j] = True
        verdicts = bytes(check_stateless(self.candidate[j]) for j in sorted(idxs))
        h = self.host
        msg = sign_attest(h.keys, Attest(h.id, self.k, self.proposers, tuple(covered), verdicts))
        h.broadcast(msg)

    def _escalate(self, step: int) -> None:
        """At the step-th check, extension verifiers up to position
        (missing primary verdicts + step - 1) join for undecided txs."""
        if self.done:
            return
        me, t = self.host.id, self.host.t
        join = []
        again = False
        for j, a in enumerate(self.assignments):
            if self.final[j] is not None or j in self.mine_done:
                continue
            pos = a.position(me)
            if pos < 1:
                continue
            votes = self.votes[j]
            best = max((len(s) for s in votes.values()), default=0)
            missing = t + 1 - best
            if pos <= missing + step - 1:
                join.append(j)
            else:
                again = True
        if join:
            self.escalations += len(join)
            self._verify(join)
        if again:
            self.host.timer(self.escalation_ms, self._escalate, step + 1)

    def on_attest(self, src: int, msg: Attest) -> None:
        if self.done:
            return
        m = len(self.candidate)
        if msg.sender != src or msg.proposers != self.proposers or len(msg.covered) != m:
            self.bad_attest += 1
            return
        idxs = [j for j, c in enumerate(msg.covered) if c]
        if len(idxs) != len(msg.verdicts):
            self.bad_attest += 1
            return
        pub = self.host.verifier_keys[src]
        if not verify(pub, msg.signing_bytes(), msg.signature):
            self.bad_attest += 1
            return
        for j, code in zip(idxs, msg.verdicts):
            if src not in self.assignments[j].members:
                self.unassigned += 1
                continue
            if src in self.voted[j] or self.final[j] is not None:
                continue
            try:
                verdict = Verdict(code)
            except ValueError:
                self.bad_attest += 1
                continue
            self.voted[j].add(src)
            senders = self.votes[j].setdefault(verdict, set())
            senders.add(src)
            if len(senders) >= self.host.t + 1:
                self.final[j] = verdict
                self.pending -= 1
        if self.pending == 0:
            self._finish()

    def _finish(self) -> None:
        if self.done:
            return
        self.done = True
        self.on_final(list(self.final))
