"""Transaction workloads.

``SyntheticSource`` makes every proposer its own client: it owns a few
accounts and each round spends every UTXO it holds (up to the proposal size).
``Requester`` is a remote client actor: it spends all its UTXOs, sends the
transactions to its t+1 proposers, then polls ``request_utxos`` on 2t+1
nodes until a quorum of t+1 identical answers shows a new UTXO.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from collections.abc import Sequence

from .core import (
    Account, KeyPair, OutPoint, Transaction, TxInput, TxOutput, hash_bytes, keygen,
    seed_from, sign,
)
from .core.messages import ReadReq, ReadResp, TxSubmit

PAYMENT = 10
GENESIS_AMOUNT = 100_000


def make_payment(keys: KeyPair, outpoint: OutPoint, amount: int, recipient: Account,
                 nonce: int = 0, pay: int = PAYMENT) -> Transaction:
    """Pay ``pay`` coins to ``recipient`` with change back to the spender; a
    UTXO worth ``pay`` or less is spent whole to the recipient."""
    if amount <= pay:
        outputs = (TxOutput(amount, recipient),)
    else:
        outputs = (TxOutput(pay, recipient), TxOutput(amount - pay, keys.account))
    placeholder = TxInput(outpoint[0], outpoint[1], bytes(64), keys.public)
    unsigned = Transaction((placeholder,), outputs, nonce)
    sig = sign(keys, unsigned.sighash_preimage)
    return Transaction((TxInput(outpoint[0], outpoint[1], sig, keys.public),), outputs, nonce)


def is_payment_shape(tx: Transaction, pay: int = PAYMENT) -> bool:
    """10 coins out plus change to the spender, or one output spending a small UTXO whole."""
    if len(tx.inputs) != 1:
        return False
    spender = hash_bytes(tx.inputs[0].pubkey)
    if len(tx.outputs) == 2:
        return tx.outputs[0].amount == pay and tx.outputs[1].recipient == spender
    return len(tx.outputs) == 1 and tx.outputs[0].amount <= pay


def proposer_keys(node: int, j: int) -> KeyPair:
    # independent of the run seed so key generation is shared across seeds
    return keygen(seed_from("proposer-account", node, j))


def requester_keys(i: int) -> KeyPair:
    return keygen(seed_from("requester", i))


class SyntheticSource:
    """Each round, spend every UTXO of the proposer's accounts (at most beta)."""

    def __init__(self, keys: Sequence[KeyPair], recipients: Sequence[Account], rng: random.Random):
        self.keys = list(keys)
        self.recipients = list(recipients)
        self.rng = rng
        self.nonce = 0

    @staticmethod
    def genesis(node: int, beta: int, accounts: int | None = None,
                amount: int = GENESIS_AMOUNT) -> list[tuple[Account, int]]:
        a = accounts or min(beta, 10)
        per = math.ceil(beta / a)
        return [(proposer_keys(node, j).account, amount) for j in range(a) for _ in range(per)]

    def propose_batch(self, node, k: int) -> list[Transaction]:
        beta = node.params.beta
        table = node.table
        txs: list[Transaction] = []
        owned = [sorted(table.owned(kp.account).items()) for kp in self.keys]
        # interleave accounts so every account keeps spending
        depth = max((len(o) for o in owned), default=0)
        for i in range(depth):
            for kp, items in zip(self.keys, owned):
                if i < len(items):
                    op, amount = items[i]
                    self.nonce += 1
                    txs.append(make_payment(kp, op, amount, self.rng.choice(self.recipients),
                                            self.nonce))
                    if len(txs) == beta:
                        return txs
        return txs

    def on_committed(self, node, block) -> None:
        pass


def assigned_proposers(account: Account, n: int, t: int) -> tuple[int, ...]:
    h = int.from_bytes(hash_bytes(account)[:8], "little") % n
    return tuple((h + i) % n for i in range(t + 1))


def connections(proposers: Sequence[int], n: int, t: int) -> tuple[int, ...]:
    """The t+1 proposers followed by the next nodes on the ring, 2t+1 in all."""
    out = list(proposers)
    x = proposers[-1]
    while len(out) < min(2 * t + 1, n):
        x = (x + 1) % n
        if x not in out:
            out.append(x)
    return tuple(out)


def proposer_rank(node: int, tx: Transaction, n: int, t: int) -> int:
    """0 for the spender's primary proposer, 1..t for secondaries, -1 otherwise."""
    if not tx.inputs:
        return -1
    props = assigned_proposers(hash_bytes(tx.inputs[0].pubkey), n, t)
    return props.index(node) if node in props else -1


class Requester:
    def __init__(self, actor_id: int, index: int, sim, *, n: int, t: int, keys: KeyPair,
                 genesis_utxos: Sequence[tuple[OutPoint, int]], recipients: Sequence[Account],
                 rng: random.Random, proposers: Sequence[int] | None = None,
                 poll_ms: float | None = None, log=None):
        self.id = actor_id
        self.index = index
        self.sim = sim
        self.n, self.t = n, t
        self.keys = keys
        self.account = keys.account
        self.proposers = tuple(proposers) if proposers is not None else \
            assigned_proposers(self.account, n, t)
        self.connections = connections(self.proposers, n, t)
        self.connection_set = frozenset(self.connections)
        self.recipients = [a for a in recipients if a != self.account] or list(recipients)
        self.rng = rng
        self.view: dict[OutPoint, int] = dict(genesis_utxos)
        self.seen: set[OutPoint] = set(self.view)
        self.spent: set[OutPoint] = set()
        # one round trip to the nearest connected node, at least 1 ms
        self.poll_ms = poll_ms if poll_ms is not None else max(1.0, 2 * min(
            sim.link_latency(actor_id, c) for c in self.connections))
        self.seq = 0
        self.replies: dict[int, tuple[set[int], dict[tuple, int]]] = {}
        self.settled = 0
        self.waiting = False
        self.generation = 0
        self.txs_sent = 0
        self.reads = 0
        self.read_times: list[float] = []
        self.nonce = 0
        self.log = log  # callback(tx, time) for every submitted tx
        self.stopped = False

    def start(self) -> None:
        self._step()

    def _step(self) -> None:
        for op in sorted(self.view):
            if op in self.spent:
                continue
            self.spent.add(op)
            self.nonce += 1
            tx = make_payment(self.keys, op, self.view[op], self.rng.choice(self.recipients),
                              self.nonce)
            if self.log is not None:
                self.log(tx, self.sim.now)
            data = tx.encoded
            for p in self.proposers:
                self.sim.send(self.id, p, TxSubmit(self.id, 0, data), 1)
            self.txs_sent += 1
        self.waiting = True
        self.generation += 1
        self._poll(self.generation)

    def _poll(self, generation: int) -> None:
        if not self.waiting or self.stopped or generation != self.generation:
            return
        self.seq += 1
        self.reads += 1
        self.read_times.append(self.sim.now)
        for c in self.connections:
            self.sim.send(self.id, c, ReadReq(self.id, 0, self.account, self.seq), 1)
        self.sim.schedule(self.poll_ms, self.id, self._poll, generation)

    def receive(self, src: int, msg, hop: int) -> None:
        if type(msg) is not ReadResp or msg.account != self.account or not self.waiting:
            return
        if msg.seq <= self.settled or src not in self.connection_set:
            return
        entry = self.replies.get(msg.seq)
        if entry is None:
            entry = self.replies[msg.seq] = (set(), {})
        senders, counts = entry
        if src in senders:
            return
        senders.add(src)
        c = counts[msg.utxos] = counts.get(msg.utxos, 0) + 1
        if c < self.t + 1:
            return
        # replies are keyed in send order, so older polls sit at the front
        self.settled = msg.seq
        while self.replies:
            first = next(iter(self.replies))
            if first > msg.seq:
                break
            del self.replies[first]
        utxos = {(txid, idx): amount for txid, idx, amount in msg.utxos}
        if any(op not in self.seen for op in utxos):
            self.seen.update(utxos)
            self.view = utxos
            self.spent &= set(utxos)
            self.waiting = False
            self._step()


def quorum_read(responses: Sequence[tuple], t: int):
    """The response given by at least t+1 responders, or None."""
    if not responses:
        return None
    value, count = Counter(responses).most_common(1)[0]
    return value if count >= t + 1 else None
