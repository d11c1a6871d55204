"""UTXO table, transaction validation, conflict filtering and block application."""

from __future__ import annotations

import enum
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import NamedTuple

from .core import Account, Block, OutPoint, Transaction, account_of, hash_bytes, verify
from .core.codec import u64


class Verdict(enum.IntEnum):
    VALID = 0
    BAD_SIGNATURE = 1
    MISSING_INPUT = 2
    DOUBLE_SPEND_WITHIN_BLOCK = 3
    OVER_SPEND = 4
    MALFORMED = 5


class LedgerError(Exception):
    """Raised when a block that should have been filtered is applied."""


class Utxo(NamedTuple):
    amount: int
    owner: Account


class UtxoTable:
    """Immutable view of the unspent outputs; updates return a new table."""

    __slots__ = ("_entries", "_by_owner", "supply", "burned")

    def __init__(self, entries: dict[OutPoint, Utxo] | None = None, burned: int = 0):
        self._entries: dict[OutPoint, Utxo] = dict(entries or {})
        by_owner: dict[Account, dict[OutPoint, int]] = {}
        for op, u in self._entries.items():
            if u.amount <= 0:
                raise LedgerError(f"non-positive UTXO amount {u.amount}")
            by_owner.setdefault(u.owner, {})[op] = u.amount
        self._by_owner = by_owner
        self.supply = sum(u.amount for u in self._entries.values())
        # value consumed by inputs but not re-issued in outputs (fees without a coinbase)
        self.burned = burned

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, op: OutPoint) -> bool:
        return op in self._entries

    def get(self, op: OutPoint) -> Utxo | None:
        return self._entries.get(op)

    def items(self):
        return self._entries.items()

    def owned(self, account: Account) -> dict[OutPoint, int]:
        return self._by_owner.get(account, {})

    def _apply_txs(self, txs: Iterable[Transaction]) -> UtxoTable:
        new = UtxoTable.__new__(UtxoTable)
        entries = dict(self._entries)
        by_owner = dict(self._by_owner)
        copied: set[Account] = set()
        supply, burned = self.supply, self.burned

        def owner_map(acct: Account) -> dict[OutPoint, int]:
            if acct not in copied:
                by_owner[acct] = dict(by_owner.get(acct, {}))
                copied.add(acct)
            return by_owner[acct]

        for tx in txs:
            spent = 0
            for op in tx.outpoints:
                u = entries.pop(op)
                spent += u.amount
                m = owner_map(u.owner)
                del m[op]
                if not m:
                    del by_owner[u.owner]
                    copied.discard(u.owner)
            txid = tx.txid
            for idx, out in enumerate(tx.outputs):
                entries[(txid, idx)] = Utxo(out.amount, out.recipient)
                owner_map(out.recipient)[(txid, idx)] = out.amount
            created = tx.output_total()
            supply += created - spent
            burned += spent - created
        new._entries, new._by_owner = entries, by_owner
        new.supply, new.burned = supply, burned
        return new

    def snapshot_digest(self) -> bytes:
        parts = [op[0] + u64(op[1]) + u64(u.amount) + u.owner
                 for op, u in sorted(self._entries.items())]
        return hash_bytes(b"".join(parts))


GENESIS_TAG = b"rbbc/genesis"


def genesis_outpoint(i: int) -> OutPoint:
    return (hash_bytes(GENESIS_TAG + u64(i)), 0)


def genesis_table(entries: Sequence[tuple[Account, int]]) -> UtxoTable:
    """One UTXO per (account, amount) entry."""
    return UtxoTable({genesis_outpoint(i): Utxo(amount, acct)
                      for i, (acct, amount) in enumerate(entries)})


def genesis_block(entries: Sequence[tuple[Account, int]]) -> Block:
    commitment = hash_bytes(b"".join(a + u64(v) for a, v in entries))
    return Block(index=0, prev=commitment, txs=())


def load_genesis(path: str | Path) -> list[tuple[Account, int]]:
    entries = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            acct_hex, amount = line.split()
            acct = bytes.fromhex(acct_hex)
            value = int(amount)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: expected '<account hex> <amount>'") from exc
        if len(acct) != 32 or value <= 0:
            raise ValueError(f"{path}:{lineno}: bad account or amount")
        entries.append((acct, value))
    return entries


def dump_genesis(entries: Sequence[tuple[Account, int]], path: str | Path) -> None:
    Path(path).write_text("".join(f"{a.hex()} {v}\n" for a, v in entries))


def check_stateless(tx: Transaction) -> Verdict:
    """Structure and signatures only: the part sharded verifiers attest to."""
    if not tx.inputs or not tx.outputs:
        return Verdict.MALFORMED
    if any(o.amount <= 0 for o in tx.outputs):
        return Verdict.MALFORMED
    if len(set(tx.outpoints)) != len(tx.inputs):
        return Verdict.MALFORMED
    msg = tx.sighash_preimage
    for i in tx.inputs:
        if not verify(i.pubkey, msg, i.signature):
            return Verdict.BAD_SIGNATURE
    return Verdict.VALID


def _validate(lookup, tx: Transaction, check_signatures: bool,
              spent_here: set[OutPoint] | dict | None = None) -> Verdict:
    if not tx.inputs or not tx.outputs or any(o.amount <= 0 for o in tx.outputs):
        return Verdict.MALFORMED
    ops = tx.outpoints
    if len(set(ops)) != len(ops):
        return Verdict.MALFORMED
    total_in = 0
    for op, inp in zip(ops, tx.inputs):
        u = lookup(op)
        if u is None:
            if spent_here is not None and op in spent_here:
                return Verdict.DOUBLE_SPEND_WITHIN_BLOCK
            return Verdict.MISSING_INPUT
        if account_of(inp.pubkey) != u.owner:
            return Verdict.BAD_SIGNATURE
        total_in += u.amount
    if check_signatures:
        msg = tx.sighash_preimage
        for inp in tx.inputs:
            if not verify(inp.pubkey, msg, inp.signature):
                return Verdict.BAD_SIGNATURE
    if total_in < tx.output_total():
        return Verdict.OVER_SPEND
    return Verdict.VALID


def validate(table: UtxoTable, tx: Transaction, *, check_signatures: bool = True) -> Verdict:
    return _validate(table.get, tx, check_signatures)


def filter_conflicts(table: UtxoTable, ordered_txs: Iterable[Transaction], *,
                     check_signatures: bool = True, allow_chained: bool = True,
                     ) -> tuple[list[Transaction], list[tuple[Transaction, Verdict]]]:
    """First-spender-wins scan in the given order.

    A transaction is included iff it is valid against ``table`` updated by
    every transaction included before it in this scan.
    """
    created: dict[OutPoint, Utxo] = {}
    spent: set[OutPoint] = set()
    base_get = table.get

    def lookup(op):
        if op in spent:
            return None
        u = base_get(op)
        if u is None and allow_chained:
            u = created.get(op)
        return u

    included, rejected = [], []
    for tx in ordered_txs:
        verdict = _validate(lookup, tx, check_signatures, spent)
        if verdict is not Verdict.VALID:
            rejected.append((tx, verdict))
            continue
        included.append(tx)
        spent.update(tx.outpoints)
        txid = tx.txid
        for idx, out in enumerate(tx.outputs):
            created[(txid, idx)] = Utxo(out.amount, out.recipient)
    return included, rejected


def apply_block(table: UtxoTable, block: Block | Sequence[Transaction]) -> UtxoTable:
    """Return the table after ``block``; raises LedgerError on an invalid tx."""
    txs = block.txs if isinstance(block, Block) else block
    included, rejected = filter_conflicts(table, txs, check_signatures=False)
    if rejected:
        tx, verdict = rejected[0]
        raise LedgerError(f"block contains invalid tx {tx.txid.hex()[:16]}: {verdict.name}")
    return table._apply_txs(included)


def balance(table: UtxoTable, account: Account) -> int:
    return sum(table.owned(account).values())


def request_utxos(table: UtxoTable, account: Account) -> list[tuple[bytes, int, int]]:
    """Owned outputs as (txid, index, amount), ordered by outpoint."""
    return [(op[0], op[1], amt) for op, amt in sorted(table.owned(account).items())]
