"""Ledger and consensus value types with their canonical encodings."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

from .codec import DecodeError, Reader, blob, pack_bits, u16, u32, u64
from .crypto import DIGEST_SIZE, PUBKEY_SIZE, SIGNATURE_SIZE, Account, Digest, hash_bytes

NodeId = int

_SIGHASH_TAG = b"rbbc/tx/v1"


class ProposerMode(str, enum.Enum):
    ALL_N = "all_n"
    T_PLUS_1 = "t_plus_1"


def default_t(n: int) -> int:
    """Largest integer strictly below n/3."""
    return (n - 1) // 3


@dataclass(frozen=True)
class Params:
    n: int
    t: int
    beta: int = 100
    proposer_mode: ProposerMode = ProposerMode.ALL_N

    def __post_init__(self):
        if self.t < 0 or self.n < 3 * self.t + 1:
            raise ValueError(f"need n >= 3t+1 (n={self.n}, t={self.t})")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        object.__setattr__(self, "proposer_mode", ProposerMode(self.proposer_mode))

    @classmethod
    def for_nodes(cls, n: int, beta: int = 100, t: int | None = None,
                  proposer_mode: ProposerMode | str = ProposerMode.ALL_N) -> Params:
        return cls(n=n, t=default_t(n) if t is None else t, beta=beta,
                   proposer_mode=ProposerMode(proposer_mode))

    @property
    def proposers(self) -> tuple[NodeId, ...]:
        if self.proposer_mode is ProposerMode.T_PLUS_1:
            return tuple(range(self.t + 1))
        return tuple(range(self.n))

    @property
    def quorum(self) -> int:
        # Byzantine quorum; equals 2t+1 when n = 3t+1
        return (self.n + self.t) // 2 + 1


@dataclass(frozen=True)
class TxInput:
    txid: Digest
    index: int
    signature: bytes
    pubkey: bytes


@dataclass(frozen=True)
class TxOutput:
    amount: int
    recipient: Account


OutPoint = tuple[bytes, int]


@dataclass(frozen=True)
class Transaction:
    inputs: tuple[TxInput, ...]
    outputs: tuple[TxOutput, ...]
    nonce: int = 0

    def _body(self, with_signatures: bool) -> bytes:
        parts = [u32(len(self.inputs))]
        for i in self.inputs:
            if len(i.txid) != DIGEST_SIZE or len(i.pubkey) != PUBKEY_SIZE:
                raise ValueError("malformed input field length")
            parts += [i.txid, u32(i.index), i.pubkey]
            if with_signatures:
                if len(i.signature) != SIGNATURE_SIZE:
                    raise ValueError("malformed signature length")
                parts.append(i.signature)
        parts.append(u32(len(self.outputs)))
        for o in self.outputs:
            if len(o.recipient) != DIGEST_SIZE:
                raise ValueError("malformed recipient length")
            parts += [u64(o.amount), o.recipient]
        parts.append(u64(self.nonce))
        return b"".join(parts)

    @cached_property
    def encoded(self) -> bytes:
        return self._body(with_signatures=True)

    @cached_property
    def txid(self) -> Digest:
        return hash_bytes(self.encoded)

    @cached_property
    def sighash_preimage(self) -> bytes:
        """Bytes each input signs: the transaction with signatures stripped."""
        return _SIGHASH_TAG + self._body(with_signatures=False)

    @property
    def outpoints(self) -> list[OutPoint]:
        return [(i.txid, i.index) for i in self.inputs]

    def output_total(self) -> int:
        return sum(o.amount for o in self.outputs)

    @classmethod
    def read(cls, r: Reader) -> Transaction:
        inputs = []
        for _ in range(r.u32()):
            txid = r.take(DIGEST_SIZE)
            index = r.u32()
            pubkey = r.take(PUBKEY_SIZE)
            sig = r.take(SIGNATURE_SIZE)
            inputs.append(TxInput(txid, index, sig, pubkey))
        outputs = []
        for _ in range(r.u32()):
            amount = r.u64()
            outputs.append(TxOutput(amount, r.take(DIGEST_SIZE)))
        return cls(tuple(inputs), tuple(outputs), r.u64())

    @classmethod
    def decode(cls, data: bytes) -> Transaction:
        r = Reader(data)
        tx = cls.read(r)
        r.finish()
        return tx


@dataclass(frozen=True)
class Proposal:
    proposer: NodeId
    instance: int
    txs: tuple[Transaction, ...]

    @cached_property
    def encoded(self) -> bytes:
        return b"".join([u16(self.proposer), u64(self.instance), u32(len(self.txs)),
                         *(blob(tx.encoded) for tx in self.txs)])

    @classmethod
    def decode(cls, data: bytes) -> Proposal:
        r = Reader(data)
        proposer, instance = r.u16(), r.u64()
        txs = tuple(Transaction.decode(r.blob()) for _ in range(r.u32()))
        r.finish()
        return cls(proposer, instance, txs)


@dataclass(frozen=True)
class Block:
    index: int
    prev: Digest
    txs: tuple[Transaction, ...]
    instance: int = 0
    included: tuple[bool, ...] = ()

    @cached_property
    def encoded(self) -> bytes:
        if len(self.prev) != DIGEST_SIZE:
            raise ValueError("prev must be a 32-byte digest")
        return b"".join([u64(self.index), self.prev, u64(self.instance),
                         u16(len(self.included)), pack_bits(self.included),
                         u32(len(self.txs)), *(blob(tx.encoded) for tx in self.txs)])

    @cached_property
    def digest(self) -> Digest:
        return hash_bytes(self.encoded)

    @classmethod
    def decode(cls, data: bytes) -> Block:
        r = Reader(data)
        index = r.u64()
        prev = r.take(DIGEST_SIZE)
        instance = r.u64()
        included = r.bits(r.u16())
        txs = tuple(Transaction.decode(r.blob()) for _ in range(r.u32()))
        r.finish()
        return cls(index, prev, txs, instance, included)


__all__ = [
    "Block", "DecodeError", "NodeId", "OutPoint", "Params", "Proposal",
    "ProposerMode", "Transaction", "TxInput", "TxOutput", "default_t",
]
