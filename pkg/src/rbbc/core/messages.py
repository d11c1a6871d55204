"""Protocol messages exchanged between nodes and requesters.

Every message starts with a 13-byte header (kind u8, sender u32, consensus
instance u64). ``wire_size`` is computed arithmetically and always equals
``len(encode(msg))``; the simulator relies on it for byte accounting.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import ClassVar

from .codec import DecodeError, Reader, blob, pack_bits, u8, u16, u32, u64
from .crypto import DIGEST_SIZE, SIGNATURE_SIZE

HEADER_SIZE = 13


class Kind(enum.IntEnum):
    RB_INIT = 1
    RB_ECHO = 2
    RB_READY = 3
    RB_FETCH_REQ = 4
    RB_FETCH_RESP = 5
    BIN_EST = 6
    BIN_AUX = 7
    BIN_COORD = 8
    ATTEST = 9
    C1_PRE_PREPARE = 10
    C1_PREPARE = 11
    C1_COMMIT = 12
    TX_SUBMIT = 13
    READ_REQ = 14
    READ_RESP = 15


def _bitlen(count: int) -> int:
    return (count + 7) // 8


class Message:
    """Base for all messages; subclasses are frozen slotted dataclasses."""

    __slots__ = ()
    KIND: ClassVar[Kind]
    PHASE: ClassVar[str]
    sender: int
    k: int

    @property
    def wire_size(self) -> int:
        return HEADER_SIZE + self._body_size()

    def _body_size(self) -> int:
        raise NotImplementedError

    def _body(self) -> bytes:
        raise NotImplementedError


# -- reliable broadcast ---------------------------------------------------

@dataclass(frozen=True, slots=True)
class RbInit(Message):
    KIND: ClassVar[Kind] = Kind.RB_INIT
    PHASE: ClassVar[str] = "rb"
    sender: int
    k: int
    broadcaster: int
    payload: bytes

    def _body_size(self):
        return 2 + 4 + len(self.payload)

    def _body(self):
        return u16(self.broadcaster) + blob(self.payload)


@dataclass(frozen=True, slots=True)
class _RbDigestMsg(Message):
    sender: int
    k: int
    broadcaster: int
    digest: bytes

    def _body_size(self):
        return 2 + DIGEST_SIZE

    def _body(self):
        if len(self.digest) != DIGEST_SIZE:
            raise ValueError("digest must be 32 bytes")
        return u16(self.broadcaster) + self.digest


@dataclass(frozen=True, slots=True)
class RbEcho(_RbDigestMsg):
    KIND: ClassVar[Kind] = Kind.RB_ECHO
    PHASE: ClassVar[str] = "rb"


@dataclass(frozen=True, slots=True)
class RbReady(_RbDigestMsg):
    KIND: ClassVar[Kind] = Kind.RB_READY
    PHASE: ClassVar[str] = "rb"


@dataclass(frozen=True, slots=True)
class RbFetchReq(_RbDigestMsg):
    KIND: ClassVar[Kind] = Kind.RB_FETCH_REQ
    PHASE: ClassVar[str] = "rb"


@dataclass(frozen=True, slots=True)
class RbFetchResp(Message):
    KIND: ClassVar[Kind] = Kind.RB_FETCH_RESP
    PHASE: ClassVar[str] = "rb"
    sender: int
    k: int
    broadcaster: int
    payload: bytes

    def _body_size(self):
        return 2 + 4 + len(self.payload)

    def _body(self):
        return u16(self.broadcaster) + blob(self.payload)


# -- binary consensus -----------------------------------------------------

@dataclass(frozen=True, slots=True)
class _BinMsg(Message):
    sender: int
    k: int
    proposer: int
    round: int
    value: int

    def _body_size(self):
        return 2 + 2 + 1

    def _body(self):
        return u16(self.proposer) + u16(self.round) + u8(self.value)


@dataclass(frozen=True, slots=True)
class BinEst(_BinMsg):
    KIND: ClassVar[Kind] = Kind.BIN_EST
    PHASE: ClassVar[str] = "bin"


@dataclass(frozen=True, slots=True)
class BinAux(_BinMsg):
    """``value`` is a bitmask over {0, 1}: 1 = {0}, 2 = {1}, 3 = {0, 1}."""

    KIND: ClassVar[Kind] = Kind.BIN_AUX
    PHASE: ClassVar[str] = "bin"


@dataclass(frozen=True, slots=True)
class BinCoord(_BinMsg):
    KIND: ClassVar[Kind] = Kind.BIN_COORD
    PHASE: ClassVar[str] = "bin"


# -- sharded verification -------------------------------------------------

@dataclass(frozen=True, slots=True)
class Attest(Message):
    """A verifier's verdicts for the decided transactions it checked.

    ``proposers`` marks the proposals in the decided superblock; ``covered``
    marks which of the deduplicated candidate transactions this message
    attests, and ``verdicts`` holds one verdict code per covered entry.
    """

    KIND: ClassVar[Kind] = Kind.ATTEST
    PHASE: ClassVar[str] = "attest"
    sender: int
    k: int
    proposers: tuple[bool, ...]
    covered: tuple[bool, ...]
    verdicts: bytes
    signature: bytes = b""

    def _unsigned(self) -> bytes:
        return b"".join([u16(len(self.proposers)), pack_bits(self.proposers),
                         u32(len(self.covered)), pack_bits(self.covered),
                         blob(self.verdicts)])

    def signing_bytes(self) -> bytes:
        return b"rbbc/attest/v1" + u64(self.k) + u32(self.sender) + self._unsigned()

    def _body_size(self):
        return (2 + _bitlen(len(self.proposers)) + 4 + _bitlen(len(self.covered))
                + 4 + len(self.verdicts) + SIGNATURE_SIZE)

    def _body(self):
        if len(self.signature) != SIGNATURE_SIZE:
            raise ValueError("attestation is unsigned")
        return self._unsigned() + self.signature


# -- leader-based baseline ------------------------------------------------

@dataclass(frozen=True, slots=True)
class C1PrePrepare(Message):
    KIND: ClassVar[Kind] = Kind.C1_PRE_PREPARE
    PHASE: ClassVar[str] = "cons1"
    sender: int
    k: int
    payload: bytes

    def _body_size(self):
        return 4 + len(self.payload)

    def _body(self):
        return blob(self.payload)


@dataclass(frozen=True, slots=True)
class _C1DigestMsg(Message):
    sender: int
    k: int
    digest: bytes

    def _body_size(self):
        return DIGEST_SIZE

    def _body(self):
        if len(self.digest) != DIGEST_SIZE:
            raise ValueError("digest must be 32 bytes")
        return self.digest


@dataclass(frozen=True, slots=True)
class C1Prepare(_C1DigestMsg):
    KIND: ClassVar[Kind] = Kind.C1_PREPARE
    PHASE: ClassVar[str] = "cons1"


@dataclass(frozen=True, slots=True)
class C1Commit(_C1DigestMsg):
    KIND: ClassVar[Kind] = Kind.C1_COMMIT
    PHASE: ClassVar[str] = "cons1"


# -- client traffic -------------------------------------------------------

@dataclass(frozen=True, slots=True)
class TxSubmit(Message):
    KIND: ClassVar[Kind] = Kind.TX_SUBMIT
    PHASE: ClassVar[str] = "client"
    sender: int
    k: int
    tx: bytes

    def _body_size(self):
        return 4 + len(self.tx)

    def _body(self):
        return blob(self.tx)


@dataclass(frozen=True, slots=True)
class ReadReq(Message):
    KIND: ClassVar[Kind] = Kind.READ_REQ
    PHASE: ClassVar[str] = "client"
    sender: int
    k: int
    account: bytes
    seq: int

    def _body_size(self):
        return DIGEST_SIZE + 4

    def _body(self):
        return self.account + u32(self.seq)


@dataclass(frozen=True, slots=True)
class ReadResp(Message):
    """UTXOs owned by ``account`` as (txid, index, amount), sorted."""

    KIND: ClassVar[Kind] = Kind.READ_RESP
    PHASE: ClassVar[str] = "client"
    sender: int
    k: int
    account: bytes
    seq: int
    utxos: tuple[tuple[bytes, int, int], ...]

    def _body_size(self):
        return DIGEST_SIZE + 4 + 4 + len(self.utxos) * (DIGEST_SIZE + 4 + 8)

    def _body(self):
        parts = [self.account, u32(self.seq), u32(len(self.utxos))]
        for txid, index, amount in self.utxos:
            parts += [txid, u32(index), u64(amount)]
        return b"".join(parts)


_BY_KIND: dict[int, type[Message]] = {
    cls.KIND: cls for cls in (RbInit, RbEcho, RbReady, RbFetchReq, RbFetchResp,
                              BinEst, BinAux, BinCoord, Attest, C1PrePrepare,
                              C1Prepare, C1Commit, TxSubmit, ReadReq, ReadResp)
}


def encode(msg: Message) -> bytes:
    return u8(msg.KIND) + u32(msg.sender) + u64(msg.k) + msg._body()


def decode(data: bytes) -> Message:
    r = Reader(data)
    kind = r.u8()
    cls = _BY_KIND.get(kind)
    if cls is None:
        raise DecodeError(f"unknown message kind {kind}")
    sender, k = r.u32(), r.u64()
    if cls in (RbInit, RbFetchResp):
        msg = cls(sender, k, r.u16(), r.blob())
    elif issubclass(cls, _RbDigestMsg):
        msg = cls(sender, k, r.u16(), r.take(DIGEST_SIZE))
    elif issubclass(cls, _BinMsg):
        msg = cls(sender, k, r.u16(), r.u16(), r.u8())
    elif cls is Attest:
        proposers = r.bits(r.u16())
        covered = r.bits(r.u32())
        verdicts = r.blob()
        msg = Attest(sender, k, proposers, covered, verdicts, r.take(SIGNATURE_SIZE))
    elif cls is C1PrePrepare:
        msg = C1PrePrepare(sender, k, r.blob())
    elif issubclass(cls, _C1DigestMsg):
        msg = cls(sender, k, r.take(DIGEST_SIZE))
    elif cls is TxSubmit:
        msg = TxSubmit(sender, k, r.blob())
    elif cls is ReadReq:
        msg = ReadReq(sender, k, r.take(DIGEST_SIZE), r.u32())
    else:
        account, seq = r.take(DIGEST_SIZE), r.u32()
        utxos = tuple((r.take(DIGEST_SIZE), r.u32(), r.u64()) for _ in range(r.u32()))
        msg = ReadResp(sender, k, account, seq, utxos)
    r.finish()
    return msg
