from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbbc.core import (
    Block, DecodeError, InvalidSeed, Params, Proposal, Transaction, TxInput, TxOutput,
    account_of, default_t, hash_bytes, keygen, seed_from, sign, verify,
)
from rbbc.core.codec import Reader, pack_bits, unpack_bits
from rbbc.core.messages import (
    Attest, BinAux, BinCoord, BinEst, C1Commit, C1PrePrepare, C1Prepare, RbEcho, RbFetchReq,
    RbFetchResp, RbInit, RbReady, ReadReq, ReadResp, TxSubmit, decode, encode,
)

from . import oracles

digests = st.binary(min_size=32, max_size=32)
small = st.integers(0, 2**16 - 1)


@st.composite
def transactions(draw):
    inputs = tuple(TxInput(draw(digests), draw(st.integers(0, 2**32 - 1)),
                           draw(st.binary(min_size=64, max_size=64)),
                           draw(st.binary(min_size=33, max_size=33)))
                   for _ in range(draw(st.integers(0, 3))))
    outputs = tuple(TxOutput(draw(st.integers(0, 2**64 - 1)), draw(digests))
                    for _ in range(draw(st.integers(0, 3))))
    return Transaction(inputs, outputs, draw(st.integers(0, 2**64 - 1)))


@given(st.binary(max_size=512))
def test_hash_matches_independent_sha256(data):
    assert hash_bytes(data) == oracles.sha256(data)


@given(st.binary(min_size=1, max_size=200), st.integers(1, 10_000))
@settings(max_examples=40, deadline=None)
def test_signatures_interoperate_with_reference_ecdsa(msg, label):
    kp = keygen(seed_from("core-test", label))
    sig = sign(kp, msg)
    assert oracles.ecdsa_verify(kp.public, msg, sig)
    assert verify(kp.public, msg, sig)
    ref = oracles.ecdsa_sign(kp._secret, msg)
    assert verify(kp.public, msg, ref)


def test_tampered_and_high_s_signatures_rejected():
    kp = keygen(seed_from("tamper"))
    msg = b"pay 10"
    sig = sign(kp, msg)
    assert not verify(kp.public, msg + b"!", sig)
    bad = bytes([sig[0] ^ 1]) + sig[1:]
    assert not verify(kp.public, msg, bad)
    s = int.from_bytes(sig[32:], "big")
    high = sig[:32] + (oracles.SECP256K1_N - s).to_bytes(32, "big")
    assert not verify(kp.public, msg, high)
    other = keygen(seed_from("tamper", 2))
    assert not verify(other.public, msg, sig)
    assert not verify(kp.public, msg, sig[:63])
    assert not verify(b"\x02" + bytes(32), msg, sig)


def test_keygen_rejects_bad_seeds():
    with pytest.raises(InvalidSeed):
        keygen(b"short")
    with pytest.raises(InvalidSeed):
        keygen(bytes(32))
    with pytest.raises(InvalidSeed):
        keygen(b"\xff" * 32)
    assert keygen(seed_from(1)) == keygen(seed_from(1))
    assert keygen(seed_from(1)).account == account_of(keygen(seed_from(1)).public)


@pytest.mark.parametrize("n,t", [(1, 0), (3, 0), (4, 1), (7, 2), (10, 3), (16, 5), (40, 13)])
def test_default_t(n, t):
    assert default_t(n) == t
    assert n >= 3 * default_t(n) + 1


def test_params_quorum_and_proposers():
    p = Params.for_nodes(16)
    assert (p.t, p.quorum) == (5, 11)
    assert len(p.proposers) == 16
    assert Params.for_nodes(16, proposer_mode="t_plus_1").proposers == tuple(range(6))
    # any two quorums intersect in at least t+1 nodes
    for n in range(1, 30):
        for t in range(0, (n - 1) // 3 + 1):
            q = Params(n=n, t=t).quorum
            assert 2 * q - n >= t + 1
    with pytest.raises(ValueError):
        Params(n=3, t=1)


@given(transactions())
def test_transaction_roundtrip(tx):
    assert Transaction.decode(tx.encoded) == tx
    assert tx.txid == oracles.sha256(tx.encoded)


def test_txid_commits_to_signature_but_sighash_does_not():
    tx = Transaction((TxInput(bytes(32), 0, bytes(64), bytes(33)),), (TxOutput(5, bytes(32)),))
    tx2 = Transaction((TxInput(bytes(32), 0, b"\x01" * 64, bytes(33)),), (TxOutput(5, bytes(32)),))
    assert tx.sighash_preimage == tx2.sighash_preimage
    assert tx.txid != tx2.txid


@given(st.lists(transactions(), max_size=4), small, st.integers(0, 2**64 - 1))
def test_proposal_roundtrip(txs, proposer, k):
    p = Proposal(proposer, k, tuple(txs))
    assert Proposal.decode(p.encoded) == p


def test_block_roundtrip_and_digest():
    b = Block(index=3, prev=hash_bytes(b"x"), txs=(), instance=3, included=(True, False, True))
    assert Block.decode(b.encoded) == b
    assert b.digest == oracles.sha256(b.encoded)
    with pytest.raises(DecodeError):
        Block.decode(b.encoded + b"\0")


@given(st.lists(st.booleans(), max_size=40))
def test_bitmap_roundtrip(bits):
    assert unpack_bits(pack_bits(bits), len(bits)) == tuple(bits)


def test_bitmap_padding_must_be_zero():
    with pytest.raises(DecodeError):
        unpack_bits(b"\xff", 3)


def test_reader_truncation():
    with pytest.raises(DecodeError):
        Reader(b"\x01").u32()
    with pytest.raises(DecodeError):
        r = Reader(b"\x01\x02")
        r.u8()
        r.finish()


d32 = bytes(range(32))
MESSAGES = [
    RbInit(1, 2, 1, b"payload"),
    RbEcho(1, 2, 3, d32),
    RbReady(1, 2, 3, d32),
    RbFetchReq(1, 2, 3, d32),
    RbFetchResp(1, 2, 3, b"p" * 100),
    BinEst(1, 2, 3, 4, 1),
    BinAux(1, 2, 3, 4, 3),
    BinCoord(1, 2, 3, 4, 0),
    Attest(1, 2, (True, False, True), (True, True), b"\x00\x01", b"s" * 64),
    C1PrePrepare(0, 9, b"block"),
    C1Prepare(0, 9, d32),
    C1Commit(0, 9, d32),
    TxSubmit(100, 0, b"tx"),
    ReadReq(100, 0, d32, 7),
    ReadResp(3, 0, d32, 7, ((d32, 1, 50), (d32, 2, 10))),
]


@pytest.mark.parametrize("msg", MESSAGES, ids=lambda m: type(m).__name__)
def test_message_roundtrip_and_wire_size(msg):
    data = encode(msg)
    assert len(data) == msg.wire_size
    assert decode(data) == msg


def test_digest_messages_carry_exactly_32_bytes():
    assert RbEcho(0, 0, 0, d32).wire_size - RbInit(0, 0, 0, b"").wire_size == 32 - 4


def test_decode_rejects_unknown_kind_and_trailing_bytes():
    with pytest.raises(DecodeError):
        decode(b"\x63" + bytes(12))
    with pytest.raises(DecodeError):
        decode(encode(MESSAGES[1]) + b"\0")
