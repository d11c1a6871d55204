import random
from types import SimpleNamespace

from hypothesis import given
from hypothesis import strategies as st

from rbbc.bench.config import ExperimentConfig
from rbbc.bench.world import run_experiment
from rbbc.core import hash_bytes
from rbbc.ledger import Verdict, check_stateless, genesis_outpoint, genesis_table
from rbbc.workload import (
    PAYMENT, SyntheticSource, assigned_proposers, connections, is_payment_shape,
    make_payment, proposer_keys, proposer_rank, quorum_read, requester_keys,
)

from .oracles import ecdsa_verify


def test_payment_with_change():
    a, b = requester_keys(0), requester_keys(1)
    tx = make_payment(a, genesis_outpoint(0), 100, b.account, nonce=3)
    assert [(o.amount, o.recipient) for o in tx.outputs] == [(PAYMENT, b.account), (90, a.account)]
    assert is_payment_shape(tx)
    assert ecdsa_verify(a.public, tx.sighash_preimage, tx.inputs[0].signature)
    assert check_stateless(tx) is Verdict.VALID


def test_small_utxo_spent_whole():
    a, b = requester_keys(0), requester_keys(1)
    tx = make_payment(a, genesis_outpoint(0), 7, b.account)
    assert [(o.amount, o.recipient) for o in tx.outputs] == [(7, b.account)]
    assert is_payment_shape(tx)


def test_payment_shape_rejects_other_layouts():
    a, b = requester_keys(0), requester_keys(1)
    tx = make_payment(a, genesis_outpoint(0), 100, b.account, pay=20)
    assert not is_payment_shape(tx)
    assert is_payment_shape(tx, pay=20)


@given(st.binary(min_size=20, max_size=20), st.integers(1, 40))
def test_assigned_proposers_and_connections(account, n):
    t = (n - 1) // 3
    props = assigned_proposers(account, n, t)
    assert len(set(props)) == t + 1
    conns = connections(props, n, t)
    assert conns[:t + 1] == props
    assert len(set(conns)) == min(2 * t + 1, n)


def test_proposer_rank():
    kp = requester_keys(5)
    tx = make_payment(kp, genesis_outpoint(0), 100, kp.account)
    props = assigned_proposers(hash_bytes(kp.public), 10, 3)
    assert [proposer_rank(p, tx, 10, 3) for p in props] == [0, 1, 2, 3]
    outsider = next(i for i in range(10) if i not in props)
    assert proposer_rank(outsider, tx, 10, 3) == -1


def test_quorum_read():
    a, b = ((b"x", 0, 5),), ((b"y", 0, 5),)
    assert quorum_read([a, a, b], 1) == a
    assert quorum_read([a, b, ()], 1) is None
    assert quorum_read([], 0) is None


def test_synthetic_source_spends_every_utxo_up_to_beta():
    entries = SyntheticSource.genesis(0, 25)
    assert len(entries) == 30  # 10 accounts x 3
    table = genesis_table(entries)
    keys = [proposer_keys(0, j) for j in range(10)]
    src = SyntheticSource(keys, [keys[0].account], random.Random(1))
    txs = src.propose_batch(
        SimpleNamespace(table=table, params=SimpleNamespace(beta=25)), 1)
    assert len(txs) == 25
    assert len({tx.inputs[0].txid + bytes([tx.inputs[0].index]) for tx in txs}) == 25
    assert all(is_payment_shape(tx) for tx in txs)


def test_requesters_chain_payments():
    cfg = ExperimentConfig(n=4, beta=10, rounds=4, requesters=4, latency_matrix="uniform:5")
    res = run_experiment(cfg)
    assert not res.violations
    for r in res.requesters:
        assert len(r.connections) == 3
        assert r.txs_sent >= 2
        assert r.reads >= r.txs_sent
    committed = [tx for b in res.chain()[1:] for tx in b.txs]
    assert len({tx.txid for tx in committed}) == len(committed)
    assert all(tx.txid in res.issued for tx in committed)
