from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbbc.core import Transaction, TxInput
from rbbc.core.messages import Attest
from rbbc.ledger import Verdict, genesis_outpoint
from rbbc.netsim import Cpu
from rbbc.node import node_keys
from rbbc.shardverify import (
    VerificationRound, assign, escalation_delay_ms, ring_start, sign_attest, window,
)
from rbbc.workload import make_payment

from . import gen, oracles
from .conftest import make_hosts


@given(st.binary(min_size=32, max_size=32), st.integers(0, 2**40), st.integers(1, 100))
def test_ring_start_matches_oracle(txid, k, n):
    assert ring_start(txid, k, n) == oracles.ring_start(txid, k, n)


@given(st.integers(0, 200), st.integers(1, 40))
def test_window_shape(h, n):
    t = (n - 1) // 3
    a = window(h % n, n, t)
    assert len(a.primary) == t + 1 and len(a.extension) == t
    assert len(set(a.members)) == 2 * t + 1
    assert a.primary[0] == h % n
    assert all(a.position(v) == 0 for v in a.primary)
    assert [a.position(v) for v in a.extension] == list(range(1, t + 1))


def test_assignment_depends_on_instance():
    txid = bytes(32)
    starts = {assign(txid, k, 40, 13).primary[0] for k in range(50)}
    assert len(starts) > 10


def test_escalation_delay():
    assert escalation_delay_ms(300.0, 0.5, 10) == 610.0


def candidate(count, bad=()):
    kp = gen.KEYS[0]
    txs = []
    for i in range(count):
        tx = make_payment(kp, genesis_outpoint(i), 100, gen.KEYS[1].account, i)
        if i in bad:
            inp = tx.inputs[0]
            sig = bytes([inp.signature[0] ^ 1]) + inp.signature[1:]
            tx = Transaction((TxInput(inp.txid, inp.index, sig, inp.pubkey),), tx.outputs, i)
        txs.append(tx)
    return txs


def run_round(n, txs, *, silent=(), liars=(), latency_ms=10.0):
    t = (n - 1) // 3
    sim, hosts = make_hosts(n, t, latency_ms=latency_ms)
    finals, verifiers, rounds = {}, {}, []
    pubs = {i: node_keys(i).public for i in range(n)}
    proposers = (True,) * n
    esc = escalation_delay_ms(2 * latency_ms, 0.1, len(txs))
    for h in hosts:
        h.cpu = Cpu(sim, h.id)
        h.verify_cost_ms = 0.1
        h.keys = node_keys(h.id)
        h.verifier_keys = pubs
        vr = VerificationRound(h, 1, proposers, txs, escalation_ms=esc,
                               on_final=lambda v, i=h.id: finals.setdefault(i, v),
                               record=lambda j, node: verifiers.setdefault(j, set()).add(node))
        h.handler = lambda src, msg, vr=vr: vr.on_attest(src, msg)
        if h.id in silent:
            h.inert = True
        if h.id in liars:
            def lie(dst, msg, h=h):
                flipped = bytes(0 if c else 1 for c in msg.verdicts)
                return sign_attest(h.keys, Attest(msg.sender, msg.k, msg.proposers,
                                                  msg.covered, flipped))
            h.out_filter = lie
        rounds.append(vr)
    for h, vr in zip(hosts, rounds):
        if h.id not in silent:
            sim.schedule(0.0, h.id, vr.start)
    sim.run(until_ms=1e6)
    return t, finals, verifiers, rounds


def test_fault_free_uses_exactly_t_plus_1_verifiers():
    txs = candidate(30, bad={3, 7})
    t, finals, verifiers, rounds = run_round(7, txs)
    expected = [Verdict.BAD_SIGNATURE if i in (3, 7) else Verdict.VALID for i in range(30)]
    assert all(finals[i] == expected for i in range(7))
    assert all(len(v) == t + 1 for v in verifiers.values())
    assert all(vr.escalations == 0 for vr in rounds)


def test_silent_primary_triggers_extension():
    txs = candidate(40)
    t, finals, verifiers, rounds = run_round(7, txs, silent=(6,))
    correct = [i for i in range(7) if i != 6]
    assert all(finals[i] == [Verdict.VALID] * 40 for i in correct)
    for j, tx in enumerate(txs):
        a = assign(tx.txid, 1, 7, t)
        count = len(set(a.primary) | verifiers[j])
        assert t + 1 <= count <= 2 * t + 1
        if 6 in a.primary:
            assert count == t + 2


@pytest.mark.parametrize("n", [4, 7, 10])
def test_t_silent_nodes_stay_within_bounds(n):
    txs = candidate(25)
    t = (n - 1) // 3
    silent = tuple(range(n - t, n))
    t, finals, verifiers, _ = run_round(n, txs, silent=silent)
    assert len(finals) == n - t
    for j, tx in enumerate(txs):
        count = len(set(assign(tx.txid, 1, n, t).primary) | verifiers[j])
        assert t + 1 <= count <= 2 * t + 1


def test_lying_verifier_outvoted():
    txs = candidate(20, bad={0})
    _, finals, _, _ = run_round(7, txs, liars=(5,))
    expected = [Verdict.BAD_SIGNATURE] + [Verdict.VALID] * 19
    assert all(finals[i] == expected for i in range(7) if i != 5)


def test_forged_and_unassigned_attests_counted():
    txs = candidate(5)
    sim, hosts = make_hosts(4, 1)
    h = hosts[0]
    h.cpu, h.verify_cost_ms, h.keys = Cpu(sim, 0), 0.1, node_keys(0)
    h.verifier_keys = {i: node_keys(i).public for i in range(4)}
    vr = VerificationRound(h, 1, (True,) * 4, txs, escalation_ms=100.0, on_final=lambda v: None)
    covered = (True,) * 5
    forged = Attest(2, 1, (True,) * 4, covered, bytes(5), b"\0" * 64)
    vr.on_attest(2, forged)
    assert vr.bad_attest == 1
    good = sign_attest(node_keys(2), Attest(2, 1, (True,) * 4, covered, bytes(5)))
    vr.on_attest(3, good)  # wrong transport sender
    assert vr.bad_attest == 2
    vr.on_attest(2, good)
    outside = sum(1 for tx in txs if 2 not in assign(tx.txid, 1, 4, 1).members)
    assert vr.unassigned == outside
