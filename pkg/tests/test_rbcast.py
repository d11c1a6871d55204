from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbbc.core import hash_bytes
from rbbc.core.messages import RbFetchReq, RbFetchResp, RbInit
from rbbc.rbcast import ReliableBroadcast

from .conftest import make_hosts


def rb_cluster(n, t, **kw):
    sim, hosts = make_hosts(n, t, latency_ms=kw.pop("latency_ms", 10.0),
                            jitter_ms=kw.pop("jitter_ms", 0.0), seed=kw.pop("seed", 0))
    delivered = {h.id: {} for h in hosts}
    rbs = []
    for h in hosts:
        rb = ReliableBroadcast(h, lambda k, b, p, i=h.id: delivered[i].setdefault((k, b), p),
                               fetch_timeout_ms=kw.get("fetch_timeout_ms", 200.0),
                               accept=kw.get("accept"))
        h.handler = rb.handle
        rbs.append(rb)
    return sim, hosts, rbs, delivered


@pytest.mark.parametrize("n", [4, 7, 10])
def test_all_correct_deliver_every_broadcast(n):
    t = (n - 1) // 3
    sim, hosts, rbs, delivered = rb_cluster(n, t)
    for rb in rbs:
        rb.broadcast(1, f"payload {rb.host.id}".encode())
    sim.run(until_ms=10_000)
    for i in range(n):
        assert delivered[i] == {(1, b): f"payload {b}".encode() for b in range(n)}
    assert all(not rb.fetch_log for rb in rbs)


def test_double_broadcast_refused():
    _, _, rbs, _ = rb_cluster(4, 1)
    rbs[0].broadcast(1, b"a")
    with pytest.raises(RuntimeError):
        rbs[0].broadcast(1, b"b")


def test_silent_broadcaster_delivers_nothing():
    sim, hosts, rbs, delivered = rb_cluster(4, 1)
    hosts[3].inert = True
    sim.run(until_ms=1000)
    assert all(not d for d in delivered.values())


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_equivocating_broadcaster_cannot_split_correct_nodes(seed):
    """Agreement: different payloads per recipient never lead two correct
    nodes to deliver different values."""
    n, t = 7, 2
    sim, hosts, rbs, delivered = rb_cluster(n, t, jitter_ms=30.0, seed=seed)
    bad = n - 1
    split = seed % (n - 1)
    hosts[bad].out_filter = (lambda dst, msg: RbInit(msg.sender, msg.k, msg.broadcaster,
                                                     b"A" if dst <= split else b"B")
                             if type(msg) is RbInit else msg)
    rbs[bad].broadcast(1, b"A")
    sim.run(until_ms=20_000)
    got = {delivered[i].get((1, bad)) for i in range(n - 1)}
    got.discard(None)
    assert len(got) <= 1
    # totality: if any correct node delivered, all did
    if got:
        assert all((1, bad) in delivered[i] for i in range(n - 1))


def test_digest_only_nodes_fetch_from_t_plus_1_vouchers():
    n, t = 7, 2
    sim, hosts, rbs, delivered = rb_cluster(n, t)
    victims = {4, 5}
    hosts[6].out_filter = lambda dst, msg: None if type(msg) is RbInit and dst in victims else msg
    rbs[6].broadcast(3, b"withheld")
    sim.run(until_ms=10_000)
    for i in range(n):
        assert delivered[i][(3, 6)] == b"withheld"
    for v in victims:
        rounds = rbs[v].fetch_log[(3, 6)]
        assert rounds[0][1] == (0, 1, 2)
    assert all((3, 6) not in rbs[i].fetch_log for i in range(4))


def test_fetch_retries_next_candidates_when_targets_silent():
    n, t = 7, 2
    sim, hosts, rbs, delivered = rb_cluster(n, t, fetch_timeout_ms=100.0)
    victims = {5}
    hosts[6].out_filter = lambda dst, msg: None if type(msg) is RbInit and dst in victims else msg
    for i in (0, 1):
        hosts[i].out_filter = lambda dst, msg: None if type(msg) is RbFetchResp else msg
    rbs[6].broadcast(1, b"p")
    sim.run(until_ms=10_000)
    assert delivered[5][(1, 6)] == b"p"
    log = rbs[5].fetch_log[(1, 6)]
    assert log[0][1] == (0, 1, 2) and len(log) >= 1


def test_mismatched_fetch_response_is_discarded_and_counted():
    n, t = 4, 1
    sim, hosts, rbs, delivered = rb_cluster(n, t)
    hosts[3].out_filter = lambda dst, msg: None if type(msg) is RbInit and dst == 2 else msg
    hosts[0].out_filter = (lambda dst, msg: RbFetchResp(msg.sender, msg.k, msg.broadcaster, b"junk")
                           if type(msg) is RbFetchResp else msg)
    rbs[3].broadcast(1, b"real")
    sim.run(until_ms=10_000)
    assert delivered[2][(1, 3)] == b"real"
    assert rbs[2].bad_fetch_resp >= 1


def test_rejected_init_gets_no_echo():
    sim, hosts, rbs, delivered = rb_cluster(4, 1, accept=lambda k, b, p: p != b"bad")
    rbs[0].broadcast(1, b"bad")
    sim.run(until_ms=1000)
    assert all(not d for d in delivered.values())
    assert all(rb.rejected_inits == 1 for rb in rbs)


def test_init_from_non_broadcaster_ignored():
    sim, hosts, rbs, delivered = rb_cluster(4, 1)
    hosts[1].broadcast(RbInit(1, 1, 0, b"forged"))
    sim.run(until_ms=1000)
    assert all(not d for d in delivered.values())


def test_fetch_request_for_unknown_digest_ignored():
    sim, hosts, rbs, delivered = rb_cluster(4, 1)
    rbs[0].broadcast(1, b"x")
    sim.run(until_ms=1000)
    before = sim.stats.messages
    hosts[1].send(0, RbFetchReq(1, 1, 0, hash_bytes(b"other")))
    sim.run(until_ms=2000)
    assert sim.stats.messages == before + 1
