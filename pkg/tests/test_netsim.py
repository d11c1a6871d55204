from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbbc.core.messages import RbEcho, RbInit
from rbbc.netsim import (
    Cpu, LatencyMatrix, SimulationDeadlock, Simulator, round_robin_placement,
)


class Recorder:
    def __init__(self, sim, node_id):
        self.sim, self.id = sim, node_id
        self.log = []
        self.on = None

    def receive(self, src, msg, hop):
        self.log.append((self.sim.now, src, msg, hop))
        if self.on:
            self.on(src, msg, hop)


def two_region_sim(lat=50.0, mbps=8.0, **kw):
    m = LatencyMatrix(["a", "b"], [[0.0, lat], [lat, 0.0]], [[1e4, mbps], [mbps, 1e4]])
    sim = Simulator(m, **kw)
    nodes = [Recorder(sim, 0), Recorder(sim, 1), Recorder(sim, 2)]
    sim.add_actor(0, nodes[0], "a")
    sim.add_actor(1, nodes[1], "b")
    sim.add_actor(2, nodes[2], "a")
    return sim, nodes


def test_aws14_landmarks():
    m = LatencyMatrix.aws14()
    assert len(m.regions) == 14
    assert m.latency("Sydney", "Sao Paulo") == 332
    assert 11 <= m.latency("London", "Ireland") <= 12
    lats = [m.latency_ms[i][j] for i in range(14) for j in range(14) if i != j]
    assert 11 <= min(lats) <= 12 and max(lats) == 332
    for i in range(14):
        for j in range(14):
            assert m.latency_ms[i][j] == m.latency_ms[j][i]
    assert any("808" in w for w in m.warnings())


def test_csv_roundtrip_and_symmetrisation():
    text = "region,x,y\nx,0/,5/\ny,,0/\n"
    with pytest.raises(ValueError):
        LatencyMatrix.parse_csv(text, warn=False)  # bandwidth missing both ways
    text = "region,x,y\nx,0/,5/100\ny,,0/\n"
    m = LatencyMatrix.parse_csv(text, warn=False)
    assert m.latency("y", "x") == 5 and m.bandwidth("y", "x") == 100
    again = LatencyMatrix.parse_csv(m.to_csv(), warn=False)
    assert again == m


def test_matrix_validation():
    with pytest.raises(ValueError):
        LatencyMatrix(["a"], [[1.0]], [[1.0]])
    with pytest.raises(ValueError):
        LatencyMatrix(["a", "b"], [[0, 1]], [[1, 1], [1, 1]])
    with pytest.raises(ValueError):
        LatencyMatrix(["a", "b"], [[0, -1], [1, 0]], [[1, 1], [1, 1]])


def test_subset_keeps_pairs():
    m = LatencyMatrix.aws14()
    s = m.subset(["Ireland", "Frankfurt"])
    assert s.latency("Ireland", "Frankfurt") == m.latency("Ireland", "Frankfurt")


def test_delivery_time_formula():
    sim, nodes = two_region_sim(lat=50.0, mbps=8.0)
    msg = RbInit(0, 1, 0, b"x" * 981)  # 1000 bytes on the wire
    assert msg.wire_size == 1000
    sim.send(0, 1, msg, 1)
    sim.run(until_ms=10_000)
    # 1000 bytes * 8 bits / (8 Mbps * 1000 bits/ms) = 1 ms
    assert nodes[1].log[0][0] == pytest.approx(51.0)


def test_zero_size_same_region_is_intra_latency():
    m = LatencyMatrix.uniform(1, 0.0)
    sim = Simulator(m)
    a, b = Recorder(sim, 0), Recorder(sim, 1)
    sim.add_actor(0, a, 0)
    sim.add_actor(1, b, 0)
    sim.send(0, 1, RbEcho(0, 0, 0, bytes(32)), 1)
    sim.run(until_ms=1)
    assert b.log[0][0] == 0.0


def test_self_send_is_free():
    sim, nodes = two_region_sim()
    sim.send(0, 0, RbEcho(0, 0, 0, bytes(32)), 3)
    sim.run(until_ms=1)
    assert nodes[0].log[0][0] == 0.0 and nodes[0].log[0][3] == 3
    assert sim.stats.egress.get(0, 0) == 0


def test_byte_accounting_conserved():
    sim, nodes = two_region_sim()
    for i in range(20):
        sim.send(i % 3, (i + 1) % 3, RbInit(i % 3, i, i % 3, b"p" * i), 1)
    sim.run(until_ms=10_000)
    assert sum(sim.stats.egress.values()) == sum(sim.stats.ingress.values())
    assert sum(size for size, _ in sim.stats.by_kind.values()) == sum(sim.stats.egress.values())


def test_ties_broken_by_destination_then_source():
    m = LatencyMatrix.uniform(1, 0.0)
    sim = Simulator(m)
    order = []

    class A:
        def __init__(self, i):
            self.i = i

        def receive(self, src, msg, hop):
            order.append((self.i, src))

    for i in range(4):
        sim.add_actor(i, A(i), 0)
    for src, dst in [(3, 2), (1, 2), (2, 1), (0, 1)]:
        sim.send(src, dst, RbEcho(src, 0, 0, bytes(32)), 1)
    sim.run(until_ms=1)
    assert order == [(1, 0), (1, 2), (2, 1), (2, 3)]


def test_hop_counting_two_message_chain():
    """A relay of a received message is one hop deeper than what it got."""
    sim, nodes = two_region_sim()
    nodes[1].on = lambda src, msg, hop: sim.send(1, 2, msg, hop + 1) if src == 0 else None
    sim.send(0, 1, RbEcho(0, 0, 0, bytes(32)), 1)
    sim.run(until_ms=10_000)
    assert nodes[2].log[0][3] == 2


def test_deadlock_detected():
    sim, nodes = two_region_sim()
    sim.send(0, 1, RbEcho(0, 0, 0, bytes(32)), 1)
    with pytest.raises(SimulationDeadlock):
        sim.run()
    sim2, _ = two_region_sim()
    sim2.run(until_ms=5.0)
    assert sim2.now == 5.0


def test_stop_flag_halts():
    sim, nodes = two_region_sim()
    nodes[1].on = lambda *a: sim.stop()
    sim.send(0, 1, RbEcho(0, 0, 0, bytes(32)), 1)
    sim.send(0, 2, RbEcho(0, 0, 0, bytes(32)), 1)
    sim.run()
    assert nodes[1].log and sim.pending() >= 0


@given(st.integers(0, 1000), st.floats(0, 20))
@settings(max_examples=25, deadline=None)
def test_jitter_is_bounded_and_deterministic(seed, jitter):
    def arrivals():
        sim, nodes = two_region_sim(seed=seed, jitter_ms=jitter, mbps=math.inf)
        for i in range(10):
            sim.send(0, 1, RbEcho(0, i, 0, bytes(32)), 1)
        sim.run(until_ms=1e6)
        return [t for t, *_ in nodes[1].log]

    a = arrivals()
    assert a == arrivals()
    assert all(50.0 <= t <= 50.0 + jitter for t in a)


def test_pre_gst_delays_only_before_gst():
    sim, nodes = two_region_sim(lat=10.0, mbps=math.inf, gst_ms=100.0, pre_gst_delay_factor=50)
    for i in range(50):
        sim.send(0, 1, RbEcho(0, i, 0, bytes(32)), 1)
    sim.run(until_ms=1e6)
    delays = [t for t, *_ in nodes[1].log]
    assert max(delays) <= 10.0 + 500.0 and max(delays) > 20.0
    sim.now = 200.0
    sim.send(0, 1, RbEcho(0, 99, 0, bytes(32)), 1)
    sim.run(until_ms=1e6)
    assert nodes[1].log[-1][0] == pytest.approx(210.0)


def test_cpu_queue_is_serial():
    sim, _ = two_region_sim()
    cpu = Cpu(sim, 0)
    done = []
    cpu.run(5.0, done.append, "a")
    cpu.run(3.0, done.append, "b")
    times = []
    sim.schedule(0.0, 0, lambda: None)

    def mark(x):
        times.append((x, sim.now))

    cpu.run(1.0, mark, "c")
    sim.run(until_ms=100)
    assert done == ["a", "b"] and times == [("c", 9.0)]
    assert cpu.busy_ms == 9.0


def test_round_robin_placement():
    assert round_robin_placement(5, ["x", "y"]) == ["x", "y", "x", "y", "x"]
