from __future__ import annotations

import pytest

from rbbc.core import Params
from rbbc.netsim import LatencyMatrix, Simulator

_VERDICTS: dict[int, tuple[bool, str]] = {}


class CriterionLog:
    def record(self, number: int, ok: bool, detail: str) -> None:
        _VERDICTS[number] = (ok, detail)


@pytest.fixture
def criterion():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        ok, detail = _VERDICTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


class Host:
    """Minimal node shell for driving one protocol component in the simulator."""

    def __init__(self, node_id: int, n: int, t: int, sim: Simulator):
        self.id = node_id
        self.n, self.t = n, t
        self.quorum = Params(n=n, t=t).quorum
        self.sim = sim
        self.handler = None
        self.out_filter = None
        self.inert = False
        self.received: list = []

    def send(self, dst, msg):
        if self.inert:
            return
        if self.out_filter is not None:
            msg = self.out_filter(dst, msg)
            if msg is None:
                return
        self.sim.send(self.id, dst, msg, 1)

    def broadcast(self, msg):
        for dst in range(self.n):
            self.send(dst, msg)

    def timer(self, delay, fn, *args):
        self.sim.schedule(delay, self.id, fn, *args)

    def receive(self, src, msg, hop):
        if self.inert:
            return
        self.received.append((src, msg))
        self.handler(src, msg)


def make_hosts(n: int, t: int, *, latency_ms: float = 10.0, jitter_ms: float = 0.0,
               seed: int = 0) -> tuple[Simulator, list[Host]]:
    sim = Simulator(LatencyMatrix.uniform(n, latency_ms), seed=seed, jitter_ms=jitter_ms)
    hosts = [Host(i, n, t, sim) for i in range(n)]
    for h in hosts:
        sim.add_actor(h.id, h, h.id)
    return sim, hosts
