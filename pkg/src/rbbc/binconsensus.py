"""Deterministic binary Byzantine consensus for partial synchrony.

Each round r runs a binary-value broadcast of estimates (EST), then an
exchange of AUX messages. The weak coordinator of round r is node r mod n; its
COORD suggestion lets correct nodes converge on one value once the network
is timely. With b = r mod 2: if the n-t AUX values collected form a singleton
{v} the estimate becomes v and v is decided when v == b; otherwise the
estimate becomes b. A node that decided in round d keeps participating until
round d+2 completes, which is when every correct node has decided too.
"""

from __future__ import annotations

from collections.abc import Callable

from .core.messages import BinAux, BinCoord, BinEst

DEFAULT_TIMER_BASE_MS = 10.0
DEFAULT_MAX_ROUNDS = 20

# AUX values are bitmasks over {0, 1}
MASK = (1, 2)
BOTH = 3


class TerminationFailure(RuntimeError):
    pass


def mask_values(mask: int) -> tuple[int, ...]:
    return tuple(v for v in (0, 1) if mask & MASK[v])


class _Round:
    __slots__ = ("est_from", "est_sent", "bin_values", "aux", "aux_sent", "coord",
                 "coord_sent", "timer_expired", "timer_armed")

    def __init__(self):
        self.est_from: tuple[set[int], set[int]] = (set(), set())
        self.est_sent = [False, False]
        self.bin_values = 0
        self.aux: dict[int, int] = {}
        self.aux_sent = False
        self.coord: int | None = None
        self.coord_sent = False
        self.timer_expired = False
        self.timer_armed = False


class BinaryConsensus:
    """One binary instance (consensus k, proposer slot) at one node.

    ``host`` provides ``id``, ``n``, ``t``, ``broadcast`` and ``timer``.
    """

    def __init__(self, host, k: int, slot: int, on_decide: Callable[[int, int, int, int], None],
                 *, timer_base_ms: float = DEFAULT_TIMER_BASE_MS,
                 max_rounds: int = DEFAULT_MAX_ROUNDS):
        self.host = host
        self.k = k
        self.slot = slot
        self.on_decide = on_decide
        self.timer_base_ms = timer_base_ms
        self.max_rounds = max_rounds
        self.round = 0  # 0 until proposed
        self.est: int | None = None
        self.decided: int | None = None
        self.decided_round: int | None = None
        self.halted = False
        self.rounds: dict[int, _Round] = {}
        self.equivocations = 0

    def _r(self, r: int) -> _Round:
        st = self.rounds.get(r)
        if st is None:
            st = self.rounds[r] = _Round()
        return st

    def propose(self, v: int) -> None:
        if self.round:
            raise RuntimeError(f"binary instance {(self.k, self.slot)} already proposed")
        if v not in (0, 1):
            raise ValueError("binary consensus input must be 0 or 1")
        self.est = v
        self._enter(1)

    def _enter(self, r: int) -> None:
        if r > self.max_rounds:
            raise TerminationFailure(
                f"node {self.host.id} instance {(self.k, self.slot)} undecided after "
                f"{self.max_rounds} rounds")
        self.round = r
        st = self._r(r)
        self._send_est(r, st, self.est)
        st.timer_armed = True
        delay = self.timer_base_ms * (1 << min(r - 1, 30))
        self.host.timer(delay, self._on_timer, r)
        self._progress()

    def _send_est(self, r: int, st: _Round, v: int) -> None:
        if not st.est_sent[v]:
            st.est_sent[v] = True
            h = self.host
            h.broadcast(BinEst(h.id, self.k, self.slot, r, v))

    def _on_timer(self, r: int) -> None:
        if self.halted or r != self.round:
            return
        self.rounds[r].timer_expired = True
        self._progress()

    def handle(self, src: int, msg) -> None:
        if self.halted:
            return
        r, v = msg.round, msg.value
        if r < 1 or r > self.max_rounds + 2:
            return
        kind = type(msg)
        st = self._r(r)
        if kind is BinEst:
            if v not in (0, 1):
                return
            senders = st.est_from[v]
            if src in senders:
                return
            if src in st.est_from[1 - v]:
                self.equivocations += 1
            senders.add(src)
            t = self.host.t
            if len(senders) >= t + 1:
                self._send_est(r, st, v)
            if len(senders) >= 2 * t + 1 and not st.bin_values & MASK[v]:
                st.bin_values |= MASK[v]
                if r == self.round:
                    self._progress()
        elif kind is BinAux:
            if v not in (1, 2, 3) or src in st.aux:
                return
            st.aux[src] = v
            if r == self.round:
                self._progress()
        elif kind is BinCoord:
            if src != r % self.host.n or v not in (0, 1) or st.coord is not None:
                return
            st.coord = v
            if r == self.round:
                self._progress()

    def _progress(self) -> None:
        r = self.round
        if r == 0 or self.halted:
            return
        st = self.rounds[r]
        if not st.bin_values:
            return
        h = self.host
        if not st.coord_sent and r % h.n == h.id:
            st.coord_sent = True
            w = self.est if st.bin_values & MASK[self.est] else 1 - self.est
            h.broadcast(BinCoord(h.id, self.k, self.slot, r, w))
        if not st.aux_sent:
            if st.coord is not None and st.bin_values & MASK[st.coord]:
                aux = MASK[st.coord]
            elif st.timer_expired:
                aux = st.bin_values
            else:
                return
            st.aux_sent = True
            h.broadcast(BinAux(h.id, self.k, self.slot, r, aux))
        bv = st.bin_values
        count = 0
        union = 0
        for m in st.aux.values():
            if m & bv == m:
                count += 1
                union |= m
        if count < h.n - h.t:
            return
        b = r % 2
        if union == BOTH:
            self.est = b
        else:
            v = 0 if union == MASK[0] else 1
            self.est = v
            if v == b and self.decided is None:
                self.decided = v
                self.decided_round = r
                self.on_decide(self.k, self.slot, v, r)
        if self.decided is not None and r >= self.decided_round + 2:
            self.halted = True
            self.rounds.clear()
            return
        self._enter(r + 1)
