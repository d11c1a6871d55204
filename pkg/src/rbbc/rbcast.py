"""Bracha reliable broadcast with digest-only ECHO/READY and payload fetch.

The broadcaster sends the full payload once (INIT). Everyone else exchanges
32-byte digests. A node that collects a READY quorum for a digest whose
payload it never received asks t+1 of the nodes that vouched for that digest
to send it (FETCH_REQ / FETCH_RESP).
"""

from __future__ import annotations

from collections.abc import Callable

from .core import hash_bytes
from .core.messages import RbEcho, RbFetchReq, RbFetchResp, RbInit, RbReady


class RbInstance:
    __slots__ = ("k", "broadcaster", "payloads", "echoes", "readies", "echo_from",
                 "ready_from", "echo_sent", "ready_sent", "delivered", "fetch_digest",
                 "fetch_asked", "fetch_round")

    def __init__(self, k: int, broadcaster: int):
        self.k = k
        self.broadcaster = broadcaster
        self.payloads: dict[bytes, bytes] = {}
        self.echoes: dict[bytes, set[int]] = {}
        self.readies: dict[bytes, set[int]] = {}
        self.echo_from: set[int] = set()
        self.ready_from: set[int] = set()
        self.echo_sent = False
        self.ready_sent = False
        self.delivered: bytes | None = None
        self.fetch_digest: bytes | None = None
        self.fetch_asked: set[int] = set()
        self.fetch_round = 0


class ReliableBroadcast:
    """All RB instances of one node, keyed by (consensus instance, broadcaster).

    ``host`` provides ``id``, ``n``, ``t``, ``quorum``, ``send``, ``broadcast``
    and ``timer``. ``on_deliver(k, broadcaster, payload)`` fires at most once
    per instance. ``accept(k, broadcaster, payload)`` may reject malformed INITs.
    """

    def __init__(self, host, on_deliver: Callable[[int, int, bytes], None], *,
                 fetch_timeout_ms: float = 1000.0,
                 accept: Callable[[int, int, bytes], bool] | None = None):
        self.host = host
        self.on_deliver = on_deliver
        self.fetch_timeout_ms = fetch_timeout_ms
        self.accept = accept
        self.instances: dict[tuple[int, int], RbInstance] = {}
        self.broadcasted: set[int] = set()
        # (k, broadcaster) -> list of (round, targets) this node asked
        self.fetch_log: dict[tuple[int, int], list[tuple[int, tuple[int, ...]]]] = {}
        self.bad_fetch_resp = 0
        self.rejected_inits = 0

    def _inst(self, k: int, b: int) -> RbInstance:
        key = (k, b)
        inst = self.instances.get(key)
        if inst is None:
            inst = self.instances[key] = RbInstance(k, b)
        return inst

    def broadcast(self, k: int, payload: bytes) -> None:
        if k in self.broadcasted:
            raise RuntimeError(f"node {self.host.id} already broadcast in instance {k}")
        self.broadcasted.add(k)
        self.host.broadcast(RbInit(self.host.id, k, self.host.id, payload))

    def prune(self, below_k: int) -> None:
        for key in [key for key in self.instances if key[0] < below_k]:
            del self.instances[key]

    def handle(self, src: int, msg) -> None:
        kind = type(msg)
        if kind is RbEcho:
            self._on_echo(src, msg)
        elif kind is RbReady:
            self._on_ready(src, msg)
        elif kind is RbInit:
            self._on_init(src, msg)
        elif kind is RbFetchReq:
            self._on_fetch_req(src, msg)
        elif kind is RbFetchResp:
            self._on_fetch_resp(src, msg)

    def _on_init(self, src, msg: RbInit) -> None:
        if src != msg.broadcaster:
            return
        inst = self._inst(msg.k, msg.broadcaster)
        if inst.echo_sent:
            return
        if self.accept is not None and not self.accept(msg.k, msg.broadcaster, msg.payload):
            self.rejected_inits += 1
            return
        d = hash_bytes(msg.payload)
        inst.payloads[d] = msg.payload
        inst.echo_sent = True
        host = self.host
        host.broadcast(RbEcho(host.id, msg.k, msg.broadcaster, d))
        self._try_deliver(inst, d)

    def _on_echo(self, src, msg: RbEcho) -> None:
        inst = self._inst(msg.k, msg.broadcaster)
        if src in inst.echo_from:
            return
        inst.echo_from.add(src)
        d = msg.digest
        senders = inst.echoes.get(d)
        if senders is None:
            senders = inst.echoes[d] = set()
        senders.add(src)
        if not inst.ready_sent and len(senders) >= self.host.quorum:
            self._send_ready(inst, d)

    def _on_ready(self, src, msg: RbReady) -> None:
        inst = self._inst(msg.k, msg.broadcaster)
        if src in inst.ready_from:
            return
        inst.ready_from.add(src)
        d = msg.digest
        senders = inst.readies.get(d)
        if senders is None:
            senders = inst.readies[d] = set()
        senders.add(src)
        host = self.host
        if not inst.ready_sent and len(senders) >= host.t + 1:
            self._send_ready(inst, d)
        if len(senders) >= 2 * host.t + 1:
            self._try_deliver(inst, d)

    def _send_ready(self, inst: RbInstance, d: bytes) -> None:
        inst.ready_sent = True
        host = self.host
        host.broadcast(RbReady(host.id, inst.k, inst.broadcaster, d))

    def _try_deliver(self, inst: RbInstance, d: bytes) -> None:
        if inst.delivered is not None:
            return
        readies = inst.readies.get(d)
        if readies is None or len(readies) < 2 * self.host.t + 1:
            return
        payload = inst.payloads.get(d)
        if payload is None:
            if inst.fetch_digest is None:
                inst.fetch_digest = d
                self._fetch(inst)
            return
        inst.delivered = d
        self.on_deliver(inst.k, inst.broadcaster, payload)

    # -- fetch --------------------------------------------------------------

    def _fetch(self, inst: RbInstance) -> None:
        if inst.delivered is not None:
            return
        host = self.host
        d = inst.fetch_digest
        vouched = inst.echoes.get(d, set()) | inst.readies.get(d, set())
        candidates = sorted(x for x in vouched if x != host.id and x not in inst.fetch_asked)
        if len(candidates) < host.t + 1:
            # every voucher was asked once already: start another pass
            inst.fetch_asked.clear()
            candidates = sorted(x for x in vouched if x != host.id)
        targets = tuple(candidates[:host.t + 1])
        inst.fetch_asked.update(targets)
        inst.fetch_round += 1
        self.fetch_log.setdefault((inst.k, inst.broadcaster), []).append(
            (inst.fetch_round, targets))
        for dst in targets:
            host.send(dst, RbFetchReq(host.id, inst.k, inst.broadcaster, d))
        host.timer(self.fetch_timeout_ms, self._fetch, inst)

    def _on_fetch_req(self, src, msg: RbFetchReq) -> None:
        inst = self.instances.get((msg.k, msg.broadcaster))
        if inst is None:
            return
        payload = inst.payloads.get(msg.digest)
        if payload is not None:
            host = self.host
            host.send(src, RbFetchResp(host.id, msg.k, msg.broadcaster, payload))

    def _on_fetch_resp(self, src, msg: RbFetchResp) -> None:
        inst = self.instances.get((msg.k, msg.broadcaster))
        if inst is None or inst.delivered is not None or inst.fetch_digest is None:
            return
        d = hash_bytes(msg.payload)
        if d != inst.fetch_digest:
            self.bad_fetch_resp += 1
            return
        inst.payloads[d] = msg.payload
        self._try_deliver(inst, d)
