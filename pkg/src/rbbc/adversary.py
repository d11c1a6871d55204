"""Byzantine behaviours, applied as outgoing-message filters.

A filter sees every message a Byzantine node is about to send to one
destination and returns the message to put on the wire, or None to drop it.
Byzantine nodes otherwise run the correct protocol.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .core.messages import (
    BinAux, BinCoord, BinEst, Message, RbFetchResp, RbInit,
)


class AdversaryKind(str, enum.Enum):
    NONE = "none"
    BYZ1 = "byz1"
    BYZ2 = "byz2"
    SILENT = "silent"


@dataclass(frozen=True)
class AdversarySpec:
    kind: AdversaryKind = AdversaryKind.NONE
    count: int | None = None  # default: t

    def byzantine(self, n: int, t: int) -> tuple[int, ...]:
        """The highest node ids; empty when no attack is configured."""
        if AdversaryKind(self.kind) is AdversaryKind.NONE:
            return ()
        c = t if self.count is None else self.count
        if c < 0 or c > t:
            raise ValueError(f"byzantine count {c} must lie in [0, t={t}]")
        return tuple(range(n - c, n))


def corrupt_payload(payload: bytes, dst: int) -> bytes:
    """A different corruption per recipient, so no two digests match."""
    if not payload:
        return bytes([dst & 0xFF])
    i = dst % len(payload)
    return payload[:i] + bytes([payload[i] ^ 0xFF]) + payload[i + 1:]


def _flip_aux(mask: int) -> int:
    return ((mask & 1) << 1) | ((mask & 2) >> 1)


def byz1_filter(node_id: int):
    def out(dst: int, msg: Message) -> Message | None:
        kind = type(msg)
        if kind is RbInit and msg.broadcaster == node_id:
            return RbInit(msg.sender, msg.k, msg.broadcaster, corrupt_payload(msg.payload, dst))
        if kind is BinEst or kind is BinCoord:
            return kind(msg.sender, msg.k, msg.proposer, msg.round, 1 - msg.value)
        if kind is BinAux:
            return BinAux(msg.sender, msg.k, msg.proposer, msg.round, _flip_aux(msg.value))
        return msg
    return out


def byz2_favoured(n: int, t: int, byzantine) -> tuple[int, ...]:
    """The t+1 lowest-id correct nodes, the only correct ones sent a Byzantine proposal."""
    bad = set(byzantine)
    return tuple(i for i in range(n) if i not in bad)[:t + 1]


def byz2_victims(n: int, t: int, byzantine) -> tuple[int, ...]:
    """Correct nodes left with only the digest of each Byzantine proposal."""
    bad = set(byzantine)
    favoured = set(byz2_favoured(n, t, bad))
    return tuple(i for i in range(n) if i not in bad and i not in favoured)


def byz2_filter(node_id: int, victims):
    """Own proposals skip the victims. Coalition members still get them, since
    colluders share payloads anyway, so exactly the favoured t+1 correct nodes
    hold a Byzantine proposal first-hand."""
    victims = frozenset(victims)

    def out(dst: int, msg: Message) -> Message | None:
        kind = type(msg)
        if kind is RbInit and msg.broadcaster == node_id and dst in victims:
            return None
        if kind is RbFetchResp:
            return None
        return msg
    return out


def silent_filter(dst: int, msg: Message) -> Message | None:
    return None


def install(nodes, spec: AdversarySpec, n: int, t: int) -> tuple[int, ...]:
    """Attach the attack to the Byzantine members of ``nodes`` (indexed by id)."""
    kind = AdversaryKind(spec.kind)
    bad = spec.byzantine(n, t)
    victims = byz2_victims(n, t, bad)
    for i in bad:
        node = nodes[i]
        if kind is AdversaryKind.BYZ1:
            node.out_filter = byz1_filter(i)
        elif kind is AdversaryKind.BYZ2:
            node.out_filter = byz2_filter(i, victims)
        elif kind is AdversaryKind.SILENT:
            node.out_filter = silent_filter
            node.inert = True
    return bad
