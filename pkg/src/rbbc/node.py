"""Plumbing shared by every simulated node: sending through the adversary
filter, causal hop tracking, the CPU queue, and the replicated ledger state."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

from .core import Block, KeyPair, Params, keygen, seed_from
from .core.messages import Message, ReadReq, ReadResp
from .ledger import UtxoTable, request_utxos
from .netsim import Cpu, Simulator

# 1000 ms / 7800 serialized transactions verified per second on a low-end VM
DEFAULT_VERIFY_COST_MS = 1000.0 / 7800.0

OutFilter = Callable[[int, Message], "Message | None"]


def node_keys(node_id: int) -> KeyPair:
    return keygen(seed_from("node", node_id))


@dataclass
class BlockRecord:
    """What one node observed when it appended block ``index``."""

    index: int
    digest: bytes
    time_ms: float
    hops: int
    valid: int
    invalid: int
    duplicates: int
    included: tuple[bool, ...]
    rejected: dict[str, int] = field(default_factory=dict)
    decisions: tuple[int, ...] = ()
    bin_rounds: tuple[int, ...] = ()
    started_at: float | None = None


class Node:
    """Base actor. Subclasses implement ``on_message``."""

    def __init__(self, node_id: int, params: Params, sim: Simulator, genesis: Block,
                 table: UtxoTable, *, verify_cost_ms: float = DEFAULT_VERIFY_COST_MS):
        self.id = node_id
        self.params = params
        self.n, self.t = params.n, params.t
        self.quorum = params.quorum
        self.sim = sim
        self.keys = node_keys(node_id)
        self.cpu = Cpu(sim, node_id)
        self.verify_cost_ms = verify_cost_ms
        self.chain: list[Block] = [genesis]
        self.table = table
        self.records: list[BlockRecord] = []
        self.depth: dict[int, int] = {}
        self.out_filter: OutFilter | None = None
        self.inert = False
        self.on_block: Callable[[Node, Block, BlockRecord], None] | None = None

    # -- network --------------------------------------------------------

    def send(self, dst: int, msg: Message) -> None:
        if self.out_filter is not None:
            msg = self.out_filter(dst, msg)
            if msg is None:
                return
        d = self.depth.get(msg.k, 0)
        self.sim.send(self.id, dst, msg, d if dst == self.id else d + 1)

    def broadcast(self, msg: Message) -> None:
        for dst in range(self.n):
            self.send(dst, msg)

    def receive(self, src: int, msg: Message, hop: int) -> None:
        if self.inert:
            return
        if msg.PHASE != "client":
            k = msg.k
            if hop > self.depth.get(k, 0):
                self.depth[k] = hop
        self.on_message(src, msg)

    def on_message(self, src: int, msg: Message) -> None:
        raise NotImplementedError

    def timer(self, delay_ms: float, fn, *args) -> None:
        self.sim.schedule(delay_ms, self.id, self._fire, fn, args)

    def _fire(self, fn, args) -> None:
        if not self.inert:
            fn(*args)

    # -- client reads -----------------------------------------------------

    def answer_read(self, src: int, msg: ReadReq) -> None:
        utxos = tuple(request_utxos(self.table, msg.account))
        self.send(src, ReadResp(self.id, 0, msg.account, msg.seq, utxos))

    # -- chain ------------------------------------------------------------

    @property
    def height(self) -> int:
        return len(self.chain) - 1

    def append_block(self, block: Block, record: BlockRecord, table: UtxoTable) -> None:
        if block.index != self.height + 1 or block.prev != self.chain[-1].digest:
            raise AssertionError(f"node {self.id}: block {block.index} does not extend chain")
        self.chain.append(block)
        self.table = table
        self.records.append(record)
        if self.on_block is not None:
            self.on_block(self, block, record)

    def start(self) -> None:
        """Called once when the simulation begins."""
