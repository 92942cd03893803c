# Store-carry-forward routers: Epidemic and MaxProp.
# Version: 1.0.0
# Provides buffer eviction, transmission ordering, meeting probabilities, path costs and ack handling.

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Hashable, Mapping, Protocol, Sequence

import numpy as np

from .messages import Message, MessageBuffer
from .scenario import RouterKind


logger = logging.getLogger(__name__)

INFINITE_COST = math.inf


class RoutingHost(Protocol):
    """What the routing functions need from a host."""
    id: str
    buffer: MessageBuffer
    router: "Router"


def buffer_make_room(
    buffer: MessageBuffer,
    incoming: Message,
    eviction_order: Sequence[Message],
    protected: frozenset[str] | set[str] = frozenset()
) -> list[Message] | None:
    """Evict copies, first in eviction_order, until incoming fits.

    Nothing is evicted when room cannot be made.

    Args:
        buffer: The receiving buffer.
        incoming: The copy that needs room.
        eviction_order: Resident copies, first to be evicted first.
        protected: Ids that must not be evicted (copies being sent).

    Returns:
        The evicted copies (possibly none), or None if the incoming copy
        is larger than the capacity or enough room cannot be freed.
    """
    if incoming.size > buffer.capacity:
        return None
    needed = incoming.size - buffer.free
    victims = []
    for message in eviction_order:
        if needed <= 0:
            break
        if message.id in protected or message.id == incoming.id:
            continue
        victims.append(message)
        needed -= message.size
    if needed > 0:
        return None
    for message in victims:
        buffer.remove(message.id)
    return victims


@dataclass
class MeetingProbabilities:
    """A host's normalized estimate of meeting every other host.

    Attributes:
        owner: Address of the owning host.
        values: Probability per host address; the owner's own entry is 0.
    """
    owner: int
    values: np.ndarray

    @classmethod
    def uniform(cls, owner: int, host_count: int) -> "MeetingProbabilities":
        values = np.zeros(host_count, dtype=float)
        if host_count > 1:
            values[:] = 1.0 / (host_count - 1)
            values[owner] = 0.0
        return cls(owner=owner, values=values)

    def __getitem__(self, address: int) -> float:
        return float(self.values[address])


def maxprop_update_probs(f: MeetingProbabilities, met: int) -> MeetingProbabilities:
    """Increment the met host's entry by one, then renormalize to sum 1."""
    if met == f.owner:
        raise ValueError(f"host {met} cannot meet itself")
    f.values[met] += 1.0
    f.values /= f.values.sum()
    return f


def maxprop_path_cost(
    tables: Mapping[Hashable, Mapping[Hashable, float]],
    source: Hashable,
    target: Hashable
) -> float:
    """Cheapest known path cost, summing 1 - f over hops.

    Only hosts with a table can relay; any host named in a table can be
    reached from that table's owner.

    Args:
        tables: Host -> (peer -> meeting probability) known to the evaluating host.
        source: The evaluating host.
        target: Destination host.

    Returns:
        The minimum cost, or INFINITE_COST if no known path exists.
    """
    if source == target:
        return 0.0
    best = {source: 0.0}
    settled = set()
    heap: list[tuple[float, int, Hashable]] = [(0.0, 0, source)]
    counter = 1
    while heap:
        cost, _, u = heapq.heappop(heap)
        if u in settled:
            continue
        if u == target:
            return cost
        settled.add(u)
        for v, probability in tables.get(u, {}).items():
            if v in settled or v == u:
                continue
            candidate = cost + (1.0 - probability)
            if candidate < best.get(v, INFINITE_COST):
                best[v] = candidate
                heapq.heappush(heap, (candidate, counter, v))
                counter += 1
    return INFINITE_COST


def maxprop_costs(
    owner: int,
    tables: Mapping[int, np.ndarray],
    host_count: int,
    targets: Sequence[int] | None = None
) -> np.ndarray:
    """Path cost from owner to every host address at once.

    Dense Dijkstra over the hosts whose tables are known; edge weight
    from table owner u to host v is 1 - tables[u][v]. With targets, the
    search stops as soon as every target cost is final, and the other
    entries may be left as upper bounds.
    """
    dist = np.full(host_count, INFINITE_COST)
    dist[owner] = 0.0
    relays = np.array(sorted(tables), dtype=int)
    if relays.size == 0:
        return dist
    weights = 1.0 - np.vstack([tables[int(a)] for a in relays])
    pending = np.ones(relays.size, dtype=bool)
    wanted = None if targets is None else np.asarray(targets, dtype=int)

    while pending.any():
        candidate = np.where(pending, dist[relays], INFINITE_COST)
        pick = int(np.argmin(candidate))
        if not np.isfinite(candidate[pick]):
            break
        # weights are >= 0, so nothing cheaper than the closest pending relay can appear
        if wanted is not None and wanted.size and dist[wanted].max() <= candidate[pick]:
            break
        pending[pick] = False
        np.minimum(dist, candidate[pick] + weights[pick], out=dist)
    dist[owner] = 0.0
    return dist


def maxprop_queue_order(
    copies: Sequence[Message],
    threshold: int,
    costs: Mapping[str, float]
) -> list[Message]:
    """Transmission order of MaxProp.

    Copies with fewer than `threshold` hops go first by ascending hop
    count; the rest follow by ascending cost to their destination. Equal
    keys fall back to creation order. Eviction uses the reverse.

    Args:
        copies: Resident copies.
        threshold: Hop-count threshold.
        costs: Message id -> path cost to its destination.
    """
    def key(message: Message) -> tuple:
        if message.hop_count < threshold:
            return (0, message.hop_count, message.seq)
        return (1, costs.get(message.id, INFINITE_COST), message.seq)

    return sorted(copies, key=key)


class Router:
    """Per-host routing state shared by both protocols.

    Attributes:
        address: Owning host's address.
        delivered: Ids of messages delivered to the owning host.
    """
    kind: RouterKind

    def __init__(self, address: int) -> None:
        self.address = address
        self.delivered: set[str] = set()
        self._order_cache: tuple[tuple, list[Message]] | None = None
        self._rank_cache: tuple[list[Message], dict[str, int]] | None = None

    def knows(self, message_id: str) -> bool:
        return message_id in self.delivered

    def known_sets(self) -> tuple[set[str], ...]:
        """Id sets whose members this host never needs again."""
        return (self.delivered,)

    def mark_delivered(self, message_id: str) -> None:
        self.delivered.add(message_id)

    def can_send_to(self, message: Message, peer_id: str) -> bool:
        return True

    def order_token(self, buffer: MessageBuffer) -> tuple:
        return (buffer.version,)

    def transmission_order(self, buffer: MessageBuffer) -> list[Message]:
        token = self.order_token(buffer)
        if self._order_cache is None or self._order_cache[0] != token:
            self._order_cache = (token, self._compute_order(list(buffer)))
        return self._order_cache[1]

    def transmission_rank(self, buffer: MessageBuffer) -> dict[str, int]:
        """Message id -> position in the current transmission order."""
        order = self.transmission_order(buffer)
        if self._rank_cache is None or self._rank_cache[0] is not order:
            self._rank_cache = (order, {m.id: i for i, m in enumerate(order)})
        return self._rank_cache[1]

    def _compute_order(self, copies: list[Message]) -> list[Message]:
        raise NotImplementedError

    def eviction_order(self, buffer: MessageBuffer) -> list[Message]:
        raise NotImplementedError

    def remove_after_delivery(self, message: Message) -> bool:
        """Whether the sender drops its copy after handing it to the destination."""
        return False


class EpidemicRouter(Router):
    """Flooding: every peer gets every message it lacks, oldest created first."""
    kind = RouterKind.EPIDEMIC

    def _compute_order(self, copies: list[Message]) -> list[Message]:
        return sorted(copies, key=lambda m: (m.created_at, m.seq))

    def eviction_order(self, buffer: MessageBuffer) -> list[Message]:
        # Oldest received first; the buffer keeps receive order.
        return list(buffer)


class MaxPropRouter(Router):
    """MaxProp with a fixed hop threshold and delivery acknowledgements.

    Attributes:
        probs: The owner's meeting probabilities.
        peer_tables: Latest meeting-probability vector learned per peer address.
        acks: Ids known to have been delivered.
        hop_threshold: Hop-count threshold for queue ordering.
        address_of: Host id -> address, shared by every router of the world.
    """
    kind = RouterKind.MAXPROP

    def __init__(
        self,
        address: int,
        host_count: int,
        address_of: Mapping[str, int],
        hop_threshold: int = 3
    ) -> None:
        super().__init__(address)
        self.host_count = host_count
        self.address_of = address_of
        self.hop_threshold = hop_threshold
        self.probs = MeetingProbabilities.uniform(address, host_count)
        self.peer_tables: dict[int, np.ndarray] = {}
        self.acks: set[str] = set()
        self._costs: np.ndarray | None = None
        self._cost_version = 0

    def knows(self, message_id: str) -> bool:
        return message_id in self.acks or message_id in self.delivered

    def known_sets(self) -> tuple[set[str], ...]:
        return (self.acks, self.delivered)

    def mark_delivered(self, message_id: str) -> None:
        self.acks.add(message_id)
        super().mark_delivered(message_id)

    def add_acks(self, message_ids: set[str]) -> None:
        self.acks |= message_ids

    def can_send_to(self, message: Message, peer_id: str) -> bool:
        return peer_id not in message.path

    def meet(self, peer: "MaxPropRouter") -> None:
        """Count the meeting and cache the peer's current vector."""
        maxprop_update_probs(self.probs, peer.address)
        self.invalidate_costs()

    def learn_table(self, peer: "MaxPropRouter") -> None:
        self.peer_tables[peer.address] = peer.probs.values.copy()
        self.invalidate_costs()

    def invalidate_costs(self) -> None:
        self._costs = None
        self._cost_version += 1

    @property
    def costs(self) -> np.ndarray:
        """Cost to every address, recomputed lazily after a contact changed the tables."""
        if self._costs is None:
            self._costs = maxprop_costs(self.address, self._tables(), self.host_count)
        return self._costs

    def _tables(self) -> dict[int, np.ndarray]:
        tables = dict(self.peer_tables)
        tables[self.address] = self.probs.values
        return tables

    def cost_to(self, host_id: str) -> float:
        return float(self.costs[self.address_of[host_id]])

    def order_token(self, buffer: MessageBuffer) -> tuple:
        return (buffer.version, self._cost_version)

    def _compute_order(self, copies: list[Message]) -> list[Message]:
        ranked = [m for m in copies if m.hop_count >= self.hop_threshold]
        costs: dict[str, float] = {}
        if ranked:
            targets = sorted({self.address_of[m.destination] for m in ranked})
            by_address = self._costs
            if by_address is None:
                by_address = maxprop_costs(self.address, self._tables(), self.host_count, targets)
            costs = {m.id: float(by_address[self.address_of[m.destination]]) for m in ranked}
        return maxprop_queue_order(copies, self.hop_threshold, costs)

    def eviction_order(self, buffer: MessageBuffer) -> list[Message]:
        acked = [m for m in buffer if m.id in self.acks]
        rest = [m for m in reversed(self.transmission_order(buffer)) if m.id not in self.acks]
        return acked + rest

    def remove_after_delivery(self, message: Message) -> bool:
        self.add_acks({message.id})
        return True


def make_router(
    kind: RouterKind,
    address: int,
    host_count: int,
    address_of: Mapping[str, int],
    hop_threshold: int = 3
) -> Router:
    if kind is RouterKind.EPIDEMIC:
        return EpidemicRouter(address)
    return MaxPropRouter(address, host_count, address_of, hop_threshold)


def peer_knows(receiver: RoutingHost, message_id: str) -> bool:
    """Summary-vector test: resident or already delivered/acked at the receiver."""
    return message_id in receiver.buffer or receiver.router.knows(message_id)


def transfer_queue(
    sender: RoutingHost,
    receiver: RoutingHost,
    skip: set[str] | frozenset[str] = frozenset()
) -> list[Message]:
    """Copies the sender would hand the receiver, in sending order.

    Messages addressed to the receiver come first, then the router's
    transmission order.
    """
    router = sender.router
    direct, others = [], []
    for message in router.transmission_order(sender.buffer):
        if message.id in skip or peer_knows(receiver, message.id):
            continue
        if not router.can_send_to(message, receiver.id):
            continue
        (direct if message.destination == receiver.id else others).append(message)
    return direct + others


def next_message(
    sender: RoutingHost,
    receiver: RoutingHost,
    skip: set[str] | frozenset[str] = frozenset()
) -> Message | None:
    """First copy of transfer_queue, without building the whole queue.

    The candidates are what the sender holds minus what the receiver
    holds or already knows about; only those are ranked.
    """
    candidates = sender.buffer.id_view() - receiver.buffer.id_view()
    if not candidates:
        return None
    for known in receiver.router.known_sets():
        candidates -= known
    candidates -= skip
    if not candidates:
        return None

    router = sender.router
    rank = router.transmission_rank(sender.buffer)
    direct, other = None, None
    for message_id in candidates:
        message = sender.buffer.get(message_id)
        if not router.can_send_to(message, receiver.id):
            continue
        if message.destination == receiver.id:
            if direct is None or rank[message_id] < rank[direct.id]:
                direct = message
        elif other is None or rank[message_id] < rank[other.id]:
            other = message
    return direct if direct is not None else other


def epidemic_on_connection_up(a: RoutingHost, b: RoutingHost) -> dict[str, list[Message]]:
    """Exchange summary vectors; returns what each side will send the other."""
    return {a.id: transfer_queue(a, b), b.id: transfer_queue(b, a)}


def propagate_acks(a: RoutingHost, b: RoutingHost) -> list[tuple[RoutingHost, Message]]:
    """Union both ack sets and delete every resident copy that is now acked.

    Returns:
        (holder, removed copy) pairs, holder a's removals first, each in receive order.
    """
    union = a.router.acks | b.router.acks
    a.router.add_acks(union)
    b.router.add_acks(union)
    removals = []
    for host in (a, b):
        for message in host.buffer:
            if message.id in union:
                host.buffer.remove(message.id)
                removals.append((host, message))
    return removals


def on_connection_up(a: RoutingHost, b: RoutingHost) -> list[tuple[RoutingHost, Message]]:
    """Router reaction to a new contact.

    Epidemic needs no state beyond the buffers. MaxProp counts the
    meeting, swaps meeting-probability vectors and merges acks.

    Returns:
        Copies removed because they were acknowledged.
    """
    if not isinstance(a.router, MaxPropRouter) or not isinstance(b.router, MaxPropRouter):
        return []
    a.router.meet(b.router)
    b.router.meet(a.router)
    a.router.learn_table(b.router)
    b.router.learn_table(a.router)
    return propagate_acks(a, b)
