# The simulated world: hosts, contacts, transfers and the tick loop.
# Version: 1.0.0
# Provides world construction, connection detection, one-tick advance and full runs.

import heapq
import logging
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .events import EventKind, EventListener, SimEvent
from .geo_map import MapGraph, PoiSet, load_map, load_pois
from .messages import Message, MessageBuffer
from .metrics import MessageStatsReport, MetricsAccumulator, finalize
from .mobility import (
    GENERATOR_STREAM,
    MovementState,
    derive_rng,
    host_rng,
    initial_placement,
    step,
)
from .routing import Router, buffer_make_room, make_router, next_message, on_connection_up
from .scenario import GroupSpec, InterfaceSpec, MessageGeneratorSpec, Scenario, get_defaults


logger = logging.getLogger(__name__)

ConnectionKey = tuple[str, str]
Direction = tuple[ConnectionKey, int]


@dataclass
class Host:
    """A simulated node.

    Attributes:
        id: Group prefix followed by the network address, e.g. "pcd0", "s12".
        address: Global index of the host.
        group: The host's group.
        interfaces: The host's radio interfaces.
        movement: Movement state.
        buffer: Message buffer.
        router: Routing state.
        sending: Message ids in flight from this host, with counts.
    """
    id: str
    address: int
    group: GroupSpec
    interfaces: tuple[InterfaceSpec, ...]
    movement: MovementState
    buffer: MessageBuffer
    router: Router
    sending: Counter = field(default_factory=Counter)

    @property
    def position(self) -> tuple[float, float]:
        return self.movement.position


@dataclass
class Transfer:
    message: Message
    sender: Host
    receiver: Host
    started_at: float
    completes_at: float


@dataclass
class Connection:
    """An up link between two hosts, a.id < b.id.

    Attributes:
        a: Lower-id endpoint.
        b: Higher-id endpoint.
        interface: Interface the link runs over.
        established_at: Time the link came up.
        transfers: In-flight transfer per sending host id.
        refused: Per sending host id, message ids the receiver refused.
    """
    a: Host
    b: Host
    interface: InterfaceSpec
    established_at: float
    transfers: dict[str, Transfer] = field(default_factory=dict)
    refused: dict[str, set[str]] = field(default_factory=dict)

    @property
    def key(self) -> ConnectionKey:
        return (self.a.id, self.b.id)

    def directions(self) -> tuple[tuple[Host, Host], tuple[Host, Host]]:
        return ((self.a, self.b), (self.b, self.a))


@dataclass
class ConnectionDelta:
    ups: list[tuple[Host, Host, InterfaceSpec]]
    downs: list[ConnectionKey]


@lru_cache(maxsize=64)
def _upper_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, k=1)


@dataclass
class _InterfacePairs:
    """Every host pair sharing one interface name, as index arrays into the host list."""
    spec: InterfaceSpec
    first: np.ndarray
    second: np.ndarray
    keys: list[ConnectionKey]
    index_of: dict[ConnectionKey, int]
    linked: np.ndarray


class ContactDetector:
    """Pairwise range checks per interface name, vectorized with numpy.

    Interface membership never changes during a run, so the pair lists
    and their connection keys are built once. Between calls the detector
    remembers which pairs were in range and only looks up pairs whose
    state flipped.
    """

    def __init__(self, hosts: Sequence[Host]) -> None:
        self._hosts = list(hosts)
        self._by_key: dict[ConnectionKey, tuple[Host, Host]] = {}
        self._pairs: list[_InterfacePairs] = []
        self._linked: dict[ConnectionKey, tuple[Host, Host, InterfaceSpec]] = {}

        specs: dict[str, InterfaceSpec] = {}
        for host in self._hosts:
            for spec in host.interfaces:
                specs.setdefault(spec.name, spec)
        for name in sorted(specs):
            members = [
                n for n, host in enumerate(self._hosts)
                if any(s.name == name for s in host.interfaces)
            ]
            if len(members) < 2:
                continue
            i, j = _upper_pairs(len(members))
            index = np.array(members, dtype=int)
            first, second = index[i], index[j]
            keys = []
            for p, q in zip(first.tolist(), second.tolist()):
                a, b = self._hosts[p], self._hosts[q]
                if a.id > b.id:
                    a, b = b, a
                keys.append((a.id, b.id))
                self._by_key[(a.id, b.id)] = (a, b)
            self._pairs.append(_InterfacePairs(
                spec=specs[name],
                first=first,
                second=second,
                keys=keys,
                index_of={key: k for k, key in enumerate(keys)},
                linked=np.zeros(len(keys), dtype=bool),
            ))

    def _update(self) -> list[int]:
        positions = np.array([host.position for host in self._hosts], dtype=float)
        flipped = []
        for n, pairs in enumerate(self._pairs):
            delta = positions[pairs.first] - positions[pairs.second]
            linked = np.hypot(delta[:, 0], delta[:, 1]) <= pairs.spec.transmit_range
            flipped.append(np.flatnonzero(linked != pairs.linked))
            pairs.linked = linked
        return flipped

    def _resolve(self, key: ConnectionKey) -> tuple[Host, Host, InterfaceSpec] | None:
        """The pair with the first interface (by name) it is in range on, or None."""
        for pairs in self._pairs:
            k = pairs.index_of.get(key)
            if k is not None and pairs.linked[k]:
                a, b = self._by_key[key]
                return (a, b, pairs.spec)
        return None

    def in_range(self) -> dict[ConnectionKey, tuple[Host, Host, InterfaceSpec]]:
        """Every linkable pair at the current positions; first interface name wins."""
        self._update()
        current: dict[ConnectionKey, tuple[Host, Host, InterfaceSpec]] = {}
        for pairs in self._pairs:
            for k in np.flatnonzero(pairs.linked).tolist():
                key = pairs.keys[k]
                if key not in current:
                    a, b = self._by_key[key]
                    current[key] = (a, b, pairs.spec)
        self._linked = current
        return current

    def delta(self, existing: Mapping[ConnectionKey, object]) -> ConnectionDelta:
        """Links that came up or went down relative to existing.

        When existing is what the previous call reported, only pairs whose
        range state flipped are examined; otherwise every pair is.
        """
        if existing.keys() != self._linked.keys():
            current = self.in_range()
            ups = [current[key] for key in sorted(current) if key not in existing]
            downs = sorted(key for key in existing if key not in current)
            return ConnectionDelta(ups=ups, downs=downs)

        touched = set()
        for pairs, flipped in zip(self._pairs, self._update()):
            touched.update(pairs.keys[k] for k in flipped.tolist())
        ups, downs = [], []
        for key in sorted(touched):
            pair = self._resolve(key)
            if pair is not None and key not in self._linked:
                self._linked[key] = pair
                ups.append(pair)
            elif pair is None and key in self._linked:
                del self._linked[key]
                downs.append(key)
        return ConnectionDelta(ups=ups, downs=downs)


def detect_connections(
    hosts: Sequence[Host],
    existing: Mapping[ConnectionKey, Connection],
    detector: ContactDetector | None = None
) -> ConnectionDelta:
    """Links that came up or went down since the last check.

    Two hosts are linked iff they share an interface name and their
    distance is at most that interface's range.

    Returns:
        ConnectionDelta with ups and downs in sorted key order.
    """
    detector = detector or ContactDetector(hosts)
    return detector.delta(existing)


def transfer_time(message_size: int, speed: float) -> float:
    """Sim-seconds to send message_size bytes at speed bytes per sim-second."""
    if speed <= 0:
        raise ValidationError(field="transmitSpeed", value=speed, reason="Must be greater than zero")
    return message_size / speed


def create_message(
    generator: MessageGeneratorSpec,
    rng: np.random.Generator,
    t: float,
    seq: int,
    sources: Sequence[str],
    destinations: Sequence[str]
) -> Message:
    """A new message with uniformly drawn source and destination hosts."""
    source = sources[int(rng.integers(len(sources)))]
    destination = destinations[int(rng.integers(len(destinations)))]
    return Message(
        id=f"{generator.prefix}{seq}",
        seq=seq,
        source=source,
        destination=destination,
        size=generator.size,
        created_at=t,
        path=(source,),
        received_at=t,
        response_size=generator.response_size,
    )


@dataclass
class _TransferPass:
    """Directions still to visit in the current tick, in (key, side) order."""
    queue: list[Direction]
    queued: set[Direction]
    cursor: Direction | None = None


@dataclass
class World:
    """Mutable state of one run; only advance() changes it.

    A connection direction is (key, 0) for a -> b and (key, 1) for b -> a.
    Directions in `active` are visited every tick; a direction with nothing
    to send leaves it until its sender stores a copy or its receiver loses one.
    """
    scenario: Scenario
    hosts: list[Host]
    graph: MapGraph | None
    rng: np.random.Generator
    listeners: list[EventListener]
    detector: ContactDetector
    sources: list[str]
    destinations: list[str]
    next_creation: float
    time: float = 0.0
    tick: int = 0
    message_seq: int = 0
    connections: dict[ConnectionKey, Connection] = field(default_factory=dict)
    host_by_id: dict[str, Host] = field(default_factory=dict)
    pending: list[SimEvent] = field(default_factory=list)
    active: set[Direction] = field(default_factory=set)
    links_of: dict[str, set[ConnectionKey]] = field(default_factory=dict)
    buffer_counts: dict[str, tuple[int, int]] = field(default_factory=dict)
    _pass: _TransferPass | None = field(default=None, repr=False)

    def emit(self, event: SimEvent) -> None:
        self.pending.append(event)

    def in_flight(self) -> int:
        return sum(len(conn.transfers) for conn in self.connections.values())

    def _draw_interval(self) -> float:
        low, high = self.scenario.generator.interval
        return float(self.rng.uniform(low, high)) if high > low else float(low)

    def wake(self, direction: Direction) -> None:
        self.active.add(direction)
        current = self._pass
        if current is not None and direction not in current.queued and (
            current.cursor is None or direction > current.cursor
        ):
            heapq.heappush(current.queue, direction)
            current.queued.add(direction)

    def note_buffers(self, *hosts: Host) -> None:
        """Wake directions a buffer change can give something new to send."""
        for host in hosts:
            counts = (host.buffer.added, host.buffer.removed)
            before = self.buffer_counts.get(host.id, (0, 0))
            if counts == before:
                continue
            self.buffer_counts[host.id] = counts
            gained, lost = counts[0] != before[0], counts[1] != before[1]
            for key in self.links_of.get(host.id, ()):
                side = 0 if key[0] == host.id else 1
                if gained:
                    self.wake((key, side))
                if lost:
                    self.wake((key, 1 - side))


def build_world(
    scenario: Scenario,
    listeners: Iterable[EventListener] = (),
    destination_retries: int | None = None
) -> World:
    """Load the map and POIs, create and place every host.

    Args:
        scenario: Validated scenario.
        listeners: Callables receiving every SimEvent.
        destination_retries: Destination redraws per trip; defaults.yaml when None.

    Returns:
        The world at time 0.
    """
    if destination_retries is None:
        destination_retries = get_defaults().destination_retries

    graph = None
    if any(group.is_map_based for group in scenario.groups):
        graph = load_map(scenario.resolve_path(p) for p in scenario.map_paths)

    poi_sets: dict[int, PoiSet] = {}
    for group in scenario.groups:
        for index, _ in group.pois:
            if index not in poi_sets:
                poi_sets[index] = load_pois(scenario.poi_path(index), graph)

    address_of: dict[str, int] = {}
    for group in scenario.groups:
        for _ in range(group.nrof_hosts):
            address = len(address_of)
            address_of[f"{group.group_id_prefix}{address}"] = address
    host_count = len(address_of)

    hosts = []
    ids = iter(address_of.items())
    for group in scenario.groups:
        interfaces = tuple(scenario.interface(name) for name in group.interfaces)
        pois = tuple((poi_sets[index], prob) for index, prob in group.pois)
        for _ in range(group.nrof_hosts):
            host_id, address = next(ids)
            movement = initial_placement(
                group, graph, host_rng(scenario.rng_seed, address), pois, destination_retries
            )
            hosts.append(Host(
                id=host_id,
                address=address,
                group=group,
                interfaces=interfaces,
                movement=movement,
                buffer=MessageBuffer(capacity=group.buffer_size),
                router=make_router(
                    scenario.router, address, host_count, address_of, scenario.hop_threshold
                ),
            ))

    generator = scenario.generator
    sources = [h.id for h in hosts if h.group.group_id_prefix in generator.source_groups]
    destinations = [h.id for h in hosts if h.group.group_id_prefix in generator.destination_groups]

    world = World(
        scenario=scenario,
        hosts=hosts,
        graph=graph,
        rng=derive_rng(scenario.rng_seed, GENERATOR_STREAM),
        listeners=list(listeners),
        detector=ContactDetector(hosts),
        sources=sources,
        destinations=destinations,
        next_creation=0.0,
        host_by_id={host.id: host for host in hosts},
        links_of={host.id: set() for host in hosts},
    )
    world.next_creation = world._draw_interval()
    return world


def advance(world: World) -> World:
    """Run one tick.

    Phase order: movement, due message creations, connection detection,
    router reaction to new connections, transfers, event delivery to
    listeners.
    """
    scenario = world.scenario
    start = world.time
    world.tick += 1
    clock = min(world.tick * scenario.update_interval, scenario.sim_time_end)

    for host in world.hosts:
        step(host.movement, clock - start)

    while world.next_creation <= clock:
        _create(world, world.next_creation)
        world.next_creation += world._draw_interval()

    delta = detect_connections(world.hosts, world.connections, world.detector)
    for key in delta.downs:
        _connection_down(world, key, clock)
    new_connections = []
    for a, b, spec in delta.ups:
        conn = Connection(a=a, b=b, interface=spec, established_at=clock)
        conn.refused = {a.id: set(), b.id: set()}
        world.connections[conn.key] = conn
        world.links_of[a.id].add(conn.key)
        world.links_of[b.id].add(conn.key)
        world.active.update(((conn.key, 0), (conn.key, 1)))
        new_connections.append(conn)
        world.emit(SimEvent(clock, EventKind.CONNECTION_UP, a.id, b.id))

    for conn in new_connections:
        for holder, message in on_connection_up(conn.a, conn.b):
            _copy_removed(world, holder, message, clock)
        world.note_buffers(conn.a, conn.b)

    _transfer_pass(world, start, clock)

    world.time = clock
    logger.debug(
        f"t={clock:.1f}: +{len(delta.ups)} -{len(delta.downs)} links, "
        f"{len(world.active)} active directions, {len(world.pending)} events"
    )
    events, world.pending = world.pending, []
    for event in events:
        for listener in world.listeners:
            listener(event)
    return world


def _transfer_pass(world: World, start: float, clock: float) -> None:
    """Visit active directions in (key, side) order, including ones woken mid-pass."""
    queue = sorted(world.active)
    world._pass = _TransferPass(queue=queue, queued=set(queue))
    try:
        while queue:
            direction = heapq.heappop(queue)
            world._pass.cursor = direction
            key, side = direction
            conn = world.connections[key]
            sender, receiver = conn.directions()[side]
            if not _progress(world, conn, sender, receiver, start, clock):
                world.active.discard(direction)
            world.note_buffers(sender, receiver)
    finally:
        world._pass = None


def _create(world: World, t: float) -> None:
    world.message_seq += 1
    message = create_message(
        world.scenario.generator, world.rng, t, world.message_seq, world.sources, world.destinations
    )
    source = world.host_by_id[message.source]
    world.emit(SimEvent(
        t, EventKind.MESSAGE_CREATED, source.id, message.destination, message.id, created_at=t
    ))
    victims = buffer_make_room(
        source.buffer, message, source.router.eviction_order(source.buffer), set(source.sending)
    )
    if victims is None:
        logger.warning(f"{message.id} ({message.size} bytes) does not fit the buffer of {source.id}")
        return
    for victim in victims:
        _emit_left_buffer(world, EventKind.MESSAGE_DROPPED, source, victim, t)
    source.buffer.add(message)
    world.note_buffers(source)


def _emit_left_buffer(world: World, kind: EventKind, holder: Host, message: Message, t: float) -> None:
    world.emit(SimEvent(
        t, kind, holder.id, message_id=message.id, residency=t - message.received_at
    ))


def _copy_removed(world: World, holder: Host, message: Message, t: float) -> None:
    """Account for an acked copy already taken out of the holder's buffer."""
    if holder.sending.get(message.id):
        for key in sorted(world.links_of[holder.id]):
            conn = world.connections[key]
            transfer = conn.transfers.get(holder.id)
            if transfer is not None and transfer.message.id == message.id:
                _abort(world, conn, transfer, t)
    _emit_left_buffer(world, EventKind.MESSAGE_REMOVED, holder, message, t)


def _release(conn: Connection, transfer: Transfer) -> None:
    conn.transfers.pop(transfer.sender.id, None)
    transfer.sender.sending[transfer.message.id] -= 1
    if transfer.sender.sending[transfer.message.id] <= 0:
        del transfer.sender.sending[transfer.message.id]


def _abort(world: World, conn: Connection, transfer: Transfer, t: float) -> None:
    _release(conn, transfer)
    world.emit(SimEvent(
        t, EventKind.TRANSFER_ABORTED, transfer.sender.id, transfer.receiver.id, transfer.message.id
    ))


def _connection_down(world: World, key: ConnectionKey, t: float) -> None:
    conn = world.connections.pop(key)
    world.links_of[conn.a.id].discard(key)
    world.links_of[conn.b.id].discard(key)
    world.active.difference_update(((key, 0), (key, 1)))
    for sender_id in sorted(conn.transfers):
        _abort(world, conn, conn.transfers[sender_id], t)
    world.emit(SimEvent(t, EventKind.CONNECTION_DOWN, conn.a.id, conn.b.id))


def _progress(
    world: World,
    conn: Connection,
    sender: Host,
    receiver: Host,
    start: float,
    clock: float
) -> bool:
    """Finish or start at most one transfer from sender to receiver this tick.

    Returns:
        False when the sender had nothing left to offer the receiver.
    """
    transfer = conn.transfers.get(sender.id)
    if transfer is not None:
        if transfer.completes_at <= clock:
            _complete(world, conn, transfer, clock)
        return True

    message = next_message(sender, receiver, conn.refused[sender.id])
    if message is None:
        return False

    world.emit(SimEvent(clock, EventKind.TRANSFER_STARTED, sender.id, receiver.id, message.id))
    if message.size > receiver.buffer.capacity:
        conn.refused[sender.id].add(message.id)
        world.emit(SimEvent(clock, EventKind.TRANSFER_ABORTED, sender.id, receiver.id, message.id))
        return True

    duration = transfer_time(message.size, conn.interface.transmit_speed)
    transfer = Transfer(message, sender, receiver, started_at=start, completes_at=start + duration)
    conn.transfers[sender.id] = transfer
    sender.sending[message.id] += 1
    if transfer.completes_at <= clock:
        _complete(world, conn, transfer, clock)
    return True


def _complete(world: World, conn: Connection, transfer: Transfer, t: float) -> None:
    sender, receiver = transfer.sender, transfer.receiver
    message = sender.buffer.get(transfer.message.id)
    if message is None:
        _abort(world, conn, transfer, t)
        return
    _release(conn, transfer)

    relayed = SimEvent(t, EventKind.TRANSFER_RELAYED, sender.id, receiver.id, message.id)
    if receiver.id == message.destination:
        world.emit(relayed)
        if not receiver.router.knows(message.id):
            receiver.router.mark_delivered(message.id)
            world.emit(SimEvent(
                t, EventKind.MESSAGE_DELIVERED, sender.id, receiver.id, message.id,
                created_at=message.created_at, hop_count=message.hop_count + 1
            ))
        if sender.router.remove_after_delivery(message) and message.id in sender.buffer:
            sender.buffer.remove(message.id)
            _copy_removed(world, sender, message, t)
        return

    if message.id in receiver.buffer or receiver.router.knows(message.id):
        world.emit(relayed)
        return

    victims = buffer_make_room(
        receiver.buffer, message, receiver.router.eviction_order(receiver.buffer), set(receiver.sending)
    )
    if victims is None:
        conn.refused[sender.id].add(message.id)
        world.emit(SimEvent(t, EventKind.TRANSFER_ABORTED, sender.id, receiver.id, message.id))
        return
    for victim in victims:
        _emit_left_buffer(world, EventKind.MESSAGE_DROPPED, receiver, victim, t)
    receiver.buffer.add(message.replicate(receiver.id, t))
    world.emit(relayed)


def run_simulation(
    scenario: Scenario,
    listeners: Iterable[EventListener] = (),
    destination_retries: int | None = None
) -> MessageStatsReport:
    """Run a scenario to its end time and return the finalized report."""
    accumulator = MetricsAccumulator()
    world = build_world(scenario, [accumulator, *listeners], destination_retries)
    logger.info(
        f"Running {scenario.name}: router={scenario.router.value}, "
        f"seed={scenario.rng_seed}, hosts={len(world.hosts)}"
    )
    while world.time < scenario.sim_time_end:
        advance(world)
    report = finalize(accumulator, world.time)
    logger.info(
        f"Finished {scenario.name}: created={report.created}, delivered={report.delivered}, "
        f"in flight={world.in_flight()}"
    )
    return report
