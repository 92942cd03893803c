# Host movement: stationary placement and shortest-path trips over the lane graph.
# Version: 1.0.0
# Provides per-host movement state, POI-biased destination choice and the per-tick step.

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ValidationError
from .geo_map import Coordinate, MapGraph, PathResult, PoiSet
from .scenario import GroupSpec, MovementKind


logger = logging.getLogger(__name__)

HOST_STREAM = 0
GENERATOR_STREAM = 1


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for (seed, stream...) so streams never share draws."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(stream)))


def host_rng(seed: int, address: int) -> np.random.Generator:
    return derive_rng(seed, HOST_STREAM, address)


@dataclass
class MovementState:
    """Movement of one host.

    Map-based hosts follow `path` leg by leg; `progress` is the distance
    covered along the leg from path[leg] to path[leg + 1].

    Attributes:
        kind: Movement model.
        position: Current coordinate in sim-metres.
        rng: The host's own random stream.
        graph: Lane graph (map-based only).
        speed_range: (min, max) trip speed (map-based only).
        pois: (POI set, probability) choices (map-based only).
        retries: Destination redraws allowed per trip.
        path: Vertex path of the current trip.
        leg: Index of the leg start within path.
        progress: Distance along the current leg.
        speed: Speed of the current trip.
        trips: Trips planned so far.
    """
    kind: MovementKind
    position: Coordinate
    rng: np.random.Generator | None = None
    graph: MapGraph | None = field(default=None, repr=False)
    speed_range: tuple[float, float] = (0.0, 0.0)
    pois: tuple[tuple[PoiSet, float], ...] = ()
    retries: int = 20
    path: tuple[int, ...] = ()
    leg: int = 0
    progress: float = 0.0
    speed: float = 0.0
    trips: int = 0
    _stuck_logged: bool = field(default=False, repr=False)

    @property
    def is_stationary(self) -> bool:
        return self.kind is MovementKind.STATIONARY

    @property
    def vertex(self) -> int | None:
        """Vertex the host stands on, or None while between vertices."""
        if not self.path or self.progress > 0:
            return None
        return self.path[self.leg]

    @property
    def destination(self) -> int | None:
        return self.path[-1] if self.path else None

    @property
    def arrived(self) -> bool:
        return bool(self.path) and self.leg >= len(self.path) - 1


def initial_placement(
    group: GroupSpec,
    graph: MapGraph | None,
    rng: np.random.Generator,
    pois: Sequence[tuple[PoiSet, float]] = (),
    retries: int = 20
) -> MovementState:
    """Place a host and, for map-based hosts, plan the first trip.

    Args:
        group: The host's group.
        graph: Lane graph; required for map-based groups.
        rng: The host's random stream.
        pois: Resolved (POI set, probability) choices of the group.
        retries: Destination redraws allowed per trip.

    Returns:
        The host's MovementState.

    Raises:
        ValidationError: If a stationary group has no node location.
        ConfigurationError: If a map-based group has no graph to move on.
    """
    if group.movement is MovementKind.STATIONARY:
        if group.node_location is None:
            raise ValidationError(
                field=f"Group{group.index}.nodeLocation",
                value=None,
                reason="Stationary groups need a node location"
            )
        return MovementState(kind=group.movement, position=group.node_location)

    if graph is None or graph.vertex_count == 0:
        raise ConfigurationError(f"Group{group.index}", "map-based movement needs a non-empty map")
    for poi_set, prob in pois:
        if prob > 0 and len(poi_set) == 0:
            raise ValidationError(
                field=f"Group{group.index}.pois",
                value=poi_set.source,
                reason="POI probability is set but the POI set is empty"
            )

    start = int(rng.integers(graph.vertex_count))
    state = MovementState(
        kind=group.movement,
        position=graph.vertices[start],
        rng=rng,
        graph=graph,
        speed_range=group.speed or (0.0, 0.0),
        pois=tuple(pois),
        retries=retries,
        path=(start,),
    )
    _plan_trip(state)
    return state


def choose_destination(
    state: MovementState,
    pois: PoiSet | None,
    poi_prob: float,
    rng: np.random.Generator
) -> int:
    """Pick a trip destination.

    With probability poi_prob a uniformly random POI, otherwise a uniformly
    random vertex. A draw equal to the current vertex is redrawn up to
    state.retries times, after which it is accepted.

    Raises:
        ValidationError: If poi_prob > 0 and the POI set is empty.
    """
    if poi_prob > 0 and (pois is None or len(pois) == 0):
        raise ValidationError(field="pois", value=poi_prob, reason="POI probability set without POIs")
    current = state.path[state.leg] if state.path else None
    vertex_count = state.graph.vertex_count

    candidate = current
    for _ in range(max(state.retries, 1)):
        if poi_prob > 0 and rng.random() < poi_prob:
            candidate = pois.points[int(rng.integers(len(pois)))]
        else:
            candidate = int(rng.integers(vertex_count))
        if candidate != current:
            break
    return candidate


def _pick_poi_set(state: MovementState) -> PoiSet | None:
    """Choose which POI set (or none) serves the next trip by cumulative probability."""
    if not state.pois:
        return None
    draw = state.rng.random()
    cumulative = 0.0
    for poi_set, prob in state.pois:
        cumulative += prob
        if draw < cumulative:
            return poi_set
    return None


def _plan_trip(state: MovementState) -> bool:
    """Draw a speed and a reachable destination; False leaves the host waiting."""
    current = state.path[state.leg]
    low, high = state.speed_range
    route: PathResult | None = None

    for _ in range(max(state.retries, 1)):
        poi_set = _pick_poi_set(state)
        destination = choose_destination(
            state, poi_set, 1.0 if poi_set is not None else 0.0, state.rng
        )
        candidate = state.graph.shortest_path(current, destination)
        if candidate.found:
            route = candidate
            break

    if route is None:
        if not state._stuck_logged:
            logger.warning(
                f"No reachable destination from vertex {state.graph.vertices[current]} "
                f"after {state.retries} draws; host waits"
            )
            state._stuck_logged = True
        state.path = (current,)
        state.leg = 0
        state.progress = 0.0
        return False

    state.speed = float(state.rng.uniform(low, high)) if high > low else float(low)
    state.path = route.vertices
    state.leg = 0
    state.progress = 0.0
    state.trips += 1
    return True


def step(state: MovementState, dt: float) -> MovementState:
    """Advance a host by dt sim-seconds.

    The host walks along its path, crossing vertices as needed. Arriving
    at the destination plans the next trip at once and the rest of the
    tick is spent on it, so hosts never pause between trips. A host with
    no reachable destination, or whose new trip is a single vertex, waits
    out the tick. Stationary hosts are returned unchanged.
    """
    if state.is_stationary:
        return state

    graph = state.graph
    time_left = dt
    while time_left > 0:
        if state.arrived and (not _plan_trip(state) or state.arrived):
            break
        u, v = state.path[state.leg], state.path[state.leg + 1]
        leg_length = graph.weight(u, v)
        left = leg_length - state.progress
        reach = state.speed * time_left
        if reach < left:
            state.progress += reach
            (x0, y0), (x1, y1) = graph.vertices[u], graph.vertices[v]
            ratio = state.progress / leg_length
            state.position = (x0 + (x1 - x0) * ratio, y0 + (y1 - y0) * ratio)
            break
        time_left -= left / state.speed
        state.leg += 1
        state.progress = 0.0
        state.position = graph.vertices[v]
    return state
