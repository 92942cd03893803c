# WKT map and POI handling for map-based movement.
# Version: 1.0.0
# Parses POINT/LINESTRING files, builds the weighted lane graph, answers path and snap queries.

import heapq
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import ConfigurationError, FileLoadError, ParseError


logger = logging.getLogger(__name__)

Coordinate = tuple[float, float]
GeometryKind = Literal["POINT", "LINESTRING"]

_GEOMETRY_PATTERN = re.compile(r"^([A-Za-z]+)\s*\((.*)\)\s*$")


@dataclass(frozen=True)
class Geometry:
    """One WKT geometry.

    Attributes:
        kind: "POINT" or "LINESTRING".
        coords: Coordinates in sim-metres; one for a point, two or more for a line.
        line: Source line number.
    """
    kind: GeometryKind
    coords: tuple[Coordinate, ...]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class PathResult:
    """Outcome of a shortest-path query; an empty vertex tuple means no path."""
    vertices: tuple[int, ...]
    length: float

    @property
    def found(self) -> bool:
        return bool(self.vertices)


NO_PATH = PathResult(vertices=(), length=math.inf)


@dataclass
class MapGraph:
    """Undirected lane graph with Euclidean edge weights.

    Vertices keep the order in which their coordinates were first seen.
    The graph is not modified after build_graph returns, so path results
    are cached per (from, to) pair.

    Attributes:
        vertices: Vertex coordinates by index.
        adjacency: Per vertex, (neighbour index, weight) pairs sorted by neighbour.
    """
    vertices: tuple[Coordinate, ...]
    adjacency: tuple[tuple[tuple[int, float], ...], ...]
    _index: dict[Coordinate, int] = field(default_factory=dict, repr=False, compare=False)
    _coords: np.ndarray | None = field(default=None, repr=False, compare=False)
    _path_cache: dict[tuple[int, int], PathResult] = field(
        default_factory=dict, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        self._index = {coord: i for i, coord in enumerate(self.vertices)}
        self._coords = np.asarray(self.vertices, dtype=float).reshape(-1, 2)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def edge_count(self) -> int:
        return sum(len(neighbours) for neighbours in self.adjacency) // 2

    @property
    def coords(self) -> np.ndarray:
        return self._coords

    def index_of(self, coord: Coordinate) -> int | None:
        return self._index.get((float(coord[0]), float(coord[1])))

    def neighbours(self, vertex: int) -> tuple[tuple[int, float], ...]:
        return self.adjacency[vertex]

    def weight(self, u: int, v: int) -> float | None:
        for neighbour, w in self.adjacency[u]:
            if neighbour == v:
                return w
        return None

    def degree(self, vertex: int) -> int:
        return len(self.adjacency[vertex])

    def bounds(self) -> tuple[float, float, float, float]:
        """Bounding box (min_x, min_y, max_x, max_y) of all vertices."""
        if not self.vertices:
            raise ConfigurationError("map", "graph has no vertices")
        low = self._coords.min(axis=0)
        high = self._coords.max(axis=0)
        return float(low[0]), float(low[1]), float(high[0]), float(high[1])

    def shortest_path(self, source: int, target: int) -> PathResult:
        key = (source, target)
        if key not in self._path_cache:
            self._path_cache[key] = _dijkstra(self, source, target)
        return self._path_cache[key]


@dataclass(frozen=True)
class PoiSet:
    """Points of interest snapped to graph vertices.

    Attributes:
        points: Vertex index of each POI, in file order.
        source: File the POIs came from.
    """
    points: tuple[int, ...]
    source: str = ""

    def __len__(self) -> int:
        return len(self.points)


def parse_wkt(text: str, source: str = "<string>") -> list[Geometry]:
    """Parse the POINT/LINESTRING subset of WKT, one geometry per line.

    Lines whose first non-blank character is `#` and blank lines are
    skipped; anything else that is not a geometry is rejected.

    Args:
        text: WKT text.
        source: Name used in diagnostics.

    Returns:
        Geometries in file order.

    Raises:
        ParseError: For unknown keywords, malformed coordinate lists or
            the wrong number of coordinates.
    """
    geometries = []
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        match = _GEOMETRY_PATTERN.match(line)
        if not match:
            raise ParseError(source, line_number, f"not a WKT geometry: {line!r}")
        keyword = match.group(1).upper()
        if keyword not in ("POINT", "LINESTRING"):
            raise ParseError(source, line_number, f"unknown geometry keyword {match.group(1)!r}")

        coords = _parse_coordinates(match.group(2), source, line_number)
        if keyword == "POINT" and len(coords) != 1:
            raise ParseError(source, line_number, "POINT takes exactly one coordinate")
        if keyword == "LINESTRING" and len(coords) < 2:
            raise ParseError(source, line_number, "LINESTRING needs at least two coordinates")
        geometries.append(Geometry(kind=keyword, coords=tuple(coords), line=line_number))
    return geometries


def _parse_coordinates(body: str, source: str, line_number: int) -> list[Coordinate]:
    coords = []
    for part in body.split(","):
        components = part.split()
        if len(components) != 2:
            raise ParseError(
                source,
                line_number,
                f"coordinate needs exactly two components, got {part.strip()!r}"
            )
        try:
            x, y = float(components[0]), float(components[1])
        except ValueError:
            raise ParseError(source, line_number, f"non-numeric coordinate {part.strip()!r}")
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ParseError(source, line_number, f"non-finite coordinate {part.strip()!r}")
        coords.append((x, y))
    return coords


def build_graph(lines: Iterable[Geometry | Sequence[Coordinate]]) -> MapGraph:
    """Build the lane graph from line strings.

    Identical coordinates merge into one vertex, so lines that share a
    coordinate are connected there. Repeated edges collapse to one and
    zero-length segments are dropped with a warning.

    Args:
        lines: LINESTRING geometries or plain coordinate sequences.

    Returns:
        The MapGraph.
    """
    index: dict[Coordinate, int] = {}
    vertices: list[Coordinate] = []
    edges: dict[int, dict[int, float]] = {}

    def vertex_for(coord: Coordinate) -> int:
        key = (float(coord[0]), float(coord[1]))
        if key not in index:
            index[key] = len(vertices)
            vertices.append(key)
            edges[index[key]] = {}
        return index[key]

    for line in lines:
        coords = line.coords if isinstance(line, Geometry) else tuple(line)
        for start, end in zip(coords, coords[1:]):
            u, v = vertex_for(start), vertex_for(end)
            if u == v:
                logger.warning(f"Dropping zero-length map segment at {vertices[u]}")
                continue
            w = math.hypot(vertices[v][0] - vertices[u][0], vertices[v][1] - vertices[u][1])
            edges[u][v] = w
            edges[v][u] = w

    adjacency = tuple(
        tuple(sorted(edges[i].items())) for i in range(len(vertices))
    )
    return MapGraph(vertices=tuple(vertices), adjacency=adjacency)


def _dijkstra(graph: MapGraph, source: int, target: int) -> PathResult:
    """Binary-heap Dijkstra; equal-cost ties settle the lower vertex index first."""
    if source == target:
        return PathResult(vertices=(source,), length=0.0)

    best = {source: 0.0}
    previous: dict[int, int] = {}
    settled: set[int] = set()
    heap = [(0.0, source)]

    while heap:
        cost, u = heapq.heappop(heap)
        if u in settled:
            continue
        settled.add(u)
        if u == target:
            break
        for v, w in graph.adjacency[u]:
            if v in settled:
                continue
            candidate = cost + w
            known = best.get(v)
            if known is None or candidate < known:
                best[v] = candidate
                previous[v] = u
                heapq.heappush(heap, (candidate, v))
            elif candidate == known and u < previous[v]:
                previous[v] = u

    if target not in settled:
        return NO_PATH

    path = [target]
    while path[-1] != source:
        path.append(previous[path[-1]])
    path.reverse()
    return PathResult(vertices=tuple(path), length=best[target])


def shortest_path(graph: MapGraph, source: int, target: int) -> PathResult:
    """Minimum-length vertex path between two vertices.

    Args:
        graph: The lane graph.
        source: Start vertex index.
        target: End vertex index.

    Returns:
        PathResult with the vertex list and total length in sim-metres, or
        NO_PATH if target is unreachable.

    Raises:
        ConfigurationError: If either vertex does not exist.
    """
    for vertex in (source, target):
        if not 0 <= vertex < graph.vertex_count:
            raise ConfigurationError("map", f"vertex {vertex} does not exist")
    return graph.shortest_path(source, target)


def snap_to_vertex(point: Coordinate, graph: MapGraph) -> tuple[int, float]:
    """Nearest vertex to a point, lower index on ties.

    Returns:
        (vertex index, distance in sim-metres).

    Raises:
        ConfigurationError: If the graph is empty.
    """
    if graph.vertex_count == 0:
        raise ConfigurationError("map", "cannot snap to an empty graph")
    distances = np.hypot(graph.coords[:, 0] - point[0], graph.coords[:, 1] - point[1])
    nearest = int(np.argmin(distances))
    return nearest, float(distances[nearest])


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise FileLoadError(str(path), e)


def load_map(paths: Iterable[str | Path]) -> MapGraph:
    """Read one or more map files and merge their lines into one graph.

    Raises:
        FileLoadError: If a file cannot be read.
        ParseError: If a file is malformed.
        ConfigurationError: If the files hold no LINESTRING.
    """
    lines: list[Geometry] = []
    names = []
    for path in paths:
        path = Path(path)
        names.append(str(path))
        for geometry in parse_wkt(_read_text(path), source=str(path)):
            if geometry.kind == "LINESTRING":
                lines.append(geometry)
            else:
                logger.warning(f"{path} line {geometry.line}: ignoring POINT in map file")
    if not lines:
        raise ConfigurationError(", ".join(names) or "map", "no LINESTRING found")
    graph = build_graph(lines)
    logger.info(f"Loaded map {', '.join(names)}: {graph.vertex_count} vertices, {graph.edge_count} edges")
    return graph


def load_pois(path: str | Path, graph: MapGraph) -> PoiSet:
    """Read a POI file and snap each point to its nearest map vertex.

    Raises:
        FileLoadError: If the file cannot be read.
        ParseError: If the file is malformed.
        ConfigurationError: If the file has no POINT or holds a LINESTRING.
    """
    path = Path(path)
    points = []
    for geometry in parse_wkt(_read_text(path), source=str(path)):
        if geometry.kind != "POINT":
            raise ConfigurationError(str(path), f"line {geometry.line}: POI files hold only POINTs")
        vertex, distance = snap_to_vertex(geometry.coords[0], graph)
        if distance > 0:
            logger.warning(
                f"{path} line {geometry.line}: POI {geometry.coords[0]} snapped to "
                f"vertex {graph.vertices[vertex]} at distance {distance:.1f}"
            )
        points.append(vertex)
    if not points:
        raise ConfigurationError(str(path), "POI file has no points")
    return PoiSet(points=tuple(points), source=str(path))
