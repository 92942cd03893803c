# Assemble a validated Scenario from a SettingsTable.
# Version: 1.0.0
# Provides the scenario types, YAML-backed defaults, build/serialize helpers and file loading.

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Iterable

import yaml

from .errors import ConfigurationError, FileLoadError, ValidationError
from .settings import (
    DISTANCE_SCALE,
    TIME_SCALE,
    SettingsTable,
    apply_overrides,
    load_settings,
    parse_size,
)


logger = logging.getLogger(__name__)

DEFAULTS_PATH = Path(__file__).resolve().parent.parent / "config" / "defaults.yaml"

SUPPORTED_INTERFACE_TYPES: frozenset[str] = frozenset({"SimpleBroadcastInterface"})

_GROUP_KEY = re.compile(r"^Group(\d+)\.")
_MAX_ALIAS_DEPTH = 8


class MovementKind(Enum):
    """Movement models a host group can use."""
    STATIONARY = "StationaryMovement"
    SHORTEST_PATH_MAP_BASED = "ShortestPathMapBasedMovement"


class RouterKind(Enum):
    """Routers applied to the whole scenario."""
    EPIDEMIC = "EpidemicRouter"
    MAXPROP = "MaxPropRouter"


@dataclass(frozen=True)
class GeneratorDefaults:
    """Message generator values used when a scenario omits Events1.* keys."""
    interval: tuple[float, float]
    size: int
    source_groups: tuple[str, ...]
    destination_groups: tuple[str, ...]
    response_size: int
    prefix: str


@dataclass(frozen=True)
class ScenarioDefaults:
    """Project-wide defaults loaded from config/defaults.yaml.

    Attributes:
        update_interval: Tick length in sim-seconds.
        rng_seed: World seed.
        router: Router name used when Group.router is absent.
        maxprop_hop_threshold: Hop threshold for MaxProp queue ordering.
        destination_retries: Destination redraws before a host waits a tick.
        fit_samples: Points sampled along a fitted trend curve.
        generator: Message generator defaults.
    """
    update_interval: float
    rng_seed: int
    router: str
    maxprop_hop_threshold: int
    destination_retries: int
    fit_samples: int
    generator: GeneratorDefaults


@dataclass(frozen=True)
class InterfaceSpec:
    """A radio interface type shared by every host that declares it.

    Attributes:
        name: Interface identifier; equal names are link-compatible.
        transmit_range: Range in sim-metres.
        transmit_speed: Bytes per sim-second.
        type: Interface class name.
    """
    name: str
    transmit_range: float
    transmit_speed: int
    type: str = "SimpleBroadcastInterface"


@dataclass(frozen=True)
class GroupSpec:
    """One host group.

    Attributes:
        index: N of the GroupN.* keys it came from.
        group_id_prefix: Prefix of every host id in the group.
        nrof_hosts: Number of hosts.
        movement: Movement model.
        buffer_size: Message buffer capacity in bytes.
        interfaces: Canonical interface names, first is the primary one.
        node_location: Fixed position of stationary hosts.
        speed: (min, max) trip speed of map-based hosts in sim-m/sim-s.
        pois: (POI file index, probability) pairs for map-based hosts.
    """
    index: int
    group_id_prefix: str
    nrof_hosts: int
    movement: MovementKind
    buffer_size: int
    interfaces: tuple[str, ...]
    node_location: tuple[float, float] | None = None
    speed: tuple[float, float] | None = None
    pois: tuple[tuple[int, float], ...] = ()

    @property
    def interface(self) -> str:
        return self.interfaces[0]

    @property
    def is_map_based(self) -> bool:
        return self.movement is MovementKind.SHORTEST_PATH_MAP_BASED

    @property
    def poi_prob(self) -> float:
        """Total probability of picking a POI destination."""
        return sum(prob for _, prob in self.pois)


@dataclass(frozen=True)
class MessageGeneratorSpec:
    """Emergency message creation parameters.

    Attributes:
        interval: (min, max) sim-seconds between creations, drawn uniformly.
        size: Message size in bytes.
        source_groups: Group prefixes whose hosts create messages.
        destination_groups: Group prefixes whose hosts receive them.
        response_size: Response size in bytes; 0 means no responses.
        prefix: Message id prefix.
    """
    interval: tuple[float, float]
    size: int
    source_groups: tuple[str, ...]
    destination_groups: tuple[str, ...]
    response_size: int = 0
    prefix: str = "M"


@dataclass(frozen=True)
class Scenario:
    """A fully resolved world description.

    Attributes:
        name: Scenario name.
        sim_time_end: Run length in sim-seconds.
        update_interval: Tick length in sim-seconds.
        rng_seed: World seed for mobility and message generation.
        router: Router used by every host.
        hop_threshold: MaxProp hop threshold.
        map_paths: Map WKT files, relative to base_dir.
        poi_paths: (index, path) pairs of POI files, relative to base_dir.
        interfaces: Declared interfaces in first-reference order.
        groups: Host groups in GroupN order.
        generator: Message generator.
        base_dir: Directory relative paths resolve against.
    """
    name: str
    sim_time_end: float
    update_interval: float
    rng_seed: int
    router: RouterKind
    hop_threshold: int
    map_paths: tuple[str, ...]
    poi_paths: tuple[tuple[int, str], ...]
    interfaces: tuple[InterfaceSpec, ...]
    groups: tuple[GroupSpec, ...]
    generator: MessageGeneratorSpec
    base_dir: str = field(default="", compare=False)

    distance_scale = DISTANCE_SCALE
    time_scale = TIME_SCALE

    @property
    def total_hosts(self) -> int:
        return sum(group.nrof_hosts for group in self.groups)

    def interface(self, name: str) -> InterfaceSpec:
        for spec in self.interfaces:
            if spec.name == name:
                return spec
        raise ConfigurationError(name, "interface is not declared")

    def resolve_path(self, relative: str) -> Path:
        path = Path(relative)
        if path.is_absolute() or not self.base_dir:
            return path
        return Path(self.base_dir) / path

    def poi_path(self, index: int) -> Path:
        for poi_index, relative in self.poi_paths:
            if poi_index == index:
                return self.resolve_path(relative)
        raise ConfigurationError(f"PointsOfInterest.poiFile{index}", "POI file is not declared")


def load_defaults_from_yaml(yaml_path: str | Path) -> ScenarioDefaults:
    """Load scenario defaults from a YAML file.

    Args:
        yaml_path: Path to the YAML defaults file.

    Returns:
        ScenarioDefaults with every value filled.

    Raises:
        FileLoadError: If the file cannot be read.
        ConfigurationError: If a value is malformed.
    """
    yaml_path = Path(yaml_path)
    try:
        with open(yaml_path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise FileLoadError(str(yaml_path), e)

    gen = data.get("generator", {})
    try:
        interval = tuple(float(v) for v in gen.get("interval", [25, 35]))
        generator = GeneratorDefaults(
            interval=(interval[0], interval[1]),
            size=parse_size(str(gen.get("size", "500k"))),
            source_groups=tuple(gen.get("source_groups", ["pcd"])),
            destination_groups=tuple(gen.get("destination_groups", [])),
            response_size=int(gen.get("response_size", 0)),
            prefix=str(gen.get("prefix", "M")),
        )
        return ScenarioDefaults(
            update_interval=float(data.get("update_interval", 1.0)),
            rng_seed=int(data.get("rng_seed", 1)),
            router=str(data.get("router", RouterKind.MAXPROP.value)),
            maxprop_hop_threshold=int(data.get("maxprop_hop_threshold", 3)),
            destination_retries=int(data.get("destination_retries", 20)),
            fit_samples=int(data.get("fit_samples", 50)),
            generator=generator,
        )
    except (TypeError, ValueError, IndexError) as e:
        raise ConfigurationError(str(yaml_path), f"malformed defaults: {e}")


def save_defaults_to_yaml(defaults: ScenarioDefaults, yaml_path: str | Path) -> None:
    """Save scenario defaults in the layout load_defaults_from_yaml reads."""
    gen = defaults.generator
    data = {
        "update_interval": defaults.update_interval,
        "rng_seed": defaults.rng_seed,
        "router": defaults.router,
        "maxprop_hop_threshold": defaults.maxprop_hop_threshold,
        "destination_retries": defaults.destination_retries,
        "fit_samples": defaults.fit_samples,
        "generator": {
            "interval": list(gen.interval),
            "size": str(gen.size),
            "source_groups": list(gen.source_groups),
            "destination_groups": list(gen.destination_groups),
            "response_size": gen.response_size,
            "prefix": gen.prefix,
        },
    }
    with open(Path(yaml_path), "w", encoding="utf-8") as f:
        yaml.dump(data, f, default_flow_style=False, sort_keys=False, allow_unicode=True)


@lru_cache(maxsize=1)
def get_defaults() -> ScenarioDefaults:
    """Project defaults from config/defaults.yaml, loaded once."""
    return load_defaults_from_yaml(DEFAULTS_PATH)


def build_scenario(
    table: SettingsTable,
    defaults: ScenarioDefaults | None = None,
    base_dir: str = ""
) -> Scenario:
    """Build a validated Scenario from parsed settings.

    Defaults fill only the keys the table omits.

    Args:
        table: Parsed settings.
        defaults: Defaults to use; project defaults when None.
        base_dir: Directory relative file references resolve against.

    Returns:
        Scenario matching the table.

    Raises:
        ValidationError: For missing, unparsable or out-of-range values,
            naming the offending key.
        ConfigurationError: If the table declares no host groups.
    """
    defaults = defaults or get_defaults()

    sim_time_end = table.get_float("Scenario.endTime")
    if sim_time_end is None:
        table.require("Scenario.endTime")
    _require_positive(table, "Scenario.endTime", sim_time_end)

    update_interval = table.get_float("Scenario.updateInterval", defaults.update_interval)
    _require_positive(table, "Scenario.updateInterval", update_interval)

    rng_seed = table.get_int("MovementModel.rngSeed", defaults.rng_seed)
    if rng_seed < 0:
        _invalid(table, "MovementModel.rngSeed", "Must be non-negative")
    router = _parse_router(table, defaults)

    hop_threshold = table.get_int("MaxPropRouter.hopThreshold", defaults.maxprop_hop_threshold)
    if hop_threshold < 0:
        _invalid(table, "MaxPropRouter.hopThreshold", "Must be non-negative")

    poi_paths = _parse_poi_paths(table)
    aliases = _parse_aliases(table)

    group_count = _count_groups(table)
    groups = tuple(
        _parse_group(table, n, aliases, {index for index, _ in poi_paths})
        for n in range(1, group_count + 1)
    )

    interface_names: list[str] = []
    for group in groups:
        for name in group.interfaces:
            if name not in interface_names:
                interface_names.append(name)
    interfaces = tuple(_parse_interface(table, name) for name in interface_names)

    map_paths = _parse_map_paths(table)
    if not map_paths and any(group.is_map_based for group in groups):
        raise ValidationError(
            field="MapBasedMovement.mapFile1",
            value=None,
            reason="Required by map-based groups"
        )

    generator = _parse_generator(table, defaults, groups)

    return Scenario(
        name=table.get("Scenario.name", "scenario"),
        sim_time_end=sim_time_end,
        update_interval=update_interval,
        rng_seed=rng_seed,
        router=router,
        hop_threshold=hop_threshold,
        map_paths=map_paths,
        poi_paths=poi_paths,
        interfaces=interfaces,
        groups=groups,
        generator=generator,
        base_dir=base_dir,
    )


def load_scenario(
    path: str | Path,
    overrides: Iterable[str] = (),
    seed: int | None = None,
    defaults: ScenarioDefaults | None = None
) -> Scenario:
    """Load a settings file, apply overrides and build the Scenario.

    Args:
        path: Settings file path.
        overrides: "key=value" strings applied after parsing.
        seed: Optional world seed, applied after the overrides.
        defaults: Defaults to use; project defaults when None.

    Returns:
        Validated Scenario whose relative paths resolve against the file's directory.
    """
    path = Path(path)
    table = apply_overrides(load_settings(path), overrides)
    if seed is not None:
        table = apply_overrides(table, [f"MovementModel.rngSeed={seed}"])
    return build_scenario(table, defaults, base_dir=str(path.parent))


def scenario_to_settings(scenario: Scenario) -> str:
    """Serialize a Scenario as settings text that builds back to an equal Scenario."""
    lines = [
        f"Scenario.name = {scenario.name}",
        f"Scenario.endTime = {scenario.sim_time_end!r}",
        f"Scenario.updateInterval = {scenario.update_interval!r}",
        f"Scenario.nrofHostGroups = {len(scenario.groups)}",
        f"MovementModel.rngSeed = {scenario.rng_seed}",
        f"Group.router = {scenario.router.value}",
        f"MaxPropRouter.hopThreshold = {scenario.hop_threshold}",
    ]
    if scenario.map_paths:
        lines.append(f"MapBasedMovement.nrofMapFiles = {len(scenario.map_paths)}")
        for k, map_path in enumerate(scenario.map_paths, start=1):
            lines.append(f"MapBasedMovement.mapFile{k} = {map_path}")
    for index, poi_path in scenario.poi_paths:
        lines.append(f"PointsOfInterest.poiFile{index} = {poi_path}")

    for spec in scenario.interfaces:
        lines.append(f"{spec.name}.type = {spec.type}")
        lines.append(f"{spec.name}.transmitSpeed = {spec.transmit_speed}")
        lines.append(f"{spec.name}.transmitRange = {spec.transmit_range!r}")

    for group in scenario.groups:
        prefix = f"Group{group.index}"
        lines.append(f"{prefix}.groupID = {group.group_id_prefix}")
        lines.append(f"{prefix}.nrofHosts = {group.nrof_hosts}")
        lines.append(f"{prefix}.movementModel = {group.movement.value}")
        if group.node_location is not None:
            x, y = group.node_location
            lines.append(f"{prefix}.nodeLocation = {x!r}, {y!r}")
        if group.speed is not None:
            low, high = group.speed
            lines.append(f"{prefix}.speed = {low!r}, {high!r}")
        if group.pois:
            pairs = ", ".join(f"{index}, {prob!r}" for index, prob in group.pois)
            lines.append(f"{prefix}.pois = {pairs}")
        lines.append(f"{prefix}.bufferSize = {group.buffer_size}")
        lines.append(f"{prefix}.nrofInterfaces = {len(group.interfaces)}")
        for k, name in enumerate(group.interfaces, start=1):
            lines.append(f"{prefix}.interface{k} = {name}")

    gen = scenario.generator
    lines.extend([
        f"Events1.interval = {gen.interval[0]!r}, {gen.interval[1]!r}",
        f"Events1.size = {gen.size}",
        f"Events1.sourceGroups = {', '.join(gen.source_groups)}",
        f"Events1.destinationGroups = {', '.join(gen.destination_groups)}",
        f"Events1.responseSize = {gen.response_size}",
        f"Events1.prefix = {gen.prefix}",
    ])
    return "\n".join(lines) + "\n"


def _invalid(table: SettingsTable, key: str, reason: str) -> None:
    raise ValidationError(field=key, value=table.get(key), reason=reason, row=table.lines.get(key))


def _require_positive(table: SettingsTable, key: str, value: float | None) -> None:
    if value is None or value <= 0:
        _invalid(table, key, "Must be greater than zero")


def _parse_router(table: SettingsTable, defaults: ScenarioDefaults) -> RouterKind:
    name = table.get("Group.router", defaults.router)
    try:
        return RouterKind(name)
    except ValueError:
        valid = ", ".join(kind.value for kind in RouterKind)
        raise ValidationError(
            field="Group.router",
            value=name,
            reason=f"Must be one of: {valid}",
            row=table.lines.get("Group.router")
        )


def _count_groups(table: SettingsTable) -> int:
    declared = table.get_int("Scenario.nrofHostGroups")
    if declared is not None:
        if declared < 1:
            _invalid(table, "Scenario.nrofHostGroups", "Must be at least 1")
        return declared
    indices = [int(m.group(1)) for key in table.keys() if (m := _GROUP_KEY.match(key))]
    if not indices:
        raise ConfigurationError("Scenario.nrofHostGroups", "no host groups are declared")
    return max(indices)


def _parse_poi_paths(table: SettingsTable) -> tuple[tuple[int, str], ...]:
    pattern = re.compile(r"^PointsOfInterest\.poiFile(\d+)$")
    found = []
    for key in table.keys():
        match = pattern.match(key)
        if match:
            found.append((int(match.group(1)), table.get(key)))
    return tuple(sorted(found))


def _parse_map_paths(table: SettingsTable) -> tuple[str, ...]:
    count = table.get_int("MapBasedMovement.nrofMapFiles")
    if count is None:
        count = 1 if "MapBasedMovement.mapFile1" in table else 0
    return tuple(table.require(f"MapBasedMovement.mapFile{k}") for k in range(1, count + 1))


def _parse_aliases(table: SettingsTable) -> dict[str, str]:
    return {
        key[: -len(".aliasOf")]: table.get(key)
        for key in table.keys()
        if key.endswith(".aliasOf")
    }


def _resolve_interface(table: SettingsTable, key: str, name: str, aliases: dict[str, str]) -> str:
    seen = [name]
    while name in aliases:
        name = aliases[name]
        if name in seen or len(seen) > _MAX_ALIAS_DEPTH:
            raise ValidationError(
                field=key,
                value=seen[0],
                reason=f"Interface alias cycle: {' -> '.join(seen + [name])}",
                row=table.lines.get(key)
            )
        seen.append(name)
    if f"{name}.transmitRange" not in table:
        raise ValidationError(
            field=key,
            value=seen[0],
            reason="Unknown interface (no transmitRange declared)",
            row=table.lines.get(key)
        )
    return name


def _parse_interface(table: SettingsTable, name: str) -> InterfaceSpec:
    type_key = f"{name}.type"
    iface_type = table.get(type_key, "SimpleBroadcastInterface")
    if iface_type not in SUPPORTED_INTERFACE_TYPES:
        _invalid(table, type_key, "Unsupported interface type")

    range_key = f"{name}.transmitRange"
    transmit_range = table.get_float(range_key)
    _require_positive(table, range_key, transmit_range)

    speed_key = f"{name}.transmitSpeed"
    transmit_speed = table.get_size(speed_key)
    if transmit_speed is None:
        table.require(speed_key)
    if transmit_speed <= 0:
        _invalid(table, speed_key, "Must be greater than zero")

    return InterfaceSpec(
        name=name,
        transmit_range=transmit_range,
        transmit_speed=transmit_speed,
        type=iface_type,
    )


def _parse_group(
    table: SettingsTable,
    n: int,
    aliases: dict[str, str],
    poi_indices: set[int]
) -> GroupSpec:
    """Parse GroupN.* keys, falling back to Group.* defaults."""

    def key_for(name: str) -> str:
        specific = f"Group{n}.{name}"
        if specific in table or f"Group.{name}" not in table:
            return specific
        return f"Group.{name}"

    id_key = key_for("groupID")
    group_id = table.require(id_key)

    hosts_key = key_for("nrofHosts")
    nrof_hosts = table.get_int(hosts_key)
    if nrof_hosts is None:
        table.require(hosts_key)
    if nrof_hosts < 1:
        _invalid(table, hosts_key, "Must be at least 1")

    model_key = key_for("movementModel")
    model_name = table.require(model_key)
    try:
        movement = MovementKind(model_name)
    except ValueError:
        _invalid(table, model_key, "unsupported model")

    buffer_key = key_for("bufferSize")
    buffer_size = table.get_size(buffer_key)
    if buffer_size is None:
        table.require(buffer_key)
    if buffer_size <= 0:
        _invalid(table, buffer_key, "Must be greater than zero")

    nrof_key = key_for("nrofInterfaces")
    nrof_interfaces = table.get_int(nrof_key, 1)
    if nrof_interfaces < 1:
        _invalid(table, nrof_key, "Must be at least 1")
    interfaces = []
    for k in range(1, nrof_interfaces + 1):
        iface_key = key_for(f"interface{k}")
        canonical = _resolve_interface(table, iface_key, table.require(iface_key), aliases)
        if canonical not in interfaces:
            interfaces.append(canonical)

    location_key = key_for("nodeLocation")
    node_location = table.get_coord(location_key)
    speed_key = key_for("speed")
    pois_key = key_for("pois")
    speed = None
    pois: tuple[tuple[int, float], ...] = ()

    if movement is MovementKind.STATIONARY:
        if node_location is None:
            raise ValidationError(
                field=location_key,
                value=None,
                reason="Stationary groups need a node location"
            )
    else:
        if node_location is not None:
            _invalid(table, location_key, "Map-based groups do not take a node location")
        speed = table.get_range(speed_key)
        if speed is None:
            table.require(speed_key)
        if speed[0] < 0:
            _invalid(table, speed_key, "Speeds must be non-negative")
        pois = _parse_pois(table, pois_key, poi_indices)

    return GroupSpec(
        index=n,
        group_id_prefix=group_id,
        nrof_hosts=nrof_hosts,
        movement=movement,
        buffer_size=buffer_size,
        interfaces=tuple(interfaces),
        node_location=node_location,
        speed=speed,
        pois=pois,
    )


def _parse_pois(table: SettingsTable, key: str, poi_indices: set[int]) -> tuple[tuple[int, float], ...]:
    numbers = table.get_numbers(key)
    if not numbers:
        return ()
    if len(numbers) % 2:
        _invalid(table, key, "Expected 'fileIndex, probability' pairs")
    pairs = []
    for raw_index, prob in zip(numbers[0::2], numbers[1::2]):
        index = int(raw_index)
        if index != raw_index or index not in poi_indices:
            _invalid(table, key, f"POI file {raw_index:g} is not declared")
        if not 0.0 <= prob <= 1.0:
            _invalid(table, key, "Probabilities must be within [0, 1]")
        pairs.append((index, prob))
    if sum(prob for _, prob in pairs) > 1.0 + 1e-9:
        _invalid(table, key, "Probabilities must sum to at most 1")
    return tuple(pairs)


def _parse_generator(
    table: SettingsTable,
    defaults: ScenarioDefaults,
    groups: tuple[GroupSpec, ...]
) -> MessageGeneratorSpec:
    gen_defaults = defaults.generator
    interval = table.get_range("Events1.interval") or gen_defaults.interval
    if interval[0] <= 0:
        _invalid(table, "Events1.interval", "Creation interval must be positive")

    size = table.get_size("Events1.size", gen_defaults.size)
    if size <= 0:
        _invalid(table, "Events1.size", "Must be greater than zero")

    response_size = table.get_size("Events1.responseSize", gen_defaults.response_size)

    known_prefixes = {group.group_id_prefix for group in groups}
    sources = tuple(table.get_list("Events1.sourceGroups") or gen_defaults.source_groups)
    destinations = tuple(table.get_list("Events1.destinationGroups") or gen_defaults.destination_groups)
    for key, prefixes in (("Events1.sourceGroups", sources), ("Events1.destinationGroups", destinations)):
        if not prefixes:
            raise ValidationError(field=key, value=list(prefixes), reason="Must name at least one group")
        unknown = [p for p in prefixes if p not in known_prefixes]
        if unknown:
            raise ValidationError(
                field=key,
                value=list(prefixes),
                reason=f"Unknown group prefix(es): {', '.join(unknown)}",
                row=table.lines.get(key)
            )
    overlap = set(sources) & set(destinations)
    if overlap:
        raise ValidationError(
            field="Events1.destinationGroups",
            value=list(destinations),
            reason=f"Source and destination groups overlap: {', '.join(sorted(overlap))}",
            row=table.lines.get("Events1.destinationGroups")
        )

    return MessageGeneratorSpec(
        interval=interval,
        size=size,
        source_groups=sources,
        destination_groups=destinations,
        response_size=response_size,
        prefix=table.get("Events1.prefix", gen_defaults.prefix),
    )
