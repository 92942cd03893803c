# Remote-Sea Opportunistic Network Simulator - Core Package
# Version: 1.0.0

"""
Discrete-event simulator for store-carry-forward networks in a remote-sea
emergency: debris, ships, ocean moors and coastal guards exchanging
emergency messages under Epidemic or MaxProp routing over a WKT lane map.
"""

__version__ = "1.0.0"

from .errors import (
    SimulationError,
    ValidationError,
    ParseError,
    ConfigurationError,
    FileLoadError,
    EventOrderError,
    SweepRunError,
)

from .settings import (
    SettingsTable,
    parse_settings,
    load_settings,
    apply_overrides,
    parse_size,
    real_to_sim,
)

from .scenario import (
    InterfaceSpec,
    GroupSpec,
    MessageGeneratorSpec,
    Scenario,
    ScenarioDefaults,
    MovementKind,
    RouterKind,
    build_scenario,
    load_scenario,
    scenario_to_settings,
    load_defaults_from_yaml,
    save_defaults_to_yaml,
)

from .geo_map import (
    Geometry,
    MapGraph,
    PoiSet,
    PathResult,
    parse_wkt,
    build_graph,
    shortest_path,
    snap_to_vertex,
    load_map,
    load_pois,
)

from .mobility import (
    MovementState,
    initial_placement,
    choose_destination,
    step,
)

from .messages import (
    Message,
    MessageBuffer,
)

from .events import (
    EventKind,
    SimEvent,
    format_event,
)

from .routing import (
    MeetingProbabilities,
    EpidemicRouter,
    MaxPropRouter,
    buffer_make_room,
    epidemic_on_connection_up,
    maxprop_update_probs,
    maxprop_path_cost,
    maxprop_queue_order,
    propagate_acks,
)

from .world import (
    Host,
    Connection,
    World,
    build_world,
    detect_connections,
    advance,
    transfer_time,
    create_message,
    run_simulation,
)

from .metrics import (
    MessageStatsReport,
    MetricsAccumulator,
    finalize,
    render_report,
    sweep_csv_row,
    polyfit2,
)

from .batch import (
    SweepPlan,
    run_single,
    run_sweep,
    fit_trend,
)
