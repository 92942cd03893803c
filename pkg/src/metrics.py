# Message statistics: event accumulation, the end-of-run report and CSV output.
# Version: 1.0.0
# Provides the accumulator listener, report finalization/rendering, sweep CSV writers and the quadratic trend fit.

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from .errors import EventOrderError, FileLoadError, ValidationError
from .events import EventKind, SimEvent


logger = logging.getLogger(__name__)

NAN = float("nan")

# Column order of the sweep tables after the run index and the swept value
REPORT_COLUMNS: list[str] = [
    "created", "started", "relayed", "aborted", "dropped", "removed", "delivered",
    "delivery_prob", "response_prob", "overhead_ratio", "latency_avg", "latency_med",
    "hopcount_avg", "hopcount_med", "buffertime_avg", "buffertime_med",
]

_COUNT_FIELDS = {"created", "started", "relayed", "aborted", "dropped", "removed", "delivered", "hopcount_med"}


@dataclass(frozen=True)
class MessageStatsReport:
    """End-of-run message statistics, fields in report order."""
    sim_time: float
    created: int
    started: int
    relayed: int
    aborted: int
    dropped: int
    removed: int
    delivered: int
    delivery_prob: float
    response_prob: float
    overhead_ratio: float
    latency_avg: float
    latency_med: float
    hopcount_avg: float
    hopcount_med: int | None
    buffertime_avg: float
    buffertime_med: float
    rtt_avg: float
    rtt_med: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class MetricsAccumulator:
    """Event listener keeping counters and samples for one run.

    Raises EventOrderError when an event is older than the previous one.
    """
    created: int = 0
    started: int = 0
    relayed: int = 0
    aborted: int = 0
    dropped: int = 0
    removed: int = 0
    delivered: int = 0
    responses_requested: int = 0
    responses_delivered: int = 0
    latencies: list[float] = field(default_factory=list)
    hopcounts: list[int] = field(default_factory=list)
    buffer_times: list[float] = field(default_factory=list)
    rtts: list[float] = field(default_factory=list)
    last_time: float = -math.inf
    created_at: dict[str, float] = field(default_factory=dict)

    def __call__(self, event: SimEvent) -> None:
        self.record(event)

    def record(self, event: SimEvent) -> None:
        if event.time < self.last_time:
            raise EventOrderError(self.last_time, event.time, event.kind.value)
        self.last_time = event.time

        kind = event.kind
        if kind is EventKind.MESSAGE_CREATED:
            self.created += 1
            self.created_at[event.message_id] = event.time
        elif kind is EventKind.TRANSFER_STARTED:
            self.started += 1
        elif kind is EventKind.TRANSFER_RELAYED:
            self.relayed += 1
        elif kind is EventKind.TRANSFER_ABORTED:
            self.aborted += 1
        elif kind is EventKind.MESSAGE_DROPPED:
            self.dropped += 1
            self.buffer_times.append(event.residency)
        elif kind is EventKind.MESSAGE_REMOVED:
            self.removed += 1
            self.buffer_times.append(event.residency)
        elif kind is EventKind.MESSAGE_DELIVERED:
            self.delivered += 1
            created_at = self.created_at.get(event.message_id, event.created_at)
            self.latencies.append(event.time - created_at)
            self.hopcounts.append(event.hop_count)


def _mean(samples: Sequence[float]) -> float:
    return float(np.mean(samples)) if len(samples) else NAN


def _median(samples: Sequence[float]) -> float:
    return float(np.median(samples)) if len(samples) else NAN


def _int_median(samples: Sequence[int]) -> int | None:
    """Upper-middle element, so the median of integers stays an integer."""
    if not samples:
        return None
    ordered = sorted(samples)
    return int(ordered[len(ordered) // 2])


def finalize(accumulator: MetricsAccumulator, sim_time: float) -> MessageStatsReport:
    """Compute ratios, averages and medians from an accumulator."""
    acc = accumulator
    delivery_prob = acc.delivered / acc.created if acc.created else 0.0
    response_prob = (
        acc.responses_delivered / acc.responses_requested if acc.responses_requested else 0.0
    )
    overhead_ratio = (acc.relayed - acc.delivered) / acc.delivered if acc.delivered else NAN
    return MessageStatsReport(
        sim_time=sim_time,
        created=acc.created,
        started=acc.started,
        relayed=acc.relayed,
        aborted=acc.aborted,
        dropped=acc.dropped,
        removed=acc.removed,
        delivered=acc.delivered,
        delivery_prob=delivery_prob,
        response_prob=response_prob,
        overhead_ratio=overhead_ratio,
        latency_avg=_mean(acc.latencies),
        latency_med=_median(acc.latencies),
        hopcount_avg=_mean(acc.hopcounts),
        hopcount_med=_int_median(acc.hopcounts),
        buffertime_avg=_mean(acc.buffer_times),
        buffertime_med=_median(acc.buffer_times),
        rtt_avg=_mean(acc.rtts),
        rtt_med=_median(acc.rtts),
    )


def _format_value(name: str, value: Any) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NaN"
    if name in _COUNT_FIELDS:
        return str(int(value))
    return f"{value:.4f}"


def render_report(report: MessageStatsReport) -> str:
    """The report as `name: value` lines in field order."""
    lines = [
        f"{f.name}: {_format_value(f.name, getattr(report, f.name))}"
        for f in fields(report)
    ]
    return "\n".join(lines) + "\n"


def swept_column_name(param: str) -> str:
    """Column header for a swept settings key: "range" for transmit ranges."""
    if param.endswith("transmitRange"):
        return "range"
    return param.rsplit(".", 1)[-1]


def sweep_csv_row(
    value: float,
    report: MessageStatsReport,
    run: int = 1,
    column: str = "range",
    seed: int | None = None
) -> dict[str, Any]:
    """One sweep table row: run index, swept value, report columns, then seed."""
    row: dict[str, Any] = {"run": run, column: value}
    data = report.to_dict()
    for name in REPORT_COLUMNS:
        row[name] = NAN if data[name] is None else data[name]
    if seed is not None:
        row["seed"] = seed
    return row


def _write_frame(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, na_rep="NaN")
    except OSError as e:
        raise FileLoadError(str(path), e)
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path


def write_sweep_csv(rows: Sequence[dict[str, Any]], path: str | Path, column: str = "range") -> Path:
    """Per-router sweep table; an empty sweep writes only the header."""
    columns = ["run", column, *REPORT_COLUMNS, "seed"]
    return _write_frame(pd.DataFrame(list(rows), columns=columns), path)


def write_combined_csv(
    rows_by_router: dict[str, Sequence[dict[str, Any]]],
    path: str | Path,
    column: str = "range"
) -> Path:
    """All routers in one table with a leading router column."""
    frames = []
    for router, rows in rows_by_router.items():
        frame = pd.DataFrame(list(rows), columns=["run", column, *REPORT_COLUMNS, "seed"])
        frame.insert(0, "router", router)
        frames.append(frame)
    combined = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["router", "run", column, *REPORT_COLUMNS, "seed"]
    )
    return _write_frame(combined, path)


def summarize_sweep(rows: Sequence[dict[str, Any]], column: str = "range") -> pd.DataFrame:
    """Mean and sample standard deviation of every report column per swept value."""
    frame = pd.DataFrame(list(rows), columns=["run", column, *REPORT_COLUMNS, "seed"])
    grouped = frame.groupby(column, sort=True)[REPORT_COLUMNS].agg(["mean", "std"])
    grouped.columns = [f"{name}_{stat}" for name, stat in grouped.columns]
    summary = grouped.reset_index()
    summary.insert(1, "seeds", frame.groupby(column, sort=True).size().to_numpy())
    return summary


def write_summary_csv(
    rows_by_router: dict[str, Sequence[dict[str, Any]]],
    path: str | Path,
    column: str = "range"
) -> Path:
    frames = []
    for router, rows in rows_by_router.items():
        summary = summarize_sweep(rows, column)
        summary.insert(0, "router", router)
        frames.append(summary)
    return _write_frame(pd.concat(frames, ignore_index=True), path)


def polyfit2(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares quadratic a + b*x + c*x**2.

    Raises:
        ValidationError: If xs and ys differ in length or xs has fewer than
            three distinct values.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise ValidationError(field="ys", value=len(y), reason=f"Expected {len(x)} values")
    if np.unique(x).size < 3:
        raise ValidationError(
            field="xs",
            value=np.unique(x).size,
            reason="A quadratic fit needs at least 3 distinct x values"
        )
    a, b, c = np.polynomial.polynomial.polyfit(x, y, 2)
    return float(a), float(b), float(c)
