# Batch runs: single scenarios, parameter sweeps and trend fitting.
# Version: 1.0.0
# Drives the simulator for one config, for a router x value x seed grid, and fits quadratic trends to sweep CSVs.

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import pandas as pd
import yaml

from .errors import FileLoadError, SimulationError, SweepRunError, ValidationError
from .events import EventLogWriter, open_event_log
from .metrics import (
    MessageStatsReport,
    polyfit2,
    render_report,
    sweep_csv_row,
    swept_column_name,
    write_combined_csv,
    write_summary_csv,
    write_sweep_csv,
)
from .scenario import RouterKind, get_defaults, load_scenario
from .world import run_simulation


logger = logging.getLogger(__name__)

ROUTER_SLUGS: dict[RouterKind, str] = {
    RouterKind.EPIDEMIC: "epidemic",
    RouterKind.MAXPROP: "maxprop",
}


@dataclass(frozen=True)
class SweepPlan:
    """A router x value x seed grid over one settings key.

    Attributes:
        config: Base settings file.
        param: Swept dotted settings key.
        start: First value.
        stop: Last value (inclusive when reached by whole steps).
        step: Increment.
        routers: Routers to run.
        seeds: World seeds.
        out_dir: Directory receiving the CSVs.
        overrides: "key=value" overrides applied before the swept value.
        workers: Parallel worker processes; 1 runs in-process.
    """
    config: Path
    param: str
    start: float
    stop: float
    step: float
    routers: tuple[RouterKind, ...] = (RouterKind.EPIDEMIC, RouterKind.MAXPROP)
    seeds: tuple[int, ...] = (1,)
    out_dir: Path = Path("out")
    overrides: tuple[str, ...] = ()
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ValidationError(field="--step", value=self.step, reason="Must be greater than zero")
        if self.start > self.stop:
            raise ValidationError(field="--from", value=self.start, reason=f"Must not exceed --to ({self.stop})")
        if not self.routers:
            raise ValidationError(field="--router", value=[], reason="At least one router is required")
        if not self.seeds:
            raise ValidationError(field="--seeds", value=[], reason="At least one seed is required")
        if self.workers < 1:
            raise ValidationError(field="--workers", value=self.workers, reason="Must be at least 1")

    def values(self) -> list[float]:
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9))
        return [self.start + k * self.step for k in range(count + 1)]

    @property
    def column(self) -> str:
        return swept_column_name(self.param)


@dataclass(frozen=True)
class RunOutcome:
    """Result of run_single."""
    report: MessageStatsReport
    text: str
    report_path: Path | None = None
    event_log_path: Path | None = None


@dataclass
class SweepOutcome:
    """CSV files and rows produced by run_sweep."""
    rows: dict[str, list[dict[str, Any]]] = field(default_factory=dict)
    paths: dict[str, Path] = field(default_factory=dict)


@dataclass(frozen=True)
class FitResult:
    coefficients: tuple[float, float, float]
    curve: pd.DataFrame
    curve_path: Path
    coefficients_path: Path


def format_value(value: float) -> str:
    """Settings text for a swept value: integral values without a decimal point."""
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def run_single(
    config: str | Path,
    overrides: Sequence[str] = (),
    seed: int | None = None,
    report_path: str | Path | None = None,
    event_log_path: str | Path | None = None
) -> RunOutcome:
    """Run one scenario and optionally write its report and event log.

    Args:
        config: Settings file.
        overrides: "key=value" strings applied after parsing the file.
        seed: Optional world seed.
        report_path: Where to write the report text.
        event_log_path: Where to write one line per event.

    Returns:
        RunOutcome with the report and its rendered text.
    """
    scenario = load_scenario(config, overrides, seed)
    listeners = []
    log_stream = None
    if event_log_path is not None:
        log_stream = open_event_log(event_log_path)
        listeners.append(EventLogWriter(log_stream))
    try:
        report = run_simulation(scenario, listeners)
    finally:
        if log_stream is not None:
            log_stream.close()

    text = render_report(report)
    written = None
    if report_path is not None:
        written = Path(report_path)
        try:
            written.parent.mkdir(parents=True, exist_ok=True)
            written.write_text(text, encoding="utf-8")
        except OSError as e:
            raise FileLoadError(str(written), e)
        logger.info(f"Wrote report {written}")
    return RunOutcome(
        report=report,
        text=text,
        report_path=written,
        event_log_path=Path(event_log_path) if event_log_path is not None else None,
    )


def _cell_overrides(plan: SweepPlan, value: float, router: RouterKind) -> list[str]:
    return [
        *plan.overrides,
        f"{plan.param}={format_value(value)}",
        f"Group.router={router.value}",
    ]


def _run_cell(config: Path, overrides: list[str], seed: int) -> MessageStatsReport:
    return run_simulation(load_scenario(config, overrides, seed))


def _run_cell_isolated(args: tuple[Path, list[str], int]) -> tuple[MessageStatsReport | None, str | None]:
    """Worker entry point; errors come back as text since they may not pickle."""
    config, overrides, seed = args
    try:
        return _run_cell(config, overrides, seed), None
    except (SimulationError, OSError, ValueError) as e:
        return None, f"{type(e).__name__}: {e}"


def run_sweep(plan: SweepPlan) -> SweepOutcome:
    """Run every (router, value, seed) cell and write the sweep CSVs.

    Writes <router>_sweep.csv per router and combined_sweep.csv; with more
    than one seed also summary.csv. Rows are ordered by value, then seed,
    whether cells run in-process or on a worker pool.

    Raises:
        SweepRunError: Naming the first failing cell.
    """
    cells = [
        (router, value, seed)
        for router in plan.routers
        for value in plan.values()
        for seed in plan.seeds
    ]
    logger.info(
        f"Sweeping {plan.param} over {len(plan.values())} values x {len(plan.routers)} routers "
        f"x {len(plan.seeds)} seeds = {len(cells)} runs"
    )

    reports: list[MessageStatsReport] = []
    if plan.workers == 1:
        for router, value, seed in cells:
            logger.info(f"Run {plan.param}={format_value(value)} router={router.value} seed={seed}")
            try:
                reports.append(_run_cell(plan.config, _cell_overrides(plan, value, router), seed))
            except (SimulationError, OSError, ValueError) as e:
                raise SweepRunError(plan.param, value, router.value, seed, e)
    else:
        jobs = [(plan.config, _cell_overrides(plan, value, router), seed) for router, value, seed in cells]
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            for (router, value, seed), (report, error) in zip(cells, pool.map(_run_cell_isolated, jobs)):
                if error is not None:
                    raise SweepRunError(plan.param, value, router.value, seed, RuntimeError(error))
                logger.info(f"Done {plan.param}={format_value(value)} router={router.value} seed={seed}")
                reports.append(report)

    outcome = SweepOutcome()
    column = plan.column
    for (router, value, seed), report in zip(cells, reports):
        rows = outcome.rows.setdefault(router.value, [])
        rows.append(sweep_csv_row(value, report, run=len(rows) + 1, column=column, seed=seed))

    for router in plan.routers:
        rows = outcome.rows.setdefault(router.value, [])
        outcome.paths[router.value] = write_sweep_csv(
            rows, plan.out_dir / f"{ROUTER_SLUGS[router]}_sweep.csv", column
        )
    outcome.paths["combined"] = write_combined_csv(
        outcome.rows, plan.out_dir / "combined_sweep.csv", column
    )
    if len(plan.seeds) > 1:
        outcome.paths["summary"] = write_summary_csv(
            outcome.rows, plan.out_dir / "summary.csv", column
        )
    return outcome


def fit_trend(
    csv_path: str | Path,
    x: str,
    y: str,
    out_path: str | Path,
    samples: int | None = None
) -> FitResult:
    """Fit y = a + b*x + c*x**2 to two CSV columns and write the curve.

    Rows where either column is NaN are skipped. The fitted curve is
    sampled evenly over the x range into out_path; the coefficients go
    beside it with suffix .coeffs.yaml.

    Raises:
        FileLoadError: If the CSV cannot be read or the outputs written.
        ValidationError: If a column is missing or fewer than 3 distinct x values remain.
    """
    csv_path = Path(csv_path)
    out_path = Path(out_path)
    samples = samples or get_defaults().fit_samples
    try:
        frame = pd.read_csv(csv_path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise FileLoadError(str(csv_path), e)

    for column in (x, y):
        if column not in frame.columns:
            raise ValidationError(
                field=column,
                value=list(frame.columns),
                reason=f"Column not found in {csv_path.name}"
            )
    data = frame[[x, y]].apply(pd.to_numeric, errors="coerce").dropna()
    if len(data) < len(frame):
        logger.warning(f"Skipping {len(frame) - len(data)} rows with missing {x} or {y}")
    if len(data) < 3:
        raise ValidationError(field="rows", value=len(data), reason="A quadratic fit needs at least 3 rows")

    a, b, c = polyfit2(data[x].to_numpy(), data[y].to_numpy())
    xs = np.linspace(data[x].min(), data[x].max(), samples)
    curve = pd.DataFrame({x: xs, f"{y}_fit": a + b * xs + c * xs ** 2})

    coefficients_path = out_path.with_suffix(".coeffs.yaml")
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        curve.to_csv(out_path, index=False)
        with open(coefficients_path, "w", encoding="utf-8") as f:
            yaml.safe_dump(
                {"x": x, "y": y, "rows": int(len(data)), "a": a, "b": b, "c": c},
                f,
                sort_keys=False,
            )
    except OSError as e:
        raise FileLoadError(str(out_path), e)
    logger.info(f"Fitted {y} ~ {x}: a={a:.6g}, b={b:.6g}, c={c:.6g}")
    return FitResult(
        coefficients=(a, b, c),
        curve=curve,
        curve_path=out_path,
        coefficients_path=coefficients_path,
    )


def parse_seeds(raw: str | Iterable[int]) -> tuple[int, ...]:
    """Seeds from "1,2,3" or an iterable of ints."""
    if isinstance(raw, str):
        try:
            return tuple(int(part) for part in raw.split(",") if part.strip())
        except ValueError:
            raise ValidationError(field="--seeds", value=raw, reason="Expected comma-separated integers")
    return tuple(int(seed) for seed in raw)
