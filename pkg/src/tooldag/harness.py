"""Experiment grid expansion, sweep execution and report folding."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

from statsmodels.stats.proportion import proportion_confint

from .agents import AgentFactory, AgentSpec, EpisodeTrace, run_agent
from .classifier import FailureType, relabel, summarize_failures
from .errors import ConfigError
from .executor import CallRecord, EpisodeOptions
from .taskgen import GenConfig, generate_task

log = logging.getLogger(__name__)

MISSING = "--"


class Connectivity(str, Enum):
    NO_EXTRA = "NoExtra"
    CONNECTED = "Connected"
    DISCONNECTED = "Disconnected"
    HALF = "HalfAndHalf"


@dataclass
class SweepConfig:
    core_sizes: list[int] = field(default_factory=lambda: [5, 10, 20])
    irrelevant_counts: list[int] = field(default_factory=lambda: [0, 10, 20, 40])
    connectivity: list[Connectivity] = field(
        default_factory=lambda: [Connectivity.CONNECTED, Connectivity.DISCONNECTED, Connectivity.HALF]
    )
    trials: int = 5
    mitigation: bool = False
    agent: AgentSpec = field(default_factory=AgentSpec)
    cap_multiplier: int = 2
    master_seed: int = 0
    depths: dict[int, list[int]] | None = None  # explicit per-core override
    extra_free_inputs: int = 0
    workers: int = 1
    exclude_infra_failures: bool = False

    def __post_init__(self) -> None:
        self.connectivity = [Connectivity(c) for c in self.connectivity]
        self.agent = AgentSpec.parse(self.agent)
        if self.depths is not None:
            self.depths = {int(k): list(v) for k, v in self.depths.items()}
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if any(k > 0 for k in self.irrelevant_counts) and not self.connectivity:
            raise ConfigError("connectivity must be nonempty when irrelevant counts are > 0")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SweepConfig:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown sweep config keys: {sorted(unknown)}")
        return cls(**data)


def depth_values(n_core: int) -> list[int]:
    """Every depth up to ``n_core - 1`` for small graphs, 10% steps from 1 above ten."""
    if n_core <= 10:
        return list(range(1, n_core))
    return list(range(1, n_core, max(1, n_core // 10)))


@dataclass(frozen=True)
class Cell:
    n_core: int
    depth: int
    connectivity: Connectivity
    n_irrelevant: int

    def split(self) -> tuple[int, int]:
        k = self.n_irrelevant
        if self.connectivity is Connectivity.CONNECTED:
            return k, 0
        if self.connectivity is Connectivity.DISCONNECTED:
            return 0, k
        if self.connectivity is Connectivity.HALF:
            if k % 2:
                raise ConfigError(f"HalfAndHalf needs an even irrelevant count, got {k}")
            return k // 2, k // 2
        return 0, 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_core": self.n_core,
            "depth": self.depth,
            "connectivity": self.connectivity.value,
            "n_irrelevant": self.n_irrelevant,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Cell:
        return cls(data["n_core"], data["depth"], Connectivity(data["connectivity"]), data["n_irrelevant"])


@dataclass(frozen=True)
class EpisodeSpec:
    cell: Cell
    trial: int
    gen: GenConfig
    options: EpisodeOptions
    seed: int

    @property
    def episode_id(self) -> str:
        c = self.cell
        return f"c{c.n_core}-d{c.depth}-{c.connectivity.value}-k{c.n_irrelevant}-t{self.trial}"


def derive_seed(master_seed: int, cell: Cell, trial: int) -> int:
    key = json.dumps([master_seed, cell.to_dict(), trial], sort_keys=True)
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")


def expand_sweep(cfg: SweepConfig) -> list[EpisodeSpec]:
    specs = []
    for n_core in cfg.core_sizes:
        depths = (cfg.depths or {}).get(n_core) or depth_values(n_core)
        for depth in depths:
            cells = []
            for k in cfg.irrelevant_counts:
                if k == 0:
                    cells.append(Cell(n_core, depth, Connectivity.NO_EXTRA, 0))
                else:
                    cells += [Cell(n_core, depth, c, k) for c in cfg.connectivity if c is not Connectivity.NO_EXTRA]
            for cell in cells:
                n_conn, n_dis = cell.split()
                opts = EpisodeOptions(mitigation=cfg.mitigation, call_cap=cfg.cap_multiplier * n_core)
                for trial in range(cfg.trials):
                    seed = derive_seed(cfg.master_seed, cell, trial)
                    gen = GenConfig(n_core, depth, n_conn, n_dis, cfg.extra_free_inputs, seed)
                    specs.append(EpisodeSpec(cell, trial, gen, opts, seed))
    return specs


def run_episode(spec: EpisodeSpec, factory: AgentFactory) -> EpisodeTrace:
    task = generate_task(spec.gen)
    agent = factory(task, spec.seed)
    trace = run_agent(agent, task, spec.options, episode_id=spec.episode_id)
    trace.cell = spec.cell.to_dict()
    if trace.infra_error:
        log.warning("episode %s: %s", spec.episode_id, trace.infra_error)
    return trace


# --- aggregation ------------------------------------------------------------


@dataclass
class Metrics:
    episodes: int
    successes: int
    success_rate: float
    ci_low: float
    ci_high: float
    acs_success: float | None
    acs_failure: float | None
    failures: dict[str, Any]
    excluded: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "episodes": self.episodes,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "ci95": [self.ci_low, self.ci_high],
            "acs_success": self.acs_success,
            "acs_failure": self.acs_failure,
            "failures": self.failures,
            "excluded_infra": self.excluded,
        }


def _mean(xs: list[int]) -> float | None:
    return sum(xs) / len(xs) if xs else None


def compute_metrics(traces: list[EpisodeTrace], exclude_infra: bool = False) -> Metrics:
    counted = [t for t in traces if not (exclude_infra and t.infra_error)]
    n = len(counted)
    wins = sum(t.success for t in counted)
    if n:
        low, high = proportion_confint(wins, n, alpha=0.05, method="wilson")
    else:
        low = high = 0.0
    return Metrics(
        episodes=n,
        successes=wins,
        success_rate=wins / n if n else 0.0,
        ci_low=float(low),
        ci_high=float(high),
        acs_success=_mean([t.calls_made for t in counted if t.success]),
        acs_failure=_mean([t.calls_made for t in counted if not t.success]),
        failures=summarize_failures(counted).to_dict(),
        excluded=len(traces) - n,
    )


@dataclass
class SweepReport:
    cells: list[tuple[Cell, Metrics]]
    overall: Metrics
    marginals: dict[str, dict[str, Metrics]]
    traces: list[EpisodeTrace] = field(default_factory=list, repr=False)

    @property
    def n_episodes(self) -> int:
        return len(self.traces)

    def cell(self, **match: Any) -> list[tuple[Cell, Metrics]]:
        out = []
        for cell, metrics in self.cells:
            d = cell.to_dict()
            if all(d[k] == (v.value if isinstance(v, Enum) else v) for k, v in match.items()):
                out.append((cell, metrics))
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "overall": self.overall.to_dict(),
            "marginals": {
                axis: {key: m.to_dict() for key, m in groups.items()} for axis, groups in self.marginals.items()
            },
            "cells": [{**c.to_dict(), **m.to_dict()} for c, m in self.cells],
        }


def fold_traces(traces: Iterable[EpisodeTrace], exclude_infra: bool = False) -> SweepReport:
    """Aggregate traces per cell and along the core / connectivity / depth axes.

    Cells and marginal keys keep first-seen order, so folding the same trace
    sequence always gives the same report.
    """
    traces = list(traces)
    by_cell: dict[Cell, list[EpisodeTrace]] = {}
    axes: dict[str, dict[str, list[EpisodeTrace]]] = {
        "n_core": {},
        "connectivity": {},
        "n_irrelevant": {},
        "depth": {},
    }
    for t in traces:
        cell = Cell.from_dict(t.cell)
        by_cell.setdefault(cell, []).append(t)
        axes["n_core"].setdefault(str(cell.n_core), []).append(t)
        axes["connectivity"].setdefault(cell.connectivity.value, []).append(t)
        axes["n_irrelevant"].setdefault(str(cell.n_irrelevant), []).append(t)
        axes["depth"].setdefault(f"{cell.n_core}/{cell.depth}", []).append(t)
    return SweepReport(
        cells=[(c, compute_metrics(ts, exclude_infra)) for c, ts in by_cell.items()],
        overall=compute_metrics(traces, exclude_infra),
        marginals={
            axis: {k: compute_metrics(ts, exclude_infra) for k, ts in groups.items()}
            for axis, groups in axes.items()
        },
        traces=traces,
    )


def run_sweep(cfg: SweepConfig, out_dir: str | Path | None = None) -> SweepReport:
    specs = expand_sweep(cfg)
    factory = AgentFactory(cfg.agent)
    try:
        if cfg.workers > 1:
            with ThreadPoolExecutor(cfg.workers) as pool:
                traces = list(pool.map(lambda s: run_episode(s, factory), specs))
        else:
            traces = [run_episode(s, factory) for s in specs]
    finally:
        if factory.client is not None:
            factory.client.close()
    report = fold_traces(traces, cfg.exclude_infra_failures)
    if out_dir is not None:
        write_traces(traces, out_dir)
        write_report(report, out_dir)
    return report


# --- persistence ------------------------------------------------------------

EPISODES_FILE = "episodes.jsonl"
CALLS_FILE = "calls.jsonl"

CSV_COLUMNS = [
    "n_core",
    "depth",
    "connectivity",
    "n_irrelevant",
    "episodes",
    "success_rate",
    "ci95_low",
    "ci95_high",
    "acs_success",
    "acs_failure",
    "total_errors",
    *(f"pct_{t.value}" for t in FailureType),
]


def _fmt(x: float | None) -> str:
    return MISSING if x is None else f"{x:.4f}"


def report_csv(report: SweepReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for cell, m in report.cells:
        pct = m.failures["percent"]
        writer.writerow(
            [
                cell.n_core,
                cell.depth,
                cell.connectivity.value,
                cell.n_irrelevant,
                m.episodes,
                _fmt(m.success_rate),
                _fmt(m.ci_low),
                _fmt(m.ci_high),
                _fmt(m.acs_success),
                _fmt(m.acs_failure),
                m.failures["total_errors"],
                *(_fmt(pct[t.value]) for t in FailureType),
            ]
        )
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc


def write_report(report: SweepReport, out_dir: str | Path, formats: Iterable[str] = ("csv", "json")) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        written.append(out / "report.csv")
        _write(written[-1], report_csv(report))
    if "json" in formats:
        written.append(out / "summary.json")
        _write(written[-1], json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return written


def write_traces(traces: Iterable[EpisodeTrace], out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    episodes, calls = [], []
    for t in traces:
        episodes.append(json.dumps(t.summary(), sort_keys=True))
        calls += [json.dumps(line, sort_keys=True) for line in t.call_lines()]
    _write(out / EPISODES_FILE, "".join(line + "\n" for line in episodes))
    _write(out / CALLS_FILE, "".join(line + "\n" for line in calls))


def read_traces(trace_dir: str | Path) -> list[EpisodeTrace]:
    base = Path(trace_dir)
    records: dict[str, list[CallRecord]] = {}
    calls_path = base / CALLS_FILE
    if calls_path.exists():
        for line in calls_path.read_text().splitlines():
            data = json.loads(line)
            records.setdefault(data.pop("episode"), []).append(CallRecord.from_dict(data))
    traces = []
    for line in (base / EPISODES_FILE).read_text().splitlines():
        data = json.loads(line)
        traces.append(EpisodeTrace.from_summary(data, records.get(data["episode"], [])))
    return traces


def relabel_traces(traces: Iterable[EpisodeTrace]) -> int:
    """Recompute every call label from the regenerated task; returns how many changed."""
    changed = 0
    for t in traces:
        task = generate_task(t.config)
        for rec, label in zip(t.records, relabel(task, t.records)):
            if rec.classification != label:
                changed += 1
                rec.classification = label
    return changed
