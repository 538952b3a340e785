"""Experiment reports: metric rows, aggregates, assertions, and files.

Reports serialize to report.csv (scenario, solution, metric, value, n,
seed), report.json (config snapshot + environment + aggregates +
assertion outcomes), and per-figure CSV analogs.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .latency import environment_snapshot

METRIC_KINDS = ("top1", "one_off", "mse", "latency_s")


@dataclass
class MetricRow:
    solution: str
    metric: str
    value: float
    n: int
    seed: int

    def __post_init__(self):
        if self.metric not in METRIC_KINDS:
            raise ValueError(f"unknown metric kind {self.metric!r}")
        if self.metric in ("top1", "one_off") and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"{self.metric} value {self.value} outside [0, 1]")
        if self.metric == "latency_s" and self.value <= 0:
            raise ValueError(f"latency must be positive, got {self.value}")
        if self.metric == "mse" and self.value < 0:
            raise ValueError(f"mse must be nonnegative, got {self.value}")


@dataclass
class AssertionResult:
    name: str
    passed: bool
    detail: str


@dataclass
class ExperimentReport:
    scenario: str
    config: dict
    rows: list = field(default_factory=list)
    assertions: list = field(default_factory=list)
    figures: dict = field(default_factory=dict)   # name -> list of row dicts
    notes: list = field(default_factory=list)
    env: dict = field(default_factory=environment_snapshot)

    def add(self, solution: str, metric: str, value: float, n: int, seed: int):
        self.rows.append(MetricRow(solution, metric, float(value), int(n),
                                   int(seed)))

    def check(self, name: str, passed: bool, detail: str):
        self.assertions.append(AssertionResult(name, bool(passed), detail))

    def values(self, solution: str, metric: str) -> list:
        return [r.value for r in self.rows
                if r.solution == solution and r.metric == metric]

    def mean(self, solution: str, metric: str) -> float:
        vals = self.values(solution, metric)
        if not vals:
            raise KeyError(f"no rows for ({solution}, {metric})")
        return float(np.mean(vals))

    def aggregates(self) -> dict:
        out: dict = {}
        for r in self.rows:
            out.setdefault((r.solution, r.metric), []).append(r.value)
        return {f"{sol}/{met}": {"mean": float(np.mean(v)),
                                 "std": float(np.std(v)), "n_rows": len(v)}
                for (sol, met), v in sorted(out.items())}

    @property
    def all_passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def write(self, outdir) -> Path:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "solution", "metric", "value", "n", "seed"])
            for r in self.rows:
                w.writerow([self.scenario, r.solution, r.metric,
                            f"{r.value:.8g}", r.n, r.seed])
        payload = {
            "scenario": self.scenario,
            "config": self.config,
            "environment": self.env,
            "aggregates": self.aggregates(),
            "assertions": [{"name": a.name, "passed": a.passed,
                            "detail": a.detail} for a in self.assertions],
            "notes": self.notes,
        }
        (out / "report.json").write_text(json.dumps(payload, indent=2,
                                                    sort_keys=True))
        for name, rows in self.figures.items():
            if not rows:
                continue
            with open(out / f"{name}.csv", "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
                w.writeheader()
                w.writerows(rows)
        return out
