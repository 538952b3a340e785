"""Single-threaded inference latency measurement.

Median of >= 3 repeats after warmup passes, fixed batch size, BLAS pinned
to MODKIT_THREADS (default 1) during the timed region. The environment
(CPU model, thread count, item count, batch size) rides along so reports
only ever compare numbers that share a snapshot.
"""
from __future__ import annotations

import os
import platform
import statistics
import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from ..errors import DimensionError

STABILITY_TOL = 0.2


def thread_limit() -> int:
    return int(os.environ.get("MODKIT_THREADS", "1"))


def _cpu_model() -> str:
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.lower().startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine()


def environment_snapshot() -> dict:
    return {
        "cpu_model": _cpu_model(),
        "threads": thread_limit(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
    }


@dataclass
class LatencyResult:
    seconds: float                 # median over repeats
    runs: list
    items: int
    batch_size: int
    warmup: int
    stable: bool
    spread: float                  # (max - min) / median over repeats
    env: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {"metric": "latency_s", "value": self.seconds, "n": self.items}


def bench_latency(solution, inputs: np.ndarray, repeats: int = 5,
                  warmup: int = 1, batch_size: int = 64,
                  stability_tol: float = STABILITY_TOL) -> LatencyResult:
    """Time ``solution.predict`` over ``inputs``; unstable runs get flagged,
    never silently accepted."""
    if repeats < 3:
        raise ValueError(f"latency needs >= 3 repeats, got {repeats}")
    inputs = np.asarray(inputs)
    if len(inputs) == 0:
        raise DimensionError("cannot benchmark an empty input set")
    batches = [inputs[lo:lo + batch_size]
               for lo in range(0, len(inputs), batch_size)]
    runs: list[float] = []
    with threadpool_limits(limits=thread_limit()):
        for _ in range(warmup):
            for b in batches:
                solution.predict(b)
        for _ in range(repeats):
            t0 = time.perf_counter()
            for b in batches:
                solution.predict(b)
            runs.append(time.perf_counter() - t0)
    med = statistics.median(runs)
    spread = (max(runs) - min(runs)) / med if med > 0 else float("inf")
    return LatencyResult(seconds=med, runs=runs, items=len(inputs),
                         batch_size=batch_size, warmup=warmup,
                         stable=spread < stability_tol, spread=spread,
                         env=environment_snapshot())
