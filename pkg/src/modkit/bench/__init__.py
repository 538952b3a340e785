"""Metrics, latency benchmarking, and the scripted experiment scenarios."""

from .latency import LatencyResult, bench_latency, environment_snapshot, thread_limit
from .metrics import mse_metric, one_off_accuracy, top1_accuracy
from .report import AssertionResult, ExperimentReport, MetricRow
from .scenarios import (S1Artifacts, ScenarioConfig, s1_classification,
                        s2_sentiment, s3_nir_reuse, s4_maintainability,
                        s5_pruning)

__all__ = ["top1_accuracy", "one_off_accuracy", "mse_metric",
           "bench_latency", "LatencyResult", "environment_snapshot",
           "thread_limit", "MetricRow", "AssertionResult", "ExperimentReport",
           "ScenarioConfig", "S1Artifacts", "s1_classification", "s2_sentiment",
           "s3_nir_reuse", "s4_maintainability", "s5_pruning"]
