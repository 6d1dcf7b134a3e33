"""
Run scoring: absolute estimation errors, detection delays, false alarms.

Metrics are computed from the trace frame, so scoring an exported CSV gives
the same numbers as scoring the run in memory.
"""

import logging
import math
from typing import Optional

import numpy as np
import pandas as pd

from ..models.schemas import AOA_CHANNELS, CHANNELS, VCAS_CHANNELS, AcceptanceSpec, RunMetrics, ScenarioConfig
from .trace_store import HEALTH_COLUMNS, read_trace

logger = logging.getLogger(__name__)


def fault_onsets(cfg: ScenarioConfig) -> dict[str, float]:
    """Earliest configured onset per faulty channel."""
    onsets: dict[str, float] = {}
    for f in cfg.faults:
        onsets[f.target] = min(onsets.get(f.target, math.inf), f.t_on_s)
    return onsets


def first_flag_times(frame: pd.DataFrame) -> dict[str, Optional[float]]:
    """Time at which each channel's health flag first drops to 0, or None."""
    out: dict[str, Optional[float]] = {}
    t = frame["t_s"].to_numpy()
    for ch, col in HEALTH_COLUMNS.items():
        idx = np.flatnonzero(frame[col].to_numpy() == 0)
        out[ch] = float(t[idx[0]]) if idx.size else None
    return out


def score_detection(
    onsets: dict[str, float], flags: dict[str, Optional[float]]
) -> tuple[dict[str, Optional[float]], int, int]:
    """
    Returns:
        (delay per faulty channel or None, false alarms, missed detections).
        A flag on a fault-free channel, or before the channel's fault onset,
        counts as a false alarm.
    """
    delays: dict[str, Optional[float]] = {}
    false_alarms = 0
    missed = 0
    for ch in CHANNELS:
        flagged = flags.get(ch)
        if ch not in onsets:
            if flagged is not None:
                false_alarms += 1
            continue
        if flagged is None:
            delays[ch] = None
            missed += 1
        elif flagged < onsets[ch]:
            delays[ch] = None
            false_alarms += 1
        else:
            delays[ch] = flagged - onsets[ch]
    return delays, false_alarms, missed


def metrics_from_frame(frame: pd.DataFrame, cfg: ScenarioConfig, degraded_steps: int = 0) -> RunMetrics:
    err_alpha = np.abs(frame["est_alpha_deg"].to_numpy() - frame["truth_alpha_deg"].to_numpy())
    err_vc = np.abs(frame["est_vc_kts"].to_numpy() - frame["truth_Vc_kts"].to_numpy())
    solver_ms = frame["solver_ms"].to_numpy()

    aoa_lost = np.all(frame[[HEALTH_COLUMNS[c] for c in AOA_CHANNELS]].to_numpy() == 0, axis=1)
    vcas_lost = np.all(frame[[HEALTH_COLUMNS[c] for c in VCAS_CHANNELS]].to_numpy() == 0, axis=1)

    delays, false_alarms, missed = score_detection(fault_onsets(cfg), first_flag_times(frame))
    return RunMetrics(
        aee_alpha_max=float(np.max(err_alpha)),
        aee_alpha_mean=float(np.mean(err_alpha)),
        aee_vcas_max=float(np.max(err_vc)),
        aee_vcas_mean=float(np.mean(err_vc)),
        detection_delay=delays,
        false_alarms=false_alarms,
        missed_detections=missed,
        solver_ms_mean=float(np.mean(solver_ms)),
        solver_ms_max=float(np.max(solver_ms)),
        solver_ms_p99=float(min(np.percentile(solver_ms, 99.0), np.max(solver_ms))),
        degraded_steps=degraded_steps,
        unreliable_samples=int(np.count_nonzero(aoa_lost)),
        estimation_unreliable=bool(aoa_lost.any()),
        wx_discarded=bool(vcas_lost.any()),
    )


def metrics_from_trace(path, cfg: ScenarioConfig, degraded_steps: int = 0) -> RunMetrics:
    """Score an exported trace CSV."""
    return metrics_from_frame(read_trace(path), cfg, degraded_steps)


def evaluate_acceptance(criteria: AcceptanceSpec, metrics: RunMetrics) -> list[str]:
    """Failed predicates, as readable messages; empty when every predicate holds."""
    failures: list[str] = []

    def check(limit, value, label: str, unit: str = ""):
        if limit is not None and value > limit:
            failures.append(f"{label} {value:.4g}{unit} exceeds {limit:g}{unit}")

    check(criteria.max_false_alarms, metrics.false_alarms, "false alarms")
    check(criteria.max_missed_detections, metrics.missed_detections, "missed detections")
    check(criteria.max_aee_alpha_mean_deg, metrics.aee_alpha_mean, "mean AOA AEE", " deg")
    check(criteria.max_aee_alpha_max_deg, metrics.aee_alpha_max, "max AOA AEE", " deg")
    check(criteria.max_aee_vcas_mean_kts, metrics.aee_vcas_mean, "mean VCAS AEE", " kts")

    if criteria.max_detection_delay_s is not None:
        for ch, delay in metrics.detection_delay.items():
            if delay is None:
                failures.append(f"{ch} was never detected")
            elif delay > criteria.max_detection_delay_s:
                failures.append(f"{ch} detection delay {delay:.3f} s exceeds {criteria.max_detection_delay_s:g} s")

    for ch in criteria.expect_detected:
        if metrics.detection_delay.get(ch) is None:
            failures.append(f"expected detection of {ch}")

    if criteria.expect_unreliable is not None and metrics.estimation_unreliable != criteria.expect_unreliable:
        failures.append(f"estimation_unreliable is {metrics.estimation_unreliable}, expected {criteria.expect_unreliable}")
    if criteria.expect_wx_discard is not None and metrics.wx_discarded != criteria.expect_wx_discard:
        failures.append(f"wx_discarded is {metrics.wx_discarded}, expected {criteria.expect_wx_discard}")

    return failures


def compare_to_reference(
    criteria: AcceptanceSpec, metrics: RunMetrics, reference: Optional[RunMetrics]
) -> list[str]:
    """
    Mean-AEE ratio against the fault-free counterpart named by
    ``criteria.reference``. The VCAS ratio is skipped for runs expected to
    discard W_x, whose airspeed estimate is no longer driven by measurements.
    """
    if criteria.reference is None:
        return []
    if reference is None:
        return [f"reference run {criteria.reference} unavailable"]

    ratio = criteria.max_aee_ratio
    failures: list[str] = []
    pairs = [("mean AOA AEE", metrics.aee_alpha_mean, reference.aee_alpha_mean, " deg")]
    if not criteria.expect_wx_discard:
        pairs.append(("mean VCAS AEE", metrics.aee_vcas_mean, reference.aee_vcas_mean, " kts"))
    for label, value, base, unit in pairs:
        if value > ratio * base:
            failures.append(
                f"{label} {value:.4g}{unit} exceeds {ratio:g}x the {criteria.reference} run ({base:.4g}{unit})"
            )
    return failures
