"""
Output storage for scenario runs.

Writes the per-sample trace, the detection events and the run metrics under
``<output_dir>/<scenario>/``, and the suite summary under ``<output_dir>/``.
"""

import logging
from pathlib import Path
from typing import Iterable

import pandas as pd

from ..config import get_settings
from ..models.schemas import CHANNELS, RunMetrics, SuiteRow
from ..utils.units import ms_to_kts, rad_to_deg
from .fdi import FdiEvent

logger = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "t_s",
    "truth_alpha_deg", "truth_Wx_kts", "truth_Wz_kts", "truth_Vz_ms", "truth_Vc_kts",
    "meas_alpha1_deg", "meas_alpha2_deg", "meas_alpha3_deg",
    "meas_vc1_kts", "meas_vc2_kts", "meas_vc3_kts", "meas_vz_ms",
    "fused_alpha_deg", "fused_vc_kts",
    "est_alpha_deg", "est_Wx_kts", "est_Wz_kts", "est_vc_kts",
    "J_alpha1_deg", "J_alpha2_deg", "J_alpha3_deg",
    "J_vc1_kts", "J_vc2_kts", "J_vc3_kts",
    "h_a1", "h_a2", "h_a3", "h_v1", "h_v2", "h_v3",
    "solver_ms",
]
HEALTH_COLUMNS = dict(zip(CHANNELS, ["h_a1", "h_a2", "h_a3", "h_v1", "h_v2", "h_v3"]))
EVENT_COLUMNS = ["channel", "t_s", "rms", "rms_unit"]

TRACE_FILE = "trace.csv"
EVENTS_FILE = "events.csv"
METRICS_FILE = "metrics.json"
SUMMARY_FILE = "suite_summary.csv"


def read_trace(path) -> pd.DataFrame:
    """Read an exported trace without losing float precision."""
    return pd.read_csv(path, float_precision="round_trip")


def events_frame(events: Iterable[FdiEvent]) -> pd.DataFrame:
    rows = []
    for ev in events:
        if ev.channel.startswith("alpha"):
            rows.append([ev.channel, ev.t, rad_to_deg(ev.rms), "deg"])
        else:
            rows.append([ev.channel, ev.t, ms_to_kts(ev.rms), "kts"])
    return pd.DataFrame(rows, columns=EVENT_COLUMNS)


def summary_frame(rows: list[SuiteRow]) -> pd.DataFrame:
    """One row per scenario, laid out like an accuracy/detection-delay table."""
    records = []
    for row in rows:
        rec = {"scenario": row.scenario, "status": row.status}
        m = row.metrics
        rec["aee_alpha_max_deg"] = m.aee_alpha_max if m else None
        rec["aee_alpha_mean_deg"] = m.aee_alpha_mean if m else None
        rec["aee_vcas_max_kts"] = m.aee_vcas_max if m else None
        rec["aee_vcas_mean_kts"] = m.aee_vcas_mean if m else None
        for ch in CHANNELS:
            rec[f"delay_{ch}_s"] = m.detection_delay.get(ch) if m else None
        rec["false_alarms"] = m.false_alarms if m else None
        rec["missed_detections"] = m.missed_detections if m else None
        rec["solver_ms_mean"] = m.solver_ms_mean if m else None
        rec["solver_ms_p99"] = m.solver_ms_p99 if m else None
        rec["solver_ms_max"] = m.solver_ms_max if m else None
        rec["failures"] = "; ".join(row.failures) if row.failures else row.error
        records.append(rec)
    return pd.DataFrame.from_records(records)


def format_summary(rows: list[SuiteRow]) -> str:
    """Human-readable suite table."""
    df = summary_frame(rows)
    if df.empty:
        return "(no scenarios)"
    shown = df.drop(columns=["failures"]).copy()
    delay_cols = [c for c in shown.columns if c.startswith("delay_")]
    shown[delay_cols] = shown[delay_cols].apply(lambda col: col.map(lambda v: "-" if pd.isna(v) else f"{v:.3f}"))
    return shown.to_string(index=False, float_format=lambda v: f"{v:.3f}")


class TraceStore:
    """Writes run artifacts to the local output directory."""

    def __init__(self, output_dir=None):
        self.output_dir = Path(output_dir) if output_dir is not None else get_settings().output_dir
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def scenario_dir(self, name: str) -> Path:
        path = self.output_dir / name
        path.mkdir(parents=True, exist_ok=True)
        return path

    def write_trace(self, name: str, frame: pd.DataFrame) -> Path:
        if list(frame.columns) != TRACE_COLUMNS:
            raise ValueError("trace frame does not follow the trace column schema")
        path = self.scenario_dir(name) / TRACE_FILE
        frame.to_csv(path, index=False)
        return path

    def write_events(self, name: str, events: Iterable[FdiEvent]) -> Path:
        path = self.scenario_dir(name) / EVENTS_FILE
        events_frame(events).to_csv(path, index=False)
        return path

    def write_metrics(self, name: str, metrics: RunMetrics) -> Path:
        path = self.scenario_dir(name) / METRICS_FILE
        path.write_text(metrics.model_dump_json(indent=2), encoding="utf-8")
        return path

    def write_summary(self, rows: list[SuiteRow]) -> Path:
        path = self.output_dir / SUMMARY_FILE
        summary_frame(rows).to_csv(path, index=False)
        logger.info(f"[Suite] summary written to {path}")
        return path


def export_trace(frame: pd.DataFrame, events: Iterable[FdiEvent], name: str, output_dir=None) -> dict[str, Path]:
    """Write a finished run's trace and detection events; returns their paths."""
    store = TraceStore(output_dir)
    return {
        "trace": store.write_trace(name, frame),
        "events": store.write_events(name, events),
    }
