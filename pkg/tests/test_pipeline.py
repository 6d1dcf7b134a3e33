"""End-to-end scenario runs and the suite runner."""

import numpy as np
import pandas as pd
import pytest

from src.services.metrics import metrics_from_trace
from src.services.pipeline import STAGES, ScenarioRunner, run_scenario, run_suite
from src.services.trace_store import SUMMARY_FILE, TRACE_COLUMNS, read_trace

from .conftest import scenario_config, write_preset

QUIET = {"alpha_deg": 0.0, "vz_ms": 0.0, "vc_kts": 0.0}


def _consistency(duration_s: float = 4.0):
    return scenario_config(
        duration_s=duration_s,
        trajectory={"alpha_trim_deg": 3.0},
        noise=QUIET,
        estimator={"init_from_truth": True},
    )


class TestScenarioRun:
    def test_consistency_run_reproduces_truth(self):
        result = run_scenario(_consistency(), write=False, record_timing=False)
        assert result.metrics.aee_alpha_max <= 1e-4
        assert result.metrics.aee_vcas_max <= 1e-3
        assert result.metrics.false_alarms == 0
        assert result.degraded_steps == 0
        assert result.events == []
        assert result.failures == []

    def test_stage_order(self):
        seen: list[tuple[int, str]] = []
        ScenarioRunner(_consistency(1.0), record_timing=False, on_stage=lambda k, s: seen.append((k, s))).run()

        assert [s for k, s in seen if k == 0] == ["fuse", "estimate", "predict"]
        for k in range(1, 25):
            assert tuple(s for kk, s in seen if kk == k) == STAGES

    def test_trace_layout(self):
        cfg = _consistency(2.0)
        result = run_scenario(cfg, write=False, record_timing=False)
        frame = result.frame
        assert list(frame.columns) == TRACE_COLUMNS
        assert len(frame) == 50
        np.testing.assert_array_equal(frame["t_s"].to_numpy(), np.arange(50) * 0.04)
        assert (frame["solver_ms"] == 0.0).all()
        assert frame["h_v1"].dtype.kind == "i"

    def test_exported_trace_scores_identically(self, tmp_path):
        cfg = scenario_config(
            duration_s=6.0,
            faults=[{"kind": "bias", "target": "vc1", "t_on_s": 2.0, "amplitude_kts": 30.0}],
        )
        result = run_scenario(cfg, out_dir=tmp_path, record_timing=False)

        assert set(result.paths) == {"trace", "events", "metrics"}
        rescored = metrics_from_trace(result.paths["trace"], cfg, degraded_steps=result.degraded_steps)
        assert rescored == result.metrics
        pd.testing.assert_frame_equal(read_trace(result.paths["trace"]), result.frame)

    def test_untimed_runs_are_byte_identical(self, tmp_path):
        cfg = scenario_config(duration_s=2.0)
        a = run_scenario(cfg, out_dir=tmp_path / "a", record_timing=False)
        b = run_scenario(cfg, out_dir=tmp_path / "b", record_timing=False)
        assert a.paths["trace"].read_bytes() == b.paths["trace"].read_bytes()
        assert a.paths["events"].read_bytes() == b.paths["events"].read_bytes()

    def test_airspeed_bias_is_isolated(self):
        cfg = scenario_config(
            duration_s=6.0,
            faults=[{"kind": "bias", "target": "vc1", "t_on_s": 2.0, "amplitude_kts": 30.0}],
        )
        result = run_scenario(cfg, write=False, record_timing=False)
        m = result.metrics

        assert m.false_alarms == 0
        assert m.missed_detections == 0
        assert 0.0 <= m.detection_delay["vc1"] <= 1.0
        assert [ev.channel for ev in result.events] == ["vc1"]
        assert result.frame["h_v1"].iloc[-1] == 0
        assert m.aee_vcas_mean < 2.0

    def test_acceptance_failures_are_returned(self):
        cfg = scenario_config(duration_s=2.0, acceptance={"expect_detected": ["vc3"]})
        result = run_scenario(cfg, write=False, record_timing=False)
        assert result.failures == ["expected detection of vc3"]


class TestSuite:
    @pytest.mark.asyncio
    async def test_rows_in_filename_order_with_error_row(self, tmp_path):
        presets = tmp_path / "presets"
        presets.mkdir()
        write_preset(presets, "b-second")
        write_preset(presets, "a-first", seed=2)
        (presets / "c-broken.ini").write_text("[scenario]\nname = c-broken\nbogus = 1\n", encoding="utf-8")
        out = tmp_path / "out"

        rows = await run_suite(presets, jobs=1, out_dir=out, record_timing=False)

        assert [r.scenario for r in rows] == ["a-first", "b-second", "c-broken"]
        assert [r.status for r in rows] == ["pass", "pass", "error"]
        assert rows[2].error
        assert (out / "a-first" / "trace.csv").exists()

        summary = pd.read_csv(out / SUMMARY_FILE)
        assert summary["scenario"].tolist() == ["a-first", "b-second", "c-broken"]
        assert summary["status"].tolist() == ["pass", "pass", "error"]

    @pytest.mark.asyncio
    async def test_parallel_suite_matches_serial(self, tmp_path):
        presets = tmp_path / "presets"
        presets.mkdir()
        for i in range(3):
            write_preset(presets, f"s{i}", seed=i)

        serial = await run_suite(presets, jobs=1, out_dir=tmp_path / "serial", record_timing=False)
        parallel = await run_suite(presets, jobs=2, out_dir=tmp_path / "parallel", record_timing=False)

        assert [r.model_dump() for r in serial] == [r.model_dump() for r in parallel]
        for i in range(3):
            a = (tmp_path / "serial" / f"s{i}" / "trace.csv").read_bytes()
            b = (tmp_path / "parallel" / f"s{i}" / "trace.csv").read_bytes()
            assert a == b

    @pytest.mark.asyncio
    async def test_rows_are_paired_with_fault_free_references(self, tmp_path):
        presets = tmp_path / "presets"
        presets.mkdir()
        write_preset(presets, "clean", duration=4.0)
        write_preset(presets, "twin", duration=4.0, extra="[acceptance]\nreference = clean\nmax_aee_ratio = 2.0\n")
        write_preset(
            presets,
            "faulty",
            duration=4.0,
            extra="".join(
                f"[fault.{ch}]\nkind = bias\ntarget = {ch}\nt_on_s = 1\namplitude_kts = 30\n\n" for ch in ("vc1", "vc2", "vc3")
            )
            + "[acceptance]\nreference = clean\nmax_aee_ratio = 2.0\n",
        )
        write_preset(presets, "orphan", duration=4.0, extra="[acceptance]\nreference = missing\nmax_aee_ratio = 2.0\n")

        rows = await run_suite(presets, jobs=1, out_dir=tmp_path / "out", record_timing=False)
        by_name = {r.scenario: r for r in rows}

        assert by_name["clean"].status == "pass"
        assert by_name["twin"].status == "pass"
        assert by_name["faulty"].status == "fail"
        assert any("mean VCAS AEE" in f and "the clean run" in f for f in by_name["faulty"].failures)
        assert by_name["orphan"].failures == ["reference run missing unavailable"]

        summary = pd.read_csv(tmp_path / "out" / SUMMARY_FILE)
        assert summary.set_index("scenario").loc["faulty", "status"] == "fail"
        assert {"solver_ms_mean", "solver_ms_p99", "solver_ms_max"} <= set(summary.columns)
