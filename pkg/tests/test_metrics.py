import numpy as np
import pandas as pd
import pytest

from src.models.schemas import AcceptanceSpec, RunMetrics
from src.services.metrics import (
    compare_to_reference,
    evaluate_acceptance,
    fault_onsets,
    first_flag_times,
    metrics_from_frame,
    score_detection,
)
from src.services.trace_store import TRACE_COLUMNS

from .conftest import scenario_config


def _metrics(**kw) -> RunMetrics:
    base = dict(aee_alpha_max=0.2, aee_alpha_mean=0.1, aee_vcas_max=1.0, aee_vcas_mean=0.5)
    base.update(kw)
    return RunMetrics(**base)


def _frame(n: int = 50, ts: float = 0.04) -> pd.DataFrame:
    frame = pd.DataFrame(np.zeros((n, len(TRACE_COLUMNS))), columns=TRACE_COLUMNS)
    frame["t_s"] = np.arange(n) * ts
    for col in ("h_a1", "h_a2", "h_a3", "h_v1", "h_v2", "h_v3"):
        frame[col] = 1
    return frame


class TestScoreDetection:
    def test_clean_run(self):
        delays, fa, missed = score_detection({}, {"alpha1": None, "vc1": None})
        assert delays == {} and fa == 0 and missed == 0

    def test_detected_fault(self):
        delays, fa, missed = score_detection({"vc2": 50.0}, {"vc2": 50.56})
        assert delays["vc2"] == pytest.approx(0.56)
        assert fa == 0 and missed == 0

    def test_missed_fault(self):
        delays, fa, missed = score_detection({"alpha3": 10.0}, {})
        assert delays == {"alpha3": None}
        assert missed == 1 and fa == 0

    def test_flag_on_healthy_channel_is_false_alarm(self):
        _, fa, _ = score_detection({"vc1": 5.0}, {"vc1": 5.2, "alpha1": 3.0})
        assert fa == 1

    def test_flag_before_onset_is_false_alarm(self):
        delays, fa, missed = score_detection({"vc1": 5.0}, {"vc1": 4.0})
        assert delays["vc1"] is None
        assert fa == 1 and missed == 0


class TestFrameScoring:
    def test_fault_onsets_take_earliest(self):
        cfg = scenario_config(
            duration_s=10.0,
            faults=[
                {"kind": "bias", "target": "vc1", "t_on_s": 6.0, "amplitude_kts": 5.0},
                {"kind": "bias", "target": "vc1", "t_on_s": 4.0, "amplitude_kts": 5.0},
                {"kind": "bias", "target": "alpha2", "t_on_s": 7.0, "amplitude_deg": 1.0},
            ],
        )
        assert fault_onsets(cfg) == {"vc1": 4.0, "alpha2": 7.0}

    def test_first_flag_times(self):
        frame = _frame()
        frame.loc[20:, "h_v2"] = 0
        flags = first_flag_times(frame)
        assert flags["vc2"] == pytest.approx(0.8)
        assert flags["alpha1"] is None

    def test_metrics_from_synthetic_frame(self):
        cfg = scenario_config(duration_s=2.0, faults=[{"kind": "bias", "target": "vc2", "t_on_s": 0.4, "amplitude_kts": 30.0}])
        frame = _frame()
        frame["est_alpha_deg"] = 0.1
        frame.loc[0, "est_alpha_deg"] = 0.5
        frame["est_vc_kts"] = -1.0
        frame["solver_ms"] = np.linspace(0.0, 2.0, 50)
        frame.loc[20:, "h_v2"] = 0
        frame.loc[30:, ["h_a1", "h_a2", "h_a3"]] = 0

        m = metrics_from_frame(frame, cfg, degraded_steps=3)

        assert m.aee_alpha_max == pytest.approx(0.5)
        assert m.aee_alpha_mean == pytest.approx((0.5 + 49 * 0.1) / 50)
        assert m.aee_vcas_mean == pytest.approx(1.0)
        assert list(m.detection_delay) == ["vc2"]
        assert m.detection_delay["vc2"] == pytest.approx(0.4)
        assert m.false_alarms == 3
        assert m.missed_detections == 0
        assert m.solver_ms_max == pytest.approx(2.0)
        assert m.solver_ms_p99 == pytest.approx(np.percentile(np.linspace(0.0, 2.0, 50), 99.0))
        assert m.solver_ms_mean < m.solver_ms_p99 < m.solver_ms_max
        assert m.degraded_steps == 3
        assert m.unreliable_samples == 20
        assert m.estimation_unreliable
        assert not m.wx_discarded


class TestAcceptance:
    def test_all_predicates_hold(self):
        criteria = AcceptanceSpec(
            max_false_alarms=0,
            max_missed_detections=0,
            max_detection_delay_s=1.0,
            max_aee_alpha_mean_deg=0.3,
            max_aee_vcas_mean_kts=1.0,
            expect_detected=["vc1"],
            expect_unreliable=False,
            expect_wx_discard=False,
        )
        assert evaluate_acceptance(criteria, _metrics(detection_delay={"vc1": 0.5})) == []

    def test_empty_criteria_accept_anything(self):
        assert evaluate_acceptance(AcceptanceSpec(), _metrics(false_alarms=4, missed_detections=2)) == []

    def test_each_failure_is_reported(self):
        criteria = AcceptanceSpec(
            max_false_alarms=0,
            max_detection_delay_s=1.0,
            max_aee_alpha_mean_deg=0.05,
            expect_detected=["alpha1"],
            expect_wx_discard=True,
        )
        failures = evaluate_acceptance(criteria, _metrics(false_alarms=1, detection_delay={"vc1": 1.5, "vc2": None}))
        assert len(failures) == 6
        assert any("false alarms" in f for f in failures)
        assert any("vc1 detection delay" in f for f in failures)
        assert any("vc2 was never detected" in f for f in failures)
        assert any("expected detection of alpha1" in f for f in failures)
        assert any("wx_discarded" in f for f in failures)
        assert any("mean AOA AEE" in f for f in failures)

    def test_unreliable_expectation(self):
        criteria = AcceptanceSpec(expect_unreliable=True)
        assert evaluate_acceptance(criteria, _metrics()) != []
        assert evaluate_acceptance(criteria, _metrics(estimation_unreliable=True)) == []


class TestReferenceComparison:
    def _criteria(self, **kw) -> AcceptanceSpec:
        return AcceptanceSpec(reference="1-H", max_aee_ratio=2.0, **kw)

    def test_within_ratio(self):
        assert compare_to_reference(self._criteria(), _metrics(), _metrics(aee_alpha_mean=0.06, aee_vcas_mean=0.3)) == []

    def test_ratio_exceeded_on_both_families(self):
        reference = _metrics(aee_alpha_mean=0.04, aee_vcas_mean=0.2)
        failures = compare_to_reference(self._criteria(), _metrics(), reference)
        assert len(failures) == 2
        assert failures[0].startswith("mean AOA AEE 0.1 deg exceeds 2x the 1-H run")
        assert failures[1].startswith("mean VCAS AEE 0.5 kts exceeds 2x the 1-H run")

    def test_airspeed_ratio_skipped_when_wx_is_discarded(self):
        reference = _metrics(aee_alpha_mean=0.05, aee_vcas_mean=0.1)
        assert compare_to_reference(self._criteria(expect_wx_discard=True), _metrics(), reference) == []

    def test_missing_reference_is_a_failure(self):
        assert compare_to_reference(self._criteria(), _metrics(), None) == ["reference run 1-H unavailable"]

    def test_no_reference_configured(self):
        assert compare_to_reference(AcceptanceSpec(), _metrics(), None) == []

    def test_reference_and_ratio_come_together(self):
        with pytest.raises(ValueError):
            AcceptanceSpec(reference="1-H")
        with pytest.raises(ValueError):
            AcceptanceSpec(max_aee_ratio=2.0)


class TestRunMetricsValidation:
    def test_max_below_mean_rejected(self):
        with pytest.raises(ValueError):
            _metrics(aee_alpha_max=0.05)

    def test_negative_delay_rejected(self):
        with pytest.raises(ValueError):
            _metrics(detection_delay={"vc1": -0.1})

    def test_p99_above_max_rejected(self):
        with pytest.raises(ValueError):
            _metrics(solver_ms_mean=1.0, solver_ms_p99=3.0, solver_ms_max=2.0)
