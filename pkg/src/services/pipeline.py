"""
End-to-end scenario pipeline.

Per sample: residuals -> detect -> fuse -> mask -> estimate -> predict.
The prediction used for the residuals of sample k is the one produced at
sample k-1. Scenarios of a suite run concurrently in worker processes.
"""

import asyncio
import logging
import time
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd

from ..config import get_settings
from ..exceptions import AirDataError, ModelDomainError
from ..models.schemas import RunMetrics, ScenarioConfig, SuiteRow
from ..utils.units import ms_to_kts, rad_to_deg
from .airmodel import EstimState, FlightParams, h_output
from .fdi import FdiEvent, SensorBank, detect, fuse, new_sensor_bank, sensor_mask, update_residuals
from .metrics import compare_to_reference, evaluate_acceptance, metrics_from_frame
from .mhe import MovingHorizonEstimator
from .scenario_loader import list_scenarios, load_scenario
from .sim import TruthTrace, simulate
from .trace_store import TRACE_COLUMNS, TraceStore, export_trace, format_summary

logger = logging.getLogger(__name__)

STAGES = ("residuals", "detect", "fuse", "mask", "estimate", "predict")
StageHook = Callable[[int, str], None]


@dataclass
class RunResult:
    cfg: ScenarioConfig
    metrics: RunMetrics
    frame: pd.DataFrame
    events: list[FdiEvent]
    trace: TruthTrace
    degraded_steps: int
    failures: list[str]
    paths: dict[str, Path]


class ScenarioRunner:
    """Runs one scenario through simulator, detector, fusion and estimator."""

    def __init__(
        self,
        cfg: ScenarioConfig,
        record_timing: Optional[bool] = None,
        on_stage: Optional[StageHook] = None,
    ):
        self.cfg = cfg
        self.record_timing = get_settings().record_solver_time if record_timing is None else record_timing
        self.on_stage = on_stage
        self.weights = cfg.estimator.weights()
        self.detector = cfg.detector.config()
        self.estimator = MovingHorizonEstimator(cfg.estimator.config(), self.weights, cfg.ts)

    def _stage(self, k: int, name: str) -> None:
        if self.on_stage is not None:
            self.on_stage(k, name)

    def run(self) -> tuple[pd.DataFrame, list[FdiEvent], TruthTrace]:
        cfg = self.cfg
        start_time = time.time()

        logger.info(f"[Run] {cfg.name}: simulating {cfg.n_samples} samples")
        trace = simulate(cfg)

        bank: SensorBank = new_sensor_bank(self.detector)
        events: list[FdiEvent] = []
        rows = np.empty((trace.n, len(TRACE_COLUMNS)))
        est_vc = float("nan")

        for k in range(trace.n):
            t = float(trace.t[k])
            readings = trace.readings(k)
            params = trace.flight_params(k)
            solver_ms = 0.0

            if k == 0:
                self._stage(k, "fuse")
                fused = fuse(bank, readings, self.weights)
                x0 = trace.state(0) if cfg.estimator.init_from_truth else None
                self._stage(k, "estimate")
                out = self.estimator.start(fused, params, x0)
                self._stage(k, "predict")
            else:
                self._stage(k, "residuals")
                update_residuals(bank, readings, self.estimator.prediction)
                self._stage(k, "detect")
                for ch in detect(bank):
                    ev = FdiEvent(channel=ch, t=t, rms=bank.rms(ch))
                    events.append(ev)
                    logger.info(f"[Run] {cfg.name}: {ch} isolated at t={t:.2f}s")
                self._stage(k, "fuse")
                fused = fuse(bank, readings, self.weights)
                self._stage(k, "mask")
                mask = sensor_mask(bank)
                self._stage(k, "estimate")
                tic = time.perf_counter()
                out = self.estimator.step(fused, params, mask)
                toc = time.perf_counter()
                self._stage(k, "predict")
                if self.record_timing:
                    solver_ms = (toc - tic) * 1e3

            est_vc = self._estimated_vc(out.estimate, params, est_vc)
            rows[k] = self._row(trace, k, fused, out.estimate, est_vc, bank, solver_ms)

        frame = pd.DataFrame(rows, columns=TRACE_COLUMNS)
        for col in TRACE_COLUMNS:
            if col.startswith("h_"):
                frame[col] = frame[col].astype(int)

        elapsed = time.time() - start_time
        logger.info(
            f"[Run] {cfg.name}: complete in {elapsed:.2f}s, {len(events)} detections, "
            f"{self.estimator.degraded_steps} degraded steps"
        )
        return frame, events, trace

    @staticmethod
    def _estimated_vc(x: EstimState, th: FlightParams, previous: float) -> float:
        try:
            return h_output(x, th).Vc
        except ModelDomainError:
            return previous

    @staticmethod
    def _row(trace, k, fused, est: EstimState, est_vc: float, bank: SensorBank, solver_ms: float) -> list[float]:
        meas = trace.corrupted[k]
        J = bank.J
        return [
            float(trace.t[k]),
            rad_to_deg(trace.alpha[k]), ms_to_kts(trace.Wx[k]), ms_to_kts(trace.Wz[k]),
            trace.Vz[k], ms_to_kts(trace.Vc[k]),
            rad_to_deg(meas[0]), rad_to_deg(meas[1]), rad_to_deg(meas[2]),
            ms_to_kts(meas[3]), ms_to_kts(meas[4]), ms_to_kts(meas[5]), meas[6],
            rad_to_deg(fused.alpha_m), ms_to_kts(fused.Vc_m),
            rad_to_deg(est.alpha), ms_to_kts(est.Wx), ms_to_kts(est.Wz), ms_to_kts(est_vc),
            rad_to_deg(J[0]), rad_to_deg(J[1]), rad_to_deg(J[2]),
            ms_to_kts(J[3]), ms_to_kts(J[4]), ms_to_kts(J[5]),
            *[1.0 if h else 0.0 for h in bank.healthy],
            solver_ms,
        ]


def run_scenario(
    cfg: ScenarioConfig,
    out_dir=None,
    record_timing: Optional[bool] = None,
    on_stage: Optional[StageHook] = None,
    write: bool = True,
) -> RunResult:
    """
    Run one scenario, score it, check its acceptance predicates and
    (optionally) write trace.csv, events.csv and metrics.json.

    The ratio check against a fault-free counterpart needs a second run and
    is left to the caller (``reference_metrics``, ``pair_with_references``).
    """
    runner = ScenarioRunner(cfg, record_timing=record_timing, on_stage=on_stage)
    frame, events, trace = runner.run()
    degraded = runner.estimator.degraded_steps
    metrics = metrics_from_frame(frame, cfg, degraded_steps=degraded)
    failures = evaluate_acceptance(cfg.acceptance, metrics)

    paths: dict[str, Path] = {}
    if write:
        paths = export_trace(frame, events, cfg.name, out_dir)
        paths["metrics"] = TraceStore(out_dir).write_metrics(cfg.name, metrics)

    for msg in failures:
        logger.warning(f"[Run] {cfg.name}: acceptance failed: {msg}")
    return RunResult(
        cfg=cfg,
        metrics=metrics,
        frame=frame,
        events=events,
        trace=trace,
        degraded_steps=degraded,
        failures=failures,
        paths=paths,
    )


def run_preset(path: str, out_dir: Optional[str], record_timing: bool) -> SuiteRow:
    """Worker entry point: one preset file to one summary row, never raising."""
    name = Path(path).stem
    try:
        cfg = load_scenario(path)
        name = cfg.name
        result = run_scenario(cfg, out_dir=out_dir, record_timing=record_timing)
    except AirDataError as e:
        logger.error(f"[Suite] {name}: {e}")
        return SuiteRow(scenario=name, status="error", error=str(e))
    except Exception as e:
        logger.exception(f"[Suite] {name}: unexpected failure")
        return SuiteRow(scenario=name, status="error", error=f"{type(e).__name__}: {e}")
    status = "fail" if result.failures else "pass"
    return SuiteRow(scenario=name, status=status, metrics=result.metrics, failures=result.failures)


def reference_metrics(path, cfg: ScenarioConfig) -> Optional[RunMetrics]:
    """
    Metrics of the fault-free counterpart named by the preset, read from the
    same directory and run with the same seed; None when it does not exist.
    """
    name = cfg.acceptance.reference
    if name is None:
        return None
    ref_path = Path(path).with_name(f"{name}.ini")
    if not ref_path.is_file():
        logger.warning(f"[Run] {cfg.name}: reference preset {ref_path} not found")
        return None
    ref_cfg = load_scenario(ref_path, seed=cfg.seed)
    logger.info(f"[Run] {cfg.name}: running reference scenario {ref_cfg.name}")
    return run_scenario(ref_cfg, write=False, record_timing=False).metrics


def pair_with_references(files: list[Path], rows: list[SuiteRow]) -> list[SuiteRow]:
    """Apply the reference ratio checks across the rows of one suite."""
    by_name = {row.scenario: row for row in rows}
    for path, row in zip(files, rows):
        if row.metrics is None:
            continue
        criteria = load_scenario(path).acceptance
        if criteria.reference is None:
            continue
        ref = by_name.get(criteria.reference)
        extra = compare_to_reference(criteria, row.metrics, ref.metrics if ref is not None else None)
        if extra:
            for msg in extra:
                logger.warning(f"[Suite] {row.scenario}: acceptance failed: {msg}")
            row.failures = [*row.failures, *extra]
            row.status = "fail"
    return rows


def _executor(jobs: int) -> Executor:
    return ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else ThreadPoolExecutor(max_workers=1)


async def run_suite(
    directory,
    jobs: int = 1,
    out_dir=None,
    record_timing: Optional[bool] = None,
) -> list[SuiteRow]:
    """
    Run every preset of a directory, ``jobs`` at a time.

    Rows come back in preset filename order; a failing scenario yields an
    error row and does not stop the others.
    """
    settings = get_settings()
    files = list_scenarios(directory)
    out = Path(out_dir) if out_dir is not None else settings.output_dir
    timing = settings.record_solver_time if record_timing is None else record_timing

    logger.info(f"[Suite] running {len(files)} scenarios with {jobs} job(s)")
    loop = asyncio.get_running_loop()
    with _executor(jobs) as pool:
        tasks = [loop.run_in_executor(pool, run_preset, str(p), str(out), timing) for p in files]
        rows = list(await asyncio.gather(*tasks))
    rows = pair_with_references(files, rows)

    TraceStore(out).write_summary(rows)
    logger.info("[Suite] results\n" + format_summary(rows))
    return rows
