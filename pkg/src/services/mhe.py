"""
Real-time-iteration moving horizon estimator.

Each sample the window is shifted, the estimation problem is linearized
around the previous solution (one Gauss-Newton SQP iteration), the
resulting QP is solved by the fixed-cost barrier solver, and the iterates
are updated. The estimator also produces the one-step-ahead output
prediction consumed by the residual generator.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..exceptions import IllConditionedKktError, InfeasiblePointError, ModelDomainError, SingularMatrixError
from ..models.schemas import EstimatorConfig, StateBounds, Weights
from .airmodel import (
    EstimState,
    FlightParams,
    OutputVec,
    ProcessInput,
    discrete_step,
    h_output,
    jacobian_A,
    jacobian_C,
    tas_from_cas,
)
from .fdi import FusedMeasurement, SensorMask
from .qp_solver import IterationHook, KktWork, QpData, QpWeights, SolverStats, solve_qp

logger = logging.getLogger(__name__)

INTERIOR_MARGIN = 1e-6


@dataclass
class HorizonWindow:
    """
    Sliding window of iterates and data.

    ``states`` and ``params``, ``meas`` and ``meas_var`` hold N+1 stages;
    ``inputs`` holds N. ``prior`` is the arrival-cost reference for the
    oldest stage and ``P`` its covariance, both in physical units.
    """
    N: int
    states: np.ndarray
    inputs: np.ndarray
    params: list[FlightParams]
    meas: np.ndarray
    meas_var: np.ndarray
    prior: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        n = self.N
        if self.states.shape != (n + 1, 3) or self.inputs.shape != (n, 3):
            raise ValueError(f"iterate buffers inconsistent with N={n}")
        if len(self.params) != n + 1 or self.meas.shape != (n + 1, 3) or self.meas_var.shape != (n + 1, 3):
            raise ValueError(f"data buffers inconsistent with N={n}")
        if self.prior.shape != (3,) or self.P.shape != (3, 3):
            raise ValueError("arrival prior must be a 3-vector with a 3x3 covariance")

    def state(self, i: int) -> EstimState:
        return EstimState.from_array(self.states[i])

    @property
    def terminal(self) -> EstimState:
        return self.state(self.N)


@dataclass(frozen=True)
class MheStepResult:
    estimate: EstimState
    prediction: OutputVec
    window: HorizonWindow
    stats: SolverStats


def _bounds_arrays(bounds: StateBounds) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    return (
        np.array(bounds.x_lb),
        np.array(bounds.x_ub),
        np.array(bounds.u_lb),
        np.array(bounds.u_ub),
    )


def _clip_interior(v: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> np.ndarray:
    margin = INTERIOR_MARGIN * (ub - lb)
    return np.clip(v, lb + margin, ub - margin)


def project_interior(x: np.ndarray, bounds: StateBounds) -> np.ndarray:
    """Clip a state into the box, keeping a margin of 1e-6 of each box width."""
    lb, ub, _, _ = _bounds_arrays(bounds)
    return _clip_interior(x, lb, ub)


def project_input_interior(u: np.ndarray, bounds: StateBounds) -> np.ndarray:
    """Same as ``project_interior`` for the process-noise input box."""
    _, _, lb, ub = _bounds_arrays(bounds)
    return _clip_interior(u, lb, ub)


def state_from_measurement(meas: FusedMeasurement, th: FlightParams, bounds: StateBounds) -> EstimState:
    """
    Cold-start state from one fused measurement.

    AOA is read directly, W_x is recovered by inverting the airspeed output
    and W_z from the vertical speed. Missing families fall back to a zero
    air-path angle and zero horizontal wind.
    """
    alpha = meas.alpha_m if meas.aoa_available and math.isfinite(meas.alpha_m) else th.theta
    gam = th.theta - alpha

    wx = 0.0
    if meas.vcas_available and math.isfinite(meas.Vc_m):
        v_tas = tas_from_cas(meas.Vc_m, th.z)
        wx = th.Vg - v_tas * math.cos(gam)
    wz = meas.Vz_m - (th.Vg - wx) * math.tan(gam)

    x = project_interior(np.array([alpha, wx, wz]), bounds)
    return EstimState.from_array(x)


def initialize_window(
    x0: EstimState,
    params0: FlightParams,
    meas0: FusedMeasurement,
    weights: Weights,
    N: int,
) -> HorizonWindow:
    """Window with every stage at x0, zero inputs and the first measurement replicated."""
    if N < 1:
        raise ValueError(f"horizon must be at least 1, got {N}")
    x = x0.as_array()
    return HorizonWindow(
        N=N,
        states=np.tile(x, (N + 1, 1)),
        inputs=np.zeros((N, 3)),
        params=[params0] * (N + 1),
        meas=np.tile(meas0.as_array(), (N + 1, 1)),
        meas_var=np.tile(meas0.variances(), (N + 1, 1)),
        prior=x.copy(),
        P=np.diag([weights.p_alpha, weights.p_w, weights.p_w]),
    )


def linearize(
    win: HorizonWindow,
    ts: float,
    cfg: Optional[EstimatorConfig] = None,
    mask: Optional[SensorMask] = None,
) -> QpData:
    """
    Gauss-Newton linearization of the window in scaled coordinates.

    Masked output rows and rows without a measurement get a zero Jacobian
    row and a zero residual.

    Raises:
        ModelDomainError: annotated with the offending stage.
    """
    cfg = cfg or EstimatorConfig()
    N = win.N
    S = np.asarray(cfg.scale, dtype=float)
    x_lb, x_ub, u_lb, u_ub = _bounds_arrays(cfg.bounds)

    A = np.empty((N, 3, 3))
    f = np.empty((N, 3))
    C = np.empty((N + 1, 3, 3))
    r_y = np.empty((N + 1, 3))
    R = win.meas_var.copy()

    for i in range(N + 1):
        x = win.state(i)
        th = win.params[i]
        try:
            y = h_output(x, th).as_array()
            Ci = jacobian_C(x, th, mask)
            if i < N:
                Ai = jacobian_A(x, th, ts, cfg.v_min)
                x_next = discrete_step(x, ProcessInput.from_array(win.inputs[i]), th, ts, cfg.v_min)
        except ModelDomainError as e:
            raise type(e)(str(e), stage=i) from e

        missing = ~np.isfinite(win.meas[i]) | ~Ci.any(axis=1)
        r = np.where(missing, 0.0, win.meas[i] - y)
        Ci[missing, :] = 0.0

        C[i] = Ci * S[None, :]
        r_y[i] = r
        if i < N:
            A[i] = Ai * S[None, :] / S[:, None]
            f[i] = (x_next.as_array() - win.states[i + 1]) / S

    B = np.broadcast_to(ts * np.eye(3), (N, 3, 3)).copy()
    return QpData(
        A=A,
        B=B,
        C=C,
        f=f,
        r_u=-win.inputs / S,
        r_y=r_y,
        R=R,
        x_lb=(x_lb - win.states) / S,
        x_ub=(x_ub - win.states) / S,
        u_lb=(u_lb - win.inputs) / S,
        u_ub=(u_ub - win.inputs) / S,
        r_x0=(win.prior - win.states[0]) / S,
        P_arrival=win.P / np.outer(S, S),
    )


def shift_window(
    win: HorizonWindow,
    new_meas: FusedMeasurement,
    new_params: FlightParams,
    ts: float,
    cfg: EstimatorConfig,
) -> HorizonWindow:
    """Drop the oldest stage and seed the new terminal stage with the one-step prediction."""
    seed = discrete_step(win.terminal, ProcessInput(), win.params[-1], ts, cfg.v_min)
    seed = project_interior(seed.as_array(), cfg.bounds)
    states = np.vstack([win.states[1:], seed])
    return HorizonWindow(
        N=win.N,
        states=states,
        inputs=np.vstack([win.inputs[1:], np.zeros((1, 3))]),
        params=[*win.params[1:], new_params],
        meas=np.vstack([win.meas[1:], new_meas.as_array()]),
        meas_var=np.vstack([win.meas_var[1:], new_meas.variances()]),
        prior=states[0].copy(),
        P=win.P,
    )


def predict_output(x: EstimState, th: FlightParams, ts: float, v_min: float) -> OutputVec:
    """One-step-ahead output prediction with a zero input."""
    return h_output(discrete_step(x, ProcessInput(), th, ts, v_min), th)


def mhe_step(
    win: HorizonWindow,
    new_meas: FusedMeasurement,
    new_params: FlightParams,
    cfg: EstimatorConfig,
    weights: Weights,
    sensor_mask: Optional[SensorMask],
    ts: float,
    qp_weights: Optional[QpWeights] = None,
    hook: Optional[IterationHook] = None,
    work: Optional[KktWork] = None,
) -> MheStepResult:
    """
    One real-time iteration. ``win`` is never modified; the shifted and
    updated window is returned with the filtered estimate and prediction.
    """
    qp_weights = qp_weights or QpWeights.from_weights(weights, cfg.scale)
    S = np.asarray(cfg.scale, dtype=float)

    shifted = shift_window(win, new_meas, new_params, ts, cfg)
    qp = linearize(shifted, ts, cfg, sensor_mask)
    sol = solve_qp(qp, cfg.barrier, qp_weights, hook=hook, work=work)

    # the barrier keeps the update strictly inside, up to rounding at the bounds
    shifted.states = project_interior(shifted.states + sol.dx * S, cfg.bounds)
    shifted.inputs = project_input_interior(shifted.inputs + sol.du * S, cfg.bounds)

    estimate = shifted.terminal
    try:
        prediction = predict_output(estimate, new_params, ts, cfg.v_min)
    except ModelDomainError as e:
        raise type(e)(str(e), stage=shifted.N) from e
    return MheStepResult(estimate=estimate, prediction=prediction, window=shifted, stats=sol.stats)


@dataclass(frozen=True)
class EstimatorOutput:
    estimate: EstimState
    prediction: OutputVec
    stats: Optional[SolverStats]
    degraded: bool = False


class MovingHorizonEstimator:
    """
    Stateful wrapper around ``mhe_step``.

    When a step fails numerically the window is left untouched and the
    previous estimate and prediction are repeated for that sample.
    """

    def __init__(self, cfg: EstimatorConfig, weights: Weights, ts: float):
        if ts <= 0.0:
            raise ValueError(f"sampling interval must be positive, got {ts}")
        self.cfg = cfg
        self.weights = weights
        self.ts = ts
        self.qp_weights = QpWeights.from_weights(weights, cfg.scale)
        self.work = KktWork.allocate(cfg.horizon)
        self.window: Optional[HorizonWindow] = None
        self.estimate: Optional[EstimState] = None
        self.prediction: Optional[OutputVec] = None
        self.degraded_steps = 0

    @property
    def started(self) -> bool:
        return self.window is not None

    def start(
        self,
        meas0: FusedMeasurement,
        params0: FlightParams,
        x0: Optional[EstimState] = None,
    ) -> EstimatorOutput:
        """Cold start from x0, or from the measurement when x0 is not given."""
        if x0 is None:
            x0 = state_from_measurement(meas0, params0, self.cfg.bounds)
        else:
            x0 = EstimState.from_array(project_interior(x0.as_array(), self.cfg.bounds))
        self.window = initialize_window(x0, params0, meas0, self.weights, self.cfg.horizon)
        self.estimate = x0
        self.prediction = predict_output(x0, params0, self.ts, self.cfg.v_min)
        logger.debug(f"estimator started at {x0}")
        return EstimatorOutput(estimate=x0, prediction=self.prediction, stats=None)

    def step(
        self,
        meas: FusedMeasurement,
        params: FlightParams,
        mask: Optional[SensorMask] = None,
        hook: Optional[IterationHook] = None,
    ) -> EstimatorOutput:
        if self.window is None:
            raise RuntimeError("estimator has not been started")
        try:
            result = mhe_step(
                self.window,
                meas,
                params,
                self.cfg,
                self.weights,
                mask,
                self.ts,
                qp_weights=self.qp_weights,
                hook=hook,
                work=self.work,
            )
        except (ModelDomainError, IllConditionedKktError, InfeasiblePointError, SingularMatrixError) as e:
            self.degraded_steps += 1
            logger.warning(f"estimator step degraded, holding previous estimate: {e}")
            return EstimatorOutput(estimate=self.estimate, prediction=self.prediction, stats=None, degraded=True)

        self.window = result.window
        self.estimate = result.estimate
        self.prediction = result.prediction
        return EstimatorOutput(estimate=result.estimate, prediction=result.prediction, stats=result.stats)

