"""
Truth trajectory generation, fault injection and measurement noise.

The truth AOA and altitude are integrated with RK4 on a grid ten times finer
than the sampling interval, using the same kinematic model as the estimator
plus an optional mismatch term. Clean sensor outputs are the model outputs
evaluated on the sampled truth.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..exceptions import AirDataError, ScenarioInfeasibleError
from ..models.schemas import CHANNELS, FaultProfile, NoiseSpec, ScenarioConfig
from ..utils.units import deg_to_rad, kts_to_ms
from .airmodel import EstimState, FlightParams, f_alpha, h_output, tas_from_cas, tas_from_state
from .faults import N_STREAMS, FaultInjector
from .fdi import SensorReadings
from .trajectory import WindField, build_maneuver

logger = logging.getLogger(__name__)

SUBSTEPS = 10
VZ_STREAM = len(CHANNELS)


@dataclass(frozen=True)
class TruthTrace:
    """Sampled truth and the per-channel measurement bookkeeping (SI)."""
    t: np.ndarray
    alpha: np.ndarray
    Wx: np.ndarray
    Wz: np.ndarray
    Vz: np.ndarray
    Vc: np.ndarray
    V_tas: np.ndarray
    params: np.ndarray  # (n, 6): Vg, theta, q, nx, nz, z
    clean: np.ndarray  # (n, 7): alpha1..3, vc1..3, vz
    fault: Optional[np.ndarray] = None
    fault_active: Optional[np.ndarray] = None
    noise: Optional[np.ndarray] = None
    corrupted: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.t.size

    def flight_params(self, k: int) -> FlightParams:
        return FlightParams.from_array(self.params[k])

    def state(self, k: int) -> EstimState:
        return EstimState(float(self.alpha[k]), float(self.Wx[k]), float(self.Wz[k]))

    def readings(self, k: int) -> SensorReadings:
        row = self.corrupted[k] if self.corrupted is not None else self.clean[k]
        return SensorReadings(
            alpha=(float(row[0]), float(row[1]), float(row[2])),
            vc=(float(row[3]), float(row[4]), float(row[5])),
            vz=float(row[VZ_STREAM]),
        )

    def faulty_channels(self) -> list[str]:
        if self.fault_active is None:
            return []
        return [ch for j, ch in enumerate(CHANNELS) if self.fault_active[:, j].any()]


@dataclass(frozen=True)
class MeasurementStreams:
    noise: np.ndarray
    corrupted: np.ndarray


def _infeasible(k: int, err: Exception) -> ScenarioInfeasibleError:
    return ScenarioInfeasibleError(k, str(err))


def generate_truth(cfg: ScenarioConfig) -> TruthTrace:
    """
    Clean truth for a scenario.

    Raises:
        ScenarioInfeasibleError: at the first sample where the model leaves its
            domain, the AOA leaves the stall envelope or the wind leaves its
            envelope.
    """
    ts = cfg.ts
    n = cfg.n_samples
    h = ts / SUBSTEPS
    t = np.arange(n) * ts
    z0 = cfg.altitude_m
    traj = cfg.trajectory

    wind = WindField(cfg.wind, duration=n * ts, dt=h)
    wind.check_envelope(t)

    try:
        v_tas0 = tas_from_cas(kts_to_ms(traj.speed_kts), z0)
    except AirDataError as e:
        raise _infeasible(0, e) from e
    maneuver = build_maneuver(traj, vg0=v_tas0 + float(wind.wx(0.0)))

    # Parameters and wind on the half-step grid used by RK4
    fine_t = np.arange(2 * SUBSTEPS * (n - 1) + 1) * (0.5 * h)
    fine = maneuver.inertial(fine_t)
    fine["Wx"] = wind.wx(fine_t)
    fine["Wz"] = wind.wz(fine_t)
    fine["m"] = maneuver.mismatch.value(fine_t)

    def rates(j: int, alpha: float, z: float) -> tuple[float, float]:
        th = FlightParams(
            Vg=float(fine["Vg"][j]),
            theta=float(fine["theta"][j]),
            q=float(fine["q"][j]),
            nx=float(fine["nx"][j]),
            nz=float(fine["nz"][j]),
            z=z,
        )
        d_alpha = f_alpha(alpha, th) + float(fine["m"][j])
        vz = (th.Vg - float(fine["Wx"][j])) * math.tan(th.theta - alpha) + float(fine["Wz"][j])
        return d_alpha, vz

    alpha_s = np.empty(n)
    z_s = np.empty(n)
    alpha, z = float(fine["alpha_ref"][0]), z0
    for k in range(n):
        alpha_s[k], z_s[k] = alpha, z
        if k == n - 1:
            break
        try:
            for sub in range(SUBSTEPS):
                j = 2 * (k * SUBSTEPS + sub)
                k1 = rates(j, alpha, z)
                k2 = rates(j + 1, alpha + 0.5 * h * k1[0], z + 0.5 * h * k1[1])
                k3 = rates(j + 1, alpha + 0.5 * h * k2[0], z + 0.5 * h * k2[1])
                k4 = rates(j + 2, alpha + h * k3[0], z + h * k3[1])
                alpha += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
                z += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        except AirDataError as e:
            raise _infeasible(k, e) from e

    stall = deg_to_rad(traj.stall_alpha_deg)
    beyond = np.flatnonzero(np.abs(alpha_s) > stall)
    if beyond.size:
        raise ScenarioInfeasibleError(int(beyond[0]), f"AOA outside the +/-{traj.stall_alpha_deg:g} deg envelope")

    sampled = fine_t[:: 2 * SUBSTEPS]
    params = np.column_stack(
        [fine[key][:: 2 * SUBSTEPS] for key in ("Vg", "theta", "q", "nx", "nz")] + [z_s]
    )
    Wx = wind.wx(sampled)
    Wz = wind.wz(sampled)

    Vz = np.empty(n)
    Vc = np.empty(n)
    V_tas = np.empty(n)
    for k in range(n):
        x = EstimState(float(alpha_s[k]), float(Wx[k]), float(Wz[k]))
        th = FlightParams.from_array(params[k])
        try:
            y = h_output(x, th)
            V_tas[k] = tas_from_state(x, th)
        except AirDataError as e:
            raise _infeasible(k, e) from e
        Vz[k], Vc[k] = y.Vz, y.Vc

    clean = np.column_stack([alpha_s, alpha_s, alpha_s, Vc, Vc, Vc, Vz])
    logger.debug(f"truth generated: {n} samples, alpha in [{alpha_s.min():.4f}, {alpha_s.max():.4f}] rad")
    return TruthTrace(t=t, alpha=alpha_s, Wx=Wx, Wz=Wz, Vz=Vz, Vc=Vc, V_tas=V_tas, params=params, clean=clean)


def apply_faults(trace: TruthTrace, profiles: list[FaultProfile]) -> TruthTrace:
    fault, active = FaultInjector(profiles).apply(trace.t, trace.clean)
    return replace(trace, fault=fault, fault_active=active)


def noise_std(noise: NoiseSpec) -> np.ndarray:
    """Per-stream noise standard deviation (SI)."""
    a = deg_to_rad(noise.alpha_deg)
    v = kts_to_ms(noise.vc_kts)
    return np.array([a, a, a, v, v, v, noise.vz_ms])


def corrupt(trace: TruthTrace, std, seed: int) -> MeasurementStreams:
    """
    Add white Gaussian noise, one counter-based generator per stream.

    Each stream draws from Philox seeded with (seed, stream index).
    """
    std = np.asarray(std, dtype=float)
    noise = np.empty_like(trace.clean)
    for j in range(N_STREAMS):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, j])))
        noise[:, j] = rng.standard_normal(trace.n) * std[j]
    fault = trace.fault if trace.fault is not None else np.zeros_like(trace.clean)
    return MeasurementStreams(noise=noise, corrupted=trace.clean + fault + noise)


def simulate(cfg: ScenarioConfig) -> TruthTrace:
    """generate_truth, apply_faults and corrupt for one scenario."""
    trace = apply_faults(generate_truth(cfg), cfg.fault_profiles())
    streams = corrupt(trace, noise_std(cfg.noise), cfg.seed)
    return replace(trace, noise=streams.noise, corrupted=streams.corrupted)
