"""Pydantic models for scenario presets, solver/detector tuning and run results."""

import math
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..utils.units import deg_to_rad, ft_to_m, kts_to_ms

ChannelId = Literal["alpha1", "alpha2", "alpha3", "vc1", "vc2", "vc3"]
AOA_CHANNELS: tuple[str, ...] = ("alpha1", "alpha2", "alpha3")
VCAS_CHANNELS: tuple[str, ...] = ("vc1", "vc2", "vc3")
CHANNELS: tuple[str, ...] = AOA_CHANNELS + VCAS_CHANNELS


class _Section(BaseModel):
    """Preset file section: unknown keys are rejected."""
    model_config = ConfigDict(extra="forbid", frozen=True)


# ----------------------------------------------------------------------
# SI runtime configuration (what the services consume)
# ----------------------------------------------------------------------

class Weights(BaseModel):
    """Arrival-cost, process-noise and base measurement variances (SI)."""
    model_config = ConfigDict(frozen=True)

    p_alpha: float = Field(default=deg_to_rad(0.5) ** 2, gt=0)
    p_w: float = Field(default=kts_to_ms(5.0) ** 2, gt=0)
    q_alpha: float = Field(default=deg_to_rad(1.0) ** 2, gt=0)
    q_w: float = Field(default=kts_to_ms(5.0) ** 2, gt=0)
    R_alpha: float = Field(default=deg_to_rad(0.057) ** 2, gt=0)
    R_vz: float = Field(default=0.3 ** 2, gt=0)
    R_vc: float = Field(default=kts_to_ms(0.5) ** 2, gt=0)


class BarrierConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    kappa_init: float = Field(default=1e-2, gt=0)
    n_kappa: int = Field(default=2, ge=1)
    n_qp: int = Field(default=2, ge=1)
    ns_max: int = Field(default=10, ge=1)
    kappa_decay: float = Field(default=0.1, gt=0, le=1)


class StateBounds(BaseModel):
    """Box bounds on x = [alpha, Wx, Wz] and u = [u_alpha, u_wx, u_wz] (SI)."""
    model_config = ConfigDict(frozen=True)

    alpha_min: float = deg_to_rad(-10.0)
    alpha_max: float = deg_to_rad(30.0)
    wind_max: float = kts_to_ms(120.0)
    u_alpha_max: float = deg_to_rad(10.0)
    u_wind_max: float = kts_to_ms(30.0)

    @model_validator(mode="after")
    def _check(self):
        if not self.alpha_min < self.alpha_max:
            raise ValueError("alpha_min must be below alpha_max")
        if self.wind_max <= 0 or self.u_alpha_max <= 0 or self.u_wind_max <= 0:
            raise ValueError("wind and input bounds must be positive")
        return self

    @property
    def x_lb(self) -> tuple[float, float, float]:
        return (self.alpha_min, -self.wind_max, -self.wind_max)

    @property
    def x_ub(self) -> tuple[float, float, float]:
        return (self.alpha_max, self.wind_max, self.wind_max)

    @property
    def u_lb(self) -> tuple[float, float, float]:
        return (-self.u_alpha_max, -self.u_wind_max, -self.u_wind_max)

    @property
    def u_ub(self) -> tuple[float, float, float]:
        return (self.u_alpha_max, self.u_wind_max, self.u_wind_max)


class EstimatorConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    horizon: int = Field(default=3, ge=1)
    bounds: StateBounds = StateBounds()
    barrier: BarrierConfig = BarrierConfig()
    scale: tuple[float, float, float] = (0.1, 10.0, 10.0)
    v_min: float = Field(default=30.0, gt=0)


class DetectorConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    J_alpha_th: float = Field(default=deg_to_rad(2.3), gt=0)
    J_vc_th: float = Field(default=kts_to_ms(12.0), gt=0)
    n_d: int = Field(default=5, ge=1)
    N_eval: int = Field(default=10, ge=1)
    latch: bool = True

    @model_validator(mode="after")
    def _check(self):
        if self.n_d > self.N_eval:
            raise ValueError("confirmation count n_d cannot exceed N_eval")
        return self


FaultKind = Literal["bias", "oscillation", "jamming", "runaway", "nrz"]


class FaultProfile(BaseModel):
    """Additive sensor fault on one channel, SI amplitudes (rad or m/s)."""
    model_config = ConfigDict(frozen=True)

    kind: FaultKind
    target: ChannelId
    t_on: float = Field(ge=0)
    t_off: Optional[float] = None
    amplitude: float = 0.0
    frequency: float = 0.0
    slope: float = 0.0
    limit: Optional[float] = None
    offset: float = 0.0
    dwell_min: float = 0.5
    dwell_max: float = 2.0
    seed: int = 0

    @model_validator(mode="after")
    def _check(self):
        if self.t_off is not None and not self.t_on < self.t_off:
            raise ValueError("t_on must precede t_off")
        for name in ("amplitude", "frequency", "slope", "offset"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.kind == "oscillation" and self.frequency <= 0:
            raise ValueError("oscillation needs a positive frequency")
        if self.kind == "nrz" and not 0 < self.dwell_min <= self.dwell_max:
            raise ValueError("nrz needs 0 < dwell_min <= dwell_max")
        return self


# ----------------------------------------------------------------------
# Preset file sections (display units in key names)
# ----------------------------------------------------------------------

class ScenarioSection(_Section):
    name: str
    duration_s: float = Field(default=100.0, gt=0)
    ts_s: float = Field(default=0.04, gt=0)
    seed: int


Maneuver = Literal["level", "load_factor", "flight_path_angle", "vertical_speed", "aoa_protection"]


class TrajectorySpec(_Section):
    maneuver: Maneuver
    altitude_ft: float = Field(ge=0)
    speed_kts: float = Field(gt=0, description="calibrated airspeed at the flight point")
    alpha_trim_deg: float = 3.0
    amplitude_deg: float = 2.0
    period_s: float = Field(default=20.0, gt=0)
    mismatch_deg_s: float = 0.0
    mismatch_period_s: float = Field(default=7.0, gt=0)
    stall_alpha_deg: float = 25.0


WindKind = Literal["constant", "shear_ramp", "gust_sinusoid", "filtered_noise"]


class WindSpec(_Section):
    kind: WindKind = "constant"
    x_peak_kts: float = 0.0
    z_peak_kts: float = 0.0
    start_s: float = Field(default=0.0, ge=0)
    ramp_s: float = Field(default=10.0, gt=0)
    frequency_hz: float = Field(default=0.1, gt=0)
    bandwidth_hz: float = Field(default=0.2, gt=0)
    seed: int = 0
    envelope_kts: float = Field(default=120.0, gt=0)
    rate_max_kts_s: float = Field(default=25.0, gt=0)


class NoiseSpec(_Section):
    alpha_deg: float = Field(default=0.057, ge=0)
    vz_ms: float = Field(default=0.3, ge=0)
    vc_kts: float = Field(default=0.5, ge=0)


class EstimatorSpec(_Section):
    horizon: int = Field(default=3, ge=1)
    init_from_truth: bool = False
    kappa_init: float = Field(default=1e-2, gt=0)
    n_kappa: int = Field(default=2, ge=1)
    n_qp: int = Field(default=2, ge=1)
    ns_max: int = Field(default=10, ge=1)
    kappa_decay: float = Field(default=0.1, gt=0, le=1)
    alpha_min_deg: float = -10.0
    alpha_max_deg: float = 30.0
    alpha_rate_max_deg_s: float = Field(default=10.0, gt=0)
    wind_max_kts: float = Field(default=120.0, gt=0)
    wind_rate_max_kts_s: float = Field(default=30.0, gt=0)
    vg_min_ms: float = Field(default=30.0, gt=0)
    arrival_alpha_deg: float = Field(default=0.5, gt=0)
    arrival_wind_kts: float = Field(default=5.0, gt=0)
    process_alpha_deg_s: float = Field(default=1.0, gt=0)
    process_wind_kts_s: float = Field(default=5.0, gt=0)
    meas_alpha_deg: float = Field(default=0.057, gt=0)
    meas_vz_ms: float = Field(default=0.3, gt=0)
    meas_vc_kts: float = Field(default=0.5, gt=0)
    scale_alpha_rad: float = Field(default=0.1, gt=0)
    scale_wind_ms: float = Field(default=10.0, gt=0)

    def weights(self) -> Weights:
        return Weights(
            p_alpha=deg_to_rad(self.arrival_alpha_deg) ** 2,
            p_w=kts_to_ms(self.arrival_wind_kts) ** 2,
            q_alpha=deg_to_rad(self.process_alpha_deg_s) ** 2,
            q_w=kts_to_ms(self.process_wind_kts_s) ** 2,
            R_alpha=deg_to_rad(self.meas_alpha_deg) ** 2,
            R_vz=self.meas_vz_ms ** 2,
            R_vc=kts_to_ms(self.meas_vc_kts) ** 2,
        )

    def config(self) -> EstimatorConfig:
        return EstimatorConfig(
            horizon=self.horizon,
            bounds=StateBounds(
                alpha_min=deg_to_rad(self.alpha_min_deg),
                alpha_max=deg_to_rad(self.alpha_max_deg),
                wind_max=kts_to_ms(self.wind_max_kts),
                u_alpha_max=deg_to_rad(self.alpha_rate_max_deg_s),
                u_wind_max=kts_to_ms(self.wind_rate_max_kts_s),
            ),
            barrier=BarrierConfig(
                kappa_init=self.kappa_init,
                n_kappa=self.n_kappa,
                n_qp=self.n_qp,
                ns_max=self.ns_max,
                kappa_decay=self.kappa_decay,
            ),
            scale=(self.scale_alpha_rad, self.scale_wind_ms, self.scale_wind_ms),
            v_min=self.vg_min_ms,
        )


class DetectorSpec(_Section):
    alpha_threshold_deg: float = Field(default=2.3, gt=0)
    vc_threshold_kts: float = Field(default=12.0, gt=0)
    confirm_count: int = Field(default=5, ge=1)
    window: int = Field(default=10, ge=1)
    latch: bool = True

    @model_validator(mode="after")
    def _check(self):
        if self.confirm_count > self.window:
            raise ValueError("confirm_count cannot exceed window")
        return self

    def config(self) -> DetectorConfig:
        return DetectorConfig(
            J_alpha_th=deg_to_rad(self.alpha_threshold_deg),
            J_vc_th=kts_to_ms(self.vc_threshold_kts),
            n_d=self.confirm_count,
            N_eval=self.window,
            latch=self.latch,
        )


class FaultSpec(_Section):
    """One ``[fault.<id>]`` section; AOA targets take *_deg keys, VCAS targets *_kts keys."""
    kind: FaultKind
    target: ChannelId
    t_on_s: float = Field(ge=0)
    t_off_s: Optional[float] = None
    amplitude_deg: Optional[float] = None
    amplitude_kts: Optional[float] = None
    slope_deg_s: Optional[float] = None
    slope_kts_s: Optional[float] = None
    limit_deg: Optional[float] = None
    limit_kts: Optional[float] = None
    offset_deg: Optional[float] = None
    offset_kts: Optional[float] = None
    frequency_hz: float = 0.0
    dwell_min_s: float = 0.5
    dwell_max_s: float = 2.0
    seed: int = 0

    @model_validator(mode="after")
    def _units_match_target(self):
        wrong = "kts" if self.target in AOA_CHANNELS else "deg"
        for name in ("amplitude", "slope", "limit", "offset"):
            key = f"{name}_{wrong}" if name not in ("slope",) else f"slope_{wrong}_s"
            if getattr(self, key) is not None:
                raise ValueError(f"'{key}' does not match the units of target '{self.target}'")
        return self

    def profile(self) -> FaultProfile:
        if self.target in AOA_CHANNELS:
            conv, sfx = deg_to_rad, "deg"
        else:
            conv, sfx = kts_to_ms, "kts"

        def _get(name: str, default: Optional[float] = 0.0) -> Optional[float]:
            v = getattr(self, name.format(sfx))
            return default if v is None else conv(v)

        return FaultProfile(
            kind=self.kind,
            target=self.target,
            t_on=self.t_on_s,
            t_off=self.t_off_s,
            amplitude=_get("amplitude_{}"),
            slope=_get("slope_{}_s"),
            limit=_get("limit_{}", None),
            offset=_get("offset_{}"),
            frequency=self.frequency_hz,
            dwell_min=self.dwell_min_s,
            dwell_max=self.dwell_max_s,
            seed=self.seed,
        )


class AcceptanceSpec(_Section):
    max_false_alarms: Optional[int] = None
    max_missed_detections: Optional[int] = None
    max_detection_delay_s: Optional[float] = None
    max_aee_alpha_mean_deg: Optional[float] = None
    max_aee_alpha_max_deg: Optional[float] = None
    max_aee_vcas_mean_kts: Optional[float] = None
    expect_detected: list[ChannelId] = []
    expect_unreliable: Optional[bool] = None
    expect_wx_discard: Optional[bool] = None
    reference: Optional[str] = None
    max_aee_ratio: Optional[float] = Field(default=None, gt=0)

    @field_validator("expect_detected", mode="before")
    @classmethod
    def _split(cls, v):
        if isinstance(v, str):
            return [s.strip() for s in v.split(",") if s.strip()]
        return v

    @model_validator(mode="after")
    def _paired_reference(self):
        if (self.reference is None) != (self.max_aee_ratio is None):
            raise ValueError("reference and max_aee_ratio must be given together")
        return self


class ScenarioConfig(BaseModel):
    """The full reproducible experiment description."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    scenario: ScenarioSection
    trajectory: TrajectorySpec
    wind: WindSpec = WindSpec()
    noise: NoiseSpec = NoiseSpec()
    estimator: EstimatorSpec = EstimatorSpec()
    detector: DetectorSpec = DetectorSpec()
    faults: list[FaultSpec] = []
    acceptance: AcceptanceSpec = AcceptanceSpec()

    @model_validator(mode="after")
    def _integer_sample_count(self):
        ratio = self.scenario.duration_s / self.scenario.ts_s
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError("duration_s / ts_s must be an integer sample count")
        return self

    @property
    def name(self) -> str:
        return self.scenario.name

    @property
    def ts(self) -> float:
        return self.scenario.ts_s

    @property
    def seed(self) -> int:
        return self.scenario.seed

    @property
    def n_samples(self) -> int:
        return int(round(self.scenario.duration_s / self.scenario.ts_s))

    @property
    def altitude_m(self) -> float:
        return ft_to_m(self.trajectory.altitude_ft)

    def fault_profiles(self) -> list[FaultProfile]:
        return [f.profile() for f in self.faults]

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return self.model_copy(update={"scenario": self.scenario.model_copy(update={"seed": seed})})


# ----------------------------------------------------------------------
# Results
# ----------------------------------------------------------------------

class RunMetrics(BaseModel):
    aee_alpha_max: float = Field(ge=0, description="deg")
    aee_alpha_mean: float = Field(ge=0, description="deg")
    aee_vcas_max: float = Field(ge=0, description="kts")
    aee_vcas_mean: float = Field(ge=0, description="kts")
    detection_delay: dict[str, Optional[float]] = {}
    false_alarms: int = Field(default=0, ge=0)
    missed_detections: int = Field(default=0, ge=0)
    solver_ms_mean: float = Field(default=0.0, ge=0)
    solver_ms_max: float = Field(default=0.0, ge=0)
    solver_ms_p99: float = Field(default=0.0, ge=0)
    degraded_steps: int = Field(default=0, ge=0)
    unreliable_samples: int = Field(default=0, ge=0)
    estimation_unreliable: bool = False
    wx_discarded: bool = False

    @model_validator(mode="after")
    def _check(self):
        if self.aee_alpha_max < self.aee_alpha_mean or self.aee_vcas_max < self.aee_vcas_mean:
            raise ValueError("max AEE below mean AEE")
        if self.solver_ms_max < self.solver_ms_mean or self.solver_ms_max < self.solver_ms_p99:
            raise ValueError("max solver time below mean or 99th percentile")
        for ch, d in self.detection_delay.items():
            if d is not None and d < 0:
                raise ValueError(f"negative detection delay for {ch}")
        return self


class SuiteRow(BaseModel):
    scenario: str
    status: Literal["pass", "fail", "error"]
    metrics: Optional[RunMetrics] = None
    failures: list[str] = []
    error: str = ""
