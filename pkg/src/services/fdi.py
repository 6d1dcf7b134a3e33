"""
Fault detection, isolation and fusion for the triplex AOA and VCAS channels.

Residuals are the difference between each raw reading and the estimator's
one-step-ahead prediction. A channel is isolated once its windowed residual
RMS has exceeded the family threshold at least n_d times within the last
N_eval samples. Healthy channels are fused with weights proportional to the
inverse squared RMS.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from ..models.schemas import CHANNELS, DetectorConfig, Weights
from .airmodel import OutputVec

logger = logging.getLogger(__name__)

J_FLOOR = 1e-6
N_CHANNELS = len(CHANNELS)
AOA_IDX = slice(0, 3)
VCAS_IDX = slice(3, 6)

MaskKind = Literal["all-available", "aoa-lost", "vcas-lost", "both-lost"]


@dataclass(frozen=True)
class SensorReadings:
    """One sample of raw sensor outputs (SI)."""
    alpha: tuple[float, float, float]
    vc: tuple[float, float, float]
    vz: float

    def as_array(self) -> np.ndarray:
        """The six redundant channels in ``CHANNELS`` order."""
        return np.array([*self.alpha, *self.vc], dtype=float)


@dataclass(frozen=True)
class SensorMask:
    aoa_available: bool = True
    vcas_available: bool = True

    @property
    def wx_discard(self) -> bool:
        return not self.vcas_available

    @property
    def estimation_unreliable(self) -> bool:
        return not self.aoa_available

    @property
    def kind(self) -> MaskKind:
        if self.aoa_available and self.vcas_available:
            return "all-available"
        if self.vcas_available:
            return "aoa-lost"
        if self.aoa_available:
            return "vcas-lost"
        return "both-lost"


@dataclass(frozen=True)
class FdiEvent:
    channel: str
    t: float
    rms: float


@dataclass(frozen=True)
class FusedMeasurement:
    alpha_m: float
    Vz_m: float
    Vc_m: float
    beta_alpha: tuple[float, float, float]
    beta_vc: tuple[float, float, float]
    R_alpha_eff: float
    R_vz: float
    R_vc_eff: float
    aoa_available: bool = True
    vcas_available: bool = True

    def as_array(self) -> np.ndarray:
        """[alpha, Vz, Vc]; an unavailable family reads NaN."""
        return np.array([self.alpha_m, self.Vz_m, self.Vc_m])

    def variances(self) -> np.ndarray:
        return np.array([self.R_alpha_eff, self.R_vz, self.R_vc_eff])


@dataclass
class SensorBank:
    """Residual buffers, RMS values and health state of the six redundant channels."""
    cfg: DetectorConfig
    residuals: np.ndarray  # (6, N_eval) ring
    exceed: np.ndarray  # (6, N_eval) ring of threshold exceedances
    J: np.ndarray = field(default_factory=lambda: np.zeros(N_CHANNELS))
    healthy: np.ndarray = field(default_factory=lambda: np.ones(N_CHANNELS, dtype=bool))
    confirm: np.ndarray = field(default_factory=lambda: np.zeros(N_CHANNELS, dtype=int))
    samples: int = 0
    head: int = 0
    exceed_head: int = 0

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([self.cfg.J_alpha_th] * 3 + [self.cfg.J_vc_th] * 3)

    def health_flags(self) -> dict[str, bool]:
        return {ch: bool(h) for ch, h in zip(CHANNELS, self.healthy)}

    def rms(self, channel: str) -> float:
        return float(self.J[CHANNELS.index(channel)])


def new_sensor_bank(cfg: DetectorConfig) -> SensorBank:
    return SensorBank(
        cfg=cfg,
        residuals=np.zeros((N_CHANNELS, cfg.N_eval)),
        exceed=np.zeros((N_CHANNELS, cfg.N_eval), dtype=bool),
    )


def update_residuals(bank: SensorBank, meas: SensorReadings, pred: OutputVec) -> SensorBank:
    """Push measurement-minus-prediction into every ring and recompute the RMS."""
    predicted = np.array([pred.alpha] * 3 + [pred.Vc] * 3)
    bank.residuals[:, bank.head] = meas.as_array() - predicted
    bank.head = (bank.head + 1) % bank.cfg.N_eval
    bank.samples += 1
    bank.J[:] = np.sqrt(np.sum(bank.residuals * bank.residuals, axis=1) / bank.cfg.N_eval)
    return bank


def detect(bank: SensorBank, cfg: DetectorConfig | None = None) -> list[str]:
    """
    Record this sample's threshold exceedances and update health flags.

    Nothing is recorded until the residual rings have been filled once.

    Returns:
        Channels isolated at this sample.
    """
    cfg = cfg or bank.cfg
    if bank.samples < cfg.N_eval:
        return []

    bank.exceed[:, bank.exceed_head] = bank.J > bank.thresholds
    bank.exceed_head = (bank.exceed_head + 1) % cfg.N_eval
    bank.confirm[:] = np.count_nonzero(bank.exceed, axis=1)

    confirmed = bank.confirm >= cfg.n_d
    newly = [CHANNELS[i] for i in np.flatnonzero(confirmed & bank.healthy)]
    if cfg.latch:
        bank.healthy &= ~confirmed
    else:
        bank.healthy[:] = ~confirmed
    for ch in newly:
        logger.debug(f"channel {ch} isolated (J={bank.rms(ch):.4g})")
    return newly


def _family_weights(J: np.ndarray, healthy: np.ndarray) -> np.ndarray:
    beta = np.zeros(3)
    if not healthy.any():
        return beta
    inv = 1.0 / np.maximum(J[healthy], J_FLOOR) ** 2
    beta[healthy] = inv / inv.sum()
    return beta


def fuse(bank: SensorBank, meas: SensorReadings, weights: Weights) -> FusedMeasurement:
    """Weighted mean of the healthy channels of each family, and its effective variance."""
    readings = meas.as_array()

    values, betas, variances = [], [], []
    for idx, R_base in ((AOA_IDX, weights.R_alpha), (VCAS_IDX, weights.R_vc)):
        healthy = bank.healthy[idx]
        beta = _family_weights(bank.J[idx], healthy)
        if healthy.any():
            values.append(float(beta @ readings[idx]))
            variances.append(float(np.sum(beta * beta)) * R_base)
        else:
            values.append(math.nan)
            variances.append(R_base)
        betas.append(tuple(float(b) for b in beta))

    return FusedMeasurement(
        alpha_m=values[0],
        Vz_m=meas.vz,
        Vc_m=values[1],
        beta_alpha=betas[0],
        beta_vc=betas[1],
        R_alpha_eff=variances[0],
        R_vz=weights.R_vz,
        R_vc_eff=variances[1],
        aoa_available=bool(bank.healthy[AOA_IDX].any()),
        vcas_available=bool(bank.healthy[VCAS_IDX].any()),
    )


def sensor_mask(bank: SensorBank) -> SensorMask:
    return SensorMask(
        aoa_available=bool(bank.healthy[AOA_IDX].any()),
        vcas_available=bool(bank.healthy[VCAS_IDX].any()),
    )
