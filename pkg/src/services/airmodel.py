"""
Longitudinal kinematic air-data model with wind states.

State x = [alpha, Wx, Wz], input u = [u_alpha, u_wx, u_wz], parameters
Theta = [Vg, theta, q, nx, nz, z] from inertial sensors, outputs
y = [alpha, Vz, Vc]. Everything is SI (rad, m, s) internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ..exceptions import ModelDomainError, SingularGeometryError

if TYPE_CHECKING:
    from .fdi import SensorMask

# Physical constants
G0 = 9.80665  # m/s2
R_AIR = 287.053  # J/(kg K)
GAMMA = 1.4
T0 = 288.15  # K
P0 = 101325.0  # Pa
A0 = math.sqrt(GAMMA * R_AIR * T0)  # 340.294 m/s
LAPSE = -0.0065  # K/m below the tropopause
TROPOPAUSE = 11000.0  # m
T_STRAT = T0 + LAPSE * TROPOPAUSE  # 216.65 K
P_TROP = P0 * (T_STRAT / T0) ** (-G0 / (LAPSE * R_AIR))
Z_MAX = 20000.0

EPS_COS = 1e-3
V_MIN = 30.0  # default ground-speed floor for f_alpha, m/s


@dataclass(frozen=True)
class FlightParams:
    """Measured parameter vector Theta."""
    Vg: float
    theta: float
    q: float
    nx: float
    nz: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.Vg, self.theta, self.q, self.nx, self.nz, self.z])

    @classmethod
    def from_array(cls, a) -> "FlightParams":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]), float(a[4]), float(a[5]))


@dataclass(frozen=True)
class EstimState:
    alpha: float
    Wx: float
    Wz: float

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.Wx, self.Wz])

    @classmethod
    def from_array(cls, a) -> "EstimState":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class ProcessInput:
    u_alpha: float = 0.0
    u_wx: float = 0.0
    u_wz: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.u_alpha, self.u_wx, self.u_wz])

    @classmethod
    def from_array(cls, a) -> "ProcessInput":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class OutputVec:
    alpha: float
    Vz: float
    Vc: float

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.Vz, self.Vc])


@dataclass(frozen=True)
class AtmoState:
    p: float
    T: float
    rho: float
    a: float


def isa_atmosphere(z: float) -> AtmoState:
    """Two-layer ICAO standard atmosphere (troposphere + lower stratosphere)."""
    if not 0.0 <= z <= Z_MAX:
        raise ModelDomainError(f"altitude {z:.1f} m outside [0, {Z_MAX:.0f}] m")
    if z <= TROPOPAUSE:
        T = T0 + LAPSE * z
        p = P0 * (T / T0) ** (-G0 / (LAPSE * R_AIR))
    else:
        T = T_STRAT
        p = P_TROP * math.exp(-G0 * (z - TROPOPAUSE) / (R_AIR * T_STRAT))
    return AtmoState(p=p, T=T, rho=p / (R_AIR * T), a=math.sqrt(GAMMA * R_AIR * T))


def cas_from_tas(v_tas: float, z: float) -> float:
    atmo = isa_atmosphere(z)
    mach = v_tas / atmo.a
    if mach >= 1.0:
        raise ModelDomainError(f"Mach {mach:.3f} is not subsonic")
    qc = atmo.p * ((1.0 + 0.2 * mach * mach) ** 3.5 - 1.0)
    return A0 * math.sqrt(5.0 * ((qc / P0 + 1.0) ** (2.0 / 7.0) - 1.0))


def tas_from_cas(v_cas: float, z: float) -> float:
    """Inverse of cas_from_tas."""
    atmo = isa_atmosphere(z)
    qc = P0 * ((1.0 + 0.2 * (v_cas / A0) ** 2) ** 3.5 - 1.0)
    mach = math.sqrt(5.0 * ((qc / atmo.p + 1.0) ** (2.0 / 7.0) - 1.0))
    if mach >= 1.0:
        raise ModelDomainError(f"Mach {mach:.3f} is not subsonic")
    return mach * atmo.a


def vcas_derivative(v_tas: float, z: float) -> float:
    """dVc/dV_TAS through the impact-pressure chain."""
    atmo = isa_atmosphere(z)
    mach = v_tas / atmo.a
    if mach >= 1.0:
        raise ModelDomainError(f"Mach {mach:.3f} is not subsonic")
    base = 1.0 + 0.2 * mach * mach
    qc = atmo.p * (base ** 3.5 - 1.0)
    X = qc / P0 + 1.0
    sqrt_s = math.sqrt(5.0 * (X ** (2.0 / 7.0) - 1.0))
    dvc_dx = 5.0 * A0 / (7.0 * sqrt_s) * X ** (-5.0 / 7.0)
    dqc_dm = 1.4 * atmo.p * mach * base ** 2.5
    return dvc_dx / P0 * dqc_dm / atmo.a


def tas_from_state(x: EstimState, th: FlightParams) -> float:
    cos_g = math.cos(th.theta - x.alpha)
    if cos_g <= EPS_COS:
        raise SingularGeometryError(f"cos(theta - alpha) = {cos_g:.2e} below {EPS_COS}")
    v_rel = th.Vg - x.Wx
    if v_rel <= 0.0:
        raise SingularGeometryError(f"Vg={th.Vg:.2f} m/s does not exceed Wx={x.Wx:.2f} m/s")
    return v_rel / cos_g


def h_output(x: EstimState, th: FlightParams) -> OutputVec:
    v_tas = tas_from_state(x, th)
    vz = (th.Vg - x.Wx) * math.tan(th.theta - x.alpha) + x.Wz
    return OutputVec(alpha=x.alpha, Vz=vz, Vc=cas_from_tas(v_tas, th.z))


def f_alpha(alpha: float, th: FlightParams, v_min: float = V_MIN) -> float:
    """Kinematic AOA rate from pitch rate and load factors."""
    if th.Vg <= v_min:
        raise ModelDomainError(f"Vg={th.Vg:.2f} m/s at or below floor {v_min:.1f} m/s")
    return th.q + (G0 / th.Vg) * (
        math.cos(th.theta - alpha) - th.nz * math.cos(alpha) - th.nx * math.sin(alpha)
    )


def _df_dalpha(alpha: float, th: FlightParams, v_min: float) -> float:
    if th.Vg <= v_min:
        raise ModelDomainError(f"Vg={th.Vg:.2f} m/s at or below floor {v_min:.1f} m/s")
    return (G0 / th.Vg) * (
        math.sin(th.theta - alpha) + th.nz * math.sin(alpha) - th.nx * math.cos(alpha)
    )


def discrete_step(
    x: EstimState, u: ProcessInput, th: FlightParams, ts: float, v_min: float = V_MIN
) -> EstimState:
    """Forward-Euler discretization F(x, u, Theta)."""
    if ts <= 0.0:
        raise ValueError(f"sampling interval must be positive, got {ts}")
    return EstimState(
        alpha=x.alpha + ts * f_alpha(x.alpha, th, v_min) + ts * u.u_alpha,
        Wx=x.Wx + ts * u.u_wx,
        Wz=x.Wz + ts * u.u_wz,
    )


def jacobian_A(x: EstimState, th: FlightParams, ts: float, v_min: float = V_MIN) -> np.ndarray:
    A = np.eye(3)
    A[0, 0] = 1.0 + ts * _df_dalpha(x.alpha, th, v_min)
    return A


def jacobian_C(
    x: EstimState, th: FlightParams, sensor_mask: SensorMask | None = None
) -> np.ndarray:
    """
    Output Jacobian with C(2,2) and C(3,3) forced to zero.

    Row 1 (AOA) or row 3 (VCAS) is zeroed when the mask reports that every
    sensor of that family has been isolated.
    """
    v_tas = tas_from_state(x, th)
    gam = th.theta - x.alpha
    cos_g = math.cos(gam)
    tan_g = math.tan(gam)
    dvc = vcas_derivative(v_tas, th.z)

    C = np.zeros((3, 3))
    C[0, 0] = 1.0
    C[1, 0] = -(th.Vg - x.Wx) / (cos_g * cos_g)
    C[1, 2] = 1.0
    C[2, 0] = -dvc * v_tas * tan_g
    C[2, 1] = -dvc / cos_g

    if sensor_mask is not None:
        if not sensor_mask.aoa_available:
            C[0, :] = 0.0
        if not sensor_mask.vcas_available:
            C[2, :] = 0.0
    return C
