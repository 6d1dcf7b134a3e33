"""
Synthetic parameter trajectories and wind fields for the truth simulator.

A maneuver is described by smooth analytic profiles of the reference AOA,
the air-path angle gamma = theta - alpha and the ground speed. The inertial
parameters follow from them: q = d(gamma)/dt + d(alpha)/dt, nx = dVg/dt / g,
and nz is chosen so the kinematic AOA rate reproduces the reference.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import ScenarioInfeasibleError
from ..models.schemas import TrajectorySpec, WindSpec
from ..utils.units import deg_to_rad, kts_to_ms
from .airmodel import G0

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Harmonic:
    """offset + a*sin(w t) + b*cos(w t), with its time derivative."""
    offset: float = 0.0
    a: float = 0.0
    b: float = 0.0
    omega: float = 0.0

    def value(self, t):
        wt = self.omega * np.asarray(t, dtype=float)
        return self.offset + self.a * np.sin(wt) + self.b * np.cos(wt)

    def rate(self, t):
        wt = self.omega * np.asarray(t, dtype=float)
        return self.omega * (self.a * np.cos(wt) - self.b * np.sin(wt))


@dataclass(frozen=True)
class ManeuverProfile:
    alpha: Harmonic
    gamma: Harmonic
    vg: Harmonic
    mismatch: Harmonic = Harmonic()

    def inertial(self, t) -> dict[str, np.ndarray]:
        """Vg, theta, q, nx, nz and the reference AOA at times ``t``."""
        alpha = self.alpha.value(t)
        alpha_dot = self.alpha.rate(t)
        gamma = self.gamma.value(t)
        gamma_dot = self.gamma.rate(t)
        vg = self.vg.value(t)
        nx = self.vg.rate(t) / G0
        nz = (np.cos(gamma) - nx * np.sin(alpha) + gamma_dot * vg / G0) / np.cos(alpha)
        return {
            "Vg": vg,
            "theta": gamma + alpha,
            "q": gamma_dot + alpha_dot,
            "nx": nx,
            "nz": nz,
            "alpha_ref": alpha,
        }


def build_maneuver(spec: TrajectorySpec, vg0: float) -> ManeuverProfile:
    """
    Archetypes:
        level              constant trim
        load_factor        periodic pull-up/push-over, AOA follows the load
        flight_path_angle  repeated climb segments with small AOA changes
        vertical_speed     climb/descent cycle with a ground-speed swing
        aoa_protection     slow AOA build-up toward high incidence while decelerating
    """
    a0 = deg_to_rad(spec.alpha_trim_deg)
    amp = deg_to_rad(spec.amplitude_deg)
    w = 2.0 * math.pi / spec.period_s
    mismatch = Harmonic(a=deg_to_rad(spec.mismatch_deg_s), omega=2.0 * math.pi / spec.mismatch_period_s)

    if spec.maneuver == "level":
        alpha, gamma, vg = Harmonic(a0), Harmonic(), Harmonic(vg0)
    elif spec.maneuver == "load_factor":
        alpha = Harmonic(a0, a=0.5 * amp, omega=w)
        gamma = Harmonic(a=amp, omega=w)
        vg = Harmonic(vg0)
    elif spec.maneuver == "flight_path_angle":
        alpha = Harmonic(a0, a=0.25 * amp, omega=w)
        gamma = Harmonic(0.5 * amp, b=-0.5 * amp, omega=w)
        vg = Harmonic(0.99 * vg0, b=0.01 * vg0, omega=w)
    elif spec.maneuver == "vertical_speed":
        alpha = Harmonic(a0, a=0.2 * amp, omega=w)
        gamma = Harmonic(0.5 * amp, b=-0.5 * amp, omega=0.5 * w)
        vg = Harmonic(vg0, a=0.02 * vg0, omega=w)
    elif spec.maneuver == "aoa_protection":
        alpha = Harmonic(a0 + 0.5 * amp, b=-0.5 * amp, omega=w)
        gamma = Harmonic(a=0.5 * amp, omega=w)
        vg = Harmonic(vg0 * 0.975, b=0.025 * vg0, omega=w)
    else:
        raise ValueError(f"unknown maneuver '{spec.maneuver}'")

    return ManeuverProfile(alpha=alpha, gamma=gamma, vg=vg, mismatch=mismatch)


class WindField:
    """
    Horizontal and vertical wind truth as functions of time.

    Kinds: constant, shear_ramp (linear ramp from 0 to peak), gust_sinusoid
    (zero-mean sine from the start time), filtered_noise (seeded white noise
    through two cascaded first-order lags, normalized to the peak and slew
    limited to ``rate_max_kts_s``, interpolated between grid points).
    """

    def __init__(self, spec: WindSpec, duration: float, dt: float):
        self.spec = spec
        self.x_peak = kts_to_ms(spec.x_peak_kts)
        self.z_peak = kts_to_ms(spec.z_peak_kts)
        self.rate_max = kts_to_ms(spec.rate_max_kts_s)
        self._grid = None
        if spec.kind == "filtered_noise":
            self._grid = np.arange(0.0, duration + 2.0 * dt, dt)
            self._noise = np.stack(
                [self._filtered_noise(axis, dt, peak) for axis, peak in enumerate((self.x_peak, self.z_peak))]
            )

    def _filtered_noise(self, axis: int, dt: float, peak: float) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([self.spec.seed, 100 + axis])))
        tau = 1.0 / (2.0 * math.pi * self.spec.bandwidth_hz)
        decay = math.exp(-dt / tau)
        drive = math.sqrt(1.0 - decay * decay)
        white = rng.standard_normal(self._grid.size)
        shaped = np.empty_like(white)
        acc1 = acc2 = 0.0
        for k, e in enumerate(white):
            acc1 = decay * acc1 + drive * e
            acc2 = decay * acc2 + (1.0 - decay) * acc1
            shaped[k] = acc2
        top = np.max(np.abs(shaped))
        if top == 0.0 or peak == 0.0:
            return shaped
        shaped /= top

        # a slew-limited follower of a signal in [-1, 1] stays in [-1, 1]
        max_step = self.rate_max * dt / abs(peak)
        out = np.empty_like(shaped)
        y = shaped[0]
        for k, target in enumerate(shaped):
            y += min(max(target - y, -max_step), max_step)
            out[k] = y
        return out

    def _shape(self, t, axis: int) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        s = self.spec
        if s.kind == "constant":
            return np.ones_like(t)
        if s.kind == "shear_ramp":
            return np.clip((t - s.start_s) / s.ramp_s, 0.0, 1.0)
        if s.kind == "gust_sinusoid":
            return np.where(t >= s.start_s, np.sin(2.0 * math.pi * s.frequency_hz * (t - s.start_s)), 0.0)
        return np.interp(t, self._grid, self._noise[axis])

    def wx(self, t) -> np.ndarray:
        return self.x_peak * self._shape(t, 0)

    def wz(self, t) -> np.ndarray:
        return self.z_peak * self._shape(t, 1)

    def check_envelope(self, t: np.ndarray) -> None:
        """Raise at the first sample where the wind or its rate leaves the declared envelope."""
        t = np.asarray(t, dtype=float)
        wx, wz = self.wx(t), self.wz(t)
        limit = kts_to_ms(self.spec.envelope_kts)
        over = (np.abs(wx) > limit) | (np.abs(wz) > limit)

        rate_limit = self.rate_max * (1.0 + 1e-9)
        dt = np.diff(t)
        fast = np.zeros_like(over)
        if t.size > 1:
            fast[1:] = (np.abs(np.diff(wx)) > rate_limit * dt) | (np.abs(np.diff(wz)) > rate_limit * dt)

        if over.any() or fast.any():
            k_over = int(np.flatnonzero(over)[0]) if over.any() else t.size
            k_fast = int(np.flatnonzero(fast)[0]) if fast.any() else t.size
            if k_over <= k_fast:
                raise ScenarioInfeasibleError(k_over, f"wind exceeds the {self.spec.envelope_kts:g} kts envelope")
            raise ScenarioInfeasibleError(k_fast, f"wind changes faster than {self.spec.rate_max_kts_s:g} kts/s")
