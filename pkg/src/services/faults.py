"""
Additive sensor fault models: bias, oscillation, runaway, jamming and NRZ.

Every fault is expressed as an additive signal on top of the clean reading,
so a trace always satisfies corrupted = clean + fault + noise. Jamming is
the additive difference between the held value and the clean reading.
"""

import logging
import math
from functools import lru_cache
from typing import Optional

import numpy as np

from ..models.schemas import CHANNELS, FaultProfile

logger = logging.getLogger(__name__)

N_STREAMS = len(CHANNELS) + 1  # six redundant channels plus V_z


@lru_cache(maxsize=64)
def _nrz_switch_offsets(seed: int, target: str, dwell_min: float, dwell_max: float, count: int) -> np.ndarray:
    """Cumulative dwell times after onset; draws are prefix-stable in ``count``."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, CHANNELS.index(target)])))
    dwells = rng.uniform(dwell_min, dwell_max, size=count)
    out = np.cumsum(dwells)
    out.setflags(write=False)
    return out


def nrz_sign(profile: FaultProfile, elapsed) -> np.ndarray:
    """Telegraph sign +1/-1 at ``elapsed`` seconds after onset (vectorized)."""
    elapsed = np.asarray(elapsed, dtype=float)
    horizon = float(np.max(elapsed, initial=0.0))
    count = 16
    while count * profile.dwell_min <= horizon:
        count *= 2
    switches = _nrz_switch_offsets(profile.seed, profile.target, profile.dwell_min, profile.dwell_max, count)
    flips = np.searchsorted(switches, elapsed, side="right")
    return np.where(flips % 2 == 0, 1.0, -1.0)


def fault_signal(
    profile: FaultProfile,
    t,
    clean,
    held: Optional[float] = None,
) -> np.ndarray:
    """
    Additive fault at times ``t`` for the clean readings ``clean``.

    ``held`` is the clean reading at onset, used by jamming. It defaults to
    the first clean sample at or after t_on.
    """
    t = np.asarray(t, dtype=float)
    clean = np.asarray(clean, dtype=float)
    active = t >= profile.t_on
    if profile.t_off is not None:
        active &= t < profile.t_off
    elapsed = np.where(active, t - profile.t_on, 0.0)

    if profile.kind == "bias":
        signal = np.full_like(t, profile.amplitude)
    elif profile.kind == "oscillation":
        signal = profile.amplitude * np.sin(2.0 * math.pi * profile.frequency * elapsed)
    elif profile.kind == "runaway":
        signal = profile.slope * elapsed
        if profile.limit is not None:
            signal = np.clip(signal, -abs(profile.limit), abs(profile.limit))
    elif profile.kind == "jamming":
        if held is None:
            onset = np.flatnonzero(t >= profile.t_on)
            held = float(np.atleast_1d(clean)[onset[0]]) if onset.size else 0.0
        signal = held + profile.offset - clean
    elif profile.kind == "nrz":
        signal = profile.amplitude * nrz_sign(profile, elapsed)
    else:
        raise ValueError(f"unknown fault kind '{profile.kind}'")

    return np.where(active, signal, 0.0)


def inject_fault(profile: FaultProfile, t: float, clean: float, held: Optional[float] = None) -> float:
    """Faulty reading of one channel at time ``t``."""
    if profile.kind == "jamming" and held is None and t >= profile.t_on:
        raise ValueError("jamming needs the clean reading held at onset")
    return float(clean + fault_signal(profile, t, clean, held))


class FaultInjector:
    """Applies a set of fault profiles to the sampled clean channel streams."""

    def __init__(self, profiles: list[FaultProfile]):
        self.profiles = list(profiles)

    def apply(self, t: np.ndarray, clean: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Args:
            t: Sample times, shape (n,).
            clean: Clean streams, shape (n, 7) in ``CHANNELS`` order plus V_z.

        Returns:
            (additive fault signal (n, 7), activity mask (n, 7))
        """
        fault = np.zeros_like(clean)
        active = np.zeros(clean.shape, dtype=bool)
        for profile in self.profiles:
            j = CHANNELS.index(profile.target)
            fault[:, j] += fault_signal(profile, t, clean[:, j])
            on = t >= profile.t_on
            if profile.t_off is not None:
                on &= t < profile.t_off
            active[:, j] |= on
            logger.debug(f"{profile.kind} fault on {profile.target} from t={profile.t_on}s")
        return fault, active
