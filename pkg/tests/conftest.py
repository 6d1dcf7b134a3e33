"""Shared fixtures and builders for the test suite."""

import math
from pathlib import Path

import numpy as np
import pytest

from src.config import get_settings
from src.models.schemas import ScenarioConfig, Weights
from src.services.airmodel import EstimState, FlightParams, h_output
from src.services.fdi import FusedMeasurement

ROOT = Path(__file__).resolve().parent.parent
PRESETS_DIR = ROOT / "presets"


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Point every run at a temporary output directory."""
    monkeypatch.setenv("MHE_FDI_OUTPUT_DIR", str(tmp_path / "outputs"))
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def scenario_config(duration_s: float = 4.0, faults=None, **sections) -> ScenarioConfig:
    """A short level-flight scenario; keyword sections override or extend the defaults."""
    data = {
        "scenario": {"name": "test", "duration_s": duration_s, "ts_s": 0.04, "seed": 7},
        "trajectory": {"maneuver": "level", "altitude_ft": 10000, "speed_kts": 250},
        "faults": list(faults or []),
    }
    for key, values in sections.items():
        data.setdefault(key, {}).update(values)
    return ScenarioConfig.model_validate(data)


def level_params(alpha: float = 0.05, Vg: float = 150.0, z: float = 3000.0) -> FlightParams:
    """Steady level flight: zero air-path angle and a load factor that holds alpha constant."""
    return FlightParams(Vg=Vg, theta=alpha, q=0.0, nx=0.0, nz=1.0 / math.cos(alpha), z=z)


def exact_measurement(
    x: EstimState,
    th: FlightParams,
    weights: Weights,
    aoa: bool = True,
    vcas: bool = True,
) -> FusedMeasurement:
    """Noise-free fused measurement of ``x``, optionally with a family missing."""
    y = h_output(x, th)
    third = (1.0 / 3.0,) * 3
    none = (0.0,) * 3
    return FusedMeasurement(
        alpha_m=y.alpha if aoa else math.nan,
        Vz_m=y.Vz,
        Vc_m=y.Vc if vcas else math.nan,
        beta_alpha=third if aoa else none,
        beta_vc=third if vcas else none,
        R_alpha_eff=weights.R_alpha / 3.0 if aoa else weights.R_alpha,
        R_vz=weights.R_vz,
        R_vc_eff=weights.R_vc / 3.0 if vcas else weights.R_vc,
        aoa_available=aoa,
        vcas_available=vcas,
    )


PRESET_TEMPLATE = """\
[scenario]
name = {name}
duration_s = {duration}
ts_s = 0.04
seed = {seed}

[trajectory]
maneuver = level
altitude_ft = 10000
speed_kts = 250

[noise]
alpha_deg = 0
vz_ms = 0
vc_kts = 0

[estimator]
init_from_truth = true

{extra}
"""


def write_preset(directory: Path, name: str, duration: float = 2.0, seed: int = 1, extra: str = "") -> Path:
    """Write a short zero-noise preset file and return its path."""
    path = Path(directory) / f"{name}.ini"
    path.write_text(PRESET_TEMPLATE.format(name=name, duration=duration, seed=seed, extra=extra), encoding="utf-8")
    return path
