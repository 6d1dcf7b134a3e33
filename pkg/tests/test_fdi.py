"""Tests for residual generation, detection, isolation and fusion."""

import math

import numpy as np
import pytest

from src.models.schemas import CHANNELS, DetectorConfig, Weights
from src.services.airmodel import OutputVec
from src.services.fdi import (
    J_FLOOR,
    SensorMask,
    SensorReadings,
    detect,
    fuse,
    new_sensor_bank,
    sensor_mask,
    update_residuals,
)

PRED = OutputVec(alpha=0.05, Vz=0.0, Vc=120.0)


def _readings(d_alpha=(0.0, 0.0, 0.0), d_vc=(0.0, 0.0, 0.0)) -> SensorReadings:
    return SensorReadings(
        alpha=tuple(PRED.alpha + d for d in d_alpha),
        vc=tuple(PRED.Vc + d for d in d_vc),
        vz=0.0,
    )


def _feed(bank, readings: SensorReadings, samples: int) -> list[list[str]]:
    out = []
    for _ in range(samples):
        update_residuals(bank, readings, PRED)
        out.append(detect(bank))
    return out


class TestResiduals:
    def test_rms_over_full_window(self):
        bank = new_sensor_bank(DetectorConfig(N_eval=10, n_d=5))
        _feed(bank, _readings(d_alpha=(0.01, 0.0, -0.02)), 10)
        assert bank.J[0] == pytest.approx(0.01)
        assert bank.J[1] == 0.0
        assert bank.J[2] == pytest.approx(0.02)

    def test_rms_divides_by_window_while_filling(self):
        bank = new_sensor_bank(DetectorConfig(N_eval=10, n_d=5))
        _feed(bank, _readings(d_vc=(1.0, 0.0, 0.0)), 5)
        assert bank.J[3] == pytest.approx(math.sqrt(5 / 10))

    def test_ring_forgets_old_residuals(self):
        bank = new_sensor_bank(DetectorConfig(N_eval=4, n_d=2))
        _feed(bank, _readings(d_vc=(2.0, 0.0, 0.0)), 4)
        _feed(bank, _readings(), 4)
        assert bank.J[3] == 0.0


class TestDetection:
    def test_nothing_recorded_before_window_fills(self):
        cfg = DetectorConfig(N_eval=10, n_d=5)
        bank = new_sensor_bank(cfg)
        flags = _feed(bank, _readings(d_alpha=(0.5, 0.0, 0.0)), 14)

        assert all(f == [] for f in flags[:13])
        assert flags[13] == ["alpha1"]
        assert bank.health_flags() == {ch: ch != "alpha1" for ch in CHANNELS}

    def test_isolation_needs_n_d_exceedances(self):
        cfg = DetectorConfig(N_eval=10, n_d=5)
        bank = new_sensor_bank(cfg)
        _feed(bank, _readings(), 10)
        flags = _feed(bank, _readings(d_vc=(0.0, 50.0, 0.0)), 10)
        first = next(i for i, f in enumerate(flags) if f)
        assert flags[first] == ["vc2"]
        assert bank.confirm[4] >= cfg.n_d

    def test_small_residuals_never_flag(self):
        bank = new_sensor_bank(DetectorConfig())
        flags = _feed(bank, _readings(d_alpha=(0.01, -0.01, 0.02), d_vc=(3.0, -3.0, 1.0)), 200)
        assert not any(flags)
        assert bank.healthy.all()

    def test_latched_flag_stays_down(self):
        bank = new_sensor_bank(DetectorConfig(N_eval=10, n_d=5, latch=True))
        _feed(bank, _readings(d_alpha=(0.5, 0.0, 0.0)), 20)
        assert not bank.healthy[0]
        flags = _feed(bank, _readings(), 50)
        assert not any(flags)
        assert not bank.healthy[0]

    def test_unlatched_flag_recovers(self):
        bank = new_sensor_bank(DetectorConfig(N_eval=10, n_d=5, latch=False))
        _feed(bank, _readings(d_alpha=(0.5, 0.0, 0.0)), 20)
        assert not bank.healthy[0]
        _feed(bank, _readings(), 50)
        assert bank.healthy[0]

    def test_isolated_channel_reported_once(self):
        bank = new_sensor_bank(DetectorConfig(N_eval=10, n_d=5))
        flags = _feed(bank, _readings(d_alpha=(0.5, 0.0, 0.0)), 60)
        assert sum(f.count("alpha1") for f in flags) == 1

    def test_gaussian_noise_gives_no_false_alarms(self):
        rng = np.random.default_rng(11)
        bank = new_sensor_bank(DetectorConfig())
        sigma_a, sigma_v = math.radians(0.057), 0.5 * 0.514444
        for _ in range(5000):
            update_residuals(
                bank,
                _readings(d_alpha=tuple(rng.normal(0.0, sigma_a, 3)), d_vc=tuple(rng.normal(0.0, sigma_v, 3))),
                PRED,
            )
            assert detect(bank) == []
        assert bank.healthy.all()


class TestFusion:
    def test_weights_properties_over_random_rms(self):
        rng = np.random.default_rng(5)
        weights = Weights()
        bank = new_sensor_bank(DetectorConfig())
        readings = _readings(d_alpha=(0.001, -0.002, 0.003), d_vc=(0.3, -0.2, 0.1))

        for _ in range(10_000):
            bank.J[:] = 10.0 ** rng.uniform(-8.0, 0.0, 6)
            healthy = rng.random(6) < 0.8
            healthy[rng.integers(0, 3)] = True
            healthy[3 + rng.integers(0, 3)] = True
            bank.healthy[:] = healthy

            fused = fuse(bank, readings, weights)
            for beta, idx, R_base, R_eff in (
                (np.array(fused.beta_alpha), slice(0, 3), weights.R_alpha, fused.R_alpha_eff),
                (np.array(fused.beta_vc), slice(3, 6), weights.R_vc, fused.R_vc_eff),
            ):
                assert beta.sum() == pytest.approx(1.0)
                assert np.all(beta >= 0.0)
                assert np.all(beta[~healthy[idx]] == 0.0)
                assert R_eff <= R_base * (1.0 + 1e-12)

            i = int(rng.integers(0, 6))
            if healthy[i]:
                before = (fused.beta_alpha + fused.beta_vc)[i]
                bank.J[i] *= 2.0
                after_fused = fuse(bank, readings, weights)
                after = (after_fused.beta_alpha + after_fused.beta_vc)[i]
                family = healthy[0:3] if i < 3 else healthy[3:6]
                if family.sum() > 1 and bank.J[i] / 2.0 > J_FLOOR:
                    assert after < before
                else:
                    assert after <= before

    def test_fused_value_is_weighted_mean(self):
        weights = Weights()
        bank = new_sensor_bank(DetectorConfig())
        bank.J[:] = [0.01, 0.02, 0.02, 1.0, 1.0, 2.0]
        fused = fuse(bank, _readings(d_alpha=(0.0, 0.03, 0.03), d_vc=(0.0, 3.0, 6.0)), weights)
        assert fused.beta_alpha == pytest.approx((2 / 3, 1 / 6, 1 / 6))
        assert fused.alpha_m == pytest.approx(PRED.alpha + 0.01)
        assert fused.beta_vc == pytest.approx((4 / 9, 4 / 9, 1 / 9))
        assert fused.Vc_m == pytest.approx(PRED.Vc + 2.0)

    def test_equal_rms_gives_equal_weights(self):
        weights = Weights()
        bank = new_sensor_bank(DetectorConfig())
        fused = fuse(bank, _readings(), weights)
        assert fused.beta_alpha == pytest.approx((1 / 3,) * 3)
        assert fused.R_alpha_eff == pytest.approx(weights.R_alpha / 3)

    def test_lost_family(self):
        weights = Weights()
        bank = new_sensor_bank(DetectorConfig())
        bank.healthy[0:3] = False
        fused = fuse(bank, _readings(), weights)

        assert math.isnan(fused.alpha_m)
        assert fused.R_alpha_eff == weights.R_alpha
        assert not fused.aoa_available
        assert fused.vcas_available
        assert fused.Vc_m == pytest.approx(PRED.Vc)

        mask = sensor_mask(bank)
        assert mask.kind == "aoa-lost"
        assert mask.estimation_unreliable
        assert not mask.wx_discard


class TestSensorMask:
    @pytest.mark.parametrize(
        "aoa, vcas, kind",
        [(True, True, "all-available"), (True, False, "vcas-lost"), (False, True, "aoa-lost"), (False, False, "both-lost")],
    )
    def test_kinds(self, aoa, vcas, kind):
        mask = SensorMask(aoa_available=aoa, vcas_available=vcas)
        assert mask.kind == kind
        assert mask.wx_discard == (not vcas)
        assert mask.estimation_unreliable == (not aoa)
