import math

import numpy as np
import pytest

from swiptsec.sysmodel import (
    DesignPoint, SystemParams, check_feasibility, eh_forward, eh_input_power,
    eh_pseudo_inverse, noise_cov_bob, noise_cov_eve, rate_bob, rate_eve,
    reflect_power, secrecy_sum_rate, tx_power,
)
from conftest import random_channels, random_point, small_params


def logdet2(a):
    sign, val = np.linalg.slogdet(a)
    assert sign.real > 0
    return val / math.log(2)


def decomposition_oracle(dp, ch, params):
    """Unclamped secrecy rate via the four-term split (independent evaluation)."""
    from swiptsec.channel import effective_cfr
    eff = effective_cfr(ch, dp.reflect)
    total = 0.0
    eye_e = np.eye(params.n_eve)
    for k in range(params.n_sub):
        hb = eff.bob[k] @ dp.precoders[k]
        ha_b = eff.bob[k] @ dp.an_precoders[k]
        he = eff.eve[k] @ dp.precoders[k]
        ha_e = eff.eve[k] @ dp.an_precoders[k]
        rphi_b = ch.irs_bob[k] @ np.diag(dp.reflect)
        rphi_e = ch.irs_eve[k] @ np.diag(dp.reflect)
        d = np.clip(dp.split, 1e-6, 1.0)
        gam = (ha_b @ ha_b.conj().T + params.noise_irs * rphi_b @ rphi_b.conj().T
               + params.noise_ant * np.eye(params.n_rx) + params.noise_sp * np.diag(1 / d))
        i1 = logdet2(np.eye(params.n_rx) + hb @ hb.conj().T @ np.linalg.inv(gam))
        gbar = params.noise_eve * eye_e + params.noise_irs * rphi_e @ rphi_e.conj().T
        i2 = logdet2(eye_e + ha_e @ ha_e.conj().T @ np.linalg.inv(gbar))
        i3 = logdet2(eye_e + (params.noise_irs / params.noise_eve) * rphi_e @ rphi_e.conj().T)
        gam_e = ha_e @ ha_e.conj().T + params.noise_irs * rphi_e @ rphi_e.conj().T + params.noise_eve * eye_e
        i4 = -logdet2(gam_e + he @ he.conj().T)
        kappa1 = params.n_eve * math.log2(params.noise_eve)
        total += i1 + i2 + i3 + i4 + kappa1
    return total


class TestNoiseCov:
    def test_idle_point_is_thermal(self, params, channels):
        dp = DesignPoint.zeros(params)
        cov = noise_cov_bob(dp, channels, params)
        expect = (params.noise_ant + params.noise_sp) * np.eye(params.n_rx)
        for k in range(params.n_sub):
            np.testing.assert_allclose(cov[k], expect, atol=1e-15)

    def test_small_split_dominated_by_processing_noise(self, params, channels):
        dp = DesignPoint.zeros(params)
        dp.split = np.array([1e-4, 1.0])
        cov = noise_cov_bob(dp, channels, params)
        assert cov[0, 0, 0].real == pytest.approx(params.noise_sp / 1e-4 + params.noise_ant, rel=1e-9)
        assert cov[0, 1, 1].real == pytest.approx(params.noise_sp + params.noise_ant, rel=1e-9)

    def test_split_floor_prevents_overflow(self, params, channels):
        dp = DesignPoint.zeros(params)
        dp.split = np.array([0.0, 1.0])
        cov = noise_cov_bob(dp, channels, params)
        assert np.isfinite(cov).all()
        assert cov[0, 0, 0].real == pytest.approx(params.noise_sp / 1e-6, rel=1e-6)

    def test_hermitian(self, params, channels):
        dp = random_point(params, seed=3)
        for cov in (noise_cov_bob(dp, channels, params), noise_cov_eve(dp, channels, params)):
            assert np.max(np.abs(cov - np.conj(np.swapaxes(cov, 1, 2)))) < 1e-12
            for k in range(params.n_sub):
                assert np.linalg.eigvalsh(cov[k]).min() > 0


class TestRates:
    def test_zero_precoder_zero_rate(self, params, channels):
        dp = random_point(params, seed=1)
        dp.precoders[:] = 0
        assert np.all(rate_bob(dp, channels, params) == 0)
        assert np.all(rate_eve(dp, channels, params) == 0)

    def test_scalar_reduction(self):
        params = small_params(n_sub=1, n_tx=1, n_rx=1, n_eve=1, n_elem=1)
        ch = random_channels(params, seed=5)
        dp = DesignPoint.zeros(params)
        dp.precoders[0, 0, 0] = 0.4 + 0.1j
        dp.split = np.array([0.8])
        h = ch.alice_bob[0, 0, 0]
        gamma = params.noise_ant + params.noise_sp / 0.8
        expect = math.log2(1 + abs(h * dp.precoders[0, 0, 0]) ** 2 / gamma)
        assert rate_bob(dp, ch, params)[0] == pytest.approx(expect, rel=1e-12)

    def test_matches_eigenvalue_route(self, params, channels):
        dp = random_point(params, seed=7)
        got = rate_bob(dp, channels, params)
        from swiptsec.channel import effective_cfr
        eff = effective_cfr(channels, dp.reflect)
        cov = noise_cov_bob(dp, channels, params, eff)
        for k in range(params.n_sub):
            hb = eff.bob[k] @ dp.precoders[k]
            # whiten then read the rate off the eigenvalues
            w = np.linalg.cholesky(np.linalg.inv(cov[k]))
            m = w.conj().T @ hb @ hb.conj().T @ w
            lam = np.clip(np.linalg.eigvalsh(m), 0, None)
            expect = float(np.sum(np.log2(1 + lam)))
            assert got[k] == pytest.approx(expect, rel=1e-9)

    def test_unitary_rotation_invariance(self, params, channels):
        dp = random_point(params, seed=9)
        rng = np.random.default_rng(0)
        a = rng.standard_normal((params.n_streams, params.n_streams)) \
            + 1j * rng.standard_normal((params.n_streams, params.n_streams))
        q, _ = np.linalg.qr(a)
        rot = dp.copy()
        rot.precoders = dp.precoders @ q
        assert np.max(np.abs(rate_bob(rot, channels, params) - rate_bob(dp, channels, params))) < 1e-9
        assert np.max(np.abs(rate_eve(rot, channels, params) - rate_eve(dp, channels, params))) < 1e-9

    def test_zero_forced_eve_rate(self, params, channels):
        # information beams in the eavesdropper's null space leak nothing
        from swiptsec.channel import effective_cfr
        dp = random_point(params, seed=13)
        dp.an_precoders[:] = 0
        eff = effective_cfr(channels, dp.reflect)
        for k in range(params.n_sub):
            _, _, vh = np.linalg.svd(eff.eve[k])
            null = vh[params.n_eve:].conj().T
            dp.precoders[k] = null @ np.ones((null.shape[1], params.n_streams)) * 0.1
        assert np.max(rate_eve(dp, channels, params)) < 1e-9


class TestSecrecy:
    def test_eve_channel_zeroed(self, params, channels):
        dp = random_point(params, seed=15)
        zch = channels.zero_eve()
        expect = float(np.sum(rate_bob(dp, zch, params)))
        assert secrecy_sum_rate(dp, zch, params) == pytest.approx(expect, rel=1e-12)

    def test_zero_point(self, params, channels):
        dp = DesignPoint.zeros(params)
        assert secrecy_sum_rate(dp, channels, params) == 0.0

    def test_matches_decomposition(self, params, channels):
        for seed in range(6):
            dp = random_point(params, seed=seed)
            got = secrecy_sum_rate(dp, channels, params, clamp=False)
            expect = decomposition_oracle(dp, channels, params)
            assert got == pytest.approx(expect, abs=1e-8)

    def test_clamp_never_below_unclamped(self, params, channels):
        dp = random_point(params, seed=21, tx_scale=0.02)
        clamped = secrecy_sum_rate(dp, channels, params, clamp=True)
        raw = secrecy_sum_rate(dp, channels, params, clamp=False)
        assert clamped >= raw - 1e-12
        assert clamped >= 0


class TestEnergyHarvesting:
    def test_all_to_decoder_harvests_nothing(self, params, channels):
        dp = random_point(params, seed=2)
        dp.split = np.ones(params.n_rx)
        assert eh_input_power(dp, channels, params) == pytest.approx(0.0, abs=1e-18)

    def test_idle_point_antenna_noise_only(self, params, channels):
        dp = DesignPoint.zeros(params)
        dp.split = np.zeros(params.n_rx)
        expect = params.n_sub * params.n_rx * params.noise_ant
        assert eh_input_power(dp, channels, params) == pytest.approx(expect, rel=1e-12)

    def test_entrywise_trace_oracle(self, params, channels):
        from swiptsec.channel import effective_cfr
        dp = random_point(params, seed=4)
        eff = effective_cfr(channels, dp.reflect)
        expect = 0.0
        for k in range(params.n_sub):
            cov = (eff.bob[k] @ dp.precoders[k] @ dp.precoders[k].conj().T @ eff.bob[k].conj().T
                   + eff.bob[k] @ dp.an_precoders[k] @ dp.an_precoders[k].conj().T @ eff.bob[k].conj().T
                   + params.noise_irs * channels.irs_bob[k] @ np.diag(np.abs(dp.reflect) ** 2)
                   @ channels.irs_bob[k].conj().T
                   + params.noise_ant * np.eye(params.n_rx))
            expect += np.trace(np.diag(1 - dp.split) @ cov).real
        assert eh_input_power(dp, channels, params) == pytest.approx(expect, rel=1e-10)

    def test_forward_anchors(self, params):
        assert eh_forward(params.eh_act, params) == pytest.approx(0.0, abs=1e-12 * params.eh_sat)
        assert eh_forward(1e3, params) == pytest.approx(params.eh_sat, rel=1e-9)
        assert eh_forward(0.0, params) == 0.0

    def test_forward_monotone_bounded(self, params):
        grid = np.linspace(0, 20 * params.eh_sat, 1000)
        vals = np.array([eh_forward(x, params) for x in grid])
        assert np.all(np.diff(vals) >= -1e-15)
        assert vals.min() >= 0 and vals.max() <= params.eh_sat + 1e-15

    def test_pseudo_inverse_branches(self, params):
        assert eh_pseudo_inverse(-1.0, params) == 0.0
        assert eh_pseudo_inverse(0.0, params) == 0.0
        assert math.isinf(eh_pseudo_inverse(params.eh_sat, params))
        assert math.isinf(eh_pseudo_inverse(2 * params.eh_sat, params))

    def test_round_trips(self, params):
        for frac in (0.1, 0.5, 0.9):
            y = frac * params.eh_sat
            assert eh_forward(eh_pseudo_inverse(y, params), params) == pytest.approx(
                y, abs=1e-9 * params.eh_sat)
        # reverse trip, probed where the harvested value is representably below
        # saturation (the steep sigmoid reaches eh_sat to double precision a few
        # tenths of a mW past activation)
        for e in (2 * params.eh_act, params.eh_act + 10 / params.eh_xi):
            harvested = eh_forward(e, params)
            assert 0 < harvested < params.eh_sat
            assert eh_pseudo_inverse(harvested, params) == pytest.approx(e, rel=1e-9)
        assert math.isinf(eh_pseudo_inverse(eh_forward(100 * params.eh_act, params), params))


class TestPowers:
    def test_idle_budget_usage(self, params, channels):
        dp = DesignPoint.zeros(params)
        dp.reflect = 0.5 * np.ones(params.n_elem, dtype=complex)
        assert tx_power(dp) == 0.0
        expect = params.noise_irs * np.sum(np.abs(dp.reflect) ** 2)
        assert reflect_power(dp, channels, params) == pytest.approx(expect, rel=1e-12)

    def test_zero_reflect(self, params, channels):
        dp = random_point(params, seed=6)
        dp.reflect[:] = 0
        assert reflect_power(dp, channels, params) == 0.0

    def test_trace_oracle(self, params, channels):
        dp = random_point(params, seed=8)
        phi = np.diag(dp.reflect)
        expect = params.noise_irs * np.trace(phi @ phi.conj().T).real
        tx_expect = 0.0
        for k in range(params.n_sub):
            k2 = (dp.precoders[k] @ dp.precoders[k].conj().T
                  + dp.an_precoders[k] @ dp.an_precoders[k].conj().T)
            expect += np.trace(phi @ channels.alice_irs[k] @ k2
                               @ channels.alice_irs[k].conj().T @ phi.conj().T).real
            tx_expect += np.trace(k2).real
        assert reflect_power(dp, channels, params) == pytest.approx(expect, rel=1e-10)
        assert tx_power(dp) == pytest.approx(tx_expect, rel=1e-10)


class TestFeasibility:
    def test_zero_point_fails_eh(self, channels):
        params = small_params(eh_target=1e-4)
        report = check_feasibility(DesignPoint.zeros(params), channels, params)
        assert not report.feasible
        assert report.res_c5 > 0

    def test_scaled_point_feasible_without_eh(self, params, channels):
        dp = random_point(params, seed=10)
        dp.precoders *= math.sqrt(0.5 * params.p_tx / tx_power(dp))
        dp.an_precoders[:] = 0
        dp.reflect *= math.sqrt(0.5 * params.p_reflect / reflect_power(dp, channels, params))
        report = check_feasibility(dp, channels, params)
        assert report.feasible
        assert report.res_c1 <= 0 and report.res_c2 <= 0

    def test_saturating_target_infeasible(self, channels):
        params = small_params(eh_target=5e-3)  # above rectifier saturation
        dp = random_point(params, seed=10)
        report = check_feasibility(dp, channels, params)
        assert not report.feasible
        assert math.isinf(report.res_c5)
