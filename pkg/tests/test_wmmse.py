import math

import numpy as np
import pytest

from swiptsec.channel import effective_cfr
from swiptsec.sysmodel import DesignPoint, noise_cov_bob, rate_bob, secrecy_sum_rate
from swiptsec.wmmse import (
    an_noise_cov_eve, lemma1_eval, mse_matrices, objective_constant, optimal_aux,
    secrecy_from_transformed, transformed_objective, update_equalizers, update_weights,
)
from conftest import random_channels, random_point, small_params

LN2 = math.log(2.0)


def rand_psd(n, rng, shift=0.1):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a @ a.conj().T / n + shift * np.eye(n)


class TestEqualizers:
    def test_zero_precoder_zero_equalizer(self, params, channels):
        dp = random_point(params, seed=0)
        dp.precoders[:] = 0
        eq_data, _, _ = update_equalizers(dp, channels, params)
        assert np.max(np.abs(eq_data)) == 0

    def test_scalar_wiener(self):
        params = small_params(n_sub=1, n_tx=1, n_rx=1, n_eve=1, n_elem=1)
        ch = random_channels(params, seed=3)
        dp = DesignPoint.zeros(params)
        dp.precoders[0, 0, 0] = 0.7 - 0.2j
        dp.split = np.array([0.6])
        h = ch.alice_bob[0, 0, 0]
        b = dp.precoders[0, 0, 0]
        gamma = params.noise_ant + params.noise_sp / 0.6
        expect = h * b / (abs(h * b) ** 2 + gamma)
        eq_data, _, _ = update_equalizers(dp, ch, params)
        assert eq_data[0, 0, 0] == pytest.approx(expect, rel=1e-10)

    def test_wiener_minimizes_mse_trace(self, params, channels):
        dp = random_point(params, seed=5)
        eqs = update_equalizers(dp, channels, params)
        base = mse_matrices(dp, eqs, channels, params)
        t0 = np.einsum("kii->", base.data).real
        rng = np.random.default_rng(8)
        for _ in range(100):
            delta = 1e-3 * (rng.standard_normal(eqs[0].shape) + 1j * rng.standard_normal(eqs[0].shape))
            bumped = mse_matrices(dp, (eqs[0] + delta, eqs[1], eqs[2]), channels, params)
            assert np.einsum("kii->", bumped.data).real >= t0 - 1e-12


class TestMseMatrices:
    def test_idle_is_identity(self, params, channels):
        dp = DesignPoint.zeros(params)
        eqs = (np.zeros((params.n_sub, params.n_rx, params.n_streams), dtype=complex),
               np.zeros((params.n_sub, params.n_eve, params.n_tx), dtype=complex),
               np.zeros((params.n_sub, params.n_eve, params.n_elem), dtype=complex))
        mse = mse_matrices(dp, eqs, channels, params)
        for k in range(params.n_sub):
            np.testing.assert_allclose(mse.data[k], np.eye(params.n_streams), atol=1e-14)
            np.testing.assert_allclose(mse.an[k], np.eye(params.n_tx), atol=1e-14)

    def test_optimal_equalizer_closed_form(self, params, channels):
        dp = random_point(params, seed=7)
        eff = effective_cfr(channels, dp.reflect)
        eqs = update_equalizers(dp, channels, params)
        mse = mse_matrices(dp, eqs, channels, params)
        cov = noise_cov_bob(dp, channels, params, eff)
        for k in range(params.n_sub):
            hb = eff.bob[k] @ dp.precoders[k]
            expect = (np.eye(params.n_streams)
                      - hb.conj().T @ np.linalg.inv(hb @ hb.conj().T + cov[k]) @ hb)
            np.testing.assert_allclose(mse.data[k], expect, atol=1e-12)

    def test_hermitian(self, params, channels):
        dp = random_point(params, seed=9)
        mse = mse_matrices(dp, update_equalizers(dp, channels, params), channels, params)
        for stack in (mse.data, mse.an, mse.irs_noise, mse.leak):
            assert np.max(np.abs(stack - np.conj(np.swapaxes(stack, 1, 2)))) < 1e-12


class TestWeights:
    def test_identity(self, params, channels):
        dp = DesignPoint.zeros(params)
        mse = mse_matrices(dp, update_equalizers(dp, channels, params), channels, params)
        w_data, w_an, _, _ = update_weights(mse)
        for k in range(params.n_sub):
            np.testing.assert_allclose(w_data[k], np.eye(params.n_streams), rtol=1e-9)

    def test_diagonal(self):
        from swiptsec.wmmse import MseMatrices
        diag = np.diag([2.0, 4.0])[None]
        mse = MseMatrices(data=diag, an=diag, irs_noise=diag, leak=diag)
        w, _, _, _ = update_weights(mse)
        np.testing.assert_allclose(w[0], np.diag([0.5, 0.25]), rtol=1e-9)

    def test_inverse_residual_random_psd(self):
        from swiptsec.wmmse import MseMatrices
        rng = np.random.default_rng(11)
        stack = np.stack([rand_psd(3, rng) for _ in range(6)])
        mse = MseMatrices(data=stack, an=stack, irs_noise=stack, leak=stack)
        w, _, _, _ = update_weights(mse)
        for k in range(6):
            assert np.linalg.norm(w[k] @ stack[k] - np.eye(3)) < 1e-9

    def test_inverse_residual_system_stacks(self, params, channels):
        # conditioning-aware bound: the leak covariance spans the full
        # signal-to-thermal dynamic range
        dp = random_point(params, seed=11)
        mse = mse_matrices(dp, update_equalizers(dp, channels, params), channels, params)
        w_data, w_an, w_irs, w_leak = update_weights(mse)
        for w, e in ((w_data, mse.data), (w_an, mse.an), (w_irs, mse.irs_noise), (w_leak, mse.leak)):
            for k in range(params.n_sub):
                cond = np.linalg.cond(e[k])
                res = np.linalg.norm(w[k] @ e[k] - np.eye(e.shape[-1]))
                assert res < 1e-9 + 1e-10 * cond


class TestLemma1:
    def test_identity_input(self):
        s, val = lemma1_eval(np.eye(3))
        np.testing.assert_allclose(s, np.eye(3), atol=1e-14)
        assert val == pytest.approx(0.0, abs=1e-14)

    def test_scalar(self):
        s, val = lemma1_eval(np.array([[2.0]]))
        assert val == pytest.approx(-1.0, rel=1e-12)  # -log2(2)
        assert s[0, 0] == pytest.approx(0.5, rel=1e-12)

    def test_local_maximum(self):
        rng = np.random.default_rng(2)
        e = rand_psd(3, rng)
        s_opt, val = lemma1_eval(e)

        def f_bits(s):
            sign, ld = np.linalg.slogdet(s)
            return (-np.trace(s @ e).real + ld + 3) / LN2

        assert f_bits(s_opt) == pytest.approx(val, abs=1e-10)
        for _ in range(60):
            d = 1e-3 * (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
            d = (d + d.conj().T) / 2
            cand = s_opt + d
            if np.linalg.eigvalsh(cand).min() <= 0:
                continue
            assert f_bits(cand) <= val + 1e-12

    def test_rejects_non_pd(self):
        with pytest.raises(np.linalg.LinAlgError):
            lemma1_eval(np.diag([1.0, -0.5]))


class TestTransformedObjective:
    def test_matches_secrecy_rate_at_optimum(self, params, channels):
        for seed in range(5):
            dp = random_point(params, seed=seed)
            aux = optimal_aux(dp, channels, params)
            val = transformed_objective(dp, aux, channels, params)
            got = secrecy_from_transformed(val, params)
            expect = secrecy_sum_rate(dp, channels, params, clamp=False)
            assert got == pytest.approx(expect, abs=1e-7)

    def test_matches_with_passive_surface(self, channels):
        params = small_params(noise_irs=0.0)
        dp = random_point(params, seed=4)
        aux = optimal_aux(dp, channels, params)
        got = secrecy_from_transformed(transformed_objective(dp, aux, channels, params), params)
        expect = secrecy_sum_rate(dp, channels, params, clamp=False)
        assert got == pytest.approx(expect, abs=1e-7)

    def test_scalar_hand_value(self):
        # all-identity weights and MSE matrices contribute ln det I - Tr(I) = -dim
        params = small_params(n_sub=1, n_tx=1, n_rx=1, n_eve=1, n_elem=1)
        ch = random_channels(params, seed=1)
        dp = DesignPoint.zeros(params)
        aux = optimal_aux(dp, ch, params)
        val = transformed_objective(dp, aux, ch, params)
        # data/an/irs blocks are at identity; leak block at W = E^{-1} with E = sigma_E^2
        expect = -3.0 + (-math.log(params.noise_eve) - 1.0)
        assert val == pytest.approx(expect, rel=1e-9)

    def test_aux_update_monotone(self, params, channels):
        rng = np.random.default_rng(14)
        for seed in range(4):
            dp = random_point(params, seed=seed + 20)
            # start from a perturbed (suboptimal) auxiliary block
            aux = optimal_aux(dp, channels, params)
            aux.eq_data = aux.eq_data + 0.1 * (rng.standard_normal(aux.eq_data.shape)
                                               + 1j * rng.standard_normal(aux.eq_data.shape))
            aux.w_data = aux.w_data + 0.05 * np.eye(params.n_streams)
            before = transformed_objective(dp, aux, channels, params)
            after = transformed_objective(dp, optimal_aux(dp, channels, params), channels, params)
            assert after >= before - 1e-10


class TestVirtualSystemEquivalences:
    def test_three_rates_and_dual_term(self):
        params = small_params(n_sub=2, n_tx=3, n_rx=2, n_eve=2, n_elem=3)
        channels = random_channels(params, seed=17)
        dp = random_point(params, seed=17)
        eff = effective_cfr(channels, dp.reflect)
        aux = optimal_aux(dp, channels, params)
        mse = mse_matrices(dp, (aux.eq_data, aux.eq_an, aux.eq_irs), channels, params)
        cov_b = noise_cov_bob(dp, channels, params, eff)
        cov_an = an_noise_cov_eve(dp, channels, params)
        for k in range(params.n_sub):
            # information beams into Bob
            hb = eff.bob[k] @ dp.precoders[k]
            i1 = (np.linalg.slogdet(np.eye(params.n_rx)
                                    + hb @ hb.conj().T @ np.linalg.inv(cov_b[k]))[1] / LN2)
            v1 = (np.linalg.slogdet(aux.w_data[k])[1]
                  - np.trace(aux.w_data[k] @ mse.data[k]).real + params.n_streams) / LN2
            assert v1 == pytest.approx(i1, abs=1e-8)
            # artificial noise into Eve
            ha = eff.eve[k] @ dp.an_precoders[k]
            i2 = (np.linalg.slogdet(np.eye(params.n_eve)
                                    + ha @ ha.conj().T @ np.linalg.inv(cov_an[k]))[1] / LN2)
            v2 = (np.linalg.slogdet(aux.w_an[k])[1]
                  - np.trace(aux.w_an[k] @ mse.an[k]).real + params.n_tx) / LN2
            assert v2 == pytest.approx(i2, abs=1e-8)
            # amplified surface noise into Eve
            rp = channels.irs_eve[k] @ np.diag(dp.reflect)
            i3 = (np.linalg.slogdet(np.eye(params.n_eve)
                                    + (params.noise_irs / params.noise_eve) * rp @ rp.conj().T)[1] / LN2)
            v3 = (np.linalg.slogdet(aux.w_irs[k])[1]
                  - np.trace(aux.w_irs[k] @ mse.irs_noise[k]).real + params.n_elem) / LN2
            assert v3 == pytest.approx(i3, abs=1e-8)
            # Fenchel-dual handling of Eve's full covariance
            v4 = (np.linalg.slogdet(aux.w_leak[k])[1]
                  - np.trace(aux.w_leak[k] @ mse.leak[k]).real + params.n_eve) / LN2
            i4 = -np.linalg.slogdet(mse.leak[k])[1] / LN2
            assert v4 == pytest.approx(i4, abs=1e-8)
