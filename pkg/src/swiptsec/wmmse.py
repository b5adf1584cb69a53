"""Rate / weighted-MMSE reformulation machinery.

The unclamped secrecy rate decomposes per subcarrier into the rates of three
virtual communication systems (the information beams into Bob, the artificial
noise into Eve, and the amplified surface noise into Eve) plus a Fenchel-dual
log-det term for Eve's received covariance.  Each piece is equivalent to a
weighted-MSE expression with Wiener equalizers and inverse-MSE weights.

All algebra here is kept in natural log so that the stationary weights are
exactly the inverse MSE matrices; conversion to bits happens once, at the
reporting boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, EffectiveChannels, effective_cfr
from .sysmodel import DesignPoint, SystemParams, noise_cov_bob, irs_noise_cov_eve


@dataclass
class MseMatrices:
    """MSE matrices of the four per-subcarrier blocks (Hermitian PSD stacks)."""

    data: np.ndarray       # (N, N_S, N_S)  information streams at Bob
    an: np.ndarray         # (N, N_A, N_A)  artificial noise seen by Eve
    irs_noise: np.ndarray  # (N, M, M)      amplified surface noise seen by Eve
    leak: np.ndarray       # (N, N_E, N_E)  Eve's signal-plus-noise covariance


@dataclass
class AuxiliaryBlocks:
    """Equalizers and weight matrices of the reformulated objective."""

    eq_data: np.ndarray     # (N, N_B, N_S)
    eq_an: np.ndarray       # (N, N_E, N_A)
    eq_irs: np.ndarray      # (N, N_E, M)
    w_data: np.ndarray      # (N, N_S, N_S)
    w_an: np.ndarray        # (N, N_A, N_A)
    w_irs: np.ndarray       # (N, M, M)
    w_leak: np.ndarray      # (N, N_E, N_E)


def _H(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + _H(a))


def _gram(a: np.ndarray) -> np.ndarray:
    return a @ _H(a)


def _eff(dp, ch, eff) -> EffectiveChannels:
    return eff if eff is not None else effective_cfr(ch, dp.reflect)


def an_noise_cov_eve(dp: DesignPoint, ch: ChannelSet, params: SystemParams) -> np.ndarray:
    """Covariance of everything at Eve except the AN beams: surface noise plus thermal."""
    return _hermitize(irs_noise_cov_eve(dp, ch, params)
                      + params.noise_eve * np.eye(params.n_eve))


def update_equalizers(dp: DesignPoint, ch: ChannelSet, params: SystemParams,
                      eff: EffectiveChannels | None = None):
    """Wiener equalizers of the three virtual systems: (eq_data, eq_an, eq_irs)."""
    eff = _eff(dp, ch, eff)
    hb = eff.bob @ dp.precoders                 # (N, N_B, N_S)
    eq_data = np.linalg.solve(_gram(hb) + noise_cov_bob(dp, ch, params, eff), hb)

    ha = eff.eve @ dp.an_precoders              # (N, N_E, N_A)
    eq_an = np.linalg.solve(_gram(ha) + an_noise_cov_eve(dp, ch, params), ha)

    if params.noise_irs == 0.0:
        # Passive surface: the amplified-noise virtual system carries no signal.
        eq_irs = np.zeros((params.n_sub, params.n_eve, params.n_elem), dtype=complex)
    else:
        hr = ch.irs_eve * dp.reflect[None, None, :]  # R' Phi, (N, N_E, M)
        ratio = params.noise_eve / params.noise_irs
        eq_irs = np.linalg.solve(_gram(hr) + ratio * np.eye(params.n_eve), hr)
    return eq_data, eq_an, eq_irs


def mse_matrices(dp: DesignPoint, equalizers, ch: ChannelSet, params: SystemParams,
                 eff: EffectiveChannels | None = None) -> MseMatrices:
    """MSE matrices at the given (not necessarily optimal) equalizers."""
    eq_data, eq_an, eq_irs = equalizers
    eff = _eff(dp, ch, eff)

    res = np.eye(params.n_streams) - _H(eq_data) @ eff.bob @ dp.precoders
    data = _gram(res) + _H(eq_data) @ noise_cov_bob(dp, ch, params, eff) @ eq_data

    res = np.eye(params.n_tx) - _H(eq_an) @ eff.eve @ dp.an_precoders
    an = _gram(res) + _H(eq_an) @ an_noise_cov_eve(dp, ch, params) @ eq_an

    if params.noise_irs == 0.0:
        irs_noise = np.broadcast_to(np.eye(params.n_elem),
                                    (params.n_sub, params.n_elem, params.n_elem)).copy()
    else:
        hr = ch.irs_eve * dp.reflect[None, None, :]
        res = np.eye(params.n_elem) - _H(eq_irs) @ hr
        ratio = params.noise_eve / params.noise_irs
        irs_noise = _gram(res) + ratio * _H(eq_irs) @ eq_irs

    leak = (_gram(eff.eve @ dp.precoders) + _gram(eff.eve @ dp.an_precoders)
            + irs_noise_cov_eve(dp, ch, params) + params.noise_eve * np.eye(params.n_eve))
    return MseMatrices(data=_hermitize(data), an=_hermitize(an),
                       irs_noise=_hermitize(irs_noise), leak=_hermitize(leak))


def _reg_inv(stack: np.ndarray, reg: float) -> np.ndarray:
    """Inverse of a PSD stack with a trace-scaled diagonal regularizer."""
    dim = stack.shape[-1]
    tr = np.einsum("kii->k", stack).real / dim
    shift = reg * np.maximum(tr, np.finfo(float).tiny)
    eye = np.eye(dim)
    return np.linalg.inv(stack + shift[:, None, None] * eye)


def update_weights(mse: MseMatrices, reg: float = 1e-12):
    """Inverse-MSE weights (w_data, w_an, w_irs, w_leak)."""
    return (_hermitize(_reg_inv(mse.data, reg)), _hermitize(_reg_inv(mse.an, reg)),
            _hermitize(_reg_inv(mse.irs_noise, reg)), _hermitize(_reg_inv(mse.leak, reg)))


def optimal_aux(dp: DesignPoint, ch: ChannelSet, params: SystemParams,
                eff: EffectiveChannels | None = None) -> AuxiliaryBlocks:
    """Closed-form block update: Wiener equalizers then inverse-MSE weights."""
    eff = _eff(dp, ch, eff)
    eqs = update_equalizers(dp, ch, params, eff)
    weights = update_weights(mse_matrices(dp, eqs, ch, params, eff))
    return AuxiliaryBlocks(eq_data=eqs[0], eq_an=eqs[1], eq_irs=eqs[2],
                           w_data=weights[0], w_an=weights[1], w_irs=weights[2],
                           w_leak=weights[3])


def _logdet(a: np.ndarray) -> float:
    sign, val = np.linalg.slogdet(a)
    if sign.real <= 0:
        raise np.linalg.LinAlgError("non-PD matrix in log-det")
    return float(val)


def transformed_objective(dp: DesignPoint, aux: AuxiliaryBlocks, ch: ChannelSet,
                          params: SystemParams, eff: EffectiveChannels | None = None) -> float:
    """Weighted-MSE objective in nats, constants dropped.

    At the closed-form optimal auxiliaries this equals
    ln(2) * unclamped secrecy sum rate - objective_constant(params).
    """
    eff = _eff(dp, ch, eff)
    mse = mse_matrices(dp, (aux.eq_data, aux.eq_an, aux.eq_irs), ch, params, eff)
    total = 0.0
    for w, e in ((aux.w_data, mse.data), (aux.w_an, mse.an),
                 (aux.w_irs, mse.irs_noise), (aux.w_leak, mse.leak)):
        for k in range(params.n_sub):
            total += _logdet(w[k]) - np.trace(w[k] @ e[k]).real
    return total


def objective_constant(params: SystemParams) -> float:
    """Constant (nats) restoring the secrecy rate from the transformed objective.

    Per subcarrier the four blocks contribute their MSE dimensions
    (N_S, N_A, M, N_E) and the leak block's dual adds N_E ln(sigma_E^2).
    """
    dims = params.n_streams + params.n_tx + params.n_elem + params.n_eve
    return params.n_sub * (dims + params.n_eve * math.log(params.noise_eve))


def secrecy_from_transformed(value: float, params: SystemParams) -> float:
    """Bits-domain unclamped secrecy sum rate implied by an optimal-aux objective value."""
    return (value + objective_constant(params)) / math.log(2.0)


def lemma1_eval(mat: np.ndarray):
    """Fenchel-dual evaluation: maximize -Tr(S E) + ln det S + n over S > 0.

    Returns the maximizer S = E^{-1} and the optimal value expressed in bits,
    -log2 det(E).
    """
    mat = np.asarray(mat)
    vals = np.linalg.eigvalsh(mat)
    if vals.min() <= 0:
        raise np.linalg.LinAlgError("lemma1_eval requires a positive-definite input")
    s_opt = np.linalg.inv(mat)
    value_bits = -_logdet(mat) / math.log(2.0)
    return _hermitize(s_opt), value_bits
