"""Physical-layer quantities of the secrecy SWIPT link.

Evaluates, for one decision point (precoders, reflection vector, power-splitting
factors): per-subcarrier rates at Bob and Eve, the secrecy sum rate, harvested
energy through the nonlinear rectifier model, transmit/reflect power usage, and
constraint feasibility.  All powers are in Watts; rates are bits/s/Hz per
subcarrier summed over subcarriers (log base 2, no bandwidth scaling).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelSet, EffectiveChannels, effective_cfr

# Power-splitting factors are floored here before inverting D so that d_r -> 0
# (no decoding branch) cannot overflow the noise covariance.
SPLIT_FLOOR = 1e-6


class EhInfeasibleError(RuntimeError):
    """Raised when the energy-harvesting requirement cannot be met."""


@dataclass(frozen=True)
class SystemParams:
    """Dimensions, noise powers, budgets and rectifier constants (all powers in W).

    The rectifier constants default to the sigmoid fit (xi, nu) = (274 per mW, 0.29)
    with activation 0.064 mW and saturation 4.927 mW; xi is stored per Watt.
    """

    n_sub: int = 12
    n_tx: int = 4
    n_rx: int = 2
    n_eve: int = 2
    n_elem: int = 40
    n_streams: int | None = None
    noise_irs: float = 1e-7    # -40 dBm
    noise_ant: float = 1e-9    # -60 dBm
    noise_sp: float = 1e-7     # -40 dBm
    noise_eve: float = 1e-9    # -60 dBm
    p_tx: float = 10 ** (34 / 10) * 1e-3
    p_reflect: float = 10 ** (22 / 10) * 1e-3
    eh_target: float = 1e-4    # -10 dBm
    eh_xi: float = 274.0e3
    eh_nu: float = 0.29
    eh_act: float = 0.064e-3
    eh_sat: float = 4.927e-3

    def __post_init__(self):
        for name in ("n_sub", "n_tx", "n_rx", "n_eve", "n_elem"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("noise_ant", "noise_sp", "noise_eve", "p_tx", "p_reflect"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.noise_irs < 0:
            raise ValueError("noise_irs must be non-negative (0 models a passive surface)")
        if self.eh_target < 0:
            raise ValueError("eh_target must be non-negative")
        if not 0 < self.eh_act < self.eh_sat:
            raise ValueError("rectifier activation level must sit below saturation")
        if self.n_streams is None:
            object.__setattr__(self, "n_streams", min(self.n_tx, self.n_rx))

    def with_streams(self, n_streams: int) -> "SystemParams":
        return replace(self, n_streams=n_streams)


@dataclass
class DesignPoint:
    """One full decision vector for the link.

    precoders: (N, N_A, N_S) information precoding matrices.
    an_precoders: (N, N_A, N_A) artificial-noise precoding matrices.
    reflect: (M,) complex reflection coefficients (amplitude * phase per element).
    split: (N_B,) power-splitting factors in [0, 1]; d_r routes to decoding,
    1 - d_r to harvesting.
    """

    precoders: np.ndarray
    an_precoders: np.ndarray
    reflect: np.ndarray
    split: np.ndarray

    def __post_init__(self):
        self.precoders = np.asarray(self.precoders, dtype=complex)
        self.an_precoders = np.asarray(self.an_precoders, dtype=complex)
        self.reflect = np.asarray(self.reflect, dtype=complex)
        self.split = np.asarray(self.split, dtype=float)
        if self.precoders.ndim != 3 or self.an_precoders.ndim != 3:
            raise ValueError("precoder stacks must be 3-D (subcarrier, tx, streams)")
        if self.an_precoders.shape[:2] != self.precoders.shape[:2]:
            raise ValueError("information and AN precoders disagree on dimensions")
        if np.any(self.split < -1e-12) or np.any(self.split > 1 + 1e-12):
            raise ValueError("power-splitting factors must lie in [0, 1]")

    @classmethod
    def zeros(cls, params: SystemParams) -> "DesignPoint":
        return cls(
            precoders=np.zeros((params.n_sub, params.n_tx, params.n_streams), dtype=complex),
            an_precoders=np.zeros((params.n_sub, params.n_tx, params.n_tx), dtype=complex),
            reflect=np.zeros(params.n_elem, dtype=complex),
            split=np.ones(params.n_rx),
        )

    def copy(self) -> "DesignPoint":
        return DesignPoint(self.precoders.copy(), self.an_precoders.copy(),
                           self.reflect.copy(), self.split.copy())


@dataclass(frozen=True)
class FeasibilityReport:
    """Signed constraint residuals of a design point (negative = satisfied)."""

    tx_power_used: float
    reflect_power_used: float
    eh_input: float
    harvested: float
    res_c1: float              # tx power - budget
    res_c2: float              # reflect power - budget
    res_c5: float              # required input power - achieved input power
    res_c4: float              # max violation of the [0, 1] split box
    feasible: bool
    tol: float


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def _gram(a: np.ndarray) -> np.ndarray:
    """Stack of A_k A_k^H."""
    return a @ np.conj(np.swapaxes(a, -1, -2))


def _logdet(a: np.ndarray) -> float:
    sign, val = np.linalg.slogdet(a)
    if sign.real <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite in log-det")
    return float(val)


def _eff(dp: DesignPoint, ch: ChannelSet, eff: EffectiveChannels | None) -> EffectiveChannels:
    return eff if eff is not None else effective_cfr(ch, dp.reflect)


def irs_noise_cov_bob(dp: DesignPoint, ch: ChannelSet, params: SystemParams) -> np.ndarray:
    """sigma_I^2 R diag(phi) diag(phi)^H R^H per subcarrier, Bob side."""
    scaled = ch.irs_bob * dp.reflect[None, None, :]
    return params.noise_irs * _gram(scaled)


def irs_noise_cov_eve(dp: DesignPoint, ch: ChannelSet, params: SystemParams) -> np.ndarray:
    scaled = ch.irs_eve * dp.reflect[None, None, :]
    return params.noise_irs * _gram(scaled)


def noise_cov_bob(dp: DesignPoint, ch: ChannelSet, params: SystemParams,
                  eff: EffectiveChannels | None = None) -> np.ndarray:
    """Effective noise covariance at Bob's decoding branch, (N, N_B, N_B)."""
    eff = _eff(dp, ch, eff)
    cov = _gram(eff.bob @ dp.an_precoders)
    cov = cov + irs_noise_cov_bob(dp, ch, params)
    eye = np.eye(params.n_rx)
    d = np.clip(dp.split, SPLIT_FLOOR, 1.0)
    cov = cov + params.noise_ant * eye + params.noise_sp * np.diag(1.0 / d)
    return _hermitize(cov)


def noise_cov_eve(dp: DesignPoint, ch: ChannelSet, params: SystemParams,
                  eff: EffectiveChannels | None = None) -> np.ndarray:
    """Effective noise covariance at Eve, (N, N_E, N_E)."""
    eff = _eff(dp, ch, eff)
    cov = _gram(eff.eve @ dp.an_precoders)
    cov = cov + irs_noise_cov_eve(dp, ch, params)
    return _hermitize(cov + params.noise_eve * np.eye(params.n_eve))


def _rates(signal: np.ndarray, noise_cov: np.ndarray) -> np.ndarray:
    out = np.empty(signal.shape[0])
    for k in range(signal.shape[0]):
        out[k] = (_logdet(noise_cov[k] + signal[k]) - _logdet(noise_cov[k])) / math.log(2.0)
    return out


def rate_bob(dp: DesignPoint, ch: ChannelSet, params: SystemParams,
             eff: EffectiveChannels | None = None) -> np.ndarray:
    """Achievable rate per subcarrier at Bob's decoding branch (bits)."""
    eff = _eff(dp, ch, eff)
    signal = _hermitize(_gram(eff.bob @ dp.precoders))
    return _rates(signal, noise_cov_bob(dp, ch, params, eff))


def rate_eve(dp: DesignPoint, ch: ChannelSet, params: SystemParams,
             eff: EffectiveChannels | None = None) -> np.ndarray:
    """Eavesdropping rate per subcarrier at Eve (bits)."""
    eff = _eff(dp, ch, eff)
    signal = _hermitize(_gram(eff.eve @ dp.precoders))
    return _rates(signal, noise_cov_eve(dp, ch, params, eff))


def secrecy_sum_rate(dp: DesignPoint, ch: ChannelSet, params: SystemParams,
                     clamp: bool = True, eff: EffectiveChannels | None = None) -> float:
    """Secrecy sum rate over subcarriers.

    With clamp=True each per-subcarrier difference is floored at zero (the
    reporting definition); clamp=False returns the raw difference the
    optimizers monitor.
    """
    eff = _eff(dp, ch, eff)
    diff = rate_bob(dp, ch, params, eff) - rate_eve(dp, ch, params, eff)
    if clamp:
        diff = np.maximum(diff, 0.0)
    return float(diff.sum())


def eh_input_power(dp: DesignPoint, ch: ChannelSet, params: SystemParams,
                   eff: EffectiveChannels | None = None) -> float:
    """RF power entering the harvesting branch (W)."""
    eff = _eff(dp, ch, eff)
    weights = 1.0 - dp.split  # diagonal of I - D
    cov = _gram(eff.bob @ dp.precoders) + _gram(eff.bob @ dp.an_precoders)
    cov = cov + irs_noise_cov_bob(dp, ch, params)
    diag = np.einsum("krr->kr", cov).real + params.noise_ant
    return float(np.sum(diag * weights[None, :]))


def eh_forward(e_in: float, params: SystemParams) -> float:
    """Harvested power of the nonlinear rectifier for a given input power (W)."""
    if e_in < 0:
        raise ValueError("input power must be non-negative")
    q = math.exp(-params.eh_xi * params.eh_act + params.eh_nu)
    try:
        s = math.exp(-params.eh_xi * e_in + params.eh_nu)
    except OverflowError:
        return 0.0
    # stable form of E_m/q ((1+q)/(1+s) - 1); the naive difference cancels badly
    val = params.eh_sat * (q - s) / (q * (1.0 + s))
    return max(val, 0.0)


def eh_pseudo_inverse(x: float, params: SystemParams) -> float:
    """Input power required to harvest x Watts; +inf when x reaches saturation."""
    if x >= params.eh_sat:
        return math.inf
    if x <= 0:
        return 0.0
    q = math.exp(-params.eh_xi * params.eh_act + params.eh_nu)
    return params.eh_act - math.log((params.eh_sat - x) / (params.eh_sat + x * q)) / params.eh_xi


def tx_power(dp: DesignPoint) -> float:
    """Total transmit power over subcarriers (information plus AN)."""
    return float(np.sum(np.abs(dp.precoders) ** 2) + np.sum(np.abs(dp.an_precoders) ** 2))


def reflect_power(dp: DesignPoint, ch: ChannelSet, params: SystemParams) -> float:
    """Power radiated by the reflecting surface: amplified signal plus amplified noise."""
    # Tr(Phi T K2 T^H Phi^H) = sum over k of || diag(phi) T_k [B_k A_k] ||_F^2
    phi_t = dp.reflect[None, :, None] * ch.alice_irs
    sig = np.sum(np.abs(phi_t @ dp.precoders) ** 2) + np.sum(np.abs(phi_t @ dp.an_precoders) ** 2)
    return float(sig + params.noise_irs * np.sum(np.abs(dp.reflect) ** 2))


def check_feasibility(dp: DesignPoint, ch: ChannelSet, params: SystemParams,
                      tol: float = 1e-6, enforce_reflect: bool = True) -> FeasibilityReport:
    """Signed residuals of the power, reflect, split-box and harvesting constraints.

    Residuals are judged against tol relative to their natural scales (the power
    budgets, the required input power, and 1 for the split box).  Passive and
    surface-free schemes have no amplified-power budget; enforce_reflect=False
    keeps the reflect residual informational only.
    """
    used_tx = tx_power(dp)
    used_rf = reflect_power(dp, ch, params)
    e_in = eh_input_power(dp, ch, params)
    need = eh_pseudo_inverse(params.eh_target, params)
    res_c1 = used_tx - params.p_tx
    res_c2 = used_rf - params.p_reflect
    res_c5 = need - e_in
    res_c4 = float(max(np.max(-dp.split, initial=-np.inf), np.max(dp.split - 1.0, initial=-np.inf)))
    eh_ok = (not math.isinf(need)) and res_c5 <= tol * max(need, params.eh_act)
    feasible = (res_c1 <= tol * params.p_tx
                and (not enforce_reflect or res_c2 <= tol * params.p_reflect)
                and eh_ok
                and res_c4 <= tol)
    return FeasibilityReport(tx_power_used=used_tx, reflect_power_used=used_rf,
                             eh_input=e_in, harvested=eh_forward(e_in, params),
                             res_c1=res_c1, res_c2=res_c2, res_c5=res_c5, res_c4=res_c4,
                             feasible=bool(feasible), tol=tol)
