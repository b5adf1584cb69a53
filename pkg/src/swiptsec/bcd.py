"""Block-coordinate secrecy-rate maximization.

One outer iteration updates, in order: the auxiliary (equalizer/weight) blocks
in closed form, the information and AN precoders through a semidefinite
relaxation with Schur-complement lifting, the power-splitting factors through a
penalty bisection, and the reflection vector through an inner-approximation
sequence of convex quadratic programs.  Every accepted block update keeps the
point feasible and never decreases the reformulated objective, so the recorded
secrecy trace is nondecreasing up to solver tolerance.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import wmmse
from .channel import ChannelSet, effective_cfr
from .conic import QcqpProblem, SdpProblem, ia_drive, solve_sdp
from .sysmodel import (
    DesignPoint, EhInfeasibleError, SystemParams, check_feasibility, eh_input_power,
    eh_pseudo_inverse, reflect_power, secrecy_sum_rate, tx_power,
)

LN2 = math.log(2.0)


class InfeasibleConfigError(RuntimeError):
    """No feasible starting point exists for the given channels and budgets."""


@dataclass
class BcdConfig:
    tol_outer: float = 1e-4          # relative objective change across outer iterations
    max_outer: int = 100
    tol_ia: float = 1e-4             # relative change inside inner-approximation loops
    max_ia: int = 25
    eps_bisect: float = 1e-9         # relative bracket width for the penalty search
    tightness_tol: float = 1e-6      # lifted-variable residual considered rank-one
    solver_tol: float = 1e-8
    an_enabled: bool = True          # artificial-noise precoders optimized (ablation switch)
    fixed_split: float | None = None # freeze all PS factors at this value
    fixed_reflect: bool = False      # freeze the reflection vector at its initial draw
    init_power_frac: float = 0.9     # share of the transmit budget used by the start point
    init_split: float = 0.5
    init_align_iters: int = 10       # channel-gain alignment steps warming up the start phases
    init_eh_iters: int = 25          # phase-alignment attempts while searching a feasible start


@dataclass
class BcdTrace:
    objective: list = field(default_factory=list)         # unclamped secrecy rate, bits
    res_c1: list = field(default_factory=list)
    res_c2: list = field(default_factory=list)
    res_c5: list = field(default_factory=list)
    tightness: list = field(default_factory=list)
    block_deltas: list = field(default_factory=list)       # per-iteration dict of objective gains
    times_ms: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "objective", "res_c1", "res_c2", "res_c5", "tightness", "ms"])
            for i, obj in enumerate(self.objective):
                writer.writerow([i, f"{obj:.12g}", f"{self.res_c1[i]:.6g}", f"{self.res_c2[i]:.6g}",
                                 f"{self.res_c5[i]:.6g}", f"{self.tightness[i]:.6g}",
                                 f"{self.times_ms[i]:.3f}"])


@dataclass
class BcdResult:
    point: DesignPoint
    trace: BcdTrace
    converged: bool
    iterations: int
    status: str = "ok"


@dataclass
class IrsQuadratics:
    """Compact quadratic data of the reflection subproblem.

    objective: phi^H quad phi + 2 Re(phi^H lin); reflect constraint
    phi^H diag(refl_diag + sigma_I^2) phi <= P_I; harvesting constraint
    phi^H eh_quad phi + 2 Re(phi^H eh_lin) + eh_const >= required input.
    """

    quad: np.ndarray
    lin: np.ndarray
    refl_diag: np.ndarray
    eh_quad: np.ndarray
    eh_lin: np.ndarray
    eh_const: float

    def objective(self, phi: np.ndarray) -> float:
        return float(np.real(np.vdot(phi, self.quad @ phi)) + 2 * np.real(np.vdot(phi, self.lin)))

    def eh_input(self, phi: np.ndarray) -> float:
        return float(np.real(np.vdot(phi, self.eh_quad @ phi))
                     + 2 * np.real(np.vdot(phi, self.eh_lin)) + self.eh_const)

    def reflect_used(self, phi: np.ndarray, noise_irs: float) -> float:
        return float(np.real(np.vdot(phi, (self.refl_diag + noise_irs) * phi)))


def _H(a):
    return np.conj(np.swapaxes(a, -1, -2))


def _hadamard_quad(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Coefficient of phi^H (.) phi for Tr(A Phi B Phi^H) with Phi = diag(phi)."""
    return a * b.T


def _diag_quad(a: np.ndarray) -> np.ndarray:
    """Coefficient for Tr(A Phi Phi^H): diagonal of A on the diagonal."""
    return np.diag(np.diagonal(a))


def reflect_quad_diag(dp: DesignPoint, ch: ChannelSet) -> np.ndarray:
    """Diagonal of the reflect-power quadratic sum_k T_k K2_k T_k^H (real vector)."""
    total = np.zeros(ch.n_elem)
    for k in range(ch.n_sub):
        tb = ch.alice_irs[k] @ dp.precoders[k]
        ta = ch.alice_irs[k] @ dp.an_precoders[k]
        total += np.sum(np.abs(tb) ** 2, axis=1) + np.sum(np.abs(ta) ** 2, axis=1)
    return total


def eh_quadratics(dp: DesignPoint, ch: ChannelSet, params: SystemParams):
    """Harvested-input power as a quadratic in the reflection vector.

    Returns (eh_quad, eh_lin, eh_const) with E_in(phi) = phi^H eh_quad phi
    + 2 Re(phi^H eh_lin) + eh_const at the current precoders and split.
    """
    m = params.n_elem
    weights = 1.0 - dp.split
    quad = np.zeros((m, m), dtype=complex)
    lin = np.zeros(m, dtype=complex)
    const = params.n_sub * params.noise_ant * float(weights.sum())
    for k in range(params.n_sub):
        t, r, h = ch.alice_irs[k], ch.irs_bob[k], ch.alice_bob[k]
        k2 = (dp.precoders[k] @ _H(dp.precoders[k])
              + dp.an_precoders[k] @ _H(dp.an_precoders[k]))
        rwr = _H(r) @ np.diag(weights) @ r
        tk2t = t @ k2 @ _H(t)
        quad += _hadamard_quad(rwr, tk2t) + params.noise_irs * _diag_quad(rwr)
        lin += np.diagonal(_H(r) @ np.diag(weights) @ h @ k2 @ _H(t))
        const += float(np.trace(np.diag(weights) @ h @ k2 @ _H(h)).real)
    return 0.5 * (quad + quad.conj().T), lin, const


def build_irs_subproblem(dp: DesignPoint, aux: wmmse.AuxiliaryBlocks, ch: ChannelSet,
                         params: SystemParams) -> IrsQuadratics:
    """Assemble the reflection-step quadratics from the weighted-MSE expansion.

    Quadratic coefficients come from the identity Tr(A Phi B Phi^H)
    = phi^H (A had B^T) phi applied to every surface-dependent trace term of
    the four MSE blocks; linear coefficients are the diagonals of the mixed
    direct/reflected products.
    """
    m = params.n_elem
    quad = np.zeros((m, m), dtype=complex)
    lin = np.zeros(m, dtype=complex)
    for k in range(params.n_sub):
        t, r, h = ch.alice_irs[k], ch.irs_bob[k], ch.alice_bob[k]
        rp, hp = ch.irs_eve[k], ch.alice_eve[k]
        b, a = dp.precoders[k], dp.an_precoders[k]
        c, w = aux.eq_data[k], aux.w_data[k]
        cp_, wp = aux.eq_an[k], aux.w_an[k]
        cbar, wbar = aux.eq_irs[k], aux.w_irs[k]
        wpp = aux.w_leak[k]

        k1 = c @ w @ _H(c)
        k2 = b @ _H(b) + a @ _H(a)
        aah = a @ _H(a)
        k3 = c @ w @ _H(b)
        k4 = cp_ @ wp @ _H(cp_)
        k5 = cp_ @ wp @ _H(a)

        tk2t = t @ k2 @ _H(t)
        taat = t @ aah @ _H(t)

        a1 = _H(r) @ k1 @ r
        a3 = _H(rp) @ k4 @ rp
        a5 = _H(rp) @ cbar @ wbar @ _H(cbar) @ rp
        a6 = _H(rp) @ wpp @ rp

        quad += (_hadamard_quad(a1, tk2t) + params.noise_irs * _diag_quad(a1)
                 + _hadamard_quad(a3, taat) + params.noise_irs * _diag_quad(a3)
                 + _diag_quad(a5)
                 + _hadamard_quad(a6, tk2t) + params.noise_irs * _diag_quad(a6))

        k6 = (_H(r) @ k1 @ h @ k2 @ _H(t)
              + _H(rp) @ k4 @ hp @ aah @ _H(t)
              + _H(rp) @ wpp @ hp @ k2 @ _H(t)
              - _H(r) @ k3 @ _H(t)
              - _H(rp) @ k5 @ _H(t)
              - _H(rp) @ cbar @ wbar)
        lin += np.diagonal(k6)

    eh_quad, eh_lin, eh_const = eh_quadratics(dp, ch, params)
    return IrsQuadratics(quad=0.5 * (quad + quad.conj().T), lin=lin,
                         refl_diag=reflect_quad_diag(dp, ch),
                         eh_quad=eh_quad, eh_lin=eh_lin, eh_const=eh_const)


def optimize_irs(dp: DesignPoint, aux: wmmse.AuxiliaryBlocks, ch: ChannelSet,
                 params: SystemParams, cfg: BcdConfig):
    """Inner-approximation descent on the reflection vector; keeps the incumbent
    if a subproblem fails or the true objective would degrade."""
    sub = build_irs_subproblem(dp, aux, ch, params)
    need = eh_pseudo_inverse(params.eh_target, params)
    diag_budget = sub.refl_diag + params.noise_irs

    def build(phi_t):
        prob = QcqpProblem(params.n_elem)
        prob.set_objective(sub.quad, sub.lin)
        prob.add_quad_le(np.diag(diag_budget), None, -params.p_reflect)
        if need > 0:
            anchor = float(np.real(np.vdot(phi_t, sub.eh_quad @ phi_t)))
            coeff = sub.eh_quad @ phi_t + sub.eh_lin
            offset = sub.eh_const - anchor - need
            prob.add_affine(coeff, offset, ">=")
        return prob

    phi_new, trace, status = ia_drive(build, dp.reflect, cfg.tol_ia, cfg.max_ia,
                                      objective=sub.objective, maximize=False)
    info = {"ia_status": status, "ia_trace": trace, "kept_incumbent": False}
    degraded = sub.objective(phi_new) > sub.objective(dp.reflect) + 1e-9 * abs(sub.objective(dp.reflect))
    refl_bad = sub.reflect_used(phi_new, params.noise_irs) > params.p_reflect * (1 + 1e-6)
    eh_bad = need > 0 and sub.eh_input(phi_new) < need - 1e-6 * max(need, params.eh_act)
    if status.startswith("subproblem") and len(trace) <= 1 or degraded or refl_bad or eh_bad:
        info["kept_incumbent"] = True
        return dp.reflect.copy(), info
    return phi_new, info


def optimize_ps(dp: DesignPoint, aux: wmmse.AuxiliaryBlocks, ch: ChannelSet,
                params: SystemParams, cfg: BcdConfig):
    """Penalty bisection for the power-splitting factors.

    The decoding-noise cost is sum_r sigma_sp^2 t_r / d_r and the harvesting
    constraint caps sum_r d_r that_r; the penalty factor that makes the
    harvesting constraint exactly active is found by bisection on the
    monotone decreasing harvested-side value h(u).
    """
    eff = effective_cfr(ch, dp.reflect)
    t_diag = np.zeros(params.n_rx)
    that = np.zeros(params.n_rx)
    for k in range(params.n_sub):
        cwc = aux.eq_data[k] @ aux.w_data[k] @ _H(aux.eq_data[k])
        t_diag += np.diagonal(cwc).real
        k2 = (dp.precoders[k] @ _H(dp.precoders[k])
              + dp.an_precoders[k] @ _H(dp.an_precoders[k]))
        rphi = ch.irs_bob[k] * dp.reflect[None, :]
        cov = (eff.bob[k] @ k2 @ _H(eff.bob[k])
               + params.noise_irs * rphi @ _H(rphi)
               + params.noise_ant * np.eye(params.n_rx))
        that += np.diagonal(cov).real
    t_diag = np.maximum(t_diag, 0.0)
    that = np.maximum(that, 0.0)

    need = eh_pseudo_inverse(params.eh_target, params)
    if need <= 0:
        return np.ones(params.n_rx), {"penalty": 0.0, "slack": float("nan"), "active": False}
    target = float(that.sum()) - need
    if target < 0:
        raise EhInfeasibleError(
            f"harvesting target needs {need:.3e} W but at most {that.sum():.3e} W reaches the antennas")

    def split_of(u: float) -> np.ndarray:
        if u == 0.0:
            return np.ones(params.n_rx)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.sqrt(params.noise_sp * t_diag / (u * that))
        val[that == 0] = 1.0
        return np.minimum(val, 1.0)

    def harvested_side(u: float) -> float:
        return float(split_of(u) @ that)

    if harvested_side(0.0) <= target:
        return np.ones(params.n_rx), {"penalty": 0.0, "slack": target - that.sum(), "active": False}

    u_lo, u_hi = 0.0, 1.0
    for _ in range(400):
        if harvested_side(u_hi) <= target:
            break
        u_hi *= 2.0
    scale = max(that.sum(), 1e-300)
    for _ in range(300):
        mid = 0.5 * (u_lo + u_hi)
        if harvested_side(mid) > target:
            u_lo = mid
        else:
            u_hi = mid
        tight = (u_hi - u_lo) <= cfg.eps_bisect * max(u_hi, 1e-300)
        close = abs(harvested_side(u_hi) - target) <= cfg.eps_bisect * scale
        if tight and close:
            break
    split = split_of(u_hi)
    slack = target - float(split @ that)
    return split, {"penalty": u_hi, "slack": slack, "active": True}


def optimize_precoders(dp: DesignPoint, aux: wmmse.AuxiliaryBlocks, ch: ChannelSet,
                       params: SystemParams, cfg: BcdConfig, enforce_reflect: bool = True):
    """Semidefinite-relaxation update of the information and AN precoders.

    Lifted covariances enter the power, reflect and harvesting constraints;
    Schur-complement blocks tie them to the precoder factors.  If the lifted
    solution is not rank-tight and underdelivers harvested power, the gap is
    folded into the AN covariance, which is always budget-feasible.
    """
    eff = effective_cfr(ch, dp.reflect)
    n, na, ns = params.n_sub, params.n_tx, params.n_streams
    use_an = cfg.an_enabled
    # lifted covariances are expressed in units of the transmit budget so the
    # solver sees O(1) variables; the Schur blocks keep their form under
    # X = u Xs, B = sqrt(u) Bs
    u = params.p_tx
    ru = math.sqrt(u)
    prob = SdpProblem(minimize=True)
    for k in range(n):
        prob.add_hermitian(f"x{k}", na)
        prob.add_complex(f"b{k}", na, ns)
        if use_an:
            prob.add_hermitian(f"z{k}", na)
            prob.add_complex(f"a{k}", na, na)

    need = eh_pseudo_inverse(params.eh_target, params)
    kappa2 = 0.0
    budget_terms, reflect_terms, eh_terms = [], [], []
    weights = 1.0 - dp.split
    for k in range(n):
        hb, he = eff.bob[k], eff.eve[k]
        c, w = aux.eq_data[k], aux.w_data[k]
        cp_, wp = aux.eq_an[k], aux.w_an[k]
        wpp = aux.w_leak[k]
        m_bob = _H(hb) @ c @ w @ _H(c) @ hb
        m_leak = _H(he) @ wpp @ he
        prob.add_objective_trace(u * (m_bob + m_leak), f"x{k}")
        prob.add_objective_trace(ru * w @ _H(c) @ hb, f"b{k}", weight=-2.0)
        if use_an:
            m_an = _H(he) @ cp_ @ wp @ _H(cp_) @ he
            prob.add_objective_trace(u * (m_bob + m_leak + m_an), f"z{k}")
            prob.add_objective_trace(ru * wp @ _H(cp_) @ he, f"a{k}", weight=-2.0)

        eye = np.eye(na)
        budget_terms.append((u * eye, f"x{k}", 1.0))
        if use_an:
            budget_terms.append((u * eye, f"z{k}", 1.0))
        if enforce_reflect:
            t = ch.alice_irs[k]
            g = _H(t) @ np.diag(np.abs(dp.reflect) ** 2) @ t
            reflect_terms.append((u * g, f"x{k}", 1.0))
            if use_an:
                reflect_terms.append((u * g, f"z{k}", 1.0))
        if need > 0:
            q = _H(hb) @ np.diag(weights) @ hb
            eh_terms.append((u * q, f"x{k}", 1.0))
            if use_an:
                eh_terms.append((u * q, f"z{k}", 1.0))
            rphi = ch.irs_bob[k] * dp.reflect[None, :]
            kappa2 += float(np.trace(np.diag(weights)
                                     @ (params.noise_irs * rphi @ _H(rphi)
                                        + params.noise_ant * np.eye(params.n_rx))).real)
        prob.add_lmi([[f"x{k}", f"b{k}"], [("H", f"b{k}"), np.eye(ns)]])
        if use_an:
            prob.add_lmi([[f"z{k}", f"a{k}"], [("H", f"a{k}"), np.eye(na)]])

    prob.add_constraint(budget_terms, "<=", params.p_tx)
    if enforce_reflect:
        noise_refl = params.noise_irs * float(np.sum(np.abs(dp.reflect) ** 2))
        prob.add_constraint(reflect_terms, "<=", params.p_reflect - noise_refl)
    if need > 0 and need - kappa2 > 0:
        prob.add_constraint(eh_terms, ">=", need - kappa2)

    out = solve_sdp(prob, cfg.solver_tol)
    info = {"sdp_status": out.status, "tightness": float("nan"), "kept_incumbent": False}
    if not out.ok:
        info["kept_incumbent"] = True
        return dp, info

    vals = {name: out.variables[name].copy() for name in out.variables}
    for k in range(n):
        vals[f"x{k}"] *= u
        vals[f"b{k}"] *= ru
        if use_an:
            vals[f"z{k}"] *= u
            vals[f"a{k}"] *= ru
    cand = dp.copy()
    cand.precoders = np.stack([vals[f"b{k}"] for k in range(n)])
    if use_an:
        cand.an_precoders = np.stack([vals[f"a{k}"] for k in range(n)])
    res = 0.0
    for k in range(n):
        x = vals[f"x{k}"]
        gap = np.linalg.norm(x - cand.precoders[k] @ _H(cand.precoders[k]))
        res = max(res, gap / max(np.linalg.norm(x), 1e-300))
    info["tightness"] = res

    if need > 0 and eh_input_power(cand, ch, params) < need * (1 - 1e-9):
        # fold the lifted-variable surplus into the AN covariance: the summed
        # covariance then matches the lifted one exactly, so every constraint
        # evaluated on the lifted variables transfers to the recovered point
        if use_an:
            for k in range(n):
                extra = (vals[f"x{k}"] - cand.precoders[k] @ _H(cand.precoders[k])
                         + vals[f"z{k}"] - cand.an_precoders[k] @ _H(cand.an_precoders[k]))
                full = cand.an_precoders[k] @ _H(cand.an_precoders[k]) + extra
                vals_e, vecs = np.linalg.eigh(0.5 * (full + full.conj().T))
                cand.an_precoders[k] = vecs @ np.diag(np.sqrt(np.clip(vals_e, 0, None)))
            info["an_repair"] = True
        if eh_input_power(cand, ch, params) < need * (1 - 1e-7):
            info["kept_incumbent"] = True
            return dp, info

    before = wmmse.transformed_objective(dp, aux, ch, params)
    after = wmmse.transformed_objective(cand, aux, ch, params)
    if after < before - 1e-9 * max(abs(before), 1.0):
        info["kept_incumbent"] = True
        return dp, info
    return cand, info


def _gain_align_reflect(ch: ChannelSet, params: SystemParams, phi0: np.ndarray,
                        iters: int, unimodular: bool) -> np.ndarray:
    """Warm up the reflection phases toward the legitimate channel gain.

    Runs tangent steps on sum_k ||H_k + R_k diag(phi) T_k||_F^2 under the
    reflect budget with an equal-power transmit assumption (amplitude-capped
    closed form), or plain phase alignment when unimodular.
    """
    m = params.n_elem
    quad = np.zeros((m, m), dtype=complex)
    lin = np.zeros(m, dtype=complex)
    budget_diag = np.zeros(m)
    per_antenna = params.p_tx / (params.n_sub * params.n_tx)
    for k in range(params.n_sub):
        t, r, h = ch.alice_irs[k], ch.irs_bob[k], ch.alice_bob[k]
        tth = t @ _H(t)
        quad += (_H(r) @ r) * tth.T
        lin += np.diagonal(_H(r) @ h @ _H(t))
        budget_diag += per_antenna * np.diagonal(tth).real
    quad = 0.5 * (quad + quad.conj().T)
    budget_diag = budget_diag + params.noise_irs
    phi = phi0
    for _ in range(iters):
        coeff = lin + quad @ phi
        if np.abs(coeff).max() == 0:
            break
        if unimodular:
            phi = np.exp(1j * np.angle(coeff))
        else:
            direction = coeff / budget_diag
            norm = math.sqrt(float(np.real(np.vdot(direction, budget_diag * direction))))
            phi = direction * math.sqrt(params.p_reflect) / norm
    return phi


def init_blocks(ch: ChannelSet, params: SystemParams, rng, cfg: BcdConfig | None = None,
                irs_mode: str = "active") -> DesignPoint:
    """Deterministic-in-seed feasible starting point.

    Draws random reflection phases and warms them up with a few channel-gain
    alignment steps, matches the precoders to the effective channel's top
    singular directions at a fraction of the transmit budget, and scales the
    common reflection amplitude to use the reflect budget exactly.  If the
    harvesting constraint fails, the split factors back off toward the
    harvesting extreme and, if still short, the phases are realigned to
    maximize delivered power before declaring the configuration infeasible.
    """
    cfg = cfg or BcdConfig()
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    n, na, ns = params.n_sub, params.n_tx, params.n_streams

    theta = rng.uniform(0.0, 2.0 * np.pi, params.n_elem)
    direction = np.exp(1j * theta)
    if irs_mode == "none":
        direction = np.zeros(params.n_elem, dtype=complex)
    elif cfg.init_align_iters > 0:
        direction = _gain_align_reflect(ch, params, direction, cfg.init_align_iters,
                                        unimodular=(irs_mode == "passive"))

    dp = DesignPoint.zeros(params)
    dp.split = np.full(params.n_rx, cfg.init_split if cfg.fixed_split is None else cfg.fixed_split)
    dp.reflect = direction.copy()

    per_stream = cfg.init_power_frac * params.p_tx / (n * ns)

    def match_precoders():
        eff = effective_cfr(ch, dp.reflect)
        for k in range(n):
            _, _, vh = np.linalg.svd(eff.bob[k])
            dp.precoders[k] = vh[:ns].conj().T * math.sqrt(per_stream)

    def rescale_amplitude():
        if irs_mode != "active" or np.abs(dp.reflect).max() == 0:
            return
        unit = dp.reflect / np.abs(dp.reflect).max()
        probe = dp.copy()
        probe.reflect = unit
        used = reflect_power(probe, ch, params)
        dp.reflect = unit * math.sqrt(params.p_reflect / used)

    match_precoders()
    rescale_amplitude()
    match_precoders()
    rescale_amplitude()

    need = eh_pseudo_inverse(params.eh_target, params)
    if need <= 0:
        return dp

    def satisfied():
        return eh_input_power(dp, ch, params) >= need

    if satisfied():
        return dp

    if cfg.fixed_split is None:
        floor = np.full(params.n_rx, 1e-6)
        saved = dp.split.copy()
        dp.split = floor.copy()
        if satisfied():
            # back off toward balance while keeping a small harvesting margin
            lo, hi = 1e-6, cfg.init_split
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                dp.split = np.full(params.n_rx, mid)
                if eh_input_power(dp, ch, params) >= need * 1.02:
                    lo = mid
                else:
                    hi = mid
            dp.split = np.full(params.n_rx, lo)
            return dp
        dp.split = floor if irs_mode != "none" else saved

    # phase realignment toward the harvesting optimum
    if irs_mode != "none":
        for _ in range(cfg.init_eh_iters):
            quad, lin, _ = eh_quadratics(dp, ch, params)
            coeff = quad @ dp.reflect + lin
            if np.abs(coeff).max() == 0:
                break
            if irs_mode == "active":
                diag_budget = reflect_quad_diag(dp, ch) + params.noise_irs
                direction = coeff / diag_budget
                norm = math.sqrt(float(np.real(np.vdot(direction, diag_budget * direction))))
                dp.reflect = direction * math.sqrt(params.p_reflect) / norm
            else:
                dp.reflect = np.exp(1j * np.angle(coeff))
            match_precoders()
            rescale_amplitude()
            if satisfied():
                return dp

    raise InfeasibleConfigError(
        f"no feasible start: harvesting needs {need:.3e} W input, best found "
        f"{eh_input_power(dp, ch, params):.3e} W")


def run_bcd(ch: ChannelSet, params: SystemParams, cfg: BcdConfig, seed,
            irs_mode: str = "active", irs_update_fn=None) -> BcdResult:
    """Full block-coordinate loop (surface update selected by irs_mode).

    irs_mode "active" uses the inner-approximation step under the reflect
    budget, "passive" delegates to irs_update_fn (unit-modulus machinery),
    "none" freezes the surface.  Stops when the relative objective change
    drops below tol_outer.
    """
    rng = np.random.default_rng(seed)
    dp = init_blocks(ch, params, rng, cfg, irs_mode=irs_mode)
    trace = BcdTrace()
    status = "ok"
    obj_prev = secrecy_sum_rate(dp, ch, params, clamp=False)
    converged = False
    iterations = 0
    for it in range(cfg.max_outer):
        tic = time.perf_counter()
        deltas = {}
        aux = wmmse.optimal_aux(dp, ch, params)

        dp, pre_info = optimize_precoders(dp, aux, ch, params, cfg,
                                          enforce_reflect=(irs_mode == "active"))
        deltas["precoders"] = pre_info

        if cfg.fixed_split is None:
            try:
                dp.split, ps_info = optimize_ps(dp, aux, ch, params, cfg)
            except EhInfeasibleError as err:
                status = f"eh-infeasible: {err}"
                break
            deltas["split"] = ps_info

        if irs_mode == "active" and not cfg.fixed_reflect:
            dp.reflect, irs_info = optimize_irs(dp, aux, ch, params, cfg)
            deltas["reflect"] = irs_info
        elif irs_mode == "passive" and irs_update_fn is not None and not cfg.fixed_reflect:
            dp.reflect, irs_info = irs_update_fn(dp, aux, ch, params, cfg)
            deltas["reflect"] = irs_info

        obj = secrecy_sum_rate(dp, ch, params, clamp=False)
        report = check_feasibility(dp, ch, params,
                                   enforce_reflect=(irs_mode == "active"))
        trace.objective.append(obj)
        trace.res_c1.append(report.res_c1)
        trace.res_c2.append(report.res_c2)
        trace.res_c5.append(report.res_c5)
        trace.tightness.append(pre_info.get("tightness", float("nan")))
        trace.block_deltas.append(deltas)
        trace.times_ms.append(1e3 * (time.perf_counter() - tic))
        iterations = it + 1

        if it >= 1 and abs(obj - obj_prev) <= cfg.tol_outer * max(abs(obj), 1e-12):
            converged = True
            obj_prev = obj
            break
        obj_prev = obj
    return BcdResult(point=dp, trace=trace, converged=converged,
                     iterations=iterations, status=status)
