"""Three-stage low-complexity solver.

Stage 1 points the reflecting surface at the legitimate user by maximizing the
combined effective channel gain over all subcarriers (inner approximation with
a linear surrogate).  Stage 2 forces the eavesdropping rate to exactly zero by
restricting the information beams to the null space of Eve's effective
channels, diagonalizes the resulting link, and water-fills power across the
eigen-streams under transmit, reflect and harvesting constraints.  Stage 3
refines the power-splitting factors by iterating a concave surrogate of the
difference-of-log-det objective.  The three stages run exactly once: the
zero-forcing structure would be invalidated by revisiting earlier blocks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize as sp_minimize

from .channel import ChannelSet, EffectiveChannels, effective_cfr
from .conic import LinearConstraint, QcqpProblem, SolveOutcome, ia_drive, solve_log_allocation, solve_logdet_diag
from .sysmodel import (
    DesignPoint, EhInfeasibleError, SystemParams, eh_pseudo_inverse, SPLIT_FLOOR,
)

LN2 = math.log(2.0)


class ZfInfeasibleError(RuntimeError):
    """Null-space precoding impossible: no spare transmit dimensions."""


@dataclass
class LowcxConfig:
    tol_ia: float = 1e-5
    max_ia: int = 60
    solver_tol: float = 1e-8
    working_split: float = 0.5   # split assumed during stages 1-2, refined in stage 3
    kkt_tol: float = 1e-7


@dataclass
class ZfStructures:
    """Per-subcarrier zero-forcing geometry and allocation coefficients."""

    null_basis: np.ndarray    # (N, N_A, D) orthonormal, annihilates Eve's channel
    gains: np.ndarray         # (N, N_B, D) effective link inside the null space
    eigvecs: np.ndarray       # (N, D, N_S) top eigenvectors of G^H Gamma^-1 G
    eigvals: np.ndarray       # (N, N_S) descending
    reflect_load: np.ndarray  # (N, N_S) per-stream reflect-power coefficients
    harvest_load: np.ndarray  # (N, N_S) per-stream harvested-power coefficients
    harvest_const: float      # harvested power independent of the allocation


@dataclass
class LowcxResult:
    point: DesignPoint
    n_streams: int
    stage1_trace: np.ndarray
    stage3_trace: np.ndarray
    alloc_info: dict
    status: str = "ok"

    @property
    def iterations(self) -> int:
        return len(self.stage1_trace) + len(self.stage3_trace)


def _H(a):
    return np.conj(np.swapaxes(a, -1, -2))


def gain_quadratics(ch: ChannelSet, params: SystemParams):
    """Combined-channel-gain objective data: (quad, lin, budget_diag) with
    sum_k ||H_k + R_k diag(phi) T_k||_F^2 = phi^H quad phi + 2 Re(phi^H lin) + const
    and the equal-power reflect budget phi^H diag(budget_diag) phi <= P_I."""
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
    return 0.5 * (quad + quad.conj().T), lin, budget_diag + params.noise_irs


def stage1_irs(ch: ChannelSet, params: SystemParams, cfg: LowcxConfig | None = None):
    """Maximize sum_k ||H_k + R_k diag(phi) T_k||_F^2 under the reflect budget.

    The convex objective is lower-bounded by its tangent at the incumbent, so
    each step maximizes a linear functional over the budget ellipsoid (closed
    form inside the QCQP solver); equal power over antennas and subcarriers is
    assumed for the amplified-signal part of the budget.
    """
    cfg = cfg or LowcxConfig()
    m = params.n_elem
    quad, lin, budget_diag = gain_quadratics(ch, params)

    def objective(phi):
        return float(np.real(np.vdot(phi, quad @ phi)) + 2 * np.real(np.vdot(phi, lin)))

    if np.abs(lin).max() == 0 and np.abs(quad).max() == 0:
        zero = np.zeros(m, dtype=complex)
        return zero, np.asarray([0.0]), "converged"

    def build(phi_t):
        prob = QcqpProblem(m)
        prob.set_objective(None, -(lin + quad @ phi_t))
        prob.add_quad_le(np.diag(budget_diag), None, -params.p_reflect)
        return prob

    phi0 = np.zeros(m, dtype=complex)
    phi, trace, status = ia_drive(build, phi0, cfg.tol_ia, cfg.max_ia,
                                  objective=objective, maximize=True)
    return phi, trace, status


def zf_project(eff_eve: np.ndarray, n_tx: int, n_eve: int) -> np.ndarray:
    """Orthonormal bases annihilating the eavesdropper's effective channels.

    The basis dimension is fixed at n_tx - n_eve (the trailing right-singular
    vectors) so the stream count stays constant across subcarriers, also when a
    channel drops rank; an identically zero eavesdropper channel degenerates to
    the full space.
    """
    n = eff_eve.shape[0]
    if np.abs(eff_eve).max() == 0.0:
        basis = np.broadcast_to(np.eye(n_tx), (n, n_tx, n_tx))
        return np.ascontiguousarray(basis).astype(complex)
    if n_tx <= n_eve:
        raise ZfInfeasibleError(
            f"{n_tx} transmit antennas cannot null {n_eve} eavesdropper antennas; "
            "no streams would remain")
    basis = np.empty((n, n_tx, n_tx - n_eve), dtype=complex)
    for k in range(n):
        _, _, vh = np.linalg.svd(eff_eve[k], full_matrices=True)
        basis[k] = vh[n_eve:].conj().T
    return basis


def eigen_structure(eff: EffectiveChannels, null_basis: np.ndarray, reflect: np.ndarray,
                    split: np.ndarray, ch: ChannelSet, params: SystemParams,
                    n_streams: int) -> ZfStructures:
    """Diagonalize the nulled link and collect per-stream budget coefficients."""
    n = params.n_sub
    d = null_basis.shape[2]
    dsafe = np.clip(split, SPLIT_FLOOR, 1.0)
    gains = eff.bob @ null_basis
    eigvecs = np.empty((n, d, n_streams), dtype=complex)
    eigvals = np.empty((n, n_streams))
    reflect_load = np.empty((n, n_streams))
    harvest_load = np.empty((n, n_streams))
    harvest_const = 0.0
    weights = 1.0 - split
    for k in range(n):
        rphi = ch.irs_bob[k] * reflect[None, :]
        gamma = (params.noise_irs * rphi @ _H(rphi)
                 + params.noise_ant * np.eye(params.n_rx)
                 + params.noise_sp * np.diag(1.0 / dsafe))
        core = _H(gains[k]) @ np.linalg.solve(gamma, gains[k])
        vals, vecs = np.linalg.eigh(0.5 * (core + core.conj().T))
        order = np.argsort(vals)[::-1][:n_streams]
        eigvals[k] = np.clip(vals[order], 0.0, None)
        eigvecs[k] = vecs[:, order]
        steer = null_basis[k] @ eigvecs[k]                      # (N_A, N_S)
        # per-stream reflect load: diag of (T V U)^H |Phi|^2 (T V U)
        tvu = ch.alice_irs[k] @ steer
        reflect_load[k] = np.sum((np.abs(reflect[:, None]) ** 2) * np.abs(tvu) ** 2, axis=0)
        gvu = gains[k] @ eigvecs[k]                              # (N_B, N_S)
        harvest_load[k] = np.sum(weights[:, None] * np.abs(gvu) ** 2, axis=0)
        harvest_const += float(np.trace(np.diag(weights)
                                        @ (params.noise_irs * rphi @ _H(rphi)
                                           + params.noise_ant * np.eye(params.n_rx))).real)
    return ZfStructures(null_basis=null_basis, gains=gains, eigvecs=eigvecs,
                        eigvals=eigvals, reflect_load=reflect_load,
                        harvest_load=harvest_load, harvest_const=harvest_const)


def _dual_water_fill(lam, a_coeff):
    """Per-stream allocation at fixed multipliers: [1/(ln2 a_i) - 1/lam_i]^+."""
    z = np.zeros_like(lam)
    mask = (lam > 0) & (a_coeff > 0)
    z[mask] = np.maximum(1.0 / (LN2 * a_coeff[mask]) - 1.0 / lam[mask], 0.0)
    return z


def power_allocate(eigvals: np.ndarray, reflect_load: np.ndarray, harvest_load: np.ndarray,
                   p_budget: float, reflect_budget: float, eh_need: float,
                   cfg: LowcxConfig | None = None):
    """Water-filling with reflect and harvesting side constraints.

    Solved through the three-multiplier dual with the per-stream closed form;
    the dual is minimized quasi-Newton style, and the result is accepted only
    if primal feasibility and complementary slackness hold, otherwise the
    generic concave solve takes over.
    """
    cfg = cfg or LowcxConfig()
    lam = np.asarray(eigvals, dtype=float).ravel()
    dhat = np.asarray(reflect_load, dtype=float).ravel()
    dbar = np.asarray(harvest_load, dtype=float).ravel()
    shape = np.asarray(eigvals).shape
    use_eh = eh_need > 0
    use_reflect = math.isfinite(reflect_budget)

    if use_eh:
        # attainable harvested power under the other two budgets (small LP)
        rows, rhs = [np.ones_like(dbar)], [p_budget]
        if use_reflect:
            rows.append(dhat)
            rhs.append(max(reflect_budget, 0.0))
        res = linprog(-dbar, A_ub=np.vstack(rows), b_ub=rhs,
                      bounds=[(0, None)] * lam.size, method="highs")
        best = -res.fun if res.status == 0 else 0.0
        if best < eh_need * (1 - 1e-9):
            raise EhInfeasibleError(
                f"allocation cannot harvest enough: need {eh_need:.3e}, best {best:.3e}")

    scale = max(p_budget, 1e-300)

    def duals_to_coeff(mu):
        return mu[0] + mu[1] * dhat - mu[2] * dbar

    def dual_fun(mu):
        a = duals_to_coeff(mu)
        bad = (a <= 1e-18) & (lam > 0)
        if np.any(bad) or np.any(a < -1e-18):
            return 1e12, np.zeros(3)
        z = _dual_water_fill(lam, a)
        val = float(np.sum(np.log2(1 + lam * z)) - a @ z
                    + mu[0] * p_budget - mu[2] * eh_need)
        grad = np.array([p_budget - z.sum(),
                         (reflect_budget - dhat @ z) if use_reflect else 0.0,
                         dbar @ z - eh_need])
        if use_reflect:
            val += mu[1] * reflect_budget
        return val, grad

    x0 = np.array([1.0 / scale, 0.0, 0.0])
    bounds = [(0.0, None), (0.0, None) if use_reflect else (0.0, 0.0),
              (0.0, None) if use_eh else (0.0, 0.0)]
    best = sp_minimize(dual_fun, x0, jac=True, bounds=bounds, method="L-BFGS-B",
                       options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-12})
    mu = np.maximum(best.x, 0.0)

    # when only the transmit budget is active, polish its multiplier to machine
    # precision by exact bisection on the monotone total-power curve
    z_try = _dual_water_fill(lam, duals_to_coeff(mu))
    others_slack = ((not use_reflect or dhat @ z_try < reflect_budget * (1 - 1e-7))
                    and (not use_eh or dbar @ z_try > eh_need * (1 + 1e-7))
                    and mu[1] < 1e-12 and mu[2] < 1e-12)
    if others_slack and np.any(lam > 0):
        lo, hi = 0.0, max(mu[0] * 4, 1.0 / scale)
        while np.sum(_dual_water_fill(lam, np.full_like(lam, hi))) > p_budget:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.sum(_dual_water_fill(lam, np.full_like(lam, max(mid, 1e-300)))) > p_budget:
                lo = mid
            else:
                hi = mid
        mu = np.array([hi, 0.0, 0.0])
    z = _dual_water_fill(lam, duals_to_coeff(mu))

    # accept only on verified feasibility and complementary slackness
    tol = cfg.kkt_tol
    slacks = np.array([p_budget - z.sum(),
                       (reflect_budget - dhat @ z) if use_reflect else np.inf,
                       dbar @ z - eh_need])
    scales = np.array([p_budget,
                       max(abs(reflect_budget), 1e-300) if use_reflect else 1.0,
                       max(eh_need, 1e-300)])
    feasible = slacks[0] >= -tol * scales[0] \
        and (not use_reflect or slacks[1] >= -tol * scales[1]) \
        and (not use_eh or slacks[2] >= -tol * scales[2])

    def comp_ok(m, s, sc):
        if m <= 1e-15:
            return True
        return abs(m * s) <= tol * sc * max(m, 1.0)

    comp = comp_ok(mu[0], slacks[0], scales[0]) and comp_ok(mu[1], slacks[1], scales[1]) \
        and comp_ok(mu[2], slacks[2], scales[2])
    info = {"method": "dual", "multipliers": mu, "slacks": slacks}
    if feasible and comp:
        return z.reshape(shape), info

    cons = [LinearConstraint(np.ones_like(lam), "<=", p_budget)]
    if use_reflect:
        cons.append(LinearConstraint(dhat, "<=", reflect_budget))
    if use_eh:
        cons.append(LinearConstraint(dbar, ">=", eh_need))
    out = solve_log_allocation(lam, cons, cfg.solver_tol)
    if not out.ok:
        raise EhInfeasibleError(f"power allocation failed: {out.message}")
    info = {"method": "conic-fallback", "multipliers": mu, "slacks": slacks}
    return np.asarray(out.variables).reshape(shape), info


class _SplitSurrogate:
    """One concave surrogate step of the split refinement (solved in conic)."""

    def __init__(self, mats, hat_mats, lower, inv_coeffs, inv_rhs, tol):
        self.mats = mats
        self.hat_mats = hat_mats
        self.lower = lower
        self.inv_coeffs = inv_coeffs
        self.inv_rhs = inv_rhs
        self.tol = tol
        self.anchor = None

    def at(self, x):
        self.anchor = np.asarray(x, dtype=float)
        return self

    def solve(self, tol) -> SolveOutcome:
        lin = np.zeros(self.lower.size)
        for hk in self.hat_mats:
            lin += np.diagonal(np.linalg.inv(hk + np.diag(self.anchor))).real
        return solve_logdet_diag(self.mats, lin / LN2, self.lower,
                                 self.inv_coeffs, self.inv_rhs, self.tol)


def stage3_ps(eff: EffectiveChannels, zf: ZfStructures, alloc: np.ndarray,
              reflect: np.ndarray, ch: ChannelSet, params: SystemParams,
              cfg: LowcxConfig, split0: np.ndarray):
    """Refine the power-splitting factors with the zero-forced beams fixed.

    Works on the reciprocal variables x_r = sigma_sp^2 / d_r >= sigma_sp^2; the
    concave-minus-concave objective is handled by upper-bounding the subtracted
    term with its tangent, re-anchored every iteration.
    """
    n = params.n_sub
    hat_mats = np.empty((n, params.n_rx, params.n_rx), dtype=complex)
    mats = np.empty_like(hat_mats)
    for k in range(n):
        rphi = ch.irs_bob[k] * reflect[None, :]
        hat_mats[k] = (params.noise_irs * rphi @ _H(rphi)
                       + params.noise_ant * np.eye(params.n_rx))
        beams = zf.gains[k] @ zf.eigvecs[k] @ np.diag(np.sqrt(alloc[k]))
        mats[k] = hat_mats[k] + beams @ _H(beams)
    total = mats.sum(axis=0)
    need = eh_pseudo_inverse(params.eh_target, params)
    inv_coeffs = inv_rhs = None
    if need > 0:
        inv_coeffs = params.noise_sp * np.diagonal(total).real
        inv_rhs = float(np.trace(total).real) - need
        if inv_rhs <= 0:
            return split0, np.asarray([]), "eh-infeasible"

    def objective(x):
        val = 0.0
        for k in range(n):
            val += np.linalg.slogdet(mats[k] + np.diag(x))[1] / LN2
            val -= np.linalg.slogdet(hat_mats[k] + np.diag(x))[1] / LN2
        return float(val)

    lower = np.full(params.n_rx, params.noise_sp)
    step = _SplitSurrogate(mats, hat_mats, lower, inv_coeffs, inv_rhs, cfg.solver_tol)
    x0 = params.noise_sp / np.clip(split0, SPLIT_FLOOR, 1.0)
    x, trace, status = ia_drive(lambda xt: step.at(xt), x0, cfg.tol_ia, cfg.max_ia,
                                objective=objective, maximize=True)
    x = np.maximum(np.asarray(x, dtype=float), lower)
    if need > 0 and float(np.sum(inv_coeffs / x)) > inv_rhs * (1 + 1e-6):
        return split0, trace, "eh-violated"
    return params.noise_sp / x, trace, status


def run_lowcomplexity(ch: ChannelSet, params: SystemParams, cfg: LowcxConfig | None = None,
                      seed=None, reflect: np.ndarray | None = None,
                      enforce_reflect: bool = True) -> LowcxResult:
    """Single pass of the three stages (deterministic; seed kept for interface parity).

    A pre-computed reflection vector can be supplied (passive or surface-free
    baselines); enforce_reflect=False removes the amplified-power budget from
    the allocation, as appropriate for a passive surface.
    """
    cfg = cfg or LowcxConfig()
    if reflect is None:
        reflect, s1_trace, s1_status = stage1_irs(ch, params, cfg)
    else:
        reflect = np.asarray(reflect, dtype=complex)
        s1_trace, s1_status = np.asarray([]), "supplied"
    eff = effective_cfr(ch, reflect)

    null_basis = zf_project(eff.eve, params.n_tx, params.n_eve)
    n_streams = min(params.n_tx, params.n_rx, null_basis.shape[2])
    split0 = np.full(params.n_rx, cfg.working_split)
    zf = eigen_structure(eff, null_basis, reflect, split0, ch, params, n_streams)

    if enforce_reflect:
        reflect_budget = params.p_reflect - params.noise_irs * float(np.sum(np.abs(reflect) ** 2))
        reflect_budget = max(reflect_budget, 0.0)
    else:
        reflect_budget = np.inf
    need = eh_pseudo_inverse(params.eh_target, params)
    eh_need = need - zf.harvest_const if need > 0 else 0.0
    alloc, alloc_info = power_allocate(zf.eigvals, zf.reflect_load, zf.harvest_load,
                                       params.p_tx, reflect_budget, eh_need, cfg)

    precoders = np.empty((params.n_sub, params.n_tx, n_streams), dtype=complex)
    for k in range(params.n_sub):
        precoders[k] = zf.null_basis[k] @ zf.eigvecs[k] @ np.diag(np.sqrt(alloc[k]))

    split, s3_trace, s3_status = stage3_ps(eff, zf, alloc, reflect, ch, params, cfg, split0)

    point = DesignPoint(precoders=precoders,
                        an_precoders=np.zeros((params.n_sub, params.n_tx, params.n_tx), dtype=complex),
                        reflect=reflect, split=split)
    status = s3_status if s3_status.startswith("eh") else "ok"
    return LowcxResult(point=point, n_streams=n_streams, stage1_trace=np.asarray(s1_trace),
                       stage3_trace=np.asarray(s3_trace), alloc_info=alloc_info, status=status)
