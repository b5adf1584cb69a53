"""Comparison schemes: passive surface, no surface, and rate maximization.

Passive runs zero the surface noise, replace the reflect budget by unit-modulus
coefficients, and compensate the transmitter with the unused reflect budget;
surface-free runs additionally freeze the reflection vector at zero.  Rate
maximization ignores the eavesdropper inside the optimizer (zeroed Eve links)
and is then judged on the true channels.  Every run record reports the secrecy
rate under the scheme's physical model on the real channels, regardless of
what the optimizer assumed.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import wmmse
from .bcd import BcdConfig, BcdResult, build_irs_subproblem, run_bcd
from .channel import ChannelSet
from .lowcx import LowcxConfig, LowcxResult, gain_quadratics, run_lowcomplexity
from .sysmodel import (
    DesignPoint, SystemParams, check_feasibility, eh_pseudo_inverse, rate_bob,
    secrecy_sum_rate,
)

SCHEMES = ("active", "passive", "none")
ALGORITHMS = ("bcd", "lowcx", "rm")


@dataclass(frozen=True)
class SchemeSpec:
    """One benchmark cell: surface type x optimization algorithm."""

    scheme: str = "active"
    algorithm: str = "bcd"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")

    @property
    def label(self) -> str:
        return f"{self.scheme}/{self.algorithm}"


@dataclass
class RunRecord:
    """Outcome of one optimizer run on one channel draw."""

    scheme: str
    algorithm: str
    sweep_var: str
    sweep_value: float
    trial: int
    secrecy_clamped: float
    secrecy_unclamped: float
    optimized_objective: float   # what the optimizer maximized on its own model
    iterations: int
    res_c1: float
    res_c2: float
    res_c5: float
    tightness: float
    runtime_ms: float
    seed: int
    feasible: bool = True
    status: str = "ok"


def passive_model_adjust(params: SystemParams) -> SystemParams:
    """Zero the surface amplifier noise (passive or absent surface)."""
    return replace(params, noise_irs=0.0)


def compensate_budget(params: SystemParams) -> SystemParams:
    """Fold the unused reflect budget into the transmitter for fair comparison."""
    return replace(params, p_tx=params.p_tx + params.p_reflect)


def scheme_params(spec: SchemeSpec, params: SystemParams) -> SystemParams:
    if spec.scheme == "active":
        return params
    return passive_model_adjust(compensate_budget(params))


def passive_phase_update(gain_quad: np.ndarray, gain_lin: np.ndarray,
                         phi_prev: np.ndarray) -> np.ndarray:
    """Closed-form unit-modulus ascent step on the combined channel gain."""
    coeff = gain_lin + gain_quad @ phi_prev
    phi = np.exp(1j * np.angle(coeff))
    dead = np.abs(coeff) == 0
    phi[dead] = phi_prev[dead]  # tie-break: keep the previous phase
    return phi


def passive_stage1(ch: ChannelSet, params: SystemParams, cfg: LowcxConfig):
    """Unit-modulus channel-gain maximization (low-complexity passive variant)."""
    quad, lin, _ = gain_quadratics(ch, params)
    phi = np.ones(params.n_elem, dtype=complex)

    def objective(p):
        return float(np.real(np.vdot(p, quad @ p)) + 2 * np.real(np.vdot(p, lin)))

    trace = [objective(phi)]
    for _ in range(cfg.max_ia):
        phi = passive_phase_update(quad, lin, phi)
        trace.append(objective(phi))
        if abs(trace[-1] - trace[-2]) <= cfg.tol_ia * max(abs(trace[-2]), 1e-12):
            break
    return phi, np.asarray(trace)


def passive_irs_bcd_step(dp: DesignPoint, aux: wmmse.AuxiliaryBlocks, ch: ChannelSet,
                         params: SystemParams, cfg: BcdConfig):
    """Unit-modulus surface update inside the passive BCD.

    The quadratic objective is majorized by its largest-eigenvalue surrogate
    (constant on the torus plus a linear term), the harvesting constraint is
    linearized at the incumbent, and the penalty factor weighting the two
    linear forms is found by bisection until the linearized constraint is
    exactly active.
    """
    sub = build_irs_subproblem(dp, aux, ch, params)
    lam_max = float(np.linalg.eigvalsh(sub.quad).max())
    need = eh_pseudo_inverse(params.eh_target, params)
    phi = dp.reflect.copy()
    trace = [sub.objective(phi)]
    info = {"kept_incumbent": False, "penalty": 0.0}
    for _ in range(cfg.max_ia):
        c_obj = (lam_max * np.eye(params.n_elem) - sub.quad) @ phi - sub.lin
        if need > 0:
            c_eh = sub.eh_quad @ phi + sub.eh_lin
            rho = need - sub.eh_const + float(np.real(np.vdot(phi, sub.eh_quad @ phi)))

            def step(u):
                coeff = c_obj + u * c_eh
                cand = np.exp(1j * np.angle(coeff))
                dead = np.abs(coeff) == 0
                cand[dead] = phi[dead]
                return cand

            def harvested(u):
                return 2 * float(np.real(np.vdot(c_eh, step(u))))

            if harvested(0.0) >= rho:
                u = 0.0
            else:
                if 2 * float(np.sum(np.abs(c_eh))) < rho:
                    info["kept_incumbent"] = True
                    break
                u_lo, u_hi = 0.0, 1.0
                for _ in range(200):
                    if harvested(u_hi) >= rho:
                        break
                    u_hi *= 2.0
                for _ in range(200):
                    mid = 0.5 * (u_lo + u_hi)
                    if harvested(mid) >= rho:
                        u_hi = mid
                    else:
                        u_lo = mid
                    if (u_hi - u_lo) <= cfg.eps_bisect * max(u_hi, 1e-300):
                        break
                u = u_hi
            info["penalty"] = u
            cand = step(u)
        else:
            cand = np.exp(1j * np.angle(c_obj))
            dead = np.abs(c_obj) == 0
            cand[dead] = phi[dead]
        val = sub.objective(cand)
        if val > trace[-1] + 1e-12 * max(abs(trace[-1]), 1.0):
            break  # majorization step failed to descend; keep the incumbent phase
        phi = cand
        trace.append(val)
        if abs(trace[-1] - trace[-2]) <= cfg.tol_ia * max(abs(trace[-2]), 1e-12):
            break
    info["trace"] = np.asarray(trace)
    return phi, info


def run_scheme(spec: SchemeSpec, ch: ChannelSet, params: SystemParams,
               bcd_cfg: BcdConfig | None = None, lowcx_cfg: LowcxConfig | None = None,
               seed: int = 0, sweep_var: str = "", sweep_value: float = float("nan"),
               trial: int = 0) -> RunRecord:
    """Optimize under the scheme's model and judge on the true channels."""
    bcd_cfg = bcd_cfg or BcdConfig()
    lowcx_cfg = lowcx_cfg or LowcxConfig()
    run_params = scheme_params(spec, params)
    opt_ch = ch.zero_eve() if spec.algorithm == "rm" else ch

    tic = time.perf_counter()
    tightness = float("nan")
    status = "ok"
    if spec.algorithm in ("bcd", "rm"):
        res = run_bcd(opt_ch, run_params, bcd_cfg, seed, irs_mode=spec.scheme,
                      irs_update_fn=passive_irs_bcd_step if spec.scheme == "passive" else None)
        point = res.point
        iterations = res.iterations
        optimized = res.trace.objective[-1] if res.trace.objective else float("nan")
        finite = [t for t in res.trace.tightness if not math.isnan(t)]
        tightness = finite[-1] if finite else float("nan")
        status = res.status
    else:
        if spec.scheme == "active":
            res = run_lowcomplexity(opt_ch, run_params, lowcx_cfg, seed)
        elif spec.scheme == "passive":
            phi, _ = passive_stage1(opt_ch, run_params, lowcx_cfg)
            res = run_lowcomplexity(opt_ch, run_params, lowcx_cfg, seed,
                                    reflect=phi, enforce_reflect=False)
        else:
            res = run_lowcomplexity(opt_ch, run_params, lowcx_cfg, seed,
                                    reflect=np.zeros(params.n_elem, dtype=complex),
                                    enforce_reflect=False)
        point = res.point
        iterations = res.iterations
        optimized = secrecy_sum_rate(point, opt_ch, run_params, clamp=False)
        status = res.status
    runtime_ms = 1e3 * (time.perf_counter() - tic)

    report = check_feasibility(point, ch, run_params,
                               enforce_reflect=(spec.scheme == "active"))
    clamped = secrecy_sum_rate(point, ch, run_params, clamp=True)
    unclamped = secrecy_sum_rate(point, ch, run_params, clamp=False)
    if spec.algorithm == "rm":
        optimized = float(np.sum(rate_bob(point, opt_ch, run_params)))
    return RunRecord(scheme=spec.scheme, algorithm=spec.algorithm, sweep_var=sweep_var,
                     sweep_value=sweep_value, trial=trial, secrecy_clamped=clamped,
                     secrecy_unclamped=unclamped, optimized_objective=optimized,
                     iterations=iterations, res_c1=report.res_c1, res_c2=report.res_c2,
                     res_c5=report.res_c5, tightness=tightness, runtime_ms=runtime_ms,
                     seed=seed, feasible=report.feasible, status=status)
