"""Solver-agnostic layer for the convex subproblems of the optimizers.

Three problem classes are exposed as plain-data containers: semidefinite
programs with Hermitian variables and LMI blocks (precoder step), convex
quadratically-constrained programs over a complex vector (reflection step),
and two small concave allocation programs (log-sum power allocation and
log-det splitting).  A generic inner-approximation driver iterates convex
surrogates to a KKT point.

The default realization binds to cvxpy (CLARABEL, falling back to SCS);
problems are rescaled before the solver sees them and every outcome is
re-checked against the original data with plain numpy arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import cvxpy as cp

DEFAULT_TOL = 1e-8
LN2 = math.log(2.0)

_STATUS_MAP = {
    cp.OPTIMAL: "optimal",
    cp.OPTIMAL_INACCURATE: "optimal",
    cp.INFEASIBLE: "infeasible",
    cp.INFEASIBLE_INACCURATE: "infeasible",
    cp.UNBOUNDED: "numerical-failure",
    cp.UNBOUNDED_INACCURATE: "numerical-failure",
}


@dataclass
class SolveOutcome:
    """Result of one convex solve.

    variables holds the primal solution: a dict of arrays for SDPs, a single
    array for vector problems.  max_violation is re-evaluated from the original
    problem data, independent of the solver's own report.
    """

    status: str
    variables: object = None
    objective: float | None = None
    max_violation: float = 0.0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _solve_with_fallback(prob: cp.Problem, tol: float) -> str:
    """CLARABEL first, SCS as fallback; returns the raw cvxpy status."""
    try:
        prob.solve(solver=cp.CLARABEL)
        status = prob.status
    except Exception:
        status = "solver_error"
    if status in (cp.OPTIMAL, cp.INFEASIBLE, cp.UNBOUNDED):
        return status
    try:
        prob.solve(solver=cp.SCS, eps=max(tol, 1e-9), max_iters=100000)
        return prob.status
    except Exception:
        return status


# ---------------------------------------------------------------------------
# Semidefinite programs
# ---------------------------------------------------------------------------

class SdpProblem:
    """Linear objective over Hermitian/complex matrix variables with LMI blocks.

    Objective and constraints are affine in the real functional
    Re Tr(coeff @ V); LMI layouts reference variables by name, their Hermitian
    transpose via ("H", name), or constant matrices.
    """

    def __init__(self, minimize: bool = True):
        self.minimize = minimize
        self.vars: dict[str, dict] = {}
        self.objective_terms: list[tuple[np.ndarray, str, float]] = []
        self.constraints: list[dict] = []
        self.lmis: list[list[list]] = []

    def add_hermitian(self, name: str, dim: int, psd: bool = True) -> None:
        self._add_var(name, {"kind": "hermitian", "shape": (dim, dim), "psd": psd})

    def add_complex(self, name: str, rows: int, cols: int) -> None:
        self._add_var(name, {"kind": "complex", "shape": (rows, cols), "psd": False})

    def _add_var(self, name, meta):
        if name in self.vars:
            raise ValueError(f"variable {name!r} already declared")
        self.vars[name] = meta

    def _check_term(self, coeff, name):
        if name not in self.vars:
            raise ValueError(f"unknown variable {name!r}")
        rows, cols = self.vars[name]["shape"]
        coeff = np.asarray(coeff, dtype=complex)
        if coeff.shape != (cols, rows):
            raise ValueError(f"coefficient for {name!r} must have shape {(cols, rows)}")
        return coeff

    def add_objective_trace(self, coeff, name: str, weight: float = 1.0) -> None:
        """Adds weight * Re Tr(coeff @ V) to the objective."""
        self.objective_terms.append((self._check_term(coeff, name), name, float(weight)))

    def add_constraint(self, terms, sense: str, rhs: float) -> None:
        """terms: iterable of (coeff, name[, weight]); constrains sum of
        weight * Re Tr(coeff @ V) against rhs."""
        if sense not in ("<=", ">=", "=="):
            raise ValueError(f"bad sense {sense!r}")
        packed = []
        for term in terms:
            coeff, name, weight = term if len(term) == 3 else (*term, 1.0)
            packed.append((self._check_term(coeff, name), name, float(weight)))
        self.constraints.append({"terms": packed, "sense": sense, "rhs": float(rhs)})

    def add_lmi(self, layout) -> None:
        """layout: nested lists of variable names, ("H", name), or constant arrays."""
        for row in layout:
            for entry in row:
                if isinstance(entry, str):
                    if entry not in self.vars:
                        raise ValueError(f"unknown variable {entry!r} in LMI")
                elif isinstance(entry, tuple):
                    if entry[0] != "H" or entry[1] not in self.vars:
                        raise ValueError(f"bad LMI entry {entry!r}")
        self.lmis.append(layout)

    # -- numeric evaluation on a candidate point (independent of the solver) --

    def eval_objective(self, values: dict) -> float:
        return sum(w * np.trace(c @ values[n]).real for c, n, w in self.objective_terms)

    def max_violation(self, values: dict) -> float:
        worst = 0.0
        for con in self.constraints:
            total = sum(w * np.trace(c @ values[n]).real for c, n, w in con["terms"])
            scale = max(abs(con["rhs"]), 1.0)
            if con["sense"] == "<=":
                worst = max(worst, (total - con["rhs"]) / scale)
            elif con["sense"] == ">=":
                worst = max(worst, (con["rhs"] - total) / scale)
            else:
                worst = max(worst, abs(total - con["rhs"]) / scale)
        for name, meta in self.vars.items():
            if meta["psd"]:
                val = np.linalg.eigvalsh(values[name]).min()
                worst = max(worst, -val / max(np.abs(values[name]).max(), 1.0))
        for layout in self.lmis:
            block = self._assemble(layout, values)
            scale = max(np.abs(block).max(), 1.0)
            worst = max(worst, -np.linalg.eigvalsh(block).min() / scale)
        return float(worst)

    def _assemble(self, layout, values):
        rows = []
        for row in layout:
            cells = []
            for entry in row:
                if isinstance(entry, str):
                    cells.append(values[entry])
                elif isinstance(entry, tuple):
                    cells.append(values[entry[1]].conj().T)
                else:
                    cells.append(np.asarray(entry))
            rows.append(cells)
        return np.block(rows)


def solve_sdp(problem: SdpProblem, tol: float = DEFAULT_TOL) -> SolveOutcome:
    """Interior-point solve of an SdpProblem (CLARABEL, then SCS on failure).

    An inaccurately-flagged solution is accepted when its independently
    recomputed constraint violation is within 10x the tolerance.
    """
    cvars = {}
    for name, meta in problem.vars.items():
        if meta["kind"] == "hermitian":
            cvars[name] = cp.Variable(meta["shape"], hermitian=True)
        else:
            cvars[name] = cp.Variable(meta["shape"], complex=True)

    obj_scale = max((np.abs(c).max() for c, _, _ in problem.objective_terms), default=1.0)
    obj_scale = max(obj_scale, 1e-300)
    expr = sum((w / obj_scale) * cp.real(cp.trace(c @ cvars[n]))
               for c, n, w in problem.objective_terms)

    cons = []
    for name, meta in problem.vars.items():
        if meta["psd"]:
            cons.append(cvars[name] >> 0)
    for con in problem.constraints:
        scale = max(max(np.abs(c).max() * abs(w) for c, _, w in con["terms"]),
                    abs(con["rhs"]), 1e-300)
        total = sum((w / scale) * cp.real(cp.trace(c @ cvars[n])) for c, n, w in con["terms"])
        rhs = con["rhs"] / scale
        if con["sense"] == "<=":
            cons.append(total <= rhs)
        elif con["sense"] == ">=":
            cons.append(total >= rhs)
        else:
            cons.append(total == rhs)
    for layout in problem.lmis:
        rows = []
        for row in layout:
            cells = []
            for entry in row:
                if isinstance(entry, str):
                    cells.append(cvars[entry])
                elif isinstance(entry, tuple):
                    cells.append(cp.conj(cvars[entry[1]]).T)
                else:
                    cells.append(np.asarray(entry))
            rows.append(cells)
        cons.append(cp.bmat(rows) >> 0)

    sense = cp.Minimize(expr) if problem.minimize else cp.Maximize(expr)
    prob = cp.Problem(sense, cons)

    def extract():
        if any(var.value is None for var in cvars.values()):
            return None
        values = {name: np.asarray(var.value) for name, var in cvars.items()}
        for name, meta in problem.vars.items():
            if meta["kind"] == "hermitian":
                values[name] = 0.5 * (values[name] + values[name].conj().T)
        return values

    try:
        prob.solve(solver=cp.CLARABEL)
        raw = prob.status
    except Exception:
        raw = "solver_error"
    candidate = extract() if raw in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) else None
    if raw != cp.OPTIMAL and raw not in (cp.INFEASIBLE, cp.UNBOUNDED):
        # accept an inaccurately-flagged point only if it checks out numerically
        if candidate is not None and problem.max_violation(candidate) <= 10 * max(tol, 1e-7):
            pass
        else:
            try:
                prob.solve(solver=cp.SCS, eps=max(tol, 1e-8), max_iters=25000)
                scs_candidate = extract() if prob.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) else None
                if scs_candidate is not None:
                    if (candidate is None
                            or problem.max_violation(scs_candidate) < problem.max_violation(candidate)):
                        candidate, raw = scs_candidate, prob.status
                elif prob.status in (cp.INFEASIBLE, cp.UNBOUNDED):
                    raw = prob.status
            except Exception:
                pass
    status = _STATUS_MAP.get(raw, "numerical-failure")
    if status != "optimal" or candidate is None:
        return SolveOutcome(status=status if status != "optimal" else "numerical-failure",
                            message=f"solver status {raw}")
    return SolveOutcome(status="optimal", variables=candidate,
                        objective=problem.eval_objective(candidate),
                        max_violation=problem.max_violation(candidate),
                        message=f"solver status {raw}")


# ---------------------------------------------------------------------------
# Convex QCQPs over a complex vector
# ---------------------------------------------------------------------------

class QcqpProblem:
    """minimize x^H P0 x + 2 Re(q0^H x) + r0 over complex x, subject to convex
    quadratic <= constraints and affine constraints.

    Quadratic forms must be Hermitian PSD; this convexity certificate is
    checked when the constraint is added.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.p0 = None
        self.q0 = np.zeros(dim, dtype=complex)
        self.r0 = 0.0
        self.quads: list[tuple[np.ndarray | None, np.ndarray, float]] = []
        self.affines: list[tuple[np.ndarray, float, str]] = []

    def _check_psd(self, p, what: str):
        if p is None:
            return None
        p = np.asarray(p, dtype=complex)
        if p.shape != (self.dim, self.dim):
            raise ValueError(f"{what} quadratic form must be {self.dim}x{self.dim}")
        herm = np.abs(p - p.conj().T).max()
        scale = max(np.abs(p).max(), 1.0)
        if herm > 1e-10 * scale:
            raise ValueError(f"{what} quadratic form is not Hermitian")
        p = 0.5 * (p + p.conj().T)
        if np.linalg.eigvalsh(p).min() < -1e-9 * scale:
            raise ValueError(f"{what} quadratic form is not PSD (problem would be non-convex)")
        return p

    def set_objective(self, p0, q0, r0: float = 0.0) -> None:
        self.p0 = self._check_psd(p0, "objective")
        self.q0 = np.zeros(self.dim, dtype=complex) if q0 is None else np.asarray(q0, dtype=complex)
        self.r0 = float(r0)

    def add_quad_le(self, p, q, r: float) -> None:
        """x^H p x + 2 Re(q^H x) + r <= 0."""
        p = self._check_psd(p, "constraint")
        q = np.zeros(self.dim, dtype=complex) if q is None else np.asarray(q, dtype=complex)
        self.quads.append((p, q, float(r)))

    def add_affine(self, a, b: float, sense: str = "<=") -> None:
        """2 Re(a^H x) + b {<=,>=} 0."""
        if sense not in ("<=", ">="):
            raise ValueError(f"bad sense {sense!r}")
        self.affines.append((np.asarray(a, dtype=complex), float(b), sense))

    def eval_objective(self, x: np.ndarray) -> float:
        val = 2 * np.real(np.vdot(self.q0, x)) + self.r0
        if self.p0 is not None:
            val += np.real(np.vdot(x, self.p0 @ x))
        return float(val)

    def max_violation(self, x: np.ndarray) -> float:
        worst = 0.0
        for p, q, r in self.quads:
            val = 2 * np.real(np.vdot(q, x)) + r
            if p is not None:
                val += np.real(np.vdot(x, p @ x))
            worst = max(worst, val / max(abs(r), 1.0))
        for a, b, sense in self.affines:
            val = 2 * np.real(np.vdot(a, x)) + b
            if sense == ">=":
                val = -val
            worst = max(worst, val / max(abs(b), 1.0))
        return float(worst)

    def solve(self, tol: float = DEFAULT_TOL) -> SolveOutcome:
        return solve_qcqp(self, tol)


def _qcqp_closed_form(problem: QcqpProblem) -> SolveOutcome | None:
    """Linear objective inside one centered PSD-diagonal ball has a direct solution."""
    if problem.p0 is not None and np.abs(problem.p0).max() > 0:
        return None
    if problem.affines or len(problem.quads) != 1:
        return None
    p, q, r = problem.quads[0]
    if p is None or np.abs(q).max() > 0 or r >= 0:
        return None
    diag = np.diagonal(p).real
    if np.abs(p - np.diag(diag)).max() > 1e-14 * max(diag.max(), 1e-300) or diag.min() <= 0:
        return None
    radius = -r
    direction = -problem.q0 / diag
    denom = 2 * np.real(np.vdot(problem.q0, direction))  # = -2 q0^H D^{-1} q0 <= 0
    if denom == 0.0:
        x = np.zeros(problem.dim, dtype=complex)
    else:
        norm2 = np.real(np.vdot(direction, diag * direction))
        x = direction * math.sqrt(radius / norm2)
    return SolveOutcome(status="optimal", variables=x, objective=problem.eval_objective(x),
                        max_violation=problem.max_violation(x), message="closed form")


def solve_qcqp(problem: QcqpProblem, tol: float = DEFAULT_TOL) -> SolveOutcome:
    direct = _qcqp_closed_form(problem)
    if direct is not None:
        return direct

    x = cp.Variable(problem.dim, complex=True)
    scale = max(np.abs(problem.q0).max(), 1e-300)
    if problem.p0 is not None:
        scale = max(scale, np.abs(problem.p0).max())
    expr = 2 * cp.real(cp.conj(problem.q0 / scale) @ x) + problem.r0 / scale
    if problem.p0 is not None and np.abs(problem.p0).max() > 0:
        expr = expr + cp.sum_squares(_psd_sqrt(problem.p0 / scale) @ x)

    cons = []
    for p, q, r in problem.quads:
        cscale = max(np.abs(p).max() if p is not None else 0.0,
                     np.abs(q).max(), abs(r), 1e-300)
        lhs = 2 * cp.real(cp.conj(q / cscale) @ x) + r / cscale
        if p is not None and np.abs(p).max() > 0:
            lhs = lhs + cp.sum_squares(_psd_sqrt(p / cscale) @ x)
        cons.append(lhs <= 0)
    for a, b, sense in problem.affines:
        cscale = max(np.abs(a).max(), abs(b), 1e-300)
        lhs = 2 * cp.real(cp.conj(a / cscale) @ x) + b / cscale
        cons.append(lhs <= 0 if sense == "<=" else lhs >= 0)

    prob = cp.Problem(cp.Minimize(expr), cons)
    raw = _solve_with_fallback(prob, tol)
    status = _STATUS_MAP.get(raw, "numerical-failure")
    if status != "optimal":
        return SolveOutcome(status=status, message=f"solver status {raw}")
    xv = np.asarray(x.value).reshape(problem.dim)
    return SolveOutcome(status="optimal", variables=xv, objective=problem.eval_objective(xv),
                        max_violation=problem.max_violation(xv), message=f"solver status {raw}")


def _psd_sqrt(p: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (p + p.conj().T))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


# ---------------------------------------------------------------------------
# Concave allocation programs
# ---------------------------------------------------------------------------

@dataclass
class LinearConstraint:
    coeffs: np.ndarray
    sense: str
    rhs: float


def solve_log_allocation(gains: np.ndarray, constraints: list[LinearConstraint],
                         tol: float = DEFAULT_TOL) -> SolveOutcome:
    """maximize sum_i log2(1 + gains_i x_i) over x >= 0 with affine constraints."""
    gains = np.asarray(gains, dtype=float)
    x = cp.Variable(gains.size, nonneg=True)
    objective = cp.sum(cp.log1p(cp.multiply(gains, x))) / LN2
    cons = []
    for c in constraints:
        coeffs = np.asarray(c.coeffs, dtype=float)
        scale = max(np.abs(coeffs).max(), abs(c.rhs), 1e-300)
        lhs = (coeffs / scale) @ x
        if c.sense == "<=":
            cons.append(lhs <= c.rhs / scale)
        elif c.sense == ">=":
            cons.append(lhs >= c.rhs / scale)
        else:
            raise ValueError(f"bad sense {c.sense!r}")
    prob = cp.Problem(cp.Maximize(objective), cons)
    raw = _solve_with_fallback(prob, tol)
    status = _STATUS_MAP.get(raw, "numerical-failure")
    if status != "optimal":
        return SolveOutcome(status=status, message=f"solver status {raw}")
    xv = np.clip(np.asarray(x.value).reshape(gains.size), 0.0, None)
    worst = 0.0
    for c in constraints:
        val = float(np.asarray(c.coeffs) @ xv)
        gap = val - c.rhs if c.sense == "<=" else c.rhs - val
        worst = max(worst, gap / max(abs(c.rhs), 1.0))
    obj = float(np.sum(np.log2(1 + gains * xv)))
    return SolveOutcome(status="optimal", variables=xv, objective=obj, max_violation=worst)


def solve_logdet_diag(mats: np.ndarray, lin_coeff: np.ndarray, lower: np.ndarray,
                      inv_coeffs: np.ndarray | None = None, inv_rhs: float | None = None,
                      tol: float = DEFAULT_TOL) -> SolveOutcome:
    """maximize sum_k log2 det(mats_k + diag(x)) - lin_coeff . x over x >= lower,
    optionally subject to sum_r inv_coeffs_r / x_r <= inv_rhs.

    The problem is concave over a convex set and has only a handful of
    variables, so the primary path is a trust-region solve on log-scaled
    variables (the bijection preserves local = global optimality); the cone
    solver is kept as a fallback.
    """
    mats = np.asarray(mats, dtype=complex)
    lower = np.asarray(lower, dtype=float)
    lin = np.asarray(lin_coeff, dtype=float)
    n = lower.size

    def true_objective(x):
        val = -float(lin @ x)
        for k in range(mats.shape[0]):
            val += np.linalg.slogdet(mats[k] + np.diag(x))[1] / LN2
        return val

    def pack(xv):
        worst = 0.0
        if inv_coeffs is not None:
            used = float(np.sum(np.asarray(inv_coeffs) / xv))
            worst = max(worst, (used - inv_rhs) / max(abs(inv_rhs), 1.0))
        return SolveOutcome(status="optimal", variables=xv, objective=true_objective(xv),
                            max_violation=worst, message="direct")

    direct = _logdet_diag_direct(mats, lin, lower, inv_coeffs, inv_rhs, true_objective)
    if direct is not None:
        return pack(direct)

    unit = max(lower.max(), np.abs(mats).max(), 1e-300)
    mats_s = mats / unit
    lin_s = lin * unit
    obj_scale = max(1.0, np.abs(lin_s).max())
    y = cp.Variable(n)
    objective = sum(cp.log_det(mats_s[k] + cp.diag(y)) for k in range(mats.shape[0])) / LN2
    objective = (objective - lin_s @ y) / obj_scale
    cons = [y >= lower / unit]
    if inv_coeffs is not None:
        coeffs = np.asarray(inv_coeffs, dtype=float) / unit
        cons.append(cp.sum(cp.multiply(coeffs, cp.inv_pos(y))) <= float(inv_rhs))
    prob = cp.Problem(cp.Maximize(objective), cons)
    raw = _solve_with_fallback(prob, tol)
    status = _STATUS_MAP.get(raw, "numerical-failure")
    if status != "optimal":
        return SolveOutcome(status=status, message=f"solver status {raw}")
    xv = np.maximum(np.asarray(y.value).reshape(n) * unit, lower)
    out = pack(xv)
    out.message = f"solver status {raw}"
    return out


def _logdet_diag_direct(mats, lin, lower, inv_coeffs, inv_rhs, true_objective):
    """Trust-region solve of the log-det allocation on log-scaled variables."""
    from scipy.optimize import Bounds, NonlinearConstraint, minimize

    n = lower.size
    big = 1e9 * max(lower.max(), 1.0)

    def neg_and_grad(u):
        x = np.exp(u)
        grad_x = -lin.astype(float).copy()
        val = -float(lin @ x)
        for k in range(mats.shape[0]):
            a = mats[k] + np.diag(x)
            sign, ld = np.linalg.slogdet(a)
            if sign.real <= 0:
                return 1e18, np.zeros(n)
            val += ld / LN2
            grad_x += np.diagonal(np.linalg.inv(a)).real / LN2
        return -val, -(grad_x * x)

    u_lo = np.log(np.maximum(lower, 1e-300))
    u_hi = np.full(n, np.log(big))
    start = np.maximum(lower * 2.0, 1e-300)
    constraints = []
    if inv_coeffs is not None:
        coeffs = np.asarray(inv_coeffs, dtype=float)
        if inv_rhs <= 0:
            return None
        start = np.maximum(start, 2.0 * n * coeffs / inv_rhs)
        constraints.append(NonlinearConstraint(
            lambda u: float(np.sum(coeffs * np.exp(-u))), -np.inf, float(inv_rhs),
            jac=lambda u: (-coeffs * np.exp(-u))[None, :]))
    try:
        res = minimize(neg_and_grad, np.log(start), jac=True, method="trust-constr",
                       bounds=Bounds(u_lo, u_hi), constraints=constraints,
                       options={"maxiter": 600, "gtol": 1e-12, "xtol": 1e-14})
    except Exception:
        return None
    if res.status not in (0, 1, 2) and not res.success:
        return None
    x = np.maximum(np.exp(res.x), lower)
    if inv_coeffs is not None and float(np.sum(inv_coeffs / x)) > inv_rhs * (1 + 1e-8):
        return None
    return x


# ---------------------------------------------------------------------------
# Inner-approximation driver
# ---------------------------------------------------------------------------

def ia_drive(build, x0: np.ndarray, tol: float, max_iter: int,
             objective=None, maximize: bool = False):
    """Iterate convex inner approximations built around the incumbent.

    build(x) must return a problem object with .solve(tol) whose primal
    solution is the next iterate; objective(x), when given, evaluates the true
    objective used for the relative-change stopping rule.  Returns the final
    iterate, the objective trace, and a status string ("converged",
    "max-iter", "subproblem-<status>").
    """
    x = np.asarray(x0)
    trace = []
    if objective is not None:
        trace.append(float(objective(x)))
    status = "max-iter"
    for _ in range(max_iter):
        sub = build(x)
        outcome = sub.solve(tol)
        if not outcome.ok:
            status = f"subproblem-{outcome.status}"
            break
        x_new = np.asarray(outcome.variables)
        f_new = float(objective(x_new)) if objective is not None else float(outcome.objective)
        x = x_new
        if trace:
            prev = trace[-1]
            change = (prev - f_new) if not maximize else (f_new - prev)
            trace.append(f_new)
            if abs(change) <= tol * max(abs(prev), 1e-12):
                status = "converged"
                break
        else:
            trace.append(f_new)
    return x, np.asarray(trace), status
