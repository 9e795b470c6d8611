"""
Convex Solver Kernel
Typed QCQP / SOCP / SDP containers solved through cvxpy, with independent KKT residuals.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import cvxpy as cp
import numpy as np
from scipy.optimize import nnls

from error_handler import SolverError

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200
PSD_TOL = 1e-9
ACTIVE_TOL = 1e-5
USABLE_PRIMAL_TOL = 1e-5


@dataclass
class SolveReport:
    """Solution, objective value, KKT residuals and termination status of one solve."""
    x: Optional[object]
    value: float
    status: str
    kkt_residuals: Dict[str, Optional[float]]
    solver: str = ""
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def max_residual(self) -> float:
        values = [v for v in self.kkt_residuals.values() if v is not None]
        return max(values) if values else 0.0

    @property
    def usable(self) -> bool:
        """A solution exists and is primal feasible to working accuracy."""
        primal = self.kkt_residuals.get("primal")
        return self.status != INFEASIBLE and primal is not None and primal <= USABLE_PRIMAL_TOL


# ---------------------------------------------------------------- real embedding

def complex_matrix_to_real(M: np.ndarray) -> np.ndarray:
    """[[Re M, -Im M], [Im M, Re M]]: maps [Re z; Im z] to [Re Mz; Im Mz]."""
    M = np.asarray(M, dtype=complex)
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


def hermitian_to_real(H: np.ndarray) -> np.ndarray:
    """Real symmetric form with z^H H z = x^T H_r x for x = [Re z; Im z]."""
    return complex_matrix_to_real(H)


def linear_to_real(c: np.ndarray) -> np.ndarray:
    """Vector with Re{c^H z} = v^T x for x = [Re z; Im z]."""
    c = np.asarray(c, dtype=complex)
    return np.concatenate([c.real, c.imag])


def real_to_complex(x: np.ndarray) -> np.ndarray:
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def complex_to_real(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.concatenate([z.real, z.imag])


def _check_psd(P: np.ndarray, name: str) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise SolverError(f"{name}: quadratic form must be square, got {P.shape}")
    P = (P + P.T) / 2
    if P.size and np.linalg.eigvalsh(P)[0] < -PSD_TOL * max(1.0, np.abs(P).max()):
        raise SolverError(f"{name}: quadratic form is not positive semidefinite")
    return P


def _scale(*arrays) -> float:
    scale = max((float(np.abs(a).max()) for a in arrays if a is not None and np.size(a)), default=0.0)
    return scale if scale > 0 else 1.0


# ---------------------------------------------------------------- problem types

@dataclass
class QuadraticConstraint:
    """x^T P x + q^T x + r <= 0 (P may be omitted for a linear constraint)."""
    q: np.ndarray
    r: float = 0.0
    P: Optional[np.ndarray] = None
    name: str = ""

    def evaluate(self, x: np.ndarray) -> float:
        value = float(self.q @ x + self.r)
        if self.P is not None:
            value += float(x @ self.P @ x)
        return value

    def gradient(self, x: np.ndarray) -> np.ndarray:
        grad = np.array(self.q, dtype=float)
        if self.P is not None:
            grad = grad + 2 * self.P @ x
        return grad

    def normalized(self) -> "QuadraticConstraint":
        s = _scale(self.P, self.q, self.r)
        return QuadraticConstraint(self.q / s, self.r / s, None if self.P is None else self.P / s, self.name)


@dataclass
class QcqpProblem:
    """
    minimize x^T P0 x + q0^T x + r0
    subject to quadratic constraints, A_eq x = b_eq and lb <= x <= ub.
    """
    P0: np.ndarray
    q0: np.ndarray
    r0: float = 0.0
    constraints: List[QuadraticConstraint] = field(default_factory=list)
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None

    def __post_init__(self):
        self.q0 = np.asarray(self.q0, dtype=float)
        n = self.q0.size
        self.P0 = _check_psd(self.P0, "objective")
        if self.P0.shape != (n, n):
            raise SolverError(f"objective Hessian {self.P0.shape} does not match {n} variables")
        for i, con in enumerate(self.constraints):
            con.q = np.asarray(con.q, dtype=float)
            if con.q.size != n:
                raise SolverError(f"constraint {con.name or i}: linear term has wrong size")
            if con.P is not None:
                con.P = _check_psd(con.P, f"constraint {con.name or i}")
                if con.P.shape != (n, n):
                    raise SolverError(f"constraint {con.name or i}: Hessian has wrong size")
        if (self.A_eq is None) != (self.b_eq is None):
            raise SolverError("equality constraints need both A_eq and b_eq")
        if self.A_eq is not None:
            self.A_eq = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
            self.b_eq = np.atleast_1d(np.asarray(self.b_eq, dtype=float))
        for bound in ("lb", "ub"):
            value = getattr(self, bound)
            if value is not None:
                setattr(self, bound, np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy())

    @property
    def n(self) -> int:
        return self.q0.size

    def objective(self, x: np.ndarray) -> float:
        return float(x @ self.P0 @ x + self.q0 @ x + self.r0)

    def dump(self, path) -> Path:
        """Write the problem data as labelled numpy.savetxt blocks."""
        path = Path(path)
        with open(path, "w") as f:
            np.savetxt(f, self.P0, header="P0")
            np.savetxt(f, self.q0[None, :], header="q0")
            np.savetxt(f, [self.r0], header="r0")
            for i, con in enumerate(self.constraints):
                label = con.name or f"c{i}"
                if con.P is not None:
                    np.savetxt(f, con.P, header=f"{label} P")
                np.savetxt(f, con.q[None, :], header=f"{label} q")
                np.savetxt(f, [con.r], header=f"{label} r")
            if self.A_eq is not None:
                np.savetxt(f, self.A_eq, header="A_eq")
                np.savetxt(f, self.b_eq[None, :], header="b_eq")
            for bound in ("lb", "ub"):
                if getattr(self, bound) is not None:
                    np.savetxt(f, getattr(self, bound)[None, :], header=bound)
        return path


@dataclass
class SecondOrderCone:
    """||A x + b|| <= c^T x + d."""
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float = 0.0
    name: str = ""

    def slack(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.A @ x + self.b) - (self.c @ x + self.d))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        residual = self.A @ x + self.b
        norm = np.linalg.norm(residual)
        if norm <= 1e-14:
            return -self.c
        return self.A.T @ residual / norm - self.c

    def normalized(self) -> "SecondOrderCone":
        s = _scale(self.A, self.b, self.c, self.d)
        return SecondOrderCone(self.A / s, self.b / s, self.c / s, self.d / s, self.name)


@dataclass
class SocpProblem:
    """minimize c^T x subject to second-order cones, A_eq x = b_eq and G x <= h."""
    c: np.ndarray
    cones: List[SecondOrderCone] = field(default_factory=list)
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        for i, cone in enumerate(self.cones):
            cone.A = np.atleast_2d(np.asarray(cone.A, dtype=float))
            cone.b = np.atleast_1d(np.asarray(cone.b, dtype=float))
            cone.c = np.asarray(cone.c, dtype=float)
            if cone.A.shape[1] != n or cone.c.size != n or cone.A.shape[0] != cone.b.size:
                raise SolverError(f"cone {cone.name or i}: inconsistent dimensions")
        if self.A_eq is not None:
            self.A_eq = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
            self.b_eq = np.atleast_1d(np.asarray(self.b_eq, dtype=float))
        if self.G is not None:
            self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
            self.h = np.atleast_1d(np.asarray(self.h, dtype=float))

    @property
    def n(self) -> int:
        return self.c.size

    def dump(self, path) -> Path:
        path = Path(path)
        with open(path, "w") as f:
            np.savetxt(f, self.c[None, :], header="c")
            for i, cone in enumerate(self.cones):
                label = cone.name or f"cone{i}"
                np.savetxt(f, cone.A, header=f"{label} A")
                np.savetxt(f, cone.b[None, :], header=f"{label} b")
                np.savetxt(f, cone.c[None, :], header=f"{label} c")
                np.savetxt(f, [cone.d], header=f"{label} d")
            if self.A_eq is not None:
                np.savetxt(f, self.A_eq, header="A_eq")
                np.savetxt(f, self.b_eq[None, :], header="b_eq")
            if self.G is not None:
                np.savetxt(f, self.G, header="G")
                np.savetxt(f, self.h[None, :], header="h")
        return path


@dataclass
class TraceConstraint:
    """sum_j Re tr(C_j X_j) (<=, >=, ==) rhs."""
    coefficients: Dict[int, np.ndarray]
    relation: str
    rhs: float
    name: str = ""


@dataclass
class PsdCombination:
    """sum_j w_j X_j - offset is positive semidefinite."""
    coefficients: Dict[int, float]
    offset: Optional[np.ndarray] = None


@dataclass
class SdpProblem:
    """Linear objective over Hermitian (or real symmetric) PSD blocks."""
    block_sizes: List[int]
    objective: Dict[int, np.ndarray]
    sense: str = "min"
    constraints: List[TraceConstraint] = field(default_factory=list)
    psd_combinations: List[PsdCombination] = field(default_factory=list)
    psd_blocks: Optional[List[bool]] = None
    hermitian: bool = True

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise SolverError(f"unknown objective sense '{self.sense}'")
        if self.psd_blocks is None:
            self.psd_blocks = [True] * len(self.block_sizes)

        def check(j: int, C: np.ndarray, label: str) -> np.ndarray:
            if j not in range(len(self.block_sizes)):
                raise SolverError(f"{label}: unknown block {j}")
            C = np.asarray(C, dtype=complex if self.hermitian else float)
            size = self.block_sizes[j]
            if C.shape != (size, size):
                raise SolverError(f"{label}: block {j} expects {size}x{size}, got {C.shape}")
            if np.abs(C - C.conj().T).max() > PSD_TOL * max(1.0, np.abs(C).max()):
                raise SolverError(f"{label}: coefficient matrix is not Hermitian")
            return (C + C.conj().T) / 2

        self.objective = {j: check(j, C, "objective") for j, C in self.objective.items()}
        for i, con in enumerate(self.constraints):
            if con.relation not in ("<=", ">=", "=="):
                raise SolverError(f"constraint {con.name or i}: unknown relation '{con.relation}'")
            con.coefficients = {j: check(j, C, f"constraint {con.name or i}") for j, C in con.coefficients.items()}
        for i, combo in enumerate(self.psd_combinations):
            sizes = {self.block_sizes[j] for j in combo.coefficients}
            if len(sizes) != 1:
                raise SolverError(f"PSD combination {i}: blocks of different sizes")
            if combo.offset is not None:
                combo.offset = check(next(iter(combo.coefficients)), combo.offset, f"PSD combination {i}")


# ---------------------------------------------------------------- backend

def _solver_attempts(tol: float, max_iter: int) -> List[Tuple[str, dict]]:
    inner_tol = min(1e-8, tol * 1e-2)
    attempts = []
    installed = cp.installed_solvers()
    if cp.CLARABEL in installed:
        attempts.append((cp.CLARABEL, {"max_iter": max_iter, "tol_gap_abs": inner_tol,
                                       "tol_gap_rel": inner_tol, "tol_feas": inner_tol}))
    if cp.SCS in installed:
        attempts.append((cp.SCS, {"max_iters": 50 * max_iter, "eps_abs": inner_tol, "eps_rel": inner_tol}))
    if not attempts:
        raise SolverError(f"no conic solver available (installed: {installed})")
    return attempts


def _run(problem: cp.Problem, tol: float, max_iter: int, label: str,
         warm_start: bool = False) -> Tuple[str, str, int]:
    """Solve with the first solver that terminates; returns (cvxpy status, solver, iterations)."""
    last_error: Optional[Exception] = None
    for solver, options in _solver_attempts(tol, max_iter):
        try:
            problem.solve(solver=solver, verbose=False, warm_start=warm_start, **options)
        except cp.error.SolverError as e:
            last_error = e
            logger.debug(f"{label}: {solver} failed ({e}), trying next solver")
            continue
        status = problem.status
        if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            raise SolverError(f"{label}: problem is unbounded")
        if status is None or (status not in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE)
                              and problem.variables()[0].value is None):
            last_error = SolverError(f"{solver} returned status {status} without a solution")
            continue
        iterations = getattr(problem.solver_stats, "num_iters", None) or 0
        return status, solver, int(iterations)
    raise SolverError(f"{label}: all solvers failed: {last_error}")


def _classify(status: str, residuals: Dict[str, Optional[float]], tol: float) -> str:
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return INFEASIBLE
    worst = max((v for v in residuals.values() if v is not None), default=0.0)
    if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) and worst <= tol:
        return OPTIMAL
    return MAX_ITER


def _kkt(grad_f: np.ndarray, f_value: float, ineq_values: Sequence[float],
         ineq_grads: Sequence[np.ndarray], A_eq: Optional[np.ndarray],
         eq_residual: Optional[np.ndarray]) -> Dict[str, float]:
    """
    KKT residuals of a smooth convex program at a candidate point.

    Multipliers of near-active inequalities are recovered by non-negative least
    squares on the stationarity condition, equality multipliers are free.
    """
    values = np.asarray(ineq_values, dtype=float)
    primal = max(0.0, float(values.max())) if values.size else 0.0
    if eq_residual is not None and eq_residual.size:
        primal = max(primal, float(np.abs(eq_residual).max()))

    active = [i for i, v in enumerate(values) if v >= -ACTIVE_TOL]
    columns = [ineq_grads[i] for i in active]
    if A_eq is not None and A_eq.size:
        columns += list(A_eq) + list(-A_eq)

    if columns:
        G = np.column_stack(columns)
        multipliers, residual = nnls(G, -grad_f, maxiter=50 * G.shape[1])
    else:
        multipliers, residual = np.zeros(0), float(np.linalg.norm(grad_f))
    dual = residual / max(1.0, float(np.linalg.norm(grad_f)))

    lam = multipliers[:len(active)] if len(active) else np.zeros(0)
    gap = float(np.max(lam * np.abs(values[active]))) if len(active) else 0.0
    gap /= max(1.0, abs(f_value))
    return {"primal": primal, "dual": float(dual), "gap": gap}


# ---------------------------------------------------------------- solvers

def solve_qcqp(p: QcqpProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
               x0: Optional[np.ndarray] = None) -> SolveReport:
    """
    Solve a convex QCQP.

    Args:
        p: Problem data (convexity is validated when the problem is built).
        tol: Relative KKT tolerance for the optimal status.
        max_iter: Interior-point iteration cap.
        x0: Optional initial point, loaded into the variable and solved with warm_start.

    Returns:
        SolveReport with x in the original variable space.
    """
    obj_scale = _scale(p.P0, p.q0)
    constraints = [con.normalized() for con in p.constraints]

    x = cp.Variable(p.n)
    if x0 is not None:
        x.value = np.asarray(x0, dtype=float)
    objective = p.q0 / obj_scale @ x
    if np.any(p.P0):
        objective = objective + cp.quad_form(x, cp.psd_wrap(p.P0 / obj_scale))

    cons = []
    for con in constraints:
        expr = con.q @ x + con.r
        if con.P is not None and np.any(con.P):
            expr = expr + cp.quad_form(x, cp.psd_wrap(con.P))
        cons.append(expr <= 0)
    eq_scale = None
    if p.A_eq is not None:
        eq_scale = np.maximum(np.abs(p.A_eq).max(axis=1), 1e-300)
        cons.append((p.A_eq / eq_scale[:, None]) @ x == p.b_eq / eq_scale)
    if p.lb is not None:
        cons.append(x >= p.lb)
    if p.ub is not None:
        cons.append(x <= p.ub)

    problem = cp.Problem(cp.Minimize(objective), cons)
    status, solver, iterations = _run(problem, tol, max_iter, "QCQP", warm_start=x0 is not None)
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return SolveReport(None, float("inf"), INFEASIBLE, {"primal": None, "dual": None, "gap": None},
                           solver, iterations)

    xv = np.asarray(x.value, dtype=float)
    ineq_values = [con.evaluate(xv) for con in constraints]
    ineq_grads = [con.gradient(xv) for con in constraints]
    eye = np.eye(p.n)
    for bound, sign in (("lb", -1.0), ("ub", 1.0)):
        limits = getattr(p, bound)
        if limits is None:
            continue
        for i in np.flatnonzero(np.isfinite(limits)):
            ineq_values.append(sign * (xv[i] - limits[i]))
            ineq_grads.append(sign * eye[i])

    A_eq = eq_residual = None
    if p.A_eq is not None:
        A_eq = p.A_eq / eq_scale[:, None]
        eq_residual = A_eq @ xv - p.b_eq / eq_scale

    grad_f = (2 * p.P0 @ xv + p.q0) / obj_scale
    residuals = _kkt(grad_f, p.objective(xv) / obj_scale, ineq_values, ineq_grads, A_eq, eq_residual)
    return SolveReport(xv, p.objective(xv), _classify(status, residuals, tol), residuals, solver, iterations)


def solve_socp(p: SocpProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SolveReport:
    """Solve min c^T x over second-order cones, linear equalities and inequalities."""
    obj_scale = _scale(p.c)
    cones = [cone.normalized() for cone in p.cones]

    x = cp.Variable(p.n)
    cons = [cp.SOC(cone.c @ x + cone.d, cone.A @ x + cone.b) for cone in cones]
    eq_scale = g_scale = None
    if p.A_eq is not None:
        eq_scale = np.maximum(np.abs(p.A_eq).max(axis=1), 1e-300)
        cons.append((p.A_eq / eq_scale[:, None]) @ x == p.b_eq / eq_scale)
    if p.G is not None:
        g_scale = np.maximum(np.abs(p.G).max(axis=1), 1e-300)
        cons.append((p.G / g_scale[:, None]) @ x <= p.h / g_scale)

    problem = cp.Problem(cp.Minimize((p.c / obj_scale) @ x), cons)
    status, solver, iterations = _run(problem, tol, max_iter, "SOCP")
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return SolveReport(None, float("inf"), INFEASIBLE, {"primal": None, "dual": None, "gap": None},
                           solver, iterations)

    xv = np.asarray(x.value, dtype=float)
    ineq_values = [cone.slack(xv) for cone in cones]
    ineq_grads = [cone.gradient(xv) for cone in cones]
    if p.G is not None:
        G = p.G / g_scale[:, None]
        ineq_values += list(G @ xv - p.h / g_scale)
        ineq_grads += list(G)
    A_eq = eq_residual = None
    if p.A_eq is not None:
        A_eq = p.A_eq / eq_scale[:, None]
        eq_residual = A_eq @ xv - p.b_eq / eq_scale

    value = float(p.c @ xv)
    residuals = _kkt(p.c / obj_scale, value / obj_scale, ineq_values, ineq_grads, A_eq, eq_residual)
    return SolveReport(xv, value, _classify(status, residuals, tol), residuals, solver, iterations)


def _dual_cone_residual(Z: Optional[np.ndarray]) -> Optional[float]:
    """Distance of a dual matrix from the PSD (or, by sign convention, NSD) cone."""
    if Z is None:
        return None
    Z = np.asarray(Z)
    Z = (Z + Z.conj().T) / 2
    eigvals = np.linalg.eigvalsh(Z)
    scale = max(1.0, float(np.abs(eigvals).max()))
    return min(max(0.0, -eigvals[0]), max(0.0, eigvals[-1])) / scale


def solve_sdp(p: SdpProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SolveReport:
    """
    Solve a linear SDP over PSD blocks.

    Returns:
        SolveReport whose x is the list of Hermitian block matrices.
    """
    obj_scale = _scale(*p.objective.values())
    kind = {"hermitian": True} if p.hermitian else {"symmetric": True}
    X = [cp.Variable((n, n), **kind) for n in p.block_sizes]

    def linear(coefficients: Dict[int, np.ndarray]):
        return sum(cp.real(cp.trace(C @ X[j])) for j, C in coefficients.items())

    objective = linear({j: C / obj_scale for j, C in p.objective.items()}) if p.objective else cp.Constant(0)
    objective = cp.Minimize(objective) if p.sense == "min" else cp.Maximize(objective)

    trace_cons, trace_scales = [], []
    for con in p.constraints:
        s = _scale(con.rhs, *con.coefficients.values())
        expr = linear({j: C / s for j, C in con.coefficients.items()})
        rhs = con.rhs / s
        trace_scales.append(s)
        trace_cons.append(expr <= rhs if con.relation == "<=" else expr >= rhs if con.relation == ">=" else expr == rhs)

    lmi_exprs, lmi_cons = [], []
    for j, flag in enumerate(p.psd_blocks):
        if flag:
            lmi_exprs.append(("block", j, None))
            lmi_cons.append(X[j] >> 0)
    for combo in p.psd_combinations:
        expr = sum(w * X[j] for j, w in combo.coefficients.items())
        if combo.offset is not None:
            expr = expr - combo.offset
        lmi_exprs.append(("combo", None, combo))
        lmi_cons.append(expr >> 0)

    problem = cp.Problem(objective, trace_cons + lmi_cons)
    status, solver, iterations = _run(problem, tol, max_iter, "SDP")
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return SolveReport(None, float("inf"), INFEASIBLE, {"primal": None, "dual": None, "gap": None},
                           solver, iterations)

    blocks = [(np.asarray(v.value) + np.asarray(v.value).conj().T) / 2 for v in X]
    value = float(sum(np.real(np.trace(C @ blocks[j])) for j, C in p.objective.items()))

    primal, dual, gap = 0.0, [], 0.0
    for con, scale, cvx_con in zip(p.constraints, trace_scales, trace_cons):
        lhs = sum(np.real(np.trace(C @ blocks[j])) for j, C in con.coefficients.items())
        slack = (lhs - con.rhs) / scale
        if con.relation == "==":
            violation = abs(slack)
        else:
            violation = max(0.0, slack if con.relation == "<=" else -slack)
        primal = max(primal, violation)
        if con.relation != "==" and cvx_con.dual_value is not None:
            gap = max(gap, abs(float(np.real(cvx_con.dual_value)) * slack))

    for (kind_name, j, combo), cvx_con in zip(lmi_exprs, lmi_cons):
        if kind_name == "block":
            S = blocks[j]
        else:
            S = sum(w * blocks[i] for i, w in combo.coefficients.items())
            if combo.offset is not None:
                S = S - combo.offset
        eigvals = np.linalg.eigvalsh((S + S.conj().T) / 2)
        primal = max(primal, max(0.0, -eigvals[0]) / max(1.0, float(np.abs(eigvals).max())))
        Z = cvx_con.dual_value
        residual = _dual_cone_residual(Z)
        if residual is not None:
            dual.append(residual)
            gap = max(gap, abs(np.real(np.trace(np.asarray(Z) @ S))) / max(1.0, abs(value / obj_scale)) / obj_scale)

    residuals = {"primal": primal, "dual": max(dual) if dual else None, "gap": gap}
    return SolveReport(blocks, value, _classify(status, residuals, tol), residuals, solver, iterations)


def solve_model(problem: cp.Problem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                label: str = "model") -> SolveReport:
    """
    Solve a problem assembled directly from cvxpy expressions.

    The caller reads its variables; the report carries primal violation and
    complementary slackness of the inequality constraints.
    """
    status, solver, iterations = _run(problem, tol, max_iter, label)
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return SolveReport(None, float("inf"), INFEASIBLE, {"primal": None, "dual": None, "gap": None},
                           solver, iterations)

    primal, gap = 0.0, 0.0
    for con in problem.constraints:
        violation = con.violation()
        if violation is not None:
            primal = max(primal, float(np.max(np.atleast_1d(violation))))
        if isinstance(con, cp.constraints.Inequality) and con.dual_value is not None:
            products = np.abs(np.atleast_1d(con.dual_value) * np.atleast_1d(con.expr.value))
            gap = max(gap, float(products.max()))
    value = float(problem.value)
    residuals = {"primal": primal, "dual": None, "gap": gap / max(1.0, abs(value))}
    return SolveReport(None, value, _classify(status, residuals, tol), residuals, solver, iterations)
