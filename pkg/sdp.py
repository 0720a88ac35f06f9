"""
半定规划层：通用标准形、采样开销 SDP 对、近似可恢复性 SDP 对、可加性检查

所有问题都以原问题和对偶问题两次独立求解，报告对偶间隙。
复厄米块在进入求解器前实化为 [[Re H, −Im H], [Im H, Re H]]。
"""
import math
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence

import cvxpy as cp
import numpy as np
from scipy import sparse

import numerics as nx
from exceptions import (
    BudgetExceededError, DimensionError, InvalidParameterError, NotRecoverableError, SolverError,
)
from logger_manager import get_logger, log_execution_time
from markov import VqmcVerdict, is_vqmc
from recovery import LinearMap, apply_map, choi_action_operator
from states import TripartiteState

logger = get_logger('sdp')

OPTIMAL, INFEASIBLE, UNBOUNDED, MAX_ITER = "optimal", "infeasible", "unbounded", "max_iter"

_CVX_STATUS = {
    cp.OPTIMAL: OPTIMAL,
    cp.INFEASIBLE: INFEASIBLE,
    cp.UNBOUNDED: UNBOUNDED,
    cp.USER_LIMIT: MAX_ITER,
    cp.SOLVER_ERROR: MAX_ITER,
}

# 非精确状态只在没有其他求解器可换时才被接受，最终由证书检查裁定
_INACCURATE_STATUS = {
    cp.OPTIMAL_INACCURATE: OPTIMAL,
    cp.INFEASIBLE_INACCURATE: INFEASIBLE,
    cp.UNBOUNDED_INACCURATE: UNBOUNDED,
}


@dataclass
class SdpOptions:
    solver: str = "CLARABEL"
    fallback_solver: Optional[str] = "SCS"
    gap_tol: float = 1e-7
    feas_tol: float = 1e-7
    solver_tol: float = 1e-9
    max_iter: int = 50000
    divergence: float = 1e6
    max_joint_dim: int = 64
    verbose: bool = False
    rank_tol: float = nx.RANK_TOL
    precheck: bool = True

    @classmethod
    def from_config(cls, config_manager) -> "SdpOptions":
        get = config_manager.get
        return cls(
            solver=str(get('sdp.solver', cls.solver)).upper(),
            fallback_solver=get('sdp.fallback_solver', cls.fallback_solver),
            gap_tol=float(get('sdp.gap_tol', cls.gap_tol)),
            feas_tol=float(get('sdp.feas_tol', cls.feas_tol)),
            solver_tol=float(get('sdp.solver_tol', cls.solver_tol)),
            max_iter=int(get('sdp.max_iter', cls.max_iter)),
            divergence=float(get('sdp.divergence', cls.divergence)),
            max_joint_dim=int(get('sdp.max_joint_dim', cls.max_joint_dim)),
            verbose=bool(get('sdp.verbose', cls.verbose)),
            rank_tol=float(get('numerics.rank_tol', nx.RANK_TOL)),
        )

    def solver_kwargs(self, solver: str) -> dict:
        if solver == "CLARABEL":
            return {"tol_gap_abs": self.solver_tol, "tol_gap_rel": self.solver_tol,
                    "tol_feas": self.solver_tol, "max_iter": self.max_iter}
        if solver == "SCS":
            return {"eps_abs": self.solver_tol, "eps_rel": self.solver_tol,
                    "max_iters": self.max_iter}
        return {}


@dataclass
class SdpSolution:
    status: str
    primal_value: float
    dual_value: float
    gap: float
    rel_gap: float
    iterations: Dict[str, int]
    residuals: Dict[str, float]
    blocks: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    dual_blocks: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    solver: str = ""
    certified: bool = False

    def to_dict(self, include_blocks: bool = False) -> dict:
        data = {
            "status": self.status,
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "gap": self.gap,
            "rel_gap": self.rel_gap,
            "iterations": self.iterations,
            "residuals": self.residuals,
            "solver": self.solver,
            "certified": self.certified,
        }
        if include_blocks:
            data["blocks"] = {k: _matrix_json(v) for k, v in self.blocks.items()}
            data["dual_blocks"] = {k: _matrix_json(v) for k, v in self.dual_blocks.items()}
        return data


def _matrix_json(M) -> dict:
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    return {"re": M.real.tolist(), "im": M.imag.tolist()}


# ---------------------------------------------------------------------------
# 实化与通用标准形
# ---------------------------------------------------------------------------

def realify(H) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


def unrealify(Y) -> np.ndarray:
    """两个实化副本取平均后折回复矩阵"""
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0] // 2
    real = (Y[:n, :n] + Y[n:, n:]) / 2
    imag = (Y[n:, :n] - Y[:n, n:]) / 2
    return real + 1j * imag


@dataclass
class BlockSpec:
    name: str
    dim: int
    cone: str = "psd"
    complex: bool = True

    def __post_init__(self):
        if self.cone not in ("psd", "free"):
            raise InvalidParameterError(f"未知的锥类型: {self.cone}", parameter="cone")


@dataclass
class LinearConstraint:
    """Σ_k Re⟨A_k, X_k⟩ = rhs"""
    coeffs: Dict[str, np.ndarray]
    rhs: float


@dataclass
class SdpProblem:
    """
    min Σ_k Re⟨C_k, X_k⟩  s.t.  Σ_k Re⟨A_ik, X_k⟩ = b_i，X_k 厄米，psd 块 X_k ⪰ 0

    对偶: max b·y  s.t.  C_k − Σ_i y_i A_ik ⪰ 0（psd 块）或 = 0（free 块）
    """
    blocks: List[BlockSpec]
    objective: Dict[str, np.ndarray]
    constraints: List[LinearConstraint]
    name: str = "sdp"

    def __post_init__(self):
        names = {b.name: b for b in self.blocks}
        for coeffs in [self.objective] + [c.coeffs for c in self.constraints]:
            for key, matrix in coeffs.items():
                if key not in names:
                    raise DimensionError(f"系数引用了不存在的变量块: {key}")
                if np.shape(matrix) != (names[key].dim, names[key].dim):
                    raise DimensionError(f"块 {key} 的系数形状不符",
                                         expected=(names[key].dim,) * 2, actual=np.shape(matrix))

    def _real_coeff(self, block: BlockSpec, matrix) -> np.ndarray:
        # ⟨realify(A), realify(X)⟩ = 2 Re⟨A, X⟩
        H = nx.hermitian_part(np.asarray(matrix, dtype=complex))
        return realify(H) / 2 if block.complex else H.real

    def to_pair(self) -> "CvxPair":
        primal_vars, dual_vars = {}, {}
        primal_cons, dual_cons = [], []
        for block in self.blocks:
            size = 2 * block.dim if block.complex else block.dim
            var = cp.Variable((size, size), symmetric=True, name=block.name)
            primal_vars[block.name] = var
            if block.cone == "psd":
                primal_cons.append(var >> 0)

        objective = 0
        for key, matrix in self.objective.items():
            block = self._block(key)
            objective = objective + cp.sum(cp.multiply(self._real_coeff(block, matrix), primal_vars[key]))
        for constraint in self.constraints:
            lhs = 0
            for key, matrix in constraint.coeffs.items():
                lhs = lhs + cp.sum(cp.multiply(self._real_coeff(self._block(key), matrix),
                                               primal_vars[key]))
            primal_cons.append(lhs == constraint.rhs)

        y = cp.Variable(len(self.constraints), name="y") if self.constraints else None
        for block in self.blocks:
            size = 2 * block.dim if block.complex else block.dim
            slack = self._real_coeff(block, self.objective[block.name]) \
                if block.name in self.objective else np.zeros((size, size))
            for i, constraint in enumerate(self.constraints):
                if block.name in constraint.coeffs:
                    slack = slack - y[i] * self._real_coeff(block, constraint.coeffs[block.name])
            if isinstance(slack, np.ndarray):
                ok = block.cone == "free" and not np.any(slack)
                ok = ok or (block.cone == "psd" and np.linalg.eigvalsh(slack)[0] >= 0)
                if not ok:
                    # 常数松弛不满足锥约束，对偶不可行
                    dual_cons.append(cp.Constant(0) >= 1)
                continue
            if block.cone == "psd":
                dual_cons.append(slack >> 0)
            else:
                dual_cons.extend(hermitian_equality(slack, 0))
            dual_vars[block.name] = slack

        rhs = np.array([c.rhs for c in self.constraints], dtype=float)
        dual_objective = rhs @ y if y is not None else cp.Constant(0)
        if y is not None:
            dual_vars["y"] = y
        return CvxPair(
            primal=cp.Problem(cp.Minimize(objective), primal_cons),
            dual=cp.Problem(cp.Maximize(dual_objective), dual_cons),
            primal_vars=primal_vars,
            dual_vars=dual_vars,
            name=self.name,
            unfold={b.name: b.complex for b in self.blocks},
        )

    def _block(self, name: str) -> BlockSpec:
        return next(b for b in self.blocks if b.name == name)


@dataclass
class CvxPair:
    """原问题与对偶问题（cvxpy 表示）"""
    primal: cp.Problem
    dual: cp.Problem
    primal_vars: Dict[str, object]
    dual_vars: Dict[str, object]
    name: str = "sdp"
    unfold: Dict[str, bool] = field(default_factory=dict)


def _solver_chain(options: SdpOptions) -> List[str]:
    solvers = [options.solver]
    if options.fallback_solver and options.fallback_solver.upper() != options.solver:
        solvers.append(options.fallback_solver.upper())
    return solvers


def _attempt(problem: cp.Problem, solver: str, options: SdpOptions) -> int:
    problem.solve(solver=solver, verbose=options.verbose, **options.solver_kwargs(solver))
    stats = problem.solver_stats
    return int(stats.num_iters) if stats is not None and stats.num_iters is not None else -1


def _run(problem: cp.Problem, options: SdpOptions) -> tuple:
    """
    求解单个问题

    主求解器抛错、返回 solver_error 或非精确状态时换用备用求解器；
    所有求解器都只给出非精确解时，重新取回第一个非精确解交给证书检查
    """
    solvers = _solver_chain(options)
    last_error, inexact = None, None
    for index, solver in enumerate(solvers):
        is_last = index == len(solvers) - 1
        try:
            iterations = _attempt(problem, solver, options)
        except cp.error.SolverError as e:
            last_error = e
            logger.warning(f"求解器 {solver} 失败: {e}")
            continue
        if problem.status in (cp.SOLVER_ERROR, cp.USER_LIMIT) and (not is_last or inexact is not None):
            logger.warning(f"求解器 {solver} 返回 {problem.status}")
            continue
        if problem.status in _INACCURATE_STATUS:
            logger.warning(f"求解器 {solver} 返回非精确状态 {problem.status}")
            if inexact is None:
                inexact = solver
            if not is_last:
                continue
            if inexact == solver:
                return _INACCURATE_STATUS[problem.status], iterations, solver
            break
        return _CVX_STATUS.get(problem.status, MAX_ITER), iterations, solver

    if inexact is not None:
        try:
            iterations = _attempt(problem, inexact, options)
        except cp.error.SolverError as e:
            raise SolverError(f"重新求解失败: {e}", status=MAX_ITER)
        status = _INACCURATE_STATUS.get(problem.status, _CVX_STATUS.get(problem.status, MAX_ITER))
        return status, iterations, inexact
    raise SolverError(f"所有求解器均失败: {last_error}", status=MAX_ITER)


def _violation(constraints) -> float:
    worst = 0.0
    for constraint in constraints:
        try:
            value = constraint.violation()
        except (ValueError, TypeError):
            return math.inf
        if value is None:
            return math.inf
        worst = max(worst, float(np.max(np.atleast_1d(value))))
    return worst


def _value(expr):
    value = getattr(expr, "value", None)
    return None if value is None else np.asarray(value)


def solve(problem, options: Optional[SdpOptions] = None) -> SdpSolution:
    """
    分别求解原问题与对偶问题

    状态：optimal（间隙与残差均在容差内）、infeasible、unbounded、max_iter
    """
    options = options or SdpOptions()
    pair = problem.to_pair() if isinstance(problem, SdpProblem) else problem

    p_status, p_iter, solver = _run(pair.primal, options)
    d_status, d_iter, _ = _run(pair.dual, options)

    primal_value = float(pair.primal.value) if p_status == OPTIMAL else math.nan
    dual_value = float(pair.dual.value) if d_status == OPTIMAL else math.nan

    if p_status == INFEASIBLE or d_status == UNBOUNDED:
        status = INFEASIBLE
    elif p_status == UNBOUNDED or d_status == INFEASIBLE:
        status = UNBOUNDED
    elif p_status == OPTIMAL and d_status == OPTIMAL:
        status = OPTIMAL
    else:
        status = MAX_ITER
    if status == OPTIMAL and max(abs(primal_value), abs(dual_value)) > options.divergence:
        logger.info(f"[{pair.name}] 目标值 {primal_value:.3e} 超过发散阈值 {options.divergence:g}，判为不可行")
        status = INFEASIBLE

    gap = abs(primal_value - dual_value) if status == OPTIMAL else math.inf
    rel_gap = gap / max(1.0, abs(primal_value), abs(dual_value)) if status == OPTIMAL else math.inf
    residuals = {
        "primal": _violation(pair.primal.constraints) if p_status == OPTIMAL else math.inf,
        "dual": _violation(pair.dual.constraints) if d_status == OPTIMAL else math.inf,
    }

    blocks, dual_blocks = {}, {}
    if p_status in (OPTIMAL, MAX_ITER):
        for name, var in pair.primal_vars.items():
            value = _value(var)
            if value is not None:
                blocks[name] = unrealify(value) if pair.unfold.get(name) else value
    if d_status in (OPTIMAL, MAX_ITER):
        for name, expr in pair.dual_vars.items():
            value = _value(expr)
            if value is not None:
                dual_blocks[name] = unrealify(value) if pair.unfold.get(name) else value

    certified = (status == OPTIMAL and rel_gap <= options.gap_tol
                 and max(residuals.values()) <= options.feas_tol)
    if status == OPTIMAL and not certified:
        logger.warning(f"[{pair.name}] 未通过证书检查: rel_gap={rel_gap:.2e} residuals={residuals}")
        status = MAX_ITER

    solution = SdpSolution(
        status=status, primal_value=primal_value, dual_value=dual_value, gap=gap, rel_gap=rel_gap,
        iterations={"primal": p_iter, "dual": d_iter}, residuals=residuals,
        blocks=blocks, dual_blocks=dual_blocks, solver=solver, certified=certified,
    )
    logger.debug(f"[{pair.name}] {solution.status} primal={primal_value} dual={dual_value} gap={gap:.2e}")
    return solution


# ---------------------------------------------------------------------------
# cvxpy 表达式工具
# ---------------------------------------------------------------------------

def _uncertified_details(solution: SdpSolution) -> dict:
    return {
        "primal_value": solution.primal_value,
        "dual_value": solution.dual_value,
        "rel_gap": solution.rel_gap,
        "residuals": solution.residuals,
        "solver": solution.solver,
    }


def _vec(expr):
    return cp.vec(expr, order="F")


def _unvec(expr, n: int):
    return cp.reshape(expr, (n, n), order="F")


def _herm(expr):
    return (expr + expr.H) / 2


def hermitian_equality(lhs, rhs) -> list:
    """
    厄米矩阵等式 lhs = rhs，只约束对角实部与严格上三角

    两边都必须是厄米的；实化后的约束行数为 n²，没有重复行或恒为零的行
    """
    diff = lhs - rhs
    if not isinstance(diff, cp.Expression):
        diff = cp.Constant(diff)
    constraints = [cp.real(cp.diag(diff)) == 0]
    if diff.shape[0] > 1:
        upper = cp.upper_tri(diff)
        constraints.append(cp.real(upper) == 0)
        if diff.is_complex():
            constraints.append(cp.imag(upper) == 0)
    return constraints


def _sparse_apply(op: sparse.spmatrix, v):
    """复稀疏矩阵作用在 cvxpy 向量上"""
    real = sparse.csr_matrix(op.real)
    imag = sparse.csr_matrix(op.imag)
    imag.eliminate_zeros()
    out = cp.Constant(real) @ v
    if imag.nnz:
        out = out + 1j * (cp.Constant(imag) @ v)
    return out


def kron_identity_operator(d: int, n: int) -> sparse.csr_matrix:
    """vec(M ⊗ I_n) = L vec(M)"""
    N = d * n
    i, j, a = np.meshgrid(np.arange(d), np.arange(d), np.arange(n), indexing='ij')
    rows = ((i * n + a) + (j * n + a) * N).reshape(-1)
    cols = (i + j * d).reshape(-1)
    return sparse.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(N * N, d * d)).tocsr()


@dataclass
class RecoveryOperators:
    """恢复约束 J ↦ (id_A ⊗ R_J)(ρ_AB) 及其伴随"""
    forward: sparse.csr_matrix
    adjoint: sparse.csr_matrix
    kron_B: sparse.csr_matrix
    d_A: int
    d_B: int
    d_out: int

    @classmethod
    def for_state(cls, state: TripartiteState) -> "RecoveryOperators":
        d_A, d_B, d_C = state.dim_list
        forward = choi_action_operator(state.rho_AB, d_A, d_B, d_B * d_C)
        return cls(forward, forward.conj().T.tocsr(), kron_identity_operator(d_B, d_B * d_C),
                   d_A, d_B, d_B * d_C)

    @property
    def dim_abc(self) -> int:
        return self.d_A * self.d_out

    @property
    def dim_choi(self) -> int:
        return self.d_B * self.d_out

    def apply(self, J):
        return _unvec(_sparse_apply(self.forward, _vec(J)), self.dim_abc)

    def apply_adjoint(self, K):
        return _unvec(_sparse_apply(self.adjoint, _vec(K)), self.dim_choi)

    def kron_identity(self, M):
        return _unvec(cp.Constant(self.kron_B) @ _vec(M), self.dim_choi)

    def marginal(self, J):
        return cp.partial_trace(J, dims=[self.d_B, self.d_out], axis=1)


# ---------------------------------------------------------------------------
# 采样开销
# ---------------------------------------------------------------------------

@dataclass
class DualCertificate:
    K: np.ndarray
    M: np.ndarray
    N: np.ndarray


@dataclass
class OverheadResult:
    gamma: float
    nu: float
    c1: float
    c2: float
    J1: np.ndarray = field(repr=False)
    J2: np.ndarray = field(repr=False)
    dual_certificate: Optional[DualCertificate] = field(default=None, repr=False)
    gap: float = math.inf
    rel_gap: float = math.inf
    status: str = OPTIMAL
    primal_value: float = math.nan
    dual_value: float = math.nan
    recovery_residual: float = math.nan
    verdict: Optional[VqmcVerdict] = None
    dims: Sequence[int] = ()

    @property
    def d_B(self) -> int:
        return self.dims[1]

    @property
    def d_out(self) -> int:
        return self.dims[1] * self.dims[2]

    def recovery_map(self) -> LinearMap:
        return LinearMap.from_choi(self.J1 - self.J2, self.d_B, self.d_out, label="qpd")

    def to_dict(self, include_matrices: bool = False) -> dict:
        data = {
            "gamma": self.gamma, "nu": self.nu, "c1": self.c1, "c2": self.c2,
            "gap": self.gap, "rel_gap": self.rel_gap, "status": self.status,
            "primal_value": self.primal_value, "dual_value": self.dual_value,
            "recovery_residual": self.recovery_residual, "dims": list(self.dims),
            "verdict": self.verdict.to_dict() if self.verdict else None,
        }
        if include_matrices:
            data["J1"] = _matrix_json(self.J1)
            data["J2"] = _matrix_json(self.J2)
            if self.dual_certificate is not None:
                data["dual_certificate"] = {k: _matrix_json(v)
                                            for k, v in asdict(self.dual_certificate).items()}
        return data


def overhead_problem(state: TripartiteState, ops: Optional[RecoveryOperators] = None) -> CvxPair:
    """
    原问题: min c1 + c2
            J1, J2 ⪰ 0, tr_{B'C} J_i = c_i I_B, (id_A ⊗ R_{J1−J2})(ρ_AB) = ρ_ABC
    对偶:   max Re tr(K ρ)
            tr M ≤ 1, tr N ≤ 1, M ⊗ I − T†(K) ⪰ 0, N ⊗ I + T†(K) ⪰ 0
    """
    ops = ops or RecoveryOperators.for_state(state)
    n = ops.dim_choi
    J1 = cp.Variable((n, n), hermitian=True, name="J1")
    J2 = cp.Variable((n, n), hermitian=True, name="J2")
    c1, c2 = cp.Variable(name="c1"), cp.Variable(name="c2")
    eye_B = np.eye(ops.d_B)
    primal = cp.Problem(cp.Minimize(c1 + c2), [
        J1 >> 0,
        J2 >> 0,
        *hermitian_equality(ops.marginal(J1), c1 * eye_B),
        *hermitian_equality(ops.marginal(J2), c2 * eye_B),
        *hermitian_equality(ops.apply(J1 - J2), state.rho),
    ])

    K = cp.Variable((ops.dim_abc, ops.dim_abc), hermitian=True, name="K")
    M = cp.Variable((ops.d_B, ops.d_B), hermitian=True, name="M")
    N = cp.Variable((ops.d_B, ops.d_B), hermitian=True, name="N")
    adj = ops.apply_adjoint(K)
    dual = cp.Problem(cp.Maximize(cp.real(cp.trace(K @ state.rho))), [
        cp.real(cp.trace(M)) <= 1,
        cp.real(cp.trace(N)) <= 1,
        _herm(ops.kron_identity(M) - adj) >> 0,
        _herm(ops.kron_identity(N) + adj) >> 0,
    ])
    return CvxPair(primal, dual, {"J1": J1, "J2": J2, "c1": c1, "c2": c2},
                   {"K": K, "M": M, "N": N}, name=f"overhead[{state.label}]")


@log_execution_time("sampling_overhead")
def sampling_overhead(state: TripartiteState, options: Optional[SdpOptions] = None) -> OverheadResult:
    """
    最优采样开销 γ = c1 + c2，ν = log₂ γ

    不可行时抛出 NotRecoverableError，并附带秩判定结果做交叉检查
    """
    options = options or SdpOptions()
    verdict = is_vqmc(state, options.rank_tol)
    if not verdict.is_vqmc and options.precheck:
        raise NotRecoverableError(
            f"态 {state.label or ''} 不是 VQMC (not a VQMC)，采样开销 SDP 不可行",
            verdict=verdict, solver_status="skipped")

    solution = solve(overhead_problem(state), options)
    if solution.status in (INFEASIBLE, UNBOUNDED):
        if verdict.is_vqmc:
            logger.warning(f"求解器判定不可行，但秩判定认为是 VQMC (gap={verdict.singular_gap:.2e})")
        raise NotRecoverableError(
            f"采样开销 SDP 不可行 (not a VQMC)，秩判定 is_vqmc={verdict.is_vqmc}",
            verdict=verdict, solver_status=solution.status)
    if solution.status != OPTIMAL:
        raise SolverError(
            f"采样开销 SDP 未通过证书检查: rel_gap={solution.rel_gap:.2e}",
            status=solution.status, details=_uncertified_details(solution))
    if "J1" not in solution.blocks or "J2" not in solution.blocks:
        raise SolverError(f"求解器未返回可用解: {solution.status}", status=solution.status)
    if not verdict.is_vqmc:
        logger.warning("秩判定认为不是 VQMC，但求解器给出了有限解")

    d_B = state.dims.d_B
    J1, J2 = solution.blocks["J1"], solution.blocks["J2"]
    c1 = float(np.trace(J1).real) / d_B
    c2 = float(np.trace(J2).real) / d_B
    gamma = c1 + c2
    if gamma < 1 - options.feas_tol:
        raise SolverError(f"采样开销 γ={gamma:.9g} 低于 1，解不可信", status=MAX_ITER,
                          details={**_uncertified_details(solution), "gamma": gamma})
    linear_map = LinearMap.from_choi(J1 - J2, d_B, d_B * state.dims.d_C)
    residual = nx.trace_norm(apply_map(linear_map, state.rho_AB) - state.rho)

    certificate = None
    if {"K", "M", "N"} <= set(solution.dual_blocks):
        certificate = DualCertificate(*(solution.dual_blocks[k] for k in ("K", "M", "N")))

    result = OverheadResult(
        gamma=gamma, nu=math.log2(gamma) if gamma > 0 else -math.inf, c1=c1, c2=c2, J1=J1, J2=J2,
        dual_certificate=certificate, gap=solution.gap, rel_gap=solution.rel_gap,
        status=solution.status, primal_value=solution.primal_value, dual_value=solution.dual_value,
        recovery_residual=residual, verdict=verdict, dims=state.dim_list,
    )
    logger.info(f"采样开销 [{state.label}]: γ={gamma:.9g} ν={result.nu:.6g} gap={solution.gap:.2e}")
    return result


# ---------------------------------------------------------------------------
# 近似可恢复性
# ---------------------------------------------------------------------------

HPTP, CPTP = "hptp", "cptp"


@dataclass
class ApproxResult:
    mode: str
    sdp_value: float
    eps_report: float
    J: Optional[LinearMap] = field(default=None, repr=False)
    P: Optional[np.ndarray] = field(default=None, repr=False)
    R: Optional[np.ndarray] = field(default=None, repr=False)
    dual_value: float = math.nan
    gap: float = math.inf
    rel_gap: float = math.inf
    status: str = OPTIMAL

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "sdp_value": self.sdp_value, "eps_report": self.eps_report,
            "dual_value": self.dual_value, "gap": self.gap, "rel_gap": self.rel_gap,
            "status": self.status,
        }


def approx_problem(state: TripartiteState, mode: str = HPTP,
                   ops: Optional[RecoveryOperators] = None) -> CvxPair:
    """
    原问题: min tr S   s.t. S ⪰ 0, S ⪰ ρ − (id_A ⊗ R_J)(ρ_AB), tr_{B'C} J = I_B（CPTP 另加 J ⪰ 0）
    对偶:   max Re tr P + Re tr(R ρ)   s.t. 0 ⪯ R ⪯ I,
            P ⊗ I + T†(R) = 0（HPTP）或 ⪯ 0（CPTP）
    """
    mode = mode.lower()
    if mode not in (HPTP, CPTP):
        raise InvalidParameterError(f"未知的模式: {mode}", parameter="mode")
    ops = ops or RecoveryOperators.for_state(state)
    D, n = ops.dim_abc, ops.dim_choi

    S = cp.Variable((D, D), hermitian=True, name="S")
    J = cp.Variable((n, n), hermitian=True, name="J")
    constraints = [
        S >> 0,
        _herm(S - state.rho + ops.apply(J)) >> 0,
        *hermitian_equality(ops.marginal(J), np.eye(ops.d_B)),
    ]
    if mode == CPTP:
        constraints.append(J >> 0)
    primal = cp.Problem(cp.Minimize(cp.real(cp.trace(S))), constraints)

    P = cp.Variable((ops.d_B, ops.d_B), hermitian=True, name="P")
    R = cp.Variable((D, D), hermitian=True, name="R")
    stationarity = ops.kron_identity(P) + ops.apply_adjoint(R)
    dual_constraints = [R >> 0, np.eye(D) - R >> 0]
    if mode == HPTP:
        dual_constraints.extend(hermitian_equality(stationarity, 0))
    else:
        dual_constraints.append(_herm(-stationarity) >> 0)
    dual = cp.Problem(cp.Maximize(cp.real(cp.trace(P)) + cp.real(cp.trace(R @ state.rho))),
                      dual_constraints)
    return CvxPair(primal, dual, {"S": S, "J": J}, {"P": P, "R": R},
                   name=f"approx_{mode}[{state.label}]")


@log_execution_time("approx_recoverability")
def approx_recoverability(state: TripartiteState, mode: str = HPTP,
                          options: Optional[SdpOptions] = None) -> ApproxResult:
    """
    sdp_value = 最优 tr S；J 保迹时偏差无迹，迹范数 eps_report = 2·sdp_value
    """
    options = options or SdpOptions()
    mode = mode.lower()
    solution = solve(approx_problem(state, mode), options)
    if solution.status in (INFEASIBLE, UNBOUNDED):
        raise SolverError(f"近似可恢复性 SDP 返回 {solution.status}", status=solution.status)
    if solution.status != OPTIMAL:
        raise SolverError(
            f"近似可恢复性 SDP 未通过证书检查: rel_gap={solution.rel_gap:.2e}",
            status=solution.status, details=_uncertified_details(solution))
    if "J" not in solution.blocks:
        raise SolverError("近似可恢复性 SDP 未返回可用解", status=solution.status)

    d_B = state.dims.d_B
    J = LinearMap.from_choi(solution.blocks["J"], d_B, d_B * state.dims.d_C,
                            label=f"approx_{mode}").with_flags(tp_tol=options.feas_tol * 10)
    value = max(solution.primal_value, 0.0) if not math.isnan(solution.primal_value) else math.nan
    result = ApproxResult(
        mode=mode, sdp_value=value, eps_report=2 * value, J=J,
        P=solution.dual_blocks.get("P"), R=solution.dual_blocks.get("R"),
        dual_value=solution.dual_value, gap=solution.gap, rel_gap=solution.rel_gap,
        status=solution.status,
    )
    logger.info(f"近似可恢复性 [{state.label}] {mode}: tr S={value:.9g} ε={2 * value:.9g}")
    return result


# ---------------------------------------------------------------------------
# 张量积与可加性
# ---------------------------------------------------------------------------

JOINT_ORDER = [0, 3, 1, 4, 2, 5]


def tensor_states(state1: TripartiteState, state2: TripartiteState) -> TripartiteState:
    """ρ ⊗ σ，子系统合并为 A=A1A2, B=B1B2, C=C1C2"""
    dims = state1.dim_list + state2.dim_list
    rho = nx.permute_systems(np.kron(state1.rho, state2.rho), dims, JOINT_ORDER)
    joint = TripartiteState(rho, [dims[0] * dims[3], dims[1] * dims[4], dims[2] * dims[5]],
                            label=f"({state1.label})⊗({state2.label})")
    return joint.validate()


def tensor_choi(J: np.ndarray, J_hat: np.ndarray, dims1: Sequence[int], dims2: Sequence[int]) -> np.ndarray:
    """两个 B→BC 映射的 Choi 矩阵张量积，重排为 (B1B2) ⊗ (B1B2)(C1C2)"""
    _, d_B1, d_C1 = dims1
    _, d_B2, d_C2 = dims2
    return nx.permute_systems(np.kron(J, J_hat), [d_B1, d_B1, d_C1, d_B2, d_B2, d_C2], JOINT_ORDER)


@dataclass
class FeasibleDecomposition:
    c1: float
    c2: float
    J1: np.ndarray = field(repr=False)
    J2: np.ndarray = field(repr=False)


def combine_feasible(result1: OverheadResult, result2: OverheadResult) -> FeasibleDecomposition:
    """
    c̃1 = c1ĉ1 + c2ĉ2, c̃2 = c1ĉ2 + c2ĉ1
    J̃1 = J1⊗Ĵ1 + J2⊗Ĵ2, J̃2 = J1⊗Ĵ2 + J2⊗Ĵ1
    """
    d1, d2 = result1.dims, result2.dims
    return FeasibleDecomposition(
        c1=result1.c1 * result2.c1 + result1.c2 * result2.c2,
        c2=result1.c1 * result2.c2 + result1.c2 * result2.c1,
        J1=tensor_choi(result1.J1, result2.J1, d1, d2) + tensor_choi(result1.J2, result2.J2, d1, d2),
        J2=tensor_choi(result1.J1, result2.J2, d1, d2) + tensor_choi(result1.J2, result2.J1, d1, d2),
    )


@dataclass
class FeasibilityReport:
    min_eigenvalue: float
    marginal_residual: float
    recovery_residual: float
    feasible: bool

    def to_dict(self) -> dict:
        return asdict(self)


def check_overhead_feasibility(state: TripartiteState, c1: float, c2: float,
                               J1: np.ndarray, J2: np.ndarray,
                               feas_tol: float = 1e-7) -> FeasibilityReport:
    """逐条检查采样开销原问题的约束"""
    d_B, d_out = state.dims.d_B, state.dims.d_B * state.dims.d_C
    min_eig = min(float(np.linalg.eigvalsh(nx.hermitian_part(J))[0]) for J in (J1, J2))
    marginal = max(
        float(np.max(np.abs(nx.partial_trace(J, [d_B, d_out], 1) - c * np.eye(d_B))))
        for J, c in ((J1, c1), (J2, c2)))
    linear_map = LinearMap.from_choi(J1 - J2, d_B, d_out)
    residual = nx.trace_norm(apply_map(linear_map, state.rho_AB) - state.rho)
    scale = max(1.0, c1 + c2)
    feasible = min_eig >= -feas_tol * scale and marginal <= feas_tol * scale and residual <= feas_tol * scale
    return FeasibilityReport(min_eig, marginal, residual, feasible)


@dataclass
class AdditivityResult:
    nu1: float
    nu2: float
    nu_joint: float
    defect: float
    gamma_joint: float
    feasible_point: Optional[FeasibilityReport] = None

    def to_dict(self) -> dict:
        data = asdict(self)
        return data


@log_execution_time("additivity_check")
def additivity_check(state1: TripartiteState, state2: TripartiteState,
                     options: Optional[SdpOptions] = None) -> AdditivityResult:
    """ν(ρ⊗σ) 与 ν(ρ) + ν(σ) 的差"""
    options = options or SdpOptions()
    joint_dim = state1.dims.total * state2.dims.total
    if joint_dim > options.max_joint_dim:
        raise BudgetExceededError(
            f"联合维度 {joint_dim} 超出求解预算 {options.max_joint_dim}",
            dimension=joint_dim, budget=options.max_joint_dim)

    result1 = sampling_overhead(state1, options)
    result2 = sampling_overhead(state2, options)
    joint = tensor_states(state1, state2)
    joint_result = sampling_overhead(joint, options)

    combined = combine_feasible(result1, result2)
    feasibility = check_overhead_feasibility(joint, combined.c1, combined.c2,
                                             combined.J1, combined.J2, options.feas_tol)
    if not feasibility.feasible:
        logger.warning(f"张量积构造的可行点未通过检查: {feasibility}")

    defect = abs(joint_result.nu - result1.nu - result2.nu)
    logger.info(f"可加性: ν1={result1.nu:.6g} ν2={result2.nu:.6g} ν12={joint_result.nu:.6g} 偏差={defect:.2e}")
    return AdditivityResult(result1.nu, result2.nu, joint_result.nu, defect,
                            joint_result.gamma, feasibility)
