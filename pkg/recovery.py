"""
恢复映射 B → BC 的构造与表示

Choi 矩阵约定（输入 ⊗ 输出）: J = Σ_ij |i⟩⟨j| ⊗ R(|i⟩⟨j|)
超算符约定（按列堆叠）: vec(R(X)) = S vec(X)
两者的互换是同一个指标置换，因此是对合。
"""
import json
from dataclasses import dataclass, asdict, field
from typing import Optional

import numpy as np
from scipy import sparse

import numerics as nx
from exceptions import (
    DimensionError, FileOperationError, InvalidParameterError, NotRecoverableError,
)
from logger_manager import get_logger
from markov import block_system, is_vqmc
from states import TripartiteState, matrix_from_dict, w_state

logger = get_logger('recovery')

TP_TOL = 1e-9


@dataclass
class FlagReport:
    hermitian_preserving: bool
    trace_preserving: bool
    completely_positive: bool
    hermitian_deviation: float
    trace_deviation: float
    min_eigenvalue: float

    def to_dict(self) -> dict:
        return asdict(self)


def _reorder(M: np.ndarray, in_dim: int, out_dim: int, to_superop: bool) -> np.ndarray:
    # J4[i,a,j,b] <-> S4[b,a,j,i]
    if to_superop:
        return M.reshape(in_dim, out_dim, in_dim, out_dim).transpose(3, 1, 2, 0).reshape(
            out_dim * out_dim, in_dim * in_dim)
    return M.reshape(out_dim, out_dim, in_dim, in_dim).transpose(3, 1, 2, 0).reshape(
        in_dim * out_dim, in_dim * out_dim)


def choi_to_superop(choi: np.ndarray, in_dim: int, out_dim: int) -> np.ndarray:
    choi = nx.as_square(choi, "choi")
    if choi.shape[0] != in_dim * out_dim:
        raise DimensionError("Choi 矩阵维度与输入/输出维度不一致",
                             expected=in_dim * out_dim, actual=choi.shape[0])
    return _reorder(choi, in_dim, out_dim, to_superop=True)


def superop_to_choi(superop: np.ndarray, in_dim: int, out_dim: int) -> np.ndarray:
    superop = nx.as_matrix(superop, "superop")
    if superop.shape != (out_dim * out_dim, in_dim * in_dim):
        raise DimensionError("超算符形状与输入/输出维度不一致",
                             expected=(out_dim ** 2, in_dim ** 2), actual=superop.shape)
    return _reorder(superop, in_dim, out_dim, to_superop=False)


@dataclass
class LinearMap:
    """线性映射的两种表示，flags 由 check_flags 填写"""
    in_dim: int
    out_dim: int
    superop: np.ndarray
    choi: np.ndarray
    flags: Optional[FlagReport] = None
    label: str = field(default="", compare=False)

    @classmethod
    def from_choi(cls, choi, in_dim: int, out_dim: int, label: str = "") -> "LinearMap":
        choi = nx.as_square(choi, "choi")
        return cls(in_dim, out_dim, choi_to_superop(choi, in_dim, out_dim), choi, label=label)

    @classmethod
    def from_superop(cls, superop, in_dim: int, out_dim: int, label: str = "") -> "LinearMap":
        superop = nx.as_matrix(superop, "superop")
        return cls(in_dim, out_dim, superop, superop_to_choi(superop, in_dim, out_dim), label=label)

    def with_flags(self, **tolerances) -> "LinearMap":
        self.flags = check_flags(self, **tolerances)
        return self


def apply_map(linear_map: LinearMap, x, form: str = "superop") -> np.ndarray:
    """
    作用映射；x 的维度为 in_dim 时直接作用，为 d_A·in_dim 时作用 id_A ⊗ R

    form: "superop" 或 "choi"，两种形式结果一致
    """
    x = nx.as_square(x, "x")
    n_in, n_out = linear_map.in_dim, linear_map.out_dim
    if x.shape[0] % n_in:
        raise DimensionError(f"输入维度 {x.shape[0]} 不是 {n_in} 的倍数",
                             expected=n_in, actual=x.shape[0])
    d_A = x.shape[0] // n_in

    if form == "choi":
        J4 = linear_map.choi.reshape(n_in, n_out, n_in, n_out)
        X4 = x.reshape(d_A, n_in, d_A, n_in)
        return np.einsum('xiyj,iajb->xayb', X4, J4).reshape(d_A * n_out, d_A * n_out)
    if form != "superop":
        raise InvalidParameterError(f"未知的作用形式: {form}", parameter="form")

    out = np.zeros((d_A * n_out, d_A * n_out), dtype=complex)
    for r in range(d_A):
        for c in range(d_A):
            block = x[r * n_in:(r + 1) * n_in, c * n_in:(c + 1) * n_in]
            out[r * n_out:(r + 1) * n_out, c * n_out:(c + 1) * n_out] = nx.unvec(
                linear_map.superop @ nx.vec(block), n_out, n_out)
    return out


def choi_action_operator(rho_AB, d_A: int, d_in: int, d_out: int) -> sparse.csr_matrix:
    """
    稀疏矩阵 K，满足 vec((id_A ⊗ R)(ρ_AB)) = K vec(J_R)

    σ[(x,a),(y,b)] = Σ_ij ρ[(x,i),(y,j)] J[(i,a),(j,b)]
    """
    rho4 = np.asarray(rho_AB, dtype=complex).reshape(d_A, d_in, d_A, d_in)
    D, N = d_A * d_out, d_in * d_out
    x, i, y, j = np.nonzero(np.abs(rho4) > 0)
    values = rho4[x, i, y, j]
    a, b = np.meshgrid(np.arange(d_out), np.arange(d_out), indexing='ij')
    a, b = a.reshape(-1), b.reshape(-1)

    rows = ((x[:, None] * d_out + a) + (y[:, None] * d_out + b) * D).reshape(-1)
    cols = ((i[:, None] * d_out + a) + (j[:, None] * d_out + b) * N).reshape(-1)
    data = np.repeat(values, a.size)
    return sparse.coo_matrix((data, (rows, cols)), shape=(D * D, N * N)).tocsr()


def recovery_residual(linear_map: LinearMap, state: TripartiteState, form: str = "superop") -> float:
    """‖(id_A ⊗ R)(ρ_AB) − ρ_ABC‖₁"""
    return nx.trace_norm(apply_map(linear_map, state.rho_AB, form) - state.rho)


def build_virtual_recovery(state: TripartiteState, rank_tol: float = nx.RANK_TOL) -> LinearMap:
    """
    由 Rec_B 的伪逆构造 HPTP 虚拟恢复映射

    S = mat_BC·pinv(mat_B) + vec(I_BC)·vec(I_B)†(I − Π_im)/(d_B d_C)，
    Π_im = mat_B·pinv(mat_B)。在 Rec_B 的像上它是 tr_C 的逆，像的正交补上取迹后输出最大混态。
    """
    verdict = is_vqmc(state, rank_tol)
    if not verdict.is_vqmc:
        raise NotRecoverableError(
            f"态 {state.label or ''} 不是 VQMC (rank_B={verdict.rank_B}, rank_BC={verdict.rank_BC})，"
            f"不存在 HPTP 恢复映射", verdict=verdict)

    d_B, d_C = state.dims.d_B, state.dims.d_C
    d_out = d_B * d_C
    system = block_system(state)
    pinv_B = nx.pinv(system.mat_B, rank_tol)
    proj_im = system.mat_B @ pinv_B
    off_image = nx.vec(np.eye(d_B)).conj() @ (np.eye(d_B * d_B) - proj_im)
    superop = system.mat_BC @ pinv_B + np.outer(nx.vec(np.eye(d_out)), off_image) / d_out

    linear_map = LinearMap.from_superop(superop, d_B, d_out, label=f"virtual[{state.label}]")
    linear_map.with_flags()
    logger.debug(f"虚拟恢复映射已构造: {linear_map.flags}")
    return linear_map


def _w_params_ok(alpha0: float, alpha1: float) -> bool:
    return alpha0 > 0 and alpha1 > 0 and alpha0 + alpha1 < 1


def w_choi_formula(alpha0: float, alpha1: float) -> LinearMap:
    """
    广义 W 态的闭式 Choi 矩阵，β = 1 − α0 − α1:

      J = |0⟩⟨0| ⊗ Q11/β + |0⟩⟨1| ⊗ Q10/√(α1β) + |1⟩⟨0| ⊗ Q01/√(α1β)
          + |1⟩⟨1| ⊗ (β·Q00 − α0·Q11)/(α1β)

    Q^{(ij)} 是 W 态在 BC 上的分块。|1⟩⟨0| 项的系数取 1/√(α1β)，
    因为 Q_B^{(01)} = √(α1β)|1⟩⟨0|；α0 = α1 时与 1/√(α0β) 相同。
    """
    if not _w_params_ok(alpha0, alpha1):
        raise InvalidParameterError(
            f"闭式公式要求 α0, α1 > 0 且 α0+α1 < 1: ({alpha0}, {alpha1})", parameter="alpha")

    state = w_state(alpha0, alpha1)
    beta = 1 - alpha0 - alpha1
    q = {(i, j): state.block(i, j) for i in range(2) for j in range(2)}
    images = {
        (0, 0): q[1, 1] / beta,
        (0, 1): q[1, 0] / np.sqrt(alpha1 * beta),
        (1, 0): q[0, 1] / np.sqrt(alpha1 * beta),
        (1, 1): (beta * q[0, 0] - alpha0 * q[1, 1]) / (alpha1 * beta),
    }
    choi = sum(np.kron(_unit(i, j, 2), images[i, j]) for (i, j) in images)
    return LinearMap.from_choi(choi, 2, 4, label=f"w_formula({alpha0:.6g},{alpha1:.6g})").with_flags()


def _unit(i: int, j: int, dim: int) -> np.ndarray:
    E = np.zeros((dim, dim))
    E[i, j] = 1.0
    return E


def choi_from_function(func, in_dim: int, out_dim: int) -> np.ndarray:
    return sum(np.kron(_unit(i, j, in_dim), func(_unit(i, j, in_dim)))
               for i in range(in_dim) for j in range(in_dim))


def petz_map(rho_BC, d_B: int, d_C: int) -> LinearMap:
    """
    Petz 映射 X ↦ ρ_BC^{1/2} (ρ_B^{-1/2} X ρ_B^{-1/2} ⊗ I_C) ρ_BC^{1/2}

    ρ_B 的逆平方根只在支撑集上取，支撑集外映射为 0
    """
    rho_BC = nx.as_square(rho_BC, "rho_BC")
    rho_B = nx.partial_trace(rho_BC, [d_B, d_C], 1)
    sqrt_BC = nx.psd_sqrt(rho_BC)
    inv_sqrt_B = nx.psd_pinv_sqrt(rho_B)

    def action(X):
        inner = np.kron(inv_sqrt_B @ X @ inv_sqrt_B, np.eye(d_C))
        return sqrt_BC @ inner @ sqrt_BC

    choi = choi_from_function(action, d_B, d_B * d_C)
    return LinearMap.from_choi(choi, d_B, d_B * d_C, label="petz").with_flags()


def check_flags(linear_map: LinearMap, herm_tol: float = nx.HERM_TOL,
                psd_tol: float = nx.PSD_TOL, tp_tol: float = TP_TOL) -> FlagReport:
    """由 Choi 矩阵重新计算 HP / TP / CP 标志"""
    choi = linear_map.choi
    herm_dev, norm = nx.hermitian_deviation(choi)
    hp = herm_dev <= herm_tol * norm

    marginal = nx.partial_trace(choi, [linear_map.in_dim, linear_map.out_dim], 1)
    tp_dev = float(np.max(np.abs(marginal - np.eye(linear_map.in_dim))))

    min_eig = float(np.linalg.eigvalsh(nx.hermitian_part(choi))[0])
    return FlagReport(
        hermitian_preserving=bool(hp),
        trace_preserving=tp_dev <= tp_tol,
        completely_positive=bool(hp and min_eig >= -psd_tol),
        hermitian_deviation=herm_dev,
        trace_deviation=tp_dev,
        min_eigenvalue=min_eig,
    )


def map_to_dict(linear_map: LinearMap) -> dict:
    flags = linear_map.flags or check_flags(linear_map)
    return {
        "in_dim": linear_map.in_dim,
        "out_dim": linear_map.out_dim,
        "label": linear_map.label,
        "choi": {"re": linear_map.choi.real.tolist(), "im": linear_map.choi.imag.tolist()},
        "flags": flags.to_dict(),
    }


def map_from_dict(data: dict) -> LinearMap:
    try:
        in_dim, out_dim = int(data["in_dim"]), int(data["out_dim"])
        choi = matrix_from_dict(data["choi"])
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidParameterError(f"映射文件格式错误: {e}", parameter="map") from e
    return LinearMap.from_choi(choi, in_dim, out_dim, label=data.get("label", "")).with_flags()


def save_map_file(linear_map: LinearMap, path: str) -> None:
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(map_to_dict(linear_map), f)
    except OSError as e:
        raise FileOperationError(f"无法写入映射文件: {e}", file_path=path, operation="write") from e


def load_map_file(path: str) -> LinearMap:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise FileOperationError(f"无法读取映射文件: {e}", file_path=path, operation="read") from e
    return map_from_dict(data)
