"""
分块矩阵 Rec_B / Rec_BC 与虚拟量子马尔可夫链判定

mat_B 的第 (i·d_A + j) 列是 vec(Q_B^{(ij)})，Q^{(ij)} = ⟨i|_A ρ |j⟩_A。
ker Rec_BC ⊆ ker Rec_B 恒成立，所以 ker Rec_B ⊆ ker Rec_BC 等价于两者秩相等。
"""
from dataclasses import dataclass, asdict
from typing import Tuple

import numpy as np

import numerics as nx
from logger_manager import get_logger
from states import TripartiteState

logger = get_logger('markov')

QMC_TOL = 1e-8


@dataclass
class BlockMatrixSystem:
    mat_B: np.ndarray
    mat_BC: np.ndarray
    dims: nx.DimSplit

    def column(self, i: int, j: int, which: str = "B") -> np.ndarray:
        """还原 Q^{(ij)}"""
        d_A, d_B, d_C = self.dims.as_list()
        mat, size = (self.mat_B, d_B) if which == "B" else (self.mat_BC, d_B * d_C)
        return nx.unvec(mat[:, i * d_A + j], size, size)


@dataclass
class VqmcVerdict:
    is_vqmc: bool
    rank_B: int
    rank_BC: int
    kernel_dim_B: int
    kernel_dim_BC: int
    singular_gap: float
    min_singular_ratio: float
    rank_tol: float

    def to_dict(self) -> dict:
        return asdict(self)


def block_system(state: TripartiteState) -> BlockMatrixSystem:
    d_A = state.dims.d_A
    cols_B, cols_BC = [], []
    for i in range(d_A):
        for j in range(d_A):
            q_bc = state.block(i, j)
            cols_BC.append(nx.vec(q_bc))
            cols_B.append(nx.vec(nx.partial_trace(q_bc, [state.dims.d_B, state.dims.d_C], 1)))
    return BlockMatrixSystem(np.column_stack(cols_B), np.column_stack(cols_BC), state.dims)


def partial_trace_superop(d_B: int, d_C: int) -> np.ndarray:
    """tr_C 的超算符：vec(tr_C X) = T vec(X)，T = Σ_k E_k ⊗ E_k，E_k = I_B ⊗ ⟨k|"""
    T = np.zeros((d_B * d_B, (d_B * d_C) ** 2))
    for k in range(d_C):
        E_k = np.kron(np.eye(d_B), nx.basis_ket(k, d_C).real[None, :])
        T += np.kron(E_k, E_k)
    return T


def consistency_residual(system: BlockMatrixSystem) -> float:
    """‖T_C · mat_BC − mat_B‖_max"""
    T = partial_trace_superop(system.dims.d_B, system.dims.d_C)
    return float(np.max(np.abs(T @ system.mat_BC - system.mat_B)))


def kernel_basis(mat: np.ndarray, rank_tol: float = nx.RANK_TOL) -> np.ndarray:
    """零空间的正交基（按列），维数 = 列数 − 数值秩"""
    mat = nx.as_matrix(mat, "mat")
    _, s, Vh = np.linalg.svd(mat, full_matrices=True)
    rank = nx.numerical_rank(s, rank_tol)
    return Vh[rank:].conj().T


def _rank_and_gap(mat: np.ndarray, rank_tol: float) -> Tuple[int, float, float]:
    """
    数值秩、保留/舍弃奇异值之比、最小保留奇异值与最大奇异值之比

    没有被舍弃的奇异值时，分母取阈值 rank_tol·s_max
    """
    s = np.linalg.svd(mat, compute_uv=False)
    rank = nx.numerical_rank(s, rank_tol)
    if rank == 0:
        return 0, float("inf"), float("inf")
    implicit_zeros = mat.shape[1] > s.size
    if rank < s.size:
        discarded = s[rank]
    elif implicit_zeros:
        discarded = 0.0
    else:
        discarded = rank_tol * s[0]
    gap = float("inf") if discarded == 0 else float(s[rank - 1] / discarded)
    return rank, gap, float(s[rank - 1] / s[0])


def is_vqmc(state: TripartiteState, rank_tol: float = nx.RANK_TOL) -> VqmcVerdict:
    system = block_system(state)
    rank_B, gap_B, ratio_B = _rank_and_gap(system.mat_B, rank_tol)
    rank_BC, gap_BC, ratio_BC = _rank_and_gap(system.mat_BC, rank_tol)
    if rank_B > rank_BC:
        logger.warning(f"rank_B={rank_B} > rank_BC={rank_BC}，秩判定受容差 {rank_tol:g} 影响")
    cols = state.dims.d_A ** 2
    verdict = VqmcVerdict(
        is_vqmc=rank_B == rank_BC,
        rank_B=rank_B,
        rank_BC=rank_BC,
        kernel_dim_B=cols - rank_B,
        kernel_dim_BC=cols - rank_BC,
        singular_gap=min(gap_B, gap_BC),
        min_singular_ratio=min(ratio_B, ratio_BC),
        rank_tol=rank_tol,
    )
    logger.debug(f"{state.label or 'state'}: {verdict}")
    return verdict


def is_qmc(state: TripartiteState, tol: float = QMC_TOL) -> bool:
    """I(A:C|B) ≤ tol"""
    from analysis import cmi
    return cmi(state).cmi <= tol
