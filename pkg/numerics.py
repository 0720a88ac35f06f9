"""
稠密复矩阵基础运算

全局约定：
  - 张量积顺序 A ⊗ B ⊗ C，A 为最慢变化的指标
  - 向量化按列堆叠：vec(M) = M.reshape(-1, order='F')，因此 vec(AXB) = (Bᵀ ⊗ A) vec(X)
"""
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from exceptions import DimensionError, NonFiniteError, NotHermitianError, NotPsdError

HERM_TOL = 1e-10
PSD_TOL = 1e-9
RANK_TOL = 1e-10


@dataclass(frozen=True)
class DimSplit:
    """三体系统的维度划分 (d_A, d_B, d_C)"""
    d_A: int
    d_B: int
    d_C: int

    def __post_init__(self):
        for name in ("d_A", "d_B", "d_C"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DimensionError(f"{name} 必须是正整数: {value}")

    @property
    def total(self) -> int:
        return self.d_A * self.d_B * self.d_C

    def as_list(self) -> list:
        return [self.d_A, self.d_B, self.d_C]

    def check(self, dim: int) -> None:
        if dim != self.total:
            raise DimensionError(
                f"矩阵维度 {dim} 与划分 {self.as_list()} 的乘积 {self.total} 不一致",
                expected=self.total, actual=dim)


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """转换为二维复矩阵并检查有限性"""
    arr = np.asarray(M, dtype=complex)
    if arr.ndim != 2:
        raise DimensionError(f"{name} 必须是二维矩阵，实际维数 {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} 含有 NaN 或 Inf")
    return arr


def as_square(M, name: str = "matrix") -> np.ndarray:
    arr = as_matrix(M, name)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} 必须是方阵，实际形状 {arr.shape}")
    return arr


def hermitian_deviation(H) -> Tuple[float, float]:
    """返回 (‖H−H†‖_F, ‖H‖_F)"""
    H = np.asarray(H)
    return float(np.linalg.norm(H - H.conj().T)), float(np.linalg.norm(H))


def is_hermitian(H, herm_tol: float = HERM_TOL) -> bool:
    dev, norm = hermitian_deviation(H)
    return dev <= herm_tol * norm


def hermitian_part(H) -> np.ndarray:
    H = np.asarray(H)
    return (H + H.conj().T) / 2


def herm_eig(H, herm_tol: float = HERM_TOL) -> Tuple[np.ndarray, np.ndarray]:
    """
    厄米矩阵本征分解

    Returns:
        (eigenvalues 升序实向量, eigenvectors 酉矩阵)，满足 H = V diag(λ) V†
    Raises:
        NotHermitianError: ‖H−H†‖_F 超过 herm_tol·‖H‖_F
    """
    H = as_square(H, "H")
    dev, norm = hermitian_deviation(H)
    if dev > herm_tol * norm:
        raise NotHermitianError(
            f"输入不是厄米矩阵: ‖H−H†‖_F = {dev:.3e} > {herm_tol:.1e}·‖H‖_F",
            deviation=dev, tolerance=herm_tol * norm)
    # LAPACK eigh 对相同输入是确定性的，输出升序
    eigenvalues, eigenvectors = np.linalg.eigh(hermitian_part(H))
    return eigenvalues, eigenvectors


def svd(M) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """紧凑奇异值分解，M = U diag(s) V†，s 降序"""
    M = as_matrix(M, "M")
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    return U, s, Vh.conj().T


def numerical_rank(M_or_singulars, rank_tol: float = RANK_TOL) -> int:
    """数值秩：大于 rank_tol·s_max 的奇异值个数"""
    s = np.asarray(M_or_singulars)
    if s.ndim == 2:
        s = np.linalg.svd(s, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rank_tol * s[0]))


def pinv(M, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore–Penrose 伪逆，奇异值 ≤ rank_tol·s_max 视为零"""
    if rank_tol < 0:
        raise ValueError(f"rank_tol 不能为负: {rank_tol}")
    U, s, V = svd(M)
    rank = numerical_rank(s, rank_tol)
    if rank == 0:
        return np.zeros((V.shape[0], U.shape[0]), dtype=complex)
    return (V[:, :rank] / s[:rank]) @ U[:, :rank].conj().T


def kron(A, B) -> np.ndarray:
    return np.kron(np.asarray(A), np.asarray(B))


def kron_all(*matrices) -> np.ndarray:
    return reduce(np.kron, [np.asarray(m) for m in matrices])


def _check_dims(M: np.ndarray, dims: Sequence[int]) -> list:
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    if M.shape != (total, total):
        raise DimensionError(
            f"矩阵形状 {M.shape} 与子系统维度 {dims} 不一致",
            expected=(total, total), actual=M.shape)
    return dims


def _selection(sys: Union[int, Iterable[int]], n: int) -> list:
    selected = [sys] if isinstance(sys, (int, np.integer)) else list(sys)
    for k in selected:
        if not 0 <= k < n:
            raise DimensionError(f"子系统编号越界: {k}（共 {n} 个子系统）")
    return sorted(set(int(k) for k in selected))


def partial_trace(M, dims: Sequence[int], traced: Union[int, Iterable[int]]) -> np.ndarray:
    """对 traced 中的子系统求偏迹，保留其余子系统的原有顺序"""
    M = as_square(M)
    dims = _check_dims(M, dims)
    traced = _selection(traced, len(dims))

    tensor = M.reshape(dims + dims)
    n = len(dims)
    # 从后往前消去，前面的轴号不变
    for k in reversed(traced):
        tensor = np.trace(tensor, axis1=k, axis2=k + n)
        n -= 1
    kept = int(np.prod([d for i, d in enumerate(dims) if i not in traced]))
    return tensor.reshape(kept, kept)


def partial_transpose(M, dims: Sequence[int], sys: Union[int, Iterable[int]]) -> np.ndarray:
    """只对选定张量因子做转置"""
    M = as_square(M)
    dims = _check_dims(M, dims)
    n = len(dims)
    perm = np.arange(2 * n)
    for k in _selection(sys, n):
        perm[k], perm[k + n] = k + n, k
    return M.reshape(dims + dims).transpose(perm).reshape(M.shape)


def permute_systems(M, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """重排子系统：输出的第 k 个子系统是输入的第 perm[k] 个"""
    M = as_square(M)
    dims = _check_dims(M, dims)
    n = len(dims)
    if sorted(perm) != list(range(n)):
        raise DimensionError(f"无效的子系统置换: {list(perm)}")
    axes = list(perm) + [p + n for p in perm]
    return M.reshape(dims + dims).transpose(axes).reshape(M.shape)


def psd_sqrt(M, psd_tol: float = PSD_TOL, herm_tol: float = HERM_TOL) -> np.ndarray:
    """半正定矩阵的平方根，[−psd_tol, 0) 内的本征值截断为 0"""
    eigenvalues, V = herm_eig(M, herm_tol)
    if eigenvalues.size and eigenvalues[0] < -psd_tol:
        raise NotPsdError(f"矩阵不是半正定的: 最小本征值 {eigenvalues[0]:.3e}",
                          min_eigenvalue=float(eigenvalues[0]), tolerance=psd_tol)
    root = np.sqrt(np.clip(eigenvalues, 0.0, None))
    return (V * root) @ V.conj().T


def psd_pinv_sqrt(M, psd_tol: float = PSD_TOL, rank_tol: float = RANK_TOL) -> np.ndarray:
    """支撑集上的 M^{-1/2}，支撑集外为 0"""
    eigenvalues, V = herm_eig(M)
    if eigenvalues.size and eigenvalues[0] < -psd_tol:
        raise NotPsdError(f"矩阵不是半正定的: 最小本征值 {eigenvalues[0]:.3e}",
                          min_eigenvalue=float(eigenvalues[0]), tolerance=psd_tol)
    top = eigenvalues[-1] if eigenvalues.size else 0.0
    if top <= 0:
        return np.zeros_like(V)
    inv_root = np.zeros_like(eigenvalues)
    support = eigenvalues > rank_tol * top
    inv_root[support] = 1.0 / np.sqrt(eigenvalues[support])
    return (V * inv_root) @ V.conj().T


def trace_norm(M) -> float:
    """迹范数：奇异值之和"""
    return float(np.sum(np.linalg.svd(as_matrix(M), compute_uv=False)))


def vec(M) -> np.ndarray:
    """按列堆叠向量化"""
    return np.asarray(M).reshape(-1, order='F')


def unvec(v, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v).reshape(-1)
    if v.size != rows * cols:
        raise DimensionError(f"向量长度 {v.size} 无法还原为 {rows}×{cols} 矩阵",
                             expected=rows * cols, actual=v.size)
    return v.reshape((rows, cols), order='F')


def basis_ket(index: int, dim: int) -> np.ndarray:
    ket = np.zeros(dim, dtype=complex)
    ket[index] = 1.0
    return ket


def ket_to_dm(ket) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex).reshape(-1)
    return np.outer(ket, ket.conj())
