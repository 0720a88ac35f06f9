"""
三体量子态：命名态构造、随机生成器和态文件读写

态文件格式（JSON）:
  {"family": "w", "params": {"p": 0.3}}
  {"dims": [2, 2, 2], "re": [[...]], "im": [[...]]}
"""
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

import numerics as nx
from exceptions import (
    DimensionError, FileOperationError, InvalidParameterError, InvalidStateError,
    NotPsdError, validate_input,
)
from logger_manager import get_logger

logger = get_logger('states')

TRACE_TOL = 1e-10
SIMPLEX_SLACK = 1e-12

SeedLike = Union[int, np.random.Generator, None]


def make_rng(seed: SeedLike) -> np.random.Generator:
    """PCG64 生成器；已是 Generator 时原样返回"""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def validate_density(rho, herm_tol: float = nx.HERM_TOL, psd_tol: float = nx.PSD_TOL,
                     trace_tol: float = TRACE_TOL, label: str = "",
                     subnormalized: bool = False) -> np.ndarray:
    """
    检查密度矩阵：厄米、半正定、迹为 1

    subnormalized=True 时只要求 tr ρ ≤ 1
    """
    rho = nx.as_square(rho, "rho")
    eigenvalues, _ = nx.herm_eig(rho, herm_tol)
    if eigenvalues[0] < -psd_tol:
        raise NotPsdError(f"态 {label} 有负本征值 {eigenvalues[0]:.3e}",
                          min_eigenvalue=float(eigenvalues[0]), tolerance=psd_tol)
    trace = complex(np.trace(rho))
    bad_trace = trace.real > 1.0 + trace_tol if subnormalized else abs(trace - 1.0) > trace_tol
    if bad_trace:
        raise InvalidStateError(f"态 {label} 的迹不为 1: {trace.real:.12g}", reason="trace",
                                details={"trace": trace.real})
    return rho


@dataclass
class TripartiteState:
    """密度矩阵 ρ_ABC 及其维度划分"""
    rho: np.ndarray
    dims: nx.DimSplit
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if not isinstance(self.dims, nx.DimSplit):
            self.dims = nx.DimSplit(*self.dims)
        self.rho = nx.as_square(self.rho, "rho")
        self.dims.check(self.rho.shape[0])

    def validate(self, herm_tol: float = nx.HERM_TOL, psd_tol: float = nx.PSD_TOL,
                 trace_tol: float = TRACE_TOL) -> "TripartiteState":
        """检查厄米性、半正定性和单位迹，失败时抛出对应异常"""
        validate_density(self.rho, herm_tol, psd_tol, trace_tol, label=self.label or "")
        return self

    @property
    def dim_list(self) -> List[int]:
        return self.dims.as_list()

    def marginal(self, keep: str) -> np.ndarray:
        """按子系统字母取约化密度矩阵，例如 marginal('AB')"""
        names = "ABC"
        traced = [i for i, name in enumerate(names) if name not in keep.upper()]
        if not traced:
            return self.rho
        return nx.partial_trace(self.rho, self.dim_list, traced)

    @property
    def rho_AB(self) -> np.ndarray:
        return self.marginal("AB")

    @property
    def rho_BC(self) -> np.ndarray:
        return self.marginal("BC")

    @property
    def rho_B(self) -> np.ndarray:
        return self.marginal("B")

    def block(self, i: int, j: int, keep_c: bool = True) -> np.ndarray:
        """Q^{(ij)} = ⟨i|_A ρ |j⟩_A，keep_c=False 时再对 C 求偏迹"""
        d_A, d_B, d_C = self.dim_list
        n = d_B * d_C
        q = self.rho[i * n:(i + 1) * n, j * n:(j + 1) * n]
        if keep_c:
            return q
        return nx.partial_trace(q, [d_B, d_C], 1)


def _state(rho: np.ndarray, dims, label: str) -> TripartiteState:
    return TripartiteState(rho, dims, label=label).validate()


def _in_unit_interval(*args, **kwargs) -> bool:
    p = kwargs.get("p", args[-1] if args else None)
    return p is not None and 0.0 <= float(p) <= 1.0


def _in_simplex(alpha0: float = 1 / 3, alpha1: float = 1 / 3) -> bool:
    return alpha0 >= 0 and alpha1 >= 0 and alpha0 + alpha1 <= 1 + SIMPLEX_SLACK


@validate_input(_in_simplex, "W 态参数必须满足 α0, α1 ≥ 0 且 α0+α1 ≤ 1", parameter="alpha")
def w_state(alpha0: float = 1 / 3, alpha1: float = 1 / 3) -> TripartiteState:
    """√α0|001⟩ + √α1|010⟩ + √(1−α0−α1)|100⟩"""
    ket = np.zeros(8, dtype=complex)
    ket[0b001] = math.sqrt(alpha0)
    ket[0b010] = math.sqrt(alpha1)
    ket[0b100] = math.sqrt(max(0.0, 1.0 - alpha0 - alpha1))
    return _state(nx.ket_to_dm(ket), (2, 2, 2), f"w({alpha0:.6g},{alpha1:.6g})")


def ghz_state() -> TripartiteState:
    ket = np.zeros(8, dtype=complex)
    ket[0b000] = ket[0b111] = 1 / math.sqrt(2)
    return _state(nx.ket_to_dm(ket), (2, 2, 2), "ghz")


@validate_input(_in_unit_interval, "退极化参数 p 必须在 [0, 1] 内", parameter="p")
def depolarize(state: TripartiteState, p: float) -> TripartiteState:
    """(1−p)ρ + p·I/(d_A d_B d_C)"""
    dim = state.dims.total
    rho = (1 - p) * state.rho + p * np.eye(dim) / dim
    return _state(rho, state.dims, f"{state.label}@p={p:.6g}")


@validate_input(_in_unit_interval, "混合参数 p 必须在 [0, 1] 内", parameter="p")
def ghz_w_mix(p: float) -> TripartiteState:
    """p|GHZ⟩⟨GHZ| + (1−p)|W⟩⟨W|，W 取对称 W 态"""
    rho = p * ghz_state().rho + (1 - p) * w_state(1 / 3, 1 / 3).rho
    return _state(rho, (2, 2, 2), f"gw({p:.17g})")


def _ket3(*terms: str) -> np.ndarray:
    ket = np.zeros(8, dtype=complex)
    for bits in terms:
        ket[int(bits, 2)] = 1.0
    return ket / np.linalg.norm(ket)


_NAMED_KETS = {
    "s1": ("001", "100", "110", "111"),
    "s2": ("000", "011", "101", "111"),
    "psi1": ("010", "101", "110"),
    "psi2": ("010", "011", "100"),
}


def named_state(name: str) -> TripartiteState:
    """s1, s2, rho_s = (|s1⟩⟨s1| + |s2⟩⟨s2|)/2, psi1, psi2"""
    if name in _NAMED_KETS:
        return _state(nx.ket_to_dm(_ket3(*_NAMED_KETS[name])), (2, 2, 2), name)
    if name == "rho_s":
        rho = (nx.ket_to_dm(_ket3(*_NAMED_KETS["s1"])) + nx.ket_to_dm(_ket3(*_NAMED_KETS["s2"]))) / 2
        return _state(rho, (2, 2, 2), name)
    raise InvalidParameterError(f"未知的命名态: {name}", parameter="name",
                                details={"known": sorted(list(_NAMED_KETS) + ["rho_s"])})


def _gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_density(dim: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    """G·G†/tr(G·G†)，G 为 dim×rank 复高斯矩阵"""
    if not 1 <= rank <= dim:
        raise InvalidParameterError(f"秩必须在 [1, {dim}] 内: {rank}", parameter="rank")
    G = _gaussian(rng, (dim, rank))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_state(dims, rank: Optional[int] = None, seed: SeedLike = None) -> TripartiteState:
    dims = dims if isinstance(dims, nx.DimSplit) else nx.DimSplit(*dims)
    rank = dims.total if rank is None else rank
    rho = random_density(dims.total, rank, make_rng(seed))
    return _state(rho, dims, f"random(rank={rank},seed={seed})")


def random_classical_on_c(dims, seed: SeedLike = None) -> TripartiteState:
    """Σ_k p_k ρ_AB^{(k)} ⊗ |k⟩⟨k|_C"""
    dims = dims if isinstance(dims, nx.DimSplit) else nx.DimSplit(*dims)
    rng = make_rng(seed)
    d_AB = dims.d_A * dims.d_B
    weights = rng.dirichlet(np.ones(dims.d_C))
    rho = np.zeros((dims.total, dims.total), dtype=complex)
    for k, weight in enumerate(weights):
        proj = np.zeros((dims.d_C, dims.d_C))
        proj[k, k] = 1.0
        rho += weight * np.kron(random_density(d_AB, d_AB, rng), proj)
    return _state(rho, dims, f"classical_on_c(seed={seed})")


def random_classical_markov(dims, seed: SeedLike = None) -> TripartiteState:
    """对角态 p_ijk = p_ij · p(k|j)"""
    dims = dims if isinstance(dims, nx.DimSplit) else nx.DimSplit(*dims)
    rng = make_rng(seed)
    p_ab = rng.dirichlet(np.ones(dims.d_A * dims.d_B)).reshape(dims.d_A, dims.d_B)
    p_c_given_b = rng.dirichlet(np.ones(dims.d_C), size=dims.d_B)
    p_abc = p_ab[:, :, None] * p_c_given_b[None, :, :]
    return _state(np.diag(p_abc.reshape(-1)).astype(complex), dims,
                  f"classical_markov(seed={seed})")


BlockSpec = Sequence[Tuple[int, int, float]]


def random_qmc(block_spec: BlockSpec, d_A: int, d_C: int, seed: SeedLike = None) -> TripartiteState:
    """
    ⊕_j q_j ρ_{A b_j^L} ⊗ ρ_{b_j^R C}

    B = ⊕_j (b_j^L ⊗ b_j^R)，每个分块按顺序占据 B 的一段计算基
    """
    if not block_spec:
        raise InvalidParameterError("分块说明不能为空", parameter="block_spec")
    weights = np.array([float(w) for _, _, w in block_spec])
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise InvalidParameterError(f"分块权重必须构成概率分布: {weights.tolist()}",
                                    parameter="block_spec")
    for d_left, d_right, _ in block_spec:
        if d_left < 1 or d_right < 1:
            raise DimensionError(f"分块维度必须为正: ({d_left}, {d_right})")
    d_B = sum(int(l) * int(r) for l, r, _ in block_spec)

    rng = make_rng(seed)
    dims = nx.DimSplit(d_A, d_B, d_C)
    rho = np.zeros((dims.total, dims.total), dtype=complex)
    offset = 0
    for (d_left, d_right, weight) in block_spec:
        width = d_left * d_right
        left = random_density(d_A * d_left, d_A * d_left, rng)
        right = random_density(d_right * d_C, d_right * d_C, rng)
        # A ⊗ bL ⊗ bR ⊗ C 的顺序正好是 A ⊗ (bL bR) ⊗ C
        local = np.kron(left, right)
        iso = np.zeros((d_B, width))
        iso[offset:offset + width, :] = np.eye(width)
        embed = nx.kron_all(np.eye(d_A), iso, np.eye(d_C))
        rho += weight * embed @ local @ embed.T
        offset += width
    return _state(rho, dims, f"qmc(seed={seed})")


def product_state(rho_A, rho_B, rho_C) -> TripartiteState:
    rho = nx.kron_all(rho_A, rho_B, rho_C)
    dims = (np.shape(rho_A)[0], np.shape(rho_B)[0], np.shape(rho_C)[0])
    return _state(rho, dims, "product")


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar 随机酉矩阵（QR 分解并修正相位）"""
    Q, R = np.linalg.qr(_gaussian(rng, (dim, dim)) / math.sqrt(2))
    phases = np.diag(R) / np.abs(np.diag(R))
    return Q * phases


def parse_block_spec(text: str) -> List[Tuple[int, int, float]]:
    """'1x2:0.5;2x1:0.5' -> [(1, 2, 0.5), (2, 1, 0.5)]"""
    blocks = []
    try:
        for part in text.split(";"):
            shape, weight = part.split(":")
            left, right = shape.lower().split("x")
            blocks.append((int(left), int(right), float(weight)))
    except ValueError as e:
        raise InvalidParameterError(f"无法解析分块说明 '{text}': {e}", parameter="blocks") from e
    return blocks


def _float(params: dict, key: str, default=None) -> float:
    value = params.get(key, default)
    if value is None:
        raise InvalidParameterError(f"缺少参数 {key}", parameter=key)
    return float(value)


def _int(params: dict, key: str, default=None) -> int:
    return int(_float(params, key, default))


def _seed(params: dict) -> Optional[int]:
    return None if params.get("seed") is None else int(params["seed"])


def _build_w(params: dict) -> TripartiteState:
    state = w_state(_float(params, "alpha0", 1 / 3), _float(params, "alpha1", 1 / 3))
    return depolarize(state, _float(params, "p")) if "p" in params else state


def _build_ghz(params: dict) -> TripartiteState:
    state = ghz_state()
    return depolarize(state, _float(params, "p")) if "p" in params else state


def _build_random(params: dict) -> TripartiteState:
    rank = int(params["rank"]) if "rank" in params else None
    return random_state(_dims_from(params), rank, _seed(params))


def _build_qmc(params: dict) -> TripartiteState:
    blocks = parse_block_spec(str(params.get("blocks", "1x1:0.5;1x1:0.5")))
    return random_qmc(blocks, _int(params, "d_A", 2), _int(params, "d_C", 2), _seed(params))


def _dims_from(params: dict) -> Tuple[int, int, int]:
    return (_int(params, "d_A", 2), _int(params, "d_B", 2), _int(params, "d_C", 2))


FAMILIES: Dict[str, Callable[[dict], TripartiteState]] = {
    "w": _build_w,
    "ghz": _build_ghz,
    "gw": lambda params: ghz_w_mix(_float(params, "p")),
    "s1": lambda params: named_state("s1"),
    "s2": lambda params: named_state("s2"),
    "rho_s": lambda params: named_state("rho_s"),
    "psi1": lambda params: named_state("psi1"),
    "psi2": lambda params: named_state("psi2"),
    "random": _build_random,
    "random_qmc": _build_qmc,
    "random_classical_on_c": lambda params: random_classical_on_c(_dims_from(params), _seed(params)),
    "random_classical_markov": lambda params: random_classical_markov(_dims_from(params), _seed(params)),
}


def build_family(name: str, params: Optional[dict] = None) -> TripartiteState:
    """按族名和参数构造态"""
    builder = FAMILIES.get(name)
    if builder is None:
        raise InvalidParameterError(f"未知的态族: {name}", parameter="family",
                                    details={"known": sorted(FAMILIES)})
    return builder(dict(params or {}))


def state_to_dict(state: TripartiteState) -> dict:
    return {
        "dims": state.dim_list,
        "re": state.rho.real.tolist(),
        "im": state.rho.imag.tolist(),
    }


def matrix_from_dict(data: dict, key_re: str = "re", key_im: str = "im") -> np.ndarray:
    try:
        re = np.asarray(data[key_re], dtype=float)
        im = np.asarray(data.get(key_im, np.zeros_like(re)), dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidStateError(f"矩阵字段格式错误: {e}", reason="schema") from e
    if re.shape != im.shape:
        raise DimensionError("实部与虚部形状不一致", expected=re.shape, actual=im.shape)
    return re + 1j * im


def state_from_dict(data: dict, herm_tol: float = nx.HERM_TOL, psd_tol: float = nx.PSD_TOL,
                    trace_tol: float = TRACE_TOL) -> TripartiteState:
    """解析态文件内容，按给定容差校验"""
    if not isinstance(data, dict):
        raise InvalidStateError("态文件顶层必须是 JSON 对象", reason="schema")
    if "family" in data:
        return build_family(str(data["family"]), data.get("params") or {})
    if "dims" not in data:
        raise InvalidStateError("态文件需要 'family' 或 'dims' 字段", reason="schema")
    rho = matrix_from_dict(data)
    state = TripartiteState(rho, nx.DimSplit(*[int(d) for d in data["dims"]]), label="file")
    return state.validate(herm_tol, psd_tol, trace_tol)


def load_state_file(path: str, **tolerances) -> TripartiteState:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise FileOperationError(f"无法读取态文件: {e}", file_path=path, operation="read") from e
    state = state_from_dict(data, **tolerances)
    logger.debug(f"态文件已加载: {path} dims={state.dim_list}")
    return state


def save_state_file(state: TripartiteState, path: str) -> None:
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(state_to_dict(state), f)
    except OSError as e:
        raise FileOperationError(f"无法写入态文件: {e}", file_path=path, operation="write") from e
