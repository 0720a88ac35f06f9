"""
准概率恢复协议的蒙特卡洛模拟

每一次采样：以 c_i/γ 的概率选择信道 N_i = J_i/c_i，精确演化 σ = (id_A ⊗ N_i)(ρ_AB)，
按 Born 规则抽取观测量 O 的本征值 λ，记录 sign_i·γ·λ。估计值为所有记录的均值。
"""
import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

import numerics as nx
from exceptions import (
    DimensionError, FileOperationError, InvalidParameterError, SamplingError, validate_input,
)
from logger_manager import get_logger, log_execution_time
from recovery import LinearMap, apply_map, check_flags
from sdp import OverheadResult
from states import TripartiteState, matrix_from_dict

logger = get_logger('sampling')

PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass
class SamplingOptions:
    eps: float = 0.05
    delta: float = 0.01
    born_tol: float = 1e-8
    channel_tol: float = 1e-5
    batches: int = 1
    workers: int = 1
    seed: Optional[int] = 0

    @classmethod
    def from_config(cls, config_manager) -> "SamplingOptions":
        get = config_manager.get
        seed = get('sampling.seed', cls.seed)
        return cls(
            eps=float(get('sampling.eps', cls.eps)),
            delta=float(get('sampling.delta', cls.delta)),
            born_tol=float(get('sampling.born_tol', cls.born_tol)),
            channel_tol=float(get('sampling.channel_tol', cls.channel_tol)),
            batches=int(get('sampling.batches', cls.batches)),
            workers=int(get('sampling.workers', cls.workers)),
            seed=None if seed is None else int(seed),
        )


def pauli_observable(label: str) -> np.ndarray:
    """'ZZZ' -> Z⊗Z⊗Z"""
    label = label.strip().upper()
    if not label or any(ch not in PAULIS for ch in label):
        raise InvalidParameterError(f"无效的 Pauli 串: '{label}'", parameter="observable")
    return nx.kron_all(*(PAULIS[ch] for ch in label))


def parse_observable(text: str) -> np.ndarray:
    """Pauli 串，或含 {"re": ..., "im": ...} 的 JSON 矩阵文件"""
    if os.path.isfile(text):
        try:
            with open(text, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise FileOperationError(f"无法读取观测量文件: {e}", file_path=text, operation="read") from e
        return matrix_from_dict(data)
    return pauli_observable(text)


def hoeffding_shots(gamma: float, observable_norm: float, eps: float, delta: float) -> int:
    """ceil(2·γ²·‖O‖∞²·ln(2/δ)/ε²)"""
    return max(1, math.ceil(2 * gamma ** 2 * observable_norm ** 2 * math.log(2 / delta) / eps ** 2))


@dataclass
class SamplingPlan:
    channels: List[LinearMap] = field(repr=False)
    probs: np.ndarray
    signs: np.ndarray
    gamma: float
    observable: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)
    observable_norm: float
    shots: int
    eps: float
    delta: float
    seed: Optional[int] = None
    dropped_weight: float = 0.0

    def summary(self) -> dict:
        return {
            "gamma": self.gamma,
            "probs": self.probs.tolist(),
            "signs": self.signs.tolist(),
            "observable_norm": self.observable_norm,
            "shots": self.shots,
            "eps": self.eps,
            "delta": self.delta,
            "seed": self.seed,
            "channels": len(self.channels),
            "dropped_weight": self.dropped_weight,
        }


def _eps_delta_ok(result, observable, eps: Optional[float] = None, delta: Optional[float] = None,
                  *args, **kwargs) -> bool:
    return (eps is None or eps > 0) and (delta is None or 0 < delta < 1)


@validate_input(_eps_delta_ok, "采样精度要求 eps > 0 且 0 < delta < 1", parameter="eps/delta")
def make_plan(result: OverheadResult, observable, eps: Optional[float] = None,
              delta: Optional[float] = None, seed: Optional[int] = None,
              options: Optional[SamplingOptions] = None) -> SamplingPlan:
    """
    由采样开销的最优分解 c1·N1 − c2·N2 生成采样计划

    c_i ≤ channel_tol 的信道被舍弃，计划退化为单信道
    """
    options = options or SamplingOptions()
    eps = options.eps if eps is None else eps
    delta = options.delta if delta is None else delta
    seed = options.seed if seed is None else seed

    O = nx.as_square(observable, "observable")
    total = int(np.prod(result.dims))
    if O.shape[0] != total:
        raise DimensionError("观测量维度与态不一致", expected=total, actual=O.shape[0])
    eigenvalues, eigenvectors = nx.herm_eig(O)
    observable_norm = float(np.max(np.abs(eigenvalues)))

    d_B, d_out = result.d_B, result.d_out
    channels, probs, signs = [], [], []
    dropped = 0.0
    for J, c, sign in ((result.J1, result.c1, 1.0), (result.J2, result.c2, -1.0)):
        if c <= options.channel_tol:
            dropped += max(c, 0.0)
            continue
        channel = LinearMap.from_choi(J / c, d_B, d_out, label=f"N{'1' if sign > 0 else '2'}")
        channel.flags = check_flags(channel, herm_tol=options.channel_tol,
                                    psd_tol=options.channel_tol, tp_tol=options.channel_tol)
        if not (channel.flags.completely_positive and channel.flags.trace_preserving):
            raise SamplingError(f"归一化后的 {channel.label} 不是 CPTP 信道: {channel.flags}",
                                details=channel.flags.to_dict())
        channels.append(channel)
        probs.append(c)
        signs.append(sign)
    if not channels:
        raise SamplingError("分解中没有可用的信道", details={"c1": result.c1, "c2": result.c2})
    if dropped:
        logger.info(f"舍弃权重 {dropped:.3e} 的信道，计划退化为单信道")

    gamma = float(sum(probs))
    plan = SamplingPlan(
        channels=channels,
        probs=np.array(probs) / gamma,
        signs=np.array(signs),
        gamma=gamma,
        observable=O,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        observable_norm=observable_norm,
        shots=hoeffding_shots(gamma, observable_norm, eps, delta),
        eps=eps,
        delta=delta,
        seed=seed,
        dropped_weight=dropped,
    )
    logger.debug(f"采样计划: {plan.summary()}")
    return plan


@dataclass
class ShotRecords:
    shot_index: np.ndarray
    channel: np.ndarray
    eigenvalue: np.ndarray
    signed_contribution: np.ndarray

    def __len__(self) -> int:
        return int(self.shot_index.size)


@dataclass
class SamplingRun:
    estimate: float
    stderr: float
    shots: int
    batches: int
    records: Optional[ShotRecords] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr,
                "shots": self.shots, "batches": self.batches}


def born_probabilities(sigma: np.ndarray, eigenvectors: np.ndarray, born_tol: float) -> np.ndarray:
    """⟨v_k|σ|v_k⟩，超出 [−τ, 1+τ] 时报错，否则截断并重新归一"""
    probs = np.einsum('ik,ij,jk->k', eigenvectors.conj(), sigma, eigenvectors).real
    if probs.min() < -born_tol or probs.max() > 1 + born_tol:
        raise SamplingError(
            f"Born 概率越界: min={probs.min():.3e} max={probs.max():.3e} (τ={born_tol:g})",
            details={"min": float(probs.min()), "max": float(probs.max()), "born_tol": born_tol})
    if probs.min() < 0 or probs.max() > 1:
        logger.debug(f"Born 概率截断: min={probs.min():.3e} max={probs.max():.3e}")
    probs = np.clip(probs, 0.0, 1.0)
    return probs / probs.sum()


def batch_sizes(shots: int, batches: int) -> List[int]:
    """只依赖于 (shots, batches)，与线程数无关"""
    base, extra = divmod(shots, batches)
    return [base + (1 if k < extra else 0) for k in range(batches)]


def _sample_batch(seed_seq: np.random.SeedSequence, size: int, channel_cdf: np.ndarray,
                  outcome_cdfs: Sequence[np.ndarray], plan: SamplingPlan) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    last_outcome = plan.eigenvalues.size - 1
    channels = np.minimum(np.searchsorted(channel_cdf, rng.random(size), side="right"),
                          len(outcome_cdfs) - 1)
    u = rng.random(size)
    outcomes = np.empty(size, dtype=int)
    for i, cdf in enumerate(outcome_cdfs):
        mask = channels == i
        outcomes[mask] = np.searchsorted(cdf, u[mask], side="right")
    return channels, np.minimum(outcomes, last_outcome)


@log_execution_time("sampling_run")
def run(plan: SamplingPlan, rho_AB, record: bool = False, batches: Optional[int] = None,
        workers: Optional[int] = None, born_tol: float = 1e-8) -> SamplingRun:
    """
    执行 plan.shots 次采样

    第 k 批使用 SeedSequence(seed).spawn(batches)[k]，结果与 workers 无关
    """
    batches = int(batches or 1)
    workers = int(workers or 1)
    if batches < 1 or workers < 1:
        raise InvalidParameterError("batches 和 workers 必须 ≥ 1", parameter="batches")
    rho_AB = nx.as_square(rho_AB, "rho_AB")

    outcome_cdfs = []
    for channel in plan.channels:
        sigma = apply_map(channel, rho_AB)
        if sigma.shape != plan.observable.shape:
            raise DimensionError("恢复后的态与观测量维度不一致",
                                 expected=plan.observable.shape, actual=sigma.shape)
        outcome_cdfs.append(np.cumsum(born_probabilities(sigma, plan.eigenvectors, born_tol)))
    channel_cdf = np.cumsum(plan.probs)

    sizes = batch_sizes(plan.shots, batches)
    children = np.random.SeedSequence(plan.seed).spawn(batches)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        parts = list(executor.map(
            lambda args: _sample_batch(args[0], args[1], channel_cdf, outcome_cdfs, plan),
            zip(children, sizes)))

    channels = np.concatenate([c for c, _ in parts])
    outcomes = np.concatenate([o for _, o in parts])
    eigenvalues = plan.eigenvalues[outcomes]
    contributions = plan.gamma * plan.signs[channels] * eigenvalues

    n = contributions.size
    estimate = float(contributions.mean())
    stderr = float(contributions.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    records = None
    if record:
        records = ShotRecords(np.arange(n), channels + 1, eigenvalues, contributions)
    logger.info(f"采样完成: shots={n} estimate={estimate:.6g} stderr={stderr:.3g}")
    return SamplingRun(estimate, stderr, n, batches, records)


def exact_expectation(state, observable) -> float:
    """Re tr(O ρ)"""
    rho = state.rho if isinstance(state, TripartiteState) else nx.as_square(state, "rho")
    O = nx.as_square(observable, "observable")
    if O.shape != rho.shape:
        raise DimensionError("观测量维度与态不一致", expected=rho.shape, actual=O.shape)
    return float(np.trace(O @ rho).real)


def save_records_csv(records: ShotRecords, path: str) -> None:
    try:
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            writer.writerow(["shot_index", "channel", "eigenvalue", "signed_contribution"])
            for k, ch, lam, value in zip(records.shot_index, records.channel,
                                         records.eigenvalue, records.signed_contribution):
                writer.writerow([int(k), int(ch), format(float(lam), '.17g'), format(float(value), '.17g')])
    except OSError as e:
        raise FileOperationError(f"无法写入采样记录: {e}", file_path=path, operation="write") from e
