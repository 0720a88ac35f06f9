"""
熵与保真度诊断：条件互信息、Fawzi–Renner 不等式检查
"""
import math
from dataclasses import dataclass, asdict

import numpy as np

import numerics as nx
from exceptions import DimensionError, NotPsdError
from logger_manager import get_logger
from recovery import apply_map, petz_map
from states import TripartiteState, validate_density

logger = get_logger('analysis')

ENTROPY_CUTOFF = 1e-12
FR_SLACK = 1e-8


@dataclass
class EntropyReport:
    """各约化态的冯·诺依曼熵（比特）与 I(A:C|B)"""
    S_A: float
    S_B: float
    S_AB: float
    S_BC: float
    S_ABC: float
    cmi: float

    def to_dict(self) -> dict:
        return asdict(self)


def von_neumann_entropy(rho, psd_tol: float = nx.PSD_TOL) -> float:
    """−Σ λ log₂ λ，λ < 1e-12 不计入"""
    eigenvalues, _ = nx.herm_eig(rho)
    if eigenvalues.size and eigenvalues[0] < -psd_tol:
        raise NotPsdError(f"熵的输入有负本征值 {eigenvalues[0]:.3e}",
                          min_eigenvalue=float(eigenvalues[0]), tolerance=psd_tol)
    kept = eigenvalues[eigenvalues > ENTROPY_CUTOFF]
    return float(-np.sum(kept * np.log2(kept)))


def cmi(state: TripartiteState) -> EntropyReport:
    S_A = von_neumann_entropy(state.marginal("A"))
    S_B = von_neumann_entropy(state.rho_B)
    S_AB = von_neumann_entropy(state.rho_AB)
    S_BC = von_neumann_entropy(state.rho_BC)
    S_ABC = von_neumann_entropy(state.rho)
    return EntropyReport(S_A, S_B, S_AB, S_BC, S_ABC, S_AB + S_BC - S_B - S_ABC)


def fidelity(rho, sigma, subnormalized: bool = False) -> float:
    """
    (tr √(√ρ σ √ρ))² = ‖√ρ √σ‖₁²

    两个输入都必须是密度矩阵；subnormalized=True 时允许迹小于 1
    """
    rho = validate_density(rho, label="rho", subnormalized=subnormalized)
    sigma = validate_density(sigma, label="sigma", subnormalized=subnormalized)
    if rho.shape != sigma.shape:
        raise DimensionError("保真度的两个输入形状不同", expected=rho.shape, actual=sigma.shape)
    return nx.trace_norm(nx.psd_sqrt(rho) @ nx.psd_sqrt(sigma)) ** 2


@dataclass
class FawziRennerReport:
    lhs: float
    rhs: float
    holds: bool
    fidelity: float

    def to_dict(self) -> dict:
        return asdict(self)


def fawzi_renner_check(state: TripartiteState) -> FawziRennerReport:
    """
    I(A:C|B) ≥ −log₂ F(ρ_ABC, (id_A ⊗ P)(ρ_AB))，P 取普通 Petz 映射

    不等式只保证存在某个恢复信道，这里的失败只记日志
    """
    d_B, d_C = state.dims.d_B, state.dims.d_C
    petz = petz_map(state.rho_BC, d_B, d_C)
    recovered = apply_map(petz, state.rho_AB)
    # Petz 映射只在 ρ_B 的支撑上保迹，输出可能亚归一
    trace = float(np.trace(recovered).real)
    if abs(trace - 1.0) > 1e-9:
        logger.debug(f"Petz 恢复结果的迹为 {trace:.12g}")

    F = min(max(fidelity(state.rho, nx.hermitian_part(recovered), subnormalized=True), 0.0), 1.0)
    lhs = cmi(state).cmi
    rhs = math.inf if F == 0 else -math.log2(F)
    holds = lhs >= rhs - FR_SLACK
    if not holds:
        logger.warning(f"Fawzi–Renner 检查未通过 [{state.label}]: I={lhs:.6g} < −log F={rhs:.6g}")
    return FawziRennerReport(lhs=lhs, rhs=rhs, holds=holds, fidelity=F)
