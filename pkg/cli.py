#!/usr/bin/env python3
"""
VQMC 命令行入口

子命令: check | overhead | approx | sweep | sample | recover
退出码: 0 成功（或判定为 VQMC），1 判定为否或 SDP 不可行，2 错误
"""
import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from analysis import cmi
from config_manager import ConfigManager, init_config
from exceptions import (
    ConfigurationError, ErrorHandler, FileOperationError, InvalidParameterError,
    NotRecoverableError, VqmcError, safe_execute,
)
from logger_manager import get_logger, get_logger_manager, init_logger
from markov import consistency_residual, block_system, is_vqmc
from recovery import build_virtual_recovery, check_flags, recovery_residual, save_map_file
from sampling import (
    SamplingOptions, exact_expectation, make_plan, parse_observable, run, save_records_csv,
)
from sdp import HPTP, CPTP, SdpOptions, approx_recoverability, sampling_overhead
from states import (
    TripartiteState, build_family, depolarize, ghz_state, ghz_w_mix, load_state_file,
    save_state_file, w_state,
)

logger = get_logger('cli')

EXIT_OK, EXIT_NEGATIVE, EXIT_ERROR = 0, 1, 2

CRITICAL_P = 7 - 3 * math.sqrt(5)
UNIT_GAMMA_TOL = 1e-6


@dataclass
class RunConfig:
    command: str
    family: Optional[str] = None
    params: Dict[str, object] = field(default_factory=dict)
    state_path: Optional[str] = None
    rank_tol: float = 1e-10
    herm_tol: float = 1e-10
    psd_tol: float = 1e-9
    trace_tol: float = 1e-10
    tp_tol: float = 1e-9
    qmc_tol: float = 1e-8
    gap_warning: float = 1e3
    borderline_ratio: float = 1e-4
    sweep_family: Optional[str] = None
    grid: Optional[Tuple[float, float, int]] = None
    include_critical: bool = True
    out: Optional[str] = None
    fmt: str = "json"
    mode: str = HPTP
    observable: str = "ZZZ"
    records: Optional[str] = None
    save_state: Optional[str] = None
    with_overhead: bool = False
    workers: int = 1
    sdp: SdpOptions = field(default_factory=SdpOptions)
    sampling: SamplingOptions = field(default_factory=SamplingOptions)

    @classmethod
    def from_args(cls, args: argparse.Namespace, config_manager: ConfigManager) -> "RunConfig":
        get = config_manager.get
        sdp_options = SdpOptions.from_config(config_manager)
        sampling_options = SamplingOptions.from_config(config_manager)
        rank_tol = args.tol if args.tol is not None else float(get('numerics.rank_tol', 1e-10))
        sdp_options.rank_tol = rank_tol

        for name in ("eps", "delta", "batches", "seed"):
            value = getattr(args, name, None)
            if value is not None:
                setattr(sampling_options, name, value)
        workers = getattr(args, "workers", None)
        if workers is not None:
            sampling_options.workers = workers

        params = parse_params(args.param or [])
        if args.p is not None:
            params["p"] = args.p

        config = cls(
            command=args.command,
            family=args.family,
            params=params,
            state_path=args.state,
            rank_tol=rank_tol,
            herm_tol=float(get('numerics.herm_tol', 1e-10)),
            psd_tol=float(get('numerics.psd_tol', 1e-9)),
            trace_tol=float(get('states.trace_tol', 1e-10)),
            tp_tol=float(get('recovery.tp_tol', 1e-9)),
            qmc_tol=float(get('markov.qmc_tol', 1e-8)),
            gap_warning=float(get('markov.gap_warning', 1e3)),
            borderline_ratio=float(get('markov.borderline_ratio', 1e-4)),
            sweep_family=getattr(args, "name", None),
            grid=parse_grid(args.grid) if getattr(args, "grid", None) else None,
            include_critical=bool(get('sweep.include_critical', True)),
            out=args.out,
            fmt=args.format,
            mode=getattr(args, "mode", HPTP) or HPTP,
            observable=getattr(args, "observable", "ZZZ") or "ZZZ",
            records=getattr(args, "records", None),
            save_state=getattr(args, "save_state", None),
            with_overhead=bool(getattr(args, "overhead", False)),
            workers=workers if workers is not None else int(get('sweep.workers', 1)),
            sdp=sdp_options,
            sampling=sampling_options,
        )
        config.validate()
        return config

    def validate(self) -> None:
        for name in ("rank_tol", "herm_tol", "psd_tol", "trace_tol", "tp_tol", "qmc_tol", "borderline_ratio"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"容差必须为正数: {name}={getattr(self, name)}", parameter=name)
        if self.grid is not None and self.grid[2] < 2:
            raise InvalidParameterError(f"扫描网格至少需要 2 个点: {self.grid[2]}", parameter="grid")
        if self.fmt not in ("csv", "json"):
            raise InvalidParameterError(f"未知的输出格式: {self.fmt}", parameter="format")
        if self.workers < 1:
            raise InvalidParameterError("workers 必须 ≥ 1", parameter="workers")


def parse_params(items: List[str]) -> Dict[str, object]:
    """['p=0.3', 'blocks=1x1:0.5;1x1:0.5'] -> {'p': 0.3, 'blocks': '1x1:0.5;1x1:0.5'}"""
    params = {}
    for item in items:
        if "=" not in item:
            raise InvalidParameterError(f"参数应为 key=value 形式: '{item}'", parameter="param")
        key, value = item.split("=", 1)
        try:
            params[key.strip()] = float(value)
        except ValueError:
            params[key.strip()] = value.strip()
    return params


def parse_grid(text: str) -> Tuple[float, float, int]:
    """'0:1:21' -> (0.0, 1.0, 21)"""
    try:
        start, stop, points = text.split(":")
        return float(start), float(stop), int(points)
    except ValueError as e:
        raise InvalidParameterError(f"无法解析网格 '{text}'，应为 START:STOP:N", parameter="grid") from e


def resolve_state(config: RunConfig) -> TripartiteState:
    if config.state_path:
        return load_state_file(config.state_path, herm_tol=config.herm_tol,
                               psd_tol=config.psd_tol, trace_tol=config.trace_tol)
    if config.family:
        return build_family(config.family, config.params)
    raise InvalidParameterError("需要 --family 或 --state 指定输入态", parameter="family")


def format_value(value) -> object:
    """非有限值写成字符串，浮点数保留 17 位有效数字"""
    if isinstance(value, (float, np.floating)):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return float(format(float(value), '.17g'))
    if isinstance(value, dict):
        return {k: format_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [format_value(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return format(value, '.17g')
    return str(value)


def render(report, fmt: str) -> str:
    report = format_value(report)
    if fmt == "json" or not isinstance(report, list):
        return json.dumps(report, indent=2, ensure_ascii=False)
    buffer = io.StringIO()
    columns = list(report[0].keys()) if report else []
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in report:
        writer.writerow([_csv_cell(row.get(column, "")) for column in columns])
    return buffer.getvalue()


def emit(report, config: RunConfig) -> None:
    text = render(report, config.fmt)
    # recover 的 --out 是映射文件，报告仍写到 stdout
    if config.out and config.command != "recover":
        try:
            with open(config.out, 'w', encoding='utf-8') as f:
                f.write(text if text.endswith("\n") else text + "\n")
        except OSError as e:
            raise FileOperationError(f"无法写入输出文件: {e}", file_path=config.out, operation="write") from e
        logger.info(f"结果已写入 {config.out}")
        return
    print(text)


# ---------------------------------------------------------------------------
# 子命令
# ---------------------------------------------------------------------------

def cmd_check(config: RunConfig) -> Tuple[dict, int]:
    state = resolve_state(config)
    verdict = is_vqmc(state, config.rank_tol)
    log_manager = get_logger_manager()
    if log_manager:
        log_manager.log_verdict(state.label, verdict)
    if verdict.singular_gap < config.gap_warning:
        logger.warning(f"奇异值间隙 {verdict.singular_gap:.3e} 低于 {config.gap_warning:g}，判定对 --tol 敏感")
    if verdict.min_singular_ratio < config.borderline_ratio:
        logger.warning(f"最小保留奇异值比 {verdict.min_singular_ratio:.3e} 低于 {config.borderline_ratio:g}，"
                       f"态接近秩变化的边界，判定对 --tol 敏感")
    entropies = cmi(state)
    if config.save_state:
        save_state_file(state, config.save_state)
    report = {
        "state": state.label,
        "dims": state.dim_list,
        "verdict": verdict.to_dict(),
        "is_qmc": entropies.cmi <= config.qmc_tol,
        "cmi": entropies.cmi,
        "entropies": entropies.to_dict(),
        "consistency_residual": consistency_residual(block_system(state)),
    }
    return report, EXIT_OK if verdict.is_vqmc else EXIT_NEGATIVE


def _infeasible_report(state: TripartiteState, error: NotRecoverableError) -> dict:
    return {
        "state": state.label,
        "status": "infeasible",
        "gamma": math.inf,
        "message": f"not a VQMC: {error.message}",
        "details": error.details,
    }


def cmd_overhead(config: RunConfig) -> Tuple[dict, int]:
    state = resolve_state(config)
    try:
        result = sampling_overhead(state, config.sdp)
    except NotRecoverableError as e:
        return _infeasible_report(state, e), EXIT_NEGATIVE
    report = {"state": state.label, **result.to_dict(include_matrices=config.out is not None)}
    return report, EXIT_OK


def cmd_approx(config: RunConfig) -> Tuple[dict, int]:
    state = resolve_state(config)
    result = approx_recoverability(state, config.mode, config.sdp)
    report = {"state": state.label, **result.to_dict()}
    if result.J is not None and result.J.flags is not None:
        report["flags"] = result.J.flags.to_dict()
    return report, EXIT_OK


def cmd_recover(config: RunConfig) -> Tuple[dict, int]:
    state = resolve_state(config)
    try:
        linear_map = build_virtual_recovery(state, config.rank_tol)
    except NotRecoverableError as e:
        return {"state": state.label, "status": "not_recoverable", "message": e.message,
                "details": e.details}, EXIT_NEGATIVE
    linear_map.flags = check_flags(linear_map, config.herm_tol, config.psd_tol, config.tp_tol)
    report = {
        "state": state.label,
        "residual": recovery_residual(linear_map, state),
        "flags": linear_map.flags.to_dict(),
    }
    if config.out:
        save_map_file(linear_map, config.out)
        report["map_file"] = config.out
    if config.with_overhead:
        try:
            result = sampling_overhead(state, config.sdp)
            report["gamma"] = result.gamma
            report["cptp_recoverable"] = result.gamma <= 1 + UNIT_GAMMA_TOL
        except NotRecoverableError as e:
            report["gamma"] = math.inf
            report["overhead_note"] = e.message
    return report, EXIT_OK


def cmd_sample(config: RunConfig) -> Tuple[dict, int]:
    state = resolve_state(config)
    try:
        result = sampling_overhead(state, config.sdp)
    except NotRecoverableError as e:
        return _infeasible_report(state, e), EXIT_NEGATIVE

    observable = parse_observable(config.observable)
    options = config.sampling
    plan = make_plan(result, observable, options.eps, options.delta, options.seed, options=options)
    sampled = run(plan, state.rho_AB, record=config.records is not None,
                  batches=options.batches, workers=options.workers, born_tol=options.born_tol)
    exact = exact_expectation(state, observable)
    if config.records:
        save_records_csv(sampled.records, config.records)
    report = {
        "state": state.label,
        "observable": config.observable,
        "plan": plan.summary(),
        **sampled.to_dict(),
        "exact": exact,
        "abs_error": abs(sampled.estimate - exact),
        "note": "Hoeffding 样本数按 ‖O‖∞ 缩放观测结果",
    }
    return report, EXIT_OK


# ---------------------------------------------------------------------------
# 扫描
# ---------------------------------------------------------------------------

def _overhead_row(state: TripartiteState, p: float, options: SdpOptions) -> dict:
    try:
        result = sampling_overhead(state, options)
    except NotRecoverableError:
        return {"p": p, "gamma": math.inf, "nu": math.inf, "status": "infeasible"}
    return {"p": p, "gamma": result.gamma, "nu": result.nu, "status": result.status}


def _w_depolarized(p: float, options: SdpOptions) -> dict:
    return _overhead_row(depolarize(w_state(), p), p, options)


def _gw_mix(p: float, options: SdpOptions) -> dict:
    return _overhead_row(ghz_w_mix(p), p, options)


def _ghz_depolarized_eps(p: float, options: SdpOptions) -> dict:
    state = depolarize(ghz_state(), p)
    hptp = approx_recoverability(state, HPTP, options)
    cptp = approx_recoverability(state, CPTP, options)
    status = hptp.status if hptp.status == cptp.status else f"{hptp.status}/{cptp.status}"
    return {"p": p, "eps_hptp": hptp.eps_report, "eps_cptp": cptp.eps_report, "status": status}


SWEEPS: Dict[str, Tuple[Callable[[float, SdpOptions], dict], Tuple[str, ...]]] = {
    "w_depolarized_overhead": (_w_depolarized, ("p", "gamma", "nu", "status")),
    "gw_mix_overhead": (_gw_mix, ("p", "gamma", "nu", "status")),
    "ghz_depolarized_eps": (_ghz_depolarized_eps, ("p", "eps_hptp", "eps_cptp", "status")),
}


def sweep_grid(config: RunConfig) -> List[float]:
    start, stop, points = config.grid or (0.0, 1.0, 21)
    grid = [float(p) for p in np.linspace(start, stop, points)]
    low, high = min(start, stop), max(start, stop)
    if config.sweep_family == "gw_mix_overhead" and config.include_critical and low <= CRITICAL_P <= high:
        if not any(abs(p - CRITICAL_P) < 1e-15 for p in grid):
            grid.append(CRITICAL_P)
    return sorted(grid)


def cmd_sweep(config: RunConfig) -> Tuple[list, int]:
    if config.sweep_family not in SWEEPS:
        raise InvalidParameterError(f"未知的扫描族: {config.sweep_family}", parameter="sweep",
                                    details={"known": sorted(SWEEPS)})
    point_func, columns = SWEEPS[config.sweep_family]
    grid = sweep_grid(config)

    def evaluate(p: float) -> dict:
        guarded = safe_execute(f"sweep[{config.sweep_family}] p={p:.6g}", default_return=None,
                               logger=logger)(point_func)
        row = guarded(p, config.sdp)
        if row is None:
            row = {column: math.nan for column in columns}
            row.update({"p": p, "status": "error"})
        log_manager = get_logger_manager()
        if log_manager:
            log_manager.log_sweep_point(config.sweep_family, p, row)
        return row

    with ThreadPoolExecutor(max_workers=config.workers) as executor:
        rows = list(executor.map(evaluate, grid))
    return [{column: row.get(column) for column in columns} for row in rows], EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig], Tuple[object, int]]] = {
    "check": cmd_check,
    "overhead": cmd_overhead,
    "approx": cmd_approx,
    "sweep": cmd_sweep,
    "sample": cmd_sample,
    "recover": cmd_recover,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--family", help="命名态族，例如 w, ghz, gw, random_qmc")
    common.add_argument("--param", action="append", metavar="K=V", help="态族参数，可重复")
    common.add_argument("--p", type=float, help="--param p=X 的简写")
    common.add_argument("--state", metavar="FILE", help="态文件 (JSON)")
    common.add_argument("--tol", type=float, help="秩判定容差 rank_tol")
    common.add_argument("--out", metavar="FILE", help="输出文件")
    common.add_argument("--format", choices=("csv", "json"), default="json")
    common.add_argument("--seed", type=int)
    common.add_argument("--config", metavar="FILE", help="配置文件")
    common.add_argument("--log-level", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    common.add_argument("--log-file", metavar="FILE")

    parser = argparse.ArgumentParser(prog="vqmc", description="虚拟量子马尔可夫链工具")
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", parents=[common], help="VQMC 判定")
    check.add_argument("--save-state", metavar="FILE")

    sub.add_parser("overhead", parents=[common], help="最优采样开销")

    approx = sub.add_parser("approx", parents=[common], help="近似可恢复性")
    approx.add_argument("--mode", choices=(HPTP, CPTP), default=HPTP)

    sweep = sub.add_parser("sweep", parents=[common], help="参数扫描")
    sweep.add_argument("name", choices=sorted(SWEEPS))
    sweep.add_argument("--grid", metavar="START:STOP:N")
    sweep.add_argument("--workers", type=int)

    sample = sub.add_parser("sample", parents=[common], help="准概率采样")
    sample.add_argument("--observable", default="ZZZ", help="Pauli 串或矩阵文件")
    sample.add_argument("--eps", type=float)
    sample.add_argument("--delta", type=float)
    sample.add_argument("--batches", type=int)
    sample.add_argument("--workers", type=int)
    sample.add_argument("--records", metavar="FILE", help="逐次采样记录 (CSV)")

    recover = sub.add_parser("recover", parents=[common], help="构造虚拟恢复映射")
    recover.add_argument("--overhead", action="store_true", help="同时求解采样开销，给出 CPTP 可恢复性")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    config_manager = init_config(args.config)
    init_logger(config_manager, level=args.log_level, log_file=args.log_file)
    error_handler = ErrorHandler(get_logger('cli'))

    try:
        if args.config and not config_manager.validate_config():
            raise ConfigurationError(f"配置文件无效: {args.config}", config_key="config")
        config = RunConfig.from_args(args, config_manager)
        report, code = COMMANDS[config.command](config)
        emit(report, config)
        return code
    except VqmcError as e:
        error_handler.handle_error(e, args.command)
        print(json.dumps(format_value(e.to_dict()), ensure_ascii=False), file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        error_handler.handle_error(e, args.command)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
