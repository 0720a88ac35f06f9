"""
自定义异常类和错误处理工具
"""
import functools
import traceback
from typing import Optional, Callable, Any
from datetime import datetime


class VqmcError(Exception):
    """VQMC工具包基础异常类"""

    def __init__(self, message: str, error_code: str = None, details: dict = None):
        self.message = message
        self.error_code = error_code or "UNKNOWN_ERROR"
        self.details = details or {}
        self.timestamp = datetime.now()
        super().__init__(self.message)

    def to_dict(self) -> dict:
        """转换为字典格式，用于命令行报告"""
        return {
            "error": True,
            "error_code": self.error_code,
            "message": self.message,
            "details": self.details,
            "timestamp": self.timestamp.isoformat()
        }


class DimensionError(VqmcError):
    """维度不匹配"""

    def __init__(self, message: str, expected=None, actual=None, details: dict = None):
        details = dict(details or {})
        if expected is not None:
            details.setdefault("expected", expected)
        if actual is not None:
            details.setdefault("actual", actual)
        super().__init__(message, "DIMENSION_ERROR", details)
        self.expected = expected
        self.actual = actual


class NonFiniteError(VqmcError):
    """矩阵含有 NaN 或 Inf"""

    def __init__(self, message: str, details: dict = None):
        super().__init__(message, "NON_FINITE_ERROR", details)


class NotHermitianError(VqmcError):
    """矩阵不是厄米的（超出容差）"""

    def __init__(self, message: str, deviation: float = None, tolerance: float = None,
                 details: dict = None):
        details = dict(details or {})
        details.update({"deviation": deviation, "tolerance": tolerance})
        super().__init__(message, "HERMITIAN_ERROR", details)
        self.deviation = deviation
        self.tolerance = tolerance


class NotPsdError(VqmcError):
    """矩阵存在超出容差的负本征值"""

    def __init__(self, message: str, min_eigenvalue: float = None, tolerance: float = None,
                 details: dict = None):
        details = dict(details or {})
        details.update({"min_eigenvalue": min_eigenvalue, "tolerance": tolerance})
        super().__init__(message, "PSD_ERROR", details)
        self.min_eigenvalue = min_eigenvalue
        self.tolerance = tolerance


class InvalidParameterError(VqmcError):
    """参数超出允许范围"""

    def __init__(self, message: str, parameter: str = None, details: dict = None):
        super().__init__(message, "PARAMETER_ERROR", details)
        self.parameter = parameter


class InvalidStateError(VqmcError):
    """密度矩阵不满足量子态条件"""

    def __init__(self, message: str, reason: str = None, details: dict = None):
        details = dict(details or {})
        if reason:
            details.setdefault("reason", reason)
        super().__init__(message, "STATE_ERROR", details)
        self.reason = reason


class NotRecoverableError(VqmcError):
    """态不是虚拟量子马尔可夫链，不存在 HPTP 恢复映射"""

    def __init__(self, message: str, verdict=None, solver_status: str = None,
                 details: dict = None):
        details = dict(details or {})
        if verdict is not None:
            details["verdict"] = verdict.to_dict()
        if solver_status is not None:
            details["solver_status"] = solver_status
        super().__init__(message, "NOT_RECOVERABLE", details)
        self.verdict = verdict
        self.solver_status = solver_status


class SolverError(VqmcError):
    """锥规划求解失败"""

    def __init__(self, message: str, status: str = None, details: dict = None):
        details = dict(details or {})
        if status is not None:
            details["status"] = status
        super().__init__(message, "SOLVER_ERROR", details)
        self.status = status


class BudgetExceededError(VqmcError):
    """问题规模超出求解预算"""

    def __init__(self, message: str, dimension: int = None, budget: int = None,
                 details: dict = None):
        details = dict(details or {})
        details.update({"dimension": dimension, "budget": budget})
        super().__init__(message, "BUDGET_ERROR", details)
        self.dimension = dimension
        self.budget = budget


class SamplingError(VqmcError):
    """准概率采样相关错误"""

    def __init__(self, message: str, details: dict = None):
        super().__init__(message, "SAMPLING_ERROR", details)


class ConfigurationError(VqmcError):
    """配置相关错误"""

    def __init__(self, message: str, config_key: str = None, details: dict = None):
        super().__init__(message, "CONFIG_ERROR", details)
        self.config_key = config_key


class FileOperationError(VqmcError):
    """文件操作相关错误"""

    def __init__(self, message: str, file_path: str = None, operation: str = None, details: dict = None):
        details = dict(details or {})
        details.update({"file_path": file_path, "operation": operation})
        super().__init__(message, "FILE_ERROR", details)
        self.file_path = file_path
        self.operation = operation


def safe_execute(operation_name: str = None,
                 default_return: Any = None,
                 reraise: bool = False,
                 logger=None):
    """
    安全执行装饰器，捕获异常并记录日志

    Args:
        operation_name: 操作名称，用于日志记录
        default_return: 发生异常时的默认返回值
        reraise: 是否重新抛出异常
        logger: 日志记录器
    """
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            op_name = operation_name or func.__name__

            try:
                return func(*args, **kwargs)
            except VqmcError as e:
                if logger:
                    logger.error(f"操作失败 [{op_name}]: {e.message}", extra={"error_details": e.details})
                else:
                    print(f"错误 [{op_name}]: {e.message}")

                if reraise:
                    raise
                return default_return
            except Exception as e:
                # 其他异常，包装为VqmcError
                error_msg = f"操作 '{op_name}' 执行时发生未预期的错误: {str(e)}"

                if logger:
                    logger.error(error_msg, exc_info=True)
                else:
                    print(f"错误: {error_msg}")
                    traceback.print_exc()

                if reraise:
                    raise VqmcError(error_msg, "UNEXPECTED_ERROR", {"original_error": str(e)}) from e
                return default_return

        return wrapper
    return decorator


def validate_input(validation_func: Callable, error_message: str = None, parameter: str = None):
    """
    输入验证装饰器

    Args:
        validation_func: 验证函数，接收函数参数并返回True/False
        error_message: 验证失败时的错误消息
        parameter: 出错参数名，写入异常
    """
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            if not validation_func(*args, **kwargs):
                msg = error_message or f"函数 '{func.__name__}' 的输入参数验证失败"
                raise InvalidParameterError(
                    msg, parameter=parameter,
                    details={"args": [repr(a) for a in args],
                             "kwargs": {k: repr(v) for k, v in kwargs.items()}})

            return func(*args, **kwargs)

        return wrapper
    return decorator


class ErrorHandler:
    """错误处理器，把异常整理成标准化的报告"""

    def __init__(self, logger=None, max_stored_errors: int = 50):
        self.logger = logger
        self.error_count = 0
        self.last_errors = []
        self.max_stored_errors = max_stored_errors

    def handle_error(self, error: Exception, context: Optional[str] = None) -> dict:
        """
        处理错误并返回标准化的错误字典

        Args:
            error: 异常对象
            context: 错误上下文信息（通常是子命令名）
        """
        self.error_count += 1

        if isinstance(error, VqmcError):
            error_info = error.to_dict()
        else:
            error_info = {
                "error": True,
                "error_code": "UNEXPECTED_ERROR",
                "message": str(error),
                "details": {"type": type(error).__name__},
                "timestamp": datetime.now().isoformat()
            }

        if context:
            error_info["context"] = context

        if self.logger:
            # 领域异常不打印堆栈
            self.logger.error(f"错误处理 - {context or '未知上下文'}: {error_info['message']}",
                              exc_info=not isinstance(error, VqmcError))

        self.last_errors.append(error_info)
        if len(self.last_errors) > self.max_stored_errors:
            self.last_errors.pop(0)

        return error_info

    def get_error_statistics(self) -> dict:
        """获取错误统计信息"""
        return {
            "total_errors": self.error_count,
            "recent_errors": len(self.last_errors),
            "last_error": self.last_errors[-1] if self.last_errors else None
        }

    def clear_error_history(self) -> None:
        """清除错误历史记录"""
        self.last_errors.clear()
