import logging
import os
import sys
import functools
from logging.handlers import RotatingFileHandler
from datetime import datetime
from typing import Optional

ROOT_LOGGER_NAME = 'vqmc'


class StderrHandler(logging.StreamHandler):
    """写入时取当前的 sys.stderr，stderr 被替换或关闭后仍然可用"""

    def __init__(self):
        super().__init__(sys.stderr)

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


class LoggerManager:
    """日志管理器，提供统一的日志配置和管理功能"""

    def __init__(self, config_manager=None, level: Optional[str] = None,
                 log_file: Optional[str] = None):
        self.config_manager = config_manager
        self.logger = None
        self._setup_logger(level, log_file)

    def _setup_logger(self, level_override: Optional[str], file_override: Optional[str]) -> None:
        """设置日志配置，命令行参数优先于配置文件"""
        if self.config_manager:
            log_level = self.config_manager.get('logging.level', 'INFO')
            log_file = self.config_manager.get('logging.file_path', './logs/vqmc.log')
            max_file_size = self.config_manager.get('logging.max_file_size', '10MB')
            backup_count = self.config_manager.get('logging.backup_count', 5)
        else:
            log_level = 'INFO'
            log_file = './logs/vqmc.log'
            max_file_size = '10MB'
            backup_count = 5
        log_level = level_override or log_level
        log_file = file_override or log_file

        level = getattr(logging, str(log_level).upper(), logging.INFO)

        self.logger = logging.getLogger(ROOT_LOGGER_NAME)
        self.logger.setLevel(level)
        self.logger.propagate = False

        for handler in self.logger.handlers[:]:
            self.logger.removeHandler(handler)
            handler.close()

        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

        # 结果走 stdout，日志走 stderr
        console_handler = StderrHandler()
        console_handler.setLevel(level)
        console_handler.setFormatter(formatter)
        self.logger.addHandler(console_handler)

        if not log_file:
            return
        try:
            log_dir = os.path.dirname(log_file)
            if log_dir and not os.path.exists(log_dir):
                os.makedirs(log_dir, exist_ok=True)
            size_bytes = self._parse_size(max_file_size)
            file_handler = RotatingFileHandler(
                log_file,
                maxBytes=size_bytes,
                backupCount=backup_count,
                encoding='utf-8'
            )
            file_handler.setLevel(level)
            file_handler.setFormatter(formatter)
            self.logger.addHandler(file_handler)
        except Exception as e:
            self.logger.error(f"无法创建文件日志处理器: {e}")

    @staticmethod
    def _parse_size(size_str) -> int:
        """解析文件大小字符串，如 '10MB' -> 字节数"""
        if isinstance(size_str, (int, float)):
            return int(size_str)
        size_str = size_str.upper().strip()

        if size_str.endswith('KB'):
            return int(float(size_str[:-2]) * 1024)
        elif size_str.endswith('MB'):
            return int(float(size_str[:-2]) * 1024 * 1024)
        elif size_str.endswith('GB'):
            return int(float(size_str[:-2]) * 1024 * 1024 * 1024)
        else:
            return int(size_str)

    def get_logger(self, name: Optional[str] = None) -> logging.Logger:
        """获取logger实例"""
        if name:
            return logging.getLogger(f'{ROOT_LOGGER_NAME}.{name}')
        return self.logger

    def log_verdict(self, label: str, verdict) -> None:
        """记录 VQMC 判定结果"""
        self.logger.info(
            f"判定 [{label}]: is_vqmc={verdict.is_vqmc} rank_B={verdict.rank_B} "
            f"rank_BC={verdict.rank_BC} gap={verdict.singular_gap:.3e}")

    def log_sweep_point(self, family: str, p: float, row: dict) -> None:
        """记录扫描中的单个参数点"""
        self.logger.info(f"扫描 [{family}] p={p:.6g}: {row}")


def log_execution_time(operation_name: str = None):
    """装饰器：记录函数执行时间"""
    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            start_time = datetime.now()
            name = operation_name or func.__name__
            log = logging.getLogger(f'{ROOT_LOGGER_NAME}.timing')
            try:
                result = func(*args, **kwargs)
                duration = (datetime.now() - start_time).total_seconds()
                log.info(f"执行完成 - {name}: {duration:.3f}秒")
                return result
            except Exception as e:
                duration = (datetime.now() - start_time).total_seconds()
                log.warning(f"执行失败 - {name}: {duration:.3f}秒, 错误: {str(e)}")
                raise
        return wrapper
    return decorator


# 全局日志管理器（由命令行入口初始化，库代码只取 logger）
logger_manager = None


def init_logger(config_manager=None, level: Optional[str] = None,
                log_file: Optional[str] = None) -> LoggerManager:
    """初始化全局日志管理器"""
    global logger_manager
    logger_manager = LoggerManager(config_manager, level=level, log_file=log_file)
    return logger_manager


def get_logger(name: str = None) -> logging.Logger:
    """获取logger实例的便捷函数"""
    if logger_manager:
        return logger_manager.get_logger(name)
    return logging.getLogger(f'{ROOT_LOGGER_NAME}.{name}' if name else ROOT_LOGGER_NAME)


def get_logger_manager() -> Optional[LoggerManager]:
    return logger_manager
