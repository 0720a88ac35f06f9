import copy
import json
import logging
import os
import shutil
import time
from typing import Dict, Any, Optional

logger = logging.getLogger('vqmc.config')

KNOWN_SOLVERS = ("CLARABEL", "SCS")


class ConfigManager:
    """配置管理器，负责加载、验证和更新配置"""

    def __init__(self, config_path: Optional[str] = "config.json"):
        self.config_path = config_path
        self.config: Dict[str, Any] = {}
        self.default_config = self._get_default_config()
        self.load_config()

    def _get_default_config(self) -> Dict[str, Any]:
        """获取默认配置"""
        return {
            "numerics": {
                "herm_tol": 1e-10,
                "psd_tol": 1e-9,
                "rank_tol": 1e-10
            },
            "states": {
                "trace_tol": 1e-10
            },
            "markov": {
                "qmc_tol": 1e-8,
                "gap_warning": 1e3,
                "borderline_ratio": 1e-4
            },
            "recovery": {
                "tp_tol": 1e-9
            },
            "sdp": {
                "solver": "CLARABEL",
                "fallback_solver": "SCS",
                "gap_tol": 1e-7,
                "feas_tol": 1e-7,
                "solver_tol": 1e-9,
                "max_iter": 50000,
                "divergence": 1e6,
                "max_joint_dim": 64,
                "verbose": False
            },
            "sampling": {
                "eps": 0.05,
                "delta": 0.01,
                "born_tol": 1e-8,
                "channel_tol": 1e-5,
                "batches": 1,
                "workers": 1,
                "seed": 0
            },
            "sweep": {
                "workers": 1,
                "include_critical": True
            },
            "paths": {
                "config_backup_path": "./config_backup"
            },
            "logging": {
                "level": "INFO",
                "file_path": "./logs/vqmc.log",
                "max_file_size": "10MB",
                "backup_count": 5
            }
        }

    def load_config(self) -> None:
        """加载配置文件；文件不存在时使用默认配置"""
        if not self.config_path or not os.path.exists(self.config_path):
            if self.config_path:
                logger.warning(f"配置文件不存在，使用默认配置: {self.config_path}")
            self.config = copy.deepcopy(self.default_config)
            return
        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                self.config = json.load(f)
            self._merge_with_defaults()
            logger.info(f"配置文件已加载: {self.config_path}")
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"加载配置文件失败: {e}")
            self.config = copy.deepcopy(self.default_config)

    def _merge_with_defaults(self) -> None:
        """将加载的配置与默认配置合并，确保所有必需的键都存在"""
        def merge_dict(base: dict, overlay: dict) -> dict:
            for key, value in base.items():
                if key not in overlay:
                    overlay[key] = copy.deepcopy(value)
                elif isinstance(value, dict) and isinstance(overlay[key], dict):
                    merge_dict(value, overlay[key])
            return overlay

        self.config = merge_dict(self.default_config, self.config)

    def save_config(self) -> None:
        """保存配置到文件"""
        try:
            if os.path.exists(self.config_path):
                backup_dir = self.get('paths.config_backup_path', './config_backup')
                os.makedirs(backup_dir, exist_ok=True)
                shutil.copy2(self.config_path,
                             os.path.join(backup_dir, f"config_backup_{int(time.time())}.json"))

            with open(self.config_path, 'w', encoding='utf-8') as f:
                json.dump(self.config, f, indent=2, ensure_ascii=False)
            logger.info(f"配置已保存: {self.config_path}")
        except OSError as e:
            logger.error(f"保存配置文件失败: {e}")

    def get(self, key_path: str, default: Any = None) -> Any:
        """
        使用点号分隔的路径获取配置值
        例如: get('sdp.gap_tol') 或 get('numerics.rank_tol')
        """
        keys = key_path.split('.')
        value = self.config

        try:
            for key in keys:
                value = value[key]
            return value
        except (KeyError, TypeError):
            return default

    def set(self, key_path: str, value: Any) -> None:
        """
        使用点号分隔的路径设置配置值
        例如: set('sampling.seed', 7)
        """
        keys = key_path.split('.')
        config_ref = self.config

        for key in keys[:-1]:
            if key not in config_ref:
                config_ref[key] = {}
            config_ref = config_ref[key]

        config_ref[keys[-1]] = value

    def validate_config(self) -> bool:
        """验证配置的有效性"""
        positive_keys = [
            'numerics.herm_tol', 'numerics.psd_tol', 'numerics.rank_tol',
            'states.trace_tol', 'markov.qmc_tol', 'markov.borderline_ratio', 'recovery.tp_tol',
            'sdp.gap_tol', 'sdp.feas_tol', 'sdp.solver_tol', 'sdp.divergence',
            'sampling.born_tol', 'sampling.channel_tol',
            'sampling.eps',
        ]
        try:
            for key in positive_keys:
                value = self.get(key)
                if value is None or not float(value) > 0:
                    logger.error(f"容差必须为正数: {key}={value}")
                    return False

            delta = float(self.get('sampling.delta'))
            if not 0 < delta < 1:
                logger.error(f"sampling.delta 必须在 (0, 1) 内: {delta}")
                return False

            for key in ('sdp.max_iter', 'sdp.max_joint_dim', 'sampling.batches',
                        'sampling.workers', 'sweep.workers'):
                if int(self.get(key)) < 1:
                    logger.error(f"配置项必须 ≥ 1: {key}={self.get(key)}")
                    return False

            for key in ('sdp.solver', 'sdp.fallback_solver'):
                name = self.get(key)
                if name and str(name).upper() not in KNOWN_SOLVERS:
                    logger.error(f"未知的求解器: {key}={name}")
                    return False

            return True
        except (TypeError, ValueError) as e:
            logger.error(f"配置验证失败: {e}")
            return False


# 全局配置管理器（首次使用时创建，避免导入即读文件）
config_manager: Optional[ConfigManager] = None


def init_config(config_path: Optional[str] = "config.json") -> ConfigManager:
    """初始化全局配置管理器"""
    global config_manager
    config_manager = ConfigManager(config_path)
    return config_manager


def get_config_manager() -> ConfigManager:
    """获取全局配置管理器，未初始化时只用默认配置"""
    global config_manager
    if config_manager is None:
        config_manager = ConfigManager(None)
    return config_manager
