import copy
import logging
import os
from typing import Dict, Any, Optional

import yaml

from .errors import ConfigError
from .interfaces import ConfigManagerInterface

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = os.path.join(
    os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))),
    "config.yaml",
)


def deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """递归合并字典，返回新字典"""
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class ConfigManager(ConfigManagerInterface):
    """配置管理器类"""

    def __init__(self, config_path: Optional[str] = DEFAULT_CONFIG_PATH):
        """初始化配置管理器"""
        self.config_path = config_path
        self.config = self.load_config(config_path) if config_path else {}

    def load_config(self, file_path: str) -> Dict[str, Any]:
        """加载配置文件（YAML，JSON 作为子集同样可读）"""
        try:
            with open(file_path, "r", encoding="utf-8") as f:
                config = yaml.safe_load(f)
        except OSError as e:
            logger.warning("Error loading config %s: %s", file_path, e)
            return {}
        except yaml.YAMLError as e:
            raise ConfigError(f"malformed config {file_path}: {e}") from e
        if config is None:
            return {}
        if not isinstance(config, dict):
            raise ConfigError(f"config {file_path} must be a mapping")
        return config

    def load_overrides(self, file_path: str) -> None:
        """合并用户指定的配置文件（文件必须存在）"""
        if not os.path.isfile(file_path):
            raise ConfigError(f"config file not found: {file_path}")
        self.merge(self.load_config(file_path))

    def save_config(self, config: Dict[str, Any], file_path: str) -> None:
        """保存配置文件"""
        with open(file_path, "w", encoding="utf-8") as f:
            yaml.safe_dump(config, f, default_flow_style=False, allow_unicode=True, sort_keys=True)

    def get_config(self, section: Optional[str] = None) -> Dict[str, Any]:
        """获取配置"""
        if section is None:
            return self.config
        return self.config.get(section, {}) or {}

    def set_config(self, section: str, key: str, value: Any) -> None:
        """设置配置"""
        if section not in self.config:
            self.config[section] = {}
        self.config[section][key] = value

    def merge(self, overrides: Dict[str, Any]) -> None:
        """合并覆盖项"""
        self.config = deep_merge(self.config, overrides)

    def get(self, path: str, default: Any = None) -> Any:
        """获取配置值（支持点号路径）"""
        keys = path.split(".")
        value = self.config
        for key in keys:
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default
        return value

    def set(self, path: str, value: Any) -> None:
        """设置配置值（支持点号路径）"""
        keys = path.split(".")
        config = self.config
        for key in keys[:-1]:
            if not isinstance(config.get(key), dict):
                config[key] = {}
            config = config[key]
        config[keys[-1]] = value
