"""
配置管理模块
运行时参数、应用商店发布者白名单、日志级别；支持热重载、线程安全的配置读写
"""
import copy
import json
import os
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional

from watchdog.events import FileSystemEventHandler
from watchdog.observers import Observer

from .logger import logger, set_level

DEFAULT_CONFIG: Dict[str, Any] = {
    "runtime": {
        "pump_budget": 1000,
        "max_pumps_per_cycle": 32,
        "work_expiry_cycles": 20,
        "handler_failure_threshold": 0,
        "parallel_sync": False,
        "sync_batch_size": 64,
    },
    "appstore": {
        "publishers": [],
        "require_review": True,
    },
    "logging": {
        "level": "INFO",
    },
}


class ConfigReloadHandler(FileSystemEventHandler):
    """配置文件变更处理器"""

    def __init__(self, config_manager):
        self.config_manager = config_manager

    def on_modified(self, event):
        if not event.is_directory and Path(event.src_path) == self.config_manager.config_path:
            self.config_manager.reload_config()


class ConfigManager:
    """配置管理器"""

    def __init__(self, config_path: Optional[str] = None, watch: bool = False):
        """
        Args:
            config_path: 配置文件路径；None 时读取 TIERDB_CONFIG 环境变量，仍为空则只用默认值
            watch: 是否监控文件变更并热重载
        """
        config_path = config_path or os.environ.get("TIERDB_CONFIG")
        self.config_path = Path(config_path).resolve() if config_path else None
        self._config: Dict[str, Any] = copy.deepcopy(DEFAULT_CONFIG)
        self._lock = threading.RLock()
        self._observer: Optional[Any] = None

        if self.config_path is not None:
            # 确保配置文件存在
            self.config_path.parent.mkdir(parents=True, exist_ok=True)
            if not self.config_path.exists():
                self._save_config(DEFAULT_CONFIG)
            self.reload_config()
            if watch:
                self.start_watching()

    def _load_config(self) -> Dict[str, Any]:
        """从文件加载配置，缺失的键用默认值补齐"""
        try:
            with open(self.config_path, "r", encoding="utf-8") as f:
                loaded = json.load(f)
        except (FileNotFoundError, json.JSONDecodeError) as e:
            logger.warning(f"配置文件读取失败，使用默认配置: {e}")
            return copy.deepcopy(DEFAULT_CONFIG)
        merged = copy.deepcopy(DEFAULT_CONFIG)
        for section, values in loaded.items():
            if isinstance(values, dict):
                merged.setdefault(section, {}).update(values)
        return merged

    def _save_config(self, config: Dict[str, Any]):
        """保存配置到文件"""
        with open(self.config_path, "w", encoding="utf-8") as f:
            json.dump(config, f, ensure_ascii=False, indent=2)

    def reload_config(self):
        """重新加载配置文件"""
        with self._lock:
            self._config = self._load_config()
            level = os.environ.get("TIERDB_LOG_LEVEL") or self._config["logging"].get("level", "INFO")
        set_level(level)
        logger.info(f"配置已加载: {self.config_path}")

    def start_watching(self):
        """启动配置文件监控"""
        if self._observer is None and self.config_path is not None:
            self._observer = Observer()
            self._observer.schedule(ConfigReloadHandler(self), str(self.config_path.parent), recursive=False)
            self._observer.start()

    def stop_watching(self):
        """停止配置文件监控"""
        if self._observer:
            self._observer.stop()
            self._observer.join()
            self._observer = None

    def get_config(self) -> Dict[str, Any]:
        """获取完整配置（线程安全）"""
        with self._lock:
            return copy.deepcopy(self._config)

    def get_runtime(self, name: str) -> Any:
        """读取 runtime 段的参数"""
        with self._lock:
            runtime = self._config.get("runtime", {})
            if name in runtime:
                return runtime[name]
            return DEFAULT_CONFIG["runtime"][name]

    def set_runtime(self, name: str, value: Any):
        """
        只在内存中覆盖 runtime 参数，不写回文件

        Raises:
            KeyError: 未知的参数名
        """
        if name not in DEFAULT_CONFIG["runtime"]:
            raise KeyError(f"未知的运行时参数: {name}")
        with self._lock:
            self._config.setdefault("runtime", {})[name] = value

    def get_publishers(self) -> List[str]:
        with self._lock:
            return list(self._config.get("appstore", {}).get("publishers", []))

    def is_publisher_allowed(self, publisher: str) -> bool:
        """
        发布者审核：白名单为空时允许任何发布者

        Args:
            publisher: 发布者主体ID
        """
        with self._lock:
            appstore = self._config.get("appstore", {})
            if not appstore.get("require_review", True):
                return True
            allowed = appstore.get("publishers", [])
            return not allowed or publisher in allowed

    def update_section(self, section: str, **kwargs):
        """更新配置段；有文件时写回"""
        with self._lock:
            self._config.setdefault(section, {}).update(kwargs)
            if self.config_path is not None:
                self._save_config(self._config)

    def __del__(self):
        """析构函数，停止监控"""
        try:
            self.stop_watching()
        except Exception:
            pass
