"""
tierdb
边缘到云的分层微数据库框架：列存储、EULA 共享策略、跨层复制、工作请求、应用框架与应用商店
"""
from .appstore import Catalog
from .config_manager import ConfigManager
from .errors import TierDBError
from .logger import logger
from .scenario import ScenarioRunner, run_scenario
from .snapshot import snapshot
from .topology import Topology

__all__ = [
    "Catalog",
    "ConfigManager",
    "ScenarioRunner",
    "Topology",
    "TierDBError",
    "logger",
    "run_scenario",
    "snapshot",
]

__version__ = "1.0.0"
