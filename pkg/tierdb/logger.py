"""
共享日志对象
全包统一 `from .logger import logger`
"""
import logging
import os

LOGGER_NAME = "tierdb"

logger = logging.getLogger(LOGGER_NAME)
if not logger.handlers:
    _handler = logging.StreamHandler()
    _handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s [%(name)s] %(message)s"))
    logger.addHandler(_handler)
logger.setLevel(os.environ.get("TIERDB_LOG_LEVEL", "INFO").upper())


def set_level(level: str):
    """
    设置日志级别

    Args:
        level: 级别名称，如 "DEBUG"、"INFO"
    """
    logger.setLevel(level.upper())
