"""
失败追踪模块
负责追踪订阅处理器的连续失败，达到阈值后挂起订阅
"""
from dataclasses import dataclass
from threading import RLock
from typing import Dict, Optional

from .logger import logger


@dataclass
class FailureRecord:
    """单个订阅的失败记录"""
    total: int = 0
    consecutive: int = 0
    last_error: str = ""


class FailureTracker:
    """失败追踪器"""

    def __init__(self, failure_threshold: int = 0):
        """
        初始化失败追踪器

        Args:
            failure_threshold: 连续失败达到此值后挂起订阅，0 表示从不挂起
        """
        self.failure_threshold = failure_threshold
        self._records: Dict[str, FailureRecord] = {}
        self._suspended: set = set()
        self._lock = RLock()

    def record_failure(self, sub_id: str, error: str) -> bool:
        """
        记录一次失败

        Args:
            sub_id: 订阅ID
            error: 错误描述

        Returns:
            本次失败是否导致订阅被挂起
        """
        with self._lock:
            record = self._records.setdefault(sub_id, FailureRecord())
            record.total += 1
            record.consecutive += 1
            record.last_error = error
            if self.failure_threshold and record.consecutive >= self.failure_threshold and sub_id not in self._suspended:
                self._suspended.add(sub_id)
                logger.warning(f"订阅{sub_id}连续失败{record.consecutive}次，已挂起")
                return True
            return False

    def reset_failure(self, sub_id: str):
        """成功投递后重置连续失败计数"""
        with self._lock:
            record = self._records.get(sub_id)
            if record is not None:
                record.consecutive = 0

    def is_suspended(self, sub_id: str) -> bool:
        with self._lock:
            return sub_id in self._suspended

    def resume(self, sub_id: str):
        with self._lock:
            self._suspended.discard(sub_id)
            record = self._records.get(sub_id)
            if record is not None:
                record.consecutive = 0

    def get_failure(self, sub_id: str) -> Optional[FailureRecord]:
        with self._lock:
            record = self._records.get(sub_id)
            return None if record is None else FailureRecord(record.total, record.consecutive, record.last_error)

    def get_failure_count(self, sub_id: str) -> int:
        with self._lock:
            record = self._records.get(sub_id)
            return record.total if record else 0
