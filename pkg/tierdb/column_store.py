"""
列存储
按 (key, ts) 有序保存记录，墓碑与普通记录一起保存以便复制
"""
import bisect
from enum import Enum
from typing import Dict, Iterator, List, Optional, Tuple

from .record import Record


class StoreKind(Enum):
    """列存储种类"""
    TIMESERIES = "timeseries"
    WORK = "work"
    CONFIG = "config"


class ColumnStore:
    """列存储：(key, ts) -> Record"""

    def __init__(self, store_id: str, name: str, kind: StoreKind):
        self.store_id = store_id
        self.name = name
        self.kind = kind
        self._records: Dict[Tuple[str, int], Record] = {}
        # 有序索引，与 _records 的键一一对应
        self._index: List[Tuple[str, int]] = []

    def __len__(self) -> int:
        return len(self._records)

    def lookup(self, key: str, ts: int) -> Optional[Record]:
        """取出记录（含墓碑）"""
        return self._records.get((key, ts))

    def store(self, record: Record):
        """写入或覆盖记录"""
        ident = (record.key, record.ts)
        if ident not in self._records:
            bisect.insort(self._index, ident)
        self._records[ident] = record

    def remove(self, key: str, ts: int) -> bool:
        """物理删除记录（仅用于保留期清理）"""
        ident = (key, ts)
        if ident not in self._records:
            return False
        del self._records[ident]
        pos = bisect.bisect_left(self._index, ident)
        del self._index[pos]
        return True

    def scan_key(self, key: str, t0: Optional[int] = None, t1: Optional[int] = None) -> Iterator[Record]:
        """
        按时间升序遍历某个 key 的记录（含墓碑）

        Args:
            key: 行键
            t0: 起始时间（含），None 表示不限
            t1: 结束时间（含），None 表示不限
        """
        lo = bisect.bisect_left(self._index, (key, t0 if t0 is not None else -(2 ** 63)))
        for pos in range(lo, len(self._index)):
            k, ts = self._index[pos]
            if k != key or (t1 is not None and ts > t1):
                break
            yield self._records[(k, ts)]

    def latest(self, key: str, as_of: int) -> Optional[Record]:
        """at 或之前最新的存活记录"""
        hi = bisect.bisect_right(self._index, (key, as_of))
        for pos in range(hi - 1, -1, -1):
            k, ts = self._index[pos]
            if k != key:
                break
            record = self._records[(k, ts)]
            if not record.tombstone:
                return record
        return None

    def keys(self) -> List[str]:
        """所有出现过的行键（有序、去重）"""
        result: List[str] = []
        for key, _ in self._index:
            if not result or result[-1] != key:
                result.append(key)
        return result

    def records(self) -> Iterator[Record]:
        """按 (key, ts) 顺序遍历全部记录（含墓碑）"""
        for ident in self._index:
            yield self._records[ident]

    def live_records(self) -> Iterator[Record]:
        for record in self.records():
            if not record.tombstone:
                yield record
