"""
访问审计
记录组件对微数据库的每次访问，用于检查层隔离和MVC调用链
"""
import threading
from dataclasses import dataclass
from typing import List, Optional


@dataclass(frozen=True)
class AuditEntry:
    seq: int
    component: str
    component_tier: str
    mdb_id: str
    mdb_tier: str
    op: str
    detail: str = ""

    def to_dict(self):
        return {
            "seq": self.seq,
            "component": self.component,
            "component_tier": self.component_tier,
            "mdb_id": self.mdb_id,
            "mdb_tier": self.mdb_tier,
            "op": self.op,
            "detail": self.detail,
        }


class AuditLog:
    """只追加的审计日志"""

    def __init__(self):
        self._entries: List[AuditEntry] = []
        self._lock = threading.Lock()

    def record(self, component: str, component_tier: str, mdb_id: str, mdb_tier: str,
               op: str, detail: str = ""):
        with self._lock:
            self._entries.append(AuditEntry(len(self._entries) + 1, component, component_tier,
                                            mdb_id, mdb_tier, op, detail))

    def entries(self, component: Optional[str] = None, op: Optional[str] = None) -> List[AuditEntry]:
        with self._lock:
            return [
                e for e in self._entries
                if (component is None or e.component == component) and (op is None or e.op == op)
            ]

    def violations(self) -> List[AuditEntry]:
        """跨层访问（应始终为空）"""
        with self._lock:
            return [e for e in self._entries if e.component_tier != e.mdb_tier]

    def __len__(self) -> int:
        return len(self._entries)
