"""
互操作注册表
每层一个的平台服务：多种标识方案 (owner-tag / grid-id / serial / geo) 映射到同一个规范资产ID
"""
import threading
from typing import Dict, List, Tuple

from .errors import ConflictingAlias, UnknownAlias


class AliasRegister:
    """(scheme, value) -> canonical_id 的部分单射映射"""

    def __init__(self, tier_id: str):
        self.tier_id = tier_id
        self._aliases: Dict[Tuple[str, str], str] = {}
        self._retired: List[Tuple[str, str, str]] = []
        self._lock = threading.RLock()

    def register_alias(self, scheme: str, value: str, canonical_id: str):
        """
        注册别名；相同映射重复注册是幂等的

        Raises:
            ConflictingAlias: 该 (scheme, value) 已映射到其他规范ID，需先 retire_alias
        """
        with self._lock:
            current = self._aliases.get((scheme, value))
            if current is not None and current != canonical_id:
                raise ConflictingAlias(f"{scheme}={value} 已映射到 {current}")
            self._aliases[(scheme, value)] = canonical_id

    def resolve_alias(self, scheme: str, value: str) -> str:
        with self._lock:
            canonical_id = self._aliases.get((scheme, value))
        if canonical_id is None:
            raise UnknownAlias(f"{self.tier_id}: 未注册的别名 {scheme}={value}")
        return canonical_id

    def retire_alias(self, scheme: str, value: str) -> str:
        """
        退役别名（例如监测设备被移到另一台变压器），退役记录保留用于追溯

        Returns:
            原来映射到的规范ID
        """
        with self._lock:
            canonical_id = self._aliases.pop((scheme, value), None)
            if canonical_id is None:
                raise UnknownAlias(f"{self.tier_id}: 未注册的别名 {scheme}={value}")
            self._retired.append((scheme, value, canonical_id))
            return canonical_id

    def aliases_for(self, canonical_id: str) -> List[Tuple[str, str]]:
        with self._lock:
            return sorted(k for k, v in self._aliases.items() if v == canonical_id)

    def to_dict(self):
        with self._lock:
            return {
                "aliases": [[s, v, c] for (s, v), c in sorted(self._aliases.items())],
                "retired": [list(r) for r in self._retired],
            }
