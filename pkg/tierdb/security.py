"""
身份与授权
令牌认证（无密码学）、按列存储的基于角色授权
"""
import fnmatch
import hashlib
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional

from .errors import UnknownPrincipal, UnknownToken

ALL_STORES = "*"


class PrincipalKind(Enum):
    OWNER = "owner"
    APP = "app"
    APP_SERVICE = "app_service"
    REPLICATOR = "replicator"
    PLATFORM = "platform"


class Right(Enum):
    READ = "read"
    WRITE = "write"
    SUBSCRIBE = "subscribe"
    ADMIN = "admin"


# admin 蕴含其余三种权限
_IMPLIED = {
    Right.ADMIN: frozenset({Right.ADMIN, Right.READ, Right.WRITE, Right.SUBSCRIBE}),
    Right.READ: frozenset({Right.READ}),
    Right.WRITE: frozenset({Right.WRITE}),
    Right.SUBSCRIBE: frozenset({Right.SUBSCRIBE}),
}


def expand_rights(rights: Iterable[Right]) -> FrozenSet[Right]:
    """展开权限蕴含关系"""
    result = set()
    for right in rights:
        result |= _IMPLIED[right]
    return frozenset(result)


def parse_rights(text: str) -> FrozenSet[Right]:
    """解析 "read,subscribe" 这样的权限列表"""
    return frozenset(Right(part.strip().lower()) for part in text.split(",") if part.strip())


@dataclass(frozen=True)
class Principal:
    principal_id: str
    kind: PrincipalKind
    token: bytes


class PrincipalRegistry:
    """
    主体注册表（模拟的身份管理）

    一个令牌只映射到一个主体
    """

    def __init__(self):
        self._by_token: Dict[bytes, Principal] = {}
        self._by_id: Dict[str, Principal] = {}
        self._lock = threading.RLock()

    def register(self, principal_id: str, kind: PrincipalKind, token: Optional[bytes] = None) -> Principal:
        """
        注册主体，未给出令牌时由ID派生

        Returns:
            注册后的主体
        """
        if token is None:
            token = hashlib.sha256(f"token:{principal_id}".encode("utf-8")).digest()
        with self._lock:
            existing = self._by_token.get(token)
            if existing is not None and existing.principal_id != principal_id:
                raise ValueError(f"令牌已绑定到主体{existing.principal_id}")
            current = self._by_id.get(principal_id)
            if current is not None:
                if current.token != token:
                    raise ValueError(f"主体{principal_id}已使用其他令牌注册")
                return current
            principal = Principal(principal_id, kind, token)
            self._by_token[token] = principal
            self._by_id[principal_id] = principal
            return principal

    def authenticate(self, token: bytes) -> Principal:
        """
        按令牌认证

        Raises:
            UnknownToken: 令牌未注册
        """
        with self._lock:
            principal = self._by_token.get(bytes(token))
        if principal is None:
            raise UnknownToken("未注册的令牌")
        return principal

    def get(self, principal_id: str) -> Principal:
        with self._lock:
            principal = self._by_id.get(principal_id)
        if principal is None:
            raise UnknownPrincipal(f"未知主体: {principal_id}")
        return principal

    def ids(self) -> List[str]:
        with self._lock:
            return sorted(self._by_id)


@dataclass(frozen=True)
class Grant:
    """授权：主体 + 列存储选择器（名称通配符，"*" 表示全部）+ 权限"""
    principal_id: str
    store_selector: str
    rights: FrozenSet[Right]

    def covers(self, store_id: str) -> bool:
        return self.store_selector == ALL_STORES or fnmatch.fnmatchcase(store_id, self.store_selector)

    def to_dict(self):
        return {
            "principal_id": self.principal_id,
            "store_selector": self.store_selector,
            "rights": sorted(r.value for r in self.rights),
        }


class GrantTable:
    """授权表：默认拒绝，授权只增不减（除非显式撤销）"""

    def __init__(self):
        self._grants: List[Grant] = []

    def add(self, grant: Grant):
        self._grants.append(grant)

    def revoke(self, principal_id: str, store_selector: str) -> int:
        """撤销某主体在某选择器上的全部授权，返回撤销数量"""
        before = len(self._grants)
        self._grants = [
            g for g in self._grants
            if not (g.principal_id == principal_id and g.store_selector == store_selector)
        ]
        return before - len(self._grants)

    def authorize(self, principal_id: str, store_id: str, action: Right) -> bool:
        """
        纯函数：存在覆盖该列存储且（按蕴含展开后）包含该动作的授权即允许
        """
        for grant in self._grants:
            if grant.principal_id != principal_id or not grant.covers(store_id):
                continue
            if action in expand_rights(grant.rights):
                return True
        return False

    def grants(self) -> List[Grant]:
        return list(self._grants)
