"""
微数据库
列存储容器：CRUD、信息模型、授权、EULA策略、事件中心、变更日志

一个微数据库是一个串行化域：所有变更在 RLock 下按全序执行
"""
import itertools
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple

from .column_store import ColumnStore, StoreKind
from .errors import (
    DuplicateMdbName, InvalidRange, NotFound, StalePolicyVersion,
    Unauthorized, UnknownStore,
)
from .eula import DENY_ALL, EulaPolicy, SharingRule, derive_store_rules, parse_policy, store_retention
from .events import EventHub, EventOp
from .failure_tracker import FailureTracker
from .info_model import AssetInstance, AssetType, DiscoveredBinding, InformationModel
from .logger import logger
from .record import MergeDecision, Record, Value, merge, validate_value
from .security import Grant, GrantTable, Right
from .work_request import WorkRequest

DAY_MS = 86_400_000


@dataclass
class MdbTemplate:
    """微数据库模板：列存储名称/种类与资产类型"""
    name: str
    stores: List[Tuple[str, StoreKind]]
    asset_types: List[AssetType] = field(default_factory=list)

    def to_dict(self):
        return {
            "name": self.name,
            "stores": [{"name": n, "kind": k.value} for n, k in self.stores],
            "asset_types": [t.to_dict() for t in self.asset_types],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MdbTemplate":
        stores = data.get("stores")
        if not data.get("name") or not isinstance(stores, list) or not stores:
            raise ValueError("模板需要 name 和非空 stores")
        names = [s["name"] for s in stores]
        if len(names) != len(set(names)):
            raise ValueError("模板中列存储重名")
        return cls(
            name=data["name"],
            stores=[(s["name"], StoreKind(s.get("kind", "timeseries"))) for s in stores],
            asset_types=[AssetType.from_dict(t) for t in data.get("asset_types", [])],
        )


@dataclass(frozen=True)
class MutationLogEntry:
    """变更日志条目，seq 在副本内严格递增"""
    seq: int
    store_id: str
    key: str
    ts: int
    revision: int
    origin: str
    tombstone: bool


class Microdatabase:
    """微数据库"""

    def __init__(self, template: MdbTemplate, owner: str, tier_id: str,
                 failure_tracker: Optional[FailureTracker] = None):
        self.name = template.name
        self.tier_id = tier_id
        self.mdb_id = f"{tier_id}/{template.name}"
        # 副本ID在一次模拟内全局唯一
        self.replica_id = self.mdb_id
        self.owner = owner
        self.lock = threading.RLock()
        self.stores: Dict[str, ColumnStore] = {
            name: ColumnStore(name, name, kind) for name, kind in template.stores
        }
        self.model = InformationModel()
        for asset_type in template.asset_types:
            self.model.define_type(asset_type)
        self.policy: EulaPolicy = DENY_ALL.with_version(0)
        self.grants = GrantTable()
        self.grants.add(Grant(owner, "*", frozenset({Right.ADMIN})))
        self.hub = EventHub(self.mdb_id, tier_id, self.authorize, failure_tracker)
        self.links: List[Any] = []
        self._seq = itertools.count(1)
        self._last_seq = 0
        self._log: Dict[str, List[MutationLogEntry]] = {name: [] for name in self.stores}
        # 保留期清理后的时间下限，早于它的记录不再接收
        self.retention_horizon: Dict[str, int] = {}

    # ------------------------------------------------------------------ 授权

    def authorize(self, principal_id: str, store_id: str, action: Right) -> bool:
        """纯函数：读取授权表的当前状态"""
        with self.lock:
            return self.grants.authorize(principal_id, store_id, action)

    def _require(self, principal_id: str, store_id: str, action: Right):
        if not self.grants.authorize(principal_id, store_id, action):
            raise Unauthorized(f"{principal_id}没有{self.mdb_id}/{store_id}的{action.value}权限")

    def _require_admin(self, principal_id: str):
        if not self.grants.authorize(principal_id, "*", Right.ADMIN):
            raise Unauthorized(f"{principal_id}不是{self.mdb_id}的管理员")

    def _store(self, store_id: str) -> ColumnStore:
        store = self.stores.get(store_id)
        if store is None:
            raise UnknownStore(f"{self.mdb_id}中没有列存储{store_id}")
        return store

    def grant(self, actor: str, target_principal: str, store_selector: str, rights: Iterable[Right]):
        """
        授权（Admin 客户端）

        Raises:
            Unauthorized: actor 没有管理员权限
        """
        with self.lock:
            self._require_admin(actor)
            self.grants.add(Grant(target_principal, store_selector, frozenset(rights)))
        logger.info(f"{self.mdb_id}: {actor} 授予 {target_principal} {store_selector} "
                    f"{','.join(sorted(r.value for r in rights))}")

    def revoke(self, actor: str, target_principal: str, store_selector: str) -> int:
        with self.lock:
            self._require_admin(actor)
            return self.grants.revoke(target_principal, store_selector)

    def set_eula(self, policy: EulaPolicy, actor: str):
        """
        替换整库EULA策略，版本必须严格递增

        链路水位清零，下一次同步按新策略重新评估全部日志；合并规则保证重复送达不改变状态
        """
        with self.lock:
            self._require_admin(actor)
            if policy.version <= self.policy.version:
                raise StalePolicyVersion(
                    f"{self.mdb_id}: 策略版本{policy.version}不大于当前版本{self.policy.version}"
                )
            # 确认可无损往返
            parse_policy(policy.serialize())
            self.policy = policy
            for link in self.links:
                link.rewind()
        logger.info(f"{self.mdb_id}: EULA 切换为 {policy.policy_id} v{policy.version}")

    def sharing_rules(self) -> List[SharingRule]:
        with self.lock:
            return derive_store_rules(self.policy, self.stores)

    # ------------------------------------------------------------------ CRUD

    def _append_log(self, store_id: str, record: Record):
        seq = next(self._seq)
        self._last_seq = seq
        self._log[store_id].append(MutationLogEntry(
            seq, store_id, record.key, record.ts, record.revision, record.origin, record.tombstone
        ))

    def put(self, store_id: str, key: str, ts: int, value: Value, principal_id: str) -> int:
        """
        在 (key, ts) 处写入或覆盖

        Returns:
            新修订号：新记录为1，覆盖为原值+1

        Raises:
            Unauthorized / InvalidValue / KindMismatch
        """
        with self.lock:
            store = self._store(store_id)
            self._require(principal_id, store_id, Right.WRITE)
            value = validate_value(value)
            if store.kind is StoreKind.WORK:
                WorkRequest.decode(value)
            existing = store.lookup(key, ts)
            revision = 1 if existing is None else existing.revision + 1
            record = Record(key, int(ts), value, revision, self.replica_id, False)
            store.store(record)
            self._append_log(store_id, record)
            self.hub.publish(store_id, EventOp.CREATED if existing is None else EventOp.UPDATED,
                             key, record.ts, revision)
            return revision

    def get(self, store_id: str, key: str, ts: int, principal_id: str) -> Record:
        """读取存活记录；墓碑或不存在均为 NotFound。读取不产生事件"""
        with self.lock:
            store = self._store(store_id)
            self._require(principal_id, store_id, Right.READ)
            record = store.lookup(key, ts)
        if record is None or record.tombstone:
            raise NotFound(f"{self.mdb_id}/{store_id}: 没有 ({key}, {ts})")
        return record

    def range(self, store_id: str, key: str, t0: int, t1: int, principal_id: str) -> List[Record]:
        """t0 <= ts <= t1 的存活记录，按 ts 升序"""
        if t0 > t1:
            raise InvalidRange(f"t0={t0} 大于 t1={t1}")
        with self.lock:
            store = self._store(store_id)
            self._require(principal_id, store_id, Right.READ)
            return [r for r in store.scan_key(key, t0, t1) if not r.tombstone]

    def latest(self, store_id: str, key: str, as_of: int, principal_id: str) -> Optional[Record]:
        """as_of 或之前最新的存活记录"""
        with self.lock:
            store = self._store(store_id)
            self._require(principal_id, store_id, Right.READ)
            return store.latest(key, as_of)

    def keys(self, store_id: str, principal_id: str) -> List[str]:
        with self.lock:
            store = self._store(store_id)
            self._require(principal_id, store_id, Right.READ)
            return store.keys()

    def delete(self, store_id: str, key: str, ts: int, principal_id: str) -> int:
        """
        删除为墓碑，修订号+1，墓碑与写入一样复制

        Returns:
            墓碑的修订号
        """
        with self.lock:
            store = self._store(store_id)
            self._require(principal_id, store_id, Right.WRITE)
            existing = store.lookup(key, ts)
            if existing is None or existing.tombstone:
                raise NotFound(f"{self.mdb_id}/{store_id}: 没有 ({key}, {ts})")
            record = existing.as_tombstone(self.replica_id)
            store.store(record)
            self._append_log(store_id, record)
            self.hub.publish(store_id, EventOp.DELETED, key, record.ts, record.revision)
            return record.revision

    # ------------------------------------------------------------------ 信息模型

    def define_asset_type(self, asset_type: AssetType, principal_id: str):
        with self.lock:
            self._require_admin(principal_id)
            self.model.define_type(asset_type)

    def register_instance(self, instance: AssetInstance, principal_id: str):
        with self.lock:
            self._require_admin(principal_id)
            self.model.register_instance(instance, self.stores.keys())

    def discover(self, principal_id: str, type_name: Optional[str] = None,
                 tags: Optional[Set[str]] = None) -> List[DiscoveredBinding]:
        """
        发现资产绑定；需要对信息模型的读权限（任一列存储的 read）
        """
        with self.lock:
            if not any(self.grants.authorize(principal_id, s, Right.READ) for s in self.stores):
                raise Unauthorized(f"{principal_id}没有{self.mdb_id}信息模型的读权限")
            return self.model.discover(type_name, tags)

    # ------------------------------------------------------------------ 复制支持

    def log_since(self, store_id: str, watermark: int) -> List[MutationLogEntry]:
        """某列存储 seq > watermark 的日志条目"""
        with self.lock:
            entries = self._log[store_id]
            # 日志按 seq 有序，清理后仍有序
            lo, hi = 0, len(entries)
            while lo < hi:
                mid = (lo + hi) // 2
                if entries[mid].seq <= watermark:
                    lo = mid + 1
                else:
                    hi = mid
            return entries[lo:]

    @property
    def last_seq(self) -> int:
        return self._last_seq

    def lookup(self, store_id: str, key: str, ts: int) -> Optional[Record]:
        """复制器内部读取（含墓碑），不做授权检查"""
        return self._store(store_id).lookup(key, ts)

    def apply_incoming(self, store_id: str, record: Record) -> bool:
        """
        合并一条复制来的记录

        Returns:
            是否采纳了该记录（采纳时写日志并发布 replicated 事件）
        """
        with self.lock:
            store = self._store(store_id)
            horizon = self.retention_horizon.get(store_id)
            if horizon is not None and record.ts < horizon:
                return False
            if store.kind is StoreKind.WORK and not record.tombstone:
                WorkRequest.decode(record.value)
            if merge(store.lookup(record.key, record.ts), record) is MergeDecision.KEEP_LOCAL:
                return False
            store.store(record)
            self._append_log(store_id, record)
            self.hub.publish(store_id, EventOp.REPLICATED, record.key, record.ts, record.revision)
            return True

    def purge_retention(self, now: int) -> int:
        """
        物理删除早于保留期的记录（含墓碑），并从变更日志中移除

        Returns:
            删除的记录数
        """
        purged = 0
        with self.lock:
            for store_id, store in self.stores.items():
                days = store_retention(self.policy, store_id)
                if days is None:
                    continue
                horizon = now - days * DAY_MS
                self.retention_horizon[store_id] = max(horizon, self.retention_horizon.get(store_id, horizon))
                stale = [r.ident for r in store.records() if r.ts < horizon]
                for key, ts in stale:
                    store.remove(key, ts)
                if stale:
                    gone = set(stale)
                    self._log[store_id] = [e for e in self._log[store_id] if (e.key, e.ts) not in gone]
                    purged += len(stale)
        if purged:
            logger.info(f"{self.mdb_id}: 保留期清理 {purged} 条记录")
        return purged

    # ------------------------------------------------------------------ 快照

    def snapshot_state(self) -> Dict[str, Any]:
        """规范化状态（用于快照与收敛比较）"""
        with self.lock:
            return {
                "mdb_id": self.mdb_id,
                "owner": self.owner,
                "policy": self.policy.serialize(),
                "grants": [g.to_dict() for g in self.grants.grants()],
                "model": self.model.to_dict(),
                "stores": {
                    sid: {
                        "kind": store.kind.value,
                        "records": [r.to_dict() for r in store.records()],
                    }
                    for sid, store in sorted(self.stores.items())
                },
            }

    def load_state(self, state: Dict[str, Any]):
        """
        从快照恢复记录、信息模型、策略与授权；日志按记录重建以便重新同步
        """
        with self.lock:
            self.policy = parse_policy(state["policy"])
            self.grants = GrantTable()
            for g in state.get("grants", []):
                self.grants.add(Grant(g["principal_id"], g["store_selector"],
                                      frozenset(Right(r) for r in g["rights"])))
            self.model.load_dict(state.get("model", {}))
            for sid, data in state.get("stores", {}).items():
                store = self.stores.get(sid)
                if store is None:
                    store = ColumnStore(sid, sid, StoreKind(data["kind"]))
                    self.stores[sid] = store
                    self._log[sid] = []
                for raw in data.get("records", []):
                    record = Record.from_dict(raw)
                    store.store(record)
                    self._append_log(sid, record)

    def store_kind(self, store_id: str) -> StoreKind:
        return self._store(store_id).kind


def check_unique_name(existing: Iterable[str], name: str, tier_id: str):
    if name in set(existing):
        raise DuplicateMdbName(f"层{tier_id}中已存在微数据库{name}")
