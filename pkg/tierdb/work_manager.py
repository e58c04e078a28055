"""
工作请求生命周期管理
请求以记录形式写入 work 列存储 (key = request_id, ts = 提交时间)，状态变化是同一 (key, ts) 上的覆盖写，
修订号随状态单调增大，LWW 合并自然偏向更靠后的生命周期阶段。
中间层只转发（复制）不执行。
"""
import itertools
from collections import deque
from typing import TYPE_CHECKING, Dict, Iterator, List, Optional, Set, Tuple

from .column_store import StoreKind
from .errors import InvalidTransition, Unauthorized, UnknownRequest, UnreachableTarget
from .logger import logger
from .microdatabase import Microdatabase
from .record import Record, Value
from .security import Right
from .work_request import Requester, WorkRequest, WorkStatus

if TYPE_CHECKING:
    from .topology import CycleReport, Topology

EXPIRED = "expired"
PERMISSION_DENIED = "permission denied"


class WorkManager:
    """跨层工作请求：提交、派发、过期、领取与完成"""

    def __init__(self, topology: "Topology"):
        self.topology = topology
        self._request_ids = itertools.count(1)

    # ------------------------------------------------------------------ 工具

    def _work_stores(self, mdb: Microdatabase) -> List[str]:
        return sorted(s for s, store in mdb.stores.items() if store.kind is StoreKind.WORK)

    def _requests(self, mdb: Microdatabase, store_id: str) -> Iterator[Tuple[Record, WorkRequest]]:
        for record in list(mdb.stores[store_id].live_records()):
            yield record, WorkRequest.decode(record.value)

    def _write(self, mdb: Microdatabase, store_id: str, record: Record, request: WorkRequest):
        """平台以微数据库所有者身份覆盖写状态"""
        mdb.put(store_id, record.key, record.ts, request.encode(), mdb.owner)

    def reachable_tiers(self, mdb: Microdatabase, store_id: str) -> Set[str]:
        """沿 work 种类的副本链路广度优先搜索可达的层"""
        start = (mdb.mdb_id, store_id)
        seen = {start}
        tiers = {mdb.tier_id}
        queue = deque([start])
        while queue:
            mdb_id, sid = queue.popleft()
            for link in self.topology.links:
                if link.kind is not StoreKind.WORK:
                    continue
                for this, other in ((link.local, link.remote), (link.remote, link.local)):
                    if (this.mdb.mdb_id, this.store_id) != (mdb_id, sid):
                        continue
                    node = (other.mdb.mdb_id, other.store_id)
                    if node not in seen:
                        seen.add(node)
                        tiers.add(other.mdb.tier_id)
                        queue.append(node)
        return tiers

    def new_request_id(self, tier_id: str) -> str:
        return f"wr-{tier_id}-{next(self._request_ids):04d}"

    # ------------------------------------------------------------------ 请求方

    def submit_work_request(self, mdb: Microdatabase, work_store: str, target_tier: str, operation: str,
                            params: Optional[Dict[str, Value]], principal_id: str,
                            request_id: Optional[str] = None) -> str:
        """
        提交工作请求：写入本层 work 列存储，状态 created

        Raises:
            UnreachableTarget: 没有通往目标层的 work 链路链
            Unauthorized: 主体没有 work 列存储的写权限
        """
        if mdb.store_kind(work_store) is not StoreKind.WORK:
            raise UnreachableTarget(f"{mdb.mdb_id}/{work_store} 不是 work 列存储")
        if target_tier not in self.reachable_tiers(mdb, work_store):
            raise UnreachableTarget(f"{mdb.mdb_id}/{work_store} 没有通往 {target_tier} 的链路")
        now = self.topology.clock.now
        request = WorkRequest(
            request_id=request_id or self.new_request_id(mdb.tier_id),
            requester=Requester(mdb.tier_id, mdb.mdb_id, principal_id),
            target_tier=target_tier,
            operation=operation,
            params=dict(params or {}),
            submitted_cycle=self.topology.cycle,
            status_history=((WorkStatus.CREATED.value, now),),
        )
        mdb.put(work_store, request.request_id, now, request.encode(), principal_id)
        logger.info(f"{mdb.mdb_id}: 提交工作请求 {request.request_id} {operation} -> {target_tier}")
        return request.request_id

    def dispatch(self, report: "CycleReport"):
        """
        请求方：权限检查后派发 created 请求；超过期限仍未被领取的请求标记 failed("expired")
        """
        expiry = self.topology.config.get_runtime("work_expiry_cycles")
        now = self.topology.clock.now
        for mdb in self.topology.microdatabases():
            for store_id in self._work_stores(mdb):
                with mdb.lock:
                    for record, request in self._requests(mdb, store_id):
                        if request.requester.mdb_id != mdb.mdb_id or request.terminal:
                            continue
                        if request.status in (WorkStatus.CREATED, WorkStatus.DISPATCHED) and \
                                self.topology.cycle - request.submitted_cycle >= expiry:
                            self._write(mdb, store_id, record, request.advance(WorkStatus.FAILED, now, reason=EXPIRED))
                            report.expired += 1
                            logger.warning(f"工作请求 {request.request_id} 已过期")
                            continue
                        if request.status is not WorkStatus.CREATED:
                            continue
                        if mdb.authorize(request.requester.principal_id, store_id, Right.WRITE):
                            self._write(mdb, store_id, record, request.advance(WorkStatus.DISPATCHED, now))
                            report.dispatched += 1
                        else:
                            self._write(mdb, store_id, record,
                                        request.advance(WorkStatus.FAILED, now, reason=PERMISSION_DENIED))
                            report.failed += 1

    # ------------------------------------------------------------------ 执行方

    def _find(self, tier_id: str, request_id: str) -> Tuple[Microdatabase, str, Record, WorkRequest]:
        tier = self.topology.tier(tier_id)
        for name in sorted(tier.mdbs):
            mdb = tier.mdbs[name]
            for store_id in self._work_stores(mdb):
                for record in mdb.stores[store_id].scan_key(request_id):
                    if record.tombstone:
                        continue
                    request = WorkRequest.decode(record.value)
                    if request.target_tier == tier_id:
                        return mdb, store_id, record, request
        raise UnknownRequest(f"层{tier_id}中没有工作请求{request_id}")

    def poll_work(self, tier_id: str, executor_principal: str,
                  operations: Optional[Set[str]] = None) -> List[WorkRequest]:
        """
        返回目标为本层、状态为 dispatched 的请求，并原子地标记为 accepted

        Args:
            operations: 只领取这些操作名；None 表示全部

        Raises:
            Unauthorized: 执行者对本层 work 列存储没有读权限
        """
        tier = self.topology.tier(tier_id)
        now = self.topology.clock.now
        accepted = []
        for name in sorted(tier.mdbs):
            mdb = tier.mdbs[name]
            for store_id in self._work_stores(mdb):
                with mdb.lock:
                    if not mdb.authorize(executor_principal, store_id, Right.READ):
                        raise Unauthorized(f"{executor_principal}没有{mdb.mdb_id}/{store_id}的读权限")
                    for record, request in self._requests(mdb, store_id):
                        if request.status is not WorkStatus.DISPATCHED or request.target_tier != tier_id:
                            continue
                        if operations is not None and request.operation not in operations:
                            continue
                        request = request.advance(WorkStatus.ACCEPTED, now)
                        self._write(mdb, store_id, record, request)
                        accepted.append(request)
        return accepted

    def mark_executing(self, tier_id: str, request_id: str):
        mdb, store_id, record, request = self._find(tier_id, request_id)
        with mdb.lock:
            self._write(mdb, store_id, record, request.advance(WorkStatus.EXECUTING, self.topology.clock.now))

    def complete_work(self, tier_id: str, request_id: str, result: Optional[Dict[str, Value]] = None,
                      failure: Optional[str] = None):
        """
        完成（带结果）或失败（带原因）；更新后的记录在后续周期复制回请求方

        Raises:
            UnknownRequest / InvalidTransition
        """
        mdb, store_id, record, request = self._find(tier_id, request_id)
        if request.status not in (WorkStatus.ACCEPTED, WorkStatus.EXECUTING):
            raise InvalidTransition(f"工作请求{request_id}处于{request.status.value}，不能完成")
        now = self.topology.clock.now
        if failure is not None:
            updated = request.advance(WorkStatus.FAILED, now, reason=failure)
        else:
            updated = request.advance(WorkStatus.COMPLETED, now, result=result or {})
        with mdb.lock:
            self._write(mdb, store_id, record, updated)
        logger.info(f"{tier_id}: 工作请求 {request_id} -> {updated.status.value}")

    # ------------------------------------------------------------------ 查询

    def status(self, mdb: Microdatabase, store_id: str, request_id: str) -> WorkRequest:
        """请求方在自己 work 列存储中看到的请求"""
        for record in mdb.stores[store_id].scan_key(request_id):
            if not record.tombstone:
                return WorkRequest.decode(record.value)
        raise UnknownRequest(f"{mdb.mdb_id}/{store_id} 中没有工作请求{request_id}")

    def all_requests(self) -> List[Tuple[str, WorkRequest]]:
        """(mdb_id/store_id, 请求) 列表，用于快照"""
        result = []
        for mdb in self.topology.microdatabases():
            for store_id in self._work_stores(mdb):
                for _, request in self._requests(mdb, store_id):
                    result.append((f"{mdb.mdb_id}/{store_id}", request))
        return result

    def advance(self, report: "CycleReport"):
        """周期第 (4) 步：请求方派发与过期，然后各层应用领取并执行"""
        self.dispatch(report)
        for tier_id in sorted(self.topology.tiers):
            self.topology.tiers[tier_id].apps.process_work(report)
