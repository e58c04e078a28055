"""
发布/订阅中心
每个微数据库一个事件中心；只有微数据库发布事件，事件不携带取值

投递语义：内存队列，每次 pump 至多一次，崩溃不保证
"""
import itertools
from collections import deque
from dataclasses import dataclass, fields
from enum import Enum
from typing import Callable, Deque, Dict, Iterable, List, Optional, Tuple

from .errors import CrossTierSubscription, Unauthorized, UnknownSubscription
from .failure_tracker import FailureTracker
from .logger import logger
from .security import Right


class EventOp(Enum):
    CREATED = "created"
    UPDATED = "updated"
    DELETED = "deleted"
    REPLICATED = "replicated"


@dataclass(frozen=True)
class Event:
    """变更通知，订阅者需要自己读取新值"""
    event_id: int
    mdb_id: str
    store_id: str
    op: EventOp
    key: str
    ts: int
    revision: int

    def to_dict(self):
        return {
            "event_id": self.event_id,
            "mdb_id": self.mdb_id,
            "store_id": self.store_id,
            "op": self.op.value,
            "key": self.key,
            "ts": self.ts,
            "revision": self.revision,
        }


EVENT_FIELDS = tuple(f.name for f in fields(Event))


@dataclass(frozen=True)
class Handler:
    """处理器引用：所属组件、所在层、回调"""
    component: str
    tier_id: str
    callback: Callable[[Event], None]


@dataclass
class Subscription:
    sub_id: str
    principal_id: str
    store_id: str
    handler: Handler


class EventHub:
    """
    单个微数据库的事件中心

    队列与订阅属于所属微数据库的串行化域，由微数据库的锁保护
    """

    def __init__(self, mdb_id: str, tier_id: str, authorize: Callable[[str, str, Right], bool],
                 failure_tracker: Optional[FailureTracker] = None):
        self.mdb_id = mdb_id
        self.tier_id = tier_id
        self._authorize = authorize
        self._next_event_id = itertools.count(1)
        self._next_sub_id = itertools.count(1)
        self._pending: Deque[Event] = deque()
        self._subscriptions: Dict[str, Subscription] = {}
        self.failure_tracker = failure_tracker or FailureTracker()

    def publish(self, store_id: str, op: EventOp, key: str, ts: int, revision: int) -> Event:
        """入队一条事件（仅由微数据库的变更操作调用）"""
        event = Event(next(self._next_event_id), self.mdb_id, store_id, op, key, ts, revision)
        self._pending.append(event)
        return event

    def subscribe(self, store_id: str, principal_id: str, handler: Handler) -> str:
        """
        注册订阅

        Raises:
            Unauthorized: 主体没有 subscribe 权限
            CrossTierSubscription: 处理器不在本层
        """
        if handler.tier_id != self.tier_id:
            raise CrossTierSubscription(
                f"组件{handler.component}位于{handler.tier_id}，不能订阅{self.tier_id}中的{self.mdb_id}"
            )
        if not self._authorize(principal_id, store_id, Right.SUBSCRIBE):
            raise Unauthorized(f"{principal_id}没有{self.mdb_id}/{store_id}的订阅权限")
        sub_id = f"{self.mdb_id}#sub{next(self._next_sub_id)}"
        self._subscriptions[sub_id] = Subscription(sub_id, principal_id, store_id, handler)
        logger.debug(f"订阅已注册: {sub_id} store={store_id} component={handler.component}")
        return sub_id

    def unsubscribe(self, sub_id: str):
        if sub_id not in self._subscriptions:
            raise UnknownSubscription(f"未知订阅: {sub_id}")
        del self._subscriptions[sub_id]

    def has_subscription(self, sub_id: str) -> bool:
        return sub_id in self._subscriptions

    def subscriptions(self) -> List[Subscription]:
        return [self._subscriptions[s] for s in sorted(self._subscriptions, key=_sub_order)]

    def pending_count(self) -> int:
        return len(self._pending)

    def peek(self) -> Optional[Event]:
        return self._pending[0] if self._pending else None

    def pop(self) -> Event:
        return self._pending.popleft()

    def targets(self, event: Event) -> List[Subscription]:
        """
        投递目标：订阅了该列存储、此刻仍有订阅权限且未被挂起的订阅
        """
        result = []
        for sub in self.subscriptions():
            if sub.store_id != event.store_id:
                continue
            if self.failure_tracker.is_suspended(sub.sub_id):
                continue
            if not self._authorize(sub.principal_id, sub.store_id, Right.SUBSCRIBE):
                logger.debug(f"{sub.sub_id}已失去订阅权限，跳过事件{event.event_id}")
                continue
            result.append(sub)
        return result

    def deliver(self, event: Event, sub: Subscription):
        """同步调用处理器；异常被隔离并记录"""
        try:
            sub.handler.callback(event)
        except Exception as e:
            logger.error(f"处理器{sub.handler.component}处理事件{event.mdb_id}#{event.event_id}失败: {e}",
                         exc_info=True)
            self.failure_tracker.record_failure(sub.sub_id, str(e))
        else:
            self.failure_tracker.reset_failure(sub.sub_id)


def _sub_order(sub_id: str) -> Tuple[str, int]:
    prefix, _, number = sub_id.rpartition("#sub")
    return prefix, int(number)


def pump_hubs(hubs: Iterable[EventHub], max_events: int,
              lock_for: Callable[[EventHub], object]) -> int:
    """
    按 (mdb_id, event_id) 顺序投递最多 max_events 条待处理事件

    处理器执行中产生的新事件留待后续 pump 投递。

    Args:
        hubs: 同一层内的事件中心
        max_events: 本次最多投递的事件数
        lock_for: 返回某事件中心所属微数据库的锁

    Returns:
        投递（出队）的事件数
    """
    if max_events <= 0:
        return 0
    ordered = sorted(hubs, key=lambda h: h.mdb_id)
    # 只投递本次 pump 开始前已经入队的事件
    budget = {h.mdb_id: h.pending_count() for h in ordered}
    delivered = 0
    for hub in ordered:
        while budget[hub.mdb_id] > 0 and delivered < max_events:
            with lock_for(hub):
                event = hub.pop()
                targets = hub.targets(event)
            budget[hub.mdb_id] -= 1
            delivered += 1
            for sub in targets:
                if not hub.has_subscription(sub.sub_id):
                    continue
                logger.debug(f"投递事件 {event.mdb_id}#{event.event_id} -> {sub.handler.component}")
                hub.deliver(event, sub)
        if delivered >= max_events:
            break
    return delivered
