"""
工作请求
以记录形式编码的远程计算请求，生命周期随复制通道在层间传递
"""
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from .errors import InvalidTransition, KindMismatch
from .record import Value, canonical_json, decode_value, encode_value


class WorkStatus(Enum):
    CREATED = "created"
    DISPATCHED = "dispatched"
    ACCEPTED = "accepted"
    EXECUTING = "executing"
    COMPLETED = "completed"
    FAILED = "failed"


# 允许的状态迁移；failed 可以跟在 accepted/executing 之后，过期时也可跟在 created/dispatched 之后
_TRANSITIONS = {
    WorkStatus.CREATED: {WorkStatus.DISPATCHED, WorkStatus.FAILED},
    WorkStatus.DISPATCHED: {WorkStatus.ACCEPTED, WorkStatus.FAILED},
    WorkStatus.ACCEPTED: {WorkStatus.EXECUTING, WorkStatus.COMPLETED, WorkStatus.FAILED},
    WorkStatus.EXECUTING: {WorkStatus.COMPLETED, WorkStatus.FAILED},
    WorkStatus.COMPLETED: set(),
    WorkStatus.FAILED: set(),
}

TERMINAL = frozenset({WorkStatus.COMPLETED, WorkStatus.FAILED})


@dataclass(frozen=True)
class Requester:
    tier_id: str
    mdb_id: str
    principal_id: str


@dataclass(frozen=True)
class WorkRequest:
    request_id: str
    requester: Requester
    target_tier: str
    operation: str
    params: Dict[str, Value] = field(default_factory=dict)
    status: WorkStatus = WorkStatus.CREATED
    result: Optional[Dict[str, Value]] = None
    reason: str = ""
    submitted_cycle: int = 0
    status_history: Tuple[Tuple[str, int], ...] = ()

    @property
    def terminal(self) -> bool:
        return self.status in TERMINAL

    def advance(self, status: WorkStatus, ts: int, result: Optional[Dict[str, Value]] = None,
                reason: str = "") -> "WorkRequest":
        """
        状态迁移

        Raises:
            InvalidTransition: 迁移不合法
        """
        if status not in _TRANSITIONS[self.status]:
            raise InvalidTransition(f"工作请求{self.request_id}不能从{self.status.value}迁移到{status.value}")
        return replace(
            self,
            status=status,
            result=dict(result) if result is not None else self.result,
            reason=reason or self.reason,
            status_history=self.status_history + ((status.value, ts),),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "request_id": self.request_id,
            "requester": {
                "tier_id": self.requester.tier_id,
                "mdb_id": self.requester.mdb_id,
                "principal_id": self.requester.principal_id,
            },
            "target_tier": self.target_tier,
            "operation": self.operation,
            "params": {k: encode_value(v) for k, v in sorted(self.params.items())},
            "status": self.status.value,
            "result": None if self.result is None else {k: encode_value(v) for k, v in sorted(self.result.items())},
            "reason": self.reason,
            "submitted_cycle": self.submitted_cycle,
            "status_history": [list(h) for h in self.status_history],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WorkRequest":
        req = data["requester"]
        result = data.get("result")
        return cls(
            request_id=data["request_id"],
            requester=Requester(req["tier_id"], req["mdb_id"], req["principal_id"]),
            target_tier=data["target_tier"],
            operation=data["operation"],
            params={k: decode_value(v) for k, v in data.get("params", {}).items()},
            status=WorkStatus(data.get("status", "created")),
            result=None if result is None else {k: decode_value(v) for k, v in result.items()},
            reason=data.get("reason", ""),
            submitted_cycle=int(data.get("submitted_cycle", 0)),
            status_history=tuple((h[0], int(h[1])) for h in data.get("status_history", [])),
        )

    def encode(self) -> bytes:
        """记录取值：规范JSON字节"""
        return canonical_json(self.to_dict())

    @classmethod
    def decode(cls, payload: Any) -> "WorkRequest":
        """
        从记录取值解码

        Raises:
            KindMismatch: 取值不是序列化的工作请求
        """
        if not isinstance(payload, (bytes, bytearray)):
            raise KindMismatch("work 列存储只接受序列化的工作请求")
        try:
            return cls.from_dict(json.loads(bytes(payload).decode("utf-8")))
        except (ValueError, KeyError, TypeError) as e:
            raise KindMismatch(f"不是合法的工作请求: {e}")

