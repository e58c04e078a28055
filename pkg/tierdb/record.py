"""
记录与取值
定义列存储中的基本单元：带时间戳、带修订号的键值记录，
以及合并规则和同步批次的规范编码
"""
import base64
import json
import math
import struct
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Union

from .errors import InvalidValue

# 五种取值：float64 / int64 / utf8字符串 / 布尔 / 字节
Value = Union[float, int, str, bool, bytes]

INT64_MIN = -(2 ** 63)
INT64_MAX = 2 ** 63 - 1


class ValueKind(Enum):
    """取值类型枚举"""
    FLOAT = "float"
    INT = "int"
    STRING = "string"
    BOOL = "bool"
    BYTES = "bytes"


def value_kind(value: Any) -> ValueKind:
    """
    判断取值类型

    Args:
        value: 原始取值

    Returns:
        取值类型

    Raises:
        InvalidValue: 不是五种取值之一
    """
    # bool 是 int 的子类，必须先判断
    if isinstance(value, bool):
        return ValueKind.BOOL
    if isinstance(value, int):
        return ValueKind.INT
    if isinstance(value, float):
        return ValueKind.FLOAT
    if isinstance(value, str):
        return ValueKind.STRING
    if isinstance(value, (bytes, bytearray)):
        return ValueKind.BYTES
    raise InvalidValue(f"不支持的取值类型: {type(value).__name__}")


def validate_value(value: Any) -> Value:
    """
    校验取值，非有限浮点数和越界整数会被拒绝

    Returns:
        规范化后的取值（bytearray 转为 bytes）
    """
    kind = value_kind(value)
    if kind is ValueKind.FLOAT and not math.isfinite(value):
        raise InvalidValue(f"浮点数必须有限: {value!r}")
    if kind is ValueKind.INT and not INT64_MIN <= value <= INT64_MAX:
        raise InvalidValue(f"整数超出int64范围: {value}")
    if kind is ValueKind.STRING:
        try:
            value.encode("utf-8")
        except UnicodeEncodeError as e:
            raise InvalidValue(f"字符串不是合法utf-8: {e}")
    if isinstance(value, bytearray):
        return bytes(value)
    return value


def is_numeric(value: Any) -> bool:
    """float/int 算数值，bool 不算"""
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def encode_value(value: Value) -> Dict[str, Any]:
    """取值转为带类型标签的字典"""
    kind = value_kind(value)
    if kind is ValueKind.BYTES:
        return {"k": kind.value, "v": base64.b64encode(value).decode("ascii")}
    return {"k": kind.value, "v": value}


def decode_value(data: Dict[str, Any]) -> Value:
    """带类型标签的字典还原为取值"""
    kind = ValueKind(data["k"])
    raw = data["v"]
    if kind is ValueKind.BYTES:
        return base64.b64decode(raw)
    if kind is ValueKind.FLOAT:
        return float(raw)
    if kind is ValueKind.INT:
        return int(raw)
    if kind is ValueKind.BOOL:
        return bool(raw)
    return str(raw)


def format_value(value: Optional[Value]) -> str:
    """用于报告和快照检查的文本形式"""
    if value is None:
        return "<tombstone>"
    if isinstance(value, bytes):
        return "0x" + value.hex()
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


@dataclass(frozen=True)
class Record:
    """
    列存储中的一条记录

    (key, ts) 在一个列存储内唯一；墓碑记录保留 key/ts/revision/origin 但没有可读取值
    """
    key: str
    ts: int
    value: Optional[Value]
    revision: int
    origin: str
    tombstone: bool = False

    @property
    def ident(self):
        return (self.key, self.ts)

    def to_dict(self) -> Dict[str, Any]:
        """转换为规范字典"""
        return {
            "key": self.key,
            "ts": self.ts,
            "value": None if self.tombstone else encode_value(self.value),
            "revision": self.revision,
            "origin": self.origin,
            "tombstone": self.tombstone,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Record":
        tombstone = bool(data.get("tombstone", False))
        raw = data.get("value")
        return cls(
            key=data["key"],
            ts=int(data["ts"]),
            value=None if tombstone or raw is None else decode_value(raw),
            revision=int(data["revision"]),
            origin=data["origin"],
            tombstone=tombstone,
        )

    def as_tombstone(self, origin: str) -> "Record":
        """生成下一修订号的墓碑"""
        return replace(self, value=None, revision=self.revision + 1, origin=origin, tombstone=True)


class MergeDecision(Enum):
    KEEP_LOCAL = "keep_local"
    TAKE_INCOMING = "take_incoming"


def merge(local: Optional[Record], incoming: Record) -> MergeDecision:
    """
    确定性的最后写入者胜出规则

    修订号高者胜；修订号相同则 origin 字典序大者胜；墓碑与普通写入同等参与。
    完全相同的版本保留本地。

    Args:
        local: 本地记录（可能不存在）
        incoming: 收到的记录，与本地记录 (key, ts) 相同

    Returns:
        合并决定
    """
    if local is None:
        return MergeDecision.TAKE_INCOMING
    if (incoming.revision, incoming.origin) > (local.revision, local.origin):
        return MergeDecision.TAKE_INCOMING
    return MergeDecision.KEEP_LOCAL


def canonical_json(data: Any) -> bytes:
    """规范JSON：键排序、紧凑分隔符、保留非ASCII"""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


# 同步批次编码：每条记录为 4字节大端长度 + 规范JSON
_LENGTH = struct.Struct(">I")


def encode_batch(records: Iterable[Record]) -> bytes:
    """
    把记录编码为长度前缀的批次

    Args:
        records: 记录序列

    Returns:
        批次字节
    """
    chunks = []
    for record in records:
        payload = canonical_json(record.to_dict())
        chunks.append(_LENGTH.pack(len(payload)))
        chunks.append(payload)
    return b"".join(chunks)


def decode_batch(data: bytes) -> List[Record]:
    """解码长度前缀的批次"""
    records = []
    offset = 0
    while offset < len(data):
        if offset + _LENGTH.size > len(data):
            raise ValueError("批次截断：长度前缀不完整")
        (length,) = _LENGTH.unpack_from(data, offset)
        offset += _LENGTH.size
        end = offset + length
        if end > len(data):
            raise ValueError("批次截断：记录不完整")
        records.append(Record.from_dict(json.loads(data[offset:end].decode("utf-8"))))
        offset = end
    return records
