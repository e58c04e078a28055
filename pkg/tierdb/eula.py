"""
EULA 共享策略
机器可读的整库共享策略，编译为每个列存储的复制规则

规范文本格式（逐行，顺序有意义，# 开头为注释）:

    policy <policy_id> version=<n>
    rule <glob> <outbound|inbound|both> <mode[:params]> [retention=<days>]

mode 取值:
    deny
    full
    downsample:<interval_ms>
    summarize:<mean|min|max|count>:<window_ms>

规范化后关键字小写、单空格分隔，注释和空行被丢弃；
serialize(parse(text)) 对规范文本逐字节往返。
"""
import fnmatch
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

from .errors import MalformedPolicy


class Direction(Enum):
    OUTBOUND = "outbound"
    INBOUND = "inbound"
    BOTH = "both"

    def covers(self, direction: "Direction") -> bool:
        return self is Direction.BOTH or self is direction


class ModeKind(Enum):
    DENY = "deny"
    FULL = "full"
    DOWNSAMPLE = "downsample"
    SUMMARIZE = "summarize"


AGGREGATES = ("mean", "min", "max", "count")


@dataclass(frozen=True)
class Mode:
    """共享模式"""
    kind: ModeKind
    interval_ms: int = 0
    aggregate: str = ""
    window_ms: int = 0

    @classmethod
    def deny(cls) -> "Mode":
        return cls(ModeKind.DENY)

    @classmethod
    def full(cls) -> "Mode":
        return cls(ModeKind.FULL)

    @classmethod
    def downsample(cls, interval_ms: int) -> "Mode":
        return cls(ModeKind.DOWNSAMPLE, interval_ms=interval_ms)

    @classmethod
    def summarize(cls, aggregate: str, window_ms: int) -> "Mode":
        return cls(ModeKind.SUMMARIZE, aggregate=aggregate, window_ms=window_ms)

    def render(self) -> str:
        if self.kind is ModeKind.DOWNSAMPLE:
            return f"downsample:{self.interval_ms}"
        if self.kind is ModeKind.SUMMARIZE:
            return f"summarize:{self.aggregate}:{self.window_ms}"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "Mode":
        parts = text.lower().split(":")
        try:
            kind = ModeKind(parts[0])
        except ValueError:
            raise MalformedPolicy(f"未知模式: {text}")
        if kind in (ModeKind.DENY, ModeKind.FULL):
            if len(parts) != 1:
                raise MalformedPolicy(f"模式{kind.value}不接受参数")
            return cls(kind)
        if kind is ModeKind.DOWNSAMPLE:
            if len(parts) != 2:
                raise MalformedPolicy("downsample 需要 interval_ms 参数")
            interval = _positive_int(parts[1], "interval_ms")
            return cls.downsample(interval)
        if len(parts) != 3 or parts[1] not in AGGREGATES:
            raise MalformedPolicy(f"summarize 需要 <{'|'.join(AGGREGATES)}>:<window_ms>")
        return cls.summarize(parts[1], _positive_int(parts[2], "window_ms"))


def _positive_int(text: str, name: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise MalformedPolicy(f"{name} 必须是整数: {text}")
    if value <= 0:
        raise MalformedPolicy(f"{name} 必须为正: {text}")
    return value


@dataclass(frozen=True)
class PolicyRule:
    store_selector: str
    direction: Direction
    mode: Mode
    retention_days: Optional[int] = None

    def render(self) -> str:
        text = f"rule {self.store_selector} {self.direction.value} {self.mode.render()}"
        if self.retention_days is not None:
            text += f" retention={self.retention_days}"
        return text


@dataclass(frozen=True)
class EulaPolicy:
    """整库共享策略：首条匹配规则生效，末尾隐含 deny"""
    policy_id: str
    version: int
    rules: Tuple[PolicyRule, ...] = ()

    def serialize(self) -> str:
        lines = [f"policy {self.policy_id} version={self.version}"]
        lines.extend(rule.render() for rule in self.rules)
        return "\n".join(lines) + "\n"

    def with_version(self, version: int) -> "EulaPolicy":
        return EulaPolicy(self.policy_id, version, self.rules)


@dataclass(frozen=True)
class SharingRule:
    """编译后的单列存储规则"""
    store_id: str
    direction: Direction
    mode: Mode
    retention_days: Optional[int]

    def to_dict(self):
        return {
            "store_id": self.store_id,
            "direction": self.direction.value,
            "mode": self.mode.render(),
            "retention_days": self.retention_days,
        }


DENY_ALL = EulaPolicy("deny-all", 1, ())


def parse_policy(text: str) -> EulaPolicy:
    """
    解析规范文本

    Args:
        text: 策略文本

    Returns:
        策略对象

    Raises:
        MalformedPolicy: 语法或参数错误
    """
    policy_id = None
    version = None
    rules: List[PolicyRule] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        verb = parts[0].lower()
        if verb == "policy":
            if policy_id is not None:
                raise MalformedPolicy(f"第{line_no}行: 重复的 policy 声明")
            if len(parts) != 3 or not parts[2].lower().startswith("version="):
                raise MalformedPolicy(f"第{line_no}行: 应为 policy <id> version=<n>")
            policy_id = parts[1]
            version = _positive_int(parts[2].split("=", 1)[1], "version")
        elif verb == "rule":
            if len(parts) not in (4, 5):
                raise MalformedPolicy(f"第{line_no}行: 应为 rule <glob> <direction> <mode> [retention=<days>]")
            try:
                direction = Direction(parts[2].lower())
            except ValueError:
                raise MalformedPolicy(f"第{line_no}行: 未知方向 {parts[2]}")
            try:
                mode = Mode.parse(parts[3])
            except MalformedPolicy as e:
                raise MalformedPolicy(f"第{line_no}行: {e}")
            retention = None
            if len(parts) == 5:
                key, _, value = parts[4].partition("=")
                if key.lower() != "retention":
                    raise MalformedPolicy(f"第{line_no}行: 未知选项 {parts[4]}")
                if value.lower() != "unlimited":
                    retention = _positive_int(value, "retention")
            rules.append(PolicyRule(parts[1], direction, mode, retention))
        else:
            raise MalformedPolicy(f"第{line_no}行: 未知指令 {parts[0]}")
    if policy_id is None:
        raise MalformedPolicy("缺少 policy 声明")
    return EulaPolicy(policy_id, version, tuple(rules))


def canonicalize(text: str) -> str:
    """文本规范化"""
    return parse_policy(text).serialize()


def derive_store_rules(policy: EulaPolicy, stores: Iterable[str]) -> List[SharingRule]:
    """
    为每个列存储、每个方向编译规则，首条匹配者胜，无匹配则 deny

    Returns:
        按 (store_id, direction) 排序的规则列表
    """
    result = []
    for store_id in sorted(set(stores)):
        for direction in (Direction.INBOUND, Direction.OUTBOUND):
            result.append(resolve_rule(policy, store_id, direction))
    return result


def resolve_rule(policy: EulaPolicy, store_id: str, direction: Direction) -> SharingRule:
    """单个列存储单个方向的首条匹配规则"""
    for rule in policy.rules:
        if rule.direction.covers(direction) and fnmatch.fnmatchcase(store_id, rule.store_selector):
            return SharingRule(store_id, direction, rule.mode, rule.retention_days)
    return SharingRule(store_id, direction, Mode.deny(), None)


def store_retention(policy: EulaPolicy, store_id: str) -> Optional[int]:
    """列存储的保留天数：两个方向规则中最小的有限值，均无限则为 None"""
    values = [
        rule.retention_days
        for rule in (resolve_rule(policy, store_id, d) for d in (Direction.INBOUND, Direction.OUTBOUND))
        if rule.retention_days is not None
    ]
    return min(values) if values else None


# 预定义策略库
LIBRARY_DIR = Path(__file__).parent / "policies"


def list_library() -> List[str]:
    """预定义策略名称"""
    return sorted(p.stem for p in LIBRARY_DIR.glob("*.eula"))


def load_library_policy(name: str, version: int = 1) -> EulaPolicy:
    """
    从预定义策略库加载策略

    Args:
        name: 策略名，如 "share-full"
        version: 覆盖版本号（每次替换策略时版本需严格递增）
    """
    path = LIBRARY_DIR / f"{name}.eula"
    if not path.exists():
        raise MalformedPolicy(f"策略库中没有{name}，可用策略：{'、'.join(list_library())}")
    return parse_policy(path.read_text(encoding="utf-8")).with_version(version)


def library_text(name: str) -> str:
    path = LIBRARY_DIR / f"{name}.eula"
    if not path.exists():
        raise MalformedPolicy(f"策略库中没有{name}")
    return path.read_text(encoding="utf-8")
