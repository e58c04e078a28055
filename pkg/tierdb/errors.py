"""
异常层次
所有框架错误都继承自 TierDBError
"""
from typing import Optional


class TierDBError(Exception):
    """框架错误基类"""


# 存储与信息模型
class UnknownTier(TierDBError):
    pass


class DuplicateTier(TierDBError):
    pass


class DuplicateMdbName(TierDBError):
    pass


class UnknownMdb(TierDBError):
    pass


class UnknownStore(TierDBError):
    pass


class InvalidValue(TierDBError):
    pass


class KindMismatch(TierDBError):
    pass


class NotFound(TierDBError):
    pass


class InvalidRange(TierDBError):
    pass


class ConflictingRedefinition(TierDBError):
    pass


class UnknownType(TierDBError):
    pass


class DanglingBinding(TierDBError):
    pass


# 安全与策略
class Unauthorized(TierDBError):
    pass


class UnknownToken(TierDBError):
    pass


class UnknownPrincipal(TierDBError):
    pass


class StalePolicyVersion(TierDBError):
    pass


class MalformedPolicy(TierDBError):
    pass


# 事件
class CrossTierSubscription(TierDBError):
    pass


class UnknownSubscription(TierDBError):
    pass


# 复制与拓扑
class LinkDown(TierDBError):
    pass


class NonAdjacentTiers(TierDBError):
    pass


class UnreachableTarget(TierDBError):
    pass


class UnknownRequest(TierDBError):
    pass


class InvalidTransition(TierDBError):
    pass


class ConflictingAlias(TierDBError):
    pass


class UnknownAlias(TierDBError):
    pass


class VersionMismatch(TierDBError):
    pass


# 应用框架
class UnknownSlot(TierDBError):
    pass


class UnresolvedInput(TierDBError):
    pass


class ComputeFailure(TierDBError):
    pass


class UnknownService(TierDBError):
    pass


class CrossTierReference(TierDBError):
    pass


class UnknownParam(TierDBError):
    pass


class UndeclaredProvider(TierDBError):
    pass


class ProviderFailure(TierDBError):
    pass


# 应用商店
class HashMismatch(TierDBError):
    pass


class DuplicateVersion(TierDBError):
    pass


class UnacknowledgedConnection(TierDBError):
    pass


class UnknownEntry(TierDBError):
    pass


class UnknownPublisher(TierDBError):
    pass


class InvalidManifest(TierDBError):
    pass


# 变压器示例
class InvalidParams(TierDBError):
    pass


class EmptyFleet(TierDBError):
    pass


class NoFixture(TierDBError):
    pass


# 命令行
class ParseError(TierDBError):
    """场景或策略文本解析失败，带行号"""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"第{line_no}行: {message}"
        super().__init__(message)


class AssertionFailed(TierDBError):
    """场景断言失败，带差异说明"""

    def __init__(self, message: str, diff: str = "", line_no: Optional[int] = None):
        self.message = message
        self.diff = diff
        self.line_no = line_no
        text = message if line_no is None else f"第{line_no}行: {message}"
        if diff:
            text = f"{text}\n{diff}"
        super().__init__(text)


class UnknownSnapshot(TierDBError):
    pass
