"""
复制模块
相邻层微数据库之间按策略过滤的双向反熵同步

每个方向：发送方按对端水位读取变更日志 -> 过滤条件 + 发送方出站规则 ->
按批编码经链路通道传输 -> 接收方入站规则 + 合并 -> 推进水位。
批次是原子的：通道中断时水位只推进到已完整应用的批次。
"""
import contextlib
import fnmatch
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .column_store import StoreKind
from .errors import KindMismatch, LinkDown
from .eula import Direction, Mode, ModeKind, resolve_rule
from .logger import logger
from .microdatabase import Microdatabase, MutationLogEntry
from .record import Record, decode_batch, encode_batch, is_numeric

AGG_SUFFIX = ".agg"
DEFAULT_BATCH_SIZE = 64


@dataclass(frozen=True)
class FilterCriteria:
    """数据所有者定义的过滤条件"""
    key_glob: str = "*"
    time_window: Optional[Tuple[int, int]] = None

    def accepts(self, record: Record) -> bool:
        """纯函数：键通配符与时间窗口"""
        if not fnmatch.fnmatchcase(record.key, self.key_glob):
            return False
        if self.time_window is not None:
            t0, t1 = self.time_window
            if not t0 <= record.ts <= t1:
                return False
        return True


@dataclass
class Endpoint:
    mdb: Microdatabase
    store_id: str

    @property
    def replica_id(self) -> str:
        return self.mdb.replica_id


@dataclass
class ReplicaLink:
    """
    副本链路，两端列存储种类相同；水位只在同步时增大，任一端更换EULA策略时清零重来

    watermarks: 方向 -> {被读取日志的副本ID: 已同步的最大 seq}
    """
    link_id: str
    local: Endpoint
    remote: Endpoint
    filter: FilterCriteria = field(default_factory=FilterCriteria)
    watermarks: Dict[str, Dict[str, int]] = field(default_factory=lambda: {"outbound": {}, "inbound": {}})

    def __post_init__(self):
        local_kind = self.local.mdb.store_kind(self.local.store_id)
        remote_kind = self.remote.mdb.store_kind(self.remote.store_id)
        if local_kind is not remote_kind:
            raise KindMismatch(f"链路两端种类不同: {local_kind.value} vs {remote_kind.value}")

    @property
    def kind(self) -> StoreKind:
        return self.local.mdb.store_kind(self.local.store_id)

    @property
    def tiers(self) -> Tuple[str, str]:
        return self.local.mdb.tier_id, self.remote.mdb.tier_id

    def watermark(self, direction: str, replica_id: str) -> int:
        return self.watermarks[direction].get(replica_id, 0)

    def advance(self, direction: str, replica_id: str, seq: int):
        current = self.watermarks[direction].get(replica_id, 0)
        if seq > current:
            self.watermarks[direction][replica_id] = seq

    def rewind(self):
        """清零两个方向的水位，下一次同步按当前策略重新评估全部日志"""
        for marks in self.watermarks.values():
            marks.clear()

    def endpoints(self) -> List[Endpoint]:
        return [self.local, self.remote]

    def describe(self) -> str:
        return f"{self.local.mdb.mdb_id}/{self.local.store_id} <-> {self.remote.mdb.mdb_id}/{self.remote.store_id}"


@dataclass
class SyncReport:
    """同步报告；出站方向 sent + skipped_by_policy 等于检查过的候选数加上降采样撤回的墓碑数"""
    link_id: str
    sent: int = 0
    received: int = 0
    summarized: int = 0
    conflicts_resolved: int = 0
    skipped_by_policy: int = 0
    rejected_inbound: int = 0

    def to_dict(self):
        return {
            "link_id": self.link_id,
            "sent": self.sent,
            "received": self.received,
            "summarized": self.summarized,
            "conflicts_resolved": self.conflicts_resolved,
            "skipped_by_policy": self.skipped_by_policy,
            "rejected_inbound": self.rejected_inbound,
        }


class Channel:
    """
    内存通道，模拟层间链路

    fail_after_batches: 传输若干批后模拟中断（用于测试原子性），None 表示不中断
    """

    def __init__(self, fail_after_batches: Optional[int] = None):
        self.fail_after_batches = fail_after_batches
        self.batches = 0
        self.bytes = 0

    def transmit(self, payload: bytes) -> bytes:
        if self.fail_after_batches is not None and self.batches >= self.fail_after_batches:
            raise LinkDown("链路在传输中断开")
        self.batches += 1
        self.bytes += len(payload)
        return payload


# ---------------------------------------------------------------------- 模式

def apply_mode(mode: Mode, records: Sequence[Record], origin: Optional[str] = None) -> List[Record]:
    """
    对单个 key 按 ts 排序的记录应用共享模式

    full: 原样；
    downsample(i): 每个 [n*i, (n+1)*i) 桶保留第一条；
    summarize(agg, w): 每个窗口一条合成记录，ts 为窗口起点，key 加 ".agg" 后缀，
        origin 为发送副本，修订号为窗口内全部记录修订号之和（窗口内任何变更都使其严格增大）；
        窗口内没有可聚合的存活记录时合成墓碑。
    deny: 空

    Args:
        mode: 共享模式
        records: 同一 key、按 ts 升序的记录（可含墓碑）
        origin: 合成记录的 origin，默认取第一条记录的 origin
    """
    if mode.kind is ModeKind.FULL:
        return list(records)
    if mode.kind is ModeKind.DENY or not records:
        return []
    if mode.kind is ModeKind.DOWNSAMPLE:
        kept = []
        last_bucket = None
        for record in records:
            bucket = record.ts // mode.interval_ms
            if bucket != last_bucket:
                kept.append(record)
                last_bucket = bucket
        return kept
    return _summarize(mode, records, origin or records[0].origin)


def _summarize(mode: Mode, records: Sequence[Record], origin: str) -> List[Record]:
    windows: Dict[int, List[Record]] = {}
    for record in records:
        windows.setdefault(record.ts // mode.window_ms * mode.window_ms, []).append(record)
    result = []
    for start in sorted(windows):
        group = windows[start]
        key = group[0].key + AGG_SUFFIX
        revision = sum(r.revision for r in group)
        live = [r for r in group if not r.tombstone]
        if mode.aggregate == "count":
            value = len(live) if live else None
        else:
            numbers = [float(r.value) for r in live if is_numeric(r.value)]
            if not numbers:
                value = None
            elif mode.aggregate == "mean":
                value = sum(numbers) / len(numbers)
            elif mode.aggregate == "min":
                value = min(numbers)
            else:
                value = max(numbers)
        result.append(Record(key, start, value, revision, origin, value is None))
    return result


# ---------------------------------------------------------------------- 同步

@contextlib.contextmanager
def locked(*mdbs: Microdatabase):
    """按 mdb_id 的固定全局顺序获取锁，避免死锁"""
    ordered = sorted({m.mdb_id: m for m in mdbs}.values(), key=lambda m: m.mdb_id)
    with contextlib.ExitStack() as stack:
        for mdb in ordered:
            stack.enter_context(mdb.lock)
        yield


def sync(link: ReplicaLink, link_up: bool = True, channel: Optional[Channel] = None,
         batch_size: int = DEFAULT_BATCH_SIZE) -> SyncReport:
    """
    双向同步一条链路

    Args:
        link: 副本链路
        link_up: 层间链路当前是否可用
        channel: 模拟链路的通道
        batch_size: 每批处理的日志条目数

    Returns:
        同步报告；策略拒绝不是错误，计入 skipped_by_policy

    Raises:
        LinkDown: 链路不可用或传输中断（已完整应用的批次保留）
    """
    if not link_up:
        raise LinkDown(f"{link.tiers[0]} 与 {link.tiers[1]} 之间的链路已断开")
    channel = channel or Channel()
    report = SyncReport(link.link_id)
    with locked(link.local.mdb, link.remote.mdb):
        _sync_direction(link, link.local, link.remote, "outbound", report, channel, batch_size)
        _sync_direction(link, link.remote, link.local, "inbound", report, channel, batch_size)
    logger.debug(f"同步 {link.link_id}: {report.to_dict()}")
    return report


def _sync_direction(link: ReplicaLink, sender: Endpoint, receiver: Endpoint, direction: str,
                    report: SyncReport, channel: Channel, batch_size: int):
    watermark = link.watermark(direction, sender.replica_id)
    entries = sender.mdb.log_since(sender.store_id, watermark)
    if not entries:
        return
    # 按发送方当前EULA评估，而非写入时的EULA
    out_rule = resolve_rule(sender.mdb.policy, sender.store_id, Direction.OUTBOUND)
    in_rule = resolve_rule(receiver.mdb.policy, receiver.store_id, Direction.INBOUND)
    store = sender.mdb.stores[sender.store_id]
    seen = set()
    for start in range(0, len(entries), batch_size):
        chunk = entries[start:start + batch_size]
        outgoing = _select(link, sender, receiver, chunk, out_rule.mode, store, seen, report)
        payload = channel.transmit(encode_batch(outgoing))
        incoming = decode_batch(payload)
        for record in incoming:
            if in_rule.mode.kind is ModeKind.DENY:
                report.rejected_inbound += 1
                continue
            local = receiver.mdb.lookup(receiver.store_id, record.key, record.ts)
            if local is not None and (local.revision, local.origin) != (record.revision, record.origin):
                report.conflicts_resolved += 1
            if receiver.mdb.apply_incoming(receiver.store_id, record):
                report.received += 1
        # 整批应用完毕才推进水位
        link.advance(direction, sender.replica_id, chunk[-1].seq)


def _retract_superseded(sender: Endpoint, receiver: Endpoint, history: List[Record], chosen: Record,
                        report: SyncReport) -> List[Record]:
    """
    降采样桶的代表记录换成更早的记录后，为接收方仍持有的旧代表生成墓碑

    接收方自己写入的版本不撤回；墓碑修订号比接收方持有的版本大一，合并后必定采纳
    """
    retractions = []
    for record in history:
        if record.ident == chosen.ident:
            continue
        held = receiver.mdb.lookup(receiver.store_id, record.key, record.ts)
        if held is None or held.tombstone or held.origin == receiver.replica_id:
            continue
        retractions.append(Record(held.key, held.ts, None, held.revision + 1, sender.replica_id, tombstone=True))
        report.sent += 1
    return retractions


def _select(
link: ReplicaLink, sender: Endpoint, receiver: Endpoint, chunk: List[MutationLogEntry],
            mode: Mode, store, seen: set, report: SyncReport) -> List[Record]:
    candidates: List[Record] = []
    for entry in chunk:
        ident = (entry.key, entry.ts)
        if ident in seen:
            continue
        seen.add(ident)
        record = store.lookup(entry.key, entry.ts)
        # 已清理的记录不再发送；由接收方自己产生的版本不回传
        if record is None or record.origin == receiver.replica_id:
            continue
        candidates.append(record)

    passed = []
    for record in candidates:
        if mode.kind is ModeKind.DENY or not link.filter.accepts(record):
            report.skipped_by_policy += 1
        else:
            passed.append(record)

    if mode.kind is ModeKind.FULL:
        report.sent += len(passed)
        return passed

    outgoing: List[Record] = []
    if mode.kind is ModeKind.DOWNSAMPLE:
        retracted = set()
        for record in passed:
            bucket_start = record.ts // mode.interval_ms * mode.interval_ms
            history = list(store.scan_key(record.key, bucket_start, bucket_start + mode.interval_ms - 1))
            chosen = apply_mode(mode, history)[0]
            if chosen.ident == record.ident:
                outgoing.append(record)
                report.sent += 1
            else:
                report.skipped_by_policy += 1
            if (record.key, bucket_start) in retracted:
                continue
            retracted.add((record.key, bucket_start))
            outgoing.extend(_retract_superseded(sender, receiver, history, chosen, report))
        return outgoing

    if mode.kind is ModeKind.SUMMARIZE:
        windows = {}
        for record in passed:
            if mode.aggregate != "count" and not record.tombstone and not is_numeric(record.value):
                report.skipped_by_policy += 1
                continue
            report.sent += 1
            start = record.ts // mode.window_ms * mode.window_ms
            windows[(record.key, start)] = True
        for key, start in sorted(windows):
            history = list(store.scan_key(key, start, start + mode.window_ms - 1))
            outgoing.extend(apply_mode(mode, history, origin=sender.replica_id))
        report.summarized += len(outgoing)
    return outgoing
