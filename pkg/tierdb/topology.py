"""
层运行时
拓扑：层、间歇性层间链路、平台服务（版本一致性、互操作注册表）、周期调度器

调度器是单线程、确定性的；开启 parallel_sync 时，只有微数据库互不相交的链路才会并行同步
"""
import itertools
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from .app_framework import AppRuntime
from .audit import AuditLog
from .config_manager import ConfigManager
from .errors import (
    DuplicateTier, KindMismatch, LinkDown, NonAdjacentTiers, Unauthorized, UnknownMdb, UnknownTier,
)
from .events import pump_hubs
from .failure_tracker import FailureTracker
from .interop_register import AliasRegister
from .logger import logger
from .microdatabase import MdbTemplate, Microdatabase, check_unique_name
from .replication import Channel, Endpoint, FilterCriteria, ReplicaLink, SyncReport, sync
from .security import PrincipalKind, PrincipalRegistry, Right
from .work_manager import WorkManager

_VERSION_RE = re.compile(r"^\d+\.\d+\.\d+$")


class TierLevel(Enum):
    DEVICE = "device"
    PLANT = "plant"
    LOCAL = "local"
    REGIONAL = "regional"
    GLOBAL = "global"


class LinkState(Enum):
    UP = "up"
    DOWN = "down"


class LogicalClock:
    """唯一的时间来源，只由场景指令推进"""

    def __init__(self, now: int = 0):
        self.now = now

    def advance(self, ms: int) -> int:
        if ms < 0:
            raise ValueError("逻辑时钟不能倒退")
        self.now += ms
        return self.now


@dataclass
class TierLink:
    tier_a: str
    tier_b: str
    state: LinkState = LinkState.UP

    @property
    def up(self) -> bool:
        return self.state is LinkState.UP


@dataclass(frozen=True)
class VersionCheck:
    """check_version 的结果：不一致是一个值，由 deploy 决定是否抛出"""
    ok: bool
    required: str
    actual: str


class Tier:
    """一组共享本地资源与数据的软件元素；也是安全与所有权域"""

    def __init__(self, name: str, level: TierLevel, platform_version: str, owner: Optional[str],
                 topology: "Topology"):
        self.tier_id = name
        self.name = name
        self.level = level
        self.platform_version = platform_version
        self.owner = owner
        self.mdbs: Dict[str, Microdatabase] = {}
        self.aliases = AliasRegister(name)
        self.failure_tracker = FailureTracker(topology.config.get_runtime("handler_failure_threshold"))
        self.apps = AppRuntime(self, topology)
        # 部署记录（来源可追溯）
        self.deployments: List[Dict[str, Any]] = []

    def mdb(self, name: str) -> Microdatabase:
        mdb = self.mdbs.get(name)
        if mdb is None:
            raise UnknownMdb(f"层{self.tier_id}中没有微数据库{name}")
        return mdb

    def hubs(self):
        return [self.mdbs[n].hub for n in sorted(self.mdbs)]

    def describe(self) -> Dict[str, Any]:
        return {
            "tier_id": self.tier_id,
            "level": self.level.value,
            "platform_version": self.platform_version,
            "owner": self.owner,
            "mdbs": sorted(self.mdbs),
            "services": sorted(self.apps.services),
            "apps": sorted(self.apps.apps),
        }


@dataclass
class CycleReport:
    """一个周期的汇总报告；所有字段都是确定性的"""
    cycle: int
    now: int
    delivered: int = 0
    syncs: List[SyncReport] = field(default_factory=list)
    links_down: List[str] = field(default_factory=list)
    purged: int = 0
    dispatched: int = 0
    expired: int = 0
    accepted: int = 0
    completed: int = 0
    failed: int = 0

    def to_dict(self):
        return {
            "cycle": self.cycle,
            "now": self.now,
            "delivered": self.delivered,
            "syncs": [s.to_dict() for s in self.syncs],
            "links_down": list(self.links_down),
            "purged": self.purged,
            "dispatched": self.dispatched,
            "expired": self.expired,
            "accepted": self.accepted,
            "completed": self.completed,
            "failed": self.failed,
        }

    @property
    def transferred(self) -> int:
        return sum(s.sent + s.received for s in self.syncs)


class Topology:
    """拓扑：层、层间链路、副本链路与周期调度"""

    def __init__(self, config: Optional[ConfigManager] = None, now: int = 0):
        self.config = config or ConfigManager()
        self.clock = LogicalClock(now)
        self.principals = PrincipalRegistry()
        self.audit = AuditLog()
        self.tiers: Dict[str, Tier] = {}
        self.tier_links: Dict[Tuple[str, str], TierLink] = {}
        self.links: List[ReplicaLink] = []
        self.cycle = 0
        self._link_ids = itertools.count(1)
        self.work = WorkManager(self)

    # ------------------------------------------------------------------ 层与链路

    def create_tier(self, name: str, level: TierLevel, platform_version: str,
                    owner: Optional[str] = None) -> str:
        """
        注册一个空层

        Raises:
            DuplicateTier: 名称已存在
        """
        if name in self.tiers:
            raise DuplicateTier(f"层{name}已存在")
        if not _VERSION_RE.match(platform_version):
            raise ValueError(f"平台版本格式错误: {platform_version}")
        self.tiers[name] = Tier(name, TierLevel(level), platform_version, owner, self)
        logger.info(f"创建层 {name} ({TierLevel(level).value}, 平台 {platform_version})")
        return name

    def tier(self, tier_id: str) -> Tier:
        tier = self.tiers.get(tier_id)
        if tier is None:
            raise UnknownTier(f"未知的层: {tier_id}")
        return tier

    def connect(self, tier_a: str, tier_b: str):
        """声明两层在拓扑中相邻；新链路初始为 up"""
        self.tier(tier_a)
        self.tier(tier_b)
        if tier_a == tier_b:
            raise NonAdjacentTiers(f"{tier_a} 不能与自身相邻")
        self.tier_links.setdefault(_pair(tier_a, tier_b), TierLink(*_pair(tier_a, tier_b)))

    def adjacent(self, tier_a: str, tier_b: str) -> bool:
        return _pair(tier_a, tier_b) in self.tier_links

    def neighbors(self, tier_id: str) -> List[str]:
        result = []
        for a, b in self.tier_links:
            if a == tier_id:
                result.append(b)
            elif b == tier_id:
                result.append(a)
        return sorted(result)

    def _tier_link(self, tier_a: str, tier_b: str) -> TierLink:
        link = self.tier_links.get(_pair(tier_a, tier_b))
        if link is None:
            raise NonAdjacentTiers(f"{tier_a} 与 {tier_b} 在拓扑中不相邻")
        return link

    def set_link_state(self, tier_a: str, tier_b: str, state: LinkState):
        """显式切换层间链路状态"""
        link = self._tier_link(tier_a, tier_b)
        link.state = LinkState(state)
        logger.info(f"层间链路 {link.tier_a} <-> {link.tier_b}: {link.state.value}")

    def link_up(self, tier_a: str, tier_b: str) -> bool:
        return self._tier_link(tier_a, tier_b).up

    # ------------------------------------------------------------------ 微数据库

    def create_microdatabase(self, template: MdbTemplate, owner: str, tier_id: str) -> str:
        """
        在层中实例化模板

        Raises:
            UnknownTier / DuplicateMdbName
        """
        tier = self.tier(tier_id)
        check_unique_name(tier.mdbs.keys(), template.name, tier_id)
        mdb = Microdatabase(template, owner, tier_id, tier.failure_tracker)
        tier.mdbs[template.name] = mdb
        logger.info(f"创建微数据库 {mdb.mdb_id} (owner={owner})")
        return mdb.mdb_id

    def mdb(self, mdb_id: str) -> Microdatabase:
        tier_id, _, name = mdb_id.partition("/")
        if tier_id not in self.tiers:
            raise UnknownMdb(f"未知的微数据库: {mdb_id}")
        return self.tiers[tier_id].mdb(name)

    def microdatabases(self) -> List[Microdatabase]:
        return [t.mdbs[n] for tid, t in sorted(self.tiers.items()) for n in sorted(t.mdbs)]

    # ------------------------------------------------------------------ 复制链路

    def configure_link(self, owner_principal: str, local: Tuple[str, str], remote: Tuple[str, str],
                       filter: Optional[FilterCriteria] = None) -> str:
        """
        在相邻层的两个同种类列存储之间配置副本链路；水位清零，不移动数据

        Args:
            owner_principal: 本地微数据库的管理员
            local: (mdb_id, store_id)
            remote: (mdb_id, store_id)
            filter: 过滤条件

        Raises:
            Unauthorized / KindMismatch / NonAdjacentTiers
        """
        local_mdb, remote_mdb = self.mdb(local[0]), self.mdb(remote[0])
        if not local_mdb.authorize(owner_principal, "*", Right.ADMIN):
            raise Unauthorized(f"{owner_principal}不是{local_mdb.mdb_id}的管理员")
        if local_mdb.tier_id == remote_mdb.tier_id or not self.adjacent(local_mdb.tier_id, remote_mdb.tier_id):
            raise NonAdjacentTiers(f"{local_mdb.tier_id} 与 {remote_mdb.tier_id} 在拓扑中不相邻")
        if local_mdb.store_kind(local[1]) is not remote_mdb.store_kind(remote[1]):
            raise KindMismatch(f"{local[0]}/{local[1]} 与 {remote[0]}/{remote[1]} 的种类不同")
        link = ReplicaLink(f"link-{next(self._link_ids):03d}", Endpoint(local_mdb, local[1]),
                           Endpoint(remote_mdb, remote[1]), filter or FilterCriteria())
        self.links.append(link)
        local_mdb.links.append(link)
        remote_mdb.links.append(link)
        logger.info(f"配置副本链路 {link.link_id}: {link.describe()}")
        return link.link_id

    def replica_link(self, link_id: str) -> ReplicaLink:
        for link in self.links:
            if link.link_id == link_id:
                return link
        raise KeyError(f"未知的副本链路: {link_id}")

    def sync_link(self, link: ReplicaLink, channel: Optional[Channel] = None) -> SyncReport:
        """
        Raises:
            LinkDown: 层间链路已断开
        """
        tier_a, tier_b = link.tiers
        return sync(link, self.link_up(tier_a, tier_b), channel,
                    self.config.get_runtime("sync_batch_size"))

    # ------------------------------------------------------------------ 事件

    def pump_events(self, tier_id: str, max_events: int) -> int:
        """按 (mdb_id, event_id) 顺序投递该层最多 max_events 条待处理事件"""
        tier = self.tier(tier_id)
        by_id = {m.mdb_id: m for m in tier.mdbs.values()}
        return pump_hubs(tier.hubs(), max_events, lambda hub: by_id[hub.mdb_id].lock)

    def pending_events(self, tier_id: str) -> int:
        return sum(h.pending_count() for h in self.tier(tier_id).hubs())

    # ------------------------------------------------------------------ 周期

    def run_cycle(self) -> CycleReport:
        """
        一个确定性周期：
        (1) 各层投递事件直到静止或预算耗尽 (2) 同步所有层间链路为 up 的副本链路
        (3) 保留期清理 (4) 推进工作请求的派发、过期与执行
        """
        self.cycle += 1
        report = CycleReport(self.cycle, self.clock.now)
        budget = self.config.get_runtime("pump_budget")
        max_pumps = self.config.get_runtime("max_pumps_per_cycle")
        for tier_id in sorted(self.tiers):
            for _ in range(max_pumps):
                delivered = self.pump_events(tier_id, budget)
                report.delivered += delivered
                if delivered == 0:
                    break

        up_links = []
        for link in self.links:
            if self.link_up(*link.tiers):
                up_links.append(link)
            else:
                report.links_down.append(link.link_id)
        report.syncs = self._sync_all(up_links)

        for mdb in self.microdatabases():
            report.purged += mdb.purge_retention(self.clock.now)

        self.work.advance(report)
        logger.info(f"周期 {self.cycle} 完成: 投递 {report.delivered}, 同步 {len(report.syncs)} 条链路, "
                    f"断开 {len(report.links_down)}, 清理 {report.purged}")
        return report

    def _sync_all(self, links: List[ReplicaLink]) -> List[SyncReport]:
        batch_size = self.config.get_runtime("sync_batch_size")
        if not self.config.get_runtime("parallel_sync") or len(links) < 2:
            return [sync(link, True, None, batch_size) for link in links]
        # 共享微数据库的链路保持原有先后顺序，互不相交的放进同一波并行执行
        waves: List[List[ReplicaLink]] = []
        last_wave: Dict[str, int] = {}
        for link in links:
            ids = [link.local.mdb.mdb_id, link.remote.mdb.mdb_id]
            wave = max((last_wave[i] + 1 for i in ids if i in last_wave), default=0)
            if wave == len(waves):
                waves.append([])
            waves[wave].append(link)
            for i in ids:
                last_wave[i] = wave
        reports: Dict[str, SyncReport] = {}
        with ThreadPoolExecutor(max_workers=4) as pool:
            for wave_links in waves:
                for link, result in zip(wave_links, pool.map(lambda l: sync(l, True, None, batch_size),
                                                             wave_links)):
                    reports[link.link_id] = result
        return [reports[link.link_id] for link in links]

    # ------------------------------------------------------------------ 平台服务

    def check_version(self, required_platform_version: str, tier_id: str) -> VersionCheck:
        """当且仅当组件要求的平台版本等于该层的平台版本时 ok"""
        actual = self.tier(tier_id).platform_version
        return VersionCheck(required_platform_version == actual, required_platform_version, actual)

    def register_principal(self, principal_id: str, kind: PrincipalKind, token: Optional[bytes] = None):
        return self.principals.register(principal_id, PrincipalKind(kind), token)

    def try_sync(self, link: ReplicaLink) -> Optional[SyncReport]:
        """同步一条链路；链路断开时返回 None"""
        try:
            return self.sync_link(link)
        except LinkDown as e:
            logger.warning(f"{link.link_id} 未同步: {e}")
            return None


def _pair(tier_a: str, tier_b: str) -> Tuple[str, str]:
    return (tier_a, tier_b) if tier_a <= tier_b else (tier_b, tier_a)
