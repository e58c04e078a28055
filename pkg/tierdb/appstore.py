"""
应用商店
可部署组件（应用、应用服务、微数据库模板）的目录：清单、真实性哈希、声明的连接、按版本把关的部署

清单文件是 YAML，字段名固定：
    kind: app | app_service | mdb_template
    name / version / required_platform_version
    declared_connections: [{mdb: 名称} | {related_data: 提供者ID} | {link: 层ID}]
    payload: 组件负载（内置实现名 + 描述数据）
    content_hash: "sha256:<hex>"，缺省时在打包时按负载计算
"""
import copy
import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Optional, Tuple

import yaml

from .components import build_app, get_service
from .errors import (
    DuplicateVersion, HashMismatch, InvalidManifest, Unauthorized, UnacknowledgedConnection, UnknownEntry,
    UnknownPublisher, VersionMismatch,
)
from .logger import logger
from .microdatabase import MdbTemplate
from .record import canonical_json

if TYPE_CHECKING:
    from .config_manager import ConfigManager
    from .topology import Topology

_VERSION_RE = re.compile(r"^\d+\.\d+\.\d+$")
CONVENTIONAL = "conventional"
CATALOG = "catalog"


class ComponentKind(Enum):
    APP = "app"
    APP_SERVICE = "app_service"
    MDB_TEMPLATE = "mdb_template"


class ConnectionKind(Enum):
    MDB = "mdb"
    RELATED_DATA = "related_data"
    LINK = "link"


@dataclass(frozen=True)
class Connection:
    """声明的连接：按名称的微数据库、关联数据提供者或跨层链路意图"""
    kind: ConnectionKind
    target: str

    @property
    def label(self) -> str:
        return f"{self.kind.value}:{self.target}"

    def to_dict(self):
        return {self.kind.value: self.target}


def content_hash(payload: Dict[str, Any]) -> str:
    """负载规范序列化的摘要，逐字节可复现"""
    return "sha256:" + hashlib.sha256(canonical_json(payload)).hexdigest()


def version_key(version: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in version.split("."))


@dataclass(frozen=True)
class Manifest:
    kind: ComponentKind
    name: str
    version: str
    required_platform_version: str
    declared_connections: Tuple[Connection, ...] = ()
    content_hash: str = ""

    @property
    def entry_id(self) -> str:
        return f"{self.name}@{self.version}"

    def connections(self, kind: ConnectionKind) -> List[str]:
        return [c.target for c in self.declared_connections if c.kind is kind]

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "name": self.name,
            "version": self.version,
            "required_platform_version": self.required_platform_version,
            "declared_connections": [c.to_dict() for c in self.declared_connections],
            "content_hash": self.content_hash,
        }


def _check_keys(value: Any, path: str):
    """负载中的映射键必须是字符串；YAML 1.1 会把裸写的 on/off/yes/no 读成布尔值"""
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise InvalidManifest(f"{path} 中的键 {key!r} 不是字符串（YAML 中 on/off/yes/no 作为键需要加引号）")
            _check_keys(item, f"{path}.{key}")
    elif isinstance(value, list):
        for index, item in enumerate(value):
            _check_keys(item, f"{path}[{index}]")


def parse_manifest(data: Dict[str, Any]) -> Tuple[Manifest, Dict[str, Any]]:
    """
    从字典解析清单与负载；缺少 content_hash 时按负载补齐

    Raises:
        InvalidManifest: 字段缺失或格式错误
    """
    if not isinstance(data, dict):
        raise InvalidManifest("清单必须是映射")
    missing = [f for f in ("kind", "name", "version", "required_platform_version", "payload") if f not in data]
    if missing:
        raise InvalidManifest(f"清单缺少字段: {', '.join(missing)}")
    try:
        kind = ComponentKind(data["kind"])
    except ValueError:
        raise InvalidManifest(f"未知的组件种类: {data['kind']}")
    for name in ("version", "required_platform_version"):
        if not _VERSION_RE.match(str(data[name])):
            raise InvalidManifest(f"{name} 不是语义化版本: {data[name]}")
    connections = []
    for raw in data.get("declared_connections") or []:
        if not isinstance(raw, dict) or len(raw) != 1:
            raise InvalidManifest(f"连接声明格式错误: {raw}")
        (key, target), = raw.items()
        try:
            connections.append(Connection(ConnectionKind(key), str(target)))
        except ValueError:
            raise InvalidManifest(f"未知的连接种类: {key}")
    payload = data["payload"]
    if not isinstance(payload, dict):
        raise InvalidManifest("payload 必须是映射")
    _check_keys(payload, "payload")
    # 经过一次 JSON 往返，保证负载只含可规范序列化的类型
    try:
        payload = json.loads(canonical_json(payload))
    except (TypeError, ValueError) as e:
        raise InvalidManifest(f"payload 无法规范序列化: {e}")
    manifest = Manifest(
        kind=kind,
        name=str(data["name"]),
        version=str(data["version"]),
        required_platform_version=str(data["required_platform_version"]),
        declared_connections=tuple(connections),
        content_hash=str(data.get("content_hash") or content_hash(payload)),
    )
    return manifest, payload


def load_manifest_file(path: str) -> Tuple[Manifest, Dict[str, Any]]:
    """读取 YAML 清单文件"""
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise InvalidManifest(f"{path}: YAML 解析失败: {e}")
    return parse_manifest(data)


def validate_payload(manifest: Manifest, payload: Dict[str, Any]):
    """
    负载与组件种类一致：模板必须是合法的 MdbTemplate，服务/应用必须引用内置实现

    Raises:
        InvalidManifest
    """
    try:
        if manifest.kind is ComponentKind.MDB_TEMPLATE:
            MdbTemplate.from_dict(payload)
        elif manifest.kind is ComponentKind.APP_SERVICE:
            get_service(payload.get("implementation", manifest.name))
        else:
            build_app(manifest.name, payload)
    except (ValueError, KeyError, TypeError) as e:
        raise InvalidManifest(f"{manifest.entry_id}: 负载无效: {e}")


@dataclass(frozen=True)
class CatalogEntry:
    """目录条目；发布后不可变，负载以规范JSON字节保存"""
    manifest: Manifest
    payload_bytes: bytes
    publisher: str
    published_ts: int

    @property
    def entry_id(self) -> str:
        return self.manifest.entry_id

    @property
    def payload(self) -> Dict[str, Any]:
        return json.loads(self.payload_bytes)

    def verify(self):
        actual = "sha256:" + hashlib.sha256(self.payload_bytes).hexdigest()
        if actual != self.manifest.content_hash:
            raise HashMismatch(f"{self.entry_id}: 负载哈希 {actual} 与清单 {self.manifest.content_hash} 不一致")

    def to_dict(self):
        return {
            "entry_id": self.entry_id,
            "manifest": self.manifest.to_dict(),
            "publisher": self.publisher,
            "published_ts": self.published_ts,
        }


@dataclass
class Deployment:
    """部署来源：目录条目 -> 层 -> 时间"""
    component_id: str
    kind: ComponentKind
    entry_id: str
    tier_id: str
    ts: int
    mode: str = CATALOG
    content_hash: str = ""
    acknowledged: Tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self):
        return {
            "component_id": self.component_id,
            "kind": self.kind.value,
            "entry_id": self.entry_id,
            "tier_id": self.tier_id,
            "ts": self.ts,
            "mode": self.mode,
            "content_hash": self.content_hash,
            "acknowledged": list(self.acknowledged),
        }


class Catalog:
    """应用商店目录，单一串行化域"""

    def __init__(self, config: Optional["ConfigManager"] = None):
        self.config = config
        self._entries: Dict[str, CatalogEntry] = {}
        self._lock = threading.RLock()
        self.deployments: List[Deployment] = []

    def publish(self, manifest: Manifest, payload: Dict[str, Any], publisher: str, now: int = 0) -> str:
        """
        发布新条目

        Raises:
            UnknownPublisher: 发布者不在审核白名单中
            HashMismatch: 负载与清单哈希不一致
            DuplicateVersion: (name, version) 已存在
            InvalidManifest: 负载与组件种类不符
        """
        if self.config is not None and not self.config.is_publisher_allowed(publisher):
            raise UnknownPublisher(f"发布者{publisher}未通过审核")
        entry = CatalogEntry(manifest, canonical_json(payload), publisher, now)
        entry.verify()
        validate_payload(manifest, payload)
        with self._lock:
            if entry.entry_id in self._entries:
                raise DuplicateVersion(f"{manifest.name} {manifest.version} 已发布")
            self._entries[entry.entry_id] = entry
        logger.info(f"应用商店: {publisher} 发布 {entry.entry_id} ({manifest.kind.value})")
        return entry.entry_id

    def get(self, entry_id: str) -> CatalogEntry:
        with self._lock:
            entry = self._entries.get(entry_id)
        if entry is None:
            raise UnknownEntry(f"目录中没有 {entry_id}")
        return entry

    def entries(self) -> List[CatalogEntry]:
        with self._lock:
            return list(self._entries.values())

    def search(self, name: Optional[str] = None, kind: Optional[ComponentKind] = None) -> List[CatalogEntry]:
        """合取匹配，按 (name, version 降序) 排序"""
        found = [
            e for e in self.entries()
            if (name is None or e.manifest.name == name) and (kind is None or e.manifest.kind is ComponentKind(kind))
        ]
        found.sort(key=lambda e: version_key(e.manifest.version), reverse=True)
        found.sort(key=lambda e: e.manifest.name)
        return found

    def deploy(self, entry_id: str, topology: "Topology", tier_id: str, owner: str,
               acknowledged: Iterable[str] = (), component_id: Optional[str] = None) -> str:
        return deploy(self.get(entry_id), topology, tier_id, owner, acknowledged, component_id, catalog=self)

    def provenance(self, component_id: str, tier_id: str) -> Deployment:
        for deployment in self.deployments:
            if deployment.component_id == component_id and deployment.tier_id == tier_id:
                return deployment
        raise UnknownEntry(f"层{tier_id}中的组件{component_id}没有部署记录")


def unsatisfied_connections(manifest: Manifest, topology: "Topology", tier_id: str) -> List[Connection]:
    """层内无法满足的连接声明"""
    tier = topology.tier(tier_id)
    missing = []
    for connection in manifest.declared_connections:
        if connection.kind is ConnectionKind.MDB:
            ok = connection.target in tier.mdbs
        elif connection.kind is ConnectionKind.RELATED_DATA:
            ok = connection.target in tier.apps.providers
        else:
            ok = topology.adjacent(tier_id, connection.target) if connection.target in topology.tiers else False
        if not ok:
            missing.append(connection)
    return missing


def deploy(entry: CatalogEntry, topology: "Topology", tier_id: str, owner: str, acknowledged: Iterable[str] = (),
           component_id: Optional[str] = None, catalog: Optional[Catalog] = None,
           conventional: bool = False) -> str:
    """
    把目录条目部署到层

    Args:
        entry: 目录条目
        topology: 拓扑
        tier_id: 目标层
        owner: 层所有者主体
        acknowledged: 所有者显式确认的连接，形如 "related_data:weather"
        component_id: 组件ID；默认使用清单名称
        catalog: 记录部署来源的目录
        conventional: 绕过目录的常规安装，来源标记为 conventional

    Returns:
        部署后的组件ID（模板为 mdb_id）

    Raises:
        Unauthorized / VersionMismatch / UnacknowledgedConnection / HashMismatch
    """
    tier = topology.tier(tier_id)
    if tier.owner is None or owner != tier.owner:
        raise Unauthorized(f"{owner}不是层{tier_id}的所有者")
    entry.verify()
    manifest = entry.manifest
    check = topology.check_version(manifest.required_platform_version, tier_id)
    if not check.ok:
        raise VersionMismatch(f"{manifest.entry_id} 需要平台 {check.required}，层{tier_id}为 {check.actual}")
    acknowledged = set(acknowledged)
    for connection in unsatisfied_connections(manifest, topology, tier_id):
        if connection.label not in acknowledged:
            raise UnacknowledgedConnection(f"{manifest.entry_id} 的连接 {connection.label} 在层{tier_id}中"
                                           f"无法满足且未被确认")

    payload = entry.payload
    if manifest.kind is ComponentKind.MDB_TEMPLATE:
        template = MdbTemplate.from_dict(payload)
        if component_id:
            template = MdbTemplate(component_id, template.stores, template.asset_types)
        deployed = topology.create_microdatabase(template, owner, tier_id)
    elif manifest.kind is ComponentKind.APP_SERVICE:
        descriptor = get_service(payload.get("implementation", manifest.name))
        descriptor.params.update(copy.deepcopy(payload.get("params", {})))
        descriptor.required_platform_version = manifest.required_platform_version
        descriptor.providers = tuple(manifest.connections(ConnectionKind.RELATED_DATA))
        deployed = tier.apps.register_service(descriptor, owner, component_id or manifest.name)
    else:
        descriptor = build_app(manifest.name, payload)
        descriptor.required_platform_version = manifest.required_platform_version
        descriptor.providers = tuple(manifest.connections(ConnectionKind.RELATED_DATA))
        deployed = tier.apps.register_app(descriptor, owner, component_id or manifest.name)

    deployment = Deployment(deployed, manifest.kind, manifest.entry_id, tier_id, topology.clock.now,
                            CONVENTIONAL if conventional else CATALOG, manifest.content_hash,
                            tuple(sorted(acknowledged)))
    tier.deployments.append(deployment.to_dict())
    if catalog is not None:
        catalog.deployments.append(deployment)
    logger.info(f"部署 {manifest.entry_id} -> {tier_id} 为 {deployed} ({deployment.mode})")
    return deployed


def install_conventional(manifest: Manifest, payload: Dict[str, Any], topology: "Topology", tier_id: str,
                         owner: str, acknowledged: Iterable[str] = (), component_id: Optional[str] = None,
                         catalog: Optional[Catalog] = None) -> str:
    """常规安装：不经目录发布，仍校验哈希与版本"""
    validate_payload(manifest, payload)
    entry = CatalogEntry(manifest, canonical_json(payload), owner, topology.clock.now)
    return deploy(entry, topology, tier_id, owner, acknowledged, component_id, catalog, conventional=True)
