"""
应用框架
层内的 MVC 组合层：
- 应用服务 (View)：按数据绑定读取输入、融合计算、写出声明的输出
- 应用 (Controller)：按事件、调度标签和工作请求编排服务
- 数据绑定与关联数据接口

服务没有订阅和提交工作请求的能力，应用没有写入能力；所有访问都记录到审计日志
"""
import fnmatch
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any, Callable, Dict, List, Optional, Set, Tuple, Union

from .column_store import StoreKind
from .errors import (
    ComputeFailure, CrossTierReference, KindMismatch, ProviderFailure, TierDBError, Unauthorized, UndeclaredProvider,
    UnknownParam, UnknownService, UnknownSlot, UnknownStore, UnresolvedInput, VersionMismatch,
)
from .events import Event, Handler
from .logger import logger
from .provider_base import RelatedDataProvider, RelatedPoint, parse_query
from .record import Value, ValueKind, validate_value, value_kind
from .security import PrincipalKind, Right
from .work_request import WorkRequest

if TYPE_CHECKING:
    from .microdatabase import Microdatabase
    from .topology import CycleReport, Tier, Topology

GLOB_CHARS = "*?["


# ---------------------------------------------------------------------- 描述符

@dataclass(frozen=True)
class BindingSlot:
    """
    绑定槽

    many=True 的输入槽按通配符键解析为 {key: value}；
    series=True 的输入槽解析为时间窗口内的 [(ts, value), ...]
    """
    slot_name: str
    value_kind: ValueKind
    unit: str = ""
    many: bool = False
    series: bool = False

    def accepts(self, value: Value) -> bool:
        kind = value_kind(value)
        return kind is self.value_kind or (self.value_kind is ValueKind.FLOAT and kind is ValueKind.INT)


ComputeFn = Callable[[Dict[str, Any], Dict[str, Value]], Dict[str, Value]]


@dataclass
class AppServiceDescriptor:
    name: str
    required_inputs: List[BindingSlot]
    outputs: List[BindingSlot]
    params: Dict[str, Value]
    compute: ComputeFn
    required_platform_version: str = ""
    providers: Tuple[str, ...] = ()

    def slot(self, slot_name: str) -> Optional[BindingSlot]:
        for slot in self.required_inputs + self.outputs:
            if slot.slot_name == slot_name:
                return slot
        return None

    def is_output(self, slot_name: str) -> bool:
        return any(s.slot_name == slot_name for s in self.outputs)


@dataclass(frozen=True)
class MdbSource:
    """微数据库数据源；键模式中的 {asset} 在解析时替换为资产规范ID"""
    mdb: str
    store: str
    key_pattern: str
    window_ms: int = 86_400_000


@dataclass(frozen=True)
class RelatedSource:
    """关联数据源；查询模板支持 {asset} 与 {geo}（来自互操作注册表的 geo 别名）"""
    provider_id: str
    query: str
    window_ms: int = 3_600_000


Source = Union[MdbSource, RelatedSource]


@dataclass(frozen=True)
class Binding:
    slot_name: str
    source: Source


@dataclass(frozen=True)
class EventTrigger:
    """事件模式：微数据库名、列存储名、键，均为通配符"""
    mdb: str
    store: str
    key_glob: str = "*"


@dataclass(frozen=True)
class WorkTrigger:
    operation: str


@dataclass(frozen=True)
class ScheduleTrigger:
    tag: str


@dataclass(frozen=True)
class Invoke:
    service_id: str
    asset: Optional[str] = None


@dataclass(frozen=True)
class SubmitWork:
    target_tier: str
    operation: str
    mdb: str
    store: str


Trigger = Union[EventTrigger, WorkTrigger, ScheduleTrigger]
Action = Union[Invoke, SubmitWork]


@dataclass(frozen=True)
class Rule:
    on: Trigger
    do: Action


@dataclass
class AppDescriptor:
    name: str
    rules: List[Rule]
    required_platform_version: str = ""
    providers: Tuple[str, ...] = ()


@dataclass(frozen=True)
class DispatchedAction:
    """规则匹配后得到的动作及其上下文"""
    action: Action
    asset: Optional[str]
    as_of: int
    trigger: str


def dispatch_rules(app: AppDescriptor, trigger: Union[Event, WorkRequest, ScheduleTrigger],
                   now: int) -> List[DispatchedAction]:
    """
    纯函数：某个触发匹配到的动作，按规则声明顺序

    事件触发时资产取键的第一段 (key.split("/")[0])，as_of 取事件 ts；
    工作请求触发时资产取参数 asset，as_of 取当前逻辑时间
    """
    actions = []
    for rule in app.rules:
        if isinstance(trigger, Event) and isinstance(rule.on, EventTrigger):
            mdb_name = trigger.mdb_id.partition("/")[2]
            if (fnmatch.fnmatchcase(mdb_name, rule.on.mdb) and fnmatch.fnmatchcase(trigger.store_id, rule.on.store)
                    and fnmatch.fnmatchcase(trigger.key, rule.on.key_glob)):
                actions.append(DispatchedAction(rule.do, trigger.key.split("/")[0], trigger.ts,
                                                f"event {trigger.mdb_id}#{trigger.event_id}"))
        elif isinstance(trigger, WorkRequest) and isinstance(rule.on, WorkTrigger):
            if trigger.operation == rule.on.operation:
                asset = trigger.params.get("asset")
                actions.append(DispatchedAction(rule.do, None if asset is None else str(asset), now,
                                                f"work {trigger.request_id}"))
        elif isinstance(trigger, ScheduleTrigger) and isinstance(rule.on, ScheduleTrigger):
            if trigger.tag == rule.on.tag:
                actions.append(DispatchedAction(rule.do, None, now, f"schedule {trigger.tag}"))
    return actions


# ---------------------------------------------------------------------- 运行时实例

@dataclass
class ServiceInstance:
    service_id: str
    descriptor: AppServiceDescriptor
    principal_id: str
    params: Dict[str, Value]
    bindings: Dict[str, Binding] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)
    invocations: int = 0


@dataclass
class AppInstance:
    app_id: str
    descriptor: AppDescriptor
    principal_id: str
    subscriptions: List[str] = field(default_factory=list)
    trace: List[Dict[str, Any]] = field(default_factory=list)


class AppRuntime:
    """
    单个层内的应用、服务与关联数据提供者

    服务调用与规则分派都在所属层的事件泵内串行执行
    """

    def __init__(self, tier: "Tier", topology: "Topology"):
        self.tier = tier
        self.topology = topology
        self.services: Dict[str, ServiceInstance] = {}
        self.apps: Dict[str, AppInstance] = {}
        self.providers: Dict[str, RelatedDataProvider] = {}
        # 组件 -> 运行时实际使用过的外部连接
        self.connections_used: Dict[str, Set[str]] = {}

    @property
    def tier_id(self) -> str:
        return self.tier.tier_id

    # ------------------------------------------------------------------ 工具

    def _require_owner(self, principal_id: str):
        if self.tier.owner is None or principal_id != self.tier.owner:
            raise Unauthorized(f"{principal_id}不是层{self.tier_id}的所有者")

    def _check_version(self, required: str, name: str):
        check = self.topology.check_version(required or self.tier.platform_version, self.tier_id)
        if not check.ok:
            raise VersionMismatch(f"{name} 需要平台 {check.required}，层{self.tier_id}为 {check.actual}")

    def _local_mdb(self, ref: str) -> "Microdatabase":
        """解析本层微数据库引用；带其他层前缀的引用是跨层引用"""
        tier_id, sep, name = ref.rpartition("/")
        if sep and tier_id != self.tier_id:
            raise CrossTierReference(f"层{self.tier_id}中的组件不能引用{ref}")
        return self.tier.mdb(name)

    def _component_principal(self, component_id: str) -> str:
        return f"{component_id}@{self.tier_id}"

    def _audit(self, component: str, mdb: "Microdatabase", op: str, detail: str = ""):
        self.topology.audit.record(component, self.tier_id, mdb.mdb_id, mdb.tier_id, op, detail)

    def _next_id(self, name: str, taken) -> str:
        if name not in taken:
            return name
        n = 2
        while f"{name}-{n}" in taken:
            n += 1
        return f"{name}-{n}"

    def service(self, service_id: str) -> ServiceInstance:
        instance = self.services.get(service_id)
        if instance is None:
            raise UnknownService(f"层{self.tier_id}中没有服务{service_id}")
        return instance

    # ------------------------------------------------------------------ 关联数据

    def register_provider(self, provider: RelatedDataProvider):
        self.providers[provider.provider_id] = provider
        logger.info(f"{self.tier_id}: 注册关联数据提供者 {provider.provider_id} ({provider.kind})")

    def _declared_providers(self, component_id: str) -> Tuple[str, ...]:
        if component_id in self.services:
            return self.services[component_id].descriptor.providers
        if component_id in self.apps:
            return self.apps[component_id].descriptor.providers
        raise UnknownService(f"层{self.tier_id}中没有组件{component_id}")

    def fetch_related(self, component_id: str, provider_id: str, query: Dict[str, Any]) -> List[RelatedPoint]:
        """
        组件通过关联数据接口取数；结果不落库、不产生事件

        Raises:
            UndeclaredProvider: 组件没有声明该连接
            ProviderFailure: 提供者未注册或查询出错
        """
        if provider_id not in self._declared_providers(component_id):
            raise UndeclaredProvider(f"{component_id} 没有声明关联数据连接 {provider_id}")
        provider = self.providers.get(provider_id)
        if provider is None:
            raise ProviderFailure(f"层{self.tier_id}中没有注册提供者 {provider_id}")
        self.connections_used.setdefault(component_id, set()).add(provider_id)
        try:
            return list(provider.fetch(dict(query)))
        except Exception as e:
            logger.warning(f"{component_id} 访问 {provider_id} 失败: {e}")
            raise ProviderFailure(f"{provider_id}: {e}") from e

    # ------------------------------------------------------------------ 服务

    def register_service(self, descriptor: AppServiceDescriptor, principal_id: str,
                         service_id: Optional[str] = None) -> str:
        """
        注册应用服务，只在本层可见；参数从配置列存储恢复

        Args:
            descriptor: 服务描述符
            principal_id: 部署者，必须是层所有者
            service_id: 指定ID；默认按名称分配，重名时加序号

        Raises:
            VersionMismatch / Unauthorized
        """
        self._check_version(descriptor.required_platform_version, descriptor.name)
        self._require_owner(principal_id)
        service_id = service_id or self._next_id(descriptor.name, set(self.services) | set(self.apps))
        if service_id in self.services or service_id in self.apps:
            raise ValueError(f"层{self.tier_id}中已存在组件{service_id}")
        component_principal = self._component_principal(service_id)
        self.topology.register_principal(component_principal, PrincipalKind.APP_SERVICE)
        instance = ServiceInstance(service_id, descriptor, component_principal, dict(descriptor.params))
        self.services[service_id] = instance
        self.rehydrate(service_id)
        logger.info(f"{self.tier_id}: 注册服务 {service_id} ({descriptor.name})")
        return service_id

    def remove_service(self, service_id: str):
        self.service(service_id)
        del self.services[service_id]

    def bind(self, service_id: str, slot_name: str, source: Source, principal_id: str):
        """
        绑定槽位到数据源

        Raises:
            UnknownSlot: 槽位不存在
            Unauthorized: 绑定者和服务主体都没有所需权限（输入需要 read，输出需要 write）
            CrossTierReference / UnknownMdb / UnknownStore
        """
        instance = self.service(service_id)
        slot = instance.descriptor.slot(slot_name)
        if slot is None:
            raise UnknownSlot(f"服务{service_id}没有槽位{slot_name}")
        if isinstance(source, MdbSource):
            mdb = self._local_mdb(source.mdb)
            if source.store not in mdb.stores:
                raise UnknownStore(f"{mdb.mdb_id}中没有列存储{source.store}")
            right = Right.WRITE if instance.descriptor.is_output(slot_name) else Right.READ
            if not (mdb.authorize(principal_id, source.store, right)
                    or mdb.authorize(instance.principal_id, source.store, right)):
                raise Unauthorized(f"{principal_id}没有{mdb.mdb_id}/{source.store}的{right.value}权限")
            source = replace(source, mdb=mdb.name)
        instance.bindings[slot_name] = Binding(slot_name, source)
        logger.debug(f"{self.tier_id}: 绑定 {service_id}.{slot_name} -> {source}")

    def _resolve(self, instance: ServiceInstance, slot: BindingSlot, asset: str, as_of: int) -> Any:
        binding = instance.bindings.get(slot.slot_name)
        if binding is None:
            raise UnresolvedInput(f"{instance.service_id}.{slot.slot_name} 没有绑定")
        source = binding.source
        if slot.series:
            if not isinstance(source, MdbSource):
                raise UnresolvedInput(f"{instance.service_id}.{slot.slot_name} 的时间序列只能绑定到列存储")
            series = self._resolve_series(instance, slot, source, asset, as_of)
            for ts, value in series:
                if not slot.accepts(value):
                    raise KindMismatch(f"{instance.service_id}.{slot.slot_name} 需要 {slot.value_kind.value}，"
                                       f"ts={ts} 为 {value_kind(value).value}")
            return series
        if isinstance(source, RelatedSource):
            value = self._resolve_related(instance, slot, source, asset, as_of)
            values = {slot.slot_name: value}
        else:
            values = self._resolve_mdb(instance, slot, source, asset, as_of)
        for key, value in values.items():
            if not slot.accepts(value):
                raise KindMismatch(f"{instance.service_id}.{slot.slot_name} 需要 {slot.value_kind.value}，"
                                   f"{key} 为 {value_kind(value).value}")
        return values if slot.many else next(iter(values.values()))

    def _resolve_mdb(self, instance: ServiceInstance, slot: BindingSlot, source: MdbSource, asset: str,
                     as_of: int) -> Dict[str, Value]:
        mdb = self.tier.mdb(source.mdb)
        pattern = source.key_pattern.replace("{asset}", asset)
        if any(c in pattern for c in GLOB_CHARS):
            keys = [k for k in mdb.keys(source.store, instance.principal_id) if fnmatch.fnmatchcase(k, pattern)]
        else:
            keys = [pattern]
        values = {}
        for key in keys:
            record = mdb.latest(source.store, key, as_of, instance.principal_id)
            self._audit(instance.service_id, mdb, "read", f"{source.store}/{key}")
            if record is not None:
                values[key] = record.value
        if not values:
            raise UnresolvedInput(f"{instance.service_id}.{slot.slot_name}: {mdb.mdb_id}/{source.store}/{pattern} "
                                  f"在 {as_of} 及之前没有记录")
        return values

    def _resolve_series(self, instance: ServiceInstance, slot: BindingSlot, source: MdbSource, asset: str,
                        as_of: int) -> List[Tuple[int, Value]]:
        mdb = self.tier.mdb(source.mdb)
        key = source.key_pattern.replace("{asset}", asset)
        records = mdb.range(source.store, key, as_of - source.window_ms, as_of, instance.principal_id)
        self._audit(instance.service_id, mdb, "read", f"{source.store}/{key}")
        if not records:
            raise UnresolvedInput(f"{instance.service_id}.{slot.slot_name}: {mdb.mdb_id}/{source.store}/{key} "
                                  f"在窗口内没有记录")
        return [(r.ts, r.value) for r in records]

    def _resolve_related(self, instance: ServiceInstance, slot: BindingSlot, source: RelatedSource,
                         asset: str, as_of: int) -> Value:
        text = source.query.replace("{asset}", asset)
        if "{geo}" in text:
            geo = [v for s, v in self.tier.aliases.aliases_for(asset) if s == "geo"]
            if not geo:
                raise UnresolvedInput(f"{asset} 没有注册 geo 别名")
            text = text.replace("{geo}", geo[0])
        query = parse_query(text)
        query["t0"] = as_of - source.window_ms
        query["t1"] = as_of
        points = [p for p in self.fetch_related(instance.service_id, source.provider_id, query) if p.ts <= as_of]
        if not points:
            raise UnresolvedInput(f"{instance.service_id}.{slot.slot_name}: {source.provider_id} 没有 {as_of} 及之前的数据")
        return max(points, key=lambda p: (p.ts, p.key)).value

    def invoke_service(self, service_id: str, asset: str, as_of: int) -> Dict[str, Value]:
        """
        解析全部输入（as_of 及之前的最新记录），计算，并把输出以 ts = as_of 写入绑定的列存储

        Returns:
            计算得到的输出

        Raises:
            UnresolvedInput: 某个输入槽没有可用记录
            ComputeFailure: 计算回调出错，不写任何输出
        """
        instance = self.service(service_id)
        descriptor = instance.descriptor
        inputs = {slot.slot_name: self._resolve(instance, slot, asset, as_of) for slot in descriptor.required_inputs}
        try:
            outputs = descriptor.compute(inputs, dict(instance.params))
            for name, value in outputs.items():
                slot = descriptor.slot(name)
                if slot is None or not descriptor.is_output(name):
                    raise ValueError(f"未声明的输出 {name}")
                if not slot.accepts(value):
                    raise ValueError(f"输出 {name} 需要 {slot.value_kind.value}")
        except Exception as e:
            instance.failures.append(f"{asset}@{as_of}: {e}")
            logger.warning(f"{self.tier_id}: 服务 {service_id} 计算失败: {e}")
            raise ComputeFailure(f"{service_id}: {e}") from e

        instance.invocations += 1
        for name in sorted(outputs):
            binding = instance.bindings.get(name)
            if binding is None or not isinstance(binding.source, MdbSource):
                continue
            mdb = self.tier.mdb(binding.source.mdb)
            key = binding.source.key_pattern.replace("{asset}", asset)
            mdb.put(binding.source.store, key, as_of, outputs[name], instance.principal_id)
            self._audit(service_id, mdb, "write", f"{binding.source.store}/{key}")
        logger.debug(f"{self.tier_id}: 服务 {service_id} 完成 asset={asset} as_of={as_of}")
        return dict(outputs)

    # ------------------------------------------------------------------ 参数

    def config_location(self) -> Tuple["Microdatabase", str]:
        """本层第一个 config 种类的列存储（按微数据库名、列存储名排序）"""
        for name in sorted(self.tier.mdbs):
            mdb = self.tier.mdbs[name]
            for store_id in sorted(mdb.stores):
                if mdb.stores[store_id].kind is StoreKind.CONFIG:
                    return mdb, store_id
        raise UnknownStore(f"层{self.tier_id}中没有 config 列存储")

    def set_param(self, service_id: str, name: str, value: Value, principal_id: str):
        """
        调整服务参数：写入本层 config 列存储 (key = service_id/name) 并立即生效

        Raises:
            UnknownParam / Unauthorized
        """
        instance = self.service(service_id)
        if name not in instance.descriptor.params:
            raise UnknownParam(f"服务{service_id}没有参数{name}")
        value = validate_value(value)
        mdb, store_id = self.config_location()
        mdb.put(store_id, f"{service_id}/{name}", self.topology.clock.now, value, principal_id)
        instance.params[name] = value
        logger.info(f"{self.tier_id}: {service_id}.{name} = {value!r}")

    def rehydrate(self, service_id: str) -> Dict[str, Value]:
        """从 config 列存储恢复参数；没有 config 列存储时保持默认值"""
        instance = self.service(service_id)
        try:
            mdb, store_id = self.config_location()
        except UnknownStore:
            return dict(instance.params)
        now = self.topology.clock.now
        with mdb.lock:
            store = mdb.stores[store_id]
            for name in instance.descriptor.params:
                record = store.latest(f"{service_id}/{name}", now)
                if record is not None:
                    instance.params[name] = record.value
        return dict(instance.params)

    # ------------------------------------------------------------------ 应用

    def _check_action(self, action: Action):
        if isinstance(action, Invoke):
            ref = action.service_id
            service_id, sep, tier_id = ref.partition("@")
            if sep and tier_id != self.tier_id:
                raise CrossTierReference(f"层{self.tier_id}中的规则不能引用{ref}")
            if service_id in self.services:
                return
            for other_id, other in self.topology.tiers.items():
                if other_id != self.tier_id and service_id in other.apps.services:
                    raise CrossTierReference(f"服务{service_id}位于层{other_id}，不在{self.tier_id}")
            raise UnknownService(f"层{self.tier_id}中没有服务{service_id}")
        mdb = self._local_mdb(action.mdb)
        if mdb.store_kind(action.store) is not StoreKind.WORK:
            raise UnknownStore(f"{mdb.mdb_id}/{action.store} 不是 work 列存储")

    def register_app(self, descriptor: AppDescriptor, principal_id: str, app_id: Optional[str] = None) -> str:
        """
        注册应用；事件规则在本层匹配的列存储上订阅

        Raises:
            VersionMismatch / Unauthorized / UnknownService / CrossTierReference
        """
        self._check_version(descriptor.required_platform_version, descriptor.name)
        self._require_owner(principal_id)
        for rule in descriptor.rules:
            self._check_action(rule.do)
            if isinstance(rule.on, EventTrigger) and "/" in rule.on.mdb:
                self._local_mdb(rule.on.mdb)
        app_id = app_id or self._next_id(descriptor.name, set(self.services) | set(self.apps))
        if app_id in self.services or app_id in self.apps:
            raise ValueError(f"层{self.tier_id}中已存在组件{app_id}")
        component_principal = self._component_principal(app_id)
        self.topology.register_principal(component_principal, PrincipalKind.APP)
        instance = AppInstance(app_id, descriptor, component_principal)

        watched = set()
        for rule in descriptor.rules:
            if not isinstance(rule.on, EventTrigger):
                continue
            pattern = rule.on.mdb.rpartition("/")[2]
            for name in sorted(self.tier.mdbs):
                if not fnmatch.fnmatchcase(name, pattern):
                    continue
                mdb = self.tier.mdbs[name]
                for store_id in sorted(mdb.stores):
                    if fnmatch.fnmatchcase(store_id, rule.on.store):
                        watched.add((name, store_id))
        handler = Handler(app_id, self.tier_id, lambda event, app=instance: self._on_event(app, event))
        subscribed = []
        try:
            for name, store_id in sorted(watched):
                mdb = self.tier.mdbs[name]
                with mdb.lock:
                    subscribed.append((mdb, mdb.hub.subscribe(store_id, component_principal, handler)))
        except Exception:
            for mdb, sub_id in subscribed:
                mdb.hub.unsubscribe(sub_id)
            raise
        instance.subscriptions = [sub_id for _, sub_id in subscribed]
        self.apps[app_id] = instance
        logger.info(f"{self.tier_id}: 注册应用 {app_id} ({len(descriptor.rules)} 条规则, "
                    f"{len(instance.subscriptions)} 个订阅)")
        return app_id

    def _on_event(self, app: AppInstance, event: Event):
        mdb = self.topology.mdb(event.mdb_id)
        for dispatched in dispatch_rules(app.descriptor, event, self.topology.clock.now):
            self._audit(app.app_id, mdb, "dispatch", f"{event.store_id}/{event.key}")
            self._execute(app, dispatched)

    def _execute(self, app: AppInstance, dispatched: DispatchedAction, raise_errors: bool = False) -> Dict[str, Value]:
        """执行一个动作；事件和调度路径上的错误只记录不传播"""
        action = dispatched.action
        entry = {"trigger": dispatched.trigger, "asset": dispatched.asset, "as_of": dispatched.as_of}
        try:
            if isinstance(action, Invoke):
                service_id = action.service_id.partition("@")[0]
                asset = dispatched.asset or action.asset or self.tier_id
                entry.update(action="invoke", target=service_id, asset=asset)
                result = self.invoke_service(service_id, asset, dispatched.as_of)
            else:
                mdb = self._local_mdb(action.mdb)
                params: Dict[str, Value] = {"as_of": dispatched.as_of}
                if dispatched.asset is not None:
                    params["asset"] = dispatched.asset
                entry.update(action="submit_work", target=f"{action.target_tier}:{action.operation}")
                request_id = self.topology.work.submit_work_request(
                    mdb, action.store, action.target_tier, action.operation, params, app.principal_id)
                self._audit(app.app_id, mdb, "submit_work", f"{action.store}/{request_id}")
                result = {"request_id": request_id}
            entry["ok"] = True
            return result
        except Exception as e:
            entry.update(ok=False, error=str(e))
            if isinstance(e, TierDBError):
                logger.warning(f"{self.tier_id}: 应用 {app.app_id} 处理 {dispatched.trigger} 失败: {e}")
            else:
                logger.error(f"{self.tier_id}: 应用 {app.app_id} 处理 {dispatched.trigger} 失败: {e}",
                             exc_info=True)
            if raise_errors:
                raise
            return {}
        finally:
            app.trace.append(entry)

    def fire_schedule(self, tag: str) -> int:
        """触发调度标签，返回执行的动作数"""
        count = 0
        now = self.topology.clock.now
        for app_id in sorted(self.apps):
            app = self.apps[app_id]
            for dispatched in dispatch_rules(app.descriptor, ScheduleTrigger(tag), now):
                self._execute(app, dispatched)
                count += 1
        return count

    def process_work(self, report: "CycleReport"):
        """
        周期内执行方一侧：各应用领取与其工作规则匹配的请求，调用服务并完成请求
        """
        work = self.topology.work
        for app_id in sorted(self.apps):
            app = self.apps[app_id]
            operations = {r.on.operation for r in app.descriptor.rules if isinstance(r.on, WorkTrigger)}
            if not operations:
                continue
            try:
                requests = work.poll_work(self.tier_id, app.principal_id, operations)
            except Unauthorized as e:
                logger.warning(f"{self.tier_id}: 应用 {app_id} 不能领取工作请求: {e}")
                continue
            report.accepted += len(requests)
            for request in requests:
                work.mark_executing(self.tier_id, request.request_id)
                result: Dict[str, Value] = {}
                try:
                    for dispatched in dispatch_rules(app.descriptor, request, self.topology.clock.now):
                        result.update(self._execute(app, dispatched, raise_errors=True))
                except Exception as e:
                    work.complete_work(self.tier_id, request.request_id, failure=str(e))
                    report.failed += 1
                else:
                    work.complete_work(self.tier_id, request.request_id, result=result)
                    report.completed += 1

    def describe(self) -> Dict[str, Any]:
        return {
            "services": {
                sid: {
                    "name": s.descriptor.name,
                    "principal": s.principal_id,
                    "params": {k: s.params[k] for k in sorted(s.params)},
                    "invocations": s.invocations,
                    "failures": len(s.failures),
                }
                for sid, s in sorted(self.services.items())
            },
            "apps": {
                aid: {"name": a.descriptor.name, "principal": a.principal_id, "dispatches": len(a.trace)}
                for aid, a in sorted(self.apps.items())
            },
            "providers": sorted(self.providers),
        }
