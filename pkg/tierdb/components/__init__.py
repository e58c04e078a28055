"""
内置组件模块
应用商店的清单按名称选择这里注册的实现，不加载动态代码
"""
from typing import Any, Dict, List

from ..app_framework import (
    AppDescriptor, AppServiceDescriptor, EventTrigger, Invoke, Rule, ScheduleTrigger, SubmitWork, WorkTrigger,
)
from .transformer import fleet_service, health_service, overload_service

# 服务注册表（描述符工厂）
SERVICES = {
    "transformer-health": health_service,
    "fleet-health": fleet_service,
    "overload-kpi": overload_service,
}

# 应用实现：规则编排是唯一的控制器实现，规则来自清单负载
APP_IMPLEMENTATIONS = ("rules",)


def get_service(implementation: str) -> AppServiceDescriptor:
    """
    Raises:
        KeyError: 未知的服务实现
    """
    factory = SERVICES.get(implementation)
    if factory is None:
        raise KeyError(f"未知的服务实现: {implementation}")
    return factory()


def list_services() -> List[str]:
    return list(SERVICES.keys())


def parse_rule(data: Dict[str, Any]) -> Rule:
    """
    解析清单中的一条规则

    on: {event: {mdb, store, key}} | {work: operation} | {schedule: tag}
    do: {invoke: service_id, asset?} | {submit_work: {target_tier, operation, mdb, store}}

    Raises:
        ValueError: 规则格式错误
    """
    on, do = data.get("on"), data.get("do")
    if not isinstance(on, dict) or not isinstance(do, dict):
        raise ValueError(f"规则需要 on 和 do: {data}")
    if "event" in on:
        event = on["event"]
        trigger = EventTrigger(event.get("mdb", "*"), event.get("store", "*"), event.get("key", "*"))
    elif "work" in on:
        trigger = WorkTrigger(str(on["work"]))
    elif "schedule" in on:
        trigger = ScheduleTrigger(str(on["schedule"]))
    else:
        raise ValueError(f"未知的触发类型: {on}")
    if "invoke" in do:
        action = Invoke(str(do["invoke"]), do.get("asset"))
    elif "submit_work" in do:
        spec = do["submit_work"]
        action = SubmitWork(spec["target_tier"], spec["operation"], spec["mdb"], spec["store"])
    else:
        raise ValueError(f"未知的动作类型: {do}")
    return Rule(trigger, action)


def build_app(name: str, payload: Dict[str, Any]) -> AppDescriptor:
    """由清单负载构造应用描述符"""
    implementation = payload.get("implementation", "rules")
    if implementation not in APP_IMPLEMENTATIONS:
        raise KeyError(f"未知的应用实现: {implementation}")
    return AppDescriptor(name, [parse_rule(r) for r in payload.get("rules", [])])
