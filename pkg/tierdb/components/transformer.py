"""
变压器资产健康示例
- transformer_health: 单台变压器健康评分（本地层服务）
- fleet_health: 机队健康汇总（区域层服务）
- overload_count: 过载次数 KPI

评分公式是声明的替代算法，不代表真实的热模型或油中溶解气体判据：
score = clamp(100 - w_load*max(0, load-100) - w_thermal*max(0, top_oil-(65+0.8*ambient)) - w_gas*dga, 0, 100)
"""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Sequence, Tuple, Union

from ..app_framework import AppServiceDescriptor, BindingSlot
from ..errors import EmptyFleet, InvalidParams
from ..record import Value, ValueKind

DEFAULT_HEALTH_PARAMS: Dict[str, Value] = {
    "w_load": 0.5,
    "w_thermal": 1.0,
    "w_gas": 0.02,
    "t_inspect": 80.0,
    "t_degas": 60.0,
    "t_refurbish": 40.0,
}

DEFAULT_FLEET_PARAMS: Dict[str, Value] = {
    "fleet_size": 1,
    "threshold": 50.0,
}

OVERLOAD_LIMIT = 100.0


class Recommendation(Enum):
    NONE = "none"
    INSPECT = "inspect"
    DEGAS = "degas"
    REFURBISH = "refurbish"


@dataclass(frozen=True)
class Nameplate:
    vendor: str = ""
    voltage_class: str = ""
    in_service_date: str = ""


@dataclass(frozen=True)
class TransformerInputs:
    load_pct: float
    top_oil_temp: float
    dga_ppm: float
    ambient_temp: float
    nameplate: Nameplate = Nameplate()


@dataclass(frozen=True)
class HealthResult:
    score: float
    drivers: Dict[str, float]
    recommendation: Recommendation


@dataclass(frozen=True)
class FleetResult:
    fleet_mean: float
    worst_id: str
    worst_score: float
    below_threshold_count: int
    coverage_pct: float


def recommend(score: float, params: Mapping[str, Value]) -> Recommendation:
    """按阈值从低到高判断；阈值本身不触发"""
    if score < params["t_refurbish"]:
        return Recommendation.REFURBISH
    if score < params["t_degas"]:
        return Recommendation.DEGAS
    if score < params["t_inspect"]:
        return Recommendation.INSPECT
    return Recommendation.NONE


def _check_health_params(params: Mapping[str, Value]):
    for name in ("w_load", "w_thermal", "w_gas"):
        if not params[name] > 0:
            raise InvalidParams(f"权重{name}必须为正: {params[name]}")
    if not 100 >= params["t_inspect"] > params["t_degas"] > params["t_refurbish"] >= 0:
        raise InvalidParams("阈值必须满足 100 >= inspect > degas > refurbish >= 0")


def transformer_health(inputs: TransformerInputs, params: Mapping[str, Value] = DEFAULT_HEALTH_PARAMS) -> HealthResult:
    """
    单台变压器健康评分

    Args:
        inputs: 负载率、顶层油温、溶解气体、环境温度
        params: 权重与建议阈值

    Returns:
        0-100 的评分、各项扣分与建议

    Raises:
        InvalidParams: 权重非正、阈值顺序错误或输入越界
    """
    params = {**DEFAULT_HEALTH_PARAMS, **params}
    _check_health_params(params)
    if inputs.load_pct < 0 or inputs.dga_ppm < 0:
        raise InvalidParams("负载率和溶解气体含量不能为负")
    drivers = {
        "load": params["w_load"] * max(0.0, inputs.load_pct - 100.0),
        "thermal": params["w_thermal"] * max(0.0, inputs.top_oil_temp - (65.0 + 0.8 * inputs.ambient_temp)),
        "gas": params["w_gas"] * inputs.dga_ppm,
    }
    score = min(100.0, max(0.0, 100.0 - sum(drivers.values())))
    return HealthResult(score, drivers, recommend(score, params))


def fleet_health(results: Sequence[Tuple[str, Union[HealthResult, float]]], fleet_size: int,
                 threshold: float) -> FleetResult:
    """
    机队健康汇总

    Args:
        results: (规范资产ID, 健康结果或评分)
        fleet_size: 机队总台数，用于计算数据覆盖率
        threshold: 低于该评分计入 below_threshold_count

    Raises:
        EmptyFleet: 没有任何结果
        InvalidParams: fleet_size 小于结果数或非正
    """
    if not results:
        raise EmptyFleet("机队没有任何健康结果")
    if fleet_size <= 0 or fleet_size < len(results):
        raise InvalidParams(f"fleet_size={fleet_size} 小于结果数 {len(results)}")
    scores = [(r.score if isinstance(r, HealthResult) else float(r), asset_id) for asset_id, r in results]
    worst_score, worst_id = min(scores)
    return FleetResult(
        fleet_mean=sum(s for s, _ in scores) / len(scores),
        worst_id=worst_id,
        worst_score=worst_score,
        below_threshold_count=sum(1 for s, _ in scores if s < threshold),
        coverage_pct=100.0 * len(scores) / fleet_size,
    )


def overload_count(readings: Sequence[Tuple[int, float]], limit: float = OVERLOAD_LIMIT) -> int:
    """过载次数：负载率连续高于 limit 的区段数"""
    count = 0
    above = False
    for _, load in sorted(readings):
        if load > limit and not above:
            count += 1
        above = load > limit
    return count


# ---------------------------------------------------------------------- 服务

def _health_compute(inputs: Dict[str, Value], params: Dict[str, Value]) -> Dict[str, Value]:
    result = transformer_health(TransformerInputs(
        load_pct=float(inputs["load_pct"]),
        top_oil_temp=float(inputs["top_oil_temp"]),
        dga_ppm=float(inputs["dga_ppm"]),
        ambient_temp=float(inputs["ambient_temp"]),
    ), params)
    return {
        "score": result.score,
        "recommendation": result.recommendation.value,
        "penalty_load": result.drivers["load"],
        "penalty_thermal": result.drivers["thermal"],
        "penalty_gas": result.drivers["gas"],
    }


def health_service() -> AppServiceDescriptor:
    return AppServiceDescriptor(
        name="transformer-health",
        required_inputs=[
            BindingSlot("load_pct", ValueKind.FLOAT, "%"),
            BindingSlot("top_oil_temp", ValueKind.FLOAT, "°C"),
            BindingSlot("dga_ppm", ValueKind.FLOAT, "ppm"),
            BindingSlot("ambient_temp", ValueKind.FLOAT, "°C"),
        ],
        outputs=[
            BindingSlot("score", ValueKind.FLOAT),
            BindingSlot("recommendation", ValueKind.STRING),
            BindingSlot("penalty_load", ValueKind.FLOAT),
            BindingSlot("penalty_thermal", ValueKind.FLOAT),
            BindingSlot("penalty_gas", ValueKind.FLOAT),
        ],
        params=dict(DEFAULT_HEALTH_PARAMS),
        compute=_health_compute,
    )


def _fleet_compute(inputs: Dict[str, Dict[str, Value]], params: Dict[str, Value]) -> Dict[str, Value]:
    # 键形如 "TX-17/score"，资产ID取第一段
    results = [(key.split("/")[0], float(value)) for key, value in sorted(inputs["scores"].items())]
    fleet = fleet_health(results, int(params["fleet_size"]), float(params["threshold"]))
    return {
        "fleet_mean": fleet.fleet_mean,
        "worst_id": fleet.worst_id,
        "worst_score": fleet.worst_score,
        "below_threshold_count": fleet.below_threshold_count,
        "coverage_pct": fleet.coverage_pct,
    }


def fleet_service() -> AppServiceDescriptor:
    return AppServiceDescriptor(
        name="fleet-health",
        required_inputs=[BindingSlot("scores", ValueKind.FLOAT, many=True)],
        outputs=[
            BindingSlot("fleet_mean", ValueKind.FLOAT),
            BindingSlot("worst_id", ValueKind.STRING),
            BindingSlot("worst_score", ValueKind.FLOAT),
            BindingSlot("below_threshold_count", ValueKind.INT),
            BindingSlot("coverage_pct", ValueKind.FLOAT, "%"),
        ],
        params=dict(DEFAULT_FLEET_PARAMS),
        compute=_fleet_compute,
    )


def _overload_compute(inputs: Dict[str, List[Tuple[int, Value]]], params: Dict[str, Value]) -> Dict[str, Value]:
    readings = [(ts, float(v)) for ts, v in inputs["load_series"]]
    return {"overload_count": overload_count(readings, float(params["limit"]))}


def overload_service() -> AppServiceDescriptor:
    return AppServiceDescriptor(
        name="overload-kpi",
        required_inputs=[BindingSlot("load_series", ValueKind.FLOAT, "%", series=True)],
        outputs=[BindingSlot("overload_count", ValueKind.INT)],
        params={"limit": OVERLOAD_LIMIT},
        compute=_overload_compute,
    )
