"""
信息模型
资产类型、属性定义、资产实例及其数据绑定，用于发现
"""
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from .errors import ConflictingRedefinition, DanglingBinding, UnknownType
from .record import ValueKind


@dataclass(frozen=True)
class PropertyDef:
    """资产属性定义"""
    prop_name: str
    unit: str
    value_kind: ValueKind

    def to_dict(self) -> Dict[str, str]:
        return {"prop_name": self.prop_name, "unit": self.unit, "value_kind": self.value_kind.value}

    @classmethod
    def from_dict(cls, data: Dict[str, str]) -> "PropertyDef":
        return cls(data["prop_name"], data.get("unit", ""), ValueKind(data.get("value_kind", "float")))


@dataclass(frozen=True)
class AssetType:
    """资产类型，属性名在类型内唯一"""
    type_name: str
    properties: Tuple[PropertyDef, ...]

    def __post_init__(self):
        names = [p.prop_name for p in self.properties]
        if len(names) != len(set(names)):
            raise ValueError(f"资产类型{self.type_name}存在重复属性名")

    def property(self, prop_name: str) -> Optional[PropertyDef]:
        for prop in self.properties:
            if prop.prop_name == prop_name:
                return prop
        return None

    def to_dict(self):
        return {"type_name": self.type_name, "properties": [p.to_dict() for p in self.properties]}

    @classmethod
    def from_dict(cls, data) -> "AssetType":
        return cls(data["type_name"], tuple(PropertyDef.from_dict(p) for p in data.get("properties", [])))


@dataclass
class AssetInstance:
    """资产实例：规范ID + 类型 + 标签 + 属性绑定 prop_name -> (store_id, key)"""
    canonical_id: str
    type_name: str
    tags: FrozenSet[str] = frozenset()
    bindings: Dict[str, Tuple[str, str]] = field(default_factory=dict)

    def to_dict(self):
        return {
            "canonical_id": self.canonical_id,
            "type_name": self.type_name,
            "tags": sorted(self.tags),
            "bindings": {p: list(b) for p, b in sorted(self.bindings.items())},
        }

    @classmethod
    def from_dict(cls, data) -> "AssetInstance":
        return cls(
            canonical_id=data["canonical_id"],
            type_name=data["type_name"],
            tags=frozenset(data.get("tags", [])),
            bindings={p: (b[0], b[1]) for p, b in data.get("bindings", {}).items()},
        )


@dataclass(frozen=True)
class DiscoveredBinding:
    """发现结果：(canonical_id, prop_name, store_id, key)"""
    canonical_id: str
    prop_name: str
    store_id: str
    key: str


class InformationModel:
    """信息模型，不发布事件"""

    def __init__(self):
        self.types: Dict[str, AssetType] = {}
        self.instances: Dict[str, AssetInstance] = {}

    def define_type(self, asset_type: AssetType):
        """
        注册资产类型，内容相同的重复定义是幂等的

        Raises:
            ConflictingRedefinition: 同名但属性不同
        """
        existing = self.types.get(asset_type.type_name)
        if existing is not None:
            if existing != asset_type:
                raise ConflictingRedefinition(f"资产类型{asset_type.type_name}已存在且定义不同")
            return
        self.types[asset_type.type_name] = asset_type

    def register_instance(self, instance: AssetInstance, store_ids: Iterable[str]):
        """
        注册资产实例

        Args:
            instance: 资产实例
            store_ids: 当前微数据库中存在的列存储ID

        Raises:
            UnknownType: 类型未定义
            DanglingBinding: 绑定了不存在的属性或列存储
        """
        asset_type = self.types.get(instance.type_name)
        if asset_type is None:
            raise UnknownType(f"未定义的资产类型: {instance.type_name}")
        known_stores = set(store_ids)
        for prop_name, (store_id, _) in instance.bindings.items():
            if asset_type.property(prop_name) is None:
                raise DanglingBinding(f"类型{instance.type_name}没有属性{prop_name}")
            if store_id not in known_stores:
                raise DanglingBinding(f"绑定的列存储{store_id}不存在")
        self.instances[instance.canonical_id] = instance

    def discover(self, type_name: Optional[str] = None, tags: Optional[Set[str]] = None) -> List[DiscoveredBinding]:
        """
        合取查询：类型和标签都需满足；空查询匹配全部实例

        Returns:
            按 canonical_id、prop_name 排序的绑定
        """
        wanted = set(tags or ())
        result = []
        for canonical_id in sorted(self.instances):
            instance = self.instances[canonical_id]
            if type_name is not None and instance.type_name != type_name:
                continue
            if not wanted.issubset(instance.tags):
                continue
            for prop_name in sorted(instance.bindings):
                store_id, key = instance.bindings[prop_name]
                result.append(DiscoveredBinding(canonical_id, prop_name, store_id, key))
        return result

    def to_dict(self):
        return {
            "types": [self.types[n].to_dict() for n in sorted(self.types)],
            "instances": [self.instances[c].to_dict() for c in sorted(self.instances)],
        }

    def load_dict(self, data):
        self.types = {t["type_name"]: AssetType.from_dict(t) for t in data.get("types", [])}
        self.instances = {i["canonical_id"]: AssetInstance.from_dict(i) for i in data.get("instances", [])}
