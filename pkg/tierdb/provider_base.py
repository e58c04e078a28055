"""
关联数据接口抽象基类
微数据库之外的数据源（天气数据代理、遗留系统等）统一的查询接口和返回格式
"""
from abc import ABC, abstractmethod
from typing import Any, Dict, List, NamedTuple, Optional

from .record import Value


class RelatedPoint(NamedTuple):
    """关联数据的一个点：(key, ts, value)"""
    key: str
    ts: int
    value: Value


class RelatedDataProvider(ABC):
    """关联数据提供者抽象基类；按层注册，使用它的组件必须在清单中声明"""

    kind = "abstract"

    def __init__(self, provider_id: str, name: Optional[str] = None):
        self.provider_id = provider_id
        self.name = name or provider_id

    @abstractmethod
    def fetch(self, query: Dict[str, Any]) -> List[RelatedPoint]:
        """
        查询关联数据

        Args:
            query: 查询参数；框架会补充 t0 / t1 (毫秒) 作为时间范围

        Returns:
            按 ts 升序的数据点列表，可以为空
        """
        pass

    def validate_config(self, config: Optional[Dict[str, Any]] = None) -> bool:
        """
        验证配置是否有效（可选实现）

        Args:
            config: 提供者配置
        """
        return True

    def describe(self) -> Dict[str, str]:
        return {"provider_id": self.provider_id, "name": self.name, "kind": self.kind}


def parse_query(text: str) -> Dict[str, str]:
    """
    解析 "geo=45.1,7.2;unit=C" 形式的查询文本

    Raises:
        ValueError: 某一项不是 key=value
    """
    query = {}
    for part in text.replace("&", ";").split(";"):
        part = part.strip()
        if not part:
            continue
        key, sep, value = part.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"查询项格式错误: {part}")
        query[key.strip()] = value.strip()
    return query
