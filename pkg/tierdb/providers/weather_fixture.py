"""
天气数据代理（夹具实现）
从纯文本夹具文件读取各站点的环境温度序列，每行 `lat lon ts_ms value_celsius`
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from ..errors import NoFixture, ParseError
from ..provider_base import RelatedDataProvider, RelatedPoint

Site = Tuple[float, float]


def parse_fixture(text: str) -> Dict[Site, List[Tuple[int, float]]]:
    """
    解析夹具文本；空行与 # 开头的注释行忽略

    Raises:
        ParseError: 某行字段数或数值格式错误
    """
    series: Dict[Site, List[Tuple[int, float]]] = {}
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(f"天气夹具需要4个字段: {line}", line_no)
        try:
            site = (float(parts[0]), float(parts[1]))
            point = (int(parts[2]), float(parts[3]))
        except ValueError:
            raise ParseError(f"天气夹具数值格式错误: {line}", line_no)
        series.setdefault(site, []).append(point)
    for points in series.values():
        points.sort()
    return series


def nearest_site(sites, lat: float, lon: float) -> Site:
    """平方欧氏距离最近的站点；距离相同时取 (lat, lon) 较小者"""
    return min(sites, key=lambda s: ((s[0] - lat) ** 2 + (s[1] - lon) ** 2, s))


class WeatherFixtureProvider(RelatedDataProvider):
    """天气夹具提供者"""

    kind = "weather-fixture"

    def __init__(self, provider_id: str = "weather", name: Optional[str] = None,
                 fixture: Optional[str] = None, text: Optional[str] = None):
        """
        Args:
            provider_id: 层内的提供者ID
            fixture: 夹具文件路径
            text: 直接给出的夹具文本（优先于文件）
        """
        super().__init__(provider_id, name or "天气数据代理")
        self.series: Dict[Site, List[Tuple[int, float]]] = {}
        if text is not None:
            self.series = parse_fixture(text)
        elif fixture is not None:
            self.series = parse_fixture(Path(fixture).read_text(encoding="utf-8"))

    def fetch(self, query: Dict[str, Any]) -> List[RelatedPoint]:
        """
        返回离查询位置最近的站点序列，裁剪到 [t0, t1]

        Args:
            query: lat / lon 或 geo="lat,lon"；可选 t0 / t1

        Raises:
            NoFixture: 没有加载任何夹具
        """
        if not self.series:
            raise NoFixture(f"{self.provider_id}: 没有加载天气夹具")
        lat, lon = _location(query)
        site = nearest_site(self.series, lat, lon)
        t0 = int(query.get("t0", -2 ** 63))
        t1 = int(query.get("t1", 2 ** 63 - 1))
        key = f"{site[0]:g},{site[1]:g}"
        return [RelatedPoint(key, ts, value) for ts, value in self.series[site] if t0 <= ts <= t1]

    def validate_config(self, config: Optional[Dict[str, Any]] = None) -> bool:
        return bool(self.series)


def _location(query: Dict[str, Any]) -> Site:
    if "geo" in query:
        lat, _, lon = str(query["geo"]).partition(",")
        return float(lat), float(lon)
    return float(query["lat"]), float(query["lon"])
