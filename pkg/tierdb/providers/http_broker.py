"""
HTTP 数据代理
通过 HTTP 接口访问外部数据代理（天气服务、遗留系统网关等）
"""
from typing import Any, Dict, List, Optional

import httpx

from ..provider_base import RelatedDataProvider, RelatedPoint

# 代理返回的错误码
ERROR_CODES = {
    200: "请求成功",
    400: "查询参数错误",
    401: "凭据错误或不存在",
    404: "数据集不存在",
    429: "访问频率超过限制！请稍后重试！",
    500: "代理服务器错误",
}


class HttpBrokerProvider(RelatedDataProvider):
    """
    HTTP 数据代理

    期望代理返回 {"code": 200, "data": [{"key": ..., "ts": ..., "value": ...}, ...]}，
    或直接返回数据点列表
    """

    kind = "http-broker"

    def __init__(self, provider_id: str = "broker", name: Optional[str] = None, base_url: str = "",
                 path: str = "/series", api_key: Optional[str] = None, timeout: float = 10.0,
                 transport: Optional[httpx.BaseTransport] = None):
        super().__init__(provider_id, name or "HTTP数据代理")
        self.base_url = base_url.rstrip("/")
        self.path = path
        self.api_key = api_key
        self.timeout = timeout
        self._transport = transport

    def _parse_error_response(self, response: httpx.Response) -> str:
        """
        解析错误响应

        Returns:
            错误信息字符串
        """
        try:
            data = response.json()
            code = data.get("code")
            if code and code in ERROR_CODES:
                return f"[错误码 {code}] {ERROR_CODES[code]}"
            msg = data.get("msg") or data.get("message") or data.get("error")
            if msg:
                return f"代理错误: {msg}"
        except (ValueError, KeyError, AttributeError):
            pass
        return f"HTTP {response.status_code}: {response.text[:200]}"

    def fetch(self, query: Dict[str, Any]) -> List[RelatedPoint]:
        """
        Raises:
            Exception: 请求失败或返回格式错误（由框架包装为 ProviderFailure）
        """
        params = {k: str(v) for k, v in sorted(query.items())}
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        with httpx.Client(timeout=self.timeout, transport=self._transport) as client:
            response = client.get(f"{self.base_url}{self.path}", params=params, headers=headers)
            if response.status_code != 200:
                raise Exception(f"数据代理请求失败: {self._parse_error_response(response)}")
            data = response.json()

        if isinstance(data, dict):
            code = data.get("code")
            if code and code != 200:
                raise Exception(f"[错误码 {code}] {ERROR_CODES.get(code, f'未知错误码: {code}')}")
            data = data.get("data", [])
        points = [RelatedPoint(str(p["key"]), int(p["ts"]), p["value"]) for p in data]
        return sorted(points, key=lambda p: (p.ts, p.key))

    def validate_config(self, config: Optional[Dict[str, Any]] = None) -> bool:
        return self.base_url.startswith(("http://", "https://"))
