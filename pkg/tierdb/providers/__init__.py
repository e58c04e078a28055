"""
关联数据提供者模块
"""
from .http_broker import HttpBrokerProvider
from .weather_fixture import WeatherFixtureProvider

# 提供者注册表（类）
PROVIDERS = {
    "weather-fixture": WeatherFixtureProvider,
    "http-broker": HttpBrokerProvider,
}


def get_provider(kind: str, provider_id: str, **options):
    """
    按种类创建提供者实例

    Returns:
        提供者实例；未知种类返回 None
    """
    provider_class = PROVIDERS.get(kind)
    if provider_class is None:
        return None
    return provider_class(provider_id, **options)


def list_providers():
    """列出所有已注册的提供者种类"""
    return list(PROVIDERS.keys())
