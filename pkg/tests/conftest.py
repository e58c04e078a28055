"""
测试公共夹具：两层拓扑（local-1 <-> regional-1）与电网/机队微数据库
"""
from pathlib import Path

import pytest

from tierdb.column_store import StoreKind
from tierdb.eula import load_library_policy, parse_policy
from tierdb.microdatabase import MdbTemplate
from tierdb.topology import TierLevel, Topology

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
MANIFESTS = SCENARIOS / "manifests"

REGIONAL_COLLECT = "policy regional-collect version=1\nrule work* both full\nrule * inbound full\n"


def grid_template() -> MdbTemplate:
    return MdbTemplate("grid", [
        ("readings", StoreKind.TIMESERIES),
        ("health", StoreKind.TIMESERIES),
        ("work", StoreKind.WORK),
        ("config", StoreKind.CONFIG),
    ])


def fleet_template() -> MdbTemplate:
    return MdbTemplate("fleet", [
        ("health", StoreKind.TIMESERIES),
        ("fleet", StoreKind.TIMESERIES),
        ("work", StoreKind.WORK),
        ("config", StoreKind.CONFIG),
    ])


def build_topology(config=None) -> Topology:
    topology = Topology(config)
    topology.create_tier("local-1", TierLevel.LOCAL, "1.0.0", owner="utility-a")
    topology.create_tier("regional-1", TierLevel.REGIONAL, "1.0.0", owner="operator")
    topology.connect("local-1", "regional-1")
    return topology


def build_pair(config=None):
    """拓扑 + local-1/grid + regional-1/fleet"""
    topology = build_topology(config)
    grid = topology.mdb(topology.create_microdatabase(grid_template(), "utility-a", "local-1"))
    fleet = topology.mdb(topology.create_microdatabase(fleet_template(), "operator", "regional-1"))
    return topology, grid, fleet


def share(mdb, name: str):
    """给微数据库换上策略库中的策略，版本自动递增"""
    mdb.set_eula(load_library_policy(name, mdb.policy.version + 1), mdb.owner)


def collect(mdb):
    """区域层的收集策略：只接收，不向外共享（工作请求除外）"""
    mdb.set_eula(parse_policy(REGIONAL_COLLECT).with_version(mdb.policy.version + 1), mdb.owner)


@pytest.fixture
def topology():
    return build_topology()


@pytest.fixture
def pair():
    return build_pair()
