"""
状态快照
拓扑的规范序列化：各层微数据库内容、工作请求状态、别名注册表；相同状态序列化结果逐字节相同
"""
import fnmatch
import json
from pathlib import Path
from typing import Any, Dict, List

from .errors import UnknownSnapshot
from .record import decode_value, format_value
from .topology import Topology

SNAPSHOT_FORMAT = "tierdb-snapshot/1"


def snapshot(topology: Topology) -> Dict[str, Any]:
    tiers = {}
    for tier_id, tier in sorted(topology.tiers.items()):
        tiers[tier_id] = {
            "level": tier.level.value,
            "platform_version": tier.platform_version,
            "owner": tier.owner,
            "aliases": tier.aliases.to_dict(),
            "mdbs": {name: tier.mdbs[name].snapshot_state() for name in sorted(tier.mdbs)},
            "components": tier.apps.describe(),
            "deployments": list(tier.deployments),
        }
    return {
        "format": SNAPSHOT_FORMAT,
        "clock": topology.clock.now,
        "cycle": topology.cycle,
        "tiers": tiers,
        "links": [
            {
                "link_id": link.link_id,
                "local": f"{link.local.mdb.mdb_id}/{link.local.store_id}",
                "remote": f"{link.remote.mdb.mdb_id}/{link.remote.store_id}",
                "key_glob": link.filter.key_glob,
                "watermarks": {d: dict(sorted(w.items())) for d, w in sorted(link.watermarks.items())},
            }
            for link in topology.links
        ],
        "work_requests": [
            dict(request.to_dict(), location=location)
            for location, request in sorted(topology.work.all_requests(), key=lambda x: (x[0], x[1].request_id))
        ],
    }


def dumps(state: Dict[str, Any]) -> str:
    """键排序、固定缩进、末尾换行"""
    return json.dumps(state, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_snapshot(topology: Topology, path: str) -> str:
    text = dumps(snapshot(topology))
    Path(path).write_text(text, encoding="utf-8")
    return text


def load_snapshot(path: str) -> Dict[str, Any]:
    """
    Raises:
        UnknownSnapshot: 文件不存在或不是快照
    """
    try:
        state = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise UnknownSnapshot(f"无法读取快照 {path}: {e}")
    if not isinstance(state, dict) or state.get("format") != SNAPSHOT_FORMAT:
        raise UnknownSnapshot(f"{path} 不是快照文件")
    return state


def query_snapshot(state: Dict[str, Any], query: str) -> List[str]:
    """
    按查询打印记录或工作请求状态，输出已排序

    查询形式：
        <tier>/<mdb>/<store>/<key通配符>  或省略微数据库名 <tier>/<store>/<key通配符>
        work:<request_id通配符>
    """
    lines = []
    if query.startswith("work:"):
        pattern = query[len("work:"):] or "*"
        for request in state.get("work_requests", []):
            if fnmatch.fnmatchcase(request["request_id"], pattern):
                reason = f" reason={request['reason']}" if request.get("reason") else ""
                lines.append(f"{request['location']} {request['request_id']} {request['status']} "
                             f"{request['operation']} -> {request['target_tier']}{reason}")
        return sorted(lines)

    for tier_id, tier in state.get("tiers", {}).items():
        for mdb_name, mdb in tier.get("mdbs", {}).items():
            for store_id, store in mdb.get("stores", {}).items():
                for record in store.get("records", []):
                    full = f"{tier_id}/{mdb_name}/{store_id}/{record['key']}"
                    short = f"{tier_id}/{store_id}/{record['key']}"
                    if not (fnmatch.fnmatchcase(full, query) or fnmatch.fnmatchcase(short, query)):
                        continue
                    value = None if record["tombstone"] else decode_value(record["value"])
                    lines.append(f"{full} ts={record['ts']} rev={record['revision']} "
                                 f"origin={record['origin']} {format_value(value)}")
    return sorted(lines)
