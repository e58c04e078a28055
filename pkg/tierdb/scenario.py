"""
场景运行器
逐行指令的场景文件：先整体解析（未知指令是错误），再按文件顺序执行

行格式: <verb> <位置参数...> [name=value ...]，# 开头为注释
文件路径相对于场景文件所在目录；随机工作负载使用按种子初始化的 random.Random
"""
import fnmatch
import math
import random
import re
import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Tuple

from . import errors
from .app_framework import MdbSource, RelatedSource
from .appstore import Catalog, install_conventional, load_manifest_file
from .config_manager import ConfigManager
from .errors import AssertionFailed, ParseError, TierDBError, UnknownAlias
from .eula import load_library_policy, parse_policy
from .info_model import AssetInstance, AssetType, PropertyDef
from .logger import logger
from .providers import get_provider
from .record import Value, ValueKind, format_value, is_numeric
from .replication import FilterCriteria
from .security import parse_rights
from .topology import CycleReport, LinkState, Topology

FLOAT_TOLERANCE = 1e-6
OWNER_TAG = "owner-tag"
_INT_RE = re.compile(r"^[+-]?\d+$")
_OPTION_RE = re.compile(r"^[a-z_]+$")


@dataclass(frozen=True)
class Directive:
    """指令的形状：位置参数个数、允许与必需的选项、需为整数的位置参数、引用文件的参数"""
    min_args: int
    max_args: int
    options: FrozenSet[str] = frozenset()
    required: FrozenSet[str] = frozenset()
    ints: Tuple[int, ...] = ()
    paths: Tuple[Any, ...] = ()


def _d(min_args, max_args=None, options="", required="", ints=(), paths=()) -> Directive:
    return Directive(min_args, min_args if max_args is None else max_args, frozenset(options.split()),
                     frozenset(required.split()), tuple(ints), tuple(paths))


DIRECTIVES: Dict[str, Directive] = {
    "tier": _d(3, options="owner"),
    "connect": _d(2),
    "principal": _d(2, options="token"),
    "config": _d(2),
    "provider": _d(3, options="fixture base_url path api_key", paths=("fixture",)),
    "publish": _d(1, options="by", required="by", paths=(0,)),
    "deploy": _d(2, options="by as ack", required="by"),
    "install": _d(2, options="by as ack", required="by", paths=(0,)),
    "grant": _d(4, options="by", required="by"),
    "revoke": _d(3, options="by", required="by"),
    "eula": _d(2, options="by version", required="by"),
    "eula-file": _d(2, options="by", required="by", paths=(1,)),
    "link": _d(2, options="by key window", required="by"),
    "asset-type": _d(3, 64, options="by", required="by"),
    "instance": _d(3, 64, options="by tags", required="by"),
    "alias": _d(4),
    "retire-alias": _d(3),
    "bind": _d(3, options="by mdb related window", required="by"),
    "param": _d(4, options="by", required="by"),
    "ingest": _d(3, options="by", required="by", paths=(2,)),
    "put": _d(5, options="by", required="by", ints=(3,)),
    "delete": _d(4, options="by", required="by", ints=(3,)),
    "advance": _d(1, ints=(0,)),
    "link-state": _d(3),
    "cycle": _d(0, 1, ints=(0,)),
    "fire": _d(2),
    "submit": _d(4, options="by id asset", required="by"),
    "workload": _d(4, options="by", required="by", ints=(2, 3)),
    "expect record": _d(5, ints=(3,)),
    "expect absent": _d(3, 4, ints=(3,)),
    "expect count": _d(3, options="key", ints=(2,)),
    "expect status": _d(4),
    "expect no-leak": _d(3),
    "expect equal": _d(2),
    "expect audit-clean": _d(0),
    "expect mvc": _d(3),
    "expect deployment": _d(3),
}


@dataclass(frozen=True)
class Step:
    line_no: int
    verb: str
    args: Tuple[str, ...]
    options: Dict[str, str] = field(default_factory=dict)
    # expect error 的内层指令
    inner: Optional["Step"] = None
    error_name: str = ""

    def option(self, name: str, default: Optional[str] = None) -> Optional[str]:
        return self.options.get(name, default)


@dataclass
class Scenario:
    name: str
    base_dir: Path
    steps: List[Step]


@dataclass
class ScenarioReport:
    scenario: str
    seed: int
    cycles: List[CycleReport] = field(default_factory=list)
    assertions: int = 0

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "cycles": [c.to_dict() for c in self.cycles],
            "assertions_passed": self.assertions,
        }


# ---------------------------------------------------------------------- 解析

def parse_value(text: str) -> Value:
    """true/false -> bool，整数 -> int，小数 -> float，0x 前缀 -> bytes，其余为字符串"""
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if _INT_RE.match(text):
        return int(text)
    if lowered.startswith("0x"):
        try:
            return bytes.fromhex(text[2:])
        except ValueError:
            return text
    try:
        number = float(text)
    except ValueError:
        return text
    return number if math.isfinite(number) else text


def _parse_tokens(tokens: List[str], line_no: int, base_dir: Optional[Path]) -> Step:
    verb = tokens[0]
    rest = tokens[1:]
    if verb == "expect":
        if not rest:
            raise ParseError("expect 缺少断言种类", line_no)
        if rest[0] == "error":
            if len(rest) < 3:
                raise ParseError("应为 expect error <错误类> <指令...>", line_no)
            error_name = rest[1]
            error_cls = getattr(errors, error_name, None)
            if not (isinstance(error_cls, type) and issubclass(error_cls, TierDBError)):
                raise ParseError(f"未知的错误类 {error_name}", line_no)
            inner = _parse_tokens(rest[2:], line_no, base_dir)
            if inner.verb.startswith("expect"):
                raise ParseError("expect error 不能嵌套断言", line_no)
            return Step(line_no, "expect error", (), {}, inner, error_name)
        verb, rest = f"expect {rest[0]}", rest[1:]

    directive = DIRECTIVES.get(verb)
    if directive is None:
        raise ParseError(f"未知指令 {verb}", line_no)
    args, options = [], {}
    for token in rest:
        name, sep, value = token.partition("=")
        if not sep or not _OPTION_RE.match(name):
            args.append(token)
        elif name not in directive.options:
            raise ParseError(f"{verb}: 未知选项 {name}", line_no)
        elif name in options:
            raise ParseError(f"{verb}: 重复的选项 {name}", line_no)
        else:
            options[name] = value
    if not directive.min_args <= len(args) <= directive.max_args:
        expected = directive.min_args if directive.min_args == directive.max_args else \
            f"{directive.min_args}-{directive.max_args}"
        raise ParseError(f"{verb}: 需要 {expected} 个参数，实际 {len(args)} 个", line_no)
    missing = sorted(directive.required - set(options))
    if missing:
        raise ParseError(f"{verb}: 缺少选项 {', '.join(m + '=' for m in missing)}", line_no)
    for index in directive.ints:
        if index < len(args) and not _INT_RE.match(args[index]):
            raise ParseError(f"{verb}: 第{index + 1}个参数应为整数: {args[index]}", line_no)
    if base_dir is not None:
        for ref in directive.paths:
            path = args[ref] if isinstance(ref, int) else options.get(ref)
            if path is not None and not (base_dir / path).is_file():
                raise ParseError(f"{verb}: 文件不存在 {path}", line_no)
    return Step(line_no, verb, tuple(args), options)


def parse_scenario(text: str, base_dir: Optional[Path] = None) -> List[Step]:
    """
    解析整个场景；任何一行出错都不执行

    Raises:
        ParseError: 带行号
    """
    steps = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            tokens = shlex.split(line)
        except ValueError as e:
            raise ParseError(f"无法切分: {e}", line_no)
        steps.append(_parse_tokens(tokens, line_no, base_dir))
    return steps


def load_scenario(path: str) -> Scenario:
    """
    Raises:
        ParseError: 文件无法读取或解析失败
    """
    file = Path(path)
    try:
        text = file.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"无法读取场景 {path}: {e}")
    base_dir = file.resolve().parent
    return Scenario(file.stem, base_dir, parse_scenario(text, base_dir))


def parse_ingest(text: str) -> List[Tuple[str, str, int, Value]]:
    """
    读数文件：每行 `asset_tag prop ts_ms value`

    Raises:
        ParseError: 带行号
    """
    rows = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4 or not _INT_RE.match(parts[2]):
            raise ParseError(f"读数格式应为 <asset_tag> <prop> <ts_ms> <value>: {line}", line_no)
        rows.append((parts[0], parts[1], int(parts[2]), parse_value(parts[3])))
    return rows


def _split_store_ref(ref: str) -> Tuple[str, str]:
    """tier/mdb/store -> (tier/mdb, store)"""
    mdb_id, sep, store_id = ref.rpartition("/")
    if not sep or "/" not in mdb_id:
        raise ParseError(f"列存储引用应为 <tier>/<mdb>/<store>: {ref}")
    return mdb_id, store_id


def _values_equal(actual: Optional[Value], expected: Value) -> bool:
    if is_numeric(actual) and is_numeric(expected):
        return math.isclose(float(actual), float(expected), rel_tol=0.0, abs_tol=FLOAT_TOLERANCE)
    return actual == expected


# ---------------------------------------------------------------------- 执行

class ScenarioRunner:
    """在一个拓扑上按顺序执行场景步骤"""

    def __init__(self, scenario: Scenario, seed: int = 0, config: Optional[ConfigManager] = None):
        self.scenario = scenario
        self.seed = seed
        self.rng = random.Random(seed)
        self.topology = Topology(config)
        self.catalog = Catalog(self.topology.config)
        self.report = ScenarioReport(scenario.name, seed)
        self._workload_ids = 0

    @classmethod
    def from_file(cls, path: str, seed: int = 0, config: Optional[ConfigManager] = None) -> "ScenarioRunner":
        return cls(load_scenario(path), seed, config)

    def _path(self, relative: str) -> Path:
        return self.scenario.base_dir / relative

    def _handler(self, verb: str) -> Callable[[Step], None]:
        return getattr(self, "_do_" + verb.replace("-", "_").replace(" ", "_"))

    def run(self, verbs: Optional[FrozenSet[str]] = None) -> ScenarioReport:
        """
        执行全部步骤

        Args:
            verbs: 只执行这些指令（用于只构建目录等场合）

        Raises:
            AssertionFailed: 断言失败或某一步出现意外错误
        """
        for step in self.scenario.steps:
            if verbs is not None and step.verb not in verbs:
                continue
            try:
                self._handler(step.verb)(step)
            except AssertionFailed as e:
                if e.line_no is None:
                    raise AssertionFailed(e.message, e.diff, step.line_no) from e
                raise
            except ParseError as e:
                if e.line_no is None:
                    raise ParseError(str(e), step.line_no) from e
                raise
            except (TierDBError, ValueError, KeyError) as e:
                raise AssertionFailed(f"{step.verb} 失败: {type(e).__name__}: {e}", line_no=step.line_no) from e
        logger.info(f"场景 {self.scenario.name} 完成: {len(self.report.cycles)} 个周期, "
                    f"{self.report.assertions} 条断言通过")
        return self.report

    # ------------------------------------------------------------------ 拓扑

    def _do_tier(self, step: Step):
        name, level, version = step.args
        self.topology.create_tier(name, level, version, step.option("owner"))

    def _do_connect(self, step: Step):
        self.topology.connect(*step.args)

    def _do_principal(self, step: Step):
        token = step.option("token")
        self.topology.register_principal(step.args[0], step.args[1], token.encode() if token else None)

    def _do_config(self, step: Step):
        name, value = step.args
        self.topology.config.set_runtime(name, parse_value(value))

    def _do_provider(self, step: Step):
        tier_id, kind, provider_id = step.args
        options: Dict[str, Any] = {k: v for k, v in step.options.items() if k != "fixture"}
        if "fixture" in step.options:
            options["text"] = self._path(step.options["fixture"]).read_text(encoding="utf-8")
        provider = get_provider(kind, provider_id, **options)
        if provider is None:
            raise ParseError(f"未知的提供者种类 {kind}")
        self.topology.tier(tier_id).apps.register_provider(provider)

    def _do_link_state(self, step: Step):
        tier_a, tier_b, state = step.args
        self.topology.set_link_state(tier_a, tier_b, LinkState(state))

    def _do_advance(self, step: Step):
        self.topology.clock.advance(int(step.args[0]))

    def _do_cycle(self, step: Step):
        count = int(step.args[0]) if step.args else 1
        for _ in range(count):
            self.report.cycles.append(self.topology.run_cycle())

    def _do_alias(self, step: Step):
        tier_id, scheme, value, canonical_id = step.args
        self.topology.tier(tier_id).aliases.register_alias(scheme, value, canonical_id)

    def _do_retire_alias(self, step: Step):
        tier_id, scheme, value = step.args
        self.topology.tier(tier_id).aliases.retire_alias(scheme, value)

    # ------------------------------------------------------------------ 应用商店

    def _do_publish(self, step: Step):
        manifest, payload = load_manifest_file(str(self._path(step.args[0])))
        self.catalog.publish(manifest, payload, step.options["by"], self.topology.clock.now)

    @staticmethod
    def _acknowledged(step: Step) -> List[str]:
        return [a for a in (step.option("ack") or "").split(",") if a]

    def _do_deploy(self, step: Step):
        entry_id, tier_id = step.args
        self.catalog.deploy(entry_id, self.topology, tier_id, step.options["by"], self._acknowledged(step),
                            step.option("as"))

    def _do_install(self, step: Step):
        manifest, payload = load_manifest_file(str(self._path(step.args[0])))
        install_conventional(manifest, payload, self.topology, step.args[1], step.options["by"],
                             self._acknowledged(step), step.option("as"), self.catalog)

    # ------------------------------------------------------------------ 安全与策略

    def _do_grant(self, step: Step):
        mdb_id, target, selector, rights = step.args
        self.topology.mdb(mdb_id).grant(step.options["by"], target, selector, parse_rights(rights))

    def _do_revoke(self, step: Step):
        mdb_id, target, selector = step.args
        self.topology.mdb(mdb_id).revoke(step.options["by"], target, selector)

    def _do_eula(self, step: Step):
        mdb_id, name = step.args
        mdb = self.topology.mdb(mdb_id)
        version = int(step.option("version") or mdb.policy.version + 1)
        mdb.set_eula(load_library_policy(name, version), step.options["by"])

    def _do_eula_file(self, step: Step):
        mdb_id, path = step.args
        policy = parse_policy(self._path(path).read_text(encoding="utf-8"))
        self.topology.mdb(mdb_id).set_eula(policy, step.options["by"])

    def _do_link(self, step: Step):
        local, remote = (_split_store_ref(ref) for ref in step.args)
        window = None
        if step.option("window"):
            t0, sep, t1 = step.options["window"].partition(":")
            if not sep or not _INT_RE.match(t0) or not _INT_RE.match(t1):
                raise ParseError(f"window 应为 <t0>:<t1>: {step.options['window']}")
            window = (int(t0), int(t1))
        criteria = FilterCriteria(step.option("key") or "*", window)
        self.topology.configure_link(step.options["by"], local, remote, criteria)

    # ------------------------------------------------------------------ 信息模型

    def _do_asset_type(self, step: Step):
        mdb_id, type_name, *props = step.args
        definitions = []
        for prop in props:
            name, _, rest = prop.partition(":")
            kind, _, unit = rest.partition(":")
            definitions.append(PropertyDef(name, unit, ValueKind(kind or "float")))
        self.topology.mdb(mdb_id).define_asset_type(AssetType(type_name, tuple(definitions)),
                                                    step.options["by"])

    def _do_instance(self, step: Step):
        mdb_id, canonical_id, type_name, *refs = step.args
        bindings = {}
        for ref in refs:
            parts = ref.split(":", 2)
            if len(parts) != 3:
                raise ParseError(f"绑定应为 <prop>:<store>:<key>: {ref}")
            bindings[parts[0]] = (parts[1], parts[2])
        tags = frozenset(t for t in (step.option("tags") or "").split(",") if t)
        self.topology.mdb(mdb_id).register_instance(AssetInstance(canonical_id, type_name, tags, bindings),
                                                    step.options["by"])

    # ------------------------------------------------------------------ 应用框架

    def _do_bind(self, step: Step):
        tier_id, service_id, slot = step.args
        window = step.option("window")
        if window is not None and not _INT_RE.match(window):
            raise ParseError(f"window 应为整数毫秒: {window}")
        if "mdb" in step.options:
            parts = step.options["mdb"].split(":", 2)
            if len(parts) != 3:
                raise ParseError(f"mdb= 应为 <mdb>:<store>:<key模式>: {step.options['mdb']}")
            source = MdbSource(*parts) if window is None else MdbSource(*parts, window_ms=int(window))
        elif "related" in step.options:
            provider_id, sep, query = step.options["related"].partition(":")
            if not sep:
                raise ParseError(f"related= 应为 <provider>:<query>: {step.options['related']}")
            source = RelatedSource(provider_id, query) if window is None else \
                RelatedSource(provider_id, query, int(window))
        else:
            raise ParseError("bind 需要 mdb= 或 related=")
        self.topology.tier(tier_id).apps.bind(service_id, slot, source, step.options["by"])

    def _do_param(self, step: Step):
        tier_id, service_id, name, value = step.args
        self.topology.tier(tier_id).apps.set_param(service_id, name, parse_value(value), step.options["by"])

    def _do_fire(self, step: Step):
        tier_id, tag = step.args
        self.topology.tier(tier_id).apps.fire_schedule(tag)

    # ------------------------------------------------------------------ 数据

    def _do_ingest(self, step: Step):
        mdb_id, store_id, path = step.args
        mdb = self.topology.mdb(mdb_id)
        aliases = self.topology.tier(mdb.tier_id).aliases
        try:
            rows = parse_ingest(self._path(path).read_text(encoding="utf-8"))
        except ParseError as e:
            raise ParseError(f"{path}: {e}")
        for tag, prop, ts, value in rows:
            try:
                canonical_id = aliases.resolve_alias(OWNER_TAG, tag)
            except UnknownAlias:
                canonical_id = tag
            mdb.put(store_id, f"{canonical_id}/{prop}", ts, value, step.options["by"])
        logger.info(f"{mdb_id}/{store_id}: 导入 {len(rows)} 条读数")

    def _do_put(self, step: Step):
        mdb_id, store_id, key, ts, value = step.args
        self.topology.mdb(mdb_id).put(store_id, key, int(ts), parse_value(value), step.options["by"])

    def _do_delete(self, step: Step):
        mdb_id, store_id, key, ts = step.args
        self.topology.mdb(mdb_id).delete(store_id, key, int(ts), step.options["by"])

    def _do_submit(self, step: Step):
        mdb_id, store_id, target_tier, operation = step.args
        params: Dict[str, Value] = {}
        if step.option("asset"):
            params["asset"] = step.options["asset"]
        self.topology.work.submit_work_request(self.topology.mdb(mdb_id), store_id, target_tier, operation,
                                               params, step.options["by"], step.option("id"))

    def _do_workload(self, step: Step):
        """n 次随机写入，分布在 keys 个键上，时间戳落在当前时刻之后的一秒内"""
        mdb_id, store_id, count, keys = step.args
        mdb = self.topology.mdb(mdb_id)
        now = self.topology.clock.now
        for _ in range(int(count)):
            key = f"k{self.rng.randrange(max(1, int(keys))):03d}"
            value = round(self.rng.uniform(0.0, 100.0), 3)
            mdb.put(store_id, key, now + self.rng.randrange(1000), value, step.options["by"])

    # ------------------------------------------------------------------ 断言

    def _passed(self):
        self.report.assertions += 1

    def _live(self, mdb_id: str, store_id: str):
        mdb = self.topology.mdb(mdb_id)
        with mdb.lock:
            if store_id not in mdb.stores:
                raise errors.UnknownStore(f"{mdb_id}中没有列存储{store_id}")
            return list(mdb.stores[store_id].live_records())

    def _do_expect_record(self, step: Step):
        mdb_id, store_id, key, ts, expected = step.args
        expected_value = parse_value(expected)
        record = next((r for r in self._live(mdb_id, store_id) if r.key == key and r.ts == int(ts)), None)
        if record is None:
            raise AssertionFailed(f"{mdb_id}/{store_id} 中没有 ({key}, {ts})",
                                  f"- 期望: {format_value(expected_value)}\n+ 实际: <缺失>")
        if not _values_equal(record.value, expected_value):
            raise AssertionFailed(f"{mdb_id}/{store_id} ({key}, {ts}) 的取值不符",
                                  f"- 期望: {format_value(expected_value)}\n+ 实际: {format_value(record.value)}")
        self._passed()

    def _do_expect_absent(self, step: Step):
        mdb_id, store_id, key = step.args[:3]
        found = [r for r in self._live(mdb_id, store_id)
                 if r.key == key and (len(step.args) < 4 or r.ts == int(step.args[3]))]
        if found:
            record = found[0]
            raise AssertionFailed(f"{mdb_id}/{store_id} 中不应存在 {key}",
                                  f"+ 实际: ({record.key}, {record.ts}) = {format_value(record.value)}")
        self._passed()

    def _do_expect_count(self, step: Step):
        mdb_id, store_id, expected = step.args
        pattern = step.option("key") or "*"
        actual = sum(1 for r in self._live(mdb_id, store_id) if fnmatch.fnmatchcase(r.key, pattern))
        if actual != int(expected):
            raise AssertionFailed(f"{mdb_id}/{store_id} 中匹配 {pattern} 的记录数不符",
                                  f"- 期望: {expected}\n+ 实际: {actual}")
        self._passed()

    def _do_expect_status(self, step: Step):
        mdb_id, store_id, request_id, expected = step.args
        request = self.topology.work.status(self.topology.mdb(mdb_id), store_id, request_id)
        if request.status.value != expected:
            detail = f" ({request.reason})" if request.reason else ""
            raise AssertionFailed(f"工作请求 {request_id} 的状态不符",
                                  f"- 期望: {expected}\n+ 实际: {request.status.value}{detail}")
        self._passed()

    def _do_expect_no_leak(self, step: Step):
        mdb_id, store_id, pattern = step.args
        leaked = [r for r in self._live(mdb_id, store_id) if fnmatch.fnmatchcase(r.key, pattern)]
        if leaked:
            lines = "\n".join(f"+ {mdb_id}/{store_id}/{r.key} ts={r.ts} origin={r.origin} {format_value(r.value)}"
                              for r in sorted(leaked, key=lambda r: r.ident))
            raise AssertionFailed(f"{mdb_id}/{store_id} 出现了不应共享的记录 {leaked[0].key}", lines)
        self._passed()

    def _do_expect_equal(self, step: Step):
        (mdb_a, store_a), (mdb_b, store_b) = (_split_store_ref(ref) for ref in step.args)
        left = {(r.key, r.ts): r.value for r in self._live(mdb_a, store_a)}
        right = {(r.key, r.ts): r.value for r in self._live(mdb_b, store_b)}
        if left != right:
            diff = [f"- {k} {format_value(left[k])}" for k in sorted(set(left) - set(right))]
            diff += [f"+ {k} {format_value(right[k])}" for k in sorted(set(right) - set(left))]
            diff += [f"~ {k} {format_value(left[k])} != {format_value(right[k])}"
                     for k in sorted(set(left) & set(right)) if left[k] != right[k]]
            raise AssertionFailed(f"{step.args[0]} 与 {step.args[1]} 不一致", "\n".join(diff))
        self._passed()

    def _do_expect_audit_clean(self, step: Step):
        violations = self.topology.audit.violations()
        if violations:
            diff = "\n".join(f"+ {v.component}@{v.component_tier} {v.op} {v.mdb_id}" for v in violations)
            raise AssertionFailed("审计日志中存在跨层访问", diff)
        self._passed()

    def _do_expect_mvc(self, step: Step):
        """应用的事件分派之后，服务读取输入并写出结果"""
        tier_id, app_id, service_id = step.args
        entries = [e for e in self.topology.audit.entries() if e.component_tier == tier_id]
        for i, entry in enumerate(entries):
            if entry.component != app_id or entry.op != "dispatch":
                continue
            later = entries[i + 1:]
            read = next((e for e in later if e.component == service_id and e.op == "read"), None)
            write = next((e for e in later if e.component == service_id and e.op == "write"), None)
            if read is not None and write is not None and read.seq < write.seq:
                self._passed()
                return
        raise AssertionFailed(f"层{tier_id}中没有 {app_id} 分派 -> {service_id} 读取 -> 写入 的审计序列",
                              "\n".join(f"  {e.seq} {e.component} {e.op} {e.mdb_id} {e.detail}" for e in entries))

    def _do_expect_deployment(self, step: Step):
        tier_id, component_id, mode = step.args
        for deployment in self.topology.tier(tier_id).deployments:
            if deployment["component_id"] == component_id:
                if deployment["mode"] != mode:
                    raise AssertionFailed(f"{component_id} 的部署方式不符",
                                          f"- 期望: {mode}\n+ 实际: {deployment['mode']}")
                self._passed()
                return
        raise AssertionFailed(f"层{tier_id}中没有组件{component_id}的部署记录")

    def _do_expect_error(self, step: Step):
        error_cls = getattr(errors, step.error_name)
        try:
            self._handler(step.inner.verb)(step.inner)
        except error_cls:
            self._passed()
            return
        except TierDBError as e:
            raise AssertionFailed(f"期望 {step.error_name}，实际 {type(e).__name__}: {e}")
        raise AssertionFailed(f"期望 {step.error_name}，但 {step.inner.verb} 成功执行")


def run_scenario(path: str, seed: int = 0, config: Optional[ConfigManager] = None) -> Tuple[ScenarioReport, Topology]:
    """解析并执行场景文件，返回报告与最终拓扑"""
    runner = ScenarioRunner.from_file(path, seed, config)
    return runner.run(), runner.topology
