"""
性质测试与随机化验收：合并、收敛、策略安全、顺序无关、事件顺序、工作请求往返与暴力对照
"""
import fnmatch
import functools
import random
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_pair, collect, share
from tierdb.appstore import Catalog, ComponentKind, parse_manifest
from tierdb.column_store import StoreKind
from tierdb.eula import (
    Direction, EulaPolicy, Mode, ModeKind, PolicyRule, canonicalize, list_library, load_library_policy, parse_policy,
    resolve_rule,
)
from tierdb.events import EventOp, Handler
from tierdb.info_model import AssetInstance, AssetType, PropertyDef
from tierdb.microdatabase import MdbTemplate
from tierdb.record import MergeDecision, Record, ValueKind, merge
from tierdb.replication import apply_mode, sync
from tierdb.security import Right
from tierdb.snapshot import dumps, snapshot
from tierdb.topology import LinkState, TierLevel, Topology
from tierdb.work_manager import EXPIRED
from tierdb.work_request import WorkStatus

HOUR = 3_600_000
ORIGINS = ("local-1/grid", "local-2/grid", "regional-1/fleet")

fast = settings(max_examples=40, deadline=None)

versions = st.lists(
    st.tuples(st.integers(1, 20), st.sampled_from(ORIGINS), st.floats(-1e6, 1e6, allow_nan=False)),
    min_size=1, max_size=8, unique_by=lambda v: (v[0], v[1]),
)
writes = st.lists(
    st.tuples(st.sampled_from(("grid", "fleet")), st.sampled_from(("a", "b", "c")), st.integers(0, 3),
              st.floats(-1e3, 1e3, allow_nan=False)),
    max_size=20,
)


def _fold(records):
    def step(current, incoming):
        return incoming if merge(current, incoming) is MergeDecision.TAKE_INCOMING else current
    return functools.reduce(step, records, None)


def _linked_pair():
    topology, grid, fleet = build_pair()
    link_id = topology.configure_link("utility-a", ("local-1/grid", "health"), ("regional-1/fleet", "health"))
    return topology, grid, fleet, topology.replica_link(link_id)


def _live(mdb):
    return {r.ident: r.value for r in mdb.stores["health"].live_records()}


@fast
@given(versions, st.randoms(use_true_random=False))
def test_merge_is_order_independent(items, rnd):
    records = [Record("k", 0, value, revision, origin) for revision, origin, value in items]
    shuffled = list(records)
    rnd.shuffle(shuffled)
    winner = max(records, key=lambda r: (r.revision, r.origin))
    assert _fold(records) == _fold(shuffled) == winner


@fast
@given(writes)
def test_replicas_converge(ops):
    _, grid, fleet, link = _linked_pair()
    share(grid, "share-full")
    share(fleet, "share-full")
    owners = {"grid": (grid, "utility-a"), "fleet": (fleet, "operator")}
    for side, key, ts, value in ops:
        mdb, owner = owners[side]
        mdb.put("health", key, ts, value, owner)
    sync(link)
    sync(link)
    assert _live(grid) == _live(fleet)


@fast
@given(writes)
def test_summarized_sharing_only_releases_aggregates(ops):
    _, grid, fleet, link = _linked_pair()
    share(grid, "share-summarized-hourly")
    collect(fleet)
    for _, key, ts, value in ops:
        grid.put("health", key, ts, value, "utility-a")
    sync(link)
    assert all(key.endswith(".agg") for key, _ in _live(fleet))


@fast
@given(writes)
def test_default_policy_releases_nothing(ops):
    _, grid, fleet, link = _linked_pair()
    collect(fleet)
    for _, key, ts, value in ops:
        grid.put("health", key, ts, value, "utility-a")
    report = sync(link)
    assert _live(fleet) == {}
    assert report.sent == 0


@fast
@given(st.dictionaries(st.integers(0, HOUR - 1), st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=12))
def test_summary_is_window_mean(points):
    _, grid, fleet, link = _linked_pair()
    share(grid, "share-summarized-hourly")
    collect(fleet)
    for ts, value in points.items():
        grid.put("health", "TX-31/score", ts, value, "utility-a")
    sync(link)
    aggregate = fleet.stores["health"].lookup("TX-31/score.agg", 0)
    assert aggregate.value == pytest.approx(sum(points.values()) / len(points), abs=1e-6)


@fast
@given(writes)
def test_resync_is_idempotent(ops):
    topology, grid, fleet, link = _linked_pair()
    share(grid, "share-full")
    collect(fleet)
    for _, key, ts, value in ops:
        grid.put("health", key, ts, value, "utility-a")
    sync(link)
    before = dumps(snapshot(topology))
    report = sync(link)
    assert (report.sent, report.received) == (0, 0)
    assert dumps(snapshot(topology)) == before


@fast
@given(writes)
def test_every_mutation_raises_one_event(ops):
    topology, grid, _, _ = _linked_pair()
    for _, key, ts, value in ops:
        grid.put("health", key, ts, value, "utility-a")
    assert topology.pending_events("local-1") == len(ops)


@fast
@given(st.sets(st.integers(0, 10_000), min_size=1, max_size=30), st.integers(1, 2_000))
def test_downsample_keeps_first_per_bucket(timestamps, interval):
    records = [Record("k", ts, float(ts), 1, "o") for ts in sorted(timestamps)]
    kept = [r.ts for r in apply_mode(Mode.downsample(interval), records)]
    expected = sorted({min(t for t in timestamps if t // interval == b) for b in {t // interval for t in timestamps}})
    assert kept == expected


semver = st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3)).map(lambda v: "%d.%d.%d" % v)


@fast
@given(semver, semver)
def test_version_check_requires_exact_match(tier_version, required):
    topology, _, _ = build_pair()
    topology.create_tier("local-9", "local", tier_version, owner="utility-z")
    check = topology.check_version(required, "local-9")
    assert check.ok == (tier_version == required)
    assert check.actual == tier_version


modes = st.one_of(
    st.just(Mode.full()),
    st.just(Mode.deny()),
    st.integers(1, 10 ** 7).map(Mode.downsample),
    st.builds(Mode.summarize, st.sampled_from(("mean", "min", "max", "count")), st.integers(1, 10 ** 7)),
)
rules = st.builds(PolicyRule, st.sampled_from(("*", "health", "work*", "read?ngs")), st.sampled_from(list(Direction)),
                  modes, st.one_of(st.none(), st.integers(1, 3650)))
policies = st.builds(EulaPolicy, st.from_regex(r"[a-z][a-z0-9-]{0,15}", fullmatch=True), st.integers(1, 1000),
                     st.lists(rules, max_size=6).map(tuple))


@fast
@given(policies)
def test_policy_text_round_trips(policy):
    text = policy.serialize()
    assert parse_policy(text) == policy
    assert canonicalize(text) == text


# ---------------------------------------------------------------------- 多层链上的随机化验收

CHAIN_LEVELS = (TierLevel.DEVICE, TierLevel.PLANT, TierLevel.LOCAL, TierLevel.REGIONAL, TierLevel.GLOBAL)
NODE = MdbTemplate("node", [("health", StoreKind.TIMESERIES)])
LIBRARY = tuple(list_library())


def _chain(policy_names):
    """tier-0 <-> tier-1 <-> ...，每层一个 node 微数据库，相邻层的 health 之间配置副本链路"""
    topology = Topology()
    mdbs = []
    for index, name in enumerate(policy_names):
        tier_id, owner = f"tier-{index}", f"owner-{index}"
        topology.create_tier(tier_id, CHAIN_LEVELS[index], "1.0.0", owner=owner)
        mdb = topology.mdb(topology.create_microdatabase(NODE, owner, tier_id))
        mdb.set_eula(load_library_policy(name, 1), owner)
        if mdbs:
            topology.connect(mdbs[-1].tier_id, tier_id)
            topology.configure_link(mdbs[-1].owner, (mdbs[-1].mdb_id, "health"), (mdb.mdb_id, "health"))
        mdbs.append(mdb)
    return topology, mdbs


def _random_workload(rnd, topology, mdbs, steps):
    """随机写入、删除、分区与周期，最后全部恢复并跑到静止；返回每次本地修改产生的记录"""
    pairs = [(a.tier_id, b.tier_id) for a, b in zip(mdbs, mdbs[1:])]
    history = []
    for _ in range(steps):
        roll = rnd.random()
        mdb = rnd.choice(mdbs)
        key, ts = f"k{rnd.randrange(8)}", rnd.randrange(4)
        if roll < 0.6:
            mdb.put("health", key, ts, float(rnd.randrange(1000)), mdb.owner)
        elif roll < 0.7:
            existing = mdb.stores["health"].lookup(key, ts)
            if existing is None or existing.tombstone:
                continue
            mdb.delete("health", key, ts, mdb.owner)
        elif roll < 0.85:
            topology.set_link_state(*rnd.choice(pairs), rnd.choice((LinkState.UP, LinkState.DOWN)))
            continue
        else:
            topology.run_cycle()
            continue
        history.append(mdb.stores["health"].lookup(key, ts))
    for pair in pairs:
        topology.set_link_state(*pair, LinkState.UP)
    for _ in range(len(mdbs) + 1):
        topology.run_cycle()
    return history


def _history_winners(history):
    winners = {}
    for record in history:
        current = winners.get(record.ident)
        if current is None or (record.revision, record.origin) > (current.revision, current.origin):
            winners[record.ident] = record
    return winners


@pytest.mark.parametrize("seed", range(200))
def test_chain_converges_to_global_history(seed):
    rnd = random.Random(seed)
    topology, mdbs = _chain(["share-full"] * rnd.randint(3, 5))
    expected = _history_winners(_random_workload(rnd, topology, mdbs, 150))
    for mdb in mdbs:
        assert {r.ident: r for r in mdb.stores["health"].records()} == expected
    assert len({dumps(mdb.snapshot_state()["stores"]) for mdb in mdbs}) == 1


@pytest.mark.parametrize("seed", range(100))
def test_denied_records_never_reach_receivers(seed):
    rnd = random.Random(seed)
    size = rnd.randint(3, 5)
    topology, mdbs = _chain([rnd.choice(LIBRARY) for _ in range(size)])
    _random_workload(rnd, topology, mdbs, 150)
    position = {mdb.replica_id: index for index, mdb in enumerate(mdbs)}
    for here, mdb in enumerate(mdbs):
        for record in mdb.stores["health"].records():
            source = position[record.origin]
            step = 1 if here > source else -1
            # 沿链逐跳检查：每一跳的出站与入站规则都必须放行
            for hop in range(source, here, step):
                sender, receiver = mdbs[hop], mdbs[hop + step]
                outbound = resolve_rule(sender.policy, "health", Direction.OUTBOUND).mode.kind
                inbound = resolve_rule(receiver.policy, "health", Direction.INBOUND).mode.kind
                assert inbound is not ModeKind.DENY
                if hop == source:
                    assert outbound is not ModeKind.DENY
                    assert (outbound is ModeKind.SUMMARIZE) == record.key.endswith(".agg")
                else:
                    # 汇总的中间层只转发自己合成的记录
                    assert outbound in (ModeKind.FULL, ModeKind.DOWNSAMPLE)


@pytest.mark.parametrize("seed", range(5))
def test_sync_order_does_not_change_final_state(seed):
    rnd = random.Random(seed)
    writes = [(rnd.randrange(3), f"k{rnd.randrange(6)}", rnd.randrange(3), float(rnd.randrange(100)))
              for _ in range(40)]
    deletes = [(rnd.randrange(3), f"k{rnd.randrange(6)}", rnd.randrange(3)) for _ in range(10)]
    states = set()
    for _ in range(20):
        topology, mdbs = _chain(["share-full"] * 3)
        for index, key, ts, value in writes:
            mdbs[index].put("health", key, ts, value, mdbs[index].owner)
        for index, key, ts in deletes:
            existing = mdbs[index].stores["health"].lookup(key, ts)
            if existing is not None and not existing.tombstone:
                mdbs[index].delete("health", key, ts, mdbs[index].owner)
        order = topology.links * 2
        rnd.shuffle(order)
        for _ in range(3):
            for link in order:
                sync(link)
        assert all(sync(link).sent == 0 for link in topology.links)
        states.add(dumps({mdb.mdb_id: mdb.snapshot_state() for mdb in mdbs}))
    assert len(states) == 1


# ---------------------------------------------------------------------- 事件顺序

@pytest.mark.parametrize("seed", range(100))
def test_events_follow_mutation_order_per_store(seed):
    rnd = random.Random(seed)
    topology, grid, _ = build_pair()
    observed = {"readings": [], "health": []}
    for store_id, seen in observed.items():
        grid.hub.subscribe(store_id, "utility-a", Handler(
            "recorder", "local-1", lambda e, seen=seen: seen.append((e.op, e.key, e.ts, e.revision))))
    expected = {"readings": [], "health": []}
    for _ in range(rnd.randint(1, 60)):
        store_id = rnd.choice(("readings", "health"))
        key, ts = f"TX-{rnd.randrange(4)}/load_pct", rnd.randrange(3)
        existing = grid.stores[store_id].lookup(key, ts)
        if existing is not None and not existing.tombstone and rnd.random() < 0.3:
            revision = grid.delete(store_id, key, ts, "utility-a")
            expected[store_id].append((EventOp.DELETED, key, ts, revision))
        else:
            revision = grid.put(store_id, key, ts, float(rnd.randrange(100)), "utility-a")
            op = EventOp.CREATED if existing is None else EventOp.UPDATED
            expected[store_id].append((op, key, ts, revision))
    topology.pump_events("local-1", 10_000)
    assert observed == expected


# ---------------------------------------------------------------------- 工作请求

EXPIRY = 4


def _work_pair(expiry=EXPIRY):
    topology, grid, fleet = build_pair()
    share(grid, "share-full")
    collect(fleet)
    topology.configure_link("utility-a", ("local-1/grid", "work"), ("regional-1/fleet", "work"))
    topology.config.set_runtime("work_expiry_cycles", expiry)
    return topology, grid, fleet


def _execute_dispatched(topology, executions):
    for request in topology.work.poll_work("regional-1", "operator"):
        executions[request.request_id] += 1
        topology.work.mark_executing("regional-1", request.request_id)
        topology.work.complete_work("regional-1", request.request_id, result={"n": 1.0})


@pytest.mark.parametrize("seed", range(50))
def test_work_requests_finish_exactly_once_under_random_outages(seed):
    rnd = random.Random(seed)
    topology, grid, fleet = _work_pair()
    executions = Counter()
    submitted = {}
    link_up = {}
    for _ in range(rnd.randint(6, 14)):
        for _ in range(rnd.randint(0, 2)):
            request_id = topology.work.submit_work_request(grid, "work", "regional-1", "op", {}, "utility-a")
            submitted[request_id] = topology.cycle
        state = rnd.choice((LinkState.UP, LinkState.DOWN))
        topology.set_link_state("local-1", "regional-1", state)
        topology.run_cycle()
        link_up[topology.cycle] = state is LinkState.UP
        _execute_dispatched(topology, executions)
    topology.set_link_state("local-1", "regional-1", LinkState.UP)
    for _ in range(EXPIRY + 3):
        topology.run_cycle()
        _execute_dispatched(topology, executions)

    assert all(count == 1 for count in executions.values())
    for request_id, submitted_cycle in submitted.items():
        request = topology.work.status(grid, "work", request_id)
        assert request.terminal
        assert topology.work.status(fleet, "work", request_id) == request
        if executions[request_id]:
            assert request.status is WorkStatus.COMPLETED
        else:
            assert request.status is WorkStatus.FAILED and request.reason == EXPIRED
        # 派发后的记录最早在下一周期送达，期限内链路一直断开则必定过期
        window = range(submitted_cycle + 2, submitted_cycle + EXPIRY + 1)
        if all(cycle in link_up and not link_up[cycle] for cycle in window):
            assert executions[request_id] == 0


@pytest.mark.parametrize("seed", range(100))
def test_competing_executors_accept_each_request_once(seed):
    rnd = random.Random(seed)
    topology, grid, fleet = _work_pair(expiry=20)
    fleet.grant("operator", "executor-b", "work", {Right.READ})
    request_ids = {topology.work.submit_work_request(grid, "work", "regional-1", "op", {}, "utility-a")
                   for _ in range(rnd.randint(1, 8))}
    topology.run_cycle()
    topology.run_cycle()
    barrier = threading.Barrier(2)

    def poll(principal):
        barrier.wait()
        return [r.request_id for r in topology.work.poll_work("regional-1", principal)]

    with ThreadPoolExecutor(max_workers=2) as pool:
        first, second = pool.map(poll, ("operator", "executor-b"))
    assert not set(first) & set(second)
    assert sorted(first + second) == sorted(request_ids)


# ---------------------------------------------------------------------- 暴力对照

@pytest.mark.parametrize("seed", range(50))
def test_range_matches_linear_scan(seed):
    rnd = random.Random(seed)
    _, grid, _ = build_pair()
    model = {}
    for _ in range(1000):
        key, ts = f"TX-{rnd.randrange(5)}/load_pct", rnd.randrange(200)
        value = float(rnd.randrange(1000))
        grid.put("readings", key, ts, value, "utility-a")
        model[(key, ts)] = value
    for key, ts in rnd.sample(sorted(model), 50):
        grid.delete("readings", key, ts, "utility-a")
        del model[(key, ts)]
    for _ in range(50):
        key = f"TX-{rnd.randrange(6)}/load_pct"
        t0 = rnd.randrange(-10, 210)
        t1 = t0 + rnd.randrange(100)
        expected = sorted((ts, value) for (k, ts), value in model.items() if k == key and t0 <= ts <= t1)
        assert [(r.ts, r.value) for r in grid.range("readings", key, t0, t1, "utility-a")] == expected


@pytest.mark.parametrize("seed", range(50))
def test_discover_matches_naive_filter(seed):
    rnd = random.Random(seed)
    _, grid, _ = build_pair()
    props = (PropertyDef("load_pct", "%", ValueKind.FLOAT), PropertyDef("dga_ppm", "ppm", ValueKind.FLOAT))
    for type_name in ("transformer", "breaker"):
        grid.define_asset_type(AssetType(type_name, props), "utility-a")
    tag_pool = ("north", "south", "critical", "urban")
    instances = []
    for n in range(50):
        canonical_id = f"A-{n:02d}"
        instance = AssetInstance(
            canonical_id, rnd.choice(("transformer", "breaker")),
            frozenset(t for t in tag_pool if rnd.random() < 0.4),
            {p.prop_name: ("readings", f"{canonical_id}/{p.prop_name}") for p in props if rnd.random() < 0.7},
        )
        grid.register_instance(instance, "utility-a")
        instances.append(instance)
    for _ in range(20):
        type_name = rnd.choice((None, "transformer", "breaker"))
        tags = {t for t in tag_pool if rnd.random() < 0.3}
        expected = [
            (i.canonical_id, prop, *i.bindings[prop])
            for i in instances
            if (type_name is None or i.type_name == type_name) and tags <= i.tags
            for prop in sorted(i.bindings)
        ]
        found = grid.discover("utility-a", type_name, tags)
        assert [(b.canonical_id, b.prop_name, b.store_id, b.key) for b in found] == expected


@pytest.mark.parametrize("seed", range(50))
def test_authorize_matches_grant_scan(seed):
    rnd = random.Random(seed)
    _, grid, _ = build_pair()
    principals = ("app-a", "app-b", "svc-c")
    selectors = ("*", "health", "read*", "work", "h?alth", "config")
    grants = [("utility-a", "*", {Right.ADMIN})]
    for _ in range(rnd.randint(0, 12)):
        grant = (rnd.choice(principals), rnd.choice(selectors), set(rnd.sample(list(Right), rnd.randint(1, 2))))
        grid.grant("utility-a", *grant)
        grants.append(grant)
    if len(grants) > 1 and rnd.random() < 0.5:
        principal, selector, _ = rnd.choice(grants[1:])
        grid.revoke("utility-a", principal, selector)
        grants = [g for g in grants if (g[0], g[1]) != (principal, selector)]
    for principal in principals + ("utility-a", "mallory"):
        for store_id in sorted(grid.stores):
            for action in Right:
                expected = any(
                    p == principal and fnmatch.fnmatchcase(store_id, s) and (action in rights or Right.ADMIN in rights)
                    for p, s, rights in grants
                )
                assert grid.authorize(principal, store_id, action) == expected


@pytest.mark.parametrize("seed", range(50))
def test_catalog_search_matches_linear_scan(seed):
    rnd = random.Random(seed)
    catalog = Catalog()
    published = {}
    for _ in range(rnd.randint(1, 15)):
        name = rnd.choice(("overload-kpi", "transformer-health", "monitor"))
        kind = ComponentKind.APP if name == "monitor" else ComponentKind.APP_SERVICE
        payload = {"implementation": "rules", "rules": []} if kind is ComponentKind.APP else {"implementation": name}
        manifest, payload = parse_manifest({
            "kind": kind.value, "name": name, "version": "%d.%d.%d" % tuple(rnd.randrange(3) for _ in range(3)),
            "required_platform_version": "1.0.0", "payload": payload,
        })
        if manifest.entry_id not in published:
            catalog.publish(manifest, payload, publisher="vendor-a")
            published[manifest.entry_id] = manifest
    for name in (None, "overload-kpi", "transformer-health", "monitor", "absent"):
        for kind in (None, ComponentKind.APP, ComponentKind.APP_SERVICE):
            expected = sorted(
                (m for m in published.values() if (name is None or m.name == name) and (kind is None or m.kind is kind)),
                key=lambda m: (m.name, [-int(part) for part in m.version.split(".")]),
            )
            assert [e.manifest for e in catalog.search(name, kind)] == expected
