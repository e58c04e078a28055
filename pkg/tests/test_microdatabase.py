import pytest

from tierdb.column_store import StoreKind
from tierdb.errors import (
    ConflictingRedefinition, DanglingBinding, InvalidRange, InvalidValue, KindMismatch, NotFound,
    StalePolicyVersion, Unauthorized, UnknownStore, UnknownType,
)
from tierdb.eula import load_library_policy, parse_policy
from tierdb.events import EventOp
from tierdb.info_model import AssetInstance, AssetType, PropertyDef
from tierdb.microdatabase import DAY_MS, MdbTemplate, Microdatabase
from tierdb.record import Record, ValueKind
from tierdb.security import Right


def _mdb(owner="alice"):
    template = MdbTemplate("grid", [("readings", StoreKind.TIMESERIES), ("work", StoreKind.WORK)])
    return Microdatabase(template, owner, "local-1")


def test_put_revisions_and_get():
    mdb = _mdb()
    assert mdb.mdb_id == "local-1/grid"
    assert mdb.put("readings", "TX-17/load_pct", 100, 80.0, "alice") == 1
    assert mdb.put("readings", "TX-17/load_pct", 100, 85.0, "alice") == 2
    record = mdb.get("readings", "TX-17/load_pct", 100, "alice")
    assert (record.value, record.revision, record.origin) == (85.0, 2, "local-1/grid")


def test_access_is_default_deny():
    mdb = _mdb()
    mdb.put("readings", "k", 1, 1.0, "alice")
    with pytest.raises(Unauthorized):
        mdb.get("readings", "k", 1, "bob")
    mdb.grant("alice", "bob", "readings", {Right.READ})
    assert mdb.get("readings", "k", 1, "bob").value == 1.0
    with pytest.raises(Unauthorized):
        mdb.put("readings", "k", 2, 1.0, "bob")
    with pytest.raises(Unauthorized):
        mdb.grant("bob", "bob", "*", {Right.ADMIN})
    mdb.revoke("alice", "bob", "readings")
    with pytest.raises(Unauthorized):
        mdb.keys("readings", "bob")


def test_delete_leaves_tombstone():
    mdb = _mdb()
    mdb.put("readings", "k", 1, 1.0, "alice")
    mdb.put("readings", "k", 2, 2.0, "alice")
    assert mdb.delete("readings", "k", 2, "alice") == 2
    with pytest.raises(NotFound):
        mdb.get("readings", "k", 2, "alice")
    with pytest.raises(NotFound):
        mdb.delete("readings", "k", 2, "alice")
    assert mdb.latest("readings", "k", 10, "alice").ts == 1
    assert [r.ts for r in mdb.range("readings", "k", 0, 10, "alice")] == [1]
    assert mdb.stores["readings"].lookup("k", 2).tombstone


def test_invalid_inputs():
    mdb = _mdb()
    with pytest.raises(InvalidRange):
        mdb.range("readings", "k", 5, 1, "alice")
    with pytest.raises(UnknownStore):
        mdb.put("nowhere", "k", 1, 1.0, "alice")
    with pytest.raises(InvalidValue):
        mdb.put("readings", "k", 1, float("nan"), "alice")
    with pytest.raises(KindMismatch):
        mdb.put("work", "wr-1", 1, b"not a request", "alice")


def test_mutations_publish_events_and_reads_do_not():
    mdb = _mdb()
    mdb.put("readings", "k", 1, 1.0, "alice")
    mdb.put("readings", "k", 1, 2.0, "alice")
    mdb.delete("readings", "k", 1, "alice")
    mdb.latest("readings", "k", 1, "alice")
    mdb.keys("readings", "alice")
    ops = []
    while mdb.hub.pending_count():
        ops.append(mdb.hub.pop().op)
    assert ops == [EventOp.CREATED, EventOp.UPDATED, EventOp.DELETED]


def test_eula_version_must_increase():
    mdb = _mdb()
    mdb.set_eula(load_library_policy("share-full", 1), "alice")
    with pytest.raises(StalePolicyVersion):
        mdb.set_eula(load_library_policy("deny-all", 1), "alice")
    with pytest.raises(Unauthorized):
        mdb.set_eula(load_library_policy("deny-all", 2), "bob")
    mdb.set_eula(load_library_policy("deny-all", 2), "alice")
    assert mdb.policy.policy_id == "deny-all"
    assert {r.mode.render() for r in mdb.sharing_rules()} == {"deny"}


def test_information_model_and_discovery():
    mdb = _mdb()
    transformer = AssetType("transformer", (PropertyDef("load_pct", "%", ValueKind.FLOAT),))
    mdb.define_asset_type(transformer, "alice")
    mdb.define_asset_type(transformer, "alice")
    with pytest.raises(ConflictingRedefinition):
        mdb.define_asset_type(AssetType("transformer", ()), "alice")
    mdb.register_instance(AssetInstance("TX-17", "transformer", frozenset({"sub-a"}),
                                        {"load_pct": ("readings", "TX-17/load_pct")}), "alice")
    mdb.register_instance(AssetInstance("TX-18", "transformer", frozenset({"sub-b"})), "alice")
    with pytest.raises(UnknownType):
        mdb.register_instance(AssetInstance("B-1", "breaker"), "alice")
    with pytest.raises(DanglingBinding):
        mdb.register_instance(AssetInstance("TX-19", "transformer", bindings={"oil": ("readings", "x")}), "alice")
    with pytest.raises(DanglingBinding):
        mdb.register_instance(AssetInstance("TX-19", "transformer",
                                            bindings={"load_pct": ("nowhere", "x")}), "alice")

    found = mdb.discover("alice", "transformer", {"sub-a"})
    assert [(b.canonical_id, b.prop_name, b.store_id, b.key) for b in found] == [
        ("TX-17", "load_pct", "readings", "TX-17/load_pct")]
    assert mdb.discover("alice", "breaker") == []
    with pytest.raises(Unauthorized):
        mdb.discover("bob")
    mdb.grant("alice", "bob", "readings", {Right.READ})
    assert len(mdb.discover("bob")) == 1


def test_apply_incoming_uses_last_writer_wins():
    mdb = _mdb()
    mdb.put("readings", "k", 1, 1.0, "alice")
    assert not mdb.apply_incoming("readings", Record("k", 1, 5.0, 1, "a/other"))
    assert mdb.apply_incoming("readings", Record("k", 1, 5.0, 1, "z/other"))
    assert mdb.get("readings", "k", 1, "alice").value == 5.0
    assert mdb.hub.peek().op is EventOp.CREATED
    events = [mdb.hub.pop() for _ in range(mdb.hub.pending_count())]
    assert events[-1].op is EventOp.REPLICATED


def test_retention_purge_drops_records_and_log_entries():
    mdb = _mdb()
    mdb.set_eula(parse_policy("policy p version=1\nrule * both full retention=1"), "alice")
    mdb.put("readings", "old", 0, 1.0, "alice")
    mdb.put("readings", "new", 2 * DAY_MS, 2.0, "alice")
    assert mdb.purge_retention(2 * DAY_MS) == 1
    assert mdb.stores["readings"].keys() == ["new"]
    assert [e.key for e in mdb.log_since("readings", 0)] == ["new"]
    assert not mdb.apply_incoming("readings", Record("old", 0, 1.0, 9, "z/other"))


def test_log_since_is_ordered_by_seq():
    mdb = _mdb()
    for ts in range(5):
        mdb.put("readings", "k", ts, float(ts), "alice")
    assert [e.seq for e in mdb.log_since("readings", 2)] == [3, 4, 5]
    assert mdb.last_seq == 5


def test_snapshot_state_reloads_identically():
    mdb = _mdb()
    mdb.set_eula(load_library_policy("share-full", 1), "alice")
    mdb.grant("alice", "bob", "readings", {Right.READ, Right.SUBSCRIBE})
    mdb.put("readings", "k", 1, 1.0, "alice")
    mdb.put("readings", "k", 2, "x", "alice")
    mdb.delete("readings", "k", 2, "alice")
    state = mdb.snapshot_state()

    restored = _mdb()
    restored.load_state(state)
    assert restored.snapshot_state() == state
    assert restored.authorize("bob", "readings", Right.SUBSCRIBE)
    assert len(restored.log_since("readings", 0)) == 2
