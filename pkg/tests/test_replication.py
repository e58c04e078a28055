import pytest

from conftest import collect, share
from tierdb.errors import KindMismatch, LinkDown
from tierdb.eula import Mode, parse_policy
from tierdb.record import Record
from tierdb.replication import Channel, FilterCriteria, apply_mode, sync


def _link(topology, key_glob="*", window=None, local="health", remote="health"):
    link_id = topology.configure_link("utility-a", ("local-1/grid", local), ("regional-1/fleet", remote),
                                      FilterCriteria(key_glob, window))
    return topology.replica_link(link_id)


def _live(mdb, store="health"):
    return {r.ident: r.value for r in mdb.stores[store].live_records()}


def test_full_sharing_copies_records_with_provenance(pair):
    topology, grid, fleet = pair
    share(grid, "share-full")
    collect(fleet)
    link = _link(topology)
    assert link.link_id == "link-001"
    grid.put("health", "TX-17/score", 0, 70.0, "utility-a")

    report = sync(link)
    assert (report.sent, report.received, report.skipped_by_policy) == (1, 1, 0)
    record = fleet.stores["health"].lookup("TX-17/score", 0)
    assert (record.value, record.revision, record.origin) == (70.0, 1, "local-1/grid")

    again = sync(link)
    assert (again.sent, again.received) == (0, 0)


def test_default_policy_shares_nothing(pair):
    topology, grid, fleet = pair
    collect(fleet)
    link = _link(topology)
    grid.put("health", "TX-17/score", 0, 70.0, "utility-a")
    report = sync(link)
    assert report.skipped_by_policy == 1
    assert _live(fleet) == {}


def test_receiver_inbound_deny(pair):
    topology, grid, fleet = pair
    share(grid, "share-full")
    share(fleet, "share-outbound-only")
    link = _link(topology)
    grid.put("health", "TX-17/score", 0, 70.0, "utility-a")
    report = sync(link)
    assert report.rejected_inbound == 1
    assert _live(fleet) == {}


def test_summarized_sharing_sends_only_window_means(pair):
    topology, grid, fleet = pair
    share(grid, "share-summarized-hourly")
    collect(fleet)
    link = _link(topology)
    grid.put("health", "TX-31/score", 0, 60.0, "utility-a")
    grid.put("health", "TX-31/score", 1000, 64.0, "utility-a")
    grid.put("health", "TX-31/recommendation", 0, "inspect", "utility-a")

    report = sync(link)
    assert _live(fleet) == {("TX-31/score.agg", 0): 62.0}
    assert report.summarized == 1
    assert report.skipped_by_policy == 1
    aggregate = fleet.stores["health"].lookup("TX-31/score.agg", 0)
    assert aggregate.origin == "local-1/grid" and aggregate.revision == 2

    grid.put("health", "TX-31/score", 2000, 68.0, "utility-a")
    sync(link)
    assert _live(fleet) == {("TX-31/score.agg", 0): 64.0}


def test_downsampled_sharing_keeps_first_per_interval(pair):
    topology, grid, fleet = pair
    share(grid, "share-downsampled-1min")
    collect(fleet)
    link = _link(topology)
    for ts in (0, 1000, 61000):
        grid.put("health", "TX-17/score", ts, float(ts), "utility-a")
    report = sync(link)
    assert sorted(_live(fleet)) == [("TX-17/score", 0), ("TX-17/score", 61000)]
    assert (report.sent, report.skipped_by_policy) == (2, 1)


def test_downsample_retracts_replaced_bucket_representative(pair):
    topology, grid, fleet = pair
    share(grid, "share-downsampled-1min")
    collect(fleet)
    link = _link(topology)
    grid.put("health", "TX-17/score", 30000, 3.0, "utility-a")
    sync(link)
    assert sorted(_live(fleet)) == [("TX-17/score", 30000)]

    grid.put("health", "TX-17/score", 10000, 1.0, "utility-a")
    report = sync(link)
    assert _live(fleet) == {("TX-17/score", 10000): 1.0}
    retracted = fleet.stores["health"].lookup("TX-17/score", 30000)
    assert retracted.tombstone and retracted.origin == "local-1/grid" and retracted.revision == 2
    assert report.sent == 2

    again = sync(link)
    assert (again.sent, again.received) == (0, 0)
    assert _live(fleet) == {("TX-17/score", 10000): 1.0}


def test_filter_criteria(pair):
    topology, grid, fleet = pair
    share(grid, "share-full")
    collect(fleet)
    link = _link(topology, key_glob="TX-17/*", window=(0, 100))
    grid.put("health", "TX-17/score", 50, 1.0, "utility-a")
    grid.put("health", "TX-17/score", 500, 2.0, "utility-a")
    grid.put("health", "TX-18/score", 50, 3.0, "utility-a")
    report = sync(link)
    assert _live(fleet) == {("TX-17/score", 50): 1.0}
    assert report.skipped_by_policy == 2


def test_tombstones_replicate(pair):
    topology, grid, fleet = pair
    share(grid, "share-full")
    collect(fleet)
    link = _link(topology)
    grid.put("health", "TX-17/score", 0, 70.0, "utility-a")
    sync(link)
    grid.delete("health", "TX-17/score", 0, "utility-a")
    sync(link)
    record = fleet.stores["health"].lookup("TX-17/score", 0)
    assert record.tombstone and record.revision == 2
    assert _live(fleet) == {}


def test_concurrent_writes_converge(pair):
    topology, grid, fleet = pair
    share(grid, "share-full")
    share(fleet, "share-full")
    link = _link(topology)
    grid.put("health", "k", 0, 1.0, "utility-a")
    fleet.put("health", "k", 0, 2.0, "operator")
    report = sync(link)
    assert report.conflicts_resolved >= 1
    assert _live(grid) == _live(fleet) == {("k", 0): 2.0}
    assert grid.stores["health"].lookup("k", 0).origin == "regional-1/fleet"


def test_policy_change_applies_from_next_sync(pair):
    topology, grid, fleet = pair
    share(grid, "share-full")
    collect(fleet)
    link = _link(topology)
    grid.put("health", "a", 0, 1.0, "utility-a")
    sync(link)
    share(grid, "deny-all")
    grid.put("health", "b", 0, 2.0, "utility-a")
    sync(link)
    assert _live(fleet) == {("a", 0): 1.0}


def test_interrupted_sync_keeps_complete_batches(pair):
    topology, grid, fleet = pair
    share(grid, "share-full")
    collect(fleet)
    link = _link(topology)
    for ts in range(5):
        grid.put("health", "k", ts, float(ts), "utility-a")

    with pytest.raises(LinkDown):
        sync(link, channel=Channel(fail_after_batches=1), batch_size=2)
    assert sorted(_live(fleet)) == [("k", 0), ("k", 1)]
    assert link.watermark("outbound", "local-1/grid") == 2

    sync(link, batch_size=2)
    assert len(_live(fleet)) == 5
    assert link.watermark("outbound", "local-1/grid") == 5


def test_down_link_does_not_sync(pair):
    topology, grid, fleet = pair
    link = _link(topology)
    with pytest.raises(LinkDown):
        sync(link, link_up=False)


def test_link_ends_must_have_same_kind(pair):
    topology, _, _ = pair
    with pytest.raises(KindMismatch):
        _link(topology, local="health", remote="work")


def test_apply_mode_aggregates():
    records = [Record("k", 0, 1.0, 1, "o"), Record("k", 10, 3.0, 1, "o"), Record("k", 20, 8.0, 2, "o")]
    assert apply_mode(Mode.full(), records) == records
    assert apply_mode(Mode.deny(), records) == []
    assert [r.ts for r in apply_mode(Mode.downsample(15), records)] == [0, 20]
    summary = apply_mode(Mode.summarize("max", 15), records, origin="sender")
    assert [(r.key, r.ts, r.value, r.revision, r.origin) for r in summary] == [
        ("k.agg", 0, 3.0, 2, "sender"), ("k.agg", 15, 8.0, 2, "sender")]
    assert [r.value for r in apply_mode(Mode.summarize("count", 100), records)] == [3]
    assert [r.value for r in apply_mode(Mode.summarize("min", 100), records)] == [1.0]


def test_summary_of_deleted_window_is_tombstone():
    records = [Record("k", 0, None, 2, "o", tombstone=True)]
    (summary,) = apply_mode(Mode.summarize("mean", 100), records)
    assert summary.tombstone and summary.value is None


def test_records_denied_earlier_are_sent_after_policy_opens(pair):
    topology, grid, fleet = pair
    collect(fleet)
    link = _link(topology)
    grid.put("health", "TX-17/score", 0, 70.0, "utility-a")
    assert sync(link).sent == 0

    share(grid, "share-full")
    report = sync(link)
    assert report.sent == 1
    assert _live(fleet) == {("TX-17/score", 0): 70.0}
    assert sync(link).sent == 0


@pytest.mark.parametrize("inbound", ["downsample:60000", "summarize:mean:3600000"])
def test_non_deny_inbound_mode_accepts_records_unchanged(pair, inbound):
    topology, grid, fleet = pair
    share(grid, "share-full")
    policy = parse_policy(f"policy keep-all version=1\nrule * inbound {inbound}\n")
    fleet.set_eula(policy.with_version(fleet.policy.version + 1), fleet.owner)
    link = _link(topology)
    grid.put("health", "TX-17/score", 0, 70.0, "utility-a")
    grid.put("health", "TX-17/score", 1000, 71.0, "utility-a")

    report = sync(link)
    assert (report.received, report.rejected_inbound, report.summarized) == (2, 0, 0)
    assert _live(fleet) == {("TX-17/score", 0): 70.0, ("TX-17/score", 1000): 71.0}
    record = fleet.stores["health"].lookup("TX-17/score", 1000)
    assert (record.revision, record.origin) == (1, "local-1/grid")
