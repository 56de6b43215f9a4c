import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from simkit import (
    connected_points,
    lossless_world,
    path_points,
    run_gossip,
    seed_stores,
    static_topology,
    union_oracle,
)
from tsharvest.harvest_protocol import (
    UNREACHABLE,
    Confirmation,
    GossipRunner,
    HarvestAgent,
    MessageSizes,
    NaiveGossipAgent,
    PeerSyncState,
    ProtocolConfig,
    candidate_set,
    determine_transfer_dataset,
    full_dataset,
    select_peers,
    trim_empty_ends,
)
from tsharvest.timeseries import Entry, SeriesId, TimeSeriesStore, TransferDataset
from tsharvest.trace import MessageTrace

D = {i: SeriesId(f"d{i}", "x") for i in range(1, 6)}
X, _ = True, False


def dataset_example():
    """Five series, slot length 1 s, aging limit 10 s, built at t=20.

    Watermarks (the newest slot already confirmed to the peer) and flags are
    chosen so that D1 sends value/empty/value, D2 five slots reaching back
    past its last sync, D3 two slots, D4 nothing new, D5 only data older
    than the age limit.
    """
    store = TimeSeriesStore(1.0)
    flags = {1: [15, 17], 2: [11, 15], 3: [12, 13], 4: [5, 12], 5: [8]}
    marks = {1: 14, 2: 10, 3: 11, 4: 12}
    for i, ks in flags.items():
        store.add_slots(D[i], ks)
    sync = PeerSyncState()
    sync.last_synced["peer"] = {D[i]: k for i, k in marks.items()}
    cfg = ProtocolConfig(cycle_period=5.0, aging_limit=10.0, transfer_slot_len=1.0,
                         confirm_timeout=5.0)
    return store, sync, cfg


def test_dataset_example_series():
    store, sync, cfg = dataset_example()
    ds = determine_transfer_dataset(store, sync, "peer", 20.0, cfg)
    by = {e.series: e for e in ds.entries}
    assert by[D[1]].run == [X, _, X] and by[D[1]].first == 15
    assert by[D[2]].length == 5 and by[D[2]].run == [X, _, _, _, X]
    assert by[D[3]].length == 2
    assert D[4] not in by and D[5] not in by
    assert ds.slot_count == 10
    assert ds.well_formed()


def test_dataset_fully_synced_is_empty():
    store, sync, cfg = dataset_example()
    sync.last_synced["peer"] = {sid: 100 for sid in D.values()}
    assert not determine_transfer_dataset(store, sync, "peer", 20.0, cfg)


def test_dataset_requires_transfer_resolution():
    store, sync, cfg = dataset_example()
    fine = TimeSeriesStore(0.1)
    with pytest.raises(ValueError):
        determine_transfer_dataset(fine, sync, "peer", 20.0, cfg)


@given(st.sets(st.integers(0, 300), max_size=40), st.integers(-1, 300),
       st.floats(0, 400), st.floats(1, 200))
def test_dataset_criteria_hold(flags, mark, now, T):
    store = TimeSeriesStore(1.0)
    sid = D[1]
    store.add_slots(sid, flags)
    sync = PeerSyncState()
    sync.last_synced["p"] = {sid: mark}
    cfg = ProtocolConfig(cycle_period=T, aging_limit=T, transfer_slot_len=1.0, confirm_timeout=T)
    ds = determine_transfer_dataset(store, sync, "p", now, cfg)
    expected = sorted(k for k in flags if k > mark and k >= now - T - 1e-9)
    if not expected:
        assert not ds
        return
    (e,) = ds.entries
    assert list(e.flags) == expected
    # ends are non-empty, interior gaps kept
    assert e.run[0] and e.run[-1] and e.length == expected[-1] - expected[0] + 1


def test_trim_empty_ends_examples():
    assert trim_empty_ends([_, X, _, X, _]) == [X, _, X]
    assert trim_empty_ends([X]) == [X]
    assert trim_empty_ends([_, _, _]) == []
    assert trim_empty_ends([]) == []


@given(st.lists(st.booleans(), max_size=60))
def test_trim_position_accounting(run):
    out = trim_empty_ends(run)
    ones = [i for i, v in enumerate(run) if v]
    if not ones:
        assert out == []
        return
    assert out == run[ones[0]:ones[-1] + 1]
    assert sum(out) == len(ones)


def test_full_dataset_is_untrimmed_window():
    store = TimeSeriesStore(1.0)
    store.add_slots(D[1], [12, 14])
    cfg = ProtocolConfig(cycle_period=5.0, aging_limit=10.0, transfer_slot_len=1.0,
                         confirm_timeout=5.0)
    (e,) = full_dataset(store, 20.0, cfg).entries
    assert (e.first, e.last) == (10, 20) and e.flags == (12, 14)
    (t,) = full_dataset(store, 20.0, cfg, trim=True).entries
    assert (t.first, t.last) == (12, 14)


# -- peers ---------------------------------------------------------------------

def test_candidate_sets_from_peer_selection_example():
    first = {0: 0, 1: 1, 2: 1, 3: 1, 4: 1, 5: 2, 6: 3, 7: 2, 8: 2}
    assert candidate_set(0, first, 1) == {1, 2, 3, 4}
    later = {0: 0, 1: 2, 2: 1, 3: 1, 4: float("inf"), 5: 1, 6: 3, 7: 1, 8: 1}
    assert candidate_set(0, later, 1) == {2, 3, 7, 5, 8}
    assert candidate_set(0, later, 2) == {1, 2, 3, 5, 7, 8}


def test_candidate_set_sequence_and_isolated():
    row = [0, 1, UNREACHABLE, 2]
    assert candidate_set(0, row, 1) == {1}
    assert candidate_set(0, row, 5) == {1, 3}
    assert candidate_set(2, [UNREACHABLE, UNREACHABLE, 0, UNREACHABLE], 3) == set()


def test_select_peers_caps_and_empty():
    rng = random.Random(1)
    assert select_peers({7}, 2, rng) == {7}
    assert select_peers(set(), 2, rng) == set()
    assert select_peers({1, 2, 3}, None, rng) == {1, 2, 3}
    assert len(select_peers({1, 2, 3, 4}, 2, rng)) == 2


def test_select_peers_uniform_over_pairs():
    rng = random.Random(3)
    counts = Counter(frozenset(select_peers({1, 2, 3, 4}, 2, rng)) for _ in range(6000))
    assert len(counts) == 6
    # each of the 6 pairs: mean 1000, sd ~ 29
    assert all(abs(c - 1000) < 150 for c in counts.values())


def test_select_peers_deterministic_per_seed():
    a = [select_peers(set(range(10)), 3, random.Random(5)) for _ in range(3)]
    assert a[0] == a[1] == a[2]


# -- sync state --------------------------------------------------------------------

def test_confirm_advances_and_clears_pending():
    s = PeerSyncState()
    s.start(1, 10, now=0.0, newest={D[1]: 5})
    assert s.on_confirm(1, 10, {D[1]: 5}, now=0.5, timeout=2.0)
    assert s.watermark(1, D[1]) == 5 and 1 not in s.pending


def test_late_unknown_and_mismatched_confirmations_ignored():
    s = PeerSyncState()
    s.start(1, 10, now=0.0, newest={D[1]: 5})
    assert not s.on_confirm(1, 10, {D[1]: 5}, now=3.0, timeout=2.0)
    assert s.watermark(1, D[1]) == -1
    assert not s.on_confirm(1, 11, {D[1]: 5}, now=0.1, timeout=2.0)
    assert not s.on_confirm(2, 10, {D[1]: 5}, now=0.1, timeout=2.0)
    assert s.watermark(2, D[1]) == -1


def test_watermark_never_decreases():
    s = PeerSyncState()
    s.start(1, 1, 0.0, {})
    s.on_confirm(1, 1, {D[1]: 9}, 0.1, 5.0)
    s.start(1, 2, 1.0, {})
    s.on_confirm(1, 2, {D[1]: 4}, 1.1, 5.0)
    assert s.watermark(1, D[1]) == 9


def test_timeout_clears_pending_and_no_pending_is_noop():
    s = PeerSyncState()
    assert not s.on_timeout(1)
    s.start(1, 10, 0.0, {D[1]: 5})
    with pytest.raises(RuntimeError):
        s.start(1, 11, 0.0, {})
    assert s.on_timeout(1, 10)
    assert 1 not in s.pending and s.watermark(1, D[1]) == -1


def test_timeout_then_resend_includes_same_slots():
    store, sync, cfg = dataset_example()
    agent = HarvestAgent(0, cfg, store)
    agent.sync = sync
    first = agent.build("peer", 20.0)
    agent.sync.start("peer", 1, 20.0, first.newest())
    agent.on_timeout("peer", 1)
    again = agent.build("peer", 21.0)
    assert again.entries == first.entries


def test_pending_peer_is_not_a_candidate():
    cfg = ProtocolConfig(cycle_period=5.0, aging_limit=10.0, transfer_slot_len=1.0,
                         confirm_timeout=5.0)
    a = HarvestAgent(0, cfg, TimeSeriesStore(1.0))
    a.sync.start(1, 99, 0.0, {})
    assert a.candidates([0, 1, 1]) == {2}
    assert NaiveGossipAgent(0, cfg, TimeSeriesStore(1.0)).candidates([0, 1, 1]) == {1, 2}


def test_malformed_dataset_is_rejected_without_confirmation():
    cfg = ProtocolConfig(cycle_period=5.0, aging_limit=10.0, transfer_slot_len=1.0,
                         confirm_timeout=5.0)
    a = HarvestAgent(1, cfg, TimeSeriesStore(1.0))
    bad = TransferDataset(1.0, (Entry(D[1], (3,)), Entry(D[1], (4,))))

    class Msg:
        dataset, src, transfer_id = bad, 0, 1

    assert a.on_receive_dataset(Msg, 0.0) is None
    assert len(a.store) == 0


def test_receive_merges_and_confirms_newest():
    store, sync, cfg = dataset_example()
    ds = determine_transfer_dataset(store, sync, "peer", 20.0, cfg)
    b = HarvestAgent(1, cfg, TimeSeriesStore(1.0))

    class Msg:
        dataset, src, transfer_id = ds, 0, 4

    conf = b.on_receive_dataset(Msg, 20.1)
    assert conf.newest == {D[1]: 17, D[2]: 15, D[3]: 13}
    assert conf.size == MessageSizes().confirmation(3)
    snap = b.store.snapshot()
    assert snap == {D[1]: frozenset({15, 17}), D[2]: frozenset({11, 15}), D[3]: frozenset({12, 13})}
    b.on_receive_dataset(Msg, 20.2)
    assert b.store.snapshot() == snap


def test_message_sizes():
    m = MessageSizes()
    assert m.entry(1) == 16 + 8 + 4 + 1
    assert m.entry(9) == 16 + 8 + 4 + 2
    ds = TransferDataset(1.0, (Entry(D[1], (0, 15)),))
    assert m.dataset(ds) == 64 + 28 + 2
    assert m.confirmation(4) == 64 + 96


def test_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig(cycle_period=5.0, confirm_timeout=6.0).validate()
    with pytest.raises(ValueError):
        ProtocolConfig(max_hop_distance=0).validate()
    with pytest.raises(ValueError):
        ProtocolConfig(aging_limit=0).validate()


# -- runner on static networks ----------------------------------------------------------

def test_no_candidates_means_no_messages():
    topo = static_topology([(0, 0), (10, 0)], radio_range=1.0)
    agents, runner, trace = run_gossip(topo, seed_stores(2, 2, 1), cycles=5)
    assert runner.selected == 0 and trace.total_bytes == 0


def test_path_convergence():
    n = 6
    stores = seed_stores(n, 2, 4)
    oracle = union_oracle(stores)
    agents, runner, _ = run_gossip(static_topology(path_points(n)), stores, cycles=(n - 1) * n)
    for a in agents.values():
        assert a.store.snapshot() == oracle


def test_no_overlapping_pending_transfers():
    pts, _ = connected_points(12, 2)
    topo = static_topology(pts, 250.0)
    agents, runner, trace = run_gossip(topo, seed_stores(12, 3, 2), cycles=10, audit=True,
                                       max_peers=None)
    open_ = {}
    events = sorted((r[0], 0 if r[1] == "ack_recv" else 1, r) for r in trace.records
                    if r[1] in ("data_send", "ack_recv", "timeout"))
    for t, _, (_, ev, src, dst, *rest) in events:
        if ev == "data_send":
            assert (src, dst) not in open_, "overlapping pending transfer"
            open_[(src, dst)] = t
        elif ev == "ack_recv":
            open_.pop((dst, src), None)
        else:
            open_.pop((src, dst), None)


class LossyConfirmRunner(GossipRunner):
    """Drops every other confirmation."""

    drop = 0

    def _confirm(self, conf):
        LossyConfirmRunner.drop += 1
        if LossyConfirmRunner.drop % 2:
            return
        super()._confirm(conf)


def _store_after(runner_cls, stores, topo, cycles):
    cfg = ProtocolConfig(max_peers=1, cycle_period=1.0, aging_limit=1e6, transfer_slot_len=1.0,
                         confirm_timeout=1.0)
    world = lossless_world(topo)
    agents = {i: HarvestAgent(i, cfg, s) for i, s in enumerate(stores)}
    runner = runner_cls(world, agents, cfg, random.Random(9), MessageTrace(keep=True))
    runner.start()
    world.run(cycles + 1.0)
    return agents, runner


def test_confirmation_loss_matches_lossless_oracle():
    pts, diam = connected_points(10, 8)
    topo = static_topology(pts, 250.0)
    cycles = diam * 10 * 2
    lossy, lr = _store_after(LossyConfirmRunner, seed_stores(10, 2, 6), topo, cycles)
    clean, _ = _store_after(GossipRunner, seed_stores(10, 2, 6), topo, cycles)
    oracle = union_oracle(seed_stores(10, 2, 6))
    for i in range(10):
        assert lossy[i].store.snapshot() == clean[i].store.snapshot() == oracle
    # lost confirmations forced re-sends, which cost bytes but nothing else
    assert lr.trace.records and any(r[1] == "timeout" for r in lr.trace.records)


def test_alternating_loss_receiver_catches_up():
    # two nodes; every other delivery of node 0's data is lost in transit
    topo = static_topology([(0, 0), (1, 0)])
    cfg = ProtocolConfig(max_peers=1, cycle_period=1.0, aging_limit=1e6, transfer_slot_len=1.0,
                         confirm_timeout=1.0)
    world = lossless_world(topo)
    src, dst = TimeSeriesStore(1.0), TimeSeriesStore(1.0)
    agents = {0: HarvestAgent(0, cfg, src), 1: HarvestAgent(1, cfg, dst)}

    class Alternating(GossipRunner):
        n = 0

        def _deliver(self, msg):
            if msg.src == 0:
                Alternating.n += 1
                if Alternating.n % 2:
                    return
            super()._deliver(msg)

    runner = Alternating(world, agents, cfg, random.Random(2), MessageTrace())
    runner.start()
    for c in range(10):
        src.add_slots(D[1], [c * 3, c * 3 + 1])
        world.run(c + 1.0)
    world.run(12.0)
    assert dst.snapshot() == src.snapshot()


def test_confirmation_dataclass_roundtrip():
    c = Confirmation(1, 2, 3, {D[1]: 4}, 88)
    assert c.newest[D[1]] == 4
