import pytest
from hypothesis import given
from hypothesis import strategies as st

from corpussync import policy as pol
from corpussync.core import CampaignConfig, FuzzerClass as C, LowUtilityNotice, TestCase
from corpussync.policy import (
    AmmuinaState,
    PolicyContext,
    UtilityDirectory,
    baseline_sync,
    build_cluster_plan,
    check_stagnation,
    handle_low_utility,
    inter_master_sync,
    record_evaluation,
    route_baseline,
    route_dynamic,
    route_hierarchical,
    route_selective,
    run_ammuina_round,
)
from corpussync.transport import InMemoryTransport

BLOCKED_8 = [C.ASAN, C.ASAN, C.CMPLOG, C.CMPLOG, C.LAF, C.LAF, C.OTHER, C.OTHER]


def ctx(me=0, n=4, now=0, classes=None):
    classes = tuple(classes or [C.OTHER] * n)
    return PolicyContext(me, n, classes[me], classes, now)


def case(payload=b"p", origin=0):
    return TestCase(payload, origin, 0)


# selective


def test_selective_single_node_never_sends():
    for p in [b"", b"a", b"zzz"]:
        assert route_selective(case(p), ctx(0, 1)) == []


def test_selective_modulo(monkeypatch):
    monkeypatch.setattr(pol, "hash_payload", lambda payload: 10)
    assert route_selective(case(), ctx(0, 4)) == [2]
    assert route_selective(case(), ctx(2, 4)) == []


def test_selective_empty_payload():
    # 0xEF46DB3751D8E999 mod 4 == 1
    assert route_selective(case(b""), ctx(0, 4)) == [1]


# dynamic


def directory(owner=0, n=4, scores=None, interested=None, u_min=-5):
    d = UtilityDirectory.fresh(owner, n, u_min)
    d.scores.update(scores or {})
    if interested is not None:
        d.interested = set(interested)
    return d


def test_dynamic_argmax_lowest_rank_tie():
    d = directory(scores={1: 3, 2: 5, 3: 5})
    assert route_dynamic(case(), d, ctx()) == [2]


def test_dynamic_empty_interested_falls_back_to_hash():
    d = directory(interested=set())
    c = case(b"")
    assert route_dynamic(c, d, ctx()) == route_selective(c, ctx()) == [1]


def test_dynamic_negative_scores():
    d = directory(scores={1: -2, 3: 0}, interested={1, 3})
    assert route_dynamic(case(), d, ctx()) == [3]


def test_dynamic_exclusion_picks_next_best():
    d = directory(scores={1: 9, 2: 4, 3: 1})
    assert route_dynamic(case(), d, ctx(), exclude=frozenset({1})) == [2]
    assert route_dynamic(case(), d, ctx(), exclude=frozenset({1, 2, 3})) == []


@given(
    st.dictionaries(st.integers(1, 6), st.integers(-20, 20)),
    st.sets(st.integers(1, 6), min_size=1),
    st.integers(-50, 50),
)
def test_dynamic_argmax_shift_invariance(scores, interested, shift):
    c = ctx(0, 7)
    full = {r: scores.get(r, 0) for r in range(1, 7)}
    d1 = directory(0, 7, full, interested)
    d2 = directory(0, 7, {r: s + shift for r, s in full.items()}, interested)
    assert route_dynamic(case(), d1, c) == route_dynamic(case(), d2, c)


def test_record_useful():
    d = directory()
    assert record_evaluation(d, 1, True) is None
    assert d.score(1) == 1


def test_record_crossing_emits_notice():
    d = directory(scores={1: -5})
    notice = record_evaluation(d, 1, False)
    assert notice == LowUtilityNotice(0)
    assert d.score(1) == -6


def test_record_below_threshold_no_second_notice():
    d = directory(scores={1: -6})
    assert record_evaluation(d, 1, False) is None
    assert d.score(1) == -7


def test_record_scripted_sequence():
    d = directory()
    notices = [record_evaluation(d, 2, False) for _ in range(10)]
    assert [i for i, n in enumerate(notices) if n is not None] == [5]  # the 6th input
    # climbing back above the threshold re-arms the notice
    for _ in range(6):
        record_evaluation(d, 2, True)
    assert d.score(2) == -4
    assert record_evaluation(d, 2, False) is None  # -5, still >= u_min
    assert record_evaluation(d, 2, False) is not None


def test_record_rejects_self():
    with pytest.raises(ValueError):
        record_evaluation(directory(), 0, True)


def test_handle_low_utility():
    d = directory(interested={1, 2, 3})
    handle_low_utility(d, 2)
    assert d.interested == {1, 3}
    handle_low_utility(d, 2)
    assert d.interested == {1, 3}
    for r in (1, 3):
        handle_low_utility(d, r)
    assert d.interested == set()
    assert route_dynamic(case(b""), d, ctx()) == [1]


# hierarchical


def test_cluster_master_lowest_rank():
    classes = [C.OTHER, C.ASAN, C.CMPLOG, C.LAF, C.OTHER, C.CMPLOG, C.ASAN, C.CMPLOG]
    plan = build_cluster_plan(classes)
    assert plan.clusters[C.CMPLOG] == (2, 5, 7)
    assert plan.master[C.CMPLOG] == 2


def test_cluster_singleton_is_own_master():
    plan = build_cluster_plan([C.ASAN] * 4 + [C.LAF])
    assert plan.master[C.LAF] == 4
    assert plan.is_master(4)


def test_cluster_plan_eight_nodes():
    plan = build_cluster_plan(BLOCKED_8)
    assert len(plan.clusters) == 4
    assert set(plan.master.values()) == {0, 2, 4, 6}
    members = sorted(r for ranks in plan.clusters.values() for r in ranks)
    assert members == list(range(8))


def test_secondary_routes_to_master():
    plan = build_cluster_plan([C.ASAN, C.ASAN, C.CMPLOG, C.CMPLOG, C.CMPLOG, C.CMPLOG])
    buf = []
    assert route_hierarchical(case(), plan, ctx(5, 6), buf) == [2]
    assert buf == []


def test_master_buffers_and_broadcasts_at_boundary():
    plan = build_cluster_plan(BLOCKED_8)
    buf = []
    for i in range(3):
        assert route_hierarchical(case(bytes([i])), plan, ctx(0, 8), buf) == []
    assert len(buf) == 3
    assert inter_master_sync(plan, ctx(0, 8, now=45), buf, 30) == []
    sends = inter_master_sync(plan, ctx(0, 8, now=60), buf, 30)
    assert len(sends) == 9
    assert {d for d, _ in sends} == {2, 4, 6}
    assert buf == []
    assert inter_master_sync(plan, ctx(0, 8, now=90), buf, 30) == []


def test_master_does_not_restage_peer_master_cases():
    plan = build_cluster_plan(BLOCKED_8)
    buf = []
    route_hierarchical(case(origin=3), plan, ctx(2, 8), buf, sender=3)  # own secondary
    route_hierarchical(case(b"q", origin=4), plan, ctx(2, 8), buf, sender=4)  # peer master
    assert [c.origin for c in buf] == [3]


def test_inter_master_utility_filter():
    plan = build_cluster_plan(BLOCKED_8)
    d = directory(0, 8, interested={2, 6})
    buf = [case()]
    sends = inter_master_sync(plan, ctx(0, 8, now=30), buf, 30, d)
    assert sorted(dest for dest, _ in sends) == [2, 6]


# ammuina


def amm_cfg(**kw):
    base = dict(t_inc=5, t_time=600, ammuina_cooldown=300)
    base.update(kw)
    return CampaignConfig(**base)


def test_stagnation_triggers():
    st_ = AmmuinaState(last_progress_tick=1000)
    assert check_stagnation(st_, 2, 1700, amm_cfg())


def test_stagnation_not_long_enough():
    st_ = AmmuinaState(last_progress_tick=1000)
    assert not check_stagnation(st_, 2, 1500, amm_cfg())


def test_progress_resets_clock():
    st_ = AmmuinaState(last_progress_tick=1000)
    assert not check_stagnation(st_, 10, 1500, amm_cfg())
    assert st_.last_progress_tick == 1500


def test_cooldown_blocks_trigger():
    st_ = AmmuinaState(last_progress_tick=0, last_round_tick=1500)
    assert not check_stagnation(st_, 0, 1700, amm_cfg())
    assert check_stagnation(st_, 0, 1800, amm_cfg())


def test_ammuina_cap_newest_first():
    cases = [case(bytes([i])) for i in range(5)]
    contrib, _ = run_ammuina_round([cases, []], 2, InMemoryTransport(2), 0)
    assert contrib[0] == [cases[4], cases[3]]


def test_ammuina_empty_node_still_receives():
    a = [case(b"a", 0)]
    contrib, got = run_ammuina_round([a, []], 16, InMemoryTransport(2), 0)
    assert contrib[1] == []
    assert got[1] == a


def test_ammuina_four_nodes_three_foreign_each():
    new = [[case(bytes([i]), i)] for i in range(4)]
    _, got = run_ammuina_round(new, 16, InMemoryTransport(4), 0)
    assert [len(g) for g in got] == [3, 3, 3, 3]
    assert all(c.origin != i for i, g in enumerate(got) for c in g)


# baseline


def test_baseline_broadcast_at_boundary():
    buf = []
    for i in range(4):
        assert route_baseline(case(bytes([i])), buf) == []
    assert baseline_sync(ctx(1, 3, now=100), buf, 120) == []
    sends = baseline_sync(ctx(1, 3, now=240), buf, 120)
    assert len(sends) == 8
    assert {d for d, _ in sends} == {0, 2}


def test_baseline_single_node_never_sends():
    buf = [case()]
    assert baseline_sync(ctx(0, 1, now=120), buf, 120) == []


def test_make_policy_kinds():
    for kind in ["none", "selective", "dynamic", "hierarchical", "baseline-periodic"]:
        cfg = CampaignConfig(n_nodes=4, policy=kind)
        assert pol.make_policy(cfg, 0).kind.value == kind
