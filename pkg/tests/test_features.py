import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import batch_features, random_stream
from sybilwatch.events import ACCOUNT_CREATED, REQUEST_ACCEPTED, REQUEST_SENT, Event, MalformedEvent
from sybilwatch.features import FeatureState, OutOfOrderEvent, UnknownAccount, apply_event, snapshot


def created(*ids, t=0):
    return [Event(ACCOUNT_CREATED, t, u) for u in ids]


def feed(events, **kw):
    s = FeatureState(**kw)
    for e in events:
        s.apply_event(e)
    return s


def test_invite_rate_over_window():
    log = created("a", "b", "c", "d")
    log += [Event(REQUEST_SENT, t, "a", d) for t, d in ((0, "b"), (100, "c"), (200, "d"))]
    s = feed(log)
    assert s.snapshot("a", 200).invite_rate == 3.0
    assert s.snapshot("a", 3599).invite_rate == 3.0
    assert s.snapshot("a", 3600).invite_rate == 2.0
    assert s.snapshot("a", 7200).invite_rate == 0.0
    assert s.snapshot("b", 200).incoming_request_count == 1


def test_invite_rate_scales_with_window():
    log = created("a", "b") + [Event(REQUEST_SENT, 10, "a", "b")]
    assert feed(log, window_s=1800).snapshot("a").invite_rate == 2.0


def test_accept_ratio():
    friends = [f"f{i}" for i in range(10)]
    log = created("a", *friends)
    log += [Event(REQUEST_SENT, 1, "a", f) for f in friends]
    log += [Event(REQUEST_ACCEPTED, 2, "a", f) for f in friends[:2]]
    fv = feed(log).snapshot("a")
    assert fv.outgoing_accept_ratio == 0.2
    assert fv.outgoing_sent_total == 10


def test_ratio_undefined_below_min_sent():
    log = created("a", "b", "c", "d", "e")
    log += [Event(REQUEST_SENT, 1, "a", x) for x in "bcde"]
    assert feed(log).snapshot("a").outgoing_accept_ratio is None
    assert feed(log, min_sent=4).snapshot("a").outgoing_accept_ratio == 0.0


def test_fresh_account_zero_state():
    fv = feed(created("a")).snapshot("a")
    assert fv.invite_rate == 0
    assert fv.outgoing_accept_ratio is None
    assert fv.incoming_request_count == 0
    assert fv.local_clustering is None


def test_clustering_closed_triangle():
    log = created("a", "b", "c")
    for s, d in (("a", "b"), ("a", "c"), ("b", "c")):
        log += [Event(REQUEST_SENT, 5, s, d)]
    for s, d in (("a", "b"), ("a", "c"), ("b", "c")):
        log += [Event(REQUEST_ACCEPTED, 6, s, d)]
    assert feed(log).snapshot("a").local_clustering == 1.0


def test_out_of_order_strict_and_lenient():
    log = created("a", "b", t=10)
    strict = feed(log)
    with pytest.raises(OutOfOrderEvent):
        strict.apply_event(Event(REQUEST_SENT, 9, "a", "b"))
    lenient = feed(log, strict=False)
    assert lenient.apply_event(Event(REQUEST_SENT, 9, "a", "b")) is False
    assert lenient.snapshot("a").outgoing_sent_total == 0
    assert lenient.applied == 2


def test_unknown_account():
    s = feed(created("a"))
    with pytest.raises(UnknownAccount):
        s.apply_event(Event(REQUEST_SENT, 1, "a", "ghost"))
    with pytest.raises(UnknownAccount):
        s.snapshot("ghost")
    assert s.snapshot("a").outgoing_sent_total == 0


def test_answer_needs_pending_request():
    s = feed(created("a", "b"))
    with pytest.raises(MalformedEvent):
        s.apply_event(Event(REQUEST_ACCEPTED, 1, "a", "b"))


def test_snapshot_cannot_look_back():
    s = feed(created("a", t=50))
    with pytest.raises(ValueError):
        s.snapshot("a", 49)


def test_module_level_wrappers():
    s = FeatureState()
    assert apply_event(s, Event(ACCOUNT_CREATED, 0, "a")) is s
    assert snapshot(s, "a") == s.snapshot("a")


def check_against_batch(log, rnd, window_s=3600, min_sent=5, probes=3):
    s = FeatureState(window_s, min_sent)
    for i, e in enumerate(log):
        s.apply_event(e)
        if rnd.random() > 0.15 and i != len(log) - 1:
            continue
        prefix = log[: i + 1]
        now = e.ts + rnd.choice((0, 0, rnd.randint(0, 2 * window_s)))
        accounts = s.accounts()
        for u in rnd.sample(accounts, min(probes, len(accounts))):
            assert s.snapshot(u, now).to_dict() == batch_features(prefix, u, now, window_s, min_sent), (i, u, now)


def test_randomized_stream_matches_batch_recomputation():
    rnd = random.Random(500)
    log = random_stream(rnd, 500, n_accounts=12)
    check_against_batch(log, rnd, probes=12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 300), st.sampled_from([60, 600, 3600]), st.integers(1, 6))
def test_incremental_equals_batch(seed, n, window_s, min_sent):
    rnd = random.Random(seed)
    log = random_stream(rnd, n, n_accounts=rnd.randint(2, 15), max_gap=window_s)
    check_against_batch(log, rnd, window_s, min_sent)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_invite_rate_non_increasing_without_new_requests(seed):
    rnd = random.Random(seed)
    s = feed(random_stream(rnd, 200, n_accounts=8, max_gap=300))
    for u in s.accounts():
        rates = [s.snapshot(u, s.last_ts + dt).invite_rate for dt in range(0, 4000, 97)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))
        assert all(r >= 0 for r in rates)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ratio_bounds(seed):
    s = feed(random_stream(random.Random(seed), 300, n_accounts=10))
    for u in s.accounts():
        assert s.accepted[u] <= s.sent[u]
        r = s.snapshot(u).outgoing_accept_ratio
        assert r is None or 0.0 <= r <= 1.0
        assert (r is None) == (s.sent[u] < s.min_sent)


def test_window_rings_hold_one_window():
    # rings are trimmed when the account is touched, so each spans at most W
    s = feed(random_stream(random.Random(1), 2000, n_accounts=20, max_gap=2000))
    for u in s.accounts():
        for ring in (s.out_times[u], s.in_times[u]):
            if ring:
                assert ring[-1] - s.window_s < ring[0] <= ring[-1] <= s.last_ts
                assert list(ring) == sorted(ring)


def test_min_sent_must_be_positive():
    with pytest.raises(ValueError):
        FeatureState(min_sent=0)
