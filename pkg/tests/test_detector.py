import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_stream, replay_verdicts
from sybilwatch.detector import (
    EVERY_EVENT,
    GREATER_THAN,
    LESS_THAN,
    ClassifierConfig,
    ConfigError,
    DegenerateTraining,
    StreamDetector,
    ThresholdRule,
    UnknownFeatureName,
    calibrate_thresholds,
    classify,
    process_stream,
)
from sybilwatch.events import ACCOUNT_CREATED, REQUEST_ACCEPTED, REQUEST_SENT, Event
from sybilwatch.features import FEATURE_NAMES, FeatureVector

DEFAULT = ClassifierConfig()


def fv(rate=0.0, ratio=None, incoming=0, clustering=None, sent=0):
    return FeatureVector(rate, ratio, incoming, clustering, sent)


def test_all_default_rules_match():
    v = classify(fv(50.0, 0.1, 0, 0.0), DEFAULT, "a", 7)
    assert v.decision == "sybil"
    assert v.matched_rules == (0, 1, 2, 3)
    assert (v.account, v.at) == ("a", 7)


def test_no_default_rule_matches():
    v = classify(fv(0.05, 0.95, 3, 0.3), DEFAULT, "a", 0)
    assert v.decision == "benign" and v.matched_rules == ()


def test_comparators_are_strict():
    assert 0 not in classify(fv(10.0), DEFAULT, "a", 0).matched_rules
    assert 1 not in classify(fv(ratio=0.5), DEFAULT, "a", 0).matched_rules
    assert 0 in classify(fv(10.000001), DEFAULT, "a", 0).matched_rules


def test_undefined_values_never_match():
    rules = ("outgoing_accept_ratio < 2", "local_clustering < 2")
    cfg = ClassifierConfig(rules, min_matches=1)
    assert classify(fv(), cfg, "a", 0).matched_rules == ()
    assert classify(fv(ratio=1.0, clustering=1.0), cfg, "a", 0).matched_rules == (0, 1)


def test_rule_text_round_trip():
    r = ThresholdRule.parse(" local_clustering<0.05 ")
    assert r == ThresholdRule("local_clustering", LESS_THAN, 0.05)
    assert ThresholdRule.parse(str(r)) == r
    for bad in ("invite_rate >= 3", "invite_rate > x", "> 3"):
        with pytest.raises(ConfigError):
            ThresholdRule.parse(bad)


def test_unknown_feature_rejected_at_load():
    with pytest.raises(UnknownFeatureName):
        ClassifierConfig(("friend_count > 3",), min_matches=1)
    with pytest.raises(UnknownFeatureName):
        ThresholdRule("friend_count", GREATER_THAN, 3)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"min_matches": 0},
        {"min_matches": 5},
        {"rules": ()},
        {"rules": ("invite_rate > 1", "invite_rate > 2"), "min_matches": 1},
        {"evaluation_trigger": "hourly"},
        {"window_seconds": 0},
    ],
)
def test_config_bounds(kwargs):
    with pytest.raises(ConfigError):
        ClassifierConfig(**kwargs)


def test_config_dict_round_trip():
    cfg = ClassifierConfig(("invite_rate > 2.5", "local_clustering < 0.1"), 2, EVERY_EVENT, 600, 3)
    again = ClassifierConfig.from_dict(cfg.to_dict())
    assert again == cfg and again.digest() == cfg.digest()
    assert again.digest() != DEFAULT.digest()


def test_k_of_n_semantics_over_every_match_subset():
    # five rules on five distinct features; each value is chosen to match or not
    rules = (
        ThresholdRule("invite_rate", GREATER_THAN, 1.0),
        ThresholdRule("outgoing_accept_ratio", LESS_THAN, 0.5),
        ThresholdRule("incoming_request_count", LESS_THAN, 2),
        ThresholdRule("local_clustering", LESS_THAN, 0.1),
        ThresholdRule("outgoing_sent_total", GREATER_THAN, 10),
    )
    hit = (2.0, 0.1, 0, 0.0, 20)
    miss = (1.0, 0.5, 2, None, 10)
    for n in range(1, 6):
        for k in range(1, n + 1):
            cfg = ClassifierConfig(rules[:n], k)
            for mask in itertools.product((False, True), repeat=5):
                vals = [hit[i] if mask[i] else miss[i] for i in range(5)]
                v = classify(FeatureVector(*vals), cfg, "a", 0)
                expected = tuple(i for i in range(n) if mask[i])
                assert v.matched_rules == expected
                assert (v.decision == "sybil") == (len(expected) >= k)


feature_vectors = st.builds(
    FeatureVector,
    st.floats(0, 100),
    st.none() | st.floats(0, 1),
    st.integers(0, 50),
    st.none() | st.floats(0, 1),
    st.integers(0, 500),
)


@settings(max_examples=300, deadline=None)
@given(
    feature_vectors,
    st.lists(st.tuples(st.sampled_from(FEATURE_NAMES), st.sampled_from((GREATER_THAN, LESS_THAN)),
                       st.floats(-1, 101)), min_size=1, max_size=6,
             unique_by=lambda r: (r[0], r[1])),
    st.data(),
)
def test_loosening_a_threshold_never_clears_a_sybil(v, raw_rules, data):
    rules = tuple(ThresholdRule(*r) for r in raw_rules)
    k = data.draw(st.integers(1, len(rules)))
    before = classify(v, ClassifierConfig(rules, k), "a", 0)
    i = data.draw(st.integers(0, len(rules) - 1))
    step = data.draw(st.floats(0.001, 50))
    r = rules[i]
    looser = r.threshold - step if r.comparator == GREATER_THAN else r.threshold + step
    changed = rules[:i] + (ThresholdRule(r.feature, r.comparator, looser),) + rules[i + 1:]
    after = classify(v, ClassifierConfig(changed, k), "a", 0)
    assert set(before.matched_rules) <= set(after.matched_rules)
    if before.decision == "sybil":
        assert after.decision == "sybil"


# -- streaming ---------------------------------------------------------------


def test_empty_stream():
    assert process_stream([], DEFAULT) == ([], [])


def test_single_request_is_benign():
    log = [Event(ACCOUNT_CREATED, 0, "a"), Event(ACCOUNT_CREATED, 0, "b"), Event(REQUEST_SENT, 5, "a", "b")]
    verdicts, bans = process_stream(log, DEFAULT)
    assert [(v.account, v.decision) for v in verdicts] == [("a", "benign")]
    assert verdicts[0].features.outgoing_accept_ratio is None
    assert len(verdicts[0].matched_rules) <= 1
    assert bans == []


def spammer_log():
    targets = [f"t{i:02d}" for i in range(30)]
    log = [Event(ACCOUNT_CREATED, 0, u) for u in ["s", *targets]]
    log += [Event(REQUEST_SENT, 10 + i, "s", t) for i, t in enumerate(targets)]
    log += [Event(REQUEST_ACCEPTED, 100, "s", targets[0]), Event(REQUEST_SENT, 200, targets[1], "s")]
    return log


def test_banned_account_is_not_reevaluated():
    cfg = ClassifierConfig(("invite_rate > 5", "outgoing_accept_ratio < 0.5"), 2)
    verdicts, bans = process_stream(spammer_log(), cfg)
    s_verdicts = [v for v in verdicts if v.account == "s"]
    assert s_verdicts[-1].decision == "sybil"
    assert all(v.decision == "benign" for v in s_verdicts[:-1])
    # the fifth request defines the ratio but the rate is exactly 5, so the
    # strict comparator waits for the sixth
    assert bans == [("s", 15)]


def test_counterparty_features_still_update_after_ban():
    cfg = ClassifierConfig(("invite_rate > 5", "outgoing_accept_ratio < 0.5"), 2)
    det = StreamDetector(cfg)
    for e in spammer_log():
        det.process(e)
    assert det.features.snapshot("t00").local_clustering is None
    assert det.features.graph.has_edge("s", "t00")
    assert det.features.snapshot("s").incoming_request_count == 1


def test_every_event_trigger_evaluates_both_endpoints():
    cfg = ClassifierConfig(DEFAULT.rules, 3, EVERY_EVENT)
    log = [Event(ACCOUNT_CREATED, 0, "b"), Event(ACCOUNT_CREATED, 0, "a"), Event(REQUEST_SENT, 1, "b", "a")]
    verdicts, _ = process_stream(log, cfg)
    assert [(v.account, v.at) for v in verdicts] == [("b", 0), ("a", 0), ("a", 1), ("b", 1)]


def test_same_input_same_verdicts():
    log = random_stream(random.Random(3), 3000, n_accounts=25, max_gap=60)
    cfg = ClassifierConfig(("invite_rate > 3", "incoming_request_count < 3", "local_clustering < 0.5"), 2)
    assert process_stream(log, cfg) == process_stream(log, cfg)


def test_streaming_matches_offline_replay(default_workload, calibrated_classifier):
    w, cfg = default_workload, calibrated_classifier
    verdicts, bans = process_stream(w.events, cfg)
    rules = [(r.feature, ">" if r.comparator == GREATER_THAN else "<", r.threshold) for r in cfg.rules]
    oracle = replay_verdicts(w.events, rules, cfg.min_matches, cfg.window_seconds, cfg.min_sent)
    assert [(v.account, v.at, v.decision, v.matched_rules) for v in verdicts] == oracle

    oracle_banned = {u for u, _, d, _ in oracle if d == "sybil"}
    banned = {u for u, _ in bans}
    assert banned == oracle_banned
    pos = [u for u, lab in w.truth.labels.items() if lab == "sybil"]
    neg = [u for u, lab in w.truth.labels.items() if lab == "normal"]
    rates = (sum(u in banned for u in pos) / len(pos), sum(u in banned for u in neg) / len(neg))
    oracle_rates = (sum(u in oracle_banned for u in pos) / len(pos), sum(u in oracle_banned for u in neg) / len(neg))
    assert rates == oracle_rates


# -- calibration -------------------------------------------------------------


def separable_log():
    # every request falls inside the final one-hour window
    sybils = [f"s{i}" for i in range(5)]
    normals = [f"n{i:02d}" for i in range(30)]
    log = [Event(ACCOUNT_CREATED, 0, u) for u in sybils + normals]
    log += [Event(REQUEST_SENT, 100 + i, n, normals[(i + 1) % 30]) for i, n in enumerate(normals)]
    for j, s in enumerate(sybils):
        log += [Event(REQUEST_SENT, 2000 + 50 * i + j, s, normals[i]) for i in range(19 + j)]
    log.sort(key=lambda e: (e.ts, e.src))
    labels = {**{s: "sybil" for s in sybils}, **{n: "normal" for n in normals}}
    return log, labels


def test_calibration_on_separable_data():
    log, labels = separable_log()
    cfg = calibrate_thresholds(log, labels, ["invite_rate"])
    (rule,) = cfg.rules
    assert rule.comparator == GREATER_THAN
    assert 1 < rule.threshold <= 19
    banned = {u for u, _ in process_stream(log, cfg)[1]}
    assert banned == {u for u, lab in labels.items() if lab == "sybil"}


def test_inverted_labels_flip_comparators():
    log, labels = separable_log()
    flipped = {u: "normal" if lab == "sybil" else "sybil" for u, lab in labels.items()}
    a = calibrate_thresholds(log, labels, ["invite_rate", "outgoing_sent_total"])
    b = calibrate_thresholds(log, flipped, ["invite_rate", "outgoing_sent_total"])
    for ra, rb in zip(a.rules, b.rules):
        assert ra.comparator != rb.comparator


def test_calibration_needs_both_labels():
    log, labels = separable_log()
    with pytest.raises(DegenerateTraining):
        calibrate_thresholds(log, {u: "normal" for u in labels})
    with pytest.raises(UnknownFeatureName):
        calibrate_thresholds(log, labels, ["nope"])


def test_calibration_is_deterministic():
    log, labels = separable_log()
    assert calibrate_thresholds(log, labels) == calibrate_thresholds(log, labels)


def test_calibrated_default_workload(training_workload, calibrated_classifier):
    w = training_workload
    _, bans = process_stream(w.events, calibrated_classifier)
    banned = {u for u, _ in bans}
    pos = [u for u, lab in w.truth.labels.items() if lab == "sybil"]
    neg = [u for u, lab in w.truth.labels.items() if lab == "normal"]
    assert sum(u in banned for u in pos) / len(pos) >= 0.99
    assert sum(u in banned for u in neg) / len(neg) <= 0.01
