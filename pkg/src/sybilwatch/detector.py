"""k-of-n threshold-rule classifier over invitation features."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from time import perf_counter_ns
from typing import Iterable, Optional, Sequence

import numpy as np

from .events import ACCOUNT_CREATED, REQUEST_SENT, Event
from .features import DEFAULT_MIN_SENT, DEFAULT_WINDOW_S, FEATURE_NAMES, FeatureState, FeatureVector

GREATER_THAN = "greater_than"
LESS_THAN = "less_than"
COMPARATORS = (GREATER_THAN, LESS_THAN)
_SYMBOLS = {GREATER_THAN: ">", LESS_THAN: "<"}

EVERY_EVENT = "every_event"
ON_REQUEST_SENT_ONLY = "on_request_sent_only"
TRIGGERS = (EVERY_EVENT, ON_REQUEST_SENT_ONLY)


class ConfigError(ValueError):
    pass


class UnknownFeatureName(ConfigError):
    pass


class DegenerateTraining(ValueError):
    pass


@dataclass(frozen=True)
class ThresholdRule:
    feature: str
    comparator: str
    threshold: float

    def __post_init__(self):
        if self.feature not in FEATURE_NAMES:
            raise UnknownFeatureName(f"no feature named {self.feature!r}")
        if self.comparator not in COMPARATORS:
            raise ConfigError(f"unknown comparator {self.comparator!r}")

    def matches(self, fv: FeatureVector) -> bool:
        x = getattr(fv, self.feature)
        if x is None:
            return False
        return x > self.threshold if self.comparator == GREATER_THAN else x < self.threshold

    def __str__(self):
        return f"{self.feature} {_SYMBOLS[self.comparator]} {self.threshold!r}"

    @classmethod
    def parse(cls, text: str) -> "ThresholdRule":
        """Parse ``"invite_rate > 10"`` style rule text."""
        m = re.fullmatch(r"\s*([A-Za-z_]\w*)\s*([<>])\s*(\S+)\s*", text)
        if not m:
            raise ConfigError(f"cannot parse rule {text!r}")
        name, sym, value = m.groups()
        try:
            thr = float(value)
        except ValueError:
            raise ConfigError(f"bad threshold in rule {text!r}") from None
        return cls(name, GREATER_THAN if sym == ">" else LESS_THAN, thr)


DEFAULT_RULES = (
    ThresholdRule("invite_rate", GREATER_THAN, 10.0),
    ThresholdRule("outgoing_accept_ratio", LESS_THAN, 0.5),
    ThresholdRule("incoming_request_count", LESS_THAN, 2.0),
    ThresholdRule("local_clustering", LESS_THAN, 0.05),
)


@dataclass(frozen=True)
class ClassifierConfig:
    rules: tuple = DEFAULT_RULES
    min_matches: int = 3
    evaluation_trigger: str = ON_REQUEST_SENT_ONLY
    window_seconds: int = DEFAULT_WINDOW_S
    min_sent: int = DEFAULT_MIN_SENT
    _compiled: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rules = tuple(r if isinstance(r, ThresholdRule) else ThresholdRule.parse(r) for r in self.rules)
        object.__setattr__(self, "rules", rules)
        if not rules:
            raise ConfigError("at least one rule is required")
        if not 1 <= self.min_matches <= len(rules):
            raise ConfigError(f"min_matches must lie in [1, {len(rules)}]")
        seen = set()
        for r in rules:
            key = (r.feature, r.comparator)
            if key in seen:
                raise ConfigError(f"duplicate rule for {key}")
            seen.add(key)
        if self.evaluation_trigger not in TRIGGERS:
            raise ConfigError(f"unknown evaluation trigger {self.evaluation_trigger!r}")
        if self.window_seconds <= 0:
            raise ConfigError("window_seconds must be positive")
        if self.min_sent < 1:
            raise ConfigError("min_sent must be at least 1")
        compiled = tuple((r.feature, r.comparator == GREATER_THAN, float(r.threshold)) for r in rules)
        object.__setattr__(self, "_compiled", compiled)

    def to_dict(self) -> dict:
        return {
            "rules": [str(r) for r in self.rules],
            "min_matches": self.min_matches,
            "evaluation_trigger": self.evaluation_trigger,
            "window_seconds": self.window_seconds,
            "min_sent": self.min_sent,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierConfig":
        known = {"rules", "min_matches", "evaluation_trigger", "window_seconds", "min_sent"}
        return cls(**{k: v for k, v in d.items() if k in known})

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class Verdict:
    account: str
    decision: str
    matched_rules: tuple
    features: FeatureVector
    at: int

    @property
    def is_sybil(self) -> bool:
        return self.decision == "sybil"

    def to_dict(self) -> dict:
        return {
            "account": self.account,
            "at": self.at,
            "decision": self.decision,
            "matched_rules": list(self.matched_rules),
            "features": self.features.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Verdict":
        return cls(d["account"], d["decision"], tuple(d["matched_rules"]), FeatureVector(**d["features"]), d["at"])


def classify(fv: FeatureVector, cfg: ClassifierConfig, u: str, t: int) -> Verdict:
    matched = []
    for i, (name, gt, thr) in enumerate(cfg._compiled):
        x = getattr(fv, name)
        if x is not None and (x > thr if gt else x < thr):
            matched.append(i)
    decision = "sybil" if len(matched) >= cfg.min_matches else "benign"
    return Verdict(u, decision, tuple(matched), fv, t)


class StreamDetector:
    """Feature state plus ban bookkeeping for an in-order event stream."""

    def __init__(self, cfg: ClassifierConfig, strict: bool = True):
        self.cfg = cfg
        self.features = FeatureState(cfg.window_seconds, cfg.min_sent, strict)
        self.banned: dict[str, int] = {}
        self.latest: dict[str, Verdict] = {}
        self.n_sybil_verdicts = 0
        self.n_benign_verdicts = 0
        self.classify_calls = 0
        self.classify_ns = 0

    def _evaluate(self, u: str, t: int) -> Verdict:
        fv = self.features.snapshot(u, t)
        t0 = perf_counter_ns()
        v = classify(fv, self.cfg, u, t)
        self.classify_ns += perf_counter_ns() - t0
        self.classify_calls += 1
        self.latest[u] = v
        if v.decision == "sybil":
            self.n_sybil_verdicts += 1
            self.banned[u] = t
        else:
            self.n_benign_verdicts += 1
        return v

    def process(self, e: Event) -> list:
        """Apply ``e`` and return the verdicts it triggers (possibly none)."""
        if not self.features.apply_event(e):
            return []
        if self.cfg.evaluation_trigger == ON_REQUEST_SENT_ONLY:
            if e.type != REQUEST_SENT or e.src in self.banned:
                return []
            return [self._evaluate(e.src, e.ts)]
        involved = [e.src] if e.type == ACCOUNT_CREATED else sorted((e.src, e.dst))
        return [self._evaluate(u, e.ts) for u in involved if u not in self.banned]

    def ban_list(self) -> list:
        """(account, first-flagged ts) in flagging order."""
        return list(self.banned.items())


def process_stream(events: Iterable[Event], cfg: ClassifierConfig, strict: bool = True):
    det = StreamDetector(cfg, strict)
    verdicts = []
    for e in events:
        verdicts.extend(det.process(e))
    return verdicts, det.ban_list()


# -- calibration -----------------------------------------------------------


def _final_features(events: Sequence[Event], window_s: int, min_sent: int) -> tuple:
    st = FeatureState(window_s, min_sent)
    for e in events:
        st.apply_event(e)
    return st, {u: st.snapshot(u) for u in st.accounts()}


def _best_threshold(values: np.ndarray, defined: np.ndarray, is_sybil: np.ndarray):
    """Best (J, comparator, threshold) for one feature.

    Thresholds sweep the midpoints between consecutive distinct observed
    values plus one point beyond each end; J = TPR - FPR.  Undefined values
    never match.  Ties keep the first candidate (greater_than first, then
    ascending threshold).
    """
    n_pos = int(is_sybil.sum())
    n_neg = len(is_sybil) - n_pos
    v = values[defined]
    pos = is_sybil[defined]
    if len(v) == 0:
        return (0.0, GREATER_THAN, 0.0)
    uniq, inverse = np.unique(v, return_inverse=True)
    pos_at = np.bincount(inverse, weights=pos, minlength=len(uniq))
    neg_at = np.bincount(inverse, weights=~pos, minlength=len(uniq))
    # candidate c sits just below uniq[c] (c = 0..m-1) or above everything (c = m)
    cuts = np.concatenate(([uniq[0] - 1.0], (uniq[:-1] + uniq[1:]) / 2, [uniq[-1] + 1.0]))
    below_pos = np.concatenate(([0.0], np.cumsum(pos_at)))
    below_neg = np.concatenate(([0.0], np.cumsum(neg_at)))
    best = None
    for comparator in COMPARATORS:
        if comparator == GREATER_THAN:
            tp, fp = below_pos[-1] - below_pos, below_neg[-1] - below_neg
        else:
            tp, fp = below_pos, below_neg
        j = tp / n_pos - fp / n_neg
        c0 = c1 = int(np.argmax(j))
        while c1 + 1 < len(j) and j[c1 + 1] == j[c0]:
            c1 += 1
        # centre of the first optimal plateau: widest margin on both sides
        lo = uniq[c0 - 1] if c0 > 0 else cuts[0]
        hi = uniq[c1] if c1 < len(uniq) else cuts[-1]
        if best is None or j[c0] > best[0]:
            best = (float(j[c0]), comparator, float((lo + hi) / 2))
    return best


def stream_rates(events: Sequence[Event], labels: dict, cfg: ClassifierConfig) -> tuple:
    """(recall, FPR) of the bans ``cfg`` issues when replaying ``events``."""
    _, bans = process_stream(events, cfg)
    banned = {a for a, _ in bans}
    pos = [a for a, lab in labels.items() if lab == "sybil"]
    neg = [a for a, lab in labels.items() if lab == "normal"]
    recall = sum(a in banned for a in pos) / len(pos)
    fpr = sum(a in banned for a in neg) / len(neg)
    return recall, fpr


def calibrate_thresholds(
    events: Sequence[Event],
    labels: dict,
    template: Sequence[str] = tuple(r.feature for r in DEFAULT_RULES),
    window_seconds: int = DEFAULT_WINDOW_S,
    min_sent: int = DEFAULT_MIN_SENT,
    max_fpr: float = 0.01,
    evaluation_trigger: str = ON_REQUEST_SENT_ONLY,
) -> ClassifierConfig:
    """Fit one threshold per template feature on final-state features.

    ``k`` is the smallest rule count whose bans, when the training stream is
    replayed through the detector, keep FPR within ``max_fpr``; among values
    of ``k`` reaching the same recall the larger wins.
    """
    for name in template:
        if name not in FEATURE_NAMES:
            raise UnknownFeatureName(f"no feature named {name!r}")
    _, fvs = _final_features(events, window_seconds, min_sent)
    fvs = {u: fv for u, fv in fvs.items() if labels.get(u) in ("sybil", "normal")}
    train_labels = {u: labels[u] for u in fvs}
    is_sybil = np.array([labels[u] == "sybil" for u in fvs], dtype=bool)
    if is_sybil.all() or not is_sybil.any():
        raise DegenerateTraining("training data needs at least one account of each label")

    rules = []
    for name in template:
        raw = [getattr(fv, name) for fv in fvs.values()]
        defined = np.array([x is not None for x in raw], dtype=bool)
        values = np.array([0.0 if x is None else float(x) for x in raw])
        _, comparator, thr = _best_threshold(values, defined, is_sybil)
        rules.append(ThresholdRule(name, comparator, thr))

    best = None
    for k in range(1, len(rules) + 1):
        cfg = ClassifierConfig(tuple(rules), k, evaluation_trigger, window_seconds, min_sent)
        recall, fpr = stream_rates(events, train_labels, cfg)
        ok = fpr <= max_fpr
        # feasible first, then recall, then (for infeasible) lower FPR; ties -> larger k
        score = (ok, recall if ok else -fpr)
        if best is None or score >= best[0]:
            best = (score, cfg)
    return best[1]
