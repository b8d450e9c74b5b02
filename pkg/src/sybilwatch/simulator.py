"""Deterministic synthetic friend-invitation workloads with ground truth.

Generation model
----------------
* Normal accounts exist from t=0; Sybil accounts appear at a uniform time in
  the first half of the run.
* Every account gets a popularity weight ``rank ** -alpha``; ranks are a
  seeded random permutation over *all* accounts, so a few Sybils end up
  popular enough to be hit by other Sybils' untargeted requests.
* Each account sends requests as a Poisson process.  A Sybil picks a uniform
  other Sybil with probability ``sybil_target_sybil_prob`` (intentional),
  otherwise it picks like everyone else, by popularity.
* The receiver answers after ``1 + floor(Exp(mean=1h))`` seconds; acceptance
  depends on (receiver label, sender label).  Requests to oneself, to an
  account that does not exist yet, to a friend, or across a pending pair are
  suppressed and never emitted.  Answers falling after the end of the run are
  not emitted; those requests stay pending.

All randomness of account ``i`` comes from its own substream ``(seed, 0, i)``
laid out as one creation draw followed by five draws per request: gap,
targeting branch, target pick, acceptance, answer delay.  Generation is
therefore independent of the order accounts are processed in.
"""

from __future__ import annotations

import dataclasses
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .events import (
    ACCOUNT_CREATED,
    REQUEST_ACCEPTED,
    REQUEST_REJECTED,
    REQUEST_SENT,
    Event,
    sort_key,
)

DRAWS_PER_REQUEST = 5
MEAN_ANSWER_DELAY_S = 3600.0


class InvalidConfig(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class CalibrationFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_normal: int = 2000
    n_sybil: int = 200
    duration_hours: float = 72.0
    normal_invite_rate: float = 0.05
    sybil_invite_rate: float = 20.0
    accept_prob_normal_from_normal: float = 0.9
    accept_prob_normal_from_sybil: float = 0.2
    sybil_accept_prob: float = 1.0
    sybil_target_sybil_prob: float = 0.0
    popularity_exponent: float = 1.0
    seed: int = 42

    def validate(self) -> "SimConfig":
        for name in ("n_normal", "n_sybil"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise InvalidConfig(name, "must be a non-negative integer")
        if not (self.duration_hours > 0 and math.isfinite(self.duration_hours)):
            raise InvalidConfig("duration_hours", "must be positive and finite")
        for name in ("normal_invite_rate", "sybil_invite_rate", "popularity_exponent"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidConfig(name, "must be non-negative and finite")
        for name in (
            "accept_prob_normal_from_normal",
            "accept_prob_normal_from_sybil",
            "sybil_accept_prob",
            "sybil_target_sybil_prob",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfig(name, "must lie in [0, 1]")
        try:
            rng.check_seed(self.seed)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig("seed", str(exc)) from None
        return self

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class GroundTruth:
    labels: dict = field(default_factory=dict)
    intentional_edges: set = field(default_factory=set)
    accidental_edges: set = field(default_factory=set)

    def sybils(self) -> list:
        return sorted(a for a, lab in self.labels.items() if lab == "sybil")


@dataclass
class Workload:
    events: list
    truth: GroundTruth
    created_at: dict


def account_ids(cfg: SimConfig) -> list:
    n = cfg.n_normal + cfg.n_sybil
    width = max(6, len(str(max(n - 1, 0))))
    return [f"u{i:0{width}d}" for i in range(n)]


def popularity_weights(cfg: SimConfig) -> np.ndarray:
    n = cfg.n_normal + cfg.n_sybil
    ranks = rng.permutation(rng.global_stream(cfg.seed), n) + 1
    return ranks.astype(np.float64) ** (-cfg.popularity_exponent)


def _account_draws(cfg: SimConfig, index: int, sybil: bool):
    """Creation time and raw request draws for one account."""
    stream = rng.account_stream(cfg.seed, index)
    duration_s = cfg.duration_hours * 3600.0
    c = stream.uniform()
    created = int(math.floor(c * duration_s / 2)) if sybil else 0
    rate = cfg.sybil_invite_rate if sybil else cfg.normal_invite_rate
    if rate <= 0:
        return created, np.empty(0), np.empty((0, DRAWS_PER_REQUEST))
    mean_gap = 3600.0 / rate
    expected = rate * (duration_s - created) / 3600.0
    chunk = int(expected * 1.1) + 16
    times, blocks = [], []
    t = float(created)
    while True:
        block = stream.uniforms(chunk * DRAWS_PER_REQUEST).reshape(chunk, DRAWS_PER_REQUEST)
        # running sum seeded with t: ((t + g1) + g2) + ..., same as a scalar loop
        tt = np.cumsum(np.concatenate(([t], rng.exponential(block[:, 0], mean_gap))))[1:]
        keep = int(np.searchsorted(tt, duration_s, side="left"))
        times.append(tt[:keep])
        blocks.append(block[:keep])
        if keep < chunk:
            break
        t = float(tt[-1])
    return created, np.concatenate(times), np.concatenate(blocks)


def _candidate_requests(cfg: SimConfig):
    """All would-be requests as parallel arrays, sorted by (ts, sender, k)."""
    n_normal, n = cfg.n_normal, cfg.n_normal + cfg.n_sybil
    is_sybil = np.zeros(n, dtype=bool)
    is_sybil[n_normal:] = True
    cumulative = np.cumsum(popularity_weights(cfg)) if n else np.zeros(0)

    created = np.zeros(n, dtype=np.int64)
    ts, sender, seq, target, accept, delay, targeted = [], [], [], [], [], [], []
    for i in range(n):
        c, times, draws = _account_draws(cfg, i, bool(is_sybil[i]))
        created[i] = c
        m = len(times)
        if m == 0:
            continue
        pick = rng.weighted_index(draws[:, 2], cumulative)
        aimed = np.zeros(m, dtype=bool)
        if is_sybil[i] and cfg.n_sybil > 1:
            aimed = draws[:, 1] < cfg.sybil_target_sybil_prob
            other = (draws[:, 2] * (cfg.n_sybil - 1)).astype(np.int64)
            other = np.minimum(other, cfg.n_sybil - 2)
            other += other >= (i - n_normal)
            pick = np.where(aimed, n_normal + other, pick)
        ts.append(np.floor(times).astype(np.int64))
        sender.append(np.full(m, i, dtype=np.int64))
        seq.append(np.arange(m, dtype=np.int64))
        target.append(pick.astype(np.int64))
        accept.append(draws[:, 3])
        delay.append(1 + np.floor(rng.exponential(draws[:, 4], MEAN_ANSWER_DELAY_S)).astype(np.int64))
        targeted.append(aimed)

    if not ts:
        empty = np.empty(0, dtype=np.int64)
        return created, is_sybil, (empty, empty, empty, empty, np.empty(0, dtype=bool), empty, np.empty(0, dtype=bool))

    ts, sender, seq, target = map(np.concatenate, (ts, sender, seq, target))
    accept_u, delay, targeted = map(np.concatenate, (accept, delay, targeted))

    prob = np.where(
        is_sybil[target],
        cfg.sybil_accept_prob,
        np.where(is_sybil[sender], cfg.accept_prob_normal_from_sybil, cfg.accept_prob_normal_from_normal),
    )
    accepted = accept_u < prob
    order = np.lexsort((seq, sender, ts))
    cols = (ts, sender, seq, target, accepted, delay, targeted)
    return created, is_sybil, tuple(c[order] for c in cols)


def generate(cfg: SimConfig) -> Workload:
    """Generate the event stream and ground truth for ``cfg``.

    The returned events are in canonical order (see ``events.sort_key``).
    """
    cfg.validate()
    ids = account_ids(cfg)
    created, is_sybil, cols = _candidate_requests(cfg)
    ts_a, sender_a, _, target_a, accepted_a, delay_a, targeted_a = (c.tolist() for c in cols)
    is_sybil_l = is_sybil.tolist()
    created_l = created.tolist()

    truth = GroundTruth()
    events = []
    for i, a in enumerate(ids):
        lab = "sybil" if is_sybil_l[i] else "normal"
        truth.labels[a] = lab
        events.append(Event(ACCOUNT_CREATED, created_l[i], a))

    linked = set()
    pending = set()
    answers = []  # heap of (ts, sender, target, accepted, targeted)
    heappush, heappop = heapq.heappush, heapq.heappop

    def answer(item):
        t, s, r, ok, aimed = item
        pair = (s, r) if s < r else (r, s)
        pending.discard(pair)
        if ok:
            linked.add(pair)
            events.append(Event(REQUEST_ACCEPTED, t, ids[s], ids[r]))
            if is_sybil_l[s] and is_sybil_l[r]:
                key = (ids[pair[0]], ids[pair[1]])
                (truth.intentional_edges if aimed else truth.accidental_edges).add(key)
        else:
            events.append(Event(REQUEST_REJECTED, t, ids[s], ids[r]))

    for j in range(len(ts_a)):
        t = ts_a[j]
        while answers and answers[0][0] <= t:
            answer(heappop(answers))
        s, r = sender_a[j], target_a[j]
        if s == r or created_l[r] > t:
            continue
        pair = (s, r) if s < r else (r, s)
        if pair in linked or pair in pending:
            continue
        pending.add(pair)
        events.append(Event(REQUEST_SENT, t, ids[s], ids[r]))
        heappush(answers, (t + delay_a[j], s, r, accepted_a[j], targeted_a[j]))
    horizon = int(math.ceil(cfg.duration_hours * 3600.0))
    while answers and answers[0][0] < horizon:
        answer(heappop(answers))

    events.sort(key=sort_key)
    return Workload(events, truth, dict(zip(ids, created_l)))


def truth_events(w: Workload) -> list:
    """Ground-truth records: labeled account_created events in id order."""
    return [Event(ACCOUNT_CREATED, w.created_at[a], a, None, w.truth.labels[a]) for a in sorted(w.truth.labels)]


def sybil_isolation(w: Workload) -> float:
    """Fraction of Sybils with no Sybil friend in a generated workload."""
    from .topology import DisjointSet

    sybils = w.truth.sybils()
    if not sybils:
        raise ValueError("workload has no Sybils")
    ds = DisjointSet(sybils)
    for a, b in w.truth.intentional_edges | w.truth.accidental_edges:
        ds.union(a, b)
    return sum(1 for g in ds.groups() if len(g) == 1) / len(sybils)


def calibrate_isolation(
    cfg: SimConfig,
    target_fraction: float,
    tolerance: float = 0.02,
    max_iterations: int = 40,
) -> SimConfig:
    """Adjust ``sybil_target_sybil_prob`` and then ``sybil_invite_rate`` so the
    generated workload isolates ``target_fraction`` of its Sybils.

    More Sybil-Sybil targeting or a higher Sybil rate means fewer isolated
    Sybils.  The targeting probability is bisected first; if its range
    [0, 1] cannot bracket the target, the Sybil rate is scaled by powers of
    two until it does and then bisected on a log scale.  Each probe is one
    full generation run; ``max_iterations`` bounds the number of probes.
    """
    if not 0.0 < target_fraction < 1.0:
        raise ValueError("target_fraction must lie strictly inside (0, 1)")
    cfg.validate()
    if cfg.n_sybil < 2:
        raise CalibrationFailed("need at least two Sybils to form Sybil-Sybil edges")
    if cfg.sybil_accept_prob == 0.0:
        # no Sybil ever accepts, so neither knob can create Sybil-Sybil edges
        cfg = cfg.replace(sybil_accept_prob=1.0)

    probes = 0

    def measure(c: SimConfig) -> float:
        nonlocal probes
        probes += 1
        if probes > max_iterations:
            raise CalibrationFailed(f"no config within ±{tolerance} of {target_fraction} after {max_iterations} probes")
        return sybil_isolation(generate(c))

    def close(v: float) -> bool:
        return abs(v - target_fraction) <= tolerance

    def bisect(make, lo, hi, log=False):
        # make(x) is decreasing in isolation as x grows; f(lo) > target > f(hi)
        while True:
            x = math.sqrt(lo * hi) if log else (lo + hi) / 2
            c = make(x)
            v = measure(c)
            if close(v):
                return c
            if v > target_fraction:
                lo = x
            else:
                hi = x

    def with_pss(p):
        return cfg.replace(sybil_target_sybil_prob=p)

    base = cfg.sybil_invite_rate if cfg.sybil_invite_rate > 0 else 1.0

    def with_rate(p):
        return lambda m: cfg.replace(sybil_target_sybil_prob=p, sybil_invite_rate=base * m)

    current = measure(cfg)
    if close(current):
        return cfg
    p0 = cfg.sybil_target_sybil_prob
    if current > target_fraction:
        if cfg.sybil_invite_rate > 0:
            top = measure(with_pss(1.0))
            if close(top):
                return with_pss(1.0)
            if top < target_fraction:
                return bisect(with_pss, p0, 1.0)
        # even full targeting leaves too many isolated: raise the rate
        make = with_rate(1.0)
        lo, hi = (1.0 if cfg.sybil_invite_rate > 0 else 0.0), 2.0
        while True:
            v = measure(make(hi))
            if close(v):
                return make(hi)
            if v < target_fraction:
                break
            lo, hi = hi, hi * 2
        return bisect(make, max(lo, hi / 2), hi, log=True)

    if p0 > 0:
        bottom = measure(with_pss(0.0))
        if close(bottom):
            return with_pss(0.0)
        if bottom > target_fraction:
            return bisect(with_pss, 0.0, p0)
    make = with_rate(0.0)
    lo, hi = 0.5, 1.0
    while True:
        v = measure(make(lo))
        if close(v):
            return make(lo)
        if v > target_fraction:
            break
        lo, hi = lo / 2, lo
    return bisect(make, lo, hi, log=True)
