"""Turning familiarity scores into dataset edits.

Three sampling strategies pick which most-familiar samples leave and which
least-familiar samples act as exemplars; a metadata-matched assignment then
draws replacements from a held-out candidate pool, preserving sample-size
parity. The review queue covers the debugging path: human triage of the
least-familiar tail into noisy vs rare.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ResampleError
from .familiarity import FamiliarityScores
from .monitor import SampleRecord

EXACT_MATCH_LIMIT = 512 * 512

STRATEGY_KINDS = ("topk_swap", "window_most", "window_both")
VERDICTS = ("noisy", "rare", "ok", "undecided")


@dataclass(frozen=True)
class SamplingStrategy:
    """How to pick removals and exemplars from the score distribution.

    kind:
      topk_swap    strict top/bottom k fraction on both sides.
      window_most  removals sampled from a widened (k+i) most-familiar window.
      window_both  both sides sampled from widened windows.
    """

    kind: str = "topk_swap"
    k: float = 0.001
    i: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ResampleError("bad-strategy", f"unknown strategy kind {self.kind!r}")
        if not (0 < self.k < 1):
            raise ResampleError("bad-strategy", f"fraction k must be in (0,1), got {self.k}")
        if not (0 <= self.i < 1):
            raise ResampleError("bad-strategy", f"window extension i must be in [0,1), got {self.i}")
        if self.k + self.i >= 1:
            raise ResampleError("bad-strategy", f"k + i must be < 1, got {self.k + self.i}")
        if self.kind == "topk_swap" and self.i != 0:
            raise ResampleError("bad-strategy", "topk_swap requires i = 0")


@dataclass(frozen=True)
class ResamplePlan:
    remove_ids: tuple[str, ...]
    add_ids: tuple[str, ...]
    pairing: tuple[tuple[str, str, float], ...]  # (exemplar id, matched pool id, cost)
    strategy: SamplingStrategy

    def __post_init__(self):
        if len(self.remove_ids) != len(self.add_ids):
            raise ResampleError("parity", "remove and add lists must have equal length")
        if len(set(self.remove_ids)) != len(self.remove_ids) or len(set(self.add_ids)) != len(self.add_ids):
            raise ResampleError("duplicate-id", "remove/add lists must not repeat ids")
        if set(self.remove_ids) & set(self.add_ids):
            raise ResampleError("overlap", "remove and add lists must be disjoint")


def _ranked(scores: FamiliarityScores, side: str) -> list[str]:
    if side == "most":
        return [sid for sid, _ in sorted(scores.entries, key=lambda e: (-e[1], e[0]))]
    return [sid for sid, _ in sorted(scores.entries, key=lambda e: (e[1], e[0]))]


def _select(scores: FamiliarityScores, strategy: SamplingStrategy, side: str, windowed: bool) -> list[str]:
    n = scores.n
    if n == 0:
        raise ResampleError("empty-scores", "no scores to select from")
    take = math.floor(strategy.k * n)
    if take == 0:
        raise ResampleError(
            "fraction-too-small",
            f"k={strategy.k} selects 0 of {n} samples; increase k or collect more data",
        )
    ranked = _ranked(scores, side)
    if not windowed:
        return ranked[:take]
    window = ranked[: math.floor((strategy.k + strategy.i) * n)]
    rng = np.random.default_rng(strategy.seed)
    chosen = set(rng.choice(len(window), size=take, replace=False).tolist())
    return [sid for idx, sid in enumerate(window) if idx in chosen]


def select_removals(scores: FamiliarityScores, strategy: SamplingStrategy) -> list[str]:
    """Most-familiar ids to remove, ordered most familiar first."""
    windowed = strategy.kind in ("window_most", "window_both")
    return _select(scores, strategy, "most", windowed)


def select_exemplars(scores: FamiliarityScores, strategy: SamplingStrategy) -> list[str]:
    """Least-familiar ids whose metadata guides replacement matching."""
    windowed = strategy.kind == "window_both"
    return _select(scores, strategy, "least", windowed)


def _cost(e: SampleRecord, p: SampleRecord, weights: dict[str, float]) -> float:
    return math.fsum(
        w for dim, w in weights.items() if e.values.get(dim, "") != p.values.get(dim, "")
    )


def match_candidates(
    exemplars: list[SampleRecord],
    pool: list[SampleRecord],
    weights: dict[str, float],
) -> list[tuple[str, str, float]]:
    """Minimum-cost one-to-one pairing of exemplars to pool records.

    Cost is a weighted Hamming mismatch over metadata dimensions. Exact
    assignment up to EXACT_MATCH_LIMIT cost-matrix entries, greedy
    nearest-first beyond; each pool id is used at most once and ties break by
    id lexicographic order in both regimes.
    """
    if any(w < 0 for w in weights.values()):
        raise ResampleError("negative-weight", "matching weights must be non-negative")
    if len(pool) < len(exemplars):
        raise ResampleError(
            "pool-exhausted", f"pool has {len(pool)} records for {len(exemplars)} exemplars"
        )
    if not exemplars:
        return []
    exemplars = sorted(exemplars, key=lambda r: r.id)
    pool = sorted(pool, key=lambda r: r.id)
    ne, np_ = len(exemplars), len(pool)
    if ne * np_ <= EXACT_MATCH_LIMIT:
        cost = np.array([[_cost(e, p, weights) for p in pool] for e in exemplars])
        base_rows, base_cols = linear_sum_assignment(cost)
        optimum = float(cost[base_rows, base_cols].sum())
        # prefer the lexicographically-first assignment among equal-cost
        # optima: tiny index perturbation, kept only if it stays optimal
        eps = max(1e-12, optimum * 1e-12) / max(ne * np_, 1)
        # earlier exemplars get first pick among equal-cost pool ids
        tie = np.outer((1.0 / (np_ + 1)) ** np.arange(ne), np.arange(np_)) * eps
        rows, cols = linear_sum_assignment(cost + tie)
        if float(cost[rows, cols].sum()) > optimum + 1e-9:
            rows, cols = base_rows, base_cols
        pairs = [(exemplars[r].id, pool[c].id, float(cost[r, c])) for r, c in zip(rows, cols)]
        return sorted(pairs, key=lambda t: t[0])
    used: set[int] = set()
    pairs = []
    for e in exemplars:
        best = None
        for idx, p in enumerate(pool):
            if idx in used:
                continue
            c = _cost(e, p, weights)
            if best is None or c < best[0]:
                best = (c, idx)
        used.add(best[1])
        pairs.append((e.id, pool[best[1]].id, best[0]))
    return pairs


@dataclass(frozen=True)
class DatasetVersion:
    """An immutable id set; apply_plan produces the next version."""

    version: int
    ids: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise ResampleError("duplicate-id", "dataset ids must be unique")


def build_plan(
    train: DatasetVersion,
    scores: FamiliarityScores,
    pool: list[SampleRecord],
    strategy: SamplingStrategy,
    weights: dict[str, float],
    records_by_id: dict[str, SampleRecord],
) -> ResamplePlan:
    """Full substitution procedure: removals, exemplars, matched additions.

    Deterministic for identical inputs and seed; |remove| = |add| always.
    """
    score_ids = {sid for sid, _ in scores.entries}
    missing = set(train.ids) - score_ids
    if missing:
        raise ResampleError("scores-incomplete", f"{len(missing)} training ids lack scores")
    pool_ids = {p.id for p in pool}
    if pool_ids & set(train.ids):
        raise ResampleError("pool-overlap", "candidate pool must be disjoint from the training set")
    if not pool:
        raise ResampleError("pool-exhausted", "candidate pool is empty")
    removals = select_removals(scores, strategy)
    exemplars = select_exemplars(scores, strategy)
    exemplar_records = []
    for sid in exemplars:
        if sid not in records_by_id:
            raise ResampleError("unknown-id", f"no metadata record for exemplar {sid!r}")
        exemplar_records.append(records_by_id[sid])
    pairing = match_candidates(exemplar_records, pool, weights)
    additions = [pid for _, pid, _ in pairing]
    return ResamplePlan(
        remove_ids=tuple(removals),
        add_ids=tuple(additions),
        pairing=tuple(pairing),
        strategy=strategy,
    )


def apply_plan(train: DatasetVersion, plan: ResamplePlan) -> DatasetVersion:
    """New dataset version with removals out and additions in; same size."""
    current = set(train.ids)
    stale_removes = [i for i in plan.remove_ids if i not in current]
    stale_adds = [i for i in plan.add_ids if i in current]
    if stale_removes or stale_adds:
        raise ResampleError(
            "stale-plan",
            f"{len(stale_removes)} remove ids absent, {len(stale_adds)} add ids already present",
        )
    new_ids = tuple(i for i in train.ids if i not in set(plan.remove_ids)) + plan.add_ids
    return DatasetVersion(version=train.version + 1, ids=new_ids)


@dataclass(frozen=True)
class ReviewEntry:
    id: str
    score: float
    metadata: tuple[tuple[str, str], ...]
    verdict: str = "undecided"


@dataclass(frozen=True)
class ReviewQueue:
    entries: tuple[ReviewEntry, ...]
    fraction: float

    def with_verdict(self, sample_id: str, verdict: str) -> "ReviewQueue":
        if verdict not in VERDICTS:
            raise ResampleError("bad-verdict", f"verdict must be one of {VERDICTS}")
        if all(e.id != sample_id for e in self.entries):
            raise ResampleError("unknown-id", f"{sample_id!r} is not in the review queue")
        return ReviewQueue(
            entries=tuple(
                replace(e, verdict=verdict) if e.id == sample_id else e for e in self.entries
            ),
            fraction=self.fraction,
        )

    def removal_ids(self) -> list[str]:
        """Ids judged noisy: the removal-only debugging edit (no additions)."""
        return [e.id for e in self.entries if e.verdict == "noisy"]


def review_queue(
    scores: FamiliarityScores,
    fraction: float,
    records_by_id: dict[str, SampleRecord] | None = None,
) -> ReviewQueue:
    """Least-familiar tail prepared for human triage, most unfamiliar first."""
    from .familiarity import tail

    ids = tail(scores, fraction, "least")
    by_id = scores.as_dict()
    records_by_id = records_by_id or {}
    entries = []
    for sid in ids:
        rec = records_by_id.get(sid)
        meta = tuple(sorted(rec.values.items())) if rec else ()
        entries.append(ReviewEntry(id=sid, score=by_id[sid], metadata=meta))
    return ReviewQueue(entries=tuple(entries), fraction=fraction)
