import itertools

import numpy as np
import pytest

from datadesign.errors import ResampleError
from datadesign.familiarity import FamiliarityScores
from datadesign.monitor import SampleRecord
from datadesign.resample import (
    DatasetVersion,
    ResamplePlan,
    SamplingStrategy,
    apply_plan,
    build_plan,
    match_candidates,
    review_queue,
    select_exemplars,
    select_removals,
)


def scores_n(n, seed=0):
    rng = np.random.default_rng(seed)
    return FamiliarityScores(
        entries=tuple((f"s{i:05d}", float(v)) for i, v in enumerate(rng.normal(size=n)))
    )


def assignment_oracle(cost_rows):
    """Exhaustive enumeration over all one-to-one assignments."""
    ne = len(cost_rows)
    np_ = len(cost_rows[0])
    best = None
    for perm in itertools.permutations(range(np_), ne):
        total = sum(cost_rows[i][perm[i]] for i in range(ne))
        if best is None or total < best:
            best = total
    return best


class TestStrategy:
    def test_topk_requires_zero_window(self):
        with pytest.raises(ResampleError, match="bad-strategy"):
            SamplingStrategy(kind="topk_swap", k=0.1, i=0.1)

    def test_window_sum_must_stay_below_one(self):
        with pytest.raises(ResampleError, match="bad-strategy"):
            SamplingStrategy(kind="window_most", k=0.6, i=0.5)

    def test_unknown_kind(self):
        with pytest.raises(ResampleError, match="bad-strategy"):
            SamplingStrategy(kind="bottomk", k=0.1)


class TestSelection:
    def test_single_most_familiar_at_default_fraction(self):
        scores = scores_n(1000)
        out = select_removals(scores, SamplingStrategy(k=0.001))
        assert len(out) == 1
        assert out[0] == max(scores.entries, key=lambda e: e[1])[0]

    def test_topk_quarter_of_four(self):
        scores = FamiliarityScores(entries=(("a", -9.0), ("b", -5.0), ("c", -2.0), ("d", -1.0)))
        assert select_removals(scores, SamplingStrategy(k=0.25)) == ["d"]
        assert select_exemplars(scores, SamplingStrategy(k=0.25)) == ["a"]

    def test_window_collapse_with_zero_extension(self):
        scores = scores_n(200, seed=1)
        top = select_removals(scores, SamplingStrategy(kind="topk_swap", k=0.1, seed=5))
        windowed = select_removals(scores, SamplingStrategy(kind="window_most", k=0.1, i=0.0, seed=5))
        assert top == windowed

    def test_window_subset_of_wide_window(self):
        scores = scores_n(500, seed=2)
        strategy = SamplingStrategy(kind="window_most", k=0.05, i=0.1, seed=3)
        picked = select_removals(scores, strategy)
        wide = select_removals(scores, SamplingStrategy(kind="topk_swap", k=0.15, seed=3))
        assert set(picked) <= set(wide)
        assert len(picked) == 25

    def test_window_both_draws_exemplars_from_window(self):
        scores = FamiliarityScores(entries=(("a", -9.0), ("b", -5.0), ("c", -2.0), ("d", -1.0)))
        strategy = SamplingStrategy(kind="window_both", k=0.25, i=0.25, seed=0)
        assert set(select_exemplars(scores, strategy)) <= {"a", "b"}

    def test_zero_selection_errors(self):
        with pytest.raises(ResampleError, match="fraction-too-small"):
            select_removals(scores_n(10), SamplingStrategy(k=0.01))

    def test_sweep_enumerates_plans(self):
        scores = scores_n(10000, seed=4)
        sizes = [len(select_removals(scores, SamplingStrategy(k=k))) for k in (0.005, 0.001, 0.0005, 0.0001)]
        assert sizes == [50, 10, 5, 1]

    def test_deterministic_per_seed(self):
        scores = scores_n(300, seed=5)
        s = SamplingStrategy(kind="window_both", k=0.1, i=0.2, seed=11)
        assert select_removals(scores, s) == select_removals(scores, s)
        assert select_exemplars(scores, s) == select_exemplars(scores, s)


def rec(i, **values):
    return SampleRecord(id=i, values={k: str(v) for k, v in values.items()}, wave=0)


class TestMatching:
    def test_identical_metadata_pairs_at_zero_cost(self):
        exemplars = [rec("e1", hand="L", sex="F")]
        pool = [rec("p1", hand="R", sex="M"), rec("p2", hand="L", sex="F")]
        pairing = match_candidates(exemplars, pool, {"hand": 1.0, "sex": 1.0})
        assert pairing == [("e1", "p2", 0.0)]

    def test_matches_exhaustive_oracle_on_hand_built_instance(self):
        # metadata crafted so costs are {{0,1,2},{1,0,2}}
        exemplars = [rec("e1", a="x", b="y"), rec("e2", a="x", b="z")]
        pool = [rec("p1", a="x", b="y"), rec("p2", a="x", b="z"), rec("p3", a="w", b="w")]
        weights = {"a": 1.0, "b": 1.0}
        pairing = match_candidates(exemplars, pool, weights)
        assert sum(c for _, _, c in pairing) == 0.0
        assert dict((e, p) for e, p, _ in pairing) == {"e1": "p1", "e2": "p2"}

    def test_constant_cost_breaks_ties_lexicographically(self):
        exemplars = [rec("e1", a=1, b=1, c=1), rec("e2", a=2, b=2, c=2)]
        pool = [rec("p3", a=7, b=7, c=7), rec("p1", a=8, b=8, c=8), rec("p2", a=9, b=9, c=9)]
        pairing = match_candidates(exemplars, pool, {"a": 1.0, "b": 1.0, "c": 1.0})
        assert [c for _, _, c in pairing] == [3.0, 3.0]
        assert dict((e, p) for e, p, _ in pairing) == {"e1": "p1", "e2": "p2"}

    def test_optimal_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(6)
        dims = ["a", "b", "c"]
        for _ in range(30):
            ne, np_ = int(rng.integers(1, 5)), int(rng.integers(5, 8))
            exemplars = [
                rec(f"e{i}", **{d: int(rng.integers(0, 3)) for d in dims}) for i in range(ne)
            ]
            pool = [
                rec(f"p{j}", **{d: int(rng.integers(0, 3)) for d in dims}) for j in range(np_)
            ]
            weights = {d: float(rng.integers(1, 4)) for d in dims}
            pairing = match_candidates(exemplars, pool, weights)
            cost_rows = [
                [
                    sum(w for d, w in weights.items() if e.values[d] != p.values[d])
                    for p in sorted(pool, key=lambda r: r.id)
                ]
                for e in sorted(exemplars, key=lambda r: r.id)
            ]
            assert sum(c for _, _, c in pairing) == pytest.approx(
                assignment_oracle(cost_rows), abs=1e-9
            )

    def test_pool_too_small_rejected(self):
        with pytest.raises(ResampleError, match="pool-exhausted"):
            match_candidates([rec("e1", a=1), rec("e2", a=2)], [rec("p1", a=1)], {"a": 1.0})

    def test_pool_records_never_reused(self):
        exemplars = [rec(f"e{i}", a=0) for i in range(4)]
        pool = [rec(f"p{j}", a=0) for j in range(4)]
        pairing = match_candidates(exemplars, pool, {"a": 1.0})
        assert len({p for _, p, _ in pairing}) == 4


class TestBuildApply:
    def setup(self, n=1000, pool_size=50, seed=0):
        rng = np.random.default_rng(seed)
        scores = FamiliarityScores(
            entries=tuple((f"s{i:05d}", float(v)) for i, v in enumerate(rng.normal(size=n)))
        )
        records = {f"s{i:05d}": rec(f"s{i:05d}", g=i % 3) for i in range(n)}
        pool = [rec(f"pool{j:03d}", g=j % 3) for j in range(pool_size)]
        train = DatasetVersion(version=1, ids=tuple(records))
        return train, scores, pool, records

    def test_parity_holds(self):
        train, scores, pool, records = self.setup()
        plan = build_plan(train, scores, pool, SamplingStrategy(k=0.01), {"g": 1.0}, records)
        assert len(plan.remove_ids) == len(plan.add_ids) == 10
        assert not set(plan.remove_ids) & set(plan.add_ids)

    def test_empty_pool_errors(self):
        train, scores, _, records = self.setup()
        with pytest.raises(ResampleError, match="pool-exhausted"):
            build_plan(train, scores, [], SamplingStrategy(k=0.01), {"g": 1.0}, records)

    def test_regeneration_is_identical(self):
        train, scores, pool, records = self.setup()
        s = SamplingStrategy(kind="window_most", k=0.01, i=0.02, seed=3)
        a = build_plan(train, scores, pool, s, {"g": 1.0}, records)
        b = build_plan(train, scores, pool, s, {"g": 1.0}, records)
        assert a == b

    def test_apply_preserves_cardinality(self):
        train, scores, pool, records = self.setup()
        plan = build_plan(train, scores, pool, SamplingStrategy(k=0.01), {"g": 1.0}, records)
        new = apply_plan(train, plan)
        assert len(new.ids) == len(train.ids)
        assert new.version == train.version + 1
        assert set(plan.add_ids) <= set(new.ids)
        assert not set(plan.remove_ids) & set(new.ids)

    def test_stale_plan_rejected(self):
        train, scores, pool, records = self.setup()
        plan = build_plan(train, scores, pool, SamplingStrategy(k=0.01), {"g": 1.0}, records)
        moved = apply_plan(train, plan)
        with pytest.raises(ResampleError, match="stale-plan"):
            apply_plan(moved, plan)

    def test_empty_plan_is_identity_with_new_version(self):
        train = DatasetVersion(version=4, ids=("a", "b"))
        empty = ResamplePlan(remove_ids=(), add_ids=(), pairing=(), strategy=SamplingStrategy(k=0.5))
        new = apply_plan(train, empty)
        assert new.ids == train.ids
        assert new.version == 5

    def test_scores_must_cover_training_set(self):
        train, scores, pool, records = self.setup()
        bigger = DatasetVersion(version=1, ids=train.ids + ("extra",))
        with pytest.raises(ResampleError, match="scores-incomplete"):
            build_plan(bigger, scores, pool, SamplingStrategy(k=0.01), {"g": 1.0}, records)


class TestReviewQueue:
    def test_tail_fraction_sizes_queue(self):
        rng = np.random.default_rng(1)
        scores = FamiliarityScores(
            entries=tuple((f"s{i:05d}", float(v)) for i, v in enumerate(rng.normal(size=10000)))
        )
        queue = review_queue(scores, 0.001)
        assert len(queue.entries) == 10
        assert all(e.verdict == "undecided" for e in queue.entries)
        assert queue.entries[0].score <= queue.entries[-1].score

    def test_verdict_round_trip(self):
        scores = FamiliarityScores(entries=(("a", -3.0), ("b", -1.0)))
        queue = review_queue(scores, 1.0).with_verdict("a", "noisy")
        from datadesign.formats import review_queue_from_document, review_queue_to_document

        reloaded = review_queue_from_document(review_queue_to_document(queue))
        assert reloaded.entries[0].verdict == "noisy"

    def test_all_noisy_exports_removal_only_edit(self):
        scores = FamiliarityScores(entries=tuple((f"s{i}", float(i)) for i in range(10)))
        queue = review_queue(scores, 0.3)
        for e in queue.entries:
            queue = queue.with_verdict(e.id, "noisy")
        removals = queue.removal_ids()
        assert len(removals) == 3
        train = DatasetVersion(version=1, ids=tuple(f"s{i}" for i in range(10)))
        shrunk = DatasetVersion(version=2, ids=tuple(i for i in train.ids if i not in removals))
        assert len(shrunk.ids) == len(train.ids) - len(removals)

    def test_bad_verdict_rejected(self):
        scores = FamiliarityScores(entries=(("a", -3.0),))
        with pytest.raises(ResampleError, match="bad-verdict"):
            review_queue(scores, 1.0).with_verdict("a", "meh")
