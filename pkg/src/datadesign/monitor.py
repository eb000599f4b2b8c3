"""Collection monitoring: observed distributions vs the declared plan.

Snapshots count category frequencies per dimension (optionally filtered by
collection wave), divergence compares observed to expected with the metric
matching each dimension's kind, and gap reports surface undersampled
intersections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import RecordError
from .plan import DatasetPlan, enumerate_intersections

DEFAULT_TV_THRESHOLD = 0.10


@dataclass(frozen=True)
class SampleRecord:
    """One collected sample's id and per-dimension metadata values."""

    id: str
    values: dict[str, str]
    wave: int = 0
    session: str | None = None


def validate_record(plan: DatasetPlan, record: SampleRecord) -> list[str]:
    """Reasons the record does not fit the plan; empty list when valid.

    Missing dimensions are allowed (counted as missing values by snapshots);
    unknown dimensions and unknown categories are not.
    """
    reasons = []
    if not record.id:
        reasons.append("empty-id")
    if record.wave < 0:
        reasons.append("negative-wave")
    known = {d.name: d for d in plan.dimensions}
    for dim, value in record.values.items():
        if dim not in known:
            reasons.append(f"unknown-dimension:{dim}")
        elif value != "" and value not in known[dim].categories:
            reasons.append(f"unknown-category:{dim}={value}")
    return reasons


@dataclass(frozen=True)
class DimensionCounts:
    dimension: str
    counts: tuple[int, ...]  # aligned to the dimension's categories
    missing: int

    @property
    def proportions(self) -> tuple[float, ...] | None:
        total = sum(self.counts)
        if total == 0:
            return None
        return tuple(c / total for c in self.counts)


@dataclass(frozen=True)
class DistributionSnapshot:
    """Observed category counts per dimension over a (wave-filtered) record set."""

    wave_filter: int | None
    total: int
    per_dimension: tuple[DimensionCounts, ...]

    @property
    def empty(self) -> bool:
        return self.total == 0

    def for_dimension(self, name: str) -> DimensionCounts:
        for dc in self.per_dimension:
            if dc.dimension == name:
                return dc
        raise RecordError("unknown-dimension", f"snapshot has no dimension {name!r}")


def snapshot(
    plan: DatasetPlan,
    records: list[SampleRecord],
    wave_filter: int | None = None,
) -> DistributionSnapshot:
    """Count category frequencies among (filtered) records; deterministic."""
    filtered = [r for r in records if wave_filter is None or r.wave == wave_filter]
    per_dim = []
    for d in plan.dimensions:
        index = {c: i for i, c in enumerate(d.categories)}
        counts = [0] * len(d.categories)
        missing = 0
        for r in filtered:
            value = r.values.get(d.name, "")
            if value == "":
                missing += 1
            else:
                counts[index[value]] += 1
        per_dim.append(DimensionCounts(d.name, tuple(counts), missing))
    return DistributionSnapshot(wave_filter=wave_filter, total=len(filtered), per_dimension=tuple(per_dim))


def _check_normalized(p, name, tol=1e-6):
    if any(x < -tol for x in p):
        raise RecordError("negative-probability", f"{name} has a negative entry")
    if abs(math.fsum(p) - 1.0) > tol:
        raise RecordError("not-normalized", f"{name} sums to {math.fsum(p):.6g}, not 1")


def tv_distance(p, q) -> float:
    """Total variation distance: half the L1 gap between probability vectors."""
    if len(p) != len(q):
        raise RecordError("length-mismatch", f"vectors of length {len(p)} and {len(q)}")
    _check_normalized(p, "p")
    _check_normalized(q, "q")
    return 0.5 * math.fsum(abs(a - b) for a, b in zip(p, q))


def emd_1d(p, q, positions) -> float:
    """Earth mover's distance between histograms on a line.

    Equals the optimal-transport cost with ground metric |positions_i -
    positions_j|: the sum of absolute CDF differences weighted by bin spacing.
    """
    if len(p) != len(q):
        raise RecordError("length-mismatch", f"vectors of length {len(p)} and {len(q)}")
    if len(positions) != len(p):
        raise RecordError("length-mismatch", "positions length does not match vectors")
    if any(b <= a for a, b in zip(positions, positions[1:])):
        raise RecordError("positions-order", "positions must be strictly increasing")
    _check_normalized(p, "p")
    _check_normalized(q, "q")
    total = 0.0
    cdf_gap = 0.0
    for i in range(len(p) - 1):
        cdf_gap += p[i] - q[i]
        total += abs(cdf_gap) * (positions[i + 1] - positions[i])
    return total


@dataclass(frozen=True)
class DivergenceEntry:
    dimension: str
    metric: str  # "emd" | "tv"
    value: float
    threshold: float
    flagged: bool


@dataclass(frozen=True)
class DivergenceReport:
    entries: tuple[DivergenceEntry, ...]

    @property
    def flagged(self) -> tuple[str, ...]:
        return tuple(e.dimension for e in self.entries if e.flagged)


@dataclass(frozen=True)
class DivergenceThresholds:
    """Flagging thresholds. There is no universally right trigger for skew,
    so these defaults are policy and fully configurable.

    tv: threshold for categorical dimensions.
    emd_spacings: ordinal threshold in units of mean adjacent bin spacing.
    per_dimension: absolute overrides by dimension name.
    """

    tv: float = DEFAULT_TV_THRESHOLD
    emd_spacings: float = 1.0
    per_dimension: dict[str, float] = field(default_factory=dict)


def divergence(
    plan: DatasetPlan,
    snap: DistributionSnapshot,
    thresholds: DivergenceThresholds | None = None,
) -> DivergenceReport:
    """Expected-vs-observed divergence per dimension.

    Ordinal dimensions use 1D transport over their declared positions (bin
    indices when absent); categorical dimensions use total variation, which is
    transport under a unit ground metric. Dimensions with no observed values
    are skipped.
    """
    thresholds = thresholds or DivergenceThresholds()
    if snap.empty:
        raise RecordError("empty-snapshot", "divergence needs at least one record")
    entries = []
    for d in plan.dimensions:
        dc = snap.for_dimension(d.name)
        observed = dc.proportions
        if observed is None:
            continue
        if d.kind == "ordinal":
            positions = d.effective_positions()
            value = emd_1d(d.expected, observed, positions)
            spacing = (positions[-1] - positions[0]) / max(1, len(positions) - 1)
            threshold = thresholds.per_dimension.get(d.name, thresholds.emd_spacings * spacing)
            metric = "emd"
        else:
            value = tv_distance(d.expected, observed)
            threshold = thresholds.per_dimension.get(d.name, thresholds.tv)
            metric = "tv"
        entries.append(DivergenceEntry(d.name, metric, value, threshold, value > threshold))
    return DivergenceReport(entries=tuple(entries))


@dataclass(frozen=True)
class GapEntry:
    key: tuple[tuple[str, str], ...]
    observed_count: int
    expected_count: float
    deficit: int


@dataclass(frozen=True)
class GapReport:
    undersampled: tuple[GapEntry, ...]
    min_count: int
    total_records: int


def gap_report(
    plan: DatasetPlan,
    records: list[SampleRecord],
    dim_names: list[str],
    min_count: int = 0,
) -> GapReport:
    """Undersampled intersection cells, sorted by deficit descending.

    A cell is listed when its observed count falls below the larger of
    `min_count` and the ceiling of its expected count (expected proportion x
    total records). Records missing a value on any member dimension do not
    count toward any cell.
    """
    if min_count < 0:
        raise RecordError("negative-min-count", "min_count must be >= 0")
    cells = enumerate_intersections(plan, dim_names)
    total = len(records)
    observed: dict[tuple[tuple[str, str], ...], int] = {c.key: 0 for c in cells}
    ordered_dims = [dim for dim, _ in cells[0].key]
    for r in records:
        key = tuple((dim, r.values.get(dim, "")) for dim in ordered_dims)
        if key in observed:
            observed[key] += 1
    entries = []
    for c in cells:
        expected_count = c.expected_proportion * total
        floor_needed = max(min_count, math.ceil(expected_count))
        got = observed[c.key]
        if got < floor_needed:
            entries.append(GapEntry(c.key, got, expected_count, max(0, floor_needed - got)))
    entries.sort(key=lambda e: (-e.deficit, e.key))
    return GapReport(undersampled=tuple(entries), min_count=min_count, total_records=total)


@dataclass(frozen=True)
class IngestSummary:
    accepted: int
    rejected: int
    reasons: tuple[tuple[str, str], ...]  # (record id, reason)


def check_records(
    plan: DatasetPlan,
    existing_ids: set[str],
    records: list[SampleRecord],
    atomic: bool = False,
) -> tuple[list[SampleRecord], IngestSummary]:
    """Validate a batch for ingestion.

    Per-record mode accepts the valid subset; atomic mode rejects the whole
    batch when any record fails. Duplicate ids (against the store or within
    the batch) are rejections.
    """
    accepted: list[SampleRecord] = []
    reasons: list[tuple[str, str]] = []
    seen = set(existing_ids)
    for r in records:
        bad = validate_record(plan, r)
        if r.id in seen:
            bad.append("duplicate-id")
        if bad:
            reasons.append((r.id, ";".join(bad)))
        else:
            accepted.append(r)
            seen.add(r.id)
    if atomic and reasons:
        raise RecordError(
            "batch-rejected",
            f"{len(reasons)} of {len(records)} records invalid: "
            + "; ".join(f"{rid}({why})" for rid, why in reasons[:5]),
        )
    return accepted, IngestSummary(len(accepted), len(reasons), tuple(reasons))
