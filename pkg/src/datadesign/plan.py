"""Pre-collection planning: dimensions, expected distributions, reflexive records.

A plan is declared *before* any data is collected: every metadata dimension the
team intends to track, with the distribution they expect to observe. Raw
weights are kept alongside the normalized form so users can always see what
they typed. Plans are immutable; every mutation returns a new plan with the
version bumped by one.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

from .errors import PlanError

NORMALIZATION_TOL = 1e-9

# Small default reference taxonomy for the missing-groups notice. Teams are
# expected to replace this with their own taxonomy file; see formats.load_taxonomy.
DEFAULT_TAXONOMY: dict[str, tuple[str, ...]] = {
    "sex": ("female", "male", "intersex"),
    "gender": ("woman", "man", "non-binary", "self-described"),
    "age_band": ("18-25", "26-40", "41-55", "56+"),
    "handedness": ("left", "right", "ambidextrous"),
    "race_ethnicity": (
        "asian",
        "black",
        "hispanic_latino",
        "indigenous",
        "middle_eastern",
        "pacific_islander",
        "white",
        "multiple",
        "self-described",
    ),
}

# Default reflexive questionnaire. Prompt text is data, not code: teams extend
# it via a questionnaire file.
DEFAULT_QUESTIONNAIRE: tuple[tuple[str, str], ...] = (
    ("team-composition", "Who is on the team, and what perspectives do they bring?"),
    ("team-demographics", "What demographic groups does the team itself represent?"),
    ("intended-population", "Who is the data intended to represent?"),
    ("collection-context", "Where and how will the data be collected?"),
    ("whats-missing", "What's missing, in the context of your project?"),
)


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def normalize_expected(raw: list[float] | tuple[float, ...]) -> tuple[float, ...]:
    """Normalize non-negative weights into a probability vector.

    Raises PlanError on an empty, negative, or all-zero input.
    """
    weights = tuple(float(w) for w in raw)
    if not weights:
        raise PlanError("empty-weights", "expected weights must be non-empty")
    for w in weights:
        if not math.isfinite(w):
            raise PlanError("non-finite-weight", f"weight {w!r} is not finite")
        if w < 0:
            raise PlanError("negative-weight", f"weight {w!r} is negative")
    total = math.fsum(weights)
    if total <= 0:
        raise PlanError("all-zero-weights", "at least one weight must be positive")
    return tuple(w / total for w in weights)


@dataclass(frozen=True)
class DimensionSpec:
    """One declared metadata dimension with its expected distribution.

    `kind` is declared by the user, never inferred: the divergence metric in
    the monitor depends on it (ordinal dimensions compare by transport over
    `positions`, categorical by total variation).
    """

    name: str
    kind: str  # "categorical" | "ordinal"
    categories: tuple[str, ...]
    raw_weights: tuple[float, ...]
    expected: tuple[float, ...]
    positions: tuple[float, ...] | None = None  # ordinal only, strictly increasing

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise PlanError("empty-dimension-name", "dimension name must be non-empty")
        if self.kind not in ("categorical", "ordinal"):
            raise PlanError("bad-kind", f"kind must be categorical or ordinal, got {self.kind!r}")
        if not self.categories:
            raise PlanError("empty-categories", f"dimension {self.name!r} has no categories")
        if len(set(self.categories)) != len(self.categories):
            raise PlanError("duplicate-category", f"dimension {self.name!r} repeats a category label")
        if len(self.expected) != len(self.categories):
            raise PlanError(
                "expected-length",
                f"dimension {self.name!r}: {len(self.expected)} expected entries for "
                f"{len(self.categories)} categories",
            )
        if any(p < 0 for p in self.expected):
            raise PlanError("negative-weight", f"dimension {self.name!r} has a negative expected entry")
        if abs(math.fsum(self.expected) - 1.0) > NORMALIZATION_TOL:
            raise PlanError("not-normalized", f"dimension {self.name!r} expected does not sum to 1")
        if self.positions is not None:
            if self.kind != "ordinal":
                raise PlanError("positions-on-categorical", f"dimension {self.name!r} is not ordinal")
            if len(self.positions) != len(self.categories):
                raise PlanError("positions-length", f"dimension {self.name!r} positions length mismatch")
            if any(b <= a for a, b in zip(self.positions, self.positions[1:])):
                raise PlanError("positions-order", f"dimension {self.name!r} positions must strictly increase")

    def effective_positions(self) -> tuple[float, ...]:
        """Declared positions, or bin indices 0..n-1 when absent."""
        if self.positions is not None:
            return self.positions
        return tuple(float(i) for i in range(len(self.categories)))


def make_dimension(
    name: str,
    categories: list[str] | tuple[str, ...],
    weights: list[float] | tuple[float, ...],
    kind: str = "categorical",
    positions: list[float] | None = None,
) -> DimensionSpec:
    """Build a DimensionSpec from raw (unnormalized) weights."""
    raw = tuple(float(w) for w in weights)
    if len(raw) != len(categories):
        raise PlanError("expected-length", f"dimension {name!r}: weights/categories length mismatch")
    return DimensionSpec(
        name=name,
        kind=kind,
        categories=tuple(categories),
        raw_weights=raw,
        expected=normalize_expected(raw),
        positions=tuple(positions) if positions is not None else None,
    )


@dataclass(frozen=True)
class ReflexiveRecord:
    """Team questionnaire answers plus the computed missing-groups notice."""

    answers: tuple[tuple[str, str, str], ...]  # (prompt id, prompt text, response)
    team_declared: tuple[tuple[str, tuple[str, ...]], ...]  # dimension -> sorted categories
    missing_notice: tuple[tuple[str, tuple[str, ...]], ...]  # dimension -> sorted absent categories
    timestamp: str


def compute_missing_notice(
    team_declared: dict[str, set[str] | list[str] | tuple[str, ...]],
    reference: dict[str, tuple[str, ...] | list[str]],
) -> tuple[tuple[str, tuple[str, ...]], ...]:
    """Reference-taxonomy categories absent from the team's declaration, per dimension."""
    notice = []
    for dim in reference:
        declared = set(team_declared.get(dim, ()))
        missing = tuple(sorted(set(reference[dim]) - declared))
        if missing:
            notice.append((dim, missing))
    return tuple(notice)


@dataclass(frozen=True)
class DatasetPlan:
    """The pre-collection contract: dimensions + expected distributions."""

    name: str
    version: int
    dimensions: tuple[DimensionSpec, ...]
    reflexive: ReflexiveRecord | None = None
    created: str = field(default_factory=_utcnow)
    modified: str = field(default_factory=_utcnow)

    def dimension(self, name: str) -> DimensionSpec:
        for d in self.dimensions:
            if d.name == name:
                return d
        raise PlanError("unknown-dimension", f"plan has no dimension {name!r}")

    def dimension_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dimensions)


@dataclass(frozen=True)
class IntersectionCell:
    """One combination of categories across a fixed subset of dimensions."""

    key: tuple[tuple[str, str], ...]  # (dimension name, category label) in plan order
    expected_proportion: float
    observed_count: int = 0


@dataclass(frozen=True)
class Finding:
    dimension: str  # "" for plan-level findings
    reason: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...]

    @property
    def ok(self) -> bool:
        return not self.findings


def create_plan(name: str, dims: list[DimensionSpec]) -> DatasetPlan:
    """Create a version-1 plan from validated dimension specs."""
    if not dims:
        raise PlanError("no-dimensions", "a plan needs at least one dimension")
    names = [d.name for d in dims]
    if len(set(names)) != len(names):
        raise PlanError("duplicate-dimension", "dimension names must be unique")
    now = _utcnow()
    return DatasetPlan(name=name, version=1, dimensions=tuple(dims), created=now, modified=now)


def replace_dimensions(plan: DatasetPlan, dims: list[DimensionSpec]) -> DatasetPlan:
    """Return a new plan with the given dimensions and version bumped."""
    names = [d.name for d in dims]
    if len(set(names)) != len(names):
        raise PlanError("duplicate-dimension", "dimension names must be unique")
    if not dims:
        raise PlanError("no-dimensions", "a plan needs at least one dimension")
    return replace(plan, dimensions=tuple(dims), version=plan.version + 1, modified=_utcnow())


def record_reflexive(
    plan: DatasetPlan,
    answers: list[tuple[str, str, str]],
    team_declared: dict[str, set[str] | list[str] | tuple[str, ...]],
    reference: dict[str, tuple[str, ...] | list[str]] | None = None,
) -> DatasetPlan:
    """Attach questionnaire answers and the missing-groups notice; bumps version."""
    reference = DEFAULT_TAXONOMY if reference is None else reference
    if not reference:
        raise PlanError("empty-taxonomy", "reference taxonomy must be non-empty")
    seen: set[str] = set()
    for pid, _, _ in answers:
        if pid in seen:
            raise PlanError("duplicate-prompt", f"prompt {pid!r} answered more than once")
        seen.add(pid)
    for dim in team_declared:
        if dim not in reference:
            raise PlanError("unknown-taxonomy-dimension", f"{dim!r} is not in the reference taxonomy")
    record = ReflexiveRecord(
        answers=tuple((p, t, r) for p, t, r in answers),
        team_declared=tuple((d, tuple(sorted(set(v)))) for d, v in sorted(team_declared.items())),
        missing_notice=compute_missing_notice(team_declared, reference),
        timestamp=_utcnow(),
    )
    return replace(plan, reflexive=record, version=plan.version + 1, modified=_utcnow())


def enumerate_intersections(plan: DatasetPlan, dim_names: list[str]) -> list[IntersectionCell]:
    """Cartesian product of the named dimensions' categories, in plan order.

    Expected proportions are independence products of the member dimensions'
    expected probabilities.
    """
    if not dim_names:
        raise PlanError("no-dimensions", "at least one dimension name required")
    if len(set(dim_names)) != len(dim_names):
        raise PlanError("duplicate-dimension", "dimension names must be distinct")
    order = {d.name: i for i, d in enumerate(plan.dimensions)}
    for n in dim_names:
        if n not in order:
            raise PlanError("unknown-dimension", f"plan has no dimension {n!r}")
    ordered = sorted(dim_names, key=order.__getitem__)
    dims = [plan.dimension(n) for n in ordered]
    cells = []
    for combo in itertools.product(*(range(len(d.categories)) for d in dims)):
        key = tuple((d.name, d.categories[i]) for d, i in zip(dims, combo))
        prop = 1.0
        for d, i in zip(dims, combo):
            prop *= d.expected[i]
        cells.append(IntersectionCell(key=key, expected_proportion=prop))
    return cells


def validate_plan(plan: DatasetPlan) -> ValidationReport:
    """Check plan invariants; never raises, reports findings instead.

    Useful for hand-edited plan files, which can violate invariants the
    constructors would normally reject.
    """
    findings: list[Finding] = []
    names = [d.name for d in plan.dimensions]
    if len(set(names)) != len(names):
        findings.append(Finding("", "duplicate dimension names"))
    if not plan.dimensions:
        findings.append(Finding("", "plan has no dimensions"))
    if plan.version < 1:
        findings.append(Finding("", f"version must be >= 1, got {plan.version}"))
    for d in plan.dimensions:
        if not d.categories:
            findings.append(Finding(d.name, "no categories"))
            continue
        if len(set(d.categories)) != len(d.categories):
            findings.append(Finding(d.name, "duplicate category label"))
        if len(d.expected) != len(d.categories):
            findings.append(Finding(d.name, "expected length does not match categories"))
        else:
            if any(p < 0 for p in d.expected):
                findings.append(Finding(d.name, "negative expected entry"))
            if abs(math.fsum(d.expected) - 1.0) > NORMALIZATION_TOL:
                findings.append(Finding(d.name, f"expected sums to {math.fsum(d.expected):.6g}, not 1"))
        if d.positions is not None:
            if len(d.positions) != len(d.categories):
                findings.append(Finding(d.name, "positions length does not match categories"))
            elif any(b <= a for a, b in zip(d.positions, d.positions[1:])):
                findings.append(Finding(d.name, "positions are not strictly increasing"))
        if d.kind not in ("categorical", "ordinal"):
            findings.append(Finding(d.name, f"unknown kind {d.kind!r}"))
    return ValidationReport(findings=tuple(findings))
