"""On-disk formats: plan documents, records CSV, activation matrices, scores,
and model persistence.

Plans and models serialize as JSON with sorted keys and fixed separators so
re-saving an unchanged document is byte-stable (timestamps aside). Activation
matrices come in two shapes: delimited text with an `id, a0..a(M-1)` header,
or raw little-endian float32 row-major binary with a JSON sidecar descriptor.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .errors import DataDesignError, ModelError, PlanError, RecordError
from .familiarity import ActivationMatrix, FamiliarityModel, FamiliarityScores
from .monitor import SampleRecord
from .pca import PcaModel
from .plan import DatasetPlan, DimensionSpec, ReflexiveRecord
from .refmodel import AccuracyMatrix
from .resample import ResamplePlan, ReviewEntry, ReviewQueue, SamplingStrategy
from .vbgmm import VbGmmConfig, VbGmmModel


def _dump(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


# ---------------------------------------------------------------- plan


def plan_to_document(plan: DatasetPlan) -> dict:
    doc = {
        "name": plan.name,
        "version": plan.version,
        "created": plan.created,
        "modified": plan.modified,
        "dimensions": [
            {
                "name": d.name,
                "kind": d.kind,
                "categories": list(d.categories),
                "raw_weights": list(d.raw_weights),
                "expected": list(d.expected),
                "positions": list(d.positions) if d.positions is not None else None,
            }
            for d in plan.dimensions
        ],
        "reflexive": None,
    }
    if plan.reflexive is not None:
        r = plan.reflexive
        doc["reflexive"] = {
            "answers": [list(a) for a in r.answers],
            "team_declared": {dim: list(cats) for dim, cats in r.team_declared},
            "missing_notice": [[dim, list(cats)] for dim, cats in r.missing_notice],
            "timestamp": r.timestamp,
        }
    return doc


def _unchecked_dimension(d: dict) -> DimensionSpec:
    # bypass constructor validation: hand-edited files must load far enough
    # for validate_plan to report on them
    spec = object.__new__(DimensionSpec)
    object.__setattr__(spec, "name", d.get("name", ""))
    object.__setattr__(spec, "kind", d.get("kind", "categorical"))
    object.__setattr__(spec, "categories", tuple(d.get("categories", ())))
    object.__setattr__(spec, "raw_weights", tuple(d.get("raw_weights", ())))
    object.__setattr__(spec, "expected", tuple(d.get("expected", ())))
    positions = d.get("positions")
    object.__setattr__(spec, "positions", tuple(positions) if positions is not None else None)
    return spec


def plan_from_document(doc: dict, strict: bool = True) -> DatasetPlan:
    """Load a plan document; strict=False defers invariant checks to
    validate_plan."""
    try:
        dims = []
        for d in doc["dimensions"]:
            if strict:
                positions = d.get("positions")
                dims.append(
                    DimensionSpec(
                        name=d["name"],
                        kind=d["kind"],
                        categories=tuple(d["categories"]),
                        raw_weights=tuple(float(w) for w in d.get("raw_weights", d["expected"])),
                        expected=tuple(float(p) for p in d["expected"]),
                        positions=tuple(positions) if positions is not None else None,
                    )
                )
            else:
                dims.append(_unchecked_dimension(d))
        reflexive = None
        if doc.get("reflexive"):
            r = doc["reflexive"]
            reflexive = ReflexiveRecord(
                answers=tuple(tuple(a) for a in r["answers"]),
                team_declared=tuple(sorted((dim, tuple(cats)) for dim, cats in r["team_declared"].items())),
                missing_notice=tuple((dim, tuple(cats)) for dim, cats in r["missing_notice"]),
                timestamp=r["timestamp"],
            )
        return DatasetPlan(
            name=doc["name"],
            version=int(doc["version"]),
            dimensions=tuple(dims),
            reflexive=reflexive,
            created=doc.get("created", ""),
            modified=doc.get("modified", ""),
        )
    except (KeyError, TypeError) as exc:
        raise PlanError("bad-plan-document", f"malformed plan document: {exc}") from exc


def save_plan(plan: DatasetPlan, path: str | Path) -> None:
    Path(path).write_text(_dump(plan_to_document(plan)), encoding="utf-8")


def load_plan(path: str | Path, strict: bool = True) -> DatasetPlan:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise PlanError("bad-plan-document", f"{path}: {exc}") from exc
    return plan_from_document(doc, strict=strict)


def load_taxonomy(path: str | Path) -> dict[str, tuple[str, ...]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or not doc:
        raise PlanError("bad-taxonomy", "taxonomy must be a non-empty object of dimension -> categories")
    return {dim: tuple(cats) for dim, cats in doc.items()}


def load_questionnaire(path: str | Path) -> tuple[tuple[str, str], ...]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return tuple((q["id"], q["prompt"]) for q in doc)


def load_dimension_drafts(path: str | Path) -> list[DimensionSpec]:
    """Dimension drafts for `plan init`: raw weights, not yet normalized."""
    from .plan import make_dimension

    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        make_dimension(
            d["name"],
            d["categories"],
            d["weights"],
            kind=d.get("kind", "categorical"),
            positions=d.get("positions"),
        )
        for d in doc
    ]


# ---------------------------------------------------------------- records


def records_to_csv(records: list[SampleRecord], dimension_names: list[str]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "wave", "session"] + list(dimension_names))
    for r in records:
        writer.writerow(
            [r.id, r.wave, r.session or ""] + [r.values.get(d, "") for d in dimension_names]
        )
    return out.getvalue()


def records_from_csv(text: str) -> list[SampleRecord]:
    """Parse the records format: header `id, wave, session, <dimensions...>`;
    empty field = missing value."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise RecordError("empty-file", "records file has no header") from None
    header = [h.strip() for h in header]
    if len(header) < 2 or header[0] != "id" or header[1] != "wave":
        raise RecordError("bad-header", "records header must start with: id, wave")
    has_session = len(header) > 2 and header[2] == "session"
    dim_start = 3 if has_session else 2
    dims = header[dim_start:]
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise RecordError("bad-row", f"line {lineno}: {len(row)} fields, expected {len(header)}")
        try:
            wave = int(row[1])
        except ValueError:
            raise RecordError("bad-row", f"line {lineno}: wave {row[1]!r} is not an integer") from None
        session = row[2].strip() or None if has_session else None
        values = {d: row[dim_start + i].strip() for i, d in enumerate(dims) if row[dim_start + i].strip()}
        records.append(SampleRecord(id=row[0].strip(), values=values, wave=wave, session=session))
    return records


def load_records(path: str | Path) -> list[SampleRecord]:
    return records_from_csv(Path(path).read_text(encoding="utf-8"))


def save_records(records: list[SampleRecord], dimension_names: list[str], path: str | Path) -> None:
    Path(path).write_text(records_to_csv(records, dimension_names), encoding="utf-8")


def record_to_document(record: SampleRecord) -> dict:
    return {
        "id": record.id,
        "values": dict(record.values),
        "wave": record.wave,
        "session": record.session,
    }


def record_from_document(doc: dict) -> SampleRecord:
    try:
        return SampleRecord(
            id=doc["id"],
            values=dict(doc["values"]),
            wave=int(doc["wave"]),
            session=doc.get("session"),
        )
    except (KeyError, TypeError) as exc:
        raise RecordError("bad-record-document", f"malformed record document: {exc}") from exc


# ---------------------------------------------------------------- reports


def snapshot_to_document(snap) -> dict:
    return {
        "wave_filter": snap.wave_filter,
        "total": snap.total,
        "per_dimension": [
            {
                "dimension": dc.dimension,
                "counts": list(dc.counts),
                "missing": dc.missing,
                "proportions": None if dc.proportions is None else list(dc.proportions),
            }
            for dc in snap.per_dimension
        ],
    }


def divergence_to_document(report) -> dict:
    return {
        "entries": [
            {
                "dimension": e.dimension,
                "metric": e.metric,
                "value": e.value,
                "threshold": e.threshold,
                "flagged": e.flagged,
            }
            for e in report.entries
        ],
        "flagged": list(report.flagged),
    }


def gap_report_to_document(report) -> dict:
    return {
        "min_count": report.min_count,
        "total_records": report.total_records,
        "undersampled": [
            {
                "cell": {dim: cat for dim, cat in e.key},
                "observed_count": e.observed_count,
                "expected_count": e.expected_count,
                "deficit": e.deficit,
            }
            for e in report.undersampled
        ],
    }


# ---------------------------------------------------------------- activations


def activations_to_csv(acts: ActivationMatrix) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id"] + [f"a{i}" for i in range(acts.m)])
    for sid, row in zip(acts.ids, acts.data):
        writer.writerow([sid] + [repr(float(v)) for v in row])
    return out.getvalue()


def activations_from_csv(text: str, layer_tag: str = "") -> ActivationMatrix:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ModelError("empty-file", "activation file has no header") from None
    if not header or header[0].strip() != "id":
        raise ModelError("bad-header", "activation header must start with: id")
    m = len(header) - 1
    ids, rows = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != m + 1:
            raise ModelError("bad-row", f"line {lineno}: {len(row)} fields, expected {m + 1}")
        ids.append(row[0].strip())
        try:
            rows.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ModelError("bad-row", f"line {lineno}: {exc}") from None
    return ActivationMatrix(ids=tuple(ids), data=np.array(rows, dtype=np.float64), layer_tag=layer_tag)


def load_activations(path: str | Path) -> ActivationMatrix:
    """Load either format: `.csv` text, or a `.json` sidecar descriptor
    pointing at raw float32 binary and an id list file."""
    path = Path(path)
    if path.suffix == ".json":
        desc = json.loads(path.read_text(encoding="utf-8"))
        try:
            n, m = int(desc["n"]), int(desc["m"])
            data_file = path.parent / desc["data_file"]
            ids_file = path.parent / desc["ids_file"]
            layer_tag = desc.get("layer_tag", "")
        except KeyError as exc:
            raise ModelError("bad-sidecar", f"sidecar missing field {exc}") from exc
        raw = np.fromfile(data_file, dtype="<f4")
        if raw.size != n * m:
            raise ModelError("bad-binary", f"{data_file}: {raw.size} floats, expected {n * m}")
        ids = ids_file.read_text(encoding="utf-8").split()
        if len(ids) != n:
            raise ModelError("bad-sidecar", f"{ids_file}: {len(ids)} ids, expected {n}")
        return ActivationMatrix(
            ids=tuple(ids), data=raw.reshape(n, m).astype(np.float64), layer_tag=layer_tag
        )
    return activations_from_csv(path.read_text(encoding="utf-8"))


def save_activations_binary(acts: ActivationMatrix, sidecar_path: str | Path) -> None:
    sidecar_path = Path(sidecar_path)
    stem = sidecar_path.stem
    data_file = sidecar_path.parent / f"{stem}.f32"
    ids_file = sidecar_path.parent / f"{stem}.ids"
    acts.data.astype("<f4").tofile(data_file)
    ids_file.write_text("\n".join(acts.ids) + "\n", encoding="utf-8")
    sidecar_path.write_text(
        _dump(
            {
                "n": acts.n,
                "m": acts.m,
                "layer_tag": acts.layer_tag,
                "data_file": data_file.name,
                "ids_file": ids_file.name,
            }
        ),
        encoding="utf-8",
    )


# ---------------------------------------------------------------- scores


def scores_to_csv(scores: FamiliarityScores) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "score"])
    for sid, score in scores.entries:
        writer.writerow([sid, repr(float(score))])
    return out.getvalue()


def scores_from_csv(text: str) -> FamiliarityScores:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header[:2]] != ["id", "score"]:
        raise ModelError("bad-header", "scores header must be: id, score")
    entries = []
    for row in reader:
        if not row:
            continue
        entries.append((row[0].strip(), float(row[1])))
    return FamiliarityScores(entries=tuple(entries))


# ---------------------------------------------------------------- familiarity model


def familiarity_model_to_document(model: FamiliarityModel) -> dict:
    gmm = model.gmm
    return {
        "n": model.n,
        "m": model.m,
        "d": model.d,
        "layer_tag": model.layer_tag,
        "fitted_at": model.fitted_at,
        "pca": {
            "mean": model.pca.mean.tolist(),
            "components": model.pca.components.tolist(),
            "explained_variance": model.pca.explained_variance.tolist(),
            "d": model.pca.d,
        },
        "gmm": {
            "config": {
                "K_max": gmm.config.K_max,
                "weight_concentration_prior": gmm.config.weight_concentration_prior,
                "convergence_tol": gmm.config.convergence_tol,
                "max_iter": gmm.config.max_iter,
                "regularization_floor": gmm.config.regularization_floor,
                "seed": gmm.config.seed,
            },
            "d": gmm.d,
            "alpha": gmm.alpha.tolist(),
            "beta": gmm.beta.tolist(),
            "m": gmm.m.tolist(),
            "nu": gmm.nu.tolist(),
            "scale_inv": gmm.scale_inv.tolist(),
            "weights": gmm.weights.tolist(),
            "means": gmm.means.tolist(),
            "covariances": gmm.covariances.tolist(),
            "elbo_trace": gmm.elbo_trace,
            "converged": gmm.converged,
            "seed": gmm.seed,
        },
    }


def familiarity_model_from_document(doc: dict) -> FamiliarityModel:
    try:
        p = doc["pca"]
        pca = PcaModel(
            mean=np.array(p["mean"], dtype=np.float64),
            components=np.array(p["components"], dtype=np.float64),
            explained_variance=np.array(p["explained_variance"], dtype=np.float64),
            d=int(p["d"]),
        )
        g = doc["gmm"]
        config = VbGmmConfig(**g["config"])
        gmm = VbGmmModel(
            config=config,
            d=int(g["d"]),
            alpha=np.array(g["alpha"], dtype=np.float64),
            beta=np.array(g["beta"], dtype=np.float64),
            m=np.array(g["m"], dtype=np.float64),
            nu=np.array(g["nu"], dtype=np.float64),
            scale_inv=np.array(g["scale_inv"], dtype=np.float64),
            weights=np.array(g["weights"], dtype=np.float64),
            means=np.array(g["means"], dtype=np.float64),
            covariances=np.array(g["covariances"], dtype=np.float64),
            elbo_trace=list(g["elbo_trace"]),
            converged=bool(g["converged"]),
            seed=int(g["seed"]),
        )
        return FamiliarityModel(
            pca=pca,
            gmm=gmm,
            n=int(doc["n"]),
            m=int(doc["m"]),
            d=int(doc["d"]),
            layer_tag=doc.get("layer_tag", ""),
            fitted_at=doc.get("fitted_at", ""),
        )
    except (KeyError, TypeError) as exc:
        raise ModelError("bad-model-document", f"malformed model document: {exc}") from exc


def save_familiarity_model(model: FamiliarityModel, path: str | Path) -> None:
    Path(path).write_text(_dump(familiarity_model_to_document(model)), encoding="utf-8")


def load_familiarity_model(path: str | Path) -> FamiliarityModel:
    return familiarity_model_from_document(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------- resample


def resample_plan_to_document(plan: ResamplePlan) -> dict:
    return {
        "remove_ids": list(plan.remove_ids),
        "add_ids": list(plan.add_ids),
        "pairing": [list(p) for p in plan.pairing],
        "strategy": {
            "kind": plan.strategy.kind,
            "k": plan.strategy.k,
            "i": plan.strategy.i,
            "seed": plan.strategy.seed,
        },
    }


def resample_plan_from_document(doc: dict) -> ResamplePlan:
    try:
        return ResamplePlan(
            remove_ids=tuple(doc["remove_ids"]),
            add_ids=tuple(doc["add_ids"]),
            pairing=tuple((e, p, float(c)) for e, p, c in doc["pairing"]),
            strategy=SamplingStrategy(**doc["strategy"]),
        )
    except (KeyError, TypeError) as exc:
        raise DataDesignError("bad-plan-document", f"malformed resample plan: {exc}") from exc


def save_resample_plan(plan: ResamplePlan, path: str | Path) -> None:
    Path(path).write_text(_dump(resample_plan_to_document(plan)), encoding="utf-8")


def load_resample_plan(path: str | Path) -> ResamplePlan:
    return resample_plan_from_document(json.loads(Path(path).read_text(encoding="utf-8")))


def review_queue_to_document(queue: ReviewQueue) -> dict:
    return {
        "fraction": queue.fraction,
        "entries": [
            {
                "id": e.id,
                "score": e.score,
                "metadata": [list(kv) for kv in e.metadata],
                "verdict": e.verdict,
            }
            for e in queue.entries
        ],
    }


def review_queue_from_document(doc: dict) -> ReviewQueue:
    return ReviewQueue(
        entries=tuple(
            ReviewEntry(
                id=e["id"],
                score=float(e["score"]),
                metadata=tuple(tuple(kv) for kv in e["metadata"]),
                verdict=e.get("verdict", "undecided"),
            )
            for e in doc["entries"]
        ),
        fraction=float(doc["fraction"]),
    )


def dataset_to_document(dataset) -> dict:
    return {"version": dataset.version, "ids": list(dataset.ids)}


def dataset_from_document(doc: dict):
    from .resample import DatasetVersion

    try:
        return DatasetVersion(version=int(doc["version"]), ids=tuple(doc["ids"]))
    except (KeyError, TypeError) as exc:
        raise DataDesignError("bad-dataset-document", f"malformed dataset document: {exc}") from exc


# ---------------------------------------------------------------- reference model


def refmodel_to_document(model, label_names: list[str] | None = None) -> dict:
    return {
        "w1": model.w1.tolist(),
        "b1": model.b1.tolist(),
        "w2": model.w2.tolist(),
        "b2": model.b2.tolist(),
        "config": {
            "hidden": model.config.hidden,
            "learning_rate": model.config.learning_rate,
            "batch_size": model.config.batch_size,
            "max_epochs": model.config.max_epochs,
            "patience": model.config.patience,
            "seed": model.config.seed,
            "validation_fraction": model.config.validation_fraction,
        },
        "history": model.history,
        "label_names": label_names,
    }


def refmodel_from_document(doc: dict):
    from .refmodel import RefModel, TrainConfig

    try:
        return RefModel(
            w1=np.array(doc["w1"], dtype=np.float64),
            b1=np.array(doc["b1"], dtype=np.float64),
            w2=np.array(doc["w2"], dtype=np.float64),
            b2=np.array(doc["b2"], dtype=np.float64),
            config=TrainConfig(**doc["config"]),
            history=list(doc["history"]),
        )
    except (KeyError, TypeError) as exc:
        raise ModelError("bad-model-document", f"malformed model document: {exc}") from exc


def labels_from_csv(text: str) -> dict[str, str]:
    """Parse the label format: header `id, label`."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header[:2]] != ["id", "label"]:
        raise ModelError("bad-header", "labels header must be: id, label")
    return {row[0].strip(): row[1].strip() for row in reader if row}


# ---------------------------------------------------------------- matrices


def matrix_to_csv(matrix: AccuracyMatrix) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["group"] + list(matrix.model_labels))
    for g, row in zip(matrix.groups, matrix.values):
        writer.writerow([g] + ["" if v is None else repr(float(v)) for v in row])
    return out.getvalue()


def matrix_from_csv(text: str) -> AccuracyMatrix:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or header[0] != "group":
        raise ModelError("bad-header", "matrix header must start with: group")
    labels = tuple(header[1:])
    groups, rows = [], []
    for row in reader:
        if not row:
            continue
        groups.append(row[0])
        rows.append(tuple(None if v == "" else float(v) for v in row[1:]))
    return AccuracyMatrix(groups=tuple(groups), model_labels=labels, values=tuple(rows))
