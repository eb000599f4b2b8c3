"""Command-line front door.

Every workflow — planning, ingestion, auditing, familiarity scoring,
resampling, reference-model experiments — is scriptable from here. Outputs
print as aligned human-readable text; `--out` additionally writes the
structured document. Exit codes: 0 success, 1 user error, 2 internal error;
every error path prints a single machine-parseable `error: <code>: <text>`
line to standard error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import formats
from .errors import DataDesignError, PlanError, RecordError, ResampleError, StoreError
from .familiarity import fit_familiarity, score_all, tail
from .formats import _dump
from .monitor import (
    DivergenceThresholds,
    check_records,
    divergence,
    gap_report,
    snapshot,
)
from .plan import (
    DEFAULT_QUESTIONNAIRE,
    DEFAULT_TAXONOMY,
    create_plan,
    record_reflexive,
    replace_dimensions,
    validate_plan,
)
from .refmodel import (
    TrainConfig,
    accuracy,
    accuracy_delta,
    group_accuracy_matrix,
    make_loo_splits,
    penultimate,
    train,
)
from .resample import (
    DatasetVersion,
    SamplingStrategy,
    apply_plan,
    build_plan,
    review_queue,
)
from .store import append_event, init_project, load as load_store, open_project
from .vbgmm import VbGmmConfig

SWEEP_FRACTIONS = (0.005, 0.001, 0.0005, 0.0001)
SWEEP_STRATEGIES = ("topk_swap", "window_most", "window_both")


@click.group()
@click.option(
    "--project",
    envvar="DATADESIGN_PROJECT",
    type=click.Path(path_type=Path),
    default=Path("."),
    help="Project directory (env: DATADESIGN_PROJECT).",
)
@click.option("--seed", type=int, default=None, help="Default seed for seeded operations.")
@click.option(
    "--config",
    type=click.Path(exists=True, path_type=Path),
    default=None,
    help="JSON file of default option values.",
)
@click.pass_context
def cli(ctx, project, seed, config):
    defaults = {}
    if config is not None:
        defaults = json.loads(config.read_text(encoding="utf-8"))
        if not isinstance(defaults, dict):
            raise PlanError("bad-config", "config file must hold a JSON object")
    ctx.obj = {"project": project, "seed": seed, "defaults": defaults}


def _default(ctx, key, flag_value, fallback):
    if flag_value is not None:
        return flag_value
    if key == "seed" and ctx.obj.get("seed") is not None:
        return ctx.obj["seed"]
    if key in ctx.obj["defaults"]:
        return ctx.obj["defaults"][key]
    return fallback


def _store(ctx):
    return open_project(ctx.obj["project"])


def _state(ctx):
    state, warnings = load_store(_store(ctx))
    for w in warnings:
        click.echo(f"warning: {w}", err=True)
    return state


def _current_plan(ctx):
    state = _state(ctx)
    if state.plan is None:
        raise PlanError("no-plan", "project has no plan; run `plan init` first")
    return formats.plan_from_document(state.plan), state


def _stored_records(state):
    return [formats.record_from_document(d) for _, d in sorted(state.records.items())]


def _write_out(doc, out):
    if out is not None:
        Path(out).write_text(_dump(doc), encoding="utf-8")


def _save_plan_event(ctx, plan, etype="plan_saved"):
    store = _store(ctx)
    doc = formats.plan_to_document(plan)
    append_event(store, etype, {"plan": doc})
    (store.root / "plan" / "plan.json").write_text(_dump(doc), encoding="utf-8")


# ---------------------------------------------------------------- plan


@cli.group("plan")
def plan_group():
    """Create, edit, validate, and annotate the dataset plan."""


@plan_group.command("init")
@click.option("--name", required=True)
@click.option("--dims", "dims_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.pass_context
def plan_init(ctx, name, dims_file):
    """Create plan v1 from a dimension-draft file (raw weights normalized)."""
    root = ctx.obj["project"]
    try:
        store = open_project(root)
    except StoreError:
        store = init_project(root)
    state, _ = load_store(store)
    if state.plan is not None:
        raise PlanError("plan-exists", "project already has a plan; use `plan edit`")
    dims = formats.load_dimension_drafts(dims_file)
    plan = create_plan(name, dims)
    _save_plan_event(ctx, plan)
    click.echo(f"plan {plan.name!r} v{plan.version}: {len(plan.dimensions)} dimension(s)")


@plan_group.command("edit")
@click.option("--dims", "dims_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.pass_context
def plan_edit(ctx, dims_file):
    """Replace the plan's dimensions (version bump)."""
    plan, _ = _current_plan(ctx)
    plan = replace_dimensions(plan, formats.load_dimension_drafts(dims_file))
    _save_plan_event(ctx, plan)
    click.echo(f"plan {plan.name!r} now v{plan.version}")


@plan_group.command("validate")
@click.option("--file", "plan_file", type=click.Path(exists=True, path_type=Path), default=None)
@click.pass_context
def plan_validate(ctx, plan_file):
    """Check plan invariants; exit 1 when any error-level finding exists."""
    if plan_file is not None:
        plan = formats.load_plan(plan_file, strict=False)
    else:
        plan, _ = _current_plan(ctx)
    report = validate_plan(plan)
    for f in report.findings:
        click.echo(f"{f.dimension or '-'}: {f.reason}")
    if report.ok:
        click.echo("plan valid")
    else:
        raise PlanError("invalid-plan", f"{len(report.findings)} finding(s)")


@plan_group.command("reflect")
@click.option("--answers", "answers_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--taxonomy", "taxonomy_file", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--questionnaire", "questionnaire_file", type=click.Path(exists=True, path_type=Path), default=None)
@click.pass_context
def plan_reflect(ctx, answers_file, taxonomy_file, questionnaire_file):
    """Record questionnaire answers and the missing-groups notice."""
    plan, _ = _current_plan(ctx)
    doc = json.loads(Path(answers_file).read_text(encoding="utf-8"))
    responses = doc.get("answers", {})
    declared = doc.get("team_declared", {})
    prompts = (
        formats.load_questionnaire(questionnaire_file)
        if questionnaire_file is not None
        else DEFAULT_QUESTIONNAIRE
    )
    by_id = dict(prompts)
    answers = [(pid, by_id.get(pid, pid), text) for pid, text in sorted(responses.items())]
    taxonomy = (
        formats.load_taxonomy(taxonomy_file) if taxonomy_file is not None else DEFAULT_TAXONOMY
    )
    plan = record_reflexive(plan, answers, declared, taxonomy)
    _save_plan_event(ctx, plan, etype="reflexive_recorded")
    click.echo(f"reflexive record saved; plan now v{plan.version}")
    for dim, missing in plan.reflexive.missing_notice:
        click.echo(f"missing {dim}: {', '.join(missing)}")


# ---------------------------------------------------------------- ingest


@cli.command("ingest")
@click.option("--records", "records_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--atomic", is_flag=True, help="Reject the whole batch if any record is invalid.")
@click.pass_context
def ingest(ctx, records_file, atomic):
    """Validate a records file against the plan and append the valid rows."""
    plan, state = _current_plan(ctx)
    records = formats.load_records(records_file)
    accepted, summary = check_records(plan, set(state.records), records, atomic=atomic)
    if accepted:
        append_event(
            _store(ctx),
            "records_ingested",
            {"records": [formats.record_to_document(r) for r in accepted]},
        )
    click.echo(f"accepted {summary.accepted} rejected {summary.rejected}")
    for rid, why in summary.reasons:
        click.echo(f"rejected {rid}: {why}", err=True)


# ---------------------------------------------------------------- audit


@cli.group("audit")
def audit_group():
    """Expected-vs-observed monitoring reports."""


@audit_group.command("snapshot")
@click.option("--wave", type=int, default=None)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.pass_context
def audit_snapshot(ctx, wave, out):
    """Observed category counts per dimension."""
    plan, state = _current_plan(ctx)
    snap = snapshot(plan, _stored_records(state), wave_filter=wave)
    _write_out(formats.snapshot_to_document(snap), out)
    click.echo(f"records: {snap.total}" + (f" (wave {wave})" if wave is not None else ""))
    for dc in snap.per_dimension:
        dim = next(d for d in plan.dimensions if d.name == dc.dimension)
        props = dc.proportions
        for i, cat in enumerate(dim.categories):
            obs = "-" if props is None else f"{props[i]:.4f}"
            click.echo(
                f"{dc.dimension:<16} {cat:<16} {dc.counts[i]:>6} observed {obs:>8}"
                f" expected {dim.expected[i]:.4f}"
            )
        if dc.missing:
            click.echo(f"{dc.dimension:<16} {'<missing>':<16} {dc.missing:>6}")


@audit_group.command("divergence")
@click.option("--wave", type=int, default=None)
@click.option("--tv", "tv_threshold", type=float, default=None)
@click.option("--emd-spacings", type=float, default=None)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.pass_context
def audit_divergence(ctx, wave, tv_threshold, emd_spacings, out):
    """Per-dimension divergence between expected and observed distributions."""
    plan, state = _current_plan(ctx)
    thresholds = DivergenceThresholds(
        tv=_default(ctx, "tv", tv_threshold, 0.10),
        emd_spacings=_default(ctx, "emd_spacings", emd_spacings, 1.0),
    )
    snap = snapshot(plan, _stored_records(state), wave_filter=wave)
    report = divergence(plan, snap, thresholds)
    _write_out(formats.divergence_to_document(report), out)
    for e in report.entries:
        flag = "FLAG" if e.flagged else "ok"
        click.echo(f"{e.dimension:<16} {e.metric:<4} {e.value:.4f} threshold {e.threshold:.4f} {flag}")
    if not report.flagged:
        click.echo("no flags")


@audit_group.command("gaps")
@click.option("--dims", required=True, help="Comma-separated dimension names.")
@click.option("--min-count", type=int, default=0)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.pass_context
def audit_gaps(ctx, dims, min_count, out):
    """Undersampled intersection cells, deficit-sorted."""
    plan, state = _current_plan(ctx)
    report = gap_report(plan, _stored_records(state), dims.split(","), min_count=min_count)
    _write_out(formats.gap_report_to_document(report), out)
    for e in report.undersampled:
        cell = ", ".join(f"{d}={c}" for d, c in e.key)
        click.echo(
            f"{cell}: observed {e.observed_count} expected {e.expected_count:.1f} deficit {e.deficit}"
        )
    if not report.undersampled:
        click.echo("no undersampled cells")


# ---------------------------------------------------------------- fam


@cli.group("fam")
def fam_group():
    """Familiarity: fit, score, tail selection, review queue."""


@fam_group.command("fit")
@click.option("--activations", "acts_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--k-max", type=int, default=None)
@click.option("--d", "proj_d", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
def fam_fit(ctx, acts_file, out, k_max, proj_d, seed):
    """Fit the familiarity model (projection + mixture) on an activation file."""
    acts = formats.load_activations(acts_file)
    config = VbGmmConfig(
        K_max=_default(ctx, "k_max", k_max, 32), seed=_default(ctx, "seed", seed, 0)
    )
    model = fit_familiarity(acts, config, d=proj_d)
    formats.save_familiarity_model(model, out)
    click.echo(
        f"fit {acts.n} rows: {model.m} -> {model.d} dims,"
        f" {model.gmm.n_effective} effective component(s)"
    )


@fam_group.command("score")
@click.option("--model", "model_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--activations", "acts_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_context
def fam_score(ctx, model_file, acts_file, out):
    """Score rows under a fitted model; on the fit matrix this is self-familiarity."""
    model = formats.load_familiarity_model(model_file)
    acts = formats.load_activations(acts_file)
    scores = score_all(model, acts)
    Path(out).write_text(formats.scores_to_csv(scores), encoding="utf-8")
    click.echo(f"scored {scores.n} rows")


@fam_group.command("tail")
@click.option("--scores", "scores_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--fraction", type=float, default=0.001, show_default=True)
@click.option("--side", type=click.Choice(["least", "most"]), default="least", show_default=True)
@click.pass_context
def fam_tail(ctx, scores_file, fraction, side):
    """Ids from the requested extreme of the score distribution."""
    scores = formats.scores_from_csv(Path(scores_file).read_text(encoding="utf-8"))
    for sid in tail(scores, fraction, side):
        click.echo(sid)


@fam_group.command("review")
@click.option("--scores", "scores_file", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--fraction", type=float, default=0.001, show_default=True)
@click.option("--records", "records_file", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--queue", "queue_file", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--verdicts", "verdicts_file", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--interactive", is_flag=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.pass_context
def fam_review(ctx, scores_file, fraction, records_file, queue_file, verdicts_file, interactive, out):
    """Build the least-familiar review queue, or apply verdicts to one.

    With --scores, builds a queue. With --queue plus --verdicts (a JSON
    id->verdict object) or --interactive, records verdicts.
    """
    if (scores_file is None) == (queue_file is None):
        raise ResampleError("bad-invocation", "pass exactly one of --scores or --queue")
    if scores_file is not None:
        scores = formats.scores_from_csv(Path(scores_file).read_text(encoding="utf-8"))
        by_id = None
        if records_file is not None:
            by_id = {r.id: r for r in formats.load_records(records_file)}
        queue = review_queue(scores, fraction, by_id)
    else:
        queue = formats.review_queue_from_document(
            json.loads(Path(queue_file).read_text(encoding="utf-8"))
        )
        if verdicts_file is not None:
            verdicts = json.loads(Path(verdicts_file).read_text(encoding="utf-8"))
            for sid, verdict in sorted(verdicts.items()):
                queue = queue.with_verdict(sid, verdict)
        elif interactive:
            for e in queue.entries:
                meta = ", ".join(f"{k}={v}" for k, v in e.metadata)
                verdict = click.prompt(
                    f"{e.id} score {e.score:.4f} [{meta}]",
                    type=click.Choice(["noisy", "rare", "ok", "undecided"]),
                    default=e.verdict,
                )
                queue = queue.with_verdict(e.id, verdict)
        else:
            raise ResampleError("bad-invocation", "--queue needs --verdicts or --interactive")
        if out is None:
            out = queue_file
    if out is not None:
        Path(out).write_text(_dump(formats.review_queue_to_document(queue)), encoding="utf-8")
    for e in queue.entries:
        click.echo(f"{e.id} {e.score:.6f} {e.verdict}")
    noisy = queue.removal_ids()
    if noisy:
        click.echo(f"noisy removals: {' '.join(noisy)}")


# ---------------------------------------------------------------- resample


def _load_dataset(path) -> DatasetVersion:
    return formats.dataset_from_document(json.loads(Path(path).read_text(encoding="utf-8")))


def _resample_inputs(scores_file, pool_file, records_file, dataset_file):
    scores = formats.scores_from_csv(Path(scores_file).read_text(encoding="utf-8"))
    pool = formats.load_records(pool_file)
    records_by_id = {r.id: r for r in formats.load_records(records_file)}
    if dataset_file is not None:
        train = _load_dataset(dataset_file)
    else:
        train = DatasetVersion(version=1, ids=tuple(sid for sid, _ in scores.entries))
    return scores, pool, records_by_id, train


def _parse_weights(weights, pool):
    if weights is not None:
        parsed = json.loads(weights)
        if not isinstance(parsed, dict):
            raise ResampleError("bad-weights", "--weights must be a JSON object")
        return {k: float(v) for k, v in parsed.items()}
    dims = sorted({d for r in pool for d in r.values})
    return {d: 1.0 for d in dims}


@cli.group("resample")
def resample_group():
    """Build, apply, and sweep metadata-matched substitution plans."""


@resample_group.command("build")
@click.option("--scores", "scores_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--pool", "pool_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--records", "records_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--dataset", "dataset_file", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--strategy", type=click.Choice(list(SWEEP_STRATEGIES)), default="topk_swap", show_default=True)
@click.option("--k", type=float, default=0.001, show_default=True)
@click.option("--i", "i_frac", type=float, default=0.0, show_default=True)
@click.option("--weights", default=None, help="JSON object of per-dimension match weights.")
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_context
def resample_build(ctx, scores_file, pool_file, records_file, dataset_file, strategy, k, i_frac, weights, seed, out):
    """Plan removals (most familiar) and matched additions (least-familiar exemplars)."""
    scores, pool, records_by_id, train = _resample_inputs(
        scores_file, pool_file, records_file, dataset_file
    )
    strat = SamplingStrategy(kind=strategy, k=k, i=i_frac, seed=_default(ctx, "seed", seed, 0))
    plan = build_plan(train, scores, pool, strat, _parse_weights(weights, pool), records_by_id)
    Path(out).write_text(_dump(formats.resample_plan_to_document(plan)), encoding="utf-8")
    total = sum(c for _, _, c in plan.pairing)
    click.echo(f"plan: {len(plan.remove_ids)} out, {len(plan.add_ids)} in, match cost {total:g}")


@resample_group.command("apply")
@click.option("--plan", "plan_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--dataset", "dataset_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_context
def resample_apply(ctx, plan_file, dataset_file, out):
    """Produce the next dataset version from a plan; size is preserved."""
    plan = formats.load_resample_plan(plan_file)
    train = _load_dataset(dataset_file)
    new = apply_plan(train, plan)
    Path(out).write_text(_dump(formats.dataset_to_document(new)), encoding="utf-8")
    click.echo(f"dataset v{train.version} -> v{new.version} ({len(new.ids)} ids)")


@resample_group.command("sweep")
@click.option("--scores", "scores_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--pool", "pool_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--records", "records_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--dataset", "dataset_file", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--weights", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", required=True, type=click.Path(path_type=Path))
@click.pass_context
def resample_sweep(ctx, scores_file, pool_file, records_file, dataset_file, weights, seed, out_dir):
    """One plan per (strategy x fraction) cell with stable filenames."""
    scores, pool, records_by_id, train = _resample_inputs(
        scores_file, pool_file, records_file, dataset_file
    )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    wts = _parse_weights(weights, pool)
    the_seed = _default(ctx, "seed", seed, 0)
    written = 0
    for kind in SWEEP_STRATEGIES:
        for k in SWEEP_FRACTIONS:
            i_frac = 0.0 if kind == "topk_swap" else k
            strat = SamplingStrategy(kind=kind, k=k, i=i_frac, seed=the_seed)
            name = f"plan-{kind}-k{k:g}.json"
            try:
                plan = build_plan(train, scores, pool, strat, wts, records_by_id)
            except ResampleError as exc:
                click.echo(f"skip {name}: {exc}", err=True)
                continue
            (out_dir / name).write_text(
                _dump(formats.resample_plan_to_document(plan)), encoding="utf-8"
            )
            click.echo(f"{name}: {len(plan.remove_ids)} swap(s)")
            written += 1
    click.echo(f"wrote {written} plan(s)")


# ---------------------------------------------------------------- model


def _load_features_labels(features_file, labels_file):
    acts = formats.load_activations(features_file)
    label_by_id = formats.labels_from_csv(Path(labels_file).read_text(encoding="utf-8"))
    missing = [i for i in acts.ids if i not in label_by_id]
    if missing:
        raise RecordError("missing-label", f"{len(missing)} feature row(s) lack labels, e.g. {missing[0]!r}")
    names = sorted(set(label_by_id[i] for i in acts.ids))
    index = {name: j for j, name in enumerate(names)}
    import numpy as np

    y = np.array([index[label_by_id[i]] for i in acts.ids])
    return acts, y, names


@cli.group("model")
def model_group():
    """Reference-model training and leave-one-group-out experiments."""


@model_group.command("train")
@click.option("--features", "features_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--labels", "labels_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--activations-out", type=click.Path(path_type=Path), default=None)
@click.option("--hidden", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--max-epochs", type=int, default=None)
@click.option("--patience", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
def model_train(ctx, features_file, labels_file, out, activations_out, hidden, learning_rate, max_epochs, patience, seed):
    """Train the reference classifier; optionally export penultimate activations."""
    acts, y, names = _load_features_labels(features_file, labels_file)
    config = TrainConfig(
        hidden=_default(ctx, "hidden", hidden, 32),
        learning_rate=_default(ctx, "learning_rate", learning_rate, 0.05),
        max_epochs=_default(ctx, "max_epochs", max_epochs, 200),
        patience=_default(ctx, "patience", patience, 4),
        seed=_default(ctx, "seed", seed, 0),
    )
    model = train(acts.data, y, config)
    Path(out).write_text(_dump(formats.refmodel_to_document(model, names)), encoding="utf-8")
    if activations_out is not None:
        pen = penultimate(model, acts.data, ids=list(acts.ids))
        Path(activations_out).write_text(formats.activations_to_csv(pen), encoding="utf-8")
    acc = accuracy(model, acts.data, y)
    click.echo(f"trained {len(y)} rows, {len(names)} classes: accuracy {acc:.4f}, {len(model.history)} epoch(s)")


@model_group.command("loo")
@click.option("--features", "features_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--labels", "labels_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--records", "records_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--category", required=True)
@click.option("--test-fraction", type=float, default=0.2, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.pass_context
def model_loo(ctx, features_file, labels_file, records_file, category, test_fraction, seed, out):
    """Leave-one-group-out protocol: train all variants, report the accuracy matrix."""
    acts, y, _ = _load_features_labels(features_file, labels_file)
    records = formats.load_records(records_file)
    by_id = {r.id: r for r in records}
    unknown = [i for i in acts.ids if i not in by_id]
    if unknown:
        raise RecordError("unknown-id", f"{len(unknown)} feature row(s) lack records")
    the_seed = _default(ctx, "seed", seed, 0)
    splits = make_loo_splits(records, category, test_fraction=test_fraction, seed=the_seed)
    row_of = {sid: j for j, sid in enumerate(acts.ids)}
    models = []
    for split in splits:
        idx = [row_of[i] for i in split.train_ids]
        label = f"loo-{split.held_out}" if split.held_out is not None else "diverse"
        m = train(acts.data[idx], y[idx], TrainConfig(seed=the_seed))
        models.append((label, m))
        click.echo(f"{label}: trained on {len(idx)} rows", err=True)
    test_idx = [row_of[i] for i in splits[0].test_ids]
    matrix = group_accuracy_matrix(
        models,
        acts.data[test_idx],
        y[test_idx],
        [by_id[i] for i in splits[0].test_ids],
        category,
    )
    text = formats.matrix_to_csv(matrix)
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


@model_group.command("matrix")
@click.option("--model", "model_specs", multiple=True, required=True, help="NAME=model.json, repeatable.")
@click.option("--features", "features_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--labels", "labels_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--records", "records_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--dims", required=True, help="Comma-separated dimension names for the rows.")
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.pass_context
def model_matrix(ctx, model_specs, features_file, labels_file, records_file, dims, out):
    """Per-group accuracy of saved models on a labeled feature file."""
    acts, y, _ = _load_features_labels(features_file, labels_file)
    by_id = {r.id: r for r in formats.load_records(records_file)}
    records = []
    for i in acts.ids:
        if i not in by_id:
            raise RecordError("unknown-id", f"no record for feature row {i!r}")
        records.append(by_id[i])
    models = []
    for spec in model_specs:
        if "=" not in spec:
            raise RecordError("bad-model-spec", f"--model expects NAME=file, got {spec!r}")
        name, path = spec.split("=", 1)
        models.append((name, formats.refmodel_from_document(json.loads(Path(path).read_text(encoding="utf-8")))))
    matrix = group_accuracy_matrix(models, acts.data, y, records, dims.split(","))
    text = formats.matrix_to_csv(matrix)
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


@model_group.command("delta")
@click.option("--before", "before_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--after", "after_file", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.pass_context
def model_delta(ctx, before_file, after_file, out):
    """Per-cell accuracy change between two matrix files (after - before)."""
    before = formats.matrix_from_csv(Path(before_file).read_text(encoding="utf-8"))
    after = formats.matrix_from_csv(Path(after_file).read_text(encoding="utf-8"))
    delta = accuracy_delta(before, after)
    text = formats.matrix_to_csv(delta)
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


# ---------------------------------------------------------------- serve / report


@cli.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8639, show_default=True)
@click.option("--token", default=None, help="Require this bearer token on every request.")
@click.option(
    "--with-ui",
    "ui_dir",
    default=None,
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    help="Serve a built dashboard bundle at /ui from this directory.",
)
@click.pass_context
def serve(ctx, host, port, token, ui_dir):
    """Run the local HTTP service for the project."""
    import uvicorn

    from .api import create_app

    _store(ctx)  # fail fast on a missing project
    app = create_app(ctx.obj["project"], token=token, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@cli.command("report")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--wave", type=int, default=None)
@click.pass_context
def report(ctx, out_dir, wave):
    """Static report bundle: overlays, divergence, per-dimension gaps.

    Regenerating over unchanged data is byte-identical.
    """
    plan, state = _current_plan(ctx)
    records = _stored_records(state)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    snap = snapshot(plan, records, wave_filter=wave)
    overlay = {
        "plan_name": plan.name,
        "plan_version": plan.version,
        "total": snap.total,
        "dimensions": [
            {
                "name": d.name,
                "kind": d.kind,
                "categories": list(d.categories),
                "expected": list(d.expected),
                "observed": (
                    None
                    if snap.for_dimension(d.name).proportions is None
                    else list(snap.for_dimension(d.name).proportions)
                ),
                "counts": list(snap.for_dimension(d.name).counts),
                "missing": snap.for_dimension(d.name).missing,
            }
            for d in plan.dimensions
        ],
    }
    (out_dir / "overlay.json").write_text(_dump(overlay), encoding="utf-8")
    if not snap.empty:
        report_doc = formats.divergence_to_document(divergence(plan, snap))
        (out_dir / "divergence.json").write_text(_dump(report_doc), encoding="utf-8")
    gaps = {
        d.name: formats.gap_report_to_document(gap_report(plan, records, [d.name]))
        for d in plan.dimensions
    }
    (out_dir / "gaps.json").write_text(_dump(gaps), encoding="utf-8")
    click.echo(f"report written to {out_dir}")


def main(argv=None):
    """Entry point with the stable exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"error: usage: {exc.format_message()}", err=True)
        if exc.ctx is not None:
            click.echo(exc.ctx.get_usage(), err=True)
        return 1
    except click.ClickException as exc:
        click.echo(f"error: cli: {exc.format_message()}", err=True)
        return 1
    except click.Abort:
        click.echo("error: aborted: interrupted", err=True)
        return 1
    except DataDesignError as exc:
        click.echo(f"error: {exc.code}: {exc.message}", err=True)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: io: {exc}", err=True)
        return 1
    except Exception as exc:  # noqa: BLE001 - contract: internal errors exit 2
        click.echo(f"error: internal: {type(exc).__name__}: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
