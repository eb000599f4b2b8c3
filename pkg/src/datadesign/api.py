"""Local HTTP service exposing project state and operations.

A thin layer over the store: every read replays the event log (desk scale),
every write goes through append_event and therefore the single-writer lock.
Long-running familiarity fits run as jobs on a bounded worker pool; the
client polls GET /jobs/{id}. Error bodies are {code, message, detail}.
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse

from . import formats
from .errors import DataDesignError, ModelError, PlanError, RecordError, StoreError
from .familiarity import fit_familiarity, score_all, tail
from .monitor import DivergenceThresholds, check_records, divergence, gap_report, snapshot
from .plan import create_plan, make_dimension, replace_dimensions, validate_plan
from .refmodel import accuracy_delta
from .resample import (
    DatasetVersion,
    SamplingStrategy,
    apply_plan,
    build_plan,
    review_queue,
)
from .store import append_event, get_blob, load as load_store, open_project, put_blob
from .vbgmm import VbGmmConfig

CONFLICT_CODES = ("version-conflict", "stale-plan")
NOT_FOUND_CODES = ("no-plan", "unknown-id", "unknown-blob", "unknown-name", "no-dataset")


def _status_for(code: str) -> int:
    if code in CONFLICT_CODES:
        return 409
    if code in NOT_FOUND_CODES:
        return 404
    return 400


class JobPool:
    """Bounded worker pool with polled job status."""

    def __init__(self, workers: int = 2):
        self._executor = ThreadPoolExecutor(max_workers=workers)
        self._jobs: dict[str, dict] = {}
        self._lock = threading.Lock()

    def submit(self, fn, *args) -> str:
        job_id = uuid.uuid4().hex
        with self._lock:
            self._jobs[job_id] = {"status": "queued", "result": None, "error": None}

        def run():
            with self._lock:
                self._jobs[job_id]["status"] = "running"
            try:
                result = fn(*args)
            except DataDesignError as exc:
                with self._lock:
                    self._jobs[job_id].update(status="failed", error=f"{exc.code}: {exc.message}")
            except Exception as exc:  # noqa: BLE001 - job errors are reported, not raised
                with self._lock:
                    self._jobs[job_id].update(status="failed", error=f"internal: {exc}")
            else:
                with self._lock:
                    self._jobs[job_id].update(status="done", result=result)

        self._executor.submit(run)
        return job_id

    def status(self, job_id: str) -> dict:
        with self._lock:
            if job_id not in self._jobs:
                raise StoreError("unknown-id", f"no job {job_id}")
            return {"id": job_id, **self._jobs[job_id]}


def create_app(
    project_dir: str | Path,
    token: str | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    store = open_project(project_dir)
    app = FastAPI(title="datadesign", docs_url=None, redoc_url=None)
    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")
    jobs = JobPool()

    def state():
        st, _ = load_store(store)
        return st

    def current_plan(st=None):
        st = st or state()
        if st.plan is None:
            raise PlanError("no-plan", "project has no plan")
        return formats.plan_from_document(st.plan), st

    def stored_records(st):
        return [formats.record_from_document(d) for _, d in sorted(st.records.items())]

    def latest_scores(st, name=None):
        if not st.scores:
            raise ModelError("unknown-name", "no scores registered")
        if name is None:
            name = sorted(st.scores)[-1]
        if name not in st.scores:
            raise ModelError("unknown-name", f"no scores named {name!r}")
        entry = st.scores[name]
        return formats.scores_from_csv(get_blob(store, entry["blob"]).decode("utf-8")), name

    def latest_dataset(st):
        if not st.datasets:
            raise RecordError("no-dataset", "no dataset version registered")
        version = max(st.datasets)
        return DatasetVersion(version=version, ids=tuple(st.datasets[version]))

    @app.exception_handler(DataDesignError)
    async def _domain_error(request: Request, exc: DataDesignError):
        return JSONResponse(
            status_code=_status_for(exc.code),
            content={"code": exc.code, "message": exc.message, "detail": str(exc)},
        )

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        if token is not None and request.headers.get("authorization") != f"Bearer {token}":
            return JSONResponse(
                status_code=401,
                content={"code": "unauthorized", "message": "missing or wrong token", "detail": ""},
            )
        return await call_next(request)

    # ------------------------------------------------------------ plan

    @app.get("/plan")
    def get_plan():
        plan, _ = current_plan()
        return formats.plan_to_document(plan)

    @app.put("/plan")
    def put_plan(payload: dict = Body(...)):
        st = state()
        expected = payload.get("expected_version")
        if expected is None:
            raise PlanError("missing-version", "body must carry expected_version")
        current_version = 0 if st.plan is None else int(st.plan["version"])
        if int(expected) != current_version:
            raise PlanError(
                "version-conflict",
                f"plan is at v{current_version}, request expected v{expected}",
            )
        dims = [
            make_dimension(
                d["name"],
                d["categories"],
                d.get("weights", d.get("raw_weights")),
                kind=d.get("kind", "categorical"),
                positions=d.get("positions"),
            )
            for d in payload.get("dimensions", [])
        ]
        if st.plan is None:
            plan = create_plan(payload.get("name", "project"), dims)
        else:
            plan = replace_dimensions(formats.plan_from_document(st.plan), dims)
        doc = formats.plan_to_document(plan)
        append_event(store, "plan_saved", {"plan": doc})
        return doc

    @app.get("/plan/validate")
    def get_plan_validate():
        plan, _ = current_plan()
        report = validate_plan(plan)
        return {"ok": report.ok, "findings": [{"dimension": f.dimension, "reason": f.reason} for f in report.findings]}

    # ------------------------------------------------------------ records / audit

    @app.post("/records")
    def post_records(payload: dict = Body(...)):
        plan, st = current_plan()
        records = [formats.record_from_document(d) for d in payload.get("records", [])]
        accepted, summary = check_records(
            plan, set(st.records), records, atomic=bool(payload.get("atomic", False))
        )
        if accepted:
            append_event(
                store,
                "records_ingested",
                {"records": [formats.record_to_document(r) for r in accepted]},
            )
        return {
            "accepted": summary.accepted,
            "rejected": summary.rejected,
            "reasons": [{"id": rid, "reason": why} for rid, why in summary.reasons],
        }

    @app.get("/audit/snapshot")
    def get_snapshot(wave: int | None = None):
        plan, st = current_plan()
        return formats.snapshot_to_document(snapshot(plan, stored_records(st), wave_filter=wave))

    @app.get("/audit/divergence")
    def get_divergence(wave: int | None = None, tv: float = 0.10, emd_spacings: float = 1.0):
        plan, st = current_plan()
        snap = snapshot(plan, stored_records(st), wave_filter=wave)
        report = divergence(plan, snap, DivergenceThresholds(tv=tv, emd_spacings=emd_spacings))
        return formats.divergence_to_document(report)

    @app.get("/audit/gaps")
    def get_gaps(dims: str, min_count: int = 0):
        plan, st = current_plan()
        report = gap_report(plan, stored_records(st), dims.split(","), min_count=min_count)
        return formats.gap_report_to_document(report)

    # ------------------------------------------------------------ familiarity

    @app.post("/blobs/activations")
    def post_activations(payload: dict = Body(...)):
        text = payload.get("csv")
        if not isinstance(text, str):
            raise ModelError("bad-upload", "body must carry csv: the activation matrix text")
        formats.activations_from_csv(text)  # validate before storing
        return {"blob": put_blob(store, text.encode("utf-8"))}

    def _run_fit(name: str, blob: str, k_max: int, seed: int, d: int | None):
        acts = formats.activations_from_csv(get_blob(store, blob).decode("utf-8"))
        model = fit_familiarity(acts, VbGmmConfig(K_max=k_max, seed=seed), d=d)
        model_blob = put_blob(store, formats._dump(formats.familiarity_model_to_document(model)).encode("utf-8"))
        scores = score_all(model, acts)
        scores_blob = put_blob(store, formats.scores_to_csv(scores).encode("utf-8"))
        append_event(
            store,
            "model_registered",
            {"name": name, "kind": "familiarity", "blob": model_blob, "activations": blob},
        )
        append_event(store, "scores_saved", {"name": name, "blob": scores_blob, "model": name})
        return {"name": name, "model_blob": model_blob, "n_effective": model.gmm.n_effective}

    @app.post("/familiarity/fit")
    def post_fit(payload: dict = Body(...)):
        blob = payload.get("blob")
        if not blob:
            raise ModelError("bad-request", "body must carry blob: an activation blob digest")
        get_blob(store, blob)  # 404 before queueing
        name = payload.get("name", "familiarity")
        job_id = jobs.submit(
            _run_fit,
            name,
            blob,
            int(payload.get("k_max", 32)),
            int(payload.get("seed", 0)),
            payload.get("d"),
        )
        return {"job": job_id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        return jobs.status(job_id)

    @app.get("/familiarity/scores")
    def get_scores(name: str | None = None):
        st = state()
        scores, used = latest_scores(st, name)
        return {"name": used, "entries": [{"id": sid, "score": s} for sid, s in scores.entries]}

    @app.get("/familiarity/tail")
    def get_tail(fraction: float = 0.001, side: str = "least", name: str | None = None):
        st = state()
        scores, _ = latest_scores(st, name)
        return {"ids": tail(scores, fraction, side)}

    # ------------------------------------------------------------ review

    @app.get("/review")
    def get_review(fraction: float = 0.001, name: str | None = None):
        st = state()
        scores, _ = latest_scores(st, name)
        try:
            plan, _ = current_plan(st)
            by_id = {r.id: r for r in stored_records(st)}
        except PlanError:
            by_id = {}
        queue = review_queue(scores, fraction, by_id)
        for entry in queue.entries:
            if entry.id in st.verdicts:
                queue = queue.with_verdict(entry.id, st.verdicts[entry.id])
        return formats.review_queue_to_document(queue)

    @app.put("/review/{sample_id}/verdict")
    def put_verdict(sample_id: str, payload: dict = Body(...)):
        st = state()
        scores, _ = latest_scores(st)
        if sample_id not in {sid for sid, _ in scores.entries}:
            raise ModelError("unknown-id", f"{sample_id!r} has no familiarity score")
        verdict = payload.get("verdict")
        if verdict not in ("noisy", "rare", "ok", "undecided"):
            raise RecordError("bad-verdict", f"bad verdict {verdict!r}")
        append_event(store, "verdict_set", {"sample_id": sample_id, "verdict": verdict})
        return {"id": sample_id, "verdict": verdict}

    # ------------------------------------------------------------ resample

    @app.post("/datasets")
    def post_dataset(payload: dict = Body(...)):
        dataset = formats.dataset_from_document(payload)
        append_event(store, "dataset_created", {"version": dataset.version, "ids": list(dataset.ids)})
        return formats.dataset_to_document(dataset)

    @app.post("/resample/build")
    def post_build(payload: dict = Body(...)):
        st = state()
        scores, _ = latest_scores(st, payload.get("scores"))
        train = latest_dataset(st)
        pool = [formats.record_from_document(d) for d in payload.get("pool", [])]
        strategy = SamplingStrategy(
            kind=payload.get("strategy", "topk_swap"),
            k=float(payload.get("k", 0.001)),
            i=float(payload.get("i", 0.0)),
            seed=int(payload.get("seed", 0)),
        )
        weights = payload.get("weights")
        if weights is None:
            weights = {d: 1.0 for r in pool for d in r.values}
        records_by_id = {r.id: r for r in stored_records(st)}
        plan = build_plan(train, scores, pool, strategy, weights, records_by_id)
        name = payload.get("name", f"plan-{strategy.kind}-k{strategy.k:g}")
        doc = formats.resample_plan_to_document(plan)
        pool_docs = [formats.record_to_document(r) for r in pool]
        append_event(
            store,
            "resample_plan_saved",
            {"name": name, "plan": doc, "base_version": train.version, "pool": pool_docs},
        )
        return {"name": name, "base_version": train.version, **doc}

    @app.post("/resample/apply")
    def post_apply(payload: dict = Body(...)):
        st = state()
        name = payload.get("name")
        if name not in st.resample_plans:
            raise RecordError("unknown-name", f"no resample plan named {name!r}")
        plan = formats.resample_plan_from_document(st.resample_plans[name]["plan"])
        train = latest_dataset(st)
        new = apply_plan(train, plan)
        pool_docs = st.resample_plans[name].get("pool", [])
        added = {d["id"]: d for d in pool_docs if d["id"] in set(plan.add_ids)}
        if added:
            append_event(store, "records_ingested", {"records": sorted(added.values(), key=lambda d: d["id"])})
        append_event(store, "resample_applied", {"new_version": new.version, "ids": list(new.ids), "plan": name})
        return formats.dataset_to_document(new)

    # ------------------------------------------------------------ experiments

    @app.post("/experiments/matrix")
    def post_matrix(payload: dict = Body(...)):
        name = payload.get("name")
        text = payload.get("csv")
        if not name or not isinstance(text, str):
            raise ModelError("bad-request", "body must carry name and csv")
        formats.matrix_from_csv(text)  # validate
        blob = put_blob(store, text.encode("utf-8"))
        append_event(store, "model_registered", {"name": name, "kind": "matrix", "blob": blob})
        return {"name": name, "blob": blob}

    def _matrix(st, name):
        entry = st.models.get(name)
        if entry is None or entry.get("kind") != "matrix":
            raise ModelError("unknown-name", f"no accuracy matrix named {name!r}")
        return formats.matrix_from_csv(get_blob(store, entry["blob"]).decode("utf-8"))

    def _matrix_doc(matrix):
        return {
            "groups": list(matrix.groups),
            "models": list(matrix.model_labels),
            "values": [list(row) for row in matrix.values],
        }

    @app.get("/experiments/matrix")
    def get_matrix(name: str):
        return {"name": name, **_matrix_doc(_matrix(state(), name))}

    @app.get("/experiments/delta")
    def get_delta(before: str, after: str):
        st = state()
        delta = accuracy_delta(_matrix(st, before), _matrix(st, after))
        return {"before": before, "after": after, **_matrix_doc(delta)}

    return app
