"""Event-sourced project persistence.

Everything a project knows is an append-only log of newline-delimited JSON
events under `log/`; snapshots are pure folds over that log, so the full
history stays human-readable and auditable. Large binary payloads live in a
content-addressed `blobs/` directory and are referenced by hash.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from filelock import FileLock

from .errors import StoreError

LOG_FILE = "log/events.jsonl"
BLOB_DIR = "blobs"
SNAPSHOT_DIR = "snapshots"
PLAN_DIR = "plan"
LOCK_FILE = "writer.lock"

EVENT_TYPES = (
    "plan_saved",
    "reflexive_recorded",
    "records_ingested",
    "dataset_created",
    "model_registered",
    "scores_saved",
    "resample_plan_saved",
    "resample_applied",
    "verdict_set",
    "note",
)


@dataclass
class ProjectState:
    """The fold of the event log: current plan + derived collections."""

    plan: dict | None = None
    records: dict[str, dict] = field(default_factory=dict)  # id -> record document
    datasets: dict[int, list[str]] = field(default_factory=dict)  # version -> ids
    models: dict[str, dict] = field(default_factory=dict)  # name -> metadata + blob ref
    scores: dict[str, dict] = field(default_factory=dict)  # name -> metadata + blob ref
    resample_plans: dict[str, dict] = field(default_factory=dict)
    verdicts: dict[str, str] = field(default_factory=dict)  # sample id -> verdict
    last_seq: int = 0

    def to_document(self) -> dict:
        return {
            "plan": self.plan,
            "records": {k: self.records[k] for k in sorted(self.records)},
            "datasets": {str(v): ids for v, ids in sorted(self.datasets.items())},
            "models": {k: self.models[k] for k in sorted(self.models)},
            "scores": {k: self.scores[k] for k in sorted(self.scores)},
            "resample_plans": {k: self.resample_plans[k] for k in sorted(self.resample_plans)},
            "verdicts": {k: self.verdicts[k] for k in sorted(self.verdicts)},
            "last_seq": self.last_seq,
        }


def _apply_event(state: ProjectState, event: dict) -> None:
    etype = event["type"]
    data = event.get("data", {})
    if etype == "plan_saved" or etype == "reflexive_recorded":
        state.plan = data["plan"]
    elif etype == "records_ingested":
        for rec in data["records"]:
            state.records[rec["id"]] = rec
    elif etype == "dataset_created":
        state.datasets[int(data["version"])] = list(data["ids"])
    elif etype == "model_registered":
        state.models[data["name"]] = data
    elif etype == "scores_saved":
        state.scores[data["name"]] = data
    elif etype == "resample_plan_saved":
        state.resample_plans[data["name"]] = data
    elif etype == "resample_applied":
        state.datasets[int(data["new_version"])] = list(data["ids"])
    elif etype == "verdict_set":
        state.verdicts[data["sample_id"]] = data["verdict"]
    elif etype == "note":
        pass
    else:
        raise StoreError("unknown-event", f"unknown event type {etype!r}")
    state.last_seq = event["seq"]


def validate_event(event: dict) -> None:
    if event.get("type") not in EVENT_TYPES:
        raise StoreError("unknown-event", f"unknown event type {event.get('type')!r}")
    if not isinstance(event.get("data"), dict):
        raise StoreError("bad-event", "event data must be an object")


@dataclass
class ProjectStore:
    root: Path

    @property
    def log_path(self) -> Path:
        return self.root / LOG_FILE

    def lock(self) -> FileLock:
        """Single-writer advisory lock; readers never take it."""
        return FileLock(str(self.root / LOCK_FILE))


def init_project(path: str | Path) -> ProjectStore:
    """Create the directory layout with an empty log.

    Fails on an existing non-empty directory: projects are never silently
    overwritten.
    """
    root = Path(path)
    if root.exists() and any(p.name != LOCK_FILE for p in root.iterdir()):
        raise StoreError("path-not-empty", f"{root} already exists and is not empty")
    for sub in ("log", BLOB_DIR, SNAPSHOT_DIR, PLAN_DIR):
        (root / sub).mkdir(parents=True, exist_ok=True)
    (root / LOG_FILE).touch()
    return ProjectStore(root=root)


def open_project(path: str | Path) -> ProjectStore:
    root = Path(path)
    if not (root / LOG_FILE).exists():
        raise StoreError("not-a-project", f"{root} has no event log")
    return ProjectStore(root=root)


def append_event(store: ProjectStore, etype: str, data: dict) -> int:
    """Append one event; durable (flushed and fsynced) before returning."""
    event = {"type": etype, "data": data}
    validate_event(event)
    with store.lock():
        seq = _last_seq(store) + 1
        record = {
            "seq": seq,
            "ts": datetime.now(timezone.utc).isoformat(timespec="microseconds"),
            "type": etype,
            "data": data,
        }
        line = json.dumps(record, sort_keys=True, separators=(",", ":"))
        with open(store.log_path, "a", encoding="utf-8") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())
    return seq


def _last_seq(store: ProjectStore) -> int:
    last = 0
    with open(store.log_path, encoding="utf-8") as f:
        for line in f:
            stripped = line.strip()
            if not stripped:
                continue
            try:
                event = json.loads(stripped)
                if event.get("seq") == last + 1:
                    last += 1
                else:
                    break
            except ValueError:
                break
    return last


def read_events(store: ProjectStore) -> tuple[list[dict], list[str]]:
    """All valid events plus warnings for corrupt lines.

    Reading stops at the first corrupt line (a torn final write leaves the
    log consistent up to the previous event).
    """
    events: list[dict] = []
    warnings: list[str] = []
    with open(store.log_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                event = json.loads(stripped)
                if event["seq"] != len(events) + 1:
                    raise ValueError(f"sequence gap: expected {len(events) + 1}, got {event['seq']}")
                validate_event(event)
            except (ValueError, KeyError) as exc:
                warnings.append(f"line {lineno}: {exc}; stopping at last valid event")
                break
            events.append(event)
    return events, warnings


def replay(store: ProjectStore) -> ProjectState:
    """Fold the event log into the current state; pure and deterministic."""
    events, _ = read_events(store)
    state = ProjectState()
    for event in events:
        _apply_event(state, event)
    return state


def load(store: ProjectStore) -> tuple[ProjectState, list[str]]:
    """Replay plus corruption warnings, for callers that surface them."""
    events, warnings = read_events(store)
    state = ProjectState()
    for event in events:
        _apply_event(state, event)
    return state, warnings


def write_snapshot(store: ProjectStore, state: ProjectState) -> Path:
    """Persist the folded state; byte-identical for identical histories."""
    path = store.root / SNAPSHOT_DIR / f"state-{state.last_seq:08d}.json"
    doc = json.dumps(state.to_document(), sort_keys=True, separators=(",", ":"), allow_nan=False)
    path.write_text(doc + "\n", encoding="utf-8")
    return path


def put_blob(store: ProjectStore, payload: bytes) -> str:
    """Store bytes content-addressed; returns the hash reference."""
    digest = hashlib.sha256(payload).hexdigest()
    path = store.root / BLOB_DIR / digest
    if not path.exists():
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(payload)
        tmp.replace(path)
    return digest


def get_blob(store: ProjectStore, digest: str) -> bytes:
    path = store.root / BLOB_DIR / digest
    if not path.exists():
        raise StoreError("unknown-blob", f"no blob {digest}")
    return path.read_bytes()
