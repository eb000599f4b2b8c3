"""Desk-scale reference classifier and the leave-one-group-out protocol.

A one-hidden-layer MLP (ReLU, softmax, mini-batch gradient descent with
early stopping) stands in for a production network so the whole loop —
train, extract penultimate activations, score familiarity, resample,
retrain — runs end to end with no external ML framework. The architecture
is deliberately minimal; only the activation contract matters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError
from .familiarity import ActivationMatrix
from .monitor import SampleRecord, tv_distance

SKEW_TV_LIMIT = 0.05
SKEW_MAX_ATTEMPTS = 20


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 32
    learning_rate: float = 0.05
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 4
    seed: int = 0
    validation_fraction: float = 0.1
    repeats: int = 1  # independent restarts; best-accuracy weights kept


@dataclass
class RefModel:
    w1: np.ndarray  # (F, H)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H, C)
    b2: np.ndarray  # (C,)
    config: TrainConfig
    history: list[dict] = field(default_factory=list)  # per-epoch loss/accuracy

    @property
    def input_width(self) -> int:
        return self.w1.shape[0]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[1]


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward(w1, b1, w2, b2, x):
    hidden = np.maximum(0.0, x @ w1 + b1)
    return hidden, _softmax(hidden @ w2 + b2)


def loss_and_gradients(w1, b1, w2, b2, x, y):
    """Mean cross-entropy and its analytic gradients.

    Kept as a standalone function so the finite-difference check can probe it
    parameter by parameter.
    """
    n = x.shape[0]
    hidden, probs = _forward(w1, b1, w2, b2, x)
    loss = -np.mean(np.log(probs[np.arange(n), y] + 1e-300))
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    gw2 = hidden.T @ dlogits
    gb2 = dlogits.sum(axis=0)
    dhidden = (dlogits @ w2.T) * (hidden > 0)
    gw1 = x.T @ dhidden
    gb1 = dhidden.sum(axis=0)
    return loss, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


def train(features: np.ndarray, labels: np.ndarray, config: TrainConfig | None = None) -> RefModel:
    """Mini-batch gradient descent with early stopping on validation loss.

    Stops after `patience` consecutive epochs without validation improvement
    and restores the best parameters. With `repeats` > 1 the whole procedure
    restarts from fresh seeds and the weights with the best training accuracy
    win. Deterministic per seed.
    """
    config = config or TrainConfig()
    if config.repeats < 1:
        raise ModelError("bad-config", "repeats must be >= 1")
    if config.repeats > 1:
        from dataclasses import replace as _replace

        candidates = [
            _train_once(features, labels, _replace(config, seed=config.seed + j, repeats=1))
            for j in range(config.repeats)
        ]
        y = np.asarray(labels, dtype=np.int64)
        return max(candidates, key=lambda m: accuracy(m, features, y))
    return _train_once(features, labels, config)


def _train_once(features: np.ndarray, labels: np.ndarray, config: TrainConfig) -> RefModel:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ModelError("bad-shape", f"features {x.shape} vs labels {y.shape}")
    if not np.all(np.isfinite(x)):
        raise ModelError("non-finite", "features contain NaN or Inf")
    if config.max_epochs < 1:
        raise ModelError("bad-config", "max_epochs must be >= 1")
    classes = np.unique(y)
    if classes.size < 2:
        raise ModelError("single-class", "training needs at least 2 classes")
    c = int(classes.max()) + 1
    n, f = x.shape
    if n < c:
        raise ModelError("too-few-rows", f"need at least {c} rows, got {n}")
    h = config.hidden

    rng = np.random.default_rng(config.seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / f), size=(f, h))
    b1 = np.zeros(h)
    w2 = rng.normal(0.0, np.sqrt(2.0 / h), size=(h, c))
    b2 = np.zeros(c)

    order = rng.permutation(n)
    n_val = max(1, round(config.validation_fraction * n)) if n > 2 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    if train_idx.size == 0:
        train_idx, val_idx = order, order
    xv, yv = x[val_idx], y[val_idx]
    xt, yt = x[train_idx], y[train_idx]
    if val_idx.size == 0:
        xv, yv = xt, yt

    best = (np.inf, w1.copy(), b1.copy(), w2.copy(), b2.copy())
    stale = 0
    history = []
    nt = xt.shape[0]
    for _ in range(config.max_epochs):
        perm = rng.permutation(nt)
        for start in range(0, nt, config.batch_size):
            idx = perm[start : start + config.batch_size]
            _, grads = loss_and_gradients(w1, b1, w2, b2, xt[idx], yt[idx])
            w1 -= config.learning_rate * grads["w1"]
            b1 -= config.learning_rate * grads["b1"]
            w2 -= config.learning_rate * grads["w2"]
            b2 -= config.learning_rate * grads["b2"]
        if not all(np.all(np.isfinite(p)) for p in (w1, b1, w2, b2)):
            raise ModelError("diverged", "parameters became non-finite; lower the learning rate")
        train_loss, _ = loss_and_gradients(w1, b1, w2, b2, xt, yt)
        val_loss, _ = loss_and_gradients(w1, b1, w2, b2, xv, yv)
        _, probs = _forward(w1, b1, w2, b2, xt)
        acc = float(np.mean(probs.argmax(axis=1) == yt))
        history.append({"train_loss": float(train_loss), "val_loss": float(val_loss), "accuracy": acc})
        if val_loss < best[0]:
            best = (val_loss, w1.copy(), b1.copy(), w2.copy(), b2.copy())
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    _, w1, b1, w2, b2 = best
    return RefModel(w1=w1, b1=b1, w2=w2, b2=b2, config=config, history=history)


def predict(model: RefModel, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.shape[1] != model.input_width:
        raise ModelError("dimension-mismatch", f"features have {x.shape[1]} columns, model expects {model.input_width}")
    _, probs = _forward(model.w1, model.b1, model.w2, model.b2, x)
    return probs.argmax(axis=1)


def accuracy(model: RefModel, features: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(predict(model, features) == np.asarray(labels)))


def penultimate(model: RefModel, features: np.ndarray, ids: list[str] | None = None) -> ActivationMatrix:
    """Hidden-layer post-ReLU activations: the final feature representation
    before the prediction softmax."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape[1] != model.input_width:
        raise ModelError("dimension-mismatch", f"features have {x.shape[1]} columns, model expects {model.input_width}")
    hidden = np.maximum(0.0, x @ model.w1 + model.b1)
    if ids is None:
        ids = [str(i) for i in range(x.shape[0])]
    return ActivationMatrix(ids=tuple(ids), data=hidden, layer_tag="penultimate")


@dataclass(frozen=True)
class DatasetSplit:
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    category: str
    held_out: str | None  # None = the "diverse" counterpart
    per_group_counts: tuple[tuple[str, int], ...]


def _marginal(records: list[SampleRecord], dim: str, categories: list[str]) -> list[float] | None:
    counts = [0] * len(categories)
    index = {c: i for i, c in enumerate(categories)}
    for r in records:
        v = r.values.get(dim, "")
        if v in index:
            counts[index[v]] += 1
    total = sum(counts)
    if total == 0:
        return None
    return [c / total for c in counts]


def make_loo_splits(
    records: list[SampleRecord],
    category: str,
    test_fraction: float = 0.2,
    seed: int = 0,
) -> list[DatasetSplit]:
    """Leave-one-group-out splits at fixed train cardinality.

    Sessions are never split across train and test: records sharing a session
    tag move as a unit. Every group is downsampled to the smallest group's
    size before assembling the leave-out variants, so all splits (including
    the diverse counterpart) train on the same number of samples. Skewed
    draws (total-variation vs the pool above SKEW_TV_LIMIT on the group
    marginal) are re-sampled up to SKEW_MAX_ATTEMPTS times.
    """
    if not (0 < test_fraction < 1):
        raise ModelError("bad-config", f"test_fraction must be in (0,1), got {test_fraction}")
    with_value = [r for r in records if r.values.get(category, "") != ""]
    if not with_value:
        raise ModelError("unknown-dimension", f"no record carries a value for {category!r}")
    groups: dict[str, list[SampleRecord]] = {}
    for r in with_value:
        groups.setdefault(r.values[category], []).append(r)
    if len(groups) < 2:
        raise ModelError("too-few-groups", f"category {category!r} needs at least 2 groups")
    for g, rs in groups.items():
        if len(rs) < 2:
            raise ModelError("too-few-samples", f"group {g!r} has {len(rs)} sample(s), need at least 2")

    rng = np.random.default_rng(seed)
    units: dict[str, list[SampleRecord]] = {}
    for r in with_value:
        units.setdefault(r.session or f"__solo__{r.id}", []).append(r)
    unit_keys = sorted(units)
    categories = sorted(groups)
    full_marginal = _marginal(with_value, category, categories)

    # train/test split by session unit, re-drawn while the train marginal is skewed
    n_test_target = round(test_fraction * len(with_value))
    train_recs: list[SampleRecord] = []
    test_recs: list[SampleRecord] = []
    for _ in range(SKEW_MAX_ATTEMPTS):
        shuffled = list(unit_keys)
        rng.shuffle(shuffled)
        test_recs, train_recs, picked = [], [], 0
        for key in shuffled:
            if picked < n_test_target:
                test_recs.extend(units[key])
                picked += len(units[key])
            else:
                train_recs.extend(units[key])
        tm = _marginal(train_recs, category, categories)
        if tm is not None and tv_distance(tm, full_marginal) < SKEW_TV_LIMIT:
            break

    train_groups: dict[str, list[str]] = {}
    for r in train_recs:
        train_groups.setdefault(r.values[category], []).append(r.id)
    if len(train_groups) < 2:
        raise ModelError("too-few-groups", "train split lost all but one group; adjust test_fraction")
    n_min = min(len(ids) for ids in train_groups.values())
    downsampled = {
        g: sorted(rng.choice(sorted(ids), size=n_min, replace=False).tolist())
        for g, ids in sorted(train_groups.items())
    }
    test_ids = tuple(sorted(r.id for r in test_recs))
    group_names = sorted(downsampled)
    train_size = (len(group_names) - 1) * n_min
    counts = tuple((g, n_min) for g in group_names)

    splits = []
    for g in group_names:
        train_ids = tuple(sorted(i for other, ids in downsampled.items() if other != g for i in ids))
        splits.append(DatasetSplit(train_ids, test_ids, category, g, counts))

    # diverse counterpart: same cardinality drawn across all groups, skew-checked
    pool = sorted(i for ids in downsampled.values() for i in ids)
    by_id = {r.id: r for r in with_value}
    pool_marginal = _marginal([by_id[i] for i in pool], category, categories)
    diverse_ids: tuple[str, ...] = ()
    for _ in range(SKEW_MAX_ATTEMPTS):
        draw = sorted(rng.choice(pool, size=train_size, replace=False).tolist())
        dm = _marginal([by_id[i] for i in draw], category, categories)
        diverse_ids = tuple(draw)
        if dm is not None and tv_distance(dm, pool_marginal) < SKEW_TV_LIMIT:
            break
    splits.append(DatasetSplit(diverse_ids, test_ids, category, None, counts))
    return splits


@dataclass(frozen=True)
class AccuracyMatrix:
    groups: tuple[str, ...]
    model_labels: tuple[str, ...]
    values: tuple[tuple[float | None, ...], ...]  # rows = groups, cols = models

    def cell(self, group: str, model_label: str) -> float | None:
        return self.values[self.groups.index(group)][self.model_labels.index(model_label)]


def group_accuracy_matrix(
    models: list[tuple[str, RefModel]],
    features: np.ndarray,
    labels: np.ndarray,
    records: list[SampleRecord],
    categories: str | list[str],
) -> AccuracyMatrix:
    """Per-group accuracy of each model on a shared test set.

    `categories` may name several dimensions, in which case rows are
    intersectional cells (joined with "|"). Empty group subsets are flagged
    as None, never reported as 0.
    """
    if isinstance(categories, str):
        categories = [categories]
    if len(records) != len(labels):
        raise ModelError("bad-shape", "records and labels must align")
    keys = []
    for r in records:
        keys.append("|".join(r.values.get(c, "") for c in categories))
    group_names = tuple(sorted(set(keys)))
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    rows = []
    key_arr = np.array(keys)
    preds = {label: predict(model, x) for label, model in models}
    for g in group_names:
        mask = key_arr == g
        row = []
        for label, _ in models:
            if not mask.any():
                row.append(None)
            else:
                row.append(float(np.mean(preds[label][mask] == y[mask])))
        rows.append(tuple(row))
    return AccuracyMatrix(groups=group_names, model_labels=tuple(l for l, _ in models), values=tuple(rows))


def accuracy_delta(before: AccuracyMatrix, after: AccuracyMatrix) -> AccuracyMatrix:
    """after - before per cell; empty (None) cells propagate."""
    if before.groups != after.groups or before.model_labels != after.model_labels:
        raise ModelError("axis-mismatch", "matrices cover different groups or models")
    rows = []
    for rb, ra in zip(before.values, after.values):
        rows.append(tuple(None if (b is None or a is None) else a - b for b, a in zip(rb, ra)))
    return AccuracyMatrix(groups=before.groups, model_labels=before.model_labels, values=tuple(rows))
