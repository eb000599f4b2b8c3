"""End-to-end acceptance checks, one per headline behavior.

Each test exercises a full scenario against an independent oracle or a fixed
analytic value and prints a single PASS/FAIL verdict line. Scenario
parameters (cluster placement, seeds, fractions) are fixed so every run is
reproducible.
"""

import functools
import itertools
import json
import time

import numpy as np
import pytest
from scipy.optimize import linprog

import datadesign.resample as resample_mod
from datadesign.cli import main
from datadesign.familiarity import (
    ActivationMatrix,
    default_projection_dim,
    fit_familiarity,
    score_all,
    tail,
)
from datadesign.formats import load_plan
from datadesign.monitor import SampleRecord, emd_1d
from datadesign.pca import fit_pca, project
from datadesign.refmodel import (
    TrainConfig,
    accuracy,
    accuracy_delta,
    group_accuracy_matrix,
    loss_and_gradients,
    make_loo_splits,
    penultimate,
    train,
)
from datadesign.resample import (
    DatasetVersion,
    SamplingStrategy,
    apply_plan,
    build_plan,
    match_candidates,
)
from datadesign.store import (
    append_event,
    init_project,
    load,
    read_events,
    replay,
    write_snapshot,
)
from datadesign.vbgmm import VbGmmConfig, VbGmmModel, fit_vbgmm, log_likelihood, log_likelihood_rows


def criterion(number, label, budget_s):
    """Print one verdict line per acceptance test, including the time budget."""

    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            start = time.time()
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"acceptance {number:02d} {label}: FAIL ({time.time() - start:.1f}s)")
                raise
            elapsed = time.time() - start
            assert elapsed < budget_s, f"runtime {elapsed:.1f}s exceeds {budget_s}s budget"
            print(f"acceptance {number:02d} {label}: PASS ({elapsed:.1f}s)")

        return wrapper

    return decorate


def unit_gaussian_model():
    """Hand-built single-component 1D standard-normal mixture."""
    return VbGmmModel(
        config=VbGmmConfig(K_max=1),
        d=1,
        alpha=np.ones(1),
        beta=np.ones(1),
        m=np.zeros((1, 1)),
        nu=np.full(1, 2.0),
        scale_inv=np.eye(1)[None],
        weights=np.ones(1),
        means=np.zeros((1, 1)),
        covariances=np.ones((1, 1, 1)),
    )


@criterion(1, "mixture log-density", budget_s=5)
def test_log_density_analytic_value_and_normalization():
    # a standard normal at its mean has log-density -0.5*ln(2*pi)
    value = log_likelihood(unit_gaussian_model(), np.array([0.0]))
    assert abs(value - (-0.5 * np.log(2.0 * np.pi))) < 1e-9

    # a fitted 2D mixture density must integrate to 1 over a wide grid
    rng = np.random.default_rng(7)
    points = np.vstack(
        [rng.normal(size=(400, 2)) - (3.0, 0.0), rng.normal(size=(400, 2)) + (3.0, 0.0)]
    )
    model = fit_vbgmm(points, VbGmmConfig(K_max=4, seed=0))
    lo, hi = -3.0 - 8.0, 3.0 + 8.0
    axis = np.linspace(lo, hi, 400)
    h = axis[1] - axis[0]
    gx, gy = np.meshgrid(axis, axis)
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    mass = float(np.exp(log_likelihood_rows(model, grid)).sum() * h * h)
    assert abs(mass - 1.0) < 1e-3


@criterion(2, "mixture recovery + monotone ELBO", budget_s=10)
def test_two_cluster_recovery_and_elbo_trace():
    rng = np.random.default_rng(3)
    points = np.concatenate([rng.normal(-10.0, 1.0, 500), rng.normal(10.0, 1.0, 500)])
    model = fit_vbgmm(points[:, None], VbGmmConfig(K_max=8, seed=0))
    assert model.n_effective == 2
    recovered = sorted(float(mu) for mu in model.means[:, 0])
    assert abs(recovered[0] - (-10.0)) < 0.3
    assert abs(recovered[1] - 10.0) < 0.3
    trace = np.asarray(model.elbo_trace)
    assert len(trace) >= 2
    assert np.all(np.diff(trace) >= -1e-6)


@criterion(3, "unfamiliar-tail outlier capture", budget_s=60)
def test_tail_recovers_injected_outliers_across_seeds():
    n, n_out, m = 10_000, 10, 16
    for seed in range(10):
        rng = np.random.default_rng(seed)
        centers = rng.normal(size=(3, m)) * 6.0
        sizes = (3400, 3300, 3300 - n_out)
        rows = [rng.normal(size=(k, m)) + c for k, c in zip(sizes, centers)]
        # each outlier sits 50 cluster standard deviations away from a center
        directions = rng.normal(size=(n_out, m))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        rows.append(centers[rng.integers(3, size=n_out)] + 50.0 * directions)
        data = np.vstack(rows)
        ids = tuple(f"s{i:05d}" for i in range(n))
        injected = set(ids[-n_out:])

        acts = ActivationMatrix(ids=ids, data=data)
        model = fit_familiarity(acts, VbGmmConfig(K_max=8, seed=seed))
        flagged = set(tail(score_all(model, acts), 0.001, "least"))
        assert len(flagged & injected) >= 9, f"seed {seed}: tail missed outliers"

        # independent oracle: global Mahalanobis distance ranks the same rows
        mean = data.mean(axis=0)
        prec = np.linalg.inv(np.cov(data, rowvar=False))
        centered = data - mean
        mah = np.einsum("ij,jk,ik->i", centered, prec, centered)
        oracle = {ids[i] for i in np.argsort(mah)[-n_out:]}
        assert len(oracle & injected) >= 9, f"seed {seed}: oracle disagrees"


def emd_lp_oracle(p, q, positions):
    """Transport LP: the independent check for emd_1d."""
    n = len(p)
    cost = [abs(positions[i] - positions[j]) for i in range(n) for j in range(n)]
    a_eq = []
    for i in range(n):
        row = [0.0] * (n * n)
        for j in range(n):
            row[i * n + j] = 1.0
        a_eq.append(row)
    for j in range(n):
        col = [0.0] * (n * n)
        for i in range(n):
            col[i * n + j] = 1.0
        a_eq.append(col)
    res = linprog(cost, A_eq=a_eq, b_eq=list(p) + list(q), bounds=(0, None), method="highs")
    assert res.success
    return res.fun


@criterion(4, "1D EMD against transport LP", budget_s=60)
def test_emd_matches_lp_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(2, 7))
        p = rng.random(n) + 1e-9
        q = rng.random(n) + 1e-9
        p, q = p / p.sum(), q / q.sum()
        positions = np.sort(rng.normal(size=n) * 5.0)
        assert emd_1d(p, q, positions) == pytest.approx(
            emd_lp_oracle(p, q, positions), abs=1e-9
        )


@criterion(5, "PCA structure and defaults", budget_s=10)
def test_pca_orthonormality_roundtrip_and_clamped_default():
    rng = np.random.default_rng(5)
    data = rng.normal(size=(200, 30)) @ rng.normal(size=(30, 30))
    model = fit_pca(data, 30)
    gram = model.components @ model.components.T
    assert np.max(np.abs(gram - np.eye(30))) < 1e-8
    assert np.all(np.diff(model.explained_variance) <= 1e-12)
    rebuilt = project(model, data) @ model.components + model.mean
    assert np.max(np.abs(rebuilt - data)) < 1e-6
    # projection dimension defaults to 50, clamped by matrix shape
    assert default_projection_dim(10_000, 128) == 50
    assert default_projection_dim(200, 30) == 30
    assert default_projection_dim(20, 128) == 19


def three_group_dataset(seed, n_per=400):
    """Three metadata groups; group g2's feature-label rule is inverted."""
    rng = np.random.default_rng(seed)
    centers = {"g0": (0.0, 0.0), "g1": (4.0, 0.0), "g2": (0.0, 4.0)}
    rule_axis = {"g0": 0, "g1": 1, "g2": 0}
    feats, labels, records = [], [], []
    i = 0
    for g, c in centers.items():
        x = rng.normal(size=(n_per, 2)) * 0.8 + np.array(c)
        axis = rule_axis[g]
        y = (x[:, axis] > c[axis]).astype(int)
        if g == "g2":
            y = 1 - y
        for j in range(n_per):
            records.append(SampleRecord(id=f"r{i:05d}", values={"g": g}, wave=0))
            feats.append(x[j])
            labels.append(y[j])
            i += 1
    return np.array(feats) / 2.0, np.array(labels), records


@criterion(6, "leave-one-out diagonal dip", budget_s=120)
def test_leave_group_out_model_dips_on_held_out_group():
    dips, g0_offsets, g1_offsets = [], [], []
    for seed in range(10):
        x, y, records = three_group_dataset(seed)
        by_id = {r.id: r for r in records}
        row = {r.id: k for k, r in enumerate(records)}
        splits = make_loo_splits(records, "g", test_fraction=0.2, seed=seed)
        assert len({len(s.train_ids) for s in splits}) == 1
        models = []
        for s in splits:
            idx = [row[i] for i in s.train_ids]
            label = f"loo-{s.held_out}" if s.held_out else "diverse"
            cfg = TrainConfig(hidden=32, learning_rate=0.1, max_epochs=300, seed=seed, repeats=3)
            models.append((label, train(x[idx], y[idx], cfg)))
        test_idx = [row[i] for i in splits[0].test_ids]
        mat = group_accuracy_matrix(
            models, x[test_idx], y[test_idx], [by_id[i] for i in splits[0].test_ids], "g"
        )
        dips.append(mat.cell("g2", "diverse") - mat.cell("g2", "loo-g2"))
        g0_offsets.append(abs(mat.cell("g0", "diverse") - mat.cell("g0", "loo-g2")))
        g1_offsets.append(abs(mat.cell("g1", "diverse") - mat.cell("g1", "loo-g2")))
    assert np.mean(dips) >= 0.2, f"mean dip {np.mean(dips):.3f}"
    assert np.mean(g0_offsets) < 0.05 and np.mean(g1_offsets) < 0.05


def subgroup_dataset(seed, n_train=3000, sub_frac=0.05, m=6):
    """Bulk rule on one axis; a shifted, more diffuse subgroup with its own rule."""
    rng = np.random.default_rng(seed)
    n_sub = int(n_train * sub_frac)
    center = np.zeros(m)
    center[0] = 4.0
    w_sub = rng.normal(size=m)
    w_sub /= np.linalg.norm(w_sub)

    def bulk(n):
        x = rng.normal(size=(n, m))
        return x, (x[:, 0] > 0).astype(int)

    def sub(n):
        x = rng.normal(size=(n, m)) * 2.5 + center
        return x, ((x - center) @ w_sub > 0).astype(int)

    parts = {
        "train": (bulk(n_train - n_sub), sub(n_sub)),
        "test": (bulk(1000), sub(600)),
        "pool": (bulk(150), sub(150)),
    }
    out = {}
    for name, ((xb, yb), (xs, ys)) in parts.items():
        out[name] = (
            np.vstack([xb, xs]),
            np.concatenate([yb, ys]),
            ["bulk"] * len(yb) + ["sub"] * len(ys),
        )
    return out


@criterion(7, "familiarity-guided swap direction", budget_s=180)
def test_swapping_in_unfamiliar_matches_lifts_subgroup_accuracy():
    sub_deltas, overall_deltas = [], []
    for seed in range(10):
        data = subgroup_dataset(seed)
        x, y, g = data["train"]
        xt, yt, gt = data["test"]
        xp, yp, gp = data["pool"]
        ids = [f"t{i:05d}" for i in range(len(y))]
        pool_ids = [f"p{i:05d}" for i in range(len(yp))]
        cfg = TrainConfig(hidden=32, learning_rate=0.1, max_epochs=300, seed=seed, repeats=5)

        before = train(x, y, cfg)
        acts = penultimate(before, x, ids=ids)
        fam = fit_familiarity(acts, VbGmmConfig(K_max=8, seed=seed))
        scores = score_all(fam, acts)

        train_recs = [SampleRecord(id=i, values={"grp": gg}) for i, gg in zip(ids, g)]
        pool_recs = [SampleRecord(id=i, values={"grp": gg}) for i, gg in zip(pool_ids, gp)]
        dataset = DatasetVersion(version=1, ids=tuple(ids))
        plan = build_plan(
            dataset,
            scores,
            pool_recs,
            SamplingStrategy(kind="topk_swap", k=0.001),
            {"grp": 1.0},
            {r.id: r for r in train_recs + pool_recs},
        )
        new_ids = apply_plan(dataset, plan).ids
        lut = {i: (x[k], y[k]) for k, i in enumerate(ids)}
        lut.update({i: (xp[k], yp[k]) for k, i in enumerate(pool_ids)})
        x2 = np.array([lut[i][0] for i in new_ids])
        y2 = np.array([lut[i][1] for i in new_ids])
        after = train(x2, y2, cfg)

        test_recs = [SampleRecord(id=f"e{i}", values={"grp": gg}) for i, gg in enumerate(gt)]
        mat_before = group_accuracy_matrix([("m", before)], xt, yt, test_recs, "grp")
        mat_after = group_accuracy_matrix([("m", after)], xt, yt, test_recs, "grp")
        delta = accuracy_delta(mat_before, mat_after)
        sub_deltas.append(delta.cell("sub", "m"))
        overall_deltas.append(accuracy(after, xt, yt) - accuracy(before, xt, yt))
    assert np.mean(sub_deltas) > 0, f"mean subgroup delta {np.mean(sub_deltas):.4f}"
    assert min(overall_deltas) > -0.02, f"worst overall delta {min(overall_deltas):.4f}"


def rec(prefix, i, rng, dims=("a", "b", "c")):
    values = {d: str(rng.integers(4)) for d in dims}
    return SampleRecord(id=f"{prefix}{i:04d}", values=values)


@criterion(8, "matching optimality", budget_s=120)
def test_match_cost_equals_oracle_and_bounds_greedy():
    rng = np.random.default_rng(17)
    weights = {"a": 1.0, "b": 0.5, "c": 0.25}
    for trial in range(30):
        ne = int(rng.integers(1, 7)) if trial < 15 else int(rng.integers(8, 65))
        np_ = int(rng.integers(ne, 129))
        exemplars = [rec("e", i, rng) for i in range(ne)]
        pool = [rec("p", j, rng) for j in range(np_)]
        pairs = match_candidates(exemplars, pool, weights)
        cost = sum(c for _, _, c in pairs)

        cost_rows = [
            [
                sum(w for d, w in weights.items() if e.values[d] != p.values[d])
                for p in sorted(pool, key=lambda r: r.id)
            ]
            for e in sorted(exemplars, key=lambda r: r.id)
        ]
        if ne <= 6 and np_ <= 8:
            optimum = min(
                sum(cost_rows[i][perm[i]] for i in range(ne))
                for perm in itertools.permutations(range(np_), ne)
            )
        else:
            flat = [c for row in cost_rows for c in row]
            a_ub = []
            for j in range(np_):  # each pool record used at most once
                col = [0.0] * (ne * np_)
                for i in range(ne):
                    col[i * np_ + j] = 1.0
                a_ub.append(col)
            a_eq = []
            for i in range(ne):  # each exemplar matched exactly once
                row = [0.0] * (ne * np_)
                for j in range(np_):
                    row[i * np_ + j] = 1.0
                a_eq.append(row)
            res = linprog(
                flat,
                A_ub=a_ub,
                b_ub=[1.0] * np_,
                A_eq=a_eq,
                b_eq=[1.0] * ne,
                bounds=(0, None),
                method="highs",
            )
            assert res.success
            optimum = res.fun
        assert cost == pytest.approx(optimum, abs=1e-9)

        saved = resample_mod.EXACT_MATCH_LIMIT
        try:
            resample_mod.EXACT_MATCH_LIMIT = 0  # force the greedy fallback path
            greedy_cost = sum(c for _, _, c in match_candidates(exemplars, pool, weights))
        finally:
            resample_mod.EXACT_MATCH_LIMIT = saved
        assert greedy_cost >= optimum - 1e-9


@criterion(9, "monitoring round trip", budget_s=5)
def test_plan_ingest_divergence_flag_and_clear(tmp_path):
    dims = [
        {"name": "hand", "categories": ["L", "R"], "weights": [1, 1]},
        {"name": "size", "categories": ["small", "medium", "large"], "weights": [30, 30, 60]},
    ]
    dims_file = tmp_path / "dims.json"
    dims_file.write_text(json.dumps(dims))
    proj = tmp_path / "proj"
    assert main(["--project", str(proj), "plan", "init", "--name", "study", "--dims", str(dims_file)]) == 0
    plan = load_plan(proj / "plan" / "plan.json")
    size = next(d for d in plan.dimensions if d.name == "size")
    assert size.raw_weights == (30.0, 30.0, 60.0)
    assert size.expected == pytest.approx((0.25, 0.25, 0.5))

    def ingest(name, rows):
        path = tmp_path / name
        path.write_text("\n".join(["id,wave,session,hand,size"] + rows) + "\n")
        assert main(["--project", str(proj), "ingest", "--records", str(path)]) == 0

    sizes = ["small"] * 5 + ["medium"] * 5 + ["large"] * 10
    ingest("wave0.csv", [f"w0r{i},0,,{'R' if i == 0 else 'L'},{sizes[i]}" for i in range(20)])
    out1 = tmp_path / "div1.json"
    main(["--project", str(proj), "audit", "divergence", "--out", str(out1)])
    doc = json.loads(out1.read_text())
    hand = next(e for e in doc["entries"] if e["dimension"] == "hand" and e["metric"] == "tv")
    assert hand["value"] == pytest.approx(0.45)
    assert doc["flagged"] == ["hand"]

    sizes2 = ["small"] * 5 + ["medium"] * 5 + ["large"] * 10
    ingest("wave1.csv", [f"w1r{i},1,,{'L' if i < 2 else 'R'},{sizes2[i]}" for i in range(20)])
    out2 = tmp_path / "div2.json"
    main(["--project", str(proj), "audit", "divergence", "--out", str(out2)])
    assert json.loads(out2.read_text())["flagged"] == []

    # regenerating the report bundle must be byte-for-byte stable
    r1, r2 = tmp_path / "rep1", tmp_path / "rep2"
    assert main(["--project", str(proj), "report", "--out", str(r1)]) == 0
    assert main(["--project", str(proj), "report", "--out", str(r2)]) == 0
    for f in sorted(r1.iterdir()):
        assert f.read_bytes() == (r2 / f.name).read_bytes()


@criterion(10, "analytic gradients vs finite differences", budget_s=60)
def test_gradients_match_central_differences():
    rng = np.random.default_rng(23)
    eps = 1e-5
    for _ in range(50):
        n, m, h, c = (int(rng.integers(2, 9)) for _ in range(4))
        h, c = h + 1, c + 1
        x = rng.normal(size=(n, m))
        y = rng.integers(c, size=n)
        w1 = rng.normal(size=(m, h)) * 0.5
        b1 = rng.normal(size=h) * 0.1
        w2 = rng.normal(size=(h, c)) * 0.5
        b2 = rng.normal(size=c) * 0.1
        _, grads = loss_and_gradients(w1, b1, w2, b2, x, y)
        for name, param in zip(("w1", "b1", "w2", "b2"), (w1, b1, w2, b2)):
            grad = grads[name]
            it = np.nditer(param, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = param[idx]
                param[idx] = orig + eps
                up, _ = loss_and_gradients(w1, b1, w2, b2, x, y)
                param[idx] = orig - eps
                down, _ = loss_and_gradients(w1, b1, w2, b2, x, y)
                param[idx] = orig
                fd = (up - down) / (2 * eps)
                scale = max(1.0, abs(fd), abs(grad[idx]))
                assert abs(grad[idx] - fd) / scale < 1e-4


@criterion(11, "event log replay fidelity", budget_s=30)
def test_thousand_event_replay_and_torn_line(tmp_path):
    store = init_project(tmp_path / "proj")
    rng = np.random.default_rng(29)
    for i in range(1000):
        kind = i % 4
        if kind == 0:
            append_event(
                store,
                "records_ingested",
                {"records": [{"id": f"r{i}", "values": {"k": int(rng.integers(9))}}]},
            )
        elif kind == 1:
            append_event(store, "plan_saved", {"plan": {"version": i}})
        elif kind == 2:
            append_event(store, "verdict_set", {"sample_id": f"r{i - 2}", "verdict": "ok"})
        else:
            append_event(store, "note", {"text": f"wave {i}"})
    first = write_snapshot(store, replay(store)).read_bytes()
    second = write_snapshot(store, replay(store)).read_bytes()
    assert first == second
    state = replay(store)
    assert state.last_seq == 1000

    with open(store.log_path, "a", encoding="utf-8") as f:
        f.write('{"seq":1001,"type":"note","da')  # torn final line
    events, warnings = read_events(store)
    assert len(events) == 1000
    assert warnings
    state_after, _ = load(store)
    assert state_after.last_seq == 1000
    assert write_snapshot(store, state_after).read_bytes() == first
