import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calfsense.core import MotionLabel
from calfsense.errors import (
    ClassTooSmall,
    DimensionMismatch,
    MissingSetsWarning,
    NonFiniteInput,
    SingleClassInput,
    UnknownLabel,
)
from calfsense.svm import (
    ConfusionMatrix,
    KernelSpec,
    Standardizer,
    _pair_seed,
    TrainConfig,
    confusion_from_labels,
    evaluate,
    kernel_eval,
    kernel_matrix,
    kkt_violations,
    load_model,
    metrics_from_confusion,
    save_model,
    split_dataset,
    train_binary,
    train_multiclass,
)


def blobs(seed, n=30, d=2, sep=3.0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-sep / 2, 1.0, (n, d)), rng.normal(sep / 2, 1.0, (n, d))])
    y = np.array([-1] * n + [1] * n)
    return X, y


def check_kkt(model, X, y, tol):
    """Recompute each training point's KKT violation from scratch."""
    f = model.decision_function(X)
    alpha = np.zeros(len(y))
    alpha[model.sv_indices] = model.alphas
    assert np.all(kkt_violations(alpha, y, f, model.c) <= tol + 1e-12)
    assert abs(np.sum(alpha * y)) <= 1e-8
    assert np.all((alpha >= 0) & (alpha <= model.c))


# ---------------------------------------------------------------- kernels


def test_kernel_examples():
    assert kernel_eval(KernelSpec.rbf(0.7), [1.0, 2.0], [1.0, 2.0]) == 1.0
    assert kernel_eval(KernelSpec.linear(), [1, 2], [3, 4]) == 11.0
    assert kernel_eval(KernelSpec.rbf(0.5), [0.0, 0.0], [1.0, 1.0]) == pytest.approx(math.exp(-1), rel=1e-15)
    assert kernel_eval(KernelSpec.rbf(0.5), [0.0, 0.0], [1.0, 1.0]) == pytest.approx(0.3678794, abs=1e-7)
    with pytest.raises(DimensionMismatch):
        kernel_eval(KernelSpec.linear(), [1, 2], [1, 2, 3])
    for bad in (0.0, -1.0, float("inf"), None):
        with pytest.raises(ValueError):
            KernelSpec("rbf", bad)


def test_kernel_matrix_matches_pairwise_eval():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
    for k in (KernelSpec.linear(), KernelSpec.rbf(0.3)):
        K = kernel_matrix(k, A, B)
        ref = np.array([[kernel_eval(k, a, b) for b in B] for a in A])
        assert np.allclose(K, ref, atol=1e-12)


def test_train_config_invariants():
    for kw in ({"c": 0}, {"tol": 0}, {"max_passes": 0}, {"seed": -1}):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


# ---------------------------------------------------------------- binary


def test_two_point_analytic_solution():
    # hard-margin optimum: w = 1, b = 0, alpha = 1/2 for both points
    X = np.array([[-1.0], [1.0]])
    y = np.array([-1, 1])
    m = train_binary(X, y, KernelSpec.linear(), TrainConfig(c=1000.0, tol=1e-9))
    assert len(m.alphas) == 2
    assert m.alphas == pytest.approx([0.5, 0.5], abs=1e-9)
    assert m.bias == pytest.approx(0.0, abs=1e-9)
    assert m.decision_function([[0.0]])[0] == pytest.approx(0.0, abs=1e-9)
    w = float(m.dual_coef @ m.support_vectors[:, 0])
    assert 2.0 / w == pytest.approx(2.0, abs=1e-8)


def test_xor_is_separable_with_rbf():
    X = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
    y = np.array([-1, -1, 1, 1])
    m = train_binary(X, y, KernelSpec.rbf(1.0), TrainConfig(c=10.0))
    assert np.array_equal(m.predict(X), y)
    check_kkt(m, X, y, 1e-3)


def test_duplicating_points_keeps_the_decision_function():
    X, y = blobs(1, n=15, sep=6.0)
    k = KernelSpec.linear()
    cfg = TrainConfig(c=1e4, tol=1e-9)
    a = train_binary(X, y, k, cfg)
    b = train_binary(np.vstack([X, X]), np.concatenate([y, y]), k, cfg)
    grid = np.stack(np.meshgrid(np.linspace(-5, 5, 11), np.linspace(-5, 5, 11)), -1).reshape(-1, 2)
    assert np.max(np.abs(a.decision_function(grid) - b.decision_function(grid))) <= 1e-6


@settings(max_examples=25)
@given(st.integers(0, 2**32), st.sampled_from(["linear", "rbf"]), st.floats(0.1, 10.0), st.floats(0.5, 4.0))
def test_kkt_and_dual_feasibility(seed, kind, c, sep):
    X, y = blobs(seed, n=20, d=3, sep=sep)
    k = KernelSpec.linear() if kind == "linear" else KernelSpec.rbf(0.5)
    tol = 1e-3
    m = train_binary(X, y, k, TrainConfig(c=c, tol=tol, seed=seed))
    assert m.converged
    assert m.kkt_residual <= tol
    assert len(m.alphas) >= 1
    check_kkt(m, X, y, tol)


def test_fixed_seed_is_deterministic_and_order_free():
    X, y = blobs(2, n=40, sep=1.5)
    k = KernelSpec.rbf(0.5)
    a = train_binary(X, y, k, TrainConfig(seed=7))
    b = train_binary(X, y, k, TrainConfig(seed=7))
    perm = np.random.default_rng(0).permutation(len(y))
    c = train_binary(X[perm], y[perm], k, TrainConfig(seed=7))
    probe = np.random.default_rng(1).normal(size=(50, 2))
    assert np.array_equal(a.alphas, b.alphas) and a.bias == b.bias
    assert np.array_equal(a.decision_function(probe), c.decision_function(probe))


def test_binary_input_errors():
    X = np.zeros((4, 2))
    with pytest.raises(SingleClassInput):
        train_binary(X, [1, 1, 1, 1], KernelSpec.linear())
    X[0, 0] = np.inf
    with pytest.raises(NonFiniteInput):
        train_binary(X, [1, -1, 1, -1], KernelSpec.linear())
    with pytest.raises(DimensionMismatch):
        train_binary(np.zeros((4, 2)), [1, -1, 1], KernelSpec.linear())


def test_standardizing_standardized_data_changes_nothing():
    X, y = blobs(3, n=30, sep=2.0)
    X = Standardizer.fit(X).transform(X)
    again = Standardizer.fit(X).transform(X)
    assert np.allclose(again, X, atol=1e-12)
    k, cfg = KernelSpec.linear(), TrainConfig()
    acc = lambda Z: float(np.mean(train_binary(Z, y, k, cfg).predict(Z) == y))
    assert acc(again) == acc(X)


# ---------------------------------------------------------------- multiclass


def clusters(seed, per=20):
    rng = np.random.default_rng(seed)
    centres = {MotionLabel.LIFT_HEEL: (0, 0), MotionLabel.LIFT_TOES: (6, 0), MotionLabel.TURN_ROUND: (0, 6)}
    X = np.vstack([rng.normal(c, 0.5, (per, 2)) for c in centres.values()])
    labels = [lab for lab in centres for _ in range(per)]
    return X, labels


def test_three_clusters_are_learned_exactly():
    X, labels = clusters(0)
    model = train_multiclass(X, labels, KernelSpec.rbf(0.5))
    assert len(model.models) == 3
    _, metrics = evaluate(model, X, labels)
    assert metrics.macro_recall == 1.0


def test_two_classes_reduce_to_one_binary_model():
    X, y = blobs(4)
    labels = ["neg" if v < 0 else "pos" for v in y]
    cfg = TrainConfig(seed=5)
    model = train_multiclass(X, labels, KernelSpec.linear(), cfg)
    assert list(model.models) == [(0, 1)]
    pair = model.models[(0, 1)]
    # classes sort as ("neg", "pos") and +1 means the first class
    ref = train_binary(X, np.where(y < 0, 1, -1), KernelSpec.linear(), TrainConfig(seed=_pair_seed(5, 0, 1)))
    assert np.array_equal(pair.alphas, ref.alphas) and pair.bias == ref.bias


def test_multiclass_prediction_ignores_training_order():
    X, labels = clusters(1)
    perm = np.random.default_rng(2).permutation(len(labels))
    a = train_multiclass(X, labels, KernelSpec.rbf(0.5), TrainConfig(seed=3))
    b = train_multiclass(X[perm], [labels[i] for i in perm], KernelSpec.rbf(0.5), TrainConfig(seed=3))
    probe = np.random.default_rng(4).uniform(-2, 8, (100, 2))
    assert a.predict(probe) == b.predict(probe)


def test_vote_is_invariant_to_positive_scaling():
    X, labels = clusters(2)
    model = train_multiclass(X, labels, KernelSpec.rbf(0.5))
    probe = np.random.default_rng(5).uniform(-2, 8, (200, 2))
    dec = model.pairwise_decisions(probe)
    base = model.predict_index(probe, dec)
    for a in (1e-3, 0.5, 7.0, 1e4):
        assert np.array_equal(model.predict_index(probe, {k: a * v for k, v in dec.items()}), base)


def test_multiclass_input_errors():
    X, labels = clusters(3)
    with pytest.raises(SingleClassInput):
        train_multiclass(X[:5], labels[:5], KernelSpec.linear())
    with pytest.raises(ClassTooSmall):
        train_multiclass(X[:21], labels[:21], KernelSpec.linear())


def test_save_and_load_round_trip(tmp_path):
    X, labels = clusters(4)
    model = train_multiclass(X, labels, KernelSpec.rbf(0.5))
    model.scaler = Standardizer.fit(X)
    model.meta["note"] = "x"
    path = tmp_path / "model.txt"
    save_model(model, path)
    back = load_model(path)
    probe = np.random.default_rng(6).uniform(-2, 8, (100, 2))
    assert back.classes == model.classes
    assert back.predict(probe) == model.predict(probe)
    assert back.meta["note"] == "x"


# ---------------------------------------------------------------- split


def provenance(n_subjects=3, n_sets=4, windows=5):
    return [(f"S{s}", m, st, w) for s in range(n_subjects) for m in ("A1", "A2")
            for st in range(1, n_sets + 1) for w in range(windows)]


def test_split_takes_two_sets_each_side():
    prov = provenance()
    tr, te = split_dataset(prov, seed=1)
    assert len(tr) + len(te) == len(prov) and not set(tr) & set(te)
    for s in range(3):
        for m in ("A1", "A2"):
            tr_sets = {prov[i][2] for i in tr if prov[i][:2] == (f"S{s}", m)}
            te_sets = {prov[i][2] for i in te if prov[i][:2] == (f"S{s}", m)}
            assert len(tr_sets) == 2 and len(te_sets) == 2


@given(st.integers(0, 2**32))
def test_split_is_deterministic_and_never_straddles(seed):
    prov = provenance()
    tr, te = split_dataset(prov, seed)
    tr2, te2 = split_dataset(prov, seed)
    assert np.array_equal(tr, tr2) and np.array_equal(te, te2)
    train_keys = {prov[i][:3] for i in tr}
    assert not train_keys & {prov[i][:3] for i in te}


def test_split_warns_on_missing_sets():
    prov = provenance(n_subjects=1, n_sets=3)
    with pytest.warns(MissingSetsWarning):
        tr, te = split_dataset(prov)
    assert len({prov[i][2] for i in tr if prov[i][1] == "A1"}) == 2
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        split_dataset(provenance())


# ---------------------------------------------------------------- metrics


def test_metrics_examples():
    y = ["A"] * 10 + ["B"] * 5
    pred = ["A"] * 9 + ["B"] + ["B"] * 5
    m = metrics_from_confusion(confusion_from_labels(y, pred, ["A", "B"]))
    assert m.recall_per_class.tolist() == [0.9, 1.0]
    assert m.macro_recall == pytest.approx(0.95)
    cm = ConfusionMatrix(("A", "B"), np.array([[5, 0], [1, 4]]))
    assert metrics_from_confusion(cm).macro_recall == pytest.approx(0.9)


def test_perfect_predictions_give_diagonal_matrix():
    y = ["A", "B", "C", "A"]
    cm = confusion_from_labels(y, y, ["A", "B", "C"])
    assert np.array_equal(cm.counts, np.diag([2, 1, 1]))
    assert metrics_from_confusion(cm).macro_recall == 1.0


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60))
def test_macro_recall_properties(pairs):
    classes = ["a", "b", "c", "d"]
    y = [classes[t] for t, _ in pairs]
    p = [classes[q] for _, q in pairs]
    cm = confusion_from_labels(y, p, classes)
    m = metrics_from_confusion(cm)
    assert np.all(cm.counts >= 0)
    assert cm.counts.sum(axis=1).tolist() == [y.count(c) for c in classes]
    assert 0.0 <= m.macro_recall <= 1.0
    assert m.macro_recall == np.mean(m.recall_per_class)
    present = [i for i, c in enumerate(classes) if c in y]
    diagonal = all(cm.counts[i, j] == 0 for i in present for j in range(4) if i != j)
    assert (m.macro_recall == 1.0) == diagonal


def test_unknown_labels_are_rejected():
    with pytest.raises(UnknownLabel):
        confusion_from_labels(["A", "Z"], ["A", "A"], ["A", "B"])
    X, labels = clusters(5)
    model = train_multiclass(X, labels, KernelSpec.rbf(0.5))
    with pytest.raises(UnknownLabel):
        evaluate(model, X[:1], [MotionLabel.WALK_FORWARD])
