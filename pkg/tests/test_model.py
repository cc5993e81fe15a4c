import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyspnea.errors import DataError, ModelFormatError
from dyspnea.model import MODEL_VERSION, fit_model, fit_scaler, knn_classify, knn_regress, load_model, neighbors, save_model


def brute_force(train, labels, scores, query, k):
    """Exhaustive oracle: scale with textbook statistics, sort every row.

    Ties in distance are ordered by class (dyspnea first) and then by Borg
    score (higher first); rows equal on all three keys are interchangeable.
    """
    n, m = len(train), len(train[0])
    cols = list(zip(*train))
    mean = [math.fsum(c) / n for c in cols]
    sd = [math.sqrt(math.fsum((v - mu) ** 2 for v in c) / (n - 1)) for c, mu in zip(cols, mean)]
    sd = [s if s > 0 else 1.0 for s in sd]
    scaled = [[(row[j] - mean[j]) / sd[j] for j in range(m)] for row in train]
    q = [(query[j] - mean[j]) / sd[j] for j in range(m)]
    dist = [math.fsum((r[j] - q[j]) ** 2 for j in range(m)) for r in scaled]
    order = sorted(range(n), key=lambda i: (dist[i], -labels[i], -scores[i]))[:k]
    votes = sum(labels[i] for i in order)
    cls = 1 if 2 * votes >= k else 0
    return cls, votes / k, min(10.0, max(0.0, math.fsum(scores[i] for i in order) / k))


def fixture(seed, n=200, m=51, dup=True):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, m)) * rng.uniform(0.1, 10, m) + rng.uniform(-5, 5, m)
    labels = rng.integers(0, 2, n)
    scores = np.round(rng.uniform(0, 10, n), 1)
    queries = rng.standard_normal((50, m)) * x.std(axis=0) + x.mean(axis=0)
    if dup:
        # Duplicated rows are bitwise-equal distance ties for every query,
        # so the k-th neighbor boundary often splits a pair; some pairs
        # disagree on the label, some only on the score.  The first queries
        # sit exactly on duplicated rows.
        x[100:140] = x[0:40]
        labels[100:120] = 1 - labels[0:20]
        labels[120:140] = labels[20:40]
        queries[:10] = x[:10]
    return x, labels, scores, queries


@pytest.mark.parametrize("k", [1, 7, 40])
@pytest.mark.parametrize("seed", [0, 1])
def test_matches_brute_force(seed, k):
    x, labels, scores, queries = fixture(seed)
    model = fit_model(x, labels, scores, k=k)
    tl, ts = labels.tolist(), scores.tolist()
    split = 0
    for q in queries:
        d = np.sum((model.train_matrix - model.scaler.transform(q)) ** 2, axis=1)
        kth = np.sort(d)[k - 1]
        split += int(np.sum(d == kth) > 1 and np.sum(d < kth) + np.sum(d == kth) > k)
        cls, frac, d_obj = brute_force(x.tolist(), tl, ts, q.tolist(), k)
        assert knn_classify(model, q) == (cls, frac)
        assert knn_regress(model, q) == pytest.approx(d_obj, abs=1e-12)
    # the fixture really exercises ties cut by the k-th neighbor
    assert split > 0


def test_permutation_invariance():
    x, labels, scores, queries = fixture(3)
    perm = np.random.default_rng(4).permutation(len(x))
    a = fit_model(x, labels, scores, k=40)
    b = fit_model(x[perm], labels[perm], scores[perm], k=40)
    for q in queries:
        assert knn_classify(a, q) == knn_classify(b, q)
        assert knn_regress(a, q) == knn_regress(b, q)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_affine_feature_transform_invariance(seed):
    x, labels, scores, queries = fixture(seed % 1000, n=120, m=12, dup=False)
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.1, 10, x.shape[1])
    b = rng.uniform(-100, 100, x.shape[1])
    m1 = fit_model(x, labels, scores, k=7)
    m2 = fit_model(a * x + b, labels, scores, k=7)
    for q in queries:
        assert knn_classify(m1, q) == knn_classify(m2, a * q + b)
        assert knn_regress(m1, q) == pytest.approx(knn_regress(m2, a * q + b), abs=1e-12)


def test_label_shift():
    x, labels, _, queries = fixture(5, dup=False)
    scores = np.random.default_rng(5).uniform(0, 5, len(x))
    m1 = fit_model(x, labels, scores, k=9)
    m2 = fit_model(x, labels, scores + 2.5, k=9)
    for q in queries:
        assert knn_regress(m2, q) == pytest.approx(knn_regress(m1, q) + 2.5, abs=1e-12)


def test_training_rows_classify_to_themselves():
    x, labels, scores, _ = fixture(6, dup=False)
    model = fit_model(x, labels, scores, k=1)
    assert [knn_classify(model, r)[0] for r in x] == labels.tolist()
    assert [knn_regress(model, r) for r in x] == scores.tolist()


def test_trivial_examples():
    x, labels, scores, queries = fixture(7, n=60, m=5, dup=False)
    ones = fit_model(x, np.ones(60, dtype=int), scores, k=40)
    assert all(knn_classify(ones, q) == (1, 1.0) for q in queries)
    full = fit_model(x, labels, scores, k=60)
    assert knn_regress(full, queries[0]) == pytest.approx(scores.mean())
    one = fit_model(x, labels, scores, k=1)
    assert knn_classify(one, x[3]) == (labels[3], float(labels[3]))


def test_even_split_goes_to_dyspnea():
    x = np.array([[0.0], [1.0], [-1.0], [5.0]])
    model = fit_model(x, [0, 1, 0, 1], [0.0, 1.0, 2.0, 3.0], k=2)
    # nearest two to 0.4 are rows 0 (class 0) and 1 (class 1)
    assert knn_classify(model, [0.4]) == (1, 0.5)


def test_k_bounds():
    x, labels, scores, _ = fixture(8, n=30, m=3, dup=False)
    with pytest.raises(DataError):
        fit_model(x, labels, scores, k=31)
    model = fit_model(x, labels, scores, k=5)
    with pytest.raises(DataError):
        neighbors(model, x[0], 31)


def test_fit_scaler_examples():
    with pytest.warns(UserWarning):
        s = fit_scaler(np.array([[1.0, 4.0], [3.0, 4.0]]))
    assert s.mean[0] == 2.0 and s.scale[0] == pytest.approx(math.sqrt(2))
    assert s.scale[1] == 1.0 and s.constant == (1,)
    with pytest.raises(DataError):
        fit_scaler(np.empty((0, 3)))
    rng = np.random.default_rng(9)
    x = rng.standard_normal((80, 6)) * 7 + 3
    z = fit_scaler(x).transform(x)
    np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(z.var(axis=0, ddof=1), 1, atol=1e-9)


def test_constant_column_warns():
    x = np.column_stack([np.arange(5.0), np.ones(5)])
    with pytest.warns(UserWarning, match="zero-variance"):
        fit_scaler(x)


def test_target_validation():
    x = np.random.default_rng(0).standard_normal((5, 2))
    with pytest.raises(DataError):
        fit_model(x, k=1)
    with pytest.raises(DataError):
        fit_model(x, scores=[0, 1, 2, 3, 11], k=1)
    with pytest.raises(DataError):
        fit_model(x, labels=[0, 1, 2, 0, 1], k=1)


def test_save_load_round_trip(tmp_path):
    x, labels, scores, queries = fixture(10)
    model = fit_model(x, labels, scores, k=40, k_regress=12)
    p1, p2 = tmp_path / "m1.json", tmp_path / "m2.json"
    save_model(model, p1)
    back = load_model(p1)
    save_model(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert back.k == 40 and back.k_regress == 12
    for q in queries:
        assert knn_classify(back, q) == knn_classify(model, q)
        assert knn_regress(back, q) == knn_regress(model, q)


def test_load_rejects_bad_files(tmp_path):
    x, labels, scores, _ = fixture(11, n=50, m=4, dup=False)
    p = tmp_path / "m.json"
    save_model(fit_model(x, labels, scores, k=5), p)
    doc = json.loads(p.read_text())
    doc["version"] = "dyspnea-knn/0"
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="version"):
        load_model(wrong)
    truncated = tmp_path / "trunc.json"
    truncated.write_text(p.read_text()[: len(p.read_text()) // 2])
    with pytest.raises(ModelFormatError):
        load_model(truncated)
    doc["version"] = MODEL_VERSION
    doc["train_matrix"] = doc["train_matrix"][:-3]
    short = tmp_path / "short.json"
    short.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        load_model(short)
