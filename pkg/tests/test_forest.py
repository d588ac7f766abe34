import os
import random
import subprocess
import sys

import numpy as np
import pytest

from rtbcost.model import kernels
from rtbcost.model.encoding import FeatureEncoder, SchemaMismatch
from rtbcost.model.forest import ForestParams, RandomForestModel, SingleClassData, fit_forest
from rtbcost.model.io import export_model
from rtbcost.model.binning import PriceBinning

CATS = {"colour": ["red", "green", "blue"], "size": ["s", "m", "l", "xl"], "shape": ["o", "x"]}


def toy_rows(n=400, seed=0, noisy=False):
    rng = random.Random(seed)
    rows = []
    for _ in range(n):
        f = {k: rng.choice(v) for k, v in CATS.items()}
        f["hour"] = rng.randrange(24)
        y = int(f["colour"] == "red") + 2 * int(f["hour"] >= 12)
        if noisy and rng.random() < 0.2:
            y = rng.randrange(4)
        rows.append((f, y))
    return rows


def fit(rows, **kw):
    params = kw.pop("params", ForestParams(n_trees=15, min_leaf=1))
    return fit_forest(rows, params, categorical=list(CATS), numeric=["hour"], **kw)


def test_separable_train_accuracy():
    rows = [({"colour": c, "size": "s", "shape": "o", "hour": 3}, int(c == "red")) for c in ["red", "blue"] * 50]
    m = fit(rows)
    assert np.array_equal(m.predict([f for f, _ in rows]), [y for _, y in rows])


def test_learns_toy_function():
    m = fit(toy_rows())
    test = toy_rows(300, seed=9)
    acc = np.mean(m.predict([f for f, _ in test]) == [y for _, y in test])
    assert acc >= 0.97


def test_deterministic_bytes():
    rows = toy_rows(noisy=True)
    b = PriceBinning((0.0, 1.0, 2.0), (1.0, 2.0, 3.0, 4.0))
    assert export_model(fit(rows, seed=3), b) == export_model(fit(rows, seed=3), b)
    assert export_model(fit(rows, seed=3), b) != export_model(fit(rows, seed=4), b)


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_backends_identical():
    rows = toy_rows(noisy=True)
    a = fit(rows, seed=5, backend="python")
    c = fit(rows, seed=5, backend="cython")
    for ta, tc in zip(a.trees, c.trees):
        for name in ("feature", "threshold", "left", "right"):
            assert np.array_equal(getattr(ta, name), getattr(tc, name))
        assert np.array_equal(ta.value, tc.value)
    X = a.encode([f for f, _ in toy_rows(200, seed=1)])
    for ta in a.trees:
        py_apply, _ = kernels.get_backend("python")[1], None
        cy_apply = kernels.get_backend("cython")[1]
        args = (X, ta.feature, ta.threshold, ta.left, ta.right)
        assert np.array_equal(py_apply(*args), cy_apply(*args))


def test_single_class():
    rows = [({"colour": "red", "size": "s", "shape": "o", "hour": 1}, 2)] * 20
    with pytest.raises(SingleClassData):
        fit(rows)


def test_vote_recount_and_tie_break():
    m = fit(toy_rows(noisy=True), params=ForestParams(n_trees=10, min_leaf=3))
    X = m.encode([f for f, _ in toy_rows(1000, seed=2)])
    pred = m.predict_codes(X)
    for i in range(X.shape[0]):
        votes = [int(t.predict(X[i:i + 1])[0]) for t in m.trees]
        counts = [votes.count(c) for c in range(m.n_classes)]
        top = max(counts)
        assert pred[i] == counts.index(top)


def test_unanimous_vote():
    rows = toy_rows()
    m = fit(rows)
    X = m.encode([f for f, _ in rows])
    for t in m.trees:
        t.value[:] = 0
        t.value[:, 0] = 1
    assert set(m.predict_codes(X).tolist()) == {0}


def test_tree_order_invariance():
    m = fit(toy_rows(noisy=True))
    X = m.encode([f for f, _ in toy_rows(500, seed=6)])
    rev = RandomForestModel(m.encoder, list(reversed(m.trees)), m.n_classes, m.params, m.seed)
    perm = list(m.trees)
    random.Random(1).shuffle(perm)
    shuf = RandomForestModel(m.encoder, perm, m.n_classes, m.params, m.seed)
    base = m.predict_codes(X)
    assert np.array_equal(base, rev.predict_codes(X))
    assert np.array_equal(base, shuf.predict_codes(X))
    assert np.allclose(m.proba_codes(X), shuf.proba_codes(X))


def test_leaf_distributions_sum_to_one():
    m = fit(toy_rows(noisy=True))
    n_feat = m.encode([f for f, _ in toy_rows(2)]).shape[1]
    for t in m.trees:
        leaves = t.feature < 0
        assert np.allclose(t.value[leaves].sum(axis=1), 1.0)
        assert np.all(t.feature[~leaves] < n_feat)


def test_default_mtry_and_oob():
    m = fit(toy_rows(noisy=True), params=ForestParams(n_trees=20))
    assert m.oob_error is not None and 0.0 <= m.oob_error <= 0.5


def test_unknown_level_maps_to_other():
    m = fit(toy_rows())
    row = {"colour": "purple", "size": "s", "shape": "o", "hour": 5}
    assert m.predict([row]).shape == (1,)


def test_missing_field_is_schema_mismatch():
    m = fit(toy_rows())
    with pytest.raises(SchemaMismatch):
        m.predict([{"colour": "red", "hour": 2}])


def test_encoder_round_trip():
    enc = FeatureEncoder.fit([f for f, _ in toy_rows()], list(CATS), ["hour"])
    rows = [f for f, _ in toy_rows(50, seed=3)]
    assert np.array_equal(FeatureEncoder.from_dict(enc.to_dict()).encode(rows), enc.encode(rows))


def test_pure_env_forces_python_backend():
    code = "from rtbcost.model import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, RTBCOST_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
