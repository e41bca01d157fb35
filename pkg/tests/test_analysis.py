import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog

from jamloc import analysis as an

# ---------------------------------------------------------------------------
# localization metrics


def test_perfect_predictions():
    t = np.array([[0.0, 0.0], [100.0, 50.0], [20.0, 400.0]])
    r = an.localization_metrics(t, t)
    assert r.mean_err == 0 and r.frac_within_30cm == 1.0 and r.r2_x == 1.0 and r.r2_y == 1.0


@pytest.mark.filterwarnings("ignore:R\\^2 undefined")
def test_single_pair_345():
    r = an.localization_metrics([[0.0, 0.0]], [[30.0, 40.0]])
    assert r.mean_err == r.med_err == r.p90_err == pytest.approx(50.0)


@pytest.mark.filterwarnings("ignore:R\\^2 undefined")
def test_percentile_example():
    errs = np.array([10.0, 20.0, 30.0, 40.0, 50.0])
    preds = np.column_stack([errs, np.zeros(5)])
    r = an.localization_metrics(preds, np.zeros((5, 2)))
    assert r.mean_err == pytest.approx(30) and r.med_err == pytest.approx(30)
    assert r.frac_within_30cm == pytest.approx(0.6)
    # type-7 oracle: rank h = (n-1)p = 3.6 -> 40 + 0.6*(50-40)
    assert r.p90_err == pytest.approx(40 + 0.6 * 10)


def test_metrics_errors_and_constant_truth():
    with pytest.raises(ValueError):
        an.localization_metrics(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        an.localization_metrics([[np.inf, 0.0]], [[0.0, 0.0]])
    t = np.tile([[10.0, 20.0]], (3, 1))
    assert an.localization_metrics(t, t).r2_x == 0.0
    with pytest.warns(RuntimeWarning):
        r = an.localization_metrics(t + 1, t)
    assert r.r2_x == an.R2_SENTINEL


@pytest.mark.filterwarnings("ignore:R\\^2 undefined")
@given(arrays(float, (7, 2), elements=st.floats(-500, 500)), arrays(float, (7, 2), elements=st.floats(-500, 500)),
       st.permutations(range(7)))
def test_metrics_properties(p, t, perm):
    a = an.localization_metrics(p, t)
    b = an.localization_metrics(p[list(perm)], t[list(perm)])
    assert a.mean_err == pytest.approx(b.mean_err) and a.p90_err == pytest.approx(b.p90_err)
    err = np.linalg.norm(p - t, axis=1)
    assert a.p90_err >= a.med_err - 1e-9 and a.med_err >= err.min() - 1e-9


# ---------------------------------------------------------------------------
# per-tap EMD


def _emd_lp(u, v):
    """Exact W1 via the transportation linear program."""
    n, m = len(u), len(v)
    cost = np.abs(np.subtract.outer(u, v)).ravel()
    a_eq, b_eq = [], []
    for i in range(n):
        row = np.zeros((n, m))
        row[i] = 1
        a_eq.append(row.ravel())
        b_eq.append(1 / n)
    for j in range(m):
        col = np.zeros((n, m))
        col[:, j] = 1
        a_eq.append(col.ravel())
        b_eq.append(1 / m)
    res = linprog(cost, A_eq=np.array(a_eq), b_eq=b_eq, bounds=(0, None), method="highs")
    return res.fun


def test_emd_examples():
    assert an.wasserstein_1d([0, 1], [1, 2]) == pytest.approx(1.0)
    x = np.random.default_rng(0).standard_normal((20, 4))
    shift = an.per_tap_emd(x, x)
    assert np.all(shift.emd == 0) and not shift.flagged.any()
    moved = an.per_tap_emd(x, x + np.array([0.0, 0.3, -2.0, 0.05]))
    np.testing.assert_allclose(moved.emd, [0.0, 0.3, 2.0, 0.05], atol=1e-12)
    assert moved.flagged.tolist() == [False, True, True, False]


@given(arrays(float, st.integers(1, 8), elements=st.floats(-5, 5)),
       arrays(float, st.integers(1, 8), elements=st.floats(-5, 5)))
def test_emd_matches_transport_lp(u, v):
    assert an.wasserstein_1d(u, v) == pytest.approx(_emd_lp(u, v), abs=1e-7)


def test_emd_errors_and_rows():
    with pytest.raises(ValueError):
        an.per_tap_emd(np.zeros((0, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        an.per_tap_emd(np.zeros((2, 3)), np.zeros((2, 4)))
    rows = an.per_tap_emd(np.zeros((2, 2)), np.ones((2, 2))).to_rows()
    assert rows[1] == {"tap": 1, "emd": 1.0, "delta_mean": 1.0, "source_mean": 0.0, "target_mean": 1.0,
                       "flagged": True}


# ---------------------------------------------------------------------------
# importance


def test_mi_deterministic_relation():
    x = np.random.default_rng(0).uniform(size=4000)
    assert an.mutual_info(x, x, bins=4) == pytest.approx(math.log(4), abs=0.01)


def test_mi_independent():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        assert an.mutual_info(rng.uniform(size=10_000), rng.uniform(size=10_000), bins=8) < 0.02


def test_mi_constant_and_errors():
    assert an.mutual_info(np.ones(100), np.arange(100.0), bins=4) == 0.0
    with pytest.raises(ValueError):
        an.mutual_info(np.arange(10.0), np.arange(10.0), bins=4)


@given(st.integers(0, 10_000))
def test_mi_symmetric(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(200)
    y = x + rng.standard_normal(200)
    assert an.mutual_info(x, y, 8) == pytest.approx(an.mutual_info(y, x, 8), abs=1e-12)


def test_eta_squared_examples():
    assert an.eta_squared([1, 1, 5, 5], [0, 0, 1, 1]) == pytest.approx(1.0)
    assert an.eta_squared([1, 3, 3, 1], [0, 0, 1, 1]) == pytest.approx(0.0)
    assert an.eta_squared([1, 2, 3, 4], [0, 0, 1, 1]) == pytest.approx(4 / 5)
    assert an.eta_squared([2, 2, 2], [0, 1, 1]) == 0.0
    with pytest.raises(ValueError):
        an.eta_squared([1, 2], [0, 0])


@given(arrays(float, 12, elements=st.floats(-100, 100)), st.lists(st.integers(0, 3), min_size=12, max_size=12))
def test_eta_squared_bounded(v, g):
    if len(set(g)) < 2:
        return
    assert 0.0 <= an.eta_squared(v, g) <= 1.0


def test_rank_aggregate():
    single = an.rank_aggregate({"m": {"a": 3.0, "b": 2.0, "c": 1.0}})
    assert single == [("a", 1.0), ("b", 2.0), ("c", 3.0)]
    both = an.rank_aggregate({"m1": {"a": 3, "b": 2, "c": 1}, "m2": {"a": 1, "b": 2, "c": 3}})
    assert all(r == 2.0 for _, r in both)
    ties = dict(an.rank_aggregate({"m": {"a": 1.0, "b": 1.0, "c": 0.0}}))
    assert ties == {"a": 1.5, "b": 1.5, "c": 3.0}
    with pytest.raises(ValueError):
        an.rank_aggregate({"m1": {"a": 1}, "m2": {"b": 1}})
    with pytest.raises(ValueError):
        an.rank_aggregate({})


def test_importance_table_orders_informative_feature(rng):
    coords = rng.uniform(0, 300, (800, 2))
    groups = (coords[:, 0] // 100).astype(int)
    X = np.column_stack([coords[:, 0] + rng.normal(0, 5, 800), rng.standard_normal(800)])
    table = an.importance_table(X, coords, groups, ["good", "noise"], bins=8)
    assert table["mean_rank"][0][0] == "good"


# ---------------------------------------------------------------------------
# zone probe


def _blobs(seed, k=5, per=40):
    rng = np.random.default_rng(seed)
    centers = np.array([[30, 30], [270, 30], [150, 250], [30, 470], [270, 470]], float)[:k]
    return np.concatenate([c + rng.normal(0, 5, (per, 2)) for c in centers])


def test_zone_probe_separable():
    coords = _blobs(0)
    zones, _ = an.zone_labels(coords, 5, 0)
    emb = np.eye(5)[zones] + np.random.default_rng(1).normal(0, 0.01, (len(zones), 5))
    r = an.zone_probe(emb, coords, 5, 5, 0)
    assert r.accuracy == pytest.approx(1.0) and r.roc_auc_ovr == pytest.approx(1.0)
    assert r.centroids.shape == (5, 2) and len(r.fold_auc) == 5


def test_zone_probe_noise_is_chance():
    for seed in range(5):
        coords = _blobs(seed)
        zones, _ = an.zone_labels(coords, 5, seed)
        prior = np.bincount(zones).max() / len(zones)
        emb = np.random.default_rng(100 + seed).standard_normal((len(coords), 8))
        r = an.zone_probe(emb, coords, 5, 5, seed)
        se = math.sqrt(prior * (1 - prior) / len(coords))
        assert abs(r.accuracy - prior) < 3 * se


def test_zone_probe_binary_and_errors():
    coords = _blobs(0, k=2, per=30)
    zones, _ = an.zone_labels(coords, 2, 0)
    r = an.zone_probe(np.eye(2)[zones], coords, k=2, folds=3)
    assert r.roc_auc_ovr == pytest.approx(1.0)
    with pytest.raises(ValueError):
        an.zone_labels(np.zeros((10, 2)), 5)
    with pytest.raises(ValueError):
        an.zone_probe(np.zeros((4, 2)), np.zeros((4, 2)), 5, 5)
