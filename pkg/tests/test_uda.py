import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jamloc import uda


def _exact_cov_sample(cov, n=400, seed=0, mean=(0.0, 0.0)):
    """Points whose sample covariance (ddof=1) equals ``cov`` exactly."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, len(cov)))
    z -= z.mean(axis=0)
    # whiten to an exact identity sample covariance, then colour
    w = np.linalg.cholesky(np.cov(z, rowvar=False))
    z = z @ np.linalg.inv(w).T
    return z @ np.linalg.cholesky(cov).T + np.asarray(mean)


def test_coral_toy_diag():
    src = _exact_cov_sample(np.diag([4.0, 1.0]), seed=1, mean=(3.0, -2.0))
    tgt = _exact_cov_sample(np.diag([1.0, 4.0]), seed=2, mean=(-1.0, 5.0))
    out = uda.coral_transform(src, tgt, shrinkage=1e-9)
    assert np.linalg.norm(np.cov(out, rowvar=False) - np.diag([1.0, 4.0])) < 1e-6
    np.testing.assert_allclose(out.mean(axis=0), [-1.0, 5.0], atol=1e-9)
    # closed-form oracle: whiten by diag(1/2, 1), recolor by diag(1, 2)
    np.testing.assert_allclose(out, (src - src.mean(0)) @ np.diag([0.5, 2.0]) + tgt.mean(0), atol=1e-6)


def test_coral_matches_shrunk_target_cov(rng):
    src = rng.standard_normal((300, 4)) @ rng.standard_normal((4, 4))
    tgt = rng.standard_normal((200, 4)) @ rng.standard_normal((4, 4))
    stats = uda.coral_fit(src, tgt, 1e-3)
    out = stats.apply(src)
    # the transform maps the shrunk source covariance onto the shrunk target one
    mapped = stats.transform.T @ stats.source_cov @ stats.transform
    assert np.linalg.norm(mapped - stats.target_cov) < 1e-6
    assert np.linalg.norm(np.cov(out, rowvar=False) + stats.transform.T @ (1e-3 * np.eye(4)) @ stats.transform
                          - stats.target_cov) < 1e-6


def test_coral_identity_cases(rng):
    src = rng.standard_normal((200, 3))
    out = uda.coral_transform(src, src.copy())
    assert np.linalg.norm(np.cov(out, rowvar=False) - np.cov(src, rowvar=False)) < 1e-6
    tgt = rng.standard_normal((200, 3)) * 3
    stats = uda.coral_fit(src, tgt, shrinkage=1e9)
    np.testing.assert_allclose(stats.transform, np.eye(3), atol=1e-6)


def test_coral_error_shrinks_with_shrinkage(rng):
    src = rng.standard_normal((500, 3)) @ np.diag([3.0, 1.0, 0.5])
    tgt = rng.standard_normal((500, 3)) @ np.diag([0.5, 2.0, 1.0])
    ct = np.cov(tgt, rowvar=False)
    errs = [np.linalg.norm(np.cov(uda.coral_transform(src, tgt, s), rowvar=False) - ct)
            for s in (1.0, 0.1, 1e-2, 1e-3, 1e-4)]
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_coral_errors():
    with pytest.raises(ValueError):
        uda.coral_fit(np.zeros((3, 5)), np.zeros((3, 5)), shrinkage=0)
    with pytest.raises(uda.AlignmentError, match="condition number"):
        uda.coral_fit(np.zeros((10, 2)), np.ones((10, 2)), shrinkage=0)
    with pytest.raises(ValueError):
        uda.coral_fit(np.zeros((10, 2)), np.zeros((10, 3)))


def test_mmd_examples():
    x = np.array([[0.0], [2.0], [5.0]])
    assert uda.mmd(x, x[::-1], 1.0) == pytest.approx(0.0, abs=1e-12)
    assert uda.mmd([[0.0]], [[1.0]], 1.0) == pytest.approx(2 - 2 * np.exp(-0.5), rel=1e-12)
    assert uda.mmd([[0.0]], [[1.0]], 1.0) == pytest.approx(0.786939, abs=1e-6)


def _mmd_oracle(x, y, h):
    k = lambda a, b: np.exp(-np.sum((a - b) ** 2) / (2 * h * h))  # noqa: E731
    kxx = np.mean([k(a, b) for a in x for b in x])
    kyy = np.mean([k(a, b) for a in y for b in y])
    kxy = np.mean([k(a, b) for a in x for b in y])
    return kxx + kyy - 2 * kxy


@given(arrays(float, (5, 2), elements=st.floats(-5, 5)), arrays(float, (4, 2), elements=st.floats(-5, 5)),
       st.floats(0.1, 10))
def test_mmd_properties(x, y, h):
    v = uda.mmd(x, y, h)
    assert v >= 0
    assert v == pytest.approx(uda.mmd(y, x, h), abs=1e-12)
    assert v == pytest.approx(max(_mmd_oracle(x, y, h), 0.0), abs=1e-9)
    torch_v = uda.mmd_torch(torch.tensor(x), torch.tensor(y), h).item()
    assert torch_v == pytest.approx(_mmd_oracle(x, y, h), abs=1e-6)


def test_mmd_shrinks_with_n():
    means = []
    for n in (32, 128, 512):
        vals = []
        for seed in range(5):
            rng = np.random.default_rng(seed)
            vals.append(uda.mmd(rng.standard_normal((n, 2)), rng.standard_normal((n, 2)), 1.0))
        means.append(np.mean(vals))
    assert means[0] > means[1] > means[2]


def test_mmd_errors():
    with pytest.raises(ValueError):
        uda.mmd(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        uda.mmd(np.zeros((2, 2)), np.zeros((3, 2)), bandwidth=0)


def test_coral_baseline_recovers_linear_map(rng):
    emb = rng.standard_normal((200, 4))
    y = emb @ rng.standard_normal((4, 2)) * 30 + 150
    pred = uda.coral_baseline(emb, y, emb.copy())
    np.testing.assert_allclose(pred, y, atol=1e-3)


def test_mmd_baseline_runs(small_source, small_target):
    from jamloc import preprocess as pp
    from jamloc.models import DANN
    from jamloc.training import predict

    cs, ct = pp.cir_to_channels(small_source.cir), pp.cir_to_channels(small_target.cir)
    p = pp.fit_cir_scaler(cs, ct)
    torch.manual_seed(0)
    m = uda.mmd_baseline(DANN(), pp.scale_channels(p, cs)[:64], small_source.xy[:64],
                         pp.scale_channels(p, ct)[:64], epochs=2, batch_size=32)
    out = predict(m, pp.scale_channels(p, ct)[:8].astype(np.float32))
    assert out.shape == (8, 2) and np.isfinite(out).all()
