"""Correlation alignment (CORAL) and maximum mean discrepancy (MMD) baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy.spatial.distance import cdist


class AlignmentError(ValueError):
    pass


@dataclass
class AlignmentStats:
    source_cov: np.ndarray
    target_cov: np.ndarray
    shrinkage: float
    transform: np.ndarray
    source_mean: np.ndarray
    target_mean: np.ndarray

    def apply(self, feats: np.ndarray) -> np.ndarray:
        return (np.asarray(feats, float) - self.source_mean) @ self.transform + self.target_mean


def _sym_power(c: np.ndarray, power: float, what: str) -> np.ndarray:
    w, v = np.linalg.eigh(c)
    if w.min() <= 0:
        cond = float(np.linalg.cond(c))
        raise AlignmentError(f"{what} covariance is not positive definite after shrinkage "
                             f"(min eigenvalue {w.min():.3g}, condition number {cond:.3g})")
    return (v * w ** power) @ v.T


def coral_fit(source_feats, target_feats, shrinkage: float = 1e-3) -> AlignmentStats:
    s = np.asarray(source_feats, dtype=float)
    t = np.asarray(target_feats, dtype=float)
    if s.ndim != 2 or t.ndim != 2 or s.shape[1] != t.shape[1]:
        raise ValueError("features must be N x D and M x D")
    d = s.shape[1]
    if shrinkage < 0:
        raise ValueError("shrinkage must be non-negative")
    if shrinkage == 0 and (len(s) <= d or len(t) <= d):
        raise ValueError("need more samples than dimensions when shrinkage is 0")
    cs = np.cov(s, rowvar=False).reshape(d, d) + shrinkage * np.eye(d)
    ct = np.cov(t, rowvar=False).reshape(d, d) + shrinkage * np.eye(d)
    transform = _sym_power(cs, -0.5, "source") @ _sym_power(ct, 0.5, "target")
    return AlignmentStats(cs, ct, shrinkage, transform, s.mean(axis=0), t.mean(axis=0))


def coral_transform(source_feats, target_feats, shrinkage: float = 1e-3) -> np.ndarray:
    """Whiten source features with the source covariance, recolor with the target's."""
    return coral_fit(source_feats, target_feats, shrinkage).apply(source_feats)


def median_bandwidth(x, y) -> float:
    z = np.vstack([np.asarray(x, float), np.asarray(y, float)])
    d = cdist(z, z)
    med = float(np.median(d[np.triu_indices(len(z), k=1)])) if len(z) > 1 else 0.0
    return med if med > 0 else 1.0


def mmd(x, y, bandwidth: float | None = None) -> float:
    """Biased squared MMD with a Gaussian kernel exp(-|a-b|^2 / (2 h^2))."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if len(x) == 0 or len(y) == 0:
        raise ValueError("both samples must be non-empty")
    h = median_bandwidth(x, y) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    k = lambda a, b: np.exp(-cdist(a, b, "sqeuclidean") / (2 * h * h))  # noqa: E731
    val = k(x, x).mean() + k(y, y).mean() - 2 * k(x, y).mean()
    return float(max(val, 0.0))


def mmd_torch(x: torch.Tensor, y: torch.Tensor, bandwidth: float) -> torch.Tensor:
    """Differentiable counterpart of :func:`mmd` for use as a training penalty."""
    def k(a, b):
        return torch.exp(-torch.cdist(a, b).pow(2) / (2 * bandwidth ** 2))

    return k(x, x).mean() + k(y, y).mean() - 2 * k(x, y).mean()


# ---------------------------------------------------------------------------
# Embedding-level baselines


def fit_linear_head(feats: np.ndarray, coords: np.ndarray, ridge: float = 1e-6):
    """Least-squares affine map from embeddings to coordinates."""
    a = np.hstack([feats, np.ones((len(feats), 1))])
    reg = ridge * np.eye(a.shape[1])
    reg[-1, -1] = 0.0
    w = np.linalg.solve(a.T @ a + reg, a.T @ coords)
    return lambda f: np.hstack([f, np.ones((len(f), 1))]) @ w


def coral_baseline(source_emb, source_y, target_emb, shrinkage: float = 1e-3) -> np.ndarray:
    """Fresh regression head on CORAL-aligned source embeddings; returns target predictions."""
    aligned = coral_transform(source_emb, target_emb, shrinkage)
    head = fit_linear_head(aligned, np.asarray(source_y, float))
    return head(np.asarray(target_emb, float))


def mmd_baseline(model, source_x, source_y, target_x, epochs: int = 20, batch_size: int = 64,
                 lr: float = 3e-4, head_lr: float = 3e-2, weight: float = 1.0, seed: int = 0):
    """Train encoder + regression head on labeled source with an MMD penalty to target embeddings.

    ``model`` is a pre-trained ``DANN``; it is modified in place and returned.
    """
    from .training import embed, loss_reg

    sx = torch.as_tensor(np.asarray(source_x), dtype=torch.float32)
    sy = torch.as_tensor(np.asarray(source_y), dtype=torch.float32)
    tx = torch.as_tensor(np.asarray(target_x), dtype=torch.float32)
    h = median_bandwidth(embed(model, sx[:512]), embed(model, tx[:512]))
    with torch.no_grad():
        model.regressor.bias.copy_(sy.mean(dim=0))
    opt = torch.optim.Adam([
        {"params": model.regressor.parameters(), "lr": head_lr},
        {"params": model.autoencoder.encoder.parameters(), "lr": lr},
    ])
    gen = torch.Generator().manual_seed(seed)
    torch.manual_seed(seed)
    for _ in range(epochs):
        model.train()
        order = torch.randperm(len(sx), generator=gen)
        for b in range(0, len(sx), batch_size):
            idx = order[b:b + batch_size]
            tb = tx[torch.randint(len(tx), (len(idx),), generator=gen)]
            emb_s = model.autoencoder.encode(sx[idx])[0]
            emb_t = model.autoencoder.encode(tb)[0]
            loss = loss_reg(model.regressor(emb_s), sy[idx]) + weight * mmd_torch(emb_s, emb_t, h)
            opt.zero_grad()
            loss.backward()
            opt.step()
    return model
