"""Localization metrics, domain-shift diagnostics, feature importance and the zone probe."""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

WITHIN_CM = 30.0
R2_SENTINEL = -1e12
EMD_FLAG = 0.1
DMEAN_FLAG = 0.1


@dataclass
class MetricsReport:
    rmse_x: float
    rmse_y: float
    mae_x: float
    mae_y: float
    r2_x: float
    r2_y: float
    mean_err: float
    med_err: float
    p90_err: float
    frac_within_30cm: float
    n: int
    wall_time_min: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def _r2(truth: np.ndarray, pred: np.ndarray) -> float:
    ss_res = float(np.sum((truth - pred) ** 2))
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0.0:
        if ss_res == 0.0:
            return 0.0
        warnings.warn("R^2 undefined for constant truths; returning sentinel", RuntimeWarning, stacklevel=3)
        return R2_SENTINEL
    return 1.0 - ss_res / ss_tot


def localization_metrics(preds, truths, wall_time_min: float | None = None) -> MetricsReport:
    p = np.asarray(preds, dtype=float)
    t = np.asarray(truths, dtype=float)
    if p.shape != t.shape or p.ndim != 2 or p.shape[1] != 2:
        raise ValueError(f"expected matching N x 2 arrays, got {p.shape} and {t.shape}")
    if len(p) == 0:
        raise ValueError("no predictions")
    if not (np.isfinite(p).all() and np.isfinite(t).all()):
        raise ValueError("non-finite predictions or truths")
    diff = p - t
    err = np.linalg.norm(diff, axis=1)
    return MetricsReport(
        rmse_x=float(np.sqrt(np.mean(diff[:, 0] ** 2))),
        rmse_y=float(np.sqrt(np.mean(diff[:, 1] ** 2))),
        mae_x=float(np.mean(np.abs(diff[:, 0]))),
        mae_y=float(np.mean(np.abs(diff[:, 1]))),
        r2_x=_r2(t[:, 0], p[:, 0]),
        r2_y=_r2(t[:, 1], p[:, 1]),
        mean_err=float(err.mean()),
        med_err=float(np.percentile(err, 50, method="lower")),
        p90_err=float(np.percentile(err, 90, method="linear")),
        frac_within_30cm=float(np.mean(err <= WITHIN_CM)),
        n=len(err),
        wall_time_min=wall_time_min,
    )


def classification_metrics(y_true, y_pred, wall_time_min: float | None = None) -> dict:
    from sklearn.metrics import accuracy_score, f1_score, precision_score, recall_score

    return {
        "accuracy": float(accuracy_score(y_true, y_pred)),
        "f1_macro": float(f1_score(y_true, y_pred, average="macro", zero_division=0)),
        "f1_weighted": float(f1_score(y_true, y_pred, average="weighted", zero_division=0)),
        "precision": float(precision_score(y_true, y_pred, average="macro", zero_division=0)),
        "recall": float(recall_score(y_true, y_pred, average="macro", zero_division=0)),
        "n": int(len(y_true)),
        "wall_time_min": wall_time_min,
    }


# ---------------------------------------------------------------------------
# Domain-shift diagnostics


def wasserstein_1d(u: np.ndarray, v: np.ndarray) -> float:
    """Exact W1 between two empirical distributions: integral of |F_u - F_v|."""
    u = np.sort(np.asarray(u, dtype=float))
    v = np.sort(np.asarray(v, dtype=float))
    if len(u) == 0 or len(v) == 0:
        raise ValueError("empty sample")
    allv = np.sort(np.concatenate([u, v]))
    deltas = np.diff(allv)
    cdf_u = np.searchsorted(u, allv[:-1], side="right") / len(u)
    cdf_v = np.searchsorted(v, allv[:-1], side="right") / len(v)
    return float(np.sum(np.abs(cdf_u - cdf_v) * deltas))


@dataclass
class TapShift:
    emd: np.ndarray
    delta_mean: np.ndarray
    source_mean: np.ndarray
    target_mean: np.ndarray

    @property
    def flagged(self) -> np.ndarray:
        return (self.emd >= EMD_FLAG) | (self.delta_mean >= DMEAN_FLAG)

    def to_rows(self) -> list[dict]:
        return [
            {"tap": i, "emd": float(e), "delta_mean": float(d), "source_mean": float(s),
             "target_mean": float(t), "flagged": bool(f)}
            for i, (e, d, s, t, f) in enumerate(
                zip(self.emd, self.delta_mean, self.source_mean, self.target_mean, self.flagged))
        ]


def per_tap_emd(source_feat, target_feat) -> TapShift:
    s = np.asarray(source_feat, dtype=float)
    t = np.asarray(target_feat, dtype=float)
    if s.ndim != 2 or t.ndim != 2 or s.shape[1] != t.shape[1]:
        raise ValueError("inputs must be N x T and M x T with equal T")
    if len(s) == 0 or len(t) == 0:
        raise ValueError("empty columns")
    emd = np.array([wasserstein_1d(s[:, j], t[:, j]) for j in range(s.shape[1])])
    sm, tm = s.mean(axis=0), t.mean(axis=0)
    return TapShift(emd, np.abs(sm - tm), sm, tm)


# ---------------------------------------------------------------------------
# Feature importance


def _equal_freq_bins(x: np.ndarray, bins: int) -> np.ndarray:
    edges = np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1])
    return np.searchsorted(edges, x, side="right")


def mutual_info(feature, target, bins: int = 16) -> float:
    """Plug-in mutual information (nats) on an equal-frequency contingency table."""
    x = np.asarray(feature, dtype=float)
    y = np.asarray(target, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("feature and target must be 1-D and equally long")
    if len(x) < 4 * bins:
        raise ValueError(f"need at least {4 * bins} samples for {bins} bins")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return 0.0
    bx, by = _equal_freq_bins(x, bins), _equal_freq_bins(y, bins)
    joint = np.zeros((bins, bins))
    np.add.at(joint, (bx, by), 1.0)
    joint /= joint.sum()
    px, py = joint.sum(axis=1), joint.sum(axis=0)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / np.outer(px, py)[nz])))
    return max(mi, 0.0)


def eta_squared(values, groups) -> float:
    v = np.asarray(values, dtype=float)
    g = np.asarray(groups)
    labels = np.unique(g)
    if len(labels) < 2:
        raise ValueError("eta squared needs at least two groups")
    grand = v.mean()
    ss_tot = float(np.sum((v - grand) ** 2))
    if ss_tot == 0.0:
        return 0.0
    ss_b = sum(float(np.sum(g == k)) * (v[g == k].mean() - grand) ** 2 for k in labels)
    return float(min(max(ss_b / ss_tot, 0.0), 1.0))


def rank_aggregate(tables: dict[str, dict[str, float]]) -> list[tuple[str, float]]:
    """Mean rank per feature across measures; 1 = most important. Sorted ascending."""
    if not tables:
        raise ValueError("need at least one importance measure")
    features = sorted(next(iter(tables.values())))
    for name, scores in tables.items():
        if sorted(scores) != features:
            raise ValueError(f"measure {name!r} covers a different feature set")
    ranks = np.zeros(len(features))
    for scores in tables.values():
        ranks += rankdata([-scores[f] for f in features], method="average")
    ranks /= len(tables)
    return sorted(zip(features, ranks.tolist()), key=lambda fr: (fr[1], fr[0]))


def importance_table(X, coords, groups, feature_names, bins: int = 16,
                     extra: dict[str, dict[str, float]] | None = None) -> dict:
    """Mutual information (summed over both coordinates), eta squared and mean rank."""
    X = np.asarray(X, dtype=float)
    coords = np.asarray(coords, dtype=float)
    mi = {f: mutual_info(X[:, j], coords[:, 0], bins) + mutual_info(X[:, j], coords[:, 1], bins)
          for j, f in enumerate(feature_names)}
    eta = {f: eta_squared(X[:, j], groups) for j, f in enumerate(feature_names)}
    tables = {"mutual_info": mi, "eta_squared": eta, **(extra or {})}
    return {"measures": tables, "mean_rank": rank_aggregate(tables)}


# ---------------------------------------------------------------------------
# Spatial-zone probe


@dataclass
class ZoneProbeResult:
    roc_auc_ovr: float
    accuracy: float
    centroids: np.ndarray
    zones: np.ndarray
    fold_auc: list[float]
    fold_accuracy: list[float]

    def to_dict(self) -> dict:
        return {
            "roc_auc_ovr": self.roc_auc_ovr, "accuracy": self.accuracy,
            "centroids": self.centroids.tolist(), "fold_auc": self.fold_auc,
            "fold_accuracy": self.fold_accuracy, "zone_counts": np.bincount(self.zones).tolist(),
        }


def zone_labels(coords, k: int = 5, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    from sklearn.cluster import KMeans

    coords = np.asarray(coords, dtype=float)
    if len(np.unique(coords, axis=0)) < k:
        raise ValueError(f"fewer than {k} distinct coordinate points")
    km = KMeans(n_clusters=k, init="k-means++", n_init=10, random_state=seed).fit(coords)
    return km.labels_.astype(np.int64), km.cluster_centers_


def zone_probe(embeddings, coords, k: int = 5, folds: int = 5, seed: int = 0) -> ZoneProbeResult:
    """K-means zones on coordinates, cross-validated logistic regression on embeddings."""
    from sklearn.linear_model import LogisticRegression
    from sklearn.metrics import accuracy_score, roc_auc_score
    from sklearn.model_selection import StratifiedKFold
    from sklearn.pipeline import make_pipeline
    from sklearn.preprocessing import StandardScaler

    emb = np.asarray(embeddings, dtype=float)
    if len(emb) < k * folds:
        raise ValueError(f"need at least {k * folds} samples")
    zones, centroids = zone_labels(coords, k, seed)
    aucs, accs = [], []
    skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    for tr, te in skf.split(emb, zones):
        clf = make_pipeline(StandardScaler(), LogisticRegression(max_iter=2000))
        clf.fit(emb[tr], zones[tr])
        proba = clf.predict_proba(emb[te])
        if len(clf.classes_) == 2:
            aucs.append(float(roc_auc_score(zones[te] == clf.classes_[1], proba[:, 1])))
        else:
            aucs.append(float(roc_auc_score(zones[te], proba, multi_class="ovr", average="macro",
                                            labels=clf.classes_)))
        accs.append(float(accuracy_score(zones[te], clf.classes_[proba.argmax(axis=1)])))
    return ZoneProbeResult(float(np.mean(aucs)), float(np.mean(accs)), centroids, zones, aucs, accs)
