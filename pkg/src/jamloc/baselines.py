"""Tabular baselines on the 11 diagnostic readings."""

from __future__ import annotations

import time
from typing import Callable, Protocol

import numpy as np
import torch
import torch.nn as nn
from scipy.spatial.distance import cdist

from .analysis import classification_metrics, localization_metrics
from .models import SimpleNN
from .preprocess import ScalerParams, apply_scaler, fit_scaler

TASKS = ("classify", "regress")


class TabularModel(Protocol):
    def fit(self, X: np.ndarray, y: np.ndarray) -> "TabularModel": ...

    def predict(self, X: np.ndarray) -> np.ndarray: ...


def knn_predict(train_X, train_y, query_X, k: int = 5, task: str = "classify",
                chunk: int = 2048) -> np.ndarray:
    """Brute-force Euclidean k-nearest neighbours.

    Classification takes the majority label (ties go to the smallest class
    id); regression averages neighbour targets.  Equidistant neighbours are
    ordered by training index.
    """
    X = np.asarray(train_X, dtype=float)
    y = np.asarray(train_y)
    Q = np.asarray(query_X, dtype=float)
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if not 1 <= k <= len(X):
        raise ValueError(f"k={k} must lie in [1, {len(X)}]")
    out = []
    for start in range(0, len(Q), chunk):
        d = cdist(Q[start:start + chunk], X, "sqeuclidean")
        nn_idx = np.argsort(d, axis=1, kind="stable")[:, :k]
        labels = y[nn_idx]
        if task == "regress":
            out.append(labels.astype(float).mean(axis=1))
        else:
            preds = []
            for row in labels:
                values, counts = np.unique(row, return_counts=True)
                preds.append(values[np.argmax(counts)])  # np.unique sorts, argmax takes first max
            out.append(np.asarray(preds))
    return np.concatenate(out)


class KNN:
    def __init__(self, k: int = 5, task: str = "classify"):
        self.k, self.task = k, task

    def fit(self, X, y):
        self.X_, self.y_ = np.asarray(X, float), np.asarray(y)
        return self

    def predict(self, X):
        return knn_predict(self.X_, self.y_, X, min(self.k, len(self.X_)), self.task)


class SimpleNNModel:
    """Trainer wrapper around :class:`SimpleNN` with a fit/predict surface."""

    def __init__(self, task: str = "classify", epochs: int = 50, batch_size: int = 256, lr: float = 1e-3,
                 width: int = 128, seed: int = 0):
        self.task, self.epochs, self.batch_size, self.lr = task, epochs, batch_size, lr
        self.width, self.seed = width, seed

    def fit(self, X, y):
        torch.manual_seed(self.seed)
        X = torch.as_tensor(np.asarray(X), dtype=torch.float32)
        if self.task == "classify":
            self.classes_, codes = np.unique(np.asarray(y), return_inverse=True)
            target = torch.as_tensor(codes, dtype=torch.long)
            self.net = SimpleNN(X.shape[1], "classify52", self.width, n_classes=len(self.classes_))
            crit: Callable = nn.CrossEntropyLoss()
        else:
            y = np.asarray(y, dtype=np.float32)
            self.y_mean_, self.y_std_ = y.mean(axis=0), y.std(axis=0) + 1e-8
            target = torch.as_tensor((y - self.y_mean_) / self.y_std_)
            self.net = SimpleNN(X.shape[1], "regress2", self.width)
            crit = nn.MSELoss()
        opt = torch.optim.Adam(self.net.parameters(), lr=self.lr)
        gen = torch.Generator().manual_seed(self.seed)
        self.net.train()
        for _ in range(self.epochs):
            order = torch.randperm(len(X), generator=gen)
            for b in range(0, len(X), self.batch_size):
                idx = order[b:b + self.batch_size]
                loss = crit(self.net(X[idx]), target[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
        return self

    @torch.no_grad()
    def predict(self, X):
        self.net.eval()
        out = self.net(torch.as_tensor(np.asarray(X), dtype=torch.float32)).numpy()
        if self.task == "classify":
            return self.classes_[out.argmax(axis=1)]
        return out * self.y_std_ + self.y_mean_


_ADAPTERS: dict[str, Callable[[str, dict], TabularModel]] = {}


def register_adapter(name: str, factory: Callable[[str, dict], TabularModel]) -> None:
    """Plug in an external model; ``factory(task, params)`` must return a fit/predict object."""
    _ADAPTERS[name] = factory


def _sklearn_forest(task: str, params: dict) -> TabularModel:
    from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor

    cls = RandomForestClassifier if task == "classify" else RandomForestRegressor
    return cls(**{"n_estimators": 100, "random_state": 0, **params})


register_adapter("sklearn_rf", _sklearn_forest)


def make_model(name: str, task: str, cfg: dict | None = None) -> TabularModel:
    cfg = dict(cfg or {})
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if name == "knn":
        return KNN(k=int(cfg.get("k", 5)), task=task)
    if name == "simplenn":
        return SimpleNNModel(task=task, **cfg)
    if name in _ADAPTERS:
        return _ADAPTERS[name](task, cfg)
    raise ValueError(f"unknown model tag {name!r}")


def train_tabular(name: str, task: str, X_train, y_train, X_test, y_test,
                  scaler: ScalerParams | None = None, cfg: dict | None = None):
    """Fit on standardized training diagnostics and evaluate on the test rows.

    ``scaler`` must have been fitted on the training rows only; when omitted
    it is fitted here from ``X_train``.  Returns ``(model, scaler, report)``.
    """
    if scaler is None:
        scaler = fit_scaler(X_train, "source_train_only")
    elif scaler.fit_scope != "source_train_only":
        raise ValueError("diagnostic scaler must be fitted on the training split only")
    model = make_model(name, task, cfg)
    t0 = time.perf_counter()
    model.fit(apply_scaler(scaler, X_train), np.asarray(y_train))
    pred = model.predict(apply_scaler(scaler, X_test))
    minutes = (time.perf_counter() - t0) / 60
    if task == "classify":
        report = classification_metrics(np.asarray(y_test), pred, minutes)
    else:
        report = localization_metrics(pred, y_test, minutes).to_dict()
    return model, scaler, report
