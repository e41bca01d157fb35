"""Standard scaling and CIR -> (magnitude, sin phase, cos phase) tensors."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TAPS_KEPT = 100
STD_FLOOR = 1e-8
FIT_SCOPES = ("source_train_only", "source_plus_target")
SCALER_SCHEMA = 1


@dataclass
class ScalerParams:
    means: np.ndarray
    stds: np.ndarray
    fit_scope: str
    granularity: str = "per_feature"

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.stds = np.asarray(self.stds, dtype=float)
        if self.means.shape != self.stds.shape:
            raise ValueError("means and stds must have the same length")
        if np.any(self.stds <= 0):
            raise ValueError("stds must be strictly positive")
        if self.fit_scope not in FIT_SCOPES:
            raise ValueError(f"unknown fit_scope {self.fit_scope!r}")

    @property
    def feature_axis_len(self) -> int:
        return len(self.means)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCALER_SCHEMA,
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "fit_scope": self.fit_scope,
            "granularity": self.granularity,
            "feature_axis_len": self.feature_axis_len,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, expected_scope: str | None = None) -> "ScalerParams":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        if d.get("schema_version") != SCALER_SCHEMA:
            raise ValueError(f"unsupported scaler schema {d.get('schema_version')!r}")
        if expected_scope is not None and d["fit_scope"] != expected_scope:
            raise ValueError(f"scaler {path} was fitted on {d['fit_scope']}, expected {expected_scope}")
        return cls(d["means"], d["stds"], d["fit_scope"], d.get("granularity", "per_feature"))


def cir_to_channels(cir: np.ndarray, taps: int = TAPS_KEPT) -> np.ndarray:
    """Map complex taps to a raw ``(..., 3, taps)`` array.

    Channel 0 is magnitude, 1 is sin(phase), 2 is cos(phase).  A zero tap
    gets phase 0 (sin 0, cos 1).  Taps beyond ``taps`` are discarded.
    """
    cir = np.asarray(cir)
    if cir.shape[-1] < taps:
        raise ValueError(f"need at least {taps} taps, got {cir.shape[-1]}")
    c = cir[..., :taps].astype(complex)
    mag = np.abs(c)
    zero = mag == 0
    safe = np.where(zero, 1.0, mag)
    sin = np.where(zero, 0.0, c.imag / safe)
    cos = np.where(zero, 1.0, c.real / safe)
    return np.stack([mag, sin, cos], axis=-2)


def fit_scaler(matrix: np.ndarray, scope: str = "source_train_only") -> ScalerParams:
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need an N x D matrix with N >= 2")
    if not np.isfinite(x).all():
        raise ValueError("matrix contains non-finite entries")
    return ScalerParams(x.mean(axis=0), np.maximum(x.std(axis=0), STD_FLOOR), scope)


def apply_scaler(p: ScalerParams, matrix: np.ndarray) -> np.ndarray:
    x = np.asarray(matrix, dtype=float)
    if x.shape[-1] != p.feature_axis_len:
        raise ValueError(f"expected {p.feature_axis_len} columns, got {x.shape[-1]}")
    return (x - p.means) / p.stds


def invert_scaler(p: ScalerParams, matrix: np.ndarray) -> np.ndarray:
    return np.asarray(matrix, dtype=float) * p.stds + p.means


def fit_cir_scaler(source_channels: np.ndarray, target_channels: np.ndarray,
                   granularity: str = "per_tap") -> ScalerParams:
    """Joint source+target scaler over flattened N x 3 x T channel tensors.

    ``per_tap`` gives one (mean, std) per channel x tap; ``per_channel``
    pools all taps of a channel and repeats the statistics along the taps.
    """
    both = np.concatenate([source_channels, target_channels]).astype(float)
    n, ch, taps = both.shape
    if granularity == "per_tap":
        p = fit_scaler(both.reshape(n, ch * taps), "source_plus_target")
        p.granularity = "per_tap"
        return p
    if granularity == "per_channel":
        pooled = both.transpose(0, 2, 1).reshape(n * taps, ch)
        p = fit_scaler(pooled, "source_plus_target")
        return ScalerParams(np.repeat(p.means, taps), np.repeat(p.stds, taps), "source_plus_target", "per_channel")
    raise ValueError(f"unknown granularity {granularity!r}")


def scale_channels(p: ScalerParams, channels: np.ndarray) -> np.ndarray:
    """Normalize an N x 3 x T tensor with a flattened-feature scaler."""
    n = channels.shape[0]
    out = apply_scaler(p, channels.reshape(n, -1)).reshape(channels.shape)
    if not np.isfinite(out).all():
        raise ValueError("non-finite values after scaling")
    return out


def process_cir(p: ScalerParams, cir: np.ndarray) -> np.ndarray:
    """Complex N x taps CIRs -> scaled float32 N x 3 x 100 tensors."""
    return scale_channels(p, cir_to_channels(cir)).astype(np.float32)
