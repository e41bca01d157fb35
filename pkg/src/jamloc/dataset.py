"""Canonical sample model, on-disk format and reproducible splits."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

SCHEMA_VERSION = 1
N_TAPS = 300
DIAGNOSTICS = (
    "PHE", "RSL", "CRCG", "CRCB", "PREJ", "RSSI",
    "IpatovPeak", "IpatovPower", "IpatovF1", "IpatovF2", "IpatovF3",
)
DOMAINS = ("source", "target")
COLUMNS = (
    ["sample_id", "receiver_id", *DIAGNOSTICS]
    + [f"cir_re_{i:03d}" for i in range(N_TAPS)]
    + [f"cir_im_{i:03d}" for i in range(N_TAPS)]
    + ["position_id", "x_cm", "y_cm", "domain"]
)


class DatasetError(ValueError):
    """Raised for missing files, schema mismatches and invalid rows."""


@dataclass(frozen=True)
class CirSample:
    sample_id: int
    receiver_id: int
    diagnostics: np.ndarray
    cir: np.ndarray
    position_id: int
    x_cm: float
    y_cm: float
    domain: str


@dataclass
class SampleSet:
    """Columnar collection of CIR samples.

    Row ``i`` of every array describes one reception event at one receiver.
    ``cir`` is complex with ``N_TAPS`` columns; ``domain`` holds 0 (source)
    or 1 (target).
    """

    sample_id: np.ndarray
    receiver_id: np.ndarray
    diagnostics: np.ndarray
    cir: np.ndarray
    position_id: np.ndarray
    xy: np.ndarray
    domain: np.ndarray
    provenance: str = "synthetic"
    seed: int | None = None

    def __post_init__(self):
        n = len(self.sample_id)
        shapes = {
            "receiver_id": (n,), "diagnostics": (n, len(DIAGNOSTICS)), "cir": (n, N_TAPS),
            "position_id": (n,), "xy": (n, 2), "domain": (n,),
        }
        for name, shape in shapes.items():
            got = getattr(self, name).shape
            if got != shape:
                raise DatasetError(f"{name} has shape {got}, expected {shape}")
        if len(np.unique(self.sample_id)) != n:
            raise DatasetError("sample_id values must be unique")
        if self.provenance not in ("real", "synthetic"):
            raise DatasetError(f"unknown provenance {self.provenance!r}")

    def __len__(self) -> int:
        return len(self.sample_id)

    def __getitem__(self, i: int) -> CirSample:
        return CirSample(
            sample_id=int(self.sample_id[i]),
            receiver_id=int(self.receiver_id[i]),
            diagnostics=self.diagnostics[i].copy(),
            cir=self.cir[i].copy(),
            position_id=int(self.position_id[i]),
            x_cm=float(self.xy[i, 0]),
            y_cm=float(self.xy[i, 1]),
            domain=DOMAINS[int(self.domain[i])],
        )

    def subset(self, idx: Sequence[int] | np.ndarray) -> "SampleSet":
        idx = np.asarray(idx, dtype=np.int64)
        return SampleSet(
            self.sample_id[idx], self.receiver_id[idx], self.diagnostics[idx], self.cir[idx],
            self.position_id[idx], self.xy[idx], self.domain[idx], self.provenance, self.seed,
        )

    @property
    def domain_name(self) -> str:
        kinds = set(np.unique(self.domain).tolist())
        if kinds == {0}:
            return "source"
        if kinds == {1}:
            return "target"
        return "mixed" if kinds else "empty"

    @classmethod
    def from_samples(cls, samples: Sequence[CirSample], provenance="synthetic", seed=None) -> "SampleSet":
        return cls(
            sample_id=np.array([s.sample_id for s in samples], dtype=np.int64),
            receiver_id=np.array([s.receiver_id for s in samples], dtype=np.int64),
            diagnostics=np.array([s.diagnostics for s in samples], dtype=float).reshape(-1, len(DIAGNOSTICS)),
            cir=np.array([s.cir for s in samples], dtype=complex).reshape(-1, N_TAPS),
            position_id=np.array([s.position_id for s in samples], dtype=np.int64),
            xy=np.array([(s.x_cm, s.y_cm) for s in samples], dtype=float).reshape(-1, 2),
            domain=np.array([DOMAINS.index(s.domain) for s in samples], dtype=np.int64),
            provenance=provenance,
            seed=seed,
        )


def concat(sets: Sequence[SampleSet]) -> SampleSet:
    return SampleSet(
        np.concatenate([s.sample_id for s in sets]),
        np.concatenate([s.receiver_id for s in sets]),
        np.concatenate([s.diagnostics for s in sets]),
        np.concatenate([s.cir for s in sets]),
        np.concatenate([s.position_id for s in sets]),
        np.concatenate([s.xy for s in sets]),
        np.concatenate([s.domain for s in sets]),
        sets[0].provenance,
        sets[0].seed,
    )


# ---------------------------------------------------------------------------
# On-disk format


def write_dataset(ss: SampleSet, path: str | Path) -> Path:
    """Write ``ss`` as ``manifest.json`` + ``data.csv`` inside directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        np.hstack([ss.diagnostics, ss.cir.real, ss.cir.imag]),
        columns=COLUMNS[2:2 + len(DIAGNOSTICS) + 2 * N_TAPS],
    )
    frame.insert(0, "receiver_id", ss.receiver_id)
    frame.insert(0, "sample_id", ss.sample_id)
    frame["position_id"] = ss.position_id
    frame["x_cm"] = ss.xy[:, 0]
    frame["y_cm"] = ss.xy[:, 1]
    frame["domain"] = np.asarray(DOMAINS)[ss.domain]
    frame.to_csv(path / "data.csv", index=False, float_format="%.17g", lineterminator="\n", encoding="utf-8")

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "domain": ss.domain_name,
        "provenance": ss.provenance,
        "seed": ss.seed,
        "sample_count": len(ss),
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def load_dataset(path: str | Path) -> SampleSet:
    path = Path(path)
    root = path.parent if path.name == "manifest.json" else path
    manifest_path, data_path = root / "manifest.json", root / "data.csv"
    for p in (manifest_path, data_path):
        if not p.is_file():
            raise DatasetError(f"missing file: {p}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(f"unsupported schema_version {manifest.get('schema_version')!r}")

    with data_path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, [])
        if header != COLUMNS:
            raise DatasetError(f"header mismatch: expected {len(COLUMNS)} canonical columns, got {len(header)}")
        for i, row in enumerate(reader):
            if len(row) != len(COLUMNS):
                raise DatasetError(f"row {i}: expected {len(COLUMNS)} fields, got {len(row)}")
    frame = pd.read_csv(data_path, dtype={"domain": str}, keep_default_na=False, na_values=[""])

    numeric = frame[COLUMNS[:-1]].apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1).to_numpy()
    if bad.any():
        raise DatasetError(f"row {int(np.argmax(bad))}: missing or non-numeric values")
    values = numeric.to_numpy(dtype=float)
    xy = values[:, -2:]
    bad = ~np.isfinite(xy).all(axis=1)
    if bad.any():
        raise DatasetError(f"row {int(np.argmax(bad))}: non-finite ground-truth coordinates")
    domain = frame["domain"].to_numpy()
    bad = ~np.isin(domain, DOMAINS)
    if bad.any():
        raise DatasetError(f"row {int(np.argmax(bad))}: unknown domain {domain[bad][0]!r}")

    nd = len(DIAGNOSTICS)
    re = values[:, 2 + nd:2 + nd + N_TAPS]
    im = values[:, 2 + nd + N_TAPS:2 + nd + 2 * N_TAPS]
    ss = SampleSet(
        sample_id=values[:, 0].astype(np.int64),
        receiver_id=values[:, 1].astype(np.int64),
        diagnostics=values[:, 2:2 + nd],
        cir=re + 1j * im,
        position_id=values[:, -3].astype(np.int64),
        xy=xy,
        domain=(domain == "target").astype(np.int64),
        provenance=manifest.get("provenance", "real"),
        seed=manifest.get("seed"),
    )
    if manifest.get("sample_count") not in (None, len(ss)):
        raise DatasetError(f"manifest declares {manifest['sample_count']} samples, data.csv has {len(ss)}")
    return ss


# ---------------------------------------------------------------------------
# Splits


@dataclass
class Splits:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    strategy: str
    seed: int

    def to_dict(self) -> dict:
        return {
            "train": self.train.tolist(), "val": self.val.tolist(), "test": self.test.tolist(),
            "strategy": self.strategy, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Splits":
        arr = lambda k: np.asarray(d[k], dtype=np.int64)  # noqa: E731
        return cls(arr("train"), arr("val"), arr("test"), d["strategy"], int(d["seed"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Splits":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _allocate(n: int, weights: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``n`` items to ``weights`` (sum 1)."""
    raw = [n * w for w in weights]
    counts = [int(np.floor(r)) for r in raw]
    order = sorted(range(len(weights)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def split(ss: SampleSet, ratios=(0.7, 0.15, 0.15), seed: int = 0, indices=None) -> Splits:
    """Stratified-by-position train/val/test split, a pure function of its inputs."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    pool = np.arange(len(ss)) if indices is None else np.asarray(indices, dtype=np.int64)
    nonempty = sum(r > 0 for r in ratios)
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    labels = ss.position_id[pool]
    for pos in np.unique(labels):
        members = pool[labels == pos]
        if len(members) < nonempty:
            raise ValueError(
                f"position {pos} has {len(members)} samples, fewer than {nonempty} non-empty partitions"
            )
        members = rng.permutation(members)
        start = 0
        for j, c in enumerate(_allocate(len(members), ratios)):
            parts[j].append(members[start:start + c])
            start += c
    out = [np.sort(np.concatenate(p)) if p else np.empty(0, np.int64) for p in parts]
    return Splits(*out, strategy="stratified:position_id:%g/%g/%g" % ratios, seed=seed)


def holdout_split(ss: SampleSet, n_holdout: int = 3000, seed: int = 0) -> Splits:
    """Reserve ``n_holdout`` samples stratified by position.

    The remainder lands in ``train`` (fine-tuning pool) and the hold-out in
    ``test``; ``val`` is empty.
    """
    if not 0 < n_holdout < len(ss):
        raise ValueError(f"hold-out size {n_holdout} must lie in (0, {len(ss)})")
    positions, counts = np.unique(ss.position_id, return_counts=True)
    per_pos = _allocate(n_holdout, counts / counts.sum())
    rng = np.random.default_rng(seed)
    rest, hold = [], []
    for pos, k in zip(positions, per_pos):
        members = rng.permutation(np.flatnonzero(ss.position_id == pos))
        hold.append(members[:k])
        rest.append(members[k:])
    return Splits(
        train=np.sort(np.concatenate(rest)), val=np.empty(0, np.int64),
        test=np.sort(np.concatenate(hold)), strategy=f"holdout:{n_holdout}", seed=seed,
    )
