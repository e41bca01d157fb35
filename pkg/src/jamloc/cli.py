"""Command-line entry point: ``jamloc <command> [flags]``.

Exit status: 0 success, 1 validation error (bad flags, config, inputs),
2 runtime failure.  Every command writes ``run_manifest.json`` into its
output directory; the manifest carries no timestamps so reruns with the
same config and seed are byte-identical.  Wall-clock timings go to
``timing.json``, which is excluded from that guarantee.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import pickle
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, config, dataset, preprocess, training
from .models import AutoencoderSpec

log = logging.getLogger("jamloc")

MANIFEST_SCHEMA = 1
COMMANDS = ("synth", "split", "preprocess", "baseline", "pretrain", "align", "finetune",
            "eval", "diagnose", "importance", "probe", "benchmark")


class UsageError(Exception):
    """Invalid user input; maps to exit status 1."""


# ---------------------------------------------------------------------------
# helpers


def _versions() -> dict:
    import sklearn
    import torch

    return {"python": platform.python_version(), "numpy": np.__version__,
            "torch": torch.__version__, "scikit-learn": sklearn.__version__}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _write_csv(path: Path, rows: list[dict]) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return path


def _out_dir(args) -> Path:
    if not args.out:
        raise UsageError(f"{args.command} needs --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(value, flag: str, command: str):
    if value is None:
        raise UsageError(f"{command} needs {flag}")
    return value


def _load(path, what: str) -> dataset.SampleSet:
    if path is None:
        raise UsageError(f"missing {what} dataset (--data / --target or JAMLOC_DATA_DIR)")
    try:
        return dataset.load_dataset(path)
    except (dataset.DatasetError, FileNotFoundError) as e:
        raise UsageError(str(e)) from e


def _finish(args, cfg: dict, out: Path, artifacts: list[Path], timing: dict | None = None) -> None:
    names = sorted({p.name for p in artifacts})
    manifest = {
        "schema_version": MANIFEST_SCHEMA,
        "command": args.command,
        "seed": cfg["seed"],
        "config_hash": config.config_hash(cfg),
        "config": cfg,
        "inputs": {k: getattr(args, k) for k in ("data", "target", "splits", "target_splits", "scaler",
                                                 "checkpoint") if getattr(args, k, None)},
        "artifacts": {n: _sha256(out / n) for n in names},
        "versions": _versions(),
    }
    _write_json(out / "run_manifest.json", manifest)
    if timing is not None:
        _write_json(out / "timing.json", timing)


def _processed(scaler_path, ss: dataset.SampleSet) -> np.ndarray:
    try:
        p = preprocess.ScalerParams.load(scaler_path, expected_scope="source_plus_target")
    except (OSError, ValueError) as e:
        raise UsageError(f"bad CIR scaler {scaler_path}: {e}") from e
    return preprocess.process_cir(p, ss.cir).astype(np.float32)


def _subset(ss_len: int, splits_path, part: str) -> np.ndarray:
    if splits_path is None:
        return np.arange(ss_len)
    sp = dataset.Splits.load(splits_path)
    idx = np.asarray(getattr(sp, part), dtype=np.int64)
    if idx.size and idx.max() >= ss_len:
        raise UsageError(f"split {splits_path} does not match the dataset")
    return idx


def _spec(cfg: dict) -> AutoencoderSpec:
    return AutoencoderSpec(noise_sigma=float(cfg["model"]["noise_sigma"]), noise_mode=cfg["model"]["noise_mode"])


def _load_state(args, cfg) -> training.TrainingState:
    ck = _require(args.checkpoint, "--checkpoint", args.command)
    try:
        return training.load_state(ck, expected_spec=_spec(cfg))
    except FileNotFoundError as e:
        raise UsageError(f"no checkpoint at {ck}") from e


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, cfg) -> None:
    from . import synth

    out = _out_dir(args)
    sc = cfg["synth"]
    domain = args.domain or sc["domain"]
    kw = {"align_first_path": bool(sc["align_first_path"])}
    if domain == "source":
        scfg = synth.default_source_config(sc["n_positions"], sc["samples_per_position"], **kw)
    elif domain == "target":
        avoid = synth.grid_positions(sc.get("source_positions", 16))
        scfg = synth.default_target_config(sc["n_positions"], sc["samples_per_position"], avoid=avoid,
                                           position_seed=sc["position_seed"], **kw)
    else:
        raise UsageError(f"unknown domain {domain!r}")
    ss = synth.synth_generate(scfg, cfg["seed"])
    dataset.write_dataset(ss, out)
    _finish(args, cfg, out, [out / "data.csv", out / "manifest.json"])
    print(f"wrote {len(ss)} {domain} samples to {out}")


def cmd_split(args, cfg) -> None:
    ss = _load(args.data, "input")
    out = _out_dir(args)
    if ss.domain_name == "target":
        sp = dataset.holdout_split(ss, min(int(cfg["split"]["n_holdout"]), len(ss) // 2), cfg["seed"])
    else:
        sp = dataset.split(ss, tuple(cfg["split"]["ratios"]), cfg["seed"])
    sp.save(out / "splits.json")
    _finish(args, cfg, out, [out / "splits.json"])
    print(f"train/val/test = {len(sp.train)}/{len(sp.val)}/{len(sp.test)} ({sp.strategy})")


def cmd_preprocess(args, cfg) -> None:
    src = _load(args.data, "source")
    tgt = _load(args.target, "target")
    out = _out_dir(args)
    taps = int(cfg["preprocess"]["taps"])
    s_ch = preprocess.cir_to_channels(src.cir, taps)
    t_ch = preprocess.cir_to_channels(tgt.cir, taps)
    cir_p = preprocess.fit_cir_scaler(s_ch, t_ch, granularity=cfg["preprocess"]["granularity"])
    cir_p.save(out / "cir_scaler.json")
    arts = [out / "cir_scaler.json"]
    train = _subset(len(src), args.splits, "train")
    diag_p = preprocess.fit_scaler(src.diagnostics[train], "source_train_only")
    diag_p.save(out / "diag_scaler.json")
    arts.append(out / "diag_scaler.json")
    _finish(args, cfg, out, arts)
    print(f"fitted CIR scaler on {len(src)}+{len(tgt)} samples, diagnostic scaler on {len(train)}")


def cmd_baseline(args, cfg) -> None:
    from .baselines import train_tabular

    src = _load(args.data, "source")
    out = _out_dir(args)
    b = cfg["baseline"]
    tr = _subset(len(src), args.splits, "train")
    te = _subset(len(src), args.splits, "test") if args.splits else tr
    task = b["task"]
    y = src.xy if task == "regress" else src.position_id
    params = dict(b.get("params") or {})
    if b["model"] == "simplenn":
        params.setdefault("seed", cfg["seed"])
    model, scaler, report = train_tabular(b["model"], task, src.diagnostics[tr], y[tr],
                                          src.diagnostics[te], y[te], cfg=params)
    timing = {"fit_predict_min": report.get("wall_time_min")}
    report = {**report, "wall_time_min": None}
    with (out / "model.pkl").open("wb") as fh:
        pickle.dump({"kind": "tabular", "name": b["model"], "task": task, "model": model, "scaler": scaler}, fh)
    _write_json(out / "metrics.json", report)
    _finish(args, cfg, out, [out / "model.pkl", out / "metrics.json"], timing)
    key = "mean_err" if task == "regress" else "accuracy"
    print(f"{b['model']} {task}: {key} = {report[key]:.4f}")


def _phase_cfg(cfg: dict, phase: str) -> training.PhaseConfig:
    c = cfg[phase]
    common = dict(epochs=int(c["epochs"]), batch_size=int(c["batch_size"]), base_lr=float(c["base_lr"]),
                  rec_reduction=cfg["rec_reduction"])
    if phase == "pretrain":
        return training.pretrain_config(**common)
    if phase == "align":
        pc = training.align_config(
            **common,
            lam=training.ScheduleSpec("sigmoid_ramp", c["lambda_start"], c["lambda_end"], int(c["epochs"])),
            early_stop=training.EarlyStop(patience=int(c["patience"]), min_delta=float(c["min_delta"]),
                                          min_epochs=int(c["min_epochs"])),
        )
    else:
        e = int(c["epochs"])
        pc = training.finetune_config(
            **common, head_lr=float(c["head_lr"]), beta=float(c["beta"]),
            alpha=training.ScheduleSpec("linear", c["alpha_start"], c["alpha_end"], e),
            lam=training.ScheduleSpec("linear", c["lambda_start"], c["lambda_end"], e),
        )
    return pc if c.get("adversarial", True) else training.non_adversarial(pc)


def _save_phase(args, cfg, state, out: Path, metrics: dict | None = None) -> None:
    from .plotting import plot_history

    training.save_state(state, out, metrics)
    arts = [out / n for n in ("params.pt", "state.json", "history.jsonl")]
    hist = state.phase_history()
    if hist:
        arts.append(plot_history(hist, out / f"{state.phase}_history.png"))
    _finish(args, cfg, out, arts)


def _deterministic(cfg) -> None:
    import torch

    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)
    if cfg["device"] != "cpu":
        raise UsageError("only --device cpu is supported in deterministic mode")


def cmd_pretrain(args, cfg) -> None:
    _deterministic(cfg)
    src = _load(args.data, "source")
    out = _out_dir(args)
    x = _processed(_require(args.scaler, "--scaler", "pretrain"), src)[_subset(len(src), args.splits, "train")]
    state = training.pretrain(x, _phase_cfg(cfg, "pretrain"), _spec(cfg), seed=cfg["seed"])
    _save_phase(args, cfg, state, out)
    print(f"pretrain: final L_rec {state.history[-1]['L_rec']:.4f}")


def cmd_align(args, cfg) -> None:
    _deterministic(cfg)
    src, tgt = _load(args.data, "source"), _load(args.target, "target")
    out = _out_dir(args)
    scaler = _require(args.scaler, "--scaler", "align")
    sx = _processed(scaler, src)[_subset(len(src), args.splits, "train")]
    tx = _processed(scaler, tgt)[_subset(len(tgt), args.target_splits, "train")]
    state = training.align(sx, tx, _load_state(args, cfg), _phase_cfg(cfg, "align"))
    _save_phase(args, cfg, state, out)
    print(f"align: {state.epoch} epochs, final AUC {state.history[-1]['AUC']:.4f}")


def cmd_finetune(args, cfg) -> None:
    _deterministic(cfg)
    tgt = _load(args.target or args.data, "target")
    out = _out_dir(args)
    tx = _processed(_require(args.scaler, "--scaler", "finetune"), tgt)
    lab = _subset(len(tgt), args.target_splits, "train")
    hold = _subset(len(tgt), args.target_splits, "test") if args.target_splits else lab
    state = _load_state(args, cfg)
    allow = "pretrain" if state.phase == "pretrain" else "align"
    state = training.finetune(tx[lab], tgt.xy[lab].astype(np.float32), state, _phase_cfg(cfg, "finetune"),
                              tx[hold], tgt.xy[hold].astype(np.float32), allow_from=allow)
    _save_phase(args, cfg, state, out, metrics=state.best)
    print(f"finetune: best hold-out mean error {state.best['holdout_mean_err']:.2f} cm")


def cmd_eval(args, cfg) -> None:
    from .plotting import plot_errors

    ss = _load(args.data, "evaluation")
    out = _out_dir(args)
    idx = _subset(len(ss), args.splits, args.part)
    ck = Path(_require(args.checkpoint, "--checkpoint", "eval"))
    t0 = time.perf_counter()
    if (ck / "model.pkl").exists():
        with (ck / "model.pkl").open("rb") as fh:
            blob = pickle.load(fh)
        if blob["task"] != "regress":
            raise UsageError("eval reports localization metrics; checkpoint is a classifier")
        pred = blob["model"].predict(preprocess.apply_scaler(blob["scaler"], ss.diagnostics[idx]))
    else:
        state = _load_state(args, cfg)
        x = _processed(_require(args.scaler, "--scaler", "eval"), ss)[idx]
        pred = training.predict(state.model, x)
    minutes = (time.perf_counter() - t0) / 60
    report = analysis.localization_metrics(pred, ss.xy[idx])
    report.save(out / "metrics.json")
    _write_csv(out / "metrics.csv", [report.to_dict()])
    fig = plot_errors(pred, ss.xy[idx], out / "errors.png", title=f"{ss.domain_name} {args.part}")
    _finish(args, cfg, out, [out / "metrics.json", out / "metrics.csv", fig], {"predict_min": minutes})
    print("\t".join(f"{k}={v:.4f}" for k, v in report.to_dict().items() if isinstance(v, float)))


def cmd_diagnose(args, cfg) -> None:
    from .plotting import plot_tap_shift

    src, tgt = _load(args.data, "source"), _load(args.target, "target")
    out = _out_dir(args)
    scaler = _require(args.scaler, "--scaler", "diagnose")
    sx, tx = _processed(scaler, src), _processed(scaler, tgt)
    arts = []
    for ch, name in enumerate(("magnitude", "sin_phase", "cos_phase")):
        shift = analysis.per_tap_emd(sx[:, ch, :], tx[:, ch, :])
        rows = shift.to_rows()
        arts.append(_write_csv(out / f"tap_shift_{name}.csv", rows))
        arts.append(plot_tap_shift(rows, out / f"tap_shift_{name}.png", title=f"{name}: source vs target"))
        if ch == 0:
            flagged = int(shift.flagged.sum())
    _finish(args, cfg, out, arts)
    print(f"magnitude channel: {flagged} of {sx.shape[2]} taps flagged")


def cmd_importance(args, cfg) -> None:
    from .plotting import plot_importance

    ss = _load(args.data, "input")
    out = _out_dir(args)
    idx = _subset(len(ss), args.splits, args.part)
    table = analysis.importance_table(ss.diagnostics[idx], ss.xy[idx], ss.position_id[idx],
                                      list(dataset.DIAGNOSTICS), bins=int(cfg["importance"]["bins"]))
    rows = [{"feature": f, **{m: table["measures"][m][f] for m in table["measures"]}, "mean_rank": r}
            for f, r in table["mean_rank"]]
    arts = [_write_csv(out / "importance.csv", rows), _write_json(out / "importance.json", table),
            plot_importance(table["mean_rank"], out / "importance.png")]
    _finish(args, cfg, out, arts)
    for r in rows:
        print(f"{r['feature']}\t{r['mean_rank']:.2f}")


def cmd_probe(args, cfg) -> None:
    from .plotting import plot_zones

    ss = _load(args.data, "input")
    out = _out_dir(args)
    idx = _subset(len(ss), args.splits, args.part)
    state = _load_state(args, cfg)
    emb = training.embed(state.model, _processed(_require(args.scaler, "--scaler", "probe"), ss)[idx])
    res = analysis.zone_probe(emb, ss.xy[idx], int(cfg["probe"]["k"]), int(cfg["probe"]["folds"]), cfg["seed"])
    arts = [_write_json(out / "probe.json", res.to_dict()),
            plot_zones(ss.xy[idx], res.zones, res.centroids, out / "zones.png")]
    _finish(args, cfg, out, arts)
    print(f"zone probe: ROC-AUC {res.roc_auc_ovr:.4f}, accuracy {res.accuracy:.4f}")


def cmd_benchmark(args, cfg) -> None:
    from . import benchmark
    from .plotting import plot_history

    out = _out_dir(args)
    seeds = args.seeds or [cfg["seed"]]
    t0 = time.perf_counter()
    results = [benchmark.run_seed(benchmark.BenchmarkConfig(), s) for s in seeds]
    timing = {"minutes": (time.perf_counter() - t0) / 60, "per_seed": [r.pop("minutes") for r in results]}
    summary = benchmark.summarize(results)
    arts = [_write_json(out / "benchmark.json", {"seeds": results, "summary": summary}),
            _write_csv(out / "benchmark.csv", summary["rows"])]
    for r in results:
        auc_hist = [{"phase": "align", "epoch": i + 1, "AUC": a} for i, a in enumerate(r["a_cnt"]["align_auc"])]
        arts.append(plot_history(auc_hist, out / f"align_auc_seed{r['seed']}.png"))
    _finish(args, cfg, out, arts, timing)
    for row in summary["rows"]:
        print("\t".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. --set pretrain.epochs=5")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--data", help="dataset directory (default: config 'data' or $JAMLOC_DATA_DIR)")
    common.add_argument("--target", help="target-domain dataset directory")
    common.add_argument("--splits", help="splits.json for --data")
    common.add_argument("--target-splits", help="splits.json for --target")
    common.add_argument("--scaler", help="CIR scaler JSON from 'preprocess'")
    common.add_argument("--checkpoint", help="checkpoint directory")
    common.add_argument("--device", help="torch device (cpu)")
    common.add_argument("--part", choices=("train", "val", "test"), default="test",
                        help="split partition used by eval/importance/probe")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="jamloc", description="Domain-adaptive UWB jammer localization toolkit.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    helps = {
        "synth": "generate a synthetic dataset", "split": "write train/val/test indices",
        "preprocess": "fit CIR and diagnostic scalers", "baseline": "train a tabular baseline",
        "pretrain": "denoising autoencoder pre-training", "align": "adversarial domain alignment",
        "finetune": "supervised fine-tuning on labeled target data", "eval": "metrics for a checkpoint",
        "diagnose": "per-tap source/target shift report", "importance": "diagnostic feature importance",
        "probe": "spatial-zone probe on embeddings", "benchmark": "synthetic domain-shift benchmark",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "synth":
            sp.add_argument("--domain", choices=dataset.DOMAINS)
        if name == "benchmark":
            sp.add_argument("--seeds", type=int, nargs="+")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = config.load_config(args.config, args.set)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.device is not None:
            cfg["device"] = args.device
        args.data = config.resolve_data_dir(cfg, args.data)
        HANDLERS[args.command](args, cfg)
        return 0
    except (UsageError, config.ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except training.TrainingError as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - top-level guard maps to the runtime exit code
        log.debug("unhandled", exc_info=True)
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
