import hashlib
import json
from pathlib import Path

import pytest
import yaml

from jamloc import cli, config, training

TINY = ["--set", "synth.n_positions=4", "--set", "synth.samples_per_position=10"]
FAST = ["--set", "pretrain.epochs=1", "--set", "pretrain.batch_size=16",
        "--set", "align.epochs=2", "--set", "align.batch_size=16", "--set", "align.min_epochs=1",
        "--set", "finetune.epochs=2", "--set", "finetune.batch_size=16", "--set", "split.n_holdout=20"]


def _run(*argv) -> int:
    return cli.main([str(a) for a in argv])


def _tree_digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


# ---------------------------------------------------------------------------
# configuration


def test_config_defaults_and_overrides(tmp_path):
    cfg = config.load_config()
    assert cfg == config.DEFAULTS and cfg is not config.DEFAULTS
    f = tmp_path / "run.yaml"
    f.write_text(yaml.safe_dump({"seed": 5, "synth": {"n_positions": 3}}))
    cfg = config.load_config(f, ["synth.n_positions=9", "align.adversarial=false"])
    assert cfg["seed"] == 5 and cfg["synth"]["n_positions"] == 9 and cfg["align"]["adversarial"] is False
    assert cfg["synth"]["samples_per_position"] == config.DEFAULTS["synth"]["samples_per_position"]
    assert config.config_hash(cfg) != config.config_hash(config.DEFAULTS)


def test_config_errors(tmp_path):
    with pytest.raises(config.ConfigError):
        config.load_config(overrides=["synth.nope=1"])
    with pytest.raises(config.ConfigError):
        config.load_config(overrides=["seed"])
    f = tmp_path / "bad.yaml"
    f.write_text(yaml.safe_dump({"unknown_section": 1}))
    with pytest.raises(config.ConfigError):
        config.load_config(f)
    with pytest.raises(config.ConfigError):
        config.load_config(tmp_path / "missing.yaml")


def test_data_dir_precedence(monkeypatch):
    monkeypatch.setenv("JAMLOC_DATA_DIR", "/env")
    assert config.resolve_data_dir({"data": None}, None) == "/env"
    assert config.resolve_data_dir({"data": "/cfg"}, None) == "/cfg"
    assert config.resolve_data_dir({"data": "/cfg"}, "/flag") == "/flag"
    monkeypatch.delenv("JAMLOC_DATA_DIR")
    assert config.resolve_data_dir({"data": None}, None) is None


# ---------------------------------------------------------------------------
# exit codes and manifests


def test_synth_byte_equal(tmp_path):
    for d in ("a", "b"):
        assert _run("synth", "--seed", 7, "--out", tmp_path / d, *TINY) == 0
    assert (tmp_path / "a/data.csv").read_bytes() == (tmp_path / "b/data.csv").read_bytes()
    assert _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b")
    assert _run("synth", "--seed", 8, "--out", tmp_path / "c", *TINY) == 0
    assert (tmp_path / "a/data.csv").read_bytes() != (tmp_path / "c/data.csv").read_bytes()


def test_run_manifest_contents(tmp_path):
    assert _run("synth", "--seed", 3, "--out", tmp_path, *TINY) == 0
    m = json.loads((tmp_path / "run_manifest.json").read_text())
    assert m["command"] == "synth" and m["seed"] == 3 and m["schema_version"]
    assert m["config_hash"] == config.config_hash(m["config"])
    assert set(m["artifacts"]) == {"data.csv", "manifest.json"}
    assert m["artifacts"]["data.csv"] == hashlib.sha256((tmp_path / "data.csv").read_bytes()).hexdigest()
    assert {"python", "numpy", "torch"} <= set(m["versions"])


def test_flag_beats_set_beats_file(tmp_path):
    f = tmp_path / "run.yaml"
    f.write_text(yaml.safe_dump({"seed": 5, "synth": {"n_positions": 3, "samples_per_position": 10}}))
    assert _run("synth", "--config", f, "--set", "seed=6", "--set", "synth.n_positions=2",
                "--seed", 7, "--out", tmp_path / "o") == 0
    m = json.loads((tmp_path / "o/run_manifest.json").read_text())
    assert m["seed"] == 7 and m["config"]["synth"]["n_positions"] == 2
    # positions x samples per position x receivers
    assert json.loads((tmp_path / "o/manifest.json").read_text())["sample_count"] == 2 * 10 * 4


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    [],
    ["synth"],
    ["synth", "--out", "{tmp}", "--set", "synth.bogus=1"],
    ["synth", "--out", "{tmp}", "--seed", "notanint"],
    ["split", "--out", "{tmp}", "--data", "{tmp}/missing"],
    ["pretrain", "--out", "{tmp}", "--data", "{tmp}/missing"],
])
def test_validation_errors_exit_1(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("JAMLOC_DATA_DIR", raising=False)
    assert cli.main([a.replace("{tmp}", str(tmp_path)) for a in argv]) == 1
    assert capsys.readouterr().err


def test_runtime_failure_exit_2(tmp_path, monkeypatch, capsys):
    assert _run("synth", "--seed", 0, "--out", tmp_path / "s", *TINY) == 0
    assert _run("synth", "--seed", 1, "--domain", "target", "--out", tmp_path / "t", *TINY) == 0
    assert _run("preprocess", "--data", tmp_path / "s", "--target", tmp_path / "t", "--out", tmp_path / "p") == 0

    def boom(*a, **k):
        raise training.TrainingError("non-finite loss")

    monkeypatch.setattr(training, "pretrain", boom)
    assert _run("pretrain", "--data", tmp_path / "s", "--scaler", tmp_path / "p/cir_scaler.json",
                "--out", tmp_path / "ck") == 2
    assert "non-finite" in capsys.readouterr().err


def test_env_var_supplies_data_dir(tmp_path, monkeypatch):
    assert _run("synth", "--seed", 0, "--out", tmp_path / "s", *TINY) == 0
    monkeypatch.setenv("JAMLOC_DATA_DIR", str(tmp_path / "s"))
    assert _run("split", "--out", tmp_path / "sp") == 0
    assert json.loads((tmp_path / "sp/run_manifest.json").read_text())["inputs"]["data"] == str(tmp_path / "s")


# ---------------------------------------------------------------------------
# full pipeline at toy scale


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    s, t = root / "src", root / "tgt"
    assert _run("synth", "--seed", 0, "--out", s, *TINY) == 0
    assert _run("synth", "--seed", 1, "--domain", "target", "--out", t, *TINY) == 0
    inputs = {"src": _tree_digest(s), "tgt": _tree_digest(t)}
    steps = [
        ("split", "--data", s, "--out", root / "ssp"),
        ("split", "--data", t, "--out", root / "tsp", *FAST),
        ("preprocess", "--data", s, "--target", t, "--splits", root / "ssp/splits.json", "--out", root / "pp"),
        ("baseline", "--data", s, "--splits", root / "ssp/splits.json", "--out", root / "knn"),
        ("pretrain", "--data", s, "--splits", root / "ssp/splits.json", "--scaler", root / "pp/cir_scaler.json",
         "--out", root / "pre", *FAST),
        ("align", "--data", s, "--target", t, "--splits", root / "ssp/splits.json",
         "--target-splits", root / "tsp/splits.json", "--scaler", root / "pp/cir_scaler.json",
         "--checkpoint", root / "pre", "--out", root / "ali", *FAST),
        ("finetune", "--target", t, "--target-splits", root / "tsp/splits.json",
         "--scaler", root / "pp/cir_scaler.json", "--checkpoint", root / "ali", "--out", root / "ft", *FAST),
        ("eval", "--data", t, "--splits", root / "tsp/splits.json", "--scaler", root / "pp/cir_scaler.json",
         "--checkpoint", root / "ft", "--out", root / "ev"),
        ("eval", "--data", s, "--splits", root / "ssp/splits.json", "--checkpoint", root / "knn",
         "--out", root / "ev_knn"),
        ("diagnose", "--data", s, "--target", t, "--scaler", root / "pp/cir_scaler.json", "--out", root / "dg"),
        ("importance", "--data", s, "--part", "train", "--splits", root / "ssp/splits.json", "--out", root / "imp"),
        ("probe", "--data", s, "--scaler", root / "pp/cir_scaler.json", "--checkpoint", root / "ft",
         "--set", "probe.k=2", "--set", "probe.folds=2", "--out", root / "pr"),
    ]
    codes = [_run(*step) for step in steps]
    return root, inputs, codes


def test_pipeline_runs(pipeline):
    root, _, codes = pipeline
    assert codes == [0] * len(codes)
    expected = {
        "ssp": ["splits.json"], "pp": ["cir_scaler.json", "diag_scaler.json"], "knn": ["model.pkl", "metrics.json"],
        "pre": ["params.pt", "state.json", "history.jsonl", "pretrain_history.png"],
        "ali": ["align_history.png"], "ft": ["finetune_history.png"],
        "ev": ["metrics.json", "metrics.csv", "errors.png", "timing.json"],
        "dg": ["tap_shift_magnitude.csv", "tap_shift_cos_phase.png"],
        "imp": ["importance.csv", "importance.json", "importance.png"], "pr": ["probe.json", "zones.png"],
    }
    for d, names in expected.items():
        for n in names + ["run_manifest.json"]:
            assert (root / d / n).is_file(), f"{d}/{n}"
    ev = json.loads((root / "ev/metrics.json").read_text())
    assert ev["n"] == 20 and ev["mean_err"] > 0
    assert json.loads((root / "ali/state.json").read_text())["phase"] == "align"


def test_pipeline_leaves_inputs_untouched(pipeline):
    root, inputs, _ = pipeline
    assert _tree_digest(root / "src") == inputs["src"] and _tree_digest(root / "tgt") == inputs["tgt"]


def test_training_commands_rerun_byte_identical(pipeline, tmp_path):
    root, _, _ = pipeline
    args = ["--data", root / "src", "--splits", root / "ssp/splits.json", "--scaler", root / "pp/cir_scaler.json",
            *FAST]
    assert _run("pretrain", *args, "--out", tmp_path / "a") == 0
    assert _run("pretrain", *args, "--out", tmp_path / "b") == 0
    assert _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b") == _tree_digest(root / "pre")


def test_eval_rejects_wrong_scaler_scope(pipeline, tmp_path):
    root, _, _ = pipeline
    assert _run("eval", "--data", root / "tgt", "--scaler", root / "pp/diag_scaler.json",
                "--checkpoint", root / "ft", "--out", tmp_path) == 1


# ---------------------------------------------------------------------------
# end-to-end transfer property


@pytest.mark.slow
def test_cli_transfer_beats_source_only(tmp_path):
    """Adapted target error < 0.7x the source-trained model's target error."""
    sizes = ["--set", "synth.samples_per_position=40", "--set", "split.n_holdout=120",
             "--set", "pretrain.epochs=12", "--set", "pretrain.batch_size=64",
             "--set", "align.epochs=20", "--set", "align.batch_size=64",
             "--set", "finetune.epochs=40", "--set", "finetune.batch_size=64"]
    s, t, sc = tmp_path / "s", tmp_path / "t", tmp_path / "pp/cir_scaler.json"
    ssp, tsp = tmp_path / "ssp/splits.json", tmp_path / "tsp/splits.json"
    steps = [
        ("synth", "--out", s, "--set", "synth.n_positions=16"),
        ("synth", "--domain", "target", "--seed", 7919, "--out", t, "--set", "synth.n_positions=8"),
        ("split", "--data", s, "--out", tmp_path / "ssp"),
        ("split", "--data", t, "--out", tmp_path / "tsp"),
        ("preprocess", "--data", s, "--target", t, "--out", tmp_path / "pp"),
        ("pretrain", "--data", s, "--splits", ssp, "--scaler", sc, "--out", tmp_path / "pre"),
        # source-only: supervised fine-tuning on labeled source data, no reversal
        ("finetune", "--target", s, "--target-splits", ssp, "--scaler", sc, "--checkpoint", tmp_path / "pre",
         "--set", "finetune.adversarial=false", "--out", tmp_path / "so"),
        ("eval", "--data", t, "--splits", tsp, "--scaler", sc, "--checkpoint", tmp_path / "so",
         "--out", tmp_path / "ev_so"),
        ("align", "--data", s, "--target", t, "--splits", ssp, "--target-splits", tsp, "--scaler", sc,
         "--checkpoint", tmp_path / "pre", "--out", tmp_path / "ali"),
        ("finetune", "--target", t, "--target-splits", tsp, "--scaler", sc, "--checkpoint", tmp_path / "ali",
         "--out", tmp_path / "ft"),
        ("eval", "--data", t, "--splits", tsp, "--scaler", sc, "--checkpoint", tmp_path / "ft",
         "--out", tmp_path / "ev_ft"),
    ]
    for step in steps:
        assert _run(*step, *sizes) == 0, step[0]
    so = json.loads((tmp_path / "ev_so/metrics.json").read_text())["mean_err"]
    ft = json.loads((tmp_path / "ev_ft/metrics.json").read_text())["mean_err"]
    print(f"source-only {so:.1f} cm, adapted {ft:.1f} cm, ratio {ft / so:.3f}")
    assert ft < 0.7 * so
