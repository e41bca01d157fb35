"""Three-phase training: denoising pre-training, adversarial alignment, fine-tuning.

Loss terms are exposed as plain functions so the phase loops, the tests and
any external driver compose them the same way.  The reversal strength of
the domain term reaches the encoder through the gradient-reversal layer;
the classifier itself always sees the unscaled BCE gradient, which keeps
the encoder update at ``grad(L_rec) - lambda * grad(L_dom)``.

``loss_rec`` sums squared errors over channel x tap.  Inside the phase
objectives the reconstruction term is, by default, divided by the number of
elements (``PhaseConfig.rec_reduction = "mean"``); with the summed term a
0.05-0.2 reversal strength is several hundred times too weak to move the
encoder.  ``"sum"`` restores the literal composition.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from sklearn.metrics import roc_auc_score

from .models import DANN, AutoencoderSpec, spec_hash

log = logging.getLogger(__name__)

PHASES = ("pretrain", "align", "finetune")
BCE_EPS = 1e-7


class TrainingError(RuntimeError):
    """Raised when a phase cannot run or diverges."""

    def __init__(self, msg: str, state: "TrainingState | None" = None):
        super().__init__(msg)
        self.state = state


# ---------------------------------------------------------------------------
# Schedules


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str
    start_value: float
    end_value: float = 0.0
    total_epochs: int = 1
    warmup_fraction: float = 0.1
    steepness: float = 10.0

    def __post_init__(self):
        if self.kind not in ("linear", "cosine_anneal", "warmup_then_cosine", "sigmoid_ramp"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.total_epochs <= 0:
            raise ValueError("total_epochs must be positive")


def constant(value: float, total_epochs: int = 1) -> ScheduleSpec:
    return ScheduleSpec("linear", value, value, total_epochs)


def schedule_value(s: ScheduleSpec, epoch: float) -> float:
    """Value of schedule ``s`` at (possibly fractional) ``epoch`` in [0, total]."""
    total = s.total_epochs
    if not 0 <= epoch <= total:
        raise ValueError(f"epoch {epoch} outside [0, {total}]")
    t = epoch / total
    if s.kind == "linear":
        return s.start_value + (s.end_value - s.start_value) * t
    if s.kind == "sigmoid_ramp":
        sig = 1.0 / (1.0 + math.exp(-s.steepness * (2.0 * t - 1.0)))
        return s.start_value + (s.end_value - s.start_value) * sig
    if s.kind == "cosine_anneal":
        return s.end_value + 0.5 * (s.start_value - s.end_value) * (1 + math.cos(math.pi * t))
    # warmup_then_cosine: 0 -> start over the warmup, then cosine start -> end
    warm = s.warmup_fraction * total
    if warm > 0 and epoch < warm:
        return s.start_value * epoch / warm
    rest = (epoch - warm) / (total - warm) if total > warm else 1.0
    return s.end_value + 0.5 * (s.start_value - s.end_value) * (1 + math.cos(math.pi * rest))


def _as_schedule(v, total: int) -> ScheduleSpec:
    if not isinstance(v, ScheduleSpec):
        return constant(float(v), total)
    if v.start_value == v.end_value and v.kind in ("linear", "cosine_anneal"):
        return replace(v, total_epochs=total)
    return v


# ---------------------------------------------------------------------------
# Losses


def loss_rec(recon: torch.Tensor, clean: torch.Tensor) -> torch.Tensor:
    """Squared L2 error summed over channel x tap, averaged over the batch."""
    if recon.shape != clean.shape:
        raise ValueError(f"shape mismatch {tuple(recon.shape)} vs {tuple(clean.shape)}")
    return (recon - clean).pow(2).flatten(1).sum(dim=1).mean()


def loss_dom(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy; source label 0, target label 1."""
    p = probs.reshape(-1).clamp(BCE_EPS, 1 - BCE_EPS)
    y = labels.reshape(-1).to(p.dtype)
    if p.shape != y.shape:
        raise ValueError("probabilities and labels differ in length")
    return -(y * torch.log(p) + (1 - y) * torch.log1p(-p)).mean()


def loss_reg(pred: torch.Tensor, coords: torch.Tensor) -> torch.Tensor:
    """Mean squared Euclidean distance between predicted and true coordinates."""
    if pred.shape != coords.shape:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(coords.shape)}")
    return (pred - coords).pow(2).sum(dim=1).mean()


def loss_adapt(l_rec, l_dom, lam):
    return l_rec + lam * l_dom


def loss_ft(l_rec_ft, l_reg, l_dom_ft, alpha, beta, lambda_ft):
    return alpha * l_rec_ft + beta * l_reg + lambda_ft * l_dom_ft


# ---------------------------------------------------------------------------
# Configuration and state


@dataclass(frozen=True)
class EarlyStop:
    metric: str = "domain_auc_gap"
    patience: int = 5
    min_delta: float = 0.005
    # epochs before the stopping rule is consulted
    min_epochs: int = 0


@dataclass(frozen=True)
class PhaseConfig:
    epochs: int
    batch_size: int = 256
    base_lr: float = 1e-3
    # multiplier on base_lr (and head_lr), evaluated per optimizer step
    lr_schedule: ScheduleSpec | None = None
    head_lr: float | None = None
    alpha: ScheduleSpec | float = 1.0
    beta: float = 1.0
    lam: ScheduleSpec | float = 0.0
    early_stop: EarlyStop | None = None
    unfreeze: tuple[str, ...] | None = None
    val_fraction: float = 0.1
    eval_samples: int = 512
    # reconstruction term inside the objective: "mean" per element or "sum" per sample
    rec_reduction: str = "mean"

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.rec_reduction not in ("mean", "sum"):
            raise ValueError(f"rec_reduction must be 'mean' or 'sum', got {self.rec_reduction!r}")

    def rec_term(self, l_rec: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        """Reconstruction term as it enters the phase objective."""
        return l_rec / x[0].numel() if self.rec_reduction == "mean" else l_rec

    @property
    def lr_sched(self) -> ScheduleSpec:
        return self.lr_schedule or constant(1.0, self.epochs)

    def to_dict(self) -> dict:
        return asdict(self)


def pretrain_config(**kw) -> PhaseConfig:
    epochs = kw.pop("epochs", 30)
    base = dict(
        epochs=epochs, base_lr=1e-3,
        lr_schedule=ScheduleSpec("warmup_then_cosine", 1.0, 0.0, epochs, warmup_fraction=0.1),
    )
    base.update(kw)
    return PhaseConfig(**base)


def align_config(**kw) -> PhaseConfig:
    epochs = kw.pop("epochs", 40)
    base = dict(
        epochs=epochs, base_lr=1e-3,
        lr_schedule=constant(1.0, epochs),
        lam=ScheduleSpec("sigmoid_ramp", 0.05, 0.2, epochs, steepness=10.0),
        early_stop=EarlyStop(patience=5, min_delta=0.005, min_epochs=10),
    )
    base.update(kw)
    return PhaseConfig(**base)


def finetune_config(**kw) -> PhaseConfig:
    epochs = kw.pop("epochs", 200)
    base = dict(
        epochs=epochs, base_lr=3e-4, head_lr=3e-2,
        lr_schedule=ScheduleSpec("cosine_anneal", 1.0, 0.0, epochs),
        alpha=ScheduleSpec("linear", 0.5, 0.1, epochs),
        beta=1.0,
        lam=ScheduleSpec("linear", 0.0, 0.5, epochs),
        unfreeze=DANN.FINETUNE_UNFREEZE,
    )
    base.update(kw)
    return PhaseConfig(**base)


def non_adversarial(cfg: PhaseConfig) -> PhaseConfig:
    """The same phase with the reversal strength pinned to zero."""
    return replace(cfg, lam=constant(0.0, cfg.epochs))


@dataclass
class TrainingState:
    phase: str
    epoch: int
    model: DANN
    seed: int
    optimizer_state: dict | None = None
    history: list[dict] = field(default_factory=list)
    finished: bool = False
    best: dict | None = None
    best_params: dict | None = None
    early_stop_wait: int = 0

    def phase_history(self, phase: str | None = None) -> list[dict]:
        phase = phase or self.phase
        return [h for h in self.history if h["phase"] == phase]


def _epoch_seed(seed: int, phase: str, epoch: int) -> int:
    return (seed * 1_000_003 + PHASES.index(phase) * 10_007 + epoch) % (2 ** 62)


def _tensor(x, dtype=torch.float32) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x), dtype=dtype)


def _check_finite(value: float, state: TrainingState, what: str) -> None:
    if not math.isfinite(value):
        raise TrainingError(f"non-finite {what} in {state.phase} epoch {state.epoch + 1}", state)


def _set_lrs(opt: torch.optim.Optimizer, factor: float) -> None:
    for g in opt.param_groups:
        g["lr"] = g["initial_lr"] * factor


def _make_optimizer(groups: list[dict], state: TrainingState) -> torch.optim.Optimizer:
    for g in groups:
        g["initial_lr"] = g["lr"]
    opt = torch.optim.Adam(groups, betas=(0.9, 0.999), weight_decay=0.0)
    if state.optimizer_state is not None:
        opt.load_state_dict(state.optimizer_state)
        for g, src in zip(opt.param_groups, groups):
            g["initial_lr"] = src["initial_lr"]
    return opt


def _enter_phase(state: TrainingState, phase: str, required_prev: str) -> None:
    if state.phase == phase:
        return
    if state.phase != required_prev or not state.finished:
        raise TrainingError(f"{phase} needs a finished {required_prev} state, got {state.phase}")
    state.phase, state.epoch, state.optimizer_state = phase, 0, None
    state.finished, state.best, state.best_params, state.early_stop_wait = False, None, None, 0


@torch.no_grad()
def embed(model: DANN, x, batch_size: int = 1024) -> np.ndarray:
    model.eval()
    x = _tensor(x, next(model.parameters()).dtype)
    return torch.cat([model.autoencoder.encode(x[i:i + batch_size])[0]
                      for i in range(0, len(x), batch_size)]).cpu().numpy()


@torch.no_grad()
def predict(model: DANN, x, batch_size: int = 1024) -> np.ndarray:
    model.eval()
    x = _tensor(x, next(model.parameters()).dtype)
    out = [model.regressor(model.autoencoder.encode(x[i:i + batch_size])[0]) for i in range(0, len(x), batch_size)]
    return torch.cat(out).cpu().numpy()


@torch.no_grad()
def reconstruction_loss(model: DANN, x, batch_size: int = 1024) -> float:
    model.eval()
    x = _tensor(x, next(model.parameters()).dtype)
    total = 0.0
    for i in range(0, len(x), batch_size):
        xb = x[i:i + batch_size]
        total += float(loss_rec(model.autoencoder(xb)[0], xb)) * len(xb)
    return total / len(x)


@torch.no_grad()
def domain_auc(model: DANN, source_x, target_x) -> float:
    model.eval()
    x = torch.cat([_tensor(source_x), _tensor(target_x)])
    emb = model.autoencoder.encode(x)[0]
    probs = model.domain_clf(emb, 0.0).reshape(-1).cpu().numpy()
    labels = np.r_[np.zeros(len(source_x)), np.ones(len(target_x))]
    return float(roc_auc_score(labels, probs))


# ---------------------------------------------------------------------------
# Phases


def pretrain(source_x, cfg: PhaseConfig | None = None, spec: AutoencoderSpec | None = None, seed: int = 0,
             state: TrainingState | None = None, until: int | None = None) -> TrainingState:
    """Denoising reconstruction on unlabeled source tensors (N x 3 x 100)."""
    cfg = cfg or pretrain_config()
    x = _tensor(source_x)
    if len(x) == 0:
        raise TrainingError("empty pre-training data")
    if state is None:
        torch.manual_seed(seed)
        state = TrainingState("pretrain", 0, DANN(spec), seed)
    elif state.phase != "pretrain":
        raise TrainingError(f"cannot resume pre-training from a {state.phase} state")
    model = state.model

    perm = np.random.default_rng(state.seed).permutation(len(x))
    n_val = max(1, int(round(cfg.val_fraction * len(x)))) if len(x) > 1 else 0
    val, train = x[perm[:n_val]], x[perm[n_val:]] if n_val < len(x) else x

    opt = _make_optimizer([{"params": list(model.autoencoder.parameters()), "lr": cfg.base_lr}], state)
    stop = cfg.epochs if until is None else min(until, cfg.epochs)
    for epoch in range(state.epoch, stop):
        es = _epoch_seed(state.seed, "pretrain", epoch)
        torch.manual_seed(es)
        order = torch.randperm(len(train), generator=torch.Generator().manual_seed(es))
        n_batches = math.ceil(len(train) / cfg.batch_size)
        model.train()
        total = 0.0
        for b in range(n_batches):
            _set_lrs(opt, schedule_value(cfg.lr_sched, epoch + b / n_batches))
            xb = train[order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            loss = loss_rec(model.autoencoder(xb)[0], xb)
            opt.zero_grad()
            cfg.rec_term(loss, xb).backward()
            opt.step()
            total += loss.item() * len(xb)
        rec = total / len(train)
        _check_finite(rec, state, "reconstruction loss")
        val_rec = reconstruction_loss(model, val) if n_val else float("nan")
        state.epoch = epoch + 1
        state.optimizer_state = opt.state_dict()
        state.history.append({
            "phase": "pretrain", "epoch": epoch + 1, "L_rec": rec, "val_L_rec": val_rec,
            "lr": cfg.base_lr * schedule_value(cfg.lr_sched, epoch + 1),
        })
        log.info("pretrain epoch %d L_rec=%.4f val=%.4f", epoch + 1, rec, val_rec)
    state.finished = state.epoch >= cfg.epochs
    return state


def _eval_slices(state: TrainingState, src: torch.Tensor, tgt: torch.Tensor, n: int):
    rng = np.random.default_rng(state.seed + 1)
    s = rng.permutation(len(src))[:n]
    t = rng.permutation(len(tgt))[:n]
    return src[np.sort(s)], tgt[np.sort(t)]


def align(source_x, target_x, state: TrainingState, cfg: PhaseConfig | None = None,
          until: int | None = None) -> TrainingState:
    """Reconstruct target tensors while confusing the domain classifier."""
    cfg = cfg or align_config()
    if state is None:
        raise TrainingError("alignment needs a pre-trained state")
    _enter_phase(state, "align", "pretrain")
    src, tgt = _tensor(source_x), _tensor(target_x)
    if len(src) == 0 or len(tgt) == 0:
        raise TrainingError("alignment needs source and target tensors")
    model = state.model
    lam_s = _as_schedule(cfg.lam, cfg.epochs)
    eval_src, eval_tgt = _eval_slices(state, src, tgt, cfg.eval_samples)

    params = list(model.autoencoder.parameters()) + list(model.domain_clf.parameters())
    opt = _make_optimizer([{"params": params, "lr": cfg.base_lr}], state)
    stop = cfg.epochs if until is None else min(until, cfg.epochs)
    es_cfg = cfg.early_stop
    for epoch in range(state.epoch, stop):
        if state.finished:
            break
        es = _epoch_seed(state.seed, "align", epoch)
        torch.manual_seed(es)
        gen = torch.Generator().manual_seed(es)
        order = torch.randperm(len(tgt), generator=gen)
        n_batches = math.ceil(len(tgt) / cfg.batch_size)
        lam = schedule_value(lam_s, epoch)
        model.train()
        sums = np.zeros(3)
        for b in range(n_batches):
            _set_lrs(opt, schedule_value(cfg.lr_sched, epoch + b / n_batches))
            tb = tgt[order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            sb = src[torch.randint(len(src), (len(tb),), generator=gen)]
            emb, fmap = model.autoencoder.encode(torch.cat([sb, tb]))
            l_rec = loss_rec(model.autoencoder.decode(fmap[len(sb):]), tb)
            probs = model.domain_clf(emb, lam)
            labels = torch.cat([torch.zeros(len(sb)), torch.ones(len(tb))])
            l_dom = loss_dom(probs, labels)
            opt.zero_grad()
            (cfg.rec_term(l_rec, tb) + l_dom).backward()
            opt.step()
            rec_obj = cfg.rec_term(l_rec, tb).item()
            sums += np.array([l_rec.item(), l_dom.item(), loss_adapt(rec_obj, l_dom.item(), lam)]) * len(tb)
        l_rec_e, l_dom_e, l_adapt_e = sums / len(tgt)
        _check_finite(l_adapt_e, state, "adaptation loss")
        auc = domain_auc(model, eval_src, eval_tgt)
        gap = abs(auc - 0.5)
        state.epoch = epoch + 1
        state.optimizer_state = opt.state_dict()
        state.history.append({
            "phase": "align", "epoch": epoch + 1, "L_rec": l_rec_e, "L_dom": l_dom_e, "L_adapt": l_adapt_e,
            "AUC": auc, "lambda": lam, "lr": cfg.base_lr * schedule_value(cfg.lr_sched, epoch + 1),
        })
        log.info("align epoch %d L_rec=%.4f L_dom=%.4f AUC=%.4f", epoch + 1, l_rec_e, l_dom_e, auc)
        if es_cfg is not None:
            # patience counts consecutive epochs whose gap did not shrink by min_delta
            prev = state.best["last_gap"] if state.best else None
            if prev is None or gap < prev - es_cfg.min_delta:
                state.early_stop_wait = 0
            else:
                state.early_stop_wait += 1
            if state.best is None or gap < state.best["gap"]:
                state.best = {"gap": gap, "epoch": epoch + 1, "AUC": auc}
            state.best["last_gap"] = gap
            if state.epoch >= es_cfg.min_epochs and state.early_stop_wait >= es_cfg.patience:
                log.info("align early stop at epoch %d (AUC %.4f)", state.epoch, auc)
                state.finished = True
    state.finished = state.finished or state.epoch >= cfg.epochs
    return state


def _freeze(model: DANN, unfreeze) -> list[str]:
    trainable = []
    for name, p in model.named_parameters():
        p.requires_grad_(unfreeze is None or any(name.startswith(u) for u in unfreeze))
        if p.requires_grad:
            trainable.append(name)
    return trainable


def finetune(target_x, target_y, state: TrainingState, cfg: PhaseConfig | None = None,
             holdout_x=None, holdout_y=None, until: int | None = None,
             allow_from: str = "align") -> TrainingState:
    """Supervised coordinate regression on labeled target tensors.

    Only the configured ``unfreeze`` prefixes train.  After every epoch the
    hold-out mean Euclidean error is computed; the best epoch's parameters
    are restored when the phase completes.
    """
    cfg = cfg or finetune_config()
    if state is None:
        raise TrainingError("fine-tuning needs an aligned state")
    x, y = _tensor(target_x), _tensor(target_y)
    if len(x) == 0:
        raise TrainingError("no labeled target samples")
    fresh = state.phase != "finetune"
    _enter_phase(state, "finetune", allow_from)
    model = state.model
    if holdout_x is None:
        holdout_x, holdout_y = x, y
    hx, hy = _tensor(holdout_x), _tensor(holdout_y)

    trainable = _freeze(model, cfg.unfreeze)
    if not trainable:
        raise TrainingError("all parameters are frozen")
    if fresh:
        with torch.no_grad():
            model.regressor.bias.copy_(y.mean(dim=0))

    head = [p for p in model.regressor.parameters() if p.requires_grad]
    rest = [p for n, p in model.named_parameters() if p.requires_grad and not n.startswith("regressor")]
    groups = [g for g in ({"params": head, "lr": cfg.head_lr or cfg.base_lr}, {"params": rest, "lr": cfg.base_lr})
              if g["params"]]
    opt = _make_optimizer(groups, state)
    alpha_s, lam_s = _as_schedule(cfg.alpha, cfg.epochs), _as_schedule(cfg.lam, cfg.epochs)
    stop = cfg.epochs if until is None else min(until, cfg.epochs)
    for epoch in range(state.epoch, stop):
        es = _epoch_seed(state.seed, "finetune", epoch)
        torch.manual_seed(es)
        order = torch.randperm(len(x), generator=torch.Generator().manual_seed(es))
        n_batches = math.ceil(len(x) / cfg.batch_size)
        alpha, lam = schedule_value(alpha_s, epoch), schedule_value(lam_s, epoch)
        model.train()
        sums = np.zeros(4)
        for b in range(n_batches):
            _set_lrs(opt, schedule_value(cfg.lr_sched, epoch + b / n_batches))
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            xb, yb = x[idx], y[idx]
            recon, emb, pred, probs = model(xb, lam)
            l_rec, l_reg = loss_rec(recon, xb), loss_reg(pred, yb)
            l_dom = loss_dom(probs, torch.zeros(len(xb)))
            opt.zero_grad()
            (alpha * cfg.rec_term(l_rec, xb) + cfg.beta * l_reg + l_dom).backward()
            opt.step()
            parts = (l_rec.item(), l_reg.item(), l_dom.item())
            sums += np.array([*parts, loss_ft(cfg.rec_term(l_rec, xb).item(), *parts[1:], alpha, cfg.beta, lam)]) * len(xb)
        l_rec_e, l_reg_e, l_dom_e, l_ft_e = sums / len(x)
        _check_finite(l_ft_e, state, "fine-tuning loss")
        err = float(np.linalg.norm(predict(model, hx) - hy.numpy(), axis=1).mean())
        state.epoch = epoch + 1
        state.optimizer_state = opt.state_dict()
        state.history.append({
            "phase": "finetune", "epoch": epoch + 1, "L_rec": l_rec_e, "L_reg": l_reg_e, "L_dom": l_dom_e,
            "L_ft": l_ft_e, "alpha": alpha, "beta": cfg.beta, "lambda_ft": lam, "holdout_mean_err": err,
            "lrs": [g["lr"] for g in opt.param_groups],
        })
        log.info("finetune epoch %d L_reg=%.1f holdout=%.2f cm", epoch + 1, l_reg_e, err)
        if state.best is None or err < state.best["holdout_mean_err"]:
            state.best = {"holdout_mean_err": err, "epoch": epoch + 1}
            state.best_params = copy.deepcopy(model.state_dict())
    if state.epoch >= cfg.epochs:
        state.finished = True
        if state.best_params is not None:
            model.load_state_dict(state.best_params)
    for p in model.parameters():
        p.requires_grad_(True)
    return state


# ---------------------------------------------------------------------------
# Checkpoints


def save_state(state: TrainingState, path: str | Path, metrics: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    torch.save(
        {"model": state.model.state_dict(), "optimizer": state.optimizer_state, "best_params": state.best_params},
        path / "params.pt",
    )
    spec = state.model.autoencoder.spec
    meta = {
        "kind": "dann",
        "spec_hash": spec_hash(spec),
        "ae_spec": spec.to_dict(),
        "phase": state.phase,
        "epoch": state.epoch,
        "seed": state.seed,
        "finished": state.finished,
        "best": state.best,
        "early_stop_wait": state.early_stop_wait,
        "metrics": metrics or {},
    }
    (path / "state.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    with (path / "history.jsonl").open("w", encoding="utf-8") as fh:
        for row in state.history:
            fh.write(json.dumps(row) + "\n")
    return path


def load_state(path: str | Path, expected_spec: AutoencoderSpec | None = None) -> TrainingState:
    path = Path(path)
    meta = json.loads((path / "state.json").read_text(encoding="utf-8"))
    if meta.get("kind") != "dann":
        raise TrainingError(f"{path} is not a network checkpoint")
    d = dict(meta["ae_spec"])
    d["stage_channels"] = tuple(d["stage_channels"])
    spec = AutoencoderSpec(**d)
    if spec_hash(spec) != meta["spec_hash"]:
        raise TrainingError(f"spec hash mismatch in {path}")
    if expected_spec is not None and spec_hash(expected_spec) != meta["spec_hash"]:
        raise TrainingError("checkpoint was built for a different architecture")
    blob = torch.load(path / "params.pt", weights_only=False)
    model = DANN(spec)
    model.load_state_dict(blob["model"])
    history = [json.loads(line) for line in (path / "history.jsonl").read_text(encoding="utf-8").splitlines() if line]
    return TrainingState(
        phase=meta["phase"], epoch=meta["epoch"], model=model, seed=meta["seed"],
        optimizer_state=blob["optimizer"], history=history, finished=meta["finished"],
        best=meta["best"], best_params=blob["best_params"], early_stop_wait=meta.get("early_stop_wait", 0),
    )
