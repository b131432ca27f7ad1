"""Training loop with validation-based early stopping and F1 threshold calibration."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import neural
from .errors import NoPositivesError, TrainingDivergedError
from .neural import NeuralEditModel

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 512
    validation_frequency: int = 50
    patience: int = 10
    max_epochs: int = 100
    seed: int = 0
    d_emb: int = 256
    layers: int = 2
    learning_rate: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    clip_norm: float = 5.0

    def __post_init__(self):
        for name in ("batch_size", "validation_frequency", "patience", "max_epochs", "d_emb", "layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        self.betas = tuple(self.betas)


@dataclass
class ValidationRecord:
    step: int
    epoch: int
    val_f1: float
    tau: float
    em_loss: float
    bce_loss: float
    nonmatch_nll: float
    total: float


@dataclass
class TrainReport:
    history: list[ValidationRecord] = field(default_factory=list)
    best_step: int = -1
    best_f1: float = -math.inf
    best_tau: float = 0.5
    stop_reason: str = ""

    def summary(self) -> dict:
        return {
            "best_step": self.best_step,
            "best_f1": self.best_f1,
            "best_tau": self.best_tau,
            "stop_reason": self.stop_reason,
            "validations": len(self.history),
        }

    def write(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "history.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            cols = list(ValidationRecord.__dataclass_fields__)
            w.writerow(cols)
            for rec in self.history:
                w.writerow([repr(getattr(rec, c)) if isinstance(getattr(rec, c), float) else getattr(rec, c) for c in cols])
        (directory / "summary.json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def f1_score(tp: int, fp: int, fn: int) -> float:
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def calibrate_threshold(scores: Sequence[tuple[float, bool]]) -> tuple[float, float]:
    """Threshold maximizing positive-class F1 for the rule ``p >= tau``.

    Candidates are 0, 1 and the midpoints between adjacent distinct scores;
    ties go to the smallest threshold.
    """
    if not len(scores):
        raise NoPositivesError("no scores to calibrate on")
    p = np.array([s for s, _ in scores], dtype=np.float64)
    y = np.array([bool(lab) for _, lab in scores])
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositivesError("threshold calibration needs at least one positive")
    uniq = np.unique(p)
    cands = np.concatenate([[0.0], (uniq[:-1] + uniq[1:]) / 2, [1.0]])
    cands = np.unique(cands)
    order = np.sort(p)
    pos_sorted = np.sort(p[y])
    # predicted positives at tau: count of p >= tau
    pred = len(p) - np.searchsorted(order, cands, side="left")
    tp = n_pos - np.searchsorted(pos_sorted, cands, side="left")
    fp = pred - tp
    fn = n_pos - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(tp > 0, 2 * tp / (2 * tp + fp + fn), 0.0)
    best = int(np.argmax(f1))  # first max = smallest tau
    return float(cands[best]), float(f1[best])


def _batches(n: int, size: int, rng) -> list[np.ndarray]:
    perm = rng.permutation(n)
    return [perm[i : i + size] for i in range(0, n, size)]


def evaluate_batchwise(model: NeuralEditModel, data, batch_size: int):
    """Validation losses (pair-weighted means across batches) and match probabilities."""
    sums = {"em_loss": 0.0, "bce_loss": 0.0, "nonmatch_nll": 0.0}
    n_pos = sum(1 for *_, lab in data if lab)
    n_neg = len(data) - n_pos
    probs = []
    for start in range(0, len(data), batch_size):
        chunk = data[start : start + batch_size]
        parts = neural.loss(model, chunk)
        cp = sum(1 for *_, lab in chunk if lab)
        cn = len(chunk) - cp
        sums["em_loss"] += float(parts.em_loss.detach()) * cp
        sums["bce_loss"] += float(parts.bce_loss.detach()) * len(chunk)
        sums["nonmatch_nll"] += float(parts.nonmatch_nll.detach()) * cn
    _, _, p = neural.score_pairs(model, [(a, b) for a, b, _ in data], batch_size=batch_size)
    probs = p
    losses = {
        "em_loss": sums["em_loss"] / n_pos if n_pos else 0.0,
        "bce_loss": sums["bce_loss"] / len(data),
        "nonmatch_nll": sums["nonmatch_nll"] / n_neg if n_neg else 0.0,
    }
    losses["total"] = losses["em_loss"] + losses["bce_loss"] + losses["nonmatch_nll"]
    return losses, probs


@dataclass
class _LoopState:
    epoch: int = 0
    batch_in_epoch: int = 0
    step: int = 0
    since_best: int = 0
    epoch_order: list | None = None
    rng_state: dict | None = None


def _save_checkpoint(path, model, optimizer, state: _LoopState, report: TrainReport, best_state, cfg):
    torch.save(
        {
            "model": model.state_dict(),
            "threshold": model.threshold,
            "optimizer": optimizer.state_dict(),
            "loop": asdict(state),
            "report": {
                "history": [asdict(r) for r in report.history],
                "best_step": report.best_step,
                "best_f1": report.best_f1,
                "best_tau": report.best_tau,
            },
            "best_state": best_state,
            "config": asdict(cfg),
        },
        path,
    )


def train(
    model: NeuralEditModel,
    train_data: Sequence[tuple[str, str, bool]],
    val_data: Sequence[tuple[str, str, bool]],
    cfg: TrainConfig,
    checkpoint_dir=None,
    resume_from=None,
    stop_after: int | None = None,
) -> tuple[NeuralEditModel, TrainReport]:
    """Train in place and return the best-validation model with its threshold.

    Batches are drawn from a seeded global shuffle of positives and
    negatives. Every ``cfg.validation_frequency`` batches the model is scored
    on ``val_data``, a threshold is calibrated, and the parameters are kept if
    validation F1 improved. ``stop_after`` halts after that many validations
    (the last checkpoint can then be passed as ``resume_from``).
    """
    train_data = list(train_data)
    val_data = list(val_data)
    if not train_data:
        raise ValueError("empty training set")
    if not any(lab for *_, lab in val_data):
        raise NoPositivesError("validation set has no positive pairs")
    torch.manual_seed(cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, betas=cfg.betas)
    rng = np.random.default_rng(cfg.seed)
    report = TrainReport()
    state = _LoopState()
    best_state = None
    ckpt_path = None
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = checkpoint_dir / "last.pt"

    if resume_from is not None:
        ck = torch.load(resume_from, weights_only=False)
        model.load_state_dict(ck["model"])
        model.threshold = ck["threshold"]
        optimizer.load_state_dict(ck["optimizer"])
        state = _LoopState(**ck["loop"])
        rng.bit_generator.state = state.rng_state
        rep = ck["report"]
        report = TrainReport(
            [ValidationRecord(**r) for r in rep["history"]],
            rep["best_step"], rep["best_f1"], rep["best_tau"],
        )
        best_state = ck["best_state"]

    def validate() -> bool:
        model.eval()
        losses, probs = evaluate_batchwise(model, val_data, cfg.batch_size)
        tau, f1 = calibrate_threshold(list(zip(probs, (lab for *_, lab in val_data))))
        rec = ValidationRecord(state.step, state.epoch, f1, tau, **losses)
        report.history.append(rec)
        model.train()
        log.info("step %d epoch %d val_f1 %.4f tau %.4f loss %.4f", state.step, state.epoch, f1, tau, losses["total"])
        nonlocal best_state
        if f1 > report.best_f1:
            report.best_f1, report.best_tau, report.best_step = f1, tau, state.step
            best_state = copy.deepcopy(model.state_dict())
            state.since_best = 0
        else:
            state.since_best += 1
        return state.since_best >= cfg.patience

    model.train()
    stop = ""
    validated_at = -1 if not report.history else report.history[-1].step
    while state.epoch < cfg.max_epochs and not stop:
        if state.epoch_order is None:
            state.epoch_order = [b.tolist() for b in _batches(len(train_data), cfg.batch_size, rng)]
            state.batch_in_epoch = 0
        while state.batch_in_epoch < len(state.epoch_order):
            idx = state.epoch_order[state.batch_in_epoch]
            batch = [train_data[i] for i in idx]
            optimizer.zero_grad()
            parts = neural.loss(model, batch)
            total = parts.total
            if not torch.isfinite(total):
                snapshot = {"step": state.step, "epoch": state.epoch, **parts.as_floats()}
                if checkpoint_dir is not None:
                    (checkpoint_dir / "divergence.json").write_text(json.dumps(snapshot, indent=2) + "\n")
                raise TrainingDivergedError(f"non-finite loss at step {state.step}", snapshot)
            total.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.clip_norm)
            optimizer.step()
            state.step += 1
            state.batch_in_epoch += 1
            if state.step % cfg.validation_frequency == 0:
                validated_at = state.step
                if validate():
                    stop = "patience"
                if ckpt_path is not None:
                    state.rng_state = rng.bit_generator.state
                    _save_checkpoint(ckpt_path, model, optimizer, state, report, best_state, cfg)
                if stop:
                    break
                if stop_after is not None and len(report.history) >= stop_after:
                    stop = "halted"
                    break
        if state.batch_in_epoch >= len(state.epoch_order):
            state.epoch += 1
            state.epoch_order = None
    if not stop:
        stop = "max_epochs"
        if validated_at != state.step:
            validate()
    report.stop_reason = stop
    if best_state is not None:
        model.load_state_dict(best_state)
    model.threshold = report.best_tau
    model.eval()
    if checkpoint_dir is not None:
        neural.save(model, checkpoint_dir / "model.nedm")
        report.write(checkpoint_dir)
        (checkpoint_dir / "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
    return model, report


def build_model(alphabet, cfg: TrainConfig) -> NeuralEditModel:
    return NeuralEditModel(alphabet, d_emb=cfg.d_emb, layers=cfg.layers, seed=cfg.seed)
