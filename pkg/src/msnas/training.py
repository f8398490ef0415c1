"""Teacher training and distillation-driven supernet fine-tuning.

The teacher is the full architecture (maximum depth, every fusion on) trained
directly on the task. The supernet starts from the teacher's weights; each
iteration draws one sub-network (or the sandwich quartet), forwards the batch
through it and through the frozen teacher, and backpropagates
``task_loss + kd_ratio * mse(student_logits, teacher_logits)`` into the active
parameters only. All per-iteration randomness is derived from (seed, counter),
so runs replay exactly and resume is seamless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, TrainingDiverged
from .genome import Genome, full_genome
from .nn import Tensor, functional as F, make_optimizer, no_grad
from .sampling import group_schedule, groups, sample_grouped, sample_uniform, sandwich_schedule
from .seeds import derive_rng
from .supernet import SupernetStore, forward
from .tasks import Dataset

SAMPLERS = ("grouped", "sandwich", "uniform")
SCHEDULES = ("constant", "cosine")
OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    iterations: int = 600
    batch_size: int = 8
    optimizer: str = "adam"
    lr: float = 3e-3
    momentum: float = 0.9
    lr_schedule: str = "constant"
    supernet_lr_ratio: float = 0.1
    kd_ratio: float = 1.0
    sampler: str = "grouped"
    uniform_gate_p: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kd_ratio < 0:
            raise ConfigError("kd_ratio must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0 or self.iterations < 0:
            raise ConfigError("epochs/iterations must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {SAMPLERS}")
        if self.lr_schedule not in SCHEDULES:
            raise ConfigError(f"lr_schedule must be one of {SCHEDULES}")
        if not 0.0 <= self.uniform_gate_p <= 1.0:
            raise ConfigError("uniform_gate_p must lie in [0, 1]")
        if self.lr <= 0 and self.lr != 0.0:
            raise ConfigError("lr must be >= 0")

    @classmethod
    def from_dict(cls, doc) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown train fields: {sorted(unknown)}")
        return cls(**doc)


def _lr_at(base: float, schedule: str, step: int, total: int) -> float:
    if schedule == "constant" or total <= 1:
        return base
    return base * 0.5 * (1.0 + math.cos(math.pi * step / max(1, total - 1)))


def _check_finite(value: float, context: str) -> None:
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite loss ({value}) during {context}")


def _task_loss(store: SupernetStore, logits: Tensor, labels: np.ndarray) -> Tensor:
    lifted = F.bilinear_upsample(logits, store.config.stem_reduction)
    return F.cross_entropy(lifted, labels)


def train_teacher(store: SupernetStore, train_set: Dataset, val_set: Dataset,
                  cfg: TrainConfig, *, start_epoch: int = 0, opt_state: dict | None = None,
                  on_row=None) -> tuple[list[dict], dict]:
    """Train the full genome on the task; one metrics row per epoch.

    Returns the rows and the optimizer state, so a checkpointed run resumed at
    ``start_epoch`` replays the uninterrupted run exactly.
    """
    genome = full_genome(store.config)
    opt = make_optimizer(cfg.optimizer, store.params, cfg.lr, cfg.momentum)
    if opt_state:
        opt.load_state_dict(opt_state)
    rows = []
    n = len(train_set)
    for epoch in range(start_epoch, cfg.epochs):
        opt.lr = _lr_at(cfg.lr, cfg.lr_schedule, epoch, cfg.epochs)
        order = derive_rng(cfg.seed, "teacher.data", epoch).permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            logits = forward(store, genome, train_set.images[idx])
            loss = _task_loss(store, logits, train_set.labels[idx])
            value = loss.item()
            _check_finite(value, f"teacher epoch {epoch}")
            loss.backward()
            opt.step()
            opt.zero_grad()
            losses.append(value)
        metrics = evaluate(store, genome, val_set, batch_size=cfg.batch_size)
        row = {
            "epoch": epoch,
            "task_loss": float(np.mean(losses)),
            "lr": opt.lr,
            "val_pixel_accuracy": metrics["pixel_accuracy"],
        }
        rows.append(row)
        if on_row:
            on_row(row)
    return rows, opt.state_dict()


def train_supernet(store: SupernetStore, teacher: SupernetStore, train_set: Dataset,
                   cfg: TrainConfig, *, start_iteration: int = 0, opt_state: dict | None = None,
                   on_row=None) -> tuple[list[dict], dict]:
    """Fine-tune the shared store from teacher init with sampled sub-networks."""
    if store.identity_hash() != teacher.identity_hash():
        raise ConfigError("student store and teacher store describe different models")
    config = store.config
    teacher_genome = full_genome(config)
    lr = cfg.lr * cfg.supernet_lr_ratio
    opt = make_optimizer(cfg.optimizer, store.params, lr, cfg.momentum)
    if opt_state:
        opt.load_state_dict(opt_state)
    if cfg.sampler == "grouped":
        groups(config)  # fail fast when the config cannot form groups
    rows = []
    n = len(train_set)
    for it in range(start_iteration, cfg.iterations):
        opt.lr = _lr_at(lr, cfg.lr_schedule, it, cfg.iterations)
        rng = derive_rng(cfg.seed, "supernet.iter", it)
        idx = rng.integers(0, n, size=cfg.batch_size)
        images = train_set.images[idx]
        labels = train_set.labels[idx]

        group_id = -1
        if cfg.sampler == "grouped":
            group_id, group = group_schedule(config, it)
            genomes = [sample_grouped(config, group, rng)]
        elif cfg.sampler == "uniform":
            genomes = [sample_uniform(config, rng, gate_p=cfg.uniform_gate_p)]
        else:
            genomes = sandwich_schedule(config, cfg.seed, it)

        teacher_logits = None
        if cfg.kd_ratio > 0:
            with no_grad():
                teacher_logits = forward(teacher, teacher_genome, images).detach()

        task_vals, kd_vals = [], []
        for genome in genomes:
            logits = forward(store, genome, images)
            loss = _task_loss(store, logits, labels)
            task_vals.append(loss.item())
            if teacher_logits is not None:
                kd = F.mse(logits, teacher_logits)
                kd_vals.append(kd.item())
                loss = loss + cfg.kd_ratio * kd
            _check_finite(loss.item(), f"supernet iteration {it}")
            loss.backward()
        opt.step()
        opt.zero_grad()
        row = {
            "iteration": it,
            "group": group_id,
            "task_loss": float(np.mean(task_vals)),
            "kd_loss": float(np.mean(kd_vals)) if kd_vals else 0.0,
            "lr": opt.lr,
        }
        rows.append(row)
        if on_row:
            on_row(row)
    return rows, opt.state_dict()


def confusion_matrix(pred: np.ndarray, labels: np.ndarray, classes: int) -> np.ndarray:
    joint = labels.reshape(-1) * classes + pred.reshape(-1)
    return np.bincount(joint, minlength=classes * classes).reshape(classes, classes)


def metrics_from_confusion(conf: np.ndarray) -> dict[str, float]:
    total = conf.sum()
    tp = np.diag(conf)
    union = conf.sum(axis=0) + conf.sum(axis=1) - tp
    present = union > 0
    iou = tp[present] / union[present]
    return {
        "pixel_accuracy": float(tp.sum() / total) if total else 0.0,
        "mean_iou": float(iou.mean()) if present.any() else 0.0,
    }


def evaluate(store: SupernetStore, genome: Genome, dataset: Dataset,
             batch_size: int = 16, classes: int | None = None) -> dict[str, float]:
    """Pixel accuracy and mean IoU of one sub-network on a dataset."""
    if classes is None:
        classes = int(dataset.labels.max()) + 1
        if store.head.kind != "none":
            classes = max(classes, store.head.out_channels)
    conf = np.zeros((classes, classes), dtype=np.int64)
    with no_grad():
        for lo in range(0, len(dataset), batch_size):
            images = dataset.images[lo:lo + batch_size]
            labels = dataset.labels[lo:lo + batch_size]
            logits = forward(store, genome, images)
            lifted = F.bilinear_upsample(logits, store.config.stem_reduction)
            pred = lifted.data.argmax(axis=1)
            conf += confusion_matrix(pred, labels, classes)
    return metrics_from_confusion(conf)
