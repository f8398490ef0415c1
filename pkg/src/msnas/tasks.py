"""Desk-scale workloads.

The synthetic segmentation task scatters disc-shaped objects whose radius
range is tied to their class, so classifying a pixel requires enough receptive
field to judge object scale; class identity is never readable from a single
pixel's intensity. The surrogate evaluator scores genomes from structure
counts alone, for fast exhaustive-oracle tests of the search loop.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .genome import Genome, SearchSpaceConfig, full_genome, per_stage_structure
from .seeds import derive_rng


@dataclass(frozen=True)
class SyntheticTaskConfig:
    image_hw: tuple[int, int] = (32, 64)
    classes: int = 4
    blob_radii: tuple[tuple[int, int], ...] = ((1, 2), (3, 5), (8, 12))
    blobs_per_class: tuple[int, int] = (2, 4)
    intensity: tuple[float, float] = (0.6, 1.0)
    noise: float = 0.12
    train_size: int = 128
    val_size: int = 32
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "image_hw", tuple(int(v) for v in self.image_hw))
        object.__setattr__(self, "blob_radii", tuple(tuple(int(r) for r in rr) for rr in self.blob_radii))
        object.__setattr__(self, "blobs_per_class", tuple(int(v) for v in self.blobs_per_class))
        object.__setattr__(self, "intensity", tuple(float(v) for v in self.intensity))
        if self.classes < 2:
            raise ConfigError("need at least a background and one object class")
        if len(self.blob_radii) != self.classes - 1:
            raise ConfigError("blob_radii must list one (min,max) radius range per non-background class")
        if any(r[0] < 1 or r[1] < r[0] for r in self.blob_radii):
            raise ConfigError("blob radius ranges must satisfy 1 <= min <= max")
        lo, hi = self.blobs_per_class
        if lo < 0 or hi < lo:
            raise ConfigError("blobs_per_class must satisfy 0 <= min <= max")
        if self.train_size < 1 or self.val_size < 1:
            raise ConfigError("split sizes must be >= 1")

    @classmethod
    def from_dict(cls, doc) -> "SyntheticTaskConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown task fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class Dataset:
    images: np.ndarray  # [N, 3, H, W] float32
    labels: np.ndarray  # [N, H, W] int64

    def __len__(self):
        return self.images.shape[0]


def _render(cfg: SyntheticTaskConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    h, w = cfg.image_hw
    image = rng.normal(0.0, cfg.noise, size=(3, h, w))
    label = np.zeros((h, w), dtype=np.int64)
    ys = np.arange(h)[:, None]
    xs = np.arange(w)[None, :]
    # paint large classes first so smaller objects stay visible on top
    for cls in range(cfg.classes - 1, 0, -1):
        r_lo, r_hi = cfg.blob_radii[cls - 1]
        count = int(rng.integers(cfg.blobs_per_class[0], cfg.blobs_per_class[1] + 1))
        for _ in range(count):
            radius = int(rng.integers(r_lo, r_hi + 1))
            cy = int(rng.integers(0, h))
            cx = int(rng.integers(0, w))
            mask = (ys - cy) ** 2 + (xs - cx) ** 2 <= radius**2
            label[mask] = cls
            image[0][mask] += rng.uniform(*cfg.intensity)
    return image.astype(np.float32), label


def _split(cfg: SyntheticTaskConfig, name: str, size: int) -> Dataset:
    images = np.empty((size, 3, *cfg.image_hw), dtype=np.float32)
    labels = np.empty((size, *cfg.image_hw), dtype=np.int64)
    for i in range(size):
        rng = derive_rng(cfg.seed, "task", name, i)
        images[i], labels[i] = _render(cfg, rng)
    return Dataset(images, labels)


def generate(cfg: SyntheticTaskConfig) -> tuple[Dataset, Dataset]:
    """Train and validation splits; a pure function of the config."""
    return _split(cfg, "train", cfg.train_size), _split(cfg, "val", cfg.val_size)


@dataclass(frozen=True)
class SurrogateConfig:
    block_weight: float = 0.4
    fusion_weight: float = 0.6
    stage_weights: tuple[float, ...] | None = None
    floor: float = 0.2
    span: float = 0.75
    noise: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.stage_weights is not None:
            object.__setattr__(self, "stage_weights", tuple(float(v) for v in self.stage_weights))
            if any(v <= 0 for v in self.stage_weights):
                raise ConfigError("stage_weights must be positive")
        if self.block_weight <= 0 or self.fusion_weight <= 0:
            raise ConfigError("block_weight and fusion_weight must be positive")
        if self.noise < 0 or self.floor < 0 or self.span <= 0:
            raise ConfigError("floor/span/noise must be non-negative (span positive)")

    @classmethod
    def from_dict(cls, doc) -> "SurrogateConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown surrogate fields: {sorted(unknown)}")
        doc = dict(doc)
        if doc.get("stage_weights") is not None:
            doc["stage_weights"] = tuple(doc["stage_weights"])
        return cls(**doc)


def _hash01(seed: int, text: str) -> float:
    digest = hashlib.sha256(f"{seed}:{text}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


class SurrogateEvaluator:
    """Deterministic accuracy stand-in, strictly increasing in block and
    fusion counts at zero noise."""

    def __init__(self, config: SearchSpaceConfig, surrogate: SurrogateConfig = SurrogateConfig()):
        self.config = config
        self.surrogate = surrogate
        full = full_genome(config)
        per_stage = per_stage_structure(full, config)
        self._max_blocks = {s: c.blocks for s, c in per_stage.items() if s >= 2}
        self._max_fusions = sum(c.fusions for c in per_stage.values())
        stages = sorted(self._max_blocks)
        if surrogate.stage_weights is not None:
            if len(surrogate.stage_weights) != len(stages):
                raise ConfigError(f"stage_weights needs one weight per searched stage ({len(stages)})")
            self._stage_w = dict(zip(stages, surrogate.stage_weights))
        else:
            self._stage_w = {s: 1.0 for s in stages}

    def __call__(self, genome: Genome) -> float:
        per_stage = per_stage_structure(genome, self.config)
        total_w = sum(self._stage_w.values())
        block_score = sum(
            self._stage_w[s] * per_stage[s].blocks / self._max_blocks[s] for s in self._stage_w
        ) / total_w
        fusion_score = (
            sum(c.fusions for c in per_stage.values()) / self._max_fusions
            if self._max_fusions else 0.0
        )
        cfg = self.surrogate
        base = cfg.floor + cfg.span * (
            (cfg.block_weight * block_score + cfg.fusion_weight * fusion_score)
            / (cfg.block_weight + cfg.fusion_weight)
        )
        value = base + cfg.noise * (2.0 * _hash01(cfg.seed, genome.serialize()) - 1.0)
        return float(min(1.0, max(0.0, value)))
