"""Run configuration: one YAML document drives every CLI subcommand.

The document is schema-checked up front, defaults are filled in, and the hash
of the normalized form is embedded in every output file, so artifacts can be
traced to the exact configuration that produced them. Every section's
randomness is derived from the single top-level seed unless a section pins its
own.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import yaml

from .canonical import doc_hash
from .cost import FLOP_CONVENTIONS, HeadSpec
from .errors import ConfigError
from .evolution import EvoConfig
from .genome import SearchSpaceConfig
from .tasks import SurrogateConfig, SyntheticTaskConfig
from .training import SAMPLERS, TrainConfig

SAMPLE_MODES = ("uniform", "grouped", "sandwich")


@dataclass(frozen=True)
class SampleConfig:
    count: int = 8
    mode: str = "uniform"
    gate_p: float = 0.5

    def __post_init__(self):
        if self.count < 0:
            raise ConfigError("sample count must be >= 0")
        if self.mode not in SAMPLE_MODES:
            raise ConfigError(f"sample mode must be one of {SAMPLE_MODES}")
        if not 0.0 <= self.gate_p <= 1.0:
            raise ConfigError("gate_p must lie in [0, 1]")

    @classmethod
    def from_dict(cls, doc) -> "SampleConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown sample fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class CostSettings:
    input_hw: tuple[int, int] = (256, 192)
    flop_convention: str = "mac1"

    def __post_init__(self):
        object.__setattr__(self, "input_hw", tuple(int(v) for v in self.input_hw))
        if len(self.input_hw) != 2 or min(self.input_hw) < 1:
            raise ConfigError("cost input_hw must be two positive integers")
        if self.flop_convention not in FLOP_CONVENTIONS:
            raise ConfigError(f"flop_convention must be one of {sorted(FLOP_CONVENTIONS)}")

    @classmethod
    def from_dict(cls, doc) -> "CostSettings":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown cost fields: {sorted(unknown)}")
        return cls(**doc)


_SECTIONS = {
    "search_space": SearchSpaceConfig,
    "head": HeadSpec,
    "task": SyntheticTaskConfig,
    "train": TrainConfig,
    "evo": EvoConfig,
    "surrogate": SurrogateConfig,
    "sample": SampleConfig,
    "cost": CostSettings,
}
_SEEDED_SECTIONS = ("task", "train", "evo", "surrogate")


@dataclass(frozen=True)
class RunConfig:
    seed: int
    out: str
    search_space: SearchSpaceConfig
    head: HeadSpec
    task: SyntheticTaskConfig
    train: TrainConfig
    evo: EvoConfig
    surrogate: SurrogateConfig
    sample: SampleConfig
    cost: CostSettings

    def normalized(self) -> dict:
        doc = {"seed": self.seed}
        for name in _SECTIONS:
            section = getattr(self, name)
            if hasattr(section, "canonical"):
                doc[name] = section.canonical()
            else:
                doc[name] = {
                    f: _plain(getattr(section, f)) for f in section.__dataclass_fields__
                }
        return doc

    def config_hash(self) -> str:
        """Hash of the normalized run config (output directory excluded)."""
        return doc_hash(self.normalized())


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def from_dict(doc: dict, *, seed_override: int | None = None, out_override: str | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a mapping")
    unknown = set(doc) - set(_SECTIONS) - {"seed", "out"}
    if unknown:
        raise ConfigError(f"unknown run config sections: {sorted(unknown)}")
    seed = int(doc.get("seed", 0)) if seed_override is None else int(seed_override)
    out = out_override if out_override is not None else doc.get("out")
    if out is None:
        raise ConfigError("an output directory is required (config key 'out' or flag --out)")
    sections = {}
    for name, cls in _SECTIONS.items():
        raw = dict(doc.get(name) or {})
        if name in _SEEDED_SECTIONS and "seed" not in raw:
            raw["seed"] = seed
        try:
            sections[name] = cls.from_dict(raw)
        except ConfigError as exc:
            raise ConfigError(f"in section '{name}': {exc}") from exc
        except TypeError as exc:
            raise ConfigError(f"in section '{name}': {exc}") from exc
    return RunConfig(seed=seed, out=str(out), **sections)


def load(path: str | Path, *, seed_override: int | None = None, out_override: str | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise exc
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    return from_dict(doc, seed_override=seed_override, out_override=out_override)
