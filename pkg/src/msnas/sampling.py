"""Genome samplers: uniform, grouped, and the sandwich schedule.

Grouped sampling partitions the space into (depth-range x fusion-percentage)
sub-groups; consecutive depth choices pair into ranges, so the default choice
sets {2,3,4,5} and {0.2, 0.5, 0.8} give 3 x 3 = 9 groups. One genome is drawn
per call. All samplers are pure functions of (config, rng state).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .genome import Genome, SearchSpaceConfig, gate_sites
from .seeds import as_rng


@dataclass(frozen=True)
class SamplingGroup:
    depth_range: tuple[int, int]  # two consecutive depth choices, inclusive
    fusion_p: float

    def __post_init__(self):
        object.__setattr__(self, "depth_range", tuple(int(d) for d in self.depth_range))
        if len(self.depth_range) != 2 or self.depth_range[0] > self.depth_range[1]:
            raise ConfigError(f"bad depth range {self.depth_range}")
        if not 0.0 <= self.fusion_p <= 1.0:
            raise ConfigError("fusion_p must lie in [0, 1]")


def groups(config: SearchSpaceConfig) -> tuple[SamplingGroup, ...]:
    """All sampling sub-groups, depth ranges outermost."""
    if len(config.depth_choices) < 2:
        raise ConfigError("grouped sampling needs at least two depth choices")
    ranges = list(zip(config.depth_choices, config.depth_choices[1:]))
    return tuple(
        SamplingGroup(r, f) for r in ranges for f in config.fusion_percentages
    )


def group_schedule(config: SearchSpaceConfig, iteration: int) -> tuple[int, SamplingGroup]:
    """Deterministic round-robin group for a training iteration."""
    gs = groups(config)
    idx = iteration % len(gs)
    return idx, gs[idx]


def _draw(config: SearchSpaceConfig, rng: np.random.Generator,
          depth_pool: tuple[int, ...], gate_p: float) -> Genome:
    slots = config.depth_slots()
    picks = rng.integers(0, len(depth_pool), size=len(slots))
    depths = {slot: depth_pool[int(i)] for slot, i in zip(slots, picks)}
    sites = gate_sites(depths)
    mask = rng.random(len(sites)) < gate_p
    gates = frozenset(site for site, hit in zip(sites, mask) if hit)
    return Genome(depths, gates)


def sample_uniform(config: SearchSpaceConfig, rng, *, gate_p: float = 0.5) -> Genome:
    """Each depth uniform over the full choice set; each realizable gate site
    switched on independently with probability ``gate_p``."""
    return _draw(config, as_rng(rng), config.depth_choices, gate_p)


def sample_grouped(config: SearchSpaceConfig, group: SamplingGroup, rng) -> Genome:
    """One genome from a sub-group: depths uniform over the group's two
    consecutive choices, gates on with the group's fusion percentage."""
    if group not in groups(config):
        raise ConfigError(f"{group} is not one of this config's sampling groups")
    genome = _draw(config, as_rng(rng), group.depth_range, group.fusion_p)
    assert all(group.depth_range[0] <= d <= group.depth_range[1] for d in genome.depths.values())
    return genome


def sandwich_schedule(config: SearchSpaceConfig, seed: int, step: int) -> list[Genome]:
    """The smallest model, the largest model, and two uniform samples.

    Randomness for the two uniform picks is derived from (seed, step), so a
    training loop replays exactly.
    """
    from .genome import full_genome, min_genome
    from .seeds import derive_rng

    rng = derive_rng(int(seed), "sandwich", int(step))
    return [
        min_genome(config),
        full_genome(config),
        sample_uniform(config, rng),
        sample_uniform(config, rng),
    ]
