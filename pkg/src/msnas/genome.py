"""Architecture genome for multi-branch, cross-scale-fusion networks.

A genome fixes, for every searched stage module, the number of residual blocks
on each resolution branch, plus a set of fusion gates. A gate
``(stage, module, src, pos, dst)`` attaches a resample-and-add edge from the
output of block ``pos`` on branch ``src`` to branch ``dst`` of the same module.
A gate is only valid when both endpoints are at least ``pos`` blocks deep, so
crossover and mutation stay closed over valid genomes.

Branch ``r`` of any stage runs at 1/2^r of the stem output resolution and
carries ``base_width * 2**r`` channels. Stage 1 is a fixed single-branch prefix
and is not searched.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

from .canonical import canonical_json, doc_hash, log10_int
from .errors import ConfigError, GenomeValidationError

GENOME_FORMAT_VERSION = 1

# (stage, module, branch) -> searched depth slot
DepthKey = tuple[int, int, int]
# (stage, module, src_branch, position, dst_branch)
GateKey = tuple[int, int, int, int, int]

CARDINALITY_CONVENTIONS = ("realized-sites", "max-depth-sites")


@dataclass(frozen=True)
class SearchSpaceConfig:
    """Topology and choice sets that every genome is validated against."""

    base_width: int = 32
    depth_choices: tuple[int, ...] = (2, 3, 4, 5)
    fusion_percentages: tuple[float, ...] = (0.2, 0.5, 0.8)
    stage_modules: tuple[int, ...] = (1, 1, 4, 3)
    stem_reduction: int = 4
    stem_channels: int = 64
    stage1_blocks: int = 4

    def __post_init__(self):
        object.__setattr__(self, "depth_choices", tuple(int(d) for d in self.depth_choices))
        object.__setattr__(self, "fusion_percentages", tuple(float(f) for f in self.fusion_percentages))
        object.__setattr__(self, "stage_modules", tuple(int(m) for m in self.stage_modules))
        if not self.depth_choices:
            raise ConfigError("depth_choices must be non-empty")
        if any(d < 1 for d in self.depth_choices):
            raise ConfigError("depth choices must all be >= 1")
        if any(b <= a for a, b in itertools.pairwise(self.depth_choices)):
            raise ConfigError("depth_choices must be strictly increasing")
        if not self.fusion_percentages:
            raise ConfigError("fusion_percentages must be non-empty")
        if any(not 0.0 <= f <= 1.0 for f in self.fusion_percentages):
            raise ConfigError("fusion percentages must lie in [0, 1]")
        if not self.stage_modules or any(m < 1 for m in self.stage_modules):
            raise ConfigError("stage_modules must be non-empty with every count >= 1")
        if self.base_width < 1 or self.stem_channels < 1:
            raise ConfigError("channel widths must be >= 1")
        if self.stem_reduction < 1:
            raise ConfigError("stem_reduction must be >= 1")
        if self.stage1_blocks < 1:
            raise ConfigError("stage1_blocks must be >= 1")

    @property
    def num_stages(self) -> int:
        return len(self.stage_modules)

    @property
    def stage_branches(self) -> tuple[int, ...]:
        """Stage s runs s parallel resolution branches."""
        return tuple(range(1, self.num_stages + 1))

    @property
    def max_depth(self) -> int:
        return self.depth_choices[-1]

    @property
    def min_depth(self) -> int:
        return self.depth_choices[0]

    def branches(self, stage: int) -> int:
        if not 1 <= stage <= self.num_stages:
            raise ConfigError(f"stage {stage} outside 1..{self.num_stages}")
        return stage

    def channels(self, branch: int) -> int:
        return self.base_width << branch

    def module_slots(self) -> list[tuple[int, int]]:
        """Searched (stage, module) slots: all modules of stages 2 and up."""
        return [
            (s, m)
            for s in range(2, self.num_stages + 1)
            for m in range(self.stage_modules[s - 1])
        ]

    def depth_slots(self) -> list[DepthKey]:
        return [(s, m, b) for s, m in self.module_slots() for b in range(s)]

    def canonical(self) -> dict:
        return {
            "base_width": self.base_width,
            "depth_choices": list(self.depth_choices),
            "fusion_percentages": list(self.fusion_percentages),
            "stage_modules": list(self.stage_modules),
            "stem_reduction": self.stem_reduction,
            "stem_channels": self.stem_channels,
            "stage1_blocks": self.stage1_blocks,
        }

    def config_hash(self) -> str:
        return doc_hash(self.canonical())

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SearchSpaceConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown search_space fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class Genome:
    """Complete description of one architecture in the search space.

    Immutable after construction; all operations on genomes are pure.
    """

    depths: dict[DepthKey, int]
    gates: frozenset[GateKey]

    def __post_init__(self):
        object.__setattr__(self, "depths", dict(self.depths))
        object.__setattr__(self, "gates", frozenset(tuple(g) for g in self.gates))

    def depth(self, stage: int, module: int, branch: int) -> int:
        return self.depths[(stage, module, branch)]

    def module_depths(self, stage: int, module: int) -> dict[int, int]:
        return {b: d for (s, m, b), d in self.depths.items() if (s, m) == (stage, module)}

    def module_gates(self, stage: int, module: int) -> frozenset[GateKey]:
        return frozenset(g for g in self.gates if g[0] == stage and g[1] == module)

    def canonical(self) -> dict:
        return {
            "depths": [list(k) + [d] for k, d in sorted(self.depths.items())],
            "gates": [list(g) for g in sorted(self.gates)],
        }

    def serialize(self) -> str:
        """Canonical text form; genome equality is byte-equality of this string."""
        return canonical_json(self.canonical())

    def __eq__(self, other):
        if not isinstance(other, Genome):
            return NotImplemented
        return self.depths == other.depths and self.gates == other.gates

    def __hash__(self):
        return hash((tuple(sorted(self.depths.items())), self.gates))


@dataclass(frozen=True)
class StructureCount:
    blocks: int
    fusions: int

    def __post_init__(self):
        if self.blocks < 0 or self.fusions < 0:
            raise ValueError("structure counts must be non-negative")


@dataclass(frozen=True)
class Violation:
    rule: str
    key: tuple
    message: str


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def first(self) -> Violation | None:
        return self.violations[0] if self.violations else None


def gate_sites(depths: Mapping[DepthKey, int]) -> list[GateKey]:
    """All gate sites realizable under the given depth assignment.

    Site order is canonical: (stage, module) ascending, then (src, dst) pairs
    in lexicographic order, then position ascending. Samplers and mutation
    consume randomness in exactly this order.
    """
    modules: dict[tuple[int, int], dict[int, int]] = {}
    for (s, m, b), d in depths.items():
        modules.setdefault((s, m), {})[b] = d
    sites: list[GateKey] = []
    for (s, m) in sorted(modules):
        branch_depths = modules[(s, m)]
        branches = sorted(branch_depths)
        for src in branches:
            for dst in branches:
                if src == dst:
                    continue
                limit = min(branch_depths[src], branch_depths[dst])
                sites.extend((s, m, src, pos, dst) for pos in range(1, limit + 1))
    return sites


def max_gate_sites(config: SearchSpaceConfig) -> list[GateKey]:
    """Every site that any genome of the space could gate (all depths maximal)."""
    full = {slot: config.max_depth for slot in config.depth_slots()}
    return gate_sites(full)


def validate(genome: Genome, config: SearchSpaceConfig) -> ValidationResult:
    """Check every genome invariant against ``config``; never raises."""
    violations: list[Violation] = []
    expected = set(config.depth_slots())
    seen = set(genome.depths)
    for key in sorted(seen - expected):
        violations.append(Violation("unknown-depth-slot", key, f"depth slot {key} not in search space"))
    for key in sorted(expected - seen):
        violations.append(Violation("missing-depth-slot", key, f"depth slot {key} missing"))
    choice_set = set(config.depth_choices)
    for key in sorted(seen & expected):
        if genome.depths[key] not in choice_set:
            violations.append(Violation("depth-not-in-choice-set", key, f"depth not in choice set at {key}"))
    for gate in sorted(genome.gates):
        s, m, src, pos, dst = gate
        if not (2 <= s <= config.num_stages and 0 <= m < config.stage_modules[s - 1]):
            violations.append(Violation("unknown-module", gate, f"gate {gate} references an unknown stage module"))
            continue
        nb = config.branches(s)
        if not (0 <= src < nb and 0 <= dst < nb):
            violations.append(Violation("branch-not-in-stage", gate, f"gate {gate} endpoint branch not in stage {s}"))
            continue
        if src == dst:
            violations.append(Violation("self-fusion", gate, f"gate {gate} connects a branch to itself"))
            continue
        if pos < 1:
            violations.append(Violation("bad-position", gate, f"gate {gate} position must be >= 1"))
            continue
        d_src = genome.depths.get((s, m, src))
        d_dst = genome.depths.get((s, m, dst))
        if d_src is not None and pos > d_src:
            violations.append(Violation("position-exceeds-depth", gate, f"gate position exceeds branch depth (source) at {gate}"))
        elif d_dst is not None and pos > d_dst:
            violations.append(Violation("position-exceeds-depth", gate, f"gate position exceeds branch depth (target) at {gate}"))
    return ValidationResult(tuple(violations))


def require_valid(genome: Genome, config: SearchSpaceConfig) -> None:
    result = validate(genome, config)
    if not result.ok:
        raise GenomeValidationError(result.first.message)


def hrnet_baseline(config: SearchSpaceConfig) -> Genome:
    """The reference HRNet topology: depth 4 everywhere, fully connected
    module-end fusion (every ordered branch pair gated at each module's final
    block position)."""
    if config.stage_modules != (1, 1, 4, 3):
        raise ConfigError("the HRNet baseline is only defined for the default stage topology (1, 1, 4, 3)")
    if 4 not in config.depth_choices:
        raise ConfigError("the HRNet baseline needs depth 4 in the choice set")
    depths = {slot: 4 for slot in config.depth_slots()}
    gates = frozenset(
        (s, m, src, 4, dst)
        for s, m in config.module_slots()
        for src in range(s)
        for dst in range(s)
        if src != dst
    )
    return Genome(depths, gates)


def full_genome(config: SearchSpaceConfig) -> Genome:
    """Maximum depth everywhere and every fusion gate switched on."""
    depths = {slot: config.max_depth for slot in config.depth_slots()}
    return Genome(depths, frozenset(gate_sites(depths)))


def min_genome(config: SearchSpaceConfig) -> Genome:
    """Minimum depth everywhere and no fusion at all."""
    return Genome({slot: config.min_depth for slot in config.depth_slots()}, frozenset())


def count_structure(genome: Genome, config: SearchSpaceConfig) -> StructureCount:
    require_valid(genome, config)
    blocks = config.stage1_blocks + sum(genome.depths.values())
    return StructureCount(blocks, len(genome.gates))


def per_stage_structure(genome: Genome, config: SearchSpaceConfig) -> dict[int, StructureCount]:
    """Block/fusion counts broken down by stage; values sum to count_structure."""
    require_valid(genome, config)
    out = {1: StructureCount(config.stage1_blocks, 0)}
    for s in range(2, config.num_stages + 1):
        blocks = sum(d for (st, _, _), d in genome.depths.items() if st == s)
        fusions = sum(1 for g in genome.gates if g[0] == s)
        out[s] = StructureCount(blocks, fusions)
    return out


def _module_realized_count(branches: int, choices: tuple[int, ...]) -> int:
    """Number of distinct (depths, gates) settings of one stage module when
    gate sites exist at every position up to min(endpoint depths)."""
    total = 0
    for d in itertools.product(choices, repeat=branches):
        sites = sum(
            min(d[i], d[j])
            for i in range(branches)
            for j in range(branches)
            if i != j
        )
        total += 1 << sites
    return total


def space_cardinality(config: SearchSpaceConfig, convention: str = "realized-sites") -> int:
    """Exact number of distinct genomes in the space.

    ``realized-sites``: a gate site exists at every position up to the minimum
    of the endpoint depths actually chosen, which is the validity rule used
    everywhere else in this package.

    ``max-depth-sites``: every ordered branch pair hosts a site at every
    position up to the largest depth choice, regardless of the chosen depths,
    so depth and gating choices count independently.
    """
    if convention == "realized-sites":
        counts = {}
        total = 1
        for s, _m in config.module_slots():
            if s not in counts:
                counts[s] = _module_realized_count(s, config.depth_choices)
            total *= counts[s]
        return total
    if convention == "max-depth-sites":
        total = 1
        n_choices = len(config.depth_choices)
        for s, _m in config.module_slots():
            sites = s * (s - 1) * config.max_depth
            total *= n_choices**s * (1 << sites)
        return total
    raise ConfigError(f"unknown cardinality convention {convention!r}; choose from {CARDINALITY_CONVENTIONS}")


def cardinality_report(config: SearchSpaceConfig) -> dict[str, dict]:
    """log10 cardinality per counting convention, for human comparison."""
    report = {}
    for convention in CARDINALITY_CONVENTIONS:
        n = space_cardinality(config, convention)
        report[convention] = {"log10": round(log10_int(n), 4), "digits": len(str(n))}
    return report


def enumerate_genomes(config: SearchSpaceConfig, limit: int = 1_000_000) -> Iterator[Genome]:
    """Yield every genome in the space, in a fixed deterministic order.

    Only feasible for toy configs; refuses when the exact cardinality
    exceeds ``limit``.
    """
    n = space_cardinality(config, "realized-sites")
    if n > limit:
        raise ConfigError(f"space has {n} genomes, above the enumeration limit {limit}")
    slots = config.depth_slots()
    for combo in itertools.product(config.depth_choices, repeat=len(slots)):
        depths = dict(zip(slots, combo))
        sites = gate_sites(depths)
        for mask in range(1 << len(sites)):
            gates = frozenset(site for i, site in enumerate(sites) if mask >> i & 1)
            yield Genome(dict(depths), gates)


# ---------------------------------------------------------------------------
# Genome file format: versioned JSON document with canonical key order.


def genome_to_doc(genome: Genome, config: SearchSpaceConfig) -> dict:
    doc = {"version": GENOME_FORMAT_VERSION, "config_hash": config.config_hash()}
    doc.update(genome.canonical())
    return doc


def genome_from_doc(doc: Mapping, config: SearchSpaceConfig, *, check_hash: bool = True) -> Genome:
    if doc.get("version") != GENOME_FORMAT_VERSION:
        raise ConfigError(f"unsupported genome format version {doc.get('version')!r}")
    if check_hash and doc.get("config_hash") != config.config_hash():
        raise ConfigError("genome file was produced under a different search-space config")
    try:
        depths = {(int(s), int(m), int(b)): int(d) for s, m, b, d in doc["depths"]}
        gate_rows = [tuple(int(v) for v in row) for row in doc["gates"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed genome document: {exc}") from exc
    if len(depths) != len(doc["depths"]):
        raise ConfigError("genome document repeats a depth slot")
    if len(set(gate_rows)) != len(gate_rows):
        raise ConfigError("genome document repeats a fusion gate")
    genome = Genome(depths, frozenset(gate_rows))
    require_valid(genome, config)
    return genome


def save_genome(path: str | Path, genome: Genome, config: SearchSpaceConfig) -> None:
    Path(path).write_text(canonical_json(genome_to_doc(genome, config)))


def load_genome(path: str | Path, config: SearchSpaceConfig, *, check_hash: bool = True) -> Genome:
    doc = json.loads(Path(path).read_text())
    return genome_from_doc(doc, config, check_hash=check_hash)
