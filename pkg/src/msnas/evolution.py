"""Multi-scale topology evolution over a frozen evaluator.

The loop seeds an archive with uniform samples, then repeatedly selects the
top-k genomes by non-dominated rank in the (lower flops, higher accuracy)
order, recombines whole stage modules between parents, flips fusion gates, and
records the evaluated offspring until the archive reaches its target size.
Every evaluated genome stays in the archive; the Pareto front is computed over
unique genomes (duplicates carry identical metrics because evaluators are
deterministic per genome).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .canonical import canonical_json
from .errors import ConfigError, EvolutionError
from .genome import Genome, SearchSpaceConfig, count_structure, gate_sites, genome_from_doc
from .sampling import sample_uniform
from .seeds import as_rng, derive_rng


@dataclass(frozen=True)
class EvoConfig:
    n0: int = 1000
    k: int = 100
    p_c: float = 0.25
    p_m: float = 0.5
    n_final: int = 2000
    seed: int = 0
    duplicate_retries: int = 8

    def __post_init__(self):
        if not (0.0 <= self.p_c <= 1.0 and 0.0 <= self.p_m <= 1.0):
            raise ConfigError("p_c and p_m must lie in [0, 1]")
        if self.k < 1 or self.n0 < 1:
            raise ConfigError("k and n0 must be >= 1")
        if self.n0 > self.n_final:
            raise ConfigError("n0 must not exceed n_final")
        if self.duplicate_retries < 0:
            raise ConfigError("duplicate_retries must be >= 0")

    @classmethod
    def from_dict(cls, doc) -> "EvoConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown evo fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class EvalRecord:
    genome: Genome
    accuracy: float
    flops: int
    gen: int | None  # None marks the initial population

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy must lie in [0, 1], got {self.accuracy}")
        if self.flops < 0:
            raise ValueError("flops must be >= 0")

    @property
    def provenance(self) -> str:
        return "initial" if self.gen is None else f"offspring-gen-{self.gen}"


def dominates(a: EvalRecord, b: EvalRecord) -> bool:
    """Cheaper-or-equal and at-least-as-accurate, strictly better somewhere."""
    return (a.flops <= b.flops and a.accuracy >= b.accuracy
            and (a.flops < b.flops or a.accuracy > b.accuracy))


def _front_of(records: list[EvalRecord]) -> list[int]:
    """Indices of non-dominated records via a flops-sorted sweep."""
    order = sorted(range(len(records)), key=lambda i: (records[i].flops, -records[i].accuracy))
    front: list[int] = []
    best_before = -np.inf  # best accuracy at strictly lower flops
    pos = 0
    while pos < len(order):
        flops = records[order[pos]].flops
        group = []
        while pos < len(order) and records[order[pos]].flops == flops:
            group.append(order[pos])
            pos += 1
        group_best = max(records[i].accuracy for i in group)
        if group_best > best_before:
            front.extend(i for i in group if records[i].accuracy == group_best)
        best_before = max(best_before, group_best)
    return sorted(front, key=lambda i: (records[i].flops, records[i].accuracy))


class ParetoArchive:
    """All evaluated genomes plus non-dominated front bookkeeping."""

    def __init__(self, config: SearchSpaceConfig):
        self.config = config
        self.records: list[EvalRecord] = []
        self._first_index: dict[str, int] = {}
        self._front: list[int] | None = None

    def __len__(self) -> int:
        return len(self.records)

    def add(self, record: EvalRecord) -> None:
        serial = record.genome.serialize()
        self.records.append(record)
        self._first_index.setdefault(serial, len(self.records) - 1)
        self._front = None

    def seen(self, serial: str) -> bool:
        return serial in self._first_index

    def unique_indices(self) -> list[int]:
        return sorted(self._first_index.values())

    def front_indices(self) -> list[int]:
        if self._front is None:
            unique = self.unique_indices()
            subset = [self.records[i] for i in unique]
            self._front = [unique[j] for j in _front_of(subset)]
        return list(self._front)

    def front(self) -> list[EvalRecord]:
        return [self.records[i] for i in self.front_indices()]

    def max_generation(self) -> int:
        gens = [r.gen for r in self.records if r.gen is not None]
        return max(gens) if gens else 0

    # -- persistence: one record per line, append-only ----------------------

    def record_line(self, record: EvalRecord) -> str:
        doc = {
            "accuracy": record.accuracy,
            "config_hash": self.config.config_hash(),
            "flops": record.flops,
            "gen": record.gen,
            "genome": record.genome.canonical(),
        }
        return canonical_json(doc)

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            for r in self.records:
                f.write(self.record_line(r))

    @classmethod
    def load(cls, path: str | Path, config: SearchSpaceConfig, *, check_hash: bool = True) -> "ParetoArchive":
        archive = cls(config)
        expected = config.config_hash()
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            if not line.strip():
                continue
            doc = json.loads(line)
            if check_hash and doc.get("config_hash") != expected:
                raise ConfigError(f"{path}:{lineno}: archive was produced under a different config")
            genome_doc = {"version": 1, "config_hash": doc.get("config_hash")}
            genome_doc.update(doc["genome"])
            genome = genome_from_doc(genome_doc, config, check_hash=check_hash)
            archive.add(EvalRecord(genome, float(doc["accuracy"]), int(doc["flops"]),
                                   None if doc.get("gen") is None else int(doc["gen"])))
        return archive


def _thin_by_flops(records: list[EvalRecord], k: int) -> list[EvalRecord]:
    """Evenly spaced picks along the flops axis (coverage over the front)."""
    ordered = sorted(records, key=lambda r: (r.flops, -r.accuracy, r.genome.serialize()))
    if len(ordered) <= k:
        return ordered
    raw = np.linspace(0, len(ordered) - 1, k)
    picks = sorted({int(round(v)) for v in raw})
    cursor = 0
    while len(picks) < k:  # rounding collisions: fill with the first unused slots
        if cursor not in picks:
            picks.append(cursor)
            picks.sort()
        cursor += 1
    return [ordered[i] for i in picks]


def select_parents(archive: ParetoArchive, k: int) -> list[Genome]:
    """Top-k by non-dominated rank.

    Whole fronts are taken rank by rank. Within a rank the order is accuracy
    descending, then flops ascending, then canonical serialization. If the
    first front alone exceeds k, the k survivors are spread evenly along the
    flops axis instead.
    """
    if len(archive) == 0:
        raise ConfigError("cannot select parents from an empty archive")
    remaining = [archive.records[i] for i in archive.unique_indices()]
    chosen: list[EvalRecord] = []
    first_rank = True
    while remaining and len(chosen) < k:
        front_idx = _front_of(remaining)
        front = [remaining[i] for i in front_idx]
        need = k - len(chosen)
        if len(front) <= need:
            chosen.extend(sorted(front, key=lambda r: (-r.accuracy, r.flops, r.genome.serialize())))
        elif first_rank:
            chosen.extend(_thin_by_flops(front, need))
        else:
            ordered = sorted(front, key=lambda r: (-r.accuracy, r.flops, r.genome.serialize()))
            chosen.extend(ordered[:need])
        picked = set(front_idx)
        remaining = [r for i, r in enumerate(remaining) if i not in picked]
        first_rank = False
    return [r.genome for r in chosen]


def crossover(parent: Genome, pool, p_c: float, rng) -> Genome:
    """Inner-stage crossover: each stage module is swapped wholesale (its
    depths and its gates) with the matching module of a random pool member,
    independently with probability ``p_c``."""
    rng = as_rng(rng)
    pool = list(pool)
    if not pool:
        return parent
    depths = dict(parent.depths)
    gates = set(parent.gates)
    slots = sorted({(s, m) for (s, m, _b) in parent.depths})
    for (s, m) in slots:
        if rng.random() >= p_c:
            continue
        partner = pool[int(rng.integers(len(pool)))]
        for (ps, pm, pb), d in partner.depths.items():
            if (ps, pm) == (s, m):
                depths[(ps, pm, pb)] = d
        gates = {g for g in gates if (g[0], g[1]) != (s, m)}
        gates |= {g for g in partner.gates if (g[0], g[1]) == (s, m)}
    return Genome(depths, frozenset(gates))


def mutate(genome: Genome, p_m: float, rng) -> Genome:
    """Flip each realizable gate site independently with probability ``p_m``;
    depths are untouched, so the result is valid whenever the input is."""
    rng = as_rng(rng)
    sites = gate_sites(genome.depths)
    mask = rng.random(len(sites)) < p_m
    gates = set(genome.gates)
    for site, flip in zip(sites, mask):
        if flip:
            if site in gates:
                gates.remove(site)
            else:
                gates.add(site)
    return Genome(dict(genome.depths), frozenset(gates))


def _evaluate_batch(genomes, evaluator, cost_fn, gen, archive, workers, on_records):
    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                accuracies = list(pool.map(evaluator, genomes))
        else:
            accuracies = [evaluator(g) for g in genomes]
        records = [
            EvalRecord(g, float(acc), int(cost_fn(g)), gen)
            for g, acc in zip(genomes, accuracies)
        ]
    except Exception as exc:
        raise EvolutionError(f"evaluator failed: {exc}", archive) from exc
    for r in records:
        archive.add(r)
    if on_records:
        on_records(records)
    return records


def evolve(config: SearchSpaceConfig, evaluator, cost_fn, evo: EvoConfig, *,
           workers: int = 1, archive: ParetoArchive | None = None,
           on_records=None) -> ParetoArchive:
    """Run the topology evolution until the archive holds ``n_final`` records.

    ``evaluator`` maps genome -> accuracy in [0, 1] and must be deterministic
    per genome; ``cost_fn`` maps genome -> flops. Passing a preloaded archive
    resumes: the initial population is completed first if short, then
    generations continue from the recorded count. Results are independent of
    ``workers``.
    """
    archive = archive if archive is not None else ParetoArchive(config)
    while len(archive) < evo.n0:
        want = min(evo.n0 - len(archive), 256)
        start = len(archive)
        genomes = [
            sample_uniform(config, derive_rng(evo.seed, "evolve.init", start + i))
            for i in range(want)
        ]
        _evaluate_batch(genomes, evaluator, cost_fn, None, archive, workers, on_records)
    gen = archive.max_generation()
    while len(archive) < evo.n_final:
        gen += 1
        parents = select_parents(archive, evo.k)
        seen = {r.genome.serialize() for r in archive.records}
        offspring = []
        for i, parent in enumerate(parents):
            rng = derive_rng(evo.seed, "evolve.gen", gen, i)
            pool = parents[:i] + parents[i + 1:]
            child = mutate(crossover(parent, pool, evo.p_c, rng), evo.p_m, rng)
            retries = 0
            while child.serialize() in seen and retries < evo.duplicate_retries:
                child = mutate(child, evo.p_m, rng)
                retries += 1
            seen.add(child.serialize())
            offspring.append(child)
        _evaluate_batch(offspring, evaluator, cost_fn, gen, archive, workers, on_records)
    return archive


def random_search(config: SearchSpaceConfig, evaluator, cost_fn, budget: int, seed: int, *,
                  workers: int = 1, on_records=None) -> ParetoArchive:
    """Equal-budget baseline: uniform samples from the same stream the
    evolution loop uses for its initial population."""
    archive = ParetoArchive(config)
    start = 0
    while start < budget:
        want = min(budget - start, 256)
        genomes = [
            sample_uniform(config, derive_rng(seed, "evolve.init", start + i))
            for i in range(want)
        ]
        _evaluate_batch(genomes, evaluator, cost_fn, None, archive, workers, on_records)
        start += want
    return archive


def hypervolume(points, ref: tuple[float, float]) -> float:
    """Area dominated by the (min flops, max accuracy) front of ``points``
    relative to the reference corner (flops upper bound, accuracy floor)."""
    ref_f, ref_a = float(ref[0]), float(ref[1])
    usable = [(float(f), float(a)) for f, a in points if f <= ref_f and a >= ref_a]
    if not usable:
        return 0.0
    usable.sort(key=lambda p: (p[0], -p[1]))
    area = 0.0
    prev_acc = ref_a
    for f, a in usable:
        if a > prev_acc:
            area += (ref_f - f) * (a - prev_acc)
            prev_acc = a
    return area


def archive_hypervolume(archive: ParetoArchive, ref: tuple[float, float]) -> float:
    return hypervolume([(r.flops, r.accuracy) for r in archive.front()], ref)


def pattern_analysis(archive: ParetoArchive) -> list[dict]:
    """Structure counts along the front, ordered by flops."""
    front = archive.front()
    if not front:
        raise ConfigError("archive front is empty")
    rows = []
    for r in front:
        counts = count_structure(r.genome, archive.config)
        rows.append({
            "flops": r.flops,
            "accuracy": r.accuracy,
            "blocks": counts.blocks,
            "fusions": counts.fusions,
            "ratio": counts.fusions / counts.blocks,
        })
    return rows
