"""Command-line pipeline: sample, cost, train, evolve, analyze.

Every subcommand is driven by one YAML run config plus a root seed; rerunning
a subcommand with the same config and seed reproduces its outputs byte for
byte. Outputs embed the run-config hash. Exit codes: 0 success, 2 config
error, 3 runtime/divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import runconfig
from .canonical import log10_int
from .checkpoint import load_store, save_store
from .cost import cost
from .errors import ConfigError, EvolutionError, TrainingDiverged
from .evolution import ParetoArchive, evolve, pattern_analysis, random_search
from .genome import (
    CARDINALITY_CONVENTIONS,
    count_structure,
    load_genome,
    save_genome,
    space_cardinality,
)
from .sampling import groups, sample_grouped, sample_uniform, sandwich_schedule
from .seeds import derive_rng
from .supernet import build
from .tasks import SurrogateEvaluator, generate
from .training import evaluate, train_supernet, train_teacher

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


class CsvWriter:
    """Streams rows to disk so interrupted runs keep their partial logs."""

    def __init__(self, path: Path, header: list[str], config_hash: str, append: bool = False):
        self.path = path
        self.file = open(path, "a" if append else "w")
        if not append:
            self.file.write(f"# config_hash={config_hash}\n")
            self.file.write(",".join(header) + "\n")
            self.file.flush()
        self.header = header

    def row(self, values: dict) -> None:
        self.file.write(",".join(_fmt(values[h]) for h in self.header) + "\n")
        self.file.flush()

    def close(self) -> None:
        self.file.close()


def _load(args) -> runconfig.RunConfig:
    rc = runconfig.load(args.config, seed_override=args.seed, out_override=args.out)
    Path(rc.out).mkdir(parents=True, exist_ok=True)
    return rc


def cmd_sample(args) -> int:
    rc = _load(args)
    ss = rc.search_space
    out = Path(rc.out)
    genome_dir = out / "genomes"
    genome_dir.mkdir(exist_ok=True)
    for convention in CARDINALITY_CONVENTIONS:
        log10 = log10_int(space_cardinality(ss, convention))
        print(f"search space size ({convention}): 10^{log10:.2f}")
    mode = rc.sample.mode
    group_list = groups(ss) if mode == "grouped" else ()
    writer = CsvWriter(out / "samples.csv",
                       ["index", "file", "mode", "group", "blocks", "fusions"],
                       rc.config_hash())
    for i in range(rc.sample.count):
        group_id = ""
        if mode == "uniform":
            genome = sample_uniform(ss, derive_rng(rc.seed, "sample", i), gate_p=rc.sample.gate_p)
        elif mode == "grouped":
            group_id = i % len(group_list)
            genome = sample_grouped(ss, group_list[group_id], derive_rng(rc.seed, "sample", i))
        else:
            genome = sandwich_schedule(ss, rc.seed, i // 4)[i % 4]
        path = genome_dir / f"genome_{i:05d}.json"
        save_genome(path, genome, ss)
        counts = count_structure(genome, ss)
        writer.row({"index": i, "file": path.name, "mode": mode, "group": group_id,
                    "blocks": counts.blocks, "fusions": counts.fusions})
    writer.close()
    print(f"wrote {rc.sample.count} genomes under {genome_dir}")
    return EXIT_OK


def cmd_cost(args) -> int:
    rc = _load(args)
    ss = rc.search_space
    out = Path(rc.out)
    writer = CsvWriter(out / "cost.csv",
                       ["file", "params", "flops", "blocks", "fusions"],
                       rc.config_hash())
    print(f"{'file':<24} {'params':>12} {'flops':>16} {'blocks':>7} {'fusions':>8}")
    for path in args.genomes:
        genome = load_genome(path, ss)
        report = cost(genome, ss, rc.cost.input_hw, rc.head, rc.cost.flop_convention)
        name = Path(path).name
        print(f"{name:<24} {report.params:>12} {report.flops:>16} {report.blocks:>7} {report.fusions:>8}")
        writer.row({"file": name, "params": report.params, "flops": report.flops,
                    "blocks": report.blocks, "fusions": report.fusions})
    writer.close()
    return EXIT_OK


def _split_opt_state(extras: dict) -> dict:
    return {k[len("opt."):]: v for k, v in extras.items() if k.startswith("opt.")}


def cmd_train(args) -> int:
    rc = _load(args)
    out = Path(rc.out)
    train_set, val_set = generate(rc.task)
    run_hash = rc.config_hash()

    if args.mode == "teacher":
        ckpt, csv_path, header = out / "teacher.ckpt", out / "teacher_metrics.csv", \
            ["epoch", "task_loss", "lr", "val_pixel_accuracy"]
    else:
        ckpt, csv_path, header = out / "supernet.ckpt", out / "supernet_metrics.csv", \
            ["iteration", "group", "task_loss", "kd_loss", "lr"]

    start = 0
    opt_state = None
    if args.resume:
        store, extras, meta = load_store(args.resume)
        if meta.get("run_config_hash") != run_hash:
            raise ConfigError("checkpoint was produced under a different run config")
        start = int(meta.get("progress", 0))
        opt_state = _split_opt_state(extras)
    elif args.mode == "teacher":
        store = build(rc.search_space, rc.head, rc.seed)
    else:
        teacher_path = out / "teacher.ckpt"
        teacher, _, tmeta = load_store(teacher_path)
        if tmeta.get("run_config_hash") != run_hash:
            raise ConfigError("teacher checkpoint was produced under a different run config")
        store = teacher.clone()
    if args.mode == "supernet":
        teacher, _, tmeta = load_store(out / "teacher.ckpt")
        if tmeta.get("run_config_hash") != run_hash:
            raise ConfigError("teacher checkpoint was produced under a different run config")

    writer = CsvWriter(csv_path, header, run_hash, append=start > 0)
    try:
        if args.mode == "teacher":
            rows, opt_state = train_teacher(store, train_set, val_set, rc.train,
                                            start_epoch=start, opt_state=opt_state,
                                            on_row=writer.row)
            progress = rc.train.epochs
        else:
            rows, opt_state = train_supernet(store, teacher, train_set, rc.train,
                                             start_iteration=start, opt_state=opt_state,
                                             on_row=writer.row)
            progress = rc.train.iterations
    except TrainingDiverged:
        save_store(out / f"{args.mode}_diverged.ckpt", store,
                   meta={"run_config_hash": run_hash, "progress": start, "diverged": True})
        raise
    finally:
        writer.close()

    save_store(ckpt, store,
               extra_arrays={f"opt.{k}": v for k, v in opt_state.items()},
               meta={"run_config_hash": run_hash, "progress": progress,
                     "rng": {"scheme": "derived-per-step", "root_seed": rc.seed,
                             "next_step": progress}})
    if args.mode == "teacher":
        from .genome import full_genome

        metrics = evaluate(store, full_genome(rc.search_space), val_set)
        print(f"teacher val pixel accuracy: {metrics['pixel_accuracy']:.4f}  "
              f"mean IoU: {metrics['mean_iou']:.4f}")
    print(f"saved {ckpt}")
    return EXIT_OK


def _pattern_csv(path: Path, archive: ParetoArchive, config_hash: str) -> None:
    writer = CsvWriter(path, ["flops", "accuracy", "blocks", "fusions", "ratio"], config_hash)
    for row in pattern_analysis(archive):
        writer.row(row)
    writer.close()


def cmd_evolve(args) -> int:
    rc = _load(args)
    ss = rc.search_space
    out = Path(rc.out)
    run_hash = rc.config_hash()

    cost_cache: dict[str, int] = {}

    def cost_fn(genome) -> int:
        serial = genome.serialize()
        if serial not in cost_cache:
            cost_cache[serial] = cost(genome, ss, rc.cost.input_hw, rc.head,
                                      rc.cost.flop_convention).flops
        return cost_cache[serial]

    if args.surrogate:
        evaluator = SurrogateEvaluator(ss, rc.surrogate)
    else:
        store, _, _ = load_store(out / "supernet.ckpt")
        _, val_set = generate(rc.task)
        evaluator = lambda genome: evaluate(store, genome, val_set)["pixel_accuracy"]  # noqa: E731

    prefix = "random_" if args.random_search else ""
    archive_path = Path(args.resume) if args.resume else out / f"{prefix}archive.jsonl"
    if args.resume:
        archive = ParetoArchive.load(archive_path, ss)
        log = open(archive_path, "a")
    else:
        archive = ParetoArchive(ss)
        log = open(archive_path, "w")

    def on_records(records):
        for r in records:
            log.write(archive.record_line(r))
        log.flush()

    try:
        if args.random_search:
            archive = random_search(ss, evaluator, cost_fn, rc.evo.n_final, rc.evo.seed,
                                    workers=args.workers, on_records=on_records)
        else:
            archive = evolve(ss, evaluator, cost_fn, rc.evo, workers=args.workers,
                             archive=archive, on_records=on_records)
    finally:
        log.close()

    _pattern_csv(out / f"{prefix}front.csv", archive, run_hash)
    front = archive.front()
    print(f"archive: {len(archive)} records, front size {len(front)} "
          f"(flops {front[0].flops}..{front[-1].flops})")
    return EXIT_OK


def cmd_analyze(args) -> int:
    rc = _load(args)
    out = Path(rc.out)
    archive_path = Path(args.archive) if args.archive else out / "archive.jsonl"
    archive = ParetoArchive.load(archive_path, rc.search_space)
    _pattern_csv(out / "pattern.csv", archive, rc.config_hash())
    rows = pattern_analysis(archive)
    print(f"front: {len(rows)} members, flops {rows[0]['flops']}..{rows[-1]['flops']}, "
          f"fusion/block ratio {rows[0]['ratio']:.3f}..{rows[-1]['ratio']:.3f}")
    print(f"wrote {out / 'pattern.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msnas",
                                     description="Multi-scale one-shot architecture search pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run config YAML")
        p.add_argument("--seed", type=int, default=None, help="override the root seed")
        p.add_argument("--out", default=None, help="override the output directory")

    p = sub.add_parser("sample", help="emit genomes to files")
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("cost", help="cost-report genome files")
    common(p)
    p.add_argument("genomes", nargs="+", help="genome JSON files")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("train", help="train the teacher or fine-tune the supernet")
    common(p)
    p.add_argument("--mode", choices=("teacher", "supernet"), required=True)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evolve", help="run the topology evolution")
    common(p)
    p.add_argument("--surrogate", action="store_true", help="use the surrogate evaluator")
    p.add_argument("--random-search", action="store_true", help="equal-budget random baseline")
    p.add_argument("--workers", type=int, default=1, help="parallel evaluation threads")
    p.add_argument("--resume", default=None, help="archive log to continue from")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("analyze", help="pattern analysis of an archive")
    common(p)
    p.add_argument("archive", nargs="?", default=None, help="archive log (default: <out>/archive.jsonl)")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, EvolutionError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
