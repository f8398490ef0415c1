"""Analytic parameter and FLOP counts for a genome at a given input size.

Counting conventions (fixed by calibration against published multi-branch
high-resolution baselines and used consistently by the supernet builder):

* a convolution costs ``k*k*c_in*c_out*h_out*w_out`` multiply-accumulates;
  ``flop_convention`` chooses whether one MAC counts as 1 or 2 ops;
* normalization, activation, interpolation, and bias FLOPs are excluded;
* parameters count every convolution weight, per-channel norm scale/shift,
  and head biases;
* the fusion upsample path is a 1x1 convolution applied at the source
  resolution followed by bilinear interpolation (the two linear ops commute,
  so this is mathematically identical to interpolating first);
* the fusion downsample path across g scale gaps chains g stride-2 3x3
  convolutions that keep the source channel count until the final one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .canonical import doc_hash
from .errors import ConfigError
from .genome import (
    Genome,
    SearchSpaceConfig,
    count_structure,
    per_stage_structure,
    require_valid,
)

FLOP_CONVENTIONS = {"mac1": 1, "mac2": 2}

HEAD_KINDS = ("segmentation", "keypoint", "none")


@dataclass(frozen=True)
class HeadSpec:
    kind: str = "none"
    out_channels: int = 0

    def __post_init__(self):
        if self.kind not in HEAD_KINDS:
            raise ConfigError(f"head kind must be one of {HEAD_KINDS}, got {self.kind!r}")
        if self.kind != "none" and self.out_channels < 1:
            raise ConfigError("a present head needs out_channels >= 1")

    def canonical(self) -> dict:
        return {"kind": self.kind, "out_channels": self.out_channels}

    @classmethod
    def from_dict(cls, doc) -> "HeadSpec":
        return cls(**dict(doc))


@dataclass(frozen=True)
class StageCost:
    params: int = 0
    flops: int = 0
    blocks: int = 0
    fusions: int = 0


@dataclass(frozen=True)
class CostReport:
    params: int
    flops: int
    blocks: int
    fusions: int
    per_stage: dict[str, StageCost]
    input_hw: tuple[int, int]
    flop_convention: str

    def canonical(self) -> dict:
        return {
            "params": self.params,
            "flops": self.flops,
            "blocks": self.blocks,
            "fusions": self.fusions,
            "input_hw": list(self.input_hw),
            "flop_convention": self.flop_convention,
            "per_stage": {
                name: {"params": c.params, "flops": c.flops, "blocks": c.blocks, "fusions": c.fusions}
                for name, c in self.per_stage.items()
            },
        }


def conv_out_hw(hw: tuple[int, int], kernel: int, stride: int) -> tuple[int, int]:
    """Output spatial size with same-style padding kernel//2."""
    pad = kernel // 2
    h = (hw[0] + 2 * pad - kernel) // stride + 1
    w = (hw[1] + 2 * pad - kernel) // stride + 1
    return h, w


class _Ledger:
    """Accumulates conv/norm costs into named stage buckets."""

    def __init__(self, mac_factor: int):
        self.mac = mac_factor
        self.buckets: dict[str, dict[str, int]] = {}

    def _bucket(self, name: str) -> dict[str, int]:
        return self.buckets.setdefault(name, {"params": 0, "flops": 0})

    def conv(self, bucket: str, cin: int, cout: int, kernel: int, stride: int,
             hw: tuple[int, int], *, bias: bool = False, norm: bool = True) -> tuple[int, int]:
        out_hw = conv_out_hw(hw, kernel, stride)
        b = self._bucket(bucket)
        b["params"] += kernel * kernel * cin * cout + (cout if bias else 0)
        if norm:
            b["params"] += 2 * cout
        b["flops"] += kernel * kernel * cin * cout * out_hw[0] * out_hw[1] * self.mac
        return out_hw


def cost(genome: Genome, config: SearchSpaceConfig, input_hw: tuple[int, int],
         head: HeadSpec = HeadSpec(), flop_convention: str = "mac1") -> CostReport:
    """Whole-model cost of ``genome`` for one forward pass at ``input_hw``."""
    if flop_convention not in FLOP_CONVENTIONS:
        raise ConfigError(f"flop_convention must be one of {sorted(FLOP_CONVENTIONS)}")
    h, w = int(input_hw[0]), int(input_hw[1])
    if h < 1 or w < 1:
        raise ConfigError("input resolution must be positive")
    require_valid(genome, config)

    led = _Ledger(FLOP_CONVENTIONS[flop_convention])
    ch = config.channels
    sc = config.stem_channels

    hw1 = led.conv("stem", 3, sc, 3, 2, (h, w))
    res = {0: led.conv("stem", sc, sc, 3, 2, hw1)}
    for r in range(1, config.num_stages):
        res[r] = conv_out_hw(res[r - 1], 3, 2)
    if min(res[config.num_stages - 1]) < 1:
        raise ConfigError("input resolution collapses to zero on the lowest branch")

    for _ in range(config.stage1_blocks):
        led.conv("stage1", sc, sc, 3, 1, res[0])
        led.conv("stage1", sc, sc, 3, 1, res[0])

    for s in range(2, config.num_stages + 1):
        bucket = f"stage{s}"
        if s == 2:
            led.conv(bucket, sc, ch(0), 3, 1, res[0])
            led.conv(bucket, sc, ch(1), 3, 2, res[0])
        else:
            led.conv(bucket, ch(s - 2), ch(s - 1), 3, 2, res[s - 2])
        for m in range(config.stage_modules[s - 1]):
            for b in range(s):
                for _ in range(genome.depth(s, m, b)):
                    led.conv(bucket, ch(b), ch(b), 3, 1, res[b])
                    led.conv(bucket, ch(b), ch(b), 3, 1, res[b])
        for (gs, gm, src, _pos, dst) in sorted(genome.gates):
            if gs != s:
                continue
            if dst < src:
                led.conv(bucket, ch(src), ch(dst), 1, 1, res[src])
            else:
                for i in range(1, dst - src + 1):
                    cout = ch(dst) if i == dst - src else ch(src)
                    led.conv(bucket, ch(src), cout, 3, 2, res[src + i - 1])

    if head.kind == "keypoint":
        led.conv("head", ch(0), head.out_channels, 1, 1, res[0], bias=True, norm=False)
    elif head.kind == "segmentation":
        total = sum(ch(b) for b in range(config.num_stages))
        led.conv("head", total, total, 1, 1, res[0])
        led.conv("head", total, head.out_channels, 1, 1, res[0], bias=True, norm=False)

    counts = count_structure(genome, config)
    stage_counts = per_stage_structure(genome, config)
    per_stage: dict[str, StageCost] = {}
    for name, vals in led.buckets.items():
        stage_no = int(name[5:]) if name.startswith("stage") else None
        sc_counts = stage_counts.get(stage_no) if stage_no else None
        per_stage[name] = StageCost(
            params=vals["params"],
            flops=vals["flops"],
            blocks=sc_counts.blocks if sc_counts else 0,
            fusions=sc_counts.fusions if sc_counts else 0,
        )
    return CostReport(
        params=sum(c.params for c in per_stage.values()),
        flops=sum(c.flops for c in per_stage.values()),
        blocks=counts.blocks,
        fusions=counts.fusions,
        per_stage=per_stage,
        input_hw=(h, w),
        flop_convention=flop_convention,
    )


def pareto_cost_axis(genomes, config: SearchSpaceConfig, input_hw: tuple[int, int],
                     head: HeadSpec = HeadSpec(), flop_convention: str = "mac1") -> list[CostReport]:
    """Batch wrapper over :func:`cost`; order matches the input order."""
    reports = []
    for i, genome in enumerate(genomes):
        try:
            reports.append(cost(genome, config, input_hw, head, flop_convention))
        except Exception as exc:
            raise type(exc)(f"genome {i}: {exc}") from exc
    return reports


def report_to_doc(report: CostReport, config: SearchSpaceConfig) -> dict:
    doc = {"version": 1, "config_hash": config.config_hash()}
    doc.update(report.canonical())
    return doc


def report_hash(report: CostReport, config: SearchSpaceConfig) -> str:
    return doc_hash(report_to_doc(report, config))
