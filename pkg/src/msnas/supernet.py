"""Weight-sharing supernet over the whole search space.

The store allocates one parameter set covering every choice in the space:
blocks up to the maximum depth on every branch of every stage module, plus a
resampling edge for every possible fusion gate. A genome selects the active
subset; a forward pass with the full genome touches every parameter exactly
once.

Fusion landing rule: all gates anchored at block position ``p`` read the
post-block (pre-fusion) features of their source branch, are resampled to the
target branch's resolution and width, and are added simultaneously to the
target's input of block ``p+1`` (or to its module output when the target is
exactly ``p`` blocks deep). Fusions therefore never cascade within one
position, and a genome gating only final positions reproduces plain
module-end fusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .canonical import doc_hash
from .cost import HeadSpec
from .errors import ConfigError
from .genome import Genome, SearchSpaceConfig, max_gate_sites, require_valid
from .nn import Parameter, Tensor, functional as F, get_default_dtype
from .seeds import derive_rng


@dataclass
class SupernetStore:
    """Shared parameters keyed by structural identity."""

    config: SearchSpaceConfig
    head: HeadSpec
    params: dict[str, Parameter]

    @property
    def dtype(self):
        return next(iter(self.params.values())).data.dtype

    def identity(self) -> dict:
        return {"search_space": self.config.canonical(), "head": self.head.canonical()}

    def identity_hash(self) -> str:
        return doc_hash(self.identity())

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def clone(self) -> "SupernetStore":
        params = {k: Parameter(p.data.copy(), k, p.trainable) for k, p in self.params.items()}
        return SupernetStore(self.config, self.head, params)


def _edge_prefix(site) -> str:
    s, m, src, pos, dst = site
    return f"s{s}.m{m}.f{src}.p{pos}.d{dst}"


def iter_param_specs(config: SearchSpaceConfig, head: HeadSpec):
    """Yield (key, shape, kind) for every parameter of the store, in the fixed
    allocation order. kind is one of conv / norm_scale / norm_shift / bias."""

    def conv_norm(prefix: str, cout: int, cin: int, k: int):
        yield f"{prefix}.conv.w", (cout, cin, k, k), "conv"
        yield f"{prefix}.norm.scale", (cout,), "norm_scale"
        yield f"{prefix}.norm.shift", (cout,), "norm_shift"

    sc = config.stem_channels
    ch = config.channels
    yield from conv_norm("stem.1", sc, 3, 3)
    yield from conv_norm("stem.2", sc, sc, 3)
    for i in range(1, config.stage1_blocks + 1):
        yield from conv_norm(f"stage1.blk{i}.1", sc, sc, 3)
        yield from conv_norm(f"stage1.blk{i}.2", sc, sc, 3)
    for s in range(2, config.num_stages + 1):
        if s == 2:
            yield from conv_norm("trans.s2.b0", ch(0), sc, 3)
            yield from conv_norm("trans.s2.b1", ch(1), sc, 3)
        else:
            yield from conv_norm(f"trans.s{s}.b{s - 1}", ch(s - 1), ch(s - 2), 3)
        for m in range(config.stage_modules[s - 1]):
            for b in range(s):
                for p in range(1, config.max_depth + 1):
                    yield from conv_norm(f"s{s}.m{m}.b{b}.blk{p}.1", ch(b), ch(b), 3)
                    yield from conv_norm(f"s{s}.m{m}.b{b}.blk{p}.2", ch(b), ch(b), 3)
    for site in max_gate_sites(config):
        _, _, src, _, dst = site
        prefix = _edge_prefix(site)
        if dst < src:
            yield from conv_norm(f"{prefix}.up", ch(dst), ch(src), 1)
        else:
            for i in range(1, dst - src + 1):
                cout = ch(dst) if i == dst - src else ch(src)
                yield from conv_norm(f"{prefix}.down{i}", cout, ch(src), 3)
    if head.kind == "segmentation":
        total = sum(ch(b) for b in range(config.num_stages))
        yield from conv_norm("head.mix", total, total, 1)
        yield "head.out.w", (head.out_channels, total, 1, 1), "conv"
        yield "head.out.b", (head.out_channels,), "bias"
    elif head.kind == "keypoint":
        yield "head.out.w", (head.out_channels, ch(0), 1, 1), "conv"
        yield "head.out.b", (head.out_channels,), "bias"


def build(config: SearchSpaceConfig, head: HeadSpec, seed: int, dtype=None) -> SupernetStore:
    """Allocate the full store. Convolutions get He fan-in init, norms start
    as identity, biases at zero; two builds from one seed are bit-identical."""
    dtype = np.dtype(dtype if dtype is not None else get_default_dtype())
    rng = derive_rng(int(seed), "supernet.init")
    params: dict[str, Parameter] = {}
    for key, shape, kind in iter_param_specs(config, head):
        if kind == "conv":
            fan_in = shape[1] * shape[2] * shape[3]
            data = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape).astype(dtype)
        elif kind == "norm_scale":
            data = np.ones(shape, dtype=dtype)
        else:  # norm_shift, bias
            data = np.zeros(shape, dtype=dtype)
        params[key] = Parameter(data, key)
    return SupernetStore(config, head, params)


def active_keys(config: SearchSpaceConfig, head: HeadSpec, genome: Genome) -> set[str]:
    """Exact parameter subset a forward pass with ``genome`` reads."""
    require_valid(genome, config)
    active: set[str] = set()
    for key, _shape, _kind in iter_param_specs(config, head):
        part = key.split(".", 1)[0]
        if part in ("stem", "stage1", "trans", "head"):
            active.add(key)
    for (s, m, b), depth in genome.depths.items():
        for p in range(1, depth + 1):
            for suffix in (".1.conv.w", ".1.norm.scale", ".1.norm.shift",
                           ".2.conv.w", ".2.norm.scale", ".2.norm.shift"):
                active.add(f"s{s}.m{m}.b{b}.blk{p}{suffix}")
    for site in genome.gates:
        _, _, src, _, dst = site
        prefix = _edge_prefix(site)
        if dst < src:
            stems = [f"{prefix}.up"]
        else:
            stems = [f"{prefix}.down{i}" for i in range(1, dst - src + 1)]
        for stem_key in stems:
            active.update((f"{stem_key}.conv.w", f"{stem_key}.norm.scale", f"{stem_key}.norm.shift"))
    return active


def _conv_norm(store: SupernetStore, prefix: str, x: Tensor, stride: int = 1) -> Tensor:
    p = store.params
    out = F.conv2d(x, p[f"{prefix}.conv.w"], stride=stride)
    return F.channel_norm(out, p[f"{prefix}.norm.scale"], p[f"{prefix}.norm.shift"])


def _residual_block(store: SupernetStore, prefix: str, x: Tensor) -> Tensor:
    h = F.relu(_conv_norm(store, f"{prefix}.1", x))
    h = _conv_norm(store, f"{prefix}.2", h)
    return F.relu(h + x)


def _fusion_edge(store: SupernetStore, site, x: Tensor) -> Tensor:
    _, _, src, _, dst = site
    prefix = _edge_prefix(site)
    if dst < src:
        out = _conv_norm(store, f"{prefix}.up", x)
        return F.bilinear_upsample(out, 2 ** (src - dst))
    out = x
    gap = dst - src
    for i in range(1, gap + 1):
        out = _conv_norm(store, f"{prefix}.down{i}", out, stride=2)
        if i < gap:
            out = F.relu(out)
    return out


def run_module(store: SupernetStore, genome: Genome, stage: int, module: int,
               feats: list[Tensor]) -> list[Tensor]:
    """One stage module: per-branch block chains plus the genome's fusions."""
    depths = [genome.depth(stage, module, b) for b in range(stage)]
    gates_at: dict[int, list] = {}
    for g in sorted(genome.gates):
        if g[0] == stage and g[1] == module:
            gates_at.setdefault(g[3], []).append(g)
    for pos in range(1, max(depths) + 1):
        outs = [
            _residual_block(store, f"s{stage}.m{module}.b{b}.blk{pos}", feats[b])
            if pos <= depths[b] else feats[b]
            for b in range(stage)
        ]
        # sources read the pristine block outputs; contributions land together
        landed = list(outs)
        for site in gates_at.get(pos, ()):
            landed[site[4]] = landed[site[4]] + _fusion_edge(store, site, outs[site[2]])
        feats = landed
    return feats


def forward_features(store: SupernetStore, genome: Genome, x) -> list[Tensor]:
    """Stem, stage 1, and all searched stages; returns final branch features."""
    config = store.config
    require_valid(genome, config)
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=store.dtype))
    if t.ndim != 4 or t.shape[1] != 3:
        raise ConfigError(f"expected input [N,3,H,W], got {t.shape}")
    divisor = config.stem_reduction * 2 ** (config.num_stages - 1)
    if t.shape[2] % divisor or t.shape[3] % divisor:
        raise ConfigError(f"input spatial size must be divisible by {divisor}")

    t = F.relu(_conv_norm(store, "stem.1", t, stride=2))
    t = F.relu(_conv_norm(store, "stem.2", t, stride=2))
    for i in range(1, config.stage1_blocks + 1):
        t = _residual_block(store, f"stage1.blk{i}", t)

    feats = [t]
    for s in range(2, config.num_stages + 1):
        if s == 2:
            feats = [
                F.relu(_conv_norm(store, "trans.s2.b0", feats[0])),
                F.relu(_conv_norm(store, "trans.s2.b1", feats[0], stride=2)),
            ]
        else:
            feats = feats + [F.relu(_conv_norm(store, f"trans.s{s}.b{s - 1}", feats[-1], stride=2))]
        for m in range(config.stage_modules[s - 1]):
            feats = run_module(store, genome, s, m, feats)
    return feats


def forward(store: SupernetStore, genome: Genome, x) -> Tensor:
    """Head output at branch-0 resolution (the raw features if head is none)."""
    feats = forward_features(store, genome, x)
    head = store.head
    if head.kind == "none":
        return feats[0]
    p = store.params
    if head.kind == "keypoint":
        return F.conv2d(feats[0], p["head.out.w"], bias=p["head.out.b"])
    lifted = [feats[0]] + [F.bilinear_upsample(f, 2**b) for b, f in enumerate(feats) if b > 0]
    merged = F.relu(_conv_norm(store, "head.mix", F.concat_channels(lifted)))
    return F.conv2d(merged, p["head.out.w"], bias=p["head.out.b"])


def extract_subnet(store: SupernetStore, genome: Genome) -> SupernetStore:
    """Stand-alone copy containing exactly the genome's active parameters."""
    keys = active_keys(store.config, store.head, genome)
    params = {k: Parameter(store.params[k].data.copy(), k) for k in sorted(keys)}
    return SupernetStore(store.config, store.head, params)


def param_fingerprints(store: SupernetStore, keys=None) -> dict[str, bytes]:
    """Raw bytes per parameter; used to prove sub-network updates stay local."""
    keys = sorted(store.params) if keys is None else sorted(keys)
    return {k: store.params[k].data.tobytes() for k in keys}
