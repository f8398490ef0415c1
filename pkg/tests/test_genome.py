import itertools

import pytest

from msnas import (
    ConfigError,
    Genome,
    SearchSpaceConfig,
    StructureCount,
    count_structure,
    enumerate_genomes,
    full_genome,
    hrnet_baseline,
    min_genome,
    space_cardinality,
    validate,
)
from msnas.errors import GenomeValidationError
from msnas.genome import (
    gate_sites,
    genome_from_doc,
    genome_to_doc,
    max_gate_sites,
    per_stage_structure,
)


class TestSearchSpaceConfig:
    def test_defaults(self, default_config):
        assert default_config.stage_branches == (1, 2, 3, 4)
        assert default_config.max_depth == 5
        assert len(default_config.module_slots()) == 8
        assert len(default_config.depth_slots()) == 2 + 4 * 3 + 3 * 4

    def test_channels_double_per_branch(self, default_config):
        assert [default_config.channels(b) for b in range(4)] == [32, 64, 128, 256]

    @pytest.mark.parametrize("bad", [
        {"depth_choices": ()},
        {"depth_choices": (3, 2)},
        {"depth_choices": (2, 2)},
        {"depth_choices": (0, 1)},
        {"fusion_percentages": (1.5,)},
        {"fusion_percentages": (-0.1,)},
        {"stage_modules": ()},
        {"stage_modules": (1, 0)},
        {"stage1_blocks": 0},
    ])
    def test_invalid_configs_rejected(self, bad):
        with pytest.raises(ConfigError):
            SearchSpaceConfig(**bad)

    def test_hash_stable_and_sensitive(self, default_config):
        assert default_config.config_hash() == SearchSpaceConfig().config_hash()
        assert default_config.config_hash() != SearchSpaceConfig(base_width=48).config_hash()


class TestValidate:
    def test_baseline_is_valid(self, default_config):
        assert validate(hrnet_baseline(default_config), default_config).ok

    def test_gate_beyond_depth(self, default_config):
        g = hrnet_baseline(default_config)
        bad = Genome(g.depths, g.gates | {(4, 0, 0, 5, 1)})
        result = validate(bad, default_config)
        assert not result.ok
        assert "gate position exceeds branch depth" in result.first.message
        assert result.first.key == (4, 0, 0, 5, 1)

    def test_depth_outside_choice_set(self, default_config):
        g = hrnet_baseline(default_config)
        depths = dict(g.depths)
        depths[(2, 0, 0)] = 6
        result = validate(Genome(depths, frozenset()), default_config)
        assert not result.ok
        assert "depth not in choice set" in result.first.message

    def test_self_fusion_and_unknown_branch(self, default_config):
        g = hrnet_baseline(default_config)
        assert not validate(Genome(g.depths, {(2, 0, 0, 1, 0)}), default_config).ok
        assert not validate(Genome(g.depths, {(2, 0, 0, 1, 2)}), default_config).ok

    def test_missing_slot(self, default_config):
        g = hrnet_baseline(default_config)
        depths = dict(g.depths)
        depths.pop((3, 1, 2))
        assert not validate(Genome(depths, frozenset()), default_config).ok

    def test_gate_at_min_endpoint_depth_is_valid(self, pair_config):
        genome = Genome({(2, 0, 0): 3, (2, 0, 1): 2}, {(2, 0, 0, 2, 1)})
        assert validate(genome, pair_config).ok
        too_deep = Genome({(2, 0, 0): 3, (2, 0, 1): 2}, {(2, 0, 0, 3, 1)})
        assert not validate(too_deep, pair_config).ok


class TestBaselineCounts:
    def test_reference_structure(self, default_config):
        counts = count_structure(hrnet_baseline(default_config), default_config)
        assert counts == StructureCount(blocks=108, fusions=62)

    def test_per_stage_hand_counts(self, default_config):
        per = per_stage_structure(hrnet_baseline(default_config), default_config)
        assert per[1] == StructureCount(4, 0)
        assert per[2] == StructureCount(8, 2)
        assert per[3] == StructureCount(48, 24)
        assert per[4] == StructureCount(48, 36)
        total = StructureCount(sum(c.blocks for c in per.values()),
                               sum(c.fusions for c in per.values()))
        assert total == count_structure(hrnet_baseline(default_config), default_config)

    def test_stage4_depth_two_variant(self, default_config):
        base = hrnet_baseline(default_config)
        depths = {k: (2 if k[0] == 4 else d) for k, d in base.depths.items()}
        gates = frozenset((s, m, src, 2 if s == 4 else p, dst) for s, m, src, p, dst in base.gates)
        variant = Genome(depths, gates)
        assert count_structure(variant, default_config) == StructureCount(84, 62)

    def test_empty_gate_set(self, default_config):
        g = hrnet_baseline(default_config)
        assert count_structure(Genome(g.depths, frozenset()), default_config).fusions == 0

    def test_baseline_requires_default_topology(self):
        with pytest.raises(ConfigError):
            hrnet_baseline(SearchSpaceConfig(stage_modules=(1, 1, 2)))
        with pytest.raises(ConfigError):
            hrnet_baseline(SearchSpaceConfig(depth_choices=(2, 3)))

    def test_count_rejects_invalid_genome(self, default_config):
        g = hrnet_baseline(default_config)
        bad = Genome(g.depths, g.gates | {(4, 0, 0, 5, 1)})
        with pytest.raises(GenomeValidationError):
            count_structure(bad, default_config)


class TestGateSites:
    def test_sites_follow_min_endpoint_depth(self):
        sites = gate_sites({(2, 0, 0): 3, (2, 0, 1): 2})
        assert set(sites) == {(2, 0, 0, 1, 1), (2, 0, 0, 2, 1), (2, 0, 1, 1, 0), (2, 0, 1, 2, 0)}

    def test_max_sites_default_config(self, default_config):
        # 2 pairs*5 + 4 modules*6 pairs*5 + 3 modules*12 pairs*5
        assert len(max_gate_sites(default_config)) == 10 + 120 + 180


class TestCardinality:
    @pytest.mark.parametrize("kwargs, expected", [
        ({"depth_choices": (2, 3), "stage_modules": (1, 1)}, 112),
        ({"depth_choices": (2, 3, 4), "stage_modules": (1, 1)}, 528),
        ({"depth_choices": (2, 3, 4, 5), "stage_modules": (1, 1)}, 2224),
    ])
    def test_matches_exhaustive_enumeration(self, kwargs, expected):
        config = SearchSpaceConfig(base_width=8, **kwargs)
        assert space_cardinality(config, "realized-sites") == expected
        genomes = list(enumerate_genomes(config))
        assert len(genomes) == expected
        serials = {g.serialize() for g in genomes}
        assert len(serials) == expected
        assert all(validate(g, config).ok for g in genomes)

    def test_three_stage_enumeration(self):
        config = SearchSpaceConfig(base_width=8, depth_choices=(1,), stage_modules=(1, 1, 1))
        # fixed depths, 2 sites in stage 2 and 6 in stage 3
        assert space_cardinality(config, "realized-sites") == 2**2 * 2**6
        assert len(list(enumerate_genomes(config))) == 256

    def test_single_architecture_space(self):
        config = SearchSpaceConfig(depth_choices=(4,), stage_modules=(1,))
        assert space_cardinality(config, "realized-sites") == 1
        assert space_cardinality(config, "max-depth-sites") == 1

    def test_max_depth_convention(self, pair_config):
        # 2 depth choices over 2 slots, 2 pairs * 3 positions of gate sites
        assert space_cardinality(pair_config, "max-depth-sites") == 2**2 * 2**6

    def test_unknown_convention(self, default_config):
        with pytest.raises(ConfigError):
            space_cardinality(default_config, "bogus")

    def test_enumeration_guard(self, default_config):
        with pytest.raises(ConfigError):
            list(enumerate_genomes(default_config))


class TestSerialization:
    def test_round_trip_bytes(self, default_config):
        g = hrnet_baseline(default_config)
        doc = genome_to_doc(g, default_config)
        back = genome_from_doc(doc, default_config)
        assert back == g
        assert back.serialize() == g.serialize()

    def test_equality_is_byte_equality(self, pair_config):
        a = full_genome(pair_config)
        b = Genome(dict(a.depths), frozenset(a.gates))
        assert a == b and a.serialize() == b.serialize()
        c = min_genome(pair_config)
        assert a != c and a.serialize() != c.serialize()

    def test_hash_mismatch_rejected(self, default_config):
        doc = genome_to_doc(hrnet_baseline(default_config), default_config)
        other = SearchSpaceConfig(base_width=48)
        with pytest.raises(ConfigError):
            genome_from_doc(doc, other)
        assert genome_from_doc(doc, other, check_hash=False)

    def test_duplicate_gate_rejected(self, default_config):
        doc = genome_to_doc(hrnet_baseline(default_config), default_config)
        doc["gates"].append(doc["gates"][0])
        with pytest.raises(ConfigError):
            genome_from_doc(doc, default_config)

    def test_unknown_version_rejected(self, default_config):
        doc = genome_to_doc(hrnet_baseline(default_config), default_config)
        doc["version"] = 99
        with pytest.raises(ConfigError):
            genome_from_doc(doc, default_config)


class TestFullAndMin:
    def test_full_genome_gates_every_site(self, toy4_config):
        g = full_genome(toy4_config)
        assert validate(g, toy4_config).ok
        assert set(g.gates) == set(max_gate_sites(toy4_config))
        assert all(d == toy4_config.max_depth for d in g.depths.values())

    def test_min_genome(self, toy4_config):
        g = min_genome(toy4_config)
        assert validate(g, toy4_config).ok
        assert not g.gates
        assert all(d == toy4_config.min_depth for d in g.depths.values())
