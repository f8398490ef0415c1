"""One-shot multi-scale architecture search at desk scale.

The package covers the full pipeline: an explicit genome over multi-branch
cross-scale-fusion topologies, a calibrated parameter/FLOP cost model, a
numpy-backed differentiable engine, a weight-sharing supernet trained with a
distillation objective on a synthetic segmentation task, and an evolutionary
search producing a Pareto archive of architectures.
"""

from .cost import CostReport, HeadSpec, cost, pareto_cost_axis
from .errors import ConfigError, EvolutionError, GenomeValidationError, TrainingDiverged
from .evolution import (
    EvalRecord,
    EvoConfig,
    ParetoArchive,
    crossover,
    evolve,
    hypervolume,
    mutate,
    pattern_analysis,
    random_search,
    select_parents,
)
from .genome import (
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
from .sampling import SamplingGroup, groups, sample_grouped, sample_uniform, sandwich_schedule
from .supernet import SupernetStore, active_keys, build, extract_subnet, forward
from .tasks import SurrogateConfig, SurrogateEvaluator, SyntheticTaskConfig, generate
from .training import TrainConfig, evaluate, train_supernet, train_teacher

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CostReport",
    "EvalRecord",
    "EvoConfig",
    "EvolutionError",
    "Genome",
    "GenomeValidationError",
    "HeadSpec",
    "ParetoArchive",
    "SamplingGroup",
    "SearchSpaceConfig",
    "StructureCount",
    "SupernetStore",
    "SurrogateConfig",
    "SurrogateEvaluator",
    "SyntheticTaskConfig",
    "TrainConfig",
    "TrainingDiverged",
    "active_keys",
    "build",
    "cost",
    "count_structure",
    "crossover",
    "enumerate_genomes",
    "evaluate",
    "evolve",
    "extract_subnet",
    "forward",
    "full_genome",
    "generate",
    "groups",
    "hrnet_baseline",
    "hypervolume",
    "min_genome",
    "mutate",
    "pareto_cost_axis",
    "pattern_analysis",
    "random_search",
    "sample_grouped",
    "sample_uniform",
    "sandwich_schedule",
    "select_parents",
    "space_cardinality",
    "train_supernet",
    "train_teacher",
    "validate",
]
