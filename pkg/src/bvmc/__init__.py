"""Block-value symmetry detection and orbital MCMC for discrete graphical
models."""

from .model import (
    Evidence,
    Feature,
    GraphicalModel,
    Literal,
    MarginalEstimate,
    Variable,
    condition,
    exact_marginals,
    gen_job_search,
    gen_student_curriculum,
    log_weight,
    normalize_to_clauses,
    parse_model,
    serialize_model,
)
from .partition import (
    Block,
    BlockPartition,
    BlockValueSet,
    BVPair,
    build_block_model,
    generate_block_partitions,
    get_useful_blocks,
    get_weight_sign,
    singleton_partition,
    validate_partition,
)
from .symmetry import (
    BVSymmetry,
    ColoredGraph,
    GraphAutomorphism,
    build_bv_graph,
    export_colored_graph,
    extract_bv_symmetries,
    find_automorphism_generators,
)
from .group import (
    PRASampler,
    SymmetryGroup,
    apply,
    compose,
    inverse,
    orbit_enumerate,
    orbit_sample,
    pra_init,
    pra_sample,
)
from .mcmc import Chain, ChainConfig, aggregate_step, bv_mcmc_step, gibbs_step, run_chain
from .harness import ExperimentSpec, kl_divergence, reference_marginals, run_experiment

__version__ = "0.1.0"
