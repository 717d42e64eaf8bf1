"""Exact kernels and training dynamics of infinitely wide graph networks
under neighborhood sampling, with Monte-Carlo verification."""

from .activations import (
    ACTIVATIONS,
    MomentPair,
    erf_moments,
    moments,
    numeric_moment_oracle,
    relu_moments,
)
from .dsl import (
    Activation,
    Bias,
    GraphConv,
    IndependentAdd,
    Input,
    KernelState,
    LayerSample,
    MixedWeight,
    NodeSample,
    Weight,
    apply_block,
    gcn_program,
    graphsage_kernels,
    graphsage_nodewise_kernels,
    graphsage_program,
    program_from_json,
    program_to_json,
    run_program,
)
from .dynamics import (
    EvolutionSolver,
    GpState,
    PosteriorResult,
    RankDeficiencyWarning,
    evolve_prior,
    limit_moments,
    noiseless_posterior_mean,
    posterior,
    posterior_full,
    sample_paths,
)
from .graphs import (
    FeatureMoment,
    GraphSpec,
    TrainSplit,
    build_ring_graph,
    figure1_split,
    graph_from_dict,
    identity_features,
    induced_subgraph,
    load_graph_json,
    normalize_adjacency,
)
from .oracle import (
    FiniteGcnConfig,
    empirical_mask_check,
    empirical_output_covariance,
    sample_finite_gcn_output,
    train_finite_gcn,
)
from .recursion import (
    GcnHyper,
    KernelPair,
    LayerWithReplacement,
    LayerWithoutReplacement,
    MaskPropertyReport,
    NodeWise,
    NoSampling,
    fastgcn_probabilities,
    gcn_kernels,
    mask_properties_report,
    mask_with_replacement,
    mask_without_replacement,
    nodewise_kernel_entry,
    nodewise_mask,
    nodewise_probabilities,
    scaled_q_from_p,
    uniform_probabilities,
)

__version__ = "0.1.0"
