"""Model-based clustering with EM and initialization-averaging benchmarks."""

from .core import (
    ConvergenceConfig,
    EmptyClusterError,
    FitResult,
    MixingWeights,
    MixtureFamily,
    Responsibilities,
    SingularCovarianceError,
    complete_data_loglik,
    converged,
    em_fit,
)
from .data import Dataset, builtin_karate, load_edgelist, load_matrix, summarize
from .gmm import (
    GaussianMixture,
    GaussianParams,
    gmm_e_step,
    gmm_log_density,
    gmm_m_step,
    gmm_param_count,
    within_cluster_ss,
)
from .initialization import (
    AnnealSchedule,
    BiaConfig,
    BurninConfig,
    align_labels,
    anneal_e_step,
    anneal_fit,
    bia_average,
    bia_init,
    bia_weights,
    bic_star,
    burnin_pyramid,
    hclust_init,
    random_z,
)
from .lca import LatentClassModel, LcaParams, lca_e_step, lca_log_density, lca_m_step, lca_param_count
from .sbm import (
    SbmParams,
    SbmPriors,
    StochasticBlockModel,
    sbm_elbo,
    sbm_m_step,
    sbm_param_count,
    sbm_ve_step,
)
from .bench import (
    ExperimentSpec,
    RestartDistribution,
    RunRecord,
    compare_solutions,
    emit_report,
    report_dict,
    run_experiment,
    run_single,
    sweep,
)

__version__ = "0.1.0"
