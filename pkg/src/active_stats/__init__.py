"""Active hypothesis testing with proxy statistics.

Randomized constructions that combine a cheap proxy statistic with an
occasionally queried expensive true statistic into valid p-values and
e-values, FDR-controlling multiple-testing procedures built on them,
query-budget tuning, a proximal two-stage least squares true-statistic
engine, and a reproducible simulation harness.
"""

from ._kernels import BACKEND as kernel_backend
from .core import (
    ActiveStat,
    ConditionalCdf,
    E_VALUE,
    NullDensity,
    P_VALUE,
    StatKind,
    TrueStatOracle,
    active_evalue,
    active_pvalue_arbdep,
    active_pvalue_density,
    coupled_lowerbound_pvalue,
    joint_corrected_mixture,
    joint_corrected_pvalue,
    query_prob_evalue,
    sr_active_evalue,
)
from .density import (
    CondCdfEstimate,
    GridDensity,
    density_lower_bound,
    fit_conditional_cdf,
    fit_null_density,
    gaussian_proxy_density,
    inverse_conditional_cdf,
)
from .procedures import (
    DependenceRegime,
    DiscoverySet,
    Procedure,
    SelectionAlgorithm,
    StatVector,
    active_bh,
    active_ebh,
    bh,
    e_proxy_filter,
    ebh,
    fdp,
    fdr_bound,
    is_self_consistent,
    proxy_filter,
)
from .proximal import (
    Active2slsResult,
    OlsFit,
    PanelData,
    SemConfig,
    TslsFit,
    active_2sls,
    ols_proxy,
    sandwich_variance,
    simulate_sem,
    tsls_fit,
    tsls_pipeline,
    tsls_pvalue,
)
from .strategies import (
    BudgetConstraint,
    MixtureSample,
    StoppingRule,
    UpdateRule,
    budget_usage,
    eta_for_budget,
    expected_log_objective,
    interactive_active_evalues,
    multilevel_active_evalues,
    tune_gamma,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
