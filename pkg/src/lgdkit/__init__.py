"""Langevin gradient descent for convex regression.

Chains that sample the Bayes posterior of regularized linear regression,
meta-learning of the regularizer and step size across task collections,
exact oracle baselines, the matching generalization/mixing bounds, and an
experiment harness with a CLI.
"""

from __future__ import annotations

from .baselines import (
    GdConfig,
    bayes_oracle_predict,
    gd_minimize,
    reference_lgd_predict,
    ridge_posterior_mean,
)
from .core import (
    LinearModel,
    SquaredLoss,
    Task,
    load_tasks,
    potential_grad,
    potential_value,
    save_tasks,
)
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    PRESETS,
    config_from_dict,
    generate_tasks,
    preset_config,
    run_experiment,
)
from .langevin import (
    ChainMoments,
    DivergenceError,
    LgdConfig,
    LgdResult,
    chain_moments,
    lgd_predict,
    ula_step,
)
from .metalearn import (
    AllTasksDivergedError,
    CurvePoint,
    HyperParams,
    MetaConfig,
    MetaResult,
    TraceStep,
    evaluate_learning_curve,
    hypergrad,
    meta_train,
    task_seeds,
    validation_loss,
    write_trace_csv,
)
from .priors import (
    DiagonalGaussian,
    IsotropicGaussian,
    PriorFamily,
    SoftplusGaussian,
    prior_from_config,
    prior_to_config,
)
from .rng import derive_seed, normal_at, normals
from .theory import (
    BoundResult,
    EmpMeanBounds,
    ErmBayesBudget,
    GJComplexity,
    SmoothnessSpec,
    UlaParams,
    bernstein_tail,
    empmean_bounds,
    erm_bayes_budget,
    hoeffding_deviation,
    pdim_bound,
    task_count_bound,
    u2_limit,
    ula_params,
    wasserstein_bound,
)

__version__ = "0.1.0"
