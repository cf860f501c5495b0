"""Order-resolved interaction analysis for masked value functions."""

from .errors import (
    DimensionError,
    DomainError,
    GuardError,
    InteractionLabError,
    NumericError,
    SchemaError,
    ValidationError,
    VerificationError,
)
from .games import (
    Baseline,
    PolynomialGame,
    SubsetMask,
    SyntheticGame,
    ValueFunction,
    compute_baseline,
    enumerate_subsets,
    make_masked_input,
    masked_matrix,
    sample_subset,
    synthetic_game,
)
from .interactions import (
    EfficiencyReport,
    InteractionEstimate,
    LogOddsGame,
    OrderProfile,
    ValueCache,
    default_order_grid,
    delta_v,
    efficiency_residual,
    efficiency_weight,
    independent_effect,
    interaction_order_exact,
    interaction_order_mc,
    order_profile,
    order_strength,
    pair_interaction,
    read_profile_csv,
    write_profile_csv,
)
from .mlp import (
    MLP,
    ParamGrads,
    accuracy,
    ce_value_and_grad,
    cross_entropy,
    cross_entropy_grad,
    flatten_grads,
    get_flat_params,
    load_model,
    log_softmax,
    masked_forward,
    save_model,
    set_flat_params,
    softmax,
)
from .modulation import (
    ModulationSpec,
    OrderWeights,
    band_sizes,
    combined_loss,
    combined_value_and_grad,
    delta_u,
    delta_u_class,
    encourage_value_and_grad,
    loss_encourage,
    loss_suppress,
    order_weights,
    round_half_up,
    suppress_value_and_grad,
    theorem2_weight,
    verify_theorem2,
)
from .rng import child_seed, make_rng
from .attack import AttackConfig, adversarial_accuracy, pgd_attack
from .datasets import (
    BUNDLED_TASKS,
    TabularDataset,
    apply_standardization,
    bundled_dataset,
    load_dataset_csv,
    make_conjunction_task,
    make_pairwise_task,
    resolve_dataset,
    split_dataset,
    standardize,
    write_dataset_csv,
)
from .training import (
    EpochStats,
    TrainConfig,
    TrainLog,
    VARIANT_TERMS,
    read_train_log,
    train,
    variant_config,
    write_snapshots,
    write_train_log,
)
from .theory import (
    EffectiveNFit,
    GradSimConfig,
    TheoryCurve,
    argmin_order,
    contextual_variability,
    fit_effective_n,
    learning_strength_hat,
    mean_norm_gaussian,
    predicted_update_norm,
    read_theory_csv,
    simulate_curve,
    simulate_learning_strength,
    theory_curve,
    write_theory_csv,
)

__version__ = "0.1.0"
