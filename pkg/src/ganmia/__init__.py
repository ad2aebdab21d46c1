"""Membership-inference attacks against black-box generators of binary rows.

The package bundles the target generators (an exact-density mixture oracle
and a small vanilla GAN), the attack suite (distance, truncated-mean inner
product, detector classifiers, density ratio, exact Bayes score), and the
ROC-at-low-FPR evaluation harness.
"""

from .attacks import (
    ATTACK_REGISTRY,
    AdisAttack,
    AttackContext,
    AttackScores,
    BayesOracleAttack,
    DetectorAttack,
    DomiasAttack,
    OneWayDistanceAttack,
    RobustHomerAttack,
    TwoWayDistanceAttack,
    WeightedDistanceAttack,
    bayes_oracle_attack,
    make_attack,
    one_way_score,
    reconstruction_loss,
    robust_homer_score,
    two_way_score,
    weighted_score,
)
from .bitmatrix import BitMatrix, hamming_cross, hamming_min, load_csv, save_csv
from .datagen import SnpDistributionSpec, SplitPlan, sample_distribution, split_dataset
from .density import DiagonalGmm, Pca, domias_score
from .evaluation import (
    EvalReport,
    RocCurve,
    auc,
    average_runs,
    build_report,
    emit_report,
    exact_roc,
    memorization_check,
    mmd2_unbiased,
    mre_gap,
    permutation_pvalue,
    roc_curve,
    tpr_at_fpr,
)
from .experiment import (
    ExperimentConfig,
    default_config,
    diagnose,
    load_config,
    run_experiment,
    save_config,
)
from .generators import (
    GanHandle,
    GanTrainConfig,
    OracleMixtureGenerator,
    gan_sample,
    oracle_density,
    oracle_sample,
    train_vanilla_gan,
)
from .nn import (
    MlpClassifier,
    MlpModel,
    TrainConfig,
    TrainHistory,
    adam_step,
    backprop,
    bce_loss,
    init_mlp,
    mlp_forward,
    train_classifier,
)

__version__ = "0.1.0"

__all__ = [
    "ATTACK_REGISTRY",
    "AdisAttack",
    "AttackContext",
    "AttackScores",
    "BayesOracleAttack",
    "BitMatrix",
    "DetectorAttack",
    "DiagonalGmm",
    "DomiasAttack",
    "EvalReport",
    "ExperimentConfig",
    "GanHandle",
    "GanTrainConfig",
    "MlpClassifier",
    "MlpModel",
    "OneWayDistanceAttack",
    "OracleMixtureGenerator",
    "Pca",
    "RobustHomerAttack",
    "RocCurve",
    "SnpDistributionSpec",
    "SplitPlan",
    "TrainConfig",
    "TrainHistory",
    "TwoWayDistanceAttack",
    "WeightedDistanceAttack",
    "adam_step",
    "auc",
    "average_runs",
    "backprop",
    "bayes_oracle_attack",
    "bce_loss",
    "build_report",
    "default_config",
    "diagnose",
    "domias_score",
    "emit_report",
    "exact_roc",
    "gan_sample",
    "hamming_cross",
    "hamming_min",
    "init_mlp",
    "load_config",
    "load_csv",
    "make_attack",
    "memorization_check",
    "mlp_forward",
    "mmd2_unbiased",
    "mre_gap",
    "one_way_score",
    "oracle_density",
    "oracle_sample",
    "permutation_pvalue",
    "reconstruction_loss",
    "robust_homer_score",
    "roc_curve",
    "run_experiment",
    "sample_distribution",
    "save_config",
    "save_csv",
    "split_dataset",
    "tpr_at_fpr",
    "train_classifier",
    "train_vanilla_gan",
    "two_way_score",
    "weighted_score",
]
