"""Fairness-aware adversarial training for ReLU feedforward networks.

Core pieces: a power-iteration linear-algebra kernel, manual forward and
backward passes for bias-free ReLU nets, FGSM/PGD adversaries, confusion
matrix spectral regularization for robust fairness, worst-class
generalization bound calculators, and evaluation/reporting utilities.
"""

from .attack import AttackConfig, adversarial_set, fgsm, pgd
from .data import ClassStats, Dataset, class_stats, load_mnist_idx, synth_blobs
from .fairness import (
    ConfusionMatrix,
    RegConfig,
    SurrogateMatrix,
    TrainConfig,
    confusion_hard,
    confusion_margin,
    finetune,
    psi_grad,
    surrogate_matrix,
    train,
    worst_class_error,
)
from .network import (
    FeedForwardNet,
    backward,
    forward,
    he_init,
    load_checkpoint,
    margin,
    perturb,
    rebalance,
    save_checkpoint,
    weight_norm_stats,
)
from .pacbayes import (
    BoundReport,
    NuReport,
    SharpnessReport,
    bound_value,
    check_perturbation_bound,
    nu_study,
    phi,
    phi_robust,
    sharpness_variance,
    sigma_star,
)
from .tensor import (
    SingularTriplet,
    frobenius_norm,
    l1_matrix_norm,
    spectral_grad,
    spectral_norm,
    top_singular_pair,
)

__version__ = "0.1.0"
