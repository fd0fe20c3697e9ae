"""Budget-constrained spatial and pixel adversarial attacks, joint
adversarial training, and a desk-scale robustness evaluation harness.

The flow-based warp treats a spatial perturbation as a per-pixel
displacement field with an l2,inf budget (no pixel moves farther than
eps_spatial); pixel perturbations live in the usual l-inf ball. Joint
attacks and joint training optimize both at once.
"""

from .attacks import (
    ATTACKS,
    AttackConfig,
    AttackResult,
    cascade_attack,
    fgsm,
    joint_attack_ps,
    joint_attack_sp,
    one_pass_attack,
    pgd_pixel,
    spatial_attack,
)
from .classifier import ConvNet, label_smooth, sample_target, softmax_cross_entropy
from .constraints import (
    Budget,
    clamp_feasible_delta,
    generalized_sign,
    l2inf_norm,
    project_l2inf,
    project_linf,
    random_init_delta,
    random_init_flow,
)
from .data import (
    Dataset,
    augment_batch,
    denormalize,
    load_dataset,
    normalize,
    render_digit,
    save_dataset,
    synthesize_digits,
)
from .evaluation import (
    EvalReport,
    EvalRow,
    SuiteEntry,
    blackbox_eval,
    budget_sweep,
    default_suite,
    evaluate_suite,
    export_report,
    read_report,
)
from .exceptions import (
    AdvflowError,
    ConfigError,
    EvaluationError,
    FormatError,
    ShapeError,
    TrainingDivergedError,
)
from .geometry import warp, warp_grad_flow, warp_grad_image
from .gradcheck import run_gradcheck
from .training import TrainConfig, TrainLog, joint_adv_train, train_variant, variant_config

__version__ = "0.1.0"

__all__ = [
    "ATTACKS",
    "AdvflowError",
    "AttackConfig",
    "AttackResult",
    "Budget",
    "ConfigError",
    "ConvNet",
    "Dataset",
    "EvalReport",
    "EvalRow",
    "EvaluationError",
    "FormatError",
    "ShapeError",
    "SuiteEntry",
    "TrainConfig",
    "TrainLog",
    "TrainingDivergedError",
    "augment_batch",
    "blackbox_eval",
    "budget_sweep",
    "cascade_attack",
    "clamp_feasible_delta",
    "default_suite",
    "denormalize",
    "evaluate_suite",
    "export_report",
    "fgsm",
    "generalized_sign",
    "joint_adv_train",
    "joint_attack_ps",
    "joint_attack_sp",
    "l2inf_norm",
    "label_smooth",
    "load_dataset",
    "normalize",
    "one_pass_attack",
    "pgd_pixel",
    "project_l2inf",
    "project_linf",
    "random_init_delta",
    "random_init_flow",
    "read_report",
    "render_digit",
    "run_gradcheck",
    "sample_target",
    "save_dataset",
    "softmax_cross_entropy",
    "spatial_attack",
    "synthesize_digits",
    "train_variant",
    "variant_config",
    "warp",
    "warp_grad_flow",
    "warp_grad_image",
]
