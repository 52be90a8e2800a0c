"""Loss-aware weight quantization.

Ternary (one and two scaling parameters), m-bit linear/logarithmic and
closed-form baseline quantizers for network weights, a diagonal-curvature
training harness, brute-force verification oracles, and the `lawq` CLI.
"""

from .curvature import AdamHyper, OptimizerState, adam_step, curvature_from_moments, precond_step
from .estimators import QuantizedNetClassifier, WeightQuantizer
from .qset import QuantSet, build_qset, project_qset
from .quantizers import (QuantizedLayer, TernaryExactTrace, binarize_bwn,
                         binarize_lab, binarize_sign, quantize_dorefa,
                         quantize_mbit, ternarize_approx, ternarize_exact,
                         ternarize_twn, ternarize_two_scale_approx,
                         ternarize_two_scale_exact)
from .training import ScheduleConfig, TrainConfig, lr_schedule, train

__version__ = "0.1.0"

__all__ = [
    "AdamHyper",
    "OptimizerState",
    "adam_step",
    "curvature_from_moments",
    "precond_step",
    "QuantizedNetClassifier",
    "WeightQuantizer",
    "QuantSet",
    "build_qset",
    "project_qset",
    "QuantizedLayer",
    "TernaryExactTrace",
    "binarize_bwn",
    "binarize_lab",
    "binarize_sign",
    "quantize_dorefa",
    "quantize_mbit",
    "ternarize_approx",
    "ternarize_exact",
    "ternarize_twn",
    "ternarize_two_scale_approx",
    "ternarize_two_scale_exact",
    "ScheduleConfig",
    "TrainConfig",
    "lr_schedule",
    "train",
    "__version__",
]
