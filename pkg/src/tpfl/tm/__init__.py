from .estimator import TsetlinMachineClassifier, append_negations
from .model import (
    ClassWeightVector,
    ClauseBank,
    EmptyEvaluationWarning,
    TMModel,
    argmax_confidence,
    class_margin,
    class_margins,
    clause_output,
    clause_outputs,
    confidence_scores,
    evaluate_accuracy,
    from_bytes,
    get_class_weights,
    integerize_weights,
    predict,
    set_class_weights,
    to_bytes,
    train_epoch,
    train_on_sample,
)

__all__ = [
    "ClassWeightVector",
    "ClauseBank",
    "EmptyEvaluationWarning",
    "TMModel",
    "TsetlinMachineClassifier",
    "append_negations",
    "argmax_confidence",
    "class_margin",
    "class_margins",
    "clause_output",
    "clause_outputs",
    "confidence_scores",
    "evaluate_accuracy",
    "from_bytes",
    "get_class_weights",
    "integerize_weights",
    "predict",
    "set_class_weights",
    "to_bytes",
    "train_epoch",
    "train_on_sample",
]
