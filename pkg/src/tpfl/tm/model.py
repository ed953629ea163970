"""Multiclass weighted Tsetlin Machine state and the operations on it.

A model holds one clause bank per class. Each bank is an ``(n, 2o)`` matrix of
Tsetlin Automaton states in ``[1, 2N]`` plus ``n`` positive integer clause
weights. Even-indexed clauses vote for the class, odd-indexed against it.
States ``1..N`` exclude a literal, ``N+1..2N`` include it.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

SNAPSHOT_MAGIC = b"TPFLTM1"
_HEADER = struct.Struct("<7sIIIIId")

# rows per BLAS block during batched inference
_BLOCK = 2048


class EmptyEvaluationWarning(UserWarning):
    """Accuracy was requested on an empty set; 0.0 is reported."""


@dataclass
class ClauseBank:
    """View onto one class's clauses; mutations write through to the model."""

    ta_states: np.ndarray
    weights: np.ndarray
    n_states: int

    @property
    def polarity(self) -> np.ndarray:
        return np.where(np.arange(self.weights.shape[0]) % 2 == 0, 1, -1)

    def includes(self) -> np.ndarray:
        return self.ta_states > self.n_states


@dataclass
class TMModel:
    n_classes: int
    n_clauses: int
    n_features: int
    T: int = 1000
    s: float = 10.0
    n_states: int = 127
    ta_states: np.ndarray = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_classes < 1:
            raise ValueError(f"n_classes must be >= 1, got {self.n_classes}")
        if self.n_clauses < 2 or self.n_clauses % 2:
            raise ValueError(f"n_clauses must be a positive even number, got {self.n_clauses}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if not self.s > 1:
            raise ValueError(f"s must be > 1, got {self.s}")
        if not 1 <= self.n_states <= 16383:
            raise ValueError(f"n_states must lie in [1, 16383], got {self.n_states}")
        shape = (self.n_classes, self.n_clauses, 2 * self.n_features)
        if self.ta_states is None:
            # every automaton starts on the exclude side of the boundary
            self.ta_states = np.full(shape, self.n_states, dtype=np.int16)
        elif self.ta_states.shape != shape:
            raise ValueError(f"ta_states shape {self.ta_states.shape} != {shape}")
        elif self.ta_states.dtype != np.int16:
            self.ta_states = self.ta_states.astype(np.int16)
        if self.weights is None:
            self.weights = np.ones((self.n_classes, self.n_clauses), dtype=np.int64)
        elif self.weights.shape != shape[:2]:
            raise ValueError(f"weights shape {self.weights.shape} != {shape[:2]}")
        elif self.weights.dtype != np.int64:
            self.weights = self.weights.astype(np.int64)

    @property
    def n_literals(self) -> int:
        return 2 * self.n_features

    def bank(self, c: int) -> ClauseBank:
        return ClauseBank(self.ta_states[c], self.weights[c], self.n_states)

    def copy(self) -> "TMModel":
        return TMModel(
            self.n_classes, self.n_clauses, self.n_features, self.T, self.s, self.n_states,
            self.ta_states.copy(), self.weights.copy(),
        )

    def __eq__(self, other):
        if not isinstance(other, TMModel):
            return NotImplemented
        return (
            (self.n_classes, self.n_clauses, self.n_features, self.T, self.s, self.n_states)
            == (other.n_classes, other.n_clauses, other.n_features, other.T, other.s, other.n_states)
            and np.array_equal(self.ta_states, other.ta_states)
            and np.array_equal(self.weights, other.weights)
        )


@dataclass(frozen=True)
class ClassWeightVector:
    """All clause weights of one class, in clause order."""

    cls: int
    weights: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.weights) < 1):
            raise ValueError("clause weights must be >= 1")


def _as_literals(literals, n_literals):
    literals = np.ascontiguousarray(literals, dtype=np.uint8)
    if literals.shape[-1] != n_literals:
        raise ValueError(f"expected {n_literals} literals, got {literals.shape[-1]}")
    return literals


def clause_output(bank: ClauseBank, j: int, literals, inference_mode: bool = True) -> int:
    literals = _as_literals(literals, bank.ta_states.shape[1])
    empty = 0 if inference_mode else 1
    return int(_kernels.clause_fires(bank.ta_states[j], literals, bank.n_states, empty))


def clause_outputs(model: TMModel, literals) -> np.ndarray:
    """Inference-mode outputs of every clause, shape ``(m, C, n)`` as bool."""
    literals = _as_literals(np.atleast_2d(literals), model.n_literals)
    include = model.ta_states.reshape(-1, model.n_literals) > model.n_states
    nonempty = include.any(axis=1)
    include_f = include.astype(np.float32).T
    out = np.empty((literals.shape[0], include.shape[0]), dtype=bool)
    for start in range(0, literals.shape[0], _BLOCK):
        absent = 1.0 - literals[start:start + _BLOCK].astype(np.float32)
        # a clause fires when none of its included literals is absent
        out[start:start + _BLOCK] = (absent @ include_f == 0) & nonempty
    return out.reshape(-1, model.n_classes, model.n_clauses)


def class_margins(model: TMModel, literals, weighted: bool = True) -> np.ndarray:
    """Margins of every class for a batch of literal vectors, shape ``(m, C)``."""
    fires = clause_outputs(model, literals)
    polarity = np.where(np.arange(model.n_clauses) % 2 == 0, 1, -1)
    votes = model.weights * polarity if weighted else np.broadcast_to(polarity, model.weights.shape)
    return np.einsum("mcn,cn->mc", fires.astype(np.int64), votes)


def class_margin(model: TMModel, c: int, literals) -> int:
    return int(class_margins(model, np.atleast_2d(literals))[0, c])


def predict(model: TMModel, literals) -> np.ndarray | int:
    """Argmax class per sample; ``np.argmax`` already breaks ties toward the lowest index."""
    single = np.ndim(literals) == 1
    pred = np.argmax(class_margins(model, np.atleast_2d(literals)), axis=1)
    return int(pred[0]) if single else pred


def train_on_sample(model: TMModel, literals, label: int, rng: np.random.Generator) -> TMModel:
    literals = _as_literals(np.atleast_2d(literals), model.n_literals)
    labels = np.array([label], dtype=np.int64)
    return _train(model, literals, labels, np.zeros(1, dtype=np.int64), rng)


def train_epoch(model: TMModel, literals, labels, rng: np.random.Generator) -> TMModel:
    """One pass over the samples in an order shuffled by ``rng``."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] == 0:
        return model
    literals = _as_literals(literals, model.n_literals)
    return _train(model, literals, labels, rng.permutation(labels.shape[0]), rng)


def _train(model, literals, labels, order, rng):
    if labels.max() >= model.n_classes or labels.min() < 0:
        raise ValueError(f"labels must lie in [0, {model.n_classes})")
    _kernels.train_samples(
        model.ta_states, model.weights, literals, labels, order,
        int(model.T), float(model.s), int(model.n_states), rng,
    )
    return model


def evaluate_accuracy(model: TMModel, literals, labels) -> float:
    labels = np.asarray(labels)
    if labels.shape[0] == 0:
        warnings.warn("accuracy of an empty set is reported as 0.0", EmptyEvaluationWarning, stacklevel=2)
        return 0.0
    return float(np.mean(predict(model, np.atleast_2d(literals)) == labels))


def confidence_scores(model: TMModel, literals, weighted: bool = False) -> np.ndarray:
    """Per-class sum of clause-vote margins over a confidence set.

    Unweighted by default: each firing clause contributes its polarity only.
    """
    if np.shape(literals)[0] == 0:
        return np.zeros(model.n_classes, dtype=np.int64)
    return class_margins(model, literals, weighted=weighted).sum(axis=0)


def argmax_confidence(scores) -> int:
    scores = np.asarray(scores)
    if scores.size == 0:
        raise ValueError("scores must be nonempty")
    return int(np.argmax(scores))


def get_class_weights(model: TMModel, c: int) -> ClassWeightVector:
    if not 0 <= c < model.n_classes:
        raise IndexError(f"class {c} out of range for {model.n_classes} classes")
    return ClassWeightVector(c, model.weights[c].copy())


def integerize_weights(values) -> np.ndarray:
    """Round half up and floor at 1."""
    return np.maximum(np.floor(np.asarray(values, dtype=np.float64) + 0.5), 1).astype(np.int64)


def set_class_weights(model: TMModel, vector: ClassWeightVector) -> TMModel:
    c = vector.cls
    if not 0 <= c < model.n_classes:
        raise IndexError(f"class {c} out of range for {model.n_classes} classes")
    values = np.asarray(vector.weights)
    if values.shape != (model.n_clauses,):
        raise ValueError(f"weight vector has shape {values.shape}, expected ({model.n_clauses},)")
    model.weights[c] = integerize_weights(values)
    return model


def to_bytes(model: TMModel) -> bytes:
    """Versioned snapshot.

    Header ``TPFLTM1`` then ``C, n, o, N, T`` as uint32 and ``s`` as float64,
    all little-endian. Then each class's TA matrix row-major as int8
    ``state - N - 1``, then every class's weights as uint32 little-endian.
    """
    if model.n_states > 127:
        raise ValueError("snapshot stores TA states as signed bytes; n_states must be <= 127")
    header = _HEADER.pack(
        SNAPSHOT_MAGIC, model.n_classes, model.n_clauses, model.n_features,
        model.n_states, int(model.T), float(model.s),
    )
    states = (model.ta_states.astype(np.int16) - model.n_states - 1).astype(np.int8)
    return header + states.tobytes() + model.weights.astype("<u4").tobytes()


def from_bytes(data: bytes) -> TMModel:
    if len(data) < _HEADER.size:
        raise ValueError("snapshot shorter than its header")
    magic, C, n, o, N, T, s = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    n_ta = C * n * 2 * o
    expected = _HEADER.size + n_ta + 4 * C * n
    if len(data) != expected:
        raise ValueError(f"snapshot is {len(data)} bytes, expected {expected}")
    body = memoryview(data)[_HEADER.size:]
    states = np.frombuffer(body[:n_ta], dtype=np.int8).astype(np.int16) + N + 1
    weights = np.frombuffer(body[n_ta:], dtype="<u4").astype(np.int64)
    return TMModel(C, n, o, T, s, N, states.reshape(C, n, 2 * o), weights.reshape(C, n))
