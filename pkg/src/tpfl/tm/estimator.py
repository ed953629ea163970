"""scikit-learn compatible front end for the weighted Tsetlin Machine."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import model as tm


def append_negations(X) -> np.ndarray:
    """Boolean features ``(..., o)`` -> literals ``(..., 2o)``."""
    X = np.asarray(X, dtype=np.uint8)
    return np.concatenate([X, 1 - X], axis=-1)


def _check_binary(X):
    if X.size and (X.min() < 0 or X.max() > 1):
        raise ValueError("TsetlinMachineClassifier expects boolean features (0/1)")
    return X.astype(np.uint8, copy=False)


class TsetlinMachineClassifier(ClassifierMixin, BaseEstimator):
    """Multiclass weighted Tsetlin Machine.

    Parameters
    ----------
    n_clauses : int
        Clauses per class, split evenly between positive and negative polarity.
    T : int
        Feedback threshold; clipping bound on the class margin during training.
    s : float
        Specificity. Literals are excluded with probability 1/s under Type I feedback.
    n_states : int
        States per TA action; a TA has ``2 * n_states`` states.
    n_epochs : int
        Passes over the data per call to ``fit``.
    weighted_confidence : bool
        Use weighted rather than plain clause votes in ``confidence_scores``.
    random_state : int, numpy Generator or None
        Drives sample shuffling, negative-class draws and feedback randomness.

    Attributes
    ----------
    model_ : TMModel
    classes_ : ndarray of shape (n_classes,)
        Always ``arange(n_classes)``; labels are class indices.
    """

    def __init__(self, n_clauses=300, T=1000, s=10.0, n_states=127, n_epochs=10,
                 weighted_confidence=False, random_state=None):
        self.n_clauses = n_clauses
        self.T = T
        self.s = s
        self.n_states = n_states
        self.n_epochs = n_epochs
        self.weighted_confidence = weighted_confidence
        self.random_state = random_state

    def _init_model(self, n_features, n_classes):
        self.model_ = tm.TMModel(
            n_classes=int(n_classes), n_clauses=int(self.n_clauses), n_features=int(n_features),
            T=int(self.T), s=float(self.s), n_states=int(self.n_states),
        )
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = n_features
        if isinstance(self.random_state, np.random.Generator):
            self._rng = self.random_state
        else:
            self._rng = np.random.default_rng(self.random_state)

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        X = _check_binary(X)
        y = np.asarray(y, dtype=np.int64)
        self._init_model(X.shape[1], int(y.max()) + 1 if y.size else 1)
        literals = append_negations(X)
        for _ in range(self.n_epochs):
            tm.train_epoch(self.model_, literals, y, self._rng)
        return self

    def partial_fit(self, X, y, classes=None):
        """One shuffled epoch. ``classes`` is required on the first call."""
        X, y = check_X_y(X, y)
        X = _check_binary(X)
        if not hasattr(self, "model_"):
            if classes is None:
                raise ValueError("classes must be passed on the first call to partial_fit")
            self._init_model(X.shape[1], len(classes))
        tm.train_epoch(self.model_, append_negations(X), np.asarray(y, dtype=np.int64), self._rng)
        return self

    def _literals(self, X):
        check_is_fitted(self)
        X = _check_binary(check_array(X))
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return append_negations(X)

    def decision_function(self, X):
        """Weighted class margins, shape ``(n_samples, n_classes)``."""
        return tm.class_margins(self.model_, self._literals(X))

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def confidence_scores(self, X):
        return tm.confidence_scores(self.model_, self._literals(X), weighted=self.weighted_confidence)

    def get_class_weights(self, c):
        check_is_fitted(self)
        return tm.get_class_weights(self.model_, c)

    def set_class_weights(self, vector):
        check_is_fitted(self)
        tm.set_class_weights(self.model_, vector)
        return self
