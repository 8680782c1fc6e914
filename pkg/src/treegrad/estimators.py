"""Scikit-learn style front end for the tree classifiers.

TreeRnnClassifier and TreeLstmClassifier wrap model construction and the
AdaGrad/early-stopping loop behind the usual fit/predict/score surface, so
the models compose with sklearn tooling (clone, get_params, pipelines that
pass opaque objects through). X is a sequence of binary keyword trees or
labeled examples; y is optional because every tree's class is determined
by its keyword, but when given it is checked against the trees.

Example:

    clf = TreeRnnClassifier(n_dim=50, seed=0)
    clf.fit(train_examples, X_dev=dev_examples)
    clf.score(test_examples)
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .model import forward, init_model, predict as predict_tree
from .trainer import TrainConfig, train
from .treebank import (
    NUM_CLASSES,
    BinaryTree,
    Internal,
    LabeledExample,
    Leaf,
    make_example,
)


def validate_examples(X: Sequence, y: Optional[Sequence[int]] = None) -> list[LabeledExample]:
    """Coerce trees/examples into labeled examples; check y against them.

    Labels here are not free: each tree's unique keyword determines its
    class, so a y that disagrees with the trees marks corrupted input.
    """
    if len(X) == 0:
        raise ValueError("X is empty")
    examples = []
    for pos, item in enumerate(X):
        if isinstance(item, LabeledExample):
            examples.append(item)
        elif isinstance(item, (Leaf, Internal)):
            examples.append(make_example(item))
        else:
            raise TypeError(
                f"X[{pos}] is {type(item).__name__}, expected a binary tree or "
                "a labeled example"
            )
    if y is not None:
        if len(y) != len(examples):
            raise ValueError(f"X has {len(examples)} items but y has {len(y)}")
        for pos, (ex, label) in enumerate(zip(examples, y)):
            if int(label) != ex.label:
                raise ValueError(
                    f"y[{pos}] = {label} but the keyword {ex.keyword_value} "
                    f"implies class {ex.label}"
                )
    return examples


class _TreeClassifier(BaseEstimator, ClassifierMixin):
    """Shared fit/predict logic; subclasses pin the composer kind."""

    _kind = ""

    def fit(self, X, y=None, X_dev=None, y_dev=None):
        """Train from scratch; early-stops on (X_dev, y_dev) when given,
        otherwise on the training examples themselves."""
        examples = validate_examples(X, y)
        dev = validate_examples(X_dev, y_dev) if X_dev is not None else examples
        config = TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            patience=self.patience,
            max_epochs=self.max_epochs,
            n_dim=self.n_dim,
            seed=self.seed,
        )
        result = train(init_model(self._kind, self.n_dim, self.seed), examples, dev, config)
        self.model_ = result.model
        self.classes_ = np.arange(NUM_CLASSES)
        self.log_ = result.log
        self.best_epoch_ = result.best_epoch
        self.best_dev_accuracy_ = result.best_dev_accuracy
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                f"this {type(self).__name__} instance is not fitted yet; call fit first"
            )

    def _trees(self, X) -> list[BinaryTree]:
        if len(X) == 0:
            raise ValueError("X is empty")
        trees = []
        for pos, item in enumerate(X):
            if isinstance(item, LabeledExample):
                trees.append(item.tree)
            elif isinstance(item, (Leaf, Internal)):
                trees.append(item)
            else:
                raise TypeError(
                    f"X[{pos}] is {type(item).__name__}, expected a binary tree or "
                    "a labeled example"
                )
        return trees

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        trees = self._trees(X)
        out = np.empty((len(trees), NUM_CLASSES))
        for row, tree in enumerate(trees):
            out[row] = forward(tree, self.model_).probs
        return out

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        return np.array(
            [predict_tree(forward(tree, self.model_)) for tree in self._trees(X)],
            dtype=np.int64,
        )

    def score(self, X, y=None, sample_weight=None) -> float:
        """Mean accuracy; y defaults to the keyword-derived labels."""
        if y is None:
            y = [ex.label for ex in validate_examples(X)]
        return super().score(X, np.asarray(y), sample_weight=sample_weight)


class TreeRnnClassifier(_TreeClassifier):
    """Plain tanh tree composition, trained with AdaGrad (batch 20)."""

    _kind = "rnn"

    def __init__(self, n_dim=50, learning_rate=0.05, batch_size=20, patience=5,
                 max_epochs=100, seed=0):
        self.n_dim = n_dim
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.patience = patience
        self.max_epochs = max_epochs
        self.seed = seed


class TreeLstmClassifier(_TreeClassifier):
    """Gated tree composition, trained with AdaGrad (batch 5)."""

    _kind = "rlstm"

    def __init__(self, n_dim=50, learning_rate=0.05, batch_size=5, patience=5,
                 max_epochs=100, seed=0):
        self.n_dim = n_dim
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.patience = patience
        self.max_epochs = max_epochs
        self.seed = seed
