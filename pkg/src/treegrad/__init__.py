"""Recursive networks over binary parse trees, with gradient diagnostics.

The pieces, bottom up: `treebank` builds and serializes keyword-labeled
random trees; `model` implements the two composers (plain recursive net and
recursive LSTM) with hand-derived backprop; `trainer` runs minibatch AdaGrad
with dev-set early stopping; `diagnostics` measures keyword-to-root error
ratios during training; `report` aggregates results into tables and figures;
`cli` wires it all into reproducible commands. `estimators` wraps training
in scikit-learn compatible classifiers.
"""

from .diagnostics import RatioCollector, gradient_ratio, mem_gradient_ratio, summarize
from .model import (
    Model,
    backward,
    forward,
    init_model,
    load_model,
    predict,
    save_model,
)
from .trainer import TrainConfig, TrainResult, default_config, evaluate, train
from .treebank import (
    Dataset,
    Internal,
    LabeledExample,
    Leaf,
    format_tree,
    gen_dataset_exp1,
    gen_dataset_exp2,
    gen_random_tree,
    gen_sentence,
    parse_tree,
    read_dataset,
    write_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Internal",
    "LabeledExample",
    "Leaf",
    "Model",
    "RatioCollector",
    "TrainConfig",
    "TrainResult",
    "TreeLstmClassifier",
    "TreeRnnClassifier",
    "backward",
    "default_config",
    "evaluate",
    "format_tree",
    "forward",
    "gen_dataset_exp1",
    "gen_dataset_exp2",
    "gen_random_tree",
    "gen_sentence",
    "gradient_ratio",
    "init_model",
    "load_model",
    "mem_gradient_ratio",
    "parse_tree",
    "predict",
    "read_dataset",
    "save_model",
    "summarize",
    "train",
    "write_dataset",
]

_LAZY = {"TreeRnnClassifier", "TreeLstmClassifier"}


def __getattr__(name):
    # the estimator wrappers pull in scikit-learn; import on first use
    if name in _LAZY:
        from . import estimators

        return getattr(estimators, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
