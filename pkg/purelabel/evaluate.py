"""
.. module:: evaluate
   :platform: Unix, Windows
   :synopsis: Retraining on purified labels and accuracy evaluation

.. moduleauthor:: purelabel contributors

"""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .datamodel import FeatureMatrix, HardLabels
from .eac import (
    AdamSettings, AdamState, LinearClassifier, adam_update, classifier_forward,
    eac_gradient,
)
from .errors import DimensionError, InvalidSpecError, NumericError
from .rng import Stream, check_seed, make_rng

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Minibatch cross-entropy training of a linear head."""
    epochs: int = 100
    batch: int = 256
    optimizer: AdamSettings = field(default_factory=AdamSettings)
    seed: int = 0
    weight_decay: float = 0.0
    use_bias: bool = True

    def __post_init__(self):
        if isinstance(self.optimizer, dict):
            self.optimizer = AdamSettings(**self.optimizer)
        if self.epochs < 1 or self.batch < 1:
            raise InvalidSpecError("epochs and batch must be at least 1")
        if self.weight_decay < 0:
            raise InvalidSpecError("weight_decay cannot be negative")
        check_seed(self.seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        return cls(**values)


def train_linear_ce(features: FeatureMatrix, labels: HardLabels,
                    cfg: TrainConfig=None, targets: np.ndarray=None
                    ) -> LinearClassifier:
    """Trains a zero-initialized linear classifier with cross entropy.

    :param targets: optional N x c soft targets used instead of the one-hot
        labels (labels then only fix the class count)
    :raises: NumericError when the loss stops being finite
    """
    cfg = cfg or TrainConfig()
    x = features.values
    if len(labels) != features.rows:
        raise DimensionError(
            "{} feature rows but {} labels".format(features.rows, len(labels)))
    if targets is None:
        targets = labels.one_hot()
    elif np.shape(targets) != (features.rows, labels.classes):
        raise DimensionError("Soft targets must be N x classes")
    clf = LinearClassifier.zeros(features.dim, labels.classes, cfg.use_bias)
    state = AdamState.zeros_like(clf)
    rng = make_rng(cfg.seed, Stream.TRAIN)
    n = features.rows
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch):
            batch = order[start:start + cfg.batch]
            loss, grad_w, grad_b = eac_gradient(
                clf, x[batch], targets[batch], 0.0, cfg.weight_decay)
            if not np.isfinite(loss):
                raise NumericError(
                    "Non-finite training loss in epoch {}".format(epoch))
            clf, state = adam_update(clf, state, grad_w, grad_b, cfg.optimizer)
            total += loss * len(batch)
        logger.debug("Epoch %d: mean cross entropy %.6f", epoch, total / n)
    return clf


def predict_labels(clf: LinearClassifier, features: FeatureMatrix) -> HardLabels:
    """Argmax predictions, ties to the lowest class index"""
    return HardLabels(np.argmax(classifier_forward(clf, features.values), axis=1),
                      clf.classes)


def evaluate_classifier(clf: LinearClassifier, features: FeatureMatrix,
                        labels: HardLabels) -> float:
    """Fraction of rows whose predicted class equals the label"""
    if len(labels) != features.rows:
        raise DimensionError(
            "{} feature rows but {} labels".format(features.rows, len(labels)))
    if len(labels) == 0:
        return 1.0
    predicted = predict_labels(clf, features)
    return float(np.mean(predicted.values == labels.values))


def _canonical_order(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # lexsort keys run last-to-first: label, then feature columns
    return np.lexsort(tuple(x.T[::-1]) + (y,))


def linear_probe(train_features: FeatureMatrix, clean_labels: HardLabels,
                 test_features: FeatureMatrix, test_labels: HardLabels,
                 cfg: TrainConfig=None) -> float:
    """Linear-probe accuracy: train on a clean subset, score on a test set.

    The subset is put in a canonical order before training, so the result
    does not depend on the order the subset was given in.

    :raises: InvalidSpecError on an empty subset
    """
    if len(clean_labels) == 0:
        raise InvalidSpecError("Linear probe needs a non-empty clean subset")
    if len(clean_labels) != train_features.rows:
        raise DimensionError("Probe features and labels disagree in length")
    order = _canonical_order(train_features.values, clean_labels.values)
    clf = train_linear_ce(train_features.take(order), clean_labels.take(order), cfg)
    accuracy = evaluate_classifier(clf, test_features, test_labels)
    logger.info("Linear probe on %d samples: test accuracy %.4f",
                len(clean_labels), accuracy)
    return accuracy


def save_classifier(clf: LinearClassifier, path):
    """Stores weights and bias in an ``.npz`` archive"""
    with Path(path).open("wb") as fh:
        np.savez(fh, weights=clf.weights, bias=clf.bias,
                 use_bias=np.array(clf.use_bias))


def load_classifier(path) -> LinearClassifier:
    with np.load(Path(path)) as data:
        return LinearClassifier(data["weights"], data["bias"], bool(data["use_bias"]))
