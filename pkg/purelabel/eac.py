"""
.. module:: eac
   :platform: Unix, Windows
   :synopsis: Extrinsic auxiliary correction (accompanying linear classifier)

.. moduleauthor:: purelabel contributors

"""

import logging
from dataclasses import asdict, dataclass, field, replace
from enum import Enum, unique
from typing import Tuple

import numpy as np
from scipy.special import log_softmax

from .datamodel import softmax_rows
from .errors import DimensionError, InvalidSpecError, NumericError
from .rng import Stream, check_seed, make_rng

logger = logging.getLogger(__name__)

# tolerance on target rows summing to one
_TARGET_ATOL = 1e-6


@unique
class BlendSpace(Enum):
    """Space in which classifier outputs are blended into the label logits"""
    LOGIT = "logit"
    PROBABILITY = "probability"


@dataclass
class AdamSettings:
    """First-order adaptive-moment optimizer settings."""
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.step_size < 0:
            raise InvalidSpecError("step_size cannot be negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidSpecError("Moment decays must lie in [0, 1)")
        if not self.epsilon > 0:
            raise InvalidSpecError("epsilon must be positive")


@dataclass
class EacConfig:
    """Hyperparameters of the accompanying classifier and its label update.

    ``seed`` keys the draw of the initial classifier weights, which only
    happens when ``init_std`` is positive; otherwise the classifier starts at
    zero and ``seed`` is recorded for provenance.
    """
    eta_e: float = 1.0
    period: int = 50
    gamma_ent: float = 1.0
    optimizer: AdamSettings = field(default_factory=AdamSettings)
    seed: int = 0
    blend_space: BlendSpace = BlendSpace.LOGIT
    hard_targets: bool = False
    use_bias: bool = True
    steps_per_iter: int = 1
    init_std: float = 0.0

    def __post_init__(self):
        if isinstance(self.optimizer, dict):
            self.optimizer = AdamSettings(**self.optimizer)
        self.blend_space = BlendSpace(self.blend_space)
        if not 0.0 <= self.eta_e <= 1.0:
            raise InvalidSpecError("eta_e must lie in [0, 1]")
        if self.period < 1:
            raise InvalidSpecError("period must be at least 1")
        if self.gamma_ent < 0:
            raise InvalidSpecError("gamma_ent cannot be negative")
        if self.steps_per_iter < 1:
            raise InvalidSpecError("steps_per_iter must be at least 1")
        if self.init_std < 0:
            raise InvalidSpecError("init_std cannot be negative")
        check_seed(self.seed)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["blend_space"] = self.blend_space.value
        return out

    @classmethod
    def from_dict(cls, values: dict) -> "EacConfig":
        return cls(**values)


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    """Linear map ``F w + bias`` from d features to c logits."""
    weights: np.ndarray
    bias: np.ndarray
    use_bias: bool = True

    @classmethod
    def zeros(cls, dim: int, classes: int, use_bias: bool=True) -> "LinearClassifier":
        """Zero-initialized classifier, so the first forward pass is uniform"""
        return cls(np.zeros((dim, classes)), np.zeros(classes), use_bias)

    @classmethod
    def random(cls, dim: int, classes: int, std: float, seed: int,
               use_bias: bool=True) -> "LinearClassifier":
        """Gaussian weights of deviation ``std`` drawn from the seed's init stream; zero bias"""
        rng = make_rng(seed, Stream.CLASSIFIER_INIT)
        return cls(std * rng.standard_normal((dim, classes)), np.zeros(classes), use_bias)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @property
    def classes(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True, eq=False)
class AdamState:
    """Moment estimates and step count of the optimizer."""
    m_w: np.ndarray
    v_w: np.ndarray
    m_b: np.ndarray
    v_b: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, clf: LinearClassifier) -> "AdamState":
        return cls(np.zeros_like(clf.weights), np.zeros_like(clf.weights),
                   np.zeros_like(clf.bias), np.zeros_like(clf.bias))


def classifier_forward(clf: LinearClassifier, features: np.ndarray) -> np.ndarray:
    """Logits ``F w_c + bias`` for m rows"""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != clf.dim:
        raise DimensionError(
            "Features have shape {}, classifier expects {} columns"
            .format(np.shape(features), clf.dim))
    logits = features @ clf.weights
    if clf.use_bias:
        logits = logits + clf.bias
    return logits


def _check_targets(logits: np.ndarray, targets: np.ndarray):
    if np.shape(logits) != np.shape(targets):
        raise DimensionError(
            "Logits {} and targets {} differ in shape"
            .format(np.shape(logits), np.shape(targets)))
    sums = np.sum(targets, axis=1)
    if np.any(np.abs(sums - 1.0) > _TARGET_ATOL) or np.any(np.asarray(targets) < 0):
        raise InvalidSpecError("Target rows must be probability vectors")


def _loss_and_grad_logits(logits, targets, gamma_ent) -> Tuple[float, np.ndarray]:
    logp = log_softmax(logits, axis=1)
    p = np.exp(logp)
    rows = -np.sum(targets * logp, axis=1)
    # CE gradient p - t relies on the target rows summing to one
    grad = p - targets
    if gamma_ent:
        entropy = -np.sum(p * logp, axis=1)
        rows = rows + gamma_ent * entropy
        grad -= gamma_ent * p * (logp + entropy[:, None])
    m = logits.shape[0]
    return float(np.mean(rows)), grad / m


def eac_loss(logits: np.ndarray, targets: np.ndarray, gamma_ent: float) -> float:
    """Mean soft-target cross entropy plus weighted prediction entropy

    :raises: InvalidSpecError on a target row that is not a distribution
    """
    logits = np.asarray(logits, dtype=np.float64)
    _check_targets(logits, targets)
    return _loss_and_grad_logits(logits, np.asarray(targets, dtype=np.float64),
                                 gamma_ent)[0]


def eac_gradient(clf: LinearClassifier, features: np.ndarray, targets: np.ndarray,
                 gamma_ent: float, weight_decay: float=0.0
                 ) -> Tuple[float, np.ndarray, np.ndarray]:
    """Loss and its gradient w.r.t. the classifier weights and bias.

    ``weight_decay`` adds ``weight_decay / 2 * ||w||^2`` to the loss.
    """
    logits = classifier_forward(clf, features)
    targets = np.asarray(targets, dtype=np.float64)
    _check_targets(logits, targets)
    loss, grad_logits = _loss_and_grad_logits(logits, targets, gamma_ent)
    grad_w = np.asarray(features, dtype=np.float64).T @ grad_logits
    grad_b = grad_logits.sum(axis=0) if clf.use_bias else np.zeros_like(clf.bias)
    if weight_decay:
        loss += 0.5 * weight_decay * float(np.sum(clf.weights ** 2))
        grad_w = grad_w + weight_decay * clf.weights
    return loss, grad_w, grad_b


def adam_update(clf: LinearClassifier, state: AdamState, grad_w: np.ndarray,
                grad_b: np.ndarray, settings: AdamSettings
                ) -> Tuple[LinearClassifier, AdamState]:
    """One bias-corrected adaptive-moment update

    :raises: NumericError if a gradient entry is not finite
    """
    if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
        raise NumericError("Non-finite classifier gradient")
    b1, b2 = settings.beta1, settings.beta2
    t = state.t + 1
    m_w = b1 * state.m_w + (1 - b1) * grad_w
    v_w = b2 * state.v_w + (1 - b2) * grad_w ** 2
    m_b = b1 * state.m_b + (1 - b1) * grad_b
    v_b = b2 * state.v_b + (1 - b2) * grad_b ** 2
    lr = settings.step_size * np.sqrt(1 - b2 ** t) / (1 - b1 ** t)
    weights = clf.weights - lr * m_w / (np.sqrt(v_w) + settings.epsilon)
    bias = clf.bias
    if clf.use_bias:
        bias = bias - lr * m_b / (np.sqrt(v_b) + settings.epsilon)
    return (replace(clf, weights=weights, bias=bias),
            AdamState(m_w, v_w, m_b, v_b, t))


def eac_train_step(clf: LinearClassifier, features: np.ndarray, targets: np.ndarray,
                   opt_state: AdamState, cfg: EacConfig
                   ) -> Tuple[LinearClassifier, AdamState]:
    """One optimizer step of the classifier on a batch of soft targets"""
    _, grad_w, grad_b = eac_gradient(clf, features, targets, cfg.gamma_ent)
    return adam_update(clf, opt_state, grad_w, grad_b, cfg.optimizer)


def eac_label_update(logits: np.ndarray, classifier_logits: np.ndarray, eta_e: float,
                     blend_space: BlendSpace=BlendSpace.LOGIT,
                     alpha: float=1.0) -> np.ndarray:
    """Momentum blend ``(1 - eta_e) Y + eta_e C(F)`` over the full label set.

    In probability space the blend is taken between ``softmax(alpha Y)`` and
    ``softmax(C(F))`` and mapped back to logits as ``log(p) / alpha``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    classifier_logits = np.asarray(classifier_logits, dtype=np.float64)
    if logits.shape != classifier_logits.shape:
        raise DimensionError(
            "Label logits {} and classifier logits {} differ in shape"
            .format(logits.shape, classifier_logits.shape))
    if not 0.0 <= eta_e <= 1.0:
        raise InvalidSpecError("eta_e must lie in [0, 1]")
    if BlendSpace(blend_space) is BlendSpace.LOGIT:
        return (1.0 - eta_e) * logits + eta_e * classifier_logits
    blended = ((1.0 - eta_e) * softmax_rows(logits, alpha)
               + eta_e * softmax_rows(classifier_logits))
    return np.log(np.maximum(blended, np.finfo(np.float64).tiny)) / alpha
