"""
.. module:: ipc
   :platform: Unix, Windows
   :synopsis: Intrinsic primary correction (closed-form ridge hypergradients)

.. moduleauthor:: purelabel contributors

A ridge regression from a training batch's features onto its soft labels
``S = softmax(alpha * Y)`` is solved in closed form::

    w* = (s F_t^T F_t + lambda I)^-1  s F_t^T S

with ``s = 1`` (or ``1/b`` when the Gram matrix is batch-normalized). Its
predictions on the clean validation features are scored against the clean
labels, and the score is differentiated analytically with respect to ``Y``.
The Cholesky factor of the Gram matrix is computed once per batch and shared
by the forward and backward passes.
"""

import logging
from dataclasses import asdict, dataclass, field
from enum import Enum, unique
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import log_softmax

from .datamodel import CleanValidationSet, softmax_rows
from .errors import DimensionError, InvalidSpecError, NumericError, SingularMatrixError

logger = logging.getLogger(__name__)


@unique
class GramScale(Enum):
    """Scaling of F^T F inside the ridge system"""
    NONE = "none"
    BATCH = "batch"


@dataclass
class IpcConfig:
    """Hyperparameters of the ridge label-gradient corrector."""
    alpha: float = 1.0
    lam: float = 1.0
    eta_i: float = 0.01
    gamma_ent: float = 1.0
    val_batch: Optional[int] = None
    gram_scale: GramScale = GramScale.NONE
    bias_feature: bool = False

    def __post_init__(self):
        self.gram_scale = GramScale(self.gram_scale)
        if not self.alpha > 0:
            raise InvalidSpecError("alpha must be positive")
        if self.lam < 0:
            raise InvalidSpecError("lambda cannot be negative")
        if self.eta_i < 0:
            raise InvalidSpecError("eta_i cannot be negative")
        if self.gamma_ent < 0:
            raise InvalidSpecError("gamma_ent cannot be negative")
        if self.val_batch is not None and self.val_batch < 1:
            raise InvalidSpecError("val_batch must be at least 1")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["gram_scale"] = self.gram_scale.value
        return out

    @classmethod
    def from_dict(cls, values: dict) -> "IpcConfig":
        return cls(**values)


@dataclass(eq=False)
class RidgeSolution:
    """Closed-form ridge weights for one batch.

    ``factor`` holds the Cholesky factor of the Gram matrix for reuse.
    """
    weights: np.ndarray
    lam: float
    alpha: float
    factor: tuple = field(default=None, repr=False)
    scale: float = 1.0


def _gram_factor(features: np.ndarray, lam: float, scale: float) -> tuple:
    gram = scale * (features.T @ features)
    gram[np.diag_indices_from(gram)] += lam
    try:
        return cho_factor(gram, lower=True, check_finite=True)
    except LinAlgError as err:
        raise SingularMatrixError(
            "Gram matrix is not positive definite (lambda={}): {}".format(lam, err))


def _scale_for(cfg_scale: GramScale, rows: int) -> float:
    return 1.0 / rows if GramScale(cfg_scale) is GramScale.BATCH else 1.0


def ridge_fit(features: np.ndarray, logits: np.ndarray, alpha: float, lam: float,
              gram_scale: GramScale=GramScale.NONE) -> RidgeSolution:
    """Solves the ridge regression of ``softmax(alpha * logits)`` on features.

    :param features: b x d batch features
    :param logits: b x c batch label logits
    :raises: SingularMatrixError when the Gram matrix cannot be factorized
    """
    features = np.asarray(features, dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    if features.shape[0] != logits.shape[0]:
        raise DimensionError(
            "Batch has {} feature rows but {} label rows"
            .format(features.shape[0], logits.shape[0]))
    if lam < 0:
        raise InvalidSpecError("lambda cannot be negative")
    scale = _scale_for(gram_scale, features.shape[0])
    factor = _gram_factor(features, lam, scale)
    soft = softmax_rows(logits, alpha)
    weights = cho_solve(factor, scale * (features.T @ soft))
    return RidgeSolution(weights, lam, alpha, factor, scale)


def ridge_predict(sol: RidgeSolution, features: np.ndarray) -> np.ndarray:
    """Ridge predictions ``F w*`` for m query rows"""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != sol.weights.shape[0]:
        raise DimensionError(
            "Query features have shape {}, ridge weights expect {} columns"
            .format(features.shape, sol.weights.shape[0]))
    return features @ sol.weights


def _softmax_entropy(pred: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    logp = log_softmax(pred, axis=1)
    p = np.exp(logp)
    return p, logp, -np.sum(p * logp, axis=1)


def validation_loss(pred: np.ndarray, targets: np.ndarray, gamma_ent: float) -> float:
    """Mean squared discrepancy plus weighted entropy of softmax(pred).

    :param pred: N_v x c ridge predictions
    :param targets: N_v x c one-hot clean labels
    """
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != np.shape(targets):
        raise DimensionError(
            "Predictions {} and targets {} differ in shape"
            .format(pred.shape, np.shape(targets)))
    sq = np.sum((pred - targets) ** 2, axis=1)
    if gamma_ent:
        sq = sq + gamma_ent * _softmax_entropy(pred)[2]
    return float(np.mean(sq))


def _loss_grad_pred(pred, targets, gamma_ent) -> Tuple[float, np.ndarray]:
    n_val = pred.shape[0]
    diff = pred - targets
    loss_rows = np.sum(diff ** 2, axis=1)
    grad = 2.0 * diff
    if gamma_ent:
        p, logp, entropy = _softmax_entropy(pred)
        loss_rows = loss_rows + gamma_ent * entropy
        # dH/dz = -p (log p + H)
        grad -= gamma_ent * p * (logp + entropy[:, None])
    return float(np.mean(loss_rows)), grad / n_val


def softmax_backward(soft: np.ndarray, grad_soft: np.ndarray) -> np.ndarray:
    """Pulls a gradient through a row-wise softmax given its output"""
    return soft * (grad_soft - np.sum(grad_soft * soft, axis=1, keepdims=True))


def loss_and_gradient(features: np.ndarray, logits: np.ndarray,
                      val: CleanValidationSet, cfg: IpcConfig,
                      val_features: np.ndarray=None) -> Tuple[float, np.ndarray]:
    """Validation loss of the batch's ridge fit and its gradient w.r.t. logits.

    :param val_features: validation features to use instead of
        ``val.features`` (e.g. with a bias column appended)
    :returns: (loss, b x c gradient)
    """
    if val_features is None:
        val_features = val.features.values
    features = np.asarray(features, dtype=np.float64)
    if val_features.shape[1] != features.shape[1]:
        raise DimensionError(
            "Training features have {} columns, validation features {}"
            .format(features.shape[1], val_features.shape[1]))
    if val.classes != np.shape(logits)[1]:
        raise DimensionError("Validation labels and logits disagree on classes")
    sol = ridge_fit(features, logits, cfg.alpha, cfg.lam, cfg.gram_scale)
    pred = ridge_predict(sol, val_features)
    loss, grad_pred = _loss_grad_pred(pred, val.labels, cfg.gamma_ent)
    grad_soft = sol.scale * (features @ cho_solve(sol.factor, val_features.T @ grad_pred))
    soft = softmax_rows(logits, cfg.alpha)
    grad = cfg.alpha * softmax_backward(soft, grad_soft)
    return loss, grad


def label_gradient(features: np.ndarray, logits: np.ndarray,
                   val: CleanValidationSet, cfg: IpcConfig) -> np.ndarray:
    """Hypergradient of the validation loss w.r.t. the batch label logits"""
    return loss_and_gradient(features, logits, val, cfg)[1]


def ipc_step(logits: np.ndarray, grad: np.ndarray, eta_i: float) -> np.ndarray:
    """One gradient step ``Y - eta_i * grad`` on the batch logits

    :raises: NumericError if the gradient is not finite
    """
    if np.shape(logits) != np.shape(grad):
        raise DimensionError("Logits and gradient differ in shape")
    if eta_i < 0:
        raise InvalidSpecError("eta_i cannot be negative")
    if not np.all(np.isfinite(grad)):
        raise NumericError("Non-finite label gradient")
    return np.asarray(logits, dtype=np.float64) - eta_i * np.asarray(grad)
