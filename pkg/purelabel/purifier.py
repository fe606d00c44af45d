"""
.. module:: purifier
   :platform: Unix, Windows
   :synopsis: Label purification loop and its correction report

.. moduleauthor:: purelabel contributors

Each iteration takes one shuffled batch: the ridge hypergradient step
corrects that batch's label logits, then the accompanying classifier trains
on the freshly corrected soft labels. Every ``period`` iterations the whole
label matrix is blended with the classifier's logits.
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from enum import Enum, unique
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .datamodel import (
    CleanValidationSet, FeatureMatrix, HardLabels, LabelLogits, add_bias_column,
    hard_labels, init_logits, normalize_features, softmax_rows,
)
from .eac import (
    AdamState, EacConfig, LinearClassifier, classifier_forward, eac_label_update,
    eac_train_step,
)
from .errors import DimensionError, InvalidSpecError, NumericError
from .ipc import IpcConfig, ipc_step, loss_and_gradient
from .noise import label_accuracy
from .rng import Stream, check_seed, make_rng

logger = logging.getLogger(__name__)

#: Version of the JSON-lines report schema
REPORT_SCHEMA = 1


@unique
class CorrectionMode(Enum):
    """Which correctors update the labels"""
    FULL = "full"
    IPC_ONLY = "ipc_only"
    EAC_ONLY = "eac_only"

    @property
    def uses_ipc(self) -> bool:
        return self is not CorrectionMode.EAC_ONLY

    @property
    def uses_eac(self) -> bool:
        return self is not CorrectionMode.IPC_ONLY


@dataclass
class PurifierConfig:
    """Everything that controls one purification run.

    ``deterministic`` is not read by :func:`purify`; the command line uses it to
    pin the BLAS thread pools to one thread before numpy loads.
    """
    ipc: IpcConfig = field(default_factory=IpcConfig)
    eac: EacConfig = field(default_factory=EacConfig)
    batch_size: int = 256
    epochs: int = 100
    shuffle_seed: int = 0
    mode: CorrectionMode = CorrectionMode.FULL
    init_scale: float = 1.0
    normalize_features: bool = False
    val_fraction: float = 1.0
    deterministic: bool = True
    track_truth: Optional[HardLabels] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.ipc, dict):
            self.ipc = IpcConfig.from_dict(self.ipc)
        if isinstance(self.eac, dict):
            self.eac = EacConfig.from_dict(self.eac)
        self.mode = CorrectionMode(self.mode)
        if self.batch_size < 2:
            raise InvalidSpecError("batch_size must be at least 2")
        if self.epochs < 1:
            raise InvalidSpecError("epochs must be at least 1")
        if not self.init_scale > 0:
            raise InvalidSpecError("init_scale must be positive")
        if not 0.0 < self.val_fraction <= 1.0:
            raise InvalidSpecError("val_fraction must lie in (0, 1]")
        check_seed(self.shuffle_seed)

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "track_truth"}
        out["ipc"] = self.ipc.to_dict()
        out["eac"] = self.eac.to_dict()
        out["mode"] = self.mode.value
        return out

    @classmethod
    def from_dict(cls, values: dict) -> "PurifierConfig":
        return cls(**values)


@dataclass
class IterationRecord:
    """One purification iteration as it appears in the report."""
    p: int
    epoch: int
    val_loss: float
    grad_norm: float
    eac_update: bool
    acc: Optional[float] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.acc is None:
            del out["acc"]
        return out


@dataclass
class CorrectionReport:
    """Per-iteration records plus a run summary."""
    records: List[IterationRecord] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def tracked(self) -> bool:
        return "initial_accuracy" in self.summary

    def __len__(self) -> int:
        return len(self.records)


def _prepare_features(features: np.ndarray, cfg: PurifierConfig) -> np.ndarray:
    if cfg.normalize_features:
        features = normalize_features(FeatureMatrix(features)).values
    if cfg.ipc.bias_feature:
        features = add_bias_column(features)
    return features


def purify(features: FeatureMatrix, noisy: HardLabels, val: CleanValidationSet,
           cfg: PurifierConfig=None, track_truth: HardLabels=None
           ) -> Tuple[LabelLogits, HardLabels, CorrectionReport]:
    """Purifies noisy labels over frozen features.

    :param features: N_t x d training features
    :param noisy: N_t noisy labels; they seed the label logits
    :param val: clean validation set; only read
    :param cfg: run configuration (defaults when omitted)
    :param track_truth: ground truth, used for the report only
    :returns: (final label logits, their argmax labels, report)
    :raises: NumericError annotated with epoch and iteration
    """
    cfg = cfg or PurifierConfig()
    if track_truth is None:
        track_truth = cfg.track_truth
    n, c = len(noisy), noisy.classes
    if features.rows != n:
        raise DimensionError(
            "{} feature rows but {} labels".format(features.rows, n))
    if val.features.dim != features.dim:
        raise DimensionError("Training and validation feature dimensions differ")
    if val.classes != c:
        raise DimensionError("Validation labels have {} classes, training {}"
                             .format(val.classes, c))
    if track_truth is not None and len(track_truth) != n:
        raise DimensionError("track_truth must have one label per sample")

    train_x = _prepare_features(features.values, cfg)
    if cfg.val_fraction < 1.0:
        keep = max(1, int(round(cfg.val_fraction * len(val))))
        picked = make_rng(cfg.shuffle_seed, Stream.SPLIT).permutation(len(val))
        val = val.take(np.sort(picked[:keep]))
    val_x = _prepare_features(val.features.values, cfg)

    logits = np.array(init_logits(noisy, cfg.init_scale).values)
    if cfg.eac.init_std > 0:
        clf = LinearClassifier.random(train_x.shape[1], c, cfg.eac.init_std, cfg.eac.seed,
                                      cfg.eac.use_bias)
    else:
        clf = LinearClassifier.zeros(train_x.shape[1], c, cfg.eac.use_bias)
    opt_state = AdamState.zeros_like(clf)
    shuffle_rng = make_rng(cfg.shuffle_seed, Stream.SHUFFLE)
    val_rng = make_rng(cfg.shuffle_seed, Stream.VALIDATION)
    mode = cfg.mode
    report = CorrectionReport()

    def accuracy() -> Optional[float]:
        if track_truth is None:
            return None
        return label_accuracy(HardLabels(np.argmax(logits, axis=1), c), track_truth)

    initial_acc = accuracy()
    started = time.perf_counter()
    p = 0
    eac_updates = 0
    logger.info("Purifying %d samples (%d classes, %d dims) in %s mode for %d epochs",
                n, c, train_x.shape[1], mode.value, cfg.epochs)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            p += 1
            try:
                batch_val, batch_val_x = val, val_x
                if cfg.ipc.val_batch is not None and cfg.ipc.val_batch < len(val):
                    rows = val_rng.choice(len(val), cfg.ipc.val_batch, replace=False)
                    batch_val, batch_val_x = val.take(rows), val_x[rows]
                loss, grad = loss_and_gradient(
                    train_x[batch], logits[batch], batch_val, cfg.ipc, batch_val_x)
                if not np.isfinite(loss):
                    raise NumericError("Non-finite validation loss")
                if mode.uses_ipc:
                    logits[batch] = ipc_step(logits[batch], grad, cfg.ipc.eta_i)

                eac_update = False
                if mode.uses_eac:
                    targets = softmax_rows(logits[batch], cfg.ipc.alpha)
                    if cfg.eac.hard_targets:
                        targets = np.eye(c)[np.argmax(targets, axis=1)]
                    for _ in range(cfg.eac.steps_per_iter):
                        clf, opt_state = eac_train_step(
                            clf, train_x[batch], targets, opt_state, cfg.eac)
                    if p % cfg.eac.period == 0:
                        logits = eac_label_update(
                            logits, classifier_forward(clf, train_x),
                            cfg.eac.eta_e, cfg.eac.blend_space, cfg.ipc.alpha)
                        eac_update = True
                        eac_updates += 1
                        logger.debug("Label update %d at iteration %d",
                                     eac_updates, p)
            except NumericError as err:
                raise err.annotate(epoch, p)
            report.records.append(IterationRecord(
                p, epoch, loss, float(np.linalg.norm(grad)), eac_update, accuracy()))
            epoch_losses.append(loss)
        acc = accuracy()
        if acc is None:
            logger.info("Epoch %d: mean validation loss %.6f",
                        epoch, float(np.mean(epoch_losses)))
        else:
            logger.info("Epoch %d: mean validation loss %.6f, label accuracy %.4f",
                        epoch, float(np.mean(epoch_losses)), acc)

    final = LabelLogits(logits)
    summary = {
        "schema": REPORT_SCHEMA,
        "iterations": p,
        "epochs": cfg.epochs,
        "eac_updates": eac_updates,
        "final_val_loss": report.records[-1].val_loss,
        "wall_time": time.perf_counter() - started,
    }
    if track_truth is not None:
        summary["initial_accuracy"] = initial_acc
        summary["final_accuracy"] = accuracy()
    report.summary = summary
    return final, hard_labels(final), report


def save_report(report: CorrectionReport, path):
    """Writes one JSON object per iteration and a trailing summary object"""
    summary = dict(report.summary)
    summary.setdefault("schema", REPORT_SCHEMA)
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in report.records:
            fh.write(json.dumps(record.to_dict()) + "\n")
        fh.write(json.dumps({"summary": summary}) + "\n")


def load_report(path) -> CorrectionReport:
    """Reads a report written by :func:`save_report`

    :raises: InvalidSpecError on an unknown schema version
    """
    report = CorrectionReport()
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if "summary" in obj:
                report.summary = obj["summary"]
            else:
                report.records.append(IterationRecord(**obj))
    schema = report.summary.get("schema", REPORT_SCHEMA)
    if schema != REPORT_SCHEMA:
        raise InvalidSpecError("Unsupported report schema {}".format(schema))
    return report
