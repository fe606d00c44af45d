"""
.. module:: datamodel
   :platform: Unix, Windows
   :synopsis: Feature and label tensors, file formats, label conversions

.. moduleauthor:: purelabel contributors

Label logits are stored unconstrained; any consumer sees either the
row-softmax of ``alpha * Y`` (:func:`effective_labels`) or its argmax
(:func:`hard_labels`).
"""

import csv
import struct
from dataclasses import dataclass
from enum import Enum, unique
from pathlib import Path

import numpy as np
from scipy.special import softmax

from .errors import DimensionError, FeatureFormatError, InvalidSpecError

#: Magic bytes opening a binary feature file
MAGIC = b"DMLPFEAT"
#: Binary format version written and accepted
FORMAT_VERSION = 1
# magic, u32 version, u64 rows, u32 dim
_HEADER = struct.Struct("<8sIQI")


@unique
class FeatureFormat(Enum):
    """On-disk feature encodings"""
    BINARY = "binary"
    CSV = "csv"

    @classmethod
    def for_path(cls, path) -> "FeatureFormat":
        """Guesses the format from a file suffix (``.csv`` or binary)"""
        return cls.CSV if str(path).lower().endswith(".csv") else cls.BINARY


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """N x d matrix of frozen embeddings, one row per sample."""
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values, np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(
                "FeatureMatrix must be a non-empty 2-D matrix, got shape {}"
                .format(arr.shape))
        if not np.all(np.isfinite(arr)):
            raise InvalidSpecError("FeatureMatrix entries must be finite")
        object.__setattr__(self, "values", arr)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def take(self, indices) -> "FeatureMatrix":
        """Returns the sub-matrix of the given rows"""
        return FeatureMatrix(self.values[np.asarray(indices)])


@dataclass(frozen=True, eq=False)
class HardLabels:
    """Length-N sequence of class indices in ``[0, classes)``."""
    values: np.ndarray
    classes: int

    def __post_init__(self):
        arr = _frozen(self.values, np.int64)
        if arr.ndim != 1:
            raise DimensionError("HardLabels must be one-dimensional")
        if self.classes < 1:
            raise InvalidSpecError("HardLabels need at least one class")
        if arr.size and (arr.min() < 0 or arr.max() >= self.classes):
            raise InvalidSpecError(
                "Class indices must lie in [0, {})".format(self.classes))
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "classes", int(self.classes))

    def __len__(self) -> int:
        return self.values.shape[0]

    def take(self, indices) -> "HardLabels":
        return HardLabels(self.values[np.asarray(indices)], self.classes)

    def one_hot(self) -> np.ndarray:
        """Returns the N x classes one-hot matrix"""
        out = np.zeros((len(self), self.classes))
        out[np.arange(len(self)), self.values] = 1.0
        return out


@dataclass(frozen=True, eq=False)
class LabelLogits:
    """N x c label logits; the optimization variable of purification."""
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values, np.float64)
        if arr.ndim != 2:
            raise DimensionError("LabelLogits must be a 2-D matrix")
        if not np.all(np.isfinite(arr)):
            raise InvalidSpecError("LabelLogits entries must be finite")
        object.__setattr__(self, "values", arr)

    @property
    def classes(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class CleanValidationSet:
    """Trusted samples: features plus one-hot labels."""
    features: FeatureMatrix
    labels: np.ndarray

    def __post_init__(self):
        labels = _frozen(self.labels, np.float64)
        if labels.ndim != 2 or labels.shape[0] != self.features.rows:
            raise DimensionError(
                "Validation labels must be {} one-hot rows, got shape {}"
                .format(self.features.rows, labels.shape))
        ones = np.count_nonzero(labels == 1.0, axis=1)
        zeros = np.count_nonzero(labels == 0.0, axis=1)
        if np.any(ones != 1) or np.any(ones + zeros != labels.shape[1]):
            raise InvalidSpecError("Validation label rows must be one-hot")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_hard(cls, features: FeatureMatrix, labels: HardLabels):
        return cls(features, labels.one_hot())

    @property
    def classes(self) -> int:
        return self.labels.shape[1]

    def __len__(self) -> int:
        return self.features.rows

    def take(self, indices) -> "CleanValidationSet":
        indices = np.asarray(indices)
        return CleanValidationSet(
            self.features.take(indices), self.labels[indices])


# Feature files

def write_features(matrix, path, fmt: FeatureFormat=FeatureFormat.BINARY):
    """Writes a matrix (FeatureMatrix or ndarray) to disk.

    The binary format stores little-endian f32 values, so values that are
    not f32-representable are rounded.
    """
    values = getattr(matrix, "values", matrix)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError("Only 2-D matrices can be written")
    path = Path(path)
    if fmt is FeatureFormat.CSV:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            for row in values:
                writer.writerow(repr(float(v)) for v in row)
        return
    rows, dim = values.shape
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, rows, dim))
        fh.write(values.astype("<f4").tobytes(order="C"))


def load_features(path, fmt: FeatureFormat=FeatureFormat.BINARY) -> FeatureMatrix:
    """Loads a feature matrix.

    :param path: file to read
    :param FeatureFormat fmt: declared encoding
    :returns: FeatureMatrix with the declared shape
    :raises: FeatureFormatError naming the byte offset or line at fault
    """
    if fmt is FeatureFormat.CSV:
        return FeatureMatrix(_load_csv_matrix(path))
    return FeatureMatrix(_load_binary_matrix(path))


def _load_binary_matrix(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FeatureFormatError(
            "truncated header ({} of {} bytes)".format(len(data), _HEADER.size),
            path=path, offset=len(data))
    magic, version, rows, dim = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FeatureFormatError("bad magic {!r}".format(magic), path=path, offset=0)
    if version != FORMAT_VERSION:
        raise FeatureFormatError(
            "unsupported version {}".format(version), path=path, offset=8)
    if rows < 1 or dim < 1:
        raise FeatureFormatError(
            "empty shape ({}, {})".format(rows, dim), path=path, offset=12)
    expected = rows * dim * 4
    payload = len(data) - _HEADER.size
    if payload != expected:
        raise FeatureFormatError(
            "payload holds {} bytes, header declares {} x {} f32 ({} bytes)"
            .format(payload, rows, dim, expected),
            path=path, offset=_HEADER.size + min(payload, expected))
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise FeatureFormatError(
            "non-finite value", path=path, offset=_HEADER.size + 4 * int(bad[0]))
    return values.reshape(rows, dim).astype(np.float64)


def _load_csv_matrix(path) -> np.ndarray:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            try:
                row = [float(cell) for cell in record]
            except ValueError:
                raise FeatureFormatError("not a number", path=path, line=lineno)
            if not all(np.isfinite(row)):
                raise FeatureFormatError("non-finite value", path=path, line=lineno)
            if rows and len(row) != len(rows[0]):
                raise FeatureFormatError(
                    "expected {} columns, found {}".format(len(rows[0]), len(row)),
                    path=path, line=lineno)
            rows.append(row)
    if not rows:
        raise FeatureFormatError("no rows", path=path, line=1)
    return np.array(rows, dtype=np.float64)


# Label files

def write_labels(labels: HardLabels, path):
    """Writes one decimal class index per line"""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.writelines("{}\n".format(int(v)) for v in labels.values)


def load_labels(path, classes: int=None) -> HardLabels:
    """Reads one decimal class index per line.

    :param int classes: class count; inferred as ``max + 1`` when omitted
    :raises: FeatureFormatError
    """
    values = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            # str.isdigit also accepts superscripts and other non-ASCII digits
            if not (text.isascii() and text.isdigit()):
                raise FeatureFormatError(
                    "expected a class index, found {!r}".format(text),
                    path=path, line=lineno)
            value = int(text)
            if classes is not None and value >= classes:
                raise FeatureFormatError(
                    "class index {} out of range for {} classes".format(value, classes),
                    path=path, line=lineno)
            values.append(value)
    if not values:
        raise FeatureFormatError("no labels", path=path, line=1)
    if classes is None:
        classes = max(values) + 1
    return HardLabels(np.array(values), classes)


def load_onehot_csv(path) -> HardLabels:
    """Reads validation labels stored as one-hot CSV rows"""
    matrix = _load_csv_matrix(path)
    for lineno, row in enumerate(matrix, start=1):
        if np.count_nonzero(row == 1.0) != 1 or np.count_nonzero(row) != 1:
            raise FeatureFormatError("row is not one-hot", path=path, line=lineno)
    return HardLabels(matrix.argmax(axis=1), matrix.shape[1])


def load_any_labels(path, classes: int=None) -> HardLabels:
    """Reads either label format, picking one-hot CSV when the first line has commas"""
    with Path(path).open(encoding="utf-8") as fh:
        first = fh.readline()
    if "," in first:
        labels = load_onehot_csv(path)
        if classes is not None and labels.classes != classes:
            raise FeatureFormatError(
                "one-hot width {} != {} classes".format(labels.classes, classes),
                path=path, line=1)
        return labels
    return load_labels(path, classes)


# Conversions

def normalize_features(features: FeatureMatrix) -> FeatureMatrix:
    """Scales every row to unit l2 norm; zero rows are left as they are"""
    norms = np.linalg.norm(features.values, axis=1, keepdims=True)
    return FeatureMatrix(features.values / np.where(norms > 0, norms, 1.0))


def add_bias_column(values: np.ndarray) -> np.ndarray:
    """Appends a constant-1 column to a feature matrix"""
    values = np.asarray(values, dtype=np.float64)
    return np.hstack([values, np.ones((values.shape[0], 1))])


def init_logits(labels: HardLabels, scale: float=1.0) -> LabelLogits:
    """One-hot label logits, multiplied by ``scale``"""
    return LabelLogits(labels.one_hot() * scale)


def softmax_rows(values: np.ndarray, alpha: float=1.0) -> np.ndarray:
    """Row-wise softmax of ``alpha * values`` (max-subtracted)"""
    return softmax(alpha * np.asarray(values, dtype=np.float64), axis=1)


def effective_labels(logits: LabelLogits, alpha: float) -> np.ndarray:
    """Soft labels ``softmax(alpha * Y)`` row by row.

    :raises: InvalidSpecError if alpha is not positive
    """
    if not alpha > 0:
        raise InvalidSpecError("alpha must be positive")
    return softmax_rows(logits.values, alpha)


def hard_labels(logits: LabelLogits) -> HardLabels:
    """Row argmax of the logits; ties go to the lowest class index"""
    return HardLabels(np.argmax(logits.values, axis=1), logits.classes)
