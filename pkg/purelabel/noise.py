"""
.. module:: noise
   :platform: Unix, Windows
   :synopsis: Synthetic features, label-noise injection and label metrics

.. moduleauthor:: purelabel contributors

"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum, IntEnum, unique
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.spatial.distance import pdist

from .datamodel import FeatureMatrix, HardLabels
from .errors import DimensionError, InvalidSpecError
from .rng import Stream, check_seed, make_rng

logger = logging.getLogger(__name__)


@unique
class NoiseKind(Enum):
    """Label-noise protocols"""
    SYMMETRIC = "symmetric"
    ASYMMETRIC = "asymmetric"


@unique
class Cifar10Class(IntEnum):
    """CIFAR-10 class indices, for the conventional asymmetric map"""
    AIRPLANE = 0
    AUTOMOBILE = 1
    BIRD = 2
    CAT = 3
    DEER = 4
    DOG = 5
    FROG = 6
    HORSE = 7
    SHIP = 8
    TRUCK = 9


#: Similar-class flips used for asymmetric noise on CIFAR-10
CIFAR10_ASYMMETRIC_MAP = {
    Cifar10Class.TRUCK: Cifar10Class.AUTOMOBILE,
    Cifar10Class.BIRD: Cifar10Class.AIRPLANE,
    Cifar10Class.DEER: Cifar10Class.HORSE,
    Cifar10Class.CAT: Cifar10Class.DOG,
    Cifar10Class.DOG: Cifar10Class.CAT,
}


def _class_index(text: str) -> int:
    text = text.strip()
    if not (text.isascii() and text.isdigit()):
        raise ValueError(text)
    return int(text)


def parse_class_map(text: str) -> Dict[int, int]:
    """Parses ``"0:1,2:3"`` into ``{0: 1, 2: 3}``

    :raises: InvalidSpecError
    """
    mapping = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        source, sep, target = item.partition(":")
        try:
            if not sep:
                raise ValueError(item)
            source, target = _class_index(source), _class_index(target)
        except ValueError:
            raise InvalidSpecError("Bad class map entry {!r}".format(item))
        if source in mapping:
            raise InvalidSpecError("Class {} mapped twice".format(source))
        mapping[source] = target
    return mapping


@dataclass(frozen=True)
class NoiseSpec:
    """How to corrupt a label sequence."""
    kind: NoiseKind
    ratio: float
    seed: int = 0
    class_map: Optional[Dict[int, int]] = None
    exact_count: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not 0.0 <= self.ratio <= 1.0:
            raise InvalidSpecError("Noise ratio must lie in [0, 1]")
        check_seed(self.seed)
        if self.kind is NoiseKind.ASYMMETRIC:
            mapping = dict(CIFAR10_ASYMMETRIC_MAP if self.class_map is None
                           else self.class_map)
            mapping = {int(k): int(v) for k, v in mapping.items()}
            fixed = [k for k, v in mapping.items() if k == v]
            if fixed:
                raise InvalidSpecError(
                    "Class map sends class {} to itself".format(fixed[0]))
            object.__setattr__(self, "class_map", mapping)
        elif self.class_map:
            raise InvalidSpecError("class_map only applies to asymmetric noise")


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic Gaussian mixture with one cluster per class."""
    n: int
    dim: int
    classes: int
    separation: float
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2 or self.n < self.classes:
            raise InvalidSpecError("Need n >= classes >= 2")
        if self.dim < 1:
            raise InvalidSpecError("dim must be at least 1")
        if not self.separation > 0:
            raise InvalidSpecError("separation must be positive")
        check_seed(self.seed)


def _cluster_means(spec: MixtureSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.dim >= spec.classes:
        # scaled simplex vertices under a random rotation
        q, r = np.linalg.qr(rng.standard_normal((spec.dim, spec.dim)))
        rotation = q * np.sign(np.diag(r))
        vertices = np.eye(spec.classes, spec.dim) * (spec.separation / np.sqrt(2.0))
        means = vertices @ rotation.T
    else:
        means = rng.standard_normal((spec.classes, spec.dim))
        spread = pdist(means).min()
        if spread == 0:
            raise InvalidSpecError("Could not place distinct cluster means")
        means *= spec.separation / spread
    closest = pdist(means).min()
    if closest < spec.separation:
        # a hair above 1 so rounding cannot undercut the separation
        means *= spec.separation / closest * (1 + 1e-12)
    return means


def gen_gaussian_mixture(spec: MixtureSpec) -> Tuple[FeatureMatrix, HardLabels]:
    """Draws a balanced, labelled Gaussian mixture.

    Cluster means sit at pairwise distance at least ``spec.separation``;
    samples are unit-variance isotropic around their class mean and class
    sizes differ by at most one.
    """
    means = _cluster_means(spec, make_rng(spec.seed, Stream.MIXTURE_MEANS))
    rng = make_rng(spec.seed, Stream.MIXTURE_SAMPLES)
    labels = rng.permutation(np.arange(spec.n) % spec.classes)
    features = means[labels] + rng.standard_normal((spec.n, spec.dim))
    logger.debug("Drew %d samples from a %d-class mixture in %d dims",
                 spec.n, spec.classes, spec.dim)
    return FeatureMatrix(features), HardLabels(labels, spec.classes)


def split_clean(features: FeatureMatrix, labels: HardLabels, n_holdout: int,
                seed: int):
    """Randomly separates ``n_holdout`` samples from the rest.

    :returns: ((rest features, rest labels), (holdout features, holdout labels))
    :raises: InvalidSpecError if the holdout would leave either side empty
    """
    if len(labels) != features.rows:
        raise DimensionError("Features and labels disagree in length")
    if not 0 < n_holdout < len(labels):
        raise InvalidSpecError(
            "Holdout size must lie in (0, {})".format(len(labels)))
    order = make_rng(seed, Stream.SPLIT).permutation(len(labels))
    holdout, rest = np.sort(order[:n_holdout]), np.sort(order[n_holdout:])
    return ((features.take(rest), labels.take(rest)),
            (features.take(holdout), labels.take(holdout)))


class NoiseInjector(ABC):
    """
    Abstract base class for label-noise protocols.
    """

    @staticmethod
    @abstractmethod
    def corrupt(labels: HardLabels, spec: NoiseSpec) -> HardLabels:
        """
        Returns a corrupted copy of labels; a pure function of
        (labels, spec).
        """
        ...

    @staticmethod
    def _flip_mask(eligible: np.ndarray, ratio: float, exact: bool,
                   rng: np.random.Generator) -> np.ndarray:
        if exact:
            candidates = np.flatnonzero(eligible)
            count = int(round(ratio * candidates.size))
            mask = np.zeros(eligible.shape, dtype=bool)
            mask[rng.permutation(candidates)[:count]] = True
            return mask
        return eligible & (rng.random(eligible.shape) < ratio)


class SymmetricNoise(NoiseInjector):

    @staticmethod
    def corrupt(labels: HardLabels, spec: NoiseSpec) -> HardLabels:
        """
        Each label flips with probability ``ratio`` to one of the other
        ``c - 1`` classes, chosen uniformly.
        """
        c = labels.classes
        if c < 2:
            raise InvalidSpecError("Symmetric noise needs at least two classes")
        rng = make_rng(spec.seed, Stream.NOISE)
        y = labels.values
        flip = NoiseInjector._flip_mask(
            np.ones(y.shape, dtype=bool), spec.ratio, spec.exact_count, rng)
        offsets = rng.integers(1, c, size=y.shape)
        return HardLabels(np.where(flip, (y + offsets) % c, y), c)


class AsymmetricNoise(NoiseInjector):

    @staticmethod
    def corrupt(labels: HardLabels, spec: NoiseSpec) -> HardLabels:
        """
        Each label whose class is in the class map flips to its mapped
        target with probability ``ratio``; other labels are untouched.
        """
        c = labels.classes
        targets = np.arange(c)
        for source, target in spec.class_map.items():
            if not (0 <= source < c and 0 <= target < c):
                raise InvalidSpecError(
                    "Class map entry {}->{} outside [0, {})".format(source, target, c))
            targets[source] = target
        y = labels.values
        rng = make_rng(spec.seed, Stream.NOISE)
        flip = NoiseInjector._flip_mask(
            targets[y] != y, spec.ratio, spec.exact_count, rng)
        return HardLabels(np.where(flip, targets[y], y), c)


#: Injector for each noise kind
NOISE_INJECTORS = {
    NoiseKind.SYMMETRIC: SymmetricNoise.corrupt,
    NoiseKind.ASYMMETRIC: AsymmetricNoise.corrupt,
}


def inject(labels: HardLabels, spec: NoiseSpec) -> HardLabels:
    """Corrupts labels according to spec"""
    noisy = NOISE_INJECTORS[spec.kind](labels, spec)
    logger.info("Injected %s noise at ratio %.3f: %.2f%% of labels changed",
                spec.kind.value, spec.ratio,
                100.0 * (1.0 - label_accuracy(noisy, labels)))
    return noisy


def inject_symmetric(labels: HardLabels, ratio: float, seed: int,
                     exact_count: bool=False) -> HardLabels:
    return inject(labels, NoiseSpec(NoiseKind.SYMMETRIC, ratio, seed,
                                    exact_count=exact_count))


def inject_asymmetric(labels: HardLabels, ratio: float,
                      class_map: Optional[Dict[int, int]], seed: int,
                      exact_count: bool=False) -> HardLabels:
    return inject(labels, NoiseSpec(NoiseKind.ASYMMETRIC, ratio, seed,
                                    class_map=class_map, exact_count=exact_count))


def label_accuracy(a: HardLabels, b: HardLabels) -> float:
    """Fraction of positions where the two label sequences agree

    :raises: DimensionError on a length mismatch
    """
    if len(a) != len(b):
        raise DimensionError(
            "Label sequences differ in length ({} vs {})".format(len(a), len(b)))
    if len(a) == 0:
        return 1.0
    return float(np.mean(a.values == b.values))
