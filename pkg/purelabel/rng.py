"""
.. module:: rng
   :platform: Unix, Windows
   :synopsis: Seeded random generators

.. moduleauthor:: purelabel contributors

Every random draw in purelabel goes through :func:`make_rng`. Generators are
Philox (counter-based) streams keyed by ``(seed, stream)``, so draws made for
one purpose never shift draws made for another.
"""

from enum import IntEnum, unique

import numpy as np

from .errors import InvalidSpecError

#: Largest accepted seed (u64)
MAX_SEED = 2 ** 64 - 1


@unique
class Stream(IntEnum):
    """Named sub-streams of one experiment seed"""
    MIXTURE_MEANS = 0
    MIXTURE_SAMPLES = 1
    NOISE = 2
    SHUFFLE = 3
    VALIDATION = 4
    SPLIT = 5
    TRAIN = 6
    CLASSIFIER_INIT = 7


def check_seed(seed: int) -> int:
    """Returns seed as int.

    :raises: InvalidSpecError if seed is not a u64
    """
    if isinstance(seed, bool) or int(seed) != seed:
        raise InvalidSpecError("Seed must be an integer, got {!r}".format(seed))
    seed = int(seed)
    if seed < 0 or seed > MAX_SEED:
        raise InvalidSpecError("Seed must fit in 64 unsigned bits")
    return seed


def make_rng(seed: int, stream: Stream) -> np.random.Generator:
    """Builds the generator for one named stream of a seed.

    :param int seed: experiment seed
    :param Stream stream: purpose of the draws
    :returns: numpy Generator over a Philox bit generator
    :raises: InvalidSpecError
    """
    entropy = [check_seed(seed), int(stream)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
