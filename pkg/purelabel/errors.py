"""
.. module:: errors
   :platform: Unix, Windows
   :synopsis: Exception hierarchy

.. moduleauthor:: purelabel contributors

"""


class PurifyError(Exception):
    """Base class for every error raised by purelabel."""


class FeatureFormatError(PurifyError, ValueError):
    """
    A feature, label or logits file does not conform to its declared format.

    :param str msg: What is wrong with the file
    :param path: File being read
    :param int offset: Byte offset of the problem (binary files)
    :param int line: 1-based line number of the problem (text files)
    """

    def __init__(self, msg: str, path=None, offset: int=None, line: int=None):
        self.path = path
        self.offset = offset
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append("byte {}".format(offset))
        if line is not None:
            where.append("line {}".format(line))
        if where:
            msg = "{}: {}".format(", ".join(where), msg)
        super().__init__(msg)


class InvalidSpecError(PurifyError, ValueError):
    """A noise spec, mixture spec or config holds an out-of-range value."""


class DimensionError(PurifyError, ValueError):
    """Operand shapes disagree."""


class NumericError(PurifyError, ArithmeticError):
    """
    A loss or gradient became non-finite.

    ``epoch`` and ``iteration`` are filled in by the purification loop when
    the error escapes it.
    """

    epoch = None
    iteration = None

    def annotate(self, epoch: int, iteration: int) -> "NumericError":
        self.epoch = epoch
        self.iteration = iteration
        self.args = (
            "{} (epoch {}, iteration {})".format(
                self.args[0] if self.args else "", epoch, iteration),
        )
        return self


class SingularMatrixError(NumericError):
    """The ridge Gram matrix is not positive definite."""
