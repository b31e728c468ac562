"""Exception hierarchy shared by every stage of the generator."""


class QrngError(Exception):
    """Base class for all errors raised by :mod:`lpnqrng`."""


class ParameterError(QrngError, ValueError):
    """An argument is out of its admissible range."""


class DataError(QrngError, ValueError):
    """Input data is malformed (non-finite samples, wrong length...)."""


class DegenerateInputError(DataError):
    """Input has zero variance where a normalised statistic is required."""


class DesignError(QrngError):
    """A filter specification cannot be met by the realised design."""


class UnboundedBandError(QrngError):
    """A -3 dB band runs into the edge of the spectrum."""


class NoFlatAreaError(QrngError):
    """No band satisfies the clearance and flatness criteria."""


class NegativeQuantumVarianceError(QrngError):
    """The electrical-noise variance exceeds the measured variance."""


class EntropyDeficitError(QrngError):
    """An extraction plan would produce zero or fewer output bits."""


class StageError(QrngError):
    """Wraps an error raised inside one pipeline stage.

    The ``stage`` attribute names the failing stage and ``exit_code`` is the
    process exit status the command line uses for it.
    """

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")

    @property
    def exit_code(self):
        from .pipeline import STAGE_EXIT_CODES

        return STAGE_EXIT_CODES.get(self.stage, 1)
