"""Exception hierarchy for retstat.

Every error raised by the library derives from :class:`RetstatError`, which is
itself a ``ValueError`` so callers that already guard numeric input with
``except ValueError`` keep working.
"""

from collections.abc import Sequence


class RetstatError(ValueError):
    """Base class for all retstat errors."""


class InvalidParameter(RetstatError):
    """A scalar argument is outside its documented domain."""


class EmptyInput(RetstatError):
    """Fewer symbols than one block."""


class InvalidK(RetstatError):
    """The match-source count k is out of range for the block sequence."""


class AlphabetTooSmall(RetstatError):
    """Not enough distinct block values to assign distinct targets."""


class CensoredData(RetstatError):
    """A statistic was requested over return times that did not resolve."""

    def __init__(self, indices: Sequence[int]):
        self.indices = list(indices)
        shown = ", ".join(str(i) for i in self.indices[:10])
        more = f" (+{len(self.indices) - 10} more)" if len(self.indices) > 10 else ""
        super().__init__(f"Censored return times at indices: {shown}{more}")


class CorrectionInvalid(RetstatError):
    """The variance correction would make the denominator non-positive."""


class NonIntegrable(RetstatError):
    """A numeric tail did not converge under the supplied decay certificate."""


class InvalidMass(RetstatError):
    """Probabilities do not leave positive mass for the conditioned target."""


class InvalidArgs(RetstatError):
    """Arguments describe an impossible event."""


class BadCharacter(RetstatError):
    """A digit file contains a byte outside the alphabet and skip set."""

    def __init__(self, position: int, byte: int):
        self.position = position
        self.byte = byte
        super().__init__(
            f"Unexpected character {bytes([byte])!r} at byte offset {position}"
        )


class EmptyFile(RetstatError):
    """A digit file holds no symbols."""


class InvalidN(RetstatError):
    """Prefix length is invalid for the given sequence."""


class ZeroVariance(RetstatError):
    """The information variance is zero so no normalisation exists."""


class Unresolved(RetstatError):
    """A prefix-uniqueness length needs more data than is available."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"Prefix length at position {index} runs past the data end")


class CensoringBudgetExceeded(RetstatError):
    """Too many Monte Carlo trials ended with censored return times."""

    def __init__(self, failed: Sequence[int], trials: int):
        self.failed = list(failed)
        self.trials = trials
        super().__init__(
            f"{len(self.failed)} of {trials} trials censored "
            f"(first: {self.failed[:5]})"
        )
