"""
Digit files of mathematical constants.

A digit file is plain text: digits of the alphabet, optionally broken by
spaces, tabs, line breaks and a decimal point. Parsing is strict; any other
byte raises :class:`~retstat.errors.BadCharacter` with its file offset.
"""

import logging
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from retstat.core import Alphabet, SymbolSequence, blockify, return_times
from retstat.errors import BadCharacter, EmptyFile, InvalidParameter, RetstatError
from retstat.statistics import ProcessModel, clt_statistic, entropy_estimate

logger = logging.getLogger(__name__)

SKIP_BYTES = b". \t\r\n"
SUPPORTED_ALPHABETS = (2, 10)


@dataclass(frozen=True)
class DigitFileSpec:
    path: Path
    alphabet_size: int = 10
    skip: bytes = SKIP_BYTES

    def __post_init__(self) -> None:
        object.__setattr__(self, "path", Path(self.path))
        if self.alphabet_size not in SUPPORTED_ALPHABETS:
            raise InvalidParameter(
                f"Digit files must be decimal or binary, got alphabet size {self.alphabet_size}"
            )


@dataclass(frozen=True)
class DigitFile:
    """Parsed digits with the byte offset each one was read from."""

    spec: DigitFileSpec
    sequence: SymbolSequence
    offsets: np.ndarray
    skipped: int

    @property
    def count(self) -> int:
        return len(self.sequence)


def parse_digits(data: bytes, alphabet_size: int = 10, skip: bytes = SKIP_BYTES) -> DigitFile:
    """Parse an in-memory digit buffer; see :func:`parse_digit_file`."""
    spec = DigitFileSpec(Path("<memory>"), alphabet_size, skip)
    return _parse(spec, data)


def parse_digit_file(spec: DigitFileSpec) -> DigitFile:
    """
    Read and parse the digit file described by ``spec``.

    Digits are kept in file order, including a leading integer digit such as
    the ``3`` of ``3.14159``.

    Raises:
        BadCharacter: On the first byte that is neither a digit of the
            alphabet nor a skip character.
        EmptyFile: If the file holds no digits.
    """
    data = spec.path.read_bytes()
    parsed = _parse(spec, data)
    logger.info(
        "Parsed %d digits from %s (%d bytes skipped)", parsed.count, spec.path, parsed.skipped
    )
    return parsed


def _parse(spec: DigitFileSpec, data: bytes) -> DigitFile:
    raw = np.frombuffer(data, dtype=np.uint8)
    skip_mask = np.isin(raw, np.frombuffer(spec.skip, dtype=np.uint8))
    values = raw.astype(np.int16) - ord("0")
    digit_mask = (values >= 0) & (values < spec.alphabet_size)
    bad = np.flatnonzero(~(skip_mask | digit_mask))
    if bad.size:
        position = int(bad[0])
        raise BadCharacter(position, int(raw[position]))
    offsets = np.flatnonzero(digit_mask)
    if offsets.size == 0:
        raise EmptyFile(f"No digits found in {spec.path}")
    sequence = SymbolSequence(Alphabet(spec.alphabet_size), values[offsets])
    return DigitFile(spec, sequence, offsets, int(raw.size - offsets.size))


# =============================================================================
# Segmentation
# =============================================================================


@dataclass(frozen=True)
class Segments:
    """
    Consecutive disjoint segments of a sequence and the discarded tail.

    Iterating yields the segments; ``extended(i)`` is segment ``i``
    continued to the end of the source, for return-time scans allowed to run
    past the segment boundary.
    """

    source: SymbolSequence
    length: int
    count: int

    @property
    def discarded(self) -> int:
        return len(self.source) - self.count * self.length

    @property
    def tail(self) -> SymbolSequence:
        return self.source.window(self.count * self.length, len(self.source))

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, index: int) -> SymbolSequence:
        if not 0 <= index < self.count:
            raise IndexError(index)
        start = index * self.length
        return self.source.window(start, start + self.length)

    def __iter__(self) -> Iterator[SymbolSequence]:
        return (self[i] for i in range(self.count))

    def extended(self, index: int) -> SymbolSequence:
        if not 0 <= index < self.count:
            raise IndexError(index)
        return self.source.window(index * self.length, len(self.source))


def segment(seq: SymbolSequence, segment_length: int) -> Segments:
    """
    Split ``seq`` into ``floor(n / segment_length)`` consecutive segments.

    The remainder is not part of any segment; its size is logged and
    available as ``Segments.discarded``.
    """
    if segment_length < 1:
        raise InvalidParameter(f"segment_length must be >= 1, got {segment_length}")
    count = len(seq) // segment_length
    result = Segments(seq, segment_length, count)
    if result.discarded:
        logger.info(
            "%d segments of %d symbols; %d trailing symbols discarded",
            count,
            segment_length,
            result.discarded,
        )
    return result


@dataclass
class SegmentResult:
    segment: int
    z: float | None
    h_hat: float | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def analyze_segments(
    segments: Segments,
    k: int,
    ell: int,
    model: ProcessModel | None = None,
    overrun: bool = False,
) -> list[SegmentResult]:
    """
    Statistic and entropy estimate of each segment.

    Return times may run across the whole segment, or with ``overrun`` on to
    the end of the source. A segment whose return times cannot be computed
    yields a row carrying the error instead of values.
    """
    if model is None:
        model = ProcessModel.equidistributed(segments.source.alphabet.size)
    h = model.entropy_bits
    results: list[SegmentResult] = []
    for i in range(len(segments)):
        data = segments.extended(i) if overrun else segments[i]
        try:
            blocks = blockify(data, ell)
            times = return_times(blocks, k, len(blocks))
            z = clt_statistic(times, ell, h)
            h_hat = entropy_estimate(times, ell)
        except RetstatError as exc:
            logger.warning("Segment %d: %s", i, exc)
            results.append(SegmentResult(i, None, None, str(exc)))
            continue
        results.append(SegmentResult(i, z, h_hat))
    return results
