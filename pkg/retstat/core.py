"""
Symbol sequences, non-overlapping blocks and return times.

Two families of return times are computed here:

* ``S_j``: the number of blocks scanned after block ``j`` until the same
  block value appears again (:func:`return_times`).
* ``R_j``: the waiting time after block ``k`` for a distinct target value
  ``b_j`` (:func:`modified_return_times`). Targets of indices that recur
  before ``k`` are re-drawn so all targets are distinct.

The public contract is 1-based: entry ``j`` refers to the ``j``-th block.
Arrays held on the result objects are 0-based and read-only.
"""

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from retstat.errors import (
    AlphabetTooSmall,
    CensoredData,
    EmptyInput,
    InvalidK,
    InvalidParameter,
)

logger = logging.getLogger(__name__)

BlockKey = int | bytes | tuple[int, ...]
KeyKind = Literal["int", "bigint", "raw"]

# Block spaces up to INT_KEY_LIMIT are encoded as int64 keys. The limit sits at
# 2^62 rather than 2^63 so that the base-A dot product in encode_blocks and the
# widest chunk in _int_chunk_width stay clear of int64 overflow. Larger spaces up
# to 128 bits fall back to Python ints in object arrays, and anything beyond
# keeps the raw symbol string. Keys compare equal exactly when blocks do on
# every path.
INT_KEY_LIMIT = 1 << 62
BIGINT_KEY_LIMIT = 1 << 128
# Small block spaces draw replacement targets from the explicit complement.
COMPLEMENT_DRAW_LIMIT = 1 << 16
MAX_BYTE_ALPHABET = 256


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# =============================================================================
# Alphabet and sequences
# =============================================================================


@dataclass(frozen=True)
class Alphabet:
    """Finite alphabet of ``size`` symbols, optionally with external characters.

    ``symbols[i]`` is the external character mapped to index ``i``.
    """

    size: int
    symbols: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.size < 2:  # noqa: PLR2004
            raise InvalidParameter(f"Alphabet size must be >= 2, got {self.size}")
        if self.symbols is not None:
            if len(self.symbols) != self.size:
                raise InvalidParameter(
                    f"Symbol table has {len(self.symbols)} entries for size {self.size}"
                )
            if len(set(self.symbols)) != self.size:
                raise InvalidParameter("Symbol table is not injective")

    @classmethod
    def decimal(cls) -> "Alphabet":
        return cls(10, tuple("0123456789"))

    @classmethod
    def binary(cls) -> "Alphabet":
        return cls(2, ("0", "1"))

    def index_of(self, char: str) -> int:
        """Map an external character to its symbol index."""
        if self.symbols is None:
            raise InvalidParameter("Alphabet has no symbol table")
        try:
            return self.symbols.index(char)
        except ValueError:
            raise InvalidParameter(f"Character {char!r} not in alphabet") from None


@dataclass(frozen=True, eq=False)
class SymbolSequence:
    """An immutable finite string over an :class:`Alphabet`."""

    alphabet: Alphabet
    symbols: np.ndarray

    def __post_init__(self) -> None:
        dtype = np.uint8 if self.alphabet.size <= MAX_BYTE_ALPHABET else np.int64
        arr = np.asarray(self.symbols)
        if arr.ndim != 1:
            raise InvalidParameter("Symbols must be a one-dimensional sequence")
        if arr.size:
            if not np.issubdtype(arr.dtype, np.integer):
                raise InvalidParameter(f"Symbols must be integers, got {arr.dtype}")
            lo, hi = int(arr.min()), int(arr.max())
            if lo < 0 or hi >= self.alphabet.size:
                raise InvalidParameter(
                    f"Symbols must lie in [0, {self.alphabet.size}), found [{lo}, {hi}]"
                )
        object.__setattr__(self, "symbols", _readonly(arr.astype(dtype, copy=True)))

    @classmethod
    def of(cls, symbols: Iterable[int], alphabet_size: int) -> "SymbolSequence":
        return cls(Alphabet(alphabet_size), np.fromiter(symbols, dtype=np.int64))

    @classmethod
    def from_text(cls, text: str, alphabet: Alphabet) -> "SymbolSequence":
        """Map each character of ``text`` through the alphabet's symbol table."""
        return cls(alphabet, np.array([alphabet.index_of(c) for c in text], dtype=np.int64))

    def __len__(self) -> int:
        return int(self.symbols.size)

    def window(self, start: int, stop: int) -> "SymbolSequence":
        """Symbols ``start..stop-1`` (0-based, half-open) as a new sequence."""
        return SymbolSequence(self.alphabet, self.symbols[start:stop])

    def tolist(self) -> list[int]:
        return [int(s) for s in self.symbols.tolist()]


# =============================================================================
# Block keys
# =============================================================================


def key_kind(alphabet_size: int, block_length: int) -> KeyKind:
    """Which canonical encoding blocks of this shape use."""
    space = alphabet_size**block_length
    if space <= INT_KEY_LIMIT:
        return "int"
    if space <= BIGINT_KEY_LIMIT:
        return "bigint"
    return "raw"


def _int_chunk_width(alphabet_size: int) -> int:
    width = 1
    while alphabet_size ** (width + 1) <= INT_KEY_LIMIT:
        width += 1
    return width


def encode_blocks(rows: np.ndarray, alphabet_size: int) -> np.ndarray:
    """
    Encode an ``(n, ell)`` array of symbols into canonical block keys.

    Keys are big-endian base-A integers, so key order is lexicographic block
    order on the integer paths.

    Args:
        rows: Integer array with one block per row.
        alphabet_size: Alphabet size A.

    Returns:
        int64 array, or object array of Python ints / bytes / tuples.
    """
    n, ell = rows.shape
    kind = key_kind(alphabet_size, ell)
    if kind == "int":
        powers = alphabet_size ** np.arange(ell - 1, -1, -1, dtype=np.int64)
        return rows.astype(np.int64) @ powers

    keys = np.empty(n, dtype=object)
    if kind == "bigint":
        keys[:] = 0
        width = _int_chunk_width(alphabet_size)
        for start in range(0, ell, width):
            part = rows[:, start : start + width]
            keys = keys * (alphabet_size ** part.shape[1]) + encode_blocks(
                part, alphabet_size
            ).astype(object)
        return keys

    if alphabet_size <= MAX_BYTE_ALPHABET:
        packed = rows.astype(np.uint8)
        for i in range(n):
            keys[i] = packed[i].tobytes()
    else:
        for i in range(n):
            keys[i] = tuple(rows[i].tolist())
    return keys


def decode_block(key: BlockKey, alphabet_size: int, block_length: int) -> tuple[int, ...]:
    """Inverse of :func:`encode_blocks` for a single key."""
    if isinstance(key, bytes):
        return tuple(key)
    if isinstance(key, tuple):
        return key
    value = int(key)
    digits = [0] * block_length
    for pos in range(block_length - 1, -1, -1):
        value, digits[pos] = divmod(value, alphabet_size)
    return tuple(digits)


@dataclass(frozen=True, eq=False)
class BlockSequence:
    """Non-overlapping ``block_length``-blocks of a source sequence."""

    alphabet: Alphabet
    block_length: int
    keys: np.ndarray
    source_length: int

    def __post_init__(self) -> None:
        if not self.keys.flags.writeable:
            return
        object.__setattr__(self, "keys", _readonly(self.keys))

    def __len__(self) -> int:
        return int(self.keys.size)

    @property
    def discarded(self) -> int:
        """Trailing source symbols that did not fill a block."""
        return self.source_length - len(self) * self.block_length

    @property
    def kind(self) -> KeyKind:
        return key_kind(self.alphabet.size, self.block_length)

    @property
    def space_size(self) -> int:
        """Number of possible block values, A**ell."""
        return self.alphabet.size**self.block_length

    def key(self, index: int) -> BlockKey:
        """Key of block ``index`` (1-based)."""
        return _as_python_key(self.keys[index - 1])

    def reconstruct(self, index: int) -> tuple[int, ...]:
        """Symbols of block ``index`` (1-based)."""
        return decode_block(self.key(index), self.alphabet.size, self.block_length)

    def concat(self, other: "BlockSequence") -> "BlockSequence":
        """Blocks of ``self`` followed by blocks of ``other``.

        The remainder of ``self`` (if any) is dropped from the joined source.
        """
        if (self.alphabet.size, self.block_length) != (
            other.alphabet.size,
            other.block_length,
        ):
            raise InvalidParameter("Cannot join block sequences of different shapes")
        joined = np.concatenate([self.keys, other.keys])
        return BlockSequence(
            self.alphabet,
            self.block_length,
            joined,
            len(self) * self.block_length + other.source_length,
        )


def _as_python_key(key: object) -> BlockKey:
    if isinstance(key, np.integer):
        return int(key)
    return key  # type: ignore[return-value]


def blockify(seq: SymbolSequence, block_length: int) -> BlockSequence:
    """
    Partition a sequence into non-overlapping blocks.

    Block ``i`` (1-based) holds symbols ``(i-1)*ell+1 .. i*ell``. Trailing
    symbols that do not fill a block are dropped and counted in
    :attr:`BlockSequence.discarded`.

    Raises:
        InvalidParameter: If ``block_length < 1``.
        EmptyInput: If the sequence is shorter than one block.
    """
    if block_length < 1:
        raise InvalidParameter(f"Block length must be >= 1, got {block_length}")
    n = len(seq)
    if n < block_length:
        raise EmptyInput(f"Need at least {block_length} symbols, got {n}")
    count = n // block_length
    rows = seq.symbols[: count * block_length].reshape(count, block_length)
    keys = encode_blocks(rows, seq.alphabet.size)
    blocks = BlockSequence(seq.alphabet, block_length, keys, n)
    if blocks.discarded:
        logger.debug("blockify: %d trailing symbols discarded", blocks.discarded)
    return blocks


# =============================================================================
# Occurrence index
# =============================================================================


def _next_occurrence(keys: np.ndarray) -> np.ndarray:
    n = keys.size
    nxt = np.full(n, -1, dtype=np.int64)
    if keys.dtype != object:
        order = np.argsort(keys, kind="stable")
        ordered = keys[order]
        same = ordered[1:] == ordered[:-1]
        nxt[order[:-1][same]] = order[1:][same]
        return nxt
    last: dict[object, int] = {}
    for i in range(n - 1, -1, -1):
        key = keys[i]
        nxt[i] = last.get(key, -1)
        last[key] = i
    return nxt


def next_occurrence(blocks: BlockSequence, limit: int | None = None) -> np.ndarray:
    """
    0-based index of the next block with the same value, or -1.

    Args:
        blocks: Block sequence.
        limit: Only the first ``limit`` blocks are indexed.
    """
    keys = blocks.keys if limit is None else blocks.keys[:limit]
    return _readonly(_next_occurrence(keys))


# =============================================================================
# Return times
# =============================================================================


@dataclass(frozen=True, eq=False)
class ReturnTimeSet:
    """Return times ``S_1..S_k`` with censoring metadata.

    ``times[j-1]`` is ``S_j`` or 0 when ``censored[j-1]`` is set.
    ``horizon_used[j-1]`` is the number of later blocks that were available
    to scan for index ``j``.
    """

    k: int
    horizon: int
    times: np.ndarray
    censored: np.ndarray
    horizon_used: np.ndarray

    @classmethod
    def from_values(
        cls, values: Sequence[int | None], horizon: int | None = None
    ) -> "ReturnTimeSet":
        """Build a set from explicit values; ``None`` marks a censored entry."""
        censored = np.array([v is None for v in values], dtype=bool)
        times = np.array([0 if v is None else int(v) for v in values], dtype=np.int64)
        if np.any(times[~censored] < 1):
            raise InvalidParameter("Return times must be >= 1")
        top = int(times.max()) if times.size else 1
        horizon = horizon if horizon is not None else max(top, 1)
        used = np.full(len(values), horizon, dtype=np.int64)
        return cls(
            len(values), horizon, _readonly(times), _readonly(censored), _readonly(used)
        )

    @property
    def entries(self) -> list[tuple[int, int | None, int]]:
        """``(j, S_j or None, horizon_used)`` for ``j = 1..k``."""
        rows = zip(
            self.times.tolist(),
            self.censored.tolist(),
            self.horizon_used.tolist(),
            strict=True,
        )
        return [
            (j + 1, None if c else int(t), int(h)) for j, (t, c, h) in enumerate(rows)
        ]

    @property
    def censored_indices(self) -> list[int]:
        return [int(i) + 1 for i in np.flatnonzero(self.censored)]

    @property
    def is_complete(self) -> bool:
        return not bool(self.censored.any())

    def values(self) -> np.ndarray:
        """Uncensored return times in index order."""
        return self.times[~self.censored]

    def require_complete(self) -> np.ndarray:
        """All return times as float64, or raise :class:`CensoredData`."""
        if not self.is_complete:
            raise CensoredData(self.censored_indices)
        return self.times.astype(np.float64)


def _check_k(k: int, n_blocks: int) -> None:
    if not 1 <= k <= n_blocks:
        raise InvalidK(f"k must lie in [1, {n_blocks}], got {k}")


def _check_horizon(horizon: int) -> None:
    if horizon < 1:
        raise InvalidParameter(f"Horizon must be >= 1, got {horizon}")


def return_times(blocks: BlockSequence, k: int, horizon: int) -> ReturnTimeSet:
    """
    Non-overlapping return times of the first ``k`` blocks.

    ``S_j`` is the least ``t >= 1`` with ``X_{j+t} = X_j``, searched over
    ``t <= horizon`` and within the sequence. Unresolved entries are
    censored.

    Raises:
        InvalidK: If ``k`` is not in ``[1, len(blocks)]``.
    """
    n = len(blocks)
    _check_k(k, n)
    _check_horizon(horizon)
    window = min(n, k + horizon)
    nxt = _next_occurrence(blocks.keys[:window])[:k]
    idx = np.arange(k, dtype=np.int64)
    gaps = nxt - idx
    censored = (nxt < 0) | (gaps > horizon)
    times = np.where(censored, 0, gaps)
    used = np.minimum(horizon, n - 1 - idx)
    if censored.any():
        logger.debug("return_times: %d of %d censored", int(censored.sum()), k)
    return ReturnTimeSet(
        k, horizon, _readonly(times), _readonly(censored), _readonly(used)
    )


def early_match_set(blocks: BlockSequence, k: int) -> frozenset[int]:
    """
    Indices ``i <= k`` (1-based) whose block does not recur within ``i+1..k``.

    Index ``k`` is always included.
    """
    _check_k(k, len(blocks))
    nxt = _next_occurrence(blocks.keys[:k])
    return frozenset(int(i) + 1 for i in np.flatnonzero(nxt < 0))


@dataclass(frozen=True, eq=False)
class ModifiedReturnSet:
    """Targets ``b_1..b_k`` and their waiting times after block ``k``."""

    k: int
    horizon: int
    early_free: frozenset[int]
    targets: tuple[BlockKey, ...]
    times: np.ndarray
    censored: np.ndarray
    rng_seed: int

    @property
    def entries(self) -> list[tuple[int, int | None]]:
        """``(j, R_j or None)`` for ``j = 1..k``."""
        return [
            (j + 1, None if c else int(t))
            for j, (t, c) in enumerate(
                zip(self.times.tolist(), self.censored.tolist(), strict=True)
            )
        ]

    @property
    def censored_indices(self) -> list[int]:
        return [int(i) + 1 for i in np.flatnonzero(self.censored)]

    @property
    def is_complete(self) -> bool:
        return not bool(self.censored.any())


def _draw_target(
    rng: np.random.Generator,
    alphabet_size: int,
    block_length: int,
    excluded: set[BlockKey],
) -> BlockKey:
    space = alphabet_size**block_length
    if space <= COMPLEMENT_DRAW_LIMIT and 2 * len(excluded) >= space:
        available = sorted(set(range(space)) - excluded)  # type: ignore[arg-type]
        return available[int(rng.integers(len(available)))]
    while True:
        row = rng.integers(0, alphabet_size, size=(1, block_length))
        key = _as_python_key(encode_blocks(row, alphabet_size)[0])
        if key not in excluded:
            return key


def _first_positions(post: np.ndarray, targets: list[BlockKey]) -> np.ndarray:
    """0-based first position of each target in ``post``, or -1."""
    out = np.full(len(targets), -1, dtype=np.int64)
    if post.size == 0:
        return out
    if post.dtype != object:
        uniq, first = np.unique(post, return_index=True)
        wanted = np.array(targets, dtype=np.int64)
        pos = np.searchsorted(uniq, wanted)
        clipped = np.minimum(pos, uniq.size - 1)
        hit = uniq[clipped] == wanted
        out[hit] = first[clipped[hit]]
        return out
    first_seen: dict[object, int] = {}
    for t in range(post.size - 1, -1, -1):
        first_seen[post[t]] = t
    for j, target in enumerate(targets):
        out[j] = first_seen.get(target, -1)
    return out


def modified_return_times(
    blocks: BlockSequence, k: int, horizon: int, seed: int
) -> ModifiedReturnSet:
    """
    Waiting times after block ``k`` for distinct targets ``b_1..b_k``.

    For indices without an early match ``b_i`` is the block itself. The
    remaining indices are processed in increasing order and each draws a
    uniformly random block value not yet used as a target, seeded by
    ``seed``. ``R_j`` is the least ``t >= 1`` with ``X_{k+t} = b_j``.

    Raises:
        InvalidK: If ``k`` is not in ``[1, len(blocks)]``.
        AlphabetTooSmall: If fewer than ``k`` block values exist.
    """
    n = len(blocks)
    _check_k(k, n)
    _check_horizon(horizon)
    if blocks.space_size < k:
        raise AlphabetTooSmall(
            f"Only {blocks.space_size} block values for k={k} distinct targets"
        )

    head = blocks.keys[:k].tolist()
    free = _next_occurrence(blocks.keys[:k]) < 0
    excluded: set[BlockKey] = {head[i] for i in range(k) if free[i]}
    rng = np.random.default_rng(seed)
    targets: list[BlockKey] = []
    for i in range(k):
        if free[i]:
            targets.append(head[i])
            continue
        drawn = _draw_target(rng, blocks.alphabet.size, blocks.block_length, excluded)
        excluded.add(drawn)
        targets.append(drawn)

    post = blocks.keys[k : k + horizon]
    first = _first_positions(post, targets)
    censored = first < 0
    times = np.where(censored, 0, first + 1)
    return ModifiedReturnSet(
        k=k,
        horizon=horizon,
        early_free=frozenset(int(i) + 1 for i in np.flatnonzero(free)),
        targets=tuple(targets),
        times=_readonly(times),
        censored=_readonly(censored),
        rng_seed=seed,
    )
