"""
Trial sources: where the engine reads Bernoulli outcomes from.

A source hands out one outcome at a time. The synthetic source draws from a
seeded numpy PCG64 generator in fixed-size blocks, so the outcome sequence is
a pure function of (seed, p, RNG_VERSION); it also offers ``consume_until``,
which reads the same sequence a block at a time.
"""

import enum
import logging
import sys
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional, Protocol, Sequence, Tuple, Union, runtime_checkable

import numpy as np

from . import config_base as config
from .exceptions import ParameterError, StreamFormatError
from .models import SourceKind
from .specfun import _as_int, _check_probability

logger = logging.getLogger(__name__)

SeedLike = Union[int, Sequence[int], np.random.SeedSequence]


class Outcome(enum.Enum):
    OCCURRED = 1
    NOT_OCCURRED = 0
    EXHAUSTED = -1


@runtime_checkable
class TrialSource(Protocol):
    kind: SourceKind

    def next_outcome(self) -> Outcome: ...


class SyntheticSource:
    """Bernoulli(p) outcomes: the k-th draw u_k of the generator is an occurrence iff u_k < p."""

    kind = SourceKind.SYNTHETIC
    rng_name = config.RNG_NAME
    rng_version = config.RNG_VERSION

    def __init__(self, p: float, seed: SeedLike, block_size: int = config.RNG_BLOCK_SIZE):
        self.p = _check_probability(p)
        self.seed = seed
        self.block_size = _as_int(block_size, "block_size")
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._block = np.empty(0, dtype=bool)
        self._cursor = 0
        self.position = 0

    def _refill(self) -> None:
        self._block = self._rng.random(self.block_size) < self.p
        self._cursor = 0

    def next_outcome(self) -> Outcome:
        if self._cursor == len(self._block):
            self._refill()
        hit = self._block[self._cursor]
        self._cursor += 1
        self.position += 1
        return Outcome.OCCURRED if hit else Outcome.NOT_OCCURRED

    def consume_until(self, occurrences: int, limit: Optional[int] = None) -> Tuple[int, int]:
        """
        Read outcomes until ``occurrences`` more events are seen or ``limit``
        outcomes have been read. Returns (outcomes read, events seen).
        """
        consumed = found = 0
        while found < occurrences and (limit is None or consumed < limit):
            if self._cursor == len(self._block):
                self._refill()
            window = self._block[self._cursor :]
            if limit is not None:
                window = window[: limit - consumed]
            hits = np.flatnonzero(window)
            need = occurrences - found
            if len(hits) >= need:
                take = int(hits[need - 1]) + 1
                found += need
            else:
                take = len(window)
                found += len(hits)
            self._cursor += take
            consumed += take
        self.position += consumed
        return consumed, found

    def skip(self, count: int) -> int:
        """Discard ``count`` outcomes; returns how many of them were events."""
        return self.consume_until(count + 1, limit=count)[1]


class LineSource:
    """
    Outcomes read from text, one per line: '1' for an occurrence, '0' for
    none. Blank lines and lines starting with '#' are skipped; anything else
    raises StreamFormatError with the line number.
    """

    def __init__(self, lines: Iterable[str], name: str = "<stream>", kind: SourceKind = SourceKind.STREAM):
        self.kind = kind
        self.name = name
        self._lines: Iterator[str] = iter(lines)
        self._line_number = 0
        self._handle: Optional[IO[str]] = None
        self.position = 0

    @classmethod
    def from_path(cls, path: Union[str, Path]) -> "LineSource":
        path = Path(path)
        try:
            handle = path.open("r", encoding="utf-8")
        except OSError as e:
            raise ParameterError(f"cannot open replay file {path}: {e}") from e
        source = cls(handle, name=str(path), kind=SourceKind.REPLAY)
        source._handle = handle
        return source

    @classmethod
    def from_stdin(cls) -> "LineSource":
        return cls(sys.stdin, name="<stdin>", kind=SourceKind.STREAM)

    def next_outcome(self) -> Outcome:
        for raw in self._lines:
            self._line_number += 1
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            if text == "1":
                self.position += 1
                return Outcome.OCCURRED
            if text == "0":
                self.position += 1
                return Outcome.NOT_OCCURRED
            raise StreamFormatError(self._line_number, text, self.name)
        return Outcome.EXHAUSTED

    def skip(self, count: int) -> int:
        events = 0
        for _ in range(count):
            outcome = self.next_outcome()
            if outcome is Outcome.EXHAUSTED:
                raise ParameterError(f"{self.name} ends after {self.position} outcomes, cannot skip {count}")
            events += outcome is Outcome.OCCURRED
        return events

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_synthetic_source(p: float, seed: SeedLike) -> SyntheticSource:
    return SyntheticSource(p, seed)


def make_replay_source(path: Union[str, Path]) -> LineSource:
    return LineSource.from_path(path)


def make_sequence_source(outcomes: Iterable[int]) -> LineSource:
    """In-memory source over 0/1 values, mostly for tests and notebooks."""
    return LineSource((str(int(v)) for v in outcomes), name="<sequence>", kind=SourceKind.REPLAY)
