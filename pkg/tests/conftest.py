"""
Pytest configuration and shared fixtures.
"""

import math
import os
import sys
from fractions import Fraction

import pytest

# Add src to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))

from nbmc import models


def negbin_pmf_exact(n: int, N: int, p: Fraction) -> Fraction:
    """Pr[n trials for the N-th occurrence] as an exact rational."""
    return math.comb(n - 1, N - 1) * p**N * (1 - p) ** (n - N)


def exact_confidence_oracle(N: int, p: Fraction, mu1: Fraction, mu2: Fraction) -> Fraction:
    """Brute-force Pr[n1 <= n <= n2] with rational arithmetic throughout."""
    n1 = math.ceil(Fraction(N - 1) / (p * mu1))
    n2 = math.floor(Fraction(N - 1) * mu2 / p)
    return sum((negbin_pmf_exact(n, N, p) for n in range(max(n1, N), n2 + 1)), Fraction(0))


@pytest.fixture
def store_url(tmp_path):
    """A fresh sqlite session store for one test."""
    url = f"sqlite:///{tmp_path / 'sessions.db'}"
    models.init_db(url)
    yield url
    models.engine.dispose()


@pytest.fixture
def ones_file(tmp_path):
    """Write a replay file of '1' lines; returns a factory taking the line count."""

    def _write(count: int, name: str = "ones.txt"):
        path = tmp_path / name
        path.write_text("\n".join(["1"] * count) + "\n")
        return path

    return _write


class CountingSource:
    """Wraps a list of 0/1 outcomes and counts how many were pulled."""

    def __init__(self, outcomes):
        from nbmc.models import SourceKind
        from nbmc.sources import Outcome

        self.kind = SourceKind.REPLAY
        self._outcomes = list(outcomes)
        self._outcome = Outcome
        self.pulled = 0

    def next_outcome(self):
        if self.pulled >= len(self._outcomes):
            return self._outcome.EXHAUSTED
        value = self._outcomes[self.pulled]
        self.pulled += 1
        return self._outcome.OCCURRED if value else self._outcome.NOT_OCCURRED


@pytest.fixture
def counting_source():
    return CountingSource


@pytest.fixture
def confidence_oracle():
    return exact_confidence_oracle


@pytest.fixture
def negbin_pmf_oracle():
    return negbin_pmf_exact
