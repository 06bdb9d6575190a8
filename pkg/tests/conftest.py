"""Shared fixtures for the gcelab test suite."""

from __future__ import annotations

import numpy as np
import pytest

from gcelab.sun import SunBasis, build_basis


@pytest.fixture(scope="session")
def bases() -> dict[int, SunBasis]:
    """One basis per rank used across the suite; construction is cheap but cached."""
    return {n: build_basis(n) for n in (2, 3, 4, 5)}


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (a + a.conj().T)
