"""Shared helpers: error types and deterministic RNG derivation."""

import numpy as np


class ConfigError(Exception):
    """Invalid configuration (CLI exit code 2)."""


class DataError(Exception):
    """Invalid or inconsistent dataset (CLI exit code 3)."""


class NumericError(Exception):
    """Non-finite value produced during computation (CLI exit code 4)."""


def rng_for(*path: int) -> np.random.Generator:
    """Generator derived from an integer path such as (seed, purpose, epoch, ...).

    The same path always yields the same stream, independent of platform and
    of any other stream, which is what makes whole runs replayable.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(p) for p in path])))
