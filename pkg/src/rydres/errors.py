"""Typed error hierarchy shared by the library and the CLI.

Each error class carries the process exit code the CLI maps it to, so the
mapping lives in one place instead of being scattered over the subcommands.
"""

from __future__ import annotations


class RydresError(Exception):
    """Base class for all errors raised on purpose by this package."""

    exit_code = 1


class ConfigError(RydresError):
    """Malformed or physically invalid configuration (bad JSON, bad units,
    violated program invariants, unknown keys)."""

    exit_code = 2


class DataError(RydresError):
    """Unreadable or inconsistent input data (IDX/PGM/CSV parse failures,
    shape mismatches, label problems)."""

    exit_code = 3


class NumericalError(RydresError):
    """Numerical contract violation (norm drift, non-convergence,
    non-finite values where finite ones are required)."""

    exit_code = 4
