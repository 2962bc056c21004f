"""Exception hierarchy shared across the package.

Argument misuse (bad ranges, mismatched shapes of caller-supplied values)
raises plain ``ValueError``; the classes below mark failures of data,
graph structure, or numerics so callers can map them to exit codes.
"""


class NeurographError(Exception):
    """Base class for all package-specific failures."""


class DataError(NeurographError):
    """Input data violates a contract (NaN, negative weight, bad dimension)."""


class IngestError(DataError):
    """A cohort file is missing or unreadable; message names patient and band."""


class StructuralError(NeurographError):
    """Graph structure violates an invariant (label mismatch, missing self-loop)."""


class NumericError(NeurographError):
    """A numeric computation produced NaN/inf; message carries op provenance."""
