"""Error categories shared by the library and the CLI.

Each category carries the exit code `lumen_da.py` returns for it.
"""

from __future__ import annotations


class LumenDAError(Exception):
    category = "LumenDAError"
    exit_code = 1


class ConfigInvalid(LumenDAError):
    category = "ConfigInvalid"
    exit_code = 2


class IoError(LumenDAError):
    category = "IoError"
    exit_code = 3


class PhaseMismatch(LumenDAError):
    category = "PhaseMismatch"
    exit_code = 4


class MissingLabels(LumenDAError):
    category = "MissingLabels"
    exit_code = 5


class DegenerateInput(LumenDAError):
    category = "DegenerateInput"
    exit_code = 6


class ShapeMismatch(LumenDAError):
    category = "ShapeMismatch"
    exit_code = 7


class EmptyDataset(LumenDAError):
    category = "EmptyDataset"
    exit_code = 8


class CameraOutsideLumen(LumenDAError):
    category = "CameraOutsideLumen"
    exit_code = 9


class EmptyBatch(LumenDAError):
    category = "EmptyBatch"
    exit_code = 10


class RunLocked(LumenDAError):
    category = "RunLocked"
    exit_code = 11


class UsageError(LumenDAError):
    category = "UsageError"
    exit_code = 12


ERROR_TYPES = (
    ConfigInvalid,
    IoError,
    PhaseMismatch,
    MissingLabels,
    DegenerateInput,
    ShapeMismatch,
    EmptyDataset,
    CameraOutsideLumen,
    EmptyBatch,
    RunLocked,
    UsageError,
)


def exit_code_table() -> list[tuple[int, str]]:
    """(exit code, category) pairs, including success and unexpected failure."""
    rows = [(0, "success"), (1, "unexpected error")]
    rows += [(err.exit_code, err.category) for err in ERROR_TYPES]
    return rows
