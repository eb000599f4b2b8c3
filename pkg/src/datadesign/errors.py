"""Error types shared across the toolkit.

User-facing failures carry a short machine-parseable code so the CLI and API
can map them to stable exit codes / HTTP statuses.
"""

from __future__ import annotations


class DataDesignError(Exception):
    """Base for all user-facing errors.

    Attributes:
        code: short kebab-case identifier, stable across releases.
        message: human-readable explanation.
    """

    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}")


class PlanError(DataDesignError):
    """Invalid plan construction or mutation."""


class RecordError(DataDesignError):
    """Invalid sample record or ingestion failure."""


class ModelError(DataDesignError):
    """Familiarity / reference-model fitting or scoring failure."""


class ResampleError(DataDesignError):
    """Resample plan construction or application failure."""


class StoreError(DataDesignError):
    """Project store failure."""
