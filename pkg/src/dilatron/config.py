"""Numerical thresholds used across the library.

The global tolerance can be overridden through the ``DILATRON_TOL``
environment variable; it is read at call time so that the CLI and tests
can change it without re-importing modules.
"""

from __future__ import annotations

import os

DEFAULT_TOL = 1e-8
EIG_CLAMP = 1e-12
RANK_TOL = 1e-10
STRICT_MARGIN = 1e-3
MAX_TOTAL_DIM = 4096
DEFAULT_TRUNCATION = 12


def default_tol() -> float:
    raw = os.environ.get("DILATRON_TOL")
    if raw:
        try:
            val = float(raw)
        except ValueError:
            return DEFAULT_TOL
        if val > 0 and val == val and val != float("inf"):
            return val
    return DEFAULT_TOL


def resolve_tol(tol: float | None) -> float:
    return default_tol() if tol is None else float(tol)
