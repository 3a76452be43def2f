"""Numeric settings shared by every solver and check in the package."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Settings:
    """One record of tolerances and caps, threaded to all callers.

    feasibility_tol   constraint satisfaction / pass-fail tolerance
    rank_tol          pivot magnitude below which a tableau entry is treated as zero
    duality_tol       allowed primal-dual objective gap on optimal solves
    equivalence_floor strict-positivity margin below which a measure is not
                      accepted as equivalent
    cut_tol           quadratic-constraint violation at which cutting planes stop
    max_enum          cap on enumerated scenario selections / stopping times
    max_cut_rounds    cap on cutting-plane iterations
    verify_lp         run feasibility + duality checks on every optimal solve
    """

    feasibility_tol: float = 1e-9
    rank_tol: float = 1e-12
    duality_tol: float = 1e-7
    equivalence_floor: float = 1e-12
    cut_tol: float = 1e-8
    max_enum: int = 10**6
    max_cut_rounds: int = 2000
    verify_lp: bool = True


DEFAULT = Settings()
