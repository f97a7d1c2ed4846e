"""Hitting-time functionals as cone equations over a finite kernel.

Three functionals of the first return time tau_A^+ = inf{n >= 1 : X_n in A}:

* return probability     u = P_x(tau_A^+ < inf),  u = ∫_{A^c} u dP + P(., A)
* expected return time   V = ∫_{A^c} V dP + L(., A)
* geometric sum          V = r ∫_{A^c} V dP + 1,  V = E_x sum_{n<tau} r^n

The return probability is solved first and substituted as the forcing of the
second equation rather than assuming L = 1: transient models are in scope
and there E tau 1{tau<inf} differs from E tau.  All three are pure functions
of immutable inputs; independent targets may be solved concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .kernel import FiniteKernel, Region
from .minsol import (
    DEFAULT_CAP,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    ConeEquation,
    MinSolResult,
    solve_minimal,
)

__all__ = [
    "HittingSpec",
    "return_probability",
    "expected_return_time",
    "geometric_sum",
    "geometric_moment",
]

RETURN_PROBABILITY = "return-probability"
EXPECTED_RETURN_TIME = "expected-return-time"
GEOMETRIC_SUM = "geometric-sum"


@dataclass(frozen=True)
class HittingSpec:
    """A hitting-time computation request on a discretized kernel."""

    kernel: FiniteKernel
    target: Region
    functional: str = EXPECTED_RETURN_TIME
    rate: float = 1.0

    def __post_init__(self):
        if not np.any(self.kernel.grid.mask(self.target)):
            raise ValueError("target region resolves to no grid state")
        if self.functional == GEOMETRIC_SUM and self.rate <= 1.0:
            raise ValueError("geometric-sum needs rate r > 1")


def _target_forcing(kernel: FiniteKernel, target: Region) -> np.ndarray:
    """Per-row in-grid mass landing in the target: P(x, A) on the grid."""
    mask = kernel.grid.mask(target).astype(float)
    return np.asarray(kernel.matrix @ mask).ravel()


def return_probability(
    kernel: FiniteKernel,
    target: Region,
    tol: float = DEFAULT_TOL,
    cap: float = DEFAULT_CAP,
    max_iter: int = DEFAULT_MAX_ITER,
) -> MinSolResult:
    """Minimal solution for L(x, A) = P_x(tau_A^+ < inf) on the grid.

    Values lie in [0, 1]; mass escaping the grid counts as never returning,
    so grid values are lower bounds of the full-space return probability.
    """
    eq = ConeEquation(
        base=kernel, restriction=target, forcing=_target_forcing(kernel, target)
    )
    res = solve_minimal(eq, tol=tol, cap=cap, max_iter=max_iter)
    vals = np.clip(res.values, 0.0, 1.0)
    return MinSolResult(
        solution=type(res.solution)(vals, kernel.grid),
        iterations=res.iterations,
        final_increment=res.final_increment,
        status=res.status,
        diverged_states=res.diverged_states,
        growth_log=res.growth_log,
    )


def expected_return_time(
    kernel: FiniteKernel,
    target: Region,
    tol: float = DEFAULT_TOL,
    cap: float = DEFAULT_CAP,
    max_iter: int = DEFAULT_MAX_ITER,
    return_prob: Optional[MinSolResult] = None,
) -> MinSolResult:
    """Minimal solution for E_x tau_A^+ 1{tau_A^+ < inf} on the grid.

    The forcing is the solved L(., A); when the chain returns surely this is
    the familiar  V = ∫_{A^c} V dP + 1.
    """
    if return_prob is None:
        return_prob = return_probability(kernel, target, tol=tol, max_iter=max_iter)
    eq = ConeEquation(base=kernel, restriction=target, forcing=return_prob.values)
    return solve_minimal(eq, tol=tol, cap=cap, max_iter=max_iter)


def geometric_sum(
    kernel: FiniteKernel,
    target: Region,
    rate: float,
    tol: float = DEFAULT_TOL,
    cap: float = DEFAULT_CAP,
    max_iter: int = DEFAULT_MAX_ITER,
) -> MinSolResult:
    """Minimal solution of V = r ∫_{A^c} V dP + 1 for r > 1.

    The solution is E_x sum_{n=0}^{tau-1} r^n; a cap crossing certifies that
    the exponential moment E_x r^tau is unbounded past the cap.
    """
    if rate <= 1.0:
        raise ValueError(f"rate {rate} must exceed 1")
    eq = ConeEquation(
        base=kernel,
        restriction=target,
        forcing=np.ones(kernel.n),
        rate=rate,
    )
    return solve_minimal(eq, tol=tol, cap=cap, max_iter=max_iter)


def geometric_moment(geom: MinSolResult, rate: float) -> np.ndarray:
    """E_x r^{tau_A^+} from the geometric sum via E r^tau = 1 + (r-1) V."""
    return 1.0 + (rate - 1.0) * geom.values
