"""Augmented truncations of a kernel to an increasing ladder of windows.

On each window E_m the base kernel is turned into a genuinely stochastic
kernel by (a) redirecting all mass that leaves E_m into the target set A,
spread by the reference measure, and (b) replacing every row inside A by the
normalized reference measure on E_m.  The augmented chain returns to A
surely, so its expected return times are finite, and they increase with m
toward the base chain's expected return times on states off A.  Rung solves
are independent and may run concurrently; the monotonicity assertion is a
post-pass.

States inside A are excluded from the monotone comparison: their first step
uses the reseeding row, whose normalization changes with the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sparse

from .kernel import FiniteKernel, GridScheme, InternalConsistencyError, Region
from .minsol import ConeEquation, MinSolResult, solve_minimal

__all__ = [
    "TruncationFamily",
    "RungSolve",
    "HittingSequence",
    "InternalConsistencyError",
    "truncate",
    "hitting_sequence",
    "lower_bound_functions",
]


@dataclass(frozen=True)
class TruncationFamily:
    """Base kernel + target A inside the first window + ladder of cutoffs.

    Cutoffs are in state-space units (reals for continuous grids, state
    counts for countable ones) and must be grid-aligned, strictly
    increasing, and bounded by the base grid cutoff.
    """

    base: FiniteKernel
    target: Region
    ladder: tuple

    def __post_init__(self):
        lad = tuple(float(c) for c in self.ladder)
        if len(lad) == 0:
            raise ValueError("empty truncation ladder")
        if any(b <= a for a, b in zip(lad, lad[1:])):
            raise ValueError("ladder must be strictly increasing")
        if lad[-1] > self.base.grid.cutoff + 1e-9:
            raise ValueError("ladder exceeds the base grid window")
        grid = self.base.grid
        for c in lad:
            if abs(c / grid.h - round(c / grid.h)) > 1e-9:
                raise ValueError(f"cutoff {c} is not grid-aligned")
        first = GridScheme(grid.space, lad[0], grid.h)
        amask = grid.mask(self.target)
        if not np.any(amask):
            raise ValueError("target has zero reference measure on the grid")
        if np.any(amask[first.n_bins:]):
            raise ValueError("target must be contained in the first window")
        object.__setattr__(self, "ladder", lad)

    def rung_states(self, cutoff: float) -> int:
        return int(round(cutoff / self.base.grid.h))


def truncate(base: FiniteKernel, cutoff: float, target: Region) -> FiniteKernel:
    """Stochastic augmentation of the base kernel on the window [0, cutoff).

    Rows off the target keep their base entries and gain the escaped mass
    spread over A proportionally to the reference measure; rows inside the
    target are replaced wholesale by the normalized reference measure on the
    window.  Every returned row sums to 1 within 1e-12.
    """
    grid = base.grid
    n_m = int(round(cutoff / grid.h))
    if n_m <= 0 or n_m > base.n:
        raise ValueError(f"cutoff {cutoff} outside the base grid")
    sub_grid = GridScheme(grid.space, n_m * grid.h, grid.h)
    amask = grid.mask(target)[:n_m]
    if not np.any(amask):
        raise ValueError("target has zero reference measure on the window")
    w = grid.weights[:n_m]
    w_target = np.where(amask, w, 0.0)
    w_target = w_target / math.fsum(w_target[amask])

    sub = base.matrix[:n_m, :n_m].tocsr()
    row_sums = np.asarray(sub.sum(axis=1)).ravel()
    # P(x, E^c) via the complement, exactly as the augmentation prescribes
    esc = 1.0 - row_sums
    overshoot = esc < 0.0
    if np.any(esc < -1e-9):
        raise InternalConsistencyError(
            f"window row mass exceeds 1 by {-esc.min():.3g}"
        )
    if np.any(overshoot):  # quadrature rounding guard
        scale = np.where(overshoot, 1.0 / row_sums, 1.0)
        sub = sparse.diags(scale) @ sub
        esc = np.maximum(esc, 0.0)

    off = (~amask).astype(float)
    # sparse rank-one products: dense outer() would materialize n_m^2 entries
    col = sparse.csr_matrix((off * esc).reshape(-1, 1))
    spread = col @ sparse.csr_matrix(w_target.reshape(1, -1))
    reseed_row = w / math.fsum(w)
    reseed = sparse.csr_matrix(amask.astype(float).reshape(-1, 1)) @ sparse.csr_matrix(
        reseed_row.reshape(1, -1)
    )
    mat = (sparse.diags(off) @ sub + spread + reseed).tocsr()
    return FiniteKernel(
        grid=sub_grid,
        matrix=mat,
        escape=np.zeros(n_m),
        provenance=f"{base.provenance}|augmented[0,{cutoff:g})",
    )


@dataclass(frozen=True)
class RungSolve:
    cutoff: float
    kernel: FiniteKernel
    result: MinSolResult
    sup_off_target: float

    @property
    def values(self) -> np.ndarray:
        return self.result.values


@dataclass(frozen=True)
class HittingSequence:
    family: TruncationFamily
    rungs: tuple
    sup_sequence: tuple
    tail_agreement: float

    @property
    def final_values(self) -> np.ndarray:
        """Last rung's values: the reported lower-bound estimate of E tau."""
        return self.rungs[-1].values


def hitting_sequence(
    family: TruncationFamily,
    tol: float = 1e-10,
    max_iter: int = 2_000_000,
    mono_slack: float = 1e-6,
) -> HittingSequence:
    """Expected return times of the augmented chains, rung by rung.

    The augmented chains return surely, so each rung solves
    V = ∫_{A^c ∩ E_m} V dP^(m) + 1.  Off the target the rung values are
    pointwise nondecreasing in m (asserted; a violation beyond tolerance is
    an internal-consistency error) and are honest lower bounds of the base
    chain's E tau.  ``tail_agreement`` is the relative gap between the last
    two rungs over the first window's off-target states, the natural fixed
    comparison domain.
    """
    grid = family.base.grid
    rungs = []
    sups = []
    prev_vals: Optional[np.ndarray] = None
    for cutoff in family.ladder:
        trunc = truncate(family.base, cutoff, family.target)
        amask = trunc.grid.mask(family.target)
        eq = ConeEquation(
            base=trunc, restriction=family.target, forcing=np.ones(trunc.n)
        )
        # the previous rung extended by zero is a subsolution of this rung's
        # equation off A and below its minimal solution: sound warm start
        start = None
        if prev_vals is not None:
            start = np.zeros(trunc.n)
            shared = min(len(prev_vals), trunc.n)
            off_shared = ~grid.mask(family.target)[:shared]
            start[:shared][off_shared] = prev_vals[:shared][off_shared]
        res = solve_minimal(eq, tol=tol, max_iter=max_iter, start=start)
        vals = res.values
        off = ~amask
        sup = float(np.max(vals[off])) if np.any(off) else 0.0
        if prev_vals is not None:
            shared = len(prev_vals)
            offs = off[:shared]
            gap = prev_vals[:shared][offs] - vals[:shared][offs]
            worst = float(np.max(gap, initial=0.0))
            if worst > mono_slack * (1.0 + sup):
                raise InternalConsistencyError(
                    f"rung values decreased by {worst:.3g} between cutoffs"
                )
        if sups and sup < sups[-1] - mono_slack * (1.0 + sup):
            raise InternalConsistencyError("per-rung sup decreased between rungs")
        prev_vals = vals
        rungs.append(
            RungSolve(cutoff=cutoff, kernel=trunc, result=res, sup_off_target=sup)
        )
        sups.append(sup)

    agreement = math.inf
    if len(rungs) >= 2:
        first = GridScheme(grid.space, family.ladder[0], grid.h)
        m = first.n_bins
        off0 = ~grid.mask(family.target)[:m]
        a = rungs[-2].values[:m][off0]
        b = rungs[-1].values[:m][off0]
        if a.size:
            agreement = float(np.max(np.abs(b - a) / np.maximum(1.0, np.abs(b))))
    return HittingSequence(
        family=family,
        rungs=tuple(rungs),
        sup_sequence=tuple(sups),
        tail_agreement=agreement,
    )


def lower_bound_functions(
    seq: HittingSequence,
    slack: float = 1e-6,
):
    """Package the rung solutions as drift lower-bound witnesses.

    Each rung's W is the rung's expected return time on E_m off A, extended
    by zero: W vanishes on A and beyond the window, is finite, and satisfies
    PW >= W - 1 against the BASE kernel on all off-target grid states.  The
    inequality is re-verified here before the family is returned.

    Returns a criteria.TestFunctionSequence whose rung parameter is the
    window cutoff.

    Raises
    ------
    InternalConsistencyError
        If the drift inequality fails beyond slack anywhere (with witness
        states in the message).
    """
    from .criteria import TestFunctionSequence  # one-way import

    base = seq.family.base
    grid = base.grid
    off_full = ~grid.mask(seq.family.target)
    tables = {}
    for rung in seq.rungs:
        w_full = np.zeros(base.n)
        m = rung.kernel.n
        off_m = off_full[:m]
        w_full[:m][off_m] = rung.values[off_m]
        margins = np.asarray(base.matrix @ w_full).ravel() - w_full + 1.0
        bad = np.nonzero(off_full & (margins < -slack))[0]
        if bad.size:
            raise InternalConsistencyError(
                f"drift lower-bound inequality failed at states {bad[:5].tolist()} "
                f"(worst margin {margins[bad].min():.3g})"
            )
        tables[rung.cutoff] = w_full

    reps = grid.reps
    h = grid.h

    def func_for(cutoff: float):
        table = tables[cutoff]

        def f(x):
            x = np.asarray(x, dtype=float)
            idx = np.clip((x // h).astype(int), 0, len(table) - 1)
            inside = (x >= 0) & (x < grid.cutoff)
            return np.where(inside, table[idx], 0.0)

        return f

    def rung_sup(cutoff: float):
        table = tables[cutoff]
        j = int(np.argmax(table))
        return float(table[j]), float(reps[j])

    def check_points(cutoff: float):
        beyond = grid.cutoff + np.arange(1.0, 5.0) * h
        return np.concatenate([reps, beyond])

    return TestFunctionSequence(
        rungs=tuple(r.cutoff for r in seq.rungs),
        func=func_for,
        target=seq.family.target,
        rung_sup=rung_sup,
        supports=tuple(r.cutoff for r in seq.rungs),
        check_points=check_points,
        points_mode="replace",
        criterion="non-strongly-ergodic",
        notes="drift witnesses from augmented-window return times",
    )
