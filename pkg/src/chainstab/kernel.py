"""One-step transition kernels on R+ and Z+ and their finite discretizations.

A kernel row is a mixture of point atoms and (optionally) one density
component.  Rows are immutable values and row evaluation is pure, so kernels
are safe to share across concurrent workers.

Continuous kernels live on the half line and are reduced to finite
row-(sub)stochastic matrices by binning a window [0, M) into M/h cells.  Mass
that leaves the window is recorded per row as *escape mass* and never
renormalized here; redirecting it is the job of the truncation module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.integrate
import scipy.sparse as sparse

__all__ = [
    "CONTINUOUS",
    "COUNTABLE",
    "Region",
    "Density",
    "TransitionRow",
    "Kernel",
    "GridScheme",
    "FiniteKernel",
    "KernelValidationReport",
    "DomainMismatchError",
    "DivergentIntegralError",
    "GridError",
    "InternalConsistencyError",
    "row",
    "integrate",
    "discretize",
    "validate",
]

CONTINUOUS = "continuous"
COUNTABLE = "countable"

#: Row masses must balance to one within this tolerance.
ROW_MASS_TOL = 1e-12

#: Default tolerance for density quadrature.
QUAD_TOL = 1e-8


class DomainMismatchError(ValueError):
    """A state point incompatible with the kernel's state space."""


class InternalConsistencyError(RuntimeError):
    """A mathematically guaranteed relation failed beyond tolerance — this
    signals a discretization/implementation defect, not a model property."""


class DivergentIntegralError(ArithmeticError):
    """Quadrature of density * f kept growing instead of converging."""


class GridError(ValueError):
    """Malformed grid scheme (no bins, non-integer M/h, ...)."""


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """Measurable target/restriction set: finite state set, finite union of
    closed intervals, or the complement of another region."""

    kind: str  # "states" | "intervals" | "complement"
    state_set: tuple = ()
    interval_set: tuple = ()
    inner: Optional["Region"] = None

    @staticmethod
    def states(points: Iterable[float]) -> "Region":
        pts = tuple(sorted(set(float(p) for p in points)))
        if not pts:
            raise ValueError("finite state set must be nonempty")
        return Region(kind="states", state_set=pts)

    @staticmethod
    def interval(lo: float, hi: float) -> "Region":
        return Region.intervals([(lo, hi)])

    @staticmethod
    def intervals(pairs: Iterable[tuple]) -> "Region":
        ivs = []
        for lo, hi in pairs:
            lo, hi = float(lo), float(hi)
            if lo > hi:
                raise ValueError(f"interval with lo > hi: ({lo}, {hi})")
            ivs.append((lo, hi))
        return Region(kind="intervals", interval_set=tuple(ivs))

    def complement(self) -> "Region":
        if self.kind == "complement":
            return self.inner
        return Region(kind="complement", inner=self)

    def contains(self, x) -> np.ndarray:
        """Vectorized membership test."""
        x = np.asarray(x, dtype=float)
        if self.kind == "states":
            out = np.zeros(x.shape, dtype=bool)
            for p in self.state_set:
                out |= np.isclose(x, p, rtol=0.0, atol=1e-12)
            return out
        if self.kind == "intervals":
            out = np.zeros(x.shape, dtype=bool)
            for lo, hi in self.interval_set:
                out |= (x >= lo) & (x <= hi)
            return out
        return ~self.inner.contains(x)

    def clip_intervals(self, lo: float, hi: float) -> list:
        """Intersection with [lo, hi] as a list of intervals (for quadrature).

        Only meaningful for interval-backed regions and their complements;
        a finite state set has no interval part (Lebesgue-null).
        """
        if self.kind == "states":
            return []
        if self.kind == "intervals":
            out = []
            for a, b in self.interval_set:
                a2, b2 = max(a, lo), min(b, hi)
                if a2 < b2:
                    out.append((a2, b2))
            return out
        # complement: [lo, hi] minus the inner region's intervals
        if self.inner.kind == "states":
            return [(lo, hi)] if lo < hi else []
        gaps = sorted(self.inner.clip_intervals(lo, hi))
        out = []
        cur = lo
        for a, b in gaps:
            if a > cur:
                out.append((cur, a))
            cur = max(cur, b)
        if cur < hi:
            out.append((cur, hi))
        return out


FULL_SPACE = Region.interval(-math.inf, math.inf)


# ---------------------------------------------------------------------------
# Rows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Density:
    """Density component of a row.

    ``pdf`` must accept ndarray input.  ``total_mass`` is the integral over
    the full support (closed form where available).  ``cdf``/``ppf`` are
    optional closed forms used for exact sampling; quadrature never requires
    them.
    """

    pdf: Callable
    support: tuple  # (lo, hi); lo may be -inf, hi may be +inf
    total_mass: float = 1.0
    cdf: Optional[Callable] = None
    ppf: Optional[Callable] = None
    tag: str = "custom"


@dataclass(frozen=True)
class TransitionRow:
    """Mixture row: point atoms, optional density, optional unresolved tail.

    Atoms are parallel arrays (rows with unbounded support can be long).
    ``tail_mass`` holds atom mass sitting at states >= ``tail_from`` that was
    not materialized; row mass accounting always includes it.
    """

    points: np.ndarray = field(default_factory=lambda: np.empty(0))
    masses: np.ndarray = field(default_factory=lambda: np.empty(0))
    density: Optional[Density] = None
    tail_mass: float = 0.0
    tail_from: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "masses", np.asarray(self.masses, dtype=float))
        if self.points.shape != self.masses.shape:
            raise ValueError("atom points and masses must align")

    @staticmethod
    def from_atoms(pairs) -> "TransitionRow":
        pairs = list(pairs)
        return TransitionRow(
            points=np.array([p for p, _ in pairs], dtype=float),
            masses=np.array([m for _, m in pairs], dtype=float),
        )

    def mass(self) -> float:
        total = math.fsum(self.masses.tolist()) + self.tail_mass
        if self.density is not None:
            total += self.density.total_mass
        return total


@dataclass(frozen=True)
class Kernel:
    """Transition kernel: a space tag plus a pure row map.

    ``row_fn(x, horizon)`` returns the mixture row at x; countable kernels
    with unbounded row support materialize atoms below ``horizon`` and report
    the remainder as row tail mass.  ``step_sampler(xs, rng)``, when present,
    advances a whole batch of states in one call (used by the Monte Carlo
    module); correctness never depends on it.
    """

    space: str
    row_fn: Callable
    name: str = "kernel"
    default_horizon: float = 2.0**21
    step_sampler: Optional[Callable] = None
    batch_rows: Optional[Callable] = None  # xs>0 -> (points 2d, masses 2d)

    def row(self, x: float, horizon: Optional[float] = None) -> TransitionRow:
        return row(self, x, horizon=horizon)


def row(kernel: Kernel, x: float, horizon: Optional[float] = None) -> TransitionRow:
    """Evaluate the mixture row at a state point.

    Raises
    ------
    DomainMismatchError
        If x is negative, or not integer-valued on a countable kernel.
    """
    xf = float(x)
    if xf < 0:
        raise DomainMismatchError(f"state {x} below the half line")
    if kernel.space == COUNTABLE and xf != int(xf):
        raise DomainMismatchError(f"non-integer state {x} on a countable kernel")
    r = kernel.row_fn(xf, horizon or kernel.default_horizon)
    if r.masses.size and float(np.min(r.masses)) < -ROW_MASS_TOL:
        raise ValueError(f"negative atom mass in row({x})")
    return r


# ---------------------------------------------------------------------------
# Quadrature helpers
# ---------------------------------------------------------------------------


def _refined_midpoint(f: Callable, a: np.ndarray, b: np.ndarray, tol: float) -> np.ndarray:
    """Composite midpoint mass per interval, doubling the subdivision of every
    interval until the worst per-interval change drops below tol."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    width = b - a
    k = 1
    mids = a + 0.5 * width
    est = f(mids) * width
    while k < 4096:
        k *= 2
        offs = (np.arange(k) + 0.5) / k
        pts = a[:, None] + width[:, None] * offs[None, :]
        new = f(pts.ravel()).reshape(pts.shape).mean(axis=1) * width
        if np.max(np.abs(new - est), initial=0.0) < tol:
            return new
        est = new
    return est


def _quad_piece(f: Callable, a: float, b: float) -> float:
    val, _ = scipy.integrate.quad(f, a, b, limit=200)
    return val


def _tail_ladder(f: Callable, a: float, tol: float) -> float:
    """Integrate f over (a, +inf) via a geometric ladder of partial
    integrals.  Raises DivergentIntegralError if the increments accelerate,
    or have not become negligible by the ladder cap (slowly divergent
    integrands walk the whole ladder before being flagged)."""
    x = max(2.0 * abs(a), a + 1.0)
    total = _quad_piece(f, a, x)
    prev_inc = None
    while x < 1e30:
        nxt = x * 4.0
        inc = _quad_piece(f, x, nxt)
        total += inc
        if abs(inc) <= tol * max(1.0, abs(total)):
            return total
        if prev_inc is not None and abs(inc) > 1.05 * abs(prev_inc):
            raise DivergentIntegralError(
                f"partial integrals still growing at cutoff {nxt:g}"
            )
        prev_inc = inc
        x = nxt
    raise DivergentIntegralError("no convergence of tail integral by cutoff 1e30")


def _quad_with_tail(f: Callable, a: float, b: float, tol: float) -> float:
    """Integrate f over (a, b) with either end possibly infinite."""
    lo_inf, hi_inf = math.isinf(a), math.isinf(b)
    if lo_inf and hi_inf:
        anchor = 0.0
        return _tail_ladder(f, anchor, tol) + _tail_ladder(
            lambda u: f(-np.asarray(u, dtype=float)), -anchor, tol
        )
    if hi_inf:
        return _tail_ladder(f, a, tol)
    if lo_inf:
        return _tail_ladder(lambda u: f(-np.asarray(u, dtype=float)), -b, tol)
    return _quad_piece(f, a, b)


def integrate(
    kernel: Kernel,
    x: float,
    f: Callable,
    region: Region = FULL_SPACE,
    quad_tol: float = QUAD_TOL,
    horizon: Optional[float] = None,
    upper: Optional[float] = None,
) -> float:
    """Restricted expectation  ∫_region f(y) P(x, dy).

    Atoms inside the region contribute mass * f(point) exactly; the density
    component is integrated over region ∩ support.  ``f`` must accept ndarray
    input.  ``upper`` further intersects the region with [0, upper] — callers
    use it when f provably vanishes beyond, which also silences the
    unresolved-tail guard.

    Raises
    ------
    DivergentIntegralError
        If f is unbounded over an unbounded density region and the partial
        integrals keep growing.
    ValueError
        If the row has unresolved tail mass inside the region (raise the
        evaluation horizon, or cut the region with ``upper``).
    """
    r = row(kernel, x, horizon=horizon)
    total = 0.0
    if r.points.size:
        sel = region.contains(r.points)
        if upper is not None:
            sel &= r.points <= upper
        if np.any(sel):
            total += float(
                np.dot(r.masses[sel], np.asarray(f(r.points[sel]), dtype=float))
            )
    if r.tail_mass > quad_tol and r.tail_from is not None:
        tail_reachable = upper is None or upper > r.tail_from
        if tail_reachable and bool(region.contains(np.array([r.tail_from * 2.0]))[0]):
            raise ValueError(
                f"row({x}) keeps {r.tail_mass:.3g} unresolved tail mass inside "
                "the region; raise horizon"
            )
    if r.density is not None:
        lo, hi = r.density.support
        if upper is not None:
            hi = min(hi, upper)
        pieces = region.clip_intervals(lo, hi)
        pdf = r.density.pdf

        def integrand(y):
            y = np.asarray(y, dtype=float)
            return pdf(y) * np.asarray(f(y), dtype=float)

        for a, b in pieces:
            total += _quad_with_tail(integrand, a, b, quad_tol)
    return total


# ---------------------------------------------------------------------------
# Grids and finite kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridScheme:
    """Discretization window [0, M) split into M/h bins.

    Representative points are bin midpoints, except bin 0 which is pinned to
    the origin: every built-in continuous model has an atom-special row at 0
    (the reset target), and the unit up-jumps then stay lattice-aligned.
    Countable grids are the identity on {0..n-1} with unit weights.
    """

    space: str
    cutoff: float
    h: float = 1.0

    def __post_init__(self):
        if self.cutoff <= 0 or self.h <= 0:
            raise GridError("grid needs positive cutoff and bin width")
        ratio = self.cutoff / self.h
        if abs(ratio - round(ratio)) > 1e-9:
            raise GridError(f"cutoff/h = {ratio} is not an integer")
        if self.space == COUNTABLE and self.h != 1.0:
            raise GridError("countable grids use unit bins")

    @property
    def n_bins(self) -> int:
        return int(round(self.cutoff / self.h))

    @property
    def reps(self) -> np.ndarray:
        if self.space == COUNTABLE:
            return np.arange(self.n_bins, dtype=float)
        r = (np.arange(self.n_bins) + 0.5) * self.h
        r[0] = 0.0
        return r

    @property
    def weights(self) -> np.ndarray:
        """Reference-measure weight per bin: bin width, or counting."""
        if self.space == COUNTABLE:
            return np.ones(self.n_bins)
        return np.full(self.n_bins, self.h)

    def bin_of(self, x: float) -> Optional[int]:
        """Bin index containing x, or None if x escapes [0, cutoff)."""
        if x < 0 or x >= self.cutoff:
            return None
        return min(int(x // self.h), self.n_bins - 1)

    def mask(self, region: Region) -> np.ndarray:
        return region.contains(self.reps)


@dataclass(frozen=True)
class FiniteKernel:
    """Row-(sub)stochastic matrix over a grid plus per-row escape mass."""

    grid: GridScheme
    matrix: sparse.csr_matrix
    escape: np.ndarray
    provenance: str = ""

    @property
    def n(self) -> int:
        return self.grid.n_bins

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()


def _density_bin_masses(density: Density, grid: GridScheme, quad_tol: float) -> np.ndarray:
    lo, hi = density.support
    edges = np.arange(grid.n_bins + 1) * grid.h
    a = np.clip(edges[:-1], lo, hi)
    b = np.clip(edges[1:], lo, hi)
    live = b > a
    out = np.zeros(grid.n_bins)
    if np.any(live):
        per_bin_tol = quad_tol * max(grid.h, 1e-6)
        out[live] = _refined_midpoint(density.pdf, a[live], b[live], per_bin_tol)
    return out


def discretize(kernel: Kernel, grid: GridScheme, quad_tol: float = QUAD_TOL) -> FiniteKernel:
    """Reduce a kernel to a finite matrix over the grid window.

    Atoms are mapped exactly to their containing bin; densities are
    integrated per bin by refined midpoint quadrature.  Mass escaping
    [0, cutoff) — atoms beyond the window, density tails (including any part
    below 0), unresolved countable tails — is recorded per row, NOT
    renormalized.
    """
    n = grid.n_bins
    if n == 0:
        raise GridError("grid with zero bins")
    reps = grid.reps
    rows, cols, vals = [], [], []
    escape = np.zeros(n)
    for i, x in enumerate(reps):
        r = row(kernel, x, horizon=grid.cutoff)
        esc = r.tail_mass
        if r.points.size:
            pts, ms = r.points, r.masses
            inside = (pts >= 0) & (pts < grid.cutoff) & (ms != 0.0)
            esc += float(np.sum(ms[~inside & (ms != 0.0)]))
            if np.any(inside):
                bins = np.minimum((pts[inside] // grid.h).astype(int), n - 1)
                rows.extend([i] * int(np.sum(inside)))
                cols.extend(bins.tolist())
                vals.extend(ms[inside].tolist())
        if r.density is not None:
            masses = _density_bin_masses(r.density, grid, quad_tol)
            total = float(np.sum(masses))
            if total > r.density.total_mass:  # quadrature rounding guard
                masses *= r.density.total_mass / total
                total = r.density.total_mass
            nz = np.nonzero(masses)[0]
            rows.extend([i] * len(nz))
            cols.extend(nz.tolist())
            vals.extend(masses[nz].tolist())
            esc += r.density.total_mass - total
        escape[i] = esc
    mat = sparse.csr_matrix(
        (np.array(vals), (np.array(rows, dtype=int), np.array(cols, dtype=int))),
        shape=(n, n),
    )
    mat.sum_duplicates()
    return FiniteKernel(grid=grid, matrix=mat, escape=escape, provenance=kernel.name)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelValidationReport:
    probes: tuple
    max_mass_deviation: float
    negative_mass_points: tuple
    worst_probe: float

    @property
    def ok(self) -> bool:
        return self.max_mass_deviation <= ROW_MASS_TOL and not self.negative_mass_points


def validate(kernel: Kernel, probe_points: Sequence[float]) -> KernelValidationReport:
    """Probe rows for mass balance and sign violations (report, never raise)."""
    worst = 0.0
    worst_x = float(probe_points[0]) if len(probe_points) else 0.0
    negatives = []
    for x in probe_points:
        r = kernel.row_fn(float(x), kernel.default_horizon)
        dev = abs(r.mass() - 1.0)
        if dev > worst:
            worst, worst_x = dev, float(x)
        neg_atom = r.masses.size and float(np.min(r.masses)) < -ROW_MASS_TOL
        if neg_atom or r.tail_mass < -ROW_MASS_TOL:
            negatives.append(float(x))
    return KernelValidationReport(
        probes=tuple(float(x) for x in probe_points),
        max_mass_deviation=worst,
        negative_mass_points=tuple(negatives),
        worst_probe=worst_x,
    )
