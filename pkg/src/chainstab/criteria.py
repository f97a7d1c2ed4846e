"""Mechanical verification of stability/instability certificates.

Every check evaluates its defining inequalities with the kernel's exact row
closed forms at a point set = grid representatives plus a geometric ladder
of tail probes, and reports margins; set-level hypotheses ("positive
measure", "... = infinity") are certified as reference-measure mass with an
explicit one-bin floor, respectively as threshold crossing with sustained
growth.  A report never claims more than "verified on the evaluated points"
and "divergence evidence up to rung N".

Checks are independent pure evaluations; a classify run fans out across
checks and joins on the summary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .kernel import (
    FULL_SPACE,
    DivergentIntegralError,
    GridScheme,
    InternalConsistencyError,
    Kernel,
    Region,
    integrate,
)

__all__ = [
    "TestFunctionSequence",
    "CheckContext",
    "ConditionResult",
    "DivergenceEvidence",
    "CertificateReport",
    "ModelClassification",
    "check_transient",
    "check_recurrent_drift",
    "check_ergodic_drift",
    "check_strong_drift",
    "check_non_ergodic",
    "check_non_strong",
    "check_non_strong_two_fn",
    "check_non_geometric",
    "classify",
]

VALID = "certificate-valid"
INVALID = "certificate-invalid"
INCONCLUSIVE = "inconclusive"

DEFAULT_SLACK = 1e-9
DEFAULT_DIV_THRESHOLD = 1e6


# ---------------------------------------------------------------------------
# Inputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunctionSequence:
    """Family {V^(n)} indexed by a rung parameter, optionally with rates.

    ``func(n)`` returns the rung's vectorized state->value map, defined for
    every x >= 0 (tabulated families extend by zero).  ``rung_sup(n)``, when
    present, gives the closed-form (sup over A^c, witness state) — this is
    how families whose sup escapes any finite grid still produce divergence
    evidence.  ``supports`` declare per-rung compact support cutoffs for the
    geometric check.
    """

    rungs: tuple
    func: Callable
    target: Region
    rates: Optional[tuple] = None
    rung_sup: Optional[Callable] = None
    supports: Optional[tuple] = None
    check_points: Optional[Callable] = None  # n -> extra margin points for the rung
    points_mode: str = "union"  # "replace": tabulated rungs only satisfy the
    # inequality on their own lattice; off-lattice interpolation is not part
    # of the certificate
    criterion: str = ""
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rungs", tuple(self.rungs))
        if self.rates is not None:
            rates = tuple(float(r) for r in self.rates)
            if len(rates) != len(self.rungs):
                raise ValueError("rates must align with rungs")
            if any(r <= 1.0 for r in rates):
                raise ValueError("rates must exceed 1")
            object.__setattr__(self, "rates", rates)
        if self.supports is not None and len(self.supports) != len(self.rungs):
            raise ValueError("supports must align with rungs")


@dataclass(frozen=True)
class CheckContext:
    """Shared evaluation setting: kernel + grid + probe ladder + slacks."""

    kernel: Kernel
    grid: GridScheme
    probes: tuple = ()
    slack_abs: float = DEFAULT_SLACK
    slack_rel: float = DEFAULT_SLACK
    quad_tol: float = 1e-8

    @staticmethod
    def for_model(kernel: Kernel, grid: GridScheme, probe_max: float = 1e6,
                  **kw) -> "CheckContext":
        probes = []
        x = grid.cutoff
        while x <= probe_max:
            probes.append(float(x) if grid.space == "continuous" else float(int(x)))
            x *= 2.0
        return CheckContext(kernel=kernel, grid=grid, probes=tuple(probes), **kw)

    def points(self, extra: Iterable[float] = ()) -> np.ndarray:
        pts = np.concatenate(
            [self.grid.reps, np.asarray(self.probes, float), np.asarray(list(extra), float)]
        )
        return np.unique(pts)

    def slack_for(self, values: np.ndarray) -> np.ndarray:
        return self.slack_abs + self.slack_rel * np.abs(values)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionResult:
    name: str
    holds: bool
    margin: float = math.nan
    witness: float = math.nan
    detail: str = ""


@dataclass(frozen=True)
class DivergenceEvidence:
    """Monotone running-max sequence with a crossing threshold.

    ``crossed`` certifies only "exceeds threshold by rung N", never infinity.
    Sustained growth means strictly positive growth over the last quarter of
    the rungs.
    """

    rungs: tuple
    values: tuple
    threshold: float
    crossed_at: Optional[int]
    sustained_growth: bool

    @property
    def crossed(self) -> bool:
        return self.crossed_at is not None

    @staticmethod
    def from_sequence(rungs, values, threshold) -> "DivergenceEvidence":
        vals = [float(v) for v in values]
        running = np.maximum.accumulate(vals)
        crossed_at = None
        for i, v in enumerate(running):
            if v >= threshold:
                crossed_at = i
                break
        if len(running) >= 2:
            anchor = running[max(0, (3 * (len(running) - 1)) // 4)]
            tip = running[-1]
            sustained = tip > anchor * (1.0 + 1e-9) + 1e-300
        else:
            sustained = False
        return DivergenceEvidence(
            rungs=tuple(rungs),
            values=tuple(running.tolist()),
            threshold=float(threshold),
            crossed_at=crossed_at,
            sustained_growth=bool(sustained),
        )


@dataclass(frozen=True)
class CertificateReport:
    criterion: str
    conditions: tuple
    divergence: Optional[DivergenceEvidence]
    verdict: str
    settings: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return self.verdict == VALID

    def condition(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary_line(self) -> str:
        bits = ", ".join(
            f"{c.name}={'ok' if c.holds else 'FAIL'}" for c in self.conditions
        )
        return f"{self.criterion}: {self.verdict} [{bits}]"


def _finish(criterion, conditions, divergence, settings, needs_divergence=True):
    if any(not c.holds for c in conditions):
        verdict = INVALID
    elif needs_divergence and divergence is not None and not divergence.crossed:
        verdict = INCONCLUSIVE if divergence.sustained_growth else INVALID
    else:
        verdict = VALID
    return CertificateReport(
        criterion=criterion,
        conditions=tuple(conditions),
        divergence=divergence,
        verdict=verdict,
        settings=settings,
    )


# ---------------------------------------------------------------------------
# Pointwise expectations
# ---------------------------------------------------------------------------


def expectation_at(
    ctx: CheckContext,
    f: Callable,
    xs: np.ndarray,
    region: Region = FULL_SPACE,
    upper: Optional[float] = None,
) -> np.ndarray:
    """∫_region f dP(x, .) for a batch of states, exact on atom rows.

    Uses the kernel's vectorized row closure for positive atom states and
    falls back to quadrature-backed integrate() elsewhere (the origin row of
    the continuous models carries the immigration density).  ``upper``
    intersects the region with [0, upper] for functions known to vanish
    beyond it.
    """
    xs = np.asarray(xs, dtype=float)
    out = np.empty(xs.shape)
    fast = ctx.kernel.batch_rows
    done = np.zeros(xs.shape, dtype=bool)
    if fast is not None:
        sel = xs > 0
        if np.any(sel):
            pts, ms = fast(xs[sel])
            inside = region.contains(pts)
            if upper is not None:
                inside &= pts <= upper
            vals = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
            out[sel] = np.sum(ms * vals * inside, axis=1)
            done |= sel
    for i in np.nonzero(~done)[0]:
        out[i] = integrate(
            ctx.kernel, xs[i], f, region, quad_tol=ctx.quad_tol, upper=upper
        )
    return out


def _rung_points(seq: TestFunctionSequence, n, base: np.ndarray) -> np.ndarray:
    if seq.check_points is None:
        return base
    extra = np.asarray(seq.check_points(n), dtype=float)
    if seq.points_mode == "replace":
        return extra
    return np.unique(np.concatenate([base, extra]))


def _verify_vanishing(ctx, seq, pts):
    """For families with declared compact supports: no mass beyond them."""
    for n, cut in zip(seq.rungs, seq.supports):
        beyond = pts[pts > cut]
        if beyond.size:
            stray = float(np.max(np.abs(np.asarray(seq.func(n)(beyond), float))))
            if stray > ctx.slack_abs:
                raise ValueError(
                    f"rung {n}: values leak {stray:.3g} beyond declared support {cut:g}"
                )


def _margin_condition(
    ctx: CheckContext,
    name: str,
    margins: np.ndarray,
    points: np.ndarray,
    scale: np.ndarray,
    detail: str = "",
) -> ConditionResult:
    slack = ctx.slack_abs + ctx.slack_rel * np.abs(scale)
    ok = bool(np.all(margins >= -slack))
    j = int(np.argmin(margins - (-slack)))
    return ConditionResult(
        name=name,
        holds=ok,
        margin=float(np.min(margins)),
        witness=float(points[j]),
        detail=detail,
    )


# ---------------------------------------------------------------------------
# Forward drift checks (transient / recurrent / ergodic / strongly ergodic)
# ---------------------------------------------------------------------------


def check_transient(
    ctx: CheckContext,
    V: Callable,
    C: Region,
    log_V: Optional[Callable] = None,
    margin_points: Optional[Sequence] = None,
    evidence_probes: Optional[Sequence] = None,
) -> CertificateReport:
    """Transience certificate: PV <= V off C, inf V > -inf, and the sublevel
    set {V < inf_C V} carries positive reference measure (>= one bin)."""
    pts = np.asarray(margin_points, float) if margin_points is not None else ctx.points()
    off = ~C.contains(pts)
    vals = np.asarray(V(pts), dtype=float)
    pv = expectation_at(ctx, V, pts[off])
    margins = vals[off] - pv
    cond_drift = _margin_condition(
        ctx, "drift PV<=V off C", margins, pts[off], vals[off]
    )

    finite_min = float(np.min(vals))
    unbounded = not np.all(np.isfinite(vals)) or finite_min < -1e100
    detail = ""
    if log_V is not None and evidence_probes is not None and len(list(evidence_probes)):
        ep = np.asarray(list(evidence_probes), float)
        logs = np.asarray(log_V(ep), dtype=float)
        if np.any(logs > math.log(1e100)):
            unbounded = True
            detail = f"partial products exceed 1e100 by x={ep[np.argmax(logs > math.log(1e100))]:g}"
    cond_bounded = ConditionResult(
        name="inf V > -inf",
        holds=not unbounded,
        margin=finite_min,
        detail=detail or f"min over evaluated points {finite_min:.6g}",
    )

    reps = ctx.grid.reps
    on_c = C.contains(reps)
    inf_c = float(np.min(np.asarray(V(reps[on_c]), float))) if np.any(on_c) else math.inf
    below = np.asarray(V(reps), float) < inf_c - ctx.slack_abs
    measure = float(np.sum(ctx.grid.weights[below]))
    floor = float(np.min(ctx.grid.weights))
    cond_set = ConditionResult(
        name="{V < inf_C V} has positive measure",
        holds=measure >= floor,
        margin=measure,
        detail=f"reference measure {measure:.6g} (floor {floor:.3g})",
    )
    return _finish(
        "transient",
        [cond_drift, cond_bounded, cond_set],
        None,
        {"points": len(pts)},
        needs_divergence=False,
    )


def check_recurrent_drift(
    ctx: CheckContext,
    V: Callable,
    C: Region,
    log_V: Optional[Callable] = None,
    margin_points: Optional[Sequence] = None,
    evidence_probes: Optional[Sequence] = None,
) -> CertificateReport:
    """Recurrence certificate: PV <= V off C with V positive and unbounded
    off bounded sets (each sublevel set stays strictly inside the window and
    the tail probes clear every grid level)."""
    pts = np.asarray(margin_points, float) if margin_points is not None else ctx.points()
    vals = np.asarray(V(pts), dtype=float)
    off = ~C.contains(pts)
    pv = expectation_at(ctx, V, pts[off])
    cond_drift = _margin_condition(
        ctx, "drift PV<=V off C", vals[off] - pv, pts[off], vals[off]
    )
    cond_pos = ConditionResult(
        name="V positive",
        holds=bool(np.all(vals > -ctx.slack_abs)),
        margin=float(np.min(vals)),
    )

    reps = ctx.grid.reps
    gvals = np.asarray(V(reps), dtype=float)
    gmax = float(np.max(gvals))
    edge = reps[-1]
    probe_pts = np.asarray(
        list(evidence_probes) if evidence_probes is not None else ctx.probes, float
    )
    if log_V is not None and probe_pts.size:
        tail_logs = np.asarray(log_V(probe_pts), float)
        tail_clears = bool(np.all(tail_logs > math.log(max(gmax, 1e-300))))
        tail_top = float(np.max(tail_logs))
        tail_detail = f"log V reaches {tail_top:.4g} at x={probe_pts[-1]:g}"
    elif probe_pts.size:
        tail_vals = np.asarray(V(probe_pts), float)
        tail_clears = bool(np.all(tail_vals > gmax))
        tail_detail = f"V reaches {float(np.max(tail_vals)):.6g} beyond the window"
    else:
        tail_clears = False
        tail_detail = "no tail probes supplied"
    levels = np.geomspace(max(1.0, float(np.min(gvals[gvals > 0], initial=1.0))), gmax, 6)
    inside = all(
        (np.max(reps[gvals <= L], initial=0.0) < edge) or L >= gmax for L in levels[:-1]
    )
    cond_sub = ConditionResult(
        name="sublevel sets bounded",
        holds=bool(inside and tail_clears),
        margin=gmax,
        detail=tail_detail,
    )
    return _finish(
        "recurrent",
        [cond_drift, cond_pos, cond_sub],
        None,
        {"points": len(pts)},
        needs_divergence=False,
    )


def check_ergodic_drift(
    ctx: CheckContext,
    V: Callable,
    C: Region,
    b: Optional[float] = None,
    margin_points: Optional[Sequence] = None,
) -> CertificateReport:
    """Positive-recurrence drift: PV - V <= -1 + b 1_C with V >= 0 finite.

    The on-C expectation of V against the immigration density can diverge
    (heavy-tailed models); that is reported as a failed finiteness
    condition, never silently truncated.
    """
    pts = np.asarray(margin_points, float) if margin_points is not None else ctx.points()
    vals = np.asarray(V(pts), dtype=float)
    off = ~C.contains(pts)
    divergent_at = None
    try:
        pv_off = expectation_at(ctx, V, pts[off])
        margins = vals[off] - 1.0 - pv_off
        cond_drift = _margin_condition(
            ctx, "drift PV-V<=-1 off C", margins, pts[off], vals[off]
        )
    except DivergentIntegralError as exc:
        cond_drift = ConditionResult(
            name="drift PV-V<=-1 off C", holds=False, detail=str(exc)
        )
    on_pts = pts[~off]
    try:
        pv_on = expectation_at(ctx, V, on_pts)
        b_needed = float(np.max(pv_on - np.asarray(V(on_pts), float) + 1.0, initial=0.0))
        if b is None:
            holds_b, detail = True, f"induced b = {b_needed:.6g}"
        else:
            holds_b = b_needed <= b + ctx.slack_abs
            detail = f"induced b = {b_needed:.6g} vs declared {b:g}"
        cond_b = ConditionResult(
            name="bounded excursion from C", holds=holds_b, margin=b_needed, detail=detail
        )
    except DivergentIntegralError as exc:
        cond_b = ConditionResult(
            name="bounded excursion from C",
            holds=False,
            detail=f"divergent integral: {exc}",
        )
    cond_fin = ConditionResult(
        name="V finite and nonnegative",
        holds=bool(np.all(np.isfinite(vals)) and np.all(vals >= -ctx.slack_abs)),
        margin=float(np.min(vals)),
    )
    return _finish(
        "ergodic",
        [cond_drift, cond_b, cond_fin],
        None,
        {"points": len(pts)},
        needs_divergence=False,
    )


def check_strong_drift(
    ctx: CheckContext,
    V: Callable,
    C: Region,
    b: float,
    beta: float,
    margin_points: Optional[Sequence] = None,
    bound_hint: Optional[float] = None,
) -> CertificateReport:
    """Uniform-ergodicity drift: PV - V <= -beta V + b 1_C with 1 <= V bounded."""
    if not (0.0 < beta <= 1.0):
        raise ValueError("beta must lie in (0, 1]")
    pts = np.asarray(margin_points, float) if margin_points is not None else ctx.points()
    vals = np.asarray(V(pts), dtype=float)
    cond_ge1 = ConditionResult(
        name="V >= 1", holds=bool(np.all(vals >= 1.0 - ctx.slack_abs)),
        margin=float(np.min(vals)),
    )
    vmax = float(np.max(vals))
    bounded = np.all(np.isfinite(vals)) and (
        bound_hint is None or vmax <= bound_hint + ctx.slack_abs
    )
    cond_bounded = ConditionResult(
        name="V bounded",
        holds=bool(bounded),
        margin=vmax,
        detail="" if bound_hint is None else f"declared bound {bound_hint:g}",
    )
    off = ~C.contains(pts)
    pv_off = expectation_at(ctx, V, pts[off])
    margins_off = vals[off] - beta * vals[off] - pv_off  # (1-beta)V - PV >= 0
    cond_drift = _margin_condition(
        ctx, "drift PV<=(1-beta)V off C", margins_off, pts[off], vals[off]
    )
    pv_on = expectation_at(ctx, V, pts[~off])
    excess = pv_on - (1.0 - beta) * np.asarray(V(pts[~off]), float)
    cond_b = ConditionResult(
        name="drift on C within b",
        holds=bool(np.all(excess <= b + ctx.slack_abs)),
        margin=float(np.max(excess, initial=0.0)),
        detail=f"declared b {b:g}",
    )
    return _finish(
        "strongly-ergodic",
        [cond_ge1, cond_bounded, cond_drift, cond_b],
        None,
        {"points": len(pts), "beta": beta},
        needs_divergence=False,
    )


# ---------------------------------------------------------------------------
# Inverse (non-)ergodicity checks
# ---------------------------------------------------------------------------


def _family_rung_sups(
    ctx: CheckContext, seq: TestFunctionSequence, A: Region, pts: np.ndarray
):
    sups, wits = [], []
    off = ~A.contains(pts)
    for n in seq.rungs:
        if seq.rung_sup is not None:
            s, w = seq.rung_sup(n)
        else:
            vals = np.asarray(seq.func(n)(pts[off]), float)
            j = int(np.argmax(vals))
            s, w = float(vals[j]), float(pts[off][j])
        sups.append(float(s))
        wits.append(float(w))
    return np.array(sups), np.array(wits)


def check_non_ergodic(
    ctx: CheckContext,
    seq: TestFunctionSequence,
    A: Region,
    mode: str = "theorem",
    div_threshold: float = DEFAULT_DIV_THRESHOLD,
    margin_points: Optional[Sequence] = None,
) -> CertificateReport:
    """Non-ergodicity certificate from a family {V^(n)}.

    Conditions: finite sup of each rung off A; the one-step inequality
    ∫_{A^c} V^(n) dP >= V^(n) - 1 (everywhere in theorem mode, off A in
    corollary mode); and divergence evidence — the reference-measure partial
    integrals of sup_n V^(n) over A (theorem mode), or the running max at
    witness states off A together with a positive-measure divergence set
    (corollary mode).
    """
    if len(seq.rungs) < 2:
        raise ValueError("need at least two rungs")
    if mode not in ("theorem", "corollary"):
        raise ValueError(f"unknown mode {mode!r}")
    pts = np.asarray(margin_points, float) if margin_points is not None else ctx.points()
    off = ~A.contains(pts)
    region = A.complement()

    sups, _ = _family_rung_sups(ctx, seq, A, pts)
    cond_fin = ConditionResult(
        name="finite sup off A per rung",
        holds=bool(np.all(np.isfinite(sups))),
        margin=float(np.max(sups)),
    )

    if seq.supports is not None:
        _verify_vanishing(ctx, seq, pts)
    base_pts = pts if mode == "theorem" else pts[off]
    worst, worst_at, ineq_ok = math.inf, math.nan, True
    for i, n in enumerate(seq.rungs):
        f = seq.func(n)
        cpts = _rung_points(seq, n, base_pts)
        if mode == "corollary":
            cpts = cpts[~A.contains(cpts)]
        upper = seq.supports[i] if seq.supports is not None else None
        vals = np.asarray(f(cpts), float)
        pvals = expectation_at(ctx, f, cpts, region, upper=upper)
        m = pvals - (vals - 1.0)
        slack = ctx.slack_for(vals)
        if np.any(m < -slack):
            ineq_ok = False
        j = int(np.argmin(m + slack))
        if m[j] < worst:
            worst, worst_at = float(m[j]), float(cpts[j])
    cond_ineq = ConditionResult(
        name="restricted drift >= V-1",
        holds=ineq_ok,
        margin=worst,
        witness=worst_at,
    )

    reps = ctx.grid.reps
    on_a = A.contains(reps)
    w = ctx.grid.weights
    if mode == "theorem":
        partials = []
        running = np.full(int(np.sum(on_a)), -np.inf)
        for n in seq.rungs:
            va = np.asarray(seq.func(n)(reps[on_a]), float)
            running = np.maximum(running, va)
            partials.append(float(np.sum(w[on_a] * running)))
        if any(b < a - 1e-12 for a, b in zip(partials, partials[1:])):
            raise InternalConsistencyError("partial integrals decreased across rungs")
        evidence = DivergenceEvidence.from_sequence(seq.rungs, partials, div_threshold)
        det = "partial reference-measure integrals over A of sup_n V^(n)"
    else:
        running = None
        per_rung_max = []
        for n in seq.rungs:
            va = np.asarray(seq.func(n)(reps[~on_a]), float)
            running = va if running is None else np.maximum(running, va)
            per_rung_max.append(float(np.max(running, initial=0.0)))
        crossed_states = running >= div_threshold
        measure = float(np.sum(w[~on_a][crossed_states]))
        evidence = DivergenceEvidence.from_sequence(
            seq.rungs, per_rung_max, div_threshold
        )
        det = f"divergent-set reference measure {measure:.6g}"
    conds = [cond_fin, cond_ineq]
    if mode == "corollary":
        floor = float(np.min(w))
        conds.append(
            ConditionResult(
                name="divergence set has positive measure",
                holds=(not evidence.crossed) or measure >= floor,
                margin=measure,
                detail=det,
            )
        )
    return _finish(
        "non-ergodic",
        conds,
        evidence,
        {"mode": mode, "div_threshold": div_threshold, "note": det},
    )


def check_non_strong(
    ctx: CheckContext,
    seq: TestFunctionSequence,
    A: Region,
    div_threshold: float = DEFAULT_DIV_THRESHOLD,
    margin_points: Optional[Sequence] = None,
) -> CertificateReport:
    """Non-strong-ergodicity certificate: every rung vanishes on A, is
    finite off A, satisfies PV^(n) >= V^(n) - 1 off A, and the rung sups
    grow past the threshold."""
    pts = np.asarray(margin_points, float) if margin_points is not None else ctx.points()
    on_a = A.contains(pts)
    off = ~on_a

    zero_worst = 0.0
    for n in seq.rungs:
        va = np.abs(np.asarray(seq.func(n)(pts[on_a]), float))
        zero_worst = max(zero_worst, float(np.max(va, initial=0.0)))
    cond_zero = ConditionResult(
        name="V = 0 on A", holds=zero_worst <= ctx.slack_abs, margin=zero_worst
    )

    sups, wits = _family_rung_sups(ctx, seq, A, pts)
    cond_fin = ConditionResult(
        name="finite sup off A per rung",
        holds=bool(np.all(np.isfinite(sups))),
        margin=float(np.max(sups)),
        witness=float(wits[int(np.argmax(sups))]),
    )

    if seq.supports is not None:
        _verify_vanishing(ctx, seq, pts)
    worst, worst_at, ineq_ok = math.inf, math.nan, True
    for i, n in enumerate(seq.rungs):
        f = seq.func(n)
        cpts = _rung_points(seq, n, pts[off])
        cpts = cpts[~A.contains(cpts)]
        upper = seq.supports[i] if seq.supports is not None else None
        vals = np.asarray(f(cpts), float)
        pvals = expectation_at(ctx, f, cpts, upper=upper)
        m = pvals - (vals - 1.0)
        slack = ctx.slack_for(vals)
        if np.any(m < -slack):
            ineq_ok = False
        j = int(np.argmin(m + slack))
        if m[j] < worst:
            worst, worst_at = float(m[j]), float(cpts[j])
    cond_ineq = ConditionResult(
        name="PV >= V-1 off A",
        holds=ineq_ok,
        margin=worst,
        witness=worst_at,
    )
    evidence = DivergenceEvidence.from_sequence(seq.rungs, sups, div_threshold)
    return _finish(
        "non-strongly-ergodic",
        [cond_zero, cond_fin, cond_ineq],
        evidence,
        {"div_threshold": div_threshold},
    )


def check_non_strong_two_fn(
    ctx: CheckContext,
    V: Callable,
    W: Callable,
    A: Region,
    ladder: Sequence,
    d: float,
    div_threshold: float = DEFAULT_DIV_THRESHOLD,
    ratio_tol: float = 1e-3,
    margin_points: Optional[Sequence] = None,
) -> CertificateReport:
    """Two-function non-strong-ergodicity certificate: V bounded on A with
    growth evidence off A, PV >= V - 1 off A, PW <= W + d 1_A, and
    sup_{beyond E_m} V/W decreasing to <= ratio_tol along the ladder."""
    pts = np.asarray(margin_points, float) if margin_points is not None else ctx.points()
    on_a = A.contains(pts)
    off = ~on_a
    vvals = np.asarray(V(pts), float)
    wvals = np.asarray(W(pts), float)

    cond_supA = ConditionResult(
        name="sup_A V finite",
        holds=bool(np.all(np.isfinite(vvals[on_a]))),
        margin=float(np.max(vvals[on_a], initial=0.0)),
    )
    ladder = [float(x) for x in ladder]
    ladder_vals = [float(np.max(vvals[pts >= c], initial=0.0)) for c in ladder]
    evidence = DivergenceEvidence.from_sequence(ladder, ladder_vals, div_threshold)

    pv = expectation_at(ctx, V, pts[off])
    cond_v = _margin_condition(
        ctx, "PV >= V-1 off A", pv - (vvals[off] - 1.0), pts[off], vvals[off]
    )
    cond_wpos = ConditionResult(
        name="W >= 0", holds=bool(np.all(wvals >= -ctx.slack_abs)),
        margin=float(np.min(wvals)),
    )
    pw = expectation_at(ctx, W, pts)
    bound = wvals + d * on_a.astype(float)
    cond_w = _margin_condition(ctx, "PW <= W + d 1_A", bound - pw, pts, wvals)

    ratios = []
    undefined = False
    for c in ladder:
        beyond = pts >= c
        if not np.any(beyond):
            continue
        vv, ww = vvals[beyond], wvals[beyond]
        if np.any((ww <= 0) & (vv > 0)):
            undefined = True
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(vv > 0, vv / np.maximum(ww, 1e-300), 0.0)
        ratios.append(float(np.max(r, initial=0.0)))
    if undefined:
        cond_ratio = ConditionResult(
            name="V/W vanishes along ladder", holds=False,
            detail="W = 0 where V > 0: ratio undefined",
        )
    else:
        dec = all(b <= a * (1 + 1e-9) for a, b in zip(ratios, ratios[1:]))
        final = ratios[-1] if ratios else math.inf
        cond_ratio = ConditionResult(
            name="V/W vanishes along ladder",
            holds=bool(dec and final <= ratio_tol),
            margin=final,
            detail=f"ratio sequence {['%.3g' % r for r in ratios]}",
        )
    return _finish(
        "non-strongly-ergodic(two-fn)",
        [cond_supA, cond_v, cond_wpos, cond_w, cond_ratio],
        evidence,
        {"d": d, "ratio_tol": ratio_tol, "div_threshold": div_threshold},
    )


def check_non_geometric(
    ctx: CheckContext,
    seq: TestFunctionSequence,
    A: Region,
    div_threshold: float = DEFAULT_DIV_THRESHOLD,
    margin_points: Optional[Sequence] = None,
) -> CertificateReport:
    """Non-geometric-ergodicity certificate: rates r_n strictly decreasing
    toward 1, compactly supported rungs bounded on compacts satisfying
    V^(n) <= r_n ∫_{A^c} V^(n) dP + 1 everywhere, with rung sups growing
    past the threshold.

    Raises
    ------
    ValueError
        If rates are missing/not strictly decreasing, or a rung has mass
        outside its declared compact support.
    """
    if seq.rates is None:
        raise ValueError("non-geometric check needs rates r_n")
    rates = seq.rates
    if any(b >= a for a, b in zip(rates, rates[1:])):
        raise ValueError("rates must be strictly decreasing toward 1")
    if seq.supports is None:
        raise ValueError("non-geometric check needs declared compact supports")
    pts = np.asarray(margin_points, float) if margin_points is not None else ctx.points()
    region = A.complement()

    _verify_vanishing(ctx, seq, pts)

    worst, worst_at, ineq_ok = math.inf, math.nan, True
    bounded = True
    for i, (n, r) in enumerate(zip(seq.rungs, rates)):
        f = seq.func(n)
        cpts = _rung_points(seq, n, pts)
        vals = np.asarray(f(cpts), float)
        if not np.all(np.isfinite(vals)):
            bounded = False
        pvals = expectation_at(ctx, f, cpts, region, upper=seq.supports[i])
        m = r * pvals + 1.0 - vals
        slack = ctx.slack_for(vals)
        if np.any(m < -slack):
            ineq_ok = False
        j = int(np.argmin(m + slack))
        if m[j] < worst:
            worst, worst_at = float(m[j]), float(cpts[j])
    cond_ineq = ConditionResult(
        name="V <= r ∫_{A^c} V dP + 1",
        holds=ineq_ok,
        margin=worst,
        witness=worst_at,
    )
    cond_bd = ConditionResult(name="bounded on compacts", holds=bounded)
    sups, _ = _family_rung_sups(ctx, seq, A, pts)
    evidence = DivergenceEvidence.from_sequence(seq.rungs, sups, div_threshold)
    return _finish(
        "non-geometrically-ergodic",
        [cond_ineq, cond_bd],
        evidence,
        {"div_threshold": div_threshold, "rates": list(rates)},
    )


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

#: verdict pairs that must never both be certificate-valid on one run
_EXCLUSIONS = [
    ("transient", "recurrent"),
    ("transient", "ergodic"),
    ("transient", "strongly-ergodic"),
    ("ergodic", "non-ergodic"),
    ("strongly-ergodic", "non-strongly-ergodic"),
    ("strongly-ergodic", "non-geometrically-ergodic"),
]


@dataclass(frozen=True)
class ModelClassification:
    model: str
    reports: dict
    flags: dict

    def flag_list(self):
        return sorted(k for k, v in self.flags.items() if v)

    def summary_table(self) -> str:
        lines = [f"model: {self.model}"]
        for name in sorted(self.reports):
            lines.append("  " + self.reports[name].summary_line())
        lines.append("  flags: " + (", ".join(self.flag_list()) or "none"))
        return "\n".join(lines)


def classify(bundle, checks: Optional[Sequence[str]] = None) -> ModelClassification:
    """Run a model bundle's certificate suite and aggregate flags.

    ``bundle`` supplies the context and per-criterion families
    (models.ModelBundle).  Mutually exclusive valid verdicts raise an
    internal-consistency error: both were checked against the same rows, so
    co-occurrence means a defect, not a property of the chain.
    """
    names = list(checks) if checks is not None else list(bundle.suite)
    reports = {}
    for name in names:
        reports[name] = bundle.run_check(name)
    flags = {
        "transient": False,
        "recurrent": False,
        "ergodic": False,
        "non-ergodic": False,
        "null-recurrent-evidence": False,
        "non-strongly-ergodic": False,
        "non-geometrically-ergodic": False,
        "strongly-ergodic": False,
    }
    alias = {
        "transient": "transient",
        "recurrent": "recurrent",
        "ergodic": "ergodic",
        "non-ergodic": "non-ergodic",
        "non-strong": "non-strongly-ergodic",
        "non-strong-two-fn": "non-strongly-ergodic",
        "non-geometric": "non-geometrically-ergodic",
        "strong": "strongly-ergodic",
    }
    for name, rep in reports.items():
        flag = alias.get(name)
        if flag is not None and rep.valid:
            flags[flag] = True
    flags["null-recurrent-evidence"] = flags["recurrent"] and flags["non-ergodic"]
    for a, b in _EXCLUSIONS:
        if flags.get(a) and flags.get(b):
            raise InternalConsistencyError(
                f"mutually exclusive certificates both valid: {a} and {b}"
            )
    return ModelClassification(model=bundle.name, reports=reports, flags=flags)
