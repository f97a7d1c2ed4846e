"""Built-in example models, named presets, and their certificate families.

Two chain families drive everything:

* a continuous reset-and-climb chain on R+ — from the origin the next state
  is drawn from an immigration density; from x > 0 the chain resets to 0,
  climbs to x+1, or holds;
* a countable hold/step-down/reset chain on Z+ with immigration from 0;

plus a linear autoregression with standard normal innovations used by the
window-truncation demos.

Each preset bundles its kernel with the calibrated test-function families
for the applicable certificates: the tail sup/inf of the reset rate is taken
from the closed form (all presets have eventually monotone or periodic
rates), products over unit windows use exact integer-window extrema, and
free constants are resolved by the documented scans.  Model values are
immutable after construction; family construction is pure (the only cached
piece is a discretization reused across checks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.integrate
import scipy.special

from .criteria import CertificateReport, CheckContext, ConditionResult, INVALID
from .criteria import TestFunctionSequence
from .criteria import (
    check_ergodic_drift,
    check_non_ergodic,
    check_non_geometric,
    check_non_strong,
    check_non_strong_two_fn,
    check_recurrent_drift,
    check_strong_drift,
    check_transient,
)
from .kernel import (
    CONTINUOUS,
    COUNTABLE,
    Density,
    FiniteKernel,
    GridScheme,
    Kernel,
    Region,
    TransitionRow,
    discretize,
)
from .minsol import ConeEquation, solve_minimal

__all__ = [
    "Example1Params",
    "Example2Params",
    "AR1Params",
    "ModelBundle",
    "build_example1",
    "build_example2",
    "build_ar1",
    "uniform_density",
    "pareto_density",
    "preset",
    "PRESETS",
    "test_functions_for",
]


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


def uniform_density() -> Density:
    """Uniform immigration on (0, 1)."""
    return Density(
        pdf=lambda y: ((y > 0) & (y < 1)).astype(float),
        support=(0.0, 1.0),
        total_mass=1.0,
        cdf=lambda y: np.clip(y, 0.0, 1.0),
        ppf=lambda u: np.asarray(u, dtype=float),
        tag="uniform",
    )


def pareto_density(delta: float) -> Density:
    """Heavy-tailed immigration: flat on [0,1], power tail x^-(delta+1)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    c = delta / (delta + 1.0)

    def pdf(y):
        y = np.asarray(y, dtype=float)
        body = ((y >= 0) & (y <= 1)).astype(float)
        tail = np.where(y > 1, np.maximum(y, 1.0) ** (-delta - 1.0), 0.0)
        return c * (body + tail)

    def cdf(y):
        y = np.asarray(y, dtype=float)
        lo = c * np.clip(y, 0.0, 1.0)
        hi = np.where(
            y > 1, (1.0 - np.maximum(y, 1.0) ** (-delta)) / (delta + 1.0), 0.0
        )
        return lo + hi

    def ppf(u):
        u = np.asarray(u, dtype=float)
        body = u / c
        tail = ((1.0 - u) * (delta + 1.0)) ** (-1.0 / delta)
        return np.where(u <= c, body, tail)

    return Density(pdf=pdf, support=(0.0, math.inf), total_mass=1.0, cdf=cdf,
                   ppf=ppf, tag=f"pareto({delta:g})")


# ---------------------------------------------------------------------------
# Example 1: reset-and-climb chain on R+
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Example1Params:
    """Reset rate gamma, up-step rate b (gamma + b <= 1), immigration beta.

    ``gamma_tail_sup(x)`` / ``gamma_tail_inf(x)`` are the closed-form
    sup/inf of gamma over [x, inf) — supplied per preset so that tail
    extrema never depend on a finite window.
    """

    gamma: Callable
    b: Callable
    beta: Density
    gamma_tail_sup: Optional[Callable] = None
    gamma_tail_inf: Optional[Callable] = None
    label: str = "example1"


def build_example1(params: Example1Params) -> Kernel:
    gamma, b, beta = params.gamma, params.b, params.beta

    def row_fn(x: float, horizon: float) -> TransitionRow:
        if x == 0.0:
            return TransitionRow(density=beta)
        g = float(gamma(np.array([x]))[0])
        bb = float(b(np.array([x]))[0])
        rest = 1.0 - g - bb
        if -1e-15 <= rest < 0.0:
            rest = 0.0
        return TransitionRow(
            points=np.array([0.0, x + 1.0, x]),
            masses=np.array([g, bb, rest]),
        )

    def batch_rows(xs):
        xs = np.asarray(xs, dtype=float)
        g = np.asarray(gamma(xs), dtype=float)
        bb = np.asarray(b(xs), dtype=float)
        rest = np.clip(1.0 - g - bb, 0.0, None)
        pts = np.column_stack([np.zeros_like(xs), xs + 1.0, xs])
        ms = np.column_stack([g, bb, rest])
        return pts, ms

    def step_sampler(xs, rng):
        xs = np.asarray(xs, dtype=float)
        out = np.array(xs, copy=True)
        at0 = xs == 0.0
        if np.any(at0):
            if beta.ppf is None:
                raise ValueError("immigration density lacks an inverse cdf")
            out[at0] = beta.ppf(rng.random(int(np.sum(at0))))
        pos = ~at0
        if np.any(pos):
            x = xs[pos]
            u = rng.random(x.size)
            g = np.asarray(gamma(x), dtype=float)
            bb = np.asarray(b(x), dtype=float)
            out[pos] = np.where(u < g, 0.0, np.where(u < g + bb, x + 1.0, x))
        return out

    return Kernel(
        space=CONTINUOUS,
        row_fn=row_fn,
        name=params.label,
        step_sampler=step_sampler,
        batch_rows=batch_rows,
    )


# ---------------------------------------------------------------------------
# Example 2: hold/step-down/reset chain on Z+
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Example2Params:
    """Immigration beta_j (sum 1), down-steps p_i (i>=1), resets gamma_i (i>=2).

    ``beta_tail(J)`` must return the exact remainder sum_{j>=J} beta_j.
    """

    beta: Callable
    beta_tail: Callable
    p: Callable
    gamma: Callable
    label: str = "example2"


def build_example2(params: Example2Params) -> Kernel:
    beta, beta_tail = params.beta, params.beta_tail
    p, gamma = params.p, params.gamma

    def row_fn(x: float, horizon: float) -> TransitionRow:
        i = int(x)
        if i == 0:
            h = int(horizon)
            js = np.arange(h, dtype=float)
            return TransitionRow(
                points=js,
                masses=np.asarray(beta(js), dtype=float),
                tail_mass=float(beta_tail(h)),
                tail_from=float(h),
            )
        pi = float(p(np.array([i]))[0])
        gi = float(gamma(np.array([i]))[0]) if i >= 2 else 0.0
        rest = 1.0 - pi - gi
        if -1e-15 <= rest < 0.0:
            rest = 0.0
        if i == 1:
            return TransitionRow(points=np.array([0.0, 1.0]),
                                 masses=np.array([pi, rest]))
        return TransitionRow(
            points=np.array([0.0, float(i - 1), float(i)]),
            masses=np.array([gi, pi, rest]),
        )

    def batch_rows(xs):
        xs = np.asarray(xs, dtype=float)
        pi = np.asarray(p(xs), dtype=float)
        gi = np.where(xs >= 2, np.asarray(gamma(np.maximum(xs, 2.0)), float), 0.0)
        rest = np.clip(1.0 - pi - gi, 0.0, None)
        pts = np.column_stack([np.zeros_like(xs), xs - 1.0, xs])
        ms = np.column_stack([gi, pi, rest])
        return pts, ms

    # immigration sampling table, built lazily
    cache: dict = {}

    def _beta_cdf():
        if "cdf" not in cache:
            js = np.arange(2 ** 16, dtype=float)
            cache["cdf"] = np.cumsum(np.asarray(beta(js), dtype=float))
        return cache["cdf"]

    def step_sampler(xs, rng):
        xs = np.asarray(xs, dtype=float)
        out = np.array(xs, copy=True)
        at0 = xs == 0.0
        if np.any(at0):
            cdf = _beta_cdf()
            u = rng.random(int(np.sum(at0)))
            out[at0] = np.searchsorted(cdf, u * cdf[-1], side="left").astype(float)
        pos = ~at0
        if np.any(pos):
            x = xs[pos]
            u = rng.random(x.size)
            pi = np.asarray(p(x), dtype=float)
            gi = np.where(x >= 2, np.asarray(gamma(np.maximum(x, 2.0)), float), 0.0)
            out[pos] = np.where(u < gi, 0.0, np.where(u < gi + pi, x - 1.0, x))
        return out

    return Kernel(
        space=COUNTABLE,
        row_fn=row_fn,
        name=params.label,
        step_sampler=step_sampler,
        batch_rows=batch_rows,
    )


# ---------------------------------------------------------------------------
# AR(1) with standard normal innovations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AR1Params:
    a: float
    label: str = "ar1"

    def __post_init__(self):
        if not (0.0 < abs(self.a) < 1.0):
            raise ValueError("need 0 < |a| < 1")


def build_ar1(params: AR1Params) -> Kernel:
    a = params.a
    inv_sqrt2pi = 1.0 / math.sqrt(2.0 * math.pi)

    def row_fn(x: float, horizon: float) -> TransitionRow:
        mean = a * x

        def pdf(y):
            y = np.asarray(y, dtype=float)
            return inv_sqrt2pi * np.exp(-0.5 * (y - mean) ** 2)

        dens = Density(
            pdf=pdf,
            support=(-math.inf, math.inf),
            total_mass=1.0,
            cdf=lambda y: scipy.special.ndtr(np.asarray(y, float) - mean),
            ppf=lambda u: mean + scipy.special.ndtri(np.asarray(u, float)),
            tag="normal",
        )
        return TransitionRow(density=dens)

    def step_sampler(xs, rng):
        xs = np.asarray(xs, dtype=float)
        return a * xs + rng.standard_normal(xs.size)

    return Kernel(
        space=CONTINUOUS, row_fn=row_fn, name=params.label, step_sampler=step_sampler
    )


# ---------------------------------------------------------------------------
# Preset parameter sets
# ---------------------------------------------------------------------------


def _powerlaw_gamma(r: float):
    def gamma(x):
        return np.maximum(np.asarray(x, dtype=float), 1.0) ** (-r)

    return gamma


def _ex1_powerlaw_params(r: float, beta: Density, label: str) -> Example1Params:
    gamma = _powerlaw_gamma(r)
    return Example1Params(
        gamma=gamma,
        b=lambda x: 1.0 - gamma(x),
        beta=beta,
        gamma_tail_sup=gamma,  # nonincreasing: tail sup is the left value
        gamma_tail_inf=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        label=label,
    )


def _ex1_sin_params(a: float) -> Example1Params:
    if a <= 1.0:
        raise ValueError("need a > 1 for a positive reset-rate floor")

    def gamma(x):
        return 1.0 - np.sin(np.asarray(x, dtype=float)) ** 2 / a

    return Example1Params(
        gamma=gamma,
        b=lambda x: 1.0 - gamma(x),
        beta=uniform_density(),
        gamma_tail_sup=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        gamma_tail_inf=lambda x: np.full_like(np.asarray(x, dtype=float), 1.0 - 1.0 / a),
        label=f"ex1-sin({a:g})",
    )


_ZETA2 = math.pi ** 2 / 6.0


def _ex2_harmonic_params() -> Example2Params:
    def beta(js):
        js = np.asarray(js, dtype=float)
        return np.where(js >= 1, np.maximum(js, 1.0) ** (-2.0) / _ZETA2, 0.0)

    def beta_tail(J):
        # sum_{j>=J} j^-2 via the trigamma closed form
        return float(scipy.special.polygamma(1, max(int(J), 1))) / _ZETA2

    return Example2Params(
        beta=beta,
        beta_tail=beta_tail,
        p=lambda i: 0.5 / np.maximum(np.asarray(i, dtype=float), 1.0),
        gamma=lambda i: 0.5 / np.maximum(np.asarray(i, dtype=float), 2.0),
        label="ex2-harmonic",
    )


def _ex2_nongeo_params(a: float) -> Example2Params:
    if a <= 0:
        raise ValueError("need a > 0")

    def beta(js):
        js = np.asarray(js, dtype=float)
        return 0.5 ** (js + 1.0)

    def p(i):
        i = np.asarray(i, dtype=float)
        return np.where(i >= 2, np.maximum(i, 2.0) ** (-a) / (2.0 * a), 0.5)

    def gamma(i):
        i = np.asarray(i, dtype=float)
        return np.maximum(i, 2.0) ** (-a) / 2.0

    return Example2Params(
        beta=beta,
        beta_tail=lambda J: float(0.5 ** int(J)),
        p=p,
        gamma=gamma,
        label=f"ex2-nongeo({a:g})",
    )


# ---------------------------------------------------------------------------
# Certificate families for the continuous reset-and-climb models
# ---------------------------------------------------------------------------


def _first_window_below_one(gamma, kmax: int = 64) -> int:
    """Smallest integer window start whose reset rate stays below 1."""
    for k in range(1, kmax):
        if float(gamma(np.array([float(k)]))[0]) < 1.0 - 1e-12:
            return k
    raise ValueError("reset rate never drops below 1 on the scanned windows")


def _ex1_ratio_log_table(params: Example1Params, x1: int, k_max: int, sup: bool):
    """log of the window products of (b+gamma)/b from window x1 upward.

    The presets' reset rates are nonincreasing beyond the first window, so
    window extrema sit at the endpoints; entry j is
    log prod_{k=x1}^{x1+j-1} of the window sup (resp. inf) of the ratio.
    """
    ks = np.arange(x1, k_max, dtype=float)
    pts = ks if sup else ks + 1.0
    g = np.asarray(params.gamma(pts), dtype=float)
    bb = np.asarray(params.b(pts), dtype=float)
    with np.errstate(divide="ignore"):
        logr = np.log1p(g / bb)
    return np.concatenate([[0.0], np.cumsum(logr)])


def _table_lookup(logs: np.ndarray, x1: int):
    def log_mag(x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.floor(x).astype(int) - x1, 0, len(logs) - 1)
        return logs[idx]

    return log_mag


def _ex1_transient_family(bundle) -> dict:
    params = bundle.params
    x1 = _first_window_below_one(params.gamma) + 1
    k_max = int(bundle.probe_max)
    logs = _ex1_ratio_log_table(params, x1, k_max, sup=True)
    log_mag = _table_lookup(logs, x1)

    def V(x):
        x = np.asarray(x, dtype=float)
        lm = np.minimum(log_mag(x), 700.0)
        prod = -np.exp(lm)
        out = np.where(x >= x1 + 1, prod, np.where(x >= x1, -1.0, 0.0))
        return out

    pts = bundle.ctx().points()
    usable = pts[np.asarray(log_mag(pts), float) < 600.0]
    return {
        "V": V,
        "C": Region.interval(0.0, float(x1)),
        "log_V": lambda x: np.where(np.asarray(x, float) >= x1 + 1, log_mag(x), 0.0),
        "margin_points": usable,
        "evidence_probes": bundle.ctx().probes,
    }


def _ex1_recurrent_family(bundle) -> dict:
    params = bundle.params
    x1 = _first_window_below_one(params.gamma) + 1
    k_max = int(bundle.probe_max)
    logs = _ex1_ratio_log_table(params, x1, k_max, sup=False)
    log_mag = _table_lookup(logs, x1)
    v0 = math.exp(logs[1]) if len(logs) > 1 else 1.0

    def V(x):
        x = np.asarray(x, dtype=float)
        lm = np.minimum(log_mag(x), 700.0)
        return np.where(x >= x1 + 1, np.exp(lm), v0)

    ctx = bundle.ctx()
    pts = ctx.points()
    usable = pts[np.asarray(log_mag(pts), float) < 600.0]
    # reset into the window floor breaks PV<=V at small x: grow C past the
    # last violating point (the check re-verifies off C independently)
    g = np.asarray(params.gamma(usable), float)
    bb = np.asarray(params.b(usable), float)
    rest = np.clip(1.0 - g - bb, 0.0, None)
    pv = g * v0 + bb * V(usable + 1.0) + rest * V(usable)
    bad = usable[(pv > V(usable) + 1e-12) & (usable > x1)]
    cut = float(x1)
    if bad.size:
        cut = min(float(np.max(bad)) + 1.0, bundle.grid.cutoff / 4.0)
    return {
        "V": V,
        "C": Region.interval(0.0, cut),
        "log_V": log_mag,
        "margin_points": usable,
        "evidence_probes": tuple(p for p in ctx.probes if p < k_max),
    }


def _ex1_ergodic_family(bundle) -> dict:
    params = bundle.params
    x1 = 1.0
    ctx = bundle.ctx()
    pts = ctx.points()
    tail = pts[pts > x1]
    g_next = np.asarray(params.gamma(tail + 1.0), float)
    g_here = np.asarray(params.gamma(tail), float)
    s = float(np.max(1.0 / g_next - 1.0 / g_here))
    if s >= 1.0:
        return {"infeasible": f"reciprocal reset-rate increments reach {s:.3g} >= 1"}
    c = s / (1.0 - s) if s > 0 else 0.0

    def V(x):
        x = np.asarray(x, dtype=float)
        g = np.asarray(params.gamma(np.maximum(x, x1)), float)
        bb = np.asarray(params.b(np.maximum(x, x1)), float)
        return np.where(x <= x1, 0.0, (c * bb + 1.0) / g)

    return {"V": V, "C": Region.interval(0.0, x1), "b": None, "c": c}


def _ex1_strong_family(bundle) -> dict:
    params = bundle.params
    x1 = 1.0
    if params.gamma_tail_inf is None:
        return {"infeasible": "no closed-form tail infimum for the reset rate"}
    floor = float(params.gamma_tail_inf(np.array([x1]))[0])
    if floor <= 1e-9:
        return {"infeasible": "reset rate has no positive tail infimum"}
    beta_drift = floor / 2.0
    # two-level drift function; the single-level form cannot clear
    # PV <= (1-beta)V at the function's minimum
    def V(x):
        x = np.asarray(x, dtype=float)
        return 1.0 + (x > x1).astype(float)

    return {
        "V": V,
        "C": Region.interval(0.0, x1),
        "b": 2.0,
        "beta": beta_drift,
        "bound_hint": 2.0,
    }


def _ex1_nonstrong_family(bundle) -> TestFunctionSequence:
    params = bundle.params
    x1 = 1.0
    gts = params.gamma_tail_sup
    if gts is None:
        raise ValueError("model lacks a closed-form tail sup of the reset rate")
    rungs = tuple(float(4 ** k) for k in range(2, 23))

    def func(n):
        def f(x):
            x = np.asarray(x, dtype=float)
            denom = np.asarray(gts(np.maximum(np.minimum(x, n), x1)), float)
            return np.where(x <= x1, 0.0, 1.0 / denom)

        return f

    def rung_sup(n):
        return 1.0 / float(gts(np.array([float(n)]))[0]), float(n)

    return TestFunctionSequence(
        rungs=rungs,
        func=func,
        target=Region.interval(0.0, x1),
        rung_sup=rung_sup,
        criterion="non-strongly-ergodic",
        notes="reciprocal tail sup of the reset rate, capped at the rung",
    )


def _ex1_nonergodic_family(bundle) -> TestFunctionSequence:
    params = bundle.params
    x1 = 1.0
    gts = params.gamma_tail_sup
    beta_pdf = params.beta.pdf
    rungs = tuple(float(4 ** k) for k in range(2, 23))

    def origin_value(n):
        def integrand(u):
            u = np.asarray(u, dtype=float)
            return beta_pdf(u) / np.asarray(gts(np.minimum(u, n)), float)

        total, a = 0.0, x1
        while a < n:
            bnd = min(a * 4.0, n)
            total += scipy.integrate.quad(integrand, a, bnd, limit=200)[0]
            a = bnd
        return total

    cache = {}

    def c_of(n):
        if n not in cache:
            cache[n] = origin_value(n)
        return cache[n]

    def func(n):
        cn = c_of(n)

        def f(x):
            x = np.asarray(x, dtype=float)
            denom = np.asarray(gts(np.maximum(np.minimum(x, n), x1)), float)
            return np.where(
                x == 0.0, cn, np.where(x <= x1, 0.0, 1.0 / denom)
            )

        return f

    def rung_sup(n):
        return 1.0 / float(gts(np.array([float(n)]))[0]), float(n)

    return TestFunctionSequence(
        rungs=rungs,
        func=func,
        target=Region.interval(0.0, x1),
        rung_sup=rung_sup,
        criterion="non-ergodic",
        notes="tail-sup family with the immigration integral at the origin",
    )


def _ex1_nongeo_family(bundle) -> TestFunctionSequence:
    ns = (8, 10, 12, 14, 16)
    h = bundle.grid.h
    window = 4.0 * ns[-1] ** 2
    fk = bundle.finite(cutoff=window)
    A = bundle.target
    tables = {}
    supports = []
    for n in ns:
        cut = 4.0 * float(n) ** 2
        m = int(round(cut / h))
        sub = FiniteKernel(
            grid=GridScheme(CONTINUOUS, cut, h),
            matrix=fk.matrix[:m, :m].tocsr(),
            escape=np.zeros(m),
            provenance=f"{fk.provenance}|window[0,{cut:g})",
        )
        eq = ConeEquation(base=sub, restriction=A, forcing=np.ones(m),
                          rate=1.0 + 1.0 / n)
        res = solve_minimal(eq, tol=1e-10, cap=1e17, max_iter=200_000)
        if not res.converged:
            raise RuntimeError(f"window solve failed to converge at rung {n}")
        tables[n] = (res.values, sub.grid)
        supports.append(cut)

    def func(n):
        vals, grid = tables[n]

        def f(x):
            x = np.asarray(x, dtype=float)
            idx = np.clip((x // h).astype(int), 0, len(vals) - 1)
            inside = (x >= 0) & (x < grid.cutoff)
            return np.where(inside, vals[idx], 0.0)

        return f

    def rung_sup(n):
        vals, grid = tables[n]
        j = int(np.argmax(vals))
        return float(vals[j]), float(grid.reps[j])

    def check_points(n):
        vals, grid = tables[n]
        beyond = grid.cutoff + np.arange(1.0, 5.0)
        return np.concatenate([grid.reps, beyond])

    return TestFunctionSequence(
        rungs=tuple(float(n) for n in ns),
        func=func,
        target=A,
        rates=tuple(1.0 + 1.0 / n for n in ns),
        rung_sup=rung_sup,
        supports=tuple(supports),
        check_points=check_points,
        points_mode="replace",
        criterion="non-geometrically-ergodic",
        notes="rate-r_n window solutions; margins hold on the window lattice",
    )


def _ex1_dykin_family(bundle) -> dict:
    params = bundle.params
    x1 = 1.0

    def V(x):
        x = np.asarray(x, dtype=float)
        return 1.0 / np.asarray(params.gamma(np.maximum(x, x1)), float)

    def W(x):
        return np.asarray(x, dtype=float)

    ctx = bundle.ctx()
    reps = ctx.grid.reps
    on_a = Region.interval(0.0, x1).contains(reps)
    from .criteria import expectation_at

    pw = expectation_at(ctx, W, reps[on_a])
    d = float(np.max(pw - reps[on_a], initial=0.0)) + 1e-6
    ladder = tuple(16.0 * 4 ** k for k in range(7))
    return {
        "V": V,
        "W": W,
        "A": Region.interval(0.0, x1),
        "ladder": ladder,
        "d": d,
    }


# ---------------------------------------------------------------------------
# Certificate families for the countable models
# ---------------------------------------------------------------------------


def _ex2_recurrent_family(bundle) -> dict:
    def V(x):
        return np.asarray(x, dtype=float)

    return {
        "V": V,
        "C": Region.states([0.0]),
        "log_V": None,
        "margin_points": None,
        "evidence_probes": bundle.ctx().probes,
    }


def _ex2_rate_sum(params: Example2Params, rungs) -> dict:
    """Exact partial sums sum_{k=2}^{n} beta_k/(p_k+gamma_k) at the rungs."""
    marks = {}
    total, start = 0.0, 2
    for n in sorted(int(n) for n in rungs):
        if n >= start:
            js = np.arange(start, n + 1, dtype=float)
            total += float(
                np.sum(params.beta(js) / (params.p(js) + params.gamma(js)))
            )
            start = n + 1
        marks[n] = total
    return marks


def _ex2_nonergodic_family(bundle) -> TestFunctionSequence:
    params = bundle.params
    rungs = tuple(float(4 ** k) for k in range(1, 11))
    S = _ex2_rate_sum(params, rungs)
    p1 = float(params.p(np.array([1.0]))[0])

    def func(n):
        sn = S[int(n)]

        def f(x):
            x = np.asarray(x, dtype=float)
            denom = np.asarray(
                params.p(np.maximum(x, 2.0)) + params.gamma(np.maximum(x, 2.0)), float
            )
            mid = np.where((x >= 2) & (x <= n), 1.0 / denom, 0.0)
            return np.where(x == 0.0, sn, np.where(x == 1.0, 1.0 / p1, mid))

        return f

    def rung_sup(n):
        denom = float(params.p(np.array([n]))[0] + params.gamma(np.array([n]))[0])
        return max(1.0 / denom, 1.0 / p1), float(n)

    def check_points(n):
        return np.array([n - 1.0, n, n + 1.0, n + 2.0])

    return TestFunctionSequence(
        rungs=rungs,
        func=func,
        target=Region.states([0.0]),
        rung_sup=rung_sup,
        supports=rungs,
        check_points=check_points,
        criterion="non-ergodic",
        notes="reciprocal move rates with immigration partial sums at 0",
    )


def _ex2_nonstrong_family(bundle) -> TestFunctionSequence:
    params = bundle.params
    rungs = tuple(float(4 ** k) for k in range(1, 12))

    def func(n):
        def f(x):
            x = np.asarray(x, dtype=float)
            denom = np.asarray(
                params.p(np.maximum(x, 2.0)) + params.gamma(np.maximum(x, 2.0)), float
            )
            return np.where((x >= 2) & (x <= n), 1.0 / denom, 0.0)

        return f

    def rung_sup(n):
        denom = float(params.p(np.array([n]))[0] + params.gamma(np.array([n]))[0])
        return 1.0 / denom, float(n)

    def check_points(n):
        return np.array([n - 1.0, n, n + 1.0, n + 2.0])

    return TestFunctionSequence(
        rungs=rungs,
        func=func,
        target=Region.states([0.0, 1.0]),
        rung_sup=rung_sup,
        supports=rungs,
        check_points=check_points,
        criterion="non-strongly-ergodic",
        notes="reciprocal move rates, zero on {0,1}",
    )


def _ex2_nongeo_family(bundle) -> TestFunctionSequence:
    a = bundle.params_extra["a"]
    rungs = tuple(float(4 ** k) for k in range(1, 11))

    def func(n):
        def f(x):
            x = np.asarray(x, dtype=float)
            return np.where((x >= 1) & (x <= n), np.maximum(x, 1.0) ** a, 0.0)

        return f

    def rung_sup(n):
        return float(n) ** a, float(n)

    def check_points(n):
        return np.array([n - 1.0, n, n + 1.0, n + 2.0])

    return TestFunctionSequence(
        rungs=rungs,
        func=func,
        target=Region.states([0.0]),
        rates=tuple(1.0 + 1.0 / n for n in rungs),
        rung_sup=rung_sup,
        supports=rungs,
        check_points=check_points,
        criterion="non-geometrically-ergodic",
        notes="polynomial rungs with rates 1 + 1/n",
    )


# ---------------------------------------------------------------------------
# Bundles and the preset registry
# ---------------------------------------------------------------------------

_EX1_FAMILY_BUILDERS = {
    "transient": _ex1_transient_family,
    "recurrent": _ex1_recurrent_family,
    "ergodic": _ex1_ergodic_family,
    "strong": _ex1_strong_family,
    "non-strong": _ex1_nonstrong_family,
    "non-ergodic": _ex1_nonergodic_family,
    "non-geometric": _ex1_nongeo_family,
    "non-strong-two-fn": _ex1_dykin_family,
}

_EX2_FAMILY_BUILDERS = {
    "recurrent": _ex2_recurrent_family,
    "non-ergodic": _ex2_nonergodic_family,
    "non-strong": _ex2_nonstrong_family,
    "non-geometric": _ex2_nongeo_family,
}


@dataclass
class ModelBundle:
    """A kernel with its grid, target set, check suite, and calibrated
    certificate families.  Used by criteria.classify and the CLI."""

    name: str
    kernel: Kernel
    grid: GridScheme
    target: Region
    suite: tuple
    params: object
    family_builders: dict
    thresholds: dict = field(default_factory=dict)
    probe_max: float = 1e6
    params_extra: dict = field(default_factory=dict)
    slack_abs: float = 1e-9
    slack_rel: float = 1e-9
    _cache: dict = field(default_factory=dict, repr=False)

    def ctx(self) -> CheckContext:
        if "ctx" not in self._cache:
            self._cache["ctx"] = CheckContext.for_model(
                self.kernel,
                self.grid,
                probe_max=self.probe_max,
                slack_abs=self.slack_abs,
                slack_rel=self.slack_rel,
            )
        return self._cache["ctx"]

    def finite(self, cutoff: Optional[float] = None) -> FiniteKernel:
        cut = float(cutoff) if cutoff is not None else self.grid.cutoff
        key = ("finite", cut)
        if key not in self._cache:
            grid = GridScheme(self.grid.space, cut, self.grid.h)
            self._cache[key] = discretize(self.kernel, grid)
        return self._cache[key]

    def family(self, criterion: str):
        if criterion not in self.family_builders:
            raise ValueError(
                f"criterion {criterion!r} has no bundled test functions for "
                f"model {self.name!r}"
            )
        key = ("family", criterion)
        if key not in self._cache:
            self._cache[key] = self.family_builders[criterion](self)
        return self._cache[key]

    def threshold(self, criterion: str) -> float:
        return float(self.thresholds.get(criterion, 1e6))

    def run_check(self, criterion: str) -> CertificateReport:
        fam = self.family(criterion)
        ctx = self.ctx()
        if isinstance(fam, dict) and "infeasible" in fam:
            return CertificateReport(
                criterion=criterion,
                conditions=(
                    ConditionResult(
                        name="family construction",
                        holds=False,
                        detail=fam["infeasible"],
                    ),
                ),
                divergence=None,
                verdict=INVALID,
                settings={"model": self.name},
            )
        def drop(d, *keys):
            return {k: v for k, v in d.items() if k not in keys}

        if criterion == "transient":
            return check_transient(ctx, **fam)
        if criterion == "recurrent":
            return check_recurrent_drift(ctx, **fam)
        if criterion == "ergodic":
            return check_ergodic_drift(ctx, **drop(fam, "c"))
        if criterion == "strong":
            return check_strong_drift(ctx, **fam)
        if criterion == "non-strong":
            return check_non_strong(
                ctx, fam, A=fam.target, div_threshold=self.threshold(criterion)
            )
        if criterion == "non-ergodic":
            return check_non_ergodic(
                ctx, fam, A=fam.target, div_threshold=self.threshold(criterion)
            )
        if criterion == "non-geometric":
            return check_non_geometric(
                ctx, fam, A=fam.target, div_threshold=self.threshold(criterion)
            )
        if criterion == "non-strong-two-fn":
            return check_non_strong_two_fn(
                ctx, div_threshold=self.threshold(criterion), **fam
            )
        raise ValueError(f"unknown criterion {criterion!r}")


def test_functions_for(bundle: ModelBundle, criterion: str):
    """The bundled test-function family a model brings to a criterion.

    Raises ValueError with an explanation when the criterion has no bundled
    family for this model.
    """
    return bundle.family(criterion)


def _ex1_bundle(params: Example1Params, name: str, suite: tuple,
                thresholds: dict, extra: Optional[dict] = None) -> ModelBundle:
    return ModelBundle(
        name=name,
        kernel=build_example1(params),
        grid=GridScheme(CONTINUOUS, 256.0, 1.0 / 16.0),
        target=Region.interval(0.0, 1.0),
        suite=suite,
        params=params,
        family_builders=_EX1_FAMILY_BUILDERS,
        thresholds=thresholds,
        params_extra=extra or {},
    )


def _ex2_bundle(params: Example2Params, name: str, suite: tuple,
                thresholds: dict, extra: Optional[dict] = None) -> ModelBundle:
    return ModelBundle(
        name=name,
        kernel=build_example2(params),
        grid=GridScheme(COUNTABLE, 4096.0),
        target=Region.states([0.0]),
        suite=suite,
        params=params,
        family_builders=_EX2_FAMILY_BUILDERS,
        thresholds=thresholds,
        params_extra=extra or {},
    )


def preset(name: str, **kw) -> ModelBundle:
    """Build a named preset bundle.

    Names: ex1-powerlaw(r), ex1-pareto(r, delta), ex1-uniform(r),
    ex1-sin(a), ex2-harmonic, ex2-nongeo(a), ar1(a).
    """
    if name == "ex1-powerlaw":
        r = float(kw.pop("r"))
        params = _ex1_powerlaw_params(r, uniform_density(), f"ex1-powerlaw({r:g})")
        return _ex1_bundle(
            params, params.label, ("transient", "recurrent"), {}, {"r": r}
        )
    if name == "ex1-uniform":
        r = float(kw.pop("r"))
        params = _ex1_powerlaw_params(r, uniform_density(), f"ex1-uniform({r:g})")
        return _ex1_bundle(
            params,
            params.label,
            ("recurrent", "ergodic", "non-strong", "non-geometric", "non-ergodic"),
            {"non-strong": 1e6, "non-geometric": 1e6, "non-ergodic": 0.5},
            {"r": r},
        )
    if name == "ex1-pareto":
        r = float(kw.pop("r"))
        delta = float(kw.pop("delta"))
        params = _ex1_powerlaw_params(
            r, pareto_density(delta), f"ex1-pareto({r:g},{delta:g})"
        )
        return _ex1_bundle(
            params,
            params.label,
            ("recurrent", "ergodic", "non-ergodic"),
            {"non-ergodic": 0.5},
            {"r": r, "delta": delta},
        )
    if name == "ex1-sin":
        a = float(kw.pop("a"))
        params = _ex1_sin_params(a)
        return _ex1_bundle(
            params,
            params.label,
            ("strong", "non-strong", "non-geometric", "non-ergodic"),
            {"non-strong": 1e6, "non-geometric": 1e6, "non-ergodic": 0.5},
            {"a": a},
        )
    if name == "ex2-harmonic":
        params = _ex2_harmonic_params()
        return _ex2_bundle(
            params,
            params.label,
            ("recurrent", "non-ergodic", "non-strong"),
            {"non-ergodic": 5.0, "non-strong": 1e6},
        )
    if name == "ex2-nongeo":
        a = float(kw.pop("a"))
        params = _ex2_nongeo_params(a)
        return _ex2_bundle(
            params,
            params.label,
            ("recurrent", "non-geometric"),
            {"non-geometric": 1e6},
            {"a": a},
        )
    if name == "ar1":
        a = float(kw.pop("a"))
        params = AR1Params(a=a, label=f"ar1({a:g})")
        return ModelBundle(
            name=params.label,
            kernel=build_ar1(params),
            grid=GridScheme(CONTINUOUS, 8.0, 1.0 / 16.0),
            target=Region.interval(0.0, 1.0),
            suite=(),
            params=params,
            family_builders={},
            params_extra={"a": a},
        )
    raise ValueError(f"unknown preset {name!r}")


PRESETS = (
    "ex1-powerlaw",
    "ex1-pareto",
    "ex1-uniform",
    "ex1-sin",
    "ex2-harmonic",
    "ex2-nongeo",
    "ar1",
)
