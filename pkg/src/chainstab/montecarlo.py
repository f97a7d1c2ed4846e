"""Monte Carlo oracle: simulate paths, estimate return-time means and tails.

This module is a consistency check on the solvers, never a certificate
source.  Streams are split with numpy's SeedSequence so path batches are
independent and bit-reproducible under any batching; the contract is seeded
determinism, not a named generator.  Paths are independent and statistics
reduce associatively, so batches may run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .kernel import Kernel, Region, row

__all__ = [
    "PathSample",
    "ReturnTimeStats",
    "simulate",
    "estimate_return_time",
    "estimate_tail",
]


@dataclass(frozen=True)
class PathSample:
    """One simulated excursion: first-return step to the target, or censored."""

    seed: int
    start: float
    horizon: int
    return_step: Optional[int]

    @property
    def censored(self) -> bool:
        return self.return_step is None


@dataclass(frozen=True)
class ReturnTimeStats:
    n_paths: int
    n_censored: int
    mean: float
    std_error: float
    survival_steps: tuple  # dyadic step counts
    survival: tuple  # empirical P(tau > n)
    survival_se: tuple
    tail_exponent: Optional[float] = None
    tail_exponent_band: Optional[tuple] = None
    seed: int = 0
    start: float = 0.0
    horizon: int = 0

    @property
    def lower_biased(self) -> bool:
        """Censored paths were dropped from the mean: it is biased low."""
        return self.n_censored > 0


def _row_sampler(kernel: Kernel):
    """Per-state sampling fallback built from row closed forms."""
    cache: dict = {}

    def sample_from(x: float, rng: np.random.Generator, count: int) -> np.ndarray:
        key = float(x)
        if key not in cache:
            r = row(kernel, key)
            branch_mass = math.fsum(r.masses.tolist()) if r.masses.size else 0.0
            cache[key] = (r, branch_mass)
        r, branch_mass = cache[key]
        if r.tail_mass > 1e-6:
            raise ValueError(
                f"row({x}) keeps {r.tail_mass:.3g} unresolved tail mass; "
                "supply a step sampler or raise the horizon"
            )
        out = np.empty(count)
        u = rng.random(count)
        if r.density is None:
            # atoms only (any sub-1e-6 tail is folded into the atom law)
            pick_density = np.zeros(count, dtype=bool)
        else:
            pick_density = u >= branch_mass
        n_atom = int(np.sum(~pick_density))
        if n_atom:
            cum = np.cumsum(r.masses)
            draws = u[~pick_density] * min(branch_mass, cum[-1])
            idx = np.searchsorted(cum, draws, side="left")
            out[~pick_density] = r.points[np.minimum(idx, len(r.points) - 1)]
        n_dens = count - n_atom
        if n_dens:
            if r.density.ppf is None:
                raise ValueError(f"row({x}) is not samplable (no inverse cdf)")
            out[pick_density] = r.density.ppf(rng.random(n_dens))
        return out

    return sample_from


def _advance(kernel: Kernel, xs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if kernel.step_sampler is not None:
        return kernel.step_sampler(xs, rng)
    sampler = _row_sampler(kernel)
    out = np.empty_like(xs)
    for val in np.unique(xs):
        sel = xs == val
        out[sel] = sampler(float(val), rng, int(np.sum(sel)))
    return out


def simulate(kernel: Kernel, x0: float, horizon: int, seed: int,
             target: Optional[Region] = None) -> PathSample:
    """Sample one path until it first returns to the target (default: the
    start state) or the horizon censors it.  Reproducible given the seed."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if target is None:
        target = Region.states([x0])
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = np.array([float(x0)])
    for n in range(1, horizon + 1):
        x = _advance(kernel, x, rng)
        if bool(target.contains(x)[0]):
            return PathSample(seed=seed, start=float(x0), horizon=horizon,
                              return_step=n)
    return PathSample(seed=seed, start=float(x0), horizon=horizon, return_step=None)


def _simulate_batch(kernel: Kernel, target: Region, x0: float, n_paths: int,
                    horizon: int, seed: int) -> np.ndarray:
    """First-return steps for a batch of paths; 0 marks a censored path."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    xs = np.full(n_paths, float(x0))
    taus = np.zeros(n_paths, dtype=np.int64)
    active = np.ones(n_paths, dtype=bool)
    for n in range(1, horizon + 1):
        if not np.any(active):
            break
        xs_active = _advance(kernel, xs[active], rng)
        xs[active] = xs_active
        hit = target.contains(xs_active)
        if np.any(hit):
            idx = np.nonzero(active)[0][hit]
            taus[idx] = n
            active[idx] = False
    return taus


def _stats_from_taus(taus: np.ndarray, seed: int, x0: float,
                     horizon: int) -> ReturnTimeStats:
    censored = int(np.sum(taus == 0))
    obs = taus[taus > 0].astype(float)
    if obs.size:
        mean = float(np.mean(obs))
        se = float(np.std(obs, ddof=1) / math.sqrt(obs.size)) if obs.size > 1 else 0.0
    else:
        mean, se = math.nan, math.nan
    steps = []
    n = 1
    while n <= horizon:
        steps.append(n)
        n *= 2
    n_tot = len(taus)
    surv, surv_se = [], []
    for s in steps:
        # censored paths exceeded the horizon: they survive every s <= horizon
        p = float(np.sum((taus > s) | (taus == 0))) / n_tot
        surv.append(p)
        surv_se.append(math.sqrt(max(p * (1.0 - p), 0.0) / n_tot))
    expo, band = _fit_tail(np.array(steps, float), np.array(surv), n_tot)
    return ReturnTimeStats(
        n_paths=n_tot,
        n_censored=censored,
        mean=mean,
        std_error=se,
        survival_steps=tuple(steps),
        survival=tuple(surv),
        survival_se=tuple(surv_se),
        tail_exponent=expo,
        tail_exponent_band=band,
        seed=seed,
        start=x0,
        horizon=horizon,
    )


def _fit_tail(steps: np.ndarray, surv: np.ndarray, n_paths: int):
    """Least squares of log-survival on log-steps over the last decade of
    dyadic points with usable mass.  Diagnostic only."""
    ok = surv > 10.0 / max(n_paths, 1)
    if int(np.sum(ok)) < 3:
        return None, None
    xs = np.log(steps[ok])
    ys = np.log(surv[ok])
    cut = xs >= xs[-1] - math.log(10.0)
    if int(np.sum(cut)) < 3:
        cut = np.zeros_like(xs, dtype=bool)
        cut[-3:] = True
    x, y = xs[cut], ys[cut]
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope = float(coef[0])
    dof = max(len(x) - 2, 1)
    sigma2 = float(res[0]) / dof if len(res) else 0.0
    sx = float(np.sum((x - np.mean(x)) ** 2))
    se = math.sqrt(sigma2 / sx) if sx > 0 else math.inf
    return slope, (slope - 2 * se, slope + 2 * se)


def estimate_return_time(
    kernel: Kernel,
    target: Region,
    x0: float,
    n_paths: int,
    horizon: int,
    seed: int = 0,
) -> ReturnTimeStats:
    """Sample mean and standard error of the first return time to the target.

    Censored paths are excluded from the mean (reported, and the mean is
    flagged lower-biased whenever any path was censored).
    """
    taus = _simulate_batch(kernel, target, x0, n_paths, horizon, seed)
    return _stats_from_taus(taus, seed, x0, horizon)


def estimate_tail(
    kernel: Kernel,
    target: Region,
    x0: float,
    n_paths: int,
    horizon: int,
    seed: int = 0,
) -> ReturnTimeStats:
    """Empirical survival P(tau > n) at dyadic n with a crude tail-exponent
    fit over the last decade.  Companion diagnostic to the geometric checks:
    geometric ergodicity shows an exponential tail, its absence a heavy one.
    """
    taus = _simulate_batch(kernel, target, x0, n_paths, horizon, seed)
    return _stats_from_taus(taus, seed, x0, horizon)
