import numpy as np
import pytest
from numpy.testing import assert_allclose

import chainstab as cs

from conftest import dense_minimal_oracle, finite_from_matrix


A0 = cs.Region.states([0])


def eq_for(fk, g=None, rate=1.0, target=A0):
    if g is None:
        g = np.ones(fk.n)
    return cs.ConeEquation(base=fk, restriction=target, forcing=np.asarray(g, float),
                           rate=rate)


def test_three_state_return_time(chain3):
    res = cs.solve_minimal(eq_for(chain3))
    assert res.converged
    assert_allclose(res.values, [2.5, 1.5, 1.0], atol=1e-10)


def test_zero_forcing_fixed_immediately(chain3):
    res = cs.solve_minimal(eq_for(chain3, g=np.zeros(3)))
    assert res.converged
    assert res.iterations == 1
    assert_allclose(res.values, 0.0)


def test_matches_dense_oracle_substochastic():
    rng = np.random.default_rng(7)
    n = 50
    P = rng.random((n, n))
    P *= 0.9 / P.sum(axis=1, keepdims=True)
    fk = finite_from_matrix(P)
    g = np.ones(n)
    res = cs.solve_minimal(eq_for(fk, g=g), tol=1e-12)
    oracle = dense_minimal_oracle(P, fk.grid.mask(A0), g)
    assert res.converged
    assert np.max(np.abs(res.values - oracle)) < 1e-8


def test_forcing_scaling_linearity(chain3):
    base = cs.solve_minimal(eq_for(chain3), tol=1e-12)
    scaled = cs.solve_minimal(eq_for(chain3, g=3.5 * np.ones(3)), tol=1e-12)
    assert_allclose(scaled.values, 3.5 * base.values, rtol=1e-9)


def test_growth_log_monotone(chain3):
    res = cs.solve_minimal(eq_for(chain3))
    sups = [s for _, s in res.growth_log]
    assert all(b >= a - 1e-12 for a, b in zip(sups, sups[1:]))


def test_divergence_cap_certificate():
    # r * P on the transient direction blows up; values must be flagged,
    # never reported as a finite converged solution
    P = np.array([[0.0, 1.0], [0.0, 0.999]])
    fk = finite_from_matrix(P)
    res = cs.solve_minimal(eq_for(fk, rate=1.01), cap=1e6)
    assert res.status == "diverged"
    assert 1 in res.diverged_states
    assert np.isinf(res.values[1])


def test_iteration_cap_is_inconclusive(chain3):
    res = cs.solve_minimal(eq_for(chain3), tol=1e-30, max_iter=3)
    assert res.status == "iteration-cap"


def test_rate_below_one_rejected(chain3):
    with pytest.raises(ValueError):
        eq_for(chain3, rate=0.5)
    with pytest.raises(ValueError):
        cs.solve_minimal(eq_for(chain3), tol=-1.0)


def test_warm_start_subsolution(chain3):
    cold = cs.solve_minimal(eq_for(chain3), tol=1e-12)
    warm = cs.solve_minimal(eq_for(chain3), tol=1e-12,
                            start=0.9 * cold.values)
    assert_allclose(warm.values, cold.values, atol=1e-9)
    with pytest.raises(ValueError):
        cs.solve_minimal(eq_for(chain3), start=10.0 + cold.values)


# ---------------------------------------------------------------------------
# super/sub-solution certification
# ---------------------------------------------------------------------------


def test_supersolution_dominates(chain3):
    eq = eq_for(chain3)
    rep = cs.verify_supersolution(eq, np.array([3.0, 2.0, 1.5]))
    assert rep.is_supersolution and rep.dominates_minimal


def test_minimal_solution_is_boundary_supersolution(chain3):
    eq = eq_for(chain3)
    res = cs.solve_minimal(eq, tol=1e-12)
    rep = cs.verify_supersolution(eq, res.values, minimal=res)
    assert rep.is_supersolution and rep.dominates_minimal


def test_zero_fails_supersolution(chain3):
    rep = cs.verify_supersolution(eq_for(chain3), np.zeros(3))
    assert not rep.is_supersolution
    assert rep.min_margin == pytest.approx(-1.0)
    assert rep.witness is not None


def test_subsolution_domination(chain3):
    eq = eq_for(chain3)
    res = cs.solve_minimal(eq, tol=1e-12)
    rep = cs.verify_subsolution_domination(eq, 0.5 * res.values, p=1.0,
                                           minimal=res)
    assert rep.is_subsolution and rep.bounded_by_p_times_minimal
    assert rep.conclusion_holds

    boundary = cs.verify_subsolution_domination(eq, res.values, p=1.0,
                                                minimal=res)
    assert boundary.is_subsolution and boundary.conclusion_holds

    above = cs.verify_subsolution_domination(eq, 2.0 * res.values, p=2.0,
                                             minimal=res)
    assert not above.is_subsolution


def test_subsolution_with_divergent_minimal():
    P = np.array([[0.0, 1.0], [0.0, 0.999]])
    fk = finite_from_matrix(P)
    eq = eq_for(fk, rate=1.01)
    rep = cs.verify_subsolution_domination(eq, np.zeros(2), p=1.0)
    assert "diverged" in rep.note


# ---------------------------------------------------------------------------
# randomized invariants
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_random_systems_match_oracle_and_scale(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 60))
    P = rng.random((n, n)) * (rng.random((n, n)) < 0.3)
    rowsum = P.sum(axis=1, keepdims=True)
    P = P * (rng.uniform(0.3, 0.95) / np.maximum(rowsum, 1e-12))
    g = rng.random(n)
    fk = finite_from_matrix(P)
    res = cs.solve_minimal(eq_for(fk, g=g), tol=1e-13)
    oracle = dense_minimal_oracle(P, fk.grid.mask(A0), g)
    assert np.max(np.abs(res.values - oracle)) < 1e-8
    c = float(rng.uniform(0.1, 10.0))
    res_c = cs.solve_minimal(eq_for(fk, g=c * g), tol=1e-13)
    assert_allclose(res_c.values, c * res.values, rtol=1e-8, atol=1e-10)
