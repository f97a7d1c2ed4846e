import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import chainstab as cs
from chainstab import models


def test_specialization_up_step_is_one_minus_reset():
    r = 0.5
    gamma = models._powerlaw_gamma(r)
    general = models.build_example1(models.Example1Params(
        gamma=gamma, b=lambda x: 1.0 - gamma(x), beta=models.uniform_density(),
    ))
    bundled = models.preset("ex1-powerlaw", r=r).kernel
    for x in (0.5, 1.0, 2.0, 7.25, 100.0):
        ra, rb = general.row(x), bundled.row(x)
        assert_allclose(ra.points, rb.points)
        assert_allclose(ra.masses, rb.masses)


def test_example1_row_masses_at_probes():
    b = models.preset("ex1-powerlaw", r=1.0)
    for x in (0.25, 1.0, 4.0, 50.0):
        assert b.kernel.row(x).mass() == pytest.approx(1.0, abs=1e-12)
    r = b.kernel.row(4.0)
    got = dict(zip(r.points.tolist(), r.masses.tolist()))
    assert got[0.0] == pytest.approx(0.25) and got[5.0] == pytest.approx(0.75)


def test_example2_rows():
    b = models.preset("ex2-harmonic")
    r0 = b.kernel.row(0.0, horizon=50)
    assert_allclose(r0.points[:4], [0, 1, 2, 3])
    assert r0.masses[0] == 0.0
    assert r0.masses[1] == pytest.approx(6.0 / math.pi ** 2)

    r1 = b.kernel.row(1.0)
    got = dict(zip(r1.points.tolist(), r1.masses.tolist()))
    assert got[0.0] == pytest.approx(0.5) and got[1.0] == pytest.approx(0.5)

    r5 = b.kernel.row(5.0)
    got = dict(zip(r5.points.tolist(), r5.masses.tolist()))
    assert got[0.0] == pytest.approx(0.1)   # reset
    assert got[4.0] == pytest.approx(0.1)   # down-step
    assert got[5.0] == pytest.approx(0.8)   # hold


def test_example2_invariants():
    b = models.preset("ex2-harmonic")
    r0 = b.kernel.row(0.0)
    assert r0.mass() == pytest.approx(1.0, abs=1e-10)
    nongeo = models.preset("ex2-nongeo", a=1.0)
    i = np.arange(2.0, 100.0)
    move = nongeo.params.p(i) + nongeo.params.gamma(i)
    assert np.all(move > 0) and np.all(move <= 1)
    # defining inequality of the slow preset: gamma_i + a p_i <= i^-a
    assert np.all(nongeo.params.gamma(i) + 1.0 * nongeo.params.p(i)
                  <= i ** -1.0 + 1e-15)


def test_ar1_rows():
    b = models.preset("ar1", a=0.5)
    full = cs.Region.interval(-math.inf, math.inf)
    one = lambda y: np.ones_like(np.asarray(y, float))
    ident = lambda y: np.asarray(y, float)
    assert cs.integrate(b.kernel, 3.0, one, full) == pytest.approx(1.0, abs=1e-8)
    # mean of the row at x is a*x (quadrature oracle)
    assert cs.integrate(b.kernel, 3.0, ident, full) == pytest.approx(1.5, abs=1e-6)
    # standard normal density at the origin row
    r = b.kernel.row(0.0)
    assert r.density.pdf(np.array([0.0]))[0] == pytest.approx(
        1.0 / math.sqrt(2 * math.pi))
    with pytest.raises(ValueError):
        models.AR1Params(a=1.5)


def test_pareto_density_closed_form_and_quadrature():
    d = models.pareto_density(0.5)
    assert d.cdf(np.array([1e12]))[0] == pytest.approx(1.0, abs=1e-6)
    # numeric mass via the quadrature ladder
    k = models.build_example1(models.Example1Params(
        gamma=models._powerlaw_gamma(0.5),
        b=lambda x: 1.0 - models._powerlaw_gamma(0.5)(x),
        beta=d,
    ))
    one = lambda y: np.ones_like(np.asarray(y, float))
    total = cs.integrate(k, 0.0, one, cs.Region.interval(0.0, math.inf),
                         quad_tol=1e-12)
    assert total == pytest.approx(1.0, abs=1e-10)
    # inverse cdf round-trip
    us = np.linspace(0.01, 0.99, 23)
    assert_allclose(d.cdf(d.ppf(us)), us, atol=1e-12)


def test_uniform_density_sampling_support():
    d = models.uniform_density()
    us = np.linspace(0.0, 1.0, 11)
    assert_allclose(d.ppf(us), us)


def test_bundled_families_match_stated_forms():
    # tail-sup family on the power-law preset: V^(n)(x) = (x ^ n)^r off A
    b = models.preset("ex1-uniform", r=0.5)
    fam = models.test_functions_for(b, "non-strong")
    n = 256.0
    xs = np.array([0.5, 2.0, 100.0, n, 1e6])
    vals = fam.func(n)(xs)
    assert vals[0] == 0.0
    assert vals[1] == pytest.approx(2.0 ** 0.5)
    assert vals[2] == pytest.approx(100.0 ** 0.5)
    assert vals[4] == pytest.approx(n ** 0.5)

    # polynomial rungs with rates 1 + 1/n on the slow countable preset
    b2 = models.preset("ex2-nongeo", a=1.0)
    fam2 = models.test_functions_for(b2, "non-geometric")
    assert fam2.rates == tuple(1.0 + 1.0 / n for n in fam2.rungs)
    v = fam2.func(16.0)(np.array([0.0, 3.0, 16.0, 17.0]))
    assert_allclose(v, [0.0, 3.0, 16.0, 0.0])


def test_nonergodic_family_origin_integral():
    # V^(n)(0) = integral of beta(u) u^r over (1, n) — log-growing for the
    # matched-index heavy-tail preset (closed form: ln(n)/3 for delta = r = 1/2)
    b = models.preset("ex1-pareto", r=0.5, delta=0.5)
    fam = models.test_functions_for(b, "non-ergodic")
    for n in (16.0, 256.0):
        got = fam.func(n)(np.array([0.0]))[0]
        assert got == pytest.approx(math.log(n) / 3.0, rel=1e-6)
    # zero on the rest of the target, tail-sup form off it
    v = fam.func(16.0)(np.array([0.5, 1.0, 4.0]))
    assert v[0] == 0.0 and v[1] == 0.0 and v[2] == pytest.approx(2.0)


def test_ergodic_family_constant_resolution():
    b = models.preset("ex1-uniform", r=0.5)
    fam = b.family("ergodic")
    # c = s/(1-s) with s the sup of the reciprocal reset-rate increments,
    # attained at the window edge
    c = fam["c"]
    pts = b.ctx().points()
    tail = pts[pts > 1.0]
    s = float(np.max(np.sqrt(tail + 1.0) - np.sqrt(tail)))
    assert c == pytest.approx(s / (1.0 - s), rel=1e-9)


def test_ergodic_family_infeasible_when_increments_reach_one():
    params = models.Example1Params(
        gamma=lambda x: 1.0 / (1.0 + np.asarray(x, float) ** 2),
        b=lambda x: 1.0 - 1.0 / (1.0 + np.asarray(x, float) ** 2),
        beta=models.uniform_density(),
        gamma_tail_sup=lambda x: 1.0 / (1.0 + np.asarray(x, float) ** 2),
    )
    bundle = models.ModelBundle(
        name="quad", kernel=models.build_example1(params),
        grid=cs.GridScheme(cs.CONTINUOUS, 64.0, 1.0 / 16.0),
        target=cs.Region.interval(0.0, 1.0), suite=("ergodic",),
        params=params, family_builders=models._EX1_FAMILY_BUILDERS,
    )
    rep = bundle.run_check("ergodic")
    assert not rep.valid
    assert "construction" in rep.conditions[0].name


def test_preset_registry():
    with pytest.raises(ValueError):
        models.preset("no-such-model")
    with pytest.raises(ValueError):
        models.preset("ex1-sin", a=0.5)
    for name in models.PRESETS:
        kw = {"ex1-powerlaw": {"r": 1.0}, "ex1-pareto": {"r": 0.5, "delta": 0.5},
              "ex1-uniform": {"r": 0.5}, "ex1-sin": {"a": 2.0},
              "ex2-harmonic": {}, "ex2-nongeo": {"a": 1.0},
              "ar1": {"a": 0.5}}[name]
        b = models.preset(name, **kw)
        assert b.kernel.space in (cs.CONTINUOUS, cs.COUNTABLE)


def test_every_bundled_family_passes_own_preconditions():
    # run the whole suite on each classification preset: no exceptions, and
    # every report carries the claimed conditions
    from chainstab.criteria import classify

    cases = [("ex1-powerlaw", {"r": 2.0}), ("ex1-sin", {"a": 2.0}),
             ("ex2-harmonic", {})]
    for name, kw in cases:
        b = models.preset(name, **kw)
        cls = classify(b)
        assert set(cls.reports) == set(b.suite)


# ---------------------------------------------------------------------------
# general parameters: hold mass (b + gamma < 1)
# ---------------------------------------------------------------------------


def _general_ex1_bundle(gamma, b, label, suite):
    params = models.Example1Params(
        gamma=gamma, b=b, beta=models.uniform_density(),
        gamma_tail_sup=gamma,  # nonincreasing rates in these constructions
        gamma_tail_inf=lambda x: np.zeros_like(np.asarray(x, float)),
        label=label,
    )
    return models.ModelBundle(
        name=label,
        kernel=models.build_example1(params),
        grid=cs.GridScheme(cs.CONTINUOUS, 256.0, 1.0 / 16.0),
        target=cs.Region.interval(0.0, 1.0),
        suite=suite,
        params=params,
        family_builders=models._EX1_FAMILY_BUILDERS,
    )


def test_hold_mass_rows():
    gamma = models._powerlaw_gamma(2.0)
    b = lambda x: 0.5 * (1.0 - gamma(x))
    bundle = _general_ex1_bundle(gamma, b, "ex1-hold", ())
    r = bundle.kernel.row(4.0)
    got = dict(zip(r.points.tolist(), r.masses.tolist()))
    assert got[0.0] == pytest.approx(1.0 / 16.0)
    assert got[5.0] == pytest.approx(15.0 / 32.0)
    assert got[4.0] == pytest.approx(15.0 / 32.0)  # hold
    assert r.mass() == pytest.approx(1.0, abs=1e-12)


def test_hold_mass_transient_certificate():
    # the reset-to-climb ratio is summable, so the window products converge
    gamma = models._powerlaw_gamma(2.0)
    b = lambda x: 0.5 * (1.0 - gamma(x))
    bundle = _general_ex1_bundle(gamma, b, "ex1-hold-transient",
                                 ("transient", "recurrent"))
    assert bundle.run_check("transient").valid
    assert not bundle.run_check("recurrent").valid


def test_hold_mass_recurrent_certificate():
    gamma = models._powerlaw_gamma(0.5)
    b = lambda x: 0.8 * (1.0 - gamma(x))
    bundle = _general_ex1_bundle(gamma, b, "ex1-hold-recurrent",
                                 ("transient", "recurrent"))
    assert bundle.run_check("recurrent").valid
    assert not bundle.run_check("transient").valid


def test_hold_mass_solver_agrees_with_simulation():
    from chainstab import montecarlo as mc

    gamma = models._powerlaw_gamma(0.5)
    b = lambda x: 0.8 * (1.0 - gamma(x))
    bundle = _general_ex1_bundle(gamma, b, "ex1-hold-mc", ())
    A = cs.Region.interval(0.0, 1.0)
    fk = bundle.finite(cutoff=64.0)
    sol = cs.expected_return_time(fk, A, tol=1e-12)
    i = fk.grid.bin_of(5.0)
    stats = mc.estimate_return_time(bundle.kernel, A,
                                    x0=float(fk.grid.reps[i]),
                                    n_paths=20_000, horizon=100_000, seed=31)
    assert abs(stats.mean - sol.values[i]) < 3 * stats.std_error + 1e-9


def test_family_requires_tail_sup_closed_form():
    params = models.Example1Params(
        gamma=models._powerlaw_gamma(0.5),
        b=lambda x: 1.0 - models._powerlaw_gamma(0.5)(x),
        beta=models.uniform_density(),
    )
    bundle = models.ModelBundle(
        name="no-tail", kernel=models.build_example1(params),
        grid=cs.GridScheme(cs.CONTINUOUS, 64.0, 1.0 / 16.0),
        target=cs.Region.interval(0.0, 1.0), suite=(),
        params=params, family_builders=models._EX1_FAMILY_BUILDERS,
    )
    with pytest.raises(ValueError, match="tail sup"):
        bundle.family("non-strong")


def test_nongeo_window_solutions_match_backward_recursion():
    # independent oracle: off the target the restricted operator only moves
    # up the lattice, so the window solution obeys
    # V(x) = 1 + r (1 - gamma(x)) V(x+1) with V = 0 beyond the window
    b = models.preset("ex1-uniform", r=0.5)
    fam = models.test_functions_for(b, "non-geometric")
    n = fam.rungs[0]
    r = fam.rates[0]
    cut = fam.supports[0]
    h = b.grid.h
    m = int(cut / h)
    reps = (np.arange(m) + 0.5) * h
    reps[0] = 0.0
    oracle = np.zeros(m + 16)
    for i in range(m - 1, -1, -1):
        x = reps[i]
        if x <= 1.0:
            oracle[i] = 1.0
        else:
            g = float(b.params.gamma(np.array([x]))[0])
            oracle[i] = 1.0 + r * (1.0 - g) * oracle[i + 16]
    got = fam.func(n)(reps)
    assert np.max(np.abs(got - oracle[:m]) / (1.0 + oracle[:m])) < 1e-9
