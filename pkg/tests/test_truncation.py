import numpy as np
import pytest
from numpy.testing import assert_allclose

import chainstab as cs
from chainstab import models


A01 = cs.Region.states([0, 1])


def test_rows_unchanged_when_supported_inside(chain3):
    aug = cs.truncate(chain3, 3.0, cs.Region.states([0]))
    base = chain3.matrix.toarray()
    got = aug.matrix.toarray()
    assert_allclose(got[1], base[1], atol=1e-15)
    assert_allclose(got[2], base[2], atol=1e-15)
    # target row replaced by the normalized reference measure
    assert_allclose(got[0], [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_target_rows_uniform_reseed():
    b = models.preset("ex2-harmonic")
    fk = b.finite(cutoff=64.0)
    aug = cs.truncate(fk, 10.0, cs.Region.states([0]))
    assert_allclose(aug.matrix[0].toarray().ravel(), np.full(10, 0.1),
                    atol=1e-15)


def test_escape_redirected_into_target():
    b = models.preset("ex2-harmonic")
    fk = b.finite(cutoff=64.0)
    aug = cs.truncate(fk, 8.0, A01)
    base = fk.matrix[:8, :8].toarray()
    got = aug.matrix.toarray()
    esc = 1.0 - base.sum(axis=1)
    for i in (2, 5, 7):
        expected = base[i].copy()
        expected[0] += esc[i] * 0.5
        expected[1] += esc[i] * 0.5
        assert_allclose(got[i], expected, atol=1e-14)


def test_ar1_augmented_row_shape():
    # density row + escape spread uniformly over the target interval
    ar = models.preset("ar1", a=0.5)
    grid = cs.GridScheme(cs.CONTINUOUS, 6.0, 0.125)
    fk = cs.discretize(ar.kernel, grid)
    A = cs.Region.interval(0.0, 1.0)
    aug = cs.truncate(fk, 4.0, A)
    m = aug.n
    base = fk.matrix[:m, :m].toarray()
    esc = 1.0 - base.sum(axis=1)
    amask = grid.mask(A)[:m]
    w = np.where(amask, grid.h, 0.0)
    w /= w.sum()
    i = grid.bin_of(2.0)
    assert_allclose(aug.matrix[i].toarray().ravel(), base[i] + esc[i] * w,
                    atol=1e-12)
    assert_allclose(aug.row_sums(), 1.0, atol=1e-12)


def test_row_stochasticity_across_ladders():
    for name, kw, cut, A in [
        ("ex1-uniform", {"r": 0.5}, 64.0, cs.Region.interval(0.0, 1.0)),
        ("ex1-pareto", {"r": 0.5, "delta": 0.5}, 64.0,
         cs.Region.interval(0.0, 1.0)),
        ("ex2-harmonic", {}, 256.0, A01),
    ]:
        b = models.preset(name, **kw)
        fk = b.finite(cutoff=cut)
        c = 2.0
        while c <= cut:
            aug = cs.truncate(fk, c, A)
            assert np.max(np.abs(aug.row_sums() - 1.0)) <= 1e-12
            c *= 2.0


def test_family_validation(chain3):
    with pytest.raises(ValueError):
        cs.TruncationFamily(base=chain3, target=cs.Region.states([0]),
                            ladder=())
    with pytest.raises(ValueError):
        cs.TruncationFamily(base=chain3, target=cs.Region.states([0]),
                            ladder=(2.0, 2.0))
    with pytest.raises(ValueError):
        cs.TruncationFamily(base=chain3, target=cs.Region.states([0]),
                            ladder=(2.0, 8.0))  # beyond the base window
    with pytest.raises(ValueError):
        # target outside the first window
        cs.TruncationFamily(base=chain3, target=cs.Region.states([2]),
                            ladder=(1.0, 3.0))
    with pytest.raises(ValueError):
        cs.truncate(chain3, 2.0, cs.Region.states([2]))  # zero target mass


def test_single_full_rung_equals_direct_solve(chain3):
    fam = cs.TruncationFamily(base=chain3, target=cs.Region.states([0]),
                              ladder=(3.0,))
    seq = cs.hitting_sequence(fam, tol=1e-12)
    direct = cs.expected_return_time(chain3, cs.Region.states([0]), tol=1e-12)
    off = ~chain3.grid.mask(cs.Region.states([0]))
    assert_allclose(seq.final_values[off], direct.values[off], atol=1e-9)


def test_ladder_monotone_and_converging():
    b = models.preset("ex1-uniform", r=0.5)
    fk = b.finite()
    fam = cs.TruncationFamily(base=fk, target=b.target,
                              ladder=(2, 4, 8, 16, 32, 64, 128, 256))
    seq = cs.hitting_sequence(fam, tol=1e-10)
    sups = np.array(seq.sup_sequence)
    assert np.all(np.diff(sups) >= -1e-8)
    assert seq.tail_agreement < 0.01
    # pointwise monotone off the target on shared states
    off = ~fk.grid.mask(b.target)
    for a, bb in zip(seq.rungs, seq.rungs[1:]):
        m = a.kernel.n
        gap = a.values[off[:m]] - bb.values[:m][off[:m]]
        assert float(np.max(gap, initial=0.0)) < 1e-6


def test_harmonic_rungs_match_closed_form():
    # single-death structure: E_i = 2(i-1) for i >= 2 when the move rate is
    # 1/i split evenly between down-step and reset, independent of the window
    b = models.preset("ex2-harmonic")
    fk = b.finite(cutoff=512.0)
    fam = cs.TruncationFamily(base=fk, target=A01, ladder=(4, 64, 512))
    seq = cs.hitting_sequence(fam, tol=1e-10)
    vals = seq.final_values
    i = np.arange(2, 512)
    assert np.max(np.abs(vals[2:] - 2.0 * (i - 1.0))) < 1e-6
    assert seq.sup_sequence[-1] == pytest.approx(2.0 * 510.0, rel=1e-8)


def test_lower_bound_functions_properties():
    b = models.preset("ex2-harmonic")
    fk = b.finite(cutoff=256.0)
    fam = cs.TruncationFamily(base=fk, target=A01, ladder=(4, 16, 64, 256))
    seq = cs.hitting_sequence(fam, tol=1e-10)
    tfs = cs.lower_bound_functions(seq)
    reps = fk.grid.reps
    off = ~fk.grid.mask(A01)
    P = fk.matrix
    for cutoff in tfs.rungs:
        w = tfs.func(cutoff)(reps)
        # zero on the target and beyond the window
        assert np.all(w[~off] == 0.0)
        assert np.all(w[reps >= cutoff] == 0.0)
        assert np.all(np.isfinite(w))
        # drift lower-bound inequality against the base kernel
        margins = np.asarray(P @ w).ravel() - w + 1.0
        assert float(np.min(margins[off])) > -1e-6


def test_single_rung_witness_equals_return_time(chain3):
    fam = cs.TruncationFamily(base=chain3, target=cs.Region.states([0]),
                              ladder=(3.0,))
    seq = cs.hitting_sequence(fam, tol=1e-12)
    tfs = cs.lower_bound_functions(seq)
    direct = cs.expected_return_time(chain3, cs.Region.states([0]), tol=1e-12)
    w = tfs.func(3.0)(np.array([0.0, 1.0, 2.0]))
    assert w[0] == 0.0
    assert_allclose(w[1:], direct.values[1:], atol=1e-9)


def test_all_rungs_exact_when_base_supported_in_first_window():
    # base chain lives on {0,1,2}; wider windows change nothing off target
    from conftest import countable_kernel

    k = countable_kernel(
        [([1.0], [1.0]), ([0.0, 2.0], [0.5, 0.5]), ([0.0], [1.0])]
        + [([float(i)], [1.0]) for i in range(3, 6)],
        name="chain3-padded",
    )
    grid = cs.GridScheme(cs.COUNTABLE, 6.0)
    fk = cs.discretize(k, grid)
    A = cs.Region.states([0])
    fam = cs.TruncationFamily(base=fk, target=A, ladder=(3.0, 6.0))
    seq = cs.hitting_sequence(fam, tol=1e-12)
    direct = cs.expected_return_time(fk, A, tol=1e-12)
    off = ~grid.mask(A)
    for rung in seq.rungs:
        m = rung.kernel.n
        got = rung.values[:3][off[:3]]
        assert_allclose(got, direct.values[:3][off[:3]], atol=1e-9)


def test_stable_ladder_produces_no_certificate():
    # uniformly bounded return times: the witness sups stabilize and the
    # non-strong check must not validate
    from chainstab import criteria

    b = models.preset("ex1-sin", a=2.0)
    fk = b.finite(cutoff=128.0)
    A = cs.Region.interval(0.0, 1.0)
    fam = cs.TruncationFamily(base=fk, target=A,
                              ladder=(2, 4, 8, 16, 32, 64, 128))
    seq = cs.hitting_sequence(fam, tol=1e-10)
    sups = np.array(seq.sup_sequence)
    assert sups[-1] < 2.0 * sups[1]  # stabilized, no divergence

    tfs = cs.lower_bound_functions(seq)
    ctx = criteria.CheckContext.for_model(b.kernel, fk.grid, probe_max=1e6)
    rep = criteria.check_non_strong(ctx, tfs, A=A, div_threshold=100.0)
    assert rep.verdict != "certificate-valid"
