"""Intertwiners, imitator closures, and cycle structure on finite classes."""

import numpy as np
import pytest

from mechid import (
    AffineMechanism,
    FunctionBijection,
    GeneralMechanism,
    MechanismClass,
    affine_equivariances,
    check_imitation,
    cycle_analysis,
    find_affine_intertwiners,
    imitator_closure,
)
from mechid.errors import BudgetExceededError, ToleranceAmbiguityError
from mechid.maps import AffineMap, compose, map_power
from mechid.rng import stream

from conftest import ROT90, SWAP, distinct_eig_mechanism, random_invertible, rotation

DIAG23 = AffineMechanism(np.diag([2.0, 3.0]), np.zeros(2))
DIAG32 = AffineMechanism(np.diag([3.0, 2.0]), np.zeros(2))


def test_intertwiners_between_swapped_diagonals_are_antidiagonal():
    fam = find_affine_intertwiners(DIAG23, DIAG32)
    assert fam.dimension == 2
    gen = stream(71)
    for _ in range(10):
        A, p = fam.element(gen.standard_normal(2))
        # A diag(2,3) = diag(3,2) A forces the diagonal to vanish
        assert abs(A[0, 0]) < 1e-9 and abs(A[1, 1]) < 1e-9
        assert np.allclose(p, 0.0, atol=1e-9)
    rep = fam.representative(seed=0)
    assert rep is not None
    assert check_imitation(rep, DIAG23, DIAG32).passed


def test_self_intertwiners_are_equivariances():
    m = AffineMechanism(np.array([[1.1, 0.3], [0.0, 0.7]]), np.array([0.2, -0.4]))
    inter = find_affine_intertwiners(m, m)
    equi = affine_equivariances(m).family
    assert inter.dimension == equi.dimension
    gen = stream(73)
    for _ in range(8):
        c = gen.standard_normal(inter.dimension)
        A, p = inter.element(c)
        assert equi.membership_defect(A, p) < 1e-8
        A2, p2 = equi.element(c)
        assert inter.membership_defect(A2, p2) < 1e-8


def test_disjoint_spectra_leave_only_zero():
    fam = find_affine_intertwiners(DIAG23, AffineMechanism(np.diag([4.0, 5.0]), np.zeros(2)))
    assert fam.dimension == 0
    assert np.allclose(fam.particular_A, 0.0, atol=1e-10)
    assert fam.representative(seed=0) is None


def test_exp_intertwines_sum_with_product():
    d = 3
    c = np.array([0.4, -0.3, 0.2])
    m_sum = AffineMechanism(np.eye(d), c)
    m_prod = AffineMechanism(np.diag(np.exp(c)), np.zeros(d))
    a = FunctionBijection(np.exp, np.log, dim=d)
    grid = stream(79).uniform(-1.5, 1.5, (128, d))
    assert check_imitation(a, m_sum, m_prod, grid=grid, tol=1e-12).passed
    assert not check_imitation(a, m_prod, m_sum, grid=grid, tol=1e-6).passed


def test_identity_mechanisms_imitated_by_any_bijection():
    ident = AffineMechanism(np.eye(2), np.zeros(2))
    a = FunctionBijection(np.sinh, np.arcsinh, dim=2)
    assert check_imitation(a, ident, ident).passed


def test_distinct_scalings_never_imitate_affinely():
    m2 = AffineMechanism(2.0 * np.eye(2), np.zeros(2))
    m3 = AffineMechanism(3.0 * np.eye(2), np.zeros(2))
    gen = stream(83)
    for _ in range(50):
        a = AffineMap(random_invertible(gen, 2), gen.standard_normal(2))
        assert not check_imitation(a, m2, m3, tol=1e-6).passed
    # and the linear solve agrees: the solution space is trivial
    fam = find_affine_intertwiners(m2, m3)
    assert fam.dimension == 0 and fam.representative(seed=0) is None


def test_nonfinite_evaluation_raises():
    from mechid.errors import NonFiniteSampleError

    bad = GeneralMechanism(fn=lambda z: np.full_like(z, np.nan), dim=2, label="bad")
    a = AffineMap(np.eye(2), np.zeros(2))
    with pytest.raises(NonFiniteSampleError):
        check_imitation(a, bad, bad)


# ---------------------------------------------------------------------------
# closures


def test_closure_single_mechanism_equals_equivariances():
    cls = MechanismClass(used=(DIAG23,))
    closure = imitator_closure(cls)
    assert len(closure.assignments) == 1
    fam = closure.assignments[0].family
    equi = affine_equivariances(DIAG23).family
    assert fam.dimension == equi.dimension
    gen = stream(89)
    for _ in range(6):
        c = gen.standard_normal(fam.dimension)
        A, p = fam.element(c)
        assert equi.membership_defect(A, p) < 1e-8


def test_closure_spectrum_pruning_forces_identity_assignment():
    cls = MechanismClass(used=(DIAG23, AffineMechanism(ROT90, np.zeros(2))))
    closure = imitator_closure(cls)
    assert closure.candidates_total == 4
    assert closure.candidates_after_pruning == 1
    assert len(closure.assignments) == 1
    assert closure.assignments[0].assignment == (0, 1)
    # shared family is the scalars
    fam = closure.assignments[0].family
    A, p = fam.element(np.ones(fam.dimension))
    off = A - np.diag(np.diag(A))
    assert np.abs(off).max() < 1e-9
    assert abs(A[0, 0] - A[1, 1]) < 1e-9


def test_closure_includes_swap_assignment():
    cls = MechanismClass(used=(DIAG23,), hypothesized=(DIAG32,))
    closure = imitator_closure(cls)
    assignments = {a.assignment for a in closure.assignments}
    assert assignments == {(0,), (1,)}
    by_assignment = {a.assignment: a for a in closure.assignments}
    self_fam = by_assignment[(0,)].family
    # the antidiagonal solutions are not inside the self-assignment family
    rep = by_assignment[(1,)].representative
    assert self_fam.membership_defect(rep.A, rep.p) > 0.1
    assert not check_imitation(rep, DIAG23, DIAG23, tol=1e-6).passed
    for record in by_assignment[(1,)].records:
        assert record.residual <= record.tol


def test_closure_budget_error():
    m = AffineMechanism(np.diag([2.0, 3.0]), np.zeros(2))
    cls = MechanismClass(used=(m, m), hypothesized=(m, m))
    with pytest.raises(BudgetExceededError) as exc:
        imitator_closure(cls, budget=10)
    assert exc.value.required == 16
    assert exc.value.budget == 10


# ---------------------------------------------------------------------------
# cycles


def test_cycle_swap_between_mirrored_diagonals():
    a = AffineMap(SWAP, np.zeros(2))
    report = cycle_analysis(a, [DIAG23, DIAG32])
    assert report.in_closure
    assert report.permutation == (1, 0)
    assert report.cycles == ((0, 1),)
    assert report.power_checks_passed
    assert np.allclose(map_power(a, 2).A, np.eye(2))


def test_cycle_identity_map():
    report = cycle_analysis(AffineMap(np.eye(2), np.zeros(2)), [DIAG23, DIAG32])
    assert report.permutation == (0, 1)
    assert all(len(c) == 1 for c in report.cycles)


def test_cycle_diagonal_sign_flip_commutes():
    a = AffineMap(np.diag([1.0, -1.0]), np.zeros(2))
    report = cycle_analysis(a, [DIAG23])
    assert report.in_closure
    assert report.permutation == (0,)
    assert report.power_checks_passed


def test_cycle_out_of_closure_verdict():
    a = AffineMap(rotation(0.5), np.zeros(2))
    report = cycle_analysis(a, [DIAG23])
    assert not report.in_closure
    assert report.unmatched == (0,)
    assert report.permutation is None


def test_cycle_duplicate_targets_ambiguous():
    with pytest.raises(ToleranceAmbiguityError):
        cycle_analysis(AffineMap(np.eye(2), np.zeros(2)), [DIAG23, DIAG23])


# ---------------------------------------------------------------------------
# invariants


def conjugate(a: AffineMap, m: AffineMechanism) -> AffineMechanism:
    """The affine mechanism a∘m∘a^{-1}."""
    M2 = a.A @ m.M @ np.linalg.inv(a.A)
    return AffineMechanism(M2, a.A @ m.b + a.p - M2 @ a.p)


def test_intertwiner_transitivity():
    tol = 1e-9
    for trial in range(12):
        gen = stream(1100 + trial)
        d = int(gen.integers(2, 4))
        m1 = AffineMechanism(random_invertible(gen, d, cond_cap=8.0), gen.standard_normal(d))
        a1 = AffineMap(random_invertible(gen, d, cond_cap=8.0), gen.standard_normal(d))
        a2 = AffineMap(random_invertible(gen, d, cond_cap=8.0), gen.standard_normal(d))
        m2 = conjugate(a1, m1)
        m3 = conjugate(a2, m2)
        assert check_imitation(a1, m1, m2, tol=tol).passed
        assert check_imitation(a2, m2, m3, tol=tol).passed
        assert check_imitation(compose(a2, a1), m1, m3, tol=10 * tol).passed


def test_records_preserve_spectra():
    for trial in range(10):
        gen = stream(1200 + trial)
        d = int(gen.integers(2, 4))
        m, _, _ = distinct_eig_mechanism(gen, d)
        P = np.zeros((d, d))
        P[np.arange(d), gen.permutation(d)] = 1.0
        target = AffineMechanism(P @ m.M @ P.T, P @ m.b)
        cls = MechanismClass(used=(m,), hypothesized=(target,))
        closure = imitator_closure(cls, check_tol=1e-7)
        for fam in closure.assignments:
            for rec in fam.records:
                src = m if rec.source == cls.label_of(0) else target
                tgt_idx = fam.assignment[0]
                tgt = cls.members[tgt_idx]
                s1 = np.sort_complex(np.linalg.eigvals(src.M))
                s2 = np.sort_complex(np.linalg.eigvals(tgt.M))
                assert np.max(np.abs(s1 - s2)) < 1e-7


def test_closure_maps_yield_bijective_cycle_permutations():
    for trial in range(25):
        gen = stream(1300 + trial)
        d = int(gen.integers(2, 5))
        k = int(gen.integers(1, 4))
        # used-set arranged in one conjugation orbit of the cyclic shift
        base, _, _ = distinct_eig_mechanism(gen, d)
        P = np.zeros((d, d))
        P[np.arange(d), np.roll(np.arange(d), 1)] = 1.0
        a = AffineMap(P, np.zeros(d))
        used = [base]
        for _ in range(k - 1):
            prev = used[-1]
            used.append(
                AffineMechanism(P @ prev.M @ P.T, P @ prev.b)
            )
        try:
            report = cycle_analysis(a, used, tol=1e-7)
        except ToleranceAmbiguityError:
            continue  # random orbit collided with itself; regenerate next trial
        if report.in_closure:
            assert sorted(report.permutation) == list(range(len(used)))
            assert report.power_checks_passed
