"""Constructive linear-encoder recovery and class-based comparison."""

import numpy as np
import pytest

from mechid import (
    AffineMechanism,
    LinearDecoder,
    RecoveryProblem,
    Trajectory,
    compare_up_to_class,
    recover_linear_encoder,
    recover_with_multiple_offsets,
    simulate_deterministic,
)
from mechid.errors import DataDeficiencyError
from mechid.rng import stream

from conftest import distinct_eig_mechanism, random_invertible, random_signed_permutation

G_SHEAR = np.array([[1.0, 1.0], [0.0, 1.0]])


def problem_from_rollout(G, mechanisms, z1, T, schedule=None, rtol=1e-9):
    traj = simulate_deterministic(LinearDecoder(G), mechanisms, z1, T=T, schedule=schedule)
    return RecoveryProblem.from_trajectory(traj, mechanisms, rtol=rtol)


def generic_pair_problem(gen, G, M, b_list):
    """Pairs (G z, G(Mz + b_t)) at independent generic latent points."""
    d = G.shape[1]
    Z = gen.standard_normal((len(b_list), d))
    B = np.asarray(b_list, dtype=float)
    x_prev = Z @ G.T
    x_next = (Z @ M.T + B) @ G.T
    return RecoveryProblem(x_prev=x_prev, x_next=x_next, M=np.asarray(M, float), offsets=B)


def test_unique_recovery_of_inverse_shear():
    m = AffineMechanism(np.diag([2.0, 3.0]), np.array([1.0, 1.0]))
    problem = problem_from_rollout(G_SHEAR, [m], np.array([0.37, -0.81]), T=13)
    assert problem.pair_count == 12
    result = recover_linear_encoder(problem)
    assert result.solution_space_dim == 0
    want = np.array([[1.0, -1.0], [0.0, 1.0]])  # inverse of the shear
    assert np.linalg.norm(result.E_hat - want) <= 1e-8
    assert result.residual <= 1e-9
    assert result.conditions.verdict.kind == "exact"
    assert result.sufficient_pairs


def test_zero_eigencoordinate_leaves_one_direction():
    m = AffineMechanism(np.diag([2.0, 3.0]), np.array([1.0, 0.0]))
    problem = problem_from_rollout(G_SHEAR, [m], np.array([0.37, -0.81]), T=13)
    result = recover_linear_encoder(problem)
    assert result.solution_space_dim == 1
    assert result.conditions.verdict.kind == "other"
    assert result.residual <= 1e-9
    # the recovered encoder still solves the system even though it is not unique
    assert np.linalg.norm(result.E_hat @ problem.x_next.T
                          - m.M @ result.E_hat @ problem.x_prev.T
                          - m.b[:, None]) <= 1e-7


def test_identity_mechanism_full_ambiguity():
    # E x = E x constrains nothing: the free dimension is d * n
    gen = stream(211)
    d, n = 2, 3
    G = gen.standard_normal((n, d))
    Z = gen.standard_normal((d * (n + 1), d))
    X = Z @ G.T
    problem = RecoveryProblem(
        x_prev=X, x_next=X, M=np.eye(d), offsets=np.zeros((X.shape[0], d))
    )
    result = recover_linear_encoder(problem)
    assert result.solution_space_dim == d * result.observed_rank
    assert result.observed_rank == min(n, d)


def test_multi_offset_recovery_of_inverse():
    G = np.array([[2.0, 0.0], [1.0, 1.0]])
    M = np.diag([2.0, 3.0])
    offsets = [np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    mechanisms = [AffineMechanism(M, b) for b in offsets]
    schedule = [t % 3 for t in range(18)]
    problem = problem_from_rollout(G, mechanisms, np.array([0.21, 0.43]), T=19, schedule=schedule)
    assert problem.pair_count == 18
    result = recover_with_multiple_offsets(problem)
    assert result.solution_space_dim == 0
    assert np.linalg.norm(result.E_hat - np.linalg.inv(G)) <= 1e-8
    assert result.conditions.verdict.kind == "offset-only"


def test_multi_offset_requires_distinct_offsets():
    m = AffineMechanism(np.diag([2.0, 3.0]), np.array([1.0, 0.0]))
    problem = problem_from_rollout(G_SHEAR, [m], np.array([0.37, -0.81]), T=13)
    with pytest.raises(ValueError):
        recover_with_multiple_offsets(problem)


def test_collinear_offsets_report_other_with_dimension():
    G = np.array([[2.0, 0.0], [1.0, 1.0]])
    M = np.diag([2.0, 3.0])
    offsets = [np.zeros(2), np.array([1.0, 0.0]), np.array([2.0, 0.0])]
    mechanisms = [AffineMechanism(M, b) for b in offsets]
    schedule = [t % 3 for t in range(18)]
    problem = problem_from_rollout(G, mechanisms, np.array([0.21, 0.43]), T=19, schedule=schedule)
    result = recover_with_multiple_offsets(problem)
    assert result.conditions.verdict.kind == "other"
    assert result.solution_space_dim == 1


def test_data_deficiency_raises_before_solving():
    # orbit confined to the first eigendirection spans only one direction
    m = AffineMechanism(np.diag([2.0, 3.0]), np.zeros(2))
    traj = simulate_deterministic(
        LinearDecoder(np.eye(2)), [m], np.array([1.0, 0.0]), T=8
    )
    problem = RecoveryProblem.from_trajectory(traj, [m])
    with pytest.raises(DataDeficiencyError) as exc:
        recover_linear_encoder(problem)
    assert exc.value.rank == 1
    assert exc.value.needed == 2


def test_planted_zero_count_equals_solution_dimension():
    for trial in range(25):
        gen = stream(2300 + trial)
        d = int(gen.integers(2, 6))
        k = int(gen.integers(0, d))
        m, S, lam = distinct_eig_mechanism(gen, d, zero_eigencoords=k)
        n = d + int(gen.integers(0, 3))
        G = random_invertible(gen, max(n, d), cond_cap=20.0)[:n, :d]
        problem = generic_pair_problem(
            gen, G, m.M, [m.b] * (d * (n + 1))
        )
        result = recover_linear_encoder(problem)
        assert result.solution_space_dim == k, (trial, d, k)
        if k == 0:
            truth = np.linalg.pinv(G)
            rel = np.linalg.norm(result.E_hat - truth) / np.linalg.norm(truth)
            assert rel <= 1e-8


def test_exact_recovery_over_random_instances():
    for trial in range(30):
        gen = stream(2400 + trial)
        d = int(gen.integers(2, 6))
        n = d + int(gen.integers(0, 3))
        m, _, _ = distinct_eig_mechanism(gen, d)
        G = random_invertible(gen, max(n, d), cond_cap=20.0)[:n, :d]
        problem = generic_pair_problem(gen, G, m.M, [m.b] * (d * (n + 1)))
        result = recover_linear_encoder(problem)
        assert result.solution_space_dim == 0
        truth = np.linalg.pinv(G)
        assert np.linalg.norm(result.E_hat - truth) / np.linalg.norm(truth) <= 1e-8


# ---------------------------------------------------------------------------
# comparison up to a class


def test_compare_exact_is_zero_on_self():
    gen = stream(251)
    E = gen.standard_normal((2, 4))
    assert compare_up_to_class(E, E, "exact").residual == 0.0


def test_compare_signed_permutation_recovers_plant():
    gen = stream(253)
    for d in (2, 3, 4):
        truth = gen.standard_normal((d, d + 2))
        P = random_signed_permutation(gen, d)
        res = compare_up_to_class(P @ truth, truth, "signed-permutation")
        assert res.residual <= 1e-10
        assert np.allclose(res.L, P)


def test_compare_offset_recovers_shift():
    gen = stream(257)
    E = gen.standard_normal((2, 3))
    truth = (E, np.zeros(2))
    shifted = (E, np.array([0.7, -0.2]))
    res = compare_up_to_class(shifted, truth, "offset")
    assert res.residual <= 1e-10
    assert np.allclose(res.q, [0.7, -0.2])


def test_compare_linear_class_absorbs_mixing():
    gen = stream(259)
    truth = gen.standard_normal((3, 5))
    L = random_invertible(gen, 3)
    res = compare_up_to_class(L @ truth, truth, "linear")
    assert res.residual <= 1e-10


def test_compare_residual_symmetry_under_class_inversion():
    gen = stream(261)
    for trial in range(10):
        truth = gen.standard_normal((3, 4))
        P = random_signed_permutation(gen, 3)
        fwd = compare_up_to_class(P @ truth, truth, "signed-permutation")
        back = compare_up_to_class(truth, P @ truth, "signed-permutation")
        assert abs(fwd.residual - back.residual) <= 1e-9


def test_compare_rejects_unknown_class():
    E = np.eye(2)
    with pytest.raises(ValueError):
        compare_up_to_class(E, E, "frobnicated")
