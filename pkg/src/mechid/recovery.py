"""Linear encoder recovery from observation pairs.

When the decoder is linear and the mechanism parameters (M, b_t) are known,
the encoder E must satisfy E x_{t+1} = M E x_t + b_t on every pair, which is
linear in E. Stacking pairs gives a least-squares problem whose null-space
dimension measures exactly how non-identifiable the encoder is; zero means
unique recovery. The unknown is restricted to the subspace actually spanned
by the data, matching the convention that encoders are left inverses on the
data manifold.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dynamics import AffineMechanism, Trajectory
from .equivariance import (
    ConditionReport,
    _distinct_rows,
    exact_recovery_conditions,
    offset_identifiability_check,
)
from .errors import DataDeficiencyError, DimensionMismatchError
from .linalg import DEFAULT_RTOL, null_space, relative_rank
from .maps import AffineMap
from .rng import stream

__all__ = [
    "RecoveryProblem",
    "RecoveryResult",
    "ComparisonResult",
    "COMPARISON_CLASSES",
    "recover_linear_encoder",
    "recover_with_multiple_offsets",
    "compare_up_to_class",
]

COMPARISON_CLASSES = (
    "exact",
    "offset",
    "signed-permutation",
    "signed-permutation+offset",
    "linear",
)


@dataclass(frozen=True)
class RecoveryProblem:
    """Observation pairs with their per-pair mechanism parameters.

    All pairs share the transition matrix M; the offset may vary per pair.
    """

    x_prev: np.ndarray  # (N, n)
    x_next: np.ndarray  # (N, n)
    M: np.ndarray  # (d, d)
    offsets: np.ndarray  # (N, d)

    def __post_init__(self):
        xp = np.atleast_2d(np.asarray(self.x_prev, dtype=float))
        xn = np.atleast_2d(np.asarray(self.x_next, dtype=float))
        M = np.asarray(self.M, dtype=float)
        B = np.atleast_2d(np.asarray(self.offsets, dtype=float))
        if xp.shape != xn.shape:
            raise DimensionMismatchError("x_prev and x_next must have equal shapes")
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionMismatchError(f"M must be square, got {M.shape}")
        if B.shape != (xp.shape[0], M.shape[0]):
            raise DimensionMismatchError(
                f"offsets must be (pairs, d) = ({xp.shape[0]}, {M.shape[0]}), got {B.shape}"
            )
        object.__setattr__(self, "x_prev", xp)
        object.__setattr__(self, "x_next", xn)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "offsets", B)

    @property
    def pair_count(self) -> int:
        return self.x_prev.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.x_prev.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.M.shape[0]

    @classmethod
    def from_trajectory(
        cls, trajectory: Trajectory, mechanisms: Sequence[AffineMechanism], rtol: float = 1e-9
    ) -> "RecoveryProblem":
        """Consecutive observation pairs with each step's (M, b_t)."""
        mechs = [mechanisms[i] for i in trajectory.mechanisms]
        if not mechs:
            raise ValueError("trajectory has no transitions")
        M = mechs[0].M
        for m in mechs[1:]:
            if np.max(np.abs(m.M - M)) > rtol * (1.0 + np.max(np.abs(M))):
                raise ValueError(
                    "recovery expects one shared transition matrix; schedule mixes different M"
                )
        X = trajectory.observations
        B = np.vstack([m.b for m in mechs])
        return cls(x_prev=X[:-1], x_next=X[1:], M=M, offsets=B)


@dataclass(frozen=True)
class RecoveryResult:
    """Recovered encoder plus the structure of the full solution set.

    `solution_space_dim` counts the free directions of the encoder restricted
    to the observed subspace; zero means the recovery is unique. `residual`
    is the relative least-squares defect of the returned encoder.
    """

    E_hat: np.ndarray
    solution_space_dim: int
    residual: float
    conditions: ConditionReport
    span_rank: int
    observed_rank: int
    pair_count: int
    sufficient_pairs: bool


def _assemble_system(Xi_p, Xi_n, M, B):
    N, r = Xi_p.shape
    d = M.shape[0]
    eye = np.eye(d)
    blocks = np.zeros((N, d, d * r))
    for t in range(N):
        blocks[t] = np.kron(eye, Xi_n[t][None, :]) - M @ np.kron(eye, Xi_p[t][None, :])
    return blocks.reshape(N * d, d * r), B.reshape(-1)


def recover_linear_encoder(
    problem: RecoveryProblem, rtol: float = DEFAULT_RTOL, seed: int = 0
) -> RecoveryResult:
    """Solve the stacked system E x_{t+1} = M E x_t + b_t for E.

    Returns the minimum-norm solution, extended by zero off the observed
    subspace, refined to a full-row-rank representative when the solution
    set allows one. Raises a data-deficiency error when the inputs span
    fewer than d directions; that is a property of the data, distinct from
    structural non-identifiability, which shows up as a positive
    `solution_space_dim` instead.
    """
    Xp, Xn, M, B = problem.x_prev, problem.x_next, problem.M, problem.offsets
    N = problem.pair_count
    n = problem.obs_dim
    d = problem.latent_dim
    span_rank = relative_rank(Xp, rtol)
    if span_rank < d:
        raise DataDeficiencyError(span_rank, d)
    stacked = np.vstack([Xp, Xn])
    _, s, vt = np.linalg.svd(stacked, full_matrices=False)
    r = int(np.sum(s > rtol * s[0]))
    Q = vt[:r]  # (r, n): coordinates of the observed subspace
    C, rhs = _assemble_system(Xp @ Q.T, Xn @ Q.T, M, B)
    w = np.linalg.lstsq(C, rhs, rcond=None)[0]
    residual = float(np.linalg.norm(C @ w - rhs) / (1.0 + np.linalg.norm(rhs)))
    basis = null_space(C, rtol)
    dim = basis.shape[0]
    W = w.reshape(d, r)
    if dim > 0 and relative_rank(W, rtol) < d:
        # the minimum-norm point may be rank-deficient even when the solution
        # set contains a left-invertible encoder; look for one
        gen = stream(seed, 9203)
        for _ in range(20):
            cand = W + np.tensordot(gen.standard_normal(dim), basis.reshape(dim, d, r), axes=1)
            if relative_rank(cand, rtol) == d:
                W = cand
                break
    E_hat = W @ Q
    uniq = _distinct_rows(B, rtol)
    if len(uniq) <= 1:
        conditions = exact_recovery_conditions(AffineMechanism(M, B[0]), rtol=rtol)
    else:
        conditions = offset_identifiability_check(M, B[uniq], rtol=rtol)
    return RecoveryResult(
        E_hat=E_hat,
        solution_space_dim=dim,
        residual=residual,
        conditions=conditions,
        span_rank=span_rank,
        observed_rank=r,
        pair_count=N,
        sufficient_pairs=bool(N >= d * (n + 1)),
    )


def recover_with_multiple_offsets(
    problem: RecoveryProblem, rtol: float = DEFAULT_RTOL, seed: int = 0
) -> RecoveryResult:
    """Recovery specialized to schedules that vary the offset.

    Identical solver; requires at least two distinct offsets so the
    offset-variation premises are meaningful.
    """
    uniq = _distinct_rows(problem.offsets, rtol)
    if len(uniq) < 2:
        raise ValueError(
            "offset-variation recovery needs >= 2 distinct offsets; "
            "use recover_linear_encoder for a fixed mechanism"
        )
    return recover_linear_encoder(problem, rtol=rtol, seed=seed)


# ---------------------------------------------------------------------------
# comparison up to a class


@dataclass(frozen=True)
class ComparisonResult:
    """Best alignment of an estimate to the truth within a map class.

    `L` and `q` define the aligning map a(z) = L z + q with
    estimate ≈ a∘truth; `map` is the same thing as an AffineMap when L is
    invertible. `residual` is relative to the truth's magnitude.
    """

    residual: float
    L: np.ndarray
    q: np.ndarray
    klass: str
    map: AffineMap | None = None
    permutation: tuple[int, ...] | None = None
    signs: tuple[int, ...] | None = None


def _as_affine_encoder(E) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(E, tuple):
        W, c = E
        return np.asarray(W, dtype=float), np.asarray(c, dtype=float).reshape(-1)
    W = np.asarray(E, dtype=float)
    return W, np.zeros(W.shape[0])


def _signed_perm_match(RE: np.ndarray, RT: np.ndarray) -> tuple[tuple[int, ...], tuple[int, ...], float]:
    """Best assignment of estimate rows to signed truth rows.

    Exhaustive for d <= 8, Hungarian otherwise; both are exact because the
    total cost is a sum of independent row costs.
    """
    d = RE.shape[0]
    minus = ((RE[:, None, :] - RT[None, :, :]) ** 2).sum(axis=2)
    plus = ((RE[:, None, :] + RT[None, :, :]) ** 2).sum(axis=2)
    cost = np.minimum(minus, plus)
    sign = np.where(minus <= plus, 1, -1)
    if d <= 8:
        best = None
        for perm in itertools.permutations(range(d)):
            total = sum(cost[i, perm[i]] for i in range(d))
            if best is None or total < best[1]:
                best = (perm, total)
        perm, total = best
    else:
        rows, cols = linear_sum_assignment(cost)
        perm = tuple(int(cols[i]) for i in np.argsort(rows))
        total = float(cost[rows, cols].sum())
    signs = tuple(int(sign[i, perm[i]]) for i in range(d))
    return tuple(int(j) for j in perm), signs, float(total)


def _perm_matrix(perm: Sequence[int], signs: Sequence[int]) -> np.ndarray:
    d = len(perm)
    P = np.zeros((d, d))
    for i, (j, s) in enumerate(zip(perm, signs)):
        P[i, j] = s
    return P


def compare_up_to_class(estimate, truth, klass: str = "exact") -> ComparisonResult:
    """Distance from `estimate` to the orbit of `truth` under a map class.

    Encoders are given as (d, n) matrices or (matrix, constant) pairs.
    Classes: exact (no freedom), offset (constant shifts), signed-permutation
    (coordinate relabels and sign flips), signed-permutation+offset, linear
    (any affine reweighting, fit by least squares). The residual is the
    Frobenius distance of the aligned truth to the estimate, relative to the
    truth's magnitude.
    """
    if klass not in COMPARISON_CLASSES:
        raise ValueError(f"unknown class '{klass}'; choose from {COMPARISON_CLASSES}")
    WE, cE = _as_affine_encoder(estimate)
    WT, cT = _as_affine_encoder(truth)
    if WE.shape != WT.shape:
        raise DimensionMismatchError(
            f"estimate is {WE.shape}, truth is {WT.shape}; shapes must agree"
        )
    d = WE.shape[0]
    RE = np.hstack([WE, cE[:, None]])
    RT = np.hstack([WT, cT[:, None]])
    norm = max(float(np.linalg.norm(RT)), 1e-300)
    perm = None
    signs = None
    if klass == "exact":
        L = np.eye(d)
        q = np.zeros(d)
        gap = RE - RT
    elif klass == "offset":
        L = np.eye(d)
        q = cE - cT
        gap = WE - WT
    elif klass == "signed-permutation":
        perm, signs, total = _signed_perm_match(RE, RT)
        L = _perm_matrix(perm, signs)
        q = np.zeros(d)
        gap = RE - L @ RT
    elif klass == "signed-permutation+offset":
        perm, signs, total = _signed_perm_match(WE, WT)
        L = _perm_matrix(perm, signs)
        q = cE - L @ cT
        gap = WE - L @ WT
    else:  # linear
        L = np.linalg.lstsq(WT.T, WE.T, rcond=None)[0].T
        q = cE - L @ cT
        gap = WE - L @ WT
    residual = float(np.linalg.norm(gap) / norm)
    amap = None
    try:
        amap = AffineMap(L, q)
    except Exception:
        amap = None
    return ComparisonResult(
        residual=residual, L=L, q=q, klass=klass, map=amap, permutation=perm, signs=signs
    )
