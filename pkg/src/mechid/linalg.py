"""Shared linear-algebra plumbing.

Row-major (C-order) vectorization is used throughout:

    vec(M @ A) = kron(M, I) @ vec(A)
    vec(A @ M) = kron(I, M.T) @ vec(A)
    A @ b      = kron(I, b.T) @ vec(A)

so operators on matrices become explicit (d*d x d*d) matrices and solution
sets of matrix equations become null spaces computed by SVD with a relative
threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DEFAULT_RTOL",
    "vec",
    "unvec",
    "commutator_operator",
    "intertwiner_operator",
    "offset_operator",
    "null_space",
    "relative_rank",
    "smallest_singular_gap",
    "is_invertible",
    "orthonormal_defect",
    "AffineSystem",
    "AffineSolutionSet",
    "solve_affine_system",
]

DEFAULT_RTOL = 1e-9


def vec(A: np.ndarray) -> np.ndarray:
    """Row-major flattening of a matrix."""
    return np.asarray(A, dtype=float).reshape(-1)


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(rows, cols)


def commutator_operator(M: np.ndarray) -> np.ndarray:
    """Matrix of A -> M A - A M acting on vec(A)."""
    d = M.shape[0]
    eye = np.eye(d)
    return np.kron(M, eye) - np.kron(eye, M.T)


def intertwiner_operator(M1: np.ndarray, M2: np.ndarray) -> np.ndarray:
    """Matrix of A -> A M1 - M2 A acting on vec(A)."""
    d = M1.shape[0]
    eye = np.eye(d)
    return np.kron(eye, M1.T) - np.kron(M2, eye)


def offset_operator(b: np.ndarray) -> np.ndarray:
    """Matrix of A -> A b acting on vec(A); shape (d, d*d)."""
    b = np.asarray(b, dtype=float)
    return np.kron(np.eye(b.shape[0]), b[None, :])


def null_space(K: np.ndarray, rtol: float = DEFAULT_RTOL) -> np.ndarray:
    """Orthonormal basis of the null space of K, as rows.

    Singular values at or below rtol times the largest count as zero.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    n = K.shape[1]
    if K.shape[0] == 0:
        return np.eye(n)
    _, s, vh = np.linalg.svd(K)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(n)
    rank = int(np.sum(s > rtol * s[0]))
    return vh[rank:, :]


def relative_rank(A: np.ndarray, rtol: float = DEFAULT_RTOL) -> int:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def smallest_singular_gap(A: np.ndarray) -> float:
    """sigma_min / max(1, sigma_max): invertibility at unit working scale.

    The floor matters: a matrix of pure rounding noise can have a healthy
    sigma ratio, and a purely relative measure would call it invertible.
    """
    s = np.linalg.svd(np.asarray(A), compute_uv=False)
    if s.size == 0:
        return 0.0
    return float(s[-1] / max(1.0, s[0]))


def is_invertible(A: np.ndarray, rtol: float = DEFAULT_RTOL) -> bool:
    A = np.asarray(A, dtype=float)
    return A.ndim == 2 and A.shape[0] == A.shape[1] and smallest_singular_gap(A) > rtol


def orthonormal_defect(A: np.ndarray) -> float:
    """Frobenius norm of A^T A - I."""
    A = np.asarray(A, dtype=float)
    return float(np.linalg.norm(A.T @ A - np.eye(A.shape[1])))


@dataclass(frozen=True)
class AffineSystem:
    """A stacked linear system C x = rhs over a flat unknown vector."""

    C: np.ndarray
    rhs: np.ndarray


@dataclass(frozen=True)
class AffineSolutionSet:
    """Solution set of a (possibly inhomogeneous) linear system.

    The full set is {particular + c @ basis : c in R^dim} when consistent.
    `basis` rows are orthonormal. `residual` is the relative defect of the
    particular solution; a residual above the caller's tolerance means the
    system has no solution at all.
    """

    particular: np.ndarray
    basis: np.ndarray
    residual: float

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]

    def consistent(self, tol: float) -> bool:
        return self.residual <= tol


def solve_affine_system(system: AffineSystem, rtol: float = DEFAULT_RTOL) -> AffineSolutionSet:
    """Minimum-norm particular solution plus orthonormal null-space basis."""
    C = np.atleast_2d(np.asarray(system.C, dtype=float))
    rhs = np.asarray(system.rhs, dtype=float).reshape(-1)
    if C.shape[0] != rhs.shape[0]:
        raise ValueError(f"system has {C.shape[0]} rows but rhs has {rhs.shape[0]}")
    particular = np.linalg.lstsq(C, rhs, rcond=None)[0]
    residual = float(np.linalg.norm(C @ particular - rhs) / (1.0 + np.linalg.norm(rhs)))
    basis = null_space(C, rtol)
    return AffineSolutionSet(particular=particular, basis=basis, residual=residual)
