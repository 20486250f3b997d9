"""Equivariance sets of affine mechanisms.

An affine map a(z) = A z + p commutes with a mechanism m(z) = M z + b exactly
when A M = M A and (A - I) b = (M - I) p. Both constraints are linear in
(A, p), so the full solution set is the affine subspace (I, 0) + N where N is
the null space of the stacked constraint operator. Everything here reduces to
building that operator explicitly and reading off SVD null spaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import AffineMechanism
from .errors import DimensionMismatchError, NonFiniteSampleError
from .grids import GridSpec
from .linalg import (
    DEFAULT_RTOL,
    commutator_operator,
    intertwiner_operator,
    null_space,
    offset_operator,
    relative_rank,
    smallest_singular_gap,
    vec,
)
from .maps import AffineMap
from .rng import stream

__all__ = [
    "EIGENGAP_RTOL",
    "LinearSubspaceBasis",
    "AffineMapFamily",
    "EquivarianceFamily",
    "CheckReport",
    "ConditionVerdict",
    "ConditionReport",
    "linear_commutant",
    "affine_equivariances",
    "shared_equivariances",
    "check_equivariance",
    "exact_recovery_conditions",
    "offset_identifiability_check",
]

# Eigenvalues closer than this fraction of the spectral radius count as tied.
EIGENGAP_RTOL = 1e-7

_BASIS_ORTHO_TOL = 1e-10
_REPRESENTATIVE_ATTEMPTS = 20


@dataclass(frozen=True)
class LinearSubspaceBasis:
    """An orthonormal (Frobenius) basis of a subspace of d x d matrices."""

    matrices: np.ndarray  # (k, d, d)

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise DimensionMismatchError(f"basis must be (k, d, d), got {mats.shape}")
        k = mats.shape[0]
        if k:
            flat = mats.reshape(k, -1)
            gram = flat @ flat.T
            if np.max(np.abs(gram - np.eye(k))) > _BASIS_ORTHO_TOL:
                raise ValueError("basis is not orthonormal under the Frobenius inner product")
        mats.setflags(write=False)
        object.__setattr__(self, "matrices", mats)

    @property
    def dimension(self) -> int:
        return self.matrices.shape[0]

    @property
    def matrix_dim(self) -> int:
        return self.matrices.shape[1]

    def projection_defect(self, A: np.ndarray) -> float:
        """Relative distance from A to the subspace."""
        v = vec(A)
        nv = np.linalg.norm(v)
        if nv == 0:
            return 0.0
        if self.dimension == 0:
            return 1.0
        flat = self.matrices.reshape(self.dimension, -1)
        proj = flat.T @ (flat @ v)
        return float(np.linalg.norm(v - proj) / nv)

    def contains(self, A: np.ndarray, tol: float = 1e-8) -> bool:
        return self.projection_defect(A) <= tol


@dataclass(frozen=True)
class AffineMapFamily:
    """An affine subspace of candidate maps (A, p).

    The set is {particular + sum_i c_i basis_i}. The basis pairs are jointly
    orthonormal in the flattened (vec A, p) space. `particular` is None when
    the defining system has no solution at all.
    """

    basis_A: np.ndarray  # (k, d, d)
    basis_p: np.ndarray  # (k, d)
    particular_A: np.ndarray | None
    particular_p: np.ndarray | None
    residual: float = 0.0

    @property
    def dim(self) -> int:
        return self.basis_A.shape[1]

    @property
    def dimension(self) -> int:
        return self.basis_A.shape[0]

    @property
    def a_dimension(self) -> int:
        """Dimension of the projection of the homogeneous part onto A."""
        k = self.dimension
        if k == 0:
            return 0
        return relative_rank(self.basis_A.reshape(k, -1))

    @property
    def p_fiber_dimension(self) -> int:
        """Number of homogeneous directions that move only the offset."""
        return self.dimension - self.a_dimension

    @property
    def consistent(self) -> bool:
        return self.particular_A is not None

    def element(self, coeffs: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """The family member at the given homogeneous coordinates."""
        if not self.consistent:
            raise ValueError("family is empty: the defining system has no solution")
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (self.dimension,):
            raise DimensionMismatchError(f"expected {self.dimension} coefficients")
        A = self.particular_A + np.tensordot(c, self.basis_A, axes=1)
        p = self.particular_p + c @ self.basis_p if self.dimension else self.particular_p.copy()
        return A, p

    def a_part_basis(self, rtol: float = DEFAULT_RTOL) -> LinearSubspaceBasis:
        """Orthonormal basis of the A-projection of the homogeneous part."""
        k = self.dimension
        d = self.dim
        if k == 0:
            return LinearSubspaceBasis(np.zeros((0, d, d)))
        flat = self.basis_A.reshape(k, -1)
        u, s, vh = np.linalg.svd(flat, full_matrices=False)
        if s.size == 0 or s[0] == 0.0:
            return LinearSubspaceBasis(np.zeros((0, d, d)))
        r = int(np.sum(s > rtol * s[0]))
        return LinearSubspaceBasis(vh[:r].reshape(r, d, d))

    def membership_defect(self, A: np.ndarray, p: np.ndarray) -> float:
        """Relative distance of (A, p) from the family."""
        if not self.consistent:
            return float("inf")
        h = np.concatenate([vec(A) - vec(self.particular_A), np.asarray(p) - self.particular_p])
        nh = np.linalg.norm(h)
        if nh == 0:
            return 0.0
        if self.dimension == 0:
            return float(nh / max(nh, 1.0))
        flat = np.hstack([self.basis_A.reshape(self.dimension, -1), self.basis_p])
        proj = flat.T @ (flat @ h)
        return float(np.linalg.norm(h - proj) / max(nh, 1.0))

    def representative(
        self, seed: int = 0, attempts: int = _REPRESENTATIVE_ATTEMPTS, rtol: float = DEFAULT_RTOL
    ) -> AffineMap | None:
        """An invertible member, or None if none is found.

        Tries the particular solution first, then seeded random combinations
        of the homogeneous basis. Failure after the attempt budget means no
        invertible representative was found, not that none exists.
        """
        if not self.consistent:
            return None
        candidates = [np.zeros(self.dimension)] if self.dimension else [np.zeros(0)]
        gen = stream(seed, 7041)
        for _ in range(attempts):
            if self.dimension == 0:
                break
            candidates.append(gen.standard_normal(self.dimension))
        for c in candidates:
            A, p = self.element(c)
            if smallest_singular_gap(A) > rtol:
                return AffineMap(A, p)
        return None


def _family_from_nullspace(
    basis_flat: np.ndarray, d: int, particular: tuple[np.ndarray, np.ndarray] | None, residual: float
) -> AffineMapFamily:
    k = basis_flat.shape[0]
    basis_A = basis_flat[:, : d * d].reshape(k, d, d) if k else np.zeros((0, d, d))
    basis_p = basis_flat[:, d * d :] if k else np.zeros((0, d))
    if particular is None:
        return AffineMapFamily(
            basis_A=basis_A, basis_p=basis_p, particular_A=None, particular_p=None, residual=residual
        )
    return AffineMapFamily(
        basis_A=basis_A,
        basis_p=basis_p,
        particular_A=particular[0],
        particular_p=particular[1],
        residual=residual,
    )


def _equivariance_rows(m: AffineMechanism) -> tuple[np.ndarray, np.ndarray]:
    """Constraint rows over (vec A, p) for one mechanism, with rhs."""
    d = m.dim
    K = commutator_operator(m.M)
    top = np.hstack([K, np.zeros((d * d, d))])
    bottom = np.hstack([offset_operator(m.b), -(m.M - np.eye(d))])
    C = np.vstack([top, bottom])
    rhs = np.concatenate([np.zeros(d * d), m.b])
    return C, rhs


@dataclass(frozen=True)
class EquivarianceFamily:
    """All affine maps commuting with every mechanism in `mechanisms`.

    Always contains the identity, which serves as the particular solution.
    `degenerate_offset` flags that some (M - I) is singular, in which case
    the offset is not a function of A and pure-offset directions can appear.
    """

    mechanisms: tuple[AffineMechanism, ...]
    family: AffineMapFamily
    degenerate_offset: bool
    rtol: float = DEFAULT_RTOL

    @property
    def dimension(self) -> int:
        return self.family.dimension

    @property
    def a_dimension(self) -> int:
        return self.family.a_dimension

    @property
    def p_fiber_dimension(self) -> int:
        return self.family.p_fiber_dimension

    def a_part_basis(self) -> LinearSubspaceBasis:
        return self.family.a_part_basis(self.rtol)

    def offset_for(self, A: np.ndarray) -> tuple[np.ndarray, float]:
        """Solve the offset consistency equations (M_i - I) p = (A - I) b_i.

        Returns the minimum-norm p and the relative residual; a residual
        above tolerance means no offset makes this A an equivariance.
        """
        A = np.asarray(A, dtype=float)
        d = A.shape[0]
        blocks = [m.M - np.eye(d) for m in self.mechanisms]
        rhs = [(A - np.eye(d)) @ m.b for m in self.mechanisms]
        C = np.vstack(blocks)
        r = np.concatenate(rhs)
        p = np.linalg.lstsq(C, r, rcond=None)[0]
        residual = float(np.linalg.norm(C @ p - r) / (1.0 + np.linalg.norm(r)))
        return p, residual

    def classify(self) -> "ConditionVerdict":
        """Decision-table verdict from the family's shape."""
        d = self.family.dim
        dim = self.dimension
        a_dim = self.a_dimension
        p_fib = self.p_fiber_dimension
        if dim == 0:
            return ConditionVerdict("exact", 0)
        if dim == d * d + d:
            return ConditionVerdict("unconstrained", dim)
        if a_dim == 0 and p_fib >= 1:
            return ConditionVerdict("offset-only", p_fib)
        if a_dim >= 1 and p_fib == 0:
            return ConditionVerdict("linear-family", a_dim)
        return ConditionVerdict("other", dim)


def linear_commutant(M: np.ndarray | AffineMechanism, rtol: float = DEFAULT_RTOL) -> LinearSubspaceBasis:
    """Orthonormal basis of {A : A M = M A}."""
    M = M.M if isinstance(M, AffineMechanism) else np.asarray(M, dtype=float)
    d = M.shape[0]
    basis = null_space(commutator_operator(M), rtol)
    return LinearSubspaceBasis(basis.reshape(-1, d, d))


def affine_equivariances(m: AffineMechanism, rtol: float = DEFAULT_RTOL) -> EquivarianceFamily:
    """The affine solution set of {A M = M A, (A - I) b = (M - I) p}."""
    return shared_equivariances([m], rtol)


def shared_equivariances(
    mechanisms: Sequence[AffineMechanism], rtol: float = DEFAULT_RTOL
) -> EquivarianceFamily:
    """Affine maps commuting with every mechanism simultaneously."""
    mechanisms = tuple(mechanisms)
    if not mechanisms:
        raise ValueError("at least one mechanism is required")
    d = mechanisms[0].dim
    for m in mechanisms[1:]:
        if m.dim != d:
            raise DimensionMismatchError("mechanisms have mixed dimensions")
    rows = [_equivariance_rows(m)[0] for m in mechanisms]
    C = np.vstack(rows)
    basis = null_space(C, rtol)
    # (I, 0) solves the inhomogeneous system exactly, for any mechanism set.
    particular = (np.eye(d), np.zeros(d))
    family = _family_from_nullspace(basis, d, particular, residual=0.0)
    degenerate = any(smallest_singular_gap(m.M - np.eye(d)) <= rtol for m in mechanisms)
    return EquivarianceFamily(
        mechanisms=mechanisms, family=family, degenerate_offset=degenerate, rtol=rtol
    )


# ---------------------------------------------------------------------------
# grid checks


@dataclass(frozen=True)
class CheckReport:
    """Outcome of a pointwise residual check over a grid."""

    passed: bool
    max_residual: float
    worst_index: int
    points: int
    tol: float

    def __bool__(self) -> bool:
        return self.passed


def _as_points(grid, dim: int) -> np.ndarray:
    if grid is None:
        grid = GridSpec(dim=dim)
    if isinstance(grid, GridSpec):
        if grid.dim != dim:
            raise DimensionMismatchError(f"grid dimension {grid.dim} != map dimension {dim}")
        return grid.points()
    pts = np.atleast_2d(np.asarray(grid, dtype=float))
    if pts.shape[1] != dim:
        raise DimensionMismatchError(f"grid points have dimension {pts.shape[1]}, expected {dim}")
    return pts


def _residual_report(lhs: np.ndarray, rhs: np.ndarray, tol: float) -> CheckReport:
    if not (np.isfinite(lhs).all() and np.isfinite(rhs).all()):
        bad = np.nonzero(~(np.isfinite(lhs).all(axis=-1) & np.isfinite(rhs).all(axis=-1)))[0]
        raise NonFiniteSampleError(f"grid point {int(bad[0])}")
    res = np.linalg.norm(lhs - rhs, axis=-1) / (1.0 + np.linalg.norm(rhs, axis=-1))
    worst = int(np.argmax(res))
    mx = float(res[worst])
    return CheckReport(
        passed=bool(mx <= tol), max_residual=mx, worst_index=worst, points=lhs.shape[0], tol=tol
    )


def check_equivariance(a, m, grid=None, tol: float = DEFAULT_RTOL) -> CheckReport:
    """Does a commute with m on the grid?

    The residual at z is |a(m(z)) - m(a(z))| / (1 + |m(a(z))|); the check
    passes when the maximum over the grid is at or below tol.
    """
    dim = getattr(m, "dim", getattr(a, "dim", None))
    Z = _as_points(grid, dim)
    lhs = a(m(Z))
    rhs = m(a(Z))
    return _residual_report(lhs, rhs, tol)


# ---------------------------------------------------------------------------
# condition reports


@dataclass(frozen=True)
class ConditionVerdict:
    """Classification of the residual non-identifiability.

    kind is one of: exact, offset-only, linear-family, unconstrained, other,
    not-applicable. `dimension` measures the remaining solution-space
    dimension where that is meaningful.
    """

    kind: str
    dimension: int | None = None

    _KINDS = ("exact", "offset-only", "linear-family", "unconstrained", "other", "not-applicable")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown verdict kind '{self.kind}'")


@dataclass(frozen=True)
class ConditionReport:
    """Checkable premises for unique or offset-only encoder recovery.

    `analytic_measure_assumed` records the standing smoothness/measure
    hypothesis that is declared, never machine-checked. `measured_dimension`
    is the data-independent solution-space dimension of the homogeneous
    constraint system {A M = M A, A b_t = 0 for all offsets}.
    """

    eigenvalues: tuple[complex, ...]
    diagonalizable: bool
    distinct_eigenvalues: bool
    min_eigenvalue_gap: float
    spectral_radius: float
    measured_dimension: int
    verdict: ConditionVerdict
    offset_component_magnitudes: tuple[float, ...] | None = None
    zero_component_count: int | None = None
    offset_condition: bool | None = None
    offset_count: int | None = None
    distinct_offset_count: int | None = None
    difference_rank: int | None = None
    assumption_rank_ok: bool | None = None
    nonzero_difference_pair: tuple[int, int] | None = None
    analytic_measure_assumed: bool = True


def _eigen_summary(M: np.ndarray, gap_rtol: float):
    w, S = np.linalg.eig(M)
    radius = float(np.max(np.abs(w))) if w.size else 0.0
    recon_ok = False
    if smallest_singular_gap(S) > 1e-12:
        recon = S @ np.diag(w) @ np.linalg.inv(S)
        denom = max(np.linalg.norm(M), 1e-300)
        recon_ok = np.linalg.norm(recon - M) / denom <= 1e-8
    gaps = [abs(w[i] - w[j]) for i in range(len(w)) for j in range(i + 1, len(w))]
    min_gap = float(min(gaps)) if gaps else float("inf")
    distinct = bool(min_gap > gap_rtol * max(radius, 1e-300))
    return w, S, radius, recon_ok, distinct, min_gap


def _measured_dimension(M: np.ndarray, offsets: np.ndarray, rtol: float) -> int:
    blocks = [commutator_operator(M)]
    for b in offsets:
        blocks.append(offset_operator(b))
    return null_space(np.vstack(blocks), rtol).shape[0]


def exact_recovery_conditions(
    m: AffineMechanism, rtol: float = DEFAULT_RTOL, gap_rtol: float = EIGENGAP_RTOL
) -> ConditionReport:
    """Premises for a unique linear encoder given one affine mechanism.

    Uniqueness holds exactly when the eigenvalues of M are distinct and every
    eigencoordinate of the offset is nonzero; each violated component adds a
    free direction, whose count is also measured directly as the null-space
    dimension of {A M = M A, A b = 0}.
    """
    w, S, radius, diag_ok, distinct, min_gap = _eigen_summary(m.M, gap_rtol)
    measured = _measured_dimension(m.M, m.b[None, :], rtol)
    mags = None
    zero_count = None
    offset_ok = None
    if diag_ok:
        v = np.linalg.solve(S, m.b.astype(complex))
        av = np.abs(v)
        norm = float(np.linalg.norm(av))
        flags = av <= rtol * max(norm, 1e-300)
        mags = tuple(float(x) for x in av)
        zero_count = int(np.sum(flags))
        offset_ok = bool(zero_count == 0)
    if not diag_ok:
        verdict = ConditionVerdict("not-applicable", measured)
    elif distinct and offset_ok:
        verdict = ConditionVerdict("exact", 0)
    else:
        verdict = ConditionVerdict("other", measured)
    return ConditionReport(
        eigenvalues=tuple(complex(x) for x in w),
        diagonalizable=diag_ok,
        distinct_eigenvalues=distinct,
        min_eigenvalue_gap=min_gap,
        spectral_radius=radius,
        measured_dimension=measured,
        verdict=verdict,
        offset_component_magnitudes=mags,
        zero_component_count=zero_count,
        offset_condition=offset_ok,
        offset_count=1,
        distinct_offset_count=1,
    )


def _distinct_rows(rows: np.ndarray, rtol: float) -> list[int]:
    scale = 1.0 + float(np.max(np.linalg.norm(rows, axis=1))) if rows.size else 1.0
    kept: list[int] = []
    for i in range(rows.shape[0]):
        if all(np.linalg.norm(rows[i] - rows[j]) > rtol * scale for j in kept):
            kept.append(i)
    return kept


def offset_identifiability_check(
    M: np.ndarray | AffineMechanism,
    offsets: Sequence[np.ndarray],
    rtol: float = DEFAULT_RTOL,
    gap_rtol: float = EIGENGAP_RTOL,
) -> ConditionReport:
    """Premises for offset-only recovery from a shared M with varying offsets.

    Requires at least d+1 distinct offsets whose differences from the first
    span all of R^d, some pair of offsets whose difference has all nonzero
    eigencoordinates, and distinct eigenvalues. When every premise holds the
    verdict is offset-only; otherwise the measured solution-space dimension
    from the supplied offsets is reported.
    """
    M = M.M if isinstance(M, AffineMechanism) else np.asarray(M, dtype=float)
    d = M.shape[0]
    B = np.atleast_2d(np.asarray(offsets, dtype=float))
    if B.shape[1] != d:
        raise DimensionMismatchError(f"offsets have dimension {B.shape[1]}, M is {d}x{d}")
    w, S, radius, diag_ok, distinct, min_gap = _eigen_summary(M, gap_rtol)
    kept = _distinct_rows(B, rtol)
    distinct_count = len(kept)
    diffs = B[kept[1:]] - B[kept[0]] if distinct_count > 1 else np.zeros((0, d))
    rank = relative_rank(diffs, rtol) if diffs.size else 0
    rank_ok = bool(distinct_count >= d + 1 and rank == d)
    best_pair = None
    best_mags = None
    offset_ok = None
    if diag_ok:
        offset_ok = False
        best_score = -1.0
        for ai in range(len(kept)):
            for bi in range(ai + 1, len(kept)):
                v = np.linalg.solve(S, (B[kept[ai]] - B[kept[bi]]).astype(complex))
                av = np.abs(v)
                norm = float(np.linalg.norm(av))
                if norm <= 0:
                    continue
                score = float(np.min(av) / norm)
                if score > best_score:
                    best_score = score
                    best_pair = (kept[ai], kept[bi])
                    best_mags = tuple(float(x) for x in av)
                if np.all(av > rtol * norm):
                    offset_ok = True
    measured = _measured_dimension(M, B[kept], rtol)
    if not diag_ok:
        verdict = ConditionVerdict("not-applicable", measured)
    elif rank_ok and offset_ok and distinct:
        verdict = ConditionVerdict("offset-only", d)
    else:
        verdict = ConditionVerdict("other", measured)
    return ConditionReport(
        eigenvalues=tuple(complex(x) for x in w),
        diagonalizable=diag_ok,
        distinct_eigenvalues=distinct,
        min_eigenvalue_gap=min_gap,
        spectral_radius=radius,
        measured_dimension=measured,
        verdict=verdict,
        offset_component_magnitudes=best_mags,
        zero_component_count=None,
        offset_condition=offset_ok,
        offset_count=int(B.shape[0]),
        distinct_offset_count=distinct_count,
        difference_rank=int(rank),
        assumption_rank_ok=rank_ok,
        nonzero_difference_pair=best_pair,
    )
