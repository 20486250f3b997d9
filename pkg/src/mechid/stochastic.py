"""Equivariance in distribution and map-class tests for noisy dynamics.

With additive-noise kernels the commutation identity only holds in
distribution, so it is tested: push one anchor through a∘m1 and through
m2∘a with independent noise streams and compare the two samples. Separate
tests probe the map-class restrictions that make such models identifiable:
volume preservation of the Jacobian, and the signed-permutation structure
that product non-Gaussian increments force.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import ks_2samp

from .dynamics import StochasticMechanism
from .errors import DimensionMismatchError, IllConditionedError, NonFiniteSampleError
from .grids import GridSpec
from .maps import AffineMap
from .rng import stream

__all__ = [
    "DistributionalTestSpec",
    "TwoSampleResult",
    "AnchorResult",
    "TestReport",
    "ClassVerdict",
    "JacobianClassReport",
    "VolumeReport",
    "two_sample_test",
    "stochastic_equivariance_test",
    "signed_perm_offset_test",
    "finite_difference_jacobian",
    "volume_preservation_test",
    "jacobian_identifiability_test",
]

DEFAULT_FD_STEP = 1e-5
_ENERGY_MAX_POINTS = 512


@dataclass(frozen=True)
class DistributionalTestSpec:
    """Protocol parameters for an equivariance-in-distribution test."""

    dim: int
    samples_per_anchor: int = 1000
    significance: float = 0.05
    method: str = "ks"
    seed: int = 0
    anchors: np.ndarray | None = None
    anchor_count: int = 5
    anchor_low: float = -2.0
    anchor_high: float = 2.0
    permutations: int = 500

    def __post_init__(self):
        if self.samples_per_anchor < 100:
            raise ValueError("samples_per_anchor must be >= 100")
        if not 0 < self.significance < 1:
            raise ValueError("significance must lie in (0, 1)")
        if self.method not in ("ks", "energy"):
            raise ValueError(f"unknown method '{self.method}'")
        if self.anchors is not None:
            anchors = np.atleast_2d(np.asarray(self.anchors, dtype=float))
            if anchors.shape[1] != self.dim:
                raise DimensionMismatchError(
                    f"anchors have dimension {anchors.shape[1]}, spec says {self.dim}"
                )
            object.__setattr__(self, "anchors", anchors)

    def anchor_points(self) -> np.ndarray:
        if self.anchors is not None:
            return self.anchors
        return GridSpec(
            dim=self.dim, count=self.anchor_count, low=self.anchor_low, high=self.anchor_high
        ).points()


@dataclass(frozen=True)
class TwoSampleResult:
    """Outcome of one two-sample comparison."""

    p_value: float
    statistic: float
    method: str
    coordinate_p_values: tuple[float, ...] | None = None
    permutations: int | None = None


def _energy_statistic(D: np.ndarray, idx_x: np.ndarray, idx_y: np.ndarray) -> float:
    dxy = D[np.ix_(idx_x, idx_y)].mean()
    dxx = D[np.ix_(idx_x, idx_x)].mean()
    dyy = D[np.ix_(idx_y, idx_y)].mean()
    return float(2.0 * dxy - dxx - dyy)


def two_sample_test(
    X: np.ndarray,
    Y: np.ndarray,
    method: str = "ks",
    seed: int = 0,
    permutations: int = 500,
) -> TwoSampleResult:
    """Test whether X and Y come from one distribution.

    "ks": per-coordinate two-sample Kolmogorov-Smirnov, Bonferroni-combined
    (d times the smallest coordinate p-value, capped at 1). "energy": the
    energy-distance statistic with a label-permutation null; large samples
    are subsampled to keep the permutation loop quadratically bounded.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatchError("samples have different dimensions")
    d = X.shape[1]
    if method == "ks":
        pvals = []
        stats = []
        for i in range(d):
            r = ks_2samp(X[:, i], Y[:, i])
            pvals.append(float(r.pvalue))
            stats.append(float(r.statistic))
        p = min(1.0, d * min(pvals))
        return TwoSampleResult(
            p_value=p,
            statistic=max(stats),
            method="ks",
            coordinate_p_values=tuple(pvals),
        )
    if method != "energy":
        raise ValueError(f"unknown method '{method}'")
    gen = stream(seed, 101)
    if X.shape[0] > _ENERGY_MAX_POINTS:
        X = X[np.sort(gen.choice(X.shape[0], _ENERGY_MAX_POINTS, replace=False))]
    if Y.shape[0] > _ENERGY_MAX_POINTS:
        Y = Y[np.sort(gen.choice(Y.shape[0], _ENERGY_MAX_POINTS, replace=False))]
    n, m = X.shape[0], Y.shape[0]
    pool = np.vstack([X, Y])
    D = cdist(pool, pool)
    observed = _energy_statistic(D, np.arange(n), np.arange(n, n + m))
    count = 0
    for _ in range(permutations):
        perm = gen.permutation(n + m)
        if _energy_statistic(D, perm[:n], perm[n:]) >= observed:
            count += 1
    p = (1.0 + count) / (1.0 + permutations)
    return TwoSampleResult(p_value=float(p), statistic=observed, method="energy", permutations=permutations)


@dataclass(frozen=True)
class AnchorResult:
    anchor: tuple[float, ...]
    result: TwoSampleResult


@dataclass(frozen=True)
class TestReport:
    """Per-anchor p-values with a Bonferroni verdict across anchors."""

    anchors: tuple[AnchorResult, ...]
    passed: bool
    significance: float
    method: str
    samples_per_anchor: int

    def __bool__(self) -> bool:
        return self.passed

    @property
    def min_p_value(self) -> float:
        return min(r.result.p_value for r in self.anchors)


def stochastic_equivariance_test(
    a,
    m1: StochasticMechanism,
    m2: StochasticMechanism,
    spec: DistributionalTestSpec,
    workers: int = 1,
) -> TestReport:
    """Test a(m1(z, U)) =_d m2(a(z), U') at each anchor z.

    The two sides draw from independent counter-based streams keyed
    (seed, anchor, side), so results are reproducible and side-independent;
    anchors are likewise independent, so `workers > 1` runs them on a thread
    pool without changing any number. The verdict passes when every anchor's
    p-value clears the Bonferroni-corrected level significance / #anchors.
    """
    anchors = spec.anchor_points()
    if m1.dim != spec.dim or m2.dim != spec.dim:
        raise DimensionMismatchError("mechanism dimensions do not match the test spec")
    n = spec.samples_per_anchor

    def one_anchor(item) -> AnchorResult:
        i, z = item
        U1 = stream(spec.seed, i, 0).random((n, spec.dim))
        X = np.asarray(a(m1.sample_next(z, U1)), dtype=float)
        az = np.asarray(a(z[None, :]), dtype=float)[0]
        U2 = stream(spec.seed, i, 1).random((n, spec.dim))
        Y = np.asarray(m2.sample_next(az, U2), dtype=float)
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise NonFiniteSampleError(f"anchor {i}")
        r = two_sample_test(
            X, Y, method=spec.method, seed=spec.seed + 7919 * (i + 1), permutations=spec.permutations
        )
        return AnchorResult(anchor=tuple(float(v) for v in z), result=r)

    items = list(enumerate(anchors))
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_anchor, items))
    else:
        results = [one_anchor(it) for it in items]
    level = spec.significance / len(results)
    passed = all(r.result.p_value >= level for r in results)
    return TestReport(
        anchors=tuple(results),
        passed=passed,
        significance=spec.significance,
        method=spec.method,
        samples_per_anchor=n,
    )


# ---------------------------------------------------------------------------
# map-class tests


@dataclass(frozen=True)
class ClassVerdict:
    """Membership of a linear part in the signed-permutation class.

    `in_class` requires orthonormality together with the one-big-entry-per-
    row-and-column pattern; offsets never affect any flag. Volume
    preservation is reported alongside because it is the weaker necessary
    condition.
    """

    orthonormal: bool
    signed_permutation: bool
    volume_preserving: bool
    in_class: bool
    orthonormal_defect: float
    det_deviation: float
    permutation: tuple[int, ...] | None = None
    signs: tuple[int, ...] | None = None


def _signed_perm_pattern(A: np.ndarray, tol: float):
    d = A.shape[0]
    perm = []
    signs = []
    used = set()
    for i in range(d):
        row = np.abs(A[i])
        big = np.nonzero((row >= 1.0 - tol) & (row <= 1.0 + tol))[0]
        small_ok = bool(np.all(np.delete(row, big) <= tol)) if big.size else False
        if big.size != 1 or not small_ok:
            return None, None
        j = int(big[0])
        if j in used:
            return None, None
        used.add(j)
        perm.append(j)
        signs.append(1 if A[i, j] > 0 else -1)
    return tuple(perm), tuple(signs)


def signed_perm_offset_test(a, tol: float = 1e-9) -> ClassVerdict:
    """Classify the linear part of a map; offsets are ignored by design."""
    A = a.A if isinstance(a, AffineMap) else np.asarray(a, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {A.shape}")
    defect = float(np.linalg.norm(A.T @ A - np.eye(A.shape[0])))
    orthonormal = bool(defect <= tol)
    det_dev = float(abs(abs(np.linalg.det(A)) - 1.0))
    volume = bool(det_dev <= tol)
    perm, signs = _signed_perm_pattern(A, tol)
    is_perm = perm is not None
    return ClassVerdict(
        orthonormal=orthonormal,
        signed_permutation=is_perm,
        volume_preserving=volume,
        in_class=bool(orthonormal and is_perm),
        orthonormal_defect=defect,
        det_deviation=det_dev,
        permutation=perm,
        signs=signs,
    )


def finite_difference_jacobian(fn: Callable, z: np.ndarray, step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference Jacobian with a norm-relative step size."""
    z = np.asarray(z, dtype=float).reshape(-1)
    d = z.shape[0]
    h = step * (1.0 + float(np.linalg.norm(z)))
    pts = np.vstack([z + h * np.eye(d), z - h * np.eye(d)])
    out = np.asarray(fn(pts), dtype=float)
    if out.shape != (2 * d, d):
        raise DimensionMismatchError(
            f"map returned shape {out.shape}; a batched (2d, d) evaluation is required"
        )
    return (out[:d] - out[d:]).T / (2.0 * h)


def _consistent_jacobians(fn, z, step, tol, context):
    J1 = finite_difference_jacobian(fn, z, step)
    J2 = finite_difference_jacobian(fn, z, step / 2.0)
    if not (np.isfinite(J1).all() and np.isfinite(J2).all()):
        raise NonFiniteSampleError(context)
    if np.linalg.norm(J1 - J2) > 10.0 * tol * (1.0 + np.linalg.norm(J2)):
        raise IllConditionedError(
            f"finite-difference estimates at steps h and h/2 disagree at {context}; "
            f"the map may not be differentiable there"
        )
    return J2


@dataclass(frozen=True)
class VolumeReport:
    passed: bool
    max_deviation: float
    determinants: tuple[float, ...]
    tol: float

    def __bool__(self) -> bool:
        return self.passed


def volume_preservation_test(
    fn, points: np.ndarray, step: float = DEFAULT_FD_STEP, tol: float = 1e-6
) -> VolumeReport:
    """Check |det J(z)| = 1 at every sample point.

    Jacobians are estimated by central differences at steps h and h/2; the
    two estimates disagreeing beyond 10x the tolerance raises an
    ill-conditioning error instead of a silent verdict.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dets = []
    for i, z in enumerate(pts):
        J = _consistent_jacobians(fn, z, step, tol, f"point {i}")
        dets.append(float(abs(np.linalg.det(J))))
    deviation = float(max(abs(v - 1.0) for v in dets))
    return VolumeReport(
        passed=bool(deviation <= tol), max_deviation=deviation, determinants=tuple(dets), tol=tol
    )


@dataclass(frozen=True)
class JacobianClassReport:
    """Pointwise signed-permutation classification of a map's Jacobian.

    `in_class` requires every anchor verdict to pass and the recovered
    pattern (permutation and signs) to be identical across anchors.
    """

    anchors: tuple[ClassVerdict, ...]
    pattern_consistent: bool
    in_class: bool

    def __bool__(self) -> bool:
        return self.in_class


def jacobian_identifiability_test(
    fn, anchors: np.ndarray, step: float = DEFAULT_FD_STEP, tol: float = 1e-6
) -> JacobianClassReport:
    """Is the map's Jacobian one fixed signed permutation everywhere?

    This is the checkable footprint of the class that product non-Gaussian
    increments single out; smooth maps outside it show either a
    non-orthonormal Jacobian or a pattern that drifts across anchors.
    """
    pts = np.atleast_2d(np.asarray(anchors, dtype=float))
    verdicts = []
    for i, z in enumerate(pts):
        J = _consistent_jacobians(fn, z, step, tol, f"anchor {i}")
        verdicts.append(signed_perm_offset_test(J, tol=tol))
    patterns = {(v.permutation, v.signs) for v in verdicts}
    consistent = len(patterns) == 1 and None not in next(iter(patterns))
    in_class = bool(all(v.in_class for v in verdicts) and consistent)
    return JacobianClassReport(
        anchors=tuple(verdicts), pattern_consistent=consistent, in_class=in_class
    )
