"""Latent dynamics, noise, decoders, and trajectory simulation.

The data-generating picture: a latent state evolves by per-step mechanisms
z_{t+1} = m_t(z_t) (deterministically or through a noise kernel), and a
decoder maps each latent to an observation x_t. Encoders are left inverses
of decoders restricted to the decoder's image, which is the only place the
data ever lives.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import (
    DimensionMismatchError,
    DivergedTrajectoryError,
    NonFiniteSampleError,
    OffManifoldError,
    SingularMapError,
)
from .linalg import DEFAULT_RTOL, smallest_singular_gap
from .rng import stream

__all__ = [
    "DIVERGENCE_BOUND",
    "AffineMechanism",
    "GeneralMechanism",
    "StochasticMechanism",
    "NoiseSpec",
    "sample_generalized_laplace",
    "additive_noise_mechanism",
    "identity_kernel_mechanism",
    "ScalarMap",
    "make_scalar_map",
    "LinearDecoder",
    "StructuredDecoder",
    "TransformedDecoder",
    "Trajectory",
    "apply_mechanism",
    "simulate_deterministic",
    "simulate_stochastic",
]

# States with norm beyond this are treated as numerically divergent.
DIVERGENCE_BOUND = 1e12


# ---------------------------------------------------------------------------
# mechanisms


@dataclass(frozen=True)
class AffineMechanism:
    """z -> M z + b with invertible M."""

    M: np.ndarray
    b: np.ndarray
    label: str | None = None

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
            raise DimensionMismatchError(f"M must be square and nonempty, got shape {M.shape}")
        b = np.array(self.b, dtype=float).reshape(-1)
        if b.shape[0] != M.shape[0]:
            raise DimensionMismatchError(
                f"offset has dimension {b.shape[0]}, M is {M.shape[0]}x{M.shape[1]}"
            )
        if smallest_singular_gap(M) <= DEFAULT_RTOL:
            raise SingularMapError("mechanism matrix is singular to working tolerance")
        M.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"state has dimension {z.shape[-1]}, mechanism expects {self.dim}"
            )
        return z @ self.M.T + self.b

    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and eigenvector matrix of M (possibly complex)."""
        return np.linalg.eig(self.M)


@dataclass(frozen=True)
class GeneralMechanism:
    """A deterministic mechanism given by an arbitrary (batched) callable."""

    fn: Callable[[np.ndarray], np.ndarray]
    dim: int
    label: str | None = None

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"state has dimension {z.shape[-1]}, mechanism expects {self.dim}"
            )
        return self.fn(z)


@dataclass(frozen=True)
class StochasticMechanism:
    """A Markov kernel z -> kernel(z, U) with U uniform on [0,1]^dim.

    `kernel` must accept a single state z of shape (dim,) together with a
    batch U of shape (m, dim) and return the m next states, shape (m, dim).
    Determinism contract: identical (z, U) gives identical output.
    """

    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dim: int
    label: str | None = None

    def sample_next(self, z: np.ndarray, U: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1)
        U = np.atleast_2d(np.asarray(U, dtype=float))
        if z.shape[0] != self.dim or U.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"kernel expects dimension {self.dim}, got state {z.shape[0]} / noise {U.shape[1]}"
            )
        out = np.asarray(self.kernel(z, U), dtype=float)
        if out.shape != U.shape:
            raise DimensionMismatchError(
                f"kernel returned shape {out.shape}, expected {U.shape}"
            )
        return out


def apply_mechanism(mechanism, z: np.ndarray) -> np.ndarray:
    """One deterministic step; raises on dimension mismatch."""
    return mechanism(z)


# ---------------------------------------------------------------------------
# noise


@dataclass(frozen=True)
class NoiseSpec:
    """A product distribution of iid coordinates for increments.

    family "generalized-laplace" has density proportional to
    exp(-|v/scale|^alpha); alpha = 2 recovers a Gaussian and alpha = 1 the
    Laplace distribution. "gaussian" is N(0, scale^2) and "uniform" is flat
    on [-scale, scale].
    """

    family: str
    scale: float = 1.0
    alpha: float | None = None
    dim: int = 1

    def __post_init__(self):
        if self.family not in ("generalized-laplace", "gaussian", "uniform"):
            raise ValueError(f"unknown noise family '{self.family}'")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.family == "generalized-laplace":
            if self.alpha is None or self.alpha <= 0:
                raise ValueError("generalized-laplace requires alpha > 0")

    def sample(self, count: int, gen: np.random.Generator) -> np.ndarray:
        shape = (count, self.dim)
        if self.family == "generalized-laplace":
            return sample_generalized_laplace(self.alpha, self.scale, shape, gen)
        if self.family == "gaussian":
            return self.scale * gen.standard_normal(shape)
        return gen.uniform(-self.scale, self.scale, shape)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        """Coordinatewise quantile transform of uniform-[0,1) variates."""
        u = np.asarray(u, dtype=float)
        if self.family == "gaussian":
            return self.scale * special.ndtri(np.clip(u, 1e-300, 1.0 - 1e-16))
        if self.family == "uniform":
            return self.scale * (2.0 * u - 1.0)
        s = u - 0.5
        w = np.clip(2.0 * np.abs(s), 0.0, 1.0 - 1e-16)
        mag = self.scale * special.gammaincinv(1.0 / self.alpha, w) ** (1.0 / self.alpha)
        return np.sign(s) * mag

    def variance(self) -> float:
        """Per-coordinate variance."""
        if self.family == "gaussian":
            return self.scale**2
        if self.family == "uniform":
            return self.scale**2 / 3.0
        a = self.alpha
        return self.scale**2 * math.gamma(3.0 / a) / math.gamma(1.0 / a)


def sample_generalized_laplace(
    alpha: float, scale: float, size, gen: np.random.Generator | int
) -> np.ndarray:
    """Exact draws from density proportional to exp(-|v/scale|^alpha).

    Uses the gamma transform: |V|^alpha / scale^alpha ~ Gamma(1/alpha, 1),
    with an independent symmetric sign.
    """
    if alpha <= 0 or scale <= 0:
        raise ValueError("alpha and scale must be positive")
    if not isinstance(gen, np.random.Generator):
        gen = stream(int(gen))
    mag = scale * gen.gamma(1.0 / alpha, 1.0, size) ** (1.0 / alpha)
    sign = np.where(gen.random(size) < 0.5, -1.0, 1.0)
    return sign * mag


def additive_noise_mechanism(noise: NoiseSpec, label: str | None = None) -> StochasticMechanism:
    """Kernel z -> z + V with V drawn coordinatewise from `noise`."""

    def kernel(z, U):
        return z[None, :] + noise.ppf(U)

    return StochasticMechanism(kernel=kernel, dim=noise.dim, label=label or "additive-noise")


def identity_kernel_mechanism(dim: int, label: str | None = None) -> StochasticMechanism:
    """Kernel z -> z regardless of the noise draw."""

    def kernel(z, U):
        return np.broadcast_to(z, U.shape).copy()

    return StochasticMechanism(kernel=kernel, dim=dim, label=label or "identity-kernel")


# ---------------------------------------------------------------------------
# decoders


@dataclass(frozen=True)
class ScalarMap:
    """A smooth strictly monotone scalar map with a closed-form inverse.

    Supported kinds: identity, exp, sinh, asinh, cubic (x + beta x^3 with
    beta >= 0), affine (s x + t with s != 0). Inverses return NaN outside
    their domain; decoders turn that into an off-manifold error.
    """

    kind: str
    beta: float = 0.0
    s: float = 1.0
    t: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "exp", "sinh", "asinh", "cubic", "affine"):
            raise ValueError(f"unknown scalar map '{self.kind}'")
        if self.kind == "cubic" and self.beta < 0:
            raise ValueError("cubic map requires beta >= 0")
        if self.kind == "affine" and self.s == 0:
            raise ValueError("affine map requires nonzero slope")

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x
        if self.kind == "exp":
            return np.exp(x)
        if self.kind == "sinh":
            return np.sinh(x)
        if self.kind == "asinh":
            return np.arcsinh(x)
        if self.kind == "cubic":
            return x + self.beta * x**3
        return self.s * x + self.t

    def inverse(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind == "identity":
            return y
        if self.kind == "exp":
            with np.errstate(invalid="ignore", divide="ignore"):
                out = np.where(y > 0, np.log(np.where(y > 0, y, 1.0)), np.nan)
            return out
        if self.kind == "sinh":
            return np.arcsinh(y)
        if self.kind == "asinh":
            return np.sinh(y)
        if self.kind == "cubic":
            if self.beta == 0.0:
                return y
            # unique real root of beta x^3 + x = y (Cardano, monotone case)
            half = y / (2.0 * self.beta)
            disc = np.sqrt(half**2 + (1.0 / (3.0 * self.beta)) ** 3)
            return np.cbrt(half + disc) + np.cbrt(half - disc)
        return (y - self.t) / self.s


def make_scalar_map(kind: str, **params) -> ScalarMap:
    return ScalarMap(kind=kind, **params)


def _full_column_rank(G: np.ndarray) -> bool:
    s = np.linalg.svd(G, compute_uv=False)
    return s.size > 0 and s[0] > 0 and s[-1] > DEFAULT_RTOL * s[0]


@dataclass(frozen=True)
class LinearDecoder:
    """x = G z with G of full column rank; encoder is the pseudoinverse."""

    G: np.ndarray
    manifold_tol: float = 1e-6

    def __post_init__(self):
        G = np.array(self.G, dtype=float)
        if G.ndim != 2 or G.shape[0] < G.shape[1] or G.shape[1] < 1:
            raise DimensionMismatchError(f"G must be n x d with n >= d >= 1, got {G.shape}")
        if not _full_column_rank(G):
            raise SingularMapError("decoder matrix is column-rank deficient")
        G.setflags(write=False)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "_pinv", np.linalg.pinv(G))

    @property
    def latent_dim(self) -> int:
        return self.G.shape[1]

    @property
    def obs_dim(self) -> int:
        return self.G.shape[0]

    def decode(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) @ self.G.T

    def encode(self, x: np.ndarray, check: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = x @ self._pinv.T
        if check and self.obs_dim > self.latent_dim:
            self._manifold_check(x, self.decode(z))
        return z

    def _manifold_check(self, x: np.ndarray, recon: np.ndarray):
        x2 = np.atleast_2d(x)
        r2 = np.atleast_2d(recon)
        dev = np.linalg.norm(r2 - x2, axis=-1) / (1.0 + np.linalg.norm(x2, axis=-1))
        bad = np.nonzero(dev > self.manifold_tol)[0]
        if bad.size:
            raise OffManifoldError(int(bad[0]), float(dev[bad[0]]), self.manifold_tol)


@dataclass(frozen=True)
class StructuredDecoder:
    """x = h(G z) with h strictly monotone coordinatewise.

    The encoder inverts h in closed form per coordinate, then applies the
    pseudoinverse of G. Observations outside the image of h (or off the
    column space of G) raise an off-manifold error.
    """

    G: np.ndarray
    maps: tuple[ScalarMap, ...]
    manifold_tol: float = 1e-6

    def __post_init__(self):
        G = np.array(self.G, dtype=float)
        if G.ndim != 2 or G.shape[0] < G.shape[1] or G.shape[1] < 1:
            raise DimensionMismatchError(f"G must be n x d with n >= d >= 1, got {G.shape}")
        if not _full_column_rank(G):
            raise SingularMapError("decoder matrix is column-rank deficient")
        maps = tuple(self.maps)
        if len(maps) != G.shape[0]:
            raise DimensionMismatchError(
                f"{len(maps)} coordinate maps for {G.shape[0]} observation coordinates"
            )
        G.setflags(write=False)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "_pinv", np.linalg.pinv(G))

    @property
    def latent_dim(self) -> int:
        return self.G.shape[1]

    @property
    def obs_dim(self) -> int:
        return self.G.shape[0]

    def decode(self, z: np.ndarray) -> np.ndarray:
        lin = np.asarray(z, dtype=float) @ self.G.T
        out = np.empty_like(lin)
        for i, m in enumerate(self.maps):
            out[..., i] = m.forward(lin[..., i])
        return out

    def encode(self, x: np.ndarray, check: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.empty_like(x, dtype=float)
        for i, m in enumerate(self.maps):
            y[..., i] = m.inverse(x[..., i])
        if check:
            y2 = np.atleast_2d(y)
            bad_rows = np.nonzero(~np.isfinite(y2).all(axis=-1))[0]
            if bad_rows.size:
                raise OffManifoldError(int(bad_rows[0]), float("inf"), self.manifold_tol)
        z = y @ self._pinv.T
        if check and self.obs_dim > self.latent_dim:
            x2 = np.atleast_2d(x)
            r2 = np.atleast_2d(self.decode(z))
            dev = np.linalg.norm(r2 - x2, axis=-1) / (1.0 + np.linalg.norm(x2, axis=-1))
            bad = np.nonzero(dev > self.manifold_tol)[0]
            if bad.size:
                raise OffManifoldError(int(bad[0]), float(dev[bad[0]]), self.manifold_tol)
        return z


@dataclass(frozen=True)
class TransformedDecoder:
    """The decoder g∘a^{-1} for a base decoder g and a latent bijection a.

    Its encoder is a∘g^{-1}, so candidate models that differ from the truth
    by a latent map are built by wrapping the true decoder.
    """

    base: object
    latent_map: object

    @property
    def latent_dim(self) -> int:
        return self.base.latent_dim

    @property
    def obs_dim(self) -> int:
        return self.base.obs_dim

    def decode(self, z: np.ndarray) -> np.ndarray:
        return self.base.decode(self.latent_map.inverse(z))

    def encode(self, x: np.ndarray, check: bool = True) -> np.ndarray:
        return self.latent_map(self.base.encode(x, check=check))


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class Trajectory:
    """Latent and observed paths plus the per-step mechanism indices."""

    latents: np.ndarray
    observations: np.ndarray
    mechanisms: tuple[int, ...]
    seed: int | None = None

    def __post_init__(self):
        z = np.asarray(self.latents, dtype=float)
        x = np.asarray(self.observations, dtype=float)
        if z.ndim != 2 or x.ndim != 2 or z.shape[0] != x.shape[0]:
            raise DimensionMismatchError("latents and observations must align per step")
        if len(self.mechanisms) != z.shape[0] - 1:
            raise DimensionMismatchError(
                f"{len(self.mechanisms)} mechanism indices for {z.shape[0]} states"
            )
        object.__setattr__(self, "latents", z)
        object.__setattr__(self, "observations", x)
        object.__setattr__(self, "mechanisms", tuple(int(i) for i in self.mechanisms))

    @property
    def steps(self) -> int:
        return self.latents.shape[0]

    def to_csv(self, path) -> None:
        d = self.latents.shape[1]
        n = self.observations.shape[1]
        header = (
            ["t"]
            + [f"z_{i + 1}" for i in range(d)]
            + [f"x_{i + 1}" for i in range(n)]
            + ["mech"]
        )
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t in range(self.steps):
                row = [str(t + 1)]
                row += [format(v, ".17g") for v in self.latents[t]]
                row += [format(v, ".17g") for v in self.observations[t]]
                row.append(str(self.mechanisms[t]) if t < self.steps - 1 else "")
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            d = sum(1 for h in header if h.startswith("z_"))
            n = sum(1 for h in header if h.startswith("x_"))
            latents, observations, mechs = [], [], []
            for row in reader:
                latents.append([float(v) for v in row[1 : 1 + d]])
                observations.append([float(v) for v in row[1 + d : 1 + d + n]])
                if row[1 + d + n] != "":
                    mechs.append(int(row[1 + d + n]))
        return cls(
            latents=np.array(latents),
            observations=np.array(observations),
            mechanisms=tuple(mechs),
        )


def _check_state(z: np.ndarray, step: int) -> None:
    norm = float(np.linalg.norm(z))
    if not math.isfinite(norm) or norm > DIVERGENCE_BOUND:
        raise DivergedTrajectoryError(step, norm, DIVERGENCE_BOUND)


def _resolve_schedule(mechanisms: Sequence, schedule: Sequence[int] | None, T: int):
    if schedule is None:
        if len(mechanisms) != 1:
            raise ValueError("schedule is required when more than one mechanism is given")
        schedule = [0] * (T - 1)
    if len(schedule) < T - 1:
        raise ValueError(f"schedule has {len(schedule)} steps, {T - 1} needed")
    idx = [int(i) for i in schedule[: T - 1]]
    for i in idx:
        if not 0 <= i < len(mechanisms):
            raise ValueError(f"schedule index {i} out of range for {len(mechanisms)} mechanisms")
    return idx


def simulate_deterministic(
    decoder,
    mechanisms: Sequence,
    z1: np.ndarray,
    T: int,
    schedule: Sequence[int] | None = None,
) -> Trajectory:
    """Roll out z_{t+1} = m_t(z_t) for T states and decode each one."""
    if T < 1:
        raise ValueError("T must be >= 1")
    idx = _resolve_schedule(mechanisms, schedule, T)
    z = np.asarray(z1, dtype=float).reshape(-1)
    if z.shape[0] != decoder.latent_dim:
        raise DimensionMismatchError(
            f"z1 has dimension {z.shape[0]}, decoder expects {decoder.latent_dim}"
        )
    _check_state(z, 1)
    states = [z]
    for t in range(1, T):
        z = apply_mechanism(mechanisms[idx[t - 1]], z)
        _check_state(z, t + 1)
        states.append(z)
    latents = np.vstack(states)
    return Trajectory(latents=latents, observations=decoder.decode(latents), mechanisms=idx)


def simulate_stochastic(
    decoder,
    mechanisms: Sequence,
    z1,
    T: int,
    seed: int,
    schedule: Sequence[int] | None = None,
) -> Trajectory:
    """Roll out a schedule of noise kernels with counter-based streams.

    Step t consumes the stream keyed (seed, t); the initial condition uses
    (seed, 0) when z1 is a callable z1(gen). Reruns with the same seed are
    bit-identical, independent of thread count or evaluation order.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    idx = _resolve_schedule(mechanisms, schedule, T)
    if callable(z1):
        z = np.asarray(z1(stream(seed, 0)), dtype=float).reshape(-1)
    else:
        z = np.asarray(z1, dtype=float).reshape(-1)
    if z.shape[0] != decoder.latent_dim:
        raise DimensionMismatchError(
            f"z1 has dimension {z.shape[0]}, decoder expects {decoder.latent_dim}"
        )
    _check_state(z, 1)
    states = [z]
    for t in range(1, T):
        mech = mechanisms[idx[t - 1]]
        if isinstance(mech, StochasticMechanism):
            U = stream(seed, t).random((1, mech.dim))
            z = mech.sample_next(z, U)[0]
        else:
            z = apply_mechanism(mech, z)
        if not np.isfinite(z).all():
            raise NonFiniteSampleError(f"simulation step {t + 1}")
        _check_state(z, t + 1)
        states.append(z)
    latents = np.vstack(states)
    return Trajectory(
        latents=latents, observations=decoder.decode(latents), mechanisms=idx, seed=seed
    )
