#!/usr/bin/env python3
"""Census of equivariance family dimensions for random affine mechanisms.

Tabulates the affine family dimension (split into linear part and offset
fiber) across mechanism types and dimensions, then shows how the shared
family shrinks as more mechanisms from one latent process accumulate.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from mechid.dynamics import AffineMechanism
from mechid.equivariance import affine_equivariances, shared_equivariances
from mechid.rng import stream


def _invertible(gen, d, cond_cap=20.0):
    while True:
        A = gen.standard_normal((d, d))
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] > 0 and s[0] / s[-1] <= cond_cap:
            return A


def random_mechanism(gen, d, kind):
    if kind == "generic":
        return AffineMechanism(_invertible(gen, d), 0.5 * gen.standard_normal(d))
    if kind == "diagonal":
        lam = np.sort(gen.uniform(0.4, 1.6, d))
        while np.min(np.diff(lam, prepend=0.0)) < 0.05:
            lam = np.sort(gen.uniform(0.4, 1.6, d))
        return AffineMechanism(np.diag(lam), 0.5 * gen.standard_normal(d))
    if kind == "scalar":
        c = gen.uniform(0.5, 1.5)
        return AffineMechanism(c * np.eye(d), 0.5 * gen.standard_normal(d))
    if kind == "orthogonal":
        Q, R = np.linalg.qr(gen.standard_normal((d, d)))
        return AffineMechanism(Q * np.sign(np.diag(R)), np.zeros(d))
    raise ValueError(f"unknown kind {kind}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--trials", type=int, default=25)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", type=Path, default=None, help="write per-trial rows here")
    args = ap.parse_args(argv)

    kinds = ["generic", "diagonal", "scalar", "orthogonal"]
    rows = []
    print(f"{'d':>2} {'kind':>10} {'dim':>8} {'a_dim':>8} {'p_fiber':>8}")
    for d in args.dims:
        for kind in kinds:
            dims, a_dims, fibers = [], [], []
            for t in range(args.trials):
                gen = stream(args.seed, d, kinds.index(kind), t)
                fam = affine_equivariances(random_mechanism(gen, d, kind))
                dims.append(fam.dimension)
                a_dims.append(fam.a_dimension)
                fibers.append(fam.p_fiber_dimension)
                rows.append((d, kind, t, fam.dimension, fam.a_dimension, fam.p_fiber_dimension))
            fmt = lambda v: f"{np.mean(v):.1f}" if len(set(v)) > 1 else str(v[0])
            print(f"{d:>2} {kind:>10} {fmt(dims):>8} {fmt(a_dims):>8} {fmt(fibers):>8}")

    print("\nshared family linear dimension as mechanisms accumulate")
    print(f"{'d':>2} {'#mech':>6} {'a_dim':>6}")
    for d in args.dims:
        gen = stream(args.seed, 99, d)
        mechs = [random_mechanism(gen, d, "diagonal") for _ in range(4)]
        for k in range(1, len(mechs) + 1):
            a_dim = shared_equivariances(mechs[:k]).a_dimension
            print(f"{d:>2} {k:>6} {a_dim:>6}")

    if args.csv is not None:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["d", "kind", "trial", "dimension", "a_dimension", "p_fiber_dimension"])
            w.writerows(rows)
        print(f"\nwrote {len(rows)} rows to {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
