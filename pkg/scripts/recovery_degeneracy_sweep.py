#!/usr/bin/env python3
"""Sweep of linear encoder recovery against planted eigencoordinate zeros.

For each (d, k) the offset loses k eigencoordinates; the recovered solution
space should gain exactly k dimensions, and the k = 0 column should recover
the true encoder to near machine precision. A second sweep lowers the pair
count below the d(n+1) sufficiency bound to show where the data, rather
than the structure, becomes the obstacle.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from mechid.dynamics import AffineMechanism
from mechid.errors import DataDeficiencyError
from mechid.recovery import RecoveryProblem, recover_linear_encoder
from mechid.rng import stream


def planted_instance(gen, d, k):
    lam = np.sort(gen.uniform(0.4, 1.4, d))
    while np.min(np.diff(lam)) < 0.08:
        lam = np.sort(gen.uniform(0.4, 1.4, d))
    while True:
        S = gen.standard_normal((d, d))
        s = np.linalg.svd(S, compute_uv=False)
        if s[-1] > 0 and s[0] / s[-1] <= 20.0:
            break
    v = gen.uniform(0.3, 1.0, d) * gen.choice([-1.0, 1.0], d)
    if k:
        v[gen.choice(d, size=k, replace=False)] = 0.0
    M = S @ np.diag(lam) @ np.linalg.inv(S)
    return AffineMechanism(M, S @ v)


def pair_problem(gen, G, mech, pairs):
    d = mech.M.shape[0]
    Z = gen.uniform(-2.0, 2.0, (pairs, d))
    return RecoveryProblem(
        Z @ G.T, (Z @ mech.M.T + mech.b) @ G.T, mech.M, np.tile(mech.b, (pairs, 1))
    )


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--trials", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", type=Path, default=None)
    args = ap.parse_args(argv)

    rows = []
    print(f"{'d':>2} {'k':>2} {'dim==k':>7} {'median rel err (k=0)':>22}")
    for d in args.dims:
        n = d + 1
        for k in range(d):
            matches = 0
            errs = []
            for t in range(args.trials):
                gen = stream(args.seed, d, k, t)
                mech = planted_instance(gen, d, k)
                G = gen.standard_normal((n, d))
                res = recover_linear_encoder(pair_problem(gen, G, mech, d * (n + 1)))
                matches += res.solution_space_dim == k
                err = float("nan")
                if k == 0:
                    truth = np.linalg.pinv(G)
                    err = np.linalg.norm(res.E_hat - truth) / np.linalg.norm(truth)
                    errs.append(err)
                rows.append((d, k, t, res.solution_space_dim, err))
            shown = f"{np.median(errs):.2e}" if errs else "-"
            print(f"{d:>2} {k:>2} {matches:>3}/{args.trials:<3} {shown:>22}")

    print("\npair-count sweep (d = 3, n = 4): deficiency below the spanning bound")
    print(f"{'pairs':>6} {'deficient':>10} {'recovered':>10}")
    d, n = 3, 4
    for pairs in range(2, d * (n + 1) + 3, 2):
        deficient = recovered = 0
        for t in range(args.trials):
            gen = stream(args.seed, 7, pairs, t)
            mech = planted_instance(gen, d, 0)
            G = gen.standard_normal((n, d))
            try:
                res = recover_linear_encoder(pair_problem(gen, G, mech, pairs))
                recovered += res.solution_space_dim == 0
            except DataDeficiencyError:
                deficient += 1
        print(f"{pairs:>6} {deficient:>10} {recovered:>10}")

    if args.csv is not None:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["d", "k", "trial", "solution_space_dim", "rel_err"])
            w.writerows(rows)
        print(f"\nwrote {len(rows)} rows to {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
