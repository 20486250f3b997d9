"""Experiment runners: typed configs in, reports and tables out.

Each runner is pure in (config, seed): identical inputs give identical
outputs, including the order of table rows, independent of thread count.
The `verdict` drives the process exit status; when a config carries an
`expect` block the verdict is whether every expectation held, otherwise it
is the experiment's intrinsic pass flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import (
    CommutantConfig,
    ImitateConfig,
    RecoverConfig,
    SimulateConfig,
    StochasticTestConfig,
    VerifyConfig,
)
from .dynamics import Trajectory, simulate_deterministic, simulate_stochastic
from .equivariance import (
    ConditionReport,
    ConditionVerdict,
    EquivarianceFamily,
    exact_recovery_conditions,
    offset_identifiability_check,
    shared_equivariances,
)
from .imitation import CycleReport, MechanismClass, cycle_analysis, imitator_closure
from .recovery import RecoveryProblem, compare_up_to_class, recover_linear_encoder
from .rng import stream
from .stochastic import signed_perm_offset_test, stochastic_equivariance_test
from .verify import membership_equivalence_audit

__all__ = ["ExperimentOutcome", "run_experiment"]


@dataclass(frozen=True)
class ExperimentOutcome:
    """Everything a run produces before any file is written."""

    kind: str
    verdict: bool
    summary: dict
    report: dict
    tables: dict = field(default_factory=dict)
    trajectory: Trajectory | None = None
    expect_failures: tuple = ()
    stochastic: bool = False


def _float_close(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-9 * (1.0 + abs(b))


def _check_expectations(summary: dict, expect: dict | None):
    """Compare a flat summary against an expect block; bounds are inclusive."""
    if not expect:
        return True, ()
    failures = []
    for key, want in expect.items():
        if key not in summary:
            failures.append({"key": key, "problem": "no such summary field"})
            continue
        got = summary[key]
        if isinstance(want, dict):
            lo = want.get("min")
            hi = want.get("max")
            ok = (lo is None or got >= lo) and (hi is None or got <= hi)
        elif isinstance(want, bool) or isinstance(got, bool):
            ok = want is got
        elif isinstance(want, float) or isinstance(got, float):
            ok = _float_close(float(got), float(want))
        else:
            ok = want == got
        if not ok:
            failures.append({"key": key, "expected": want, "actual": got})
    return not failures, tuple(failures)


# ---------------------------------------------------------------------------
# report serialization helpers


def _complex_pairs(values) -> list:
    return [[float(v.real), float(v.imag)] for v in values]


def _verdict_json(v: ConditionVerdict) -> dict:
    return {"kind": v.kind, "dimension": v.dimension}


def _conditions_json(r: ConditionReport) -> dict:
    return {
        "eigenvalues": _complex_pairs(r.eigenvalues),
        "diagonalizable": r.diagonalizable,
        "distinct_eigenvalues": r.distinct_eigenvalues,
        "min_eigenvalue_gap": r.min_eigenvalue_gap,
        "spectral_radius": r.spectral_radius,
        "measured_dimension": r.measured_dimension,
        "verdict": _verdict_json(r.verdict),
        "offset_component_magnitudes": (
            None
            if r.offset_component_magnitudes is None
            else list(r.offset_component_magnitudes)
        ),
        "zero_component_count": r.zero_component_count,
        "offset_condition": r.offset_condition,
        "offset_count": r.offset_count,
        "distinct_offset_count": r.distinct_offset_count,
        "difference_rank": r.difference_rank,
        "assumption_rank_ok": r.assumption_rank_ok,
        "nonzero_difference_pair": (
            None if r.nonzero_difference_pair is None else list(r.nonzero_difference_pair)
        ),
        "analytic_measure_assumed": r.analytic_measure_assumed,
    }


def _family_json(fam: EquivarianceFamily) -> dict:
    f = fam.family
    return {
        "dimension": fam.dimension,
        "a_dimension": fam.a_dimension,
        "p_fiber_dimension": fam.p_fiber_dimension,
        "degenerate_offset": fam.degenerate_offset,
        "classification": _verdict_json(fam.classify()),
        "particular": {"A": f.particular_A, "p": f.particular_p},
        "basis": [{"A": f.basis_A[i], "p": f.basis_p[i]} for i in range(f.dim)],
        "residual": f.residual,
    }


def _cycle_json(c: CycleReport) -> dict:
    return {
        "in_closure": c.in_closure,
        "permutation": None if c.permutation is None else list(c.permutation),
        "cycles": [list(cy) for cy in c.cycles],
        # unmatched mechanisms carry an infinite residual; render as null
        "match_residuals": [r if np.isfinite(r) else None for r in c.match_residuals],
        "power_residuals": list(c.power_residuals),
        "power_checks_passed": c.power_checks_passed,
        "unmatched": list(c.unmatched),
    }


# ---------------------------------------------------------------------------
# runners


def _simulate_trajectory(cfg: SimulateConfig, seed: int) -> Trajectory:
    d = cfg.decoder.latent_dim
    if cfg.z1 is not None:
        z1 = cfg.z1
    else:
        z1 = stream(seed, 9901).uniform(cfg.z1_low, cfg.z1_high, d)
    if cfg.stochastic:
        return simulate_stochastic(
            cfg.decoder, cfg.mechanisms, z1, cfg.steps, seed=seed, schedule=cfg.schedule
        )
    return simulate_deterministic(cfg.decoder, cfg.mechanisms, z1, cfg.steps, schedule=cfg.schedule)


def _run_simulate(cfg: SimulateConfig, seed: int, threads: int, csv_tables: bool):
    traj = _simulate_trajectory(cfg, seed)
    summary = {
        "steps": traj.steps,
        "latent_dim": traj.latents.shape[1],
        "obs_dim": traj.observations.shape[1],
        "stochastic": cfg.stochastic,
        "final_norm": float(np.linalg.norm(traj.latents[-1])),
    }
    report = dict(summary)
    report["z1"] = traj.latents[0]
    report["schedule"] = list(traj.mechanisms)
    ok, failures = _check_expectations(summary, cfg.expect)
    verdict = ok if cfg.expect else True
    return ExperimentOutcome(
        kind=cfg.kind,
        verdict=verdict,
        summary=summary,
        report=report,
        trajectory=traj,
        expect_failures=failures,
        stochastic=cfg.stochastic,
    )


def _run_commutant(cfg: CommutantConfig, seed: int, threads: int, csv_tables: bool):
    fam = shared_equivariances(cfg.mechanisms, rtol=cfg.rtol)
    report = {"family": _family_json(fam)}
    conditions = None
    if cfg.offsets is not None:
        conditions = offset_identifiability_check(cfg.mechanisms[0].M, cfg.offsets, rtol=cfg.rtol)
    elif len(cfg.mechanisms) == 1:
        conditions = exact_recovery_conditions(cfg.mechanisms[0], rtol=cfg.rtol)
    if conditions is not None:
        report["conditions"] = _conditions_json(conditions)
    cls = fam.classify()
    summary = {
        "dimension": fam.dimension,
        "a_dimension": fam.a_dimension,
        "p_fiber_dimension": fam.p_fiber_dimension,
        "degenerate_offset": fam.degenerate_offset,
        "verdict": cls.kind,
        "verdict_dimension": cls.dimension,
    }
    if conditions is not None:
        summary["measured_dimension"] = conditions.measured_dimension
        summary["condition_verdict"] = conditions.verdict.kind
    tables = {}
    if csv_tables:
        d = cfg.mechanisms[0].dim
        header = (
            ["index"]
            + [f"A_{i + 1}{j + 1}" for i in range(d) for j in range(d)]
            + [f"p_{i + 1}" for i in range(d)]
        )
        rows = []
        f = fam.family
        for k in range(f.dim):
            rows.append([k] + list(f.basis_A[k].reshape(-1)) + list(f.basis_p[k]))
        tables["basis.csv"] = {"header": header, "rows": rows}
    ok, failures = _check_expectations(summary, cfg.expect)
    verdict = ok if cfg.expect else True
    return ExperimentOutcome(
        kind=cfg.kind,
        verdict=verdict,
        summary=summary,
        report=report,
        tables=tables,
        expect_failures=failures,
    )


def _run_imitate(cfg: ImitateConfig, seed: int, threads: int, csv_tables: bool):
    cls = MechanismClass(used=cfg.used, hypothesized=cfg.hypothesized)
    closure = imitator_closure(
        cls,
        rtol=cfg.rtol,
        budget=cfg.budget,
        grid=cfg.grid,
        check_tol=cfg.check_tol,
        seed=seed,
    )
    assignments = []
    rows = []
    max_residual = 0.0
    cycles_all_pass = True
    for k, fam in enumerate(closure.assignments):
        rep = fam.representative
        cyc = cycle_analysis(rep, cfg.used, grid=cfg.grid, tol=max(cfg.check_tol, 1e-8))
        cycles_all_pass = cycles_all_pass and cyc.in_closure and cyc.power_checks_passed
        recs = []
        for r in fam.records:
            max_residual = max(max_residual, r.residual)
            recs.append({"source": r.source, "target": r.target, "residual": r.residual})
            rows.append([k, r.source, r.target, r.residual])
        assignments.append(
            {
                "assignment": list(fam.assignment),
                "family_dimension": fam.family.dim,
                "map": {"A": rep.A, "p": rep.p},
                "records": recs,
                "cycle": _cycle_json(cyc),
            }
        )
    report = {
        "dim": cls.dim,
        "used": [m.label for m in cfg.used],
        "members": [cls.label_of(i) for i in range(len(cls.members))],
        "candidates_total": closure.candidates_total,
        "candidates_after_pruning": closure.candidates_after_pruning,
        "solved": closure.solved,
        "assignments": assignments,
    }
    summary = {
        "candidates_total": closure.candidates_total,
        "candidates_after_pruning": closure.candidates_after_pruning,
        "solved": closure.solved,
        "max_record_residual": max_residual,
        "cycles_all_pass": cycles_all_pass,
    }
    tables = {
        "records.csv": {
            "header": ["assignment_index", "source", "target", "residual"],
            "rows": rows,
        }
    }
    ok, failures = _check_expectations(summary, cfg.expect)
    verdict = ok if cfg.expect else True
    return ExperimentOutcome(
        kind=cfg.kind,
        verdict=verdict,
        summary=summary,
        report=report,
        tables=tables,
        expect_failures=failures,
    )


def _run_verify(cfg: VerifyConfig, seed: int, threads: int, csv_tables: bool):
    audit = membership_equivalence_audit(
        cfg.decoder,
        cfg.mechanisms,
        cfg.candidates,
        grid=cfg.grid,
        tol_equivariance=cfg.tol_equivariance,
        tol_identity=cfg.tol_identity,
        workers=threads,
    )
    rows_json = []
    rows_csv = []
    for r in audit.rows:
        rows_json.append(
            {
                "candidate_id": r.label,
                "equivariance_pass": r.equivariance_pass,
                "identity_pass": r.identity_pass,
                "equivariance_residual": r.equivariance_residual,
                "identity_residual": r.identity_residual,
                "lipschitz": r.lipschitz,
                "coupling_ok": r.coupling_ok,
                "claim": r.claim,
                "claim_ok": r.claim_ok,
            }
        )
        rows_csv.append(
            [
                r.label,
                r.equivariance_pass,
                r.identity_pass,
                r.equivariance_residual,
                r.identity_residual,
            ]
        )
    report = {
        "agreement": audit.agreement,
        "claims_ok": audit.claims_ok,
        "tol_equivariance": audit.tol_equivariance,
        "tol_identity": audit.tol_identity,
        "rows": rows_json,
    }
    summary = {
        "rows": len(audit.rows),
        "agreement": audit.agreement,
        "claims_ok": audit.claims_ok,
        "max_equivariance_residual": max(r.equivariance_residual for r in audit.rows),
        "max_identity_residual": max(r.identity_residual for r in audit.rows),
    }
    intrinsic = audit.agreement and audit.claims_ok
    ok, failures = _check_expectations(summary, cfg.expect)
    verdict = ok if cfg.expect else intrinsic
    tables = {
        "audit.csv": {
            "header": [
                "candidate_id",
                "equivariance_pass",
                "identity_pass",
                "equivariance_residual",
                "identity_residual",
            ],
            "rows": rows_csv,
        }
    }
    return ExperimentOutcome(
        kind=cfg.kind,
        verdict=verdict,
        summary=summary,
        report=report,
        tables=tables,
        expect_failures=failures,
    )


def _run_recover(cfg: RecoverConfig, seed: int, threads: int, csv_tables: bool):
    if cfg.trajectory_csv is not None:
        traj = Trajectory.from_csv(cfg.trajectory_csv)
    else:
        traj = _simulate_trajectory(cfg.simulate, seed)
    problem = RecoveryProblem.from_trajectory(traj, cfg.mechanisms, rtol=cfg.rtol)
    result = recover_linear_encoder(problem, rtol=cfg.rtol, seed=seed)
    report = {
        "E_hat": result.E_hat,
        "solution_space_dim": result.solution_space_dim,
        "residual": result.residual,
        "span_rank": result.span_rank,
        "observed_rank": result.observed_rank,
        "pair_count": result.pair_count,
        "sufficient_pairs": result.sufficient_pairs,
        "conditions": _conditions_json(result.conditions),
    }
    summary = {
        "solution_space_dim": result.solution_space_dim,
        "residual": result.residual,
        "span_rank": result.span_rank,
        "pair_count": result.pair_count,
        "sufficient_pairs": result.sufficient_pairs,
        "condition_verdict": result.conditions.verdict.kind,
    }
    if cfg.truth_encoder is not None:
        comp = compare_up_to_class(result.E_hat, cfg.truth_encoder, klass=cfg.comparison_class)
        report["comparison"] = {
            "class": comp.klass,
            "residual": comp.residual,
            "L": comp.L,
            "q": comp.q,
            "permutation": None if comp.permutation is None else list(comp.permutation),
            "signs": None if comp.signs is None else list(comp.signs),
        }
        summary["comparison_residual"] = comp.residual
    ok, failures = _check_expectations(summary, cfg.expect)
    verdict = ok if cfg.expect else True
    return ExperimentOutcome(
        kind=cfg.kind,
        verdict=verdict,
        summary=summary,
        report=report,
        expect_failures=failures,
        stochastic=cfg.simulate.stochastic if cfg.simulate is not None else False,
    )


def _run_stochastic_test(cfg: StochasticTestConfig, seed: int, threads: int, csv_tables: bool):
    spec = cfg.test_spec(seed)
    test = stochastic_equivariance_test(cfg.candidate, cfg.m1, cfg.m2, spec, workers=threads)
    anchor_rows = []
    anchors_json = []
    for i, a in enumerate(test.anchors):
        anchors_json.append(
            {
                "anchor": list(a.anchor),
                "p_value": a.result.p_value,
                "statistic": a.result.statistic,
                "coordinate_p_values": (
                    None
                    if a.result.coordinate_p_values is None
                    else list(a.result.coordinate_p_values)
                ),
            }
        )
        anchor_rows.append([i, a.result.p_value, a.result.statistic] + list(a.anchor))
    report = {
        "passed": test.passed,
        "significance": test.significance,
        "method": test.method,
        "samples_per_anchor": test.samples_per_anchor,
        "min_p_value": test.min_p_value,
        "anchors": anchors_json,
    }
    summary = {
        "passed": test.passed,
        "min_p_value": test.min_p_value,
        "anchors": len(test.anchors),
        "method": test.method,
        "samples_per_anchor": test.samples_per_anchor,
    }
    if cfg.run_class_test:
        verdict_cls = signed_perm_offset_test(cfg.candidate)
        report["class_verdict"] = {
            "orthonormal": verdict_cls.orthonormal,
            "signed_permutation": verdict_cls.signed_permutation,
            "volume_preserving": verdict_cls.volume_preserving,
            "in_class": verdict_cls.in_class,
            "orthonormal_defect": verdict_cls.orthonormal_defect,
            "det_deviation": verdict_cls.det_deviation,
            "permutation": (
                None if verdict_cls.permutation is None else list(verdict_cls.permutation)
            ),
            "signs": None if verdict_cls.signs is None else list(verdict_cls.signs),
        }
        summary["in_class"] = verdict_cls.in_class
    d = cfg.dim
    tables = {
        "anchors.csv": {
            "header": ["anchor_index", "p_value", "statistic"] + [f"z_{i + 1}" for i in range(d)],
            "rows": anchor_rows,
        }
    }
    intrinsic = test.passed
    ok, failures = _check_expectations(summary, cfg.expect)
    verdict = ok if cfg.expect else intrinsic
    return ExperimentOutcome(
        kind=cfg.kind,
        verdict=verdict,
        summary=summary,
        report=report,
        tables=tables,
        expect_failures=failures,
        stochastic=True,
    )


_RUNNERS = {
    "simulate": _run_simulate,
    "commutant": _run_commutant,
    "imitate": _run_imitate,
    "verify": _run_verify,
    "recover": _run_recover,
    "stochastic-test": _run_stochastic_test,
}


def run_experiment(cfg, seed: int, threads: int = 1, csv_tables: bool = False) -> ExperimentOutcome:
    """Dispatch a parsed config to its runner with the effective seed."""
    return _RUNNERS[cfg.kind](cfg, seed, threads, csv_tables)
