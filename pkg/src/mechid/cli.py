"""Command line driver: config ingestion, dispatch, manifests, replay.

Every run writes a report.json, any tables, and a manifest.json recording
the effective config (flag and environment overrides already applied), its
canonical digest, and a sha256 per output file. Replay re-executes the
manifest's config and compares outputs bit-for-bit, falling back to a
numeric comparison within the recorded tolerance for stochastic runs.

Exit status: 0 success, 2 verdict-failure, 1 error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np

from . import __version__
from .config import EXPERIMENT_KINDS, parse_config
from .errors import ConfigError, MechidError, ReplayIncompatibilityError
from .experiments import run_experiment
from .jsonio import canonical_digest, dump_json, dumps_json, file_digest, load_json

__all__ = ["main", "build_parser"]

# Stochastic runs are still bit-reproducible (counter-based streams), but
# replay tolerates this much relative drift before declaring divergence.
STOCHASTIC_REPLAY_RTOL = 1e-9

_COMPARISON_CLASSES = (
    "exact",
    "offset",
    "signed-permutation",
    "signed-permutation+offset",
    "linear",
)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mechid",
        description="Simulate latent dynamics, compute equivariance and imitator "
        "sets, verify observation identities, recover encoders, and test "
        "equivariance in distribution.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} experiment from a JSON config")
        sp.add_argument("config", type=Path, help="JSON experiment config")
        sp.add_argument("--output-dir", type=Path, default=Path("."))
        sp.add_argument("--seed", type=int, default=None, help="overrides MECHID_SEED and config")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--rtol", type=float, default=None)
        if kind == "imitate":
            sp.add_argument("--budget", type=int, default=None)
        if kind == "recover":
            sp.add_argument("--class", dest="comparison_class", choices=_COMPARISON_CLASSES)
        if kind == "commutant":
            sp.add_argument("--csv", action="store_true", help="also write basis.csv (row-major)")
    rp = sub.add_parser("replay", help="re-run a manifest and compare outputs")
    rp.add_argument("manifest", type=Path)
    rp.add_argument(
        "--output-dir",
        type=Path,
        default=None,
        help="keep regenerated outputs here (default: temporary directory)",
    )
    return p


def _format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(str(h) for h in header)]
    for row in rows:
        lines.append(",".join(_format_cell(c) for c in row))
    path.write_text("\n".join(lines) + "\n")


def _effective_seed(doc: dict, flag_seed: int | None) -> None:
    if flag_seed is not None:
        doc["seed"] = flag_seed
        return
    env = os.environ.get("MECHID_SEED")
    if env is not None:
        try:
            doc["seed"] = int(env)
        except ValueError:
            raise ConfigError("seed", f"MECHID_SEED must be an integer, got '{env}'") from None


def _execute_config(doc: dict, output_dir: Path, threads: int):
    """Run one effective config document and write all outputs.

    Returns (exit_status, manifest dict). The manifest itself is written
    last and never appears in its own outputs map.
    """
    t0 = time.perf_counter()
    cfg = parse_config(doc)
    outcome = run_experiment(
        cfg, cfg.seed, threads=threads, csv_tables=bool(doc.get("csv_tables", False))
    )
    output_dir.mkdir(parents=True, exist_ok=True)
    report_doc = {
        "experiment": outcome.kind,
        "verdict": outcome.verdict,
        "summary": outcome.summary,
        "expect_failures": list(outcome.expect_failures),
        "detail": outcome.report,
    }
    dump_json(report_doc, output_dir / "report.json")
    outputs = {"report.json": file_digest(output_dir / "report.json")}
    for name in sorted(outcome.tables):
        tbl = outcome.tables[name]
        _write_csv(output_dir / name, tbl["header"], tbl["rows"])
        outputs[name] = file_digest(output_dir / name)
    if outcome.trajectory is not None:
        outcome.trajectory.to_csv(output_dir / "trajectory.csv")
        outputs["trajectory.csv"] = file_digest(output_dir / "trajectory.csv")
    exit_status = 0 if outcome.verdict else 2
    manifest = {
        "experiment": outcome.kind,
        "version": __version__,
        "seed": cfg.seed,
        "threads": threads,
        "config": doc,
        "config_digest": canonical_digest(doc),
        "duration_seconds": time.perf_counter() - t0,
        "outputs": outputs,
        "outcome": {
            "verdict": outcome.verdict,
            "summary": outcome.summary,
            "expect_failures": list(outcome.expect_failures),
        },
        "exit_status": exit_status,
        "stochastic": outcome.stochastic,
        "replay_tolerance": STOCHASTIC_REPLAY_RTOL if outcome.stochastic else 0.0,
    }
    dump_json(manifest, output_dir / "manifest.json")
    return exit_status, manifest


def _run_command(args) -> int:
    doc = load_json(args.config)
    if not isinstance(doc, dict):
        raise ConfigError("", "config document must be a JSON object")
    kind = args.command
    if "experiment" in doc and doc["experiment"] != kind:
        raise ConfigError(
            "experiment", f"document says '{doc['experiment']}', subcommand is '{kind}'"
        )
    doc["experiment"] = kind
    if getattr(args, "rtol", None) is not None:
        doc["rtol"] = args.rtol
    if getattr(args, "budget", None) is not None:
        doc["budget"] = args.budget
    if getattr(args, "comparison_class", None) is not None:
        comp = doc.get("comparison")
        if not isinstance(comp, dict):
            comp = {}
        comp = dict(comp)
        comp["class"] = args.comparison_class
        doc["comparison"] = comp
    if getattr(args, "csv", False):
        doc["csv_tables"] = True
    _effective_seed(doc, args.seed)
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if threads < 1:
        raise ConfigError("threads", "must be a positive integer")
    status, manifest = _execute_config(doc, args.output_dir, threads)
    verdict = manifest["outcome"]["verdict"]
    print(f"{kind}: {'pass' if verdict else 'FAIL'}; outputs in {args.output_dir}")
    for f in manifest["outcome"]["expect_failures"]:
        print(f"  expectation not met: {f}")
    return status


def _numeric_diff(a, b, rtol: float, path: str):
    """First divergence between two parsed JSON values, or None."""
    if isinstance(a, dict) and isinstance(b, dict):
        for k in a.keys() | b.keys():
            if k not in a or k not in b:
                return {"path": f"{path}.{k}", "problem": "key missing on one side"}
            d = _numeric_diff(a[k], b[k], rtol, f"{path}.{k}" if path else str(k))
            if d is not None:
                return d
        return None
    if isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            return {"path": path, "problem": f"length {len(a)} vs {len(b)}"}
        for i, (x, y) in enumerate(zip(a, b)):
            d = _numeric_diff(x, y, rtol, f"{path}[{i}]")
            if d is not None:
                return d
        return None
    if isinstance(a, bool) or isinstance(b, bool):
        return None if a is b else {"path": path, "recorded": a, "regenerated": b}
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        if abs(float(a) - float(b)) <= rtol * (1.0 + abs(float(a))):
            return None
        return {"path": path, "recorded": a, "regenerated": b}
    return None if a == b else {"path": path, "recorded": a, "regenerated": b}


def _csv_diff(text_a: str, text_b: str, rtol: float):
    rows_a = text_a.splitlines()
    rows_b = text_b.splitlines()
    if len(rows_a) != len(rows_b):
        return {"path": "rows", "problem": f"{len(rows_a)} vs {len(rows_b)} rows"}
    for r, (la, lb) in enumerate(zip(rows_a, rows_b)):
        ca, cb = la.split(","), lb.split(",")
        if len(ca) != len(cb):
            return {"path": f"row {r}", "problem": "column count differs"}
        for c, (x, y) in enumerate(zip(ca, cb)):
            try:
                fx, fy = float(x), float(y)
                if abs(fx - fy) <= rtol * (1.0 + abs(fx)):
                    continue
            except ValueError:
                if x == y:
                    continue
            return {"path": f"row {r}, column {c}", "recorded": x, "regenerated": y}
    return None


def _compare_output(recorded: Path, regenerated: Path, rtol: float):
    if recorded.suffix == ".json":
        return _numeric_diff(load_json(recorded), load_json(regenerated), rtol, "")
    return _csv_diff(recorded.read_text(), regenerated.read_text(), rtol)


def _replay_command(args) -> int:
    manifest = load_json(args.manifest)
    if not isinstance(manifest, dict) or "config" not in manifest:
        raise ConfigError("", "not a run manifest: missing config echo")
    version = manifest.get("version")
    if version != __version__:
        raise ReplayIncompatibilityError(
            f"manifest written by version {version}, this artifact is {__version__}"
        )
    recorded_dir = args.manifest.parent
    tolerance = float(manifest.get("replay_tolerance", 0.0))

    def compare_into(workdir: Path) -> dict:
        _, _new_manifest = _execute_config(
            dict(manifest["config"]), workdir, int(manifest.get("threads", 1))
        )
        files = []
        first_divergence = None
        for name, digest in manifest.get("outputs", {}).items():
            new_path = workdir / name
            entry = {"file": name}
            if not new_path.exists():
                entry["match"] = "missing"
                entry["problem"] = "output was not regenerated"
            elif file_digest(new_path) == digest:
                entry["match"] = "bitwise"
            else:
                recorded_path = recorded_dir / name
                if not recorded_path.exists():
                    entry["match"] = "divergent"
                    entry["problem"] = "digest differs and recorded file is unavailable"
                else:
                    div = _compare_output(recorded_path, new_path, tolerance)
                    if div is None and tolerance > 0:
                        entry["match"] = "within-tolerance"
                    elif div is None:
                        entry["match"] = "divergent"
                        entry["problem"] = "byte-level difference with equal parsed values"
                    else:
                        entry["match"] = "divergent"
                        entry.update(div)
            if entry["match"] in ("missing", "divergent") and first_divergence is None:
                first_divergence = entry
            files.append(entry)
        return {
            "match": first_divergence is None,
            "files": files,
            "first_divergence": first_divergence,
        }

    if args.output_dir is not None:
        result = compare_into(args.output_dir)
    else:
        with TemporaryDirectory() as td:
            result = compare_into(Path(td))
    print(dumps_json(result))
    return 0 if result["match"] else 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            return _replay_command(args)
        return _run_command(args)
    except MechidError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
