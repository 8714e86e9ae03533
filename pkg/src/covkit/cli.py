"""Command-line front end.

Subcommands: eval (pairwise kernel values on a point file), validate
(randomized definiteness checks), sample (Gaussian realizations), estimate
(empirical pseudo cross-variograms from sampled CSV).

Every output file is written atomically and accompanied by a
"<out>.manifest.json" sidecar recording the command, config hash, seed and
tool version. Timestamps live only in the manifest, so numeric outputs are
byte-identical across reruns with the same seed. Exit codes are a stable
contract: 0 pass, 1 validity failure, 2 input error, 3 evaluation error,
4 inconclusive.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import tempfile
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .config import config_hash, load_model_file
from .errors import (
    ConfigError,
    CovkitError,
    DomainError,
    EvaluationError,
    NotPositiveSemidefiniteError,
    SpecError,
)
from .kernels import PointSet, evaluate_pairs
from .simulation import Realization, empirical_pcv, sample_gaussian
from .validation import (
    ValidationConfig,
    check_cnd,
    check_pd,
    check_pseudo_variogram,
    schoenberg_roundtrip,
)

__all__ = ["main"]

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_EVAL = 3
EXIT_INCONCLUSIVE = 4


def _g17(x: float) -> str:
    return "%.17g" % float(x)


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".covkit-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(out_path: str, command: str, cfg_hash: str | None,
                    seed: int | None, argv) -> None:
    manifest = {
        "command": command,
        "config_hash": cfg_hash,
        "seed": seed,
        "tool_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "argv": list(argv),
    }
    _write_atomic(out_path + ".manifest.json",
                  json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _read_csv_rows(path: str):
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ConfigError(f"{path}: empty CSV")
    return [c.strip() for c in rows[0]], rows[1:]


def _read_points_csv(path: str, dim_space: int, dim_time: int) -> np.ndarray:
    """Points with header x1..xd[,t1..tk], validated against the model shape."""
    header, body = _read_csv_rows(path)
    want = [f"x{i}" for i in range(1, dim_space + 1)]
    want += [f"t{i}" for i in range(1, dim_time + 1)]
    if header != want:
        raise ConfigError(
            f"{path}: header must be {','.join(want)} for this model, "
            f"got {','.join(header)}"
        )
    try:
        pts = np.array([[float(c) for c in row] for row in body], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric coordinate ({exc})") from exc
    if pts.ndim != 2 or pts.shape[1] != len(want):
        raise ConfigError(f"{path}: every row needs {len(want)} coordinates")
    return pts


def _read_lags_csv(path: str, dim: int) -> np.ndarray:
    header, body = _read_csv_rows(path)
    want = [f"h{i}" for i in range(1, dim + 1)]
    if header != want:
        raise ConfigError(
            f"{path}: header must be {','.join(want)}, got {','.join(header)}"
        )
    try:
        return np.array([[float(c) for c in row] for row in body], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric lag ({exc})") from exc


# ---------------------------------------------------------------------------
# subcommands


def _cmd_eval(args, argv) -> int:
    spec, doc = load_model_file(args.model)
    pts = _read_points_csv(args.points, spec.dim_space, spec.dim_time)
    n = pts.shape[0]
    m = spec.m
    X = np.repeat(pts, n, axis=0)
    Y = np.tile(pts, (n, 1))
    try:
        vals = evaluate_pairs(spec, X, Y)
    except EvaluationError:
        # locate the first failing pair for actionable context
        for r in range(n * n):
            try:
                evaluate_pairs(spec, X[r:r + 1], Y[r:r + 1])
            except EvaluationError as exc:
                i, j = divmod(r, n)
                print(f"evaluation failed at point pair (i={i + 1}, j={j + 1}): {exc}",
                      file=sys.stderr)
                return EXIT_EVAL
        raise  # batch failed but every single pair passed: surface the original
    header = ["i", "j"] + [f"c{p}{q}" for p in range(1, m + 1)
                           for q in range(1, m + 1)]
    lines = [",".join(header)]
    for r in range(n * n):
        i, j = divmod(r, n)
        cells = [str(i + 1), str(j + 1)]
        cells += [_g17(v) for v in vals[r].reshape(-1)]
        lines.append(",".join(cells))
    _write_atomic(args.out, "\n".join(lines) + "\n")
    _write_manifest(args.out, "eval", config_hash(doc), None, argv)
    return EXIT_PASS


def _report_to_json(report) -> dict:
    def clean(x):
        return None if not math.isfinite(x) else x

    witness = None
    if report.witness is not None:
        witness = {
            "points": report.witness.points.tolist(),
            "coefficients": report.witness.coefficients.tolist(),
            "quadratic_form": report.witness.quadratic_form,
        }
    return {
        "verdict": report.verdict,
        "mode": report.mode,
        "worst_value": clean(report.worst_value),
        "scale": clean(report.scale),
        "worst_ratio": clean(report.worst_ratio),
        "n_configs": report.n_configs,
        "witness": witness,
        "notes": list(report.notes),
    }


def _cmd_validate(args, argv) -> int:
    spec, doc = load_model_file(args.model)
    cfg = ValidationConfig(
        n_configs=args.configs, n_points_max=args.points_max,
        tol_rel=args.tol, rng_seed=args.seed,
        domain_box=(args.box[0], args.box[1]),
    )
    if args.mode == "pd":
        report = check_pd(spec, cfg)
    elif args.mode == "cnd":
        report = check_cnd(spec, cfg)
    elif args.mode == "pcv":
        report = check_pseudo_variogram(spec, cfg)
    else:
        t_grid = tuple(float(t) for t in args.t_grid.split(","))
        report = schoenberg_roundtrip(spec, t_grid, cfg)
    out = _report_to_json(report)
    out["model_hash"] = config_hash(doc)
    _write_atomic(args.out, json.dumps(out, indent=2, sort_keys=True) + "\n")
    _write_manifest(args.out, "validate", config_hash(doc), args.seed, argv)
    print(f"{args.mode}: {report.verdict} (worst ratio "
          f"{report.worst_ratio:.3e})", file=sys.stderr)
    if report.verdict == "pass":
        return EXIT_PASS
    if report.verdict == "fail":
        return EXIT_FAIL
    return EXIT_INCONCLUSIVE


def _cmd_sample(args, argv) -> int:
    spec, doc = load_model_file(args.model)
    pts_arr = _read_points_csv(args.points, spec.dim_space, spec.dim_time)
    header = "realization,location,variable,value"
    if args.reals == 0:
        _write_atomic(args.out, header + "\n")
        _write_manifest(args.out, "sample", config_hash(doc), args.seed, argv)
        return EXIT_PASS
    pts = PointSet(pts_arr, spec.dim_space, spec.dim_time)
    reals = sample_gaussian(spec, pts, args.reals, args.seed, force=args.force)
    lines = [header]
    for r_idx, real in enumerate(reals, start=1):
        V = real.values
        for loc in range(V.shape[0]):
            for var in range(V.shape[1]):
                lines.append(f"{r_idx},{loc + 1},{var + 1},{_g17(V[loc, var])}")
    _write_atomic(args.out, "\n".join(lines) + "\n")
    _write_manifest(args.out, "sample", config_hash(doc), args.seed, argv)
    return EXIT_PASS


def _load_sample_csv(path: str):
    header, body = _read_csv_rows(path)
    if header != ["realization", "location", "variable", "value"]:
        raise ConfigError(
            f"{path}: header must be realization,location,variable,value"
        )
    if not body:
        raise ConfigError(f"{path}: no samples to estimate from")
    try:
        rows = [(int(r[0]), int(r[1]), int(r[2]), float(r[3])) for r in body]
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed sample row ({exc})") from exc
    n_real = max(r[0] for r in rows)
    n_loc = max(r[1] for r in rows)
    m = max(r[2] for r in rows)
    if min(r[0] for r in rows) < 1 or min(r[1] for r in rows) < 1 \
            or min(r[2] for r in rows) < 1:
        raise ConfigError(f"{path}: indices are 1-based and must be >= 1")
    values = np.full((n_real, n_loc, m), np.nan)
    for r, loc, var, v in rows:
        values[r - 1, loc - 1, var - 1] = v
    if np.any(np.isnan(values)):
        raise ConfigError(
            f"{path}: incomplete sample (every realization needs all "
            f"location/variable entries)"
        )
    return values


def _cmd_estimate(args, argv) -> int:
    values = _load_sample_csv(args.input)
    n_real, n_loc, m = values.shape
    if args.points is not None:
        header, body = _read_csv_rows(args.points)
        try:
            coords = np.array([[float(c) for c in row] for row in body])
        except ValueError as exc:
            raise ConfigError(f"{args.points}: non-numeric coordinate ({exc})") from exc
        if coords.shape[0] != n_loc:
            raise ConfigError(
                f"{args.points}: {coords.shape[0]} rows but the sample has "
                f"{n_loc} locations"
            )
    else:
        if args.grid_spacing is None:
            raise ConfigError("estimate needs --grid-spacing or --points")
        if not args.grid_spacing > 0:
            raise ConfigError("--grid-spacing must be > 0")
        # location index i (1-based) sits at coordinate (i-1) * spacing
        coords = (np.arange(n_loc, dtype=float) * args.grid_spacing)[:, None]
    lags = _read_lags_csv(args.lags, coords.shape[1])
    pts = PointSet(coords, coords.shape[1], 0)
    reals = [
        Realization(pts=pts, values=values[r], seed=0, jitter_applied=0.0)
        for r in range(n_real)
    ]
    est = empirical_pcv(reals, lags, tolerance_radius=args.tol)
    header_cells = [f"h{i}" for i in range(1, coords.shape[1] + 1)] + ["count"]
    header_cells += [f"g{p}{q}" for p in range(1, m + 1) for q in range(1, m + 1)]
    lines = [",".join(header_cells)]
    for b in range(lags.shape[0]):
        cells = [_g17(v) for v in est.lags[b]]
        cells.append(str(int(est.counts[b])))
        cells += [_g17(v) for v in est.estimates[b].reshape(-1)]
        lines.append(",".join(cells))
    _write_atomic(args.out, "\n".join(lines) + "\n")
    with open(args.input, "rb") as fh:
        input_hash = hashlib.sha256(fh.read()).hexdigest()
    _write_manifest(args.out, "estimate", input_hash, None, argv)
    return EXIT_PASS


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covkit",
        description="Matrix-valued covariance models from pseudo cross-variograms: "
                    "evaluation, validation, sampling, estimation.",
    )
    parser.add_argument("--version", action="version", version=f"covkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="evaluate C(x_i, x_j) on all point pairs")
    p_eval.add_argument("--model", required=True, help="model config JSON")
    p_eval.add_argument("--points", required=True,
                        help="points CSV with header x1..xd[,t1..tk]")
    p_eval.add_argument("--out", required=True, help="output CSV")
    p_eval.set_defaults(fn=_cmd_eval)

    p_val = sub.add_parser("validate", help="randomized definiteness checks")
    p_val.add_argument("--model", required=True)
    p_val.add_argument("--mode", required=True,
                       choices=("pd", "cnd", "pcv", "roundtrip"))
    p_val.add_argument("--configs", type=int, default=60)
    p_val.add_argument("--points-max", type=int, default=8)
    p_val.add_argument("--tol", type=float, default=1e-8)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.add_argument("--box", type=float, nargs=2, default=(-1.0, 1.0),
                       metavar=("LO", "HI"))
    p_val.add_argument("--t-grid", default="0.5,1,2",
                       help="comma-separated t values for roundtrip mode")
    p_val.add_argument("--out", required=True, help="report JSON")
    p_val.set_defaults(fn=_cmd_validate)

    p_sample = sub.add_parser("sample", help="draw Gaussian realizations")
    p_sample.add_argument("--model", required=True)
    p_sample.add_argument("--points", required=True)
    p_sample.add_argument("--reals", type=int, required=True)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--force", action="store_true",
                          help="skip the claim and spectral pre-checks")
    p_sample.add_argument("--out", required=True, help="output CSV")
    p_sample.set_defaults(fn=_cmd_sample)

    p_est = sub.add_parser("estimate",
                           help="empirical pseudo cross-variogram from samples")
    p_est.add_argument("--input", required=True, help="CSV from the sample command")
    p_est.add_argument("--grid-spacing", type=float, default=None,
                       help="spacing of the 1-D grid the samples live on")
    p_est.add_argument("--points", default=None,
                       help="coordinates CSV for non-1-D grids (row per location)")
    p_est.add_argument("--lags", required=True, help="lags CSV with header h1..hD")
    p_est.add_argument("--tol", type=float, default=1e-9,
                       help="lag matching tolerance radius")
    p_est.add_argument("--out", required=True, help="output CSV")
    p_est.set_defaults(fn=_cmd_estimate)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args, argv)
    except (ConfigError, SpecError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NotPositiveSemidefiniteError as exc:
        print(f"validity failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (EvaluationError, DomainError) as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except CovkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
