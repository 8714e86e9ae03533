"""Numerical certification of definiteness claims.

A claim carried by a spec is a statement about every finite configuration of
points; these checks probe it on randomized finite configurations and report
pass/fail/inconclusive verdicts with reproducible witnesses. A pass certifies
only the tested scope, never validity on the whole domain.

Positive definiteness is tested through the spectrum of the assembled block
Gram matrix. Conditional negative definiteness restricts the quadratic form
to coefficient vectors whose entries sum to zero across all points and
components; that constraint set is the orthogonal complement of the all-ones
vector, so the test projects the Gram matrix with P = I - e e^T / (nm) and
bounds the maximum eigenvalue of P G P.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import CovkitError, EvaluationError, SpecError
from .kernels import (
    KernelSpec,
    PointSet,
    assemble_gram,
    claims_cnd,
    claims_pd,
    evaluate_pairs,
)
from .stationary import _schoenberg_exp_unchecked

__all__ = [
    "ValidationConfig",
    "Witness",
    "ValidationReport",
    "check_pd",
    "check_cnd",
    "check_pseudo_variogram",
    "schoenberg_roundtrip",
    "schoenberg_equivalence",
    "adversarial_search",
    "recheck_witness",
    "resolve_threads",
]

_TINY = 1e-300


@dataclass(frozen=True)
class ValidationConfig:
    """Randomized-check configuration.

    domain_box is either a (lo, hi) pair applied to every coordinate or a
    sequence of per-coordinate (lo, hi) pairs. Identical configs and seeds
    give bit-identical verdicts regardless of thread count.
    """

    n_configs: int = 60
    n_points_max: int = 8
    tol_rel: float = 1e-8
    rng_seed: int = 0
    domain_box: tuple = (-1.0, 1.0)

    def __post_init__(self):
        if not self.tol_rel > 0:
            raise SpecError("ValidationConfig: tol_rel must be > 0")
        if self.n_points_max < 2:
            raise SpecError("ValidationConfig: n_points_max must be >= 2")
        if self.n_configs < 1:
            raise SpecError("ValidationConfig: n_configs must be >= 1")


@dataclass(frozen=True)
class Witness:
    """A concrete violating (or extremal) configuration.

    quadratic_form is a' G a for the stored coefficients, which equals the
    reported extreme eigenvalue; re-evaluating it from the points alone
    reproduces the violation magnitude.
    """

    points: np.ndarray
    coefficients: np.ndarray
    quadratic_form: float


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a randomized definiteness check.

    worst_value is the extreme eigenvalue of the worst configuration (minimum
    eigenvalue in PD mode, maximum projected eigenvalue in CND mode), scale
    its spectral reference max |eigenvalue|, and worst_ratio their quotient.
    """

    verdict: str
    mode: str
    worst_value: float
    scale: float
    worst_ratio: float
    n_configs: int
    witness: Witness | None = None
    notes: tuple = ()

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def resolve_threads(n_jobs: int) -> int:
    """Worker count policy for embarrassingly parallel validation jobs.

    COVKIT_THREADS unset, empty or '0' picks automatically: serial for fewer
    than 64 jobs (thread startup dominates), else min(8, cpu_count()). Any
    positive integer forces that worker count.
    """
    raw = os.environ.get("COVKIT_THREADS", "").strip()
    if raw and raw != "0":
        try:
            k = int(raw)
        except ValueError:
            raise SpecError(f"COVKIT_THREADS must be an integer, got {raw!r}") from None
        if k < 1:
            raise SpecError(f"COVKIT_THREADS must be >= 1 or 0 for auto, got {k}")
        return k
    if n_jobs < 64:
        return 1
    return min(8, os.cpu_count() or 1)


def _box_bounds(cfg: ValidationConfig, dim: int):
    box = np.asarray(cfg.domain_box, dtype=float)
    if box.shape == (2,):
        lo = np.full(dim, box[0])
        hi = np.full(dim, box[1])
    elif box.shape == (dim, 2):
        lo, hi = box[:, 0].copy(), box[:, 1].copy()
    else:
        raise SpecError(
            f"domain_box must be (lo, hi) or one pair per coordinate ({dim}); "
            f"got shape {box.shape}"
        )
    if np.any(hi <= lo):
        raise SpecError("domain_box must satisfy lo < hi in every coordinate")
    return lo, hi


def _draw_config(rng: np.random.Generator, cfg: ValidationConfig, dim: int,
                 inject_coincident: bool) -> np.ndarray:
    """One stratified random point set; optionally duplicates a point."""
    n = int(rng.integers(2, cfg.n_points_max + 1))
    lo, hi = _box_bounds(cfg, dim)
    # Latin-hypercube-style stratification: one point per stratum and axis
    u = np.empty((n, dim))
    for c in range(dim):
        u[:, c] = (rng.permutation(n) + rng.uniform(size=n)) / n
    pts = lo + u * (hi - lo)
    if inject_coincident and n >= 2:
        pts[n - 1] = pts[0]
    return pts


def _pd_stat(spec: KernelSpec, pts: np.ndarray):
    """(extreme value, scale, coefficients) for the PD test."""
    ps = PointSet(pts, spec.dim_space, spec.dim_time)
    G = assemble_gram(spec, ps).dense.entries
    vals, vecs = np.linalg.eigh(G)
    scale = float(np.abs(vals).max())
    return float(vals[0]), scale, vecs[:, 0]


def _cnd_stat(spec: KernelSpec, pts: np.ndarray):
    """(extreme value, scale, coefficients) for the projected CND test."""
    ps = PointSet(pts, spec.dim_space, spec.dim_time)
    G = assemble_gram(spec, ps).dense.entries
    nm = G.shape[0]
    e = np.ones(nm) / np.sqrt(nm)
    P = np.eye(nm) - np.outer(e, e)
    M = P @ G @ P
    M = (M + M.T) / 2.0
    vals, vecs = np.linalg.eigh(M)
    scale = float(np.abs(vals).max())
    a = vecs[:, -1]
    a = a - e * (e @ a)  # enforce the zero-sum constraint exactly
    norm = np.linalg.norm(a)
    if norm > 0:
        a = a / norm
    return float(vals[-1]), scale, a


def _ratio(value: float, scale: float) -> float:
    return value / max(scale, _TINY)


def _run_randomized(spec: KernelSpec, cfg: ValidationConfig, mode: str):
    """Shared engine for check_pd / check_cnd."""
    stat = _pd_stat if mode == "pd" else _cnd_stat
    children = np.random.SeedSequence(cfg.rng_seed).spawn(cfg.n_configs)
    results: list = [None] * cfg.n_configs

    def job(idx: int):
        rng = np.random.default_rng(children[idx])
        pts = _draw_config(rng, cfg, spec.dim, inject_coincident=(idx % 10 == 0))
        try:
            value, scale, coeff = stat(spec, pts)
        except (CovkitError, FloatingPointError) as exc:
            return ("error", idx, f"config {idx}: {exc}")
        return ("ok", idx, value, scale, coeff, pts)

    workers = resolve_threads(cfg.n_configs)
    if workers == 1:
        for i in range(cfg.n_configs):
            results[i] = job(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(job, range(cfg.n_configs)):
                results[res[1]] = res

    notes = []
    worst = None  # (ratio, idx, value, scale, coeff, pts)
    for res in results:
        if res[0] == "error":
            notes.append(res[2])
            continue
        _, idx, value, scale, coeff, pts = res
        r = _ratio(value, scale)
        key = -r if mode == "pd" else r  # larger key = worse
        if worst is None or key > worst[0]:
            worst = (key, idx, value, scale, coeff, pts)
    return worst, notes


def _finish_report(spec, cfg, mode, worst, error_notes, extra_failures=(),
                   info_notes=()):
    notes = list(error_notes)
    if worst is None:
        notes.extend(info_notes)
        return ValidationReport(
            verdict="inconclusive", mode=mode, worst_value=float("nan"),
            scale=float("nan"), worst_ratio=float("nan"),
            n_configs=cfg.n_configs, notes=tuple(notes),
        )
    key, idx, value, scale, coeff, pts = worst
    violated = key > cfg.tol_rel
    verdict = "fail" if (violated or extra_failures) else (
        "inconclusive" if notes else "pass"
    )
    witness = None
    if violated:
        witness = Witness(points=pts, coefficients=coeff,
                          quadratic_form=float(coeff @ _dense(spec, pts) @ coeff))
        where = "refined configuration" if idx < 0 else f"config {idx}"
        notes.append(f"violation in {where}")
    for reason in extra_failures:
        notes.append(reason)
    notes.extend(info_notes)
    notes.append(
        f"certified only on {cfg.n_configs} random configurations with up to "
        f"{cfg.n_points_max} points"
    )
    return ValidationReport(
        verdict=verdict, mode=mode, worst_value=value, scale=scale,
        worst_ratio=_ratio(value, scale), n_configs=cfg.n_configs,
        witness=witness, notes=tuple(notes),
    )


def _dense(spec: KernelSpec, pts: np.ndarray) -> np.ndarray:
    ps = PointSet(pts, spec.dim_space, spec.dim_time)
    return assemble_gram(spec, ps).dense.entries


def check_pd(spec: KernelSpec, cfg: ValidationConfig = ValidationConfig()) -> ValidationReport:
    """Randomized positive-definiteness check on block Gram matrices.

    Each configuration passes when the minimum eigenvalue of its Gram matrix
    is at least -tol_rel times the spectral scale. Evaluation errors make the
    verdict inconclusive with context instead of failing silently.
    """
    worst, notes = _run_randomized(spec, cfg, "pd")
    return _finish_report(spec, cfg, "pd", worst, notes)


def check_cnd(spec: KernelSpec, cfg: ValidationConfig = ValidationConfig()) -> ValidationReport:
    """Randomized conditional-negative-definiteness check.

    Requires the quadratic form to be nonpositive (up to tol_rel * scale) on
    the zero-sum coefficient subspace, tested via the rank-one projector
    P = I - e e^T/(nm).
    """
    worst, notes = _run_randomized(spec, cfg, "cnd")
    return _finish_report(spec, cfg, "cnd", worst, notes)


def check_pseudo_variogram(spec: KernelSpec,
                           cfg: ValidationConfig = ValidationConfig()) -> ValidationReport:
    """CND check plus the structural pseudo-variogram requirements.

    On top of check_cnd: every diagonal entry must vanish at coincident
    arguments (|gamma_ii(x, x)| <= 1e-12 on 100 random locations) and the
    exchange symmetry gamma_ij(x, y) = gamma_ji(y, x) must hold to 1e-12
    relative to the magnitude of the sampled values. Negative entries are
    legal for CND kernels but unusual for pseudo-variograms, so they are
    reported as a note.
    """
    worst, notes = _run_randomized(spec, cfg, "cnd")
    extra = []
    info = []
    rng = np.random.default_rng(np.random.SeedSequence(cfg.rng_seed).spawn(
        cfg.n_configs + 1)[-1])
    lo, hi = _box_bounds(cfg, spec.dim)
    X = lo + rng.uniform(size=(100, spec.dim)) * (hi - lo)
    Y = lo + rng.uniform(size=(100, spec.dim)) * (hi - lo)
    try:
        diag_vals = evaluate_pairs(spec, X, X)
        worst_diag = float(np.abs(np.einsum("rii->ri", diag_vals)).max())
        if worst_diag > 1e-12:
            extra.append(
                f"diagonal does not vanish at coincident arguments "
                f"(max |gamma_ii(x,x)| = {worst_diag:.3e})"
            )
        G1 = evaluate_pairs(spec, X, Y)
        G2 = evaluate_pairs(spec, Y, X)
        asym = float(np.abs(G1 - G2.transpose(0, 2, 1)).max())
        sym_scale = max(1.0, float(np.abs(G1).max()))
        if asym > 1e-12 * sym_scale:
            extra.append(
                f"exchange symmetry gamma_ij(x,y) = gamma_ji(y,x) violated "
                f"(max deviation {asym:.3e})"
            )
        min_entry = float(G1.min())
        if min_entry < 0.0:
            info.append(
                f"kernel attains negative values (min entry {min_entry:.3e})"
            )
    except (CovkitError, FloatingPointError) as exc:
        notes = list(notes) + [f"structural checks: {exc}"]
    return _finish_report(spec, cfg, "pcv", worst, notes, extra_failures=extra,
                          info_notes=info)


def schoenberg_roundtrip(gamma: KernelSpec, t_grid,
                         cfg: ValidationConfig = ValidationConfig()) -> ValidationReport:
    """Independent CND certificate via exponential transforms.

    gamma is CND exactly when exp(-t gamma) is PD entrywise for every t > 0;
    this runs check_pd on exp(-t gamma) for each t in t_grid (with the same
    configurations) and merges the verdicts. The transform is applied without
    consulting the claim on gamma, so corrupted inputs can be probed.
    """
    t_grid = tuple(float(t) for t in t_grid)
    if not t_grid or any(t <= 0 for t in t_grid):
        raise SpecError("schoenberg_roundtrip: t_grid must be nonempty and positive")
    reports = []
    for t in t_grid:
        rep = check_pd(_schoenberg_exp_unchecked(gamma, t), cfg)
        reports.append((t, rep))
    failing = [(t, r) for t, r in reports if r.verdict == "fail"]
    inconclusive = [(t, r) for t, r in reports if r.verdict == "inconclusive"]
    notes = []
    for t, r in reports:
        notes.append(f"t={t:g}: {r.verdict} (worst ratio {r.worst_ratio:.3e})")
    if failing:
        t, r = failing[0]
        notes.append(f"first failure at t={t:g}")
        return ValidationReport(
            verdict="fail", mode="schoenberg", worst_value=r.worst_value,
            scale=r.scale, worst_ratio=r.worst_ratio, n_configs=cfg.n_configs,
            witness=r.witness, notes=tuple(notes),
        )
    # worst surviving ratio: smallest min-eigenvalue ratio across the grid
    t, r = min(reports, key=lambda tr: tr[1].worst_ratio)
    verdict = "inconclusive" if inconclusive else "pass"
    return ValidationReport(
        verdict=verdict, mode="schoenberg", worst_value=r.worst_value,
        scale=r.scale, worst_ratio=r.worst_ratio, n_configs=cfg.n_configs,
        witness=None, notes=tuple(notes),
    )


def schoenberg_equivalence(gamma: KernelSpec, t_grid=(0.5, 1.0, 2.0),
                           cfg: ValidationConfig = ValidationConfig()):
    """Dual-route CND verdict: direct projected check vs exponential transforms.

    Returns (verdict, direct_report, roundtrip_report). The two certificates
    must agree: pass when both pass, fail when both fail, and inconclusive on
    any disagreement (a numerical inconsistency is never silently absorbed).
    """
    direct = check_cnd(gamma, cfg)
    rt = schoenberg_roundtrip(gamma, t_grid, cfg)
    if direct.verdict == rt.verdict == "pass":
        return "pass", direct, rt
    if direct.verdict == rt.verdict == "fail":
        return "fail", direct, rt
    return "inconclusive", direct, rt


def recheck_witness(spec: KernelSpec, witness: Witness) -> float:
    """Re-evaluate a witness quadratic form from its stored points alone."""
    G = _dense(spec, np.asarray(witness.points, dtype=float))
    a = np.asarray(witness.coefficients, dtype=float)
    return float(a @ G @ a)


def adversarial_search(spec: KernelSpec, cfg: ValidationConfig = ValidationConfig(),
                       n_restarts: int = 3, mode: str | None = None) -> ValidationReport:
    """Randomized check refined by coordinate-descent on the worst configuration.

    Perturbs one point coordinate at a time (step halving from a quarter of
    the box width) to push the extreme eigenvalue further in the violating
    direction; additional restarts descend from fresh random configurations.
    The result is never worse than the plain randomized search on the same
    seed. mode 'pd' or 'cnd' overrides the claim-derived default.
    """
    if mode is None:
        if claims_pd(spec):
            mode = "pd"
        elif claims_cnd(spec):
            mode = "cnd"
        else:
            raise SpecError(
                "adversarial_search: spec carries no claim; pass mode='pd' or 'cnd'"
            )
    if mode not in ("pd", "cnd"):
        raise SpecError(f"adversarial_search: unknown mode {mode!r}")
    stat = _pd_stat if mode == "pd" else _cnd_stat

    def objective(pts):
        value, scale, coeff = stat(spec, pts)
        r = _ratio(value, scale)
        key = -r if mode == "pd" else r
        return key, value, scale, coeff

    worst, notes = _run_randomized(spec, cfg, mode)
    lo, hi = _box_bounds(cfg, spec.dim)
    width = float((hi - lo).max())

    starts = []
    if worst is not None:
        starts.append(np.asarray(worst[5], dtype=float))
    extra = np.random.SeedSequence(cfg.rng_seed).spawn(cfg.n_configs + 1 + n_restarts)
    for r_i in range(n_restarts):
        rng = np.random.default_rng(extra[cfg.n_configs + 1 + r_i])
        starts.append(_draw_config(rng, cfg, spec.dim, inject_coincident=False))

    best_key = worst[0] if worst is not None else -np.inf
    best_state = None
    if worst is not None:
        best_state = (worst[0], worst[2], worst[3], worst[4], worst[5])

    for pts0 in starts:
        pts = pts0.copy()
        try:
            key, value, scale, coeff = objective(pts)
        except (CovkitError, FloatingPointError) as exc:
            notes.append(f"descent start skipped: {exc}")
            continue
        step = width / 4.0
        while step > 1e-4 * width:
            improved = False
            for p in range(pts.shape[0]):
                for c in range(pts.shape[1]):
                    for sgn in (1.0, -1.0):
                        trial = pts.copy()
                        trial[p, c] = np.clip(trial[p, c] + sgn * step, lo[c], hi[c])
                        try:
                            t_key, t_value, t_scale, t_coeff = objective(trial)
                        except (CovkitError, FloatingPointError):
                            continue
                        if t_key > key:
                            pts, key = trial, t_key
                            value, scale, coeff = t_value, t_scale, t_coeff
                            improved = True
            if not improved:
                step /= 2.0
        if key > best_key:
            best_key = key
            best_state = (key, value, scale, coeff, pts)

    if best_state is None:
        return ValidationReport(
            verdict="inconclusive", mode=mode, worst_value=float("nan"),
            scale=float("nan"), worst_ratio=float("nan"),
            n_configs=cfg.n_configs, notes=tuple(notes),
        )
    key, value, scale, coeff, pts = best_state
    packed = (key, -1, value, scale, coeff, pts)
    # informational, not an evaluation problem: must not demote a pass
    info = (f"coordinate descent over {len(starts)} start(s)",)
    return _finish_report(spec, cfg, mode, packed, notes, info_notes=info)
