"""Gaussian sampling and empirical pseudo cross-variogram estimation.

Fields are sampled zero-mean with covariance equal to the assembled block
Gram matrix (dense Cholesky with a reported jitter), and the estimator

    gamma_hat_ij(h) = (1 / (2 N_pairs n_real)) sum (Z_i(x + h) - Z_j(x))^2

closes the loop against the stationary theoretical value
(C_ii(0) + C_jj(0)) / 2 - C_ij(h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveSemidefiniteError, SpecError
from .kernels import KernelSpec, PointSet, assemble_gram, claims_pd, evaluate_pairs
from .linalg import cholesky_jittered

__all__ = [
    "Realization",
    "EmpiricalPcv",
    "sample_gaussian",
    "empirical_pcv",
    "batch_standard_error",
    "pcv_theory",
]


@dataclass(frozen=True)
class Realization:
    """One zero-mean Gaussian draw on a point set.

    values[i, p] is variable p at location i; jitter_applied is the diagonal
    regularization added before factorization (0 when none was needed).
    """

    pts: PointSet
    values: np.ndarray
    seed: int
    jitter_applied: float


@dataclass(frozen=True)
class EmpiricalPcv:
    """Per-lag squared-increment estimates.

    estimates[b, i, j] approximates gamma_ij at lags[b]; bins with zero
    matching pairs are reported with count 0 and NaN estimates rather than
    dropped.
    """

    lags: np.ndarray
    estimates: np.ndarray
    counts: np.ndarray
    tolerance_radius: float
    n_real: int


def sample_gaussian(spec: KernelSpec, pts: PointSet, n_real: int, seed: int,
                    force: bool = False, tol_rel: float = 1e-8):
    """Draw n_real independent zero-mean Gaussian realizations on pts.

    The covariance of the stacked vector (location-major, variable-minor) is
    the assembled Gram matrix. Unless force is set, the spec must carry a
    positive definite claim and the Gram matrix must pass a spectral check on
    these points; factorization uses an escalating jitter whose final value
    is recorded on every realization. Identical seeds give bit-identical
    output; each realization uses its own spawned substream.
    """
    if n_real < 1:
        raise SpecError("sample_gaussian: n_real must be >= 1")
    if not force and not claims_pd(spec):
        raise SpecError(
            "sample_gaussian: spec carries no positive definite claim "
            "(pass force=True to sample anyway)"
        )
    gram = assemble_gram(spec, pts)
    G = gram.dense.entries
    if not force:
        vals = np.linalg.eigvalsh(G)
        scale = max(float(np.abs(vals).max()), 1e-300)
        if vals[0] < -tol_rel * scale:
            raise NotPositiveSemidefiniteError(
                f"Gram matrix fails the spectral check on these points "
                f"(min eigenvalue {vals[0]:.6e}, scale {scale:.6e})",
                min_eigenvalue=float(vals[0]),
            )
    L, jitter = cholesky_jittered(G)
    n, m = gram.n, gram.m
    out = []
    for child in np.random.SeedSequence(seed).spawn(n_real):
        rng = np.random.default_rng(child)
        z = rng.standard_normal(n * m)
        out.append(Realization(
            pts=pts, values=(L @ z).reshape(n, m), seed=int(seed),
            jitter_applied=float(jitter),
        ))
    return out


def _match_pairs(points: np.ndarray, lag: np.ndarray, tol: float):
    """Ordered index pairs (a, b) with x_a - x_b = lag within tol (Euclidean)."""
    diff = points[:, None, :] - points[None, :, :] - lag[None, None, :]
    dist = np.sqrt(np.sum(diff**2, axis=2))
    return np.nonzero(dist <= tol)


def empirical_pcv(reals, lags, tolerance_radius: float = 1e-9) -> EmpiricalPcv:
    """Squared-increment estimates of the pseudo cross-variogram on exact lags.

    reals must share one point set (regular grids are the intended use); each
    lag is matched exactly up to the tolerance radius. The fields are sampled
    zero-mean by construction, so no mean correction is applied. Accumulation
    across realizations uses exact compensated summation, making the result
    independent of accumulation order.
    """
    reals = list(reals)
    if not reals:
        raise SpecError("empirical_pcv: need at least one realization")
    pts = reals[0].pts
    for r in reals:
        if r.pts is not pts and not np.array_equal(r.pts.points, pts.points):
            raise SpecError("empirical_pcv: realizations must share one point set")
    lags = np.atleast_2d(np.asarray(lags, dtype=float))
    if lags.shape[1] != pts.points.shape[1]:
        raise SpecError(
            f"empirical_pcv: lags must have {pts.points.shape[1]} coordinates"
        )
    m = reals[0].values.shape[1]
    nb = lags.shape[0]
    estimates = np.full((nb, m, m), np.nan)
    counts = np.zeros(nb, dtype=int)
    for b in range(nb):
        A, B = _match_pairs(pts.points, lags[b], tolerance_radius)
        counts[b] = A.size
        if A.size == 0:
            continue
        per_real = []
        for r in reals:
            V = r.values
            inc = V[A][:, :, None] - V[B][:, None, :]  # [pair, i, j]
            per_real.append(np.sum(inc**2, axis=0))
        total = np.empty((m, m))
        for i in range(m):
            for j in range(m):
                total[i, j] = math.fsum(pr[i, j] for pr in per_real)
        estimates[b] = total / (2.0 * A.size * len(reals))
    return EmpiricalPcv(
        lags=lags, estimates=estimates, counts=counts,
        tolerance_radius=float(tolerance_radius), n_real=len(reals),
    )


def batch_standard_error(reals, lags, tolerance_radius: float = 1e-9,
                         n_batches: int = 10):
    """Estimate and standard error of empirical_pcv by realization batching.

    Splits the realizations into n_batches contiguous groups, estimates each
    group separately, and reports (full estimate, per-bin standard error of
    the mean). Bins with no pairs get NaN standard errors.
    """
    reals = list(reals)
    if len(reals) < n_batches or n_batches < 2:
        raise SpecError(
            "batch_standard_error: need n_batches >= 2 and at least one "
            "realization per batch"
        )
    full = empirical_pcv(reals, lags, tolerance_radius)
    edges = np.linspace(0, len(reals), n_batches + 1).astype(int)
    batch_est = np.stack([
        empirical_pcv(reals[edges[k]:edges[k + 1]], lags, tolerance_radius).estimates
        for k in range(n_batches)
    ])
    se = np.std(batch_est, axis=0, ddof=1) / math.sqrt(n_batches)
    return full, se


def pcv_theory(spec: KernelSpec, lags) -> np.ndarray:
    """Stationary pseudo cross-variogram implied by a covariance model.

    gamma_ij(h) = (C_ii(0) + C_jj(0)) / 2 - C_ij(h), evaluated from the
    kernel at lag pairs (h, 0). Requires a stationary model.
    """
    if not spec.stationary:
        raise SpecError("pcv_theory: spec must be stationary")
    lags = np.atleast_2d(np.asarray(lags, dtype=float))
    if lags.shape[1] != spec.dim:
        raise SpecError(f"pcv_theory: lags must have {spec.dim} coordinates")
    zero = np.zeros((1, spec.dim))
    C0 = evaluate_pairs(spec, zero, zero)[0]
    Ch = evaluate_pairs(spec, lags, np.zeros_like(lags))
    sill = (np.diag(C0)[:, None] + np.diag(C0)[None, :]) / 2.0
    return sill[None, :, :] - Ch
