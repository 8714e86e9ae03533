"""Non-stationary covariance constructions.

Three families: a compactly supported Beta-weighted truncated-power model
driven by a nonnegative CND kernel, a locally anisotropic mixture whose
exponent couples a Mahalanobis quadratic form with a CND kernel, and its
Whittle-Matern specialization with location-dependent smoothness.

Local anisotropy and smoothness enter through small whitelists of field
records so that specs stay serializable.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _sp

from .errors import EvaluationError, SpecError
from .kernels import (
    KernelKind,
    KernelSpec,
    claims_cnd,
    claims_pd,
    evaluate_pairs,
    make_spec,
    register_evaluator,
    require_nonneg,
)
from .linalg import bessel_k_arr, beta_arr

__all__ = [
    "anisotropy_field",
    "field_matrices",
    "smoothness_field",
    "field_smoothness",
    "askey_beta",
    "paciorek_mixture",
    "nonstationary_matern",
    "whittle_matern",
]

_FIELD_KINDS = ("constant", "iso_exp", "ellipse2d")
_NU_KINDS = ("constant", "affine")


# ---------------------------------------------------------------------------
# field whitelists


def anisotropy_field(kind: str, dim_space: int, **kw) -> dict:
    """Build a validated local-anisotropy field record.

    - 'constant': matrix=Sigma (d x d SPD), the same everywhere
    - 'iso_exp': slope b, grad c (length d);
      Sigma(x) = exp(2 (b + c' x)) I_d (log-scale affine, isotropic)
    - 'ellipse2d' (d = 2): axes (a1, a2) > 0, angle0, angle_grad (length 2);
      Sigma(x) = R(theta(x)) diag(a1, a2) R(theta(x))',
      theta(x) = angle0 + angle_grad' x (rotating ellipse)
    """
    if kind == "constant":
        mat = np.asarray(kw.pop("matrix"), dtype=float)
        if kw or mat.shape != (dim_space, dim_space):
            raise SpecError("anisotropy_field: constant needs a d x d 'matrix'")
        mat = (mat + mat.T) / 2.0
        try:
            np.linalg.cholesky(mat)
        except np.linalg.LinAlgError:
            raise SpecError("anisotropy_field: constant matrix must be SPD") from None
        return {"kind": "constant", "matrix": mat.tolist()}
    if kind == "iso_exp":
        b = float(kw.pop("b"))
        c = np.asarray(kw.pop("c"), dtype=float).reshape(-1)
        if kw or c.shape != (dim_space,):
            raise SpecError("anisotropy_field: iso_exp needs scalar b and length-d c")
        return {"kind": "iso_exp", "b": b, "c": c.tolist()}
    if kind == "ellipse2d":
        if dim_space != 2:
            raise SpecError("anisotropy_field: ellipse2d requires dim_space = 2")
        axes = np.asarray(kw.pop("axes"), dtype=float).reshape(-1)
        angle0 = float(kw.pop("angle0"))
        grad = np.asarray(kw.pop("angle_grad"), dtype=float).reshape(-1)
        if kw or axes.shape != (2,) or grad.shape != (2,):
            raise SpecError("anisotropy_field: ellipse2d needs axes (2,), angle0, "
                            "angle_grad (2,)")
        if np.any(axes <= 0.0):
            raise SpecError("anisotropy_field: ellipse2d axes must be > 0")
        return {"kind": "ellipse2d", "axes": axes.tolist(), "angle0": angle0,
                "angle_grad": grad.tolist()}
    raise SpecError(f"anisotropy_field: unknown kind {kind!r}; use {_FIELD_KINDS}")


def field_matrices(record: dict, X: np.ndarray) -> np.ndarray:
    """Evaluate an anisotropy field at rows of X, returning (npts, d, d)."""
    X = np.asarray(X, dtype=float)
    npts, d = X.shape
    kind = record["kind"]
    if kind == "constant":
        mat = np.asarray(record["matrix"], dtype=float)
        return np.broadcast_to(mat, (npts, d, d)).copy()
    if kind == "iso_exp":
        scale = np.exp(2.0 * (record["b"] + X @ np.asarray(record["c"], dtype=float)))
        return scale[:, None, None] * np.eye(d)[None, :, :]
    if kind == "ellipse2d":
        a1, a2 = record["axes"]
        theta = record["angle0"] + X @ np.asarray(record["angle_grad"], dtype=float)
        c, s = np.cos(theta), np.sin(theta)
        out = np.empty((npts, 2, 2))
        out[:, 0, 0] = a1 * c**2 + a2 * s**2
        out[:, 1, 1] = a1 * s**2 + a2 * c**2
        out[:, 0, 1] = out[:, 1, 0] = (a1 - a2) * c * s
        return out
    raise SpecError(f"field_matrices: unknown kind {kind!r}")


def smoothness_field(kind: str, dim_space: int, **kw) -> dict:
    """Build a validated smoothness field record.

    - 'constant': value > 0
    - 'affine': intercept, slope (length d); value(x) = intercept + slope' x,
      checked to be positive wherever evaluated
    """
    if kind == "constant":
        v = float(kw.pop("value"))
        if kw or not v > 0:
            raise SpecError("smoothness_field: constant needs value > 0")
        return {"kind": "constant", "value": v}
    if kind == "affine":
        c0 = float(kw.pop("intercept"))
        c = np.asarray(kw.pop("slope"), dtype=float).reshape(-1)
        if kw or c.shape != (dim_space,):
            raise SpecError("smoothness_field: affine needs intercept and "
                            "length-d slope")
        return {"kind": "affine", "intercept": c0, "slope": c.tolist()}
    raise SpecError(f"smoothness_field: unknown kind {kind!r}; use {_NU_KINDS}")


def field_smoothness(record: dict, X: np.ndarray) -> np.ndarray:
    """Evaluate a smoothness field at rows of X, returning (npts,) > 0."""
    X = np.asarray(X, dtype=float)
    kind = record["kind"]
    if kind == "constant":
        return np.full(X.shape[0], record["value"])
    if kind == "affine":
        vals = record["intercept"] + X @ np.asarray(record["slope"], dtype=float)
        if np.any(vals <= 0.0):
            raise EvaluationError(
                "smoothness field must stay positive on the evaluation domain "
                f"(min value {vals.min():.3e})"
            )
        return vals
    raise SpecError(f"field_smoothness: unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# compactly supported Beta-weighted model


def askey_beta(gamma: KernelSpec, support: float, nu: float) -> KernelSpec:
    """Compactly supported model with CND-modulated truncated-power smoothness

    C_ij(x, y) = s^(nu+1) B(gamma_ij(x,y) + 1, nu + 1)
                 * (1 - ||x-y|| / s)_+^(nu + gamma_ij(x,y) + 1)

    for s > 0 and nu >= (d+1)/2 (B is the Beta function). gamma must carry a
    CND claim and evaluate entrywise nonnegative; the result vanishes exactly
    at distances >= s.
    """
    if not claims_cnd(gamma):
        raise SpecError("askey_beta: gamma must carry a CND or pseudo-variogram claim")
    if gamma.dim_time != 0:
        raise SpecError("askey_beta: gamma must be purely spatial")
    if not support > 0:
        raise SpecError(f"askey_beta: support must be > 0, got {support}")
    lo = (gamma.dim_space + 1) / 2.0
    if not nu >= lo:
        raise SpecError(f"askey_beta: nu must be >= (d+1)/2 = {lo}, got {nu}")
    return make_spec(
        "askey_beta", gamma.m, gamma.dim_space, 0,
        params={"support": float(support), "nu": float(nu)}, children=(gamma,),
        kind=KernelKind.POSITIVE_DEFINITE, stationary=gamma.stationary,
    )


@register_evaluator("askey_beta")
def _eval_askey(spec, X, Y):
    g = evaluate_pairs(spec.children[0], X, Y)
    g = require_nonneg(g, spec.op, "kernel values")
    s = spec.param("support")
    nu = spec.param("nu")
    r = np.linalg.norm(X - Y, axis=1)
    base = np.maximum(1.0 - r / s, 0.0)[:, None, None]
    # exponent >= nu + 1 > 0 everywhere, so 0^power is an exact zero
    return s ** (nu + 1.0) * beta_arr(g + 1.0, nu + 1.0) * base ** (nu + g + 1.0)


# ---------------------------------------------------------------------------
# locally anisotropic mixtures


def _check_fields(op, fields, m, d):
    fields = [dict(f) for f in fields]
    if len(fields) != m:
        raise SpecError(f"{op}: need one anisotropy field per variable ({m})")
    for f in fields:
        if f.get("kind") not in _FIELD_KINDS:
            raise SpecError(f"{op}: unknown anisotropy field kind {f.get('kind')!r}")
        field_matrices(f, np.zeros((1, d)))  # validates the record shape
    return fields


def _local_shape(spec, X, Y, fields):
    """Prefactor and Mahalanobis form for averaged local anisotropies.

    Returns (pref, qf), both (npairs, m, m), with
    pref_ij = |S_i(x)|^(1/4) |S_j(y)|^(1/4) / |(S_i(x)+S_j(y))/2|^(1/2) and
    qf_ij = (x-y)' ((S_i(x)+S_j(y))/2)^(-1) (x-y).
    """
    d = spec.dim_space
    m = spec.m
    npairs = X.shape[0]
    Sx = np.stack([field_matrices(f, X) for f in fields], axis=1)  # (n, m, d, d)
    Sy = np.stack([field_matrices(f, Y) for f in fields], axis=1)
    Sbar = (Sx[:, :, None, :, :] + Sy[:, None, :, :, :]) / 2.0
    try:
        L = np.linalg.cholesky(Sbar)
    except np.linalg.LinAlgError:
        raise EvaluationError(f"{spec.op}: averaged anisotropy not SPD") from None
    diag = np.einsum("...ii->...i", L)
    det_bar = np.prod(diag, axis=-1) ** 2
    det_x = np.linalg.det(Sx)  # (n, m); SPD so positive
    det_y = np.linalg.det(Sy)
    pref = (det_x[:, :, None] * det_y[:, None, :]) ** 0.25 / np.sqrt(det_bar)
    h = X - Y
    hb = np.broadcast_to(h[:, None, None, :, None], (npairs, m, m, d, 1))
    yv = np.linalg.solve(L, hb)
    qf = np.einsum("npqdo,npqdo->npq", yv, yv)
    return pref, qf


def paciorek_mixture(gamma: KernelSpec, fields, nodes, weights) -> KernelSpec:
    """Locally anisotropic exponential mixture

    C_ij(x, y) = pref_ij(x, y) * sum_r w_r exp(-t_r (qf_ij(x, y) + gamma_ij(x, y)))

    where pref and qf average per-variable anisotropy fields Sigma_i (see
    _local_shape) and gamma is a CND kernel. Positive nodes t_r and weights
    w_r make this a finite positive mixture of positive definite kernels.
    """
    if not claims_cnd(gamma):
        raise SpecError("paciorek_mixture: gamma must carry a CND or "
                        "pseudo-variogram claim")
    if gamma.dim_time != 0:
        raise SpecError("paciorek_mixture: gamma must be purely spatial")
    m, d = gamma.m, gamma.dim_space
    fields = _check_fields("paciorek_mixture", fields, m, d)
    t = np.asarray(nodes, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if t.shape != w.shape or t.size == 0:
        raise SpecError("paciorek_mixture: nodes and weights must match and be nonempty")
    if np.any(t <= 0.0) or np.any(w <= 0.0):
        raise SpecError("paciorek_mixture: nodes and weights must be > 0")
    constant = all(f["kind"] == "constant" for f in fields)
    return make_spec(
        "paciorek_mixture", m, d, 0,
        params={"fields": fields, "nodes": t, "weights": w}, children=(gamma,),
        kind=KernelKind.POSITIVE_DEFINITE,
        stationary=gamma.stationary and constant,
    )


@register_evaluator("paciorek_mixture")
def _eval_paciorek(spec, X, Y):
    p = spec.param_dict()
    g = evaluate_pairs(spec.children[0], X, Y)
    pref, qf = _local_shape(spec, X, Y, p["fields"])
    t = np.asarray(p["nodes"], dtype=float)
    w = np.asarray(p["weights"], dtype=float)
    expo = np.exp(-(qf + g)[..., None] * t[None, None, None, :])
    return pref * (expo @ w)


def whittle_matern(nu, r):
    """Whittle-Matern correlation M_nu(r) = (2^(1-nu)/Gamma(nu)) r^nu K_nu(r).

    Normalized so M_nu(0) = 1; nu and r broadcast together.
    """
    nu = np.asarray(nu, dtype=float)
    r = np.asarray(r, dtype=float)
    nu, r = np.broadcast_arrays(nu, r)
    small = r < 1e-12
    rs = np.where(small, 1.0, r)
    val = (
        2.0 ** (1.0 - nu) / _sp.gamma(nu)
        * np.power(rs, nu) * bessel_k_arr(nu, rs)
    )
    return np.where(small, 1.0, val)


def nonstationary_matern(gamma: KernelSpec, fields, nu_fields) -> KernelSpec:
    """Whittle-Matern model with local anisotropy and local smoothness

    C_ij(x, y) = pref_ij(x, y)
                 * Gamma(nubar_ij) / sqrt(Gamma(nu_i(x)) Gamma(nu_j(y)))
                 * M_nubar(sqrt(qf_ij(x, y) + gamma_ij(x, y)))

    with nubar_ij = (nu_i(x) + nu_j(y)) / 2, per-variable smoothness fields
    nu_i > 0, anisotropy fields as in paciorek_mixture, and gamma a CND
    kernel with nonnegative entries that augments the Mahalanobis distance.

    This is the t^{-1}e^{-1/(4t)}dt scale mixture of the local Gaussian
    shapes e^{-t(qf + gamma)} times the separable factor t^{-nubar},
    normalized per variable so the coincident diagonal is 1 whenever the
    diagonal of gamma vanishes; positive definiteness needs the additive
    kernel inside the Bessel argument to be CND (its entrywise Schoenberg
    exponentials must be positive definite), not merely positive definite.
    """
    if not claims_cnd(gamma):
        raise SpecError("nonstationary_matern: gamma must carry a CND or "
                        "pseudo-variogram claim")
    if gamma.dim_time != 0:
        raise SpecError("nonstationary_matern: gamma must be purely spatial")
    m, d = gamma.m, gamma.dim_space
    fields = _check_fields("nonstationary_matern", fields, m, d)
    nu_fields = [dict(f) for f in nu_fields]
    if len(nu_fields) != m:
        raise SpecError(f"nonstationary_matern: need one smoothness field per "
                        f"variable ({m})")
    for f in nu_fields:
        if f.get("kind") not in _NU_KINDS:
            raise SpecError(f"nonstationary_matern: unknown smoothness field "
                            f"kind {f.get('kind')!r}")
        field_smoothness(f, np.zeros((1, d)))
    constant = (all(f["kind"] == "constant" for f in fields)
                and all(f["kind"] == "constant" for f in nu_fields))
    return make_spec(
        "nonstationary_matern", m, d, 0,
        params={"fields": fields, "nu_fields": nu_fields}, children=(gamma,),
        kind=KernelKind.POSITIVE_DEFINITE,
        stationary=gamma.stationary and constant,
    )


@register_evaluator("nonstationary_matern")
def _eval_nonstat_matern(spec, X, Y):
    p = spec.param_dict()
    g = evaluate_pairs(spec.children[0], X, Y)
    g = require_nonneg(g, spec.op, "distance-augmenting kernel values")
    pref, qf = _local_shape(spec, X, Y, p["fields"])
    nux = np.stack([field_smoothness(f, X) for f in p["nu_fields"]], axis=1)
    nuy = np.stack([field_smoothness(f, Y) for f in p["nu_fields"]], axis=1)
    nubar = (nux[:, :, None] + nuy[:, None, :]) / 2.0
    norm = np.exp(_sp.gammaln(nubar)
                  - (_sp.gammaln(nux)[:, :, None] + _sp.gammaln(nuy)[:, None, :]) / 2.0)
    arg = np.sqrt(qf + g)
    return pref * norm * whittle_matern(nubar, arg)