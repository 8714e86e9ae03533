"""Constructors for matrix-valued pseudo-variograms.

A pseudo-variogram gamma assigns to every pair of locations an m x m matrix
gamma_ij(x, y) = (1/2) Var(Z_i(x) - Z_j(y)) for some m-variate field Z.
Equivalently: gamma is conditionally negative definite as a matrix-valued
kernel and its diagonal vanishes at coincident points. Constructors here
produce specs carrying that claim; see the validation module for the
numerical certificates.
"""

from __future__ import annotations

import numpy as np

from .errors import SpecError
from .kernels import (
    KernelKind,
    KernelSpec,
    claims_cnd,
    claims_pd,
    claims_pcv,
    evaluate_pairs,
    make_spec,
    register_evaluator,
    require_nonneg,
    zero_kernel,
)

__all__ = [
    "pcv_power",
    "pcv_bounded",
    "pcv_from_g_and_c",
    "pcv_from_cross_variogram",
    "pcv_oesting",
    "pcv_delay",
    "pcv_bernstein",
    "pcv_nested_spacetime",
    "pcv_transport",
    "BERNSTEIN_KINDS",
]


def _sill_matrix(op, m, sill):
    """Validate a sill matrix; returns (matrix, uniform_flag).

    A product-form family b_ij * g(h) is a genuine pseudo-variogram only when
    every b_ij is the same constant: gamma_12(0) = 0 would otherwise force the
    components to coincide while their variograms differ. Non-uniform sills
    are accepted but the result is tagged unvalidated.
    """
    if sill is None:
        return np.ones((m, m)), True
    b = np.asarray(sill, dtype=float)
    if b.shape != (m, m):
        raise SpecError(f"{op}: sill must be an {m}x{m} matrix, got shape {b.shape}")
    if not np.allclose(b, b.T, rtol=0.0, atol=1e-12):
        raise SpecError(f"{op}: sill must be symmetric")
    if np.any(b <= 0.0):
        raise SpecError(f"{op}: sill entries must be positive")
    vals = np.linalg.eigvalsh((b + b.T) / 2.0)
    if vals[0] < -1e-10 * max(abs(vals[-1]), 1e-300):
        raise SpecError(f"{op}: sill must be PSD (min eigenvalue {vals[0]:.3e})")
    uniform = float(b.max() - b.min()) == 0.0
    return (b + b.T) / 2.0, uniform


def pcv_power(m: int, dim_space: int, alpha: float = 1.0, scale_len: float = 1.0,
              sill=None) -> KernelSpec:
    """Power pseudo-variogram gamma_ij(h) = b_ij * ||h/s||^alpha, alpha in (0, 2].

    The default sill is all ones, which keeps the pseudo-variogram claim. A
    non-uniform sill matrix is accepted but yields an unvalidated spec.
    """
    if not 0.0 < alpha <= 2.0:
        raise SpecError(f"pcv_power: alpha must be in (0, 2], got {alpha}")
    if not scale_len > 0:
        raise SpecError(f"pcv_power: scale must be > 0, got {scale_len}")
    b, uniform = _sill_matrix("pcv_power", m, sill)
    return make_spec(
        "pcv_power", m, dim_space, 0,
        params={"alpha": float(alpha), "scale": float(scale_len), "sill": b},
        kind=KernelKind.PSEUDO_VARIOGRAM if uniform else KernelKind.UNVALIDATED,
    )


@register_evaluator("pcv_power")
def _eval_pcv_power(spec, X, Y):
    r = np.linalg.norm((X - Y) / spec.param("scale"), axis=1)
    prof = np.power(r, spec.param("alpha"))
    b = np.asarray(spec.param("sill"), dtype=float)
    return prof[:, None, None] * b[None, :, :]


def pcv_bounded(m: int, dim_space: int, alpha: float = 2.0, scale_len: float = 1.0,
                sill=None) -> KernelSpec:
    """Bounded pseudo-variogram gamma_ij(h) = b_ij * (1 - exp(-||h/s||^alpha))."""
    if not 0.0 < alpha <= 2.0:
        raise SpecError(f"pcv_bounded: alpha must be in (0, 2], got {alpha}")
    if not scale_len > 0:
        raise SpecError(f"pcv_bounded: scale must be > 0, got {scale_len}")
    b, uniform = _sill_matrix("pcv_bounded", m, sill)
    return make_spec(
        "pcv_bounded", m, dim_space, 0,
        params={"alpha": float(alpha), "scale": float(scale_len), "sill": b},
        kind=KernelKind.PSEUDO_VARIOGRAM if uniform else KernelKind.UNVALIDATED,
    )


@register_evaluator("pcv_bounded")
def _eval_pcv_bounded(spec, X, Y):
    r = np.linalg.norm((X - Y) / spec.param("scale"), axis=1)
    prof = -np.expm1(-np.power(r, spec.param("alpha")))
    b = np.asarray(spec.param("sill"), dtype=float)
    return prof[:, None, None] * b[None, :, :]


# ---------------------------------------------------------------------------
# representation-based constructors


def pcv_from_g_and_c(g, cov: KernelSpec) -> KernelSpec:
    """Additively separable minus covariance: gamma_ij(x,y) = g_i(x)+g_j(y)-C_ij(x,y).

    Parameters
    ----------
    g : {'half_diag'} or sequence of m floats
        'half_diag' takes g_i(x) = C_ii(x, x)/2, which makes the diagonal
        vanish and upgrades the claim to pseudo-variogram. A sequence gives
        constant g_i; the result is then CND (pseudo-variogram only if the
        constants happen to halve a constant diagonal, which is not checked).
    cov : KernelSpec
        Model with a positive-definiteness claim.

    The additive part contributes exactly zero to every constrained quadratic
    form, so the CND claim holds for any choice of g.
    """
    if not claims_pd(cov):
        raise SpecError("pcv_from_g_and_c: cov must carry a PD claim")
    if isinstance(g, str):
        if g != "half_diag":
            raise SpecError(f"pcv_from_g_and_c: unknown g kind {g!r}")
        gspec = {"kind": "half_diag"}
        kind = KernelKind.PSEUDO_VARIOGRAM
    else:
        values = [float(v) for v in g]
        if len(values) != cov.m:
            raise SpecError(
                f"pcv_from_g_and_c: need {cov.m} constants, got {len(values)}"
            )
        gspec = {"kind": "constants", "values": values}
        kind = KernelKind.CONDITIONALLY_NEGATIVE_DEFINITE
    return make_spec(
        "pcv_from_g_and_c", cov.m, cov.dim_space, cov.dim_time,
        params={"g": gspec}, children=(cov,), kind=kind,
        stationary=cov.stationary,  # half_diag of a stationary C is constant
    )


@register_evaluator("pcv_from_g_and_c")
def _eval_from_g_and_c(spec, X, Y):
    cov = spec.children[0]
    C = evaluate_pairs(cov, X, Y)
    g = spec.param_dict()["g"]
    if g["kind"] == "half_diag":
        gx = 0.5 * np.einsum("rii->ri", evaluate_pairs(cov, X, X))
        gy = 0.5 * np.einsum("rii->ri", evaluate_pairs(cov, Y, Y))
    else:
        vals = np.asarray(g["values"], dtype=float)
        gx = np.broadcast_to(vals, (X.shape[0], spec.m))
        gy = gx
    return gx[:, :, None] + gy[:, None, :] - C


def pcv_from_cross_variogram(tilde: KernelSpec) -> KernelSpec:
    """Pseudo-variogram induced by a cross-variogram.

    gamma_ij(x, y) = g~_ii(x,0) + g~_jj(y,0) - (g~_ij(x,0) + g~_ij(y,0) - g~_ij(x,y)).

    The input must be a valid cross-variogram (diagonal vanishing at
    coincident points, jointly symmetric); that precondition is the caller's
    and is what the pseudo-variogram claim of the output rests on.
    """
    return make_spec(
        "pcv_from_cross_variogram", tilde.m, tilde.dim_space, tilde.dim_time,
        children=(tilde,), kind=KernelKind.PSEUDO_VARIOGRAM, stationary=False,
    )


@register_evaluator("pcv_from_cross_variogram")
def _eval_from_cross_vario(spec, X, Y):
    tilde = spec.children[0]
    O = np.zeros_like(X)
    gx0 = evaluate_pairs(tilde, X, O)
    gy0 = evaluate_pairs(tilde, Y, O)
    gxy = evaluate_pairs(tilde, X, Y)
    dx = np.einsum("rii->ri", gx0)
    dy = np.einsum("rii->ri", gy0)
    return dx[:, :, None] + dy[:, None, :] - (gx0 + gy0 - gxy)


def pcv_oesting(gamma0: KernelSpec, cov: KernelSpec) -> KernelSpec:
    """Univariate variogram plus covariance-induced cross structure.

    gamma_ij(h) = gamma0(h) + (C_ii(0) + C_jj(0))/2 - C_ij(h)

    with gamma0 a univariate (m = 1) pseudo-variogram and C a stationary
    matrix covariance model. Cross entries may turn negative for strongly
    negatively correlated C; the validation report notes (rather than
    forbids) negative values.
    """
    if gamma0.m != 1:
        raise SpecError("pcv_oesting: gamma0 must be univariate (m = 1)")
    if not claims_pcv(gamma0):
        raise SpecError("pcv_oesting: gamma0 must carry a pseudo-variogram claim")
    if not claims_pd(cov):
        raise SpecError("pcv_oesting: cov must carry a PD claim")
    if not cov.stationary:
        raise SpecError("pcv_oesting: cov must be stationary (C(0) must be a constant)")
    if (gamma0.dim_space, gamma0.dim_time) != (cov.dim_space, cov.dim_time):
        raise SpecError("pcv_oesting: gamma0 and cov must share input dimensions")
    return make_spec(
        "pcv_oesting", cov.m, cov.dim_space, cov.dim_time,
        children=(gamma0, cov), kind=KernelKind.PSEUDO_VARIOGRAM,
    )


@register_evaluator("pcv_oesting")
def _eval_oesting(spec, X, Y):
    gamma0, cov = spec.children
    g0 = evaluate_pairs(gamma0, X, Y)[:, 0, 0]
    C = evaluate_pairs(cov, X, Y)
    origin = np.zeros((1, spec.dim))
    c0 = np.einsum("rii->i", evaluate_pairs(cov, origin, origin))
    sep = 0.5 * (c0[:, None] + c0[None, :])
    return g0[:, None, None] + sep[None, :, :] - C


def pcv_delay(gamma0: KernelSpec, delays, m: int) -> KernelSpec:
    """Component-wise delayed field: gamma_ij(h) = gamma0(h + tau_j - tau_i).

    gamma0 must be univariate and even in h (true of every isotropic family
    here); delays is an (m, d+k) array of shift vectors tau_i. Cross entries
    are genuinely asymmetric in h, which is the point.
    """
    if gamma0.m != 1:
        raise SpecError("pcv_delay: gamma0 must be univariate (m = 1)")
    if not claims_pcv(gamma0):
        raise SpecError("pcv_delay: gamma0 must carry a pseudo-variogram claim")
    tau = np.atleast_2d(np.asarray(delays, dtype=float))
    if tau.shape != (m, gamma0.dim):
        raise SpecError(
            f"pcv_delay: delays must have shape ({m}, {gamma0.dim}), got {tau.shape}"
        )
    return make_spec(
        "pcv_delay", m, gamma0.dim_space, gamma0.dim_time,
        params={"delays": tau}, children=(gamma0,),
        kind=KernelKind.PSEUDO_VARIOGRAM,
    )


@register_evaluator("pcv_delay")
def _eval_delay(spec, X, Y):
    gamma0 = spec.children[0]
    tau = np.asarray(spec.param("delays"), dtype=float)
    m = spec.m
    npairs = X.shape[0]
    # evaluate gamma0 at (x - tau_i, y - tau_j): difference h + tau_j - tau_i
    Xs = X[:, None, None, :] - tau[None, :, None, :]   # varies over i
    Ys = Y[:, None, None, :] - tau[None, None, :, :]   # varies over j
    Xf = np.broadcast_to(Xs, (npairs, m, m, spec.dim)).reshape(-1, spec.dim)
    Yf = np.broadcast_to(Ys, (npairs, m, m, spec.dim)).reshape(-1, spec.dim)
    vals = evaluate_pairs(gamma0, Xf, Yf)[:, 0, 0]
    return vals.reshape(npairs, m, m)


# ---------------------------------------------------------------------------
# Bernstein transforms

BERNSTEIN_KINDS = ("log1p", "power", "scale", "rational")


def _bernstein_apply(transform: dict, values: np.ndarray, op: str) -> np.ndarray:
    t = require_nonneg(values, op, "transform arguments")
    kind = transform["kind"]
    if kind == "log1p":
        return np.log1p(t)
    if kind == "power":
        return np.power(t, transform["beta"])
    if kind == "scale":
        return transform["s"] * t
    if kind == "rational":
        lam = transform["lam"]
        return t / (lam + t)
    raise SpecError(f"{op}: unknown Bernstein transform {kind!r}")


def pcv_bernstein(child: KernelSpec, kind: str, **kw) -> KernelSpec:
    """Entrywise Bernstein transform of a pseudo-variogram.

    Supported transforms (each vanishes at 0 and is Bernstein on [0, inf)):

    - 'log1p':            t -> log(1 + t)
    - 'power', beta:      t -> t^beta, beta in (0, 1]
    - 'scale', s:         t -> s*t, s > 0
    - 'rational', lam:    t -> t/(lam + t), lam > 0

    Claims are preserved: pseudo-variograms map to pseudo-variograms and CND
    models with nonnegative entries stay CND. Entries are required to be
    nonnegative at evaluation time.
    """
    if kind not in BERNSTEIN_KINDS:
        raise SpecError(f"pcv_bernstein: unknown transform {kind!r}")
    transform: dict = {"kind": kind}
    if kind == "power":
        beta = float(kw.pop("beta"))
        if not 0.0 < beta <= 1.0:
            raise SpecError(f"pcv_bernstein: beta must be in (0, 1], got {beta}")
        transform["beta"] = beta
    elif kind == "scale":
        s = float(kw.pop("s"))
        if not s > 0:
            raise SpecError(f"pcv_bernstein: s must be > 0, got {s}")
        transform["s"] = s
    elif kind == "rational":
        lam = float(kw.pop("lam"))
        if not lam > 0:
            raise SpecError(f"pcv_bernstein: lam must be > 0, got {lam}")
        transform["lam"] = lam
    if kw:
        raise SpecError(f"pcv_bernstein: unexpected arguments {sorted(kw)}")
    if not claims_cnd(child):
        raise SpecError("pcv_bernstein: child must carry a CND or pseudo-variogram claim")
    return make_spec(
        "pcv_bernstein", child.m, child.dim_space, child.dim_time,
        params={"transform": transform}, children=(child,), kind=child.kind,
        stationary=child.stationary,
    )


@register_evaluator("pcv_bernstein")
def _eval_bernstein(spec, X, Y):
    vals = evaluate_pairs(spec.children[0], X, Y)
    return _bernstein_apply(spec.param_dict()["transform"], vals, "pcv_bernstein")


# ---------------------------------------------------------------------------
# space-time assembly


def pcv_nested_spacetime(spatial: KernelSpec, temporal: KernelSpec) -> KernelSpec:
    """Nested space-time pseudo-variogram gamma(h, u) = gamma_S(h) + gamma_T(u).

    spatial lives on R^d, temporal on R^k (declared with dim_space = k); the
    result lives on R^d x R^k.
    """
    if spatial.m != temporal.m:
        raise SpecError("pcv_nested_spacetime: components must share m")
    for part, name in ((spatial, "spatial"), (temporal, "temporal")):
        if part.dim_time != 0:
            raise SpecError(f"pcv_nested_spacetime: {name} part must be a plain model "
                            "(its own dim_time = 0)")
        if not claims_cnd(part):
            raise SpecError(f"pcv_nested_spacetime: {name} part must carry a CND or "
                            "pseudo-variogram claim")
    kind = (KernelKind.PSEUDO_VARIOGRAM
            if claims_pcv(spatial) and claims_pcv(temporal)
            else KernelKind.CONDITIONALLY_NEGATIVE_DEFINITE)
    return make_spec(
        "pcv_nested_spacetime", spatial.m, spatial.dim_space, temporal.dim_space,
        children=(spatial, temporal), kind=kind,
        stationary=spatial.stationary and temporal.stationary,
    )


@register_evaluator("pcv_nested_spacetime")
def _eval_nested(spec, X, Y):
    d = spec.dim_space
    gS = evaluate_pairs(spec.children[0], X[:, :d], Y[:, :d])
    gT = evaluate_pairs(spec.children[1], X[:, d:], Y[:, d:])
    return gS + gT


def pcv_transport(spatial: KernelSpec, velocity) -> KernelSpec:
    """Transported pseudo-variogram gamma~(h, u) = gamma(h - v*u).

    spatial must be a stationary pseudo-variogram on R^d; velocity is the
    drift vector v in R^d. The result lives on R^d x R.
    """
    if spatial.dim_time != 0:
        raise SpecError("pcv_transport: spatial part must have dim_time = 0")
    if not claims_cnd(spatial):
        raise SpecError("pcv_transport: spatial part must carry a CND or "
                        "pseudo-variogram claim")
    if not spatial.stationary:
        raise SpecError("pcv_transport: spatial part must be stationary")
    v = np.asarray(velocity, dtype=float).reshape(-1)
    if v.shape != (spatial.dim_space,):
        raise SpecError(
            f"pcv_transport: velocity must have length {spatial.dim_space}, got {v.shape}"
        )
    return make_spec(
        "pcv_transport", spatial.m, spatial.dim_space, 1,
        params={"velocity": v}, children=(spatial,), kind=spatial.kind,
    )


@register_evaluator("pcv_transport")
def _eval_transport(spec, X, Y):
    d = spec.dim_space
    v = np.asarray(spec.param("velocity"), dtype=float)
    Xs = X[:, :d] - X[:, d:] * v[None, :]
    Ys = Y[:, :d] - Y[:, d:] * v[None, :]
    return evaluate_pairs(spec.children[0], Xs, Ys)
