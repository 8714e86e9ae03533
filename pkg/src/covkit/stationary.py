"""Stationary covariance constructions driven by pseudo-variograms.

Each constructor consumes one or more claimed pseudo-variograms (or CND
models) and returns a spec claiming positive definiteness. The families
split into exponential-type maps (Schoenberg exponential, increments,
ratio products), Laplace-transform mixtures over one or two pseudo-variogram
arguments, derivative-based constructions, and ratio families whose every
Hadamard power stays positive definite.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _sp

from .errors import EvaluationError, SpecError
from .kernels import (
    KernelKind,
    KernelSpec,
    claims_cnd,
    claims_pcv,
    evaluate_pairs,
    make_spec,
    register_evaluator,
    require_nonneg,
)
from .linalg import bessel_k_arr, expi_arr
from .mixtures import (
    laplace2d_eval,
    laplace2d_record,
    laplace_eval,
    laplace_record,
    density_eval,
    mixture_arrays,
    mixture_gauss_legendre_2d,
    mixture_nodes,
    validate_density_psd,
)

__all__ = [
    "schoenberg_exp",
    "increment_cov",
    "ratio_product_model",
    "laplace2d_mixture",
    "mixture_transform_values",
    "laplace2d_node_doubling_error",
    "toy_ei_model",
    "toy_ei_transforms",
    "triple_laplace",
    "fonseca_steel",
    "matern_mixture",
    "matern_profile",
    "gaussian_extended",
    "lagrangian_mixture",
    "transport_mixture",
    "second_derivative_cov",
    "second_derivative_numeric",
    "cm_derivative_cov",
    "isotropic_descent",
    "infdiv_ratio",
    "hadamard_power",
    "cosh_ratio",
    "cosh_zero_product",
]

_EPS = float(np.finfo(float).eps)


def _require_pcv(spec, op, role="gamma"):
    if not claims_pcv(spec):
        raise SpecError(f"{op}: {role} must carry a pseudo-variogram claim")


def _require_cnd(spec, op, role="gamma"):
    if not claims_cnd(spec):
        raise SpecError(f"{op}: {role} must carry a CND or pseudo-variogram claim")


def _split_eval(spec, X, Y):
    """Evaluate the (spatial, temporal) children of a two-argument mixture."""
    d = spec.dim_space
    gS = evaluate_pairs(spec.children[0], X[:, :d], Y[:, :d])
    gT = evaluate_pairs(spec.children[1], X[:, d:], Y[:, d:])
    gS = require_nonneg(gS, spec.op, "spatial pseudo-variogram values")
    gT = require_nonneg(gT, spec.op, "temporal pseudo-variogram values")
    return gS, gT


def _two_arg_shape(op, g_spatial, g_temporal):
    if g_spatial.m != g_temporal.m:
        raise SpecError(f"{op}: spatial and temporal parts must share m")
    for part, name in ((g_spatial, "spatial"), (g_temporal, "temporal")):
        if part.dim_time != 0:
            raise SpecError(f"{op}: {name} part must have dim_time = 0")
        _require_pcv(part, op, f"{name} part")
    return g_spatial.m, g_spatial.dim_space, g_temporal.dim_space


# ---------------------------------------------------------------------------
# exponential-type maps


def schoenberg_exp(gamma: KernelSpec, t: float = 1.0) -> KernelSpec:
    """Entrywise exponential C = exp(-t * gamma), t > 0.

    This is one direction of the Schoenberg correspondence: C is positive
    definite for every t > 0 exactly when gamma is CND. Every Hadamard power
    of the result is again of the same form, so it is flagged infinitely
    divisible.
    """
    if not t > 0:
        raise SpecError(f"schoenberg_exp: t must be > 0, got {t}")
    _require_cnd(gamma, "schoenberg_exp")
    return _schoenberg_exp_unchecked(gamma, t)


def _schoenberg_exp_unchecked(gamma: KernelSpec, t: float) -> KernelSpec:
    # validation tooling needs the map without the claim gate
    return make_spec(
        "schoenberg_exp", gamma.m, gamma.dim_space, gamma.dim_time,
        params={"t": float(t)}, children=(gamma,),
        kind=(KernelKind.POSITIVE_DEFINITE if claims_cnd(gamma)
              else KernelKind.UNVALIDATED),
        infinitely_divisible=claims_cnd(gamma), stationary=gamma.stationary,
    )


@register_evaluator("schoenberg_exp")
def _eval_schoenberg(spec, X, Y):
    g = evaluate_pairs(spec.children[0], X, Y)
    return np.exp(-spec.param("t") * g)


def increment_cov(gamma: KernelSpec, shift) -> KernelSpec:
    """Increment covariance C(h) = Gamma(h+z) + Gamma(h-z) - 2 Gamma(h).

    gamma must be a stationary pseudo-variogram; z is the increment lag.
    """
    _require_pcv(gamma, "increment_cov")
    if not gamma.stationary:
        raise SpecError("increment_cov: gamma must be stationary")
    z = np.asarray(shift, dtype=float).reshape(-1)
    if z.shape != (gamma.dim,):
        raise SpecError(f"increment_cov: shift must have length {gamma.dim}")
    return make_spec(
        "increment_cov", gamma.m, gamma.dim_space, gamma.dim_time,
        params={"shift": z}, children=(gamma,), kind=KernelKind.POSITIVE_DEFINITE,
    )


@register_evaluator("increment_cov")
def _eval_increment(spec, X, Y):
    z = np.asarray(spec.param("shift"), dtype=float)
    g = spec.children[0]
    return (
        evaluate_pairs(g, X + z, Y)
        + evaluate_pairs(g, X - z, Y)
        - 2.0 * evaluate_pairs(g, X, Y)
    )


def ratio_product_model(gamma: KernelSpec, shift, offset: float = 0.0) -> KernelSpec:
    """Ratio-product model

    C(h) = (1 + Gamma(h+z)) * (1 + Gamma(h-z)) / (1 + Gamma(h))^2 + c,

    entrywise, with c >= -1 and gamma a stationary pseudo-variogram.
    """
    _require_pcv(gamma, "ratio_product_model")
    if not gamma.stationary:
        raise SpecError("ratio_product_model: gamma must be stationary")
    if offset < -1.0:
        raise SpecError(f"ratio_product_model: offset must be >= -1, got {offset}")
    z = np.asarray(shift, dtype=float).reshape(-1)
    if z.shape != (gamma.dim,):
        raise SpecError(f"ratio_product_model: shift must have length {gamma.dim}")
    return make_spec(
        "ratio_product_model", gamma.m, gamma.dim_space, gamma.dim_time,
        params={"shift": z, "offset": float(offset)}, children=(gamma,),
        kind=KernelKind.POSITIVE_DEFINITE,
    )


@register_evaluator("ratio_product_model")
def _eval_ratio_product_model(spec, X, Y):
    z = np.asarray(spec.param("shift"), dtype=float)
    g = spec.children[0]
    gp = evaluate_pairs(g, X + z, Y)
    gm = evaluate_pairs(g, X - z, Y)
    g0 = evaluate_pairs(g, X, Y)
    return (1.0 + gp) * (1.0 + gm) / (1.0 + g0) ** 2 + spec.param("offset")


# ---------------------------------------------------------------------------
# two-argument Laplace mixtures


def mixture_transform_values(mix: dict, m: int, x, y=None) -> np.ndarray:
    """Evaluate the discrete mixture transform.

    For 2-D mixtures: L_ij(x, y) = sum_r w_r f_ij(node_r) exp(-v_r x - w_r y).
    For 1-D mixtures pass y = None. x, y are (npts,) arrays; the result is
    (npts, m, m).
    """
    nodes, weights, density = mixture_arrays(mix)
    F = density_eval(density, nodes, m)  # (R, m, m)
    x = np.asarray(x, dtype=float)
    if nodes.shape[1] == 2:
        if y is None:
            raise SpecError("mixture_transform_values: 2-D mixture needs y")
        y = np.asarray(y, dtype=float)
        expo = np.exp(-np.multiply.outer(x, nodes[:, 0]) - np.multiply.outer(y, nodes[:, 1]))
    else:
        if y is not None:
            raise SpecError("mixture_transform_values: 1-D mixture takes no y")
        expo = np.exp(-np.multiply.outer(x, nodes[:, 0]))
    return np.einsum("nr,r,rpq->npq", expo, weights, F)


def laplace2d_mixture(g_spatial: KernelSpec, g_temporal: KernelSpec, mix: dict) -> KernelSpec:
    """Quadrature mixture C_ij(h, u) = L_ij(gamma_S_ij(h), gamma_T_ij(u)).

    mix is a 2-D mixture record (see the mixtures module); its matrix density
    is validated to be PSD at every node, which is what certifies positive
    definiteness of this finite mixture. Quadrature accuracy relative to an
    intended continuous transform is a separate concern; see
    laplace2d_node_doubling_error.
    """
    m, d, k = _two_arg_shape("laplace2d_mixture", g_spatial, g_temporal)
    nodes, _, density = mixture_arrays(mix)
    if nodes.shape[1] != 2:
        raise SpecError("laplace2d_mixture: needs a 2-D mixture record")
    validate_density_psd(density, nodes, m)
    return make_spec(
        "laplace2d_mixture", m, d, k,
        params={"mixture": mix}, children=(g_spatial, g_temporal),
        kind=KernelKind.POSITIVE_DEFINITE,
    )


@register_evaluator("laplace2d_mixture")
def _eval_laplace2d(spec, X, Y):
    gS, gT = _split_eval(spec, X, Y)
    mix = spec.param_dict()["mixture"]
    nodes, weights, density = mixture_arrays(mix)
    F = density_eval(density, nodes, spec.m)
    expo = np.exp(
        -gS[..., None] * nodes[None, None, None, :, 0]
        - gT[..., None] * nodes[None, None, None, :, 1]
    )  # (npairs, m, m, R)
    return np.einsum("npqr,r,rpq->npq", expo, weights, F)


def laplace2d_node_doubling_error(box, n_nodes: int, density: dict, m: int,
                                  xs, ys) -> float:
    """Max relative change of the mixture transform when node counts double.

    Builds tensor Gauss-Legendre mixtures with n and 2n nodes per axis on the
    same box and compares L_ij on the grid xs x ys. This is the quadrature
    convergence diagnostic for box-based mixtures.
    """
    xs = np.asarray(xs, dtype=float).reshape(-1)
    ys = np.asarray(ys, dtype=float).reshape(-1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    coarse = mixture_gauss_legendre_2d(box, n_nodes, density)
    fine = mixture_gauss_legendre_2d(box, 2 * n_nodes, density)
    a = mixture_transform_values(coarse, m, gx.ravel(), gy.ravel())
    b = mixture_transform_values(fine, m, gx.ravel(), gy.ravel())
    scale = max(float(np.abs(b).max()), 1e-300)
    return float(np.abs(a - b).max() / scale)


# ---------------------------------------------------------------------------
# the explicit two-argument example with exponential-integral closed forms
#
# The density matrix is the Hessian of f(v, w) = v^2/w restricted to the box
# (1, 2)^2, which is PSD there, and the three transform entries factor into
# one-dimensional integrals:
#   int_1^2 v^a e^{-v x} dv   (a = 0, 1, 2)
#   int_1^2 w^{-b} e^{-w y} dw (b = 1, 2, 3; b = 1 is Ei(-2y) - Ei(-y)).
# The closed forms cancel catastrophically for small arguments, so each
# factor switches to its alternating series well above the noise floor.

_TOY_SERIES_CUT = 0.05
_TOY_SERIES_TERMS = 24


def _iv_series(x, a):
    # sum_k (-x)^k (2^{k+a+1} - 1) / (k! (k+a+1))
    out = np.zeros_like(x)
    term = np.ones_like(x)  # (-x)^k / k!
    for k in range(_TOY_SERIES_TERMS):
        out += term * (2.0 ** (k + a + 1) - 1.0) / (k + a + 1)
        term *= -x / (k + 1)
    return out


def _iv_factor(x, a):
    """int_1^2 v^a e^{-vx} dv for x >= 0, a in {0, 1, 2}."""
    x = np.asarray(x, dtype=float)
    small = x < _TOY_SERIES_CUT
    xs = np.where(small, 1.0, x)  # keep the closed form off the singularity
    e1, e2 = np.exp(-xs), np.exp(-2.0 * xs)
    if a == 0:
        closed = (e1 - e2) / xs
    elif a == 1:
        closed = (e1 * (xs + 1.0) - e2 * (2.0 * xs + 1.0)) / xs**2
    else:
        closed = (e1 * (xs**2 + 2.0 * xs + 2.0) - e2 * (4.0 * xs**2 + 4.0 * xs + 2.0)) / xs**3
    return np.where(small, _iv_series(np.where(small, x, 0.0), a), closed)


def _ei_diff(y):
    """Ei(-2y) - Ei(-y) for y >= 0, finite at 0 (equals log 2)."""
    y = np.asarray(y, dtype=float)
    tiny = y < 1e-8
    ys = np.where(tiny, 1.0, y)
    closed = expi_arr(-2.0 * ys) - expi_arr(-ys)
    series = np.log(2.0) - y + 0.75 * y**2  # next term O(y^3)
    return np.where(tiny, series, closed)


def _iw_factor(y, b):
    """int_1^2 w^{-b} e^{-wy} dw for y >= 0, b in {1, 2, 3}."""
    y = np.asarray(y, dtype=float)
    d = _ei_diff(y)
    if b == 1:
        return d
    e1, e2 = np.exp(-y), np.exp(-2.0 * y)
    if b == 2:
        return e1 - 0.5 * e2 - y * d
    return e1 * (0.5 - 0.5 * y) - e2 * (0.125 - 0.25 * y) + 0.5 * y**2 * d


def toy_ei_transforms(x, y):
    """The three transform entries (L11, L12, L22) of the explicit example."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    l11 = 2.0 * _iv_factor(x, 0) * _iw_factor(y, 1)
    l12 = -2.0 * _iv_factor(x, 1) * _iw_factor(y, 2)
    l22 = 2.0 * _iv_factor(x, 2) * _iw_factor(y, 3)
    return l11, l12, l22


def toy_ei_model(g_spatial: KernelSpec, g_temporal: KernelSpec) -> KernelSpec:
    """Closed-form bivariate mixture with the Hessian density of v^2/w on (1,2)^2.

    m must be 2. C_ij(h, u) = L_ij(gamma_S_ij(h), gamma_T_ij(u)) with the
    exponential-integral closed forms of toy_ei_transforms.
    """
    m, d, k = _two_arg_shape("toy_ei_model", g_spatial, g_temporal)
    if m != 2:
        raise SpecError("toy_ei_model: the explicit density is 2x2, need m = 2")
    return make_spec(
        "toy_ei", m, d, k, children=(g_spatial, g_temporal),
        kind=KernelKind.POSITIVE_DEFINITE,
    )


@register_evaluator("toy_ei")
def _eval_toy_ei(spec, X, Y):
    gS, gT = _split_eval(spec, X, Y)
    out = np.empty_like(gS)
    # each entry uses its own transform: L11 on (1,1), L12 off-diagonal, L22 on (2,2)
    out[:, 0, 0] = 2.0 * _iv_factor(gS[:, 0, 0], 0) * _iw_factor(gT[:, 0, 0], 1)
    out[:, 0, 1] = -2.0 * _iv_factor(gS[:, 0, 1], 1) * _iw_factor(gT[:, 0, 1], 2)
    out[:, 1, 0] = -2.0 * _iv_factor(gS[:, 1, 0], 1) * _iw_factor(gT[:, 1, 0], 2)
    out[:, 1, 1] = 2.0 * _iv_factor(gS[:, 1, 1], 2) * _iw_factor(gT[:, 1, 1], 3)
    return out


def triple_laplace(g_spatial: KernelSpec, g_temporal: KernelSpec,
                   l0: dict, l1: dict, l2: dict) -> KernelSpec:
    """Triple product of whitelisted Laplace transforms

    C(h, u) = L0(gamma_S(h) + gamma_T(u)) * L1(gamma_S(h)) * L2(gamma_T(u)),

    entrywise, each Lk a laplace_record (point mass, exponential, gamma, gig).
    """
    m, d, k = _two_arg_shape("triple_laplace", g_spatial, g_temporal)
    recs = {}
    for name, rec in (("l0", l0), ("l1", l1), ("l2", l2)):
        rec = dict(rec)
        kind = rec.pop("kind", None)
        recs[name] = laplace_record(kind, **rec)  # revalidates parameters
    return make_spec(
        "triple_laplace", m, d, k, params=recs,
        children=(g_spatial, g_temporal), kind=KernelKind.POSITIVE_DEFINITE,
    )


@register_evaluator("triple_laplace")
def _eval_triple(spec, X, Y):
    gS, gT = _split_eval(spec, X, Y)
    p = spec.param_dict()
    return (
        laplace_eval(p["l0"], gS + gT)
        * laplace_eval(p["l1"], gS)
        * laplace_eval(p["l2"], gT)
    )


def fonseca_steel(g_spatial: KernelSpec, g_temporal: KernelSpec,
                  a0: float, a1: float, a2: float,
                  lam0: float, lam1: float, lam2: float,
                  delta: float) -> KernelSpec:
    """Closed-form gamma/gamma/generalized-inverse-Gaussian mixture

    C(h,u) = (1 + (gS+gT)/a0)^-lam0 (1 + gS/a1)^-(lam1/2) (1 + gT/a2)^-lam2
             * K_lam1(2 sqrt((a1+gS) delta)) / K_lam1(2 sqrt(a1 delta)).

    Identical to triple_laplace with L0 = gamma(lam0, a0), L2 = gamma(lam2, a2)
    and L1 the GIG transform with p = lam1, a = 2 a1, b = 2 delta.
    """
    m, d, k = _two_arg_shape("fonseca_steel", g_spatial, g_temporal)
    for name, v in (("a0", a0), ("a1", a1), ("a2", a2), ("lam0", lam0),
                    ("lam1", lam1), ("lam2", lam2), ("delta", delta)):
        if not v > 0:
            raise SpecError(f"fonseca_steel: {name} must be > 0, got {v}")
    return make_spec(
        "fonseca_steel", m, d, k,
        params={"a0": a0, "a1": a1, "a2": a2, "lam0": lam0, "lam1": lam1,
                "lam2": lam2, "delta": delta},
        children=(g_spatial, g_temporal), kind=KernelKind.POSITIVE_DEFINITE,
    )


@register_evaluator("fonseca_steel")
def _eval_fonseca(spec, X, Y):
    gS, gT = _split_eval(spec, X, Y)
    p = dict(spec.params)
    a0, a1, a2 = p["a0"], p["a1"], p["a2"]
    l0, l1, l2, delta = p["lam0"], p["lam1"], p["lam2"], p["delta"]
    denom = bessel_k_arr(l1, 2.0 * np.sqrt(a1 * delta))
    return (
        np.power(1.0 + (gS + gT) / a0, -l0)
        * np.power(1.0 + gS / a1, -l1 / 2.0)
        * np.power(1.0 + gT / a2, -l2)
        * bessel_k_arr(l1, 2.0 * np.sqrt((a1 + gS) * delta)) / denom
    )


def matern_profile(gs, gt, nu, branch_threshold: float = 1e-8):
    """Whittle-Matern-type mixture profile with explicit small-argument branch.

    value = (gs/(1+gt))^(nu/2) K_nu(sqrt(gs (1+gt))), continued at gs -> 0 by
    2^(nu-1) Gamma(nu) (1+gt)^-nu. Entries with gs < branch_threshold use the
    limit branch; pass branch_threshold = 0.0 to force the exact formula
    (gs must then be positive).
    """
    gs = np.asarray(gs, dtype=float)
    gt = np.asarray(gt, dtype=float)
    nu = np.asarray(nu, dtype=float)
    small = gs < branch_threshold
    limit = 2.0 ** (nu - 1.0) * _sp.gamma(nu) * np.power(1.0 + gt, -nu)
    gs_safe = np.where(small, 1.0, gs)
    exact = (
        np.power(gs_safe / (1.0 + gt), nu / 2.0)
        * bessel_k_arr(nu, np.sqrt(gs_safe * (1.0 + gt)))
    )
    return np.where(small, limit, exact)


def matern_mixture(g_spatial: KernelSpec, g_temporal: KernelSpec, nu_diag) -> KernelSpec:
    """Matern-type space-time mixture with averaged smoothness orders.

    C_ij(h, u) = matern_profile(gamma_S_ij(h), gamma_T_ij(u), nu_ij) with
    nu_ij = (nu_ii + nu_jj)/2 and nu_diag the per-variable smoothness vector.
    """
    m, d, k = _two_arg_shape("matern_mixture", g_spatial, g_temporal)
    nus = np.asarray(nu_diag, dtype=float).reshape(-1)
    if nus.shape != (m,):
        raise SpecError(f"matern_mixture: nu_diag must have length {m}")
    if np.any(nus <= 0.0):
        raise SpecError("matern_mixture: smoothness orders must be > 0")
    return make_spec(
        "matern_mixture", m, d, k, params={"nu_diag": nus},
        children=(g_spatial, g_temporal), kind=KernelKind.POSITIVE_DEFINITE,
    )


@register_evaluator("matern_mixture")
def _eval_matern_mixture(spec, X, Y):
    gS, gT = _split_eval(spec, X, Y)
    nus = np.asarray(spec.param("nu_diag"), dtype=float)
    nu = (nus[:, None] + nus[None, :]) / 2.0
    return matern_profile(gS, gT, nu[None, :, :])


# ---------------------------------------------------------------------------
# anisotropy-mixing Gaussian shapes


def _check_spd(name, mat, d):
    a = np.asarray(mat, dtype=float)
    if a.shape != (d, d):
        raise SpecError(f"{name}: expected a {d}x{d} matrix, got {a.shape}")
    a = (a + a.T) / 2.0
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise SpecError(f"{name}: matrix must be positive definite") from None
    return a


def _check_psd(name, mat, d):
    a = np.asarray(mat, dtype=float)
    if a.shape != (d, d):
        raise SpecError(f"{name}: expected a {d}x{d} matrix, got {a.shape}")
    a = (a + a.T) / 2.0
    vals = np.linalg.eigvalsh(a)
    if vals[0] < -1e-12 * max(abs(vals[-1]), 1e-300):
        raise SpecError(f"{name}: matrix must be PSD (min eigenvalue {vals[0]:.3e})")
    return a


def _anisotropy_stack(spec, X, Y, base, comps):
    """A_ij(u) = base + sum_l gamma_l_ij(u) * comps[l], batched over pairs."""
    d = spec.dim_space
    npairs = X.shape[0]
    m = spec.m
    A = np.broadcast_to(base, (npairs, m, m, d, d)).copy()
    for child, comp in zip(spec.children, comps):
        g = evaluate_pairs(child, X[:, d:], Y[:, d:])
        g = require_nonneg(g, spec.op, "component pseudo-variogram values")
        A += g[..., None, None] * comp[None, None, None, :, :]
    return A


def _gauss_shape(spec, A, h, shift=None):
    """|A|^(-1/2) and the half quadratic form (1/2) h' A^{-1} h, batched."""
    npairs, m = A.shape[0], A.shape[1]
    d = A.shape[-1]
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise EvaluationError(
            f"{spec.op}: local anisotropy matrix not positive definite"
        ) from None
    diag = np.einsum("...ii->...i", L)
    det = np.prod(diag, axis=-1) ** 2
    hh = h if shift is None else h + shift
    hb = np.broadcast_to(hh[:, None, None, :, None], (npairs, m, m, d, 1))
    yv = np.linalg.solve(L, hb)
    qf = 0.5 * np.einsum("npqdo,npqdo->npq", yv, yv)
    return det ** -0.5, qf


def gaussian_extended(sigma, sigmas, components, m: int | None = None,
                      dim_time: int | None = None) -> KernelSpec:
    """Gaussian shape with pseudo-variogram-driven anisotropy

    C_ij(h, u) = |A_ij(u)|^(-1/2) exp(-(1/2) h' A_ij(u)^{-1} h),
    A_ij(u) = Sigma + sum_l gamma_l_ij(u) Sigma_l,

    with Sigma SPD, each Sigma_l PSD, and each component a pseudo-variogram
    on the temporal block (entries must be nonnegative where evaluated).
    """
    components = tuple(components)
    sigma = np.asarray(sigma, dtype=float)
    d = sigma.shape[0]
    sigma = _check_spd("gaussian_extended: sigma", sigma, d)
    sig_l = [_check_psd(f"gaussian_extended: sigmas[{i}]", s, d)
             for i, s in enumerate(sigmas)]
    if len(sig_l) != len(components):
        raise SpecError("gaussian_extended: need one matrix per component")
    if components:
        m = components[0].m
        dim_time = components[0].dim_space
        for c in components:
            _require_pcv(c, "gaussian_extended", "component")
            if c.dim_time != 0 or c.dim_space != dim_time or c.m != m:
                raise SpecError("gaussian_extended: components must share m and "
                                "live on the temporal block")
    else:
        if m is None or dim_time is None:
            raise SpecError("gaussian_extended: m and dim_time are required "
                            "when there are no components")
    return make_spec(
        "gaussian_extended", m, d, dim_time,
        params={"sigma": sigma, "sigmas": [s for s in sig_l]},
        children=components, kind=KernelKind.POSITIVE_DEFINITE,
    )


@register_evaluator("gaussian_extended")
def _eval_gaussian_extended(spec, X, Y):
    d = spec.dim_space
    p = spec.param_dict()
    base = np.asarray(p["sigma"], dtype=float)
    comps = [np.asarray(s, dtype=float) for s in p["sigmas"]]
    A = _anisotropy_stack(spec, X, Y, base, comps)
    h = X[:, :d] - Y[:, :d]
    pref, qf = _gauss_shape(spec, A, h)
    return pref * np.exp(-qf)


def lagrangian_mixture(sigma, sigmas, components, theta, mix: dict,
                       m: int | None = None) -> KernelSpec:
    """Drifting anisotropic mixture

    C_ij(h, u) = |A_ij(u)|^(-1/2) L_ij((1/2)(h + theta u)' A_ij(u)^{-1} (h + theta u))

    with A as in gaussian_extended (components on R^1 time), theta a drift
    vector, and L_ij the 1-D mixture transform of mix (PSD density at nodes).
    With theta = 0, a single unit node and a common uniform density this
    reduces exactly to gaussian_extended.
    """
    components = tuple(components)
    sigma = np.asarray(sigma, dtype=float)
    d = sigma.shape[0]
    sigma = _check_spd("lagrangian_mixture: sigma", sigma, d)
    sig_l = [_check_psd(f"lagrangian_mixture: sigmas[{i}]", s, d)
             for i, s in enumerate(sigmas)]
    if len(sig_l) != len(components):
        raise SpecError("lagrangian_mixture: need one matrix per component")
    if components:
        m = components[0].m
        for c in components:
            _require_pcv(c, "lagrangian_mixture", "component")
            if c.dim_time != 0 or c.dim_space != 1 or c.m != m:
                raise SpecError("lagrangian_mixture: components must be "
                                "univariate-time models (dim 1) sharing m")
    elif m is None:
        raise SpecError("lagrangian_mixture: m required without components")
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape != (d,):
        raise SpecError(f"lagrangian_mixture: theta must have length {d}")
    nodes, _, density = mixture_arrays(mix)
    if nodes.shape[1] != 1:
        raise SpecError("lagrangian_mixture: needs a 1-D mixture record")
    validate_density_psd(density, nodes, m)
    return make_spec(
        "lagrangian_mixture", m, d, 1,
        params={"sigma": sigma, "sigmas": [s for s in sig_l], "theta": theta,
                "mixture": mix},
        children=components, kind=KernelKind.POSITIVE_DEFINITE,
    )


@register_evaluator("lagrangian_mixture")
def _eval_lagrangian(spec, X, Y):
    d = spec.dim_space
    p = spec.param_dict()
    base = np.asarray(p["sigma"], dtype=float)
    comps = [np.asarray(s, dtype=float) for s in p["sigmas"]]
    theta = np.asarray(p["theta"], dtype=float)
    A = _anisotropy_stack(spec, X, Y, base, comps)
    h = X[:, :d] - Y[:, :d]
    u = (X[:, d:] - Y[:, d:])[:, 0]
    pref, qf = _gauss_shape(spec, A, h, shift=u[:, None] * theta[None, :])
    mix = p["mixture"]
    nodes, weights, density = mixture_arrays(mix)
    F = density_eval(density, nodes, spec.m)
    expo = np.exp(-qf[..., None] * nodes[None, None, None, :, 0])
    return pref * np.einsum("npqr,r,rpq->npq", expo, weights, F)


def transport_mixture(g1: KernelSpec, g2: KernelSpec, laplace: dict,
                      sampler: dict, n_mc: int, seed: int) -> KernelSpec:
    """Monte Carlo transport mixture over random velocities

    C_ij(h1, h2, u) = (1/S) sum_s L(gamma1_ij(h1 - V1_s u), gamma2_ij(h2 - V2_s u))

    with L a 2-D product Laplace record and (V1_s, V2_s) frozen draws shared
    by every entry and argument (common random numbers), which makes the
    finite mixture exactly positive definite.

    sampler: {'kind': 'normal', 'sd': scalar or per-dim list} or
    {'kind': 'fixed', 'values': (S, d1+d2) array} (then n_mc/seed are ignored
    for the draw but the seed still labels the spec).
    """
    for part, name in ((g1, "g1"), (g2, "g2")):
        _require_pcv(part, "transport_mixture", name)
        if part.dim_time != 0:
            raise SpecError(f"transport_mixture: {name} must have dim_time = 0")
        if not part.stationary:
            raise SpecError(f"transport_mixture: {name} must be stationary")
    if g1.m != g2.m:
        raise SpecError("transport_mixture: g1 and g2 must share m")
    if laplace.get("kind") != "product":
        raise SpecError("transport_mixture: laplace must be a 2-D product record")
    laplace2d_eval(laplace, np.zeros(1), np.zeros(1))
    d1, d2 = g1.dim_space, g2.dim_space
    kind = sampler.get("kind")
    if kind == "normal":
        sd = np.asarray(sampler.get("sd", 1.0), dtype=float).reshape(-1)
        if sd.size == 1:
            sd = np.full(d1 + d2, float(sd[0]))
        if sd.shape != (d1 + d2,) or np.any(sd < 0):
            raise SpecError("transport_mixture: sd must be a scalar or one "
                            "nonnegative value per velocity dimension")
        if not n_mc >= 1:
            raise SpecError("transport_mixture: n_mc must be >= 1")
        rng = np.random.default_rng(int(seed))
        draws = rng.standard_normal((int(n_mc), d1 + d2)) * sd[None, :]
        sampler = {"kind": "normal", "sd": sd.tolist()}
    elif kind == "fixed":
        draws = np.atleast_2d(np.asarray(sampler["values"], dtype=float))
        if draws.shape[1] != d1 + d2:
            raise SpecError(
                f"transport_mixture: fixed draws must have {d1 + d2} columns"
            )
        sampler = {"kind": "fixed", "values": draws.tolist()}
        n_mc = draws.shape[0]
    else:
        raise SpecError(f"transport_mixture: unknown sampler kind {kind!r}")
    return make_spec(
        "transport_mixture", g1.m, d1 + d2, 1,
        params={"laplace": dict(laplace), "sampler": sampler,
                "n_mc": int(n_mc), "seed": int(seed), "dim1": d1, "dim2": d2,
                "draws": draws},
        children=(g1, g2), kind=KernelKind.POSITIVE_DEFINITE,
    )


@register_evaluator("transport_mixture")
def _eval_transport_mixture(spec, X, Y):
    p = spec.param_dict()
    d1, d2 = p["dim1"], p["dim2"]
    draws = np.asarray(p["draws"], dtype=float)  # (S, d1+d2)
    S = draws.shape[0]
    npairs = X.shape[0]
    m = spec.m
    h1 = X[:, :d1] - Y[:, :d1]
    h2 = X[:, d1:d1 + d2] - Y[:, d1:d1 + d2]
    u = (X[:, d1 + d2:] - Y[:, d1 + d2:])[:, 0]
    arg1 = h1[:, None, :] - draws[None, :, :d1] * u[:, None, None]
    arg2 = h2[:, None, :] - draws[None, :, d1:] * u[:, None, None]
    zero1 = np.zeros((npairs * S, d1))
    zero2 = np.zeros((npairs * S, d2))
    gam1 = evaluate_pairs(spec.children[0], arg1.reshape(-1, d1), zero1)
    gam2 = evaluate_pairs(spec.children[1], arg2.reshape(-1, d2), zero2)
    gam1 = require_nonneg(gam1, spec.op, "g1 values")
    gam2 = require_nonneg(gam2, spec.op, "g2 values")
    vals = laplace2d_eval(p["laplace"], gam1, gam2)
    return vals.reshape(npairs, S, m, m).mean(axis=1)


# ---------------------------------------------------------------------------
# derivative constructions

_SMOOTH_LEAVES = ("pcv_power", "pcv_bounded", "zero")


def _closed_second_supported(spec) -> bool:
    if spec.op == "zero":
        return True
    if spec.op in ("pcv_power", "pcv_bounded"):
        return spec.param("alpha") == 2.0
    if spec.op in ("sum", "scale"):
        return all(_closed_second_supported(c) for c in spec.children)
    return False


def _closed_second_partial(spec, X, Y, axis):
    """Closed-form d^2 gamma / d h_axis^2 for the smooth whitelist (0-based axis)."""
    if spec.op == "zero":
        return np.zeros((X.shape[0], spec.m, spec.m))
    if spec.op == "sum":
        return sum(_closed_second_partial(c, X, Y, axis) for c in spec.children)
    if spec.op == "scale":
        return spec.param("factor") * _closed_second_partial(spec.children[0], X, Y, axis)
    s = spec.param("scale")
    b = np.asarray(spec.param("sill"), dtype=float)
    if spec.op == "pcv_power":
        out = np.full((X.shape[0], 1, 1), 2.0 / s**2) * b[None, :, :]
        return np.broadcast_to(out, (X.shape[0], spec.m, spec.m)).copy()
    if spec.op == "pcv_bounded":
        h = X - Y
        q = np.sum((h / s) ** 2, axis=1)
        hk = h[:, axis]
        prof = (2.0 / s**2) * np.exp(-q) * (1.0 - 2.0 * hk**2 / s**2)
        return prof[:, None, None] * b[None, :, :]
    raise SpecError(f"no closed-form second derivative for op {spec.op!r}")


def _numeric_second_partial(spec, X, Y, axis):
    """Richardson-extrapolated central second difference along one coordinate."""
    h = np.abs(X[:, axis] - Y[:, axis])
    eps = _EPS ** 0.25 * (1.0 + h)

    def d2(step):
        Xp = X.copy(); Xp[:, axis] += step
        Xm = X.copy(); Xm[:, axis] -= step
        fp = evaluate_pairs(spec, Xp, Y)
        f0 = evaluate_pairs(spec, X, Y)
        fm = evaluate_pairs(spec, Xm, Y)
        return (fp - 2.0 * f0 + fm) / step[:, None, None] ** 2

    d_eps = d2(eps)
    d_2eps = d2(2.0 * eps)
    return (4.0 * d_eps - d_2eps) / 3.0, np.abs(d_eps - d_2eps) / 3.0


def second_derivative_cov(gamma: KernelSpec, axis: int, mode: str = "closed") -> KernelSpec:
    """Covariance from the second derivative of a smooth pseudo-variogram

    C_ij(h) = d^2 gamma_ij(h) / d h_axis^2  (axis is 1-based).

    mode 'closed' requires gamma to be built from the smooth whitelist
    (quadratic-exponent power/bounded families and their sums/scales);
    mode 'numeric' uses Richardson-extrapolated central differences and works
    for any twice-differentiable stationary family.
    """
    _require_pcv(gamma, "second_derivative_cov")
    if gamma.dim_time != 0:
        raise SpecError("second_derivative_cov: gamma must be purely spatial")
    if not gamma.stationary:
        raise SpecError("second_derivative_cov: gamma must be stationary")
    if not 1 <= axis <= gamma.dim_space:
        raise SpecError(f"second_derivative_cov: axis must be in [1, {gamma.dim_space}]")
    if mode not in ("closed", "numeric"):
        raise SpecError(f"second_derivative_cov: unknown mode {mode!r}")
    if mode == "closed" and not _closed_second_supported(gamma):
        raise SpecError("second_derivative_cov: closed mode supports only the smooth "
                        "whitelist (quadratic power/bounded, sums, scales)")
    return make_spec(
        "second_derivative_cov", gamma.m, gamma.dim_space, 0,
        params={"axis": int(axis), "mode": mode}, children=(gamma,),
        kind=KernelKind.POSITIVE_DEFINITE,
    )


@register_evaluator("second_derivative_cov")
def _eval_second_derivative_cov(spec, X, Y):
    axis = spec.param("axis") - 1
    if spec.param("mode") == "closed":
        return _closed_second_partial(spec.children[0], X, Y, axis)
    val, _ = _numeric_second_partial(spec.children[0], X, Y, axis)
    return val


def second_derivative_numeric(gamma: KernelSpec, axis: int, x, y):
    """Numeric second derivative with its Richardson error estimate.

    Returns (value, error_estimate) as (m, m) arrays for a single pair.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    val, err = _numeric_second_partial(gamma, x, y, axis - 1)
    return val[0], err[0]


_CM_KINDS = ("exp", "powerlaw")


def _cm_values(cm: dict, t: np.ndarray):
    """Completely monotone L and its derivative L' on the whitelist."""
    if cm["kind"] == "exp":
        v = np.exp(-t)
        return v, -v
    if cm["kind"] == "powerlaw":
        lam = cm["lam"]
        v = np.power(1.0 + t, -lam)
        return v, -lam * np.power(1.0 + t, -lam - 1.0)
    raise SpecError(f"unknown completely monotone kind {cm['kind']!r}")


def _closed_temporal_first(spec, U, V):
    """d gamma / d u for whitelisted univariate-time models (pairs (U, V) on R)."""
    if spec.op == "zero":
        return np.zeros((U.shape[0], spec.m, spec.m))
    if spec.op == "sum":
        return sum(_closed_temporal_first(c, U, V) for c in spec.children)
    if spec.op == "scale":
        return spec.param("factor") * _closed_temporal_first(spec.children[0], U, V)
    s = spec.param("scale")
    b = np.asarray(spec.param("sill"), dtype=float)
    u = (U - V)[:, 0]
    if spec.op == "pcv_power":
        return (2.0 * u / s**2)[:, None, None] * b[None, :, :]
    if spec.op == "pcv_bounded":
        q = (u / s) ** 2
        return (np.exp(-q) * 2.0 * u / s**2)[:, None, None] * b[None, :, :]
    raise SpecError(f"no closed-form temporal derivative for op {spec.op!r}")


def cm_derivative_cov(gamma: KernelSpec, cm: dict, mode: str = "closed") -> KernelSpec:
    """Covariance from a completely monotone function and temporal derivatives

    C_ij(h, u) = L(gamma_ij(h, u)) d^2_u gamma_ij(h, u)
                 + L'(gamma_ij(h, u)) (d_u gamma_ij(h, u))^2

    for a space-time pseudo-variogram twice differentiable in the (scalar)
    time lag. cm is {'kind': 'exp'} or {'kind': 'powerlaw', 'lam': > 0}.
    mode 'closed' requires a nested space-time gamma whose temporal part is
    in the smooth whitelist; 'numeric' differentiates any family.
    """
    _require_pcv(gamma, "cm_derivative_cov")
    if gamma.dim_time != 1:
        raise SpecError("cm_derivative_cov: gamma must have a scalar time lag")
    if not gamma.stationary:
        raise SpecError("cm_derivative_cov: gamma must be stationary")
    cm = dict(cm)
    if cm.get("kind") not in _CM_KINDS:
        raise SpecError(f"cm_derivative_cov: cm kind must be one of {_CM_KINDS}")
    if cm["kind"] == "powerlaw":
        lam = float(cm.get("lam", 0.0))
        if not lam > 0:
            raise SpecError("cm_derivative_cov: powerlaw needs lam > 0")
        cm["lam"] = lam
    if mode not in ("closed", "numeric"):
        raise SpecError(f"cm_derivative_cov: unknown mode {mode!r}")
    if mode == "closed":
        if gamma.op != "pcv_nested_spacetime" or not _closed_second_supported(
            gamma.children[1]
        ):
            raise SpecError("cm_derivative_cov: closed mode needs a nested space-time "
                            "model with a smooth-whitelist temporal part")
    return make_spec(
        "cm_derivative_cov", gamma.m, gamma.dim_space, 1,
        params={"cm": cm, "mode": mode}, children=(gamma,),
        kind=KernelKind.POSITIVE_DEFINITE,
    )


@register_evaluator("cm_derivative_cov")
def _eval_cm_derivative_cov(spec, X, Y):
    gamma = spec.children[0]
    d = spec.dim_space
    g = evaluate_pairs(gamma, X, Y)
    g = require_nonneg(g, spec.op, "pseudo-variogram values")
    Lv, Lp = _cm_values(spec.param_dict()["cm"], g)
    if spec.param("mode") == "closed":
        U, V = X[:, d:], Y[:, d:]
        temporal = gamma.children[1]
        d1 = _closed_temporal_first(temporal, U, V)
        d2 = _closed_second_partial(temporal, U, V, 0)
    else:
        u = np.abs(X[:, d] - Y[:, d])
        eps1 = _EPS ** (1.0 / 3.0) * (1.0 + u)
        Xp = X.copy(); Xp[:, d] += eps1
        Xm = X.copy(); Xm[:, d] -= eps1
        d1 = (evaluate_pairs(gamma, Xp, Y) - evaluate_pairs(gamma, Xm, Y)) / (
            2.0 * eps1[:, None, None]
        )
        d2, _ = _numeric_second_partial(gamma, X, Y, d)
    return Lv * d2 + Lp * d1**2


# ---------------------------------------------------------------------------
# isotropic descent and ratio families

_PROFILE_KINDS = ("identity", "one_mexp", "power_beta")


def isotropic_descent(m: int, dim_space: int, profile: str = "one_mexp",
                      beta: float = 0.5, sill: float = 1.0) -> KernelSpec:
    """Dimension-descent model C(h) = w * g'(||h||^2).

    g is a radial profile valid as an isotropic pseudo-variogram of the
    squared norm in every dimension:

    - 'identity':   g(t) = t,            C(h) = w
    - 'one_mexp':   g(t) = 1 - e^-t,     C(h) = w e^(-||h||^2)
    - 'power_beta': g(t) = (1+t)^beta-1, C(h) = w beta (1+||h||^2)^(beta-1)

    The derivative is the same for every component pair, so the result is the
    scalar profile replicated over an all-ones m x m matrix.
    """
    if profile not in _PROFILE_KINDS:
        raise SpecError(f"isotropic_descent: unknown profile {profile!r}")
    if profile == "power_beta" and not 0.0 < beta <= 1.0:
        raise SpecError("isotropic_descent: beta must be in (0, 1]")
    if not sill > 0:
        raise SpecError("isotropic_descent: sill must be > 0")
    return make_spec(
        "isotropic_descent", m, dim_space, 0,
        params={"profile": profile, "beta": float(beta), "sill": float(sill)},
        kind=KernelKind.POSITIVE_DEFINITE,
    )


@register_evaluator("isotropic_descent")
def _eval_isotropic_descent(spec, X, Y):
    t = np.sum((X - Y) ** 2, axis=1)
    profile = spec.param("profile")
    if profile == "identity":
        prof = np.ones_like(t)
    elif profile == "one_mexp":
        prof = np.exp(-t)
    else:
        beta = spec.param("beta")
        prof = beta * np.power(1.0 + t, beta - 1.0)
    prof = spec.param("sill") * prof
    return prof[:, None, None] * np.ones((spec.m, spec.m))[None, :, :]


def infdiv_ratio(gamma: KernelSpec, a: float, b: float) -> KernelSpec:
    """Rational ratio C = (1 + b*gamma) / (1 + a*gamma), 0 <= b <= a.

    Positive definite with every Hadamard power positive definite
    (infinitely divisible) exactly when a >= b.
    """
    _require_pcv(gamma, "infdiv_ratio")
    if not a > 0:
        raise SpecError(f"infdiv_ratio: a must be > 0, got {a}")
    if not 0.0 <= b <= a:
        raise SpecError(f"infdiv_ratio: need 0 <= b <= a, got b={b}, a={a}")
    return make_spec(
        "infdiv_ratio", gamma.m, gamma.dim_space, gamma.dim_time,
        params={"a": float(a), "b": float(b)}, children=(gamma,),
        kind=KernelKind.POSITIVE_DEFINITE, infinitely_divisible=True,
        stationary=gamma.stationary,
    )


@register_evaluator("infdiv_ratio")
def _eval_infdiv(spec, X, Y):
    g = evaluate_pairs(spec.children[0], X, Y)
    g = require_nonneg(g, spec.op, "pseudo-variogram values")
    return (1.0 + spec.param("b") * g) / (1.0 + spec.param("a") * g)


def hadamard_power(child: KernelSpec, r: float) -> KernelSpec:
    """Entrywise power C^r for r > 0.

    Carries a PD claim only when the child is flagged infinitely divisible;
    otherwise the result is unvalidated (fractional entrywise powers of a
    merely PD kernel need not be PD). Entries must be positive at evaluation.
    """
    if not r > 0:
        raise SpecError(f"hadamard_power: r must be > 0, got {r}")
    kind = (KernelKind.POSITIVE_DEFINITE if child.infinitely_divisible
            else KernelKind.UNVALIDATED)
    return make_spec(
        "hadamard_power", child.m, child.dim_space, child.dim_time,
        params={"r": float(r)}, children=(child,), kind=kind,
        infinitely_divisible=child.infinitely_divisible,
        stationary=child.stationary,
    )


@register_evaluator("hadamard_power")
def _eval_hadamard(spec, X, Y):
    c = evaluate_pairs(spec.children[0], X, Y)
    if float(c.min()) <= 0.0:
        raise EvaluationError("hadamard_power: entries must be positive")
    return np.power(c, spec.param("r"))


def cosh_ratio(gamma: KernelSpec, nu: float) -> KernelSpec:
    """Hyperbolic-cosine ratio C = cosh(nu sqrt(gamma)) / cosh(sqrt(gamma)).

    Requires nu in [0, 1] and entrywise nonnegative gamma. Infinitely
    divisible; the zero-product expansion over the cosh zeros
    alpha_n = pi (n - 1/2) expresses it as a limit of rational ratios.
    """
    _require_pcv(gamma, "cosh_ratio")
    if not 0.0 <= nu <= 1.0:
        raise SpecError(f"cosh_ratio: nu must be in [0, 1], got {nu}")
    return make_spec(
        "cosh_ratio", gamma.m, gamma.dim_space, gamma.dim_time,
        params={"nu": float(nu)}, children=(gamma,),
        kind=KernelKind.POSITIVE_DEFINITE, infinitely_divisible=True,
        stationary=gamma.stationary,
    )


@register_evaluator("cosh_ratio")
def _eval_cosh_ratio(spec, X, Y):
    g = evaluate_pairs(spec.children[0], X, Y)
    g = require_nonneg(g, spec.op, "pseudo-variogram values")
    nu = spec.param("nu")
    r = np.sqrt(g)
    # overflow-safe form of cosh(nu r)/cosh(r)
    return np.exp((nu - 1.0) * r) * (1.0 + np.exp(-2.0 * nu * r)) / (1.0 + np.exp(-2.0 * r))


def cosh_zero_product(gamma_values, nu: float, n_terms: int = 200,
                      tail_correction: bool = False) -> np.ndarray:
    """Partial zero-product approximation of the cosh ratio.

    prod_{n=1}^{N} (1 + nu^2 g / alpha_n^2) / (1 + g / alpha_n^2),
    alpha_n = pi (n - 1/2).

    With tail_correction=True the first-order tail
    exp((nu^2 - 1) g psi'(N + 1/2) / pi^2) is multiplied on, which extends
    1e-6 agreement with the closed form to moderate g.
    """
    g = np.asarray(gamma_values, dtype=float)
    n = np.arange(1, n_terms + 1)
    alpha2 = (np.pi * (n - 0.5)) ** 2
    num = 1.0 + nu**2 * g[..., None] / alpha2
    den = 1.0 + g[..., None] / alpha2
    out = np.prod(num / den, axis=-1)
    if tail_correction:
        tail = (nu**2 - 1.0) * g * float(_sp.polygamma(1, n_terms + 0.5)) / np.pi**2
        out = out * np.exp(tail)
    return out
