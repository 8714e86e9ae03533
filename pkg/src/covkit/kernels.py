"""Kernel expression trees, block Gram assembly, and the basic families.

A model is an immutable :class:`KernelSpec` tree. Leaves are parametric
families; interior nodes are combinators or constructions. Every node carries
a validity claim (:class:`KernelKind`) that the constructors propagate; the
validation module is what actually certifies claims numerically.

Evaluation is batched: an evaluator receives arrays of point pairs of shape
(npairs, dim_space + dim_time) and returns an (npairs, m, m) stack, so Gram
assembly stays inside numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np

from .errors import DomainError, EvaluationError, SpecError
from .linalg import SymMatrix

__all__ = [
    "KernelKind",
    "KernelSpec",
    "PointSet",
    "BlockMatrix",
    "evaluate_block",
    "evaluate_pairs",
    "assemble_gram",
    "combine_sum",
    "combine_schur",
    "scale",
    "constant_shift",
    "zero_kernel",
    "constant_kernel",
    "exp_isotropic",
    "radial_profile_raw",
    "cross_variogram_lmc",
]


class KernelKind(str, Enum):
    """Validity claim attached to a model by its constructor."""

    POSITIVE_DEFINITE = "claimed_positive_definite"
    CONDITIONALLY_NEGATIVE_DEFINITE = "claimed_conditionally_negative_definite"
    PSEUDO_VARIOGRAM = "claimed_pseudo_variogram"
    UNVALIDATED = "unvalidated"


def _freeze(value):
    """Convert a parameter value to a hashable, immutable form."""
    if isinstance(value, np.ndarray):
        return _freeze(value.tolist())
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, dict):
        return tuple(sorted((str(k), _freeze(v)) for k, v in value.items()))
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    raise SpecError(f"unsupported parameter value of type {type(value).__name__}")


def _thaw(value):
    """Inverse-ish of _freeze for dict-shaped params (tuples of pairs)."""
    if isinstance(value, tuple) and value and all(
        isinstance(v, tuple) and len(v) == 2 and isinstance(v[0], str) for v in value
    ):
        return {k: _thaw(v) for k, v in value}
    if isinstance(value, tuple):
        return [_thaw(v) for v in value]
    return value


@dataclass(frozen=True)
class KernelSpec:
    """Immutable node of a model expression tree.

    Attributes
    ----------
    op : str
        Operation name; also the config-file tag.
    m : int
        Number of field components (output blocks are m x m).
    dim_space, dim_time : int
        Input domain is R^dim_space x R^dim_time.
    params : tuple
        Sorted (name, frozen_value) pairs.
    children : tuple of KernelSpec
    kind : KernelKind
        Validity claim, maintained by constructors.
    infinitely_divisible : bool
        True when every Hadamard power of the model is claimed PD.
    stationary : bool
        True when the model depends on (x, y) only through x - y.
    """

    op: str
    m: int
    dim_space: int
    dim_time: int
    params: tuple = ()
    children: tuple = ()
    kind: KernelKind = KernelKind.UNVALIDATED
    infinitely_divisible: bool = False
    stationary: bool = True

    def param(self, name: str, default=_freeze):
        for k, v in self.params:
            if k == name:
                return v
        if default is _freeze:
            raise KeyError(f"{self.op}: missing parameter {name!r}")
        return default

    def param_dict(self) -> dict:
        return {k: _thaw(v) for k, v in self.params}

    @property
    def dim(self) -> int:
        return self.dim_space + self.dim_time

    def __repr__(self):
        return (
            f"KernelSpec(op={self.op!r}, m={self.m}, d={self.dim_space}, "
            f"k={self.dim_time}, kind={self.kind.value})"
        )


def make_spec(op, m, dim_space, dim_time, params=None, children=(), kind=KernelKind.UNVALIDATED,
              infinitely_divisible=False, stationary=True) -> KernelSpec:
    """Build a KernelSpec with frozen parameters (constructor plumbing)."""
    if m < 1:
        raise SpecError(f"{op}: m must be >= 1, got {m}")
    if dim_space < 0 or dim_time < 0:
        raise SpecError(f"{op}: dimensions must be >= 0")
    if dim_space + dim_time < 1:
        raise SpecError(f"{op}: need at least one input dimension")
    frozen = tuple(sorted((str(k), _freeze(v)) for k, v in (params or {}).items()))
    return KernelSpec(
        op=op, m=int(m), dim_space=int(dim_space), dim_time=int(dim_time),
        params=frozen, children=tuple(children), kind=kind,
        infinitely_divisible=bool(infinitely_divisible), stationary=bool(stationary),
    )


def claims_pd(spec: KernelSpec) -> bool:
    """True when the spec's claim implies positive definiteness."""
    return spec.kind is KernelKind.POSITIVE_DEFINITE or spec.op == "zero"


def claims_cnd(spec: KernelSpec) -> bool:
    """True when the spec's claim implies conditional negative definiteness."""
    return spec.kind in (
        KernelKind.CONDITIONALLY_NEGATIVE_DEFINITE,
        KernelKind.PSEUDO_VARIOGRAM,
    )


def claims_pcv(spec: KernelSpec) -> bool:
    return spec.kind is KernelKind.PSEUDO_VARIOGRAM


# ---------------------------------------------------------------------------
# points and block matrices


class PointSet:
    """Locations in R^dim_space x R^dim_time, stored as an (n, d+k) array."""

    __slots__ = ("points", "dim_space", "dim_time")

    def __init__(self, points, dim_space: int, dim_time: int = 0):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if dim_space < 0 or dim_time < 0 or dim_space + dim_time < 1:
            raise DomainError("PointSet: invalid dimension split")
        if pts.ndim != 2 or pts.shape[1] != dim_space + dim_time:
            raise DomainError(
                f"PointSet: expected shape (n, {dim_space + dim_time}), got {pts.shape}"
            )
        if pts.shape[0] < 1:
            raise DomainError("PointSet: need at least one point")
        if not np.all(np.isfinite(pts)):
            raise DomainError("PointSet: coordinates must be finite")
        pts = pts.copy()
        pts.setflags(write=False)
        self.points = pts
        self.dim_space = int(dim_space)
        self.dim_time = int(dim_time)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def spatial(self) -> np.ndarray:
        return self.points[:, : self.dim_space]

    def temporal(self) -> np.ndarray:
        return self.points[:, self.dim_space :]

    def __repr__(self):
        return f"PointSet(n={self.n}, d={self.dim_space}, k={self.dim_time})"


class BlockMatrix:
    """Gram matrix of an m-variate kernel on n points.

    Entry ((i-1)*m + p, (j-1)*m + q) of the dense matrix (1-based) is
    K_pq(x_i, x_j).
    """

    __slots__ = ("n", "m", "dense")

    def __init__(self, dense: SymMatrix, n: int, m: int):
        if dense.order != n * m:
            raise DomainError(
                f"BlockMatrix: order {dense.order} does not match n*m = {n * m}"
            )
        self.dense = dense
        self.n = int(n)
        self.m = int(m)

    def block(self, i: int, j: int) -> np.ndarray:
        """m x m block for the point pair (i, j), 0-based."""
        m = self.m
        return self.dense.entries[i * m : (i + 1) * m, j * m : (j + 1) * m]


# ---------------------------------------------------------------------------
# evaluation

EVALUATORS: dict[str, Callable[[KernelSpec, np.ndarray, np.ndarray], np.ndarray]] = {}


def register_evaluator(op: str):
    def deco(fn):
        EVALUATORS[op] = fn
        return fn
    return deco


def evaluate_pairs(spec: KernelSpec, X, Y) -> np.ndarray:
    """Evaluate the kernel on batched point pairs.

    X and Y have shape (npairs, dim_space + dim_time); the result has shape
    (npairs, m, m) with entry [r, p, q] = K_pq(X[r], Y[r]).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape != Y.shape or X.shape[1] != spec.dim:
        raise EvaluationError(
            f"{spec.op}: pair arrays must both have shape (npairs, {spec.dim}); "
            f"got {X.shape} and {Y.shape}"
        )
    try:
        fn = EVALUATORS[spec.op]
    except KeyError:
        raise EvaluationError(f"no evaluator registered for op {spec.op!r}") from None
    out = fn(spec, X, Y)
    if not np.all(np.isfinite(out)):
        bad = int(np.argwhere(~np.isfinite(out))[0][0])
        raise EvaluationError(
            f"{spec.op}: non-finite value at pair x={X[bad]}, y={Y[bad]}"
        )
    return out


def evaluate_block(spec: KernelSpec, x, y) -> np.ndarray:
    """Single m x m block K(x, y)."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    return evaluate_pairs(spec, x, y)[0]


def assemble_gram(spec: KernelSpec, pts: PointSet) -> BlockMatrix:
    """Dense block Gram matrix on a point set.

    All n^2 blocks are evaluated in one batch and the result is exactly
    symmetrized by averaging with the transposed evaluation, so analytic
    symmetry survives roundoff bitwise.
    """
    if (pts.dim_space, pts.dim_time) != (spec.dim_space, spec.dim_time):
        raise EvaluationError(
            f"{spec.op}: point set dimensions (d={pts.dim_space}, k={pts.dim_time}) "
            f"do not match the model (d={spec.dim_space}, k={spec.dim_time})"
        )
    n, m = pts.n, spec.m
    P = pts.points
    X = np.repeat(P, n, axis=0)
    Y = np.tile(P, (n, 1))
    blocks = evaluate_pairs(spec, X, Y).reshape(n, n, m, m)
    dense = blocks.transpose(0, 2, 1, 3).reshape(n * m, n * m)
    return BlockMatrix(SymMatrix(dense), n, m)


def _child_pairs(spec, X, Y, child):
    """Evaluate a child that lives on the same domain."""
    return evaluate_pairs(child, X, Y)


def require_nonneg(values: np.ndarray, op: str, what: str = "entries") -> np.ndarray:
    """Clamp a tiny negative dead band to zero; raise on genuine negatives."""
    lo = float(values.min()) if values.size else 0.0
    if lo < -1e-12:
        raise EvaluationError(f"{op}: {what} must be nonnegative, found {lo:.6e}")
    return np.maximum(values, 0.0)


# ---------------------------------------------------------------------------
# claim propagation for the generic combinators


def _sum_kind(children):
    # the zero kernel is simultaneously PD and a pseudo-variogram, so it never
    # weakens a sum's claim
    ks = {c.kind for c in children if c.op != "zero"}
    if not ks:
        return KernelKind.PSEUDO_VARIOGRAM
    if ks == {KernelKind.POSITIVE_DEFINITE}:
        return KernelKind.POSITIVE_DEFINITE
    if ks == {KernelKind.PSEUDO_VARIOGRAM}:
        return KernelKind.PSEUDO_VARIOGRAM
    if ks <= {KernelKind.PSEUDO_VARIOGRAM, KernelKind.CONDITIONALLY_NEGATIVE_DEFINITE}:
        return KernelKind.CONDITIONALLY_NEGATIVE_DEFINITE
    return KernelKind.UNVALIDATED


def _same_shape(op, children):
    if not children:
        raise SpecError(f"{op}: needs at least one child")
    m, d, k = children[0].m, children[0].dim_space, children[0].dim_time
    for c in children[1:]:
        if (c.m, c.dim_space, c.dim_time) != (m, d, k):
            raise SpecError(f"{op}: children must share m and input dimensions")
    return m, d, k


def combine_sum(*children: KernelSpec) -> KernelSpec:
    """Sum of models; PD, pseudo-variogram, and CND claims are cone-stable."""
    m, d, k = _same_shape("sum", children)
    return make_spec(
        "sum", m, d, k, children=children,
        kind=_sum_kind(children),
        stationary=all(c.stationary for c in children),
    )


def combine_schur(*children: KernelSpec) -> KernelSpec:
    """Entrywise (Schur) product; only a PD x PD product keeps a claim."""
    m, d, k = _same_shape("schur_product", children)
    all_pd = all(claims_pd(c) for c in children)
    return make_spec(
        "schur_product", m, d, k, children=children,
        kind=KernelKind.POSITIVE_DEFINITE if all_pd else KernelKind.UNVALIDATED,
        infinitely_divisible=all(c.infinitely_divisible for c in children),
        stationary=all(c.stationary for c in children),
    )


def scale(child: KernelSpec, factor: float) -> KernelSpec:
    """Positive scalar multiple; preserves every claim."""
    if not factor > 0:
        raise SpecError(f"scale: factor must be > 0, got {factor}")
    return make_spec(
        "scale", child.m, child.dim_space, child.dim_time,
        params={"factor": float(factor)}, children=(child,), kind=child.kind,
        infinitely_divisible=child.infinitely_divisible, stationary=child.stationary,
    )


def constant_shift(child: KernelSpec, value: float) -> KernelSpec:
    """Add value * ones(m, m).

    A nonnegative shift keeps a PD claim (rank-one PSD update). Any real shift
    keeps CND (the shifted quadratic form is unchanged on the constraint set),
    but the pseudo-variogram claim is lost for value != 0 because the diagonal
    no longer vanishes.
    """
    value = float(value)
    if claims_cnd(child):
        kind = KernelKind.CONDITIONALLY_NEGATIVE_DEFINITE
        if value == 0.0 and claims_pcv(child):
            kind = KernelKind.PSEUDO_VARIOGRAM
    elif claims_pd(child) and value >= 0.0:
        kind = KernelKind.POSITIVE_DEFINITE
    else:
        kind = KernelKind.UNVALIDATED
    return make_spec(
        "constant_shift", child.m, child.dim_space, child.dim_time,
        params={"value": value}, children=(child,), kind=kind,
        stationary=child.stationary,
    )


@register_evaluator("sum")
def _eval_sum(spec, X, Y):
    out = evaluate_pairs(spec.children[0], X, Y)
    for c in spec.children[1:]:
        out = out + evaluate_pairs(c, X, Y)
    return out


@register_evaluator("schur_product")
def _eval_schur(spec, X, Y):
    out = evaluate_pairs(spec.children[0], X, Y)
    for c in spec.children[1:]:
        out = out * evaluate_pairs(c, X, Y)
    return out


@register_evaluator("scale")
def _eval_scale(spec, X, Y):
    return spec.param("factor") * evaluate_pairs(spec.children[0], X, Y)


@register_evaluator("constant_shift")
def _eval_shift(spec, X, Y):
    return evaluate_pairs(spec.children[0], X, Y) + spec.param("value")


# ---------------------------------------------------------------------------
# basic leaves


def zero_kernel(m: int, dim_space: int, dim_time: int = 0) -> KernelSpec:
    """Identically zero model; trivially PSD and a pseudo-variogram."""
    return make_spec("zero", m, dim_space, dim_time, kind=KernelKind.PSEUDO_VARIOGRAM)


@register_evaluator("zero")
def _eval_zero(spec, X, Y):
    return np.zeros((X.shape[0], spec.m, spec.m))


def constant_kernel(m: int, dim_space: int, value: float, dim_time: int = 0) -> KernelSpec:
    """value * ones(m, m) everywhere; PD claim requires value >= 0."""
    value = float(value)
    if value < 0.0:
        raise SpecError(f"constant: value must be >= 0 for a PD claim, got {value}")
    return make_spec(
        "constant", m, dim_space, dim_time, params={"value": value},
        kind=KernelKind.POSITIVE_DEFINITE, infinitely_divisible=True,
    )


@register_evaluator("constant")
def _eval_constant(spec, X, Y):
    return np.full((X.shape[0], spec.m, spec.m), spec.param("value"))


def _check_psd_matrix(name, mat, m):
    a = np.asarray(mat, dtype=float)
    if a.shape != (m, m):
        raise SpecError(f"{name}: expected an {m}x{m} matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
        raise SpecError(f"{name}: matrix must be symmetric")
    vals = np.linalg.eigvalsh((a + a.T) / 2.0)
    scale_ = max(abs(vals[0]), abs(vals[-1]), 1e-300)
    if vals[0] < -1e-10 * scale_:
        raise SpecError(f"{name}: matrix must be PSD (min eigenvalue {vals[0]:.3e})")
    return (a + a.T) / 2.0


def exp_isotropic(m: int, dim_space: int, alpha: float = 1.0, scale_len: float = 1.0,
                  rho=None, dim_time: int = 0) -> KernelSpec:
    """Powered-exponential model C_ij(x, y) = rho_ij * exp(-||(x-y)/s||^alpha).

    Parameters
    ----------
    alpha : float
        Exponent in (0, 2].
    scale_len : float
        Length scale s > 0.
    rho : array_like, optional
        PSD co-sill matrix; defaults to all ones (full correlation).
    """
    if not 0.0 < alpha <= 2.0:
        raise SpecError(f"exp_isotropic: alpha must be in (0, 2], got {alpha}")
    if not scale_len > 0:
        raise SpecError(f"exp_isotropic: scale must be > 0, got {scale_len}")
    if rho is None:
        rho = np.ones((m, m))
    rho = _check_psd_matrix("exp_isotropic", rho, m)
    return make_spec(
        "exp_isotropic", m, dim_space, dim_time,
        params={"alpha": float(alpha), "scale": float(scale_len), "rho": rho},
        kind=KernelKind.POSITIVE_DEFINITE,
    )


@register_evaluator("exp_isotropic")
def _eval_exp_isotropic(spec, X, Y):
    alpha = spec.param("alpha")
    s = spec.param("scale")
    rho = np.asarray(spec.param("rho"), dtype=float)
    r = np.linalg.norm((X - Y) / s, axis=1)
    prof = np.exp(-np.power(r, alpha))
    return prof[:, None, None] * rho[None, :, :]


def radial_profile_raw(m: int, dim_space: int, profile: str, alpha: float = 1.0,
                       fill: str = "ones", dim_time: int = 0) -> KernelSpec:
    """Unchecked radial model for validation experiments; carries no claim.

    profile: 'power' (||h||^alpha, any alpha > 0), 'one_minus' (1 - ||h||),
    or 'sin' (sin ||h||). fill: 'ones' replicates the profile over every
    entry, 'diag' puts it on the diagonal blocks only.
    """
    if profile not in ("power", "one_minus", "sin"):
        raise SpecError(f"radial_profile_raw: unknown profile {profile!r}")
    if profile == "power" and not alpha > 0:
        raise SpecError("radial_profile_raw: alpha must be > 0")
    if fill not in ("ones", "diag"):
        raise SpecError(f"radial_profile_raw: unknown fill {fill!r}")
    return make_spec(
        "radial_profile_raw", m, dim_space, dim_time,
        params={"profile": profile, "alpha": float(alpha), "fill": fill},
        kind=KernelKind.UNVALIDATED,
    )


@register_evaluator("radial_profile_raw")
def _eval_radial_raw(spec, X, Y):
    r = np.linalg.norm(X - Y, axis=1)
    profile = spec.param("profile")
    if profile == "power":
        prof = np.power(r, spec.param("alpha"))
    elif profile == "one_minus":
        prof = 1.0 - r
    else:
        prof = np.sin(r)
    base = np.ones((spec.m, spec.m)) if spec.param("fill") == "ones" else np.eye(spec.m)
    return prof[:, None, None] * base[None, :, :]


def cross_variogram_lmc(m: int, dim_space: int, base: str = "gauss_bounded",
                        alpha: float = 1.0, scale_len: float = 1.0, rho=None) -> KernelSpec:
    """Cross-variogram of a linear-model-of-coregionalization field.

    gamma~_ij(h) = rho_ij * g0(h) with rho PSD and g0 a univariate variogram
    ('power' ||h/s||^alpha, 'gauss_bounded' 1-exp(-||h/s||^2), or
    'exp_bounded' 1-exp(-||h/s||)). This is a valid cross-variogram but not a
    pseudo-variogram, so it carries no definiteness claim; feed it to
    pcv_from_cross_variogram.
    """
    if base not in ("power", "gauss_bounded", "exp_bounded"):
        raise SpecError(f"cross_variogram_lmc: unknown base {base!r}")
    if base == "power" and not 0 < alpha <= 2:
        raise SpecError("cross_variogram_lmc: alpha must be in (0, 2]")
    if not scale_len > 0:
        raise SpecError("cross_variogram_lmc: scale must be > 0")
    if rho is None:
        rho = np.ones((m, m))
    rho = _check_psd_matrix("cross_variogram_lmc", rho, m)
    return make_spec(
        "cross_variogram_lmc", m, dim_space, 0,
        params={"base": base, "alpha": float(alpha), "scale": float(scale_len), "rho": rho},
        kind=KernelKind.UNVALIDATED,
    )


@register_evaluator("cross_variogram_lmc")
def _eval_cross_vario(spec, X, Y):
    s = spec.param("scale")
    r = np.linalg.norm((X - Y) / s, axis=1)
    base = spec.param("base")
    if base == "power":
        prof = np.power(r, spec.param("alpha"))
    elif base == "gauss_bounded":
        prof = -np.expm1(-(r**2))
    else:
        prof = -np.expm1(-r)
    rho = np.asarray(spec.param("rho"), dtype=float)
    return prof[:, None, None] * rho[None, :, :]
