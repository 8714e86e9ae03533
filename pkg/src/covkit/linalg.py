"""Special functions and dense symmetric linear algebra used by every construction.

Scalar special functions are thin, domain-checked wrappers over scipy.special;
array variants (suffix ``_arr``) skip per-call scalar validation and are what the
kernel evaluators use internally.
"""

from __future__ import annotations

import math
import sys
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from .errors import DomainError, NotPositiveSemidefiniteError

__all__ = [
    "bessel_k",
    "exp_integral_ei",
    "log_gamma",
    "beta",
    "SymMatrix",
    "EigenResult",
    "min_eigenvalue",
    "cholesky_jittered",
    "UnderflowWarning",
]

# beyond this argument K_nu underflows to zero in double precision for the
# supported order range
_KV_UNDERFLOW_X = 750.0


class UnderflowWarning(RuntimeWarning):
    """Signals that a special function underflowed and zero was returned."""


def bessel_k(nu: float, x: float) -> float:
    """Modified Bessel function of the second kind K_nu(x).

    Parameters
    ----------
    nu : float
        Order, nu >= 0.
    x : float
        Argument, x > 0.

    Returns
    -------
    float
        K_nu(x). For x large enough that the value underflows double
        precision, returns 0.0 and emits :class:`UnderflowWarning`.

    Raises
    ------
    DomainError
        If x <= 0 or nu < 0, or the inputs are not finite.
    """
    nu = float(nu)
    x = float(x)
    if not math.isfinite(nu) or not math.isfinite(x):
        raise DomainError(f"bessel_k: non-finite input nu={nu}, x={x}")
    if nu < 0.0:
        raise DomainError(f"bessel_k: order must be >= 0, got {nu}")
    if x <= 0.0:
        raise DomainError(f"bessel_k: argument must be > 0, got {x}")
    if 0.0 < nu < sys.float_info.min:
        nu = 0.0  # scipy's kv yields NaN for subnormal orders; K is K_0 there
    val = float(_sp.kv(nu, x))
    if val == 0.0 and x > _KV_UNDERFLOW_X:
        warnings.warn(
            f"bessel_k underflow: K_{nu}({x}) below double-precision range",
            UnderflowWarning,
            stacklevel=2,
        )
        return 0.0
    return val


def bessel_k_arr(nu, x):
    """Vectorized K_nu(x) without the scalar domain ceremony (internal)."""
    nu = np.asarray(nu, dtype=float)
    nu = np.where((nu > 0.0) & (nu < sys.float_info.min), 0.0, nu)
    return _sp.kv(nu, x)


def exp_integral_ei(x: float) -> float:
    """Exponential integral Ei(x) (principal value for x > 0).

    Raises
    ------
    DomainError
        If x == 0 (logarithmic singularity) or x is not finite.
    """
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"exp_integral_ei: non-finite input {x}")
    if x == 0.0:
        raise DomainError("exp_integral_ei: Ei has a logarithmic singularity at 0")
    return float(_sp.expi(x))


def expi_arr(x):
    """Vectorized Ei (internal)."""
    return _sp.expi(x)


def log_gamma(x: float) -> float:
    """log Gamma(x) for x > 0."""
    x = float(x)
    if not (x > 0.0) or not math.isfinite(x):
        raise DomainError(f"log_gamma: argument must be a finite positive real, got {x}")
    return float(_sp.gammaln(x))


def beta(a: float, b: float) -> float:
    """Euler beta function B(a, b) for a, b > 0."""
    a = float(a)
    b = float(b)
    if not (a > 0.0 and b > 0.0) or not (math.isfinite(a) and math.isfinite(b)):
        raise DomainError(f"beta: arguments must be finite positive reals, got ({a}, {b})")
    return float(math.exp(_sp.betaln(a, b)))


def beta_arr(a, b):
    """Vectorized beta function (internal)."""
    return np.exp(_sp.betaln(a, b))


class SymMatrix:
    """Dense symmetric real matrix with enforced exact symmetry.

    The stored array is (A + A.T)/2 of the input; because IEEE addition is
    commutative this makes entries[i, j] == entries[j, i] bitwise.
    """

    __slots__ = ("entries",)

    def __init__(self, entries):
        a = np.asarray(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DomainError(f"SymMatrix: expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DomainError("SymMatrix: entries must be finite")
        a = (a + a.T) / 2.0
        a.setflags(write=False)
        self.entries = a

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    def __repr__(self):
        return f"SymMatrix(order={self.order})"


@dataclass(frozen=True)
class EigenResult:
    """Extreme-eigenvalue summary of a symmetric matrix."""

    min_eigenvalue: float
    max_abs_eigenvalue: float


def min_eigenvalue(matrix) -> EigenResult:
    """Smallest eigenvalue and spectral scale of a symmetric matrix.

    Accepts a :class:`SymMatrix` or an array (symmetrized on the way in).
    Uses the full symmetric eigensolver; the matrices handled here are small.
    """
    if isinstance(matrix, SymMatrix):
        a = matrix.entries
    else:
        a = SymMatrix(matrix).entries
    vals = np.linalg.eigvalsh(a)
    return EigenResult(
        min_eigenvalue=float(vals[0]),
        max_abs_eigenvalue=float(max(abs(vals[0]), abs(vals[-1]))),
    )


def cholesky_jittered(
    matrix,
    jitter_start: float | None = None,
    jitter_growth: float = 10.0,
    max_tries: int = 8,
):
    """Cholesky factorization with an escalating diagonal jitter.

    Attempts the plain factorization first, then adds j*I for
    j = jitter_start, jitter_start*growth, ... until it succeeds.

    Parameters
    ----------
    matrix : SymMatrix or array_like
        Symmetric matrix expected to be PSD up to roundoff.
    jitter_start : float, optional
        First nonzero jitter. Default: 1e-10 * trace / order (1e-10 if the
        trace is not positive).
    jitter_growth : float
        Multiplicative growth factor between attempts.
    max_tries : int
        Number of jittered attempts after the exact one.

    Returns
    -------
    (L, jitter) : (ndarray, float)
        Lower-triangular factor of matrix + jitter*I and the jitter used
        (0.0 when the plain factorization succeeded).

    Raises
    ------
    NotPositiveSemidefiniteError
        If every attempt fails; carries the minimum eigenvalue as diagnostic.
    """
    if isinstance(matrix, SymMatrix):
        a = matrix.entries
    else:
        a = SymMatrix(matrix).entries
    n = a.shape[0]
    if jitter_start is None:
        tr = float(np.trace(a))
        jitter_start = 1e-10 * tr / n if tr > 0.0 else 1e-10
    if jitter_start <= 0.0:
        raise DomainError(f"cholesky_jittered: jitter_start must be > 0, got {jitter_start}")
    if jitter_growth <= 1.0:
        raise DomainError(f"cholesky_jittered: jitter_growth must be > 1, got {jitter_growth}")
    if max_tries < 1:
        raise DomainError(f"cholesky_jittered: max_tries must be >= 1, got {max_tries}")

    jitters = [0.0] + [jitter_start * jitter_growth**i for i in range(max_tries)]
    eye = np.eye(n)
    for j in jitters:
        try:
            L = np.linalg.cholesky(a + j * eye)
            return L, j
        except np.linalg.LinAlgError:
            continue
    diag = min_eigenvalue(a)
    raise NotPositiveSemidefiniteError(
        f"cholesky_jittered: factorization failed after {max_tries} jittered attempts "
        f"(last jitter {jitters[-1]:.3e}); min eigenvalue {diag.min_eigenvalue:.6e}",
        min_eigenvalue=diag.min_eigenvalue,
    )
