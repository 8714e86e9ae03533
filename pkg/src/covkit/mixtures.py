"""Laplace-transform records and quadrature mixture measures.

These are the parametric ingredients the covariance constructions mix over:

- 1-D Laplace transforms of probability measures on [0, inf) from a small
  whitelist (point mass, exponential, gamma, generalized inverse Gaussian);
- discrete 2-D (and 1-D) mixture measures given by quadrature nodes, weights
  and a matrix-valued density whose value must be PSD at every node.

Everything is plain data (dict-shaped), so specs stay hashable and configs
serialize to JSON without custom hooks.
"""

from __future__ import annotations

import numpy as np

from .errors import SpecError
from .linalg import bessel_k_arr

__all__ = [
    "laplace_record",
    "laplace_eval",
    "laplace2d_record",
    "laplace2d_eval",
    "mixture_nodes",
    "mixture_gauss_legendre_2d",
    "density_eval",
    "validate_density_psd",
]


# ---------------------------------------------------------------------------
# 1-D Laplace transforms of nonnegative random variables

_LAPLACE_KINDS = ("point_mass", "exponential", "gamma", "gig")


def laplace_record(kind: str, **kw) -> dict:
    """Build a whitelisted Laplace-transform record.

    - 'point_mass': L(x) = 1 (unit mass at 0)
    - 'exponential', rate a > 0: L(x) = (1 + x/a)^-1
    - 'gamma', shape lam > 0, rate a > 0: L(x) = (1 + x/a)^-lam
    - 'gig', p, a > 0, b > 0 (density ~ x^{p-1} e^{-(a x + b/x)/2}):
      L(x) = (a/(a+2x))^{p/2} K_p(sqrt(b(a+2x))) / K_p(sqrt(a b))
    """
    if kind == "point_mass":
        if kw:
            raise SpecError("laplace_record: point_mass takes no parameters")
        return {"kind": "point_mass"}
    if kind == "exponential":
        a = float(kw.pop("rate"))
        if kw or not a > 0:
            raise SpecError("laplace_record: exponential needs rate > 0")
        return {"kind": "exponential", "rate": a}
    if kind == "gamma":
        lam = float(kw.pop("shape"))
        a = float(kw.pop("rate"))
        if kw or not (lam > 0 and a > 0):
            raise SpecError("laplace_record: gamma needs shape > 0 and rate > 0")
        return {"kind": "gamma", "shape": lam, "rate": a}
    if kind == "gig":
        p = float(kw.pop("p"))
        a = float(kw.pop("a"))
        b = float(kw.pop("b"))
        if kw or not (a > 0 and b > 0):
            raise SpecError("laplace_record: gig needs a > 0 and b > 0")
        return {"kind": "gig", "p": p, "a": a, "b": b}
    raise SpecError(f"laplace_record: unknown kind {kind!r}; use one of {_LAPLACE_KINDS}")


def laplace_eval(record: dict, x: np.ndarray) -> np.ndarray:
    """Evaluate a 1-D transform record on nonnegative arguments."""
    kind = record["kind"]
    x = np.asarray(x, dtype=float)
    if kind == "point_mass":
        return np.ones_like(x)
    if kind == "exponential":
        return 1.0 / (1.0 + x / record["rate"])
    if kind == "gamma":
        return np.power(1.0 + x / record["rate"], -record["shape"])
    if kind == "gig":
        p, a, b = record["p"], record["a"], record["b"]
        denom = bessel_k_arr(abs(p), np.sqrt(a * b))
        return (
            np.power(a / (a + 2.0 * x), p / 2.0)
            * bessel_k_arr(abs(p), np.sqrt(b * (a + 2.0 * x)))
            / denom
        )
    raise SpecError(f"laplace_eval: unknown kind {kind!r}")


def laplace2d_record(lx: dict, ly: dict) -> dict:
    """Product transform L(x, y) = Lx(x) * Ly(y) of two whitelisted records."""
    for r in (lx, ly):
        if r.get("kind") not in _LAPLACE_KINDS:
            raise SpecError(f"laplace2d_record: bad component record {r!r}")
    return {"kind": "product", "lx": dict(lx), "ly": dict(ly)}


def laplace2d_eval(record: dict, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if record["kind"] != "product":
        raise SpecError(f"laplace2d_eval: unknown kind {record['kind']!r}")
    return laplace_eval(record["lx"], x) * laplace_eval(record["ly"], y)


# ---------------------------------------------------------------------------
# discrete mixtures with matrix densities

_DENSITY_KINDS = ("common", "constant_psd", "toy_hessian")
_BASE_KINDS = ("uniform", "expexp", "poly_exp")


def _base_density_eval(base: dict, nodes: np.ndarray) -> np.ndarray:
    kind = base["kind"]
    if kind == "uniform":
        return np.ones(nodes.shape[0])
    if kind == "expexp":
        a, b = base["a"], base.get("b", 0.0)
        if nodes.shape[1] == 1:
            return np.exp(-a * nodes[:, 0])
        return np.exp(-a * nodes[:, 0] - b * nodes[:, 1])
    if kind == "poly_exp":
        a, b = base["a"], base.get("b", 0.0)
        p, q = base.get("p", 0.0), base.get("q", 0.0)
        out = np.power(nodes[:, 0], p) * np.exp(-a * nodes[:, 0])
        if nodes.shape[1] == 2:
            out = out * np.power(nodes[:, 1], q) * np.exp(-b * nodes[:, 1])
        return out
    raise SpecError(f"unknown base density kind {kind!r}")


def density_eval(density: dict, nodes: np.ndarray, m: int) -> np.ndarray:
    """Matrix density values f(node) as an (R, m, m) stack.

    - 'common': scalar base density replicated over all entries (rank-one
      validity is automatic);
    - 'constant_psd': F_ij * base(node) with F a constant PSD matrix;
    - 'toy_hessian': the 2x2 Hessian of f(v, w) = v^2/w, supported on (1, 2)^2.
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    kind = density["kind"]
    if kind == "common":
        vals = _base_density_eval(density["base"], nodes)
        return vals[:, None, None] * np.ones((m, m))[None, :, :]
    if kind == "constant_psd":
        F = np.asarray(density["matrix"], dtype=float)
        if F.shape != (m, m):
            raise SpecError(f"density matrix must be {m}x{m}, got {F.shape}")
        vals = _base_density_eval(density["base"], nodes)
        return vals[:, None, None] * F[None, :, :]
    if kind == "toy_hessian":
        if m != 2:
            raise SpecError("toy_hessian density is 2x2")
        v, w = nodes[:, 0], nodes[:, 1]
        inside = ((v > 1.0) & (v < 2.0) & (w > 1.0) & (w < 2.0)).astype(float)
        out = np.empty((nodes.shape[0], 2, 2))
        out[:, 0, 0] = 2.0 / w
        out[:, 0, 1] = -2.0 * v / w**2
        out[:, 1, 0] = out[:, 0, 1]
        out[:, 1, 1] = 2.0 * v**2 / w**3
        return out * inside[:, None, None]
    raise SpecError(f"unknown density kind {kind!r}; use one of {_DENSITY_KINDS}")


def validate_density_psd(density: dict, nodes: np.ndarray, m: int) -> None:
    """Require the density matrix to be PSD at every quadrature node.

    This node-wise check is the certified scope of the mixture constructions;
    PSD between nodes is the caller's modelling assumption.
    """
    vals = density_eval(density, nodes, m)
    sym = (vals + np.swapaxes(vals, 1, 2)) / 2.0
    eigs = np.linalg.eigvalsh(sym)
    scale = max(float(np.abs(eigs).max()), 1e-300)
    worst = float(eigs[..., 0].min())
    if worst < -1e-10 * scale:
        r = int(np.argwhere(eigs[..., 0] == eigs[..., 0].min())[0][0])
        raise SpecError(
            f"density matrix not PSD at node {nodes[r]}: min eigenvalue {worst:.6e}"
        )


def mixture_nodes(nodes, weights, density: dict) -> dict:
    """Assemble and validate a discrete mixture record.

    nodes: (R, 1) or (R, 2) array of quadrature abscissae (entries >= 0);
    weights: R positive quadrature weights; density: see density_eval.
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if nodes.ndim != 2 or nodes.shape[1] not in (1, 2):
        raise SpecError(f"mixture: nodes must be (R, 1) or (R, 2), got {nodes.shape}")
    if weights.shape[0] != nodes.shape[0]:
        raise SpecError("mixture: weights length must match node count")
    if np.any(weights <= 0.0):
        raise SpecError("mixture: weights must be positive")
    if np.any(nodes < 0.0):
        raise SpecError("mixture: nodes must be nonnegative")
    if density["kind"] not in _DENSITY_KINDS:
        raise SpecError(f"mixture: unknown density kind {density['kind']!r}")
    return {
        "nodes": nodes.tolist(),
        "weights": weights.tolist(),
        "density": dict(density),
    }


def mixture_gauss_legendre_2d(box, n_nodes: int, density: dict) -> dict:
    """Tensor Gauss-Legendre mixture on a rectangle [v0,v1] x [w0,w1]."""
    (v0, v1), (w0, w1) = box
    if not (v1 > v0 >= 0.0 and w1 > w0 >= 0.0):
        raise SpecError("mixture: box must satisfy 0 <= lo < hi on both axes")
    if n_nodes < 1:
        raise SpecError("mixture: n_nodes must be >= 1")
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    nv = (v1 - v0) / 2.0 * x + (v1 + v0) / 2.0
    nw = (w1 - w0) / 2.0 * x + (w1 + w0) / 2.0
    wv = (v1 - v0) / 2.0 * w
    ww = (w1 - w0) / 2.0 * w
    V, W = np.meshgrid(nv, nw, indexing="ij")
    WV, WW = np.meshgrid(wv, ww, indexing="ij")
    nodes = np.column_stack([V.ravel(), W.ravel()])
    weights = (WV * WW).ravel()
    return mixture_nodes(nodes, weights, density)


def mixture_arrays(mix: dict):
    """Nodes, weights, density back as arrays (internal)."""
    return (
        np.asarray(mix["nodes"], dtype=float),
        np.asarray(mix["weights"], dtype=float),
        mix["density"],
    )
