"""Declarative JSON model configs.

A config document is

    {"m": int, "dim_space": int, "dim_time": int, "model": <node>}

where a node is {"op": <name>, "params": {...}, "children": [<node>, ...]}.
Parsing validates every parameter through the same constructors used from
Python, so a document that parses always yields a fully claimed KernelSpec;
serialization inverts parsing up to structural equality of the spec tree.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .errors import ConfigError, SpecError
from . import kernels as K
from . import pseudo as P
from . import stationary as S
from . import nonstationary as N

__all__ = [
    "parse_model",
    "serialize_model",
    "canonical_json",
    "config_hash",
    "load_model_file",
]


def _to_jsonable(value):
    if isinstance(value, np.ndarray):
        return _to_jsonable(value.tolist())
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def _no_extra(params: dict, op: str, path: str):
    if params:
        raise ConfigError(
            f"at {path}: unexpected parameters {sorted(params)} for op {op!r}"
        )


def _need(params: dict, name: str, op: str, path: str):
    try:
        return params.pop(name)
    except KeyError:
        raise ConfigError(f"at {path}: op {op!r} requires parameter {name!r}") from None


def _leaf_dims(params: dict, ctx: dict, with_time: bool):
    m = int(params.pop("m", ctx["m"]))
    d = int(params.pop("dim_space", ctx["dim_space"]))
    if with_time:
        k = int(params.pop("dim_time", ctx["dim_time"]))
        return m, d, k
    return m, d


def _children_count(children, want, op, path):
    if isinstance(want, int):
        ok = len(children) == want
    else:
        ok = len(children) >= want[0]
    if not ok:
        raise ConfigError(
            f"at {path}: op {op!r} expects {want} child node(s), got {len(children)}"
        )


# --- builders: JSON params + built children -> KernelSpec -------------------


def _b_zero(p, ch, ctx, path):
    m, d, k = _leaf_dims(p, ctx, True)
    _no_extra(p, "zero", path)
    return K.zero_kernel(m, d, k)


def _b_constant(p, ch, ctx, path):
    m, d, k = _leaf_dims(p, ctx, True)
    value = _need(p, "value", "constant", path)
    _no_extra(p, "constant", path)
    return K.constant_kernel(m, d, value, dim_time=k)


def _b_exp_isotropic(p, ch, ctx, path):
    m, d, k = _leaf_dims(p, ctx, True)
    spec = K.exp_isotropic(
        m, d, alpha=p.pop("alpha", 1.0), scale_len=p.pop("scale", 1.0),
        rho=p.pop("rho", None), dim_time=k,
    )
    _no_extra(p, "exp_isotropic", path)
    return spec


def _b_radial_raw(p, ch, ctx, path):
    m, d, k = _leaf_dims(p, ctx, True)
    spec = K.radial_profile_raw(
        m, d, profile=_need(p, "profile", "radial_profile_raw", path),
        alpha=p.pop("alpha", 1.0), fill=p.pop("fill", "ones"), dim_time=k,
    )
    _no_extra(p, "radial_profile_raw", path)
    return spec


def _b_cross_vario(p, ch, ctx, path):
    m, d = _leaf_dims(p, ctx, False)
    spec = K.cross_variogram_lmc(
        m, d, base=p.pop("base", "gauss_bounded"), alpha=p.pop("alpha", 1.0),
        scale_len=p.pop("scale", 1.0), rho=p.pop("rho", None),
    )
    _no_extra(p, "cross_variogram_lmc", path)
    return spec


def _b_sum(p, ch, ctx, path):
    _children_count(ch, (1,), "sum", path)
    _no_extra(p, "sum", path)
    return K.combine_sum(*ch)


def _b_schur(p, ch, ctx, path):
    _children_count(ch, (1,), "schur_product", path)
    _no_extra(p, "schur_product", path)
    return K.combine_schur(*ch)


def _b_scale(p, ch, ctx, path):
    _children_count(ch, 1, "scale", path)
    factor = _need(p, "factor", "scale", path)
    _no_extra(p, "scale", path)
    return K.scale(ch[0], factor)


def _b_shift(p, ch, ctx, path):
    _children_count(ch, 1, "constant_shift", path)
    value = _need(p, "value", "constant_shift", path)
    _no_extra(p, "constant_shift", path)
    return K.constant_shift(ch[0], value)


def _b_pcv_power(p, ch, ctx, path):
    m, d = _leaf_dims(p, ctx, False)
    spec = P.pcv_power(m, d, alpha=p.pop("alpha", 1.0),
                       scale_len=p.pop("scale", 1.0), sill=p.pop("sill", None))
    _no_extra(p, "pcv_power", path)
    return spec


def _b_pcv_bounded(p, ch, ctx, path):
    m, d = _leaf_dims(p, ctx, False)
    spec = P.pcv_bounded(m, d, alpha=p.pop("alpha", 2.0),
                         scale_len=p.pop("scale", 1.0), sill=p.pop("sill", None))
    _no_extra(p, "pcv_bounded", path)
    return spec


def _b_from_g_and_c(p, ch, ctx, path):
    _children_count(ch, 1, "pcv_from_g_and_c", path)
    g = _need(p, "g", "pcv_from_g_and_c", path)
    _no_extra(p, "pcv_from_g_and_c", path)
    if isinstance(g, dict):
        g = "half_diag" if g.get("kind") == "half_diag" else g.get("values")
    return P.pcv_from_g_and_c(g, ch[0])


def _b_from_cross_vario(p, ch, ctx, path):
    _children_count(ch, 1, "pcv_from_cross_variogram", path)
    _no_extra(p, "pcv_from_cross_variogram", path)
    return P.pcv_from_cross_variogram(ch[0])


def _b_oesting(p, ch, ctx, path):
    _children_count(ch, 2, "pcv_oesting", path)
    _no_extra(p, "pcv_oesting", path)
    return P.pcv_oesting(ch[0], ch[1])


def _b_delay(p, ch, ctx, path):
    _children_count(ch, 1, "pcv_delay", path)
    delays = _need(p, "delays", "pcv_delay", path)
    m = int(p.pop("m", ctx["m"]))
    _no_extra(p, "pcv_delay", path)
    return P.pcv_delay(ch[0], delays, m)


def _b_bernstein(p, ch, ctx, path):
    _children_count(ch, 1, "pcv_bernstein", path)
    if "transform" in p:
        t = dict(p.pop("transform"))
        _no_extra(p, "pcv_bernstein", path)
    else:
        t = dict(p)  # flat transform params allowed as a convenience
        p.clear()
    kind = t.pop("kind", None)
    if kind is None:
        raise ConfigError(f"at {path}: pcv_bernstein needs a transform kind")
    return P.pcv_bernstein(ch[0], kind, **t)


def _b_nested(p, ch, ctx, path):
    _children_count(ch, 2, "pcv_nested_spacetime", path)
    _no_extra(p, "pcv_nested_spacetime", path)
    return P.pcv_nested_spacetime(ch[0], ch[1])


def _b_pcv_transport(p, ch, ctx, path):
    _children_count(ch, 1, "pcv_transport", path)
    velocity = _need(p, "velocity", "pcv_transport", path)
    _no_extra(p, "pcv_transport", path)
    return P.pcv_transport(ch[0], velocity)


def _b_schoenberg(p, ch, ctx, path):
    _children_count(ch, 1, "schoenberg_exp", path)
    spec = S.schoenberg_exp(ch[0], t=p.pop("t", 1.0))
    _no_extra(p, "schoenberg_exp", path)
    return spec


def _b_increment(p, ch, ctx, path):
    _children_count(ch, 1, "increment_cov", path)
    shift = _need(p, "shift", "increment_cov", path)
    _no_extra(p, "increment_cov", path)
    return S.increment_cov(ch[0], shift)


def _b_ratio_product_model(p, ch, ctx, path):
    _children_count(ch, 1, "ratio_product_model", path)
    shift = _need(p, "shift", "ratio_product_model", path)
    spec = S.ratio_product_model(ch[0], shift, offset=p.pop("offset", 0.0))
    _no_extra(p, "ratio_product_model", path)
    return spec


def _b_laplace2d(p, ch, ctx, path):
    _children_count(ch, 2, "laplace2d_mixture", path)
    mix = _need(p, "mixture", "laplace2d_mixture", path)
    _no_extra(p, "laplace2d_mixture", path)
    return S.laplace2d_mixture(ch[0], ch[1], mix)


def _b_toy_ei(p, ch, ctx, path):
    _children_count(ch, 2, "toy_ei", path)
    _no_extra(p, "toy_ei", path)
    return S.toy_ei_model(ch[0], ch[1])


def _b_triple(p, ch, ctx, path):
    _children_count(ch, 2, "triple_laplace", path)
    l0 = _need(p, "l0", "triple_laplace", path)
    l1 = _need(p, "l1", "triple_laplace", path)
    l2 = _need(p, "l2", "triple_laplace", path)
    _no_extra(p, "triple_laplace", path)
    return S.triple_laplace(ch[0], ch[1], l0, l1, l2)


def _b_fonseca(p, ch, ctx, path):
    _children_count(ch, 2, "fonseca_steel", path)
    args = {k: _need(p, k, "fonseca_steel", path)
            for k in ("a0", "a1", "a2", "lam0", "lam1", "lam2", "delta")}
    _no_extra(p, "fonseca_steel", path)
    return S.fonseca_steel(ch[0], ch[1], **args)


def _b_matern_mixture(p, ch, ctx, path):
    _children_count(ch, 2, "matern_mixture", path)
    nu_diag = _need(p, "nu_diag", "matern_mixture", path)
    _no_extra(p, "matern_mixture", path)
    return S.matern_mixture(ch[0], ch[1], nu_diag)


def _b_gaussian_extended(p, ch, ctx, path):
    sigma = _need(p, "sigma", "gaussian_extended", path)
    sigmas = p.pop("sigmas", [])
    m = p.pop("m", ctx["m"])
    k = p.pop("dim_time", ctx["dim_time"])
    _no_extra(p, "gaussian_extended", path)
    return S.gaussian_extended(sigma, sigmas, ch, m=int(m), dim_time=int(k))


def _b_lagrangian(p, ch, ctx, path):
    sigma = _need(p, "sigma", "lagrangian_mixture", path)
    sigmas = p.pop("sigmas", [])
    theta = _need(p, "theta", "lagrangian_mixture", path)
    mix = _need(p, "mixture", "lagrangian_mixture", path)
    m = p.pop("m", ctx["m"])
    _no_extra(p, "lagrangian_mixture", path)
    return S.lagrangian_mixture(sigma, sigmas, ch, theta, mix, m=int(m))


def _b_transport_mixture(p, ch, ctx, path):
    _children_count(ch, 2, "transport_mixture", path)
    laplace = _need(p, "laplace", "transport_mixture", path)
    sampler = _need(p, "sampler", "transport_mixture", path)
    n_mc = int(p.pop("n_mc", 64))
    seed = int(p.pop("seed", 0))
    _no_extra(p, "transport_mixture", path)
    return S.transport_mixture(ch[0], ch[1], laplace, sampler, n_mc, seed)


def _b_second_derivative_cov(p, ch, ctx, path):
    _children_count(ch, 1, "second_derivative_cov", path)
    axis = int(_need(p, "axis", "second_derivative_cov", path))
    spec = S.second_derivative_cov(ch[0], axis, mode=p.pop("mode", "closed"))
    _no_extra(p, "second_derivative_cov", path)
    return spec


def _b_cm_derivative_cov(p, ch, ctx, path):
    _children_count(ch, 1, "cm_derivative_cov", path)
    cm = _need(p, "cm", "cm_derivative_cov", path)
    spec = S.cm_derivative_cov(ch[0], cm, mode=p.pop("mode", "closed"))
    _no_extra(p, "cm_derivative_cov", path)
    return spec


def _b_isotropic_descent(p, ch, ctx, path):
    m, d = _leaf_dims(p, ctx, False)
    spec = S.isotropic_descent(
        m, d, profile=p.pop("profile", "one_mexp"), beta=p.pop("beta", 0.5),
        sill=p.pop("sill", 1.0),
    )
    _no_extra(p, "isotropic_descent", path)
    return spec


def _b_infdiv(p, ch, ctx, path):
    _children_count(ch, 1, "infdiv_ratio", path)
    a = _need(p, "a", "infdiv_ratio", path)
    b = _need(p, "b", "infdiv_ratio", path)
    _no_extra(p, "infdiv_ratio", path)
    return S.infdiv_ratio(ch[0], a, b)


def _b_hadamard(p, ch, ctx, path):
    _children_count(ch, 1, "hadamard_power", path)
    r = _need(p, "r", "hadamard_power", path)
    _no_extra(p, "hadamard_power", path)
    return S.hadamard_power(ch[0], r)


def _b_cosh(p, ch, ctx, path):
    _children_count(ch, 1, "cosh_ratio", path)
    nu = _need(p, "nu", "cosh_ratio", path)
    _no_extra(p, "cosh_ratio", path)
    return S.cosh_ratio(ch[0], nu)


def _b_askey(p, ch, ctx, path):
    _children_count(ch, 1, "askey_beta", path)
    support = _need(p, "support", "askey_beta", path)
    nu = _need(p, "nu", "askey_beta", path)
    _no_extra(p, "askey_beta", path)
    return N.askey_beta(ch[0], support, nu)


def _b_paciorek(p, ch, ctx, path):
    _children_count(ch, 1, "paciorek_mixture", path)
    fields = _need(p, "fields", "paciorek_mixture", path)
    nodes = _need(p, "nodes", "paciorek_mixture", path)
    weights = _need(p, "weights", "paciorek_mixture", path)
    _no_extra(p, "paciorek_mixture", path)
    return N.paciorek_mixture(ch[0], fields, nodes, weights)


def _b_nonstat_matern(p, ch, ctx, path):
    _children_count(ch, 1, "nonstationary_matern", path)
    fields = _need(p, "fields", "nonstationary_matern", path)
    nu_fields = _need(p, "nu_fields", "nonstationary_matern", path)
    _no_extra(p, "nonstationary_matern", path)
    return N.nonstationary_matern(ch[0], fields, nu_fields)


OP_BUILDERS = {
    "zero": _b_zero,
    "constant": _b_constant,
    "exp_isotropic": _b_exp_isotropic,
    "radial_profile_raw": _b_radial_raw,
    "cross_variogram_lmc": _b_cross_vario,
    "sum": _b_sum,
    "schur_product": _b_schur,
    "schur": _b_schur,  # accepted alias for hand-written configs
    "scale": _b_scale,
    "constant_shift": _b_shift,
    "pcv_power": _b_pcv_power,
    "pcv_bounded": _b_pcv_bounded,
    "pcv_from_g_and_c": _b_from_g_and_c,
    "pcv_from_cross_variogram": _b_from_cross_vario,
    "pcv_oesting": _b_oesting,
    "pcv_delay": _b_delay,
    "pcv_bernstein": _b_bernstein,
    "pcv_nested_spacetime": _b_nested,
    "pcv_transport": _b_pcv_transport,
    "schoenberg_exp": _b_schoenberg,
    "increment_cov": _b_increment,
    "ratio_product_model": _b_ratio_product_model,
    "laplace2d_mixture": _b_laplace2d,
    "toy_ei": _b_toy_ei,
    "triple_laplace": _b_triple,
    "fonseca_steel": _b_fonseca,
    "matern_mixture": _b_matern_mixture,
    "gaussian_extended": _b_gaussian_extended,
    "lagrangian_mixture": _b_lagrangian,
    "transport_mixture": _b_transport_mixture,
    "second_derivative_cov": _b_second_derivative_cov,
    "cm_derivative_cov": _b_cm_derivative_cov,
    "isotropic_descent": _b_isotropic_descent,
    "infdiv_ratio": _b_infdiv,
    "hadamard_power": _b_hadamard,
    "cosh_ratio": _b_cosh,
    "askey_beta": _b_askey,
    "paciorek_mixture": _b_paciorek,
    "nonstationary_matern": _b_nonstat_matern,
}

# params recomputed or derived at construction; never serialized
_SERIALIZE_DROP = {
    "transport_mixture": ("draws", "dim1", "dim2"),
}

_LEAF_TIME_OPS = ("zero", "constant", "exp_isotropic", "radial_profile_raw")
_LEAF_SPACE_OPS = ("cross_variogram_lmc", "pcv_power", "pcv_bounded",
                   "isotropic_descent")


def _serialize_extra(spec) -> dict:
    """Dimension parameters a node needs to rebuild independent of context."""
    if spec.op in _LEAF_TIME_OPS:
        return {"m": spec.m, "dim_space": spec.dim_space, "dim_time": spec.dim_time}
    if spec.op in _LEAF_SPACE_OPS:
        return {"m": spec.m, "dim_space": spec.dim_space}
    if spec.op == "pcv_delay":
        return {"m": spec.m}
    if spec.op in ("gaussian_extended", "lagrangian_mixture") and not spec.children:
        extra = {"m": spec.m}
        if spec.op == "gaussian_extended":
            extra["dim_time"] = spec.dim_time
        return extra
    return {}


def _build_node(node, ctx: dict, path: str):
    if not isinstance(node, dict):
        raise ConfigError(f"at {path}: expected an object, got {type(node).__name__}")
    unknown = set(node) - {"op", "params", "children"}
    if unknown:
        raise ConfigError(f"at {path}: unknown node fields {sorted(unknown)}")
    op = node.get("op")
    if op not in OP_BUILDERS:
        raise ConfigError(f"at {path}: unknown op {op!r}")
    params = node.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError(f"at {path}: params must be an object")
    raw_children = node.get("children", [])
    if not isinstance(raw_children, list):
        raise ConfigError(f"at {path}: children must be a list")
    children = [
        _build_node(c, ctx, f"{path}.children[{i}]")
        for i, c in enumerate(raw_children)
    ]
    try:
        return OP_BUILDERS[op](dict(params), children, ctx, path)
    except ConfigError:
        raise
    except SpecError as exc:
        raise ConfigError(f"at {path}: {exc}") from exc


def parse_model(doc: dict):
    """Parse a config document into a claimed KernelSpec."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("m", "dim_space", "dim_time", "model"):
        if key not in doc:
            raise ConfigError(f"config missing required field {key!r}")
    unknown = set(doc) - {"m", "dim_space", "dim_time", "model"}
    if unknown:
        raise ConfigError(f"unknown config fields {sorted(unknown)}")
    ctx = {"m": int(doc["m"]), "dim_space": int(doc["dim_space"]),
           "dim_time": int(doc["dim_time"])}
    if ctx["m"] < 1 or ctx["dim_space"] < 0 or ctx["dim_time"] < 0:
        raise ConfigError("m must be >= 1 and dimensions >= 0")
    spec = _build_node(doc["model"], ctx, "model")
    got = (spec.m, spec.dim_space, spec.dim_time)
    want = (ctx["m"], ctx["dim_space"], ctx["dim_time"])
    if got != want:
        raise ConfigError(
            f"model shape (m, dim_space, dim_time) = {got} does not match the "
            f"declared {want}"
        )
    return spec


def serialize_model(spec) -> dict:
    """Config document that parses back to a structurally equal spec."""

    def node(s):
        drop = _SERIALIZE_DROP.get(s.op, ())
        params = {k: _to_jsonable(v) for k, v in s.param_dict().items()
                  if k not in drop}
        params.update(_serialize_extra(s))
        out = {"op": s.op}
        if params:
            out["params"] = params
        if s.children:
            out["children"] = [node(c) for c in s.children]
        return out

    return {"m": spec.m, "dim_space": spec.dim_space, "dim_time": spec.dim_time,
            "model": node(spec)}


def canonical_json(doc) -> str:
    """Deterministic JSON encoding (sorted keys, no whitespace)."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_hash(doc) -> str:
    """SHA-256 of the canonical encoding."""
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def load_model_file(path: str):
    """Read and parse a model config file; returns (spec, document)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"invalid JSON in {path} at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}"
        ) from exc
    return parse_model(doc), doc
