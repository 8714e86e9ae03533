"""Stationary cross-covariance constructions against independent oracles.

Closed forms are checked against quadrature of their defining integrals
(scipy.integrate), brute-force numpy re-implementations, and hand-derived
values. Frozen constants were produced by scipy.integrate.dblquad /
scipy.special on the defining expressions.
"""
import math

import numpy as np
import pytest
from scipy import integrate
from scipy import special as sp

from covkit import (
    EvaluationError,
    KernelKind,
    SpecError,
    claims_pd,
    cm_derivative_cov,
    cosh_ratio,
    evaluate_pairs,
    exp_isotropic,
    fonseca_steel,
    gaussian_extended,
    hadamard_power,
    increment_cov,
    infdiv_ratio,
    isotropic_descent,
    lagrangian_mixture,
    laplace2d_mixture,
    laplace_record,
    laplace2d_record,
    matern_mixture,
    mixture_nodes,
    pcv_bounded,
    pcv_from_g_and_c,
    pcv_nested_spacetime,
    pcv_power,
    radial_profile_raw,
    ratio_product_model,
    schoenberg_exp,
    second_derivative_cov,
    toy_ei_model,
    transport_mixture,
    triple_laplace,
)
from covkit.linalg import bessel_k_arr
from covkit.mixtures import mixture_gauss_legendre_2d
from covkit.stationary import (
    cosh_zero_product,
    laplace2d_node_doubling_error,
    matern_profile,
    mixture_transform_values,
    second_derivative_numeric,
    toy_ei_transforms,
)


def _pairs(h, u=None):
    """(npairs, d) X/Y pair arrays with Y = 0 and X the given lags."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if u is None:
        X = h[:, None]
    else:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        X = np.column_stack([h, u])
    return X, np.zeros_like(X)


class TestSchoenbergExp:
    def test_values(self):
        g = pcv_power(2, 1, alpha=1.5)
        model = schoenberg_exp(g, t=0.7)
        X, Y = _pairs([0.0, 0.5, 2.0])
        got = evaluate_pairs(model, X, Y)
        expect = np.exp(-0.7 * np.abs(X[:, 0]) ** 1.5)
        np.testing.assert_allclose(got, expect[:, None, None] * np.ones((2, 2)),
                                   rtol=1e-14)

    def test_claims_and_validation(self):
        g = pcv_power(2, 1)
        model = schoenberg_exp(g)
        assert claims_pd(model)
        assert model.infinitely_divisible
        with pytest.raises(SpecError):
            schoenberg_exp(g, t=0.0)
        with pytest.raises(SpecError):
            schoenberg_exp(radial_profile_raw(1, 1, "power", alpha=2.5))


class TestIncrementCov:
    def test_tent_values(self):
        # gamma = |h|, z = 1: C(h) = |h+1| + |h-1| - 2|h| = 2 (1 - |h|)_+
        model = increment_cov(pcv_power(1, 1, alpha=1.0), [1.0])
        h = np.array([0.0, 0.25, 0.5, 1.0, 1.7])
        X, Y = _pairs(h)
        got = evaluate_pairs(model, X, Y)[:, 0, 0]
        np.testing.assert_allclose(got, 2.0 * np.clip(1.0 - np.abs(h), 0.0, None),
                                   atol=1e-14)

    def test_validation(self):
        with pytest.raises(SpecError):
            increment_cov(pcv_power(1, 2), [1.0])  # shift length mismatch
        with pytest.raises(SpecError):
            increment_cov(exp_isotropic(1, 1), [1.0])  # not a pseudo-variogram


class TestRatioProductModel:
    def test_values(self):
        # gamma = |h|, z = 1: C(0) = 4, C(1) = 3/4
        model = ratio_product_model(pcv_power(1, 1, alpha=1.0), [1.0])
        X, Y = _pairs([0.0, 1.0, 2.0])
        got = evaluate_pairs(model, X, Y)[:, 0, 0]
        expect = [4.0, (1.0 + 2.0) * (1.0 + 0.0) / 4.0,
                  (1.0 + 3.0) * (1.0 + 1.0) / 9.0]
        np.testing.assert_allclose(got, expect, rtol=1e-14)

    def test_offset(self):
        model = ratio_product_model(pcv_power(1, 1, alpha=1.0), [1.0], offset=-0.5)
        X, Y = _pairs([0.0])
        assert evaluate_pairs(model, X, Y)[0, 0, 0] == pytest.approx(3.5, rel=1e-14)
        with pytest.raises(SpecError):
            ratio_product_model(pcv_power(1, 1), [1.0], offset=-1.5)


# the 2x2 matrix density used by the explicit closed-form model: the Hessian
# of v^2/w on the box (1, 2)^2
def _hessian_entry(i, j, v, w):
    if (i, j) == (0, 0):
        return 2.0 / w
    if (i, j) == (1, 1):
        return 2.0 * v**2 / w**3
    return -2.0 * v / w**2


def _toy_dblquad(i, j, x, y):
    val, err = integrate.dblquad(
        lambda w, v: _hessian_entry(i, j, v, w) * math.exp(-v * x - w * y),
        1.0, 2.0, 1.0, 2.0, epsabs=1e-13, epsrel=1e-13)
    assert err < 1e-11
    return val


class TestToyModel:
    # frozen dblquad of the Hessian-density transform over (1,2)^2
    FROZEN = {
        (1.0, 1.0): (0.07928984840649396, -0.08555665072053333,
                     0.0993072470947807),
        (0.3, 0.7): (0.3296747049640172, -0.36440980107660786,
                     0.43344515778619197),
        (2.5, 0.2): (0.03136067407625305, -0.02998118504078606,
                     0.030863531027731237),
    }

    @pytest.mark.parametrize("xy", sorted(FROZEN))
    def test_frozen_quadrature_values(self, xy):
        x, y = xy
        l11, l12, l22 = toy_ei_transforms(np.array([x]), np.array([y]))
        f11, f12, f22 = self.FROZEN[xy]
        assert l11[0] == pytest.approx(f11, rel=1e-12)
        assert l12[0] == pytest.approx(f12, rel=1e-12)
        assert l22[0] == pytest.approx(f22, rel=1e-12)

    def test_live_quadrature_small_arguments(self):
        # exercises the series branch (arguments below the switch point)
        for x, y in [(0.01, 0.02), (0.04, 0.3), (0.6, 0.003)]:
            l11, l12, l22 = toy_ei_transforms(np.array([x]), np.array([y]))
            assert l11[0] == pytest.approx(_toy_dblquad(0, 0, x, y), rel=1e-10)
            assert l12[0] == pytest.approx(_toy_dblquad(0, 1, x, y), rel=1e-10)
            assert l22[0] == pytest.approx(_toy_dblquad(1, 1, x, y), rel=1e-10)

    def test_origin_closed_values(self):
        l11, l12, l22 = toy_ei_transforms(np.zeros(1), np.zeros(1))
        assert l11[0] == pytest.approx(2.0 * math.log(2.0), rel=1e-13)
        assert l12[0] == pytest.approx(-1.5, rel=1e-13)
        assert l22[0] == pytest.approx(1.75, rel=1e-13)

    def test_branch_continuity(self):
        # the function itself moves ~3e-12 relative across this step, so any
        # visible gap would be a series/closed-form mismatch
        lo = toy_ei_transforms(np.array([0.05 - 1e-12]), np.array([0.5]))
        hi = toy_ei_transforms(np.array([0.05 + 1e-12]), np.array([0.5]))
        for a, b in zip(lo, hi):
            assert a[0] == pytest.approx(b[0], rel=1e-10)

    def test_model_evaluation(self):
        gS = pcv_power(2, 1, alpha=1.0)
        gT = pcv_power(2, 1, alpha=1.0)
        model = toy_ei_model(gS, gT)
        X, Y = _pairs([1.0, 0.3], [1.0, 0.7])
        got = evaluate_pairs(model, X, Y)
        for r, xy in enumerate([(1.0, 1.0), (0.3, 0.7)]):
            f11, f12, f22 = self.FROZEN[xy]
            np.testing.assert_allclose(got[r], [[f11, f12], [f12, f22]],
                                       rtol=1e-12)
        # coincident arguments give the origin matrix, which is PD
        Z = np.zeros((1, 2))
        at0 = evaluate_pairs(model, Z, Z)[0]
        np.testing.assert_allclose(
            at0, [[2.0 * math.log(2.0), -1.5], [-1.5, 1.75]], rtol=1e-13)
        assert np.linalg.eigvalsh(at0)[0] > 0.0

    def test_needs_two_components(self):
        with pytest.raises(SpecError):
            toy_ei_model(pcv_power(3, 1), pcv_power(3, 1))


class TestTripleLaplace:
    def test_point_mass_identity(self):
        pm = {"kind": "point_mass"}
        model = triple_laplace(pcv_power(1, 1), pcv_power(1, 1), pm, pm, pm)
        X, Y = _pairs([0.0, 1.0, 3.0], [0.5, 0.0, 2.0])
        np.testing.assert_array_equal(evaluate_pairs(model, X, Y),
                                      np.ones((3, 1, 1)))

    def test_rational_example(self):
        # L0 = gamma(shape 1, rate lam), L1 = L2 = point mass:
        # C = (1 + (gS + gT)/lam)^-1
        lam = 2.5
        model = triple_laplace(
            pcv_power(1, 1, alpha=1.0), pcv_power(1, 1, alpha=2.0),
            {"kind": "gamma", "shape": 1.0, "rate": lam},
            {"kind": "point_mass"}, {"kind": "point_mass"})
        h = np.array([0.0, 0.7, 1.4])
        u = np.array([0.3, 0.0, 1.1])
        X, Y = _pairs(h, u)
        got = evaluate_pairs(model, X, Y)[:, 0, 0]
        np.testing.assert_allclose(got, 1.0 / (1.0 + (np.abs(h) + u**2) / lam),
                                   rtol=1e-14)

    def test_equals_gig_gamma_factorization(self):
        # the named closed form is the gamma/GIG/gamma triple product
        a0, a1, a2 = 1.2, 0.8, 1.5
        l0, l1, l2 = 0.7, 1.3, 0.5
        delta = 0.9
        gS = pcv_power(2, 1, alpha=1.0)
        gT = pcv_bounded(2, 1, alpha=2.0)
        named = fonseca_steel(gS, gT, a0, a1, a2, l0, l1, l2, delta)
        triple = triple_laplace(
            gS, gT,
            {"kind": "gamma", "shape": l0, "rate": a0},
            {"kind": "gig", "p": l1, "a": 2.0 * a1, "b": 2.0 * delta},
            {"kind": "gamma", "shape": l2, "rate": a2})
        h = np.repeat(np.linspace(0.0, 3.0, 10), 10)
        u = np.tile(np.linspace(0.0, 2.0, 10), 10)
        X, Y = _pairs(h, u)
        a = evaluate_pairs(named, X, Y)
        b = evaluate_pairs(triple, X, Y)
        np.testing.assert_allclose(a, b, rtol=1e-10)

    def test_closed_form_normalizations(self):
        gS = pcv_power(1, 1, alpha=1.0)
        gT = pcv_power(1, 1, alpha=2.0)
        model = fonseca_steel(gS, gT, 1.0, 2.0, 3.0, 0.5, 1.5, 1.0, 0.7)
        Z = np.zeros((1, 2))
        assert evaluate_pairs(model, Z, Z)[0, 0, 0] == pytest.approx(1.0,
                                                                     rel=1e-14)
        # vanishing first exponent removes the shared factor
        tiny = fonseca_steel(gS, gT, 1.0, 2.0, 3.0, 1e-12, 1.5, 1.0, 0.7)
        X, Y = _pairs([1.3], [0.4])
        gs, gt = 1.3, 0.16
        expect = (
            (1.0 + gs / 2.0) ** -0.75 * (1.0 + gt / 3.0) ** -1.0
            * bessel_k_arr(1.5, 2.0 * math.sqrt((2.0 + gs) * 0.7))
            / bessel_k_arr(1.5, 2.0 * math.sqrt(2.0 * 0.7))
        )
        assert evaluate_pairs(tiny, X, Y)[0, 0, 0] == pytest.approx(expect,
                                                                    rel=1e-9)

    def test_parameter_validation(self):
        gS, gT = pcv_power(1, 1), pcv_power(1, 1)
        for bad in ["a0", "a1", "a2", "lam0", "lam1", "lam2", "delta"]:
            kwargs = dict(a0=1.0, a1=1.0, a2=1.0, lam0=1.0, lam1=1.0,
                          lam2=1.0, delta=1.0)
            kwargs[bad] = 0.0
            with pytest.raises(SpecError):
                fonseca_steel(gS, gT, **kwargs)
        with pytest.raises(SpecError):
            triple_laplace(gS, gT, {"kind": "nope"}, {"kind": "point_mass"},
                           {"kind": "point_mass"})


class TestMaternMixture:
    def test_half_order_spot_value(self):
        # nu = 1/2, gs = 1, gt = 0: sqrt(pi/2) e^-1
        val = float(matern_profile(1.0, 0.0, 0.5))
        assert val == pytest.approx(math.sqrt(math.pi / 2.0) * math.exp(-1.0),
                                    rel=1e-12)
        assert abs(val - 0.4611) < 1e-4

    @pytest.mark.parametrize("gs,gt,nu", [
        (1.0, 0.0, 0.5), (0.5, 1.2, 1.0), (2.0, 0.3, 1.7), (4.0, 2.0, 3.2),
    ])
    def test_against_mixture_quadrature(self, gs, gt, nu):
        # 2^(nu-1) int_0^inf v^(nu-1) e^(-v(1+gt) - gs/(4v)) dv
        oracle, err = integrate.quad(
            lambda v: v ** (nu - 1.0) * math.exp(-v * (1.0 + gt) - gs / (4.0 * v)),
            0.0, np.inf, epsabs=1e-14)
        oracle *= 2.0 ** (nu - 1.0)
        assert err < 1e-8
        assert float(matern_profile(gs, gt, nu)) == pytest.approx(oracle,
                                                                  rel=1e-9)

    @pytest.mark.parametrize("nu", [1.0, 1.5, 2.5])
    def test_limit_branch_continuity(self, nu):
        for gt in [0.0, 0.8]:
            lim = float(matern_profile(0.0, gt, nu))
            near = float(matern_profile(1e-10, gt, nu, branch_threshold=0.0))
            assert near == pytest.approx(lim, rel=1e-6)

    def test_model_cross_entry(self):
        # nu_12 = (0.5 + 1.5)/2 = 1
        model = matern_mixture(pcv_power(2, 1, alpha=2.0),
                               pcv_bounded(2, 1, alpha=2.0), [0.5, 1.5])
        X, Y = _pairs([1.3], [0.4])
        gs = 1.3**2
        gt = 1.0 - math.exp(-0.16)
        got = evaluate_pairs(model, X, Y)[0]
        expect12 = math.sqrt(gs / (1.0 + gt)) * sp.kv(
            1.0, math.sqrt(gs * (1.0 + gt)))
        assert got[0, 1] == pytest.approx(expect12, rel=1e-12)
        assert got[0, 1] == pytest.approx(got[1, 0], rel=1e-14)

    def test_validation(self):
        gS, gT = pcv_power(2, 1), pcv_power(2, 1)
        with pytest.raises(SpecError):
            matern_mixture(gS, gT, [0.5])  # wrong length
        with pytest.raises(SpecError):
            matern_mixture(gS, gT, [0.5, -1.0])


class TestLaplace2dMixture:
    DENSITY = {"kind": "common", "base": {"kind": "expexp", "a": 1.0, "b": 0.5}}

    def test_model_matches_transform_values(self):
        mix = mixture_gauss_legendre_2d(((0.0, 2.0), (0.0, 3.0)), 6,
                                        self.DENSITY)
        model = laplace2d_mixture(pcv_power(2, 1, alpha=1.0),
                                  pcv_bounded(2, 1, alpha=2.0), mix)
        h = np.array([0.0, 0.9, 2.2])
        u = np.array([0.4, 0.0, 1.5])
        X, Y = _pairs(h, u)
        got = evaluate_pairs(model, X, Y)
        gs = np.abs(h)
        gt = 1.0 - np.exp(-(u**2))
        expect = mixture_transform_values(mix, 2, gs, gt)
        np.testing.assert_allclose(got, expect, rtol=1e-13)

    def test_node_doubling_error_decreases(self):
        xs = np.linspace(0.0, 2.0, 5)
        box = ((0.0, 2.0), (0.0, 3.0))
        e4 = laplace2d_node_doubling_error(box, 4, self.DENSITY, 1, xs, xs)
        e8 = laplace2d_node_doubling_error(box, 8, self.DENSITY, 1, xs, xs)
        assert e8 < e4
        assert e8 < 1e-8

    def test_non_psd_density_rejected(self):
        mix = mixture_gauss_legendre_2d(
            ((0.0, 1.0), (0.0, 1.0)), 3,
            {"kind": "constant_psd", "matrix": [[1.0, 2.0], [2.0, 1.0]],
             "base": {"kind": "uniform"}})
        with pytest.raises(SpecError):
            laplace2d_mixture(pcv_power(2, 1), pcv_power(2, 1), mix)


class TestSecondDerivativeCov:
    def test_closed_values_power(self):
        # gamma = b ||h/s||^2: second partial is the constant 2 b / s^2
        model = second_derivative_cov(pcv_power(1, 2, alpha=2.0, scale_len=0.7),
                                      axis=1)
        X = np.array([[0.3, -1.0], [2.0, 0.5]])
        got = evaluate_pairs(model, X, np.zeros_like(X))[:, 0, 0]
        np.testing.assert_allclose(got, 2.0 / 0.49, rtol=1e-14)

    def test_closed_values_bounded(self):
        # gamma = b (1 - e^{-||h/s||^2}):
        # d^2/dh_k^2 = (2 b / s^2) e^{-q} (1 - 2 h_k^2 / s^2)
        s = 1.3
        model = second_derivative_cov(pcv_bounded(1, 2, alpha=2.0, scale_len=s),
                                      axis=2)
        X = np.array([[0.4, 0.9], [1.1, -0.2]])
        got = evaluate_pairs(model, X, np.zeros_like(X))[:, 0, 0]
        q = np.sum((X / s) ** 2, axis=1)
        expect = (2.0 / s**2) * np.exp(-q) * (1.0 - 2.0 * X[:, 1] ** 2 / s**2)
        np.testing.assert_allclose(got, expect, rtol=1e-14)

    def test_closed_matches_numeric_mode(self):
        from covkit.kernels import combine_sum, scale
        gamma = combine_sum(pcv_bounded(2, 1, alpha=2.0, scale_len=0.9),
                            scale(pcv_power(2, 1, alpha=2.0), 0.4))
        closed = second_derivative_cov(gamma, axis=1, mode="closed")
        numeric = second_derivative_cov(gamma, axis=1, mode="numeric")
        X, Y = _pairs(np.linspace(-2.0, 2.0, 50))
        a = evaluate_pairs(closed, X, Y)
        b = evaluate_pairs(numeric, X, Y)
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_against_plain_central_difference(self):
        gamma = pcv_bounded(1, 1, alpha=2.0, scale_len=1.1)
        model = second_derivative_cov(gamma, axis=1)
        step = 1e-4
        for h in [0.0, 0.35, 1.2]:
            X, Y = _pairs([h])
            got = evaluate_pairs(model, X, Y)[0, 0, 0]
            f = lambda t: evaluate_pairs(gamma, np.array([[t]]),
                                         np.zeros((1, 1)))[0, 0, 0]
            fd = (f(h + step) - 2.0 * f(h) + f(h - step)) / step**2
            assert got == pytest.approx(fd, abs=1e-6)

    def test_numeric_error_estimate(self):
        gamma = pcv_bounded(1, 1, alpha=2.0)
        val, err = second_derivative_numeric(gamma, 1, [0.7], [0.0])
        closed = evaluate_pairs(second_derivative_cov(gamma, axis=1),
                                np.array([[0.7]]), np.zeros((1, 1)))[0]
        assert abs(val[0, 0] - closed[0, 0]) < 1e-6
        assert err[0, 0] < 1e-4

    def test_validation(self):
        with pytest.raises(SpecError):
            second_derivative_cov(pcv_power(1, 1, alpha=1.0), axis=1)  # not smooth
        with pytest.raises(SpecError):
            second_derivative_cov(pcv_power(1, 2, alpha=2.0), axis=3)
        with pytest.raises(SpecError):
            second_derivative_cov(pcv_power(1, 1, alpha=2.0), axis=1,
                                  mode="nope")


class TestCmDerivativeCov:
    def _nested(self, m=1, st=0.8):
        return pcv_nested_spacetime(pcv_bounded(m, 1, alpha=2.0),
                                    pcv_power(m, 1, alpha=2.0, scale_len=st))

    def test_exp_hand_formula(self):
        # gamma(h, u) = gS(h) + u^2/st^2 and L = e^-t:
        # C = e^-gamma (2/st^2 - (2 u / st^2)^2)
        st = 0.8
        model = cm_derivative_cov(self._nested(st=st), {"kind": "exp"})
        h = np.array([0.0, 0.6, 1.4])
        u = np.array([0.5, 0.0, 1.0])
        X, Y = _pairs(h, u)
        got = evaluate_pairs(model, X, Y)[:, 0, 0]
        g = (1.0 - np.exp(-(h**2))) + u**2 / st**2
        expect = np.exp(-g) * (2.0 / st**2 - (2.0 * u / st**2) ** 2)
        np.testing.assert_allclose(got, expect, rtol=1e-13)

    def test_powerlaw_hand_formula(self):
        st, lam = 0.8, 1.7
        model = cm_derivative_cov(self._nested(st=st),
                                  {"kind": "powerlaw", "lam": lam})
        X, Y = _pairs([0.6], [0.5])
        g = (1.0 - math.exp(-0.36)) + 0.25 / st**2
        d1 = 2.0 * 0.5 / st**2
        d2 = 2.0 / st**2
        expect = (1.0 + g) ** -lam * d2 - lam * (1.0 + g) ** (-lam - 1.0) * d1**2
        assert evaluate_pairs(model, X, Y)[0, 0, 0] == pytest.approx(expect,
                                                                     rel=1e-13)

    def test_closed_matches_numeric_mode(self):
        gamma = self._nested(m=2)
        closed = cm_derivative_cov(gamma, {"kind": "exp"}, mode="closed")
        numeric = cm_derivative_cov(gamma, {"kind": "exp"}, mode="numeric")
        h = np.linspace(-1.5, 1.5, 50)
        u = np.linspace(-1.0, 1.0, 50)
        X, Y = _pairs(h, u)
        a = evaluate_pairs(closed, X, Y)
        b = evaluate_pairs(numeric, X, Y)
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_validation(self):
        with pytest.raises(SpecError):
            cm_derivative_cov(self._nested(), {"kind": "nope"})
        with pytest.raises(SpecError):
            cm_derivative_cov(self._nested(), {"kind": "powerlaw", "lam": 0.0})
        with pytest.raises(SpecError):
            cm_derivative_cov(pcv_power(1, 1, alpha=2.0), {"kind": "exp"})
        with pytest.raises(SpecError):
            # temporal part outside the smooth whitelist
            cm_derivative_cov(
                pcv_nested_spacetime(pcv_bounded(1, 1), pcv_power(1, 1, alpha=1.0)),
                {"kind": "exp"})


class TestIsotropicDescent:
    def test_profiles(self):
        h = np.array([0.0, 0.7, 1.5])
        X, Y = _pairs(h)
        t = h**2
        flat = evaluate_pairs(isotropic_descent(1, 1, "identity", sill=2.0),
                              X, Y)[:, 0, 0]
        np.testing.assert_allclose(flat, 2.0, rtol=1e-15)
        gauss = evaluate_pairs(isotropic_descent(1, 1, "one_mexp", sill=1.5),
                               X, Y)[:, 0, 0]
        np.testing.assert_allclose(gauss, 1.5 * np.exp(-t), rtol=1e-14)
        beta = 0.4
        pw = evaluate_pairs(isotropic_descent(1, 1, "power_beta", beta=beta),
                            X, Y)[:, 0, 0]
        np.testing.assert_allclose(pw, beta * (1.0 + t) ** (beta - 1.0),
                                   rtol=1e-14)

    def test_multivariate_is_rank_one(self):
        X, Y = _pairs([0.9])
        got = evaluate_pairs(isotropic_descent(3, 1, "one_mexp"), X, Y)[0]
        np.testing.assert_allclose(got, got[0, 0] * np.ones((3, 3)), rtol=1e-15)

    def test_validation(self):
        with pytest.raises(SpecError):
            isotropic_descent(1, 1, "nope")
        with pytest.raises(SpecError):
            isotropic_descent(1, 1, "power_beta", beta=1.5)
        with pytest.raises(SpecError):
            isotropic_descent(1, 1, sill=0.0)


class TestInfdivRatio:
    def test_values_and_flag(self):
        model = infdiv_ratio(pcv_power(1, 1, alpha=1.0), a=2.0, b=0.5)
        h = np.array([0.0, 1.0, 4.0])
        X, Y = _pairs(h)
        got = evaluate_pairs(model, X, Y)[:, 0, 0]
        np.testing.assert_allclose(got, (1.0 + 0.5 * h) / (1.0 + 2.0 * h),
                                   rtol=1e-14)
        assert model.infinitely_divisible
        assert claims_pd(model)

    def test_validation(self):
        g = pcv_power(1, 1)
        with pytest.raises(SpecError):
            infdiv_ratio(g, a=0.0, b=0.0)
        with pytest.raises(SpecError):
            infdiv_ratio(g, a=1.0, b=2.0)  # b > a

    def test_hadamard_power_claims(self):
        base = infdiv_ratio(pcv_power(1, 1), a=1.0, b=0.0)
        powered = hadamard_power(base, 0.3)
        assert claims_pd(powered)
        X, Y = _pairs([2.0])
        expect = (1.0 / 3.0) ** 0.3
        assert evaluate_pairs(powered, X, Y)[0, 0, 0] == pytest.approx(
            expect, rel=1e-14)
        # merely PD children yield no claim
        plain = hadamard_power(exp_isotropic(1, 1), 0.5)
        assert not claims_pd(plain)
        assert plain.kind is KernelKind.UNVALIDATED

    def test_hadamard_requires_positive_entries(self):
        tent = increment_cov(pcv_power(1, 1, alpha=1.0), [1.0])
        powered = hadamard_power(tent, 0.5)
        X, Y = _pairs([1.5])  # tent vanishes beyond lag 1
        with pytest.raises(EvaluationError):
            evaluate_pairs(powered, X, Y)


class TestCoshRatio:
    def test_matches_naive_formula(self):
        nu = 0.3
        model = cosh_ratio(pcv_power(1, 1, alpha=1.0), nu)
        h = np.linspace(0.0, 30.0, 13)
        X, Y = _pairs(h)
        got = evaluate_pairs(model, X, Y)[:, 0, 0]
        r = np.sqrt(np.abs(h))
        np.testing.assert_allclose(got, np.cosh(nu * r) / np.cosh(r),
                                   rtol=1e-13)

    def test_overflow_safe(self):
        # naive cosh ratio is inf/inf for gamma ~ 1e6; the model is not
        nu = 0.4
        model = cosh_ratio(pcv_power(1, 1, alpha=1.0), nu)
        X, Y = _pairs([1e6])
        got = evaluate_pairs(model, X, Y)[0, 0, 0]
        assert np.isfinite(got)
        assert got == pytest.approx(math.exp((nu - 1.0) * 1e3), rel=1e-12)

    def test_endpoints(self):
        X, Y = _pairs([2.3])
        one = cosh_ratio(pcv_power(1, 1, alpha=1.0), 1.0)
        assert evaluate_pairs(one, X, Y)[0, 0, 0] == pytest.approx(1.0,
                                                                   rel=1e-14)
        sech = cosh_ratio(pcv_power(1, 1, alpha=1.0), 0.0)
        assert evaluate_pairs(sech, X, Y)[0, 0, 0] == pytest.approx(
            1.0 / math.cosh(math.sqrt(2.3)), rel=1e-13)

    def test_zero_product_plain_small_arguments(self):
        nu = 0.6
        g = np.linspace(0.0, 1e-3, 11)
        closed = np.cosh(nu * np.sqrt(g)) / np.cosh(np.sqrt(g))
        approx = cosh_zero_product(g, nu, n_terms=200)
        assert np.max(np.abs(approx - closed)) < 1e-6

    def test_zero_product_tail_corrected(self):
        nu = 0.6
        g = np.linspace(0.0, 25.0, 26)
        closed = np.cosh(nu * np.sqrt(g)) / np.cosh(np.sqrt(g))
        approx = cosh_zero_product(g, nu, n_terms=200, tail_correction=True)
        assert np.max(np.abs(approx - closed)) < 1e-6

    def test_flags_and_validation(self):
        model = cosh_ratio(pcv_power(1, 1), 0.5)
        assert model.infinitely_divisible
        with pytest.raises(SpecError):
            cosh_ratio(pcv_power(1, 1), 1.2)
        with pytest.raises(SpecError):
            cosh_ratio(pcv_power(1, 1), -0.1)


def _gauss_oracle(X, Y, sigma, sigmas, comps, d, theta=None):
    """Loop-based reference for the anisotropy-mixing Gaussian shape."""
    n = X.shape[0]
    m = comps[0].m if comps else 1
    gs = [evaluate_pairs(c, X[:, d:], Y[:, d:]) for c in comps]
    out = np.empty((n, m, m))
    for p in range(n):
        h = X[p, :d] - Y[p, :d]
        if theta is not None:
            h = h + theta * (X[p, d] - Y[p, d])
        for i in range(m):
            for j in range(m):
                A = np.asarray(sigma, dtype=float).copy()
                for g, s in zip(gs, sigmas):
                    A += g[p, i, j] * np.asarray(s, dtype=float)
                q = 0.5 * h @ np.linalg.solve(A, h)
                out[p, i, j] = np.linalg.det(A) ** -0.5 * math.exp(-q)
    return out


class TestGaussianExtended:
    SIGMA = [[1.0, 0.2], [0.2, 0.8]]
    SIGMAS = [np.eye(2), np.diag([0.5, 0.25])]

    def _comps(self):
        rho = [[1.0, 0.5], [0.5, 1.0]]
        return (pcv_power(2, 1, alpha=1.0),
                pcv_from_g_and_c("half_diag", exp_isotropic(2, 1, rho=rho)))

    def test_against_loop_oracle(self):
        comps = self._comps()
        model = gaussian_extended(self.SIGMA, self.SIGMAS, comps)
        rng = np.random.default_rng(5)
        X = rng.normal(size=(8, 3))
        Y = rng.normal(size=(8, 3))
        got = evaluate_pairs(model, X, Y)
        expect = _gauss_oracle(X, Y, self.SIGMA, self.SIGMAS, list(comps), 2)
        np.testing.assert_allclose(got, expect, rtol=1e-12)

    def test_no_components_is_plain_gaussian(self):
        model = gaussian_extended(self.SIGMA, [], [], m=1, dim_time=0)
        rng = np.random.default_rng(6)
        X = rng.normal(size=(5, 2))
        Y = rng.normal(size=(5, 2))
        got = evaluate_pairs(model, X, Y)[:, 0, 0]
        S = np.asarray(self.SIGMA)
        for p in range(5):
            h = X[p] - Y[p]
            expect = np.linalg.det(S) ** -0.5 * math.exp(
                -0.5 * h @ np.linalg.solve(S, h))
            assert got[p] == pytest.approx(expect, rel=1e-13)

    def test_validation(self):
        comps = self._comps()
        with pytest.raises(SpecError):
            gaussian_extended([[1.0, 2.0], [2.0, 1.0]], self.SIGMAS, comps)
        with pytest.raises(SpecError):
            gaussian_extended(self.SIGMA, [np.eye(2)], comps)  # count mismatch
        with pytest.raises(SpecError):
            gaussian_extended(self.SIGMA, [np.eye(2), -np.eye(2)], comps)


class TestLagrangianMixture:
    def _unit_mix(self):
        return mixture_nodes([[1.0]], [1.0],
                             {"kind": "common", "base": {"kind": "uniform"}})

    def test_zero_drift_unit_node_reduces_to_gaussian(self):
        sigma = [[1.0, 0.2], [0.2, 0.8]]
        sigmas = [np.eye(2)]
        comps = (pcv_power(2, 1, alpha=1.0),)
        lag = lagrangian_mixture(sigma, sigmas, comps, [0.0, 0.0],
                                 self._unit_mix())
        gauss = gaussian_extended(sigma, sigmas, comps)
        rng = np.random.default_rng(7)
        X = rng.normal(size=(10, 3))
        Y = rng.normal(size=(10, 3))
        np.testing.assert_allclose(evaluate_pairs(lag, X, Y),
                                   evaluate_pairs(gauss, X, Y), rtol=1e-13)

    def test_drift_shifts_the_quadratic_form(self):
        sigma = [[1.0, 0.2], [0.2, 0.8]]
        sigmas = [np.eye(2)]
        comps = (pcv_power(2, 1, alpha=1.0),)
        theta = np.array([0.6, -0.3])
        lag = lagrangian_mixture(sigma, sigmas, comps, theta, self._unit_mix())
        rng = np.random.default_rng(8)
        X = rng.normal(size=(6, 3))
        Y = rng.normal(size=(6, 3))
        got = evaluate_pairs(lag, X, Y)
        expect = _gauss_oracle(X, Y, sigma, sigmas, list(comps), 2, theta=theta)
        np.testing.assert_allclose(got, expect, rtol=1e-12)

    def test_cross_covariance_is_direction_dependent(self):
        sigma = [[1.0, 0.2], [0.2, 0.8]]
        comps = (pcv_from_g_and_c(
            "half_diag", exp_isotropic(2, 1, rho=[[1.0, 0.5], [0.5, 1.0]])),)
        lag = lagrangian_mixture(sigma, [np.eye(2)], comps, [0.7, 0.0],
                                 self._unit_mix())
        # reversing the spatial lag while keeping the time lag changes the
        # drift-shifted quadratic form
        X = np.array([[0.9, 0.0, 0.4]])
        Xr = np.array([[-0.9, 0.0, 0.4]])
        fwd = evaluate_pairs(lag, X, np.zeros_like(X))[0, 0, 1]
        bwd = evaluate_pairs(lag, Xr, np.zeros_like(X))[0, 0, 1]
        assert abs(fwd - bwd) > 1e-6

    def test_validation(self):
        comps = (pcv_power(2, 1, alpha=1.0),)
        with pytest.raises(SpecError):
            lagrangian_mixture([[1.0, 0.2], [0.2, 0.8]], [np.eye(2)], comps,
                               [0.1], self._unit_mix())  # theta length
        mix2d = mixture_gauss_legendre_2d(
            ((0.0, 1.0), (0.0, 1.0)), 2,
            {"kind": "common", "base": {"kind": "uniform"}})
        with pytest.raises(SpecError):
            lagrangian_mixture([[1.0, 0.2], [0.2, 0.8]], [np.eye(2)], comps,
                               [0.1, 0.2], mix2d)  # needs a 1-D mixture


class TestTransportMixture:
    LAPLACE = laplace2d_record(laplace_record("exponential", rate=1.0),
                               laplace_record("gamma", shape=2.0, rate=1.5))

    def _model(self, seed=77):
        g1 = pcv_from_g_and_c("half_diag",
                              exp_isotropic(2, 1, rho=[[1.0, 0.5], [0.5, 1.0]]))
        g2 = pcv_bounded(2, 1, alpha=2.0)
        return transport_mixture(g1, g2, self.LAPLACE,
                                 {"kind": "normal", "sd": 0.8}, n_mc=7,
                                 seed=seed)

    def test_against_loop_oracle(self):
        model = self._model()
        rng = np.random.default_rng(9)
        X = rng.normal(size=(5, 3))
        Y = rng.normal(size=(5, 3))
        got = evaluate_pairs(model, X, Y)
        draws = np.random.default_rng(77).standard_normal((7, 2)) * 0.8
        rho = np.array([[1.0, 0.5], [0.5, 1.0]])
        expect = np.zeros((5, 2, 2))
        for p in range(5):
            u = X[p, 2] - Y[p, 2]
            for s in range(7):
                a1 = X[p, 0] - Y[p, 0] - draws[s, 0] * u
                a2 = X[p, 1] - Y[p, 1] - draws[s, 1] * u
                g1 = 1.0 - rho * math.exp(-abs(a1))
                g2 = (1.0 - math.exp(-(a2**2))) * np.ones((2, 2))
                expect[p] += (1.0 / (1.0 + g1)) * (1.0 + g2 / 1.5) ** -2.0
            expect[p] /= 7.0
        np.testing.assert_allclose(got, expect, rtol=1e-12)

    def test_seed_determinism(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(4, 3))
        Y = rng.normal(size=(4, 3))
        a = evaluate_pairs(self._model(seed=123), X, Y)
        b = evaluate_pairs(self._model(seed=123), X, Y)
        assert np.array_equal(a, b)
        c = evaluate_pairs(self._model(seed=124), X, Y)
        assert not np.array_equal(a, c)

    def test_fixed_draws(self):
        g1 = pcv_power(1, 1, alpha=1.0)
        g2 = pcv_power(1, 1, alpha=2.0)
        model = transport_mixture(
            g1, g2, self.LAPLACE,
            {"kind": "fixed", "values": [[0.5, -0.25]]}, n_mc=1, seed=0)
        X = np.array([[1.0, 0.3, 2.0]])
        Y = np.zeros_like(X)
        gam1 = abs(1.0 - 0.5 * 2.0)
        gam2 = (0.3 + 0.25 * 2.0) ** 2
        expect = (1.0 / (1.0 + gam1)) * (1.0 + gam2 / 1.5) ** -2.0
        assert evaluate_pairs(model, X, Y)[0, 0, 0] == pytest.approx(
            expect, rel=1e-14)

    def test_validation(self):
        g1 = pcv_power(1, 1)
        g2 = pcv_power(1, 1)
        with pytest.raises(SpecError):
            transport_mixture(g1, g2, {"kind": "not_product"},
                              {"kind": "normal", "sd": 1.0}, 4, 0)
        with pytest.raises(SpecError):
            transport_mixture(g1, g2, self.LAPLACE, {"kind": "nope"}, 4, 0)
        with pytest.raises(SpecError):
            transport_mixture(g1, g2, self.LAPLACE,
                              {"kind": "normal", "sd": -1.0}, 4, 0)
        with pytest.raises(SpecError):
            transport_mixture(exp_isotropic(1, 1), g2, self.LAPLACE,
                              {"kind": "normal", "sd": 1.0}, 4, 0)
