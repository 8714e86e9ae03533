"""Non-stationary constructions: field records, compact support, local shapes.

Oracles are loop-based numpy re-implementations of the batched evaluators and
scipy.special closed forms.
"""
import math

import numpy as np
import pytest
from scipy import special as sp

from covkit import (
    EvaluationError,
    PointSet,
    SpecError,
    anisotropy_field,
    askey_beta,
    assemble_gram,
    evaluate_pairs,
    exp_isotropic,
    nonstationary_matern,
    paciorek_mixture,
    pcv_bounded,
    pcv_from_g_and_c,
    pcv_power,
    smoothness_field,
)
from covkit.nonstationary import (
    field_matrices,
    field_smoothness,
    whittle_matern,
)


class TestAnisotropyFields:
    def test_constant(self):
        rec = anisotropy_field("constant", 2, matrix=[[2.0, 0.5], [0.5, 1.0]])
        got = field_matrices(rec, np.zeros((3, 2)))
        np.testing.assert_allclose(got, np.broadcast_to(
            [[2.0, 0.5], [0.5, 1.0]], (3, 2, 2)), rtol=1e-15)
        with pytest.raises(SpecError):
            anisotropy_field("constant", 2, matrix=[[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(SpecError):
            anisotropy_field("constant", 2, matrix=np.eye(3))

    def test_iso_exp(self):
        rec = anisotropy_field("iso_exp", 2, b=0.1, c=[0.2, -0.1])
        X = np.array([[0.0, 0.0], [1.0, 2.0]])
        got = field_matrices(rec, X)
        for r, x in enumerate(X):
            s = math.exp(2.0 * (0.1 + 0.2 * x[0] - 0.1 * x[1]))
            np.testing.assert_allclose(got[r], s * np.eye(2), rtol=1e-14)
        with pytest.raises(SpecError):
            anisotropy_field("iso_exp", 2, b=0.1, c=[0.2])

    def test_ellipse2d(self):
        rec = anisotropy_field("ellipse2d", 2, axes=(2.0, 0.5), angle0=0.3,
                               angle_grad=[0.4, 0.0])
        X = np.array([[0.0, 0.0], [1.5, -0.7]])
        got = field_matrices(rec, X)
        for r, x in enumerate(X):
            th = 0.3 + 0.4 * x[0]
            R = np.array([[math.cos(th), -math.sin(th)],
                          [math.sin(th), math.cos(th)]])
            np.testing.assert_allclose(got[r], R @ np.diag([2.0, 0.5]) @ R.T,
                                       rtol=1e-13, atol=1e-15)
            np.testing.assert_allclose(np.linalg.eigvalsh(got[r]), [0.5, 2.0],
                                       rtol=1e-13)
        with pytest.raises(SpecError):
            anisotropy_field("ellipse2d", 3, axes=(1.0, 1.0), angle0=0.0,
                             angle_grad=[0.0, 0.0])
        with pytest.raises(SpecError):
            anisotropy_field("ellipse2d", 2, axes=(1.0, -1.0), angle0=0.0,
                             angle_grad=[0.0, 0.0])

    def test_unknown_kind(self):
        with pytest.raises(SpecError):
            anisotropy_field("nope", 2, matrix=np.eye(2))


class TestSmoothnessFields:
    def test_constant_and_affine(self):
        rec = smoothness_field("constant", 2, value=1.5)
        np.testing.assert_array_equal(field_smoothness(rec, np.zeros((4, 2))),
                                      np.full(4, 1.5))
        aff = smoothness_field("affine", 2, intercept=1.0, slope=[0.5, 0.0])
        got = field_smoothness(aff, np.array([[1.0, 3.0], [-1.0, 0.0]]))
        np.testing.assert_allclose(got, [1.5, 0.5], rtol=1e-15)

    def test_affine_must_stay_positive(self):
        aff = smoothness_field("affine", 1, intercept=1.0, slope=[1.0])
        with pytest.raises(EvaluationError):
            field_smoothness(aff, np.array([[-2.0]]))

    def test_validation(self):
        with pytest.raises(SpecError):
            smoothness_field("constant", 1, value=0.0)
        with pytest.raises(SpecError):
            smoothness_field("affine", 2, intercept=1.0, slope=[1.0])
        with pytest.raises(SpecError):
            smoothness_field("nope", 1, value=1.0)


class TestAskeyBeta:
    def _model(self, s=2.0, nu=2.0):
        return askey_beta(pcv_power(2, 2, alpha=1.0), support=s, nu=nu)

    def test_exact_zero_outside_support(self):
        s = 2.0
        model = self._model(s=s)
        rng = np.random.default_rng(11)
        X = rng.normal(size=(50, 2))
        dirs = rng.normal(size=(50, 2))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = s + rng.uniform(0.0, 3.0, size=50)
        Y = X + dirs * radii[:, None]
        vals = evaluate_pairs(model, X, Y)
        assert np.all(vals == 0.0)

    def test_value_formula(self):
        s, nu = 2.0, 2.5
        model = self._model(s=s, nu=nu)
        X = np.array([[0.3, -0.2]])
        Y = np.array([[-0.4, 0.5]])
        r = np.linalg.norm(X[0] - Y[0])
        g = r  # pcv_power alpha 1, unit sill/scale
        expect = s ** (nu + 1.0) * sp.beta(g + 1.0, nu + 1.0) \
            * (1.0 - r / s) ** (nu + g + 1.0)
        got = evaluate_pairs(model, X, Y)[0]
        np.testing.assert_allclose(got, expect, rtol=1e-12)

    def test_coincident_diagonal(self):
        s, nu = 1.5, 2.0
        model = self._model(s=s, nu=nu)
        X = np.array([[0.7, 0.1]])
        got = evaluate_pairs(model, X, X)[0]
        np.testing.assert_allclose(np.diag(got), s ** (nu + 1.0) / (nu + 1.0),
                                   rtol=1e-14)

    def test_continuous_at_the_boundary(self):
        s = 2.0
        model = self._model(s=s)
        X = np.array([[0.0, 0.0]])
        Y = np.array([[s * (1.0 - 1e-9), 0.0]])
        assert np.max(evaluate_pairs(model, X, Y)) < 1e-6

    def test_validation(self):
        g = pcv_power(1, 2, alpha=1.0)
        with pytest.raises(SpecError):
            askey_beta(g, support=2.0, nu=1.0)  # below (d+1)/2 = 1.5
        with pytest.raises(SpecError):
            askey_beta(g, support=0.0, nu=2.0)
        with pytest.raises(SpecError):
            askey_beta(exp_isotropic(1, 2), support=2.0, nu=2.0)  # PD, not CND

    def test_negative_kernel_entries_rejected_at_eval(self):
        # constants g = 0 gives gamma = -C < 0, caught at evaluation
        g = pcv_from_g_and_c([0.0], exp_isotropic(1, 2))
        model = askey_beta(g, support=2.0, nu=2.0)
        with pytest.raises(EvaluationError):
            evaluate_pairs(model, np.zeros((1, 2)), np.ones((1, 2)))


class TestWhittleMatern:
    def test_half_integer_closed_forms(self):
        r = np.array([1e-14, 0.3, 1.0, 4.0])
        np.testing.assert_allclose(whittle_matern(0.5, r), np.exp(-r),
                                   rtol=1e-12)
        np.testing.assert_allclose(whittle_matern(1.5, r), (1.0 + r) * np.exp(-r),
                                   rtol=1e-12)

    def test_normalization_and_shape(self):
        assert whittle_matern(2.3, 0.0) == pytest.approx(1.0)
        vals = whittle_matern(2.3, np.linspace(0.0, 5.0, 20))
        assert np.all(np.diff(vals) < 0.0)
        assert np.all(vals > 0.0)


def _local_shape_oracle(fields, X, Y):
    """Loop-based prefactor and Mahalanobis form for averaged anisotropies."""
    n, d = X.shape
    m = len(fields)
    pref = np.empty((n, m, m))
    qf = np.empty((n, m, m))
    for p in range(n):
        h = X[p] - Y[p]
        for i in range(m):
            Si = field_matrices(fields[i], X[p:p + 1])[0]
            for j in range(m):
                Sj = field_matrices(fields[j], Y[p:p + 1])[0]
                avg = (Si + Sj) / 2.0
                pref[p, i, j] = (np.linalg.det(Si) * np.linalg.det(Sj)) ** 0.25 \
                    / math.sqrt(np.linalg.det(avg))
                qf[p, i, j] = h @ np.linalg.solve(avg, h)
    return pref, qf


MIXED_FIELDS = [
    anisotropy_field("iso_exp", 2, b=0.1, c=[0.2, -0.1]),
    anisotropy_field("ellipse2d", 2, axes=(1.0, 0.5), angle0=0.3,
                     angle_grad=[0.4, 0.0]),
]


class TestPaciorekMixture:
    def test_against_loop_oracle(self):
        gamma = pcv_bounded(2, 2, alpha=2.0)
        nodes, weights = [0.5, 1.5], [0.6, 0.4]
        model = paciorek_mixture(gamma, MIXED_FIELDS, nodes, weights)
        rng = np.random.default_rng(12)
        X = rng.normal(size=(6, 2))
        Y = rng.normal(size=(6, 2))
        got = evaluate_pairs(model, X, Y)
        pref, qf = _local_shape_oracle(MIXED_FIELDS, X, Y)
        g = evaluate_pairs(gamma, X, Y)
        expect = pref * sum(
            w * np.exp(-t * (qf + g)) for t, w in zip(nodes, weights))
        np.testing.assert_allclose(got, expect, rtol=1e-12)

    def test_prefactor_bounded_by_one(self):
        # determinant AM-GM: |Si|^(1/4) |Sj|^(1/4) <= |(Si+Sj)/2|^(1/2)
        rng = np.random.default_rng(13)
        X = rng.normal(size=(40, 2))
        Y = rng.normal(size=(40, 2))
        pref, _ = _local_shape_oracle(MIXED_FIELDS, X, Y)
        assert np.max(pref) <= 1.0 + 1e-12

    def test_coincident_diagonal_is_weight_sum(self):
        gamma = pcv_bounded(2, 2, alpha=2.0)
        model = paciorek_mixture(gamma, MIXED_FIELDS, [0.5, 1.5], [0.6, 0.4])
        X = np.array([[0.4, -1.0], [2.0, 0.3]])
        got = evaluate_pairs(model, X, X)
        for p in range(2):
            np.testing.assert_allclose(np.diag(got[p]), 1.0, rtol=1e-13)

    def test_stationarity_flag(self):
        gamma = pcv_bounded(1, 2, alpha=2.0)
        const = [anisotropy_field("constant", 2, matrix=np.eye(2))]
        assert paciorek_mixture(gamma, const, [1.0], [1.0]).stationary
        varying = [MIXED_FIELDS[0]]
        assert not paciorek_mixture(gamma, varying, [1.0], [1.0]).stationary

    def test_validation(self):
        gamma = pcv_bounded(2, 2, alpha=2.0)
        with pytest.raises(SpecError):
            paciorek_mixture(gamma, MIXED_FIELDS, [1.0], [1.0, 2.0])
        with pytest.raises(SpecError):
            paciorek_mixture(gamma, MIXED_FIELDS, [-1.0], [1.0])
        with pytest.raises(SpecError):
            paciorek_mixture(gamma, MIXED_FIELDS[:1], [1.0], [1.0])
        with pytest.raises(SpecError):
            paciorek_mixture(exp_isotropic(2, 2), MIXED_FIELDS, [1.0], [1.0])


class TestNonstationaryMatern:
    NU_FIELDS = [
        smoothness_field("constant", 2, value=1.2),
        smoothness_field("affine", 2, intercept=1.5, slope=[0.1, 0.0]),
    ]

    def _model(self):
        return nonstationary_matern(pcv_bounded(2, 2, alpha=2.0),
                                    MIXED_FIELDS, self.NU_FIELDS)

    def test_against_loop_oracle(self):
        model = self._model()
        rng = np.random.default_rng(14)
        X = rng.normal(size=(6, 2))
        Y = rng.normal(size=(6, 2))
        got = evaluate_pairs(model, X, Y)
        pref, qf = _local_shape_oracle(MIXED_FIELDS, X, Y)
        g = evaluate_pairs(pcv_bounded(2, 2, alpha=2.0), X, Y)
        expect = np.empty_like(got)
        for p in range(6):
            for i in range(2):
                for j in range(2):
                    ni = field_smoothness(self.NU_FIELDS[i], X[p:p + 1])[0]
                    nj = field_smoothness(self.NU_FIELDS[j], Y[p:p + 1])[0]
                    nb = (ni + nj) / 2.0
                    norm = sp.gamma(nb) / math.sqrt(sp.gamma(ni) * sp.gamma(nj))
                    arg = math.sqrt(qf[p, i, j] + g[p, i, j])
                    expect[p, i, j] = pref[p, i, j] * norm * float(
                        whittle_matern(nb, arg))
        np.testing.assert_allclose(got, expect, rtol=1e-12)

    def test_unit_coincident_diagonal(self):
        model = self._model()
        X = np.array([[0.4, -1.0], [2.0, 0.3], [-0.7, 1.1]])
        got = evaluate_pairs(model, X, X)
        for p in range(3):
            np.testing.assert_allclose(np.diag(got[p]), 1.0, rtol=1e-12)

    def test_constant_smoothness_reduces_to_local_matern(self):
        # equal constant fields: pref = 1 and C = M_nu(sqrt(h' S^-1 h + g))
        S = np.array([[1.5, 0.3], [0.3, 1.0]])
        fields = [anisotropy_field("constant", 2, matrix=S)] * 2
        nus = [smoothness_field("constant", 2, value=1.7)] * 2
        gamma = pcv_bounded(2, 2, alpha=2.0)
        model = nonstationary_matern(gamma, fields, nus)
        rng = np.random.default_rng(15)
        X = rng.normal(size=(5, 2))
        Y = rng.normal(size=(5, 2))
        got = evaluate_pairs(model, X, Y)
        g = evaluate_pairs(gamma, X, Y)
        for p in range(5):
            h = X[p] - Y[p]
            q = h @ np.linalg.solve(S, h)
            expect = whittle_matern(1.7, np.sqrt(q + g[p]))
            np.testing.assert_allclose(got[p], expect, rtol=1e-12)

    def test_kernel_enters_only_through_the_argument(self):
        # same fields, two different additive kernels: the ratio is a ratio of
        # radial profiles, independent of the anisotropy prefactor
        S = np.array([[1.5, 0.3], [0.3, 1.0]])
        fields = [anisotropy_field("constant", 2, matrix=S)] * 2
        nus = [smoothness_field("constant", 2, value=1.7)] * 2
        ga = pcv_bounded(2, 2, alpha=2.0)
        gb = pcv_power(2, 2, alpha=1.0)
        ma = nonstationary_matern(ga, fields, nus)
        mb = nonstationary_matern(gb, fields, nus)
        X = np.array([[0.8, -0.6]])
        Y = np.array([[-0.2, 0.5]])
        h = X[0] - Y[0]
        q = h @ np.linalg.solve(S, h)
        va = evaluate_pairs(ma, X, Y)[0, 0, 1]
        vb = evaluate_pairs(mb, X, Y)[0, 0, 1]
        ra = float(whittle_matern(1.7, np.sqrt(q + evaluate_pairs(ga, X, Y)[0, 0, 1])))
        rb = float(whittle_matern(1.7, np.sqrt(q + evaluate_pairs(gb, X, Y)[0, 0, 1])))
        assert va / vb == pytest.approx(ra / rb, rel=1e-12)

    def test_positive_definite_on_a_grid(self):
        model = self._model()
        xs = np.linspace(-1.5, 1.5, 5)
        pts = np.array([[a, b] for a in xs for b in xs])
        gram = assemble_gram(model, PointSet(pts, dim_space=2, dim_time=0))
        vals = np.linalg.eigvalsh(gram.dense.entries)
        assert vals[0] > -1e-10 * vals[-1]

    def test_merely_positive_definite_augmentation_fails(self):
        # Regression: replacing the additive kernel's CND requirement with
        # plain positive definiteness breaks positive definiteness of the
        # model. On a 9-point line with unit anisotropy, nu = 3/2 and the
        # augmentation e^{-r} (positive definite, not CND), the scaled profile
        # 2^nu M_nu(sqrt(r^2 + e^{-r})) has a negative eigenvalue.
        x = np.arange(9) * 0.5
        r = np.abs(x[:, None] - x[None, :])
        mat = 2.0 ** 1.5 * whittle_matern(1.5, np.sqrt(r**2 + np.exp(-r)))
        vals = np.linalg.eigvalsh(mat)
        assert vals[0] == pytest.approx(-0.21824990859172114, rel=1e-8)
        # the builder refuses such kernels at construction
        with pytest.raises(SpecError):
            nonstationary_matern(exp_isotropic(2, 2), MIXED_FIELDS,
                                 self.NU_FIELDS)

    def test_affine_smoothness_positivity_enforced_at_eval(self):
        nus = [smoothness_field("affine", 2, intercept=0.5, slope=[1.0, 0.0])] * 2
        model = nonstationary_matern(pcv_bounded(2, 2, alpha=2.0),
                                     MIXED_FIELDS, nus)
        X = np.array([[-2.0, 0.0]])  # nu(x) = -1.5
        with pytest.raises(EvaluationError):
            evaluate_pairs(model, X, X)

    def test_validation(self):
        gamma = pcv_bounded(2, 2, alpha=2.0)
        with pytest.raises(SpecError):
            nonstationary_matern(gamma, MIXED_FIELDS, self.NU_FIELDS[:1])
        with pytest.raises(SpecError):
            nonstationary_matern(gamma, MIXED_FIELDS,
                                 [{"kind": "nope"}, {"kind": "nope"}])
