"""Gaussian sampling and the empirical squared-increment estimator."""
import numpy as np
import pytest

from covkit import (
    NotPositiveSemidefiniteError,
    PointSet,
    SpecError,
    anisotropy_field,
    batch_standard_error,
    constant_kernel,
    empirical_pcv,
    exp_isotropic,
    paciorek_mixture,
    pcv_bounded,
    pcv_power,
    pcv_theory,
    radial_profile_raw,
    sample_gaussian,
    scale,
    schoenberg_exp,
)


def _grid(n, spacing=1.0):
    pts = (np.arange(n) * spacing)[:, None]
    return PointSet(pts, dim_space=1, dim_time=0)


class TestSampleGaussian:
    def test_seed_determinism(self):
        model = exp_isotropic(2, 1, rho=[[1.0, 0.4], [0.4, 1.0]])
        pts = _grid(12)
        a = sample_gaussian(model, pts, n_real=3, seed=42)
        b = sample_gaussian(model, pts, n_real=3, seed=42)
        assert len(a) == len(b) == 3
        for ra, rb in zip(a, b):
            assert np.array_equal(ra.values, rb.values)
        c = sample_gaussian(model, pts, n_real=3, seed=43)
        assert not np.array_equal(a[0].values, c[0].values)

    def test_realization_shape_and_jitter_record(self):
        model = exp_isotropic(3, 1)
        reals = sample_gaussian(model, _grid(7), n_real=2, seed=0)
        assert reals[0].values.shape == (7, 3)
        assert reals[0].jitter_applied >= 0.0
        assert reals[0].seed == 0

    def test_constant_kernel_gives_rank_one_fields(self):
        # C = ones everywhere: each realization is one common value plus
        # jitter-level noise
        model = constant_kernel(2, 1, 1.0)
        reals = sample_gaussian(model, _grid(9), n_real=4, seed=7)
        for r in reals:
            dev = np.max(np.abs(r.values - r.values.ravel()[0]))
            assert dev < 1e-3
            assert r.jitter_applied > 0.0

    def test_exact_linearity_under_power_of_two_scaling(self):
        # covariance 4 C with the same seed gives bitwise 2x the field values
        base = exp_isotropic(2, 1, rho=[[1.0, 0.4], [0.4, 1.0]])
        pts = _grid(10)
        a = sample_gaussian(base, pts, n_real=2, seed=5)
        b = sample_gaussian(scale(base, 4.0), pts, n_real=2, seed=5)
        for ra, rb in zip(a, b):
            assert np.array_equal(rb.values, 2.0 * ra.values)

    def test_claim_gate_and_force(self):
        raw = radial_profile_raw(1, 1, "power", alpha=1.0)
        with pytest.raises(SpecError):
            sample_gaussian(raw, _grid(4), n_real=1, seed=0)
        reals = sample_gaussian(constant_kernel(1, 1, 1.0), _grid(4),
                                n_real=1, seed=0)
        assert len(reals) == 1
        with pytest.raises(SpecError):
            sample_gaussian(constant_kernel(1, 1, 1.0), _grid(4), n_real=0,
                            seed=0)

    def test_spectral_gate_rejects_indefinite_matrices(self):
        bad = radial_profile_raw(1, 1, "one_minus")
        with pytest.raises(NotPositiveSemidefiniteError):
            sample_gaussian(bad, _grid(8), n_real=1, seed=0, force=True)


class TestEmpiricalPcv:
    def test_small_case_oracle(self):
        model = exp_isotropic(2, 1, rho=[[1.0, 0.4], [0.4, 1.0]])
        pts = _grid(4)
        reals = sample_gaussian(model, pts, n_real=2, seed=3)
        est = empirical_pcv(reals, [[1.0]])
        pairs = [(1, 0), (2, 1), (3, 2)]
        assert est.counts[0] == len(pairs)
        expect = np.zeros((2, 2))
        for r in reals:
            for a, b in pairs:
                for i in range(2):
                    for j in range(2):
                        expect[i, j] += (r.values[a, i] - r.values[b, j]) ** 2
        expect /= 2.0 * len(pairs) * len(reals)
        np.testing.assert_allclose(est.estimates[0], expect, rtol=1e-13)

    def test_empty_bin_reports_nan_and_zero_count(self):
        model = exp_isotropic(1, 1)
        reals = sample_gaussian(model, _grid(4), n_real=1, seed=0)
        est = empirical_pcv(reals, [[10.0], [1.0]])
        assert est.counts[0] == 0
        assert np.all(np.isnan(est.estimates[0]))
        assert est.counts[1] == 3
        assert np.all(np.isfinite(est.estimates[1]))

    def test_lag_matching_tolerance(self):
        model = exp_isotropic(1, 1)
        pts = PointSet(np.array([[0.0], [1.0 + 5e-4]]), 1, 0)
        reals = sample_gaussian(model, pts, n_real=1, seed=0)
        tight = empirical_pcv(reals, [[1.0]], tolerance_radius=1e-9)
        loose = empirical_pcv(reals, [[1.0]], tolerance_radius=1e-3)
        assert tight.counts[0] == 0
        assert loose.counts[0] == 1

    def test_accumulation_is_order_independent(self):
        model = exp_isotropic(2, 1, rho=[[1.0, 0.4], [0.4, 1.0]])
        reals = sample_gaussian(model, _grid(10), n_real=8, seed=9)
        fwd = empirical_pcv(reals, [[1.0]])
        rev = empirical_pcv(list(reversed(reals)), [[1.0]])
        assert np.array_equal(fwd.estimates, rev.estimates)

    def test_validation(self):
        model = exp_isotropic(1, 1)
        reals = sample_gaussian(model, _grid(4), n_real=2, seed=0)
        with pytest.raises(SpecError):
            empirical_pcv([], [[1.0]])
        with pytest.raises(SpecError):
            empirical_pcv(reals, [[1.0, 0.0]])  # wrong lag dimension
        other = sample_gaussian(model, _grid(5), n_real=1, seed=0)
        with pytest.raises(SpecError):
            empirical_pcv(reals + other, [[1.0]])


class TestRoundTrip:
    def test_estimator_matches_theory_within_batch_errors(self):
        model = exp_isotropic(2, 1, rho=[[1.0, 0.5], [0.5, 1.0]],
                              scale_len=2.0)
        pts = _grid(24, spacing=0.5)
        lags = [[0.0], [0.5], [1.0], [2.0], [4.0]]
        reals = sample_gaussian(model, pts, n_real=300, seed=2024)
        est, se = batch_standard_error(reals, lags, n_batches=10)
        theory = pcv_theory(model, lags)
        diff = np.abs(est.estimates - theory)
        assert np.all(diff <= 5.0 * se + 1e-12)
        # sanity: the estimates genuinely track the curve, not just wide bars
        assert np.max(np.abs(theory)) > 0.5
        assert np.max(diff) < 0.2

    def test_batch_standard_error_validation(self):
        model = exp_isotropic(1, 1)
        reals = sample_gaussian(model, _grid(4), n_real=4, seed=0)
        with pytest.raises(SpecError):
            batch_standard_error(reals, [[1.0]], n_batches=8)
        with pytest.raises(SpecError):
            batch_standard_error(reals, [[1.0]], n_batches=1)


class TestPcvTheory:
    def test_values(self):
        model = exp_isotropic(2, 1, rho=[[1.0, 0.4], [0.4, 1.0]])
        lags = np.array([[0.0], [1.0]])
        got = pcv_theory(model, lags)
        h = np.abs(lags[:, 0])
        rho = np.array([[1.0, 0.4], [0.4, 1.0]])
        expect = 1.0 - rho[None] * np.exp(-h)[:, None, None]
        np.testing.assert_allclose(got, expect, rtol=1e-14)

    def test_matches_schoenberg_construction(self):
        gamma = pcv_bounded(2, 1, alpha=2.0)
        model = schoenberg_exp(gamma, t=1.0)
        lags = np.array([[0.3], [1.2]])
        got = pcv_theory(model, lags)
        from covkit import evaluate_pairs
        C = evaluate_pairs(model, lags, np.zeros_like(lags))
        np.testing.assert_allclose(got, 1.0 - C, rtol=1e-14)

    def test_requires_stationarity(self):
        varying = paciorek_mixture(
            pcv_bounded(1, 2, alpha=2.0),
            [anisotropy_field("iso_exp", 2, b=0.1, c=[0.2, -0.1])],
            [1.0], [1.0])
        with pytest.raises(SpecError):
            pcv_theory(varying, [[1.0, 0.0]])
        with pytest.raises(SpecError):
            pcv_theory(exp_isotropic(1, 2), [[1.0]])  # wrong lag dimension
