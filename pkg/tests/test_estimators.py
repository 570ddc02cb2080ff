import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_density_matrix, random_pure_ket
from entmem.detection import CountRecord, projection_probability
from entmem.errors import ConfigurationError, EstimationError, ValidationError
from entmem.estimators import (
    CHSH_ANGLES,
    EstimateWithError,
    TomographySettingSet,
    cauchy_schwarz_R,
    chsh_E,
    chsh_E_analytic,
    chsh_S,
    chsh_S_analytic,
    chsh_S_literal,
    is_nonclassical_R,
    mc_error,
    tomo_linear,
    tomo_log_likelihood,
    tomo_mle,
    visibility_fit,
    _neg_log_likelihood_and_grad,
    _clamped_physical,
    _lower_cholesky_factor,
    _params_from_t,
    _projector_matrix,
)
from entmem.qstate import (
    TwoQubitState,
    bell_psi_plus,
    fidelity,
    ket_h,
    ket_v,
    tensor_product,
    trace_distance,
)

SETTINGS = TomographySettingSet.standard()


def exact_records(rho: TwoQubitState, n_per_group: float = 1e6) -> list[CountRecord]:
    """Records whose frequencies are the exact Born probabilities."""
    out = []
    for s in SETTINGS.settings:
        p = projection_probability(rho, s)
        out.append(
            CountRecord(
                setting_label=s.label,
                singles_1=int(4 * n_per_group),
                singles_2=int(4 * n_per_group),
                coincidences=int(round(p * n_per_group)),
                triples=0,
                acquisition_s=1.0,
                seed=0,
            )
        )
    return out


def poisson_records(rho, n_per_group, rng) -> list[CountRecord]:
    out = []
    for s in SETTINGS.settings:
        p = projection_probability(rho, s)
        c = int(rng.poisson(p * n_per_group))
        out.append(
            CountRecord(s.label, int(10 * n_per_group), int(10 * n_per_group), c, 0, 1.0, 0)
        )
    return out


class TestTomographySettingSet:
    def test_sixteen_settings_spanning(self):
        assert len(SETTINGS.settings) == 16
        labels = {s.label for s in SETTINGS.settings}
        assert labels == {a + b for a in "HVDR" for b in "HVDR"}

    def test_duplicate_settings_rejected(self):
        dup = tuple(list(SETTINGS.settings[:15]) + [SETTINGS.settings[0]])
        with pytest.raises(ConfigurationError):
            TomographySettingSet(dup)


class TestTomoLinear:
    def test_recovers_basis_state(self):
        rho = tensor_product(ket_h(), ket_v())
        est = tomo_linear(exact_records(rho))
        assert np.max(np.abs(est - rho.rho)) < 1e-10

    def test_recovers_bell_state(self):
        rho = bell_psi_plus()
        est = tomo_linear(exact_records(rho))
        assert np.max(np.abs(est - rho.rho)) < 1e-10

    def test_recovers_maximally_mixed(self):
        rho = TwoQubitState.maximally_mixed()
        est = tomo_linear(exact_records(rho))
        assert np.max(np.abs(est - rho.rho)) < 1e-10

    def test_hermitian_unit_trace(self, rng):
        rho = random_density_matrix(rng)
        est = tomo_linear(exact_records(rho, 1e9))
        assert np.max(np.abs(est - est.conj().T)) < 1e-12
        assert np.trace(est).real == pytest.approx(1.0, abs=1e-9)

    def test_zero_group_total_rejected(self):
        recs = exact_records(bell_psi_plus())
        recs = [
            CountRecord(r.setting_label, r.singles_1, r.singles_2, 0, 0, r.acquisition_s, 0)
            for r in recs
        ]
        with pytest.raises(EstimationError):
            tomo_linear(recs)

    def test_missing_setting_rejected(self):
        with pytest.raises(ConfigurationError):
            tomo_linear(exact_records(bell_psi_plus())[:15])


class TestTomoMle:
    def test_gradient_matches_finite_differences(self, rng):
        rho = random_density_matrix(rng)
        records = exact_records(rho, 1e4)
        projectors = np.stack([_projector_matrix(s) for s in SETTINGS.settings])
        counts = np.array([r.coincidences for r in records], dtype=float)
        exposures = np.full(16, 1e4)
        t0 = rng.normal(size=16)
        f0, g0 = _neg_log_likelihood_and_grad(t0, projectors, counts, exposures)
        eps = 1e-6
        for k in range(16):
            tp = t0.copy()
            tp[k] += eps
            fp, _ = _neg_log_likelihood_and_grad(tp, projectors, counts, exposures)
            tm = t0.copy()
            tm[k] -= eps
            fm, _ = _neg_log_likelihood_and_grad(tm, projectors, counts, exposures)
            numeric = (fp - fm) / (2 * eps)
            assert numeric == pytest.approx(g0[k], rel=1e-4, abs=1e-4)

    def test_cholesky_factor_roundtrip(self, rng):
        rho = random_density_matrix(rng)
        t = _lower_cholesky_factor(rho.rho)
        assert np.allclose(t, np.tril(t))
        assert np.max(np.abs(t.conj().T @ t - rho.rho)) < 1e-10

    def test_noiseless_bell_reconstruction(self):
        est = tomo_mle(exact_records(bell_psi_plus(), 1e6))
        assert fidelity(est, bell_psi_plus()) > 0.9999

    def test_maximally_mixed_purity(self):
        est = tomo_mle(exact_records(TwoQubitState.maximally_mixed(), 1e6))
        assert est.purity() < 0.26

    def test_reconstruction_consistency_random_states(self, rng):
        for _ in range(10):
            rho = random_density_matrix(rng)
            est = tomo_mle(exact_records(rho, 1e9))
            assert trace_distance(est.rho, rho.rho) < 1e-6

    def test_likelihood_beats_clamped_linear_inversion(self, rng):
        rho = random_density_matrix(rng)
        records = poisson_records(rho, 3e3, rng)
        lin = tomo_linear(records)
        est = tomo_mle(records, init=lin)
        ll_mle = tomo_log_likelihood(est.rho, records)
        ll_lin = tomo_log_likelihood(_clamped_physical(lin), records)
        assert ll_mle >= ll_lin - 1e-6

    def test_output_physical_on_noisy_counts(self, rng):
        for _ in range(5):
            rho = random_density_matrix(rng, rank=2)
            est = tomo_mle(poisson_records(rho, 500, rng))
            vals = np.linalg.eigvalsh(est.rho)
            assert vals.min() >= -1e-12
            assert np.trace(est.rho).real == pytest.approx(1.0, abs=1e-10)


class TestChshE:
    def test_perfect_correlation(self):
        assert chsh_E(500, 0, 0, 500) == 1.0

    def test_no_correlation(self):
        assert chsh_E(250, 250, 250, 250) == 0.0

    def test_zero_total_rejected(self):
        with pytest.raises(EstimationError):
            chsh_E(0, 0, 0, 0)

    def test_analytic_bell_at_standard_angles(self):
        e = chsh_E_analytic(bell_psi_plus(), 0.0, np.pi / 8)
        assert e == pytest.approx(-np.sqrt(2) / 2, abs=1e-12)

    def test_analytic_closed_form(self, rng):
        # E = -cos(2(t1 + t2)) on the ideal state
        for _ in range(20):
            t1, t2 = rng.uniform(0, np.pi, 2)
            e = chsh_E_analytic(bell_psi_plus(), t1, t2)
            assert e == pytest.approx(-np.cos(2 * (t1 + t2)), abs=1e-12)


class TestChshS:
    def test_bell_reaches_tsirelson(self):
        assert chsh_S_analytic(bell_psi_plus()) == pytest.approx(2 * np.sqrt(2), abs=1e-9)

    def test_maximally_mixed_zero(self):
        assert chsh_S_analytic(TwoQubitState.maximally_mixed()) == pytest.approx(0.0, abs=1e-12)

    def test_never_exceeds_four(self, rng):
        for _ in range(200):
            e = rng.uniform(-1, 1, size=(2, 2))
            assert chsh_S(e) <= 4.0 + 1e-12

    def test_arm_exchange_invariance(self, rng):
        for _ in range(100):
            e = rng.uniform(-1, 1, size=(2, 2))
            assert chsh_S(e) == pytest.approx(chsh_S(e.T), abs=1e-12)

    def test_separable_states_respect_classical_bound(self, rng):
        for _ in range(50):
            # random mixture of product states
            rho = np.zeros((4, 4), dtype=complex)
            weights = rng.dirichlet(np.ones(4))
            for w in weights:
                a = random_pure_ket(rng)[:2]
                b = random_pure_ket(rng)[:2]
                a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
                v = np.kron(a, b)
                rho += w * np.outer(v, v.conj())
            state = TwoQubitState(rho / np.trace(rho).real)
            assert chsh_S_analytic(state) <= 2.0 + 1e-9

    def test_literal_formula_reported(self):
        e = np.array([[-0.7, 0.7], [0.7, 0.7]])
        assert chsh_S_literal(e) == pytest.approx(abs(-0.7 - 0.7 + 0.7 + 0.7))
        assert chsh_S(e) == pytest.approx(2.8)

    def test_werner_scaling(self):
        w = 0.85
        rho = TwoQubitState(w * bell_psi_plus().rho + (1 - w) * np.eye(4) / 4)
        assert chsh_S_analytic(rho) == pytest.approx(w * 2 * np.sqrt(2), abs=1e-10)


class TestVisibilityFit:
    def _fringe(self, thetas, b, v, phi0):
        return b * (1.0 + v * np.cos(4 * thetas - phi0))

    def test_noiseless_full_visibility(self):
        thetas = np.linspace(0, np.pi / 2, 16)
        counts = self._fringe(thetas, 500.0, 1.0, 0.3)
        res = visibility_fit(list(zip(thetas, counts)), n_resamples=100)
        assert res.estimate.value == pytest.approx(1.0, abs=1e-6)
        assert res.nonclassical

    def test_planted_parameters_recovered(self):
        thetas = np.linspace(0, np.pi / 2, 16)
        counts = self._fringe(thetas, 433.0, 0.62, -0.8)
        res = visibility_fit(list(zip(thetas, counts)), n_resamples=100)
        assert res.estimate.value == pytest.approx(0.62, abs=1e-9)
        assert res.baseline == pytest.approx(433.0, rel=1e-9)
        assert res.phase == pytest.approx(-0.8, abs=1e-9)

    def test_too_few_points_rejected(self):
        thetas = np.linspace(0, np.pi / 2, 6)
        with pytest.raises(ValidationError):
            visibility_fit(list(zip(thetas, self._fringe(thetas, 100, 0.5, 0))))

    def test_span_must_cover_period(self):
        thetas = np.linspace(0, np.pi / 8, 10)
        with pytest.raises(ValidationError):
            visibility_fit(list(zip(thetas, self._fringe(thetas, 100, 0.5, 0))))

    def test_all_zero_counts_rejected(self):
        thetas = np.linspace(0, np.pi / 2, 12)
        with pytest.raises(EstimationError):
            visibility_fit([(float(t), 0.0) for t in thetas])

    def test_poisson_weighted_fit_option(self):
        rng = np.random.default_rng(12)
        thetas = np.linspace(0, np.pi / 2, 16)
        counts = rng.poisson(self._fringe(thetas, 900.0, 0.75, 0.2)).astype(float)
        plain = visibility_fit(list(zip(thetas, counts)), n_resamples=100)
        weighted = visibility_fit(
            list(zip(thetas, counts)), poisson_weights=True, n_resamples=100
        )
        assert plain.estimate.value == pytest.approx(0.75, abs=0.05)
        assert weighted.estimate.value == pytest.approx(0.75, abs=0.05)
        assert weighted.estimate.value != plain.estimate.value

    def test_coverage_of_planted_visibility(self):
        # 3-sigma coverage of the Monte-Carlo error bar, 95% over 500 trials
        rng = np.random.default_rng(5)
        thetas = np.linspace(0, np.pi / 2, 16)
        truth = self._fringe(thetas, 800.0, 0.82, 0.4)
        hits = 0
        b_errs, phi_errs = [], []
        for trial in range(500):
            noisy = rng.poisson(truth).astype(float)
            res = visibility_fit(list(zip(thetas, noisy)), n_resamples=100, seed=trial)
            if abs(res.estimate.value - 0.82) <= 3 * res.estimate.sigma:
                hits += 1
            b_errs.append(abs(res.baseline - 800.0) / 800.0)
            phi_errs.append(abs(res.phase - 0.4))
        assert hits >= 0.95 * 500
        assert np.mean(b_errs) < 0.02
        assert np.mean(phi_errs) < 0.05


class TestCauchySchwarz:
    def test_published_pre_storage_value(self):
        assert cauchy_schwarz_R(150.0, 1.2, 1.38) == pytest.approx(13587, abs=1.0)

    def test_published_post_storage_value(self):
        assert round(cauchy_schwarz_R(14.0, 1.2, 2.0)) == 82

    def test_coherent_boundary(self):
        r = cauchy_schwarz_R(1.0, 1.0, 1.0)
        assert r == 1.0
        assert not is_nonclassical_R(r)

    def test_nonpositive_autocorrelation_rejected(self):
        with pytest.raises(EstimationError):
            cauchy_schwarz_R(10.0, 0.0, 1.0)


class TestMcError:
    def test_sqrt_n_oracle(self):
        est = mc_error(lambda c: float(c[0]), np.array([10000.0]), n_resamples=1000, seed=3)
        assert est.sigma == pytest.approx(100.0, rel=0.10)
        assert est.value == pytest.approx(10000.0, rel=0.01)

    def test_constant_estimator_zero_sigma(self):
        est = mc_error(lambda c: 7.5, np.array([100.0, 200.0]), n_resamples=200, seed=1)
        assert est.sigma == 0.0
        assert est.value == 7.5

    def test_deterministic_per_seed(self):
        a = mc_error(lambda c: float(c.sum()), np.array([50.0, 60.0]), 200, seed=9)
        b = mc_error(lambda c: float(c.sum()), np.array([50.0, 60.0]), 200, seed=9)
        assert (a.value, a.sigma) == (b.value, b.sigma)

    def test_failure_fraction_guard(self):
        def flaky(counts):
            if counts[0] % 2 == 0:
                raise RuntimeError("boom")
            return 1.0

        with pytest.raises(EstimationError):
            mc_error(flaky, np.array([1000.0]), n_resamples=200, seed=2)

    def test_minimum_resamples_enforced(self):
        with pytest.raises(ValidationError):
            mc_error(lambda c: 0.0, np.array([1.0]), n_resamples=50)


class TestEstimateWithError:
    def test_sigma_requires_enough_resamples(self):
        with pytest.raises(ValidationError):
            EstimateWithError(1.0, 0.1, 50)
        EstimateWithError(1.0, 0.0, 0)  # zero sigma always fine
        EstimateWithError(1.0, 0.1, 100)
