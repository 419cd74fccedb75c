import json

import numpy as np
import pytest

from hdreml.errors import DegenerateKernelError, DomainError
from hdreml.reml import (
    GAMMA_CAP,
    ProjectedSpectrum,
    RemlFit,
    delta,
    fit,
    fit_dense_oracle,
    fit_from_json,
    fit_to_json,
    project,
    s_of_gamma,
)
from hdreml.rng import replication_rng
from hdreml.simulate import (
    StandardizedDesign,
    draw_allele_freqs,
    draw_genotypes,
    draw_phenotypes,
    gaussian_design,
    make_true_model,
    standardize,
)


def simulate_instance(seed, n, p, m, h2=0.6, sigma_eps_sq=0.4, kind="gaussian"):
    rng = replication_rng(seed, 0)
    if kind == "snp":
        design = standardize(draw_genotypes(draw_allele_freqs(p, rng), n, rng))
    else:
        design = gaussian_design(n, p, rng)
    model = make_true_model(p, m, sigma_eps_sq, h2, mu=1.0)
    y, _, _ = draw_phenotypes(design, model, rng)
    return y, np.ones((n, 1)), design


def dense_sigma_sq(y, x, design, gamma):
    """Dense-route profiled error variance y'P^2y / tr(P), no projection."""
    n = y.size
    v = np.eye(n) + gamma * (design.z @ design.z.T / design.p)
    vi = np.linalg.inv(v)
    vix = vi @ x
    wi = np.linalg.inv(x.T @ vix)
    py = vi @ y - vix @ (wi @ (vix.T @ y))
    tr_p = np.trace(vi) - np.trace(wi @ (vix.T @ vix))
    return float(py @ py) / tr_p


class TestProject:
    def test_trace_preservation_intercept(self):
        y, x, design = simulate_instance(30, 60, 300, 300)
        spec = project(y, x, design)
        assert spec.q == 1 and spec.lambdas.size == 59
        centered = design.z - design.z.mean(axis=0)
        expected = np.sum(centered * design.z) / design.p
        assert np.sum(spec.lambdas) == pytest.approx(expected, rel=1e-8)

    def test_hand_instance_matches_dense_eigensolver(self):
        # 3 x 2 standardized design; oracle eigendecomposes the centered
        # kernel (I - 11'/3) K (I - 11'/3) and drops its null direction
        z = np.array([[1.0, -1.0], [0.0, 1.0], [-1.0, 0.0]])
        design = StandardizedDesign(z=z)
        y = np.array([0.3, -0.1, 2.0])
        spec = project(y, np.ones((3, 1)), design)
        kernel = z @ z.T / 2.0
        c = np.eye(3) - np.ones((3, 3)) / 3.0
        dense = np.linalg.eigvalsh(c @ kernel @ c)
        assert spec.lambdas == pytest.approx(dense[1:], abs=1e-12)

    def test_rank_deficient_x(self):
        y, _, design = simulate_instance(31, 40, 80, 80)
        x = np.ones((40, 2))  # duplicated intercept
        with pytest.raises(DomainError):
            project(y, x, design)

    def test_rotation_within_complement_preserves_energy(self):
        y, x, design = simulate_instance(32, 50, 100, 100)
        spec = project(y, x, design)
        rng = replication_rng(32, 1)
        # rotate y inside the complement of span(X)
        qmat, _ = np.linalg.qr(x, mode="complete")
        a = qmat[:, 1:]
        rot = np.linalg.qr(rng.standard_normal((49, 49)))[0]
        y_rot = x @ np.linalg.lstsq(x, y, rcond=None)[0] + a @ (rot @ (a.T @ y))
        spec_rot = project(y_rot, x, design)
        assert np.array_equal(spec.lambdas, spec_rot.lambdas)
        assert np.sum(spec.w**2) == pytest.approx(np.sum(spec_rot.w**2), rel=1e-10)

    def test_shape_mismatch(self):
        y, x, design = simulate_instance(33, 20, 30, 30)
        with pytest.raises(DomainError):
            project(y[:-1], x, design)
        with pytest.raises(DomainError):
            project(y, np.ones((20, 20)), design)


class TestDelta:
    def test_equal_eigenvalues_vanish(self):
        spec = ProjectedSpectrum(
            lambdas=np.full(10, 0.7), w=np.linspace(-1, 2, 10), n=11, p=20, q=1
        )
        for gamma in (0.0, 0.5, 3.0):
            assert delta(gamma, spec) == pytest.approx(0.0, abs=1e-14)

    def test_zero_kernel_rejected(self):
        spec = ProjectedSpectrum(
            lambdas=np.zeros(5), w=np.ones(5), n=6, p=10, q=1
        )
        with pytest.raises(DegenerateKernelError):
            delta(1.0, spec)

    def test_sign_change_brackets_limit_dense_truth(self):
        # m = p: gamma_hat -> gamma0; delta positive below, negative above
        y, x, design = simulate_instance(34, 800, 8000, 8000, kind="snp")
        spec = project(y, x, design)
        gamma0 = 1.5
        assert delta(0.5 * gamma0, spec) > 0
        assert delta(2.0 * gamma0, spec) < 0

    def test_sparse_truth_root_near_omega_gamma0(self):
        # omega = 0.5, gamma0 = 1.5: root near 0.75 for large n
        n, p, m = 1000, 10000, 5000
        h2 = 0.75 / 1.75  # per-effect gamma0 = 1.5 at omega = 0.5
        y, x, design = simulate_instance(35, n, p, m, h2=h2)
        result = fit(project(y, x, design))
        assert result.gamma_hat == pytest.approx(0.75, abs=0.6)

    def test_rejects_negative_gamma(self):
        spec = ProjectedSpectrum(
            lambdas=np.array([1.0, 2.0]), w=np.array([1.0, 1.0]), n=3, p=4, q=1
        )
        with pytest.raises(DomainError):
            delta(-0.1, spec)


class TestSOfGamma:
    def test_gamma_zero_residual_mean_square(self):
        y, x, design = simulate_instance(36, 40, 80, 80)
        spec = project(y, x, design)
        assert s_of_gamma(0.0, spec) == pytest.approx(
            np.sum(spec.w**2) / (40 - 1), rel=1e-12
        )

    def test_hand_three_point_spectrum(self):
        # (1/4 + 1/9 + 1/16) / (1/2 + 1/3 + 1/4) = (61/144)/(13/12) = 61/156
        spec = ProjectedSpectrum(
            lambdas=np.array([1.0, 2.0, 3.0]),
            w=np.array([1.0, 1.0, 1.0]),
            n=4,
            p=5,
            q=1,
        )
        assert s_of_gamma(1.0, spec) == pytest.approx(61.0 / 156.0, rel=1e-14)

    def test_monotone_bounded_on_grid(self):
        spec = ProjectedSpectrum(
            lambdas=np.array([1.0, 2.0, 3.0]),
            w=np.array([1.0, 1.0, 1.0]),
            n=4,
            p=5,
            q=1,
        )
        grid = [0.0, 0.5, 1.0, 5.0, 50.0, 500.0]
        vals = [s_of_gamma(g, spec) for g in grid]
        assert np.all(np.diff(vals) < 0)
        assert all(v > 0 for v in vals)


class TestFit:
    def test_exact_output_identities(self):
        y, x, design = simulate_instance(37, 150, 900, 900)
        result = fit(project(y, x, design), m_hint=900)
        assert result.h2_hat == result.gamma_hat / (1.0 + result.gamma_hat)
        assert result.sigma_alpha_sq_hat == result.gamma_hat * result.sigma_eps_sq_hat
        assert result.adjusted_gamma == result.gamma_hat  # p = m_hint
        assert result.sigma_eps_sq_hat > 0

    def test_boundary_on_pure_noise(self):
        # no genetic signal: find a seed whose projected contrast has
        # delta(0) <= 0 and check the boundary convention
        x = np.ones((60, 1))
        for seed in range(60, 80):
            rng = replication_rng(seed, 0)
            design = gaussian_design(60, 300, rng)
            y = rng.normal(0.0, 1.0, 60)
            spec = project(y, x, design)
            if delta(0.0, spec) <= 0:
                result = fit(spec)
                assert result.boundary and result.gamma_hat == 0.0
                assert result.sigma_eps_sq_hat == pytest.approx(
                    np.sum(spec.w**2) / 59, rel=1e-12
                )
                assert result.h2_hat == 0.0
                return
        pytest.fail("no noise seed produced a nonpositive delta(0)")

    def test_scale_equivariance_power_of_two(self):
        y, x, design = simulate_instance(38, 100, 500, 500)
        spec = project(y, x, design)
        spec2 = ProjectedSpectrum(
            lambdas=spec.lambdas, w=2.0 * spec.w, n=spec.n, p=spec.p, q=spec.q
        )
        r1, r2 = fit(spec), fit(spec2)
        assert r2.gamma_hat == r1.gamma_hat
        assert r2.sigma_eps_sq_hat == 4.0 * r1.sigma_eps_sq_hat

    def test_scale_equivariance_general(self):
        y, x, design = simulate_instance(39, 100, 500, 500)
        r1 = fit(project(y, x, design))
        r2 = fit(project(3.0 * y, x, design))
        assert r2.gamma_hat == pytest.approx(r1.gamma_hat, rel=1e-7)
        assert r2.sigma_eps_sq_hat == pytest.approx(
            9.0 * r1.sigma_eps_sq_hat, rel=1e-7
        )

    def test_location_invariance(self):
        y, x, design = simulate_instance(40, 100, 500, 500)
        spec1 = project(y, x, design)
        spec2 = project(y + x @ np.array([17.5]), x, design)
        assert np.array_equal(spec1.lambdas, spec2.lambdas)
        r1, r2 = fit(spec1), fit(spec2)
        assert r2.gamma_hat == pytest.approx(r1.gamma_hat, rel=1e-6)
        assert r2.sigma_eps_sq_hat == pytest.approx(r1.sigma_eps_sq_hat, rel=1e-6)

    @pytest.mark.parametrize("gamma", [0.1, 0.7, 2.0, 9.0])
    def test_trace_identity(self, gamma):
        y, x, design = simulate_instance(41, 80, 240, 240)
        spec = project(y, x, design)
        d = 1.0 + gamma * spec.lambdas
        total = np.sum(1.0 / d) + gamma * np.sum(spec.lambdas / d)
        assert total == pytest.approx(spec.n - spec.q, rel=1e-8)

    def test_non_identifiable_equal_eigenvalues(self):
        spec = ProjectedSpectrum(
            lambdas=np.full(8, 1.3), w=np.linspace(0.5, 2.0, 8), n=9, p=16, q=1
        )
        result = fit(spec)
        assert not result.identifiable
        assert result.boundary and result.gamma_hat == 0.0

    def test_no_upper_root_returns_cap(self):
        # w^2 proportional to lambda^2 keeps the score positive at any gamma
        lam = np.array([0.5, 1.0, 2.0])
        spec = ProjectedSpectrum(lambdas=lam, w=lam, n=4, p=6, q=1)
        assert delta(GAMMA_CAP, spec) > 0
        result = fit(spec)
        assert result.boundary and result.gamma_hat == GAMMA_CAP

    def test_trace_identity_on_snp_instance(self):
        y, x, design = simulate_instance(42, 120, 600, 60, kind="snp")
        spec = project(y, x, design)
        d = 1.0 + 1.5 * spec.lambdas
        total = np.sum(1.0 / d) + 1.5 * np.sum(spec.lambdas / d)
        assert total == pytest.approx(spec.n - spec.q, rel=1e-8)


class TestDenseOracle:
    def test_agreement_on_small_instance(self):
        y, x, design = simulate_instance(43, 50, 100, 30, kind="snp")
        spec = project(y, x, design)
        result = fit(spec)
        step = 0.05
        grid = np.arange(0.0, 8.0 + step, step)
        oracle = fit_dense_oracle(y, x, design, grid)
        assert abs(oracle.gamma_hat - result.gamma_hat) <= step
        # independent dense route at the matched gamma
        assert dense_sigma_sq(y, x, design, result.gamma_hat) == pytest.approx(
            result.sigma_eps_sq_hat, abs=1e-6
        )

    def test_oracle_argmax_within_one_step_of_root(self):
        y, x, design = simulate_instance(45, 60, 150, 150)
        result = fit(project(y, x, design))
        assert 0.0 < result.gamma_hat < 4.0  # seed chosen to fit interior
        step = 0.1
        grid = np.arange(0.0, 8.0 + step, step)
        oracle = fit_dense_oracle(y, x, design, grid)
        assert abs(oracle.gamma_hat - result.gamma_hat) <= step

    def test_flat_profile_matches_fit_boundary(self):
        # kernel proportional to the identity on the contrast space
        n = 12
        x = np.ones((n, 1))
        qmat, _ = np.linalg.qr(x, mode="complete")
        a = qmat[:, 1:]
        design = StandardizedDesign(z=a * np.sqrt(n - 1))
        rng = replication_rng(45, 0)
        y = rng.normal(0.0, 1.0, n)
        oracle = fit_dense_oracle(y, x, design, np.linspace(0.0, 3.0, 31))
        assert oracle.boundary and oracle.gamma_hat == 0.0 and not oracle.identifiable
        spec = project(y, x, design)
        result = fit(spec)
        assert result.boundary and result.gamma_hat == 0.0 and not result.identifiable

    def test_refuses_large_instances(self):
        y, x, design = simulate_instance(46, 250, 300, 300)
        with pytest.raises(DomainError):
            fit_dense_oracle(y, x, design, [0.0, 1.0])


class TestSerialization:
    def test_fixed_keys(self):
        y, x, design = simulate_instance(47, 60, 120, 120)
        result = fit(project(y, x, design), m_hint=40)
        raw = json.loads(fit_to_json(result))
        assert set(raw) == {
            "gamma_hat",
            "sigma_eps_sq_hat",
            "sigma_alpha_sq_hat",
            "h2_hat",
            "adjusted_gamma",
            "boundary",
            "iterations",
        }
        assert raw["adjusted_gamma"] == pytest.approx(3.0 * result.gamma_hat)

    def test_roundtrip(self):
        y, x, design = simulate_instance(48, 60, 120, 120)
        result = fit(project(y, x, design))
        back = fit_from_json(fit_to_json(result))
        assert back.gamma_hat == result.gamma_hat
        assert back.sigma_eps_sq_hat == result.sigma_eps_sq_hat
        assert back.boundary == result.boundary

    def test_missing_field_rejected(self):
        with pytest.raises(DomainError):
            fit_from_json('{"gamma_hat": 1.0}')

    def test_fit_types(self):
        result = RemlFit(
            gamma_hat=1.0,
            sigma_eps_sq_hat=0.4,
            sigma_alpha_sq_hat=0.4,
            h2_hat=0.5,
            adjusted_gamma=None,
            boundary=False,
            bracket=(0.5, 2.0),
            iterations=9,
        )
        raw = json.loads(fit_to_json(result))
        assert raw["adjusted_gamma"] is None
