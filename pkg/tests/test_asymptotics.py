import csv

import numpy as np
import pytest

from hdreml.asymptotics import (
    LimitSpec,
    bc_limits,
    delta_inf,
    delta_inf_prime_at_star,
    gamma_star,
    predicted_limits,
    s_inf_prime,
    write_limit_table,
)
from hdreml.errors import DomainError
from hdreml.reml import delta, project, s_of_gamma
from hdreml.rng import replication_rng
from hdreml.simulate import draw_phenotypes, gaussian_design, make_true_model
from hdreml.spectral import MpLaw

GRID = [
    (0.1, 0.5, 1.5),
    (0.1, 0.01, 1.5),
    (0.5, 0.5, 1.5),
    (0.9, 1.0, 0.8),
    (0.5, 1.0, 3.0),
]


def spec_for(tau, omega, gamma0, sigma_eps0_sq=0.4):
    return LimitSpec(tau=tau, omega=omega, gamma0=gamma0, sigma_eps0_sq=sigma_eps0_sq)


class TestGammaStar:
    def test_correctly_specified(self):
        assert gamma_star(spec_for(0.1, 1.0, 1.5)) == 1.5

    def test_half_sparse(self):
        assert gamma_star(spec_for(0.1, 0.5, 1.5)) == 0.75

    def test_near_degenerate_ratio(self):
        spec = spec_for(0.1, 0.0005, 1.5)
        assert gamma_star(spec) == pytest.approx(0.00075, rel=1e-12)

    def test_invariants(self):
        with pytest.raises(DomainError):
            spec_for(0.0, 0.5, 1.5)
        with pytest.raises(DomainError):
            spec_for(0.1, 1.5, 1.5)
        with pytest.raises(DomainError):
            LimitSpec(tau=0.1, omega=0.5, gamma0=1.5, sigma_eps0_sq=-1.0)


class TestDeltaInf:
    @pytest.mark.parametrize("tau,omega,gamma0", GRID)
    def test_zero_at_gamma_star(self, tau, omega, gamma0):
        spec = spec_for(tau, omega, gamma0)
        assert delta_inf(spec.gamma_star, spec, MpLaw(tau)) == pytest.approx(
            0.0, abs=1e-14
        )

    @pytest.mark.parametrize("tau,omega,gamma0", GRID)
    def test_single_sign_change_on_log_grid(self, tau, omega, gamma0):
        spec = spec_for(tau, omega, gamma0)
        law = MpLaw(tau)
        gstar = spec.gamma_star
        gammas = np.logspace(np.log10(gstar / 30), np.log10(gstar * 30), 50)
        vals = np.array([delta_inf(g, spec, law) for g in gammas])
        assert np.all(vals[gammas < gstar * 0.999] > 0)
        assert np.all(vals[gammas > gstar * 1.001] < 0)

    def test_omega_one_reduces_to_correct_specification(self):
        spec = spec_for(0.25, 1.0, 2.0)
        assert spec.gamma_star == 2.0
        assert delta_inf(2.0, spec, MpLaw(0.25)) == pytest.approx(0.0, abs=1e-14)

    def test_rejects_nonpositive_gamma(self):
        with pytest.raises(DomainError):
            delta_inf(0.0, spec_for(0.1, 0.5, 1.5), MpLaw(0.1))

    def test_matches_simulated_score_mean(self):
        # tau=0.1, omega=0.5, gamma0=1.5, evaluated at gamma=1
        tau, omega, gamma0 = 0.1, 0.5, 1.5
        n, p, reps = 600, 6000, 60
        m = int(omega * p)
        spec = spec_for(tau, omega, gamma0)
        law = MpLaw(tau)
        h2_cell = spec.gamma_star / (1.0 + spec.gamma_star)
        x = np.ones((n, 1))
        vals = np.empty(reps)
        for r in range(reps):
            rng = replication_rng(9100, r)
            design = gaussian_design(n, p, rng)
            model = make_true_model(p, m, 0.4, h2_cell)
            y, _, _ = draw_phenotypes(design, model, rng)
            vals[r] = delta(1.0, project(y, x, design))
        se = vals.std(ddof=1) / np.sqrt(reps)
        assert abs(vals.mean() - delta_inf(1.0, spec, law)) < 3 * se


class TestDeltaInfPrime:
    @pytest.mark.parametrize("tau,omega,gamma0", GRID)
    def test_negative(self, tau, omega, gamma0):
        spec = spec_for(tau, omega, gamma0)
        assert delta_inf_prime_at_star(spec, MpLaw(tau)) < 0

    @pytest.mark.parametrize("tau,omega,gamma0", GRID)
    def test_finite_difference_agreement(self, tau, omega, gamma0):
        spec = spec_for(tau, omega, gamma0)
        law = MpLaw(tau)
        g = spec.gamma_star
        h = 1e-5 * max(g, 1.0)
        fd = (delta_inf(g + h, spec, law) - delta_inf(g - h, spec, law)) / (2 * h)
        assert delta_inf_prime_at_star(spec, law) == pytest.approx(fd, rel=1e-6)

    def test_linear_in_error_variance(self):
        a = delta_inf_prime_at_star(spec_for(0.1, 0.5, 1.5, 0.4), MpLaw(0.1))
        b = delta_inf_prime_at_star(spec_for(0.1, 0.5, 1.5, 0.8), MpLaw(0.1))
        assert b == pytest.approx(2.0 * a, rel=1e-12)


class TestSInfPrime:
    def test_linear_in_error_variance(self):
        spec1 = spec_for(0.1, 0.5, 1.5, 0.4)
        spec2 = spec_for(0.1, 0.5, 1.5, 0.8)
        law = MpLaw(0.1)
        assert s_inf_prime(1.0, spec2, law) == pytest.approx(
            2.0 * s_inf_prime(1.0, spec1, law), rel=1e-12
        )

    def test_smooth_over_bracket(self):
        spec = spec_for(0.1, 0.5, 1.5)
        law = MpLaw(0.1)
        gstar = spec.gamma_star
        gammas = np.linspace(gstar / 2, 2 * gstar, 25)
        vals = np.array([s_inf_prime(g, spec, law) for g in gammas])
        assert np.all(np.isfinite(vals))
        # no quadrature breakdown: successive differences stay small
        assert np.max(np.abs(np.diff(vals))) < 0.1 * (1 + np.max(np.abs(vals)))

    def test_matches_simulated_derivative(self):
        # per-replication centered difference of s(gamma) on common draws;
        # n large enough that the O(1/n) offset sits inside the 3-SE band
        tau, omega, gamma0, gamma = 0.1, 0.5, 1.5, 1.0
        n, p, reps, h = 1000, 10000, 40, 1e-3
        m = int(omega * p)
        spec = spec_for(tau, omega, gamma0)
        h2_cell = spec.gamma_star / (1.0 + spec.gamma_star)
        x = np.ones((n, 1))
        vals = np.empty(reps)
        for r in range(reps):
            rng = replication_rng(9200, r)
            design = gaussian_design(n, p, rng)
            model = make_true_model(p, m, 0.4, h2_cell)
            y, _, _ = draw_phenotypes(design, model, rng)
            sp = project(y, x, design)
            vals[r] = (s_of_gamma(gamma + h, sp) - s_of_gamma(gamma - h, sp)) / (2 * h)
        se = vals.std(ddof=1) / np.sqrt(reps)
        assert abs(vals.mean() - s_inf_prime(gamma, spec, MpLaw(tau))) < 3 * se


class TestBcLimits:
    @pytest.mark.parametrize("tau,omega,gamma0", GRID)
    def test_ratios_are_one_at_gamma_star(self, tau, omega, gamma0):
        spec = spec_for(tau, omega, gamma0)
        b1, b2, c1, c2 = bc_limits(spec.gamma_star, spec, MpLaw(tau))
        assert b2 / c2 == pytest.approx(1.0, abs=1e-8)
        assert b1 / c1 - b2 / c2 == pytest.approx(0.0, abs=1e-8)

    def test_empirical_traces_match(self):
        # direct evaluation of the trace functionals on simulated designs
        tau, omega, gamma0 = 0.1, 0.5, 1.5
        n, p, reps = 600, 6000, 5
        m = int(omega * p)
        spec = spec_for(tau, omega, gamma0)
        gstar = spec.gamma_star
        h2_cell = gstar / (1.0 + gstar)
        emp = np.empty((reps, 4))
        for r in range(reps):
            rng = replication_rng(9300, r)
            design = gaussian_design(n, p, rng)
            x = np.ones((n, 1))
            qmat, _ = np.linalg.qr(x, mode="complete")
            a = qmat[:, 1:]
            az = a.T @ design.z
            u_bar = az @ az.T / p
            az1 = az[:, :m]
            u1_bar = az1 @ az1.T / p
            lam, vec = np.linalg.eigh(u_bar)
            inv1 = vec @ np.diag(1.0 / (1.0 + gstar * lam)) @ vec.T
            sigma_true = np.eye(n - 1) + gamma0 * u1_bar
            g_mat = inv1 @ u_bar @ inv1
            emp[r] = [
                np.trace(g_mat @ sigma_true) / (n - 1),
                np.trace(inv1 @ inv1 @ sigma_true) / (n - 1),
                np.sum(lam / (1 + gstar * lam)) / (n - 1),
                np.sum(1.0 / (1 + gstar * lam)) / (n - 1),
            ]
        limits = np.array(bc_limits(gstar, spec, MpLaw(tau)))
        se = emp.std(axis=0, ddof=1) / np.sqrt(reps)
        assert np.all(np.abs(emp.mean(axis=0) - limits) < 3 * se + 1e-3)


class TestHeritabilityIdentity:
    @pytest.mark.parametrize("tau,omega,gamma0", GRID)
    def test_first_order_heritability_matches_truth(self, tau, omega, gamma0):
        # omega*gamma0/(1+omega*gamma0) equals the sparse-truth heritability
        spec = spec_for(tau, omega, gamma0)
        p = 10000
        m = max(1, int(round(omega * p)))
        model = make_true_model(p, m, 0.4, (m / p) * gamma0 / (1 + (m / p) * gamma0))
        assert model.gamma0 == pytest.approx(gamma0, rel=1e-10)
        exact = LimitSpec(tau=tau, omega=m / p, gamma0=gamma0, sigma_eps0_sq=0.4)
        assert exact.h2_true == pytest.approx(model.h2_true, rel=1e-12)


def test_predicted_limits_uses_finite_ratios():
    spec = predicted_limits(500, 5000, 50, 1.5, 0.4)
    assert spec.tau == 0.1 and spec.omega == 0.01
    assert spec.gamma_star == pytest.approx(0.015)


def test_write_limit_table(tmp_path):
    path = tmp_path / "limits.csv"
    spec = spec_for(0.1, 0.5, 1.5)
    write_limit_table(path, spec, [0.375, 0.75, 1.5])
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["gamma"] for r in rows] == ["0.375", "0.75", "1.5"]
    mid = rows[1]
    assert float(mid["delta_inf"]) == pytest.approx(0.0, abs=1e-12)
    assert float(mid["b2_inf"]) / float(mid["c2_inf"]) == pytest.approx(1.0, abs=1e-8)
    assert set(rows[0]) == {
        "tau",
        "omega",
        "gamma0",
        "gamma",
        "delta_inf",
        "s_inf_prime",
        "b1_inf",
        "b2_inf",
        "c1_inf",
        "c2_inf",
    }
