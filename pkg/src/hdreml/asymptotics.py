"""Closed-form limits of the REML estimator under sparse truth.

With n/p -> tau, m/p -> omega, true ratio gamma0 and true error variance
sigma_eps0_sq, the variance-ratio estimate converges to
gamma_star = omega * gamma0 and the population score balance has the limit

    delta_inf(gamma) = sigma_eps0_sq * (gamma_star/gamma - 1)
                       * (h_{2,0}/h_{1,0} - h_{2,1}/h_{1,1})(gamma),

positive below gamma_star, zero at it, negative above.  All limits are
expressed through the resolvent moments h_{k,l} of the M-P law with ratio
tau (see spectral.h_kl).
"""

import csv
from dataclasses import dataclass, field

from .errors import DomainError
from .spectral import MpLaw, QuadratureRule, h_kl


@dataclass(frozen=True)
class LimitSpec:
    """Limiting ratios and true variance parameters.

    tau = lim n/p and omega = lim m/p must lie in (0, 1]; gamma_star is
    derived as omega * gamma0.
    """

    tau: float
    omega: float
    gamma0: float
    sigma_eps0_sq: float
    gamma_star: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise DomainError(f"tau must be in (0, 1], got {self.tau}")
        if not 0.0 < self.omega <= 1.0:
            raise DomainError(f"omega must be in (0, 1], got {self.omega}")
        if self.gamma0 < 0 or self.sigma_eps0_sq <= 0:
            raise DomainError("gamma0 must be >= 0 and sigma_eps0_sq > 0")
        object.__setattr__(self, "gamma_star", self.omega * self.gamma0)

    @property
    def h2_true(self) -> float:
        """Heritability implied by the sparse truth, omega*gamma0/(1+omega*gamma0)."""
        return self.gamma_star / (1.0 + self.gamma_star)


def gamma_star(spec: LimitSpec) -> float:
    """Probability limit of the variance-ratio estimate, omega * gamma0."""
    return spec.gamma_star


def delta_inf(
    gamma: float, spec: LimitSpec, law: MpLaw, rule: QuadratureRule | None = None
) -> float:
    """Limit of the score balance at a fixed gamma > 0."""
    if gamma <= 0:
        raise DomainError(f"gamma must be > 0, got {gamma}")
    ratio_gap = h_kl(2, 0, gamma, law, rule) / h_kl(1, 0, gamma, law, rule) - h_kl(
        2, 1, gamma, law, rule
    ) / h_kl(1, 1, gamma, law, rule)
    return spec.sigma_eps0_sq * (spec.gamma_star / gamma - 1.0) * ratio_gap


def delta_inf_prime_at_star(
    spec: LimitSpec, law: MpLaw, rule: QuadratureRule | None = None
) -> float:
    """Slope of delta_inf at its root gamma_star; strictly negative."""
    g = spec.gamma_star
    if g <= 0:
        raise DomainError("gamma_star must be > 0 (omega and gamma0 positive)")
    ratio_gap = h_kl(2, 0, g, law, rule) / h_kl(1, 0, g, law, rule) - h_kl(
        2, 1, g, law, rule
    ) / h_kl(1, 1, g, law, rule)
    return -(spec.sigma_eps0_sq / g) * ratio_gap


def s_inf_prime(
    gamma: float, spec: LimitSpec, law: MpLaw, rule: QuadratureRule | None = None
) -> float:
    """Limit of the derivative of the profiled error variance s(gamma).

    With s(gamma) = xi' Sigma^{-2} xi / tr(Sigma^{-1}):

        s'(gamma) = tr(U Sigma^{-2}) xi'Sigma^{-2}xi / tr(Sigma^{-1})^2
                    - 2 xi' U Sigma^{-3} xi / tr(Sigma^{-1}),

    whose limit is sigma_eps0_sq * [ h_{2,1}(h_{2,0} + g* h_{2,1}) / h_{1,0}^2
    - 2 (h_{3,1} + g* h_{3,2}) / h_{1,0} ].  The quadratic form in the second
    term involves U Sigma^{-3} (third resolvent power, first kernel power),
    hence the (3,1)/(3,2) indices; a simulation finite-difference oracle
    pins this down in the test suite.
    """
    if gamma <= 0:
        raise DomainError(f"gamma must be > 0, got {gamma}")
    g_star = spec.gamma_star
    h10 = h_kl(1, 0, gamma, law, rule)
    h20 = h_kl(2, 0, gamma, law, rule)
    h21 = h_kl(2, 1, gamma, law, rule)
    h31 = h_kl(3, 1, gamma, law, rule)
    h32 = h_kl(3, 2, gamma, law, rule)
    return spec.sigma_eps0_sq * (
        h21 * (h20 + g_star * h21) / h10**2 - 2.0 * (h31 + g_star * h32) / h10
    )


def bc_limits(
    gamma: float, spec: LimitSpec, law: MpLaw, rule: QuadratureRule | None = None
) -> tuple[float, float, float, float]:
    """Limits of the normalized trace functionals (b1, b2, c1, c2).

    b_j are the limits of (n-q)^{-1} tr(Sigma^{-1} U Sigma^{-1} Sigma_true)
    and (n-q)^{-1} tr(Sigma^{-2} Sigma_true); c_j of the corresponding
    traces without the true covariance.  At gamma = gamma_star both ratios
    b_j/c_j equal 1, which is exactly what makes the error-variance
    estimate consistent.
    """
    if gamma <= 0:
        raise DomainError(f"gamma must be > 0, got {gamma}")
    g_star = spec.gamma_star
    tau = law.tau
    h10 = h_kl(1, 0, gamma, law, rule)
    h11 = h_kl(1, 1, gamma, law, rule)
    h20 = h_kl(2, 0, gamma, law, rule)
    h21 = h_kl(2, 1, gamma, law, rule)
    shrink = (1.0 + tau * g_star * h10) ** (-2)
    b1 = h21 + g_star * shrink * (tau * h10**2 + h21)
    b2 = h20 + g_star * shrink * h20
    return b1, b2, h11, h10


def write_limit_table(
    path,
    spec: LimitSpec,
    gammas,
    law: MpLaw | None = None,
) -> None:
    """Emit a CSV of limit evaluations over a gamma grid."""
    law = law if law is not None else MpLaw(spec.tau)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
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
            ]
        )
        for gamma in gammas:
            b1, b2, c1, c2 = bc_limits(gamma, spec, law)
            writer.writerow(
                [
                    spec.tau,
                    spec.omega,
                    spec.gamma0,
                    gamma,
                    repr(delta_inf(gamma, spec, law)),
                    repr(s_inf_prime(gamma, spec, law)),
                    repr(b1),
                    repr(b2),
                    repr(c1),
                    repr(c2),
                ]
            )


def predicted_limits(
    n: int, p: int, m: int, gamma0: float, sigma_eps0_sq: float
) -> LimitSpec:
    """LimitSpec for a finite experiment cell, using n/p and m/p as the ratios."""
    return LimitSpec(
        tau=n / p, omega=m / p, gamma0=gamma0, sigma_eps0_sq=sigma_eps0_sq
    )
