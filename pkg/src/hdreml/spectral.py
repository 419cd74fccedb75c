"""Marchenko-Pastur law, resolvent-moment integrals, and spectrum diagnostics.

The M-P law with aspect ratio tau in (0, 1] is the limiting eigenvalue
distribution of S = ZZ'/p for an n x p matrix Z of standardized i.i.d.
entries with n/p -> tau.  Everything downstream (the limiting behavior of
the variance-ratio estimator, its derivative, the trace functionals) is an
integral of the form

    h_{k,l}(gamma) = integral of x^l (1 + gamma*x)^(-k) dF_tau(x),

which this module evaluates by Gauss-Chebyshev quadrature after the
substitution x = (1 + tau) + 2*sqrt(tau)*t.  That substitution absorbs the
square-root vanishing of the density at both support edges exactly, leaving
a smooth integrand:

    h_{k,l}(gamma) = (2/pi) * integral_{-1}^{1}
                     x(t)^(l-1) (1 + gamma*x(t))^(-k) * sqrt(1 - t^2) dt.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, QuadratureError

DEFAULT_NODE_COUNT = 256
# hard ceiling for the adaptive doubling in h_kl
MAX_NODE_COUNT = 1 << 17


def mp_support(tau: float) -> tuple[float, float]:
    """Support endpoints ((1 - sqrt(tau))^2, (1 + sqrt(tau))^2) of the M-P law."""
    if not 0.0 < tau <= 1.0:
        raise DomainError(f"tau must be in (0, 1], got {tau}")
    r = np.sqrt(tau)
    return (1.0 - r) ** 2, (1.0 + r) ** 2


@dataclass(frozen=True)
class MpLaw:
    """Marchenko-Pastur law with aspect ratio tau = lim n/p in (0, 1]."""

    tau: float
    support_lo: float = field(init=False)
    support_hi: float = field(init=False)

    def __post_init__(self):
        lo, hi = mp_support(self.tau)
        object.__setattr__(self, "support_lo", lo)
        object.__setattr__(self, "support_hi", hi)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Chebyshev (second kind) rule on (-1, 1).

    Nodes t_i = cos(i*pi/(N+1)) sorted ascending, weights
    w_i = pi/(N+1) * sin^2(i*pi/(N+1)); exact for polynomials of degree
    <= 2N-1 against the weight sqrt(1-t^2).
    """

    node_count: int
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.node_count < 1:
            raise DomainError("node_count must be positive")
        theta = np.arange(1, self.node_count + 1) * np.pi / (self.node_count + 1)
        nodes = np.cos(theta)[::-1].copy()
        weights = (np.pi / (self.node_count + 1)) * np.sin(theta) ** 2
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights[::-1].copy())


def mp_pdf(x, law: MpLaw):
    """M-P density sqrt((b+ - x)(x - b-)) / (2 pi tau x); zero off support."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > law.support_lo) & (x < law.support_hi)
    xi = x[inside]
    out[inside] = np.sqrt((law.support_hi - xi) * (xi - law.support_lo)) / (
        2.0 * np.pi * law.tau * xi
    )
    if out.ndim == 0:
        return float(out)
    return out


def mp_cdf(x, law: MpLaw):
    """M-P distribution function, in closed form.

    On the support, with a = 1 + tau, b = 2*sqrt(tau), t = (x - a)/b:

        F(x) = (2/pi) * [ (a*arcsin(t) + b*sqrt(1-t^2) + a*pi/2) / b^2
                          - (1-tau)/b^2 * (arcsin((b + a*t)/(a + b*t)) + pi/2) ]

    The second arcsine term vanishes as tau -> 1, where the formula reduces
    to the quarter-circle distribution on [0, 4].
    """
    x = np.asarray(x, dtype=float)
    tau = law.tau
    a = 1.0 + tau
    b = 2.0 * np.sqrt(tau)
    t = np.clip((x - a) / b, -1.0, 1.0)
    denom = a + b * t
    # denom > 0 except at tau = 1, t = -1, where the whole term is zeroed
    # by the (1 - tau) factor; substitute 1 to dodge the 0/0.
    ratio = np.where(denom > 0, (b + a * t) / np.where(denom > 0, denom, 1.0), 1.0)
    ratio = np.clip(ratio, -1.0, 1.0)
    val = (2.0 / np.pi) * (
        (a * np.arcsin(t) + b * np.sqrt(1.0 - t * t) + a * np.pi / 2.0) / (b * b)
        - ((1.0 - tau) / (b * b)) * (np.arcsin(ratio) + np.pi / 2.0)
    )
    out = np.where(x <= law.support_lo, 0.0, np.where(x >= law.support_hi, 1.0, val))
    if out.ndim == 0:
        return float(out)
    return out


def _h_kl_raw(k: int, l: int, gamma: float, tau: float, node_count: int) -> float:
    """Single fixed-resolution quadrature pass for h_{k,l}."""
    rule = QuadratureRule(node_count)
    x = (1.0 + tau) + 2.0 * np.sqrt(tau) * rule.nodes
    g = x ** (l - 1) * (1.0 + gamma * x) ** (-float(k))
    return float((2.0 / np.pi) * np.sum(rule.weights * g))


def h_kl(
    k: int,
    l: int,
    gamma: float,
    law: MpLaw,
    rule: QuadratureRule | None = None,
    tol: float = 1e-10,
) -> float:
    """Resolvent moment h_{k,l}(gamma) = int x^l (1+gamma*x)^(-k) dF_tau(x).

    Evaluates at N and 2N nodes and accepts once the two agree within tol
    (absolute or relative, whichever is looser), doubling N as needed.  The
    starting resolution doubles automatically for tau > 0.999, where the
    l = 0 integrand develops a near-singularity at the lower support edge.

    Raises QuadratureError if refinement stalls above tolerance.
    """
    if k < 0 or l < 0:
        raise DomainError("k and l must be nonnegative integers")
    if gamma < 0:
        raise DomainError(f"gamma must be >= 0, got {gamma}")
    n = rule.node_count if rule is not None else DEFAULT_NODE_COUNT
    if law.tau > 0.999:
        n *= 2
    coarse = _h_kl_raw(k, l, gamma, law.tau, n)
    while True:
        fine = _h_kl_raw(k, l, gamma, law.tau, 2 * n)
        if abs(fine - coarse) <= max(tol, tol * abs(fine)):
            return fine
        n *= 2
        if 2 * n > MAX_NODE_COUNT:
            raise QuadratureError(
                f"h_{{{k},{l}}}(gamma={gamma}, tau={law.tau}) refinement gap "
                f"{abs(fine - coarse):.3e} > {tol:.1e} at {2 * n} nodes"
            )
        coarse = fine


@dataclass(frozen=True)
class EsdSummary:
    """Empirical spectral distribution compared against a reference M-P law."""

    eigenvalues: np.ndarray
    ks_distance: float
    lambda_min: float
    lambda_max: float


def esd_summary(eigenvalues, law: MpLaw) -> EsdSummary:
    """Sort a spectrum and measure its sup-norm (KS) gap to F_tau.

    Eigenvalues in [-1e-10, 0) are treated as symmetric-solver roundoff and
    clamped to zero; anything more negative is rejected.
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=float))
    if lam.size == 0:
        raise DomainError("empty eigenvalue list")
    if not np.all(np.isfinite(lam)):
        raise DomainError("eigenvalues must be finite")
    if lam[0] < -1e-10:
        raise DomainError(f"eigenvalue {lam[0]} below clamping tolerance -1e-10")
    lam = np.clip(lam, 0.0, None)
    n = lam.size
    ref = np.asarray(mp_cdf(lam, law))
    grid = np.arange(1, n + 1) / n
    ks = float(np.max(np.maximum(np.abs(ref - grid), np.abs(ref - (grid - 1.0 / n)))))
    return EsdSummary(
        eigenvalues=lam,
        ks_distance=ks,
        lambda_min=float(lam[0]),
        lambda_max=float(lam[-1]),
    )


# Empirical constant for the quadratic-form tail bound
#     P(|xi'A xi - tr A| > t) <= 2 exp(-c min(t^2 / ||A||_F^2, t / ||A||_op))
# calibrated on standard Gaussian inputs (unit sub-Gaussian scale).  The
# bound's universal constant is not constructive; what the check asserts is
# the sub-Gaussian-to-sub-exponential crossover shape of the tail.
HANSON_WRIGHT_C = 0.125

MATRIX_KINDS = ("zero", "identity", "projection")
ENTRY_DISTS = ("gaussian", "rademacher")


def hanson_wright_bound(tail_t: float, fro_norm: float, op_norm: float) -> float:
    """Evaluate the calibrated tail bound; 0 matrix gives bound 0 for t > 0."""
    if fro_norm == 0.0 or op_norm == 0.0:
        return 0.0 if tail_t > 0 else 1.0
    arg = min(tail_t**2 / fro_norm**2, tail_t / op_norm)
    return min(1.0, 2.0 * np.exp(-HANSON_WRIGHT_C * arg))


@dataclass(frozen=True)
class HansonWrightResult:
    exceedance_rate: float
    bound: float
    tail_t: float
    trials: int
    fro_norm: float
    op_norm: float


def hanson_wright_check(
    trials: int,
    dim: int,
    matrix_kind: str,
    tail_t: float,
    rng: np.random.Generator,
    entry_dist: str = "gaussian",
) -> HansonWrightResult:
    """Empirical exceedance rate of |xi'A xi - tr A| > tail_t.

    xi has independent standardized sub-Gaussian entries; A is drawn once
    per check according to matrix_kind: the zero matrix, the identity, or an
    orthogonal projection of rank dim//2.
    """
    if trials < 1000:
        raise DomainError("trials must be >= 1000 for a meaningful rate")
    if matrix_kind not in MATRIX_KINDS:
        raise DomainError(f"matrix_kind must be one of {MATRIX_KINDS}")
    if entry_dist not in ENTRY_DISTS:
        raise DomainError(f"entry_dist must be one of {ENTRY_DISTS}")

    if matrix_kind == "zero":
        a = np.zeros((dim, dim))
        fro, op = 0.0, 0.0
    elif matrix_kind == "identity":
        a = np.eye(dim)
        fro, op = float(np.sqrt(dim)), 1.0
    else:
        rank = max(1, dim // 2)
        basis = np.linalg.qr(rng.standard_normal((dim, rank)))[0]
        a = basis @ basis.T
        fro, op = float(np.sqrt(rank)), 1.0

    if entry_dist == "gaussian":
        xi = rng.standard_normal((trials, dim))
    else:
        xi = rng.integers(0, 2, size=(trials, dim)) * 2.0 - 1.0
    quad = np.einsum("ti,ij,tj->t", xi, a, xi)
    rate = float(np.mean(np.abs(quad - np.trace(a)) > tail_t))
    return HansonWrightResult(
        exceedance_rate=rate,
        bound=hanson_wright_bound(tail_t, fro, op),
        tail_t=tail_t,
        trials=trials,
        fro_norm=fro,
        op_norm=op,
    )


def write_hkl_table(path, taus, gammas, k_max: int = 4, l_max: int = 3) -> None:
    """Emit a CSV of h_{k,l} values with columns (tau, gamma, k, l, value)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "gamma", "k", "l", "value"])
        for tau in taus:
            law = MpLaw(tau)
            for gamma in gammas:
                for k in range(k_max + 1):
                    for l in range(l_max + 1):
                        writer.writerow(
                            [tau, gamma, k, l, repr(h_kl(k, l, gamma, law))]
                        )
