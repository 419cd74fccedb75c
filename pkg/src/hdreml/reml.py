"""REML estimation of the variance ratio and error variance.

The assumed mixed model is y = X beta + (Z/sqrt(p)) alpha + eps with
alpha ~ N(0, sigma_alpha^2 I_p) and eps ~ N(0, sigma_eps^2 I_n).  Let A be
an n x (n-q) orthonormal basis of the complement of span(X).  The error
contrasts A'y have covariance sigma_eps^2 (I + gamma * U) with
U = A' (ZZ'/p) A and gamma = sigma_alpha^2 / sigma_eps^2, so after one
eigendecomposition U = V diag(lambda) V' the whole problem collapses to the
2(n-q) scalars {lambda_k, w_k = (V' A' y)_k}:

    score balance   delta(gamma) =
        sum(lam w^2 / (1+g lam)^2) / sum(lam / (1+g lam))
      - sum(    w^2 / (1+g lam)^2) / sum(  1 / (1+g lam))

    error variance  s(gamma) =
        sum(w^2 / (1+g lam)^2) / sum(1 / (1+g lam))

gamma_hat is the root of delta; sigma_eps_sq_hat = s(gamma_hat).  Each
gamma evaluation is O(n), so sweeping hundreds of replications is cheap.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateKernelError, DomainError, NumericError
from .simulate import StandardizedDesign

GAMMA_CAP = 1e6
EIG_CLAMP = -1e-10


@dataclass(frozen=True)
class ProjectedSpectrum:
    """Eigenvalues of the projected kernel and rotated data coordinates.

    lambdas are the (n-q) ascending eigenvalues of A'(ZZ'/p)A; w holds the
    coefficients of A'y in the eigenbasis.  Every REML quantity downstream
    is a scalar function of these.
    """

    lambdas: np.ndarray
    w: np.ndarray
    n: int
    p: int
    q: int


@dataclass(frozen=True)
class RemlFit:
    """REML point estimates plus solver diagnostics.

    boundary is set when the score equation had no sign change on
    [0, gamma_cap] and gamma_hat was pinned to the endpoint the restricted
    likelihood favors (0 when delta(0) <= 0, the cap when delta stays
    positive).  identifiable goes false for an equal-eigenvalue kernel,
    where delta vanishes identically and no gamma is distinguished.
    """

    gamma_hat: float
    sigma_eps_sq_hat: float
    sigma_alpha_sq_hat: float
    h2_hat: float
    adjusted_gamma: float | None
    boundary: bool
    bracket: tuple[float, float] | None
    iterations: int
    identifiable: bool = True


def project(
    y: np.ndarray, x_design: np.ndarray, design: StandardizedDesign
) -> ProjectedSpectrum:
    """Project out the fixed effects and eigendecompose the kernel once.

    x_design must have full column rank q < n (checked via the R factor of
    its QR decomposition at tolerance n * eps * ||X||).
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x_design, dtype=float)
    if x.ndim != 2:
        raise DomainError("x_design must be 2-d")
    n, q = x.shape
    if design.n != n or y.shape != (n,):
        raise DomainError(
            f"shape mismatch: y {y.shape}, X {x.shape}, design {design.z.shape}"
        )
    if not 1 <= q < n:
        raise DomainError(f"need 1 <= q < n, got q={q}, n={n}")
    qmat, rmat = np.linalg.qr(x, mode="complete")
    rdiag = np.abs(np.diag(rmat[:q, :q]))
    tol = n * np.finfo(float).eps * (rdiag.max() if rdiag.size else 0.0)
    if np.any(rdiag <= tol):
        raise DomainError(f"x_design is rank-deficient (rank < {q})")
    a = qmat[:, q:]

    kernel = design.z @ design.z.T / design.p
    projected = a.T @ kernel @ a
    projected = (projected + projected.T) / 2.0
    try:
        lam, vec = np.linalg.eigh(projected)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    if lam[0] < EIG_CLAMP:
        raise NumericError(
            f"projected kernel eigenvalue {lam[0]:.3e} below clamp tolerance"
        )
    lam = np.clip(lam, 0.0, None)
    w = vec.T @ (a.T @ y)
    return ProjectedSpectrum(lambdas=lam, w=w, n=n, p=design.p, q=q)


def _check_kernel(spec: ProjectedSpectrum) -> None:
    if not np.any(spec.lambdas > 0.0):
        raise DegenerateKernelError(
            "projected kernel is identically zero; no genetic signal representable"
        )


def delta(gamma: float, spec: ProjectedSpectrum) -> float:
    """Score balance whose root is the REML variance ratio."""
    if gamma < 0:
        raise DomainError(f"gamma must be >= 0, got {gamma}")
    _check_kernel(spec)
    lam = spec.lambdas
    w2 = spec.w * spec.w
    d2 = (1.0 + gamma * lam) ** 2
    d = 1.0 + gamma * lam
    genetic = np.sum(lam * w2 / d2) / np.sum(lam / d)
    residual = np.sum(w2 / d2) / np.sum(1.0 / d)
    return float(genetic - residual)


def s_of_gamma(gamma: float, spec: ProjectedSpectrum) -> float:
    """Profiled error variance sum(w^2/(1+g lam)^2) / sum(1/(1+g lam))."""
    if gamma < 0:
        raise DomainError(f"gamma must be >= 0, got {gamma}")
    lam = spec.lambdas
    w2 = spec.w * spec.w
    d = 1.0 + gamma * lam
    return float(np.sum(w2 / (d * d)) / np.sum(1.0 / d))


def _assemble(
    gamma_hat: float,
    spec: ProjectedSpectrum,
    m_hint: int | None,
    boundary: bool,
    bracket: tuple[float, float] | None,
    iterations: int,
    identifiable: bool = True,
) -> RemlFit:
    sigma_eps = s_of_gamma(gamma_hat, spec)
    return RemlFit(
        gamma_hat=gamma_hat,
        sigma_eps_sq_hat=sigma_eps,
        sigma_alpha_sq_hat=gamma_hat * sigma_eps,
        h2_hat=gamma_hat / (1.0 + gamma_hat),
        adjusted_gamma=(spec.p / m_hint) * gamma_hat if m_hint else None,
        boundary=boundary,
        bracket=bracket,
        iterations=iterations,
        identifiable=identifiable,
    )


def fit(
    spec: ProjectedSpectrum,
    m_hint: int | None = None,
    gamma_cap: float = GAMMA_CAP,
    rtol: float = 1e-8,
) -> RemlFit:
    """Solve the REML equations on [0, gamma_cap].

    delta is evaluated at 0; if nonpositive there is no positive signal and
    the fit returns the gamma_hat = 0 boundary.  Otherwise the upper edge
    expands geometrically (1, 2, 4, ...) until the first sign change and a
    Brent solve runs inside that first bracket to relative tolerance rtol.
    If delta stays positive through the cap, the restricted likelihood is
    increasing everywhere inspected and the fit returns the cap, flagged as
    a boundary.
    """
    _check_kernel(spec)
    lam = spec.lambdas
    if np.allclose(lam, lam[0], rtol=1e-12, atol=1e-12):
        # equal-eigenvalue kernel: delta vanishes identically
        return _assemble(0.0, spec, m_hint, True, None, 0, identifiable=False)

    evals = 1
    d0 = delta(0.0, spec)
    if d0 <= 0.0:
        return _assemble(0.0, spec, m_hint, True, None, evals)

    lo, d_lo = 0.0, d0
    hi = 1.0
    while hi <= gamma_cap:
        d_hi = delta(hi, spec)
        evals += 1
        if d_hi <= 0.0:
            break
        lo, d_lo = hi, d_hi
        hi *= 2.0
    else:
        return _assemble(gamma_cap, spec, m_hint, True, (lo, gamma_cap), evals)

    if d_hi == 0.0:
        return _assemble(hi, spec, m_hint, False, (lo, hi), evals)
    try:
        root, info = brentq(
            delta, lo, hi, args=(spec,), rtol=rtol, maxiter=200, full_output=True
        )
    except (RuntimeError, ValueError) as exc:
        raise NumericError(
            f"root solve failed on bracket ({lo}, {hi}): {exc}"
        ) from exc
    if not info.converged:
        raise NumericError(
            f"root solve did not converge on ({lo}, {hi}) "
            f"after {info.iterations} iterations"
        )
    return _assemble(
        float(root), spec, m_hint, False, (lo, hi), evals + info.function_calls
    )


# --- dense brute-force oracle ----------------------------------------------


def _golden_max(fun, lo: float, hi: float, iters: int = 80):
    """Golden-section maximization on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    x = (a + b) / 2.0
    return x, fun(x)


def fit_dense_oracle(
    y: np.ndarray,
    x_design: np.ndarray,
    design: StandardizedDesign,
    grid,
    m_hint: int | None = None,
) -> RemlFit:
    """Brute-force REML by dense evaluation of the restricted likelihood.

    Independent check of fit(): no projection, no eigendecomposition.  For
    each grid gamma it forms V = I + gamma ZZ'/p explicitly, profiles the
    error variance through the trace ratio y'P^2y / tr(P), and evaluates

        -2 loglik = logdet V + logdet(X'V^{-1}X)
                    + (n-q) log s2(gamma) + y'P y / s2(gamma).

    The grid argmax is then refined by golden section between its
    neighbors.  Deliberately O(n^3) per gamma; refuses n > 200.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x_design, dtype=float)
    n, q = x.shape
    if n > 200:
        raise DomainError(f"dense oracle is for small instances only (n={n} > 200)")
    grid = np.asarray(sorted(grid), dtype=float)
    if grid.size < 2 or grid[0] < 0:
        raise DomainError("grid must hold at least two nonnegative gammas")
    kernel = design.z @ design.z.T / design.p

    def profile(gamma: float) -> tuple[float, float]:
        v = np.eye(n) + gamma * kernel
        vi = np.linalg.inv(v)
        _, logdet_v = np.linalg.slogdet(v)
        vix = vi @ x
        wmat = x.T @ vix
        wi = np.linalg.inv(wmat)
        _, logdet_w = np.linalg.slogdet(wmat)
        py = vi @ y - vix @ (wi @ (vix.T @ y))
        tr_p = np.trace(vi) - np.trace(wi @ (vix.T @ vix))
        s2 = float(py @ py) / tr_p
        if s2 <= 0.0:
            return -np.inf, 0.0
        ll = -0.5 * (logdet_v + logdet_w + (n - q) * np.log(s2) + (y @ py) / s2)
        return float(ll), s2

    lls = np.array([profile(g)[0] for g in grid])
    if np.max(lls) - np.min(lls) < 1e-12 * (1.0 + abs(np.max(lls))):
        # flat profile: nothing distinguishes any gamma
        s2 = profile(grid[0])[1]
        return RemlFit(
            gamma_hat=0.0,
            sigma_eps_sq_hat=s2,
            sigma_alpha_sq_hat=0.0,
            h2_hat=0.0,
            adjusted_gamma=0.0 if m_hint else None,
            boundary=True,
            bracket=None,
            iterations=len(grid),
            identifiable=False,
        )
    best = int(np.argmax(lls))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]
    gamma_hat, _ = _golden_max(lambda g: profile(g)[0], lo, hi)
    boundary = False
    if best == 0 and gamma_hat <= grid[0] + 1e-12:
        gamma_hat, boundary = grid[0], True
    s2 = profile(gamma_hat)[1]
    return RemlFit(
        gamma_hat=float(gamma_hat),
        sigma_eps_sq_hat=s2,
        sigma_alpha_sq_hat=float(gamma_hat) * s2,
        h2_hat=float(gamma_hat) / (1.0 + float(gamma_hat)),
        adjusted_gamma=(design.p / m_hint) * float(gamma_hat) if m_hint else None,
        boundary=boundary,
        bracket=(float(lo), float(hi)),
        iterations=len(grid) + 80,
    )


# --- serialization ----------------------------------------------------------

_JSON_FIELDS = (
    "gamma_hat",
    "sigma_eps_sq_hat",
    "sigma_alpha_sq_hat",
    "h2_hat",
    "adjusted_gamma",
    "boundary",
    "iterations",
)


def fit_to_json(result: RemlFit) -> str:
    """Serialize a fit with the fixed field names."""
    return json.dumps({name: getattr(result, name) for name in _JSON_FIELDS})


def fit_from_json(text: str) -> RemlFit:
    """Inverse of fit_to_json; solver bracket is not round-tripped."""
    raw = json.loads(text)
    missing = [name for name in _JSON_FIELDS if name not in raw]
    if missing:
        raise DomainError(f"fit JSON missing fields: {missing}")
    return RemlFit(
        gamma_hat=raw["gamma_hat"],
        sigma_eps_sq_hat=raw["sigma_eps_sq_hat"],
        sigma_alpha_sq_hat=raw["sigma_alpha_sq_hat"],
        h2_hat=raw["h2_hat"],
        adjusted_gamma=raw["adjusted_gamma"],
        boundary=raw["boundary"],
        bracket=None,
        iterations=raw["iterations"],
    )
