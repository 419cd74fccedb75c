"""GWAS-style data generation: allele frequencies, genotypes, standardized
designs, and phenotypes under a sparse truth.

The generative pipeline mirrors the usual simulation protocol for
heritability studies: allele frequencies f_j ~ Uniform[0.05, 0.5]; genotype
codes {0, 1, 2} drawn per SNP as Binomial(2, f_j); each column standardized
to sample mean 0 and sample variance 1 (divisor n-1); phenotypes

    y = mu*1 + Zs[:, causal] @ alpha / sqrt(p) + eps,

with alpha i.i.d. N(0, sigma_alpha^2) on m causal columns and eps i.i.d.
N(0, sigma_eps^2).  Only m of the p columns carry signal, while a fitted
mixed model treats all p as random effects.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateColumnError, DomainError

FREQ_LO = 0.05
FREQ_HI = 0.5


@dataclass(frozen=True)
class SnpPanel:
    """Per-SNP allele frequencies, each within [0.05, 0.5]."""

    freqs: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        if f.ndim != 1 or f.size == 0:
            raise DomainError("freqs must be a nonempty 1-d array")
        if np.any(f < FREQ_LO) or np.any(f > FREQ_HI):
            raise DomainError(f"allele frequencies must lie in [{FREQ_LO}, {FREQ_HI}]")
        object.__setattr__(self, "freqs", f)

    @property
    def p(self) -> int:
        return self.freqs.size


@dataclass(frozen=True)
class GenotypeMatrix:
    """n x p matrix of genotype codes in {0, 1, 2}."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise DomainError("genotype values must be a 2-d matrix")
        if not np.isin(v, (0, 1, 2)).all():
            raise DomainError("genotype entries must be 0, 1, or 2")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class StandardizedDesign:
    """Column-standardized n x p design Z; Z/sqrt(p) is the model's design.

    Each column of z has sample mean 0 and sample variance 1 (divisor n-1).
    `scale` is the factor that turns z into the scaled design actually
    entering the mixed model.
    """

    z: np.ndarray

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.p)

    @property
    def z_tilde(self) -> np.ndarray:
        return self.z * self.scale

    def validate(self, tol: float = 1e-12) -> None:
        mu = self.z.mean(axis=0)
        var = self.z.var(axis=0, ddof=1)
        if np.max(np.abs(mu)) >= tol:
            raise DomainError(f"column means deviate from 0 by {np.max(np.abs(mu)):.2e}")
        if np.max(np.abs(var - 1.0)) >= tol:
            raise DomainError(
                f"column variances deviate from 1 by {np.max(np.abs(var - 1.0)):.2e}"
            )


@dataclass(frozen=True)
class TrueModel:
    """Sparse-truth generative parameters.

    m of the p effects are nonzero with per-effect variance sigma_alpha_sq;
    the implied heritability is
    h2_true = (m/p) sigma_alpha_sq / ((m/p) sigma_alpha_sq + sigma_eps_sq).
    """

    p: int
    m: int
    sigma_alpha_sq: float
    sigma_eps_sq: float
    mu: float
    h2_true: float

    @property
    def gamma0(self) -> float:
        """True per-effect variance ratio sigma_alpha^2 / sigma_eps^2."""
        return self.sigma_alpha_sq / self.sigma_eps_sq


def draw_allele_freqs(p: int, rng: np.random.Generator) -> SnpPanel:
    """p i.i.d. allele frequencies from Uniform[0.05, 0.5]."""
    if p < 1:
        raise DomainError("p must be >= 1")
    return SnpPanel(freqs=rng.uniform(FREQ_LO, FREQ_HI, size=p))


def draw_genotypes(
    panel: SnpPanel,
    n: int,
    rng: np.random.Generator,
    resample_degenerate: bool = False,
) -> GenotypeMatrix:
    """Genotype matrix with column j ~ Binomial(2, f_j) per individual.

    Column j takes values 0/1/2 with probabilities (1-f_j)^2, 2 f_j (1-f_j),
    f_j^2.  With resample_degenerate, constant columns (possible only for
    tiny n) are redrawn; by default they are left alone and surface later as
    a standardization error, so the sampling distribution is untouched.
    """
    if n < 2:
        raise DomainError("n must be >= 2")
    g = rng.binomial(2, panel.freqs[None, :], size=(n, panel.p)).astype(np.int8)
    if resample_degenerate:
        for _ in range(100):
            constant = np.flatnonzero(np.all(g == g[0, :], axis=0))
            if constant.size == 0:
                break
            g[:, constant] = rng.binomial(
                2, panel.freqs[None, constant], size=(n, constant.size)
            ).astype(np.int8)
    return GenotypeMatrix(values=g)


def standardize_columns(values: np.ndarray) -> np.ndarray:
    """Center and scale each column to sample mean 0, sample variance 1 (ddof=1)."""
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1)
    zero = np.flatnonzero(sd == 0.0)
    if zero.size:
        raise DegenerateColumnError(int(zero[0]))
    return (values - mean) / sd


def standardize(geno: GenotypeMatrix) -> StandardizedDesign:
    """Standardize genotype codes column by column."""
    return StandardizedDesign(z=standardize_columns(geno.values))


def gaussian_design(
    n: int, p: int, rng: np.random.Generator, standardized: bool = True
) -> StandardizedDesign:
    """Design with i.i.d. N(0, 1) entries, column-standardized by default.

    With standardized=False the raw draws are wrapped unchecked; callers get
    columns that are mean-0/variance-1 only in expectation.
    """
    if n < 2 or p < 1:
        raise DomainError("need n >= 2 and p >= 1")
    z = rng.standard_normal((n, p))
    if standardized:
        z = standardize_columns(z)
    return StandardizedDesign(z=z)


def make_true_model(
    p: int, m: int, sigma_eps_sq: float, h2_target: float, mu: float = 0.0
) -> TrueModel:
    """Sparse truth whose implied heritability equals h2_target exactly.

    Solves (m/p) sigma_alpha^2 / ((m/p) sigma_alpha^2 + sigma_eps^2) = h2 for
    the per-effect variance: sigma_alpha^2 = (p/m) * h2 * sigma_eps^2 / (1 - h2).
    """
    if not 1 <= m <= p:
        raise DomainError(f"need 1 <= m <= p, got m={m}, p={p}")
    if not 0.0 < h2_target < 1.0:
        raise DomainError(f"h2_target must be in (0, 1), got {h2_target}")
    if sigma_eps_sq <= 0:
        raise DomainError("sigma_eps_sq must be positive")
    sigma_alpha_sq = (p / m) * h2_target * sigma_eps_sq / (1.0 - h2_target)
    return TrueModel(
        p=p,
        m=m,
        sigma_alpha_sq=sigma_alpha_sq,
        sigma_eps_sq=sigma_eps_sq,
        mu=mu,
        h2_true=h2_target,
    )


def draw_phenotypes(
    design: StandardizedDesign,
    model: TrueModel,
    rng: np.random.Generator,
    causal_indices: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw (y, alpha1, eps) under the sparse truth.

    The first m columns are causal unless causal_indices selects another
    subset (used by exchangeability tests; the fitted model never knows
    which columns carry signal either way).
    """
    if model.p != design.p:
        raise DomainError(f"model built for p={model.p}, design has p={design.p}")
    if model.m > design.p:
        raise DomainError(f"m={model.m} exceeds design p={design.p}")
    if causal_indices is None:
        causal_indices = np.arange(model.m)
    else:
        causal_indices = np.asarray(causal_indices)
        if causal_indices.size != model.m:
            raise DomainError(
                f"causal_indices has {causal_indices.size} entries, expected m={model.m}"
            )
    alpha1 = rng.normal(0.0, np.sqrt(model.sigma_alpha_sq), size=model.m)
    eps = rng.normal(0.0, np.sqrt(model.sigma_eps_sq), size=design.n)
    y = model.mu + (design.z[:, causal_indices] @ alpha1) * design.scale + eps
    return y, alpha1, eps


# --- binary design export -------------------------------------------------
#
# Layout: 16-byte little-endian header (magic b"ZMAT", uint32 n, uint32 p,
# uint32 dtype code; 0 = float64) followed by the matrix in column-major
# order, then a JSON sidecar <path>.json with generation parameters.

DESIGN_MAGIC = b"ZMAT"
_DTYPE_CODES = {0: np.dtype("<f8")}


def save_design(design: StandardizedDesign, path, params: dict | None = None) -> None:
    """Write the design matrix in the documented binary layout plus sidecar."""
    z = np.asarray(design.z, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(DESIGN_MAGIC)
        fh.write(struct.pack("<III", design.n, design.p, 0))
        fh.write(z.tobytes(order="F"))
    sidecar = {"n": design.n, "p": design.p, "dtype": "float64"}
    sidecar.update(params or {})
    with open(f"{path}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_design(path) -> tuple[StandardizedDesign, dict]:
    """Read a design written by save_design; returns (design, sidecar params)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DESIGN_MAGIC:
            raise DomainError(f"bad magic {magic!r} in {path}")
        n, p, code = struct.unpack("<III", fh.read(12))
        if code not in _DTYPE_CODES:
            raise DomainError(f"unknown dtype code {code}")
        data = np.frombuffer(fh.read(), dtype=_DTYPE_CODES[code])
    if data.size != n * p:
        raise DomainError(f"expected {n * p} values, file holds {data.size}")
    z = data.reshape((n, p), order="F")
    with open(f"{path}.json") as fh:
        params = json.load(fh)
    return StandardizedDesign(z=np.ascontiguousarray(z)), params
