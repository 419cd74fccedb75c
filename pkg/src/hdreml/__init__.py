"""High-dimensional REML variance components and heritability estimation.

Functional core:

- ``spectral``: Marchenko-Pastur law, resolvent moments, spectrum checks
- ``simulate``: GWAS-style designs and phenotypes under a sparse truth
- ``reml``: projection, score balance, and the variance-ratio fit
- ``asymptotics``: closed-form limits predicting the fit's behavior
- ``harness``: replication sweeps, summaries, CSV output
- ``estimator``: scikit-learn compatible wrapper around the fit
"""

__version__ = "0.1.0"

from .asymptotics import LimitSpec, bc_limits, delta_inf, delta_inf_prime_at_star, gamma_star, s_inf_prime
from .errors import (
    DegenerateColumnError,
    DegenerateKernelError,
    DomainError,
    NumericError,
    QuadratureError,
)
from .estimator import RemlVarianceEstimator
from .harness import ExperimentConfig, run_replication, run_sweep, summarize
from .reml import (
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
from .rng import replication_rng
from .simulate import (
    GenotypeMatrix,
    SnpPanel,
    StandardizedDesign,
    TrueModel,
    draw_allele_freqs,
    draw_genotypes,
    draw_phenotypes,
    gaussian_design,
    load_design,
    make_true_model,
    save_design,
    standardize,
    standardize_columns,
)
from .spectral import (
    EsdSummary,
    MpLaw,
    QuadratureRule,
    esd_summary,
    h_kl,
    hanson_wright_check,
    mp_cdf,
    mp_pdf,
    mp_support,
)

__all__ = [
    "__version__",
    "LimitSpec",
    "bc_limits",
    "delta_inf",
    "delta_inf_prime_at_star",
    "gamma_star",
    "s_inf_prime",
    "DegenerateColumnError",
    "DegenerateKernelError",
    "DomainError",
    "NumericError",
    "QuadratureError",
    "RemlVarianceEstimator",
    "ExperimentConfig",
    "run_replication",
    "run_sweep",
    "summarize",
    "ProjectedSpectrum",
    "RemlFit",
    "delta",
    "fit",
    "fit_dense_oracle",
    "fit_from_json",
    "fit_to_json",
    "project",
    "s_of_gamma",
    "replication_rng",
    "GenotypeMatrix",
    "SnpPanel",
    "StandardizedDesign",
    "TrueModel",
    "draw_allele_freqs",
    "draw_genotypes",
    "draw_phenotypes",
    "gaussian_design",
    "load_design",
    "make_true_model",
    "save_design",
    "standardize",
    "standardize_columns",
    "EsdSummary",
    "MpLaw",
    "QuadratureRule",
    "esd_summary",
    "h_kl",
    "hanson_wright_check",
    "mp_cdf",
    "mp_pdf",
    "mp_support",
]
