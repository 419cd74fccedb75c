"""Replication orchestration: configs, sweeps, summaries, CSV output.

A sweep is a list of cells, each a (n, p, m, h2_target, sigma_eps_sq)
combination run for `replications` independent repetitions.  Replication k
of a cell always uses the random stream keyed on (master_seed, global
replication counter), so reruns and different worker counts produce
byte-identical output.
"""

import csv
import hashlib
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import predicted_limits
from .errors import DomainError
from .reml import RemlFit, fit, project
from .rng import replication_rng
from .simulate import (
    TrueModel,
    draw_allele_freqs,
    draw_genotypes,
    draw_phenotypes,
    gaussian_design,
    make_true_model,
    standardize,
)

DESIGN_KINDS = ("snp", "gaussian")

FULL_SCALE_N = 2000
FULL_SCALE_P = 20000
DESK_SCALE_N = 500
DESK_SCALE_P = 5000


@dataclass(frozen=True)
class ExperimentConfig:
    """One JSON-serializable experiment description.

    n, p, m, and h2_target may be scalars or equal-length lists; lists are
    zipped into cells (scalars broadcast), so a ratio-preserving sweep can
    scale n, p, and m together.
    """

    n: object = DESK_SCALE_N
    p: object = DESK_SCALE_P
    m: object = DESK_SCALE_P
    sigma_eps_sq: float = 0.4
    h2_target: object = 0.6
    design_kind: str = "snp"
    replications: int = 100
    master_seed: int = 0
    output_path: str | None = None
    emit_limits: bool = False
    mu: float = 0.0

    def __post_init__(self):
        if self.design_kind not in DESIGN_KINDS:
            raise DomainError(f"design_kind must be one of {DESIGN_KINDS}")
        if self.replications < 1:
            raise DomainError("replications must be >= 1")
        if not self.cells():
            raise DomainError("empty sweep")

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DomainError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise DomainError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise DomainError(f"unknown config fields: {sorted(unknown)}")
        return cls(**raw)

    def to_json(self) -> str:
        return json.dumps(
            {name: getattr(self, name) for name in self.__dataclass_fields__},
            sort_keys=True,
        )

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]

    def cells(self) -> list["Cell"]:
        """Expand scalar-or-list fields into concrete cells."""
        lists = {}
        length = 1
        for name in ("n", "p", "m", "h2_target"):
            value = getattr(self, name)
            if isinstance(value, (list, tuple)):
                if length not in (1, len(value)) and len(value) != 1:
                    raise DomainError("sweep lists must have equal lengths")
                length = max(length, len(value))
                lists[name] = list(value)
            else:
                lists[name] = [value]
        for name, vals in lists.items():
            if len(vals) == 1:
                lists[name] = vals * length
            elif len(vals) != length:
                raise DomainError("sweep lists must have equal lengths")
        out = []
        for n, p, m, h2 in zip(lists["n"], lists["p"], lists["m"], lists["h2_target"]):
            out.append(
                Cell(
                    n=int(n),
                    p=int(p),
                    m=int(m),
                    h2_target=float(h2),
                    sigma_eps_sq=float(self.sigma_eps_sq),
                )
            )
        return out


@dataclass(frozen=True)
class Cell:
    n: int
    p: int
    m: int
    h2_target: float
    sigma_eps_sq: float

    def __post_init__(self):
        if self.n < 2:
            raise DomainError(f"n must be >= 2, got {self.n}")
        if not 1 <= self.m <= self.p:
            raise DomainError(f"need 1 <= m <= p, got m={self.m}, p={self.p}")
        if not 0.0 < self.h2_target < 1.0:
            raise DomainError(f"h2_target must be in (0, 1), got {self.h2_target}")

    @property
    def label(self) -> str:
        return f"n{self.n}_p{self.p}_m{self.m}"

    def true_model(self, mu: float = 0.0) -> TrueModel:
        return make_true_model(self.p, self.m, self.sigma_eps_sq, self.h2_target, mu)


@dataclass(frozen=True)
class ReplicationRecord:
    cell: Cell
    index: int
    fit: RemlFit | None
    truth: TrueModel
    error: str = ""


def run_replication(
    cfg: ExperimentConfig, index: int, cell: Cell | None = None
) -> ReplicationRecord:
    """One simulate -> project -> fit pass on stream (master_seed, index)."""
    if cell is None:
        cells = cfg.cells()
        if len(cells) != 1:
            raise DomainError("run_replication without a cell needs a one-cell config")
        cell = cells[0]
    rng = replication_rng(cfg.master_seed, index)
    truth = cell.true_model(cfg.mu)
    try:
        if cfg.design_kind == "snp":
            panel = draw_allele_freqs(cell.p, rng)
            design = standardize(draw_genotypes(panel, cell.n, rng))
        else:
            design = gaussian_design(cell.n, cell.p, rng)
        y, _, _ = draw_phenotypes(design, truth, rng)
        spectrum = project(y, np.ones((cell.n, 1)), design)
        result = fit(spectrum, m_hint=cell.m)
        return ReplicationRecord(cell=cell, index=index, fit=result, truth=truth)
    except Exception as exc:  # noqa: BLE001 - error rows keep the sweep alive
        return ReplicationRecord(
            cell=cell,
            index=index,
            fit=None,
            truth=truth,
            error=f"{type(exc).__name__}: {exc}",
        )


@dataclass(frozen=True)
class CellSummary:
    cell: Cell
    replications: int
    failures: int
    boundary_count: int
    h2_mean: float
    h2_sd: float | None
    h2_bias: float
    sigma_eps_sq_mean: float
    sigma_eps_sq_sd: float | None
    sigma_eps_sq_bias: float
    adjusted_gamma_mean: float
    adjusted_gamma_sd: float | None
    adjusted_gamma_bias: float
    gamma_hat_mean: float
    gamma_hat_sd: float | None
    gamma_star_pred: float
    h2_true: float
    gamma0: float
    sigma_eps0_sq: float


@dataclass(frozen=True)
class SweepSummary:
    config_hash: str
    cells: list[CellSummary]
    records: list[ReplicationRecord] = field(repr=False, default_factory=list)


def _mean_sd(values: np.ndarray) -> tuple[float, float | None]:
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1)) if values.size > 1 else None
    return mean, sd


def summarize(records: list[ReplicationRecord], config_hash: str = "") -> SweepSummary:
    """Per-cell means, sds (divisor r-1), biases, and predicted limits."""
    if not records:
        raise DomainError("cannot summarize an empty record list")
    by_cell: dict[Cell, list[ReplicationRecord]] = {}
    for rec in records:
        by_cell.setdefault(rec.cell, []).append(rec)
    summaries = []
    for cell, recs in by_cell.items():
        good = [r for r in recs if r.fit is not None]
        truth = recs[0].truth
        limits = predicted_limits(
            cell.n, cell.p, cell.m, truth.gamma0, truth.sigma_eps_sq
        )
        if not good:
            # cell failed entirely: mark it and keep the sweep alive
            nan = float("nan")
            summaries.append(
                CellSummary(
                    cell=cell,
                    replications=len(recs),
                    failures=len(recs),
                    boundary_count=0,
                    h2_mean=nan, h2_sd=None, h2_bias=nan,
                    sigma_eps_sq_mean=nan, sigma_eps_sq_sd=None,
                    sigma_eps_sq_bias=nan,
                    adjusted_gamma_mean=nan, adjusted_gamma_sd=None,
                    adjusted_gamma_bias=nan,
                    gamma_hat_mean=nan, gamma_hat_sd=None,
                    gamma_star_pred=limits.gamma_star,
                    h2_true=truth.h2_true,
                    gamma0=truth.gamma0,
                    sigma_eps0_sq=truth.sigma_eps_sq,
                )
            )
            continue
        h2 = np.array([r.fit.h2_hat for r in good])
        sig = np.array([r.fit.sigma_eps_sq_hat for r in good])
        adj = np.array([r.fit.adjusted_gamma for r in good])
        gam = np.array([r.fit.gamma_hat for r in good])
        h2_mean, h2_sd = _mean_sd(h2)
        sig_mean, sig_sd = _mean_sd(sig)
        adj_mean, adj_sd = _mean_sd(adj)
        gam_mean, gam_sd = _mean_sd(gam)
        summaries.append(
            CellSummary(
                cell=cell,
                replications=len(recs),
                failures=len(recs) - len(good),
                boundary_count=sum(r.fit.boundary for r in good),
                h2_mean=h2_mean,
                h2_sd=h2_sd,
                h2_bias=h2_mean - truth.h2_true,
                sigma_eps_sq_mean=sig_mean,
                sigma_eps_sq_sd=sig_sd,
                sigma_eps_sq_bias=sig_mean - truth.sigma_eps_sq,
                adjusted_gamma_mean=adj_mean,
                adjusted_gamma_sd=adj_sd,
                adjusted_gamma_bias=adj_mean - truth.gamma0,
                gamma_hat_mean=gam_mean,
                gamma_hat_sd=gam_sd,
                gamma_star_pred=limits.gamma_star,
                h2_true=truth.h2_true,
                gamma0=truth.gamma0,
                sigma_eps0_sq=truth.sigma_eps_sq,
            )
        )
    return SweepSummary(config_hash=config_hash, cells=summaries)


def run_sweep(cfg: ExperimentConfig, threads: int = 1) -> SweepSummary:
    """Run every cell for `replications` reps; aggregation is order-free.

    Replication indices are global across cells, so cell boundaries do not
    perturb the random streams of later cells.
    """
    cells = cfg.cells()
    tasks = []
    counter = 0
    for cell in cells:
        for _ in range(cfg.replications):
            tasks.append((cell, counter))
            counter += 1
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(
                pool.map(lambda t: run_replication(cfg, t[1], t[0]), tasks)
            )
    else:
        records = [run_replication(cfg, idx, cell) for cell, idx in tasks]
    summary = summarize(records, cfg.config_hash())
    ordered = sorted(summary.cells, key=lambda s: cells.index(s.cell))
    return SweepSummary(
        config_hash=summary.config_hash, cells=ordered, records=records
    )


REPLICATION_COLUMNS = [
    "config_hash",
    "cell",
    "replication",
    "gamma_hat",
    "sigma_eps_sq_hat",
    "sigma_alpha_sq_hat",
    "h2_hat",
    "adjusted_gamma",
    "boundary",
    "error",
]

SUMMARY_COLUMNS = [
    "cell",
    "n",
    "p",
    "m",
    "replications",
    "failures",
    "boundary_count",
    "h2_mean",
    "h2_sd",
    "h2_bias",
    "sigma_eps_sq_mean",
    "sigma_eps_sq_sd",
    "sigma_eps_sq_bias",
    "adjusted_gamma_mean",
    "adjusted_gamma_sd",
    "adjusted_gamma_bias",
    "gamma_hat_mean",
    "gamma_hat_sd",
    "gamma_star_pred",
    "h2_true",
    "gamma0",
    "sigma_eps0_sq",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def replications_csv(summary: SweepSummary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPLICATION_COLUMNS)
    for rec in summary.records:
        if rec.fit is None:
            writer.writerow(
                [summary.config_hash, rec.cell.label, rec.index]
                + [""] * 6
                + [rec.error]
            )
        else:
            writer.writerow(
                [
                    summary.config_hash,
                    rec.cell.label,
                    rec.index,
                    _fmt(rec.fit.gamma_hat),
                    _fmt(rec.fit.sigma_eps_sq_hat),
                    _fmt(rec.fit.sigma_alpha_sq_hat),
                    _fmt(rec.fit.h2_hat),
                    _fmt(rec.fit.adjusted_gamma),
                    _fmt(rec.fit.boundary),
                    "",
                ]
            )
    return buf.getvalue()


def summary_csv(summary: SweepSummary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for s in summary.cells:
        writer.writerow(
            [
                s.cell.label,
                s.cell.n,
                s.cell.p,
                s.cell.m,
                s.replications,
                s.failures,
                s.boundary_count,
                _fmt(s.h2_mean),
                _fmt(s.h2_sd),
                _fmt(s.h2_bias),
                _fmt(s.sigma_eps_sq_mean),
                _fmt(s.sigma_eps_sq_sd),
                _fmt(s.sigma_eps_sq_bias),
                _fmt(s.adjusted_gamma_mean),
                _fmt(s.adjusted_gamma_sd),
                _fmt(s.adjusted_gamma_bias),
                _fmt(s.gamma_hat_mean),
                _fmt(s.gamma_hat_sd),
                _fmt(s.gamma_star_pred),
                _fmt(s.h2_true),
                _fmt(s.gamma0),
                _fmt(s.sigma_eps0_sq),
            ]
        )
    return buf.getvalue()
