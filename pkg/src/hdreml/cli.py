"""Command-line interface.

Subcommands:
    simulate  draw one design + phenotype bundle and write it to a directory
    fit       fit a bundle produced by `simulate`, print/write the fit JSON
    sweep     run a replicated experiment config, write replication CSVs
    limits    tabulate the closed-form limit functionals over a gamma grid
    spectra   empirical spectrum vs Marchenko-Pastur reference diagnostics

Exit codes: 0 success, 1 configuration/input error, 2 numeric failure.
"""

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import LimitSpec, write_limit_table
from .errors import DomainError, NumericError
from .harness import (
    DESK_SCALE_N,
    DESK_SCALE_P,
    FULL_SCALE_N,
    FULL_SCALE_P,
    ExperimentConfig,
    replications_csv,
    run_sweep,
    summary_csv,
)
from .reml import fit, fit_to_json, project
from .rng import replication_rng
from .simulate import (
    draw_allele_freqs,
    draw_genotypes,
    draw_phenotypes,
    gaussian_design,
    load_design,
    make_true_model,
    save_design,
    standardize,
)
from .spectral import MpLaw, esd_summary, mp_cdf


def _read_config(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DomainError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DomainError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DomainError("config must be a JSON object")
    return raw


def _cmd_simulate(args) -> int:
    cfg = _read_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = int(cfg.get("n", DESK_SCALE_N))
    p = int(cfg.get("p", DESK_SCALE_P))
    m = int(cfg.get("m", p))
    sigma_eps_sq = float(cfg.get("sigma_eps_sq", 0.4))
    h2_target = float(cfg.get("h2_target", 0.6))
    design_kind = cfg.get("design_kind", "snp")
    mu = float(cfg.get("mu", 0.0))
    seed = args.seed if args.seed is not None else int(cfg.get("master_seed", 0))

    rng = replication_rng(seed, 0)
    if design_kind == "snp":
        panel = draw_allele_freqs(p, rng)
        design = standardize(draw_genotypes(panel, n, rng))
    elif design_kind == "gaussian":
        design = gaussian_design(n, p, rng)
    else:
        raise DomainError(f"unknown design_kind {design_kind!r}")
    model = make_true_model(p, m, sigma_eps_sq, h2_target, mu)
    y, alpha1, eps = draw_phenotypes(design, model, rng)

    params = {
        "design_kind": design_kind,
        "master_seed": seed,
        "m": m,
        "sigma_eps_sq": sigma_eps_sq,
        "sigma_alpha_sq": model.sigma_alpha_sq,
        "h2_true": model.h2_true,
        "mu": mu,
    }
    save_design(design, out / "design.zmat", params)
    bundle = {
        "design": "design.zmat",
        "y": y.tolist(),
        "alpha1": alpha1.tolist(),
        "eps": eps.tolist(),
        "truth": params,
    }
    (out / "bundle.json").write_text(json.dumps(bundle, indent=2) + "\n")
    print(f"wrote bundle to {out}")
    return 0


def _cmd_fit(args) -> int:
    bundle_path = Path(args.config)
    try:
        bundle = json.loads(bundle_path.read_text())
    except FileNotFoundError as exc:
        raise DomainError(f"bundle not found: {bundle_path}") from exc
    except json.JSONDecodeError as exc:
        raise DomainError(f"bundle is not valid JSON: {exc}") from exc
    design, params = load_design(bundle_path.parent / bundle["design"])
    y = np.asarray(bundle["y"], dtype=float)
    spectrum = project(y, np.ones((design.n, 1)), design)
    result = fit(spectrum, m_hint=params.get("m"))
    text = fit_to_json(result)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _cmd_sweep(args) -> int:
    raw = _read_config(args.config)
    if args.full_scale:
        raw.setdefault("n", FULL_SCALE_N)
        raw.setdefault("p", FULL_SCALE_P)
        warnings.warn(
            f"full-scale run (n={raw['n']}, p={raw['p']}): expect a long runtime",
            stacklevel=1,
        )
    if args.seed is not None:
        raw["master_seed"] = args.seed
    cfg = ExperimentConfig(**raw)
    summary = run_sweep(cfg, threads=args.threads)
    out = Path(args.out if args.out else cfg.output_path or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "replications.csv").write_text(replications_csv(summary))
    (out / "summary.csv").write_text(summary_csv(summary))
    if cfg.emit_limits:
        cells = cfg.cells()
        gammas = sorted({c.true_model().gamma0 * c.m / c.p for c in cells})
        spec0 = cells[0].true_model()
        write_limit_table(
            out / "limits.csv",
            LimitSpec(
                tau=cells[0].n / cells[0].p,
                omega=cells[0].m / cells[0].p,
                gamma0=spec0.gamma0,
                sigma_eps0_sq=spec0.sigma_eps_sq,
            ),
            gammas,
        )
    failed = sum(s.failures for s in summary.cells)
    print(f"wrote {out / 'replications.csv'} and {out / 'summary.csv'}"
          + (f" ({failed} failed replications)" if failed else ""))
    return 0


def _cmd_limits(args) -> int:
    cfg = _read_config(args.config)
    try:
        spec = LimitSpec(
            tau=float(cfg["tau"]),
            omega=float(cfg["omega"]),
            gamma0=float(cfg["gamma0"]),
            sigma_eps0_sq=float(cfg.get("sigma_eps0_sq", 0.4)),
        )
        gammas = [float(g) for g in cfg.get("gammas", [])]
    except KeyError as exc:
        raise DomainError(f"limits config missing field {exc}") from exc
    if not gammas:
        g = spec.gamma_star
        gammas = sorted({g / 2, g, 2 * g})
    out = args.out if args.out else "limits.csv"
    write_limit_table(out, spec, gammas)
    print(f"wrote {out}")
    return 0


def _cmd_spectra(args) -> int:
    cfg = _read_config(args.config)
    n = int(cfg.get("n", 1000))
    p = int(cfg.get("p", 10000))
    design_kind = cfg.get("design_kind", "gaussian")
    projected = bool(cfg.get("projected", False))
    seed = args.seed if args.seed is not None else int(cfg.get("master_seed", 0))
    rng = replication_rng(seed, 0)
    if design_kind == "snp":
        design = standardize(draw_genotypes(draw_allele_freqs(p, rng), n, rng))
    elif design_kind == "gaussian":
        # raw-spectrum diagnostics compare against the i.i.d.-entry law, so
        # skip column standardization (which pins one eigenvalue at zero)
        design = gaussian_design(n, p, rng, standardized=projected)
    else:
        raise DomainError(f"unknown design_kind {design_kind!r}")
    if projected:
        spectrum = project(np.zeros(n), np.ones((n, 1)), design)
        eigenvalues = spectrum.lambdas
    else:
        kernel = design.z @ design.z.T / design.p
        eigenvalues = np.linalg.eigvalsh(kernel)
    law = MpLaw(n / p)
    summary = esd_summary(eigenvalues, law)
    out = args.out if args.out else "spectra.csv"
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "eigenvalue", "ecdf", "mp_cdf"])
        m = summary.eigenvalues.size
        ref = np.asarray(mp_cdf(summary.eigenvalues, law))
        for i, (lam, r) in enumerate(zip(summary.eigenvalues, ref), start=1):
            writer.writerow([i, repr(float(lam)), repr(i / m), repr(float(r))])
    print(
        f"wrote {out}: ks={summary.ks_distance:.4f} "
        f"lambda_min={summary.lambda_min:.4f} lambda_max={summary.lambda_max:.4f} "
        f"support=({law.support_lo:.4f}, {law.support_hi:.4f})"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdreml",
        description="High-dimensional REML variance components: simulation, "
        "fitting, sweeps, and spectral diagnostics",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, helptext in (
        ("simulate", _cmd_simulate, "emit a design/phenotype bundle"),
        ("fit", _cmd_fit, "fit a serialized bundle"),
        ("sweep", _cmd_sweep, "run a replicated experiment config"),
        ("limits", _cmd_limits, "emit closed-form limit tables"),
        ("spectra", _cmd_spectra, "emit ESD vs M-P diagnostics"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, help="path to a JSON document")
        sp.add_argument("--seed", type=int, default=None, help="master seed override")
        sp.add_argument("--out", default=None, help="output path or directory")
        sp.add_argument("--threads", type=int, default=1, help="worker threads")
        sp.add_argument(
            "--full-scale",
            action="store_true",
            help="default to the full n=2000, p=20000 scale (slow)",
        )
        sp.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
