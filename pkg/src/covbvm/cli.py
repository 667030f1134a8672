"""Configuration-driven experiment runner.

A single JSON config names the command and its sub-specs; outputs are a report
JSON, raw-statistic CSVs and a manifest recording the config hash and seed so
any run can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import warnings

import numpy as np
from scipy import stats as scipy_stats

from . import __version__
from .datagen import DatasetSpec, estimate_delta_hat, estimate_delta_tilde, sample_dataset
from .diagnostics import (
    budget_functional,
    budget_posterior_independence,
    budget_projector,
    default_statistic_battery,
    estimate_contraction_radius,
    flatness_profile,
    kolmogorov_distance,
    save_flatness_csv,
    tv_distance_over_statistics,
)
from .errors import ConfigError, CovBvmError, LowDraws
from .functionals import evaluate, evaluate_batch, functional_from_json, standardized_statistic
from .posterior import (
    InverseWishartPrior,
    UniformVicinityPrior,
    default_sampler,
    localize_draws,
    sample_posterior,
)
from .projectors import (
    empirical_projector,
    posterior_projector_statistic,
    projector_bvm_check,
)
from .spd import SpdMatrix, load_matrix_csv
from .spectral import EigenspaceSelection, model_from_spectrum, spectral_decompose

COMMANDS = (
    "bvm-functional",
    "bvm-projector",
    "contraction",
    "flatness",
    "bridge",
    "coverage",
    "budget",
)

SCHEMA_VERSION = 1


@dataclasses.dataclass(frozen=True)
class CoverageReport:
    nominal_level: float
    replications: int
    empirical_coverage: float
    interval_widths: dict
    warnings: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "nominal_level": self.nominal_level,
            "replications": self.replications,
            "empirical_coverage": self.empirical_coverage,
            "interval_widths": dict(self.interval_widths),
            "warnings": list(self.warnings),
        }


# ---------------------------------------------------------------------------
# Config parsing


def _require(cfg: dict, key: str, where: str = "config"):
    if key not in cfg:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return cfg[key]


def _build_model(doc: dict, base_dir: str):
    if "sigma_csv" in doc:
        sigma = load_matrix_csv(os.path.join(base_dir, doc["sigma_csv"]))
        return spectral_decompose(sigma, mults=doc.get("mult"))
    mu = _require(doc, "mu", "config.model")
    mult = _require(doc, "mult", "config.model")
    return model_from_spectrum(mu, mult, rotation_seed=doc.get("rotation_seed"))


def _build_prior(doc: dict, model):
    kind = _require(doc, "kind", "config.prior")
    p = model.dim
    if kind == "inverse_wishart":
        scale_diag = doc.get("scale_diag", 0.01)
        scale = SpdMatrix(scale_diag * np.eye(p))
        return InverseWishartPrior(scale, b=doc.get("b", 2.0))
    if kind == "uniform_vicinity":
        delta = _require(doc, "delta", "config.prior")
        return UniformVicinityPrior(model.sigma_star, delta)
    raise ConfigError(
        f"config.prior: unsupported kind {kind!r} (generic priors need a callable "
        "density and are not configurable from JSON)"
    )


def _build_data_spec(doc: dict, model, seed_override=None) -> DatasetSpec:
    return DatasetSpec(
        model=model,
        family=doc.get("family", "gaussian"),
        n=int(_require(doc, "n", "config.data")),
        seed=int(doc.get("seed", seed_override if seed_override is not None else 0)),
    )


def _monte_carlo(cfg: dict) -> dict:
    mc = cfg.get("monte_carlo", {})
    return {
        "posterior_draws": int(mc.get("posterior_draws", 10_000)),
        "replications": int(mc.get("replications", 100)),
        "reference_draws": int(mc.get("reference_draws", 100_000)),
    }


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _write_csv(path, header: str, values) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for v in values:
            fh.write(repr(float(v)) + "\n")


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Command implementations


def _cmd_bvm_functional(cfg, model, out_dir, tag, seed):
    mc = _monte_carlo(cfg)
    data_spec = _build_data_spec(_require(cfg, "data"), model, seed)
    prior = _build_prior(_require(cfg, "prior"), model)
    functional = functional_from_json(model, _require(cfg, "functional"))
    dataset = sample_dataset(data_spec)
    draws = sample_posterior(default_sampler(prior, dataset, seed=seed), mc["posterior_draws"])
    stat = standardized_statistic(functional, draws, dataset, model)
    ks = kolmogorov_distance(stat.law, scipy_stats.norm.cdf)
    csv_path = os.path.join(out_dir, "statistic.csv")
    _write_csv(csv_path, f"standardized_{functional.kind} config={tag}", stat.law.values)
    report = {
        "command": "bvm-functional",
        "ks": ks,
        "n": data_spec.n,
        "posterior_draws": mc["posterior_draws"],
        "functional": functional.kind,
        "normalizer": stat.normalizer,
    }
    return report, ["statistic.csv"]


def _cmd_bvm_projector(cfg, model, out_dir, tag, seed):
    mc = _monte_carlo(cfg)
    data_spec = _build_data_spec(_require(cfg, "data"), model, seed)
    prior = _build_prior(_require(cfg, "prior"), model)
    sel_doc = _require(cfg, "selection")
    sel = EigenspaceSelection(int(sel_doc["s_minus"]), int(sel_doc["s_plus"]))
    l_star = float(_require(cfg, "l_star_j"))
    report_obj = projector_bvm_check(
        model,
        sel,
        prior,
        data_spec,
        mc["posterior_draws"],
        l_star,
        seed=seed,
        reference_draws=mc["reference_draws"],
    )
    csv_path = os.path.join(out_dir, "statistic.csv")
    _write_csv(csv_path, f"projector_statistic config={tag}", report_obj.statistic.law.values)
    return report_obj.to_json_dict(), ["statistic.csv"]


def _cmd_contraction(cfg, model, out_dir, tag, seed):
    mc = _monte_carlo(cfg)
    data_spec = _build_data_spec(_require(cfg, "data"), model, seed)
    prior = _build_prior(_require(cfg, "prior"), model)
    grid = _require(cfg, "delta_grid")
    if model.dim / data_spec.n > 0.1:
        warnings.warn(
            f"p/n = {model.dim / data_spec.n:.3f} > 0.1; the contraction bound's "
            "implicit constant may not apply",
            RuntimeWarning,
        )
    radius = estimate_contraction_radius(
        prior, data_spec, grid, mc["posterior_draws"], mc["replications"], seed=seed
    )
    report = {
        "command": "contraction",
        "radius": radius if math.isfinite(radius) else "inf",
        "delta_grid": list(map(float, grid)),
        "replications": mc["replications"],
    }
    return report, []


def _cmd_flatness(cfg, model, out_dir, tag, seed):
    mc = _monte_carlo(cfg)
    prior = _build_prior(_require(cfg, "prior"), model)
    grid = _require(cfg, "delta_grid")
    profile = flatness_profile(prior, model, grid, mc["replications"], seed=seed)
    csv_path = os.path.join(out_dir, "flatness.csv")
    save_flatness_csv(csv_path, profile)
    report = {
        "command": "flatness",
        "delta_grid": [float(x) for x in profile.delta_grid],
        "rho": [float(x) for x in profile.rho_values],
    }
    return report, ["flatness.csv"]


def _cmd_bridge(cfg, model, out_dir, tag, seed):
    mc = _monte_carlo(cfg)
    data_spec = _build_data_spec(_require(cfg, "data"), model, seed)
    conj_prior = _build_prior(cfg.get("prior", {"kind": "inverse_wishart"}), model)
    if not isinstance(conj_prior, InverseWishartPrior):
        raise ConfigError("config.prior: bridge runs compare against a conjugate prior")
    n = data_spec.n
    delta_bar = cfg.get("delta_bar")
    if delta_bar is None:
        grid = _require(cfg, "delta_grid")
        delta_bar = estimate_contraction_radius(
            conj_prior, data_spec, grid, max(1000, mc["posterior_draws"] // 4),
            min(mc["replications"], 20), seed=seed,
        )
    dataset = sample_dataset(data_spec)
    conj = sample_posterior(default_sampler(conj_prior, dataset, seed=seed), mc["posterior_draws"])
    localized = localize_draws(conj, model.sigma_star, delta_bar)
    uniform_prior = UniformVicinityPrior(model.sigma_star, delta_bar)
    uniform = sample_posterior(
        default_sampler(uniform_prior, dataset, seed=seed + 1), mc["posterior_draws"]
    )
    battery = default_statistic_battery()
    report = {
        "command": "bridge",
        "delta_bar": float(delta_bar),
        "localized_vs_full": tv_distance_over_statistics(localized, conj, battery),
        "uniform_vs_conjugate": tv_distance_over_statistics(uniform, conj, battery),
        "localization_bound": 2.0 / n,
        "n": n,
    }
    return report, []


def _posterior_interval(values: np.ndarray, level: float):
    lo = float(np.quantile(values, (1 - level) / 2))
    hi = float(np.quantile(values, 1 - (1 - level) / 2))
    return lo, hi


def _cmd_coverage(cfg, model, out_dir, tag, seed):
    mc = _monte_carlo(cfg)
    data_spec = _build_data_spec(_require(cfg, "data"), model, seed)
    prior = _build_prior(_require(cfg, "prior"), model)
    level = float(cfg.get("nominal_level", 0.95))
    reps = mc["replications"]
    if reps < 100:
        raise ConfigError("config.monte_carlo.replications: coverage needs at least 100")
    draws_per_rep = mc["posterior_draws"]
    notes = []
    if draws_per_rep < 100:
        msg = f"only {draws_per_rep} posterior draws per replication; quantiles unreliable"
        warnings.warn(msg, LowDraws)
        notes.append(msg)
    functional = None
    sel = None
    if "functional" in cfg:
        functional = functional_from_json(model, cfg["functional"])
        truth = evaluate(functional, model.sigma_star)
    elif "selection" in cfg:
        sel_doc = cfg["selection"]
        sel = EigenspaceSelection(int(sel_doc["s_minus"]), int(sel_doc["s_plus"]))
    else:
        raise ConfigError("config: coverage needs a functional or a selection")
    hits = 0
    widths = np.empty(reps)
    for k in range(reps):
        dataset = sample_dataset(data_spec, seed_branch=k)
        draws = sample_posterior(
            default_sampler(prior, dataset, seed=seed + 7919 * k), draws_per_rep
        )
        if functional is not None:
            vals = evaluate_batch(functional, draws.matrices)
            lo, hi = _posterior_interval(vals, level)
            hits += lo <= truth <= hi
            widths[k] = hi - lo
        else:
            stat = posterior_projector_statistic(model, sel, draws, dataset)
            phat = empirical_projector(dataset, model, sel)
            truth_stat = data_spec.n * float(
                np.sum((projector_truth(model, sel) - phat) ** 2)
            )
            q = float(np.quantile(stat.law.values, level))
            hits += truth_stat <= q
            widths[k] = q
    report = CoverageReport(
        level,
        reps,
        hits / reps,
        {
            "mean": float(np.mean(widths)),
            "median": float(np.median(widths)),
            "max": float(np.max(widths)),
        },
        tuple(notes),
    )
    return {"command": "coverage", **report.to_json_dict()}, []


def projector_truth(model, sel) -> np.ndarray:
    return model.group_projectors[sel.s_minus - 1 : sel.s_plus].sum(axis=0)


def _cmd_budget(cfg, model, out_dir, tag, seed):
    doc = _require(cfg, "budget")
    context = _require(doc, "context", "config.budget")
    if context == "posterior_independence":
        budget = budget_posterior_independence(
            float(doc["rho"]), float(doc["rho_w"]), int(doc["n"])
        )
    elif context == "functional":
        functional = functional_from_json(model, _require(cfg, "functional"))
        budget = budget_functional(
            model,
            functional,
            int(doc["n"]),
            float(doc["delta_w"]),
            float(doc["delta_hat"]),
            float(doc["delta_tilde"]),
            float(doc.get("g_norm_scaled", 0.0)),
        )
    elif context == "projector":
        sel_doc = _require(cfg, "selection")
        sel = EigenspaceSelection(int(sel_doc["s_minus"]), int(sel_doc["s_plus"]))
        budget = budget_projector(
            model,
            sel,
            int(doc["n"]),
            model.dim,
            float(doc["delta_hat"]),
            float(doc.get("g_norm", 0.0)),
            float(_require(cfg, "l_star_j")),
        )
    else:
        raise ConfigError(f"config.budget.context: unknown context {context!r}")
    return {"command": "budget", **budget.to_json_dict()}, []


_DISPATCH = {
    "bvm-functional": _cmd_bvm_functional,
    "bvm-projector": _cmd_bvm_projector,
    "contraction": _cmd_contraction,
    "flatness": _cmd_flatness,
    "bridge": _cmd_bridge,
    "coverage": _cmd_coverage,
    "budget": _cmd_budget,
}


# ---------------------------------------------------------------------------
# Entry point


def run(cfg: dict, config_dir: str = ".", out_override=None, seed_override=None) -> dict:
    """Validate and execute one experiment config; returns the report dict."""
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"config.schema_version: expected {SCHEMA_VERSION}, "
            f"got {cfg.get('schema_version')!r}"
        )
    command = _require(cfg, "command")
    if command not in COMMANDS:
        raise ConfigError(f"config.command: unknown command {command!r}")
    if seed_override is not None:
        cfg = {**cfg, "seed": int(seed_override)}
    if "seed" not in cfg:
        raise ConfigError("config.seed: a seed is mandatory")
    seed = int(cfg["seed"])
    out_dir = out_override or cfg.get("output_dir", "out")
    os.makedirs(out_dir, exist_ok=True)
    model = _build_model(_require(cfg, "model"), config_dir)
    tag = config_hash(cfg)
    report, outputs = _DISPATCH[command](cfg, model, out_dir, tag, seed)
    _write_json(os.path.join(out_dir, "report.json"), report)
    manifest = {
        "config_sha256": tag,
        "seed": seed,
        "command": command,
        "outputs": ["report.json", *outputs],
        "version": __version__,
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="covbvm", description="covariance BvM experiment runner"
    )
    parser.add_argument("--config", required=True, help="path to the experiment JSON")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="suggested BLAS thread count (best effort; set before heavy imports)",
    )
    args = parser.parse_args(argv)
    if args.threads is not None:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"{args.config}: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        report = run(
            cfg,
            config_dir=os.path.dirname(os.path.abspath(args.config)),
            out_override=args.out,
            seed_override=args.seed,
        )
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    except CovBvmError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(report, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
