"""Reproducible experiment pipelines behind the command-line interface.

Each run writes into a private staging directory and only moves files into
the output directory once every stage has succeeded, so a failed run leaves
nothing behind. Every output directory gets a ``manifest.json`` holding the
resolved configuration and the content hash of every file written.
"""
from __future__ import annotations

import contextlib
import hashlib
import logging
import platform
import shutil
import tempfile
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__, _kernels
from .bias import (
    BIN_LABELS,
    expected_gradient_field,
    gradient_difference_correlation,
    gradients_at,
    quartile_region_summary,
)
from .datagen import DesignSpec, make_design, simulate
from .errors import ConfigError, InvalidArgumentError, MirtError, StageError
from .estimation import FitConfig, FitResult, align_signs, fit_compensatory_em, map_skills_batch
from .io import (
    dumps_json,
    emit_plot_data,
    git_blob_hash,
    load_bank,
    read_json,
    read_responses,
    write_json,
    write_responses,
)
from .model import CompParams, item_case
from .rng import Rng
from .variance import (
    FAMILIES,
    ReplicationPlan,
    build_report,
    experimental_variance,
    info_scalars,
    pseudo_true_params,
)

log = logging.getLogger(__name__)

SUBCOMMANDS = ("generate", "fit", "skills", "bias", "variance")

PRESETS = {
    "desk": {"N": 100_000, "N_big": 200_000, "expectation_samples": 20_000, "n": 2000, "R": 200},
    "paper": {"N": 1_000_000, "N_big": 1_000_000, "expectation_samples": 100_000, "n": 10_000, "R": 30_000},
}


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    out: str = "out"
    seed: int = 0
    preset: str = "desk"
    design: str = "bias"
    K: int = 2
    N: int | None = None
    N_big: int | None = None
    expectation_samples: int | None = None
    n: int | None = None
    R: int | None = None
    quad_points: int | None = None
    threads: int = 1
    extent: float = 3.0
    resolution: int = 50
    anchor: str = "pseudo_true"
    refinement: bool = True
    em_tolerance: float = 1e-4
    max_em_iterations: int = 500
    responses: str | None = None
    bank: str | None = None
    fit: str | None = None

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; use one of {sorted(PRESETS)}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for name, value in PRESETS[self.preset].items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        if self.design not in ("bias", "variance"):
            raise ConfigError(f"unknown design {self.design!r}")
        if self.K not in (2, 3):
            raise ConfigError(f"K must be 2 or 3, got {self.K}")
        if self.design == "bias" and self.K != 2 and self.subcommand in ("generate", "bias"):
            raise ConfigError("the bias design has K=2")
        if self.subcommand == "bias" and self.K != 2:
            raise ConfigError("the bias experiment has K=2")
        if self.quad_points is not None and self.quad_points < 2:
            raise ConfigError("quad_points must be at least 2")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        if self.anchor not in ("pseudo_true", "em"):
            raise ConfigError(f"anchor must be 'pseudo_true' or 'em', got {self.anchor!r}")
        if self.subcommand in ("fit", "skills") and not self.responses:
            raise ConfigError(f"{self.subcommand} needs a responses file")
        if self.subcommand == "skills" and not self.fit:
            raise ConfigError("skills needs a fit file")
        for name in ("N", "N_big", "expectation_samples", "n"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.R != 0 and self.R < 2:
            raise ConfigError("R must be 0 (skip the replication study) or at least 2")

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        """Build from string or typed values, ignoring ``None`` entries."""
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            key = {"k": "K", "n_big": "N_big", "quad_points_per_dim": "quad_points"}.get(key, key)
            if key not in types:
                raise ConfigError(f"unknown configuration key {key!r}")
            if value is None:
                continue
            kwargs[key] = _coerce(key, types[key], value)
        if "subcommand" not in kwargs:
            raise ConfigError("no subcommand given")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    def fit_config(self, mask=None) -> FitConfig:
        return FitConfig(
            max_em_iterations=self.max_em_iterations,
            em_tolerance=self.em_tolerance,
            points_per_dim=self.quad_points,
            loading_mask=mask,
            seed=self.seed,
        )


def _coerce(key, typ, value):
    if not isinstance(value, str):
        return value
    typ = str(typ)
    try:
        if typ.startswith("bool"):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if typ.startswith("int"):
            return int(float(value)) if "e" in value.lower() else int(value)
        if typ.startswith("float"):
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return value


@contextlib.contextmanager
def stage(name):
    try:
        yield
    except StageError:
        raise
    except MirtError as exc:
        raise StageError(name, exc) from exc


class Outputs:
    """Stage files in a temporary directory; publish them all on success."""

    def __init__(self, out):
        self.out = Path(out)
        self.files = {}

    def __enter__(self):
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".partial-", dir=self.out.parent))
        return self

    def path(self, name) -> Path:
        self.files[name] = None
        return self.tmp / name

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        self.out.mkdir(parents=True, exist_ok=True)
        for name in self.files:
            shutil.move(str(self.tmp / name), str(self.out / name))
        shutil.rmtree(self.tmp, ignore_errors=True)
        return False

    def manifest(self, cfg: RunConfig, extra=None):
        hashes = {name: git_blob_hash((self.tmp / name).read_bytes()) for name in sorted(self.files)}
        # the output location does not affect any result
        config = {k: v for k, v in cfg.to_dict().items() if k != "out"}
        doc = {
            "subcommand": cfg.subcommand,
            "seed": cfg.seed,
            "config": config,
            "config_hash": hashlib.sha256(dumps_json(config).encode()).hexdigest(),
            "files": hashes,
            "versions": {
                "mirtmis": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
                "kernels": _kernels.BACKEND,
            },
        }
        if extra:
            doc.update(extra)
        write_json(doc, self.path("manifest.json"))


def _ids(bank):
    return tuple(it.id for it in bank.items)


def _design(cfg: RunConfig) -> DesignSpec:
    return DesignSpec(design="bias", K=2) if cfg.design == "bias" else DesignSpec.variance(cfg.K)


def run_generate(cfg: RunConfig) -> Path:
    rng = Rng(cfg.seed)
    spec = _design(cfg)
    with Outputs(cfg.out) as out:
        with stage("design"):
            bank = make_design(spec, rng)
        with stage("sample"):
            z, Y = simulate(bank, cfg.N, rng)
        write_json(bank.to_dict(), out.path("bank.json"))
        write_responses(Y, out.path("responses.csv"))
        emit_plot_data(z, [f"z{k + 1}" for k in range(bank.K)], out.path("skills_true.csv"))
        out.manifest(cfg, {"design": spec.to_dict()})
    return Path(cfg.out)


def run_fit(cfg: RunConfig) -> Path:
    with stage("load"):
        Y = read_responses(cfg.responses)
        bank = load_bank(cfg.bank) if cfg.bank else None
    mask = None
    ids = None
    if bank is not None:
        if bank.M != Y.shape[1] or bank.K != cfg.K:
            raise StageError("load", InvalidArgumentError("bank does not match the responses or K"))
        mask, ids = bank.skill_mask(), _ids(bank)
    with Outputs(cfg.out) as out:
        with stage("fit"):
            res = fit_compensatory_em(Y, cfg.K, cfg.fit_config(mask), ids=ids)
            if mask is not None:
                res = replace(res, params=align_signs(res.params, mask))
        write_json(res.to_dict(), out.path("fit.json"))
        out.manifest(cfg)
    return Path(cfg.out)


def run_skills(cfg: RunConfig) -> Path:
    with stage("load"):
        Y = read_responses(cfg.responses)
        fit = FitResult.from_dict(read_json(cfg.fit))
    with Outputs(cfg.out) as out:
        with stage("map"):
            gamma = map_skills_batch(Y, fit.params)
        emit_plot_data(gamma, [f"gamma{k + 1}" for k in range(fit.params.K)], out.path("skills.csv"))
        out.manifest(cfg)
    return Path(cfg.out)


def _region_csv(table, path):
    rows = [[label] + values for label, values in table.rows()]
    emit_plot_data(rows, ["skill2\\skill1"] + list(BIN_LABELS), path)


def case_loading_summary(bank, params: CompParams) -> dict:
    """Fraction of Case-1 items with alpha_1 < alpha_2 and Case-2 items with alpha_2 < alpha_1."""
    cases = {1: [], 2: [], 3: [], 4: []}
    for i, item in enumerate(bank.items):
        if item.skills == (1, 2):
            cases[item_case(item)].append(i)
    a = params.alpha
    c1, c2 = np.array(cases[1], dtype=int), np.array(cases[2], dtype=int)
    return {
        "case_counts": {str(k): len(v) for k, v in cases.items()},
        "case1_alpha1_lt_alpha2": float(np.mean(a[c1, 0] < a[c1, 1])) if c1.size else None,
        "case2_alpha2_lt_alpha1": float(np.mean(a[c2, 1] < a[c2, 0])) if c2.size else None,
    }


@dataclass
class BiasArtifacts:
    bank: object
    fit: FitResult
    skills: np.ndarray
    estimates: np.ndarray
    gradients: np.ndarray
    correlation: np.ndarray
    difference_tables: list
    gradient_tables: list
    loading_summary: dict


def bias_pipeline(cfg: RunConfig) -> BiasArtifacts:
    rng = Rng(cfg.seed)
    with stage("design"):
        bank = make_design(DesignSpec(design="bias", K=2), rng)
    with stage("sample"):
        z, Y = simulate(bank, cfg.N, rng)
    mask = bank.skill_mask()
    with stage("fit"):
        fit = fit_compensatory_em(Y, 2, cfg.fit_config(mask), ids=_ids(bank))
        fit = replace(fit, params=align_signs(fit.params, mask))
    with stage("map"):
        gamma = map_skills_batch(Y, fit.params)
    with stage("gradient"):
        grads = gradients_at(z, Y, fit.params)
        diff = gamma - z
        corr = gradient_difference_correlation(gradients=grads, differences=diff)
        dtabs = quartile_region_summary(diff, z)
        gtabs = quartile_region_summary(grads, z)
    return BiasArtifacts(bank, fit, z, gamma, grads, corr, dtabs, gtabs,
                         case_loading_summary(bank, fit.params))


def run_bias_experiment(cfg: RunConfig) -> BiasArtifacts:
    with Outputs(cfg.out) as out:
        art = bias_pipeline(cfg)
        with stage("field"):
            fields_ = {
                flag: expected_gradient_field(art.bank, art.fit.params, cfg.extent, cfg.resolution, flag)
                for flag in (True, False)
            }
        write_json(art.bank.to_dict(), out.path("bank.json"))
        write_json(art.fit.to_dict(), out.path("fit.json"))
        diff = art.estimates - art.skills
        emit_plot_data(
            np.hstack([art.skills, art.gradients, diff]),
            ["z1", "z2", "g1", "g2", "d1", "d2"],
            out.path("scatter.csv"),
        )
        for k in range(2):
            _region_csv(art.difference_tables[k], out.path(f"difference_skill{k + 1}.csv"))
            _region_csv(art.gradient_tables[k], out.path(f"gradient_skill{k + 1}.csv"))
        emit_plot_data(fields_[True], ["z1", "z2", "g1", "g2"], out.path("field_prior.csv"))
        emit_plot_data(fields_[False], ["z1", "z2", "g1", "g2"], out.path("field_noprior.csv"))
        write_json(
            {
                "pearson_r": [float(v) for v in art.correlation],
                "N": cfg.N,
                "em_iterations": art.fit.iterations,
                "em_converged": art.fit.converged,
                "loadings": art.loading_summary,
            },
            out.path("correlation.json"),
        )
        out.manifest(cfg)
    return art


def run_variance_experiment(cfg: RunConfig):
    rng = Rng(cfg.seed)
    with Outputs(cfg.out) as out:
        with stage("design"):
            bank = make_design(DesignSpec.variance(cfg.K), rng)
        config = cfg.fit_config(bank.skill_mask())
        with stage("pseudo_true"):
            star = pseudo_true_params(bank, cfg.N_big, config, rng)
        with stage("information"):
            info = info_scalars(bank, star, cfg.expectation_samples, rng, config)
        exp = None
        if cfg.R:
            plan = ReplicationPlan(n=cfg.n, R=cfg.R, refinement=cfg.refinement,
                                   seed=int(rng.child("replicates").generator().integers(2**63)),
                                   anchor=cfg.anchor, workers=cfg.threads)
            with stage("experimental"):
                exp = experimental_variance(bank, plan, star, config)
        meta = {"N_big": cfg.N_big, "expectation_samples": cfg.expectation_samples}
        if exp is not None:
            meta.update({"n": cfg.n, "R": cfg.R, "dropped": exp.dropped, "anchor": cfg.anchor})
        report = build_report(info, _ids(bank), bank.K, exp, meta)
        write_json(bank.to_dict(), out.path("bank.json"))
        write_json(star.to_dict(), out.path("pseudo_true.json"))
        write_json(report.to_dict(), out.path("variance_report.json"))
        summary = report.summary()
        if exp is not None:
            emit_plot_data(
                [[fam, summary[fam]["sandwich_vs_experimental"]["MAE"],
                  summary[fam]["sandwich_vs_experimental"]["MAPE"]] for fam in FAMILIES],
                ["family", "MAE", "MAPE_percent"],
                out.path("table_sandwich_vs_experimental.csv"),
            )
            emit_plot_data(
                zip(report.labels, report.families, report.sandwich, report.experimental),
                ["parameter", "family", "sandwich", "experimental"],
                out.path("scatter_sandwich_vs_experimental.csv"),
            )
        emit_plot_data(
            [[fam, summary[fam]["sandwich_vs_naive"]["MAE"], summary[fam]["sandwich_vs_naive"]["MAPE"]]
             for fam in FAMILIES],
            ["family", "MAE", "MAPE_percent"],
            out.path("table_sandwich_vs_naive.csv"),
        )
        emit_plot_data(
            zip(report.labels, report.families, report.sandwich, report.naive),
            ["parameter", "family", "sandwich", "naive"],
            out.path("scatter_sandwich_vs_naive.csv"),
        )
        out.manifest(cfg)
    return report, exp


RUNNERS = {
    "generate": run_generate,
    "fit": run_fit,
    "skills": run_skills,
    "bias": run_bias_experiment,
    "variance": run_variance_experiment,
}


def run(cfg: RunConfig):
    return RUNNERS[cfg.subcommand](cfg)
