"""Asymptotic variances of misspecified item-parameter MLEs.

For every single parameter ``theta`` the information ``I = -E[d2 ln p_c]`` and
the score second moment ``J = E[(d ln p_c)^2]`` are estimated by Monte Carlo
over response patterns drawn from the true model. ``J / I^2`` is the sandwich
variance and ``1 / I`` the naive one; both are compared with ``n Var(theta_hat)``
measured across replicated fits.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import skew

from .datagen import simulate
from .errors import ExperimentError, IllConditionedError, InvalidArgumentError, MirtError, NumericalError
from .estimation import FitConfig, Profile, align_signs, compress_patterns, fit_compensatory_em, refine_one_parameter
from .marginal import ParamId, parameter_list, pattern_derivatives
from .model import CompParams, ItemBank
from .rng import Rng, as_rng

log = logging.getLogger(__name__)

FAMILIES = ("difficulty", "discrimination")


def family(p: ParamId) -> str:
    return "difficulty" if p.kind == "beta" else "discrimination"


@dataclass(frozen=True)
class ReplicationPlan:
    n: int = 2000
    R: int = 200
    refinement: bool = True
    seed: int = 0
    # Explicit replicate stream ids; defaults to 0..R-1.
    replicate_ids: tuple | None = None
    # Parameters held fixed during the 1-D refinement: "pseudo_true" or "em".
    anchor: str = "pseudo_true"
    warm_start: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.n < 100:
            raise InvalidArgumentError("replicates need n >= 100 learners")
        if self.R < 2:
            raise InvalidArgumentError("need at least two replicates")
        if self.replicate_ids is not None and len(self.replicate_ids) != self.R:
            raise InvalidArgumentError("one replicate id per replicate")
        if self.anchor not in ("pseudo_true", "em"):
            raise InvalidArgumentError(f"unknown refinement anchor {self.anchor!r}")

    @property
    def ids(self) -> tuple:
        return tuple(range(self.R)) if self.replicate_ids is None else tuple(self.replicate_ids)


def _fit_config(bank: ItemBank, config: FitConfig | None) -> FitConfig:
    config = FitConfig() if config is None else config
    if config.loading_mask is None:
        config = replace(config, loading_mask=bank.skill_mask())
    return config


def pseudo_true_params(bank: ItemBank, N_big: int, config: FitConfig | None = None, rng=None) -> CompParams:
    """Large-sample compensatory fit standing in for the pseudo-true parameters."""
    config = _fit_config(bank, config)
    _, Y = simulate(bank, N_big, as_rng(rng).child("pseudo_true"))
    fit = fit_compensatory_em(Y, bank.K, config, ids=tuple(it.id for it in bank.items))
    if not fit.converged:
        log.warning("pseudo-true fit stopped after %d iterations without converging", fit.iterations)
    return align_signs(fit.params, config.loading_mask)


@dataclass(frozen=True)
class InfoScalars:
    params: tuple  # ParamId
    I: np.ndarray
    J: np.ndarray
    I_se: np.ndarray
    J_se: np.ndarray
    sample_size: int


def info_scalars(generator, params: CompParams, sample_size: int, rng=None,
                 config: FitConfig | None = None, mask=None) -> InfoScalars:
    """Monte Carlo estimates of the per-parameter ``I`` and ``J``.

    ``generator`` is the true model: an :class:`ItemBank` (non-compensatory)
    or a :class:`CompParams` (compensatory, i.e. correctly specified).
    """
    config = FitConfig() if config is None else config
    if mask is None:
        mask = generator.skill_mask() if isinstance(generator, ItemBank) else config.mask_for(params.M, params.K)
    if sample_size < 2:
        raise InvalidArgumentError("need at least two Monte Carlo samples")
    _, Y = simulate(generator, sample_size, as_rng(rng).child("expectation"))
    patterns, counts = compress_patterns(Y)
    scores, seconds, plist = pattern_derivatives(patterns, params, config.grid(params.K), mask)
    n = counts.sum()
    J = counts @ (scores ** 2) / n
    I = -(counts @ seconds) / n
    J_se = np.sqrt(np.maximum(counts @ (scores ** 2 - J) ** 2 / n, 0.0) / n)
    I_se = np.sqrt(np.maximum(counts @ (seconds + I) ** 2 / n, 0.0) / n)
    bad = np.flatnonzero(I <= 0)
    if bad.size:
        names = ", ".join(plist[k].label(params.ids) for k in bad[:5])
        raise IllConditionedError(f"non-positive information for {names}")
    return InfoScalars(tuple(plist), I, J, I_se, J_se, int(sample_size))


def sandwich_variance(I, J):
    I = np.asarray(I, dtype=float)
    if np.any(I == 0):
        raise NumericalError("sandwich variance undefined for zero information")
    out = np.asarray(J, dtype=float) / (I * I)
    return float(out) if out.ndim == 0 else out


def naive_variance(I):
    I = np.asarray(I, dtype=float)
    if np.any(I == 0):
        raise NumericalError("naive variance undefined for zero information")
    out = 1.0 / I
    return float(out) if out.ndim == 0 else out


def compare_variances(a, b):
    """``(MAE, MAPE%)`` of ``a`` against the reference ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InvalidArgumentError("variance vectors differ in length")
    if np.any(b == 0):
        raise NumericalError("MAPE undefined for a zero reference value")
    err = np.abs(a - b)
    return float(err.mean()), float(np.mean(err / np.abs(b)) * 100.0)


def _replicate(bank, plan, params_star, config, plist, rid):
    rng = Rng(plan.seed).child("replicate", rid)
    _, Y = simulate(bank, plan.n, rng)
    cfg = replace(config, init=params_star) if plan.warm_start else config
    ids = tuple(it.id for it in bank.items)
    fit = fit_compensatory_em(Y, bank.K, cfg, ids=ids)
    em = align_signs(fit.params, config.loading_mask)
    em_values = np.array([em.beta[p.item] if p.kind == "beta" else em.alpha[p.item, p.skill] for p in plist])
    if not plan.refinement:
        return em_values
    anchor = params_star if plan.anchor == "pseudo_true" else em
    patterns, counts = compress_patterns(Y)
    profile = Profile(patterns, anchor, config.grid(bank.K), counts)
    out = np.empty(len(plist))
    for k, p in enumerate(plist):
        out[k] = refine_one_parameter(patterns, anchor, p, config, rng=rng.child("refine", k),
                                      profile=profile, center=em_values[k])
    return out


def _replicate_safe(args):
    bank, plan, params_star, config, plist, rid = args
    try:
        return _replicate(bank, plan, params_star, config, plist, rid)
    except MirtError as exc:
        log.warning("replicate %s dropped: %s", rid, exc)
        return None


@dataclass(frozen=True)
class ExperimentalResult:
    params: tuple
    estimates: np.ndarray  # kept replicates x parameters
    variances: np.ndarray
    dropped: int
    n: int

    @property
    def skewness(self) -> np.ndarray:
        return skew(self.estimates, axis=0, bias=False)


def experimental_variance(bank: ItemBank, plan: ReplicationPlan, params_star: CompParams,
                          config: FitConfig | None = None) -> ExperimentalResult:
    """``n * Var(theta_hat)`` over replicated fits of size ``plan.n``."""
    config = _fit_config(bank, config)
    plist = tuple(parameter_list(config.loading_mask))
    jobs = [(bank, plan, params_star, config, plist, rid) for rid in plan.ids]
    if plan.workers > 1:
        with ProcessPoolExecutor(plan.workers) as pool:
            results = list(pool.map(_replicate_safe, jobs))
    else:
        results = [_replicate_safe(job) for job in jobs]
    kept = [r for r in results if r is not None]
    dropped = len(results) - len(kept)
    if dropped > 0.05 * len(results) or len(kept) < 2:
        raise ExperimentError(f"{dropped} of {len(results)} replicate fits failed")
    est = np.array(kept)
    return ExperimentalResult(plist, est, plan.n * est.var(axis=0, ddof=1), dropped, plan.n)


@dataclass(frozen=True)
class VarianceReport:
    K: int
    labels: tuple
    families: tuple
    I: np.ndarray
    J: np.ndarray
    sandwich: np.ndarray
    naive: np.ndarray
    experimental: np.ndarray | None
    meta: dict
    skewness: np.ndarray | None = None  # of the replicate estimates

    def _pick(self, fam):
        return np.array([f == fam for f in self.families])

    def summary(self) -> dict:
        out = {}
        for fam in FAMILIES:
            sel = self._pick(fam)
            if not sel.any():
                continue
            entry = {}
            mae, mape = compare_variances(self.sandwich[sel], self.naive[sel])
            entry["sandwich_vs_naive"] = {"MAE": mae, "MAPE": mape}
            if self.experimental is not None:
                mae, mape = compare_variances(self.sandwich[sel], self.experimental[sel])
                entry["sandwich_vs_experimental"] = {"MAE": mae, "MAPE": mape}
            out[fam] = entry
        return out

    def to_dict(self) -> dict:
        rows = []
        for k, label in enumerate(self.labels):
            row = {
                "parameter": label,
                "family": self.families[k],
                "I": float(self.I[k]),
                "J": float(self.J[k]),
                "sandwich": float(self.sandwich[k]),
                "naive": float(self.naive[k]),
            }
            if self.experimental is not None:
                row["experimental"] = float(self.experimental[k])
            if self.skewness is not None:
                v = float(self.skewness[k])
                row["skewness"] = v if np.isfinite(v) else None
            rows.append(row)
        return {"K": self.K, "parameters": rows, "summary": self.summary(), "meta": self.meta}


def build_report(info: InfoScalars, ids, K: int, experimental: ExperimentalResult | None = None,
                 meta: dict | None = None) -> VarianceReport:
    if experimental is not None and tuple(experimental.params) != tuple(info.params):
        raise InvalidArgumentError("information and experiment cover different parameters")
    return VarianceReport(
        K=K,
        labels=tuple(p.label(ids) for p in info.params),
        families=tuple(family(p) for p in info.params),
        I=info.I,
        J=info.J,
        sandwich=sandwich_variance(info.I, info.J),
        naive=naive_variance(info.I),
        experimental=None if experimental is None else experimental.variances,
        meta=dict(meta or {}),
        skewness=None if experimental is None or experimental.estimates.shape[0] < 3 else experimental.skewness,
    )
