"""Skill-estimation error under misspecification and its gradient approximation.

The gradient of a learner's compensatory log-posterior, evaluated at the true
skills, points (approximately) from the true skills towards the MAP estimate.
Its expectation over responses replaces ``y`` by the true non-compensatory
probabilities, giving a deterministic field over skill space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .errors import InvalidArgumentError, NumericalError
from .model import CompParams, ItemBank, noncompensatory_prob_matrix

QUARTILE = float(norm.ppf(0.75))
REGION_EDGES = (-QUARTILE, 0.0, QUARTILE)
BIN_LABELS = (
    f"(-inf,{-QUARTILE:.3f}]",
    f"({-QUARTILE:.3f},0.000]",
    f"(0.000,{QUARTILE:.3f}]",
    f"({QUARTILE:.3f},inf)",
)


@dataclass(frozen=True)
class BiasSample:
    z: np.ndarray
    gamma: np.ndarray
    gradient: np.ndarray

    @property
    def difference(self) -> np.ndarray:
        return self.gamma - self.z


@dataclass(frozen=True)
class RegionTable:
    """Cell means over a 4 x 4 partition of (skill 1, skill 2) space.

    ``means[b1, b2]`` is the mean for skill-1 bin ``b1`` and skill-2 bin
    ``b2`` (bins ascending); empty cells are masked, never NaN.
    """

    means: np.ma.MaskedArray
    counts: np.ndarray
    edges: tuple = REGION_EDGES

    def cell(self, b1: int, b2: int):
        if self.counts[b1, b2] == 0:
            return None
        return float(self.means[b1, b2])

    @property
    def lower_right(self):
        return self.cell(3, 0)

    @property
    def upper_left(self):
        return self.cell(0, 3)

    def rows(self):
        """Rows for display: skill 2 descending, skill 1 ascending across."""
        for b2 in range(3, -1, -1):
            yield BIN_LABELS[b2], [self.cell(b1, b2) for b1 in range(4)]


def gradient_at_true_skills(z, y, params: CompParams) -> np.ndarray:
    """Gradient of the compensatory log-posterior of one learner at ``z``."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.shape != (params.K,) or y.shape != (params.M,):
        raise InvalidArgumentError("z must have K entries and y one entry per item")
    if params.M == 0:
        return -z
    return (y - expit(params.alpha @ z + params.beta)) @ params.alpha - z


def gradients_at(Z, Y, params: CompParams) -> np.ndarray:
    """Row-wise :func:`gradient_at_true_skills` for N learners."""
    Z = np.asarray(Z, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Z.shape[0] != Y.shape[0]:
        raise InvalidArgumentError("skills and responses disagree on the learner count")
    return (Y - expit(params.linear_predictor(Z))) @ params.alpha - Z


def _subset(bank, params, items):
    if bank.M != params.M or bank.K != params.K:
        raise InvalidArgumentError("bank and parameters describe different tests")
    if items is None:
        return np.arange(params.M)
    return np.asarray(items, dtype=int).reshape(-1)


def expected_gradient_batch(Z, bank: ItemBank, params: CompParams, include_prior: bool = True,
                            items=None) -> np.ndarray:
    """Expected gradient at each row of ``Z``, optionally over a subset of items."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    idx = _subset(bank, params, items)
    out = -Z.copy() if include_prior else np.zeros_like(Z)
    if idx.size:
        pn = noncompensatory_prob_matrix(bank, Z)[:, idx]
        pc = expit(params.linear_predictor(Z))[:, idx]
        out += (pn - pc) @ params.alpha[idx]
    return out


def expected_gradient(z, bank: ItemBank, params: CompParams, include_prior: bool = True,
                      items=None) -> np.ndarray:
    """``sum_i (p_n,i(z) - p_c,i(z)) alpha_i`` minus ``z`` when the prior is included."""
    z = np.asarray(z, dtype=float)
    if z.shape != (bank.K,):
        raise InvalidArgumentError(f"z must have {bank.K} entries")
    return expected_gradient_batch(z[None, :], bank, params, include_prior, items)[0]


def expected_gradient_field(bank: ItemBank, params: CompParams, extent: float = 3.0,
                            resolution: int = 50, include_prior: bool = True, items=None) -> np.ndarray:
    """Expected gradient on a square lattice; rows ``(z1, z2, g1, g2)``.

    Row order: ``z1`` is the outer (slow) index, ``z2`` the inner one.
    """
    if bank.K != 2:
        raise InvalidArgumentError("gradient fields are drawn for K=2")
    if resolution < 1 or extent <= 0:
        raise InvalidArgumentError("need resolution >= 1 and extent > 0")
    axis = np.linspace(-extent, extent, resolution)
    z1, z2 = np.meshgrid(axis, axis, indexing="ij")
    Z = np.column_stack([z1.ravel(), z2.ravel()])
    return np.hstack([Z, expected_gradient_batch(Z, bank, params, include_prior, items)])


def region_bins(x) -> np.ndarray:
    """Quartile bin index 0..3 with right-closed intervals."""
    return np.searchsorted(np.asarray(REGION_EDGES), np.asarray(x, dtype=float), side="left")


def quartile_region_summary(values, skills) -> list[RegionTable]:
    """One :class:`RegionTable` per column of ``values``."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    skills = np.atleast_2d(np.asarray(skills, dtype=float))
    if values.shape[0] != skills.shape[0]:
        raise InvalidArgumentError("values and skills disagree on the learner count")
    if skills.shape[1] < 2:
        raise InvalidArgumentError("region tables need two skill columns")
    b1 = region_bins(skills[:, 0])
    b2 = region_bins(skills[:, 1])
    cell = b1 * 4 + b2
    counts = np.bincount(cell, minlength=16).reshape(4, 4)
    tables = []
    for k in range(values.shape[1]):
        sums = np.bincount(cell, weights=values[:, k], minlength=16).reshape(4, 4)
        empty = counts == 0
        means = np.divide(sums, counts, out=np.zeros((4, 4)), where=~empty)
        tables.append(RegionTable(np.ma.masked_array(means, mask=empty), counts))
    return tables


def gradient_difference_correlation(samples=None, gradients=None, differences=None) -> np.ndarray:
    """Per-skill Pearson correlation between gradients and estimation errors.

    Pass either a sequence of :class:`BiasSample` or the two N x K arrays.
    """
    if samples is not None:
        gradients = np.array([s.gradient for s in samples])
        differences = np.array([s.difference for s in samples])
    g = np.atleast_2d(np.asarray(gradients, dtype=float))
    d = np.atleast_2d(np.asarray(differences, dtype=float))
    if g.shape != d.shape:
        raise InvalidArgumentError("gradients and differences must have the same shape")
    if g.shape[0] < 2:
        raise InvalidArgumentError("correlation needs at least two samples")
    gc = g - g.mean(axis=0)
    dc = d - d.mean(axis=0)
    sg = np.sqrt(np.sum(gc * gc, axis=0))
    sd = np.sqrt(np.sum(dc * dc, axis=0))
    if np.any(sg == 0) or np.any(sd == 0):
        raise NumericalError("correlation is undefined for a coordinate with zero variance")
    return np.clip(np.sum(gc * dc, axis=0) / (sg * sd), -1.0, 1.0)
