"""Simulation designs and samplers for learners and responses."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logit

from .errors import InvalidArgumentError
from .model import CompParams, Item, ItemBank, compensatory_prob_matrix, noncompensatory_prob_matrix
from .rng import Rng, as_rng

TWO_SKILL_OFFSET = float(logit(np.sqrt(0.5)))


@dataclass(frozen=True)
class DesignSpec:
    design: str = "bias"
    K: int = 2
    # bias design
    single_per_skill: int = 10
    single_range: float = 2.5
    lattice_size: int = 10
    lattice_extent: float = 2.0
    # variance design
    pair_items: int = 30
    triple_items: int = 20
    pair_mean: float = -1.0
    pair_sd: float = 1.5
    triple_mean: float = -1.5
    triple_sd: float = 1.5
    # ln a ~ Normal(disc_location, disc_scale)
    disc_location: float = 0.2
    disc_scale: float = 0.2

    def __post_init__(self):
        if self.design not in ("bias", "variance"):
            raise InvalidArgumentError(f"unknown design {self.design!r}")
        if self.disc_scale <= 0:
            raise InvalidArgumentError("discrimination scale must be positive")
        counts = (self.single_per_skill, self.lattice_size, self.pair_items)
        if min(counts) < 1 or self.triple_items < 0:
            raise InvalidArgumentError("item counts must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def variance(cls, K: int) -> "DesignSpec":
        if K not in (2, 3):
            raise InvalidArgumentError(f"the variance design supports K=2 or K=3, got K={K}")
        if K == 2:
            return cls(design="variance", K=2, single_per_skill=10, single_range=3.0, pair_items=30,
                       triple_items=0)
        return cls(design="variance", K=3, single_per_skill=5, single_range=2.0, pair_items=5,
                   triple_items=20)


def _disc(gen, spec, size):
    return gen.lognormal(spec.disc_location, spec.disc_scale, size)


def make_bias_design(rng=None, spec: DesignSpec = DesignSpec()) -> ItemBank:
    """Single-skill items on an even grid plus two-skill items on a lattice.

    The two-skill difficulties are solved from sampled discriminations so that
    each item's half-probability point lands on its lattice node.
    """
    gen = as_rng(rng).child("design").generator()
    items = []
    diffs = np.linspace(-spec.single_range, spec.single_range, spec.single_per_skill)
    for skill in (1, 2):
        a = _disc(gen, spec, spec.single_per_skill)
        for k in range(spec.single_per_skill):
            items.append(Item(len(items) + 1, (skill,), [a[k]], [diffs[k]]))
    nodes = np.linspace(-spec.lattice_extent, spec.lattice_extent, spec.lattice_size)
    for z1 in nodes:
        for z2 in nodes:
            a = _disc(gen, spec, 2)
            target = np.array([z1, z2])
            items.append(Item(len(items) + 1, (1, 2), a, target - TWO_SKILL_OFFSET / a))
    return ItemBank(2, tuple(items))


def lattice_targets(spec: DesignSpec = DesignSpec()) -> np.ndarray:
    nodes = np.linspace(-spec.lattice_extent, spec.lattice_extent, spec.lattice_size)
    return np.array([(z1, z2) for z1 in nodes for z2 in nodes])


def make_variance_design(K: int, rng=None, spec: DesignSpec | None = None) -> ItemBank:
    if K not in (2, 3):
        raise InvalidArgumentError(f"the variance design supports K=2 or K=3, got K={K}")
    spec = DesignSpec.variance(K) if spec is None else spec
    gen = as_rng(rng).child("design").generator()
    items = []
    diffs = np.linspace(-spec.single_range, spec.single_range, spec.single_per_skill)
    for skill in range(1, K + 1):
        a = _disc(gen, spec, spec.single_per_skill)
        for k in range(spec.single_per_skill):
            items.append(Item(len(items) + 1, (skill,), [a[k]], [diffs[k]]))
    pairs = [(1, 2)] if K == 2 else [(1, 2), (1, 3), (2, 3)]
    for pair in pairs:
        for _ in range(spec.pair_items):
            a = _disc(gen, spec, 2)
            b = gen.normal(spec.pair_mean, spec.pair_sd, 2)
            items.append(Item(len(items) + 1, pair, a, b))
    if K == 3:
        for _ in range(spec.triple_items):
            a = _disc(gen, spec, 3)
            b = gen.normal(spec.triple_mean, spec.triple_sd, 3)
            items.append(Item(len(items) + 1, (1, 2, 3), a, b))
    return ItemBank(K, tuple(items))


def make_design(spec: DesignSpec, rng=None) -> ItemBank:
    if spec.design == "bias":
        if spec.K != 2:
            raise InvalidArgumentError("the bias design has K=2")
        return make_bias_design(rng, spec)
    return make_variance_design(spec.K, rng, spec)


def sample_learners(N: int, K: int, rng=None) -> np.ndarray:
    """N x K standard normal skills, sampled block-wise from named substreams."""
    if N < 0 or K < 1:
        raise InvalidArgumentError("need N >= 0 and K >= 1")
    out = np.empty((N, K))
    for start, stop, gen in as_rng(rng).blocks(N):
        out[start:stop] = gen.standard_normal((stop - start, K))
    return out


def _bernoulli(probs, rng: Rng) -> np.ndarray:
    out = np.empty(probs.shape, dtype=np.uint8)
    for start, stop, gen in rng.blocks(probs.shape[0]):
        out[start:stop] = gen.random(probs[start:stop].shape) < probs[start:stop]
    return out


def sample_responses(bank: ItemBank, skills, rng=None) -> np.ndarray:
    """Bernoulli responses from the non-compensatory model; N x M uint8."""
    return _bernoulli(noncompensatory_prob_matrix(bank, skills), as_rng(rng))


def sample_compensatory_responses(params: CompParams, skills, rng=None) -> np.ndarray:
    """Bernoulli responses from the compensatory model; N x M uint8."""
    return _bernoulli(compensatory_prob_matrix(params, skills), as_rng(rng))


def simulate(generator, N: int, rng=None):
    """Skills and responses for N learners from an ItemBank or CompParams truth."""
    rng = as_rng(rng)
    if isinstance(generator, ItemBank):
        z = sample_learners(N, generator.K, rng.child("learners"))
        return z, sample_responses(generator, z, rng.child("responses"))
    if isinstance(generator, CompParams):
        z = sample_learners(N, generator.K, rng.child("learners"))
        return z, sample_compensatory_responses(generator, z, rng.child("responses"))
    raise InvalidArgumentError(f"cannot simulate from {type(generator).__name__}")
