"""Item response functions for the compensatory and non-compensatory models.

Skills are numbered from 1 in :class:`Item` (matching the bank file format);
array-valued helpers use 0-based columns.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, log_expit, logit

from .errors import InvalidArgumentError

__all__ = [
    "Item",
    "ItemBank",
    "CompParams",
    "prob_compensatory",
    "prob_noncompensatory",
    "response_logprob_compensatory",
    "half_probability_point",
    "classify_item_case",
    "noncompensatory_prob_matrix",
    "compensatory_prob_matrix",
]


def _frozen(x, dtype=float):
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Item:
    """One item of the data-generating non-compensatory model.

    Only the required skills carry parameters; a skill outside ``skills``
    contributes a factor of one to the correct-response probability.
    """

    id: int
    skills: tuple
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        skills = tuple(int(s) for s in self.skills)
        a = _frozen(self.a).reshape(-1)
        b = _frozen(self.b).reshape(-1)
        if not skills:
            raise InvalidArgumentError(f"item {self.id}: skills must be non-empty")
        if len(set(skills)) != len(skills):
            raise InvalidArgumentError(f"item {self.id}: duplicate skills {skills}")
        if min(skills) < 1:
            raise InvalidArgumentError(f"item {self.id}: skills are numbered from 1")
        if a.shape != (len(skills),) or b.shape != (len(skills),):
            raise InvalidArgumentError(
                f"item {self.id}: need one a and one b per required skill"
            )
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InvalidArgumentError(f"item {self.id}: parameters must be finite")
        if np.any(a <= 0):
            raise InvalidArgumentError(f"item {self.id}: discriminations must be positive")
        object.__setattr__(self, "skills", skills)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def columns(self) -> np.ndarray:
        """0-based skill columns."""
        return np.asarray(self.skills) - 1

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "skills": list(self.skills),
            "a": [float(v) for v in self.a],
            "b": [float(v) for v in self.b],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Item":
        return cls(id=int(d["id"]), skills=tuple(d["skills"]), a=d["a"], b=d["b"])


@dataclass(frozen=True)
class ItemBank:
    K: int
    items: tuple

    def __post_init__(self):
        items = tuple(self.items)
        if int(self.K) < 1:
            raise InvalidArgumentError("K must be positive")
        if not items:
            raise InvalidArgumentError("an item bank needs at least one item")
        for item in items:
            if max(item.skills) > self.K:
                raise InvalidArgumentError(
                    f"item {item.id} requires skill {max(item.skills)} but K={self.K}"
                )
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "items", items)

    @property
    def M(self) -> int:
        return len(self.items)

    def __len__(self):
        return len(self.items)

    def dense(self):
        """Return ``(a, b, mask)`` as M x K arrays; absent skills have mask False."""
        a = np.zeros((self.M, self.K))
        b = np.zeros((self.M, self.K))
        mask = np.zeros((self.M, self.K), dtype=bool)
        for i, item in enumerate(self.items):
            cols = item.columns
            a[i, cols] = item.a
            b[i, cols] = item.b
            mask[i, cols] = True
        return a, b, mask

    def skill_mask(self) -> np.ndarray:
        return self.dense()[2]

    def to_dict(self) -> dict:
        return {"K": self.K, "items": [item.to_dict() for item in self.items]}

    @classmethod
    def from_dict(cls, d: dict) -> "ItemBank":
        return cls(K=int(d["K"]), items=tuple(Item.from_dict(it) for it in d["items"]))


@dataclass(frozen=True)
class CompParams:
    """Compensatory item parameters for all items: ``alpha`` is M x K, ``beta`` is M."""

    alpha: np.ndarray
    beta: np.ndarray
    ids: tuple = field(default=None)

    def __post_init__(self):
        alpha = _frozen(self.alpha)
        beta = _frozen(self.beta).reshape(-1)
        if alpha.ndim == 1:
            alpha = _frozen(alpha.reshape(len(beta), -1))
        if alpha.ndim != 2 or alpha.shape[0] != beta.shape[0]:
            raise InvalidArgumentError(
                f"alpha {alpha.shape} and beta {beta.shape} disagree on the item count"
            )
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise InvalidArgumentError("compensatory parameters must be finite")
        ids = tuple(range(1, len(beta) + 1)) if self.ids is None else tuple(self.ids)
        if len(ids) != len(beta):
            raise InvalidArgumentError("one id per item required")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "ids", ids)

    @property
    def M(self) -> int:
        return self.beta.shape[0]

    @property
    def K(self) -> int:
        return self.alpha.shape[1]

    def replace(self, alpha=None, beta=None) -> "CompParams":
        return CompParams(
            self.alpha if alpha is None else alpha,
            self.beta if beta is None else beta,
            self.ids,
        )

    def linear_predictor(self, gamma) -> np.ndarray:
        """``gamma @ alpha.T + beta`` for a skill vector or an N x K matrix."""
        return np.asarray(gamma, dtype=float) @ self.alpha.T + self.beta

    def to_dict(self) -> dict:
        return {
            "items": [
                {"id": int(i), "alpha": [float(v) for v in a], "beta": float(b)}
                for i, a, b in zip(self.ids, self.alpha, self.beta)
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompParams":
        items = d["items"]
        return cls(
            alpha=[it["alpha"] for it in items],
            beta=[it["beta"] for it in items],
            ids=tuple(int(it.get("id", k + 1)) for k, it in enumerate(items)),
        )


def _vec(x, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be a vector")
    return arr


def _linear(alpha, beta, gamma):
    alpha = _vec(alpha, "alpha")
    gamma = _vec(gamma, "gamma")
    if alpha.shape != gamma.shape:
        raise InvalidArgumentError(
            f"alpha has length {alpha.size} but gamma has length {gamma.size}"
        )
    return float(alpha @ gamma + beta)


def prob_compensatory(alpha, beta, gamma) -> float:
    """Correct-response probability of the compensatory (2PL) model."""
    return float(expit(_linear(alpha, beta, gamma)))


def response_logprob_compensatory(y, alpha, beta, gamma) -> float:
    """``log p_c(y | gamma)`` for a single binary response, via softplus."""
    if y not in (0, 1):
        raise InvalidArgumentError("responses are 0 or 1")
    eta = _linear(alpha, beta, gamma)
    return float(y * eta - np.logaddexp(0.0, eta))


def prob_noncompensatory(item: Item, z) -> float:
    """Correct-response probability of the non-compensatory model.

    Computed as ``exp(sum log sigma(a_k (z_k - b_k)))`` over required skills.
    """
    z = _vec(z, "z")
    if max(item.skills) > z.size:
        raise InvalidArgumentError(
            f"item {item.id} requires skill {max(item.skills)} but z has length {z.size}"
        )
    t = item.a * (z[item.columns] - item.b)
    return float(np.exp(np.sum(log_expit(t))))


def noncompensatory_prob_matrix(bank: ItemBank, skills) -> np.ndarray:
    """N x M matrix of ``p_n(y_ij = 1 | z_j)``."""
    skills = np.atleast_2d(np.asarray(skills, dtype=float))
    if skills.shape[1] != bank.K:
        raise InvalidArgumentError(f"skills have {skills.shape[1]} columns, bank has K={bank.K}")
    a, b, mask = bank.dense()
    logp = np.zeros((skills.shape[0], bank.M))
    for k in range(bank.K):
        cols = np.flatnonzero(mask[:, k])
        if cols.size:
            logp[:, cols] += log_expit(a[cols, k] * (skills[:, k, None] - b[cols, k]))
    return np.exp(logp)


def compensatory_prob_matrix(params: CompParams, skills) -> np.ndarray:
    """N x M matrix of ``p_c(y_ij = 1 | gamma_j)``."""
    skills = np.atleast_2d(np.asarray(skills, dtype=float))
    if skills.shape[1] != params.K:
        raise InvalidArgumentError(f"skills have {skills.shape[1]} columns, params have K={params.K}")
    return expit(params.linear_predictor(skills))


def half_probability_point(item: Item) -> np.ndarray:
    """Skill values (over the required skills) where ``p_n`` equals 0.5.

    Each of the ``d`` factors must equal ``0.5 ** (1/d)``; for two-skill items
    this is the familiar ``sigma^{-1}(sqrt(0.5))`` offset.
    """
    d = len(item.skills)
    return item.b + logit(0.5 ** (1.0 / d)) / item.a


def classify_item_case(z05: Sequence[float]) -> int:
    """Case 1-4 from the signs of a two-skill half-probability point.

    An exact zero counts as positive.
    """
    z05 = np.asarray(z05, dtype=float)
    if z05.shape != (2,):
        raise InvalidArgumentError("case classification needs a two-skill half-probability point")
    pos1, pos2 = z05[0] >= 0, z05[1] >= 0
    if not pos1 and pos2:
        return 1
    if pos1 and not pos2:
        return 2
    if pos1 and pos2:
        return 3
    return 4


def item_case(item: Item) -> int:
    """Case of an item requiring exactly skills 1 and 2."""
    if item.skills != (1, 2):
        raise InvalidArgumentError(f"item {item.id} does not require exactly skills 1 and 2")
    return classify_item_case(half_probability_point(item))
