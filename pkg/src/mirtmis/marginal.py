"""Marginal response-pattern likelihoods and their item-parameter derivatives.

Everything is computed on a quadrature grid. For a pattern ``y`` the posterior
weight of grid point ``l`` is ``pi_l = w_l prod_i p_c(y_i | gamma_l) / p_c(y)``,
and the derivatives of ``ln p_c(y)`` are posterior moments of complete-data
quantities::

    d/dtheta    ln p = E_pi[dl/dtheta]
    d2/dtheta2  ln p = E_pi[d2l/dtheta2] + Var_pi[dl/dtheta]

where ``l`` is the complete-data log-likelihood at a grid point. The second
term comes from differentiating the posterior weights themselves.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, logsumexp

from . import _kernels
from .errors import InvalidArgumentError, NumericalError
from .model import CompParams, ItemBank
from .quadrature import QuadratureGrid

LOG_UNDERFLOW = -700.0
CHUNK = 8192


@dataclass(frozen=True)
class PatternWorkspace:
    log_joint: np.ndarray  # L: log w_l + sum_i log p_c(y_i | gamma_l)
    posterior: np.ndarray  # L
    log_marginal: float


@dataclass(frozen=True)
class ParamId:
    """A single item parameter: ``beta`` of item ``h`` or ``alpha`` of (h, s); 0-based."""

    kind: str
    item: int
    skill: int = -1

    def label(self, ids=None) -> str:
        iid = self.item + 1 if ids is None else ids[self.item]
        if self.kind == "beta":
            return f"beta[{iid}]"
        return f"alpha[{iid},{self.skill + 1}]"


def parameter_list(mask: np.ndarray) -> list[ParamId]:
    """All betas, then the free alphas in item-major order."""
    M = mask.shape[0]
    out = [ParamId("beta", h) for h in range(M)]
    out += [ParamId("alpha", h, s) for h in range(M) for s in range(mask.shape[1]) if mask[h, s]]
    return out


def _patterns(Y, M) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[None, :]
    if Y.shape[1] != M:
        raise InvalidArgumentError(f"patterns have {Y.shape[1]} items, parameters have {M}")
    if np.any((Y != 0) & (Y != 1)):
        raise InvalidArgumentError("responses must be 0 or 1")
    return Y


def _check_grid(params_K, grid):
    if grid.K != params_K:
        raise InvalidArgumentError(f"grid has K={grid.K}, parameters have K={params_K}")


def grid_predictor(params: CompParams, grid: QuadratureGrid) -> np.ndarray:
    """L x M linear predictors ``alpha_i . gamma_l + beta_i``."""
    _check_grid(params.K, grid)
    return grid.points @ params.alpha.T + params.beta


def log_joint(Y, params: CompParams, grid: QuadratureGrid) -> np.ndarray:
    """P x L matrix ``log w_l + sum_i log p_c(y_ji | gamma_l)``."""
    Y = _patterns(Y, params.M)
    eta = grid_predictor(params, grid)
    offset = grid.log_weights - np.logaddexp(0.0, eta).sum(axis=1)
    return Y @ eta.T + offset


def posterior(Y, params: CompParams, grid: QuadratureGrid):
    """Posterior weights (P x L) and log marginal probabilities (P)."""
    Y = _patterns(Y, params.M)
    eta = grid_predictor(params, grid)
    offset = np.ascontiguousarray(grid.log_weights - np.logaddexp(0.0, eta).sum(axis=1))
    A = np.ascontiguousarray(Y @ eta.T)
    logp = np.empty(Y.shape[0])
    _kernels.posterior_inplace(A, offset, logp)
    return A, logp


def pattern_workspace(y, params: CompParams, grid: QuadratureGrid) -> PatternWorkspace:
    lj = log_joint(y, params, grid)[0]
    lm = float(logsumexp(lj))
    if lm < LOG_UNDERFLOW:
        raise NumericalError(f"pattern log-probability {lm:.1f} is below {LOG_UNDERFLOW}")
    return PatternWorkspace(log_joint=lj, posterior=np.exp(lj - lm), log_marginal=lm)


def log_marginal_prob_compensatory(y, params: CompParams, grid: QuadratureGrid) -> float:
    y = _patterns(y, params.M)[0]
    if y.size == 0:
        return 0.0
    return pattern_workspace(y, params, grid).log_marginal


def marginal_prob_compensatory(y, params: CompParams, grid: QuadratureGrid) -> float:
    return float(np.exp(log_marginal_prob_compensatory(y, params, grid)))


def log_marginal_prob_noncompensatory(y, bank: ItemBank, grid: QuadratureGrid) -> float:
    y = _patterns(y, bank.M)[0]
    if y.size == 0:
        return 0.0
    if grid.K != bank.K:
        raise InvalidArgumentError(f"grid has K={grid.K}, bank has K={bank.K}")
    a, b, mask = bank.dense()
    logp1 = np.zeros((grid.L, bank.M))
    for k in range(bank.K):
        cols = np.flatnonzero(mask[:, k])
        logp1[:, cols] += log_expit(a[cols, k] * (grid.points[:, k, None] - b[cols, k]))
    logp0 = np.log(-np.expm1(logp1))
    lj = grid.log_weights + logp1 @ y + logp0 @ (1.0 - y)
    lm = float(logsumexp(lj))
    if lm < LOG_UNDERFLOW:
        raise NumericalError(f"pattern log-probability {lm:.1f} is below {LOG_UNDERFLOW}")
    return lm


def marginal_prob_noncompensatory(y, bank: ItemBank, grid: QuadratureGrid) -> float:
    return float(np.exp(log_marginal_prob_noncompensatory(y, bank, grid)))


def _covariate(grid, s):
    return np.ones(grid.L) if s is None else grid.points[:, s]


def _check_target(params, h, s=None):
    if not 0 <= h < params.M:
        raise InvalidArgumentError(f"item index {h} out of range for {params.M} items")
    if s is not None and not 0 <= s < params.K:
        raise InvalidArgumentError(f"skill index {s} out of range for K={params.K}")


def _moments(y, params, grid, h, s):
    _check_target(params, h, s)
    y = _patterns(y, params.M)[0]
    ws = pattern_workspace(y, params, grid)
    x = _covariate(grid, s)
    p = expit(grid.points @ params.alpha[h] + params.beta[h])
    r = (y[h] - p) * x
    return ws.posterior, r, p * (1.0 - p) * x * x


def score_beta(y, params: CompParams, grid: QuadratureGrid, h: int) -> float:
    """``d ln p_c(y) / d beta_h`` (h is a 0-based item index)."""
    pi, r, _ = _moments(y, params, grid, h, None)
    return float(pi @ r)


def score_alpha(y, params: CompParams, grid: QuadratureGrid, h: int, s: int) -> float:
    """``d ln p_c(y) / d alpha_{h,s}`` (0-based indices)."""
    pi, r, _ = _moments(y, params, grid, h, s)
    return float(pi @ r)


def _second(pi, r, curv):
    mean = pi @ r
    return float(pi @ (r * r) - mean * mean - pi @ curv)


def hessian_beta(y, params: CompParams, grid: QuadratureGrid, h: int) -> float:
    return _second(*_moments(y, params, grid, h, None))


def hessian_alpha(y, params: CompParams, grid: QuadratureGrid, h: int, s: int) -> float:
    return _second(*_moments(y, params, grid, h, s))


def estep(Y, counts, params: CompParams, grid: QuadratureGrid, chunk: int = CHUNK):
    """Expected counts for one EM iteration.

    Returns ``(loglik, r, n)`` with ``loglik = sum_j c_j ln p_c(y_j)``,
    ``r[i, l] = sum_j c_j pi_jl y_ji`` and ``n[l] = sum_j c_j pi_jl``.
    """
    eta = grid_predictor(params, grid)
    offset = np.ascontiguousarray(grid.log_weights - np.logaddexp(0.0, eta).sum(axis=1))
    etaT = np.ascontiguousarray(eta.T)
    P = Y.shape[0]
    r = np.zeros((params.M, grid.L))
    n = np.zeros(grid.L)
    loglik = 0.0
    logp = np.empty(min(chunk, P))
    for start in range(0, P, chunk):
        Yc = Y[start:start + chunk]
        cc = counts[start:start + chunk]
        A = np.ascontiguousarray(Yc @ etaT)
        lp = logp[: Yc.shape[0]]
        _kernels.posterior_inplace(A, offset, lp)
        loglik += float(cc @ lp)
        A *= cc[:, None]
        r += Yc.T @ A
        n += A.sum(axis=0)
    return loglik, r, n


def marginal_loglik(Y, counts, params: CompParams, grid: QuadratureGrid, chunk: int = CHUNK) -> float:
    total = 0.0
    for start in range(0, Y.shape[0], chunk):
        _, lp = posterior(Y[start:start + chunk], params, grid)
        total += float(counts[start:start + chunk] @ lp)
    return total


def pattern_derivatives(Y, params: CompParams, grid: QuadratureGrid, mask=None, chunk: int = CHUNK):
    """Per-pattern first and second derivatives for every parameter.

    Returns ``(scores, seconds, plist)`` where ``scores`` and ``seconds`` are
    P x len(plist) arrays and ``plist`` comes from :func:`parameter_list`.
    Only diagonal second derivatives are computed.
    """
    Y = _patterns(Y, params.M)
    if mask is None:
        mask = np.ones((params.M, params.K), dtype=bool)
    plist = parameter_list(mask)
    M, K = params.M, params.K
    eta = grid_predictor(params, grid)
    S = expit(eta)  # L x M
    W = S * (1.0 - S)
    S2 = S * S
    G = grid.points
    hs = [(h, s) for h in range(M) for s in range(K) if mask[h, s]]
    P = Y.shape[0]
    scores = np.empty((P, len(plist)))
    seconds = np.empty((P, len(plist)))
    for start in range(0, P, chunk):
        Yc = Y[start:start + chunk]
        Pi, logp = posterior(Yc, params, grid)
        if logp.min() < LOG_UNDERFLOW:
            raise NumericalError(f"pattern log-probability {logp.min():.1f} is below {LOG_UNDERFLOW}")
        sl = slice(start, start + Yc.shape[0])
        ES = Pi @ S
        sb = Yc - ES
        scores[sl, :M] = sb
        seconds[sl, :M] = (Pi @ S2 - ES * ES) - Pi @ W
        if hs:
            cols = np.empty((Yc.shape[0], len(hs)))
            sec = np.empty_like(cols)
            for s in range(K):
                items = np.array([h for h, ss in hs if ss == s], dtype=int)
                if items.size == 0:
                    continue
                where = np.array([k for k, (h, ss) in enumerate(hs) if ss == s], dtype=int)
                g = G[:, s]
                Eg = Pi @ g
                Eg2 = Pi @ (g * g)
                Ss = S[:, items]
                ESg = Pi @ (Ss * g[:, None])
                ESg2 = Pi @ (Ss * (g * g)[:, None])
                ES2g2 = Pi @ (Ss * Ss * (g * g)[:, None])
                EWg2 = Pi @ (W[:, items] * (g * g)[:, None])
                y = Yc[:, items]
                sc = y * Eg[:, None] - ESg
                sq = y * Eg2[:, None] - 2.0 * y * ESg2 + ES2g2
                cols[:, where] = sc
                sec[:, where] = sq - sc * sc - EWg2
            scores[sl, M:] = cols
            seconds[sl, M:] = sec
    return scores, seconds, plist
