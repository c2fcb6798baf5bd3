"""Marginal maximum likelihood (EM) for the compensatory model, 1-D refinement
of single parameters, and MAP estimates of learner skills."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from . import _kernels
from .errors import (
    BracketingError,
    DegenerateItemError,
    InvalidArgumentError,
    NumericalError,
)
from .marginal import ParamId, estep, grid_predictor, log_joint
from .model import CompParams
from .quadrature import QuadratureGrid, build_grid
from .rng import as_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitConfig:
    max_em_iterations: int = 500
    em_tolerance: float = 1e-4
    inner_newton_tolerance: float = 1e-8
    max_newton_iterations: int = 50
    points_per_dim: int | None = None
    loading_mask: np.ndarray | None = None
    seed: int = 0
    # uniform(-jitter, jitter) perturbation of the starting values; 0 keeps
    # the deterministic start (loadings +1, intercepts 0)
    init_jitter: float = 0.0
    init: CompParams | None = None

    def __post_init__(self):
        if self.em_tolerance <= 0 or self.inner_newton_tolerance <= 0:
            raise InvalidArgumentError("tolerances must be positive")
        if self.max_em_iterations < 1 or self.max_newton_iterations < 1:
            raise InvalidArgumentError("iteration limits must be positive")
        if self.loading_mask is not None:
            mask = np.asarray(self.loading_mask, dtype=bool)
            if mask.ndim != 2:
                raise InvalidArgumentError("loading_mask must be an M x K array")
            object.__setattr__(self, "loading_mask", mask)

    def grid(self, K: int) -> QuadratureGrid:
        return build_grid(K, self.points_per_dim)

    def mask_for(self, M: int, K: int) -> np.ndarray:
        if self.loading_mask is None:
            return np.ones((M, K), dtype=bool)
        if self.loading_mask.shape != (M, K):
            raise InvalidArgumentError(
                f"loading_mask has shape {self.loading_mask.shape}, data need {(M, K)}"
            )
        return self.loading_mask


@dataclass(frozen=True)
class FitResult:
    params: CompParams
    loglik_trace: tuple
    converged: bool
    iterations: int
    mask: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = self.params.to_dict()
        d["loglik_trace"] = [float(v) for v in self.loglik_trace]
        d["converged"] = bool(self.converged)
        d["iterations"] = int(self.iterations)
        if self.mask is not None:
            d["loading_mask"] = self.mask.astype(int).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        mask = d.get("loading_mask")
        return cls(
            params=CompParams.from_dict(d),
            loglik_trace=tuple(d.get("loglik_trace", ())),
            converged=bool(d.get("converged", False)),
            iterations=int(d.get("iterations", 0)),
            mask=None if mask is None else np.asarray(mask, dtype=bool),
        )


def check_responses(Y) -> np.ndarray:
    Y = np.asarray(Y)
    if Y.ndim != 2:
        raise InvalidArgumentError("response matrix must be N x M")
    if np.any((Y != 0) & (Y != 1)):
        raise InvalidArgumentError("responses must be 0 or 1")
    return Y


def compress_patterns(Y):
    """Unique response rows (lexicographic byte order) and their counts.

    Sorting makes every downstream sum independent of the learner order.
    """
    Y = check_responses(Y).astype(np.uint8, copy=False)
    N, M = Y.shape
    packed = np.ascontiguousarray(np.packbits(Y, axis=1))
    keys = packed.view(np.dtype((np.void, packed.shape[1]))).reshape(N)
    _, first, counts = np.unique(keys, return_index=True, return_counts=True)
    return np.ascontiguousarray(Y[first], dtype=float), counts.astype(float)


def check_degenerate(Y, ids=None):
    col = Y.sum(axis=0)
    N = Y.shape[0]
    for i in range(Y.shape[1]):
        name = i + 1 if ids is None else ids[i]
        if col[i] == 0:
            raise DegenerateItemError(name, "only incorrect")
        if col[i] == N:
            raise DegenerateItemError(name, "only correct")


def initial_params(mask, config: FitConfig) -> CompParams:
    M, K = mask.shape
    if config.init is not None:
        if config.init.alpha.shape != (M, K):
            raise InvalidArgumentError("initial parameters do not match the data")
        return CompParams(config.init.alpha * mask, config.init.beta)
    alpha = mask.astype(float)
    beta = np.zeros(M)
    if config.init_jitter > 0:
        gen = as_rng(config.seed).child("init").generator()
        alpha = alpha + mask * gen.uniform(-config.init_jitter, config.init_jitter, (M, K))
        beta = beta + gen.uniform(-config.init_jitter, config.init_jitter, M)
    return CompParams(alpha, beta)


def _item_objective(theta, X, r, n):
    eta = theta @ X.T  # M x L
    return np.sum(r * eta - n * np.logaddexp(0.0, eta), axis=1)


def mstep(params: CompParams, r, n, grid: QuadratureGrid, mask, config: FitConfig) -> CompParams:
    """Maximise each item's expected complete-data log-likelihood by Newton.

    Every item is a weighted logistic regression on the grid points with
    ``r[i, l]`` expected correct responses out of ``n[l]`` expected learners.
    """
    M, K = params.M, params.K
    X = np.hstack([grid.points, np.ones((grid.L, 1))])
    free = np.hstack([mask, np.ones((M, 1), dtype=bool)])
    theta = np.hstack([params.alpha * mask, params.beta[:, None]])
    eye = np.eye(K + 1)
    active = np.arange(M)
    for _ in range(config.max_newton_iterations):
        if active.size == 0:
            break
        th = theta[active]
        fr = free[active]
        ra = r[active]
        eta = th @ X.T
        p = expit(eta)
        grad = (ra - n * p) @ X
        w = n * p * (1.0 - p)
        H = np.einsum("il,la,lb->iab", w, X, X)
        grad = np.where(fr, grad, 0.0)
        outer = fr[:, :, None] & fr[:, None, :]
        H = np.where(outer, H, 0.0) + np.where(fr, 0.0, 1.0)[:, :, None] * eye
        step = np.linalg.solve(H, grad[:, :, None])[:, :, 0]
        q0 = _item_objective(th, X, ra, n)
        t = np.ones(active.size)
        trial = th + step
        for _ in range(50):
            q1 = _item_objective(trial, X, ra, n)
            bad = ~(q1 >= q0 - 1e-12 * np.abs(q0))
            if not bad.any():
                break
            t[bad] *= 0.5
            trial[bad] = th[bad] + t[bad, None] * step[bad]
        else:
            worst = active[np.flatnonzero(bad)[0]]
            raise NumericalError(
                f"item {params.ids[worst]}: Newton step did not improve after 50 halvings"
            )
        theta[active] = trial
        moved = np.max(np.abs(t[:, None] * step), axis=1)
        active = active[moved >= config.inner_newton_tolerance]
    return CompParams(theta[:, :K], theta[:, K], params.ids)


def fit_compensatory_em(Y, K: int, config: FitConfig = FitConfig(), ids=None) -> FitResult:
    """Fit the compensatory model by EM on a Gauss-Hermite grid."""
    Y = check_responses(Y)
    N, M = Y.shape
    if N < 1 or M < 1:
        raise InvalidArgumentError("need at least one learner and one item")
    check_degenerate(Y, ids)
    mask = config.mask_for(M, K)
    patterns, counts = compress_patterns(Y)
    grid = config.grid(K)
    params = initial_params(mask, config)
    if ids is not None:
        params = CompParams(params.alpha, params.beta, ids)
    trace = []
    converged = False
    it = 0
    for it in range(1, config.max_em_iterations + 1):
        ll, r, n = estep(patterns, counts, params, grid)
        trace.append(ll)
        new = mstep(params, r, n, grid, mask, config)
        delta = max(np.max(np.abs(new.alpha - params.alpha)), np.max(np.abs(new.beta - params.beta)))
        params = new
        if not np.isfinite(delta):
            raise NumericalError("EM produced non-finite parameters")
        if delta < config.em_tolerance:
            converged = True
            break
    ll, _, _ = estep(patterns, counts, params, grid)
    trace.append(ll)
    log.debug("EM finished after %d iterations (converged=%s)", it, converged)
    return FitResult(params=params, loglik_trace=tuple(trace), converged=converged,
                     iterations=it, mask=mask)


def align_signs(params: CompParams, mask) -> CompParams:
    """Flip skill axes whose single-skill anchor loadings are negative on average."""
    mask = np.asarray(mask, dtype=bool)
    alpha = params.alpha.copy()
    single = mask.sum(axis=1) == 1
    for s in range(params.K):
        anchors = single & mask[:, s]
        if not anchors.any():
            anchors = mask[:, s]
        if alpha[anchors, s].sum() < 0:
            alpha[:, s] *= -1.0
    return params.replace(alpha=alpha)


class Profile:
    """Marginal log-likelihood along one parameter, others held fixed.

    The log joint of every pattern on the grid is exponentiated once (scaled by
    its row maximum). Along a single item parameter only that item's factor
    changes, so each evaluation is one P x L by L x 3 product. Evaluations where
    the scaled sums underflow fall back to the exact log-space kernel.
    """

    def __init__(self, Y, params: CompParams, grid: QuadratureGrid, counts=None):
        if counts is None:
            Y, counts = compress_patterns(Y)
        self.Y = np.ascontiguousarray(Y, dtype=float)
        self.counts = np.ascontiguousarray(counts, dtype=float)
        self.params = params
        self.grid = grid
        self.eta = grid_predictor(params, grid)
        self.joint = log_joint(self.Y, params, grid)
        self.rowmax = self.joint.max(axis=1)
        self.scaled = np.exp(self.joint - self.rowmax[:, None])

    def value(self, target: ParamId) -> float:
        if target.kind == "beta":
            return float(self.params.beta[target.item])
        return float(self.params.alpha[target.item, target.skill])

    def _exact(self, h, y):
        eta_h = self.eta[:, h]
        base = self.joint - (np.outer(y, eta_h) - np.logaddexp(0.0, eta_h))
        return np.ascontiguousarray(base)

    def function(self, target: ParamId):
        h = target.item
        eta_h = self.eta[:, h]
        y = np.ascontiguousarray(self.Y[:, h])
        x = np.ones(self.grid.L) if target.kind == "beta" else self.grid.points[:, target.skill]
        x = np.ascontiguousarray(x)
        x0 = self.value(target)
        groups = []
        for resp in (0.0, 1.0):
            rows = y == resp
            # divide out item h's current factor
            log_f = resp * eta_h - np.logaddexp(0.0, eta_h)
            groups.append((resp, self.scaled[rows] * np.exp(-log_f), self.counts[rows], self.rowmax[rows]))
        exact = []

        def f(v):
            eta = eta_h + (v - x0) * x
            s = expit(eta)
            ll = score = second = 0.0
            for resp, E, c, m in groups:
                if c.size == 0:
                    continue
                q = s if resp else 1.0 - s
                r = (resp - s) * x
                B = np.column_stack([q, q * r, q * (r * r - s * (1.0 - s) * x * x)])
                a, b, d = (E @ B).T
                if not (np.all(a > 0) and np.all(np.isfinite(a))):
                    if not exact:
                        exact.append(self._exact(h, y))
                    return _kernels.profile_1d(exact[0], self.counts, y, np.ascontiguousarray(eta), x)
                mean = b / a
                ll += c @ (m + np.log(a))
                score += c @ mean
                second += c @ (d / a - mean * mean)
            return float(ll), float(score), float(second)

        return f


def maximize_1d(f, x0, xtol=1e-10, max_expand=60, max_iter=200):
    """Root of the score of a 1-D log-likelihood by bracketed Newton.

    ``f(x)`` returns ``(loglik, score, second_derivative)``.
    """
    _, s0, h0 = f(x0)
    if s0 == 0.0:
        return x0
    direction = 1.0 if s0 > 0 else -1.0
    step = 1.0
    if h0 < 0:
        step = min(max(abs(s0 / h0), 1e-3), 1.0)
    a, sa = x0, s0
    b = x0 + direction * step
    _, sb, _ = f(b)
    n = 0
    while sb * direction > 0:
        a, sa = b, sb
        step *= 2.0
        b = a + direction * step
        _, sb, _ = f(b)
        n += 1
        if n >= max_expand:
            raise BracketingError(f"score keeps sign {direction:+.0f} from {x0} to {b}")
    lo, hi = (a, b) if a < b else (b, a)
    # score is positive at lo and non-positive at hi
    x = a if abs(sa) < abs(sb) else b
    _, s, h = f(x)
    for _ in range(max_iter):
        if s == 0.0:
            return x
        if s > 0:
            lo = max(lo, x)
        else:
            hi = min(hi, x)
        newton = x - s / h if h < 0 else np.nan
        if np.isfinite(newton) and lo < newton < hi:
            nx = newton
        else:
            nx = 0.5 * (lo + hi)
        if abs(nx - x) <= xtol * (1.0 + abs(x)) or hi - lo <= xtol * (1.0 + abs(x)):
            _, s1, h1 = f(nx)
            # keep the end point with the smaller score
            return nx if abs(s1) <= abs(s) else x
        x = nx
        _, s, h = f(x)
    raise NumericalError("1-D refinement did not converge")


def refine_one_parameter(Y, params: CompParams, target: ParamId, config: FitConfig = FitConfig(),
                         rng=None, profile: Profile | None = None, center: float | None = None) -> float:
    """Maximise the marginal log-likelihood over one parameter, others fixed.

    The search starts from a uniform draw in ``[center - 1, center + 1]``;
    ``center`` defaults to the parameter's current value.
    """
    if profile is None:
        profile = Profile(Y, params, config.grid(params.K))
    if target.kind == "alpha" and not 0 <= target.skill < params.K:
        raise InvalidArgumentError(f"skill index {target.skill} out of range")
    if not 0 <= target.item < params.M:
        raise InvalidArgumentError(f"item index {target.item} out of range")
    c = profile.value(target) if center is None else float(center)
    x0 = c + as_rng(rng).generator().uniform(-1.0, 1.0)
    return maximize_1d(profile.function(target), x0)


def map_skills_batch(Y, params: CompParams, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """MAP skill estimates for every row of ``Y`` under a N(0, I) prior."""
    Y = np.ascontiguousarray(check_responses(np.atleast_2d(Y)), dtype=float)
    if Y.shape[1] != params.M:
        raise InvalidArgumentError(f"patterns have {Y.shape[1]} items, parameters have {params.M}")
    if params.M == 0:
        return np.zeros((Y.shape[0], params.K))
    gamma, iters = _kernels.map_newton(
        Y, np.ascontiguousarray(params.alpha), np.ascontiguousarray(params.beta), tol, max_iter
    )
    if np.any(iters >= max_iter):
        raise NumericalError("MAP Newton iterations did not converge")
    return gamma


def map_skills(y, params: CompParams) -> np.ndarray:
    """Posterior mode of one learner's skills."""
    y = np.asarray(y, dtype=float).reshape(1, -1)
    return map_skills_batch(y, params)[0]


def with_init(config: FitConfig, params: CompParams) -> FitConfig:
    return replace(config, init=params)
