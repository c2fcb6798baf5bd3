"""Pure numpy versions of the hot kernels.

Signatures and results match ``_core.pyx`` to floating-point rounding.
"""
import numpy as np
from scipy.special import expit


def posterior_inplace(A, offset, logp):
    """Turn rows of log joint terms into posterior weights, in place.

    On entry ``A[j, l] + offset[l]`` is the log joint of pattern ``j`` and grid
    point ``l``. On exit ``A[j]`` holds the normalised posterior weights and
    ``logp[j]`` the log marginal probability of pattern ``j``.
    """
    A += offset
    m = A.max(axis=1)
    A -= m[:, None]
    np.exp(A, out=A)
    s = A.sum(axis=1)
    A /= s[:, None]
    logp[:] = m + np.log(s)


def _objective(Y, alpha, beta, G):
    eta = G @ alpha.T + beta
    return np.sum(Y * eta - np.logaddexp(0.0, eta), axis=1) - 0.5 * np.sum(G * G, axis=1)


def map_newton(Y, alpha, beta, tol, max_iter):
    """Posterior modes of N(0, I) x compensatory likelihood for every row of ``Y``.

    Damped Newton from the origin; returns ``(gamma, iterations)``.
    """
    P, K = Y.shape[0], alpha.shape[1]
    gamma = np.zeros((P, K))
    iters = np.zeros(P, dtype=np.int64)
    active = np.arange(P)
    eye = np.eye(K)
    for it in range(max_iter):
        if active.size == 0:
            break
        G = gamma[active]
        Ya = Y[active]
        eta = G @ alpha.T + beta
        s = expit(eta)
        grad = (Ya - s) @ alpha - G
        gnorm = np.sqrt(np.sum(grad * grad, axis=1))
        done = gnorm <= tol
        iters[active[done]] = it
        keep = ~done
        active, G, Ya, grad, s = active[keep], G[keep], Ya[keep], grad[keep], s[keep]
        if active.size == 0:
            break
        w = s * (1.0 - s)
        H = np.einsum("jm,mk,ml->jkl", w, alpha, alpha) + eye
        step = np.linalg.solve(H, grad[:, :, None])[:, :, 0]
        f0 = _objective(Ya, alpha, beta, G)
        t = np.ones(active.size)
        trial = G + step
        for _ in range(60):
            f1 = _objective(Ya, alpha, beta, trial)
            bad = f1 < f0 - 1e-12 * np.abs(f0)
            if not bad.any():
                break
            t[bad] *= 0.5
            trial[bad] = G[bad] + t[bad, None] * step[bad]
        gamma[active] = trial
    else:
        if active.size:
            iters[active] = max_iter
    return gamma, iters


def profile_1d(base, counts, y, eta, x):
    """Log-likelihood, score and second derivative along one item parameter.

    ``base[j, l]`` holds log w_l plus the log-likelihood of every other item,
    ``eta`` the target item's linear predictor on the grid, ``x`` its
    derivative with respect to the parameter and ``y`` the target responses.
    """
    sp = np.logaddexp(0.0, eta)
    s = expit(eta)
    E = base + y[:, None] * eta[None, :] - sp[None, :]
    m = E.max(axis=1)
    E -= m[:, None]
    np.exp(E, out=E)
    tot = E.sum(axis=1)
    E /= tot[:, None]
    logp = m + np.log(tot)
    r = (y[:, None] - s[None, :]) * x[None, :]
    score = np.sum(E * r, axis=1)
    second = np.sum(E * r * r, axis=1) - score * score - E @ (s * (1.0 - s) * x * x)
    return float(counts @ logp), float(counts @ score), float(counts @ second)
