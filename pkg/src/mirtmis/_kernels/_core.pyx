# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; see ``_fallback.py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, sqrt, fabs
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline double _softplus(double x) nogil:
    if x > 0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double _expit(double x) nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def posterior_inplace(double[:, ::1] A, const double[::1] offset, double[::1] logp):
    cdef Py_ssize_t P = A.shape[0], L = A.shape[1], j, l
    cdef double m, v, s, inv
    with nogil:
        for j in range(P):
            m = A[j, 0] + offset[0]
            for l in range(1, L):
                v = A[j, l] + offset[l]
                if v > m:
                    m = v
            s = 0.0
            for l in range(L):
                v = exp(A[j, l] + offset[l] - m)
                A[j, l] = v
                s += v
            inv = 1.0 / s
            for l in range(L):
                A[j, l] *= inv
            logp[j] = m + log(s)


cdef double _map_objective(const double[::1] y, const double[:, ::1] alpha,
                           const double[::1] beta, double* g, Py_ssize_t K) nogil:
    cdef Py_ssize_t M = alpha.shape[0], i, k
    cdef double eta, f = 0.0
    for i in range(M):
        eta = beta[i]
        for k in range(K):
            eta += alpha[i, k] * g[k]
        f += y[i] * eta - _softplus(eta)
    for k in range(K):
        f -= 0.5 * g[k] * g[k]
    return f


cdef int _cholesky_solve(double* H, double* b, Py_ssize_t K) nogil:
    # H (K x K, row-major, SPD) is overwritten by its Cholesky factor; b by the solution.
    cdef Py_ssize_t i, j, k
    cdef double s
    for j in range(K):
        s = H[j * K + j]
        for k in range(j):
            s -= H[j * K + k] * H[j * K + k]
        if s <= 0:
            return -1
        H[j * K + j] = sqrt(s)
        for i in range(j + 1, K):
            s = H[i * K + j]
            for k in range(j):
                s -= H[i * K + k] * H[j * K + k]
            H[i * K + j] = s / H[j * K + j]
    for i in range(K):
        s = b[i]
        for k in range(i):
            s -= H[i * K + k] * b[k]
        b[i] = s / H[i * K + i]
    for i in range(K - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, K):
            s -= H[k * K + i] * b[k]
        b[i] = s / H[i * K + i]
    return 0


def map_newton(const double[:, ::1] Y, const double[:, ::1] alpha,
               const double[::1] beta, double tol, int max_iter):
    cdef Py_ssize_t P = Y.shape[0], M = Y.shape[1], K = alpha.shape[1]
    cdef Py_ssize_t j, i, k, k2, it, h
    cdef double eta, s, w, r, gnorm, f0, f1, t
    out = np.zeros((P, K))
    iters_arr = np.zeros(P, dtype=np.int64)
    cdef double[:, ::1] gamma = out
    cdef long long[::1] iters = iters_arr
    cdef double* g = <double*> malloc(K * sizeof(double))
    cdef double* trial = <double*> malloc(K * sizeof(double))
    cdef double* grad = <double*> malloc(K * sizeof(double))
    cdef double* H = <double*> malloc(K * K * sizeof(double))
    cdef int failed = 0
    try:
        with nogil:
            for j in range(P):
                for k in range(K):
                    g[k] = 0.0
                iters[j] = max_iter
                for it in range(max_iter):
                    for k in range(K):
                        grad[k] = -g[k]
                        for k2 in range(K):
                            H[k * K + k2] = 1.0 if k == k2 else 0.0
                    for i in range(M):
                        eta = beta[i]
                        for k in range(K):
                            eta += alpha[i, k] * g[k]
                        s = _expit(eta)
                        w = s * (1.0 - s)
                        r = Y[j, i] - s
                        for k in range(K):
                            grad[k] += r * alpha[i, k]
                            for k2 in range(K):
                                H[k * K + k2] += w * alpha[i, k] * alpha[i, k2]
                    gnorm = 0.0
                    for k in range(K):
                        gnorm += grad[k] * grad[k]
                    if sqrt(gnorm) <= tol:
                        iters[j] = it
                        break
                    if _cholesky_solve(H, grad, K) != 0:
                        failed = 1
                        break
                    f0 = _map_objective(Y[j], alpha, beta, g, K)
                    t = 1.0
                    for h in range(60):
                        for k in range(K):
                            trial[k] = g[k] + t * grad[k]
                        f1 = _map_objective(Y[j], alpha, beta, trial, K)
                        if f1 >= f0 - 1e-12 * fabs(f0):
                            break
                        t *= 0.5
                    for k in range(K):
                        g[k] = trial[k]
                for k in range(K):
                    gamma[j, k] = g[k]
                if failed:
                    break
    finally:
        free(g)
        free(trial)
        free(grad)
        free(H)
    if failed:
        raise ArithmeticError("non-positive-definite Hessian in MAP Newton step")
    return out, iters_arr


def profile_1d(const double[:, ::1] base, const double[::1] counts, const double[::1] y,
               const double[::1] eta, const double[::1] x):
    cdef Py_ssize_t P = base.shape[0], L = base.shape[1], j, l
    cdef double m, v, e, tot, sc, sq, cw, rr, logp
    cdef double ll = 0.0, score = 0.0, second = 0.0
    off0_arr = np.empty(L)
    off1_arr = np.empty(L)
    r0_arr = np.empty(L)
    r1_arr = np.empty(L)
    c_arr = np.empty(L)
    cdef double[::1] off0 = off0_arr, off1 = off1_arr, r0 = r0_arr, r1 = r1_arr, curv = c_arr
    cdef double s, sp
    cdef const double* off
    cdef const double* rv
    for l in range(L):
        s = _expit(eta[l])
        sp = _softplus(eta[l])
        off0[l] = -sp
        off1[l] = eta[l] - sp
        r0[l] = -s * x[l]
        r1[l] = (1.0 - s) * x[l]
        curv[l] = s * (1.0 - s) * x[l] * x[l]
    with nogil:
        for j in range(P):
            if y[j] > 0.5:
                off = &off1[0]
                rv = &r1[0]
            else:
                off = &off0[0]
                rv = &r0[0]
            m = base[j, 0] + off[0]
            for l in range(1, L):
                v = base[j, l] + off[l]
                if v > m:
                    m = v
            tot = 0.0
            sc = 0.0
            sq = 0.0
            cw = 0.0
            for l in range(L):
                e = exp(base[j, l] + off[l] - m)
                rr = rv[l]
                tot += e
                sc += e * rr
                sq += e * rr * rr
                cw += e * curv[l]
            logp = m + log(tot)
            sc /= tot
            sq /= tot
            cw /= tot
            ll += counts[j] * logp
            score += counts[j] * sc
            second += counts[j] * (sq - sc * sc - cw)
    return ll, score, second
