"""Compiled implementations of the numeric hot kernels.

Mirrors ``pykernels.py`` update for update; the Python module is the
fallback when this extension is not built.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

BACKEND = "native"


def rbf_kernel_matrix(a, b, double gamma):
    """exp(-gamma * ||a_i - b_j||^2) for every row pair."""
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], d = av.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    with nogil:
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for k in range(d):
                    diff = av[i, k] - bv[j, k]
                    acc += diff * diff
                ov[i, j] = exp(-gamma * acc)
    return out


def smo_epsilon_svr(kmat, targets, double cap, double tube, double tol, long max_iter):
    """Maximal-violating-pair SMO for the epsilon-insensitive SVR dual.

    Same stacked-(alpha, alpha*) formulation as the Python fallback; see
    ``pykernels.smo_epsilon_svr`` for the full derivation notes.
    """
    cdef double[:, ::1] kv = np.ascontiguousarray(kmat, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(targets, dtype=np.float64)
    cdef Py_ssize_t c = kv.shape[0]
    cdef Py_ssize_t n = 2 * c

    sign_np = np.concatenate([np.ones(c), -np.ones(c)])
    p_np = np.concatenate([tube - np.asarray(targets, dtype=np.float64),
                           tube + np.asarray(targets, dtype=np.float64)])
    q_np = (sign_np[:, None] * sign_np[None, :]) * np.tile(np.asarray(kmat, dtype=np.float64), (2, 2))
    a_np = np.zeros(n)
    g_np = p_np.copy()

    cdef double[::1] sign = sign_np
    cdef double[::1] p = p_np
    cdef double[:, ::1] q = q_np
    cdef double[::1] a = a_np
    cdef double[::1] g = g_np

    cdef long updates = 0
    cdef double kkt = np.inf
    cdef bint converged = 0
    cdef Py_ssize_t i, j, k
    cdef double best_up, best_low, s, quad, delta, dmax_i, dmax_j
    cdef double new_i, new_j, di, dj

    with nogil:
        while updates < max_iter:
            i = -1
            j = -1
            best_up = 0.0
            best_low = 0.0
            for k in range(n):
                s = -sign[k] * g[k]
                if (sign[k] > 0 and a[k] < cap) or (sign[k] < 0 and a[k] > 0):
                    if i < 0 or s > best_up:
                        best_up = s
                        i = k
                if (sign[k] > 0 and a[k] > 0) or (sign[k] < 0 and a[k] < cap):
                    if j < 0 or s < best_low:
                        best_low = s
                        j = k
            if i < 0 or j < 0:
                kkt = 0.0
                converged = 1
                break
            kkt = best_up - best_low
            if kkt <= tol:
                converged = 1
                break
            quad = q[i, i] + q[j, j] - 2.0 * sign[i] * sign[j] * q[i, j]
            if quad <= 1e-12:
                quad = 1e-12
            delta = (best_up - best_low) / quad
            dmax_i = cap - a[i] if sign[i] > 0 else a[i]
            dmax_j = a[j] if sign[j] > 0 else cap - a[j]
            if dmax_i < delta:
                delta = dmax_i
            if dmax_j < delta:
                delta = dmax_j
            new_i = a[i] + sign[i] * delta
            new_j = a[j] - sign[j] * delta
            if delta == dmax_i:
                new_i = cap if sign[i] > 0 else 0.0
            if delta == dmax_j:
                new_j = 0.0 if sign[j] > 0 else cap
            di = new_i - a[i]
            dj = new_j - a[j]
            for k in range(n):
                g[k] = g[k] + q[k, i] * di + q[k, j] * dj
            a[i] = new_i
            a[j] = new_j
            updates += 1

    if kkt <= tol:
        converged = 1
    if kkt < 0.0:
        kkt = 0.0

    cdef double free_sum = 0.0
    cdef long free_count = 0
    cdef double hi = 0.0, lo = 0.0
    cdef bint any_up = 0, any_low = 0
    for k in range(n):
        s = -sign[k] * g[k]
        if 0.0 < a[k] < cap:
            free_sum += s
            free_count += 1
        if (sign[k] > 0 and a[k] < cap) or (sign[k] < 0 and a[k] > 0):
            if not any_up or s > hi:
                hi = s
                any_up = 1
        if (sign[k] > 0 and a[k] > 0) or (sign[k] < 0 and a[k] < cap):
            if not any_low or s < lo:
                lo = s
                any_low = 1
    cdef double bias
    if free_count > 0:
        bias = free_sum / free_count
    else:
        bias = (hi + lo) / 2.0

    objective = 0.5 * float(a_np @ (g_np + p_np))
    return {
        "theta": a_np[:c] - a_np[c:],
        "bias": float(bias),
        "kkt": float(kkt),
        "objective": objective,
        "updates": int(updates),
        "converged": bool(converged),
    }


def jacobi_eigh(sym, double tol=1e-12, int max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a small symmetric matrix."""
    a_np = np.array(sym, dtype=np.float64, copy=True)
    cdef Py_ssize_t n = a_np.shape[0]
    v_np = np.eye(n)
    cdef double[:, ::1] a = a_np
    cdef double[:, ::1] v = v_np
    cdef double frob = 0.0, off, apq, tau, t, cs, sn, tp, tq
    cdef Py_ssize_t p, q, k, sweep
    for p in range(n):
        for q in range(n):
            frob += a[p, q] * a[p, q]
    frob = sqrt(frob)
    cdef double threshold = tol * frob if frob > 0 else 0.0
    with nogil:
        for sweep in range(max_sweeps):
            off = 0.0
            for p in range(n):
                for q in range(n):
                    if p != q:
                        off += a[p, q] * a[p, q]
            if off < 0.0:
                off = 0.0
            off = sqrt(off)
            if off <= threshold:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if apq == 0.0:
                        continue
                    tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                    if tau > 1e154 or tau < -1e154:  # tau*tau would overflow
                        t = 0.5 / tau
                    elif tau >= 0.0:
                        t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                    else:
                        t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                    cs = 1.0 / sqrt(1.0 + t * t)
                    sn = t * cs
                    for k in range(n):
                        tp = a[p, k]
                        tq = a[q, k]
                        a[p, k] = cs * tp - sn * tq
                        a[q, k] = sn * tp + cs * tq
                    for k in range(n):
                        tp = a[k, p]
                        tq = a[k, q]
                        a[k, p] = cs * tp - sn * tq
                        a[k, q] = sn * tp + cs * tq
                    for k in range(n):
                        tp = v[k, p]
                        tq = v[k, q]
                        v[k, p] = cs * tp - sn * tq
                        v[k, q] = sn * tp + cs * tq
    w = np.diag(a_np).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], np.ascontiguousarray(v_np[:, order])
