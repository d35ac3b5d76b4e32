"""Pure-Python (numpy) implementations of the numeric hot kernels.

Selected at import when the compiled extension is unavailable or when
``AFRNET_PURE_PYTHON=1``. The algorithms mirror ``_native.pyx`` update
for update so both backends agree to floating-point noise.
"""

import numpy as np

BACKEND = "python"


def rbf_kernel_matrix(a, b, gamma):
    """exp(-gamma * ||a_i - b_j||^2) for every row pair."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    diff = a[:, None, :] - b[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    return np.exp(-gamma * d2)


def smo_epsilon_svr(kmat, targets, cap, tube, tol, max_iter):
    """Maximal-violating-pair SMO for the epsilon-insensitive SVR dual.

    Works on the stacked vector a = (alpha, alpha*) of length 2C with
    signs y (+1 for alpha, -1 for alpha*), minimizing

        0.5 * a^T Qh a + p^T a,   Qh[k,l] = y_k y_l K[i_k, i_l],
        p = (tube - targets, tube + targets),

    subject to y^T a = 0 and 0 <= a <= cap. Returns a dict with the dual
    differences ``theta``, the bias, the final KKT violation, the dual
    objective, the number of pair updates and a convergence flag.
    """
    kmat = np.ascontiguousarray(kmat, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    c = kmat.shape[0]
    n = 2 * c
    y = np.concatenate([np.ones(c), -np.ones(c)])
    p = np.concatenate([tube - targets, tube + targets])
    q = (y[:, None] * y[None, :]) * np.tile(kmat, (2, 2))
    a = np.zeros(n)
    g = p.copy()  # gradient of the objective at a
    updates = 0
    kkt = np.inf
    converged = False
    while updates < max_iter:
        score = -y * g
        up = ((y > 0) & (a < cap)) | ((y < 0) & (a > 0))
        low = ((y > 0) & (a > 0)) | ((y < 0) & (a < cap))
        if not up.any() or not low.any():
            kkt = 0.0
            converged = True
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        j = int(np.flatnonzero(low)[np.argmin(score[low])])
        m_up = score[i]
        m_low = score[j]
        kkt = m_up - m_low
        if kkt <= tol:
            converged = True
            break
        quad = q[i, i] + q[j, j] - 2.0 * y[i] * y[j] * q[i, j]
        if quad <= 1e-12:
            quad = 1e-12
        delta = (m_up - m_low) / quad
        dmax_i = cap - a[i] if y[i] > 0 else a[i]
        dmax_j = a[j] if y[j] > 0 else cap - a[j]
        delta = min(delta, dmax_i, dmax_j)
        new_i = a[i] + y[i] * delta
        new_j = a[j] - y[j] * delta
        if delta == dmax_i:
            new_i = cap if y[i] > 0 else 0.0
        if delta == dmax_j:
            new_j = 0.0 if y[j] > 0 else cap
        g = g + q[:, i] * (new_i - a[i]) + q[:, j] * (new_j - a[j])
        a[i] = new_i
        a[j] = new_j
        updates += 1
    if kkt <= tol:
        converged = True
    kkt = max(kkt, 0.0)
    # bias: average the free-variable estimates, else the bound midpoint
    score = -y * g
    free_sum = 0.0
    free_count = 0
    for k in range(n):
        if 0.0 < a[k] < cap:
            free_sum += score[k]
            free_count += 1
    if free_count > 0:
        bias = free_sum / free_count
    else:
        up = ((y > 0) & (a < cap)) | ((y < 0) & (a > 0))
        low = ((y > 0) & (a > 0)) | ((y < 0) & (a < cap))
        hi = np.max(score[up]) if up.any() else 0.0
        lo = np.min(score[low]) if low.any() else 0.0
        bias = (hi + lo) / 2.0
    objective = 0.5 * float(a @ (g + p))  # g + p = Qh a + 2p, so a.(g+p)/2 = aQa/2 + ap
    return {
        "theta": a[:c] - a[c:],
        "bias": float(bias),
        "kkt": float(kkt),
        "objective": objective,
        "updates": updates,
        "converged": bool(converged),
    }


def jacobi_eigh(sym, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a small symmetric matrix.

    Returns (eigenvalues, eigenvectors-as-columns) sorted by descending
    eigenvalue, ties kept in original index order.
    """
    a = np.array(sym, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    frob = np.sqrt(np.sum(a * a))
    threshold = tol * frob if frob > 0 else 0.0
    for _ in range(max_sweeps):
        off2 = np.sum(a * a) - np.sum(np.diag(a) ** 2)
        off = np.sqrt(max(off2, 0.0))  # cancellation can leave a tiny negative
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(tau) > 1e154:  # tau*tau would overflow; same limit value
                    t = 0.5 / tau
                elif tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * cs
                # rotate rows/cols p and q of a, and columns p and q of v
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = cs * ap - sn * aq
                a[q, :] = sn * ap + cs * aq
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = cs * ap - sn * aq
                a[:, q] = sn * ap + cs * aq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = cs * vp - sn * vq
                v[:, q] = sn * vp + cs * vq
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], np.ascontiguousarray(v[:, order])
