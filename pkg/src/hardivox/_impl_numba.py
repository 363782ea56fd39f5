"""Numba implementations of the hot numeric kernels.

Function-for-function mirror of :mod:`hardivox._impl_numpy`; see that module
for the reference semantics. Keep the two in sync.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def conv_planes(planes, kernels):
    """Cross-correlate each 2D plane with its own kernel, zero padding.

    planes: (P, Y, X) float64, kernels: (P, w, w) float64 with w odd.
    out[p, y, x] = sum_{ky,kx} planes[p, y+ky-r, x+kx-r] * kernels[p, ky, kx]
    with out-of-grid taps contributing zero.
    """
    P, Y, X = planes.shape
    w = kernels.shape[1]
    r = w // 2
    out = np.zeros((P, Y, X))
    for p in range(P):
        for y in range(Y):
            for x in range(X):
                acc = 0.0
                for ky in range(w):
                    yy = y + ky - r
                    if yy < 0 or yy >= Y:
                        continue
                    for kx in range(w):
                        xx = x + kx - r
                        if xx < 0 or xx >= X:
                            continue
                        acc += planes[p, yy, xx] * kernels[p, ky, kx]
                out[p, y, x] = acc
    return out


@njit(cache=True)
def rbf_kernel(A, B, gamma):
    """Gaussian kernel matrix exp(-gamma * ||a_i - b_j||^2), dtype of A."""
    G = np.dot(A, np.ascontiguousarray(B.T))
    sa = np.empty(A.shape[0], dtype=A.dtype)
    for i in range(A.shape[0]):
        acc = 0.0
        for k in range(A.shape[1]):
            acc += A[i, k] * A[i, k]
        sa[i] = acc
    sb = np.empty(B.shape[0], dtype=B.dtype)
    for j in range(B.shape[0]):
        acc = 0.0
        for k in range(B.shape[1]):
            acc += B[j, k] * B[j, k]
        sb[j] = acc
    out = np.empty_like(G)
    for i in range(G.shape[0]):
        for j in range(G.shape[1]):
            d2 = sa[i] + sb[j] - 2.0 * G[i, j]
            if d2 < 0.0:
                d2 = 0.0
            out[i, j] = np.exp(-gamma * d2)
    return out


@njit(cache=True)
def smo_solve_cached(K, y, C, tol, max_iter):
    """SMO on the SVM dual with a precomputed kernel matrix.

    Minimizes 0.5 a'Qa - e'a (Q_ij = y_i y_j K_ij) over 0 <= a <= C,
    y'a = 0, using second-order working-set selection. Returns
    (alpha, grad, n_iter, gap) with grad the final dual gradient Qa - e.
    """
    m = y.shape[0]
    alpha = np.zeros(m)
    grad = np.full(m, -1.0)
    it = 0
    gap = np.inf
    while it < max_iter:
        # i: maximal -y*grad over the "up" set
        gmax = -np.inf
        i = -1
        for t in range(m):
            if (y[t] > 0.0 and alpha[t] < C) or (y[t] < 0.0 and alpha[t] > 0.0):
                v = -y[t] * grad[t]
                if v > gmax:
                    gmax = v
                    i = t
        # j: best second-order gain among violators in the "low" set
        gmin = np.inf
        j = -1
        best = 0.0
        if i >= 0:
            Kii = float(K[i, i])
            for t in range(m):
                if (y[t] > 0.0 and alpha[t] > 0.0) or (y[t] < 0.0 and alpha[t] < C):
                    v = -y[t] * grad[t]
                    if v < gmin:
                        gmin = v
                    b_it = gmax - v
                    if b_it > 0.0:
                        a_it = Kii + float(K[t, t]) - 2.0 * float(K[i, t])
                        if a_it <= 0.0:
                            a_it = 1e-12
                        gain = b_it * b_it / a_it
                        if gain > best:
                            best = gain
                            j = t
        gap = gmax - gmin
        if j < 0 or gap <= tol:
            break

        yi = y[i]
        yj = y[j]
        Kii = float(K[i, i])
        Kjj = float(K[j, j])
        Kij = float(K[i, j])
        quad = Kii + Kjj - 2.0 * Kij
        if quad <= 0.0:
            quad = 1e-12
        old_ai = alpha[i]
        old_aj = alpha[j]
        if yi != yj:
            delta = (-grad[i] - grad[j]) / quad
            diff = old_ai - old_aj
            alpha[i] = old_ai + delta
            alpha[j] = old_aj + delta
            if diff > 0.0:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0.0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            asum = old_ai + old_aj
            alpha[i] = old_ai - delta
            alpha[j] = old_aj + delta
            if asum > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = asum - C
            else:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = asum
            if asum > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = asum - C
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = asum
        d_i = alpha[i] - old_ai
        d_j = alpha[j] - old_aj
        if d_i == 0.0 and d_j == 0.0:
            break  # no float progress possible
        ci = yi * d_i
        cj = yj * d_j
        for t in range(m):
            grad[t] += y[t] * (ci * float(K[i, t]) + cj * float(K[j, t]))
        it += 1
    return alpha, grad, it, gap


@njit(cache=True)
def _rbf_row(X, i, gamma, out):
    m, d = X.shape
    for t in range(m):
        acc = 0.0
        for k in range(d):
            diff = X[i, k] - X[t, k]
            acc += diff * diff
        out[t] = np.exp(-gamma * acc)


@njit(cache=True)
def smo_solve_rows(X, y, gamma, C, tol, max_iter):
    """SMO computing Gaussian kernel rows on demand (large problems).

    Same contract as smo_solve_cached; K(x,x) = 1 for the RBF kernel.
    """
    m = y.shape[0]
    alpha = np.zeros(m)
    grad = np.full(m, -1.0)
    row_i = np.empty(m)
    row_j = np.empty(m)
    it = 0
    gap = np.inf
    while it < max_iter:
        gmax = -np.inf
        i = -1
        for t in range(m):
            if (y[t] > 0.0 and alpha[t] < C) or (y[t] < 0.0 and alpha[t] > 0.0):
                v = -y[t] * grad[t]
                if v > gmax:
                    gmax = v
                    i = t
        gmin = np.inf
        j = -1
        best = 0.0
        if i >= 0:
            _rbf_row(X, i, gamma, row_i)
            for t in range(m):
                if (y[t] > 0.0 and alpha[t] > 0.0) or (y[t] < 0.0 and alpha[t] < C):
                    v = -y[t] * grad[t]
                    if v < gmin:
                        gmin = v
                    b_it = gmax - v
                    if b_it > 0.0:
                        a_it = 2.0 - 2.0 * row_i[t]
                        if a_it <= 0.0:
                            a_it = 1e-12
                        gain = b_it * b_it / a_it
                        if gain > best:
                            best = gain
                            j = t
        gap = gmax - gmin
        if j < 0 or gap <= tol:
            break

        _rbf_row(X, j, gamma, row_j)
        yi = y[i]
        yj = y[j]
        quad = 2.0 - 2.0 * row_i[j]
        if quad <= 0.0:
            quad = 1e-12
        old_ai = alpha[i]
        old_aj = alpha[j]
        if yi != yj:
            delta = (-grad[i] - grad[j]) / quad
            diff = old_ai - old_aj
            alpha[i] = old_ai + delta
            alpha[j] = old_aj + delta
            if diff > 0.0:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0.0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            asum = old_ai + old_aj
            alpha[i] = old_ai - delta
            alpha[j] = old_aj + delta
            if asum > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = asum - C
            else:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = asum
            if asum > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = asum - C
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = asum
        d_i = alpha[i] - old_ai
        d_j = alpha[j] - old_aj
        if d_i == 0.0 and d_j == 0.0:
            break
        ci = yi * d_i
        cj = yj * d_j
        for t in range(m):
            grad[t] += y[t] * (ci * row_i[t] + cj * row_j[t])
        it += 1
    return alpha, grad, it, gap


@njit(cache=True)
def decision_values(Xt, sv, coef, bias, gamma):
    """Evaluate f(x) = sum_s coef_s * exp(-gamma ||x - sv_s||^2) + bias."""
    p = Xt.shape[0]
    s = sv.shape[0]
    d = Xt.shape[1]
    out = np.empty(p)
    for a in range(p):
        acc = 0.0
        for b in range(s):
            dist = 0.0
            for k in range(d):
                diff = Xt[a, k] - sv[b, k]
                dist += diff * diff
            acc += coef[b] * np.exp(-gamma * dist)
        out[a] = acc + bias
    return out
