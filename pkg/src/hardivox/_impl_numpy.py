"""Pure-numpy implementations of the hot numeric kernels.

Reference semantics for the numba twins in :mod:`hardivox._impl_numba`.
Selected at import time via the HARDIVOX_BACKEND environment variable; see
:mod:`hardivox.backend`.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_planes(planes, kernels):
    """Cross-correlate each 2D plane with its own kernel, zero padding."""
    P, Y, X = planes.shape
    w = kernels.shape[1]
    r = w // 2
    out = np.empty((P, Y, X))
    for p in range(P):
        padded = np.pad(planes[p], r)
        windows = sliding_window_view(padded, (w, w))
        out[p] = np.einsum("yxuv,uv->yx", windows, kernels[p])
    return out


def rbf_kernel(A, B, gamma):
    """Gaussian kernel matrix exp(-gamma * ||a_i - b_j||^2), dtype of A."""
    G = A @ B.T
    sa = np.einsum("ij,ij->i", A, A)
    sb = np.einsum("ij,ij->i", B, B)
    d2 = sa[:, None] + sb[None, :] - 2.0 * G
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


def _select_and_step(get_row, diag, y, alpha, grad, C, tol):
    """One SMO iteration shared by the cached and on-the-fly variants.

    Returns (done, gap, i, j, d_i, d_j, row_i, row_j); done=True means the
    working-set selection found no violating pair above tol or the update
    could make no float progress.
    """
    up = np.where(y > 0.0, alpha < C, alpha > 0.0)
    low = np.where(y > 0.0, alpha > 0.0, alpha < C)
    vals = -y * grad
    if not up.any():
        return True, -np.inf, -1, -1, 0.0, 0.0, None, None
    gmax = np.max(vals[up])
    i = int(np.flatnonzero(up)[np.argmax(vals[up])])
    if not low.any():
        return True, np.inf, -1, -1, 0.0, 0.0, None, None
    gmin = np.min(vals[low])
    gap = gmax - gmin
    if gap <= tol:
        return True, gap, -1, -1, 0.0, 0.0, None, None
    row_i = get_row(i)
    b_vec = gmax - vals
    a_vec = diag[i] + diag - 2.0 * row_i
    a_vec[a_vec <= 0.0] = 1e-12
    gain = np.where(low & (b_vec > 0.0), b_vec * b_vec / a_vec, -np.inf)
    j = int(np.argmax(gain))
    if not np.isfinite(gain[j]):
        return True, gap, -1, -1, 0.0, 0.0, None, None
    row_j = get_row(j)

    quad = diag[i] + diag[j] - 2.0 * row_i[j]
    if quad <= 0.0:
        quad = 1e-12
    old_ai = alpha[i]
    old_aj = alpha[j]
    if y[i] != y[j]:
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
        return True, gap, i, j, 0.0, 0.0, row_i, row_j
    return False, gap, i, j, d_i, d_j, row_i, row_j


def smo_solve_cached(K, y, C, tol, max_iter):
    """SMO on the SVM dual with a precomputed kernel matrix."""
    m = y.shape[0]
    alpha = np.zeros(m)
    grad = np.full(m, -1.0)
    diag = np.ascontiguousarray(np.diag(K), dtype=np.float64)

    def get_row(t):
        return K[t].astype(np.float64)

    it = 0
    gap = np.inf
    while it < max_iter:
        done, gap, i, j, d_i, d_j, row_i, row_j = _select_and_step(
            get_row, diag, y, alpha, grad, C, tol
        )
        if done:
            break
        grad += y * (y[i] * d_i * row_i + y[j] * d_j * row_j)
        it += 1
    return alpha, grad, it, gap


def smo_solve_rows(X, y, gamma, C, tol, max_iter):
    """SMO computing Gaussian kernel rows on demand (large problems)."""
    m = y.shape[0]
    alpha = np.zeros(m)
    grad = np.full(m, -1.0)
    diag = np.ones(m)

    def get_row(t):
        d2 = np.einsum("ij,ij->i", X - X[t], X - X[t])
        return np.exp(-gamma * d2)

    it = 0
    gap = np.inf
    while it < max_iter:
        done, gap, i, j, d_i, d_j, row_i, row_j = _select_and_step(
            get_row, diag, y, alpha, grad, C, tol
        )
        if done:
            break
        grad += y * (y[i] * d_i * row_i + y[j] * d_j * row_j)
        it += 1
    return alpha, grad, it, gap


def decision_values(Xt, sv, coef, bias, gamma):
    """Evaluate f(x) = sum_s coef_s * exp(-gamma ||x - sv_s||^2) + bias."""
    K = rbf_kernel(np.asarray(Xt, dtype=np.float64), np.asarray(sv, dtype=np.float64), gamma)
    return K @ coef + bias
