"""Slow reference implementations used to cross-check the fast kernels.

Everything here favors obviousness over speed: quadruple loops, exhaustive
KKT active-set enumeration. Tolerances in the tests assume float64.
"""

import itertools

import numpy as np


def conv_planes_naive(planes, kernels):
    """Quadruple-loop 2D valid-region cross-correlation with zero padding."""
    n, Y, X = planes.shape
    w = kernels.shape[1]
    half = w // 2
    out = np.zeros_like(planes, dtype=np.float64)
    src = planes.astype(np.float64)
    for f in range(n):
        for yy in range(Y):
            for xx in range(X):
                acc = 0.0
                for u in range(w):
                    for v in range(w):
                        sy = yy + u - half
                        sx = xx + v - half
                        if 0 <= sy < Y and 0 <= sx < X:
                            acc += src[f, sy, sx] * kernels[f, u, v]
                out[f, yy, xx] = acc
    return out


def rbf_naive(A, B, gamma):
    out = np.empty((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            d = A[i] - B[j]
            out[i, j] = np.exp(-gamma * np.dot(d, d))
    return out


def dual_objective(alpha, Q):
    return 0.5 * alpha @ Q @ alpha - alpha.sum()


def solve_dual_exhaustive(K, y, C):
    """Global minimum of the SVM dual by KKT active-set enumeration.

    min 1/2 a'Qa - 1'a  s.t.  y'a = 0,  0 <= a <= C,  Q = yy' * K.
    Every variable is pinned to 0, pinned to C, or free; for m <= 8 all 3^m
    partitions fit in a blink. Returns (alpha, objective).
    """
    m = len(y)
    Q = (y[:, None] * y[None, :]) * K
    best = None
    best_obj = np.inf
    for assignment in itertools.product((0, 1, 2), repeat=m):
        alpha = np.zeros(m)
        free = [i for i, a in enumerate(assignment) if a == 2]
        for i, a in enumerate(assignment):
            if a == 1:
                alpha[i] = C
        if free:
            F = np.array(free)
            rhs_eq = -float(y @ alpha)
            A = np.zeros((len(F) + 1, len(F) + 1))
            A[: len(F), : len(F)] = Q[np.ix_(F, F)]
            A[: len(F), -1] = y[F]
            A[-1, : len(F)] = y[F]
            b = np.empty(len(F) + 1)
            b[: len(F)] = 1.0 - Q[np.ix_(F, ~np.isin(np.arange(m), F))] @ alpha[
                ~np.isin(np.arange(m), F)
            ]
            b[-1] = rhs_eq
            sol, *_ = np.linalg.lstsq(A, b, rcond=None)
            alpha[F] = sol[: len(F)]
            # lstsq may return a least-squares fit for singular KKT systems;
            # feasibility checks below reject those unless they truly solve it
            if not np.allclose(A @ sol, b, atol=1e-8):
                continue
        if alpha.min() < -1e-9 or alpha.max() > C + 1e-9:
            continue
        if abs(float(y @ alpha)) > 1e-8 * max(1.0, C * m):
            continue
        obj = dual_objective(np.clip(alpha, 0.0, C), Q)
        if obj < best_obj - 1e-15:
            best_obj = obj
            best = np.clip(alpha, 0.0, C)
    return best, best_obj


def random_binary_problem(rng, max_m=8):
    """Small random RBF dual problem with both labels present."""
    m = int(rng.integers(2, max_m + 1))
    d = int(rng.integers(1, 4))
    X = rng.normal(size=(m, d))
    y = rng.choice([-1.0, 1.0], size=m)
    y[0], y[1] = 1.0, -1.0
    gamma = float(rng.uniform(0.1, 2.0))
    C = float(rng.choice([0.1, 1.0, 10.0]))
    K = rbf_naive(X, X, gamma)
    return X, y, gamma, C, K
