import os
import subprocess
import sys

import numpy as np
import pytest

from oracles import random_binary_problem, rbf_naive
from hardivox import _impl_numba, _impl_numpy, active_backend


def test_active_backend_reports_a_known_name():
    assert active_backend() in ("numba", "numpy")


def test_conv_parity():
    rng = np.random.default_rng(40)
    for w in (5, 7, 9):
        planes = rng.normal(size=(5, 16, 12))
        kernels = rng.uniform(-2, 2, size=(5, w, w))
        a = _impl_numba.conv_planes(planes, kernels)
        b = _impl_numpy.conv_planes(planes, kernels)
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_rbf_parity_and_against_naive():
    rng = np.random.default_rng(41)
    A = rng.normal(size=(13, 6))
    B = rng.normal(size=(9, 6))
    gamma = 0.37
    ka = _impl_numba.rbf_kernel(A, B, gamma)
    kb = _impl_numpy.rbf_kernel(A, B, gamma)
    np.testing.assert_allclose(ka, kb, atol=1e-12)
    np.testing.assert_allclose(kb, rbf_naive(A, B, gamma), atol=1e-12)


def test_smo_cached_bitwise_parity():
    rng = np.random.default_rng(42)
    for _ in range(10):
        m = int(rng.integers(10, 60))
        d = int(rng.integers(2, 6))
        X = rng.normal(size=(m, d))
        y = np.where(rng.random(m) < 0.5, -1.0, 1.0)
        y[0], y[1] = 1.0, -1.0
        K = rbf_naive(X, X, 0.5)
        a1, g1, i1, gap1 = _impl_numba.smo_solve_cached(K, y, 1.0, 1e-3, 100000)
        a2, g2, i2, gap2 = _impl_numpy.smo_solve_cached(K, y, 1.0, 1e-3, 100000)
        np.testing.assert_array_equal(a1, a2)
        np.testing.assert_array_equal(g1, g2)
        assert i1 == i2
        assert gap1 == gap2


def test_smo_rows_equivalent_objective():
    # on-the-fly kernel rows sum in backend-specific order, so iterates may
    # branch at near-ties; both solutions must still be optimal to the gap
    rng = np.random.default_rng(43)
    X = rng.normal(size=(40, 4))
    y = np.where(rng.random(40) < 0.5, -1.0, 1.0)
    y[0], y[1] = 1.0, -1.0
    tol = 1e-6
    a1, _, _, gap1 = _impl_numba.smo_solve_rows(X, y, 0.25, 1.0, tol, 100000)
    a2, _, _, gap2 = _impl_numpy.smo_solve_rows(X, y, 0.25, 1.0, tol, 100000)
    assert gap1 <= tol and gap2 <= tol
    K = rbf_naive(X, X, 0.25)
    Q = (y[:, None] * y[None, :]) * K
    obj1 = 0.5 * a1 @ Q @ a1 - a1.sum()
    obj2 = 0.5 * a2 @ Q @ a2 - a2.sum()
    assert abs(obj1 - obj2) < 1e-6
    for a in (a1, a2):
        assert a.min() >= -1e-12 and a.max() <= 1.0 + 1e-12
        assert abs(float(y @ a)) < 1e-9


def test_decision_values_parity():
    rng = np.random.default_rng(44)
    sv = rng.normal(size=(12, 5))
    coef = rng.normal(size=12)
    Xt = rng.normal(size=(30, 5))
    d1 = _impl_numba.decision_values(Xt, sv, coef, 0.123, 0.4)
    d2 = _impl_numpy.decision_values(Xt, sv, coef, 0.123, 0.4)
    np.testing.assert_allclose(d1, d2, atol=1e-12)


def _backend_in_subprocess(value):
    env = dict(os.environ, HARDIVOX_BACKEND=value)
    code = "from hardivox import active_backend; print(active_backend())"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env=env)
    return out


def test_env_flag_selects_backend():
    assert _backend_in_subprocess("numpy").stdout.strip() == "numpy"
    assert _backend_in_subprocess("numba").stdout.strip() == "numba"
    assert _backend_in_subprocess("auto").stdout.strip() in ("numba", "numpy")


def test_env_flag_rejects_unknown_value():
    out = _backend_in_subprocess("cuda")
    assert out.returncode != 0
    assert "HARDIVOX_BACKEND" in out.stderr


def test_numpy_backend_runs_full_training():
    env = dict(os.environ, HARDIVOX_BACKEND="numpy")
    code = """
import numpy as np
from hardivox.filters import Dataset
from hardivox.svm import train_svm, predict_batch
rng = np.random.default_rng(0)
X = np.concatenate([rng.normal(loc=c, scale=0.3, size=(25, 2))
                    for c in [(0, 0), (3, 0), (0, 3), (3, 3)]])
y = np.repeat(np.arange(4), 25).astype(np.uint8)
prov = np.zeros((100, 3), dtype=np.int64); prov[:, 1] = np.arange(100)
model = train_svm(Dataset(features=X, labels=y, provenance=prov))
print((predict_batch(model, X) == y).mean())
"""
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env=env)
    assert out.returncode == 0, out.stderr
    assert float(out.stdout.strip()) == 1.0
