import os
import subprocess
import sys

import numpy as np
import pytest

from ivspectral import _kernels as K


@pytest.mark.parametrize("rho", [-0.7, 0.0, 0.5, 0.95])
def test_ar1_backends_agree(rng, rho):
    e = rng.standard_normal((200, 12))
    np.testing.assert_allclose(K.nb_ar1_columns(e, rho), K.np_ar1_columns(e, rho), rtol=0, atol=1e-13)


def test_ar1_first_column_is_innovation(rng):
    e = rng.standard_normal((5, 3))
    assert np.array_equal(K.ar1_columns(e, 0.3)[:, 0], e[:, 0])


def test_cv_fold_errors_backends_agree(rng):
    a = rng.standard_normal((40, 7))
    coef = rng.standard_normal((7, 2))
    w = np.abs(rng.standard_normal((5, 7)))
    x = rng.standard_normal((40, 2))
    got_nb = K.nb_cv_fold_errors(a, coef, w, x)
    got_np = K.np_cv_fold_errors(a, coef, w, x)
    brute = [np.sum((x - a @ (w[t][:, None] * coef)) ** 2) for t in range(5)]
    np.testing.assert_allclose(got_nb, brute, rtol=1e-12)
    np.testing.assert_allclose(got_np, brute, rtol=1e-12)


def test_prefix_signal_gram_backends_agree(rng):
    z = rng.standard_normal((50, 9))
    pi = rng.standard_normal((9, 2))
    grid = np.array([1, 4, 9])
    brute = np.array([(z[:, :k] @ pi[:k]).T @ (z[:, :k] @ pi[:k]) / 50 for k in grid])
    np.testing.assert_allclose(K.nb_prefix_signal_gram(z, pi, grid), brute, rtol=1e-12)
    np.testing.assert_allclose(K.np_prefix_signal_gram(z, pi, grid), brute, rtol=1e-12)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, IVSPECTRAL_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from ivspectral import _kernels; print(_kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
