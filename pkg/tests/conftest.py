import numpy as np
import pytest


def fd_grad(f, x, h=1e-5):
    """Central finite differences of a scalar function wrt array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def max_rel_err(analytic, numeric, scale=1e-5):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), scale)
    return float(np.max(np.abs(analytic - numeric) / denom))


def assert_grads_close(analytic, numeric, tol=1e-6, scale=1e-5):
    err = max_rel_err(analytic, numeric, scale)
    assert err <= tol, f"gradient mismatch: max rel err {err:.3e} > {tol:.0e}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
