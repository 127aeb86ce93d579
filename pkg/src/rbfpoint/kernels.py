"""Radial basis kernel functions and their analytic partial derivatives.

Each kernel maps a point x and a kernel (center c, size sigma) to a scalar
response that depends on the input only through r = ||x - c||. The
vectorized value/grad pair is what the feature layer consumes; the scalar
`eval_*` helpers expose single-kernel evaluations with all partials.

Derivative convention for the vectorized path: grads() returns (w, dsigma)
where dPhi/dx = w * (x - c) and dPhi/dc = -w * (x - c).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ParameterError, as_f64

# guard for the Markov kernel's 1/r singularity at the center
R_GUARD = 1e-8


@dataclass
class KernelEval:
    """Response of one kernel at one point, with all partials."""

    value: float
    d_center: np.ndarray
    d_sigma: float
    d_point: np.ndarray


class Kernel:
    name: str
    local: bool

    def value(self, r2, sigma):
        raise NotImplementedError

    def grads(self, r2, value, sigma):
        """Return (w, dsigma); see module docstring for the convention."""
        raise NotImplementedError

    def flops_per_eval(self, d: int) -> int:
        raise NotImplementedError


class Gaussian(Kernel):
    # Phi = exp(-r^2 / sigma^2)
    name = "gaussian"
    local = True

    def value(self, r2, sigma):
        out = r2 * (-1.0 / sigma**2)
        if isinstance(out, np.ndarray):
            return np.exp(out, out=out)
        return np.exp(out)

    def grads(self, r2, value, sigma):
        w = value * (-2.0 / sigma**2)
        dsigma = r2 * value
        dsigma *= 2.0 / sigma**3
        return w, dsigma

    def flops_per_eval(self, d):
        # d subs, d mults, d-1 adds, 1 division, 1 exp
        return 3 * d + 1


class Markov(Kernel):
    # Phi = exp(-r / sigma^2)
    name = "markov"
    local = True

    def value(self, r2, sigma):
        return np.exp(-np.sqrt(r2) / sigma**2)

    def grads(self, r2, value, sigma):
        r = np.maximum(np.sqrt(r2), R_GUARD)
        w = -value / (sigma**2 * r)
        dsigma = 2.0 * np.sqrt(r2) * value / sigma**3
        return w, dsigma

    def flops_per_eval(self, d):
        # d subs, d mults, d-1 adds, 1 sqrt, 1 division, 1 exp
        return 3 * d + 2


class InverseMultiquadratic(Kernel):
    # Phi = (1 + sigma^2 r^2)^(-1/2)
    name = "imq"
    local = True

    def value(self, r2, sigma):
        return 1.0 / np.sqrt(1.0 + sigma**2 * r2)

    def grads(self, r2, value, sigma):
        v3 = value**3
        w = -(sigma**2) * v3
        dsigma = -sigma * r2 * v3
        return w, dsigma

    def flops_per_eval(self, d):
        # d subs, d mults, d-1 adds, 2 mults, 1 add, 1 sqrt, 1 division
        return 3 * d + 4


class Multiquadratic(Kernel):
    # Phi = (1 + sigma^2 r^2)^(1/2); grows with distance (global kernel)
    name = "mq"
    local = False

    def value(self, r2, sigma):
        return np.sqrt(1.0 + sigma**2 * r2)

    def grads(self, r2, value, sigma):
        w = sigma**2 / value
        dsigma = sigma * r2 / value
        return w, dsigma

    def flops_per_eval(self, d):
        # d subs, d mults, d-1 adds, 2 mults, 1 add, 1 sqrt
        return 3 * d + 3


KERNELS: dict[str, Kernel] = {
    k.name: k
    for k in (Gaussian(), Markov(), InverseMultiquadratic(), Multiquadratic())
}


def get_kernel(tag: str) -> Kernel:
    try:
        return KERNELS[tag]
    except KeyError:
        raise ParameterError(
            f"unknown kernel {tag!r}; expected one of {sorted(KERNELS)}"
        ) from None


def _eval_scalar(kernel: Kernel, x, c, sigma) -> KernelEval:
    if sigma <= 0:
        raise ParameterError(f"kernel size must be positive, got {sigma}")
    x = as_f64(x)
    c = as_f64(c)
    diff = x - c
    r2 = float(diff @ diff)
    value = float(kernel.value(np.float64(r2), sigma))
    w, dsigma = kernel.grads(np.float64(r2), np.float64(value), sigma)
    d_point = float(w) * diff
    if r2 == 0.0 and kernel.name == "markov":
        # symmetric at the center; the 1/r guard would otherwise leak
        d_point = np.zeros_like(diff)
    return KernelEval(
        value=value,
        d_center=-d_point,
        d_sigma=float(dsigma),
        d_point=d_point,
    )


def eval_gaussian(x, c, sigma) -> KernelEval:
    return _eval_scalar(KERNELS["gaussian"], x, c, sigma)


def eval_markov(x, c, sigma) -> KernelEval:
    return _eval_scalar(KERNELS["markov"], x, c, sigma)


def eval_imq(x, c, sigma) -> KernelEval:
    return _eval_scalar(KERNELS["imq"], x, c, sigma)


def eval_multiquadratic(x, c, sigma) -> KernelEval:
    return _eval_scalar(KERNELS["mq"], x, c, sigma)
