"""Kernel functions on [-1, 1] and their one-sided moments."""
from __future__ import annotations

import numpy as np

from .errors import ConfigError

KERNEL_NAMES = ("triangular", "epanechnikov", "uniform")


def kernel_values(name: str, u) -> np.ndarray:
    """K(u) with support [-1, 1]; zero outside."""
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) <= 1.0
    if name == "triangular":
        vals = (1.0 - np.abs(u)) * inside
    elif name == "epanechnikov":
        vals = 0.75 * (1.0 - u * u) * inside
    elif name == "uniform":
        vals = 0.5 * inside
    else:
        raise ConfigError(f"unknown kernel {name!r}; expected one of {KERNEL_NAMES}")
    return vals


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
# mapped to [0, 1]
_Q_NODES = 0.5 * (_GL_NODES + 1.0)
_Q_WEIGHTS = 0.5 * _GL_WEIGHTS


def one_sided_moment(name: str, p: int, s: int = 1) -> float:
    """gamma_{p,s} = integral_0^1 x^p K(x)^s dx.

    Gauss-Legendre with 24 nodes is exact here: every supported kernel is a
    polynomial on [0, 1] of degree <= 2, so the integrand degree is p + 2s.
    """
    k = kernel_values(name, _Q_NODES)
    return float(np.sum(_Q_WEIGHTS * _Q_NODES**p * k**s))
