"""Window integrals of piecewise-linear grid functions, jump-aware at one node.

Both the population fixed point and the limit-profile tables need averages of
a gridded function over sliding intervals. The functions involved are smooth
except for a single known jump at an interior node (the cutoff), so the
interpolant treats the two cells adjacent to that node one-sidedly: the stored
node value is the right limit, and the left limit differs by a known constant.

Two representations of the same quadrature rule live here:

* ``window_matrix``: explicit integral weights w over node values plus the
  two scalars (wl0, wr0) multiplying the left/right jump sizes, so that
  ``integral = W @ y + wl0*jump_left + wr0*jump_right``. Used to discretize
  the fixed-point operator densely.
* ``window_integrals``: the same integrals evaluated directly from y via a
  cumulative integral, O(N) per call. Used inside Neumann iteration and for
  point queries.

Windows must satisfy lo < hi and lie inside [z[0], z[-1]].
"""
from __future__ import annotations

import numpy as np


def _locate(p: np.ndarray, z0: float, dz: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell index k and fraction t in [0,1] with p = z0 + (k+t)*dz, 0 <= k <= n-2."""
    k = np.floor((p - z0) / dz).astype(int)
    k = np.clip(k, 0, n - 2)
    t = (p - (z0 + k * dz)) / dz
    # exact node hits can land t slightly outside [0,1]
    t = np.clip(t, 0.0, 1.0)
    return k, t


def window_matrix(z: np.ndarray, lo: np.ndarray, hi: np.ndarray, i0: int | None):
    """Integral weights of the piecewise-linear interpolant over [lo_i, hi_i].

    z must be a uniform grid. When i0 is given, the two cells adjacent to node
    i0 use one-sided values there; their contributions to node i0 are reported
    separately in (wl0, wr0) so callers can supply the jump sizes.

    Returns (W, wl0, wr0) with W of shape (len(lo), len(z)).
    """
    z = np.asarray(z, dtype=float)
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    n = len(z)
    dz = z[1] - z[0]
    if np.any(lo >= hi):
        raise ValueError("window_matrix requires lo < hi")
    if lo.min() < z[0] - 1e-9 * dz or hi.max() > z[-1] + 1e-9 * dz:
        raise ValueError("window outside grid range")
    klo, tlo = _locate(lo, z[0], dz, n)
    khi, thi = _locate(hi, z[0], dz, n)
    W = np.zeros((len(lo), n))
    wl0 = np.zeros(len(lo))
    wr0 = np.zeros(len(lo))

    for row in range(len(lo)):
        a, ta = klo[row], tlo[row]
        b, tb = khi[row], thi[row]
        w = W[row]
        if a == b:
            # both endpoints inside one cell
            w_left = dz * ((tb - ta) - (tb * tb - ta * ta) / 2.0)
            w_right = dz * (tb * tb - ta * ta) / 2.0
            w[a] += w_left
            w[a + 1] += w_right
            if i0 is not None:
                if a == i0 - 1:
                    wl0[row] += w_right
                elif a == i0:
                    wr0[row] += w_left
            continue
        # partial left cell [lo, z_{a+1}]
        la, ra = dz * (1.0 - ta) ** 2 / 2.0, dz * (1.0 - ta * ta) / 2.0
        w[a] += la
        w[a + 1] += ra
        # full cells a+1 .. b-1 (composite trapezoid over nodes a+1 .. b)
        if b > a + 1:
            w[a + 1] += dz / 2.0
            w[b] += dz / 2.0
            if b > a + 2:
                w[a + 2:b] += dz
        # partial right cell [z_b, hi]
        lb = rb = 0.0
        if tb > 0.0:
            lb, rb = dz * (tb - tb * tb / 2.0), dz * tb * tb / 2.0
            w[b] += lb
            w[b + 1] += rb
        if i0 is None:
            continue
        # weight that the cell left of node i0 put on node i0
        c = i0 - 1
        if c == a:
            wl0[row] += ra
        elif a < c < b:
            wl0[row] += dz / 2.0
        elif c == b and tb > 0.0:
            wl0[row] += rb
        # weight that the cell right of node i0 put on node i0
        if i0 == a:
            wr0[row] += la
        elif a < i0 < b:
            wr0[row] += dz / 2.0
        elif i0 == b and tb > 0.0:
            wr0[row] += lb
    return W, wl0, wr0


def cell_endpoints(y: np.ndarray, i0: int | None, jump_left: float, jump_right: float):
    """Left/right endpoint values of every cell of the jump-aware interpolant."""
    yl = np.asarray(y, dtype=float)[:-1].copy()
    yr = np.asarray(y, dtype=float)[1:].copy()
    if i0 is not None:
        if i0 >= 1:
            yr[i0 - 1] += jump_left
        if i0 <= len(y) - 2:
            yl[i0] += jump_right
    return yl, yr


def window_integrals(y: np.ndarray, z: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                     i0: int | None = None, jump_left: float = 0.0,
                     jump_right: float = 0.0) -> np.ndarray:
    """Integrals of the jump-aware interpolant of y over [lo_i, hi_i], O(N + m)."""
    z = np.asarray(z, dtype=float)
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    n = len(z)
    dz = z[1] - z[0]
    yl, yr = cell_endpoints(y, i0, jump_left, jump_right)
    cum = np.zeros(n)
    np.cumsum((yl + yr) * dz / 2.0, out=cum[1:])

    def T(p):
        k, t = _locate(p, z[0], dz, n)
        return cum[k] + dz * (yl[k] * (t - t * t / 2.0) + yr[k] * (t * t / 2.0))

    return T(hi) - T(lo)
