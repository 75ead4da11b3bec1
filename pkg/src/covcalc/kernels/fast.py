"""Numba-compiled kernels; same contracts as :mod:`covcalc.kernels.fallback`."""

import numpy as np
from numba import njit

__all__ = ["diff_axis", "christoffel_core"]


@njit(cache=True)
def _diff2d_o2(v, out, h, periodic):
    n, m = v.shape
    inv = 1.0 / (2.0 * h)
    for j in range(m):
        for i in range(1, n - 1):
            out[i, j] = (v[i + 1, j] - v[i - 1, j]) * inv
        if periodic:
            out[0, j] = (v[1, j] - v[n - 1, j]) * inv
            out[n - 1, j] = (v[0, j] - v[n - 2, j]) * inv
        else:
            out[0, j] = (-3.0 * v[0, j] + 4.0 * v[1, j] - v[2, j]) * inv
            out[n - 1, j] = (3.0 * v[n - 1, j] - 4.0 * v[n - 2, j] + v[n - 3, j]) * inv


@njit(cache=True)
def _diff2d_o4(v, out, h, periodic):
    n, m = v.shape
    inv = 1.0 / (12.0 * h)
    for j in range(m):
        for i in range(2, n - 2):
            out[i, j] = (
                -v[i + 2, j] + 8.0 * v[i + 1, j] - 8.0 * v[i - 1, j] + v[i - 2, j]
            ) * inv
        if periodic:
            for i in (0, 1, n - 2, n - 1):
                out[i, j] = (
                    -v[(i + 2) % n, j]
                    + 8.0 * v[(i + 1) % n, j]
                    - 8.0 * v[(i - 1) % n, j]
                    + v[(i - 2) % n, j]
                ) * inv
        else:
            out[0, j] = (
                -25.0 * v[0, j] + 48.0 * v[1, j] - 36.0 * v[2, j]
                + 16.0 * v[3, j] - 3.0 * v[4, j]
            ) * inv
            out[1, j] = (
                -3.0 * v[0, j] - 10.0 * v[1, j] + 18.0 * v[2, j]
                - 6.0 * v[3, j] + v[4, j]
            ) * inv
            out[n - 2, j] = (
                3.0 * v[n - 1, j] + 10.0 * v[n - 2, j] - 18.0 * v[n - 3, j]
                + 6.0 * v[n - 4, j] - v[n - 5, j]
            ) * inv
            out[n - 1, j] = (
                25.0 * v[n - 1, j] - 48.0 * v[n - 2, j] + 36.0 * v[n - 3, j]
                - 16.0 * v[n - 4, j] + 3.0 * v[n - 5, j]
            ) * inv


def diff_axis(values, axis, h, order, periodic):
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    shape = v.shape
    v2 = np.ascontiguousarray(v).reshape(shape[0], -1)
    out2 = np.empty_like(v2)
    if order == 2:
        _diff2d_o2(v2, out2, h, periodic)
    elif order == 4:
        _diff2d_o4(v2, out2, h, periodic)
    else:
        raise ValueError(f"unsupported stencil order {order}")
    return np.moveaxis(out2.reshape(shape), 0, axis)


@njit(cache=True)
def _christoffel(ginv, dg, out):
    n, d = ginv.shape[0], ginv.shape[1]
    for p in range(n):
        for m in range(d):
            for a in range(d):
                for b in range(a, d):
                    acc = 0.0
                    for s in range(d):
                        acc += ginv[p, m, s] * (
                            dg[p, s, a, b] + dg[p, s, b, a] - dg[p, a, b, s]
                        )
                    out[p, m, a, b] = 0.5 * acc
                    out[p, m, b, a] = 0.5 * acc


def christoffel_core(ginv, dg):
    ginv = np.ascontiguousarray(ginv, dtype=float)
    dg = np.ascontiguousarray(dg, dtype=float)
    n, d = ginv.shape[0], ginv.shape[1]
    out = np.empty((n, d, d, d))
    _christoffel(ginv, dg, out)
    return out
