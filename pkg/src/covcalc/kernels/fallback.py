"""Pure-numpy reference implementations of the hot kernels."""

import numpy as np

__all__ = ["diff_axis", "christoffel_core"]


def diff_axis(values, axis, h, order, periodic):
    """Differentiate ``values`` along ``axis`` with spacing ``h``.

    Central stencils of the given order inside, one-sided stencils of
    the same order at non-periodic edges, wrap-around when periodic.
    """
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    out = np.empty_like(v)
    if order == 2:
        if periodic:
            out[:] = (np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)) / (2.0 * h)
        else:
            out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
            out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
            out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    elif order == 4:
        if periodic:
            out[:] = (
                -np.roll(v, -2, axis=0)
                + 8.0 * np.roll(v, -1, axis=0)
                - 8.0 * np.roll(v, 1, axis=0)
                + np.roll(v, 2, axis=0)
            ) / (12.0 * h)
        else:
            out[2:-2] = (-v[4:] + 8.0 * v[3:-1] - 8.0 * v[1:-3] + v[:-4]) / (12.0 * h)
            out[0] = (
                -25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]
            ) / (12.0 * h)
            out[1] = (
                -3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]
            ) / (12.0 * h)
            out[-2] = (
                3.0 * v[-1] + 10.0 * v[-2] - 18.0 * v[-3] + 6.0 * v[-4] - v[-5]
            ) / (12.0 * h)
            out[-1] = (
                25.0 * v[-1] - 48.0 * v[-2] + 36.0 * v[-3] - 16.0 * v[-4] + 3.0 * v[-5]
            ) / (12.0 * h)
    else:
        raise ValueError(f"unsupported stencil order {order}")
    return np.moveaxis(out, 0, axis)


def christoffel_core(ginv, dg):
    """Connection coefficients from the inverse metric and its gradient.

    ``ginv`` has shape (n, d, d); ``dg[n, i, j, l]`` holds the lattice
    values of the derivative of component (i, j) along axis l.  Returns
    gamma with shape (n, d, d, d), first index up, symmetric in the
    trailing pair.
    """
    term = dg + dg.swapaxes(2, 3) - np.moveaxis(dg, 3, 1)
    return 0.5 * np.einsum("nms,nsab->nmab", ginv, term)
