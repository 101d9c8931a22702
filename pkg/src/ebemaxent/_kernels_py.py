"""Pure numpy implementation of the quadrature reductions.

``Bt`` is the transposed basis matrix, shape ``(n, N)``: one contiguous row
per constraint function, one column per quadrature node.
"""

import numpy as np


def exp_weights(Bt, lam, nz, limit):
    """Return ``(e, imax, smax)`` with ``e = exp(lam[nz] @ Bt[nz])``.

    When the largest exponent exceeds ``limit`` nothing is exponentiated and
    ``e`` is ``None``.
    """
    if nz.size:
        s = lam[nz] @ Bt[nz]
    else:
        s = np.zeros(Bt.shape[1])
    imax = int(np.argmax(s))
    smax = float(s[imax])
    if not smax <= limit:
        return None, imax, smax
    return np.exp(s), imax, smax


def moments(Bt, q, rows):
    return Bt[rows] @ q


def gram(Bt, q, rows, cols):
    return (Bt[rows] * q) @ Bt[cols].T
