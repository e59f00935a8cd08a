"""Column-stacking vectorization and transfer matrices of superoperators.

``vec(A)`` stacks the columns of ``A``, i.e. ``|A>> = sum_ij A[i, j] |j>|i>``.
Under this convention the superoperator ``X -> A X B^dagger`` has transfer
matrix ``conj(B) (x) A``.
"""

from __future__ import annotations

import numpy as np


def vec(a: np.ndarray) -> np.ndarray:
    return np.asarray(a).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    return v.reshape(dim, dim, order="F")


def sandwich(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Transfer matrix of ``X -> a X b^dagger`` (``b`` defaults to ``a``)."""
    if b is None:
        b = a
    return np.kron(np.conj(b), a)


def kraus_transfer(kraus) -> np.ndarray:
    """Transfer matrix of the map ``X -> sum_k K_k X K_k^dagger``."""
    return sum(sandwich(k) for k in kraus)


def vec_identity(dim: int) -> np.ndarray:
    """``<<1|`` as a row vector; ``<<1|v`` is the trace of ``unvec(v)``."""
    return vec(np.eye(dim)).conj()


def choi(transfer: np.ndarray) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| (x) E(|i><j|)`` of a transfer matrix."""
    d2 = transfer.shape[0]
    d = int(round(np.sqrt(d2)))
    # transfer[(a, b), (c, e)] with vec index = col * d + row
    t = transfer.reshape(d, d, d, d)  # [out_col, out_row, in_col, in_row]
    return t.transpose(3, 1, 2, 0).reshape(d2, d2)
