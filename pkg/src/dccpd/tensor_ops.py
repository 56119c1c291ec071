"""Dense complex third-order tensor kernels.

Conventions
-----------
A third-order tensor of size ``I x J x K`` is a C-contiguous complex
``numpy`` array ``t`` with ``t[i, j, k]`` laid out row-major, i.e. the
flattened position of entry ``(i, j, k)`` is ``(i*J + j)*K + k``.  All
matricizations, vectorizations and Khatri-Rao products below follow this
single layout, so matricize/tensorize round-trips are exact by
construction.  With 1-based indices the mode unfoldings satisfy::

    T1[(j-1)K + k, i] = T2[(i-1)K + k, j] = T3[(i-1)J + j, k] = t[i, j, k]

``vec`` of a matrix stacks its rows (row-major), and ``unvec`` is the
inverse reshape.
"""

import numpy as np

from .exceptions import DimensionError

__all__ = [
    "as_tensor3",
    "as_matrix",
    "matricize",
    "tensorize",
    "khatri_rao",
    "perm213",
    "concat3",
    "vec",
    "unvec",
    "cpd_reconstruct",
]


def as_tensor3(t):
    """Validate and return ``t`` as a C-contiguous complex third-order tensor.

    The third dimension may be zero (an empty slice stack, the neutral
    element of :func:`concat3`); the leading two must be positive.
    """
    t = np.ascontiguousarray(t, dtype=np.complex128)
    if t.ndim != 3:
        raise DimensionError(f"expected a third-order tensor, got ndim={t.ndim}")
    if t.shape[0] < 1 or t.shape[1] < 1:
        raise DimensionError(f"tensor leading dimensions must be positive, got {t.shape}")
    return t


def as_matrix(m):
    """Validate and return ``m`` as a C-contiguous complex matrix."""
    m = np.ascontiguousarray(m, dtype=np.complex128)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got ndim={m.ndim}")
    return m


def matricize(t, mode):
    """Mode-``mode`` matrix representation of a third-order tensor.

    Parameters
    ----------
    t : (I, J, K) ndarray
    mode : {1, 2, 3}

    Returns
    -------
    ndarray
        ``T1`` of shape ``(J*K, I)``, ``T2`` of shape ``(I*K, J)`` or
        ``T3`` of shape ``(I*J, K)``.
    """
    t = as_tensor3(t)
    i, j, k = t.shape
    if mode == 1:
        return np.ascontiguousarray(t.transpose(1, 2, 0).reshape(j * k, i))
    if mode == 2:
        return np.ascontiguousarray(t.transpose(0, 2, 1).reshape(i * k, j))
    if mode == 3:
        return t.reshape(i * j, k)
    raise DimensionError(f"mode must be 1, 2 or 3, got {mode}")


def tensorize(m, dims):
    """Reshape an ``I*J x K`` matrix into an ``I x J x K`` tensor.

    Inverse of mode-3 matricization: ``t[i, j, k] = m[i*J + j, k]``.
    """
    m = as_matrix(m)
    i, j, k = dims
    if m.shape != (i * j, k):
        raise DimensionError(
            f"matrix of shape {m.shape} cannot be reshaped to dims {dims}"
        )
    return m.reshape(i, j, k)


def khatri_rao(a, b):
    """Column-wise Kronecker product of two matrices with equal column count.

    Column ``r`` of the result is ``kron(a[:, r], b[:, r])`` of length
    ``rows(a) * rows(b)``.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(
            f"column counts differ: {a.shape[1]} vs {b.shape[1]}"
        )
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], -1)


def perm213(t):
    """Permute the first and second indices: ``out[j, i, k] = t[i, j, k]``."""
    return np.ascontiguousarray(as_tensor3(t).transpose(1, 0, 2))


def concat3(x, y):
    """Concatenate two tensors along the third mode.

    The first ``K`` frontal slices come from ``x``, the remaining ones
    from ``y``; the leading two dimensions must agree.
    """
    x = as_tensor3(x)
    y = as_tensor3(y)
    if x.shape[:2] != y.shape[:2]:
        raise DimensionError(
            f"leading dimensions differ: {x.shape[:2]} vs {y.shape[:2]}"
        )
    return np.concatenate([x, y], axis=2)


def vec(m):
    """Row-major vectorization of a matrix (stacks rows)."""
    return as_matrix(m).reshape(-1)


def unvec(v, rows, cols):
    """Inverse of :func:`vec`: reshape a length ``rows*cols`` vector row-major."""
    v = np.asarray(v, dtype=np.complex128)
    if v.size != rows * cols:
        raise DimensionError(f"vector of size {v.size} is not {rows}x{cols}")
    return v.reshape(rows, cols)


def cpd_reconstruct(a, b, c):
    """Evaluate the polyadic decomposition ``[[a, b, c]]`` as a dense tensor."""
    a = as_matrix(a)
    b = as_matrix(b)
    c = as_matrix(c)
    if not (a.shape[1] == b.shape[1] == c.shape[1]):
        raise DimensionError("factor matrices must share the column count")
    return np.einsum("ir,jr,kr->ijk", a, b, c)
