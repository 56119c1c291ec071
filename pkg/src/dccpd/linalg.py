"""Dense complex factorization kernels with explicit rank/tolerance contracts."""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import (
    DegenerateInputError,
    DegeneratePencilError,
    DimensionError,
    RankDeficiencyError,
)
from .tensor_ops import as_matrix, as_tensor3, khatri_rao, matricize

__all__ = [
    "NullspaceBasis",
    "nullspace",
    "best_rank1",
    "gevd_cpd",
    "dominant_eigvec",
    "lstsq",
    "fix_phase",
]

# Adjacent singular values around the null-space cut must differ by at
# least this factor for the cut to count as unambiguous.
GAP_FACTOR = 10.0


def fix_phase(u, v=None, tol=1e-12):
    """Rotate ``u`` so its first significant entry is real nonnegative.

    If ``v`` is given it is rotated by the same phase so that products of
    the form ``u @ v.conj().T`` are preserved.
    """
    u = np.asarray(u, dtype=np.complex128)
    mags = np.abs(u)
    top = mags.max()
    if top == 0.0:
        return (u, v) if v is not None else u
    idx = np.argmax(mags > tol * top)
    phase = u[idx] / abs(u[idx])
    u = u * phase.conj()
    if v is not None:
        return u, np.asarray(v, dtype=np.complex128) * phase.conj()
    return u


@dataclass
class NullspaceBasis:
    """Orthonormal right null-space basis of a matrix.

    Attributes
    ----------
    vectors : (cols, k) ndarray
        Columns are orthonormal basis vectors of the (numerical) null space.
    tolerance_used : float
        Effective relative singular-value threshold under which the basis
        vectors fall; each vector ``v`` satisfies
        ``norm(M @ v) <= tolerance_used * norm(M)``.
    singular_values : (cols,) ndarray
        Full singular spectrum of the source matrix, descending.
    sigma_gap : float
        Ratio of the smallest kept (non-null) singular value to the largest
        discarded one; ``inf`` when the null singular values are exactly zero.
    ambiguous : bool
        True when no clear gap separates the null spectrum.
    """

    vectors: np.ndarray
    tolerance_used: float
    singular_values: np.ndarray
    sigma_gap: float = np.inf
    ambiguous: bool = field(default=False)

    @property
    def dim(self):
        return self.vectors.shape[1]


def nullspace(m, expected_dim=None, rel_tol=1e-8):
    """Orthonormal basis of the right null space via singular vectors.

    Basis vectors are the right singular vectors whose singular values
    satisfy ``sigma <= rel_tol * sigma_max``.  When ``expected_dim`` is
    given, exactly that many smallest-sigma right singular vectors are
    returned regardless of the threshold, and the sigma gap around the cut
    is recorded instead of enforced.
    """
    m = as_matrix(m)
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    cols = m.shape[1]
    if expected_dim is not None and expected_dim > cols:
        raise DimensionError(
            f"expected_dim={expected_dim} exceeds column count {cols}"
        )
    _, s, vh = np.linalg.svd(m, full_matrices=True)
    s = np.concatenate([s, np.zeros(cols - s.size)])  # wide matrices
    smax = s[0] if s.size else 0.0

    if expected_dim is None:
        if smax == 0.0:
            dim = cols
        else:
            dim = int(np.sum(s <= rel_tol * smax))
    else:
        dim = int(expected_dim)

    vectors = vh[cols - dim:].conj().T if dim > 0 else np.zeros((cols, 0), complex)
    if dim == 0:
        gap = np.inf
        tol_used = rel_tol
    else:
        largest_null = s[cols - dim]
        smallest_kept = s[cols - dim - 1] if dim < cols else np.inf
        gap = np.inf if largest_null == 0.0 else smallest_kept / largest_null
        tol_used = rel_tol if smax == 0.0 else max(rel_tol, largest_null / smax)

    ambiguous = False
    if expected_dim is None and 0 < dim < cols and gap < GAP_FACTOR:
        ambiguous = True
        warnings.warn(
            f"ambiguous numerical rank: sigma gap {gap:.3g} < {GAP_FACTOR} "
            f"around the null-space cut (dim={dim})",
            RuntimeWarning,
            stacklevel=2,
        )
    return NullspaceBasis(
        vectors=vectors,
        tolerance_used=tol_used,
        singular_values=s,
        sigma_gap=gap,
        ambiguous=ambiguous,
    )


def best_rank1(m):
    """Closest rank-1 matrix ``u * sigma * v^H`` in Frobenius norm.

    Returns unit-norm ``u``, ``v`` and ``sigma = sigma_1(m)``; the first
    significant entry of ``u`` is made real nonnegative.
    """
    m = as_matrix(m)
    if not np.any(m):
        raise DegenerateInputError("best_rank1 of a zero matrix")
    u_full, s, vh = np.linalg.svd(m)
    u, v = fix_phase(u_full[:, 0], vh[0].conj())
    return u, v, float(s[0])


def dominant_eigvec(h, herm_tol=1e-10, tie_tol=1e-8):
    """Unit eigenvector of the largest eigenvalue of a Hermitian PSD matrix.

    Raises on inputs that are not Hermitian to ``herm_tol`` (relative);
    warns when the top two eigenvalues coincide to ``tie_tol`` (relative).
    """
    h = as_matrix(h)
    if h.shape[0] != h.shape[1]:
        raise DimensionError(f"matrix must be square, got {h.shape}")
    scale = np.linalg.norm(h)
    if scale > 0 and np.linalg.norm(h - h.conj().T) > herm_tol * scale:
        raise DegenerateInputError("matrix is not Hermitian within tolerance")
    w, v = np.linalg.eigh(h)
    lam = float(w[-1])
    if h.shape[0] > 1 and lam > 0 and (lam - w[-2]) <= tie_tol * abs(lam):
        warnings.warn(
            f"dominant eigenvalue nearly tied: {lam:.6g} vs {w[-2]:.6g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return fix_phase(v[:, -1]), lam


def lstsq(a, b, rel_tol=1e-12):
    """Least-squares solution of ``a @ x = b`` via SVD.

    ``a`` must have full column rank within ``rel_tol`` (relative smallest
    to largest singular value), otherwise :class:`RankDeficiencyError` is
    raised with the numerical rank attached.
    """
    a = as_matrix(a)
    b = np.asarray(b, dtype=np.complex128)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0 or s[-1] <= rel_tol * s[0]:
        rank = int(np.sum(s > rel_tol * s[0])) if s.size and s[0] > 0 else 0
        raise RankDeficiencyError(
            f"matrix of shape {a.shape} has numerical rank {rank}",
            numerical_rank=rank,
        )
    proj = u.conj().T @ b
    proj /= s[:, None] if proj.ndim > 1 else s
    return vh.conj().T @ proj


def _pencil_slices(t, rng):
    """Two random unit-norm linear combinations of all frontal slices."""
    k = t.shape[2]
    w = rng.standard_normal((2, k)) + 1j * rng.standard_normal((2, k))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    return np.tensordot(t, w[0], axes=([2], [0])), np.tensordot(t, w[1], axes=([2], [0]))


def gevd_cpd(t, r, rng=None, max_retries=5):
    """Rank-``r`` CPD of a tensor with full-column-rank factors, via GEVD.

    Works on exact (noiseless) tensors whose three factor matrices all have
    full column rank; requires ``K >= r`` and ``min(I, J) >= r``.  Uses a
    pencil of two random unit-norm combinations of all frontal slices; on a
    degenerate pencil (generalized eigenvalues closer than relative 1e-10)
    the combinations are redrawn up to ``max_retries`` times.

    Returns ``(a, b, c)`` with unit-norm columns of ``a`` and ``b`` (first
    significant entry real nonnegative) and the scale absorbed into ``c``.
    """
    t = as_tensor3(t)
    i, j, k = t.shape
    if r < 1:
        raise DimensionError(f"rank must be positive, got {r}")
    if k < r:
        raise DimensionError(f"third dimension {k} is smaller than rank {r}")
    if min(i, j) < r:
        raise DimensionError(
            f"leading dimensions {(i, j)} too small for full-column-rank rank {r}"
        )
    rng = np.random.default_rng(0) if rng is None else rng

    # Compress modes 1 and 2 onto the top-r left singular subspaces.
    m1 = t.reshape(i, j * k)
    m2 = t.transpose(1, 0, 2).reshape(j, i * k)
    u = np.linalg.svd(m1, full_matrices=False)[0][:, :r]
    v = np.linalg.svd(m2, full_matrices=False)[0][:, :r]
    core = np.einsum("pi,pqk,qj->ijk", u.conj(), t, v.conj())

    last_gap = None
    for _ in range(max_retries + 1):
        p1, p2 = _pencil_slices(core, rng)
        # A (near-)singular pencil member means the factors are rank
        # deficient (no slice combination can fix that) or the draw was
        # unlucky; either way eig would return meaningless eigenvalues.
        s2 = np.linalg.svd(p2, compute_uv=False)
        if s2[-1] <= 1e-12 * s2[0]:
            last_gap = 0.0
            continue
        try:
            lam, x = scipy.linalg.eig(p1, p2)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(lam)):
            continue
        scale = np.abs(lam).max()
        gaps = np.abs(lam[:, None] - lam[None, :])
        np.fill_diagonal(gaps, np.inf)
        last_gap = gaps.min() / scale if scale > 0 else 0.0
        if last_gap >= 1e-10:
            break
    else:
        raise DegeneratePencilError(
            f"generalized eigenvalues not pairwise distinct after "
            f"{max_retries} retries (relative gap {last_gap})",
            retries=max_retries,
        )

    # x holds (up to column scaling) the inverse transpose of the
    # compressed mode-2 factor; recover both loading directions.
    a = u @ (p2 @ x)
    b = v @ np.linalg.inv(x).T

    def _unitize(f):
        norms = np.linalg.norm(f, axis=0)
        if np.any(norms == 0):
            raise DegeneratePencilError("pencil produced a zero factor column")
        f = f / norms
        for c_idx in range(f.shape[1]):
            f[:, c_idx] = fix_phase(f[:, c_idx])
        return f

    a = _unitize(a)
    b = _unitize(b)
    c = lstsq(khatri_rao(a, b), matricize(t, 3)).T
    return a, b, c
