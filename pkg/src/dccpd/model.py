"""Double coupled CPD data model: tensor grids, solutions, and grid-level ops.

A problem is an ``M x M`` grid of third-order tensors ``t[(m, n)]`` of size
``N_m x N_n x T``; a solution holds loading matrices ``A[m]`` (``N_m x R``)
and third-mode factors ``C[(m, n)]`` (``T x R``) such that each grid tensor
is approximated by ``sum_r A[m][:, r] o conj(A[n][:, r]) o C[(m, n)][:, r]``.
Indices ``m, n`` are 0-based throughout the package.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError
from .tensor_ops import (
    as_tensor3,
    concat3,
    cpd_reconstruct,
    khatri_rao,
    matricize,
    perm213,
    tensorize,
)

__all__ = [
    "DcCpdProblem",
    "DcCpdSolution",
    "SolverOptions",
    "reconstruct",
    "cost_eta",
    "relative_cost",
    "symmetrize",
    "reduce_third_mode",
    "detect_rank",
    "normalize_solution",
    "random_problem",
]

SYMMETRY_RTOL = 1e-12


def _freeze(arr):
    arr = np.ascontiguousarray(arr, dtype=np.complex128)
    arr.setflags(write=False)
    return arr


@dataclass
class DcCpdProblem:
    """An ``M x M`` grid of coupled third-order tensors.

    Attributes
    ----------
    M : int
        Number of datasets.
    dims_n : tuple of int
        Leading dimension ``N_m`` per dataset.
    T : int
        Shared third dimension of every grid tensor.
    tensors : dict
        Maps ``(m, n)`` to an ``(N_m, N_n, T)`` complex tensor.
    symmetric : bool
        Whether the grid satisfies the conjugated symmetry
        ``t[(m, n)] == perm213(conj(t[(n, m)]))``.
    """

    M: int
    dims_n: tuple
    T: int
    tensors: dict
    symmetric: bool = False

    def __post_init__(self):
        self.dims_n = tuple(int(n) for n in self.dims_n)
        if len(self.dims_n) != self.M:
            raise DimensionError(
                f"dims_n has {len(self.dims_n)} entries for M={self.M}"
            )
        tensors = {}
        for m in range(self.M):
            for n in range(self.M):
                key = (m, n)
                if key not in self.tensors:
                    raise DimensionError(f"missing grid tensor {key}")
                t = as_tensor3(self.tensors[key])
                want = (self.dims_n[m], self.dims_n[n], self.T)
                if t.shape != want:
                    raise DimensionError(
                        f"tensor {key} has shape {t.shape}, expected {want}"
                    )
                tensors[key] = _freeze(t)
        self.tensors = tensors
        if self.symmetric:
            self._check_symmetry()

    def _check_symmetry(self):
        for m in range(self.M):
            for n in range(self.M):
                a = self.tensors[(m, n)]
                b = perm213(self.tensors[(n, m)].conj())
                scale = max(np.linalg.norm(a), 1e-300)
                if np.linalg.norm(a - b) > SYMMETRY_RTOL * scale:
                    raise DimensionError(
                        f"grid marked symmetric but tensors ({m},{n})/({n},{m}) "
                        "violate the conjugated symmetry"
                    )

    def norm_sq(self):
        """Sum of squared Frobenius norms over the whole grid."""
        return float(sum(np.linalg.norm(t) ** 2 for t in self.tensors.values()))

    def pairs(self):
        """All ordered grid indices ``(m, n)``."""
        return [(m, n) for m in range(self.M) for n in range(self.M)]


@dataclass
class DcCpdSolution:
    """Loading matrices ``A[m]`` and third-mode factors ``C[(m, n)]``."""

    R: int
    A: dict
    C: dict

    def __post_init__(self):
        self.A = {m: np.ascontiguousarray(a, dtype=np.complex128) for m, a in self.A.items()}
        self.C = {k: np.ascontiguousarray(c, dtype=np.complex128) for k, c in self.C.items()}
        for m, a in self.A.items():
            if a.ndim != 2 or a.shape[1] != self.R:
                raise DimensionError(f"A[{m}] must have {self.R} columns")
        for key, c in self.C.items():
            if c.ndim != 2 or c.shape[1] != self.R:
                raise DimensionError(f"C[{key}] must have {self.R} columns")

    @property
    def M(self):
        return len(self.A)

    def copy(self):
        return DcCpdSolution(
            R=self.R,
            A={m: a.copy() for m, a in self.A.items()},
            C={k: c.copy() for k, c in self.C.items()},
        )


@dataclass
class SolverOptions:
    """Knobs shared by the solvers.

    ``rank=None`` requests rank auto-detection.  ``noisy=True`` relaxes the
    strict noiseless diagnostics (null-space dimension check, rank-1
    consistency of the assembly stage) and forces the expected null-space
    dimension instead of trusting singular-value gaps.
    """

    rank: int = None
    rel_tol: float = 1e-8
    max_iter: int = 500
    seed: int = 0
    refine: bool = False
    noisy: bool = False
    use_explicit_gamma: bool = False

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")


def reconstruct(sol, m, n):
    """Dense tensor of the ``(m, n)`` grid cell implied by a solution."""
    return cpd_reconstruct(sol.A[m], sol.A[n].conj(), sol.C[(m, n)])


def cost_eta(p, sol):
    """Overall squared approximation error over the grid (the LS objective)."""
    total = 0.0
    for m, n in p.pairs():
        total += float(np.linalg.norm(p.tensors[(m, n)] - reconstruct(sol, m, n)) ** 2)
    return total


def relative_cost(p, sol):
    """``cost_eta`` normalized by the squared grid norm."""
    denom = p.norm_sq()
    return cost_eta(p, sol) / denom if denom > 0 else 0.0


def symmetrize(p):
    """Create a conjugated-symmetric grid by third-mode concatenation.

    Each output tensor has third dimension ``2T``: off-diagonal cells
    concatenate the tensor with the transposed conjugate of its mirror
    cell, and diagonal cells concatenate their Hermitian and
    anti-Hermitian parts, which keeps the grid's loading matrices intact
    while stacking the third-mode factors.
    """
    out = {}
    for m in range(p.M):
        for n in range(p.M):
            t_mn = p.tensors[(m, n)]
            t_nm_star = perm213(p.tensors[(n, m)].conj())
            if m < n:
                out[(m, n)] = concat3(t_mn, t_nm_star)
            elif m > n:
                out[(m, n)] = concat3(t_nm_star, t_mn)
            else:
                herm = 0.5 * (t_mn + t_nm_star)
                anti = -0.5j * (t_mn - t_nm_star)
                out[(m, n)] = concat3(herm, anti)
    return DcCpdProblem(
        M=p.M, dims_n=p.dims_n, T=2 * p.T, tensors=out, symmetric=True
    )


def reduce_third_mode(p, r):
    """Compress every grid tensor to third dimension ``r``.

    Per cell, ``U`` holds the top-``r`` right singular vectors of the
    mode-3 matricization; the reduced tensor is ``Ten(T3 @ U)`` and the
    compression map is retained so third-mode factors of the reduced
    problem lift back via ``C = conj(U) @ C_reduced``.

    Returns
    -------
    (DcCpdProblem, dict)
        The reduced grid (marked non-symmetric: the per-cell bases do not
        preserve the conjugated symmetry) and the map ``(m, n) -> U``.
    """
    if r > p.T:
        raise DimensionError(f"cannot reduce third dimension {p.T} to {r}")
    reduced = {}
    maps = {}
    for key in p.pairs():
        t3 = matricize(p.tensors[key], 3)
        _, _, vh = np.linalg.svd(t3, full_matrices=False)
        u = vh[:r].conj().T
        maps[key] = u
        i, j, _ = p.tensors[key].shape
        reduced[key] = tensorize(t3 @ u, (i, j, r))
    return (
        DcCpdProblem(M=p.M, dims_n=p.dims_n, T=r, tensors=reduced, symmetric=False),
        maps,
    )


def detect_rank(p, rel_tol=1e-8):
    """Estimate the shared rank from mode-3 singular spectra.

    Counts singular values above ``rel_tol * sigma_max`` per grid tensor
    and returns the median count; disagreement across the grid raises an
    ambiguity warning listing the per-tensor counts.
    """
    counts = []
    for key in p.pairs():
        s = np.linalg.svd(matricize(p.tensors[key], 3), compute_uv=False)
        if s.size == 0 or s[0] == 0.0:
            counts.append(0)
        else:
            counts.append(int(np.sum(s > rel_tol * s[0])))
    if len(set(counts)) > 1:
        warnings.warn(
            f"rank detection disagrees across the grid: counts {counts}",
            RuntimeWarning,
            stacklevel=2,
        )
    return int(round(float(np.median(counts))))


def _phase_of_first_entry(v, tol=1e-12):
    mags = np.abs(v)
    top = mags.max()
    if top == 0.0:
        return 1.0 + 0.0j
    idx = np.argmax(mags > tol * top)
    return v[idx] / abs(v[idx])


def normalize_solution(sol, symmetric=False):
    """Apply the column normalization convention.

    Every loading column is scaled to unit norm with its first significant
    entry real nonnegative; the compensating scale goes into the
    third-mode factors.  For symmetric problems the diagonal factors
    ``C[(m, m)]`` come out real; any residual imaginary part (roundoff) is
    dropped.
    """
    a_new = {}
    scales = {}
    phases = {}
    for m, a in sol.A.items():
        a = a.copy()
        norms = np.linalg.norm(a, axis=0)
        norms[norms == 0] = 1.0
        ph = np.array([_phase_of_first_entry(a[:, r]) for r in range(sol.R)])
        a = a / (norms * ph)
        a_new[m] = a
        scales[m] = norms
        phases[m] = ph
    c_new = {}
    for (m, n), c in sol.C.items():
        factor = scales[m] * scales[n] * phases[m] * phases[n].conj()
        c = c * factor
        if symmetric and m == n:
            c = c.real.astype(np.complex128)
        c_new[(m, n)] = c
    return DcCpdSolution(R=sol.R, A=a_new, C=c_new)


def random_problem(n, r, m_sets, t=None, symmetric=True, rng=None, dims_n=None):
    """Draw an exact DC-CPD instance from standard complex Gaussian factors.

    ``symmetric=True`` ties the grid through the conjugated symmetry
    (``C[(n, m)] = conj(C[(m, n)])`` with real diagonal factors);
    otherwise every third-mode factor is drawn independently.

    Returns
    -------
    (DcCpdProblem, DcCpdSolution)
        The problem together with the generating factors.
    """
    rng = np.random.default_rng() if rng is None else rng
    t = r if t is None else t
    dims = tuple(dims_n) if dims_n is not None else (n,) * m_sets

    def crandn(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    a = {m: crandn(dims[m], r) for m in range(m_sets)}
    c = {}
    for m in range(m_sets):
        for nn in range(m, m_sets):
            if symmetric and nn == m:
                c[(m, m)] = rng.standard_normal((t, r)).astype(np.complex128)
            else:
                c[(m, nn)] = crandn(t, r)
                if symmetric:
                    c[(nn, m)] = c[(m, nn)].conj()
    if not symmetric:
        for m in range(m_sets):
            for nn in range(m):
                c[(m, nn)] = crandn(t, r)

    tensors = {
        (m, nn): cpd_reconstruct(a[m], a[nn].conj(), c[(m, nn)])
        for m in range(m_sets)
        for nn in range(m_sets)
    }
    problem = DcCpdProblem(
        M=m_sets, dims_n=dims, T=t, tensors=tensors, symmetric=symmetric
    )
    return problem, DcCpdSolution(R=r, A=a, C=c)
