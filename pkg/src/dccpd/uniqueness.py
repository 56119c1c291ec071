"""Generic uniqueness certification for double coupled CPD.

The decomposition of an ``N``-channel grid with ``R`` components is
generically unique as long as the detection matrices built from the
loading columns have full column rank; since full rank is a generic
property, a single random example certifies it for a given ``(N, R)``.
The largest certified ``R`` per channel count is tabulated below for the
double coupled case and, for comparison, the single-tensor case.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .algebraic import coupled_rank1_map
from .exceptions import DimensionError

__all__ = [
    "UniquenessReport",
    "build_phi",
    "check_generic_rank",
    "generic_rmax",
    "DCCPD_RMAX_TABLE",
    "CPD_RMAX_TABLE",
]

# Largest generically identifiable component count per channel count.
DCCPD_RMAX_TABLE = {2: 2, 3: 5, 4: 10, 5: 16, 6: 23, 7: 32, 8: 42}
# Single-tensor CPD counterpart (strictly smaller from N=3 on).
CPD_RMAX_TABLE = {2: 2, 3: 4, 4: 9, 5: 14, 6: 21, 7: 30, 8: 40}

RANK_SIGMA_RATIO = 1e-9


@dataclass
class UniquenessReport:
    """Full-column-rank check of the detection matrices for one ``(N, M, R)``."""

    N: int
    M: int
    R: int
    full_rank: dict
    min_sigma_ratio: float
    trials: int

    @property
    def all_full_rank(self):
        return all(self.full_rank.values())


def build_phi(a, m, g, h):
    """Detection matrix of the pure loading columns for a triple ``(m, g, h)``.

    Columns are indexed by ordered pairs ``(t, r)``, ``t != r``, in
    row-major pair order; column ``(t, r)`` is the vectorized detection map
    of the rank-1 matrices ``a_t^(m) a_t^(g)^H`` and ``a_r^(m) a_r^(h)^H``.
    For equal channel counts the matrix has shape ``(N**4, R**2 - R)``.
    """
    if not g < h:
        raise DimensionError(f"build_phi needs g < h, got ({m},{g},{h})")
    am = np.asarray(a[m], dtype=np.complex128)
    ag = np.asarray(a[g], dtype=np.complex128)
    ah = np.asarray(a[h], dtype=np.complex128)
    r = am.shape[1]
    if ag.shape[1] != r or ah.shape[1] != r:
        raise DimensionError("loading matrices must share the column count")
    outer = np.einsum("it,pt,jr,qr->ijpqtr", am, ag.conj(), am, ah.conj())
    phi = outer - outer.transpose(1, 0, 2, 3, 4, 5)
    rows = am.shape[0] ** 2 * ag.shape[0] * ah.shape[0]
    phi = phi.reshape(rows, r * r)
    keep = [t * r + u for t in range(r) for u in range(r) if t != u]
    return phi[:, keep]


def check_generic_rank(n, m_sets, r, rng, trials=2):
    """Check full column rank of every detection matrix on random factors.

    Draws standard complex Gaussian loading matrices and tests
    ``sigma_min / sigma_max > 1e-9`` for every triple; a draw that fails
    is retried (``trials`` draws plus one guard redraw) before the failure
    is declared, since a generic property can only be spoiled by an
    unlucky conditioning of the sample.
    """
    full_rank = {}
    min_ratio = np.inf
    attempts = max(int(trials), 1) + 1
    for _ in range(attempts):
        a = {
            mm: rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
            for mm in range(m_sets)
        }
        full_rank = {}
        min_ratio = np.inf
        ok = True
        for mm in range(m_sets):
            for g in range(m_sets):
                for h in range(g + 1, m_sets):
                    phi = build_phi(a, mm, g, h)
                    s = np.linalg.svd(phi, compute_uv=False)
                    ratio = float(s[-1] / s[0]) if s.size and s[0] > 0 else 0.0
                    if phi.shape[0] < phi.shape[1]:
                        ratio = 0.0
                    min_ratio = min(min_ratio, ratio)
                    full_rank[(mm, g, h)] = ratio > RANK_SIGMA_RATIO
                    ok = ok and full_rank[(mm, g, h)]
        if ok:
            break
    return UniquenessReport(
        N=n, M=m_sets, R=r, full_rank=full_rank,
        min_sigma_ratio=float(min_ratio), trials=attempts,
    )


def generic_rmax(n, m_sets, trials=2, seed=0):
    """Largest component count with generically full-rank detection matrices.

    Ascends from ``R = 2`` (the tabulated values are strictly increasing in
    ``N``, so no gap search is needed) and stops at the first ``R`` whose
    detection matrices are rank deficient on random draws; a single passing
    draw certifies an ``R``.
    """
    if n < 2 or m_sets < 2:
        raise DimensionError("generic_rmax needs N >= 2 and M >= 2")
    if trials < 1:
        raise DimensionError("trials must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    best = 1
    r = 2
    while True:
        if r * r - r > n ** 4:
            if best == 1:
                warnings.warn(
                    f"detection matrix for N={n} cannot have full column rank "
                    f"even at R=2; returning 1",
                    RuntimeWarning,
                    stacklevel=2,
                )
            return best
        report = check_generic_rank(n, m_sets, r, rng, trials=trials)
        if not report.all_full_rank:
            return best
        best = r
        r += 1
