"""Algebraic solver for double coupled CPD grids.

The solver turns a (possibly underdetermined) conjugated-symmetric grid
into a family of small overdetermined CPDs through a coupled rank-1
detection mapping, solves those by GEVD, and reassembles the loading
matrices from dominant eigenvectors of cross-dataset Gram blocks.  On
exact data the whole pipeline is deterministic and recovers the factors
to machine precision; on noisy data it serves as an initializer for the
ALS refinement stage.
"""

import time
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ConsistencyError,
    DegeneratePencilError,
    DimensionError,
    RankDeficiencyError,
    RankMismatchError,
)
from .als import solve_als
from .linalg import best_rank1, dominant_eigvec, fix_phase, gevd_cpd, lstsq, nullspace
from .model import (
    DcCpdProblem,
    DcCpdSolution,
    SolverOptions,
    detect_rank,
    normalize_solution,
    reduce_third_mode,
    relative_cost,
    symmetrize,
)
from .tensor_ops import khatri_rao, matricize

__all__ = [
    "CoupledDetectionResult",
    "coupled_rank1_map",
    "build_gamma",
    "build_omega",
    "detect_to_w",
    "solve_coupled_overdet",
    "recover_factors",
    "solve_algebraic",
]


def coupled_rank1_map(x1, x2):
    """Coupled rank-1 detection mapping of two matrices with shared row count.

    For ``x1`` of shape ``(N, P)`` and ``x2`` of shape ``(N, Q)`` the
    mapping is the fourth-order array with entries

        ``phi[i, j, p, q] = x1[i, p] * x2[j, q] - x1[j, p] * x2[i, q]``

    returned in vectorized (row-major) form of length ``N*N*P*Q``.  It
    vanishes exactly when both arguments are rank-1 with a common column
    space, and is bilinear in its arguments.
    """
    x1 = np.asarray(x1, dtype=np.complex128)
    x2 = np.asarray(x2, dtype=np.complex128)
    if x1.ndim != 2 or x2.ndim != 2:
        raise DimensionError("coupled_rank1_map expects two matrices")
    if x1.shape[0] != x2.shape[0]:
        raise DimensionError(
            f"row counts differ: {x1.shape[0]} vs {x2.shape[0]}"
        )
    outer = np.einsum("ip,jq->ijpq", x1, x2)
    return (outer - outer.transpose(1, 0, 2, 3)).reshape(-1)


def build_gamma(t_mg, t_mh):
    """Stack detection-map vectors of all frontal slice pairs into a matrix.

    Column ``s*R + u`` holds the vectorized detection map of slice ``s``
    of ``t_mg`` against slice ``u`` of ``t_mh``; for ``N x N x R`` inputs
    the result has shape ``(N**4, R**2)``.
    """
    t_mg = np.asarray(t_mg, dtype=np.complex128)
    t_mh = np.asarray(t_mh, dtype=np.complex128)
    if t_mg.shape[2] != t_mh.shape[2]:
        raise DimensionError("third dimensions must agree")
    outer = np.einsum("ips,jqu->ijpqsu", t_mg, t_mh)
    phi = outer - outer.transpose(1, 0, 2, 3, 4, 5)
    n4 = t_mg.shape[0] * t_mh.shape[0] * t_mg.shape[1] * t_mh.shape[1]
    return phi.reshape(n4, t_mg.shape[2] * t_mh.shape[2])


def build_omega(t_mg, t_mh):
    """Hermitian Gram matrix of the detection columns, built implicitly.

    Equals ``gamma^H @ gamma`` for ``gamma = build_gamma(t_mg, t_mh)``
    without ever forming the ``N**4``-row matrix: with ``X_s``/``Y_u`` the
    frontal slices, the inner product of two detection vectors reduces to

        ``2 * <X_s, X_s'> * <Y_u, Y_u'> - 2 * tr(X_s' X_s^H Y_u' Y_u^H)``

    which needs only the slice Gram matrices and one ``O(N^2 R^4)``
    contraction.
    """
    t_mg = np.asarray(t_mg, dtype=np.complex128)
    t_mh = np.asarray(t_mh, dtype=np.complex128)
    r = t_mg.shape[2]
    if t_mh.shape[2] != r:
        raise DimensionError("third dimensions must agree")
    zg = np.einsum("ips,ipt->st", t_mg.conj(), t_mg)
    zh = np.einsum("ips,ipt->st", t_mh.conj(), t_mh)
    # pg[s, t, i, j] = (X_t X_s^H)[j, i]
    pg = np.einsum("ips,jpt->stij", t_mg.conj(), t_mg)
    ph = np.einsum("ips,jpt->stij", t_mh.conj(), t_mh)
    cross = np.einsum("stij,uvji->sutv", pg, ph)
    omega = 2.0 * np.einsum("st,uv->sutv", zg, zh) - 2.0 * cross
    omega = omega.reshape(r * r, r * r)
    return 0.5 * (omega + omega.conj().T)


@dataclass
class CoupledDetectionResult:
    """Null-space data of one detection triple ``(m, g, h)``.

    ``w_tensor`` stacks the orthonormal null-space basis vectors (each of
    length ``R**2``, reshaped ``R x R``) along the third mode; it admits an
    overdetermined rank-``R`` CPD whose first two factors are the inverse
    transposes of the (reduced) third-mode factors.
    """

    triple: tuple
    omega: np.ndarray
    w_tensor: np.ndarray
    sigma_gap: float
    singular_values: np.ndarray


def detect_to_w(p, r, m, g, h, opts=None):
    """Run coupled rank-1 detection for the triple ``(m, g, h)``.

    ``p`` must be a reduced grid with third dimension equal to ``r`` and
    ``g < h``.  On the strict (noiseless) path the number of singular
    values under ``opts.rel_tol`` must be exactly ``r``, otherwise a
    :class:`RankMismatchError` carrying the spectrum is raised; with
    ``opts.noisy`` the ``r`` smallest singular vectors are taken and the
    observed gap is only recorded.
    """
    opts = opts or SolverOptions()
    if not g < h:
        raise DimensionError(f"detection triple needs g < h, got ({m},{g},{h})")
    if p.T != r:
        raise DimensionError(
            f"detection expects a reduced grid with T == rank ({p.T} != {r})"
        )
    t_mg = p.tensors[(m, g)]
    t_mh = p.tensors[(m, h)]
    if opts.use_explicit_gamma:
        mat = build_gamma(t_mg, t_mh)
    else:
        mat = build_omega(t_mg, t_mh)
    basis = nullspace(mat, expected_dim=r, rel_tol=opts.rel_tol)
    if not opts.noisy:
        s = basis.singular_values
        smax = s[0] if s.size else 0.0
        cols = mat.shape[1]
        null_count = cols if smax == 0.0 else int(np.sum(s <= opts.rel_tol * smax))
        ok = null_count == r
        if not ok and 0 < r < cols and smax > 0.0:
            # The Gram form squares the conditioning, so the smallest kept
            # singular value may fall under the plain threshold; a clear gap
            # at the expected cut still identifies the dimension.
            largest_null = s[cols - r]
            ok = (
                largest_null <= np.sqrt(opts.rel_tol) * smax
                and basis.sigma_gap >= 10.0
            )
        if not ok:
            raise RankMismatchError(
                f"null-space dimension {null_count} != rank {r} for triple "
                f"({m},{g},{h}) with no clear spectral gap at the expected "
                "cut; wrong rank or violated uniqueness condition",
                singular_values=s,
                triple=(m, g, h),
            )
    w = basis.vectors.reshape(r, r, r)
    return CoupledDetectionResult(
        triple=(m, g, h),
        omega=mat,
        w_tensor=w,
        sigma_gap=basis.sigma_gap,
        singular_values=basis.singular_values,
    )


def solve_coupled_overdet(ws, m_sets, r, rng=None):
    """Solve the family of overdetermined CPDs born from detection.

    For each ``m`` the CPD of the anchor tensor (pair ``(0, 1)``) is
    computed by GEVD; the remaining factors follow by propagation: the
    mode-1 unfolding times the inverse transpose of the known factor is a
    Khatri-Rao product whose columns are vectorized rank-1 matrices, and a
    best rank-1 approximation extracts each new column.  All factors of a
    fixed ``m`` inherit the anchor's column permutation.

    Returns the map ``(m, n) -> B`` of ``R x R`` factors (columns
    unit-norm).
    """
    if m_sets < 2:
        raise DimensionError("coupled detection needs at least two datasets")
    rng = np.random.default_rng(0) if rng is None else rng
    bs = {}
    for m in range(m_sets):
        g0 = 1 if m == 0 else 0
        try:
            b_first, b_second, _ = gevd_cpd(ws[(m, 0, 1)].w_tensor, r, rng=rng)
        except DegeneratePencilError as exc:
            raise DegeneratePencilError(
                f"degenerate pencil at triple ({m},0,1): {exc}",
                retries=exc.retries,
            ) from exc
        bs[(m, 0)] = b_first
        bs[(m, 1)] = b_second
        b_known_inv_t = np.linalg.inv(bs[(m, g0)]).T
        for h in range(2, m_sets):
            kr = matricize(ws[(m, g0, h)].w_tensor, 1) @ b_known_inv_t
            cols = np.empty((r, r), dtype=np.complex128)
            for col in range(r):
                u, _, _ = best_rank1(kr[:, col].reshape(r, r))
                cols[:, col] = u
            bs[(m, h)] = cols
    return bs


def _greedy_match(score):
    """Greedy max-score assignment; ties resolve to the smallest indices."""
    n = score.shape[0]
    score = score.copy()
    perm = np.full(n, -1, dtype=int)
    for _ in range(n):
        flat = int(np.argmax(score))
        row, col = divmod(flat, n)
        perm[row] = col
        score[row, :] = -np.inf
        score[:, col] = -np.inf
    return perm


def _align_cross_dataset_perms(k_blocks, bs, m_sets, r, dims):
    """Reconcile the per-dataset column permutations against dataset 0.

    Candidate rank-1 blocks ``unvec(K[(0, m)][:, r])`` and
    ``unvec(K[(m, 0)][:, r'])`` describe the same source pair exactly when
    the column indices refer to the same component, in which case their
    normalized trace correlation is 1; greedy matching on that score gives
    the permutation for dataset ``m``.
    """
    for m in range(1, m_sets):
        score = np.zeros((r, r))
        anchor = [
            k_blocks[(0, m)][:, i].reshape(dims[0], dims[m]) for i in range(r)
        ]
        other = [
            k_blocks[(m, 0)][:, i].reshape(dims[m], dims[0]) for i in range(r)
        ]
        a_norms = [np.linalg.norm(b) for b in anchor]
        o_norms = [np.linalg.norm(b) for b in other]
        for i in range(r):
            for j in range(r):
                denom = a_norms[i] * o_norms[j]
                if denom == 0:
                    continue
                score[i, j] = abs(np.sum(anchor[i] * other[j].T)) / denom
        perm = _greedy_match(score)
        for n in range(m_sets):
            bs[(m, n)] = bs[(m, n)][:, perm]
            k_blocks[(m, n)] = k_blocks[(m, n)][:, perm]


def recover_factors(reduced, maps, bs, target, opts=None):
    """Recover the loading matrices from the detection-stage factors.

    Per grid cell, the mode-3 unfolding of the reduced tensor times the
    detection factor has vectorized rank-1 columns pairing the loading
    columns of datasets ``m`` and ``n``.  After reconciling the column
    permutations across datasets (anchored on dataset 0) and
    synchronizing per-block scales/phases against the diagonal blocks,
    those columns assemble into a Hermitian matrix per component whose
    dominant eigenvector stacks the component's loading columns over all
    datasets.  Third-mode factors of the returned solution are refit to
    ``target`` by least squares, which also absorbs the trivial scalings.

    Returns ``(solution, info)`` where ``info`` carries the reduced-space
    third-mode factor estimates (lifted through the compression maps) and
    per-component eigenvalue ratios.
    """
    opts = opts or SolverOptions()
    m_sets = reduced.M
    dims = reduced.dims_n
    r = next(iter(bs.values())).shape[1]
    k_blocks = {
        key: matricize(reduced.tensors[key], 3) @ bs[key] for key in reduced.pairs()
    }
    _align_cross_dataset_perms(k_blocks, bs, m_sets, r, dims)

    offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    n_total = int(offsets[-1])
    a_est = {m: np.empty((dims[m], r), dtype=np.complex128) for m in range(m_sets)}
    eig_ratios = []
    for comp in range(r):
        units = []
        rhos = []
        herm_blocks = []
        for m in range(m_sets):
            d = k_blocks[(m, m)][:, comp].reshape(dims[m], dims[m])
            tr = np.trace(d)
            if abs(tr) > 0:
                d = d * (tr.conj() / abs(tr))
            herm = 0.5 * (d + d.conj().T)
            u, lam = dominant_eigvec(herm)
            units.append(u)
            rhos.append(np.sqrt(max(lam, 0.0)))
            herm_blocks.append(herm)
        g = np.zeros((n_total, n_total), dtype=np.complex128)
        for m in range(m_sets):
            sl_m = slice(offsets[m], offsets[m + 1])
            g[sl_m, sl_m] = herm_blocks[m]
            for n in range(m + 1, m_sets):
                sl_n = slice(offsets[n], offsets[n + 1])
                block = k_blocks[(m, n)][:, comp].reshape(dims[m], dims[n])
                norm = np.linalg.norm(block)
                if norm > 0:
                    z = units[m].conj() @ block @ units[n]
                    phase = z.conj() / abs(z) if abs(z) > 0 else 1.0
                    block = block * (rhos[m] * rhos[n] / norm) * phase
                g[sl_m, sl_n] = block
                g[sl_n, sl_m] = block.conj().T
        vec_est, lam = dominant_eigvec(g)
        spectrum = np.linalg.eigvalsh(g)
        ratio = (
            float(np.max(np.abs(spectrum[:-1])) / spectrum[-1])
            if g.shape[0] > 1 and spectrum[-1] > 0
            else 0.0
        )
        eig_ratios.append(ratio)
        if not opts.noisy and ratio > 0.1:
            raise ConsistencyError(
                f"component {comp}: assembled cross-dataset matrix is not "
                f"numerically rank-1 (eigenvalue ratio {ratio:.3g})"
            )
        stacked = vec_est * np.sqrt(max(lam, 0.0))
        for m in range(m_sets):
            a_est[m][:, comp] = stacked[offsets[m]:offsets[m + 1]]

    c_tilde = {
        key: maps[key].conj() @ np.linalg.inv(bs[key]).T for key in reduced.pairs()
    }
    sol = _finalize_solution(a_est, r, target)
    info = {"eig_ratios": eig_ratios, "c_tilde": c_tilde, "b_factors": bs}
    return sol, info


def _finalize_solution(a_est, r, target):
    """Unit-normalize the loading columns and refit third-mode factors by LS."""
    a_norm = {}
    for m, a in a_est.items():
        a = np.array(a, dtype=np.complex128)
        norms = np.linalg.norm(a, axis=0)
        norms[norms == 0] = 1.0
        a /= norms
        for col in range(r):
            a[:, col] = fix_phase(a[:, col])
        a_norm[m] = a
    c_fit = {}
    for m, n in target.pairs():
        kr = khatri_rao(a_norm[m], a_norm[n].conj())
        try:
            ct = lstsq(kr, matricize(target.tensors[(m, n)], 3))
        except RankDeficiencyError as exc:
            raise RankDeficiencyError(
                f"loading Khatri-Rao product for cell ({m},{n}) is rank "
                f"deficient; recovered factors are not identifiable: {exc}",
                numerical_rank=exc.numerical_rank,
            ) from exc
        c = ct.T
        if target.symmetric and m == n:
            c = c.real.astype(np.complex128)
        c_fit[(m, n)] = c
    return DcCpdSolution(R=r, A=a_norm, C=c_fit)


def _solve_overdetermined(reduced, r, rng):
    """Direct GEVD path for grids whose loading matrices have full column rank.

    The anchor cell ``(0, 1)`` (or ``(0, 0)`` for a single dataset) is
    decomposed by GEVD; every other loading matrix follows from rank-1
    approximations of the unvectorized columns of
    ``T1[(0, n)] @ pinv(A0^T)``, which keeps one common column permutation.
    """
    m_sets = reduced.M
    anchor = (0, 1) if m_sets >= 2 else (0, 0)
    a0, _, _ = gevd_cpd(reduced.tensors[anchor], r, rng=rng)
    a_est = {0: a0}
    if m_sets == 1:
        return a_est
    pinv_a0t = np.linalg.pinv(a0.T)
    for n in range(1, m_sets):
        kr = matricize(reduced.tensors[(0, n)], 1) @ pinv_a0t
        cols = np.empty((reduced.dims_n[n], r), dtype=np.complex128)
        for col in range(r):
            u, _, _ = best_rank1(kr[:, col].reshape(reduced.dims_n[n], r))
            cols[:, col] = u.conj()
        a_est[n] = cols
    return a_est


def solve_algebraic(p, opts=None):
    """Algebraic DC-CPD of a full grid.

    Pipeline: symmetrize if the grid is not conjugated-symmetric, detect
    the rank unless given, compress the third mode to the rank, then
    either the direct GEVD path (all loading matrices full column rank)
    or the coupled rank-1 detection path, and finally reassemble the
    loading matrices.  Third-mode factors are refit against the input
    grid, so on exact data the relative residual is at machine precision.

    Returns ``(solution, report)``; the report records the path taken,
    rank, detection gaps and the final relative cost.
    """
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence(opts.seed))
    work = p if p.symmetric else symmetrize(p)
    r = opts.rank if opts.rank is not None else detect_rank(work, opts.rel_tol)
    if r < 1:
        raise RankMismatchError(f"detected rank {r}; nothing to decompose")
    reduced, maps = reduce_third_mode(work, r)
    report = {
        "rank": r,
        "symmetrized": not p.symmetric,
        "path": None,
        "sigma_gaps": {},
        "eig_ratios": None,
    }

    sol = None
    if r <= min(p.dims_n):
        try:
            a_est = _solve_overdetermined(reduced, r, rng)
            sol = _finalize_solution(a_est, r, p)
            report["path"] = "gevd"
        except (DegeneratePencilError, RankDeficiencyError):
            sol = None
    if sol is None:
        if p.M < 2:
            raise DimensionError(
                "underdetermined single-dataset grids are not solvable by "
                "coupled detection (need M >= 2)"
            )
        ws = {}
        for m in range(p.M):
            for g in range(p.M):
                for h in range(g + 1, p.M):
                    ws[(m, g, h)] = detect_to_w(reduced, r, m, g, h, opts)
                    report["sigma_gaps"][(m, g, h)] = ws[(m, g, h)].sigma_gap
        bs = solve_coupled_overdet(ws, p.M, r, rng=rng)
        sol, info = recover_factors(reduced, maps, bs, p, opts)
        report["path"] = "detection"
        report["eig_ratios"] = info["eig_ratios"]

    if opts.refine:
        work_sol = sol if work is p else _finalize_solution(sol.A, r, work)
        refined, trace = solve_als(work, work_sol, opts)
        sol = _finalize_solution(refined.A, r, p)
        report["als_iterations"] = trace.iterations
        report["als_stop_reason"] = trace.stop_reason
        report["als_final_cost"] = trace.costs[-1]

    sol = normalize_solution(sol, symmetric=p.symmetric)
    report["relative_cost"] = relative_cost(p, sol)
    report["wall_s"] = time.perf_counter() - t0
    return sol, report
