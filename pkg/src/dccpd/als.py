"""Alternating least squares refinement for conjugated-symmetric grids.

Each sweep updates every loading matrix by one stacked linear LS solve
(the conjugated mode-2 unfoldings of the column cells coincide with the
mode-1 unfoldings of the row cells on a symmetric grid, and the diagonal
cell enters with weight two), then refits every third-mode factor.  The
cost is non-increasing across conditional updates; an exact solution is a
fixed point.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractViolationError, DimensionError, RankDeficiencyError
from .linalg import lstsq
from .model import (
    DcCpdSolution,
    SolverOptions,
    cost_eta,
    normalize_solution,
    reconstruct,
)
from .tensor_ops import khatri_rao, matricize

__all__ = [
    "AlsTrace",
    "update_A",
    "update_C",
    "solve_als",
    "random_solution",
    "solve_als_multistart",
]


@dataclass
class AlsTrace:
    """Cost trace of an ALS run.

    ``costs[k]`` is the LS objective after sweep ``k`` (``costs[0]`` is
    the cost of the initializer); ``update_costs`` additionally records
    the objective after every conditional update when tracking was
    requested.
    """

    costs: list
    iterations: int
    converged: bool
    stop_reason: str
    update_costs: list = field(default=None)


def _require_symmetric(p):
    if not p.symmetric:
        raise DimensionError(
            "ALS updates assume a conjugated-symmetric grid; run symmetrize() first"
        )


def update_A(p, sol, m):
    """Conditionally optimal update of the ``m``-th loading matrix.

    Solves the stacked LS system whose blocks are, per dataset ``n``: the
    conjugated mode-2 unfolding of cell ``(n, m)`` for ``n < m``, the
    doubled diagonal block of cell ``(m, m)``, and the mode-1 unfolding of
    cell ``(m, n)`` for ``n > m``, each against the Khatri-Rao product of
    the accompanying (fixed) factors.
    """
    _require_symmetric(p)
    data_blocks = []
    coeff_blocks = []
    for n in range(p.M):
        if n < m:
            data_blocks.append(matricize(p.tensors[(n, m)], 2).conj())
            coeff_blocks.append(khatri_rao(sol.A[n].conj(), sol.C[(n, m)].conj()))
        elif n == m:
            data_blocks.append(2.0 * matricize(p.tensors[(m, m)], 2).conj())
            coeff_blocks.append(
                2.0 * khatri_rao(sol.A[m].conj(), sol.C[(m, m)].conj())
            )
        else:
            data_blocks.append(matricize(p.tensors[(m, n)], 1))
            coeff_blocks.append(khatri_rao(sol.A[n].conj(), sol.C[(m, n)]))
    try:
        at = lstsq(np.vstack(coeff_blocks), np.vstack(data_blocks))
    except RankDeficiencyError as exc:
        raise RankDeficiencyError(
            f"stacked coefficient matrix for loading update {m} is rank "
            "deficient; the coupled factors violate the full-column-rank "
            f"condition required for a unique update: {exc}",
            numerical_rank=exc.numerical_rank,
        ) from exc
    return at.T


def update_C(p, sol, m, n):
    """Conditionally optimal update of the third-mode factor of cell ``(m, n)``.

    Solves ``min || T3 - (A[m] kr conj(A[n])) C^T ||``; diagonal factors of
    a symmetric grid are real, so their residual imaginary part (roundoff)
    is dropped.
    """
    _require_symmetric(p)
    kr = khatri_rao(sol.A[m], sol.A[n].conj())
    try:
        ct = lstsq(kr, matricize(p.tensors[(m, n)], 3))
    except RankDeficiencyError as exc:
        raise RankDeficiencyError(
            f"Khatri-Rao product for cell ({m},{n}) is rank deficient; the "
            "loading matrices violate the full-column-rank condition "
            f"required for a unique update: {exc}",
            numerical_rank=exc.numerical_rank,
        ) from exc
    c = ct.T
    if m == n:
        c = c.real.astype(np.complex128)
    return c


def solve_als(p, init, opts=None, track_updates=False):
    """Alternate loading and third-mode updates until the cost stalls.

    Sweeps update every loading matrix, then every third-mode factor;
    iteration stops when the relative cost change drops to ``opts.rel_tol``
    or after ``opts.max_iter`` sweeps.  A cost increase beyond
    ``1e-12 * initial`` violates the monotonicity contract and raises.

    Returns ``(solution, trace)`` with the solution normalized to unit
    loading columns.
    """
    _require_symmetric(p)
    opts = opts or SolverOptions()
    sol = init.copy()

    def _cell(key):
        return float(
            np.linalg.norm(p.tensors[key] - reconstruct(sol, key[0], key[1])) ** 2
        )

    # Residuals are tracked per cell: an update touches only its own row
    # and column, so the cost after each conditional update is cheap.
    # ``running`` always equals the sum of the residual map (also while a
    # rejected candidate is temporarily applied); ``cost`` is the last
    # accepted value.
    residuals = {key: _cell(key) for key in p.pairs()}
    running = sum(residuals.values())
    cost = running
    costs = [cost]
    update_costs = [cost] if track_updates else None
    # Monotonicity tolerance: 1e-12 of the initial cost, floored at the
    # roundoff level of a squared-residual evaluation on this data.
    guard = 1e-12 * cost + 1e-25 * p.norm_sq()

    def _bump(new_cost, stage):
        nonlocal cost
        if new_cost > cost + guard:
            raise ContractViolationError(
                f"cost increased at {stage}: {cost:.6e} -> {new_cost:.6e}"
            )
        cost = new_cost
        if track_updates:
            update_costs.append(new_cost)

    def _refresh(keys):
        nonlocal running
        for key in keys:
            fresh = _cell(key)
            running += fresh - residuals[key]
            residuals[key] = fresh
        return running

    def _apply_loading(m, value):
        """Set A[m], refresh the affected cells, return the new total."""
        sol.A[m] = value
        return _refresh(
            {(m, n) for n in range(p.M)} | {(n, m) for n in range(p.M)}
        )

    converged = False
    stop_reason = "max_iter"
    iterations = 0
    for _ in range(opts.max_iter):
        iterations += 1
        for m in range(p.M):
            # The diagonal cell's conjugated occurrence is linearized in
            # the stacked solve, so the step is safeguarded: backtrack on
            # the rare near-convergence cost increase, never accept one.
            old = sol.A[m]
            candidate = update_A(p, sol, m)
            new_cost = _apply_loading(m, candidate)
            if new_cost > cost + guard:
                for step in (0.5, 0.25, 0.125):
                    new_cost = _apply_loading(m, old + step * (candidate - old))
                    if new_cost <= cost + guard:
                        break
                else:
                    new_cost = _apply_loading(m, old)
            _bump(new_cost, f"A[{m}]")
        for m in range(p.M):
            for n in range(p.M):
                sol.C[(m, n)] = update_C(p, sol, m, n)
                _bump(_refresh([(m, n)]), f"C[({m},{n})]")
        prev = costs[-1]
        running = sum(residuals.values())  # resync incremental drift
        cost = running
        cur = cost
        costs.append(cur)
        if prev == 0.0 or abs(cur - prev) / prev <= opts.rel_tol:
            converged = True
            stop_reason = "tol"
            break
    sol = normalize_solution(sol, symmetric=True)
    return sol, AlsTrace(
        costs=costs,
        iterations=iterations,
        converged=converged,
        stop_reason=stop_reason,
        update_costs=update_costs,
    )


def random_solution(p, r, rng=None):
    """Random complex Gaussian initializer respecting the symmetry ties."""
    rng = np.random.default_rng() if rng is None else rng

    def crandn(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    a = {m: crandn(p.dims_n[m], r) for m in range(p.M)}
    c = {}
    for m in range(p.M):
        c[(m, m)] = rng.standard_normal((p.T, r)).astype(np.complex128)
        for n in range(m + 1, p.M):
            c[(m, n)] = crandn(p.T, r)
            c[(n, m)] = c[(m, n)].conj()
    return DcCpdSolution(R=r, A=a, C=c)


def solve_als_multistart(p, r, opts=None, draws=10, pilot_sweeps=10, rng=None):
    """Multistart ALS: pick the best of several short pilot runs, then run long.

    Draws ``draws`` random initializers, sweeps each ``pilot_sweeps``
    times, keeps the one with the best fit and continues it to the full
    iteration budget.
    """
    opts = opts or SolverOptions()
    rng = np.random.default_rng(np.random.SeedSequence(opts.seed)) if rng is None else rng
    pilot_opts = SolverOptions(
        rank=r,
        rel_tol=opts.rel_tol,
        max_iter=pilot_sweeps,
        seed=opts.seed,
        noisy=opts.noisy,
    )
    best = None
    best_cost = np.inf
    for _ in range(draws):
        init = random_solution(p, r, rng)
        try:
            cand, trace = solve_als(p, init, pilot_opts)
        except RankDeficiencyError:
            continue
        if trace.costs[-1] < best_cost:
            best_cost = trace.costs[-1]
            best = cand
    if best is None:
        raise RankDeficiencyError("all multistart draws were rank deficient")
    return solve_als(p, best, opts)
