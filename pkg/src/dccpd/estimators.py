"""Scikit-learn style estimators wrapping the functional core.

``CovarianceTensorizer`` (a transformer) turns multi-set signals into the
coupled tensor grid, and ``DcCpd`` (an estimator) fits the grid's factor
matrices, so the two compose in a standard ``Pipeline``::

    Pipeline([("cov", CovarianceTensorizer(frame_len=50)),
              ("dccpd", DcCpd(rank=3, solver="algebraic+als"))])
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .algebraic import solve_algebraic
from .als import solve_als_multistart
from .exceptions import DimensionError
from .jbss import FrameSpec, MultiSetSignals, covariance_tensorize
from .model import DcCpdProblem, SolverOptions, relative_cost, symmetrize

__all__ = ["DcCpd", "CovarianceTensorizer", "as_problem", "as_signals"]


def as_problem(x):
    """Coerce estimator input into a grid.

    Accepts a :class:`DcCpdProblem`, a dict mapping ``(m, n)`` to arrays,
    or a 5-D array of shape ``(M, M, N, N, T)``.
    """
    if isinstance(x, DcCpdProblem):
        return x
    if isinstance(x, dict):
        keys = list(x)
        m_sets = max(k[0] for k in keys) + 1
        dims = tuple(np.asarray(x[(m, m)]).shape[0] for m in range(m_sets))
        t = np.asarray(x[(0, 0)]).shape[2]
        return DcCpdProblem(M=m_sets, dims_n=dims, T=t, tensors=dict(x))
    arr = np.asarray(x)
    if arr.ndim == 5 and arr.shape[0] == arr.shape[1] and arr.shape[2] == arr.shape[3]:
        m_sets = arr.shape[0]
        tensors = {(m, n): arr[m, n] for m in range(m_sets) for n in range(m_sets)}
        return DcCpdProblem(
            M=m_sets,
            dims_n=(arr.shape[2],) * m_sets,
            T=arr.shape[4],
            tensors=tensors,
        )
    raise DimensionError(
        "expected a DcCpdProblem, a {(m, n): tensor} dict, or an (M, M, N, N, T) array"
    )


def as_signals(x):
    """Coerce transformer input into multi-set signals.

    Accepts :class:`MultiSetSignals`, a list of ``(N_m, Q)`` arrays, or a
    single ``(M, N, Q)`` array.
    """
    if isinstance(x, MultiSetSignals):
        return x
    if isinstance(x, (list, tuple)):
        mats = [np.asarray(arr) for arr in x]
        if not mats or any(m.ndim != 2 for m in mats):
            raise DimensionError("expected a list of (N_m, Q) arrays")
        q = mats[0].shape[1]
        return MultiSetSignals(M=len(mats), X=dict(enumerate(mats)), Q=q)
    arr = np.asarray(x)
    if arr.ndim == 3:
        return MultiSetSignals(
            M=arr.shape[0], X={m: arr[m] for m in range(arr.shape[0])}, Q=arr.shape[2]
        )
    raise DimensionError(
        "expected MultiSetSignals, a list of (N_m, Q) arrays, or an (M, N, Q) array"
    )


class CovarianceTensorizer(BaseEstimator, TransformerMixin):
    """Framewise covariance tensorization of multi-set signals.

    Parameters
    ----------
    frame_len : int
        Samples per frame.
    overlap : float
        Overlap ratio in ``[0, 1)``.
    n_frames : int or None
        Frame count; by default as many frames as fit the sample axis.
    """

    def __init__(self, frame_len=50, overlap=0.5, n_frames=None):
        self.frame_len = frame_len
        self.overlap = overlap
        self.n_frames = n_frames

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        sig = as_signals(X)
        if self.n_frames is None:
            hop = self.frame_len * (1.0 - self.overlap)
            t = int((sig.Q - self.frame_len) // hop) + 1 if hop > 0 else 1
        else:
            t = self.n_frames
        spec = FrameSpec(L=self.frame_len, alpha=self.overlap, T=t)
        return covariance_tensorize(sig, spec)


class DcCpd(BaseEstimator):
    """Double coupled CPD estimator.

    Parameters
    ----------
    rank : int or None
        Number of components; detected from the grid when ``None``.
    solver : {"algebraic", "algebraic+als", "als"}
        Algebraic pipeline, algebraic with ALS refinement, or multistart
        ALS from random initializers.
    rel_tol : float
        Rank-detection threshold and ALS stopping tolerance.
    max_iter : int
        ALS sweep budget.
    seed : int
        Seed for the internal randomized steps (pencil mixing, multistart).
    noisy : bool
        Relax the strict noiseless diagnostics (set for sample-covariance
        grids).

    Attributes
    ----------
    mixing_matrices_ : dict
        ``m -> (N_m, rank_)`` loading estimates (unit-norm columns).
    couplings_ : dict
        ``(m, n) -> (T, rank_)`` third-mode factor estimates.
    rank_ : int
        Fitted component count.
    relative_cost_ : float
        Relative squared residual of the fit.
    report_ : dict
        Solver diagnostics (path taken, gaps, iteration counts).
    """

    def __init__(self, rank=None, solver="algebraic", rel_tol=1e-8,
                 max_iter=500, seed=0, noisy=False):
        self.rank = rank
        self.solver = solver
        self.rel_tol = rel_tol
        self.max_iter = max_iter
        self.seed = seed
        self.noisy = noisy

    def fit(self, X, y=None):
        problem = as_problem(X)
        opts = SolverOptions(
            rank=self.rank,
            rel_tol=self.rel_tol,
            max_iter=self.max_iter,
            seed=self.seed,
            refine=self.solver == "algebraic+als",
            noisy=self.noisy,
        )
        if self.solver in ("algebraic", "algebraic+als"):
            sol, report = solve_algebraic(problem, opts)
        elif self.solver == "als":
            if self.rank is None:
                raise DimensionError("solver='als' requires an explicit rank")
            work = problem if problem.symmetric else symmetrize(problem)
            sol, trace = solve_als_multistart(work, self.rank, opts)
            report = {
                "path": "als",
                "rank": self.rank,
                "als_iterations": trace.iterations,
                "relative_cost": relative_cost(work, sol),
            }
        else:
            raise DimensionError(f"unknown solver {self.solver!r}")
        self.mixing_matrices_ = sol.A
        self.couplings_ = sol.C
        self.rank_ = sol.R
        self.relative_cost_ = report["relative_cost"]
        self.report_ = report
        self.solution_ = sol
        return self

    def score(self, X, y=None):
        """Negative relative residual of this fit on a grid (higher is better)."""
        problem = as_problem(X)
        return -relative_cost(problem, self.solution_)
