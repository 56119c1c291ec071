"""Joint BSS data path: source synthesis, covariance tensorization, metrics.

The multi-set model is ``x_m(t) = A_m s_m(t)`` where the sources are
independent within a dataset and dependent across datasets.  Framewise
cross-covariances of the observations then stack into a conjugated
symmetric DC-CPD grid whose loading matrices are the mixing matrices.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import DimensionError
from .model import DcCpdProblem
from .tensor_ops import perm213

__all__ = [
    "MultiSetSignals",
    "FrameSpec",
    "SourceModel",
    "covariance_tensorize",
    "synth_sources",
    "synth_mixtures",
    "mean_relative_error",
    "coupled_mean_relative_error",
]

MIXER_COND_LIMIT = 1e6


@dataclass
class MultiSetSignals:
    """``M`` complex observation matrices sharing the sample axis.

    ``X[m]`` has shape ``(N_m, Q)``.
    """

    M: int
    X: dict
    Q: int

    def __post_init__(self):
        self.X = {m: np.ascontiguousarray(x, dtype=np.complex128) for m, x in self.X.items()}
        for m in range(self.M):
            if m not in self.X:
                raise DimensionError(f"missing dataset {m}")
            if self.X[m].ndim != 2 or self.X[m].shape[1] != self.Q:
                raise DimensionError(
                    f"dataset {m} has shape {self.X[m].shape}, expected (*, {self.Q})"
                )

    @property
    def dims_n(self):
        return tuple(self.X[m].shape[0] for m in range(self.M))


@dataclass
class FrameSpec:
    """Framing for the sample covariances: length, overlap ratio, frame count.

    Frame ``k`` (0-based) starts at sample ``k * L * (1 - alpha)``; with
    half overlap the frames tile ``Q = L * (T + 1) / 2`` samples exactly.
    """

    L: int
    alpha: float
    T: int

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise DimensionError(f"overlap ratio must lie in [0, 1), got {self.alpha}")
        if self.L < 1 or self.T < 1:
            raise DimensionError("frame length and count must be positive")

    def starts(self, q):
        hop = self.L * (1.0 - self.alpha)
        starts = np.rint(np.arange(self.T) * hop).astype(int)
        if starts[-1] + self.L > q:
            raise DimensionError(
                f"frame {self.T - 1} spans [{starts[-1]}, {starts[-1] + self.L}) "
                f"beyond the {q} available samples"
            )
        return starts


@dataclass
class SourceModel:
    """Generator for intra-set independent, inter-set dependent sources.

    Per component ``r`` a full-rank ``M x M`` mixer couples the per-dataset
    generating sequences; ``P`` amplitude-modulation segments of equal
    length tile the ``Q`` samples.
    """

    R: int
    M: int
    P: int
    Q: int
    seed: int
    mixers: dict

    @classmethod
    def draw(cls, r, m_sets, p_segments, q, rng, seed=0):
        """Draw per-component mixers, redrawing any with condition number >= 1e6."""
        mixers = {}
        for comp in range(r):
            while True:
                qm = rng.standard_normal((m_sets, m_sets)) + 1j * rng.standard_normal(
                    (m_sets, m_sets)
                )
                if np.linalg.cond(qm) < MIXER_COND_LIMIT:
                    break
            mixers[comp] = qm
        return cls(R=r, M=m_sets, P=p_segments, Q=q, seed=seed, mixers=mixers)


def synth_sources(model, rng):
    """Draw the source matrices ``S[m]`` of shape ``(Q, R)``.

    Per component: ``P`` amplitude coefficients uniform on [0, 1] modulate
    per-dataset binary (+-1) sequences of equal segment length; the ``M``
    dataset columns are then coupled by the component's mixer.  Components
    use independent draws, so sources are independent within a dataset and
    dependent across datasets.
    """
    if model.Q % model.P != 0:
        raise DimensionError(
            f"sample count {model.Q} is not divisible by {model.P} segments"
        )
    seg = model.Q // model.P
    s = {m: np.empty((model.Q, model.R), dtype=np.complex128) for m in range(model.M)}
    for comp in range(model.R):
        eta = rng.uniform(0.0, 1.0, size=model.P)
        symbols = 2.0 * rng.integers(0, 2, size=(model.P, seg, model.M)) - 1.0
        generating = (eta[:, None, None] * symbols).reshape(model.Q, model.M)
        mixed = generating @ model.mixers[comp].T
        for m in range(model.M):
            s[m][:, comp] = mixed[:, m]
    return s


def synth_mixtures(s, a, snr_db, rng):
    """Mix sources and add circular complex Gaussian noise at a set SNR.

    ``X[m]`` is the unit-Frobenius-norm mixture ``A[m] @ S[m].T`` plus a
    unit-Frobenius-norm noise term scaled so that
    ``20*log10(signal/noise) == snr_db``; ``snr_db=inf`` disables noise.
    """
    m_sets = len(a)
    x = {}
    q = None
    for m in range(m_sets):
        sig = a[m] @ s[m].T
        q = sig.shape[1] if q is None else q
        if sig.shape[1] != q:
            raise DimensionError("datasets disagree on the sample count")
        sig = sig / np.linalg.norm(sig)
        if np.isfinite(snr_db):
            noise = rng.standard_normal(sig.shape) + 1j * rng.standard_normal(sig.shape)
            noise /= np.linalg.norm(noise)
            sig = sig + 10.0 ** (-snr_db / 20.0) * noise
        x[m] = sig
    return MultiSetSignals(M=m_sets, X=x, Q=q)


def covariance_tensorize(sig, spec):
    """Stack framewise cross-covariances into a symmetric DC-CPD grid.

    Slice ``k`` of cell ``(m, n)`` is ``X_m[:, frame_k] @ X_n[:, frame_k]^H / L``.
    The grid is conjugated-symmetric by construction; diagonal slices are
    Hermitian-symmetrized and mirror cells are derived from their upper
    triangle partners so the symmetry holds exactly.
    """
    starts = spec.starts(sig.Q)
    dims = sig.dims_n
    tensors = {}
    for m in range(sig.M):
        for n in range(m, sig.M):
            t = np.empty((dims[m], dims[n], spec.T), dtype=np.complex128)
            for k, s0 in enumerate(starts):
                xm = sig.X[m][:, s0:s0 + spec.L]
                xn = sig.X[n][:, s0:s0 + spec.L]
                cov = xm @ xn.conj().T / spec.L
                if m == n:
                    cov = 0.5 * (cov + cov.conj().T)
                t[:, :, k] = cov
            tensors[(m, n)] = t
            if n != m:
                tensors[(n, m)] = perm213(t.conj())
    return DcCpdProblem(
        M=sig.M, dims_n=dims, T=spec.T, tensors=tensors, symmetric=True
    )


def _column_residual_matrix(truth, estimate):
    """Squared residuals of every (true col, estimate col) pair after the
    per-pair optimal complex scale.

    Computed as explicit difference norms (not the projection-shortfall
    formula) so exact matches land at the squared roundoff level instead
    of plain cancellation noise.
    """
    e_norms = np.sum(np.abs(estimate) ** 2, axis=0)
    cross = estimate.conj().T @ truth  # <e_j, a_t>
    with np.errstate(divide="ignore", invalid="ignore"):
        scales = np.where(e_norms[:, None] > 0, cross / e_norms[:, None], 0.0)
    # diff[:, t, j] = a_t - scales[j, t] * e_j
    diff = truth[:, :, None] - estimate[:, None, :] * scales.T[None, :, :]
    return np.sum(np.abs(diff) ** 2, axis=0)


def mean_relative_error(estimate, truth):
    """Permutation- and scale-invariant mean relative factor error.

    Per dataset the estimate columns are matched to the truth columns by an
    exact assignment, each pair rescaled by its optimal complex factor, and
    the squared Frobenius residual normalized by the truth's squared norm;
    the result is the average over datasets.
    """
    if set(estimate) != set(truth):
        raise DimensionError("estimate and truth must cover the same datasets")
    total = 0.0
    for m in truth:
        t = np.asarray(truth[m], dtype=np.complex128)
        e = np.asarray(estimate[m], dtype=np.complex128)
        if t.shape != e.shape:
            raise DimensionError(
                f"dataset {m}: estimate shape {e.shape} != truth shape {t.shape}"
            )
        resid = _column_residual_matrix(t, e)
        rows, cols = linear_sum_assignment(resid)
        denom = np.sum(np.abs(t) ** 2)
        total += resid[rows, cols].sum() / denom if denom > 0 else 0.0
    return total / len(truth)


def coupled_mean_relative_error(estimate, truth):
    """Variant of :func:`mean_relative_error` with one permutation shared
    across datasets (measures automatic cross-dataset alignment)."""
    if set(estimate) != set(truth):
        raise DimensionError("estimate and truth must cover the same datasets")
    keys = sorted(truth)
    resid_sum = None
    denoms = {}
    resids = {}
    for m in keys:
        t = np.asarray(truth[m], dtype=np.complex128)
        e = np.asarray(estimate[m], dtype=np.complex128)
        if t.shape != e.shape:
            raise DimensionError(
                f"dataset {m}: estimate shape {e.shape} != truth shape {t.shape}"
            )
        resid = _column_residual_matrix(t, e)
        denoms[m] = np.sum(np.abs(t) ** 2)
        resids[m] = resid
        resid_sum = resid if resid_sum is None else resid_sum + resid
    rows, cols = linear_sum_assignment(resid_sum)
    total = 0.0
    for m in keys:
        total += resids[m][rows, cols].sum() / denoms[m] if denoms[m] > 0 else 0.0
    return total / len(keys)
