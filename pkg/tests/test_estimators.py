"""Estimator facade tests: sklearn conventions and pipeline composition."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import Pipeline

from dccpd.estimators import CovarianceTensorizer, DcCpd, as_problem, as_signals
from dccpd.exceptions import DimensionError
from dccpd.jbss import SourceModel, mean_relative_error, synth_mixtures, synth_sources
from dccpd.model import random_problem


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestAsProblem:
    def test_passthrough(self):
        rng = np.random.default_rng(0)
        p, _ = random_problem(2, 2, 2, rng=rng)
        assert as_problem(p) is p

    def test_dict_and_array(self):
        rng = np.random.default_rng(1)
        p, _ = random_problem(2, 2, 2, t=3, rng=rng)
        from_dict = as_problem(dict(p.tensors))
        assert from_dict.M == 2 and from_dict.T == 3
        arr = np.stack(
            [np.stack([p.tensors[(m, n)] for n in range(2)]) for m in range(2)]
        )
        from_arr = as_problem(arr)
        assert from_arr.M == 2 and from_arr.dims_n == (2, 2)

    def test_rejects_garbage(self):
        with pytest.raises(DimensionError):
            as_problem(np.zeros((3, 4)))


class TestDcCpdEstimator:
    def test_fit_exact_grid(self):
        rng = np.random.default_rng(2)
        p, truth = random_problem(3, 5, 3, symmetric=True, rng=rng)
        est = DcCpd(rank=5, solver="algebraic", seed=0).fit(p)
        assert est.rank_ == 5
        assert est.relative_cost_ < 1e-16
        assert mean_relative_error(est.mixing_matrices_, truth.A) < 1e-8
        assert est.score(p) == pytest.approx(-est.relative_cost_)

    def test_sklearn_clone_and_params(self):
        est = DcCpd(rank=4, solver="algebraic+als", rel_tol=1e-6, seed=7)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()
        cloned.set_params(rank=2)
        assert cloned.rank == 2 and est.rank == 4

    def test_als_requires_rank(self):
        rng = np.random.default_rng(3)
        p, _ = random_problem(2, 2, 2, rng=rng)
        with pytest.raises(DimensionError, match="rank"):
            DcCpd(solver="als").fit(p)


class TestPipelineComposition:
    def test_tensorize_then_decompose(self):
        rng = np.random.default_rng(4)
        n, r, m_sets, q = 3, 3, 3, 1000
        model = SourceModel.draw(r, m_sets, 20, q, rng)
        sources = synth_sources(model, rng)
        truth = {m: crandn(rng, n, r) for m in range(m_sets)}
        signals = synth_mixtures(sources, truth, 30.0, rng)
        pipe = Pipeline([
            ("cov", CovarianceTensorizer(frame_len=50, overlap=0.5, n_frames=39)),
            ("dccpd", DcCpd(rank=r, solver="algebraic+als", rel_tol=1e-7,
                            seed=0, noisy=True)),
        ])
        pipe.fit([signals.X[m] for m in range(m_sets)])
        est = pipe.named_steps["dccpd"]
        assert mean_relative_error(est.mixing_matrices_, truth) < 0.1

    def test_transformer_default_frame_count(self):
        rng = np.random.default_rng(5)
        sig = as_signals([crandn(rng, 2, 100), crandn(rng, 2, 100)])
        p = CovarianceTensorizer(frame_len=20, overlap=0.5).fit_transform(sig)
        assert p.T == 9  # frames of length 20, hop 10, within 100 samples
        assert p.symmetric
