"""Generic uniqueness certification tests (small sizes; big ones in acceptance)."""

import numpy as np
import pytest

from dccpd.algebraic import coupled_rank1_map
from dccpd.exceptions import DimensionError
from dccpd.uniqueness import (
    CPD_RMAX_TABLE,
    DCCPD_RMAX_TABLE,
    build_phi,
    check_generic_rank,
    generic_rmax,
)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestBuildPhi:
    def test_single_component_has_no_columns(self):
        rng = np.random.default_rng(0)
        a = {m: crandn(rng, 3, 1) for m in range(3)}
        assert build_phi(a, 0, 1, 2).shape == (81, 0)

    def test_two_components_two_columns(self):
        rng = np.random.default_rng(1)
        a = {m: crandn(rng, 2, 2) for m in range(3)}
        phi = build_phi(a, 0, 1, 2)
        assert phi.shape == (16, 2)

    def test_columns_match_direct_map(self):
        rng = np.random.default_rng(2)
        a = {m: crandn(rng, 3, 3) for m in range(3)}
        phi = build_phi(a, 1, 0, 2)
        col = 0
        for t in range(3):
            for r in range(3):
                if t == r:
                    continue
                x1 = np.outer(a[1][:, t], a[0][:, t].conj())
                x2 = np.outer(a[1][:, r], a[2][:, r].conj())
                assert np.allclose(phi[:, col], coupled_rank1_map(x1, x2), atol=1e-12)
                col += 1

    def test_kronecker_identity(self):
        # psi of the two rank-1 matrices factors into the antisymmetrized
        # Kronecker of the shared-side columns times the conjugated pair.
        rng = np.random.default_rng(3)
        a = {m: crandn(rng, 3, 2) for m in range(3)}
        phi = build_phi(a, 0, 1, 2)
        t, r = 0, 1
        expect = np.kron(
            np.kron(a[0][:, t], a[0][:, r]) - np.kron(a[0][:, r], a[0][:, t]),
            np.kron(a[1][:, t].conj(), a[2][:, r].conj()),
        )
        assert np.allclose(phi[:, 0], expect, atol=1e-12)

    def test_requires_ordered_pair(self):
        rng = np.random.default_rng(4)
        a = {m: crandn(rng, 2, 2) for m in range(3)}
        with pytest.raises(DimensionError):
            build_phi(a, 0, 2, 1)


class TestGenericRmax:
    def test_small_channel_counts(self):
        assert generic_rmax(2, 3, trials=2, seed=0) == 2
        assert generic_rmax(3, 3, trials=2, seed=1) == 5

    def test_independent_of_dataset_count(self):
        assert generic_rmax(3, 2, trials=2, seed=2) == 5

    def test_exceeds_single_tensor_bound(self):
        for n in (2, 3):
            assert generic_rmax(n, 3, trials=2, seed=n) >= CPD_RMAX_TABLE[n]
        # tabulated rows: coupled bound dominates the single-tensor one
        # and both grow with the channel count
        for n in range(2, 9):
            assert DCCPD_RMAX_TABLE[n] >= CPD_RMAX_TABLE[n]
        assert list(DCCPD_RMAX_TABLE.values()) == sorted(DCCPD_RMAX_TABLE.values())

    def test_size_bound_necessary(self):
        # full column rank needs at least as many rows as columns
        for n, rmax in DCCPD_RMAX_TABLE.items():
            assert n ** 4 >= rmax * rmax - rmax

    def test_report_consistency(self):
        rng = np.random.default_rng(5)
        report = check_generic_rank(3, 3, 5, rng)
        assert report.all_full_rank
        assert report.min_sigma_ratio > 1e-9
        assert len(report.full_rank) == 9  # 3 datasets x 3 pairs
        bad = check_generic_rank(3, 3, 6, rng)
        assert not bad.all_full_rank

    def test_input_validation(self):
        with pytest.raises(DimensionError):
            generic_rmax(1, 3)
        with pytest.raises(DimensionError):
            generic_rmax(3, 1)
