"""Tests for the coupled rank-1 detection machinery and the full solver."""

import numpy as np
import pytest

from dccpd.algebraic import (
    build_gamma,
    build_omega,
    coupled_rank1_map,
    detect_to_w,
    recover_factors,
    solve_algebraic,
    solve_coupled_overdet,
)
from dccpd.exceptions import DimensionError, RankMismatchError
from dccpd.jbss import mean_relative_error
from dccpd.linalg import gevd_cpd
from dccpd.model import SolverOptions, random_problem, reduce_third_mode
from dccpd.tensor_ops import cpd_reconstruct, matricize, unvec


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def detection_results(p, r, opts=None):
    reduced, maps = reduce_third_mode(p, r)
    ws = {}
    for m in range(p.M):
        for g in range(p.M):
            for h in range(g + 1, p.M):
                ws[(m, g, h)] = detect_to_w(reduced, r, m, g, h, opts)
    return reduced, maps, ws


class TestCoupledRank1Map:
    def test_coupled_pair_maps_to_zero(self):
        rng = np.random.default_rng(0)
        a = crandn(rng, 4)
        x1 = np.outer(a, crandn(rng, 3))
        x2 = np.outer(a, crandn(rng, 5))
        psi = coupled_rank1_map(x1, x2)
        assert psi.shape == (4 * 4 * 3 * 5,)
        assert np.linalg.norm(psi) <= 1e-12 * np.linalg.norm(x1) * np.linalg.norm(x2)

    def test_hand_entry(self):
        e1 = np.zeros(2)
        e1[0] = 1.0
        e2 = np.zeros(2)
        e2[1] = 1.0
        x1 = np.outer(e1, e1)
        x2 = np.outer(e2, e1)
        psi = coupled_rank1_map(x1, x2)
        phi = psi.reshape(2, 2, 2, 2)
        assert phi[0, 1, 0, 0] == 1.0  # logical entry (1,2,1,1)

    def test_bilinearity(self):
        rng = np.random.default_rng(1)
        x1, x2 = crandn(rng, 3, 2), crandn(rng, 3, 4)
        alpha, beta = 1.7 - 0.3j, -0.4 + 2.1j
        lhs = coupled_rank1_map(alpha * x1, beta * x2)
        assert np.allclose(lhs, alpha * beta * coupled_rank1_map(x1, x2), atol=1e-12)

    def test_zero_iff_coupled_rank1(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            a = crandn(rng, 3)
            psi = coupled_rank1_map(
                np.outer(a, crandn(rng, 2)), np.outer(a, crandn(rng, 2))
            )
            assert np.linalg.norm(psi) <= 1e-12
        for _ in range(100):
            x1 = np.outer(crandn(rng, 3), crandn(rng, 2))
            x2 = np.outer(crandn(rng, 3), crandn(rng, 2))
            scale = np.linalg.norm(x1) * np.linalg.norm(x2)
            assert np.linalg.norm(coupled_rank1_map(x1, x2)) > 1e-10 * scale
        for _ in range(20):
            x1 = crandn(rng, 3, 3)  # rank >= 2 almost surely
            scale = np.linalg.norm(x1) ** 2
            assert np.linalg.norm(coupled_rank1_map(x1, x1)) > 1e-10 * scale

    def test_row_mismatch(self):
        with pytest.raises(DimensionError):
            coupled_rank1_map(np.zeros((2, 2)), np.zeros((3, 2)))


class TestBuildGamma:
    def test_single_component_column(self):
        rng = np.random.default_rng(3)
        t_mg, t_mh = crandn(rng, 3, 3, 1), crandn(rng, 3, 3, 1)
        gamma = build_gamma(t_mg, t_mh)
        assert gamma.shape == (81, 1)
        expect = coupled_rank1_map(t_mg[:, :, 0], t_mh[:, :, 0])
        assert np.allclose(gamma[:, 0], expect, atol=1e-12)

    def test_true_kernel_vectors(self):
        # For exact coupled factors the Kronecker products of the inverse
        # transposed third-mode factor columns annihilate the matrix.
        rng = np.random.default_rng(4)
        p, sol = random_problem(3, 5, 3, symmetric=True, rng=rng)
        reduced, maps = reduce_third_mode(p, 5)
        gamma = build_gamma(reduced.tensors[(0, 1)], reduced.tensors[(0, 2)])
        b_g = np.linalg.inv(maps[(0, 1)].T @ sol.C[(0, 1)]).T
        b_h = np.linalg.inv(maps[(0, 2)].T @ sol.C[(0, 2)]).T
        for r in range(5):
            v = np.kron(b_g[:, r], b_h[:, r])
            assert np.linalg.norm(gamma @ v) <= 1e-10 * np.linalg.norm(gamma) * np.linalg.norm(v)

    def test_rank_is_r_squared_minus_r(self):
        rng = np.random.default_rng(5)
        p, _ = random_problem(3, 5, 3, symmetric=True, rng=rng)
        reduced, _ = reduce_third_mode(p, 5)
        gamma = build_gamma(reduced.tensors[(1, 0)], reduced.tensors[(1, 2)])
        s = np.linalg.svd(gamma, compute_uv=False)
        assert int(np.sum(s > 1e-8 * s[0])) == 20  # R^2 - R


class TestBuildOmega:
    def test_matches_explicit_gram(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            t_mg, t_mh = crandn(rng, 3, 3, 4), crandn(rng, 3, 3, 4)
            gamma = build_gamma(t_mg, t_mh)
            omega = build_omega(t_mg, t_mh)
            expect = gamma.conj().T @ gamma
            rel = np.linalg.norm(omega - expect) / np.linalg.norm(expect)
            assert rel <= 1e-10

    def test_hermitian_psd(self):
        rng = np.random.default_rng(7)
        omega = build_omega(crandn(rng, 4, 4, 3), crandn(rng, 4, 4, 3))
        assert np.allclose(omega, omega.conj().T, atol=1e-12 * np.linalg.norm(omega))
        w = np.linalg.eigvalsh(omega)
        assert w.min() >= -1e-10 * np.linalg.norm(omega)

    def test_null_dimension_on_exact_instance(self):
        rng = np.random.default_rng(8)
        p, _ = random_problem(3, 5, 3, symmetric=True, rng=rng)
        reduced, _ = reduce_third_mode(p, 5)
        omega = build_omega(reduced.tensors[(2, 0)], reduced.tensors[(2, 1)])
        s = np.linalg.svd(omega, compute_uv=False)
        assert int(np.sum(s <= 1e-8 * s[0])) == 5


class TestDetectToW:
    def test_exact_null_dimension(self):
        rng = np.random.default_rng(9)
        p, _ = random_problem(3, 5, 3, symmetric=True, rng=rng)
        reduced, _ = reduce_third_mode(p, 5)
        res = detect_to_w(reduced, 5, 0, 1, 2)
        assert res.w_tensor.shape == (5, 5, 5)
        assert res.sigma_gap > 1e3

    def test_rank_beyond_bound_raises(self):
        rng = np.random.default_rng(10)
        p, _ = random_problem(3, 6, 3, symmetric=True, rng=rng)
        reduced, _ = reduce_third_mode(p, 6)
        with pytest.raises(RankMismatchError) as info:
            detect_to_w(reduced, 6, 0, 0, 1)
        assert info.value.singular_values is not None

    def test_w_tensor_admits_overdetermined_cpd(self):
        rng = np.random.default_rng(11)
        p, _ = random_problem(3, 4, 3, symmetric=True, rng=rng)
        reduced, _ = reduce_third_mode(p, 4)
        res = detect_to_w(reduced, 4, 1, 0, 2)
        a, b, c = gevd_cpd(res.w_tensor, 4, rng=rng)
        recon = cpd_reconstruct(a, b, c)
        assert np.linalg.norm(recon - res.w_tensor) <= 1e-10 * np.linalg.norm(res.w_tensor)

    def test_gamma_and_omega_paths_agree_on_nullspace(self):
        rng = np.random.default_rng(12)
        p, _ = random_problem(3, 4, 3, symmetric=True, rng=rng)
        reduced, _ = reduce_third_mode(p, 4)
        res_fast = detect_to_w(reduced, 4, 0, 1, 2)
        res_slow = detect_to_w(
            reduced, 4, 0, 1, 2, SolverOptions(use_explicit_gamma=True)
        )
        # same subspace: projector distance
        wf = res_fast.w_tensor.reshape(16, 4)
        ws = res_slow.w_tensor.reshape(16, 4)
        proj_f = wf @ wf.conj().T
        proj_s = ws @ ws.conj().T
        assert np.linalg.norm(proj_f - proj_s) < 1e-8


class TestSolveCoupledOverdet:
    def test_m2_no_propagation(self):
        rng = np.random.default_rng(13)
        p, sol = random_problem(3, 4, 2, symmetric=True, rng=rng)
        reduced, maps, ws = detection_results(p, 4)
        bs = solve_coupled_overdet(ws, 2, 4, rng=rng)
        assert set(bs) == {(m, n) for m in range(2) for n in range(2)}

    def test_b_factors_invert_third_mode_factors(self):
        # B[(m, n)]^T times the reduced true third-mode factor is a
        # permuted diagonal matrix, with one permutation shared per m.
        rng = np.random.default_rng(14)
        p, sol = random_problem(3, 5, 3, symmetric=True, rng=rng)
        reduced, maps, ws = detection_results(p, 5)
        bs = solve_coupled_overdet(ws, 3, 5, rng=rng)
        for m in range(3):
            perms = []
            for n in range(3):
                c_red = maps[(m, n)].T @ sol.C[(m, n)]
                prod = bs[(m, n)].T @ c_red
                # one dominant entry per row and column
                perm = np.argmax(np.abs(prod), axis=1)
                assert sorted(perm) == list(range(5))
                dominant = np.abs(prod[np.arange(5), perm])
                off = np.abs(prod).sum(axis=1) - dominant
                assert np.all(off <= 1e-8 * dominant)
                perms.append(tuple(perm))
            assert len(set(perms)) == 1  # common permutation per m

    def test_propagated_columns_are_rank1(self):
        rng = np.random.default_rng(15)
        p, _ = random_problem(3, 5, 3, symmetric=True, rng=rng)
        reduced, maps, ws = detection_results(p, 5)
        bs = solve_coupled_overdet(ws, 3, 5, rng=rng)
        g0 = 0
        for m in (1, 2):
            kr = matricize(ws[(m, g0, 2)].w_tensor, 1) @ np.linalg.inv(bs[(m, g0)]).T
            for col in range(5):
                s = np.linalg.svd(unvec(kr[:, col], 5, 5), compute_uv=False)
                assert s[1] / s[0] < 1e-8


class TestRecoverFactors:
    def test_exact_recovery_overdetermined(self):
        rng = np.random.default_rng(16)
        p, truth = random_problem(3, 3, 3, symmetric=True, rng=rng)
        reduced, maps, ws = detection_results(p, 3)
        bs = solve_coupled_overdet(ws, 3, 3, rng=rng)
        sol, info = recover_factors(reduced, maps, bs, p)
        assert mean_relative_error(sol.A, truth.A) < 1e-10
        assert max(info["eig_ratios"]) < 1e-8

    def test_exact_recovery_underdetermined(self):
        rng = np.random.default_rng(17)
        p, truth = random_problem(3, 5, 3, symmetric=True, rng=rng)
        reduced, maps, ws = detection_results(p, 5)
        bs = solve_coupled_overdet(ws, 3, 5, rng=rng)
        sol, info = recover_factors(reduced, maps, bs, p)
        assert mean_relative_error(sol.A, truth.A) < 1e-10

    def test_rank1_gram_from_known_vector(self):
        rng = np.random.default_rng(18)
        g = crandn(rng, 6)
        from dccpd.linalg import dominant_eigvec

        v, lam = dominant_eigvec(np.outer(g, g.conj()))
        unit = g / np.linalg.norm(g)
        assert abs(abs(v.conj() @ unit) - 1.0) < 1e-12


class TestSolveAlgebraic:
    def test_table_small(self):
        rng = np.random.default_rng(19)
        p, truth = random_problem(3, 5, 3, t=5, symmetric=False, rng=rng)
        sol, report = solve_algebraic(p, SolverOptions(rank=5, seed=0))
        assert report["path"] == "detection"
        assert mean_relative_error(sol.A, truth.A) < 1e-8
        assert report["relative_cost"] < 1e-16

    def test_rank_one_any_shape(self):
        rng = np.random.default_rng(20)
        p, truth = random_problem(4, 1, 2, t=3, symmetric=False, rng=rng)
        sol, report = solve_algebraic(p, SolverOptions(rank=1, seed=0))
        assert mean_relative_error(sol.A, truth.A) < 1e-12

    def test_autodetect_rank(self):
        rng = np.random.default_rng(21)
        p, truth = random_problem(3, 4, 3, t=6, symmetric=True, rng=rng)
        sol, report = solve_algebraic(p, SolverOptions(seed=0))
        assert report["rank"] == 4
        assert mean_relative_error(sol.A, truth.A) < 1e-8

    def test_overdetermined_shortcut(self):
        rng = np.random.default_rng(22)
        p, truth = random_problem(4, 3, 3, t=5, symmetric=True, rng=rng)
        sol, report = solve_algebraic(p, SolverOptions(rank=3, seed=0))
        assert report["path"] == "gevd"
        assert mean_relative_error(sol.A, truth.A) < 1e-10

    def test_unequal_channel_counts(self):
        rng = np.random.default_rng(23)
        p, truth = random_problem(
            0, 3, 3, t=6, symmetric=True, rng=rng, dims_n=(3, 4, 5)
        )
        sol, report = solve_algebraic(p, SolverOptions(rank=3, seed=0))
        assert mean_relative_error(sol.A, truth.A) < 1e-8

    def test_single_dataset_overdetermined(self):
        rng = np.random.default_rng(24)
        p, truth = random_problem(4, 2, 1, t=4, symmetric=True, rng=rng)
        sol, report = solve_algebraic(p, SolverOptions(rank=2, seed=0))
        assert mean_relative_error(sol.A, truth.A) < 1e-10

    def test_refine_flag_runs_als(self):
        rng = np.random.default_rng(25)
        p, truth = random_problem(3, 3, 2, t=5, symmetric=True, rng=rng)
        sol, report = solve_algebraic(p, SolverOptions(rank=3, seed=0, refine=True))
        assert "als_iterations" in report
        assert mean_relative_error(sol.A, truth.A) < 1e-8
