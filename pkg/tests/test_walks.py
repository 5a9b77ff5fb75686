"""Walk counts, the non-backtracking operator, and growth checks."""
import math
from itertools import combinations

import numpy as np
import pytest
import scipy.sparse as sp

from glauberlab.errors import (
    DegenerateOperatorError,
    InvalidInputError,
    ResourceLimitError,
)
from glauberlab.graph import Graph, sample_er
from glauberlab.params import ModelParams
from glauberlab.walks import (
    NbOperator,
    nb_counts,
    nb_counts_all_lengths,
    nb_edge_pair_counts_bruteforce,
    nb_vs_ball_check,
    nb_walks_bruteforce,
    perron,
    rank_one_approx_check,
    saw_count,
    saw_counts_upto,
    saw_sum_bound_check,
    two_core_mask,
    walk_growth_stats,
)
from glauberlab.walks import _pair_counts_block


def triangle():
    return Graph(3, [(0, 1), (0, 2), (1, 2)])


def complete(n):
    return Graph(n, list(combinations(range(n), 2)))


def cycle(n):
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def petersen():
    edges = [(i, (i + 1) % 5) for i in range(5)]
    edges += [(i, i + 5) for i in range(5)]
    edges += [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return Graph(10, edges)


class TestSawCounts:
    def test_triangle(self):
        assert saw_counts_upto(triangle(), 0, 2) == [1, 2, 2]

    def test_path_middle_has_no_length_two(self):
        g = Graph(3, [(0, 1), (1, 2)])
        assert saw_count(g, 1, 2) == 0

    def test_k4_length_three(self):
        assert saw_count(complete(4), 0, 3) == 6

    def test_cap_enforced(self):
        with pytest.raises(ResourceLimitError):
            saw_count(cycle(30), 0, 25)

    def test_invalid_args(self):
        with pytest.raises(InvalidInputError):
            saw_counts_upto(triangle(), 5, 2)
        with pytest.raises(InvalidInputError):
            saw_counts_upto(triangle(), 0, -1)


class TestNbOperator:
    def test_row_sums_are_head_degree_minus_one(self):
        g = sample_er(40, 2.5, seed=9)
        op = NbOperator(g)
        assert np.array_equal(op.row_sums(), g.degrees()[op.heads] - 1.0)

    def test_powers_match_bruteforce(self):
        rng = np.random.default_rng(2)
        done = 0
        while done < 6:
            g = sample_er(9, 2.4, seed=int(rng.integers(1 << 30)))
            if not 1 <= g.m <= 20:
                continue
            op = NbOperator(g)
            W = op.to_dense()
            for k in (1, 2, 4):
                want = nb_edge_pair_counts_bruteforce(g, k)
                got = np.linalg.matrix_power(W, k)
                assert np.array_equal(got.astype(np.int64), want)
            done += 1

    def test_apply_transpose_is_transpose(self):
        g = sample_er(12, 2.5, seed=4)
        op = NbOperator(g)
        W = op.to_dense()
        x = np.random.default_rng(0).normal(size=op.dimension)
        assert np.allclose(op.apply_transpose(x), W.T @ x)

    def test_matrix_apply_matches_vector_apply(self):
        g = sample_er(12, 2.5, seed=4)
        op = NbOperator(g)
        X = np.random.default_rng(1).normal(size=(op.dimension, 3))
        got = op.apply(X)
        for j in range(3):
            assert np.allclose(got[:, j], op.apply(X[:, j]))


class TestNbCounts:
    def test_cycle_always_two(self):
        for L in (1, 2, 7):
            assert nb_counts(cycle(3), 0, L).total == 2
            assert nb_counts(cycle(8), 5, L).total == 2

    def test_k4_growth(self):
        for L in (1, 2, 5):
            assert nb_counts(complete(4), 0, L).total == 3 * 2 ** (L - 1)

    def test_path_dies_at_the_end(self):
        g = Graph(3, [(0, 1), (1, 2)])
        assert nb_counts(g, 0, 3).total == 0

    def test_length_one_is_adjacency(self):
        g = sample_er(10, 2.0, seed=7)
        for x in range(g.n):
            c = nb_counts(g, x, 1)
            assert c.total == g.degree(x)
            for y in range(g.n):
                assert c.per_terminal[y] == (1.0 if g.has_edge(x, y) else 0.0)

    def test_terminal_split_matches_bruteforce(self):
        g = sample_er(9, 2.6, seed=13)
        for x in range(g.n):
            for L in (2, 4, 6):
                c = nb_counts(g, x, L)
                total, per = nb_walks_bruteforce(g, x, L)
                assert c.exact
                assert c.total == total
                assert np.array_equal(c.per_terminal.astype(np.int64), per)

    def test_all_lengths_recursion_matches_bruteforce(self):
        g = sample_er(9, 2.6, seed=13)
        counts, flags = nb_counts_all_lengths(g, 6)
        assert all(flags)
        for L in (1, 3, 6):
            for x in range(g.n):
                assert counts[L - 1][x] == nb_walks_bruteforce(g, x, L)[0]

    def test_pair_block_matches_bruteforce(self):
        g = sample_er(9, 2.6, seed=21)
        e = g.edge_array
        A = sp.csr_matrix(
            (
                np.ones(2 * g.m),
                (
                    np.concatenate([e[:, 0], e[:, 1]]),
                    np.concatenate([e[:, 1], e[:, 0]]),
                ),
            ),
            shape=(g.n, g.n),
        )
        blk = _pair_counts_block(A, g.degrees().astype(np.float64), np.arange(g.n), 5)
        for x in range(g.n):
            assert np.array_equal(
                blk[:, x].astype(np.int64), nb_walks_bruteforce(g, x, 5)[1]
            )

    def test_saw_bounded_by_nb(self):
        g = sample_er(12, 2.5, seed=5)
        counts, _ = nb_counts_all_lengths(g, 6)
        for v in range(g.n):
            saws = saw_counts_upto(g, v, 6)
            for ell in range(1, 7):
                assert saws[ell] <= counts[ell - 1][v]

    def test_exact_downgrade_on_dense_graph(self):
        # K_10 counts are 9 * 8^(L-1); they pass 2^127 near L = 44
        g = complete(10)
        c = nb_counts(g, 0, 45)
        assert not c.exact
        assert c.total == pytest.approx(9 * 8.0**44, rel=1e-9)
        small = nb_counts(g, 0, 10)
        assert small.exact
        assert small.total == 9 * 8**9

    def test_all_lengths_downgrade(self):
        g = complete(10)
        counts, flags = nb_counts_all_lengths(g, 50)
        assert flags[0] and not flags[-1]
        # flags flip once and stay down
        flips = [i for i in range(1, 50) if flags[i] != flags[i - 1]]
        assert len(flips) == 1
        for k in (1, 5, 17):
            assert counts[k - 1][0] == 9 * 8 ** (k - 1)
        for k in (30, 45, 50):
            assert counts[k - 1][0] == pytest.approx(9 * 8.0 ** (k - 1), rel=1e-9)

    def test_invalid_args(self):
        with pytest.raises(InvalidInputError):
            nb_counts(triangle(), 0, 0)
        with pytest.raises(InvalidInputError):
            nb_counts(triangle(), 9, 2)


class TestTwoCore:
    def test_triangle_with_pendant(self):
        g = Graph(4, [(0, 1), (0, 2), (1, 2), (2, 3)])
        assert two_core_mask(g).tolist() == [True, True, True, False]

    def test_tree_has_empty_core(self):
        g = Graph(4, [(0, 1), (1, 2), (1, 3)])
        assert not two_core_mask(g).any()


class TestPerron:
    def test_cycle(self):
        pd = perron(cycle(6))
        assert pd.lam == pytest.approx(1.0, abs=1e-12)
        assert pd.u.max() - pd.u.min() <= 1e-12
        assert pd.residual <= 1e-10 * pd.lam

    def test_k4(self):
        pd = perron(complete(4))
        assert pd.lam == pytest.approx(2.0, abs=1e-10)

    def test_three_regular(self):
        pd = perron(petersen())
        assert pd.lam == pytest.approx(2.0, abs=1e-10)

    def test_normalizations(self):
        pd = perron(petersen())
        assert np.linalg.norm(pd.u) == pytest.approx(1.0, abs=1e-12)
        assert np.dot(pd.u, pd.v) == pytest.approx(1.0, abs=1e-10)
        assert np.all(pd.u >= -1e-15)
        assert np.all(pd.v >= -1e-15)
        assert pd.v_vertex.shape == (10,)

    def test_matches_dense_eigenvalues(self):
        rng = np.random.default_rng(31)
        done = 0
        while done < 4:
            g = sample_er(40, 2.8, seed=int(rng.integers(1 << 30)))
            if not two_core_mask(g).any() or 2 * g.m > 2000:
                continue
            pd = perron(g)
            dense = NbOperator(g).to_dense()
            radius = np.abs(np.linalg.eigvals(dense)).max()
            assert pd.lam == pytest.approx(radius, abs=1e-8)
            done += 1

    def test_forest_inapplicable(self):
        with pytest.raises(DegenerateOperatorError):
            perron(Graph(4, [(0, 1), (1, 2), (1, 3)]))
        with pytest.raises(DegenerateOperatorError):
            perron(Graph(3, []))


class TestRankOneCheck:
    def test_cycle_counts_near_uniform_profile(self):
        p = ModelParams.critical(2)
        g = cycle(40)
        rep = rank_one_approx_check(g, p)
        # every pair count is 0, 1, or 2 and the profile is 2/n, so the
        # deviation cannot exceed 2
        assert rep.applicable
        assert rep.max_residual <= 2.0 + 1e-9
        assert rep.passed

    def test_vertex_transitive_graph(self):
        p = ModelParams.critical(2)
        rep = rank_one_approx_check(petersen(), p)
        assert rep.applicable and rep.passed
        assert rep.lam == pytest.approx(2.0, abs=1e-9)

    def test_forest_inapplicable(self):
        p = ModelParams.critical(2)
        rep = rank_one_approx_check(Graph(5, [(0, 1), (2, 3)]), p)
        assert not rep.applicable
        assert not rep.passed


class TestSawSumBound:
    def test_empty_graph(self):
        rep = saw_sum_bound_check(Graph(5, []), ModelParams.critical(2))
        assert rep.total == 0.0
        assert rep.passed
        assert rep.mode == "exact"

    def test_cycle_exact_total(self):
        p = ModelParams.critical(2)
        g = cycle(30)
        rep = saw_sum_bound_check(g, p)
        k = rep.ell - rep.L
        # on a cycle every vertex starts exactly two walks per length
        assert rep.mode == "exact"
        assert rep.total == 60.0
        assert rep.passed == (rep.total <= rep.bound)

    def test_majorant_mode_when_budget_exhausted(self):
        p = ModelParams.critical(2)
        g = cycle(30)
        rep = saw_sum_bound_check(g, p, work_budget=0)
        assert rep.mode == "nb-majorant"
        assert rep.total == 60.0

    def test_ell_below_range_rejected(self):
        with pytest.raises(InvalidInputError):
            saw_sum_bound_check(cycle(30), ModelParams.critical(2), ell=1)


class TestWalkGrowthStats:
    def test_regular_graph_average_ratio(self):
        # (d+1)-regular: N_x^(L) = (d+1) d^(L-1), ratio (d+1)/d
        p = ModelParams.critical(2)
        stats = walk_growth_stats(petersen(), p)
        assert stats.avg_count_ratio == pytest.approx(1.5, rel=1e-12)
        assert stats.exact

    def test_empty_graph_all_zero(self):
        p = ModelParams.critical(2)
        stats = walk_growth_stats(Graph(6, []), p)
        assert stats.avg_count_ratio == 0.0
        assert stats.mid_range_ratio == 0.0
        assert stats.pair_sum_constant == 0.0
        assert stats.skipped_vertices == 6

    def test_er_sample_smoke(self):
        p = ModelParams.critical(2)
        g = sample_er(300, 2.0, seed=17)
        stats = walk_growth_stats(g, p)
        assert math.isfinite(stats.avg_count_ratio)
        assert math.isfinite(stats.mid_range_ratio)
        assert math.isfinite(stats.pair_sum_constant)
        assert stats.pair_sum_constant >= 0.0


class TestNbVsBall:
    def test_tree_neighborhood(self):
        g = Graph(7, [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)])
        rep = nb_vs_ball_check(g, 0, 2)
        assert rep.applicable
        assert rep.tree_excess == 0
        # on a tree, NB walks are exactly the descending paths
        assert rep.count == 4.0
        assert rep.passed

    def test_unicyclic(self):
        rep = nb_vs_ball_check(cycle(6), 0, 4)
        assert rep.applicable
        assert rep.tree_excess == 1
        assert rep.count == 2.0
        assert rep.ball_size == 6
        assert rep.passed

    def test_dense_ball_inapplicable(self):
        rep = nb_vs_ball_check(complete(4), 0, 2)
        assert not rep.applicable
        assert rep.tree_excess == 3
