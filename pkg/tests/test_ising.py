"""Exact Gibbs tables, tree formulas, and the walk-tree identity."""
import math
from itertools import combinations

import numpy as np
import pytest

from glauberlab.errors import InvalidInputError, ResourceLimitError
from glauberlab.graph import Graph, sample_er
from glauberlab.ising import (
    IsingModel,
    build_saw_tree,
    cov_domination_check,
    gibbs_exact,
    load_model,
    root_conditioning_bound_check,
    save_model,
    saw_tree_root_prob,
    susceptibility,
    susceptibility_sup,
    tree_correlation,
    weitz_check,
)


def random_tree(n: int, rng) -> Graph:
    """Uniform-ish random tree: attach each vertex to a random earlier one."""
    edges = [(int(rng.integers(0, v)), v) for v in range(1, n)]
    return Graph(n, edges)


class TestGibbsExact:
    def test_single_edge_plus_plus(self):
        # closed form: exp(b) / (2 exp(b) + 2 exp(-b))
        b = 0.7
        table = gibbs_exact(IsingModel.uniform(Graph(2, [(0, 1)]), b))
        want = math.exp(b) / (2 * math.exp(b) + 2 * math.exp(-b))
        assert table.probs[0b11] == pytest.approx(want, abs=1e-14)
        assert table.probs[0b00] == pytest.approx(want, abs=1e-14)

    def test_probs_sum_to_one(self):
        g = sample_er(10, 2.0, seed=5)
        table = gibbs_exact(IsingModel.uniform(g, 0.4))
        assert table.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(table.probs >= 0)

    def test_zero_beta_uniform(self):
        g = Graph(3, [(0, 1), (1, 2)])
        table = gibbs_exact(IsingModel.uniform(g, 0.0))
        assert np.allclose(table.probs, 1.0 / 8)

    def test_field_biases_spin(self):
        g = Graph(1, [])
        table = gibbs_exact(IsingModel(g, np.zeros(0), np.array([1.3])))
        want = math.exp(1.3) / (math.exp(1.3) + math.exp(-1.3))
        assert table.prob_plus(0) == pytest.approx(want, abs=1e-14)

    def test_clamp_matches_conditioning(self):
        g = Graph(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
        model = IsingModel.uniform(g, 0.4)
        via_cond = gibbs_exact(model).condition({2: 1}).prob_plus(0)
        fields = np.zeros(4)
        fields[2] = math.inf
        via_clamp = gibbs_exact(model.with_fields(fields)).prob_plus(0)
        assert via_cond == pytest.approx(via_clamp, abs=1e-13)

    def test_minus_clamp(self):
        g = Graph(2, [(0, 1)])
        fields = np.array([0.0, -math.inf])
        table = gibbs_exact(IsingModel.uniform(g, 0.5).with_fields(fields))
        # given s_1 = -1: P(s_0 = +) = e^{-b} / (e^{-b} + e^{b})
        want = math.exp(-0.5) / (math.exp(-0.5) + math.exp(0.5))
        assert table.prob_plus(0) == pytest.approx(want, abs=1e-14)
        assert table.mean(1) == -1.0
        assert table.pair_mean(0, 1) == pytest.approx(-table.mean(0), abs=1e-14)

    def test_free_spin_cap(self):
        g = Graph(30, [])
        with pytest.raises(ResourceLimitError):
            gibbs_exact(IsingModel.uniform(g, 0.1), max_free=24)

    def test_condition_zero_probability_rejected(self):
        g = Graph(2, [(0, 1)])
        fields = np.array([math.inf, 0.0])
        table = gibbs_exact(IsingModel.uniform(g, 0.3).with_fields(fields))
        with pytest.raises(InvalidInputError):
            table.position(0)

    def test_marginal_probs(self):
        g = Graph(3, [(0, 1), (1, 2)])
        table = gibbs_exact(IsingModel.uniform(g, 0.6))
        marg = table.marginal_probs([0, 2])
        assert marg.sum() == pytest.approx(1.0, abs=1e-12)
        # bit 0 is vertex 0, bit 1 is vertex 2
        p_both_plus = marg[0b11]
        direct = table.condition({0: 1}).prob_plus(2) * table.prob_plus(0)
        assert p_both_plus == pytest.approx(direct, abs=1e-13)

    def test_interface_model_drops_internal_edges(self):
        g = Graph(3, [(0, 1), (1, 2), (0, 2)])
        in_b = np.array([True, True, False])
        model = IsingModel.interface(g, in_b, 0.5)
        # edge (0,1) is internal to B and must carry zero coupling
        assert model.edge_beta(0, 1) == 0.0
        assert model.edge_beta(1, 2) == 0.5
        assert model.edge_beta(0, 2) == 0.5


class TestSusceptibility:
    def test_two_edge_path_end_vertex(self):
        # chi at an end of a 2-edge path: 1 + tanh(b) + tanh(b)^2
        b = 0.45
        g = Graph(3, [(0, 1), (1, 2)])
        chi = susceptibility(IsingModel.uniform(g, b), 0)
        assert chi == pytest.approx(1 + math.tanh(b) + math.tanh(b) ** 2, abs=1e-12)

    def test_sup_is_max(self):
        g = Graph(3, [(0, 1), (1, 2)])
        model = IsingModel.uniform(g, 0.45)
        sup = susceptibility_sup(model)
        vals = [susceptibility(model, x) for x in range(3)]
        assert sup == pytest.approx(max(vals), abs=1e-12)
        # the middle vertex sees both neighbors, so it attains the max
        assert sup == pytest.approx(vals[1], abs=1e-12)


class TestTreeCorrelation:
    def test_path_product(self):
        b = 0.45
        g = Graph(3, [(0, 1), (1, 2)])
        corr = tree_correlation(IsingModel.uniform(g, b), 0, 2)
        assert corr == pytest.approx(math.tanh(b) ** 2, abs=1e-14)

    def test_matches_exact_table(self, subtests=None):
        rng = np.random.default_rng(11)
        for _ in range(20):
            g = random_tree(int(rng.integers(3, 12)), rng)
            betas = rng.uniform(0.05, 0.8, size=g.m)
            model = IsingModel(g, betas)
            table = gibbs_exact(model)
            u, v = rng.choice(g.n, size=2, replace=False)
            assert tree_correlation(model, int(u), int(v)) == pytest.approx(
                table.pair_mean(int(u), int(v)), abs=1e-11
            )

    def test_rejects_cycles_and_fields(self):
        tri = Graph(3, [(0, 1), (1, 2), (0, 2)])
        with pytest.raises(InvalidInputError):
            tree_correlation(IsingModel.uniform(tri, 0.3), 0, 1)
        path = Graph(2, [(0, 1)])
        model = IsingModel.uniform(path, 0.3, fields=np.array([0.1, 0.0]))
        with pytest.raises(InvalidInputError):
            tree_correlation(model, 0, 1)

    def test_rejects_disconnected_pair(self):
        g = Graph(4, [(0, 1), (2, 3)])
        with pytest.raises(InvalidInputError):
            tree_correlation(IsingModel.uniform(g, 0.3), 0, 2)


class TestSawTree:
    def test_triangle_branches_opposite_signs(self):
        # walks from 0 close the cycle on both sides; the two closing
        # copies of vertex 0 must carry opposite pinned spins
        tri = Graph(3, [(0, 1), (0, 2), (1, 2)])
        tree = build_saw_tree(IsingModel.uniform(tri, 0.3), 0)
        assert tree.n_nodes == 7
        forced = sorted(
            tree.forced[i] for i in range(tree.n_nodes) if tree.forced[i] != 0
        )
        assert forced == [-1, 1]
        assert all(
            tree.vertex[i] == 0 for i in range(tree.n_nodes) if tree.forced[i] != 0
        )

    def test_square_cycle_two_forced_leaves_at_depth_four(self):
        c4 = Graph(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
        tree = build_saw_tree(IsingModel.uniform(c4, 0.3), 0)
        forced = [i for i in range(tree.n_nodes) if tree.forced[i] != 0]
        assert len(forced) == 2
        assert sorted(tree.forced[i] for i in forced) == [-1, 1]
        assert all(len(_path_to_root(tree, i)) - 1 == 4 for i in forced)

    def test_tree_graph_unfolds_to_itself(self):
        g = Graph(5, [(0, 1), (0, 2), (1, 3), (1, 4)])
        tree = build_saw_tree(IsingModel.uniform(g, 0.3), 0)
        assert tree.n_nodes == 5
        assert all(f == 0 for f in tree.forced)

    def test_depth_cap(self):
        g = Graph(4, [(0, 1), (1, 2), (2, 3)])
        tree = build_saw_tree(IsingModel.uniform(g, 0.3), 0, depth_cap=2)
        assert tree.n_nodes == 3
        assert max(
            len(_path_to_root(tree, i)) - 1 for i in range(tree.n_nodes)
        ) == 2

    def test_node_budget(self):
        k5 = Graph(5, list(combinations(range(5), 2)))
        with pytest.raises(ResourceLimitError):
            build_saw_tree(IsingModel.uniform(k5, 0.3), 0, max_nodes=10)

    def test_root_prob_on_tree_matches_table(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            g = random_tree(int(rng.integers(3, 10)), rng)
            model = IsingModel(g, rng.uniform(0.05, 0.8, size=g.m))
            tree = build_saw_tree(model, 0)
            got = saw_tree_root_prob(tree)
            want = gibbs_exact(model).prob_plus(0)
            assert got == pytest.approx(want, abs=1e-12)


def _path_to_root(tree, node):
    path = [node]
    while tree.parent[path[-1]] >= 0:
        path.append(tree.parent[path[-1]])
    return path


class TestMeasureProperties:
    def test_spin_flip_symmetry_at_zero_field(self):
        g = sample_er(9, 2.3, seed=41)
        table = gibbs_exact(IsingModel.uniform(g, 0.5))
        for v in range(g.n):
            assert abs(table.mean(v)) <= 1e-12

    def test_susceptibility_nondecreasing_in_beta(self):
        g = sample_er(8, 2.2, seed=6)
        model_of = lambda b: IsingModel.uniform(g, b)
        grid = [0.0, 0.1, 0.25, 0.4, 0.6, 0.9]
        vals = [susceptibility(model_of(b), 0) for b in grid]
        for lo, hi in zip(vals, vals[1:]):
            assert hi >= lo - 1e-12

    def test_beta_zero_gives_unit_susceptibility(self):
        g = sample_er(8, 2.2, seed=6)
        assert susceptibility(IsingModel.uniform(g, 0.0), 3) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_marginals_follow_automorphisms(self):
        # swapping the two ends of a 3-path is an automorphism
        g = Graph(3, [(0, 1), (1, 2)])
        fields = np.array([0.7, -0.2, 0.7])
        table = gibbs_exact(IsingModel.uniform(g, 0.4, fields))
        assert table.mean(0) == pytest.approx(table.mean(2), abs=1e-13)
        assert table.pair_mean(0, 1) == pytest.approx(
            table.pair_mean(2, 1), abs=1e-13
        )


class TestWeitzIdentity:
    def test_exact_on_triangle_and_k4(self):
        tri = Graph(3, [(0, 1), (0, 2), (1, 2)])
        k4 = Graph(4, list(combinations(range(4), 2)))
        for g in (tri, k4):
            for beta in (0.1, 0.4):
                for v in range(g.n):
                    for y in range(g.n):
                        rep = weitz_check(g, v, y, beta)
                        assert rep.diff <= 1e-12, (g.n, beta, v, y, rep)

    def test_exact_on_random_graphs(self):
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 8:
            g = sample_er(8, 2.2, seed=int(rng.integers(1 << 30)))
            if g.m == 0:
                continue
            v, y = rng.choice(8, size=2, replace=False)
            rep = weitz_check(g, int(v), int(y), 0.35)
            assert rep.diff <= 1e-11
            checked += 1


class TestCovDomination:
    def test_fields_reduce_tree_covariance(self):
        rng = np.random.default_rng(19)
        for _ in range(25):
            g = random_tree(int(rng.integers(3, 10)), rng)
            model = IsingModel(
                g,
                rng.uniform(0.05, 0.9, size=g.m),
                rng.uniform(-2.0, 2.0, size=g.n),
            )
            u, v = rng.choice(g.n, size=2, replace=False)
            cov, e0, ok = cov_domination_check(model, int(u), int(v))
            assert ok, (cov, e0)


class TestRootConditioningBound:
    def test_zero_field_trees(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            n = int(rng.integers(4, 10))
            g = random_tree(n, rng)
            model = IsingModel(g, rng.uniform(0.05, 0.9, size=g.m))
            k = int(rng.integers(1, 4))
            targets = [int(t) for t in rng.choice(np.arange(1, n), size=min(k, n - 1), replace=False)]
            rep = root_conditioning_bound_check(model, 0, targets)
            assert rep.applicable
            assert rep.lhs <= rep.rhs + 1e-12, rep

    def test_inapplicable_with_symmetry_breaking_field(self):
        g = Graph(2, [(0, 1)])
        model = IsingModel.uniform(g, 0.4, fields=np.array([0.5, 0.0]))
        rep = root_conditioning_bound_check(model, 0, [1])
        assert not rep.applicable
        assert abs(rep.root_mean) > 1e-9


class TestModelFiles:
    def test_round_trip(self, tmp_path):
        g = Graph(4, [(0, 1), (1, 2), (2, 3)])
        fields = np.array([0.0, 0.5, 0.0, -1.0])
        model = IsingModel(g, np.array([0.1, 0.2, 0.3]), fields)
        path = tmp_path / "model.json"
        save_model(model, str(path))
        back = load_model(str(path))
        assert back.g.n == 4
        assert np.array_equal(back.g.edge_array, g.edge_array)
        assert np.allclose(back.beta_edges, model.beta_edges)
        assert np.allclose(back.fields, fields)

    def test_isolated_vertices_preserved_via_n(self, tmp_path):
        g = Graph(5, [(0, 1)])
        model = IsingModel.uniform(g, 0.3)
        path = tmp_path / "model.json"
        save_model(model, str(path))
        assert load_model(str(path)).g.n == 5

    def test_n_smaller_than_indices_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"edges": [[0, 5, 0.3]], "fields": {}, "n": 3}')
        with pytest.raises(InvalidInputError):
            load_model(str(path))
