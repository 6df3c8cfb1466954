import csv
import json
import math

import numpy as np
import pytest

import support
from semdirect.benchfn import get_function
from semdirect.optimizer import (
    ObjectiveError,
    OptimizerConfig,
    condition_counts,
    convergence_bound,
    natural_extremes,
    random_search,
    rate_bounds,
    run,
    select_po_direct,
    select_po_simple,
    write_optresult_json,
    write_trajectory_csv,
)
from support import ledger_from_leaves, make_leaf


def indices(nodes):
    return {n.creation_index for n in nodes}


class TestRateBounds:
    def test_lone_leaf_unbounded(self):
        leaf = make_leaf(0, 0.0, 0)
        ledger = ledger_from_leaves([leaf])
        assert rate_bounds(leaf, ledger) == (0.0, math.inf)

    def test_dominated_by_larger_better_box(self):
        small = make_leaf(1, 2.0, 0)
        large = make_leaf(0, 5.0, 1)
        ledger = ledger_from_leaves([small, large])
        k_low, k_up = rate_bounds(small, ledger)
        assert k_low == 0.0
        assert k_up == pytest.approx(-4.5)
        assert indices(select_po_direct(ledger, epsilon=0.01)) == {1}

    def test_three_class_window(self):
        mid = make_leaf(1, 0.9, 1)
        ledger = ledger_from_leaves([make_leaf(0, 1.0, 0), mid, make_leaf(2, 0.5, 2)])
        k_low, k_up = rate_bounds(mid, ledger)
        assert k_low == 0.0  # smaller class would ask for a negative rate
        assert k_up == pytest.approx(-0.15)

    def test_only_class_maxima_bind(self):
        mid = make_leaf(1, 0.9, 1)
        extra = make_leaf(0, 0.2, 3)  # worse than its class max, must not bind
        ledger = ledger_from_leaves([make_leaf(0, 1.0, 0), mid, make_leaf(2, 0.5, 2), extra])
        assert rate_bounds(mid, ledger) == pytest.approx((0.0, -0.15))


class TestSelectDirect:
    def test_single_root_selected(self):
        leaf = make_leaf(0, 1.25, 0)
        assert indices(select_po_direct(ledger_from_leaves([leaf]), 0.01)) == {0}

    def test_single_class_keeps_only_best(self):
        # leaves of -|x - 1/6| after one trisection, all diameter 1/3
        leaves = [
            make_leaf(1, -1.0 / 3.0, 0),
            make_leaf(1, 0.0, 1),
            make_leaf(1, -2.0 / 3.0, 2),
        ]
        assert indices(select_po_direct(ledger_from_leaves(leaves), 0.01)) == {1}

    def test_value_tie_goes_to_oldest(self):
        leaves = [make_leaf(1, 0.5, 5), make_leaf(1, 0.5, 2)]
        assert indices(select_po_direct(ledger_from_leaves(leaves), 0.0)) == {2}

    def test_max_depth_excludes_small_leaves(self):
        leaves = [make_leaf(0, 0.1, 0), make_leaf(2, 0.9, 1)]
        selected = select_po_direct(ledger_from_leaves(leaves), 0.0, max_depth=2)
        assert indices(selected) == {0}

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            leaves = support.well_separated_ledger(rng)
            got = indices(select_po_direct(ledger_from_leaves(leaves), 0.01))
            assert got == support.po_oracle(leaves, 0.01)


class TestSelectSimple:
    def test_no_trimming_below_limit(self):
        leaves = [make_leaf(0, 0.5, 0), make_leaf(1, 0.6, 1)]
        selected = select_po_simple(ledger_from_leaves(leaves), 0.0, po_limit=3)
        assert indices(selected) == {0, 1}

    def test_trimming_keeps_top_scores_plus_largest(self):
        # scores: a 1 + 0.5/3*3 = 1.5, b 1.4, c 0.2; cap 2 keeps a and the big box
        a = make_leaf(1, 1.0, 0, slope=3.0)
        b = make_leaf(2, 1.4, 1)
        c = make_leaf(0, 0.2, 2)
        ledger = ledger_from_leaves([a, b, c])
        assert indices(select_po_simple(ledger, 0.0, po_limit=2)) == {0, 2}
        assert indices(select_po_simple(ledger, 0.0, po_limit=3)) == {0, 1, 2}

    def test_result_ordered_largest_first(self):
        leaves = [make_leaf(2, 0.9, 0), make_leaf(0, 0.1, 1), make_leaf(1, 0.88, 2)]
        selected = select_po_simple(ledger_from_leaves(leaves), 0.0, po_limit=5)
        assert [n.depth for n in selected] == [0, 1, 2]

    def test_matches_reimplementation(self):
        rng = np.random.default_rng(7)
        for _ in range(150):
            leaves = support.random_ledger(rng)
            ledger = ledger_from_leaves(leaves)
            for po_limit in (1, 2, 3, 4):
                got = indices(select_po_simple(ledger, 0.01, po_limit))
                want = support.simple_selection_oracle(leaves, 0.01, po_limit)
                assert got == want
                assert len(got) <= po_limit

    def test_subset_of_direct_candidates(self):
        # the full rule only ever prunes candidates further
        rng = np.random.default_rng(19)
        for _ in range(40):
            leaves = support.well_separated_ledger(rng)
            ledger = ledger_from_leaves(leaves)
            direct = indices(select_po_direct(ledger, 0.01))
            untrimmed = indices(select_po_simple(ledger, 0.01, po_limit=99))
            assert direct <= untrimmed


class TestConditionCounts:
    def test_single_root(self):
        ledger = ledger_from_leaves([make_leaf(0, 1.0, 0)])
        assert condition_counts(ledger, 0.01) == (1, 1, 1)

    def test_single_class_counts(self):
        leaves = [make_leaf(1, -1.0 / 3.0, 0), make_leaf(1, 0.0, 1), make_leaf(1, -2.0 / 3.0, 2)]
        n4, n5, n6 = condition_counts(ledger_from_leaves(leaves), 0.01)
        assert (n4, n5, n6) == (1, 3, 3)

    def test_undividable_leaves_not_counted(self):
        leaves = [make_leaf(0, 0.5, 0), make_leaf(3, 0.9, 1)]
        n4, n5, n6 = condition_counts(ledger_from_leaves(leaves), 0.0, max_depth=3)
        assert n4 == 1  # only the divisible class best


class TestRun:
    def test_optimum_at_root_center(self):
        result = run(lambda p: -abs(p[0] - 0.5), 1, OptimizerConfig(max_iterations=3))
        assert result.best_value == 0.0
        assert result.best_point == (0.5,)
        assert result.trajectory[0].queries == 3

    def test_first_iteration_samples_sixths(self):
        result = run(
            lambda p: -abs(p[0] - 1.0 / 6.0),
            1,
            OptimizerConfig(mode="direct", max_iterations=1),
        )
        assert result.best_value == 0.0
        assert result.best_point == (1.0 / 6.0,)
        assert result.query_count == 3

    def test_two_dimensional_ackley(self):
        fn = get_function("ackley")
        config = OptimizerConfig(mode="simple", po_limit=3, max_depth=6, max_queries=500)
        result = run(fn.evaluate_unit, 2, config)
        assert result.best_value >= -0.1
        assert result.query_count <= 500

    def test_budget_prefix_is_deterministic(self):
        # room for the root plus one sample: the minus point at 1/6 goes first
        result = run(
            lambda p: -abs(p[0] - 1.0 / 6.0),
            1,
            OptimizerConfig(max_queries=2, max_iterations=50),
        )
        assert result.query_count == 2
        assert result.best_value == 0.0
        assert len(result.trajectory) == 1
        assert result.trajectory[-1].queries == 2

    def test_budget_one_stops_at_root(self):
        result = run(lambda p: p[0], 1, OptimizerConfig(max_queries=1))
        assert result.query_count == 1
        assert result.trajectory == ()
        assert result.best_point == (0.5,)

    def test_stops_when_nothing_divisible(self):
        result = run(lambda p: p[0], 1, OptimizerConfig(max_depth=1, max_iterations=50))
        assert len(result.trajectory) == 1  # one sweep exhausts depth 1

    def test_iteration_budget(self):
        result = run(lambda p: p[0], 2, OptimizerConfig(max_iterations=4))
        assert len(result.trajectory) == 4
        assert result.trajectory[-1].iteration == 4

    def test_monotone_best_and_queries(self):
        fn = get_function("schwefel")
        result = run(fn.evaluate_unit, 2, OptimizerConfig(mode="direct", max_iterations=12))
        bests = [row.best_value for row in result.trajectory]
        queries = [row.queries for row in result.trajectory]
        assert bests == sorted(bests)
        assert queries == sorted(queries)
        assert result.best_value == bests[-1]
        assert result.query_count == queries[-1]

    def test_deterministic(self):
        fn = get_function("ackley")
        config = OptimizerConfig(max_queries=200)
        assert run(fn.evaluate_unit, 2, config) == run(fn.evaluate_unit, 2, config)

    def test_largest_candidate_always_kept(self):
        fn = get_function("ackley")
        result = run(fn.evaluate_unit, 2, OptimizerConfig(po_limit=1, max_iterations=20))
        assert any(row.trimmed for row in result.trajectory)
        assert all(row.largest_selected for row in result.trajectory)
        assert all(row.n_selected <= 1 for row in result.trajectory)

    def test_non_finite_objective_reports_point(self):
        with pytest.raises(ObjectiveError, match=r"0\.5"):
            run(lambda p: math.nan, 1, OptimizerConfig())

    def test_rejects_bad_dimension(self):
        with pytest.raises(ValueError):
            run(lambda p: 0.0, 0, OptimizerConfig())


class TestConfigValidation:
    def test_bad_mode(self):
        with pytest.raises(ValueError):
            OptimizerConfig(mode="annealing")

    def test_bad_numbers(self):
        with pytest.raises(ValueError):
            OptimizerConfig(max_depth=0)
        with pytest.raises(ValueError):
            OptimizerConfig(epsilon=-0.1)
        with pytest.raises(ValueError):
            OptimizerConfig(po_limit=0)
        with pytest.raises(ValueError):
            OptimizerConfig(max_queries=0)


class TestBaselines:
    def test_random_search_reproducible(self):
        fn = get_function("sphere")
        a = random_search(fn.evaluate_unit, 3, 50, rng_seed=9)
        b = random_search(fn.evaluate_unit, 3, 50, rng_seed=9)
        assert a == b
        assert a.query_count == 50
        assert len(a.trajectory) == 50

    def test_random_search_constant_objective(self):
        result = random_search(lambda p: 7.0, 2, 10, rng_seed=1)
        assert result.best_value == 7.0

    def test_random_search_single_query(self):
        a = random_search(lambda p: p[0], 1, 1, rng_seed=3)
        assert a.best_point == (np.random.default_rng(3).random(),)

    def test_random_best_monotone(self):
        fn = get_function("ackley")
        result = random_search(fn.evaluate_unit, 2, 40)
        bests = [row.best_value for row in result.trajectory]
        assert bests == sorted(bests)

    def test_natural_extremes_orientation(self):
        v_plus, v_minus = natural_extremes(lambda p: p[0], 1)
        assert (v_plus, v_minus) == (1.0, 0.0)

    def test_natural_extremes_symmetric_objective(self):
        v_plus, v_minus = natural_extremes(lambda p: -abs(p[0] - 0.5), 1)
        assert v_plus == v_minus


class TestConvergenceBound:
    def test_known_values(self):
        assert convergence_bound(6.0, 2, 1) == 2.0
        assert convergence_bound(1.0, 8, 2) == pytest.approx(1.0 / 3.0)

    @pytest.mark.parametrize("mode", ["direct", "simple"])
    @pytest.mark.parametrize("iters", [5, 20])
    def test_cone_gap_within_bound(self, mode, iters):
        fn = get_function("l1cone")
        result = run(fn.evaluate_unit, 2, OptimizerConfig(mode=mode, max_iterations=iters))
        gap = 0.0 - result.best_value
        assert gap <= convergence_bound(1.0, iters, 2)

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            convergence_bound(-1.0, 5, 1)
        with pytest.raises(ValueError):
            convergence_bound(1.0, 5, 0)


class TestSerialization:
    def test_csv_round_trip(self, tmp_path):
        result = run(lambda p: p[0], 1, OptimizerConfig(max_iterations=5))
        path = tmp_path / "traj.csv"
        write_trajectory_csv(result, path)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(result.trajectory)
        assert list(rows[0]) == ["iteration", "queries", "best_value", "n_eq4", "n_eq5", "n_eq6"]
        assert int(rows[0]["queries"]) == result.trajectory[0].queries

    def test_json_document(self, tmp_path):
        result = run(lambda p: p[0], 2, OptimizerConfig(max_iterations=2))
        path = tmp_path / "result.json"
        write_optresult_json(result, path)
        doc = json.loads(path.read_text())
        assert doc["best_value"] == result.best_value
        assert doc["query_count"] == result.query_count
        assert len(doc["trajectory"]) == 2
        assert set(doc["trajectory"][0]) == {
            "iteration", "queries", "best_value", "n_eq4", "n_eq5", "n_eq6",
        }
