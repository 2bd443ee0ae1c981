"""Nested cross-validation plumbing on small planted-signal problems.

The oracle and single-best predictors must reproduce VBA and SBA exactly
through the same fold loop the model uses; that equality is the main guard
against selection-plumbing bugs (leakage, fold drift, misaligned lookups).
"""

import hashlib
import json

import numpy as np
import pytest
from scipy import stats

import recselect.experiment as experiment
from recselect.algo_features import AlgorithmFeatureTable, FEATURE_CATEGORIES
from recselect.errors import ConfigError
from recselect.experiment import (
    DEFAULT_ABLATION_SETS,
    SearchSpace,
    ablation_label,
    assert_user_disjoint,
    ci_half_width,
    derive_seed,
    make_user_folds,
    report_to_json,
    run_ablation,
    run_full_evaluation,
    run_importance,
    run_nested_cv,
    selector_fold_metrics,
    top_k_hit,
)
from recselect.ground_truth import PerformanceMatrix
from recselect.meta import GBDTParams
from recselect.user_features import USER_FEATURE_NAMES, UserFeatureTable

LEAN_SPACE = SearchSpace(
    n_iter=2,
    inner_folds=2,
    distributions={
        "num_trees": {"type": "int_range", "low": 10, "high": 20},
        "learning_rate": {"type": "log_uniform", "low": 0.1, "high": 0.3},
        "max_depth": {"type": "int_range", "low": 2, "high": 3},
    },
)


def planted_problem(n_users=24):
    """Two user groups, each with its own best algorithm, readable from f0."""
    rng = np.random.default_rng(0)
    users = [f"u{i:02d}" for i in range(n_users)]
    group = np.array([i % 2 for i in range(n_users)], dtype=np.float64)
    values = np.column_stack([
        np.where(group == 0, 0.8, 0.2),
        np.where(group == 1, 0.8, 0.2),
        np.full(n_users, 0.1),
    ])
    pm = PerformanceMatrix(users, ["alpha", "beta", "gamma"], values)
    feats = rng.normal(0.0, 0.01, size=(n_users, 15))
    feats[:, 0] = group
    uf = UserFeatureTable(users, USER_FEATURE_NAMES, feats)
    return pm, uf


def synthetic_algo_table():
    return AlgorithmFeatureTable(
        algorithms=["alpha", "beta", "gamma"],
        numeric_names=["sloc", "hal_volume", "perf_on_a", "handles_cold_start"],
        numeric=np.array([
            [12.0, 110.0, 0.25, 1.0],
            [25.0, 300.0, 0.45, 0.0],
            [31.0, 410.0, 0.15, 0.0],
        ]),
        categorical_names=["family", "learning_paradigm"],
        categorical=[
            ("Popularity", "Counting"),
            ("Neighborhood", "Item-based"),
            ("Autoencoder", "Closed-form"),
        ],
    )


class TestDeriveSeed:
    def test_matches_direct_hash_recomputation(self):
        for parts in [("a",), (1, "train", "pop"), ("x", "y", "z")]:
            joined = "/".join(str(p) for p in parts)
            digest = hashlib.blake2b(joined.encode("utf-8"), digest_size=8).digest()
            want = int.from_bytes(digest, "big") >> 1
            assert derive_seed(*parts) == want

    def test_distinct_parts_distinct_seeds(self):
        seeds = {derive_seed(i, "hpo", j) for i in range(8) for j in range(8)}
        assert len(seeds) == 64

    def test_part_order_matters(self):
        assert derive_seed("a", "b") != derive_seed("b", "a")

    def test_fits_in_a_nonnegative_int64(self):
        for i in range(50):
            s = derive_seed("probe", i)
            assert 0 <= s < 2 ** 63


class TestFolds:
    def test_partition_and_balance(self):
        users = [f"u{i}" for i in range(11)]
        folds = make_user_folds(users, 3, seed=4)
        assert sorted(u for f in folds for u in f) == sorted(users)
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1

    def test_seeded_determinism(self):
        users = [f"u{i}" for i in range(9)]
        assert make_user_folds(users, 3, 7) == make_user_folds(users, 3, 7)
        assert make_user_folds(users, 3, 7) != make_user_folds(users, 3, 8)

    def test_bounds_are_enforced(self):
        with pytest.raises(ValueError):
            make_user_folds(["a", "b"], 1, 0)
        with pytest.raises(ValueError):
            make_user_folds(["a", "b"], 3, 0)

    def test_disjointness_guard_names_the_offender(self):
        assert_user_disjoint([["a", "b"], ["c"]])
        with pytest.raises(AssertionError, match="'b'"):
            assert_user_disjoint([["a", "b"], ["b"]])


class TestCiHalfWidth:
    def test_frozen_three_point_value(self):
        assert ci_half_width([0.1, 0.2, 0.3]) == pytest.approx(0.2484137711719545)

    def test_single_value_has_no_interval(self):
        assert ci_half_width([0.5]) is None

    def test_matches_t_formula_on_random_samples(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            values = rng.normal(size=int(rng.integers(2, 12)))
            want = stats.t.ppf(0.975, values.size - 1) * values.std(ddof=1) / np.sqrt(values.size)
            assert ci_half_width(values) == pytest.approx(want)


class TestTopKHit:
    def test_hit_and_miss_at_k1(self):
        truth = np.array([0.2, 0.9, 0.1])
        assert top_k_hit(np.array([0.0, 1.0, 0.5]), truth, 1)
        assert not top_k_hit(np.array([1.0, 0.0, 0.5]), truth, 1)

    def test_k3_window(self):
        truth = np.array([0.0, 0.0, 0.0, 1.0])
        scores = np.array([0.9, 0.8, 0.7, 0.6])
        assert not top_k_hit(scores, truth, 3)
        assert top_k_hit(scores, truth, 4)

    def test_tied_truth_counts_any_best(self):
        truth = np.array([1.0, 1.0, 0.0])
        assert top_k_hit(np.array([0.0, 1.0, 0.5]), truth, 1)

    def test_tied_scores_resolve_to_lower_index(self):
        truth = np.array([0.0, 1.0])
        assert not top_k_hit(np.array([0.5, 0.5]), truth, 1)


class TestSearchSpace:
    def test_samples_respect_bounds_and_types(self):
        rng = np.random.default_rng(0)
        space = SearchSpace(
            n_iter=4,
            inner_folds=2,
            distributions={
                "num_trees": {"type": "int_range", "low": 5, "high": 9},
                "learning_rate": {"type": "log_uniform", "low": 0.01, "high": 0.1},
                "subsample": {"type": "uniform", "low": 0.5, "high": 0.9},
                "max_depth": {"type": "choice", "values": [2, 4]},
            },
        )
        for _ in range(200):
            params = space.sample(rng)
            assert isinstance(params["num_trees"], int)
            assert 5 <= params["num_trees"] <= 9
            assert 0.01 <= params["learning_rate"] <= 0.1
            assert 0.5 <= params["subsample"] <= 0.9
            assert params["max_depth"] in (2, 4)

    def test_int_range_bounds_are_inclusive(self):
        rng = np.random.default_rng(1)
        space = SearchSpace(distributions={"num_trees": {"type": "int_range", "low": 1, "high": 2}})
        drawn = {space.sample(rng)["num_trees"] for _ in range(100)}
        assert drawn == {1, 2}

    def test_unknown_distribution_type_rejected(self):
        space = SearchSpace(distributions={"x": {"type": "mystery"}})
        with pytest.raises(ConfigError):
            space.sample(np.random.default_rng(0))

    def test_from_dict_validates_counts(self):
        space = SearchSpace.from_dict({"n_iter": 3, "inner_folds": 2})
        assert space.n_iter == 3
        with pytest.raises(ConfigError):
            SearchSpace.from_dict({"n_iter": 0})
        with pytest.raises(ConfigError):
            SearchSpace.from_dict({"inner_folds": 1})


class TestSelectorFoldMetrics:
    def test_recomposes_from_score_functions(self):
        pm = PerformanceMatrix(
            users=["u0", "u1"],
            algorithms=["a", "b"],
            values=np.array([[0.4, 0.6], [0.9, 0.3]]),
        )
        scores = {"u0": np.array([0.0, 1.0]), "u1": np.array([0.0, 1.0])}
        ndcg, top1, top3 = selector_fold_metrics(pm, ["u0", "u1"], lambda u: scores[u])
        assert ndcg == pytest.approx((0.6 + 0.3) / 2)
        assert top1 == 50.0
        assert top3 == 100.0


class TestNestedCv:
    def test_oracle_predictor_reproduces_vba_exactly(self):
        pm, uf = planted_problem()
        report = run_nested_cv(pm, uf, None, "user_only", n_folds=3, seed=5, predictor="oracle")
        assert report.methods["model"].fold_ndcg == report.methods["vba"].fold_ndcg
        assert report.methods["model"].fold_top1 == [100.0] * 3
        assert report.best_params_per_fold == [{}, {}, {}]

    def test_single_best_predictor_reproduces_sba_exactly(self):
        pm, uf = planted_problem()
        report = run_nested_cv(pm, uf, None, "user_only", n_folds=3, seed=5, predictor="single_best")
        assert report.methods["model"].fold_ndcg == report.methods["sba"].fold_ndcg
        assert report.methods["model"].fold_top1 == report.methods["sba"].fold_top1

    def test_user_only_model_learns_the_planted_split(self):
        pm, uf = planted_problem()
        report = run_nested_cv(pm, uf, None, "user_only", n_folds=3, space=LEAN_SPACE, seed=1)
        sba = report.methods["sba"].mean_ndcg()
        model = report.methods["model"].mean_ndcg()
        assert sba == pytest.approx(0.5, abs=0.05)
        assert model > sba + 0.2
        assert report.gap_closed_pct() > 60.0
        assert report.model_label == "M(User-Only)"
        assert report.sba_algorithm == "alpha"

    def test_user_algo_model_learns_through_pair_features(self):
        pm, uf = planted_problem()
        report = run_nested_cv(
            pm, uf, synthetic_algo_table(), "user_algo", n_folds=3, space=LEAN_SPACE, seed=1
        )
        assert report.methods["model"].mean_ndcg() > report.methods["sba"].mean_ndcg() + 0.2
        assert report.model_label == "M(User+Algo)"
        assert all(set(p) == {"num_trees", "learning_rate", "max_depth"} for p in report.best_params_per_fold)

    def test_same_seed_same_report(self):
        pm, uf = planted_problem(n_users=18)
        a = run_nested_cv(pm, uf, None, "user_only", n_folds=3, space=LEAN_SPACE, seed=9)
        b = run_nested_cv(pm, uf, None, "user_only", n_folds=3, space=LEAN_SPACE, seed=9)
        assert a.to_dict() == b.to_dict()

    def test_scaler_fits_on_training_rows_only(self, monkeypatch):
        pm, uf = planted_problem()
        recorded = []
        original = experiment.standardize_fit

        def spy(x):
            recorded.append(x.shape[0])
            return original(x)

        monkeypatch.setattr(experiment, "standardize_fit", spy)
        run_nested_cv(pm, uf, None, "user_only", n_folds=3, seed=2, predictor="oracle")
        assert recorded == [16, 16, 16]  # 24 users, 3 folds of 8 held out

    def test_mode_and_predictor_validation(self):
        pm, uf = planted_problem(n_users=6)
        with pytest.raises(ConfigError):
            run_nested_cv(pm, uf, None, "sideways", n_folds=2)
        with pytest.raises(ConfigError):
            run_nested_cv(pm, uf, None, "user_only", n_folds=2, predictor="psychic")
        with pytest.raises(ConfigError, match="algorithm feature table"):
            run_nested_cv(pm, uf, None, "user_algo", n_folds=2)

    def test_degenerate_matrix_reports_undefined_gap(self):
        users = [f"u{i}" for i in range(8)]
        values = np.tile([0.9, 0.1, 0.1], (8, 1))
        pm = PerformanceMatrix(users, ["a", "b", "c"], values)
        uf = UserFeatureTable(users, USER_FEATURE_NAMES, np.random.default_rng(0).normal(size=(8, 15)))
        report = run_nested_cv(pm, uf, None, "user_only", n_folds=2, seed=0, predictor="oracle")
        assert report.gap_closed_pct() is None
        assert "undefined" in report.render_markdown()

    def test_markdown_report_structure(self):
        pm, uf = planted_problem()
        report = run_nested_cv(pm, uf, None, "user_only", n_folds=3, seed=5, predictor="oracle")
        text = report.render_markdown()
        assert "| SBA |" in text
        assert "| VBA |" in text
        assert "Gap closed:" in text
        assert "Single best algorithm: alpha" in text

    def test_to_dict_is_json_serializable_with_summary_keys(self):
        pm, uf = planted_problem()
        report = run_nested_cv(pm, uf, None, "user_only", n_folds=3, seed=5, predictor="oracle")
        payload = json.loads(json.dumps(report.to_dict()))
        assert payload["n_users"] == 24
        method = payload["methods"]["model"]
        for key in ("mean_ndcg", "ci_ndcg", "mean_top1_pct", "ci_top1_pct", "fold_ndcg"):
            assert key in method


class TestFullEvaluation:
    def test_both_modes_share_folds_and_render_four_rows(self):
        pm, uf = planted_problem(n_users=18)
        combined = run_full_evaluation(pm, uf, synthetic_algo_table(), n_folds=3, space=LEAN_SPACE, seed=3)
        assert combined.user_only.methods["sba"].fold_ndcg == combined.user_algo.methods["sba"].fold_ndcg
        assert combined.user_only.methods["vba"].fold_ndcg == combined.user_algo.methods["vba"].fold_ndcg
        text = combined.render_markdown()
        for label in ("| SBA |", "| M(User-Only) |", "| M(User+Algo) |", "| VBA |"):
            assert label in text
        payload = combined.to_dict()
        assert set(payload) == {"user_only", "user_algo"}


class TestAblation:
    def test_labels(self):
        assert ablation_label(frozenset()) == "User-Only"
        assert ablation_label(frozenset(FEATURE_CATEGORIES)) == "All Features"
        assert ablation_label(frozenset({"Code"})) == "Code"
        assert ablation_label(frozenset({"Code", "AST"})) == "AST+Code"

    def test_default_sets(self):
        assert len(DEFAULT_ABLATION_SETS) == 6
        assert frozenset() in DEFAULT_ABLATION_SETS
        assert frozenset(FEATURE_CATEGORIES) in DEFAULT_ABLATION_SETS

    def test_endpoints_delegate_to_the_reference_runs(self):
        pm, uf = planted_problem(n_users=18)
        table = synthetic_algo_table()
        report = run_ablation(
            pm, uf, table,
            category_sets=[frozenset(), frozenset(FEATURE_CATEGORIES)],
            n_folds=3, space=LEAN_SPACE, seed=4,
        )
        user_only = run_nested_cv(pm, uf, None, "user_only", 3, LEAN_SPACE, 4)
        user_algo = run_nested_cv(pm, uf, table, "user_algo", 3, LEAN_SPACE, 4)
        assert report.entries["User-Only"].to_dict() == user_only.to_dict()
        assert report.entries["All Features"].to_dict() == user_algo.to_dict()

    def test_single_category_restricts_the_table(self):
        pm, uf = planted_problem(n_users=12)
        report = run_ablation(
            pm, uf, synthetic_algo_table(),
            category_sets=[frozenset({"Conceptual"})],
            n_folds=2, space=LEAN_SPACE, seed=4,
        )
        entry = report.entries["Conceptual"]
        assert entry.mode == "user_algo"
        text = report.render_markdown()
        assert "| Conceptual |" in text


class TestImportance:
    def test_aggregates_normalized_fold_importances(self):
        pm, uf = planted_problem()
        enc_names_table = synthetic_algo_table()
        report = run_importance(
            pm, uf, enc_names_table, n_folds=3,
            params=GBDTParams(num_trees=20, learning_rate=0.3, max_depth=3), seed=6,
        )
        assert report.feature_names[:15] == list(USER_FEATURE_NAMES)
        assert len(report.feature_names) == len(report.mean) == len(report.std)
        assert report.mean.sum() == pytest.approx(1.0, abs=1e-9)
        assert (report.mean >= 0).all()
        top = report.top(5)
        assert [t[0] for t in top] == [
            report.feature_names[i] for i in np.argsort(-report.mean, kind="stable")[:5]
        ]
        assert "num_interactions" in [t[0] for t in top]

    def test_markdown_lists_ranked_features(self):
        pm, uf = planted_problem(n_users=12)
        report = run_importance(
            pm, uf, synthetic_algo_table(), n_folds=2,
            params=GBDTParams(num_trees=10, max_depth=2), seed=0,
        )
        text = report.render_markdown()
        assert "| 1 |" in text
        assert "Mean importance" in text


class TestReportJson:
    def test_serialization_is_deterministic(self, tmp_path):
        pm, uf = planted_problem(n_users=12)
        report = run_nested_cv(pm, uf, None, "user_only", n_folds=2, seed=0, predictor="oracle")
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        report_to_json(report, str(a))
        report_to_json(report, str(b))
        assert a.read_bytes() == b.read_bytes()
        payload = json.loads(a.read_text())
        assert payload["mode"] == "user_only"
