"""Nested cross-validation of per-user algorithm selection.

Outer folds partition users; per fold, random-search HPO (inner user folds,
validation MSE of predicted vs. true per-algorithm NDCG) picks the meta-
learner configuration, which is refit on the outer training users and applied
to the held-out users in four steps: predict scores for every portfolio
algorithm, select the argmax, look up the realized NDCG in the performance
matrix, and aggregate. SBA and VBA run through the same selection plumbing
with constant and oracle score functions.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .algo_features import FEATURE_CATEGORIES, AlgorithmFeatureTable
from .errors import ConfigError
from .ground_truth import PerformanceMatrix, gap_closed, single_best_algorithm
from .meta import (
    GBDTParams,
    build_long,
    build_wide,
    encode_algo_features,
    fit_gbdt,
    fit_multi_output_gbdt,
    predict_scores_user_algo,
    predict_scores_user_only,
    select_algorithm,
    standardize_apply,
    standardize_fit,
)
from .user_features import UserFeatureTable

logger = logging.getLogger(__name__)

MODES = ("user_only", "user_algo")
PREDICTORS = ("model", "oracle", "single_best")


def derive_seed(*parts) -> int:
    """Stable 63-bit sub-seed from string-able parts (never clock-dependent)."""
    digest = hashlib.blake2b("/".join(str(p) for p in parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def make_user_folds(users: Sequence[str], n_folds: int, seed: int) -> list[list[str]]:
    """Seeded shuffle then round-robin assignment; fold sizes differ by <= 1."""
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    if n_folds > len(users):
        raise ValueError(f"cannot make {n_folds} folds from {len(users)} users")
    order = np.random.default_rng(seed).permutation(len(users))
    folds: list[list[str]] = [[] for _ in range(n_folds)]
    for position, user_idx in enumerate(order):
        folds[position % n_folds].append(users[user_idx])
    return folds


def assert_user_disjoint(folds: Sequence[Sequence[str]]) -> None:
    seen: set[str] = set()
    for fold in folds:
        for user in fold:
            if user in seen:
                raise AssertionError(f"user {user!r} appears in more than one fold")
            seen.add(user)


@dataclass(frozen=True)
class SearchSpace:
    """Random-search distributions over GBDT hyperparameters."""

    n_iter: int = 50
    inner_folds: int = 3
    distributions: Mapping[str, Mapping] = field(
        default_factory=lambda: {
            "num_trees": {"type": "int_range", "low": 50, "high": 400},
            "learning_rate": {"type": "log_uniform", "low": 0.01, "high": 0.3},
            "max_depth": {"type": "int_range", "low": 2, "high": 8},
            "min_samples_leaf": {"type": "int_range", "low": 1, "high": 50},
            "subsample": {"type": "uniform", "low": 0.6, "high": 1.0},
        }
    )

    def sample(self, rng: np.random.Generator) -> dict:
        params = {}
        for name in self.distributions:  # insertion order fixes the draw order
            spec = self.distributions[name]
            kind = spec["type"]
            if kind == "int_range":
                params[name] = int(rng.integers(spec["low"], spec["high"] + 1))
            elif kind == "log_uniform":
                params[name] = float(np.exp(rng.uniform(np.log(spec["low"]), np.log(spec["high"]))))
            elif kind == "uniform":
                params[name] = float(rng.uniform(spec["low"], spec["high"]))
            elif kind == "choice":
                params[name] = spec["values"][int(rng.integers(len(spec["values"])))]
            else:
                raise ConfigError(f"unknown distribution type {kind!r} for {name!r}")
        return params

    @classmethod
    def from_dict(cls, raw: dict) -> "SearchSpace":
        kwargs = {}
        if "n_iter" in raw:
            kwargs["n_iter"] = int(raw["n_iter"])
        if "inner_folds" in raw:
            kwargs["inner_folds"] = int(raw["inner_folds"])
        if "distributions" in raw:
            kwargs["distributions"] = raw["distributions"]
        space = cls(**kwargs)
        if space.n_iter < 1 or space.inner_folds < 2:
            raise ConfigError("search space needs n_iter >= 1 and inner_folds >= 2")
        return space


DEFAULT_SPACE = SearchSpace()


def ci_half_width(values: Sequence[float], confidence: float = 0.95) -> float | None:
    """Student-t half-width of the mean; None when only one value exists."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n < 2:
        return None
    sem = values.std(ddof=1) / math.sqrt(n)
    return float(stats.t.ppf(0.5 * (1.0 + confidence), n - 1) * sem)


def top_k_hit(scores: np.ndarray, truth_row: np.ndarray, k: int) -> bool:
    """True when any truly-best algorithm appears in the predicted top k."""
    order = np.lexsort((np.arange(scores.shape[0]), -scores))[:k]
    truth_best = np.flatnonzero(truth_row == truth_row.max())
    return bool(np.isin(order, truth_best).any())


@dataclass
class MethodResult:
    """Per-fold metrics of one selection method."""

    name: str
    fold_ndcg: list[float] = field(default_factory=list)
    fold_top1: list[float] = field(default_factory=list)
    fold_top3: list[float] = field(default_factory=list)

    def mean_ndcg(self) -> float:
        return float(np.mean(self.fold_ndcg))

    def summary(self) -> dict:
        return {
            "name": self.name,
            "fold_ndcg": self.fold_ndcg,
            "fold_top1_pct": self.fold_top1,
            "fold_top3_pct": self.fold_top3,
            "mean_ndcg": self.mean_ndcg(),
            "ci_ndcg": ci_half_width(self.fold_ndcg),
            "mean_top1_pct": float(np.mean(self.fold_top1)),
            "ci_top1_pct": ci_half_width(self.fold_top1),
            "mean_top3_pct": float(np.mean(self.fold_top3)),
            "ci_top3_pct": ci_half_width(self.fold_top3),
        }


def selector_fold_metrics(
    pm: PerformanceMatrix,
    users: Sequence[str],
    score_fn: Callable[[str], np.ndarray],
) -> tuple[float, float, float]:
    """Predict, select, look up, aggregate for one set of held-out users."""
    achieved, hits1, hits3 = [], 0, 0
    for user in users:
        scores = np.asarray(score_fn(user), dtype=np.float64)
        chosen = select_algorithm(scores)
        truth_row = pm.row(user)
        achieved.append(float(truth_row[chosen]))
        hits1 += top_k_hit(scores, truth_row, 1)
        hits3 += top_k_hit(scores, truth_row, 3)
    n = len(users)
    return float(np.mean(achieved)), 100.0 * hits1 / n, 100.0 * hits3 / n


@dataclass
class EvaluationReport:
    """Outcome of one nested-CV run plus its SBA/VBA reference rows."""

    mode: str
    predictor: str
    algorithms: list[str]
    n_folds: int
    seed: int
    n_users: int
    sba_algorithm: str
    methods: dict[str, MethodResult]
    best_params_per_fold: list[dict]
    model_label: str

    def gap_closed_pct(self) -> float | None:
        sba = self.methods["sba"].mean_ndcg()
        vba = self.methods["vba"].mean_ndcg()
        model = self.methods["model"].mean_ndcg()
        if vba <= sba:
            return None
        return gap_closed(model, sba, vba)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "predictor": self.predictor,
            "algorithms": self.algorithms,
            "n_folds": self.n_folds,
            "seed": self.seed,
            "n_users": self.n_users,
            "sba_algorithm": self.sba_algorithm,
            "model_label": self.model_label,
            "methods": {k: m.summary() for k, m in self.methods.items()},
            "best_params_per_fold": self.best_params_per_fold,
            "gap_closed_pct": self.gap_closed_pct(),
        }

    def render_markdown(self) -> str:
        rows = [
            ("SBA", self.methods["sba"]),
            (self.model_label, self.methods["model"]),
            ("VBA", self.methods["vba"]),
        ]
        lines = [
            f"# Selection results ({self.model_label}, {self.n_folds}-fold, seed {self.seed})",
            "",
            "| Method | NDCG@10 | 95% CI | Top-1 % | Top-3 % |",
            "|---|---|---|---|---|",
        ]
        for label, m in rows:
            s = m.summary()
            ci = f"±{s['ci_ndcg']:.3f}" if s["ci_ndcg"] is not None else "n/a"
            lines.append(
                f"| {label} | {s['mean_ndcg']:.3f} | {ci} | "
                f"{s['mean_top1_pct']:.1f} | {s['mean_top3_pct']:.1f} |"
            )
        gap = self.gap_closed_pct()
        lines.append("")
        lines.append(
            f"Gap closed: {gap:.1f}%" if gap is not None else "Gap closed: undefined (VBA <= SBA)"
        )
        lines.append(f"Single best algorithm: {self.sba_algorithm}")
        return "\n".join(lines) + "\n"


def _mode_label(mode: str) -> str:
    return "M(User-Only)" if mode == "user_only" else "M(User+Algo)"


def _fit_predictor(
    mode: str,
    params: GBDTParams,
    pm: PerformanceMatrix,
    train_users: list[str],
    user_rows: Mapping[str, np.ndarray],
    enc,
):
    """Fit one meta-learner on training users; returns a per-user score_fn."""
    x_train = np.vstack([user_rows[u] for u in train_users])
    if mode == "user_only":
        wide = build_wide(pm, x_train, train_users, [])
        model = fit_multi_output_gbdt(wide.x, wide.y, params)
        return model, lambda user: predict_scores_user_only(model, user_rows[user])
    long = build_long(pm, x_train, train_users, [], enc)
    model = fit_gbdt(long.x, long.y, params)
    return model, lambda user: predict_scores_user_algo(model, user_rows[user], enc, pm.algorithms)


def _score_fn_mse(
    pm: PerformanceMatrix, users: Sequence[str], score_fn: Callable[[str], np.ndarray]
) -> float:
    errors = []
    for user in users:
        predicted = np.asarray(score_fn(user), dtype=np.float64)
        errors.append(np.mean((predicted - pm.row(user)) ** 2))
    return float(np.mean(errors))


def run_nested_cv(
    pm: PerformanceMatrix,
    user_features: UserFeatureTable,
    algo_table: AlgorithmFeatureTable | None,
    mode: str = "user_only",
    n_folds: int = 10,
    space: SearchSpace | None = None,
    seed: int = 0,
    predictor: str = "model",
) -> EvaluationReport:
    """Outer-fold evaluation of one meta-learner mode against SBA and VBA.

    ``predictor`` swaps the fitted model for diagnostic selectors that reuse
    the identical fold plumbing: "oracle" scores with the true rows (must
    reproduce VBA exactly) and "single_best" scores every user with the
    global column means (must reproduce SBA exactly).
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    if predictor not in PREDICTORS:
        raise ConfigError(f"predictor must be one of {PREDICTORS}")
    if mode == "user_algo" and algo_table is None and predictor == "model":
        raise ConfigError("user_algo mode requires an algorithm feature table")
    space = space or DEFAULT_SPACE

    users = list(pm.users)
    folds = make_user_folds(users, n_folds, seed)
    assert_user_disjoint(folds)

    sba_algorithm, _ = single_best_algorithm(pm)
    column_means = pm.column_means()
    enc = encode_algo_features(algo_table) if (mode == "user_algo" and algo_table is not None) else None

    methods = {
        "sba": MethodResult("SBA"),
        "vba": MethodResult("VBA"),
        "model": MethodResult(_mode_label(mode) if predictor == "model" else predictor),
    }
    best_params_per_fold: list[dict] = []

    feature_matrix = user_features.subset(users).matrix
    for fold_idx, test_users in enumerate(folds):
        test_set = set(test_users)
        train_users = [u for u in users if u not in test_set]

        scaler = standardize_fit(feature_matrix[[users.index(u) for u in train_users]])
        user_rows = {
            u: standardize_apply(scaler, feature_matrix[users.index(u)][None, :])[0] for u in users
        }

        if predictor == "oracle":
            score_fn = lambda user: pm.row(user)  # noqa: E731
            best_params_per_fold.append({})
        elif predictor == "single_best":
            score_fn = lambda user: column_means  # noqa: E731
            best_params_per_fold.append({})
        else:
            best = _random_search(
                pm, space, mode, train_users, user_rows, enc, seed, fold_idx
            )
            best_params_per_fold.append(best)
            params = GBDTParams(**best, seed=derive_seed(seed, "refit", fold_idx)).validate()
            _, score_fn = _fit_predictor(mode, params, pm, train_users, user_rows, enc)

        ndcg, top1, top3 = selector_fold_metrics(pm, test_users, score_fn)
        methods["model"].fold_ndcg.append(ndcg)
        methods["model"].fold_top1.append(top1)
        methods["model"].fold_top3.append(top3)

        sba_metrics = selector_fold_metrics(pm, test_users, lambda user: column_means)
        methods["sba"].fold_ndcg.append(sba_metrics[0])
        methods["sba"].fold_top1.append(sba_metrics[1])
        methods["sba"].fold_top3.append(sba_metrics[2])

        vba_metrics = selector_fold_metrics(pm, test_users, lambda user: pm.row(user))
        methods["vba"].fold_ndcg.append(vba_metrics[0])
        methods["vba"].fold_top1.append(vba_metrics[1])
        methods["vba"].fold_top3.append(vba_metrics[2])

    return EvaluationReport(
        mode=mode,
        predictor=predictor,
        algorithms=list(pm.algorithms),
        n_folds=n_folds,
        seed=seed,
        n_users=len(users),
        sba_algorithm=sba_algorithm,
        methods=methods,
        best_params_per_fold=best_params_per_fold,
        model_label=methods["model"].name,
    )


def _random_search(pm, space, mode, train_users, user_rows, enc, seed, fold_idx) -> dict:
    """Random search scored by inner-fold validation MSE; first best wins ties."""
    rng = np.random.default_rng(derive_seed(seed, "hpo", fold_idx))
    candidates = [space.sample(rng) for _ in range(space.n_iter)]
    inner = make_user_folds(train_users, space.inner_folds, derive_seed(seed, "inner", fold_idx))
    train_set = list(train_users)

    best_params, best_mse = None, np.inf
    for c_idx, candidate in enumerate(candidates):
        fold_mses = []
        for i_idx, val_users in enumerate(inner):
            val_set = set(val_users)
            fit_users = [u for u in train_set if u not in val_set]
            params = GBDTParams(
                **candidate, seed=derive_seed(seed, "inner-fit", fold_idx, c_idx, i_idx)
            ).validate()
            _, score_fn = _fit_predictor(mode, params, pm, fit_users, user_rows, enc)
            fold_mses.append(_score_fn_mse(pm, val_users, score_fn))
        mse = float(np.mean(fold_mses))
        if mse < best_mse:
            best_mse, best_params = mse, candidate
    return best_params


@dataclass
class CombinedReport:
    """SBA / M(User-Only) / M(User+Algo) / VBA in one table."""

    user_only: EvaluationReport
    user_algo: EvaluationReport

    def to_dict(self) -> dict:
        return {"user_only": self.user_only.to_dict(), "user_algo": self.user_algo.to_dict()}

    def render_markdown(self) -> str:
        uo, ua = self.user_only, self.user_algo
        rows = [
            ("SBA", uo.methods["sba"], None),
            ("M(User-Only)", uo.methods["model"], uo.gap_closed_pct()),
            ("M(User+Algo)", ua.methods["model"], ua.gap_closed_pct()),
            ("VBA", uo.methods["vba"], None),
        ]
        lines = [
            f"# Per-user algorithm selection ({uo.n_folds}-fold, seed {uo.seed})",
            "",
            "| Method | NDCG@10 | 95% CI | Top-1 % | Top-3 % | Gap closed % |",
            "|---|---|---|---|---|---|",
        ]
        for label, m, gap in rows:
            s = m.summary()
            ci = f"±{s['ci_ndcg']:.3f}" if s["ci_ndcg"] is not None else "n/a"
            gap_text = f"{gap:.1f}" if gap is not None else "-"
            lines.append(
                f"| {label} | {s['mean_ndcg']:.3f} | {ci} | {s['mean_top1_pct']:.1f} | "
                f"{s['mean_top3_pct']:.1f} | {gap_text} |"
            )
        lines.append("")
        lines.append(f"Single best algorithm: {uo.sba_algorithm}")
        return "\n".join(lines) + "\n"


def run_full_evaluation(
    pm: PerformanceMatrix,
    user_features: UserFeatureTable,
    algo_table: AlgorithmFeatureTable,
    n_folds: int = 10,
    space: SearchSpace | None = None,
    seed: int = 0,
) -> CombinedReport:
    """Both meta-learner modes on identical folds (same seed, same users)."""
    user_only = run_nested_cv(pm, user_features, None, "user_only", n_folds, space, seed)
    user_algo = run_nested_cv(pm, user_features, algo_table, "user_algo", n_folds, space, seed)
    return CombinedReport(user_only=user_only, user_algo=user_algo)


DEFAULT_ABLATION_SETS: tuple[frozenset, ...] = (
    frozenset(),
    frozenset({"Code"}),
    frozenset({"AST"}),
    frozenset({"Performance"}),
    frozenset({"Conceptual"}),
    frozenset(FEATURE_CATEGORIES),
)


def ablation_label(categories: frozenset) -> str:
    if not categories:
        return "User-Only"
    if categories == frozenset(FEATURE_CATEGORIES):
        return "All Features"
    return "+".join(sorted(categories))


@dataclass
class AblationReport:
    n_folds: int
    seed: int
    entries: dict[str, EvaluationReport]

    def to_dict(self) -> dict:
        return {
            "n_folds": self.n_folds,
            "seed": self.seed,
            "entries": {label: report.to_dict() for label, report in self.entries.items()},
        }

    def render_markdown(self) -> str:
        lines = [
            f"# Feature-category ablation ({self.n_folds}-fold, seed {self.seed})",
            "",
            "| Features | NDCG@10 | 95% CI | Gap closed % |",
            "|---|---|---|---|",
        ]
        for label, report in self.entries.items():
            s = report.methods["model"].summary()
            ci = f"±{s['ci_ndcg']:.3f}" if s["ci_ndcg"] is not None else "n/a"
            gap = report.gap_closed_pct()
            gap_text = f"{gap:.1f}" if gap is not None else "-"
            lines.append(f"| {label} | {s['mean_ndcg']:.3f} | {ci} | {gap_text} |")
        return "\n".join(lines) + "\n"


def run_ablation(
    pm: PerformanceMatrix,
    user_features: UserFeatureTable,
    algo_table: AlgorithmFeatureTable,
    category_sets: Sequence[frozenset] | None = None,
    n_folds: int = 5,
    space: SearchSpace | None = None,
    seed: int = 0,
) -> AblationReport:
    """Meta-learner runs restricted to category subsets of algorithm features.

    The empty set is the user-only configuration and delegates to the exact
    user-only run; the full set delegates to the unrestricted user+algo run.
    """
    category_sets = list(category_sets) if category_sets is not None else list(DEFAULT_ABLATION_SETS)
    entries: dict[str, EvaluationReport] = {}
    for categories in category_sets:
        label = ablation_label(frozenset(categories))
        if not categories:
            entries[label] = run_nested_cv(
                pm, user_features, None, "user_only", n_folds, space, seed
            )
        else:
            table = algo_table.filter_categories(set(categories))
            entries[label] = run_nested_cv(
                pm, user_features, table, "user_algo", n_folds, space, seed
            )
    return AblationReport(n_folds=n_folds, seed=seed, entries=entries)


@dataclass
class ImportanceReport:
    feature_names: list[str]
    mean: np.ndarray
    std: np.ndarray
    n_folds: int
    seed: int

    def top(self, k: int = 20) -> list[tuple[str, float, float]]:
        order = np.argsort(-self.mean, kind="stable")[:k]
        return [(self.feature_names[i], float(self.mean[i]), float(self.std[i])) for i in order]

    def to_dict(self) -> dict:
        return {
            "n_folds": self.n_folds,
            "seed": self.seed,
            "features": [
                {"name": n, "mean": float(m), "std": float(s)}
                for n, m, s in zip(self.feature_names, self.mean, self.std)
            ],
            "top20": [
                {"name": n, "mean": m, "std": s} for n, m, s in self.top(20)
            ],
        }

    def render_markdown(self) -> str:
        lines = [
            f"# Feature importance ({self.n_folds}-fold, seed {self.seed})",
            "",
            "| Rank | Feature | Mean importance | Std |",
            "|---|---|---|---|",
        ]
        for rank, (name, mean, std) in enumerate(self.top(20), start=1):
            lines.append(f"| {rank} | {name} | {mean:.4f} | {std:.4f} |")
        return "\n".join(lines) + "\n"


def run_importance(
    pm: PerformanceMatrix,
    user_features: UserFeatureTable,
    algo_table: AlgorithmFeatureTable,
    n_folds: int = 5,
    params: GBDTParams | None = None,
    seed: int = 0,
) -> ImportanceReport:
    """Split-gain importance of the pair model, aggregated over folds."""
    users = list(pm.users)
    folds = make_user_folds(users, n_folds, seed)
    assert_user_disjoint(folds)
    enc = encode_algo_features(algo_table)
    feature_matrix = user_features.subset(users).matrix
    base = params or GBDTParams()

    names = list(user_features.names) + list(enc.feature_names)
    vectors = []
    for fold_idx, test_users in enumerate(folds):
        test_set = set(test_users)
        train_users = [u for u in users if u not in test_set]
        scaler = standardize_fit(feature_matrix[[users.index(u) for u in train_users]])
        user_rows = {
            u: standardize_apply(scaler, feature_matrix[users.index(u)][None, :])[0]
            for u in train_users
        }
        fit_params = GBDTParams(
            num_trees=base.num_trees,
            learning_rate=base.learning_rate,
            max_depth=base.max_depth,
            min_samples_leaf=base.min_samples_leaf,
            subsample=base.subsample,
            seed=derive_seed(seed, "importance", fold_idx),
        ).validate()
        x_train = np.vstack([user_rows[u] for u in train_users])
        long = build_long(pm, x_train, train_users, [], enc)
        model = fit_gbdt(long.x, long.y, fit_params)
        importance = model.feature_importance()
        total = importance.sum()
        if total > 0 and abs(total - 1.0) > 1e-6:
            raise AssertionError("feature importance must sum to 1 within 1e-6")
        vectors.append(importance)

    stacked = np.vstack(vectors)
    return ImportanceReport(
        feature_names=names,
        mean=stacked.mean(axis=0),
        std=stacked.std(axis=0),
        n_folds=n_folds,
        seed=seed,
    )


def report_to_json(report, path: str) -> None:
    """Serialize any report dataclass with a to_dict method, deterministically."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
