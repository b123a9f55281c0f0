"""Self-knowledge meta-classifier: scaling, grid search, voting ensemble.

Pipeline: standardize features on the training table, rank every grid spec
by mean validation AUROC over three seeded 100-row validation subsets,
retrain the top two on the full table and average their probabilities.

Feature orientation: uncertainty scores (higher = more uncertain) are
negated when a design matrix is assembled, so every feature and the final
score share the "higher = more likely correct" direction. The evergreen
probability passes through unchanged; the EG-only configuration is exactly
that pass-through with no training at all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateDataError,
    PreconditionError,
    ValidationError,
)
from .evalmetrics import auroc
from .learners import ModelSpec, model_from_json_obj, train_model

UE_FEATURES = (
    "perplexity",
    "mean_token_entropy",
    "max_token_entropy",
    "neg_lexical_similarity",
    "sar",
    "eigval_laplacian",
)
EG_FEATURE = "p_evergreen"

VALIDATION_ROWS = 100
MIN_ROWS_FOR_FIXED_SUBSET = 200


@dataclass(frozen=True)
class FeatureRow:
    question_id: str
    features: dict[str, float | None]
    y: int | None = None


@dataclass
class FeatureTable:
    question_ids: list[str]
    feature_names: tuple[str, ...]
    x: np.ndarray
    y: np.ndarray | None

    def __len__(self) -> int:
        return len(self.question_ids)


def build_feature_table(
    rows: list[FeatureRow],
    feature_names,
    negate: tuple[str, ...] = UE_FEATURES,
    require_labels: bool = True,
) -> FeatureTable:
    """Assemble a design matrix; missing values take the column mean.

    Features named in `negate` are sign-flipped so that higher always means
    more likely correct.
    """
    feature_names = tuple(feature_names)
    if not rows:
        raise PreconditionError("empty feature table")
    n, d = len(rows), len(feature_names)
    x = np.full((n, d), np.nan)
    for i, row in enumerate(rows):
        for j, name in enumerate(feature_names):
            if name not in row.features:
                raise ValidationError(
                    f"row {row.question_id!r} lacks feature {name!r}"
                )
            v = row.features[name]
            if v is not None:
                x[i, j] = -v if name in negate else v
    for j in range(d):
        col = x[:, j]
        missing = np.isnan(col)
        if missing.all():
            col[missing] = 0.0
        elif missing.any():
            col[missing] = col[~missing].mean()
    if not np.all(np.isfinite(x)):
        raise ValidationError("non-finite feature values after imputation")
    y = None
    if require_labels:
        if any(row.y is None for row in rows):
            bad = [r.question_id for r in rows if r.y is None][:5]
            raise ValidationError(f"rows without correctness label: {bad}")
        y = np.array([row.y for row in rows], dtype=int)
    return FeatureTable(
        question_ids=[r.question_id for r in rows],
        feature_names=feature_names,
        x=x,
        y=y,
    )


# ---------------------------------------------------------------------------
# Standardization


@dataclass(frozen=True)
class ScalerStats:
    feature_names: tuple[str, ...]
    mean: tuple[float, ...]
    std: tuple[float, ...]  # population std; values below 1e-12 clamp to 1

    def to_json_obj(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mean": list(self.mean),
            "std": list(self.std),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ScalerStats":
        return cls(
            feature_names=tuple(obj["feature_names"]),
            mean=tuple(float(v) for v in obj["mean"]),
            std=tuple(float(v) for v in obj["std"]),
        )


def standardize(
    table: FeatureTable, stats: ScalerStats | None = None
) -> tuple[FeatureTable, ScalerStats]:
    """Fit-then-apply when stats is None (training); apply-only otherwise."""
    if len(table) == 0:
        raise PreconditionError("cannot standardize an empty table")
    if stats is None:
        mean = table.x.mean(axis=0)
        std = table.x.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        stats = ScalerStats(
            feature_names=table.feature_names,
            mean=tuple(float(v) for v in mean),
            std=tuple(float(v) for v in std),
        )
    elif stats.feature_names != table.feature_names:
        raise ConfigurationError(
            f"scaler features {stats.feature_names} do not match table "
            f"features {table.feature_names}"
        )
    mean = np.array(stats.mean)
    std = np.array(stats.std)
    scaled = FeatureTable(
        question_ids=list(table.question_ids),
        feature_names=table.feature_names,
        x=(table.x - mean) / std,
        y=None if table.y is None else table.y.copy(),
    )
    return scaled, stats


# ---------------------------------------------------------------------------
# Hyperparameter grids


def _expand(family: str, axes: dict[str, list]) -> list[ModelSpec]:
    specs: list[ModelSpec] = [ModelSpec.make(family)]
    for key, values in axes.items():
        specs = [
            ModelSpec.make(s.family, **{**s.as_dict(), key: v})
            for s in specs
            for v in values
        ]
    return specs


def full_grids() -> list[ModelSpec]:
    """The declared grids, verbatim. Solver and neighbour-search algorithm
    entries map to the single built-in implementation and are kept on the
    spec for provenance only; "equal" denotes the explicit unit-weight map."""
    specs: list[ModelSpec] = []
    specs += _expand(
        "logreg",
        {
            "C": [0.01, 0.1, 1],
            "solver": ["lbfgs", "liblinear"],
            "class_weight": ["balanced", "equal", None],
            "max_iter": [10_000, 15_000, 20_000],
        },
    )
    specs += _expand(
        "knn",
        {
            "n_neighbors": [5, 7, 9, 11, 13, 15],
            "metric": ["euclidean", "manhattan"],
            "algorithm": ["auto", "ball_tree", "kd_tree"],
            "weights": ["uniform", "distance"],
        },
    )
    specs += _expand(
        "decision_tree",
        {
            "max_depth": [3, 5, 7, 10, None],
            "max_features": [0.2, 0.4, "sqrt", "log2", None],
            "criterion": ["gini", "entropy"],
            "splitter": ["best", "random"],
        },
    )
    specs += _expand(
        "random_forest",
        {
            "n_estimators": [25, 35, 50],
            "max_depth": [3, 5, 7, 9, 11],
            "max_features": [0.2, 0.4, "sqrt", "log2", None],
            "bootstrap": [True, False],
            "criterion": ["gini", "entropy"],
            "class_weight": ["balanced", "equal", None],
        },
    )
    specs += _expand(
        "gradient_boosting",
        {
            "n_estimators": [25, 35, 50],
            "learning_rate": [0.001, 0.01, 0.05],
            "max_depth": [3, 4, 5, 7, 9],
            "max_features": [0.2, 0.4, "sqrt", "log2", None],
        },
    )
    return specs


def fast_grids() -> list[ModelSpec]:
    """Desk-scale subset: the primary axis of every family at full range,
    secondary axes pinned to their defaults."""
    specs: list[ModelSpec] = []
    specs += _expand("logreg", {"C": [0.01, 0.1, 1]})
    specs += _expand("knn", {"n_neighbors": [5, 9, 15]})
    specs += _expand("decision_tree", {"max_depth": [3, 7, None]})
    specs += _expand(
        "random_forest", {"n_estimators": [25], "max_depth": [5, 11], "max_features": ["sqrt"]}
    )
    specs += _expand(
        "gradient_boosting",
        {"n_estimators": [25], "learning_rate": [0.05], "max_depth": [3, 5]},
    )
    return specs


FAMILY_DEFAULTS: dict[str, dict] = {
    "logreg": {"C": 1, "solver": "lbfgs", "class_weight": None, "max_iter": 10_000},
    "knn": {"n_neighbors": 5, "metric": "euclidean", "algorithm": "auto", "weights": "uniform"},
    "decision_tree": {"max_depth": None, "max_features": None, "criterion": "gini", "splitter": "best"},
    "random_forest": {
        "n_estimators": 25, "max_depth": None, "max_features": None,
        "bootstrap": True, "criterion": "gini", "class_weight": None,
    },
    "gradient_boosting": {
        "n_estimators": 25, "learning_rate": 0.05, "max_depth": 3, "max_features": None,
    },
}


def _non_default_count(spec: ModelSpec) -> int:
    defaults = FAMILY_DEFAULTS[spec.family]
    return sum(1 for k, v in spec.params if defaults.get(k, object()) != v)


# ---------------------------------------------------------------------------
# Grid search and the voting ensemble


@dataclass
class GridSearchResult:
    ranked: list[tuple[ModelSpec, float]]
    seeds: tuple[int, ...]
    provenance: dict = field(default_factory=dict)


def _validation_split(table: FeatureTable, seed: int, provenance: dict):
    n = len(table)
    rng = np.random.default_rng(seed)
    if n >= MIN_ROWS_FOR_FIXED_SUBSET:
        n_val = VALIDATION_ROWS
    else:
        n_val = max(1, round(0.2 * n))
        provenance.setdefault("warnings", []).append(
            f"train table has {n} rows (< {MIN_ROWS_FOR_FIXED_SUBSET}); "
            f"validation subset scaled to 20% = {n_val} rows"
        )
    for attempt in range(20):
        perm = rng.permutation(n)
        val_idx = perm[:n_val]
        fit_idx = perm[n_val:]
        y_val = table.y[val_idx]
        y_fit = table.y[fit_idx]
        if y_val.min() != y_val.max() and y_fit.min() != y_fit.max():
            if attempt:
                provenance.setdefault("warnings", []).append(
                    f"seed {seed}: redrew validation subset {attempt} time(s) "
                    "to cover both classes"
                )
            return fit_idx, val_idx
    raise DegenerateDataError(
        "could not draw a validation subset containing both classes"
    )


def grid_search(
    grids: list[ModelSpec],
    train_table: FeatureTable,
    seeds: tuple[int, int, int] = (0, 1, 2),
) -> GridSearchResult:
    """Rank specs by mean validation AUROC over the seeds.

    Ties break on fewer non-default hyperparameters, then on lexicographic
    spec order. Validation subsets are drawn unstratified, without
    replacement, and redrawn when one side misses a class.
    """
    if not grids:
        raise PreconditionError("grid_search requires at least one spec")
    if train_table.y is None:
        raise ValidationError("grid_search requires a labeled table")
    provenance: dict = {"validation_rows": [], "metric": "auroc"}
    scores: dict[ModelSpec, list[float]] = {spec: [] for spec in grids}
    for seed in seeds:
        fit_idx, val_idx = _validation_split(train_table, seed, provenance)
        provenance["validation_rows"].append(int(len(val_idx)))
        x_fit, y_fit = train_table.x[fit_idx], train_table.y[fit_idx]
        x_val, y_val = train_table.x[val_idx], train_table.y[val_idx]
        for spec in grids:
            model = train_model(spec, x_fit, y_fit, seed)
            scores[spec].append(auroc(model.predict_proba(x_val), y_val))
    ranked = sorted(
        ((spec, float(np.mean(scores[spec]))) for spec in grids),
        key=lambda item: (
            -item[1],
            _non_default_count(item[0]),
            item[0].family,
            item[0].canonical_json(),
        ),
    )
    return GridSearchResult(ranked=ranked, seeds=tuple(seeds), provenance=provenance)


@dataclass
class VotingEnsemble:
    """Soft vote: the arithmetic mean of two members' probabilities."""

    specs: tuple[ModelSpec, ModelSpec]
    members: tuple[object, object]

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return 0.5 * (
            self.members[0].predict_proba(x) + self.members[1].predict_proba(x)
        )


def build_ensemble(
    ranked: list[tuple[ModelSpec, float]],
    train_table: FeatureTable,
    seed: int = 0,
) -> VotingEnsemble:
    """Retrain the two best specs on the full training table."""
    distinct: list[ModelSpec] = []
    for spec, _ in ranked:
        if spec not in distinct:
            distinct.append(spec)
        if len(distinct) == 2:
            break
    if len(distinct) < 2:
        raise ConfigurationError("build_ensemble needs at least 2 distinct specs")
    members = tuple(
        train_model(spec, train_table.x, train_table.y, seed) for spec in distinct
    )
    return VotingEnsemble(specs=(distinct[0], distinct[1]), members=members)


# ---------------------------------------------------------------------------
# Trained pipeline: scaler + ensemble (or the EG pass-through)


@dataclass
class SelfKnowledgeModel:
    """Everything needed to score unseen rows for one configuration."""

    configuration: str
    feature_names: tuple[str, ...]
    scaler: ScalerStats | None
    ensemble: VotingEnsemble | None
    grid_scores: list[tuple[str, float]] = field(default_factory=list)
    seeds: tuple[int, ...] = (0, 1, 2)
    provenance: dict = field(default_factory=dict)

    @property
    def is_passthrough(self) -> bool:
        return self.ensemble is None

    def score_table(self, table: FeatureTable) -> np.ndarray:
        if table.feature_names != self.feature_names:
            raise ConfigurationError(
                f"feature set mismatch: model expects {self.feature_names}, "
                f"table has {table.feature_names}"
            )
        if self.is_passthrough:
            idx = self.feature_names.index(EG_FEATURE)
            return table.x[:, idx].copy()
        scaled, _ = standardize(table, self.scaler)
        return self.ensemble.predict_proba(scaled.x)

    def score_row(self, row: FeatureRow) -> float:
        table = build_feature_table([row], self.feature_names, require_labels=False)
        return float(self.score_table(table)[0])

    def to_json_obj(self) -> dict:
        return {
            "configuration": self.configuration,
            "feature_names": list(self.feature_names),
            "scaler": None if self.scaler is None else self.scaler.to_json_obj(),
            "members": None
            if self.ensemble is None
            else [
                {
                    "spec": json.loads(spec.canonical_json()),
                    "model": member.to_json_obj(),
                }
                for spec, member in zip(self.ensemble.specs, self.ensemble.members)
            ],
            "grid_scores": self.grid_scores,
            "seeds": list(self.seeds),
            "provenance": self.provenance,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SelfKnowledgeModel":
        ensemble = None
        if obj.get("members") is not None:
            specs = tuple(
                ModelSpec.make(m["spec"]["family"], **m["spec"]["params"])
                for m in obj["members"]
            )
            members = tuple(model_from_json_obj(m["model"]) for m in obj["members"])
            ensemble = VotingEnsemble(specs=specs, members=members)
        return cls(
            configuration=obj["configuration"],
            feature_names=tuple(obj["feature_names"]),
            scaler=None if obj.get("scaler") is None else ScalerStats.from_json_obj(obj["scaler"]),
            ensemble=ensemble,
            grid_scores=[(s, float(v)) for s, v in obj.get("grid_scores", [])],
            seeds=tuple(obj.get("seeds", (0, 1, 2))),
            provenance=obj.get("provenance", {}),
        )


def train_selfknowledge(
    configuration: str,
    feature_names,
    train_rows: list[FeatureRow],
    grids: list[ModelSpec] | None = None,
    seeds: tuple[int, int, int] = (0, 1, 2),
) -> SelfKnowledgeModel:
    """Grid search + top-2 soft-voting ensemble for one feature subset.

    The EG-only configuration (feature set == {p_evergreen}) skips training
    entirely and scores by the evergreen probability itself.
    """
    feature_names = tuple(feature_names)
    if feature_names == (EG_FEATURE,):
        return SelfKnowledgeModel(
            configuration=configuration,
            feature_names=feature_names,
            scaler=None,
            ensemble=None,
            provenance={"mode": "passthrough"},
        )
    if grids is None:
        grids = fast_grids()
    table = build_feature_table(train_rows, feature_names)
    scaled, stats = standardize(table)
    result = grid_search(grids, scaled, seeds)
    ensemble = build_ensemble(result.ranked, scaled, seed=seeds[0])
    return SelfKnowledgeModel(
        configuration=configuration,
        feature_names=feature_names,
        scaler=stats,
        ensemble=ensemble,
        grid_scores=[(s.canonical_json(), v) for s, v in result.ranked],
        seeds=tuple(seeds),
        provenance=result.provenance,
    )
