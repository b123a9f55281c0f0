"""From-scratch binary classifiers for the self-knowledge meta-task.

Five families: logistic regression, k-nearest neighbours, decision tree,
random forest and gradient boosting. Every learner is deterministic under
(spec, data, seed), predicts P(y = 1), and serializes to plain JSON.

Unsupported knobs from the hyperparameter grids (solver and neighbour-search
algorithm names) all map to the single built-in implementation; they stay on
the spec for provenance.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DegenerateDataError, PreconditionError, ValidationError

FAMILIES = ("logreg", "knn", "decision_tree", "random_forest", "gradient_boosting")


@dataclass(frozen=True)
class ModelSpec:
    family: str
    params: tuple[tuple[str, object], ...]

    @classmethod
    def make(cls, family: str, **params) -> "ModelSpec":
        if family not in FAMILIES:
            raise ValidationError(f"unknown model family {family!r}")
        return cls(family=family, params=tuple(sorted(params.items())))

    def get(self, key: str, default=None):
        for k, v in self.params:
            if k == key:
                return v
        return default

    def as_dict(self) -> dict:
        return dict(self.params)

    def canonical_json(self) -> str:
        return json.dumps(
            {"family": self.family, "params": self.as_dict()}, sort_keys=True
        )

    def derived_seed(self, seed: int) -> int:
        digest = hashlib.sha256(
            f"{self.canonical_json()}|{seed}".encode("utf-8")
        ).digest()
        return int.from_bytes(digest[:8], "little")


def _class_sample_weights(y: np.ndarray, class_weight) -> np.ndarray:
    """balanced -> weights proportional to inverse class frequency;
    anything else (None / "equal") -> uniform."""
    if class_weight == "balanced":
        n = len(y)
        n_pos = int(y.sum())
        w_pos = n / (2.0 * n_pos)
        w_neg = n / (2.0 * (n - n_pos))
        return np.where(y == 1, w_pos, w_neg)
    return np.ones(len(y), dtype=float)


def _check_training_data(x: np.ndarray, y: np.ndarray) -> None:
    if x.ndim != 2:
        raise ValidationError("training matrix must be 2-dimensional")
    if len(x) != len(y):
        raise ValidationError(f"length mismatch: {len(x)} rows vs {len(y)} labels")
    if len(y) == 0:
        raise PreconditionError("empty training set")
    if y.min() == y.max():
        raise DegenerateDataError("training data contains a single class")


# ---------------------------------------------------------------------------
# Logistic regression


class LogisticRegressionModel:
    """Full-batch gradient descent with a Lipschitz step size.

    Loss is the weighted mean log-loss plus (1/(2C)) ||w||^2; the step size
    1/L with L = 0.25 * lambda_max(X^T W X) / sum(W) + 1/C guarantees
    monotone convergence without tuning.
    """

    def __init__(self, c: float = 1.0, class_weight=None, max_iter: int = 10_000,
                 tol: float = 1e-8):
        self.c = float(c)
        self.class_weight = class_weight
        self.max_iter = int(max_iter)
        self.tol = tol
        self.weights: np.ndarray | None = None
        self.bias = 0.0

    @staticmethod
    def loss_and_grad(weights, bias, x, y, sample_weight, l2):
        z = bias + x @ weights
        p = expit(z)
        w_total = sample_weight.sum()
        eps = 1e-12
        loss = (
            -float(
                (sample_weight * (y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))).sum()
            )
            / w_total
            + 0.5 * l2 * float(weights @ weights)
        )
        err = sample_weight * (p - y) / w_total
        grad_w = x.T @ err + l2 * weights
        grad_b = float(err.sum())
        return loss, grad_w, grad_b

    def fit(self, x: np.ndarray, y: np.ndarray, rng=None):
        _check_training_data(x, y)
        sw = _class_sample_weights(y, self.class_weight)
        l2 = 1.0 / self.c
        n, d = x.shape
        # spectral-norm bound on the augmented design [X, 1] gives a safe step
        sigma_sq = float(np.linalg.norm(x, 2)) ** 2
        lip = 0.25 * (sigma_sq + n) * sw.max() / sw.sum() + l2
        lr = 1.0 / lip
        w = np.zeros(d)
        b = math.log(max(y.mean(), 1e-12) / max(1 - y.mean(), 1e-12))
        yf = y.astype(float)
        for _ in range(self.max_iter):
            _, grad_w, grad_b = self.loss_and_grad(w, b, x, yf, sw, l2)
            gnorm = math.sqrt(float(grad_w @ grad_w) + grad_b * grad_b)
            if gnorm < self.tol:
                break
            w -= lr * grad_w
            b -= lr * grad_b
        self.weights = w
        self.bias = b
        return self

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return expit(self.bias + x @ self.weights)

    def to_json_obj(self) -> dict:
        return {
            "kind": "logreg",
            "weights": self.weights.tolist(),
            "bias": self.bias,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "LogisticRegressionModel":
        model = cls()
        model.weights = np.array(obj["weights"], dtype=float)
        model.bias = float(obj["bias"])
        return model


# ---------------------------------------------------------------------------
# k-nearest neighbours


class KNNModel:
    def __init__(self, n_neighbors: int = 5, metric: str = "euclidean",
                 weights: str = "uniform"):
        if metric not in ("euclidean", "manhattan"):
            raise ValidationError(f"unknown knn metric {metric!r}")
        if weights not in ("uniform", "distance"):
            raise ValidationError(f"unknown knn weighting {weights!r}")
        self.n_neighbors = int(n_neighbors)
        self.metric = metric
        self.weights = weights
        self.x: np.ndarray | None = None
        self.y: np.ndarray | None = None

    def fit(self, x: np.ndarray, y: np.ndarray, rng=None):
        _check_training_data(x, y)
        if self.n_neighbors > len(x):
            raise PreconditionError(
                f"knn needs n_neighbors <= N ({self.n_neighbors} > {len(x)})"
            )
        self.x = x.copy()
        self.y = y.astype(float).copy()
        return self

    def _distances(self, q: np.ndarray) -> np.ndarray:
        diff = self.x - q
        if self.metric == "euclidean":
            return np.sqrt((diff * diff).sum(axis=1))
        return np.abs(diff).sum(axis=1)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(len(x), dtype=float)
        for i, q in enumerate(x):
            dist = self._distances(q)
            # deterministic neighbour choice under distance ties
            order = np.lexsort((np.arange(len(dist)), dist))[: self.n_neighbors]
            d = dist[order]
            labels = self.y[order]
            if self.weights == "uniform":
                out[i] = labels.mean()
            else:
                exact = d == 0.0
                if exact.any():
                    out[i] = labels[exact].mean()
                else:
                    w = 1.0 / d
                    out[i] = float((w * labels).sum() / w.sum())
        return out

    def to_json_obj(self) -> dict:
        return {
            "kind": "knn",
            "n_neighbors": self.n_neighbors,
            "metric": self.metric,
            "weights": self.weights,
            "x": self.x.tolist(),
            "y": self.y.tolist(),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "KNNModel":
        model = cls(obj["n_neighbors"], obj["metric"], obj["weights"])
        model.x = np.array(obj["x"], dtype=float)
        model.y = np.array(obj["y"], dtype=float)
        return model


# ---------------------------------------------------------------------------
# Decision tree (classification and regression modes)


def _gini(weighted_counts: np.ndarray) -> float:
    total = weighted_counts.sum()
    if total <= 0:
        return 0.0
    p = weighted_counts / total
    return 1.0 - float((p * p).sum())


def _entropy(weighted_counts: np.ndarray) -> float:
    total = weighted_counts.sum()
    if total <= 0:
        return 0.0
    p = weighted_counts / total
    p = p[p > 0]
    return -float((p * np.log(p)).sum())


def _binary_entropy(p1: np.ndarray) -> np.ndarray:
    p1 = np.clip(p1, 0.0, 1.0)
    out = np.zeros_like(p1)
    for p in (p1, 1.0 - p1):
        mask = p > 0
        out[mask] -= p[mask] * np.log(p[mask])
    return out


def _resolve_max_features(max_features, d: int) -> int:
    if max_features is None:
        return d
    if max_features == "sqrt":
        return max(1, int(math.sqrt(d)))
    if max_features == "log2":
        return max(1, int(math.log2(d))) if d > 1 else 1
    if isinstance(max_features, (int, float)):
        return max(1, min(d, int(max_features * d) if max_features <= 1 else int(max_features)))
    raise ValidationError(f"bad max_features {max_features!r}")


class DecisionTreeModel:
    """Greedy binary tree. mode "classify" uses gini/entropy impurity and
    leaves hold P(y = 1); mode "regress" uses variance and leaves hold means.

    Zero-gain splits are taken while a node is impure and depth remains, so
    a depth-2 tree can still carve up XOR.
    """

    def __init__(self, max_depth=None, max_features=None, criterion: str = "gini",
                 splitter: str = "best", min_samples_split: int = 2,
                 mode: str = "classify"):
        if criterion not in ("gini", "entropy", "variance"):
            raise ValidationError(f"unknown criterion {criterion!r}")
        if splitter not in ("best", "random"):
            raise ValidationError(f"unknown splitter {splitter!r}")
        self.max_depth = max_depth
        self.max_features = max_features
        self.criterion = criterion
        self.splitter = splitter
        self.min_samples_split = min_samples_split
        self.mode = mode
        self.nodes: list[dict] = []  # flat node array; children by index

    # -- impurity -----------------------------------------------------------

    def _impurity(self, y: np.ndarray, sw: np.ndarray) -> float:
        if self.mode == "regress" or self.criterion == "variance":
            total = sw.sum()
            if total <= 0:
                return 0.0
            mean = float((sw * y).sum() / total)
            return float((sw * (y - mean) ** 2).sum() / total)
        counts = np.array([float(sw[y == 0].sum()), float(sw[y == 1].sum())])
        return _gini(counts) if self.criterion == "gini" else _entropy(counts)

    def _leaf_value(self, y: np.ndarray, sw: np.ndarray) -> float:
        return float((sw * y).sum() / sw.sum())

    # -- growing ------------------------------------------------------------

    def fit(self, x: np.ndarray, y: np.ndarray, sample_weight=None, rng=None,
            check_classes: bool = True):
        # ensemble members may legitimately see single-class resamples and
        # collapse to a leaf; only top-level training rejects them
        if self.mode == "classify" and check_classes:
            _check_training_data(x, y)
        if rng is None:
            rng = np.random.default_rng(0)
        sw = (
            np.ones(len(y), dtype=float)
            if sample_weight is None
            else np.asarray(sample_weight, dtype=float)
        )
        self.nodes = []
        self._grow(x, y.astype(float), sw, depth=0, rng=rng)
        return self

    def _grow(self, x, y, sw, depth, rng) -> int:
        node_id = len(self.nodes)
        self.nodes.append({})
        impurity = self._impurity(y, sw)
        depth_ok = self.max_depth is None or depth < self.max_depth
        if (
            not depth_ok
            or len(y) < self.min_samples_split
            or impurity <= 1e-15
        ):
            self.nodes[node_id] = {"leaf": True, "value": self._leaf_value(y, sw)}
            return node_id
        split = self._find_split(x, y, sw, rng)
        if split is None:
            self.nodes[node_id] = {"leaf": True, "value": self._leaf_value(y, sw)}
            return node_id
        feature, threshold = split
        mask = x[:, feature] <= threshold
        left = self._grow(x[mask], y[mask], sw[mask], depth + 1, rng)
        right = self._grow(x[~mask], y[~mask], sw[~mask], depth + 1, rng)
        self.nodes[node_id] = {
            "leaf": False,
            "feature": int(feature),
            "threshold": float(threshold),
            "left": left,
            "right": right,
        }
        return node_id

    def _candidate_features(self, d: int, rng) -> np.ndarray:
        k = _resolve_max_features(self.max_features, d)
        if k >= d:
            return np.arange(d)
        return np.sort(rng.choice(d, size=k, replace=False))

    def _boundary_impurities(self, y_sorted, w_sorted):
        """Weighted child impurity for every split boundary of a sorted
        column, via prefix sums. Boundary i splits after position i."""
        cw = np.cumsum(w_sorted)[:-1]
        total_w = float(w_sorted.sum())
        rw = total_w - cw
        cwy = np.cumsum(w_sorted * y_sorted)[:-1]
        rwy = float((w_sorted * y_sorted).sum()) - cwy
        if self.mode == "regress" or self.criterion == "variance":
            cwy2 = np.cumsum(w_sorted * y_sorted * y_sorted)[:-1]
            rwy2 = float((w_sorted * y_sorted * y_sorted).sum()) - cwy2
            var_l = cwy2 / cw - (cwy / cw) ** 2
            var_r = rwy2 / rw - (rwy / rw) ** 2
            return (cw * np.maximum(var_l, 0.0) + rw * np.maximum(var_r, 0.0)) / total_w
        p1_l = cwy / cw
        p1_r = rwy / rw
        if self.criterion == "gini":
            g_l = 1.0 - p1_l**2 - (1.0 - p1_l) ** 2
            g_r = 1.0 - p1_r**2 - (1.0 - p1_r) ** 2
        else:
            g_l = _binary_entropy(p1_l)
            g_r = _binary_entropy(p1_r)
        return (cw * g_l + rw * g_r) / total_w

    def _find_split(self, x, y, sw, rng):
        d = x.shape[1]
        features = self._candidate_features(d, rng)
        parent = self._impurity(y, sw)
        best = None  # (gain, feature, threshold); ties keep the earliest
        for feature in features:
            col = x[:, feature]
            order = np.argsort(col, kind="stable")
            v = col[order]
            boundaries = np.nonzero(v[:-1] != v[1:])[0]
            if len(boundaries) == 0:
                continue
            child = self._boundary_impurities(y[order], sw[order])
            if self.splitter == "random":
                threshold = rng.uniform(float(v[0]), float(v[-1]))
                pos = int(np.searchsorted(v, threshold, side="right")) - 1
                if pos < 0 or pos >= len(v) - 1:
                    continue
                candidates = [(parent - float(child[pos]), float(threshold))]
            else:
                gains = parent - child[boundaries]
                k = int(np.argmax(gains))
                pos = int(boundaries[k])
                candidates = [
                    (float(gains[k]), 0.5 * (float(v[pos]) + float(v[pos + 1])))
                ]
            for gain, threshold in candidates:
                if best is None or gain > best[0] + 1e-15:
                    best = (gain, int(feature), float(threshold))
        if best is None:
            return None
        return best[1], best[2]

    # -- inference ----------------------------------------------------------

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(len(x), dtype=int)
        for i, row in enumerate(x):
            node_id = 0
            while not self.nodes[node_id]["leaf"]:
                node = self.nodes[node_id]
                node_id = node["left"] if row[node["feature"]] <= node["threshold"] else node["right"]
            out[i] = node_id
        return out

    def predict_value(self, x: np.ndarray) -> np.ndarray:
        leaves = self.apply(x)
        return np.array([self.nodes[i]["value"] for i in leaves], dtype=float)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return self.predict_value(x)

    def set_leaf_values(self, values: dict[int, float]) -> None:
        for node_id, value in values.items():
            self.nodes[node_id]["value"] = value

    def leaf_ids(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n["leaf"]]

    def to_json_obj(self) -> dict:
        return {"kind": "tree", "mode": self.mode, "nodes": self.nodes}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DecisionTreeModel":
        model = cls(mode=obj.get("mode", "classify"))
        model.nodes = obj["nodes"]
        return model


# ---------------------------------------------------------------------------
# Random forest


class RandomForestModel:
    def __init__(self, n_estimators: int = 25, max_depth=None, max_features=None,
                 bootstrap: bool = True, criterion: str = "gini", class_weight=None):
        self.n_estimators = int(n_estimators)
        self.max_depth = max_depth
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.criterion = criterion
        self.class_weight = class_weight
        self.trees: list[DecisionTreeModel] = []

    def fit(self, x: np.ndarray, y: np.ndarray, rng=None):
        _check_training_data(x, y)
        if rng is None:
            rng = np.random.default_rng(0)
        sw = _class_sample_weights(y, self.class_weight)
        self.trees = []
        n = len(y)
        for _ in range(self.n_estimators):
            idx = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            tree = DecisionTreeModel(
                max_depth=self.max_depth,
                max_features=self.max_features,
                criterion=self.criterion,
            )
            tree.fit(x[idx], y[idx], sample_weight=sw[idx], rng=rng,
                     check_classes=False)
            self.trees.append(tree)
        return self

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        acc = np.zeros(len(x), dtype=float)
        for tree in self.trees:
            acc += tree.predict_value(x)
        return acc / len(self.trees)

    def to_json_obj(self) -> dict:
        return {"kind": "forest", "trees": [t.to_json_obj() for t in self.trees]}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "RandomForestModel":
        model = cls()
        model.trees = [DecisionTreeModel.from_json_obj(t) for t in obj["trees"]]
        return model


# ---------------------------------------------------------------------------
# Gradient boosting


class GradientBoostingModel:
    """Logistic-loss boosting on regression trees with Newton leaf values."""

    def __init__(self, n_estimators: int = 25, learning_rate: float = 0.05,
                 max_depth: int = 3, max_features=None):
        self.n_estimators = int(n_estimators)
        self.learning_rate = float(learning_rate)
        self.max_depth = max_depth
        self.max_features = max_features
        self.f0 = 0.0
        self.trees: list[DecisionTreeModel] = []

    def fit(self, x: np.ndarray, y: np.ndarray, rng=None):
        _check_training_data(x, y)
        if rng is None:
            rng = np.random.default_rng(0)
        yf = y.astype(float)
        p_bar = yf.mean()
        self.f0 = math.log(p_bar / (1.0 - p_bar))
        f = np.full(len(y), self.f0, dtype=float)
        self.trees = []
        for _ in range(self.n_estimators):
            p = expit(f)
            resid = yf - p
            tree = DecisionTreeModel(
                max_depth=self.max_depth,
                max_features=self.max_features,
                criterion="variance",
                mode="regress",
            )
            tree.fit(x, resid, rng=rng)
            leaves = tree.apply(x)
            hess = p * (1.0 - p)
            values: dict[int, float] = {}
            for leaf in tree.leaf_ids():
                mask = leaves == leaf
                if not mask.any():
                    values[leaf] = 0.0
                    continue
                values[leaf] = float(resid[mask].sum() / max(hess[mask].sum(), 1e-12))
            tree.set_leaf_values(values)
            self.trees.append(tree)
            f += self.learning_rate * tree.predict_value(x)
        return self

    def _raw(self, x: np.ndarray) -> np.ndarray:
        f = np.full(len(x), self.f0, dtype=float)
        for tree in self.trees:
            f += self.learning_rate * tree.predict_value(x)
        return f

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return expit(self._raw(x))

    def to_json_obj(self) -> dict:
        return {
            "kind": "boosting",
            "f0": self.f0,
            "learning_rate": self.learning_rate,
            "trees": [t.to_json_obj() for t in self.trees],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "GradientBoostingModel":
        model = cls(learning_rate=obj["learning_rate"])
        model.f0 = float(obj["f0"])
        model.trees = [DecisionTreeModel.from_json_obj(t) for t in obj["trees"]]
        return model


# ---------------------------------------------------------------------------
# Spec-driven construction


def build_model(spec: ModelSpec):
    params = spec.as_dict()
    if spec.family == "logreg":
        return LogisticRegressionModel(
            c=params.get("C", 1.0),
            class_weight=params.get("class_weight"),
            max_iter=params.get("max_iter", 10_000),
        )
    if spec.family == "knn":
        return KNNModel(
            n_neighbors=params.get("n_neighbors", 5),
            metric=params.get("metric", "euclidean"),
            weights=params.get("weights", "uniform"),
        )
    if spec.family == "decision_tree":
        return DecisionTreeModel(
            max_depth=params.get("max_depth"),
            max_features=params.get("max_features"),
            criterion=params.get("criterion", "gini"),
            splitter=params.get("splitter", "best"),
        )
    if spec.family == "random_forest":
        return RandomForestModel(
            n_estimators=params.get("n_estimators", 25),
            max_depth=params.get("max_depth"),
            max_features=params.get("max_features"),
            bootstrap=params.get("bootstrap", True),
            criterion=params.get("criterion", "gini"),
            class_weight=params.get("class_weight"),
        )
    if spec.family == "gradient_boosting":
        return GradientBoostingModel(
            n_estimators=params.get("n_estimators", 25),
            learning_rate=params.get("learning_rate", 0.05),
            max_depth=params.get("max_depth", 3),
            max_features=params.get("max_features"),
        )
    raise ValidationError(f"unknown model family {spec.family!r}")


_MODEL_KINDS = {
    "logreg": LogisticRegressionModel,
    "knn": KNNModel,
    "tree": DecisionTreeModel,
    "forest": RandomForestModel,
    "boosting": GradientBoostingModel,
}


def model_from_json_obj(obj: dict):
    kind = obj.get("kind")
    if kind not in _MODEL_KINDS:
        raise ValidationError(f"unknown serialized model kind {kind!r}")
    return _MODEL_KINDS[kind].from_json_obj(obj)


def train_model(spec: ModelSpec, x: np.ndarray, y: np.ndarray, seed: int):
    """Deterministic training of one grid point."""
    model = build_model(spec)
    rng = np.random.default_rng(spec.derived_seed(seed))
    model.fit(x, y, rng=rng)
    return model
