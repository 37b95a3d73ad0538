"""Gradient-boosted regression trees with a logistic link for binary labels.

Trees grow leaf-wise on first/second-order statistics of the logistic
loss. Split search runs over per-feature quantile bins by default (exact
enumeration of thresholds is available for small-data cross-checks), and
every step is single-threaded and deterministic: equal gains resolve to
the lowest feature index, then the lowest threshold, then the earliest
leaf.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any

import numpy as np

from .validation import check_feature_matrix, check_binary_labels


@dataclass(frozen=True)
class TrainParams:
    num_trees: int = 100
    max_leaves: int = 31
    learning_rate: float = 0.1
    min_samples_leaf: int = 20
    l2_reg: float = 0.0
    feature_bins: int = 255
    exact_splits: bool = False

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.max_leaves < 2:
            raise ValueError("max_leaves must be >= 2")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 2 <= self.feature_bins <= 65535:
            raise ValueError("feature_bins must be in [2, 65535]")
        if self.l2_reg < 0:
            raise ValueError("l2_reg must be >= 0")


class ModelFormatError(ValueError):
    """A model document is structurally invalid; the message names the path."""


def _sigmoid(margin: np.ndarray) -> np.ndarray:
    m = np.asarray(margin, dtype=np.float64)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    em = np.exp(m[~pos])
    out[~pos] = em / (1.0 + em)
    return out


def _log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-15, 1.0 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


@dataclass(eq=False)  # identity semantics: fields are numpy arrays
class RegressionTree:
    """Flat node arrays; ``left < 0`` marks a leaf holding ``value``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def margins(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            internal = self.left[node] >= 0
            if not internal.any():
                break
            rows = np.flatnonzero(internal)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
        return self.value[node]

    def num_leaves(self) -> int:
        return int((self.left < 0).sum())

    def to_doc(self) -> dict[str, Any]:
        def build(i: int) -> dict[str, Any]:
            if self.left[i] < 0:
                return {"leaf": float(self.value[i])}
            return {
                "feature": int(self.feature[i]),
                "threshold": float(self.threshold[i]),
                "left": build(int(self.left[i])),
                "right": build(int(self.right[i])),
            }

        return build(0)

    @classmethod
    def from_doc(cls, doc: dict[str, Any], num_features: int, path: str) -> "RegressionTree":
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        value: list[float] = []

        def build(node: Any, where: str) -> int:
            if not isinstance(node, dict):
                raise ModelFormatError(f"{where}: expected an object")
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            if "leaf" in node:
                if set(node) != {"leaf"} or not isinstance(node["leaf"], (int, float)):
                    raise ModelFormatError(f"{where}: malformed leaf")
                if not math.isfinite(node["leaf"]):
                    raise ModelFormatError(f"{where}: leaf value must be finite")
                value[i] = float(node["leaf"])
                return i
            if set(node) != {"feature", "threshold", "left", "right"}:
                raise ModelFormatError(f"{where}: expected leaf or split keys")
            if not isinstance(node["feature"], int) or not 0 <= node["feature"] < num_features:
                raise ModelFormatError(f"{where}.feature: out of range")
            if not isinstance(node["threshold"], (int, float)) or not math.isfinite(
                node["threshold"]
            ):
                raise ModelFormatError(f"{where}.threshold: expected a finite number")
            feature[i] = int(node["feature"])
            threshold[i] = float(node["threshold"])
            left[i] = build(node["left"], where + ".left")
            right[i] = build(node["right"], where + ".right")
            return i

        build(doc, path)
        return cls(
            feature=np.asarray(feature, dtype=np.int32),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int32),
            right=np.asarray(right, dtype=np.int32),
            value=np.asarray(value, dtype=np.float64),
        )


class _Binner:
    """Per-feature quantile bin edges over the training matrix."""

    def __init__(self, X: np.ndarray, bins: int):
        Xf = X.astype(np.float64)
        qs = np.arange(1, bins) / bins
        raw = np.quantile(Xf, qs, axis=0)
        self.nbins = bins
        self.edges = [np.unique(raw[:, j]) for j in range(X.shape[1])]
        binned = np.empty(X.shape, dtype=np.uint16)
        for j, e in enumerate(self.edges):
            binned[:, j] = np.searchsorted(e, Xf[:, j], side="left")
        self.binned = binned


@dataclass(eq=False)  # identity semantics: leaves hold numpy index arrays
class _Leaf:
    node: int
    idx: np.ndarray
    grad: float
    hess: float
    split: tuple[float, int, float] | None  # (gain, feature, threshold)


def _find_split_binned(
    idx: np.ndarray,
    binner: _Binner,
    g: np.ndarray,
    h: np.ndarray,
    lam: float,
    min_leaf: int,
) -> tuple[float, int, float] | None:
    d = binner.binned.shape[1]
    nb = binner.nbins
    sub = binner.binned[idx].astype(np.int64)
    sub += np.arange(d, dtype=np.int64) * nb
    flat = sub.ravel()
    hist_g = np.bincount(flat, weights=np.repeat(g[idx], d), minlength=d * nb).reshape(d, nb)
    hist_h = np.bincount(flat, weights=np.repeat(h[idx], d), minlength=d * nb).reshape(d, nb)
    hist_c = np.bincount(flat, minlength=d * nb).reshape(d, nb)

    gl = np.cumsum(hist_g, axis=1)
    hl = np.cumsum(hist_h, axis=1)
    cl = np.cumsum(hist_c, axis=1)
    gt, ht, ct = gl[:, -1:], hl[:, -1:], cl[:, -1:]
    gl, hl, cl = gl[:, :-1], hl[:, :-1], cl[:, :-1]
    gr, hr, cr = gt - gl, ht - hl, ct - cl

    valid = (cl >= min_leaf) & (cr >= min_leaf) & (hl + lam > 0) & (hr + lam > 0) & (ht + lam > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = gl**2 / (hl + lam) + gr**2 / (hr + lam) - gt**2 / (ht + lam)
    gain[~valid] = -np.inf

    best = int(np.argmax(gain))  # first max: lowest feature, then lowest threshold
    best_gain = float(gain.flat[best])
    if not best_gain > 0:
        return None
    feat, b = divmod(best, nb - 1)
    return best_gain, feat, float(binner.edges[feat][b])


def _find_split_exact(
    idx: np.ndarray,
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    lam: float,
    min_leaf: int,
) -> tuple[float, int, float] | None:
    n = len(idx)
    gt = float(g[idx].sum())
    ht = float(h[idx].sum())
    if not ht + lam > 0:
        return None
    parent = gt**2 / (ht + lam)
    best: tuple[float, int, float] | None = None
    pos = np.arange(1, n)
    for j in range(X.shape[1]):
        vals = X[idx, j].astype(np.float64)
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        gl = np.cumsum(g[idx][order])[:-1]
        hl = np.cumsum(h[idx][order])[:-1]
        valid = (
            (sv[1:] != sv[:-1])
            & (pos >= min_leaf)
            & (n - pos >= min_leaf)
            & (hl + lam > 0)
            & (ht - hl + lam > 0)
        )
        if not valid.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            gains = gl**2 / (hl + lam) + (gt - gl) ** 2 / (ht - hl + lam) - parent
        gains[~valid] = -np.inf
        k = int(np.argmax(gains))
        gain = float(gains[k])
        if gain > 0 and (best is None or gain > best[0]):
            best = (gain, j, (sv[k] + sv[k + 1]) / 2.0)
    return best


def _grow_tree(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    params: TrainParams,
    binner: _Binner | None,
) -> tuple[RegressionTree, list[tuple[np.ndarray, float]]]:
    lam = params.l2_reg
    min_leaf = params.min_samples_leaf

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def find_split(idx: np.ndarray) -> tuple[float, int, float] | None:
        if len(idx) < 2 * min_leaf:
            return None
        if binner is None:
            return _find_split_exact(idx, X, g, h, lam, min_leaf)
        return _find_split_binned(idx, binner, g, h, lam, min_leaf)

    def make_leaf(node: int, idx: np.ndarray) -> _Leaf:
        return _Leaf(
            node=node,
            idx=idx,
            grad=float(g[idx].sum()),
            hess=float(h[idx].sum()),
            split=find_split(idx),
        )

    leaves = [make_leaf(new_node(), np.arange(X.shape[0]))]
    while len(leaves) < params.max_leaves:
        best: _Leaf | None = None
        for leaf in leaves:  # creation order; strict > keeps the earliest on ties
            if leaf.split is not None and (best is None or leaf.split[0] > best.split[0]):
                best = leaf
        if best is None:
            break
        _, feat, thr = best.split
        go_left = X[best.idx, feat] <= thr
        left_idx = best.idx[go_left]
        right_idx = best.idx[~go_left]
        lid, rid = new_node(), new_node()
        feature[best.node] = feat
        threshold[best.node] = thr
        left[best.node] = lid
        right[best.node] = rid
        leaves.remove(best)
        leaves.append(make_leaf(lid, left_idx))
        leaves.append(make_leaf(rid, right_idx))

    updates = []
    for leaf in leaves:
        denom = leaf.hess + lam
        leaf_value = -(leaf.grad / denom) * params.learning_rate if denom > 0 else 0.0
        value[leaf.node] = leaf_value
        updates.append((leaf.idx, leaf_value))

    tree = RegressionTree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=np.asarray(value, dtype=np.float64),
    )
    return tree, updates


@dataclass
class BoostedModel:
    """Additive tree ensemble over a logistic link."""

    base_score: float
    trees: list[RegressionTree]
    params: TrainParams
    num_features: int
    train_losses: list[float] = field(default_factory=list, repr=False)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = check_feature_matrix(X, expected_cols=self.num_features)
        margins = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            margins += tree.margins(X)
        return margins

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision_function(X))


def train(X: np.ndarray, y: np.ndarray, params: TrainParams | None = None) -> BoostedModel:
    """Fit a boosted ensemble to features ``X`` and 0/1 labels ``y``."""
    params = params or TrainParams()
    X = check_feature_matrix(X)
    y = check_binary_labels(y, X.shape[0])
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows to train")

    yf = y.astype(np.float64)
    p0 = min(max(float(yf.mean()), 1e-6), 1.0 - 1e-6)
    base_score = math.log(p0 / (1.0 - p0))
    binner = None if params.exact_splits else _Binner(X, params.feature_bins)

    margins = np.full(X.shape[0], base_score, dtype=np.float64)
    trees: list[RegressionTree] = []
    losses: list[float] = []
    for _ in range(params.num_trees):
        p = _sigmoid(margins)
        g = p - yf
        h = p * (1.0 - p)
        tree, updates = _grow_tree(X, g, h, params, binner)
        for idx, leaf_value in updates:
            margins[idx] += leaf_value
        trees.append(tree)
        losses.append(_log_loss(yf, _sigmoid(margins)))

    return BoostedModel(
        base_score=base_score,
        trees=trees,
        params=params,
        num_features=X.shape[1],
        train_losses=losses,
    )


def predict_proba(model: BoostedModel, x: np.ndarray) -> float:
    """Probability of the positive class for a single feature vector."""
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != model.num_features:
        raise ValueError(f"expected a vector of length {model.num_features}, got {x.shape}")
    return float(model.predict_proba(x.reshape(1, -1))[0])


def save_model(model: BoostedModel, path: str | Path) -> None:
    doc = {
        "format": "pevec-gbdt",
        "version": 1,
        "num_features": model.num_features,
        "base_score": model.base_score,
        "params": asdict(model.params),
        "trees": [t.to_doc() for t in model.trees],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str | Path) -> BoostedModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"not a JSON document: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("document root: expected an object")
    if doc.get("format") != "pevec-gbdt":
        raise ModelFormatError("format: expected 'pevec-gbdt'")
    if doc.get("version") != 1:
        raise ModelFormatError(f"version: unsupported {doc.get('version')!r}")
    num_features = doc.get("num_features")
    if not isinstance(num_features, int) or num_features < 1:
        raise ModelFormatError("num_features: expected a positive integer")
    base_score = doc.get("base_score")
    if not isinstance(base_score, (int, float)) or not math.isfinite(base_score):
        raise ModelFormatError("base_score: expected a finite number")
    raw_params = doc.get("params")
    if not isinstance(raw_params, dict):
        raise ModelFormatError("params: expected an object")
    try:
        params = TrainParams(**raw_params)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"params: {exc}") from exc
    raw_trees = doc.get("trees")
    if not isinstance(raw_trees, list):
        raise ModelFormatError("trees: expected a list")
    trees = [
        RegressionTree.from_doc(t, num_features, f"trees[{i}]") for i, t in enumerate(raw_trees)
    ]
    return BoostedModel(
        base_score=float(base_score),
        trees=trees,
        params=params,
        num_features=num_features,
    )
