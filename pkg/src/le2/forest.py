"""Bagged CART forest for binary classification.

Training rows are put in a canonical (lexicographic) order before bagging,
and each tree's randomness is derived from ``(seed, tree_index)`` only, so
the fitted model does not depend on the order of the training examples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from le2 import _kernels

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_samples_leaf: int = 2
    max_features: Optional[int] = None  # None -> ceil(sqrt(n_features))
    bootstrap: bool = True

    def features_per_split(self, n_features: int) -> int:
        if self.max_features is None:
            return int(math.ceil(math.sqrt(n_features)))
        return max(1, min(int(self.max_features), n_features))


class NotFittedError(RuntimeError):
    pass


@dataclass
class RandomForest:
    params: ForestParams = field(default_factory=ForestParams)
    n_features: int = 0
    feature: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    threshold: np.ndarray = field(default_factory=lambda: np.zeros(0))
    left: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    right: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    value: np.ndarray = field(default_factory=lambda: np.zeros(0))
    roots: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    constant: Optional[int] = None  # set when trained on a single class
    fitted: bool = False

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    @property
    def degenerate(self) -> bool:
        return self.constant is not None

    def fit(self, X, y, seed: int = 0) -> "RandomForest":
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y).astype(np.int64)
        if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
            raise ValueError(f"bad training shapes {X.shape} / {y.shape}")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0/1")
        self.n_features = X.shape[1]
        self.fitted = True
        if y.min() == y.max():
            self.constant = int(y[0])
            self.feature = np.array([-1], dtype=np.int64)
            self.threshold = np.zeros(1)
            self.left = np.array([-1], dtype=np.int64)
            self.right = np.array([-1], dtype=np.int64)
            self.value = np.array([float(self.constant)])
            self.roots = np.array([0], dtype=np.int64)
            return self
        self.constant = None

        order = np.lexsort(np.column_stack([X, y]).T[::-1])
        X, y = X[order], y[order]
        n = len(y)
        k = self.params.features_per_split(self.n_features)
        parts, roots, offset = [], [], 0
        for t in range(self.params.n_trees):
            rng = np.random.default_rng([int(seed), t])
            idx = rng.integers(0, n, size=n) if self.params.bootstrap else np.arange(n)
            node_seed = int(rng.integers(0, 2**63))
            f, thr, lft, rgt, val = _kernels.build_tree(
                X, y, idx, self.params.max_depth, self.params.min_samples_leaf, k, node_seed)
            internal = f >= 0
            lft = np.where(internal, lft + offset, -1)
            rgt = np.where(internal, rgt + offset, -1)
            parts.append((f, thr, lft, rgt, val))
            roots.append(offset)
            offset += len(f)
        self.feature, self.threshold, self.left, self.right, self.value = (
            np.concatenate([p[i] for p in parts]) for i in range(5))
        self.roots = np.array(roots, dtype=np.int64)
        return self

    def votes(self, X) -> np.ndarray:
        if not self.fitted:
            raise NotFittedError("forest is not fitted")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return _kernels.forest_votes(X, self.feature, self.threshold, self.left, self.right,
                                     self.value, self.roots)

    def predict(self, X) -> np.ndarray:
        """Majority of tree votes; an exact tie is negative."""
        return (2 * self.votes(X) > self.n_trees).astype(np.int8)

    def to_dict(self) -> dict:
        p = self.params
        return {
            "schema_version": SCHEMA_VERSION,
            "params": {"n_trees": p.n_trees, "max_depth": p.max_depth, "min_samples_leaf": p.min_samples_leaf,
                       "max_features": p.max_features, "bootstrap": p.bootstrap},
            "n_features": self.n_features,
            "n_trees": self.n_trees,
            "constant": self.constant,
            "fitted": self.fitted,
            "roots": self.roots.tolist(),
            "nodes": [
                {"feature": int(f), "threshold": float(t), "left": int(lf), "right": int(r)}
                for f, t, lf, r in zip(self.feature, self.threshold, self.left, self.right)
            ],
            "leaves": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported forest schema {d.get('schema_version')}")
        nodes = d["nodes"]
        return cls(
            params=ForestParams(**d["params"]),
            n_features=d["n_features"],
            feature=np.array([nd["feature"] for nd in nodes], dtype=np.int64),
            threshold=np.array([nd["threshold"] for nd in nodes], dtype=np.float64),
            left=np.array([nd["left"] for nd in nodes], dtype=np.int64),
            right=np.array([nd["right"] for nd in nodes], dtype=np.int64),
            value=np.array(d["leaves"], dtype=np.float64),
            roots=np.array(d["roots"], dtype=np.int64),
            constant=d["constant"],
            fitted=d["fitted"],
        )
