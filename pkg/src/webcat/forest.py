"""Random forest classifier, self-contained and deterministic.

Trees are grown on bootstrap samples with Gini-impurity splits. Candidate
thresholds are midpoints between consecutive distinct sorted values of each
evaluated feature; ties in weighted impurity break toward the lowest feature
index, then the lowest threshold. Each tree derives its own random stream
from the training seed plus its index, so a given (data, hyperparams, seed)
triple always grows the same forest, and the serialized model is
byte-reproducible.

Probability output is soft voting: the mean over trees of leaf class
proportions.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .features import FeatureVector

MAGIC = b"WIBF"
FORMAT_VERSION = 1


class ModelIOError(Exception):
    """Base class for model (de)serialization failures."""


class ModelFormatError(ModelIOError):
    pass


class ModelVersionError(ModelIOError):
    pass


class ModelTruncatedError(ModelIOError):
    pass


class ModelChecksumError(ModelIOError):
    pass


@dataclass(frozen=True)
class Leaf:
    class_counts: np.ndarray = field(repr=False)  # int64, one entry per class


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class ForestHyperparams:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf_samples: int = 1
    features_per_split: int | None = None  # None -> floor(sqrt(dim))
    bootstrap: bool = True

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_leaf_samples < 1:
            raise ValueError("min_leaf_samples must be >= 1")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")


@dataclass(frozen=True)
class TrainingSet:
    """Feature-major training data: features has shape (dim, n_samples)."""

    features: np.ndarray = field(repr=False)
    labels: tuple[str, ...]
    manifest: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.features.ndim != 2:
            raise ValueError("features must be a (dim, n_samples) matrix")
        n = self.features.shape[1]
        if n != len(self.labels):
            raise ValueError(f"{n} feature columns vs {len(self.labels)} labels")
        if n < 2:
            raise ValueError("need at least 2 samples")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if self.manifest and len(self.manifest) != n:
            raise ValueError("manifest length must match sample count")


@dataclass(frozen=True)
class Forest:
    trees: tuple[TreeNode, ...]
    classes: tuple[str, ...]
    dim: int
    hyperparams: ForestHyperparams
    train_seed: int

    def __post_init__(self) -> None:
        if len(self.classes) < 2:
            raise ValueError("a forest needs at least 2 classes")
        if not self.trees:
            raise ValueError("a forest needs at least 1 tree")


def gini(class_counts: Sequence[int] | np.ndarray) -> float:
    """Gini impurity 1 - sum((c_i / n)^2) of a class count vector."""
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.size == 0 or np.any(counts < 0):
        raise ValueError("class counts must be a non-empty, non-negative vector")
    total = counts.sum()
    if total <= 0:
        raise ValueError("class counts sum to zero")
    fractions = counts / total
    return float(1.0 - np.dot(fractions, fractions))


def _best_split_for_feature(
    x: np.ndarray, y: np.ndarray, n_classes: int, min_leaf: int
) -> tuple[float, float] | None:
    """Lowest weighted child impurity over midpoint thresholds of ``x``.

    Returns (weighted_impurity, threshold) or None when no valid split
    exists. Impurity ties resolve to the lowest threshold.
    """
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    n = xs.shape[0]
    change = np.nonzero(xs[:-1] != xs[1:])[0]
    if change.size == 0:
        return None
    left_n = change + 1
    right_n = n - left_n
    valid = (left_n >= min_leaf) & (right_n >= min_leaf)
    if not valid.any():
        return None
    change = change[valid]
    left_n = left_n[valid]
    right_n = right_n[valid]

    onehot = np.zeros((n, n_classes), dtype=np.float64)
    onehot[np.arange(n), ys] = 1.0
    cum = np.cumsum(onehot, axis=0)
    left_counts = cum[change]
    right_counts = cum[-1] - left_counts
    gini_left = 1.0 - (left_counts**2).sum(axis=1) / (left_n.astype(np.float64) ** 2)
    gini_right = 1.0 - (right_counts**2).sum(axis=1) / (right_n.astype(np.float64) ** 2)
    weighted = (left_n * gini_left + right_n * gini_right) / n

    j = int(np.argmin(weighted))  # first minimum -> lowest threshold
    lo = xs[change[j]]
    hi = xs[change[j] + 1]
    threshold = (lo + hi) / 2.0
    if threshold >= hi:  # midpoint collapsed onto hi for adjacent floats
        threshold = lo
    return float(weighted[j]), float(threshold)


def _grow(
    X: np.ndarray,
    y: np.ndarray,
    sample_idx: np.ndarray,
    depth: int,
    rng: np.random.Generator,
    hp: ForestHyperparams,
    n_classes: int,
    m_features: int,
) -> TreeNode:
    y_here = y[sample_idx]
    counts = np.bincount(y_here, minlength=n_classes).astype(np.int64)
    if (
        np.count_nonzero(counts) <= 1
        or (hp.max_depth is not None and depth >= hp.max_depth)
        or sample_idx.size < 2 * hp.min_leaf_samples
    ):
        return Leaf(counts)

    dim = X.shape[0]
    if m_features >= dim:
        candidates = np.arange(dim)
    else:
        candidates = np.sort(rng.choice(dim, size=m_features, replace=False))

    best: tuple[float, int, float] | None = None
    for f in candidates:
        found = _best_split_for_feature(X[f, sample_idx], y_here, n_classes, hp.min_leaf_samples)
        if found is not None and (best is None or found[0] < best[0]):
            best = (found[0], int(f), found[1])
    if best is None:
        return Leaf(counts)

    _, feature, threshold = best
    mask = X[feature, sample_idx] <= threshold
    left_idx = sample_idx[mask]
    right_idx = sample_idx[~mask]
    if left_idx.size == 0 or right_idx.size == 0:  # defensive; cannot happen
        return Leaf(counts)
    return Split(
        feature_index=feature,
        threshold=threshold,
        left=_grow(X, y, left_idx, depth + 1, rng, hp, n_classes, m_features),
        right=_grow(X, y, right_idx, depth + 1, rng, hp, n_classes, m_features),
    )


def _tree_rngs(seed: int, n_trees: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(n_trees)
    return [np.random.default_rng(c) for c in children]


def train(
    data: TrainingSet,
    hyperparams: ForestHyperparams | None = None,
    seed: int = 0,
) -> Forest:
    """Grow a forest. Rejects single-class label sets up front."""
    hp = hyperparams or ForestHyperparams()
    classes = tuple(sorted(set(data.labels)))
    if len(classes) < 2:
        raise ValueError(f"training labels are single-class: {classes}")
    class_index = {c: i for i, c in enumerate(classes)}
    y = np.array([class_index[label] for label in data.labels], dtype=np.int64)
    X = np.ascontiguousarray(data.features, dtype=np.float64)
    dim, n = X.shape
    m_features = hp.features_per_split or max(1, math.floor(math.sqrt(dim)))

    trees = []
    for rng in _tree_rngs(seed, hp.n_trees):
        if hp.bootstrap:
            sample_idx = np.sort(rng.integers(0, n, size=n))
        else:
            sample_idx = np.arange(n)
        trees.append(_grow(X, y, sample_idx, 0, rng, hp, len(classes), m_features))

    return Forest(
        trees=tuple(trees),
        classes=classes,
        dim=dim,
        hyperparams=hp,
        train_seed=seed,
    )


def _leaf_proportions(node: TreeNode, x: np.ndarray) -> np.ndarray:
    while isinstance(node, Split):
        node = node.left if x[node.feature_index] <= node.threshold else node.right
    counts = node.class_counts.astype(np.float64)
    return counts / counts.sum()


def predict_proba(forest: Forest, x: FeatureVector | np.ndarray) -> np.ndarray:
    """Soft-voted class probabilities for one feature vector.

    Output is ordered like ``forest.classes`` and sums to 1 (within 1e-9).
    """
    values = x.values if isinstance(x, FeatureVector) else np.asarray(x, dtype=np.float64)
    if values.shape != (forest.dim,):
        raise ValueError(f"feature vector shape {values.shape} != ({forest.dim},)")
    acc = np.zeros(len(forest.classes), dtype=np.float64)
    for tree in forest.trees:
        acc += _leaf_proportions(tree, values)
    return acc / len(forest.trees)


def predict_proba_batch(forest: Forest, X: np.ndarray) -> np.ndarray:
    """Probabilities for a feature-major (dim, N) matrix; returns (N, classes)."""
    if X.ndim != 2 or X.shape[0] != forest.dim:
        raise ValueError(f"expected ({forest.dim}, N) matrix, got {X.shape}")
    if X.shape[1] == 0:
        return np.empty((0, len(forest.classes)))
    return np.stack([predict_proba(forest, X[:, i]) for i in range(X.shape[1])])


def oob_accuracy(forest: Forest, data: TrainingSet) -> float | None:
    """Accuracy on out-of-bag samples; None when trained without bootstrap."""
    if not forest.hyperparams.bootstrap:
        return None
    classes = forest.classes
    class_index = {c: i for i, c in enumerate(classes)}
    y = np.array([class_index[label] for label in data.labels], dtype=np.int64)
    X = np.ascontiguousarray(data.features, dtype=np.float64)
    n = X.shape[1]
    votes = np.zeros((n, len(classes)), dtype=np.float64)
    covered = np.zeros(n, dtype=bool)
    for tree, rng in zip(forest.trees, _tree_rngs(forest.train_seed, len(forest.trees))):
        inbag = np.zeros(n, dtype=bool)
        inbag[rng.integers(0, n, size=n)] = True
        for i in np.nonzero(~inbag)[0]:
            votes[i] += _leaf_proportions(tree, X[:, i])
            covered[i] = True
    if not covered.any():
        return None
    predicted = votes[covered].argmax(axis=1)
    return float(np.mean(predicted == y[covered]))


# --- serialization ----------------------------------------------------------
#
# Layout (all little-endian):
#   magic "WIBF" | version u16 | total_len u64 | header_len u32 | header JSON
#   | n_trees x (tree_len u32 | tree record) | crc32 u32 over all prior bytes
#
# Tree records are preorder: 0x00 + feature u32 + threshold f64 for splits,
# 0x01 + one u64 count per class for leaves.


def _pack_tree(root: TreeNode, n_classes: int) -> bytes:
    parts: list[bytes] = []

    def rec(node: TreeNode) -> None:
        if isinstance(node, Leaf):
            parts.append(b"\x01" + node.class_counts.astype("<u8").tobytes())
        else:
            parts.append(b"\x00" + struct.pack("<Id", node.feature_index, node.threshold))
            rec(node.left)
            rec(node.right)

    rec(root)
    return b"".join(parts)


def _unpack_tree(buf: bytes, n_classes: int) -> TreeNode:
    offset = 0

    def rec() -> TreeNode:
        nonlocal offset
        if offset >= len(buf):
            raise ModelTruncatedError("tree record ended early")
        kind = buf[offset]
        offset += 1
        if kind == 0x01:
            end = offset + 8 * n_classes
            if end > len(buf):
                raise ModelTruncatedError("leaf counts ended early")
            counts = np.frombuffer(buf[offset:end], dtype="<u8").astype(np.int64)
            offset = end
            return Leaf(counts)
        if kind == 0x00:
            if offset + 12 > len(buf):
                raise ModelTruncatedError("split record ended early")
            feature, threshold = struct.unpack_from("<Id", buf, offset)
            offset += 12
            left = rec()
            right = rec()
            return Split(feature, threshold, left, right)
        raise ModelFormatError(f"unknown node tag {kind:#x}")

    root = rec()
    if offset != len(buf):
        raise ModelFormatError("trailing bytes inside tree record")
    return root


def forest_to_bytes(forest: Forest) -> bytes:
    hp = forest.hyperparams
    header_obj = {
        "classes": list(forest.classes),
        "dim": forest.dim,
        "train_seed": forest.train_seed,
        "n_trees": len(forest.trees),
        "hyperparams": {
            "n_trees": hp.n_trees,
            "max_depth": hp.max_depth,
            "min_leaf_samples": hp.min_leaf_samples,
            "features_per_split": hp.features_per_split,
            "bootstrap": hp.bootstrap,
        },
    }
    header = json.dumps(header_obj, sort_keys=True, separators=(",", ":")).encode()
    tree_blobs = [_pack_tree(t, len(forest.classes)) for t in forest.trees]
    body_len = sum(4 + len(b) for b in tree_blobs)
    total_len = 4 + 2 + 8 + 4 + len(header) + body_len + 4
    parts = [
        MAGIC,
        struct.pack("<H", FORMAT_VERSION),
        struct.pack("<Q", total_len),
        struct.pack("<I", len(header)),
        header,
    ]
    for blob in tree_blobs:
        parts.append(struct.pack("<I", len(blob)))
        parts.append(blob)
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload))


def forest_from_bytes(data: bytes) -> Forest:
    if len(data) < 4:
        if MAGIC.startswith(data):
            raise ModelTruncatedError("file shorter than the magic prefix")
        raise ModelFormatError("not a forest model file")
    if data[:4] != MAGIC:
        raise ModelFormatError("bad magic bytes")
    if len(data) < 6:
        raise ModelTruncatedError("file ends inside the version field")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"format version {version}, expected {FORMAT_VERSION}")
    if len(data) < 14:
        raise ModelTruncatedError("file ends inside the length field")
    (declared,) = struct.unpack_from("<Q", data, 6)
    if len(data) < declared:
        raise ModelTruncatedError(f"file is {len(data)} bytes, header declares {declared}")
    if len(data) > declared:
        raise ModelFormatError("trailing bytes after declared end of file")
    (stored_crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != stored_crc:
        raise ModelChecksumError("checksum mismatch")

    offset = 14
    (header_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if offset + header_len > len(data) - 4:
        raise ModelTruncatedError("header ends past end of file")
    try:
        header = json.loads(data[offset : offset + header_len])
        classes = tuple(header["classes"])
        dim = int(header["dim"])
        train_seed = int(header["train_seed"])
        n_trees = int(header["n_trees"])
        hp_raw = header["hyperparams"]
        hp = ForestHyperparams(
            n_trees=hp_raw["n_trees"],
            max_depth=hp_raw["max_depth"],
            min_leaf_samples=hp_raw["min_leaf_samples"],
            features_per_split=hp_raw["features_per_split"],
            bootstrap=hp_raw["bootstrap"],
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable header: {exc}") from exc
    offset += header_len

    trees: list[TreeNode] = []
    for _ in range(n_trees):
        if offset + 4 > len(data) - 4:
            raise ModelTruncatedError("tree table ends early")
        (tree_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        end = offset + tree_len
        if end > len(data) - 4:
            raise ModelTruncatedError("tree record ends past end of file")
        trees.append(_unpack_tree(data[offset:end], len(classes)))
        offset = end
    if offset != len(data) - 4:
        raise ModelFormatError("unexpected bytes after the last tree")
    return Forest(
        trees=tuple(trees),
        classes=classes,
        dim=dim,
        hyperparams=hp,
        train_seed=train_seed,
    )


def save_forest(forest: Forest, path: str | Path) -> None:
    Path(path).write_bytes(forest_to_bytes(forest))


def load_forest(path: str | Path) -> Forest:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"model file not found: {p}")
    return forest_from_bytes(p.read_bytes())
