"""Feature extraction backends.

A normalized image tensor becomes a fixed-width feature vector. Two backends
exist behind one spec object:

* ``deterministic_stub`` - no learned weights. The tensor is mean-pooled to
  an 8x8x3 grid and each pooled statistic (centered at 0.5) is hashed into a
  signed output bucket by a fixed seeded assignment. The map is linear in the
  pooled grid, so nearby images land on nearby vectors while color/texture
  differences stay separable.
* ``external_model`` - weights loaded from a single ``.npz`` file holding a
  linear layer over the same pooled grid; scores are softmax-normalized so
  the output looks like class predictions. Heavier runtimes can be plugged
  in by implementing the same two-method interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np

GRID = 8
_STUB_SEED = 0x8F3A91D2


class Backend(str, Enum):
    DETERMINISTIC_STUB = "deterministic_stub"
    EXTERNAL_MODEL = "external_model"


class ExtractorError(RuntimeError):
    """External model could not be loaded or does not fit the spec."""


@dataclass(frozen=True)
class ExtractorSpec:
    backend: Backend = Backend.DETERMINISTIC_STUB
    dim: int = 21841
    model_path: str | None = None
    input_side: int = 224
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.input_side < GRID:
            raise ValueError(f"input_side must be >= {GRID}")
        if self.backend == Backend.EXTERNAL_MODEL and not self.model_path:
            raise ValueError("external_model backend requires model_path")


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray = field(repr=False)
    dim: int
    backend_id: str

    def __post_init__(self) -> None:
        if self.values.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")


def pool_grid(tensor: np.ndarray, grid: int = GRID) -> np.ndarray:
    """Mean-pool a (side, side, 3) tensor onto a (grid, grid, 3) grid,
    flattened row-major to length grid*grid*3."""
    side = tensor.shape[0]
    if tensor.shape != (side, side, 3):
        raise ValueError(f"expected square RGB tensor, got {tensor.shape}")
    if side < grid:
        raise ValueError(f"tensor side {side} smaller than grid {grid}")
    edges = (np.arange(grid + 1) * side) // grid
    rows = np.add.reduceat(tensor, edges[:-1], axis=0)
    cells = np.add.reduceat(rows, edges[:-1], axis=1)
    spans = (edges[1:] - edges[:-1]).astype(np.float64)
    cells /= spans[:, None, None]
    cells /= spans[None, :, None]
    return cells.reshape(-1)


class StubExtractor:
    """Seeded pseudo-random projection of the pooled grid.

    Bucket and sign assignments depend only on ``dim``, so separate runs
    (training, then later classification) agree on the mapping.
    """

    def __init__(self, spec: ExtractorSpec):
        self.spec = spec
        n_stats = GRID * GRID * 3
        rng = np.random.default_rng(_STUB_SEED)
        self._buckets = rng.integers(0, spec.dim, size=n_stats)
        self._signs = (rng.integers(0, 2, size=n_stats) * 2 - 1).astype(np.float64)
        self.backend_id = f"stub{GRID}x{GRID}-d{spec.dim}"

    def extract_tensor(self, tensor: np.ndarray) -> np.ndarray:
        pooled = pool_grid(tensor)
        out = np.zeros(self.spec.dim, dtype=np.float64)
        np.add.at(out, self._buckets, self._signs * (pooled - 0.5))
        return out


class NpzLinearExtractor:
    """``external_model`` backend: softmax(W @ pooled + b) from an .npz file."""

    def __init__(self, spec: ExtractorSpec):
        self.spec = spec
        path = Path(spec.model_path or "")
        try:
            with np.load(path) as data:
                self._weight = np.asarray(data["weight"], dtype=np.float64)
                self._bias = np.asarray(data["bias"], dtype=np.float64)
        except Exception as exc:  # noqa: BLE001
            raise ExtractorError(f"cannot load extractor model {path}: {exc}") from exc
        n_stats = GRID * GRID * 3
        if self._weight.shape != (spec.dim, n_stats):
            raise ExtractorError(
                f"model weight shape {self._weight.shape} does not match "
                f"dim={spec.dim}, pooled grid {n_stats}"
            )
        if self._bias.shape != (spec.dim,):
            raise ExtractorError(f"model bias shape {self._bias.shape} != ({spec.dim},)")
        self.backend_id = f"npz-linear-d{spec.dim}"

    def extract_tensor(self, tensor: np.ndarray) -> np.ndarray:
        z = self._weight @ pool_grid(tensor) + self._bias
        z -= z.max()
        e = np.exp(z)
        return e / e.sum()


def write_npz_model(path: str | Path, weight: np.ndarray, bias: np.ndarray) -> None:
    """Write an external_model file understood by NpzLinearExtractor."""
    np.savez(path, weight=weight, bias=bias)


@lru_cache(maxsize=8)
def build_extractor(spec: ExtractorSpec):
    if spec.backend == Backend.DETERMINISTIC_STUB:
        return StubExtractor(spec)
    return NpzLinearExtractor(spec)


def _check_tensor(tensor: np.ndarray, spec: ExtractorSpec) -> None:
    expected = (spec.input_side, spec.input_side, 3)
    if tensor.shape != expected:
        raise ValueError(f"tensor shape {tensor.shape} does not match {expected}")


def extract(tensor: np.ndarray, spec: ExtractorSpec) -> FeatureVector:
    """One tensor in, one finite feature vector of length ``spec.dim`` out."""
    _check_tensor(tensor, spec)
    backend = build_extractor(spec)
    return FeatureVector(
        values=backend.extract_tensor(tensor),
        dim=spec.dim,
        backend_id=backend.backend_id,
    )


def extract_batch(tensors: list[np.ndarray], spec: ExtractorSpec) -> np.ndarray:
    """Feature-major matrix of shape (dim, N); N may be zero."""
    if not tensors:
        return np.empty((spec.dim, 0), dtype=np.float64)
    columns = [extract(t, spec).values for t in tensors]
    return np.stack(columns, axis=1)
