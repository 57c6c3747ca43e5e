"""Cross-modal attention maps and the salience/mask reductions built on them.

Per-layer attention between text queries and visual patches is pooled over
the query axis, min-max normalized, and reduced two ways: an average across
layers (the amplification signal for the positive view) and an elementwise
minimum (a conservative consensus whose thresholding yields the evidence
mask for the negative view).

Maps are stored flattened row-major over a square patch grid; the grid side
is recovered for serialization when the length is a perfect square.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, InputError, ShapeError

KIND_NORMALIZED = "normalized-single-layer"
KIND_FUSED = "fused"
KIND_CONSENSUS = "consensus"
_KINDS = (KIND_NORMALIZED, KIND_FUSED, KIND_CONSENSUS)

ROW_SUM_TOL = 1e-6


@dataclass(frozen=True)
class AttentionMap:
    """Row-stochastic query-token x patch attention for one layer."""

    layer_index: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ShapeError(f"attention map must be a nonempty 2-d matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InputError("attention map has non-finite entries")
        if np.any(v < 0.0):
            raise InputError("attention map has negative entries")
        row_sums = v.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
            raise InputError("attention map rows must sum to 1")
        object.__setattr__(self, "values", v)

    @property
    def n_queries(self) -> int:
        return self.values.shape[0]

    @property
    def n_patches(self) -> int:
        return self.values.shape[1]


def _grid_side_of(n: int) -> int | None:
    side = math.isqrt(n)
    return side if side * side == n else None


@dataclass(frozen=True)
class PatchSalience:
    """Per-patch weights in [0, 1] with the reduction that produced them."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 1:
            raise ShapeError(f"salience must be a nonempty vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InputError("salience has non-finite entries")
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise InputError("salience entries must lie in [0, 1]")
        if self.kind not in _KINDS:
            raise InputError(f"unknown salience kind {self.kind!r}")
        object.__setattr__(self, "values", v)

    @property
    def n_patches(self) -> int:
        return self.values.size

    @property
    def grid_side(self) -> int | None:
        return _grid_side_of(self.n_patches)

    def to_json(self) -> str:
        return json.dumps({
            "kind": self.kind,
            "grid_side": self.grid_side,
            "values": self.values.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "PatchSalience":
        obj = json.loads(text)
        return cls(values=np.asarray(obj["values"], dtype=np.float64), kind=obj["kind"])


@dataclass(frozen=True)
class EvidenceMask:
    """Boolean per-patch mask from thresholding a consensus map."""

    values: np.ndarray
    threshold_used: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=bool)
        if v.ndim != 1 or v.size < 1:
            raise ShapeError(f"mask must be a nonempty vector, got shape {v.shape}")
        if not 0.0 <= self.threshold_used <= 1.0:
            raise ConfigError(f"threshold {self.threshold_used} outside [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def n_patches(self) -> int:
        return self.values.size

    @property
    def grid_side(self) -> int | None:
        return _grid_side_of(self.n_patches)

    def to_json(self) -> str:
        return json.dumps({
            "kind": "mask",
            "grid_side": self.grid_side,
            "values": [bool(b) for b in self.values],
            "threshold_used": self.threshold_used,
        })

    @classmethod
    def from_json(cls, text: str) -> "EvidenceMask":
        obj = json.loads(text)
        return cls(values=np.asarray(obj["values"], dtype=bool),
                   threshold_used=float(obj["threshold_used"]))


def compute_attention(queries: np.ndarray, keys: np.ndarray, dim_scale: float,
                      layer_index: int = 0) -> AttentionMap:
    """Row-wise softmax of scaled query/key dot products."""
    q = np.asarray(queries, dtype=np.float64)
    k = np.asarray(keys, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2:
        raise ShapeError("queries and keys must be 2-d matrices")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"query dim {q.shape[1]} != key dim {k.shape[1]}")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(k))):
        raise InputError("non-finite entries in queries or keys")
    if not (np.isfinite(dim_scale) and dim_scale > 0.0):
        raise ConfigError(f"dim_scale must be positive, got {dim_scale}")
    scores = q @ k.T / dim_scale
    scores -= scores.max(axis=1, keepdims=True)  # stabilize; softmax is shift-invariant
    expd = np.exp(scores)
    values = expd / expd.sum(axis=1, keepdims=True)
    return AttentionMap(layer_index=layer_index, values=values)


def pool_over_queries(amap: AttentionMap) -> np.ndarray:
    """Mean over query rows; the mean of stochastic rows is stochastic."""
    if amap.n_queries < 1:
        raise InputError("cannot pool an empty attention map")
    return amap.values.mean(axis=0)


def normalize_map(pooled: np.ndarray) -> PatchSalience:
    """Min-max scale to [0, 1]; a constant map normalizes to all zeros.

    A uniform map carries no localization signal, so it is mapped to the
    neutral all-zeros element rather than all-ones.
    """
    v = np.asarray(pooled, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ShapeError("pooled map must be a nonempty vector")
    if not np.all(np.isfinite(v)):
        raise InputError("pooled map has non-finite entries")
    if np.any(v < 0.0):
        raise InputError("pooled map has negative entries")
    lo = v.min()
    hi = v.max()
    if hi == lo:
        out = np.zeros_like(v)
    else:
        out = (v - lo) / (hi - lo)
    return PatchSalience(values=out, kind=KIND_NORMALIZED)


def _check_aligned(maps: Sequence[PatchSalience]) -> int:
    if len(maps) < 1:
        raise InputError("need at least one salience map")
    n = maps[0].n_patches
    for m in maps[1:]:
        if m.n_patches != n:
            raise ShapeError(f"salience lengths differ: {m.n_patches} != {n}")
    return n


def fuse_maps(maps: Sequence[PatchSalience], num_layers: int | None = None) -> PatchSalience:
    """Elementwise arithmetic mean across layers."""
    _check_aligned(maps)
    if num_layers is not None and num_layers != len(maps):
        raise InputError(f"num_layers {num_layers} != number of maps {len(maps)}")
    # sequential accumulation: the order is part of the serialized contract
    acc = maps[0].values.copy()
    for m in maps[1:]:
        acc = acc + m.values
    return PatchSalience(values=acc / float(len(maps)), kind=KIND_FUSED)


def consensus_map(maps: Sequence[PatchSalience]) -> PatchSalience:
    """Elementwise minimum across layers: a conservative evidence estimate."""
    _check_aligned(maps)
    acc = maps[0].values.copy()
    for m in maps[1:]:
        acc = np.minimum(acc, m.values)
    return PatchSalience(values=acc, kind=KIND_CONSENSUS)


def threshold_mask(consensus: PatchSalience, tau: float) -> EvidenceMask:
    """Indicator of consensus >= tau."""
    if not (np.isfinite(tau) and 0.0 <= tau <= 1.0):
        raise ConfigError(f"tau must lie in [0, 1], got {tau}")
    if consensus.kind != KIND_CONSENSUS:
        raise InputError(f"threshold_mask expects a consensus map, got kind {consensus.kind!r}")
    return EvidenceMask(values=consensus.values >= tau, threshold_used=float(tau))


def resample_map(values: np.ndarray, target_side: int) -> np.ndarray:
    """Bilinear resample of a flattened square map onto another square grid.

    Corners align (output coordinate i maps to i * (g1-1) / (g2-1)), so equal
    grids reproduce the input exactly and constants stay constant. Output is
    clipped to [0, 1] to absorb rounding in the convex combinations.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError("map must be a flattened vector")
    side = _grid_side_of(v.size)
    if side is None:
        raise ShapeError(f"map length {v.size} is not a perfect square")
    if target_side < 1:
        raise ShapeError("target grid side must be >= 1")
    if np.any(v < 0.0) or np.any(v > 1.0):
        raise InputError("map entries must lie in [0, 1]")
    if target_side == side:
        return v.copy()
    grid = v.reshape(side, side)
    if target_side == 1:
        coords = np.array([(side - 1) / 2.0])
    else:
        coords = np.arange(target_side) * (side - 1) / (target_side - 1)
    i0 = np.floor(coords).astype(int)
    i0 = np.minimum(i0, side - 2) if side > 1 else np.zeros_like(i0)
    frac = coords - i0
    i1 = np.minimum(i0 + 1, side - 1)
    # separable bilinear: rows then columns
    rows = grid[i0, :] * (1.0 - frac)[:, None] + grid[i1, :] * frac[:, None]
    out = rows[:, i0] * (1.0 - frac)[None, :] + rows[:, i1] * frac[None, :]
    return np.clip(out.reshape(-1), 0.0, 1.0)
