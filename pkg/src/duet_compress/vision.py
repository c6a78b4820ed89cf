"""Single-shot visual token compression: dominant selection plus clustering.

Given token features x (N x d) and a visual self-attention map a (N x N),
keep the k1 most-attended tokens verbatim, then summarize the residual set
with k2 clusters of up to w neighbors each, merged by plain averaging.
Output is always exactly k1 + k2 rows.

Determinism contract: every ranking breaks ties by descending score then
ascending token index, and every reduction (column sums, cluster means)
accumulates row-by-row in index order, so results are bit-reproducible
and independently checkable by a naive reimplementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .tensorio import archive_get


@dataclass(frozen=True)
class CompressionConfig:
    """k1 dominant tokens, k2 clusters of width w over the residual set.

    disjoint=False reproduces the as-written behavior where clusters may
    overlap and a centroid may be its own member; disjoint=True makes each
    residual token join at most one cluster (earlier centroids claim first).
    """

    k1: int
    k2: int
    w: int = 4
    disjoint: bool = False

    def validate(self, n_tokens: int) -> None:
        if self.k1 < 0 or self.k2 < 0:
            raise ConfigError(f"k1 and k2 must be >= 0, got k1={self.k1} k2={self.k2}")
        if self.k1 + self.k2 < 1:
            raise ConfigError("k1 + k2 must be >= 1")
        if self.k1 + self.k2 > n_tokens:
            raise ConfigError(
                f"k1 + k2 = {self.k1 + self.k2} exceeds token count {n_tokens}"
            )
        if self.w < 1:
            raise ConfigError(f"cluster width must be >= 1, got {self.w}")


@dataclass(frozen=True)
class CompressionResult:
    out_tokens: np.ndarray          # (k1 + k2, d), dominant rows then merged rows
    dominant: tuple[int, ...]       # descending score order
    centroids: tuple[int, ...]      # descending score order within the residual
    clusters: tuple[tuple[int, ...], ...]  # members per centroid, rank order
    dropped: tuple[int, ...]        # residual tokens covered by no cluster, ascending
    scores: np.ndarray = field(repr=False, default=None)  # column-sum saliency, length N


def _as_matrix(arr: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr.astype(np.float64, copy=False)


def _check_attention(a: np.ndarray, name: str = "attention") -> np.ndarray:
    a = _as_matrix(a, name)
    if not np.isfinite(a).all():
        raise ConfigError(f"{name} contains NaN or Inf")
    if (a < 0).any():
        raise ConfigError(f"{name} contains negative entries")
    return a


def attention_scores(a: np.ndarray) -> np.ndarray:
    """Per-token saliency: column sums of a square attention map.

    Accumulates rows sequentially (row 0 first) so the result is
    bit-identical to a scalar loop in the same order.
    """
    a = _check_attention(a)
    n, m = a.shape
    if n != m:
        raise ConfigError(f"attention must be square, got {a.shape}")
    acc = np.zeros(n, dtype=np.float64)
    for i in range(n):
        acc += a[i]
    return acc


def top_k(
    scores: np.ndarray, k: int, restrict: Sequence[int] | None = None
) -> tuple[int, ...]:
    """Indices of the k highest scores, descending; ties go to the lower index.

    restrict limits candidates to the given indices (treated as a set).
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ConfigError(f"scores must be 1-D, got shape {scores.shape}")
    if restrict is None:
        cand = np.arange(scores.shape[0])
    else:
        cand = np.fromiter(sorted(set(restrict)), dtype=np.int64, count=-1)
        if cand.size and (cand[0] < 0 or cand[-1] >= scores.shape[0]):
            raise ConfigError("restriction indices out of range")
    if k < 0 or k > cand.size:
        raise ConfigError(f"k={k} outside 0..{cand.size}")
    if k == 0:
        return ()
    # Stable sort on negated scores: equal scores keep ascending-index order.
    order = np.argsort(-scores[cand], kind="stable")
    return tuple(int(i) for i in cand[order[:k]])


def cluster_neighbors(
    a: np.ndarray, centroid: int, candidates: Sequence[int], w: int
) -> tuple[int, ...]:
    """Up to w candidates most attended by the centroid row, rank order."""
    a = _check_attention(a)
    if not candidates:
        raise ConfigError("cluster candidates must be non-empty")
    if w < 1:
        raise ConfigError(f"cluster width must be >= 1, got {w}")
    row = a[centroid]
    take = min(w, len(set(candidates)))
    return top_k(row, take, restrict=candidates)


def merge_cluster(x: np.ndarray, members: Sequence[int]) -> np.ndarray:
    """Mean of the member rows, accumulated in the given member order."""
    x = _as_matrix(x, "tokens")
    if len(members) == 0:
        raise ConfigError("cannot merge an empty cluster")
    acc = np.zeros(x.shape[1], dtype=np.float64)
    for m in members:
        acc += x[m]
    return acc / len(members)


def compress_vision(
    x: np.ndarray, a: np.ndarray, cfg: CompressionConfig
) -> CompressionResult:
    """Run both selection stages and return exactly k1 + k2 output rows."""
    x = _as_matrix(x, "tokens")
    a = _check_attention(a)
    n = x.shape[0]
    if a.shape != (n, n):
        raise ConfigError(f"attention shape {a.shape} does not match {n} tokens")
    cfg.validate(n)

    s = attention_scores(a)
    dominant = top_k(s, cfg.k1)
    dom_set = set(dominant)
    residual = [i for i in range(n) if i not in dom_set]
    centroids = top_k(s, cfg.k2, restrict=residual)

    clusters: list[tuple[int, ...]] = []
    if cfg.disjoint:
        pool = list(residual)
        for c in centroids:
            if not pool:
                raise ConfigError(
                    "residual pool exhausted in disjoint mode; lower k2 or w"
                )
            members = cluster_neighbors(a, c, pool, cfg.w)
            clusters.append(members)
            taken = set(members)
            pool = [i for i in pool if i not in taken]
    else:
        for c in centroids:
            clusters.append(cluster_neighbors(a, c, residual, cfg.w))

    rows = [x[i] for i in dominant]
    rows.extend(merge_cluster(x, members) for members in clusters)
    out = np.vstack(rows)  # k1 + k2 >= 1, so rows is never empty

    covered: set[int] = set()
    for members in clusters:
        covered.update(members)
    dropped = tuple(i for i in residual if i not in covered)

    return CompressionResult(
        out_tokens=out,
        dominant=dominant,
        centroids=centroids,
        clusters=tuple(clusters),
        dropped=dropped,
        scores=s,
    )


def compress_from_archive(
    entries: Mapping[str, np.ndarray], cfg: CompressionConfig
) -> CompressionResult:
    """Compress the `tokens` / `attn_v2v` pair stored in an archive."""
    x = archive_get(entries, "tokens")
    a = archive_get(entries, "attn_v2v")
    return compress_vision(x, a, cfg)


def result_entries(
    result: CompressionResult, cfg: CompressionConfig
) -> dict[str, np.ndarray]:
    """Archive entries for a result; empty index lists are omitted.

    cluster_members is (k2, w) int64 with -1 padding for short clusters.
    """
    out: dict[str, np.ndarray] = {
        "out_tokens": result.out_tokens,
        "config": np.array([cfg.k1, cfg.k2, cfg.w], dtype=np.int64),
    }
    if result.dominant:
        out["dominant_idx"] = np.array(result.dominant, dtype=np.int64)
    if result.centroids:
        out["centroid_idx"] = np.array(result.centroids, dtype=np.int64)
        members = np.full((len(result.clusters), cfg.w), -1, dtype=np.int64)
        for row, cluster in enumerate(result.clusters):
            members[row, : len(cluster)] = cluster
        out["cluster_members"] = members
    if result.dropped:
        out["dropped_idx"] = np.array(result.dropped, dtype=np.int64)
    return out
