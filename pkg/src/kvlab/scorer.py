"""Importance scoring for periodic compression.

Pipeline: re-attend the cached selector queries against the current cache
(masked softmax per selector and head), average the resulting weights over
selectors and heads, smooth with a clipped local mean, and keep the
top-budget slots.

Scoring conventions (fixed here, relied on by the scheduler):
  - Selector queries attend over every cache entry visible to them, prompt
    entries included, so each weight row is a proper probability
    distribution. Eviction eligibility is decided by the caller.
  - When there are more query heads than KV heads, the head sum runs over
    query heads, each reading its mapped KV head.
  - Pooling windows are clipped at the ends of the evaluated range and the
    mean divides by the clipped length, so edge tokens are not penalized.
  - Ties in the top-k keep the more recent token.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .kv_cache import LayerKvCache, SelectorQueryCache


@dataclass
class AttentionMatrix:
    """Selector-window attention: weights (R, H, S) with causal validity.

    weights[r, h, s] is exactly 0 whenever valid[r, s] is False (key s lies
    after selector r); each valid row sums to 1.
    """

    weights: np.ndarray
    valid: np.ndarray
    key_positions: np.ndarray


@dataclass
class ImportanceVector:
    """Pooled per-token scores aligned with the evaluated storage slots."""

    scores: np.ndarray
    evaluated_storage_indices: np.ndarray


def selector_attention(selector: SelectorQueryCache, layer_cache: LayerKvCache,
                       head_dim: int) -> AttentionMatrix:
    """Masked softmax of each cached selector query against the layer cache."""
    if selector.size == 0:
        raise ValueError("selector query cache is empty")
    queries = selector.queries
    h_count = queries.shape[1]
    kv_count = layer_cache.kv_heads
    if h_count % kv_count != 0:
        raise ValueError(f"query heads ({h_count}) not divisible by KV heads ({kv_count})")
    if queries.shape[2] != head_dim or layer_cache.head_dim != head_dim:
        raise ValueError("head_dim mismatch between selector queries and cache")
    qpos = selector.positions
    kpos = layer_cache.positions
    if kpos.size == 0 or int(kpos.min()) > int(qpos.min()):
        raise ValueError("cache must contain keys visible to every selector query")
    weights = kernels.selector_weights(
        queries, qpos, layer_cache.keys, kpos,
        h_count // kv_count, 1.0 / math.sqrt(head_dim),
    )
    valid = kpos[None, :] <= qpos[:, None]
    return AttentionMatrix(weights=weights, valid=valid, key_positions=kpos.copy())


def local_average_pool(scores: np.ndarray, w: int) -> np.ndarray:
    """Moving average with half-window w, clipped at the ends.

    The mean divides by the clipped window length, never a fixed 2w+1, so a
    constant signal is a fixed point of the pooling.
    """
    if w < 0:
        raise ValueError("pooling half-window must be >= 0")
    if w == 0 or scores.size == 0:
        return scores.astype(np.float64, copy=True)
    n = scores.size
    csum = np.concatenate(([0.0], np.cumsum(scores, dtype=np.float64)))
    lo = np.maximum(np.arange(n) - w, 0)
    hi = np.minimum(np.arange(n) + w, n - 1)
    return (csum[hi + 1] - csum[lo]) / (hi - lo + 1)


def importance(attn: AttentionMatrix, evaluated_slots: np.ndarray, w: int) -> ImportanceVector:
    """Head- and selector-averaged weights of the evaluated slots, pooled.

    Raw score of slot t: mean over all (selector, head) pairs of the
    attention weight on t. Pooling runs along the evaluated slot sequence.
    """
    slots = np.asarray(evaluated_slots, dtype=np.int64)
    r_count, h_count, s_count = attn.weights.shape
    if slots.size and (slots.min() < 0 or slots.max() >= s_count):
        raise ValueError("evaluated slots out of range of the attention matrix")
    raw = attn.weights[:, :, slots].sum(axis=(0, 1)) / (r_count * h_count)
    return ImportanceVector(scores=local_average_pool(raw, w),
                            evaluated_storage_indices=slots.copy())


def top_k_retain(imp: ImportanceVector, budget: int) -> np.ndarray:
    """Storage indices of the ``budget`` highest-scoring evaluated slots.

    Ties go to the more recent token (larger storage index, which is the
    larger original position since storage order is append order). Returned
    ascending.
    """
    n = imp.scores.size
    if budget < 0:
        raise ValueError("budget must be >= 0")
    if budget > n:
        raise ValueError(f"budget {budget} exceeds evaluated count {n}")
    if budget == 0:
        return np.empty(0, dtype=np.int64)
    # lexsort: ascending by score, then by recency; the tail is the keep set.
    order = np.lexsort((imp.evaluated_storage_indices, imp.scores))
    kept = imp.evaluated_storage_indices[order[n - budget:]]
    return np.sort(kept)
