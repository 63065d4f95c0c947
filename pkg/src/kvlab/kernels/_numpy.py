"""Pure-numpy reference implementations of the hot attention kernels.

These are the fallback path and the ground truth the numba twins are tested
against. Shapes:

  q        (H, D)        query vectors of the current token, one per query head
  keys     (S, H_kv, D)  cached key vectors, storage order
  values   (S, H_kv, D)  cached value vectors, aligned with keys
  queries  (R, H, D)     cached selector-window queries

``group_size = H // H_kv``: query head h reads KV head ``h // group_size``.
"""

from __future__ import annotations

import numpy as np


def attend(q: np.ndarray, keys: np.ndarray, values: np.ndarray,
           group_size: int, scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Single-token causal attention over the whole cache.

    Returns (out, weights): out is (H, D), weights is the (H, S) softmax
    matrix. Every cached entry is visible (the caller appends the current
    token's KV before attending, so causality holds by construction).
    """
    h_count, head_dim = q.shape
    s_count, kv_count, _ = keys.shape
    qg = q.reshape(kv_count, group_size, head_dim)
    scores = np.einsum("kgd,skd->kgs", qg, keys).reshape(h_count, s_count) * scale
    scores -= scores.max(axis=1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=1, keepdims=True)
    wg = weights.reshape(kv_count, group_size, s_count)
    out = np.einsum("kgs,skd->kgd", wg, values).reshape(h_count, head_dim)
    return out, weights


def selector_weights(queries: np.ndarray, query_positions: np.ndarray,
                     keys: np.ndarray, key_positions: np.ndarray,
                     group_size: int, scale: float) -> np.ndarray:
    """Masked softmax of cached selector queries against the current cache.

    Returns (R, H, S) weights. Entry (r, h, s) is exactly 0 when key s sits
    at a position later than selector r (causality); each valid row sums
    to 1. Every selector must see at least one key (its own), otherwise the
    row would be empty.
    """
    r_count, h_count, head_dim = queries.shape
    s_count, kv_count, _ = keys.shape
    qg = queries.reshape(r_count, kv_count, group_size, head_dim)
    scores = np.einsum("rkgd,skd->rkgs", qg, keys).reshape(r_count, h_count, s_count) * scale
    invalid = key_positions[None, :] > query_positions[:, None]  # (R, S)
    scores = np.where(invalid[:, None, :], -np.inf, scores)
    scores -= scores.max(axis=2, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=2, keepdims=True)
    return weights
