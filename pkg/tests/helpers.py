"""Shared test scaffolding: a transformer-free decode driver and independent
brute-force oracles. The oracles deliberately avoid the package's kernels and
vectorized paths; they are plain-Python re-derivations used as ground truth.
"""

from __future__ import annotations

import math
from types import SimpleNamespace

import numpy as np

from kvlab import kernels
from kvlab.kv_cache import KvEntryMeta, LayerKvCache, Origin


def synthetic_decode(policy, steps, *, layers=2, query_heads=2, kv_heads=1,
                     head_dim=4, prompt_len=0, seed=0):
    """Drive the eviction machinery with random projections, no transformer.

    Exercises the same append -> attend -> observe -> end_step sequence the
    real decode loop uses, with random q/k/v per step. Returns
    (caches, occupancy_rows, events) where occupancy_rows[t-1] is the
    per-layer Generated occupancy after step t.
    """
    rng = np.random.default_rng(seed)
    caches = [LayerKvCache(kv_heads, head_dim) for _ in range(layers)]
    policy.bind(SimpleNamespace(layers=layers, query_heads=query_heads,
                                kv_heads=kv_heads, head_dim=head_dim))
    group = query_heads // kv_heads
    scale = 1.0 / math.sqrt(head_dim)
    position = 0
    for _ in range(prompt_len):
        meta = KvEntryMeta(position, Origin.PROMPT)
        for cache in caches:
            cache.append(rng.standard_normal((kv_heads, head_dim)),
                         rng.standard_normal((kv_heads, head_dim)), meta)
        position += 1
    occupancy_rows, events = [], []
    for t in range(1, steps + 1):
        meta = KvEntryMeta(position, Origin.GENERATED, generation_step=t)
        for layer, cache in enumerate(caches):
            k = rng.standard_normal((kv_heads, head_dim))
            v = rng.standard_normal((kv_heads, head_dim))
            q = rng.standard_normal((query_heads, head_dim))
            cache.append(k, v, meta)
            _, weights = kernels.attend(q, cache.keys, cache.values, group, scale)
            policy.observe_layer(layer, cache, q, weights, t)
        event = policy.end_step(caches, t)
        occupancy_rows.append([c.generated_occupancy for c in caches])
        if event is not None:
            events.append(event)
        position += 1
    return caches, occupancy_rows, events


def softmax_plain(scores):
    """Scalar-loop softmax, the reference for every vectorized softmax."""
    m = max(scores)
    exps = [math.exp(s - m) for s in scores]
    z = sum(exps)
    return [e / z for e in exps]


def brute_selector_weights(queries, qpos, keys, kpos, group_size, scale):
    """(R, H, S) masked attention computed with plain loops."""
    r_count, h_count, head_dim = queries.shape
    s_count = keys.shape[0]
    out = np.zeros((r_count, h_count, s_count))
    for r in range(r_count):
        visible = [s for s in range(s_count) if kpos[s] <= qpos[r]]
        for h in range(h_count):
            kv = h // group_size
            scores = []
            for s in visible:
                dot = sum(float(queries[r, h, d]) * float(keys[s, kv, d])
                          for d in range(head_dim))
                scores.append(dot * scale)
            weights = softmax_plain(scores)
            for s, w in zip(visible, weights):
                out[r, h, s] = w
    return out


def brute_importance(queries, qpos, keys, kpos, group_size, scale,
                     evaluated_slots, w):
    """Pooled importance of the evaluated slots as one explicit triple sum.

    Averages attention over selectors and heads per slot, then takes the
    clipped-window local mean along the evaluated sequence.
    """
    attn = brute_selector_weights(queries, qpos, keys, kpos, group_size, scale)
    r_count, h_count, _ = attn.shape
    m = len(evaluated_slots)
    raw = []
    for slot in evaluated_slots:
        total = 0.0
        for r in range(r_count):
            for h in range(h_count):
                total += attn[r, h, slot]
        raw.append(total / (r_count * h_count))
    pooled = []
    for j in range(m):
        lo, hi = max(0, j - w), min(m - 1, j + w)
        pooled.append(sum(raw[lo:hi + 1]) / (hi - lo + 1))
    return np.array(pooled)


def topk_oracle(scores, slots, budget):
    """Full-sort selection: best scores first, ties to the larger slot."""
    order = sorted(range(len(scores)), key=lambda i: (scores[i], slots[i]),
                   reverse=True)
    return sorted(int(slots[i]) for i in order[:budget])


def make_state(keys, queries, *, origins=None):
    """Cache + selector from raw arrays; selector covers the newest entries."""
    s_count, kv_heads, head_dim = keys.shape
    r_count, h_count, _ = queries.shape
    cache = LayerKvCache(kv_heads, head_dim)
    for pos in range(s_count):
        origin = origins[pos] if origins else Origin.GENERATED
        step = None if origin is Origin.PROMPT else pos + 1
        cache.append(keys[pos], np.zeros((kv_heads, head_dim)),
                     KvEntryMeta(pos, origin, step))
    from kvlab.kv_cache import SelectorQueryCache

    selector = SelectorQueryCache(h_count, head_dim, limit=r_count)
    for i in range(r_count):
        selector.append(queries[i], s_count - r_count + i)
    return cache, selector


def random_scoring_instance(rng, *, max_cache=32, max_r=4, max_h=4, max_w=3):
    """Random small selector/cache state for oracle comparisons.

    Returns (queries, qpos, keys, kpos, group_size, evaluated_slots, w).
    The last max_r entries play the selector window; everything before is
    evaluated.
    """
    kv_heads = int(rng.integers(1, max_h + 1))
    group = int(rng.integers(1, max_h // kv_heads + 1)) if kv_heads < max_h else 1
    h_count = kv_heads * group
    head_dim = int(rng.integers(2, 9))
    r_count = int(rng.integers(1, max_r + 1))
    s_count = int(rng.integers(r_count + 1, max_cache + 1))
    w = int(rng.integers(0, max_w + 1))
    keys = rng.standard_normal((s_count, kv_heads, head_dim))
    kpos = np.arange(s_count, dtype=np.int64)
    queries = rng.standard_normal((r_count, h_count, head_dim))
    qpos = kpos[-r_count:].copy()
    evaluated = np.arange(s_count - r_count, dtype=np.int64)
    return queries, qpos, keys, kpos, group, evaluated, w
