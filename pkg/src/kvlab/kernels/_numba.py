"""numba @njit twins of the kernels in ``_numpy``.

Same contracts, explicit loops. Results agree with the numpy path to
floating-point reassociation (last-ulp differences from summation order),
which the kernel equivalence tests bound at 1e-12.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def attend(q, keys, values, group_size, scale):
    h_count, head_dim = q.shape
    s_count = keys.shape[0]
    weights = np.empty((h_count, s_count))
    out = np.zeros((h_count, head_dim))
    for h in range(h_count):
        kv = h // group_size
        row_max = -np.inf
        for s in range(s_count):
            acc = 0.0
            for d in range(head_dim):
                acc += q[h, d] * keys[s, kv, d]
            acc *= scale
            weights[h, s] = acc
            if acc > row_max:
                row_max = acc
        norm = 0.0
        for s in range(s_count):
            e = np.exp(weights[h, s] - row_max)
            weights[h, s] = e
            norm += e
        for s in range(s_count):
            weights[h, s] /= norm
        for s in range(s_count):
            w = weights[h, s]
            for d in range(head_dim):
                out[h, d] += w * values[s, kv, d]
    return out, weights


@njit(cache=True)
def selector_weights(queries, query_positions, keys, key_positions, group_size, scale):
    r_count, h_count, head_dim = queries.shape
    s_count = keys.shape[0]
    weights = np.zeros((r_count, h_count, s_count))
    for r in range(r_count):
        qpos = query_positions[r]
        for h in range(h_count):
            kv = h // group_size
            row_max = -np.inf
            for s in range(s_count):
                if key_positions[s] > qpos:
                    continue
                acc = 0.0
                for d in range(head_dim):
                    acc += queries[r, h, d] * keys[s, kv, d]
                acc *= scale
                weights[r, h, s] = acc
                if acc > row_max:
                    row_max = acc
            norm = 0.0
            for s in range(s_count):
                if key_positions[s] > qpos:
                    continue
                e = np.exp(weights[r, h, s] - row_max)
                weights[r, h, s] = e
                norm += e
            for s in range(s_count):
                if key_positions[s] > qpos:
                    weights[r, h, s] = 0.0
                else:
                    weights[r, h, s] /= norm
    return weights
