"""Benchmark the numba kernels against the pure-numpy fallback.

Times the two hot kernels across cache sizes, then a full greedy decode
under each backend. Run from the repo root:

    python benchmarks/bench_backends.py
"""

import math
import time

import numpy as np

from kvlab import kernels
from kvlab.kernels import _numba, _numpy
from kvlab.model import ModelConfig, generate, init_model
from kvlab.policies import PolicySpec
from kvlab.scheduler import RpcConfig


def time_fn(fn, *args, repeat=2000):
    fn(*args)  # warm-up / JIT compile
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def bench_attend():
    print("attend: single-token attention over the cache")
    print(f"{'cache size':>10} {'numpy':>12} {'numba':>12} {'speedup':>8}")
    rng = np.random.default_rng(0)
    h_count, kv_heads, head_dim = 8, 4, 16
    scale = 1.0 / math.sqrt(head_dim)
    for s_count in (16, 64, 256, 1024):
        q = rng.standard_normal((h_count, head_dim))
        keys = rng.standard_normal((s_count, kv_heads, head_dim))
        values = rng.standard_normal((s_count, kv_heads, head_dim))
        t_np = time_fn(_numpy.attend, q, keys, values, 2, scale)
        t_nb = time_fn(_numba.attend, q, keys, values, 2, scale)
        print(f"{s_count:>10} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
              f"{t_np / t_nb:>7.2f}x")


def bench_selector():
    print("\nselector_weights: selector-window scoring at a compression event")
    print(f"{'cache size':>10} {'numpy':>12} {'numba':>12} {'speedup':>8}")
    rng = np.random.default_rng(1)
    r_count, h_count, kv_heads, head_dim = 32, 8, 4, 16
    scale = 1.0 / math.sqrt(head_dim)
    for s_count in (64, 256, 1024):
        queries = rng.standard_normal((r_count, h_count, head_dim))
        keys = rng.standard_normal((s_count, kv_heads, head_dim))
        kpos = np.arange(s_count, dtype=np.int64)
        qpos = kpos[-r_count:].copy()
        t_np = time_fn(_numpy.selector_weights, queries, qpos, keys, kpos, 2, scale,
                       repeat=200)
        t_nb = time_fn(_numba.selector_weights, queries, qpos, keys, kpos, 2, scale,
                       repeat=200)
        print(f"{s_count:>10} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
              f"{t_np / t_nb:>7.2f}x")


def bench_decode(steps=400):
    print(f"\ngenerate: {steps}-step greedy decode, default model")
    weights = init_model(ModelConfig(seed=0))
    spec = PolicySpec(kind="RpcPeriodic", rpc=RpcConfig(P=32, R=8, c=4, w=3))
    results = {}
    for backend in ("numpy", "numba"):
        kernels.set_backend(backend)
        generate(weights, [1, 2, 3], 16, spec)  # warm-up
        start = time.perf_counter()
        trace = generate(weights, [1, 2, 3], steps, spec)
        results[backend] = time.perf_counter() - start
        print(f"  {backend:>6}: {results[backend]:.3f}s "
              f"({steps / results[backend]:.0f} tokens/s, {len(trace.events)} events)")
    print(f"  speedup: {results['numpy'] / results['numba']:.2f}x")


if __name__ == "__main__":
    previous = kernels.active_backend
    try:
        bench_attend()
        bench_selector()
        bench_decode()
    finally:
        kernels.set_backend(previous)
