"""Periodic compression schedule and event execution.

All step arithmetic is in generated-token counts, 1-based. With interval P
and selector window R (config fields ``P`` and ``R``):

  - event N fires at t = N*P + R, so the first event waits for P+R tokens;
  - the selector window of event N is exactly the queries of steps
    N*P+1 .. N*P+R;
  - event N evaluates every Generated entry except the R selector entries
    (tokens retained from earlier cycles compete again), keeps the
    floor(N*P/c) best, and always preserves the selector window and all
    prompt entries.

Budgets are computed from N directly, never incrementally, so rounding
cannot drift when P is not divisible by c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kv_cache import LayerKvCache, SelectorQueryCache
from .scorer import importance, selector_attention, top_k_retain


@dataclass(frozen=True)
class RpcConfig:
    """Hyperparameters of the periodic compression schedule.

    P: compression interval in generated-token steps.
    R: selector window size (queries cached per cycle), 1 <= R <= P.
    c: target compression ratio, >= 1; c = 1 disables eviction.
    w: pooling half-window for importance smoothing.
    """

    P: int = 1024
    R: int = 32
    c: float = 4.0
    w: int = 3

    def __post_init__(self):
        if self.P < 1:
            raise ValueError("P must be >= 1")
        if not 1 <= self.R <= self.P:
            raise ValueError("R must satisfy 1 <= R <= P")
        if self.c < 1:
            raise ValueError("c must be >= 1")
        if self.w < 0:
            raise ValueError("w must be >= 0")
        if math.floor(self.P / self.c) < 1:
            raise ValueError("floor(P / c) must be >= 1")


@dataclass
class CompressionEvent:
    """Record of one compression cycle.

    survivor_positions holds, per layer, the sorted original positions of
    the Generated entries that survived (top-budget plus selector window);
    prompt entries are exempt and not listed.
    """

    index: int
    trigger_step: int
    evaluated_count: int
    retained_budget: int
    survivor_positions: list[list[int]] = field(default_factory=list)


def should_cache_query(t: int, cfg: RpcConfig) -> bool:
    """True iff the query of generated-token step t belongs to a selector window."""
    if t < 1:
        raise ValueError("t is a 1-based generated-token count")
    return t > cfg.P and (t - 1) % cfg.P < cfg.R


def should_compress(t: int, cfg: RpcConfig) -> bool:
    """True iff a compression event triggers at generated-token step t."""
    if t < 1:
        raise ValueError("t is a 1-based generated-token count")
    return t >= cfg.P + cfg.R and (t - cfg.R) % cfg.P == 0


def retained_budget(event_index: int, cfg: RpcConfig) -> int:
    """floor(N*P / c) tokens kept from the evaluated set at event N."""
    if event_index < 1:
        raise ValueError("event_index is 1-based")
    total = event_index * cfg.P
    if float(cfg.c).is_integer():
        return total // int(cfg.c)
    return math.floor(total / cfg.c)


def evaluated_count(event_index: int, cfg: RpcConfig) -> int:
    """Tokens scored at event N: floor((N-1)*P/c) + P."""
    if event_index == 1:
        return cfg.P
    return retained_budget(event_index - 1, cfg) + cfg.P


def trigger_step(event_index: int, cfg: RpcConfig) -> int:
    return event_index * cfg.P + cfg.R


def compress_event(caches: list[LayerKvCache], selectors: list[SelectorQueryCache],
                   cfg: RpcConfig, event_index: int) -> CompressionEvent:
    """Run compression cycle N over all layers and reset the selector caches.

    Post-state Generated occupancy of every layer is exactly
    floor(N*P/c) + R.
    """
    budget = retained_budget(event_index, cfg)
    expected_eval = evaluated_count(event_index, cfg)
    event = CompressionEvent(
        index=event_index,
        trigger_step=trigger_step(event_index, cfg),
        evaluated_count=expected_eval,
        retained_budget=budget,
    )
    for cache, selector in zip(caches, selectors):
        if selector.size != cfg.R:
            raise RuntimeError(
                f"event {event_index}: selector cache holds {selector.size} queries, expected {cfg.R}"
            )
        gen_slots = cache.generated_slots()
        window_slots = gen_slots[-cfg.R:]
        if not np.array_equal(cache.positions[window_slots], selector.positions):
            raise RuntimeError("selector window does not match the newest generated entries")
        eval_slots = gen_slots[: gen_slots.size - cfg.R]
        if eval_slots.size != expected_eval:
            raise RuntimeError(
                f"event {event_index}: {eval_slots.size} evaluated entries, expected {expected_eval}"
            )
        if budget > eval_slots.size:
            raise RuntimeError("retained budget exceeds evaluated count (c < 1?)")

        attn = selector_attention(selector, cache, cache.head_dim)
        imp = importance(attn, eval_slots, cfg.w)
        kept = top_k_retain(imp, budget)

        survivors = np.concatenate((cache.prompt_slots(), kept, window_slots))
        gen_positions = np.concatenate(
            (cache.positions[kept], cache.positions[window_slots])
        )
        event.survivor_positions.append(sorted(int(p) for p in gen_positions))
        cache.evict_keep(survivors)
        selector.clear()
    return event
