"""Eviction policies behind one decode-loop interface.

A policy sees every layer's attention right after it is computed
(``observe_layer``) and may mutate the caches once per generated token
(``end_step``). Budget policies evict as soon as Generated occupancy
exceeds their budget; the periodic policy defers to the scheduler. Prompt
entries are never evicted by any policy.

The budget baselines are deliberately simple single-sequence forms: H2O
keeps the entries with the largest accumulated attention mass, TOVA keeps
the entries most attended by the current step's query. Both aggregate
heads by mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kv_cache import LayerKvCache, SelectorQueryCache
from .scheduler import CompressionEvent, RpcConfig, compress_event, should_cache_query, should_compress

POLICY_KINDS = ("RpcPeriodic", "H2oBudget", "TovaBudget", "SlidingWindow", "FullCache")
_BUDGET_KINDS = ("H2oBudget", "TovaBudget", "SlidingWindow")


@dataclass(frozen=True)
class PolicySpec:
    """Declarative policy selection, loadable from the run configuration."""

    kind: str
    budget: int | None = None
    rpc: RpcConfig | None = None
    recent_exempt: int = 8  # H2O only: newest entries shielded from eviction

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.kind in _BUDGET_KINDS:
            if self.budget is None or self.budget < 1:
                raise ValueError(f"{self.kind} requires budget >= 1")
        elif self.budget is not None:
            raise ValueError(f"{self.kind} takes no budget")
        if self.kind == "RpcPeriodic" and self.rpc is None:
            raise ValueError("RpcPeriodic requires an rpc config")
        if self.kind != "RpcPeriodic" and self.rpc is not None:
            raise ValueError(f"{self.kind} takes no rpc config")
        if self.recent_exempt < 0:
            raise ValueError("recent_exempt must be >= 0")

    def label(self) -> str:
        if self.kind == "RpcPeriodic":
            r = self.rpc
            return f"RpcPeriodic(P={r.P},R={r.R},c={r.c:g},w={r.w})"
        if self.kind in _BUDGET_KINDS:
            return f"{self.kind}(budget={self.budget})"
        return self.kind


def h2o_step(cumulative_mass: np.ndarray, generated_slots: np.ndarray,
             budget: int, recent_exempt: int) -> int | None:
    """Storage slot to evict once over budget, or None.

    Victim: lowest accumulated attention mass among Generated entries
    outside the recency shield; ties go to the oldest. If the shield covers
    every candidate it is ignored, because the budget must hold.
    """
    if generated_slots.size <= budget:
        return None
    candidates = generated_slots[:-recent_exempt] if recent_exempt > 0 else generated_slots
    if candidates.size == 0:
        candidates = generated_slots
    return int(candidates[np.argmin(cumulative_mass[candidates])])


def tova_step(step_weights: np.ndarray, generated_slots: np.ndarray,
              budget: int) -> int | None:
    """Storage slot with the lowest current-step attention, or None if at budget."""
    if generated_slots.size <= budget:
        return None
    return int(generated_slots[np.argmin(step_weights[generated_slots])])


def sliding_window_step(generated_slots: np.ndarray, budget: int) -> np.ndarray:
    """Generated slots to evict so only the most recent ``budget`` remain."""
    if generated_slots.size <= budget:
        return np.empty(0, dtype=np.int64)
    return generated_slots[: generated_slots.size - budget]


class EvictionPolicy:
    """Decode-loop hooks. Subclasses hold all per-run state; one instance
    drives exactly one decode sequence."""

    name = "FullCache"

    def bind(self, model_cfg) -> None:
        """Reset state for a fresh decode of a model with this config."""

    def observe_layer(self, layer: int, cache: LayerKvCache, query: np.ndarray,
                      weights: np.ndarray, t: int) -> None:
        """Called after layer attention at generated step t (1-based)."""

    def end_step(self, caches: list[LayerKvCache], t: int) -> CompressionEvent | None:
        """Called once per generated step after all layers; may evict."""
        return None


class FullCachePolicy(EvictionPolicy):
    """Never evicts; the reference for equivalence and divergence checks."""


class SlidingWindowPolicy(EvictionPolicy):
    name = "SlidingWindow"

    def __init__(self, budget: int):
        self.budget = budget

    def end_step(self, caches, t):
        for cache in caches:
            evict = sliding_window_step(cache.generated_slots(), self.budget)
            if evict.size:
                keep = np.setdiff1d(np.arange(len(cache)), evict)
                cache.evict_keep(keep)
        return None


class H2OPolicy(EvictionPolicy):
    name = "H2oBudget"

    def __init__(self, budget: int, recent_exempt: int = 8):
        self.budget = budget
        self.recent_exempt = recent_exempt
        self._mass: list[np.ndarray] = []

    def bind(self, model_cfg):
        self._mass = [np.zeros(0) for _ in range(model_cfg.layers)]

    def observe_layer(self, layer, cache, query, weights, t):
        mass = self._mass[layer]
        if mass.size < len(cache):
            mass = np.concatenate((mass, np.zeros(len(cache) - mass.size)))
        mass += weights.mean(axis=0)
        self._mass[layer] = mass

    def end_step(self, caches, t):
        for layer, cache in enumerate(caches):
            while cache.generated_occupancy > self.budget:
                victim = h2o_step(self._mass[layer], cache.generated_slots(),
                                  self.budget, self.recent_exempt)
                keep = np.delete(np.arange(len(cache)), victim)
                cache.evict_keep(keep)
                self._mass[layer] = self._mass[layer][keep]
        return None


class TovaPolicy(EvictionPolicy):
    name = "TovaBudget"

    def __init__(self, budget: int):
        self.budget = budget
        self._last: list[np.ndarray] = []

    def bind(self, model_cfg):
        self._last = [np.zeros(0) for _ in range(model_cfg.layers)]

    def observe_layer(self, layer, cache, query, weights, t):
        self._last[layer] = weights.mean(axis=0)

    def end_step(self, caches, t):
        for layer, cache in enumerate(caches):
            while cache.generated_occupancy > self.budget:
                victim = tova_step(self._last[layer], cache.generated_slots(), self.budget)
                keep = np.delete(np.arange(len(cache)), victim)
                cache.evict_keep(keep)
                self._last[layer] = self._last[layer][keep]
        return None


class RpcPolicy(EvictionPolicy):
    name = "RpcPeriodic"

    def __init__(self, cfg: RpcConfig):
        self.cfg = cfg
        self._selectors: list[SelectorQueryCache] = []
        self._events = 0

    def bind(self, model_cfg):
        self._selectors = [
            SelectorQueryCache(model_cfg.query_heads, model_cfg.head_dim, self.cfg.R)
            for _ in range(model_cfg.layers)
        ]
        self._events = 0

    def observe_layer(self, layer, cache, query, weights, t):
        if should_cache_query(t, self.cfg):
            self._selectors[layer].append(query, int(cache.positions[-1]))

    def end_step(self, caches, t):
        if not should_compress(t, self.cfg):
            return None
        self._events += 1
        return compress_event(caches, self._selectors, self.cfg, self._events)


def make_policy(spec: PolicySpec) -> EvictionPolicy:
    """Fresh policy instance for one decode run."""
    if spec.kind == "FullCache":
        return FullCachePolicy()
    if spec.kind == "SlidingWindow":
        return SlidingWindowPolicy(spec.budget)
    if spec.kind == "H2oBudget":
        return H2OPolicy(spec.budget, spec.recent_exempt)
    if spec.kind == "TovaBudget":
        return TovaPolicy(spec.budget)
    return RpcPolicy(spec.rpc)
