"""Per-layer KV storage with position metadata and index-set eviction.

The cache is policy-agnostic: it stores entries in append order, evicts by
storage index, and never reorders survivors. Prompt-origin entries are
tagged so policies can exempt them from eviction; the cache itself does not
enforce that rule.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Origin(enum.Enum):
    PROMPT = "prompt"
    GENERATED = "generated"


@dataclass(frozen=True)
class KvEntryMeta:
    """Identity of one cached entry.

    original_position is the absolute token index in the full sequence
    (prompt included) and never changes, even after evictions compact the
    storage. generation_step is the 1-based generated-token counter, absent
    for prompt entries.
    """

    original_position: int
    origin: Origin
    generation_step: int | None = None

    def __post_init__(self):
        if self.original_position < 0:
            raise ValueError("original_position must be non-negative")
        if (self.origin is Origin.PROMPT) != (self.generation_step is None):
            raise ValueError("generation_step must be absent iff origin is PROMPT")


_ORIGIN_CODE = {Origin.PROMPT: 0, Origin.GENERATED: 1}
_CODE_ORIGIN = {0: Origin.PROMPT, 1: Origin.GENERATED}


class LayerKvCache:
    """Key/value entries of one layer, stored columnar for the kernels.

    Keys and values are (capacity, kv_heads, head_dim) float64 with an
    occupancy watermark; metadata lives in parallel int arrays. Eviction
    compacts the arrays, so occupancy reduction is physical.
    """

    def __init__(self, kv_heads: int, head_dim: int, capacity: int = 64):
        self.kv_heads = kv_heads
        self.head_dim = head_dim
        self._keys = np.empty((capacity, kv_heads, head_dim))
        self._values = np.empty((capacity, kv_heads, head_dim))
        self._positions = np.empty(capacity, dtype=np.int64)
        self._origins = np.empty(capacity, dtype=np.int8)
        self._steps = np.full(capacity, -1, dtype=np.int64)
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def occupancy(self) -> int:
        return self._size

    @property
    def generated_occupancy(self) -> int:
        return int(np.count_nonzero(self._origins[: self._size]))

    @property
    def keys(self) -> np.ndarray:
        return self._keys[: self._size]

    @property
    def values(self) -> np.ndarray:
        return self._values[: self._size]

    @property
    def positions(self) -> np.ndarray:
        return self._positions[: self._size]

    @property
    def origins(self) -> np.ndarray:
        """Per-entry origin codes: 0 = prompt, 1 = generated."""
        return self._origins[: self._size]

    def meta_at(self, index: int) -> KvEntryMeta:
        if not 0 <= index < self._size:
            raise IndexError(f"storage index {index} out of range (occupancy {self._size})")
        origin = _CODE_ORIGIN[int(self._origins[index])]
        step = None if origin is Origin.PROMPT else int(self._steps[index])
        return KvEntryMeta(int(self._positions[index]), origin, step)

    @property
    def metas(self) -> list[KvEntryMeta]:
        return [self.meta_at(i) for i in range(self._size)]

    def generated_slots(self) -> np.ndarray:
        """Storage indices of Generated entries, ascending."""
        return np.flatnonzero(self._origins[: self._size] == 1)

    def prompt_slots(self) -> np.ndarray:
        return np.flatnonzero(self._origins[: self._size] == 0)

    def append(self, k: np.ndarray, v: np.ndarray, meta: KvEntryMeta) -> None:
        """Append one entry. Positions must be strictly increasing."""
        if self._size > 0 and meta.original_position <= self._positions[self._size - 1]:
            raise ValueError(
                f"non-monotone append: position {meta.original_position} after "
                f"{int(self._positions[self._size - 1])}"
            )
        if self._size == len(self._positions):
            self._grow()
        i = self._size
        self._keys[i] = k
        self._values[i] = v
        self._positions[i] = meta.original_position
        self._origins[i] = _ORIGIN_CODE[meta.origin]
        self._steps[i] = -1 if meta.generation_step is None else meta.generation_step
        self._size = i + 1

    def evict_keep(self, keep) -> None:
        """Retain exactly the entries at the given storage indices.

        Relative order, payloads and metadata of survivors are unchanged.
        """
        idx = np.unique(np.asarray(list(keep), dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= self._size):
            raise IndexError(f"keep indices out of range 0..{self._size - 1}")
        n = idx.size
        self._keys[:n] = self._keys[idx]
        self._values[:n] = self._values[idx]
        self._positions[:n] = self._positions[idx]
        self._origins[:n] = self._origins[idx]
        self._steps[:n] = self._steps[idx]
        self._size = n

    def _grow(self) -> None:
        cap = max(8, 2 * len(self._positions))
        for name in ("_keys", "_values", "_positions", "_origins", "_steps"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self._size] = old[: self._size]
            setattr(self, name, new)


class SelectorQueryCache:
    """Query vectors of the current selector window, at most ``limit`` (= R).

    Positions are consecutive within one window; the scheduler clears the
    cache at every compression event.
    """

    def __init__(self, query_heads: int, head_dim: int, limit: int):
        if limit < 1:
            raise ValueError("selector window limit must be >= 1")
        self.limit = limit
        self._queries = np.empty((limit, query_heads, head_dim))
        self._positions = np.empty(limit, dtype=np.int64)
        self._size = 0

    @property
    def size(self) -> int:
        return self._size

    @property
    def queries(self) -> np.ndarray:
        return self._queries[: self._size]

    @property
    def positions(self) -> np.ndarray:
        return self._positions[: self._size]

    def append(self, q: np.ndarray, position: int) -> None:
        if self._size == self.limit:
            raise ValueError(f"selector query cache already holds {self.limit} entries")
        if self._size > 0 and position != self._positions[self._size - 1] + 1:
            raise ValueError(
                f"selector positions must be consecutive: got {position} after "
                f"{int(self._positions[self._size - 1])}"
            )
        self._queries[self._size] = q
        self._positions[self._size] = position
        self._size += 1

    def clear(self) -> None:
        self._size = 0
