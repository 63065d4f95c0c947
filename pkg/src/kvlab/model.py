"""Deterministic toy decoder-only transformer.

Untrained, desk-scale, and fully reproducible: identical (config, seed)
yields bit-identical weights, and greedy decoding under a fixed policy is
bit-identical run to run. The model exists to produce genuine attention
distributions for the eviction machinery, not to be good at anything.

Block structure (pre-norm): RMSNorm -> attention with rotary positions ->
residual -> RMSNorm -> gated SiLU MLP -> residual. Rotary embeddings use
the half-split convention (dimension j pairs with j + head_dim/2) and are
always applied at the token's original absolute position, prompt included;
surviving entries keep their rotation after eviction.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kv_cache import KvEntryMeta, LayerKvCache, Origin
from .policies import EvictionPolicy, PolicySpec, make_policy
from .rng import uniform_array
from .scheduler import CompressionEvent

_RMS_EPS = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 4
    query_heads: int = 8
    kv_heads: int = 4
    head_dim: int = 16
    vocab_size: int = 256
    rope_theta: float = 10000.0
    seed: int = 0

    def __post_init__(self):
        for name in ("layers", "query_heads", "kv_heads", "head_dim", "vocab_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.query_heads % self.kv_heads != 0:
            raise ValueError("query_heads must be a multiple of kv_heads")
        if self.head_dim % 2 != 0:
            raise ValueError("head_dim must be even for rotary embedding")

    @property
    def d_model(self) -> int:
        return self.query_heads * self.head_dim

    @property
    def ff_hidden(self) -> int:
        return 4 * self.d_model


@dataclass
class LayerWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w_gate: np.ndarray
    w_up: np.ndarray
    w_down: np.ndarray


@dataclass
class ModelWeights:
    cfg: ModelConfig
    embedding: np.ndarray
    blocks: list[LayerWeights]
    lm_head: np.ndarray
    inv_freq: np.ndarray

    def checksum(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.embedding.tobytes())
        for blk in self.blocks:
            for mat in (blk.wq, blk.wk, blk.wv, blk.wo, blk.w_gate, blk.w_up, blk.w_down):
                digest.update(mat.tobytes())
        digest.update(self.lm_head.tobytes())
        return digest.hexdigest()


def init_model(cfg: ModelConfig) -> ModelWeights:
    """Fill all projection tensors from one SplitMix64 stream.

    Every value is uniform(-1/sqrt(d_model), +1/sqrt(d_model)) drawn from
    the stream seeded with cfg.seed, consumed in this fixed order, each
    tensor filled row-major:

      embedding (vocab_size, d_model);
      per layer 0..L-1: wq (d_model, H*head_dim), wk (d_model, H_kv*head_dim),
        wv (d_model, H_kv*head_dim), wo (H*head_dim, d_model),
        w_gate (d_model, ff_hidden), w_up (d_model, ff_hidden),
        w_down (ff_hidden, d_model);
      lm_head (d_model, vocab_size).

    Norm layers carry no learned gain. Any implementation following this
    order reproduces identical weights bit for bit.
    """
    bound = 1.0 / math.sqrt(cfg.d_model)
    offset = 0

    def draw(rows: int, cols: int) -> np.ndarray:
        nonlocal offset
        flat = uniform_array(cfg.seed, rows * cols, -bound, bound, offset)
        offset += rows * cols
        return flat.reshape(rows, cols)

    embedding = draw(cfg.vocab_size, cfg.d_model)
    blocks = []
    for _ in range(cfg.layers):
        blocks.append(LayerWeights(
            wq=draw(cfg.d_model, cfg.query_heads * cfg.head_dim),
            wk=draw(cfg.d_model, cfg.kv_heads * cfg.head_dim),
            wv=draw(cfg.d_model, cfg.kv_heads * cfg.head_dim),
            wo=draw(cfg.query_heads * cfg.head_dim, cfg.d_model),
            w_gate=draw(cfg.d_model, cfg.ff_hidden),
            w_up=draw(cfg.d_model, cfg.ff_hidden),
            w_down=draw(cfg.ff_hidden, cfg.d_model),
        ))
    lm_head = draw(cfg.d_model, cfg.vocab_size)
    half = cfg.head_dim // 2
    inv_freq = cfg.rope_theta ** (-np.arange(half) * 2.0 / cfg.head_dim)
    return ModelWeights(cfg=cfg, embedding=embedding, blocks=blocks,
                        lm_head=lm_head, inv_freq=inv_freq)


def rmsnorm(x: np.ndarray) -> np.ndarray:
    return x / math.sqrt(float(np.mean(x * x)) + _RMS_EPS)


def rotate(vectors: np.ndarray, position: int, inv_freq: np.ndarray) -> np.ndarray:
    """Rotary transform of (heads, head_dim) vectors at an absolute position."""
    angles = position * inv_freq
    cos, sin = np.cos(angles), np.sin(angles)
    half = inv_freq.size
    lo, hi = vectors[:, :half], vectors[:, half:]
    return np.concatenate((lo * cos - hi * sin, lo * sin + hi * cos), axis=1)


@dataclass
class DecodeState:
    caches: list[LayerKvCache]
    next_position: int = 0
    gen_count: int = 0

    @classmethod
    def fresh(cls, cfg: ModelConfig) -> "DecodeState":
        return cls([LayerKvCache(cfg.kv_heads, cfg.head_dim) for _ in range(cfg.layers)])


@dataclass
class DecodeTrace:
    """Per-step decode record.

    tokens[t-1] is the id emitted at generated step t; occupancy[t-1] the
    per-layer Generated occupancy after step t's eviction hooks;
    logits_fingerprints[t-1] a hash of the logits the step produced.
    """

    tokens: list[int] = field(default_factory=list)
    occupancy: list[list[int]] = field(default_factory=list)
    events: list[CompressionEvent] = field(default_factory=list)
    logits_fingerprints: list[str] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.tokens)

    @property
    def layers(self) -> int:
        return len(self.occupancy[0]) if self.occupancy else 0


def _forward(weights: ModelWeights, state: DecodeState, token_id: int,
             origin: Origin, policy: EvictionPolicy | None) -> np.ndarray:
    cfg = weights.cfg
    if not 0 <= token_id < cfg.vocab_size:
        raise ValueError(f"token id {token_id} out of vocabulary (size {cfg.vocab_size})")
    position = state.next_position
    state.next_position += 1
    meta = KvEntryMeta(
        original_position=position,
        origin=origin,
        generation_step=state.gen_count if origin is Origin.GENERATED else None,
    )
    group = cfg.query_heads // cfg.kv_heads
    scale = 1.0 / math.sqrt(cfg.head_dim)

    x = weights.embedding[token_id].copy()
    for layer, blk in enumerate(weights.blocks):
        cache = state.caches[layer]
        h = rmsnorm(x)
        q = rotate((h @ blk.wq).reshape(cfg.query_heads, cfg.head_dim), position, weights.inv_freq)
        k = rotate((h @ blk.wk).reshape(cfg.kv_heads, cfg.head_dim), position, weights.inv_freq)
        v = (h @ blk.wv).reshape(cfg.kv_heads, cfg.head_dim)
        cache.append(k, v, meta)
        out, attn = kernels.attend(q, cache.keys, cache.values, group, scale)
        if policy is not None:
            policy.observe_layer(layer, cache, q, attn, state.gen_count)
        x = x + out.reshape(-1) @ blk.wo
        h = rmsnorm(x)
        x = x + (_silu(h @ blk.w_gate) * (h @ blk.w_up)) @ blk.w_down
    return rmsnorm(x) @ weights.lm_head


def _silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def logits_fingerprint(logits: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(logits).tobytes()).hexdigest()[:16]


def prefill(weights: ModelWeights, state: DecodeState, prompt: list[int]) -> np.ndarray:
    """Feed the prompt; entries are Prompt-origin and no policy hooks run.

    Returns the logits after the last prompt token, which seed generation.
    """
    if len(prompt) == 0:
        raise ValueError("prompt must contain at least one token")
    logits = None
    for token_id in prompt:
        logits = _forward(weights, state, token_id, Origin.PROMPT, None)
    return logits


def decode_step(weights: ModelWeights, state: DecodeState, token_id: int,
                policy: EvictionPolicy) -> tuple[np.ndarray, CompressionEvent | None]:
    """Feed one generated token: append its KV, attend, run policy hooks.

    The policy's end-of-step hook (query caching happens per layer, eviction
    here) runs after this step's attention, so compression takes effect
    before the next token's attention.
    """
    state.gen_count += 1
    logits = _forward(weights, state, token_id, Origin.GENERATED, policy)
    event = policy.end_step(state.caches, state.gen_count)
    return logits, event


def generate(weights: ModelWeights, prompt: list[int], steps: int,
             policy: EvictionPolicy | PolicySpec) -> DecodeTrace:
    """Greedy decode for ``steps`` tokens under the given policy."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if isinstance(policy, PolicySpec):
        policy = make_policy(policy)
    policy.bind(weights.cfg)
    state = DecodeState.fresh(weights.cfg)
    logits = prefill(weights, state, prompt)
    trace = DecodeTrace()
    for _ in range(steps):
        token = int(np.argmax(logits))
        logits, event = decode_step(weights, state, token, policy)
        trace.tokens.append(token)
        trace.occupancy.append([c.generated_occupancy for c in state.caches])
        if event is not None:
            trace.events.append(event)
        trace.logits_fingerprints.append(logits_fingerprint(logits))
    return trace
