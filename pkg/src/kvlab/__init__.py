"""kvlab: a desk-scale laboratory for KV-cache eviction in autoregressive decoders.

Drives a deterministic toy transformer under interchangeable cache-eviction
policies (periodic selector-scored compression plus budget baselines),
verifies occupancy and cost dynamics against closed forms, and measures
token-stream redundancy via n-gram entropy.
"""

from .kv_cache import KvEntryMeta, LayerKvCache, Origin, SelectorQueryCache
from .metrics import CostReport, analytic_occupancy, cost_report
from .model import DecodeTrace, ModelConfig, generate, init_model
from .policies import PolicySpec, make_policy
from .scheduler import CompressionEvent, RpcConfig
from .scorer import ImportanceVector, importance, selector_attention, top_k_retain
from .sparsity import NgramEntropyReport, entropy_profile, ngram_entropy

__all__ = [
    "CompressionEvent",
    "CostReport",
    "DecodeTrace",
    "ImportanceVector",
    "KvEntryMeta",
    "LayerKvCache",
    "ModelConfig",
    "NgramEntropyReport",
    "Origin",
    "PolicySpec",
    "RpcConfig",
    "SelectorQueryCache",
    "analytic_occupancy",
    "cost_report",
    "entropy_profile",
    "generate",
    "importance",
    "init_model",
    "make_policy",
    "ngram_entropy",
    "selector_attention",
    "top_k_retain",
]

__version__ = "0.1.0"
