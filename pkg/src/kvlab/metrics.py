"""Occupancy timelines and the attention-read cost model.

Cost is counted in Generated KV entries read per attention call, the
memory-bound proxy for decode throughput; wall-clock and GPU memory are out
of scope. At generated step t a layer reads its post-step-(t-1) occupancy
plus the just-appended entry, because eviction hooks run after the step's
own attention.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .model import DecodeTrace
from .scheduler import RpcConfig, retained_budget, should_compress


@dataclass(frozen=True)
class CostReport:
    total_key_reads_full: int
    total_key_reads_policy: int
    read_ratio: float
    effective_compression_ratio: float


def analytic_occupancy(cfg: RpcConfig, steps: int) -> np.ndarray:
    """Closed-form Generated occupancy per step under periodic compression.

    Sawtooth: +1 per generated token, dropping to floor(N*P/c) + R at each
    event step t = N*P + R. Entry [t-1] is the post-event value at step t.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    occ = np.empty(steps, dtype=np.int64)
    current = 0
    event = 0
    for t in range(1, steps + 1):
        current += 1
        if should_compress(t, cfg):
            event += 1
            current = retained_budget(event, cfg) + cfg.R
        occ[t - 1] = current
    return occ


def reads_per_step(occupancy: np.ndarray) -> np.ndarray:
    """Keys read by one layer's attention at each step: prior occupancy + 1."""
    occ = np.asarray(occupancy, dtype=np.int64)
    return np.concatenate(([1], occ[:-1] + 1))


def analytic_read_ratio(cfg: RpcConfig, steps: int) -> float:
    """Modeled read ratio of the periodic policy from the closed form."""
    reads = int(reads_per_step(analytic_occupancy(cfg, steps)).sum())
    return reads / (steps * (steps + 1) // 2)


def cost_report(trace: DecodeTrace) -> CostReport:
    """Read accounting of a finished decode versus the full-cache baseline."""
    steps = trace.steps
    if steps == 0:
        raise ValueError("trace is empty")
    occ = np.asarray(trace.occupancy, dtype=np.int64)  # (steps, layers)
    layers = occ.shape[1]
    reads_policy = sum(int(reads_per_step(occ[:, layer]).sum()) for layer in range(layers))
    reads_full = layers * steps * (steps + 1) // 2
    end_occupancy = int(occ[-1, 0])
    return CostReport(
        total_key_reads_full=reads_full,
        total_key_reads_policy=reads_policy,
        read_ratio=reads_policy / reads_full,
        effective_compression_ratio=steps / end_occupancy,
    )


def write_occupancy_csv(trace: DecodeTrace, path) -> None:
    """Long-format (step, layer, occupancy) rows; steps and layers 1- and 0-based."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "layer", "occupancy"])
        for t, row in enumerate(trace.occupancy, start=1):
            for layer, value in enumerate(row):
                writer.writerow([t, layer, value])


def write_trace_jsonl(trace: DecodeTrace, path) -> None:
    """One JSON object per step; the event that fired at a step rides along."""
    events_by_step = {ev.trigger_step: ev for ev in trace.events}
    with open(path, "w", encoding="utf-8") as fh:
        for t in range(1, trace.steps + 1):
            ev = events_by_step.get(t)
            record = {
                "step": t,
                "token": trace.tokens[t - 1],
                "occupancy": trace.occupancy[t - 1],
                "logits_fingerprint": trace.logits_fingerprints[t - 1],
                "event": None if ev is None else asdict(ev),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def write_cost_report(report: CostReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(asdict(report), fh, sort_keys=True, indent=2)
        fh.write("\n")
