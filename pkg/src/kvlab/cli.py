"""Command-line entry point.

Subcommands:
  decode  --config FILE                 run one policy, write trace artifacts
  compare --config FILE --policies A,B  run several policies on one model
  entropy --input FILE --n N --prefixes N1,N2,...

The run configuration is a single JSON document (see README for the
schema). Artifacts land in the config's output_dir unless KVLAB_OUT_DIR
overrides it. Exit codes: 0 ok, 2 invalid configuration or arguments,
3 runtime failure. All outputs are deterministic for a given config.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .metrics import cost_report, write_cost_report, write_occupancy_csv, write_trace_jsonl
from .model import DecodeTrace, ModelConfig, generate, init_model
from .policies import PolicySpec, make_policy
from .scheduler import RpcConfig
from .sparsity import entropy_profile, mean_entropy, read_jsonl_documents

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class ConfigError(Exception):
    """Invalid run configuration; the message carries the field path."""


def _as_dict(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    return obj


def _check_keys(obj: dict, path: str, allowed: set[str]) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")


def _build(cls, obj: dict, path: str):
    try:
        return cls(**obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_policy_spec(obj, path: str) -> PolicySpec:
    obj = dict(_as_dict(obj, path))
    _check_keys(obj, path, {"kind", "budget", "rpc", "recent_exempt"})
    if "rpc" in obj and obj["rpc"] is not None:
        obj["rpc"] = _build(RpcConfig, _as_dict(obj["rpc"], f"{path}.rpc"), f"{path}.rpc")
    return _build(PolicySpec, obj, path)


def parse_prompt(obj, path: str, model_cfg: ModelConfig) -> list[int]:
    obj = _as_dict(obj, path)
    _check_keys(obj, path, {"token_ids", "text"})
    if ("token_ids" in obj) == ("text" in obj):
        raise ConfigError(f"{path}: provide exactly one of token_ids or text")
    if "token_ids" in obj:
        ids = obj["token_ids"]
        if not isinstance(ids, list) or not ids or not all(isinstance(i, int) for i in ids):
            raise ConfigError(f"{path}.token_ids: expected a non-empty list of integers")
        bad = [i for i in ids if not 0 <= i < model_cfg.vocab_size]
        if bad:
            raise ConfigError(f"{path}.token_ids: ids {bad[:4]} out of vocabulary "
                              f"(size {model_cfg.vocab_size})")
        return ids
    text = obj["text"]
    if not isinstance(text, str) or not text:
        raise ConfigError(f"{path}.text: expected a non-empty string")
    if model_cfg.vocab_size < 256:
        raise ConfigError(f"{path}.text: byte-level prompts need vocab_size >= 256, "
                          f"got {model_cfg.vocab_size}")
    return list(text.encode("utf-8"))


class RunConfig:
    def __init__(self, model: ModelConfig, prompt: list[int], steps: int,
                 policy: PolicySpec | None, policies: dict[str, PolicySpec],
                 output_dir: Path):
        self.model = model
        self.prompt = prompt
        self.steps = steps
        self.policy = policy
        self.policies = policies
        self.output_dir = output_dir


def load_run_config(path: str | Path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    raw = _as_dict(raw, "config")
    _check_keys(raw, "config", {"model", "prompt", "steps", "policy", "policies", "output_dir"})

    model = _build(ModelConfig, _as_dict(raw.get("model", {}), "model"), "model")
    if "prompt" not in raw:
        raise ConfigError("prompt: required")
    prompt = parse_prompt(raw["prompt"], "prompt", model)
    steps = raw.get("steps")
    if not isinstance(steps, int) or steps < 1:
        raise ConfigError("steps: expected an integer >= 1")
    policy = parse_policy_spec(raw["policy"], "policy") if "policy" in raw else None
    policies = {}
    for name, spec in _as_dict(raw.get("policies", {}), "policies").items():
        policies[name] = parse_policy_spec(spec, f"policies.{name}")
    output_dir = raw.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir: expected a non-empty string")
    env_dir = os.environ.get("KVLAB_OUT_DIR")
    return RunConfig(model, prompt, steps, policy, policies, Path(env_dir or output_dir))


def _run_trace(run: RunConfig, spec: PolicySpec) -> DecodeTrace:
    weights = init_model(run.model)
    return generate(weights, run.prompt, run.steps, make_policy(spec))


def cmd_decode(config_path: str) -> int:
    run = load_run_config(config_path)
    if run.policy is None:
        raise ConfigError("policy: required for decode")
    trace = _run_trace(run, run.policy)
    report = cost_report(trace)
    run.output_dir.mkdir(parents=True, exist_ok=True)
    write_trace_jsonl(trace, run.output_dir / "trace.jsonl")
    write_occupancy_csv(trace, run.output_dir / "occupancy.csv")
    write_cost_report(report, run.output_dir / "cost_report.json")
    print(f"decode: {trace.steps} steps, {len(trace.events)} compression events, "
          f"read_ratio={report.read_ratio:.4f} -> {run.output_dir}")
    return EXIT_OK


def _resolve_policies(run: RunConfig, names: list[str]) -> list[tuple[str, PolicySpec]]:
    resolved = []
    for name in names:
        if name in run.policies:
            resolved.append((name, run.policies[name]))
        elif name == "FullCache":
            resolved.append((name, PolicySpec(kind="FullCache")))
        else:
            raise ConfigError(f"policies.{name}: not defined in config")
    return resolved


def divergence_step(reference: DecodeTrace, trace: DecodeTrace) -> int | None:
    """First 1-based step whose emitted token differs, None if identical."""
    for t, (a, b) in enumerate(zip(reference.tokens, trace.tokens), start=1):
        if a != b:
            return t
    return None


def cmd_compare(config_path: str, policy_names: list[str]) -> int:
    run = load_run_config(config_path)
    selected = _resolve_policies(run, policy_names)
    reference = _run_trace(run, PolicySpec(kind="FullCache"))
    rows = []
    for name, spec in selected:
        trace = reference if spec.kind == "FullCache" else _run_trace(run, spec)
        report = cost_report(trace)
        rows.append({
            "name": name,
            "label": spec.label(),
            "read_ratio": report.read_ratio,
            "effective_compression_ratio": report.effective_compression_ratio,
            "divergence_step": divergence_step(reference, trace),
            "events": len(trace.events),
        })
    run.output_dir.mkdir(parents=True, exist_ok=True)
    with open(run.output_dir / "comparison.json", "w", encoding="utf-8") as fh:
        json.dump({"steps": run.steps, "policies": rows}, fh, sort_keys=True, indent=2)
        fh.write("\n")
    header = f"{'policy':<28} {'read_ratio':>10} {'eff_ratio':>10} {'diverges@':>10}"
    print(header)
    for row in rows:
        div = "-" if row["divergence_step"] is None else str(row["divergence_step"])
        print(f"{row['label']:<28} {row['read_ratio']:>10.4f} "
              f"{row['effective_compression_ratio']:>10.3f} {div:>10}")
    return EXIT_OK


def cmd_entropy(input_path: str, n: int, prefix_lengths: list[int]) -> int:
    if not Path(input_path).is_file():
        raise ConfigError(f"input file not found: {input_path}")
    streams, warnings = read_jsonl_documents(input_path)
    per_document = []
    usable = []
    for i, stream in enumerate(streams):
        if len(stream) < max(prefix_lengths):
            warnings.append(f"document {i}: {len(stream)} tokens, shorter than "
                            f"longest prefix {max(prefix_lengths)}")
            continue
        reports = entropy_profile(stream, n, prefix_lengths)
        usable.append(reports)
        per_document.append({
            "document": i,
            "reports": [asdict(r) for r in reports],
        })
    if not usable:
        raise ConfigError("no usable documents in input")
    means = [
        {"prefix": prefix, "mean_entropy_bits": mean_entropy(col)}
        for prefix, col in zip(prefix_lengths, zip(*usable))
    ]
    summary = {
        "n": n,
        "prefix_lengths": prefix_lengths,
        "documents": per_document,
        "means": means,
        "warning_count": len(warnings),
        "warnings": warnings,
    }
    out_dir = Path(os.environ.get("KVLAB_OUT_DIR", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "entropy_report.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    for row in means:
        print(f"prefix {row['prefix']:>8}: mean H_{n} = {row['mean_entropy_bits']:.6f} bits "
              f"({len(usable)} documents)")
    if warnings:
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)
    print(f"documents={len(usable)} warnings={len(warnings)} -> {out_dir / 'entropy_report.json'}")
    return EXIT_OK


def _csv_ints(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kvlab",
                                     description="KV-cache eviction policy laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_decode = sub.add_parser("decode", help="run one policy and write trace artifacts")
    p_decode.add_argument("--config", required=True, help="run configuration JSON")

    p_compare = sub.add_parser("compare", help="run several policies on one model")
    p_compare.add_argument("--config", required=True, help="run configuration JSON")
    p_compare.add_argument("--policies", required=True,
                           help="comma-separated policy names from the config")

    p_entropy = sub.add_parser("entropy", help="n-gram entropy of JSONL documents")
    p_entropy.add_argument("--input", required=True, help="JSONL file of documents")
    p_entropy.add_argument("--n", required=True, type=int, help="n-gram order")
    p_entropy.add_argument("--prefixes", required=True, type=_csv_ints,
                           help="comma-separated prefix lengths")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "decode":
            return cmd_decode(args.config)
        if args.command == "compare":
            names = [p.strip() for p in args.policies.split(",") if p.strip()]
            if not names:
                raise ConfigError("--policies: expected at least one name")
            return cmd_compare(args.config, names)
        if args.command == "entropy":
            if args.n < 1:
                raise ConfigError("--n: must be >= 1")
            if args.prefixes != sorted(args.prefixes) or min(args.prefixes) < args.n:
                raise ConfigError("--prefixes: must be ascending and each >= n")
            return cmd_entropy(args.input, args.n, args.prefixes)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
