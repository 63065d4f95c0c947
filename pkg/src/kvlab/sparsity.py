"""n-gram Shannon entropy of token streams.

Quantifies phrase-level repetition: low entropy means long spans repeat.
Probabilities are empirical over all n-gram occurrences (count divided by
|tokens| - n + 1), entropy is base-2. Raw text is split on whitespace;
token-id streams bypass tokenization entirely.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class NgramEntropyReport:
    n: int
    total_ngrams: int
    unique_ngrams: int
    entropy_bits: float


def ngram_entropy(tokens: Sequence, n: int) -> NgramEntropyReport:
    """Base-2 Shannon entropy of the n-gram distribution of a stream."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(tokens) < n:
        raise ValueError(f"stream of {len(tokens)} tokens is shorter than n={n}")
    total = len(tokens) - n + 1
    counts = Counter(tuple(tokens[i:i + n]) for i in range(total))
    entropy = -sum((c / total) * math.log2(c / total) for c in counts.values())
    return NgramEntropyReport(n=n, total_ngrams=total,
                              unique_ngrams=len(counts), entropy_bits=entropy)


def entropy_profile(tokens: Sequence, n: int,
                    prefix_lengths: Sequence[int]) -> list[NgramEntropyReport]:
    """Entropy of each stream prefix; prefix lengths must ascend and be >= n."""
    if list(prefix_lengths) != sorted(prefix_lengths):
        raise ValueError("prefix_lengths must be ascending")
    reports = []
    for length in prefix_lengths:
        if length < n:
            raise ValueError(f"prefix length {length} is shorter than n={n}")
        if length > len(tokens):
            raise ValueError(f"prefix length {length} exceeds stream length {len(tokens)}")
        reports.append(ngram_entropy(tokens[:length], n))
    return reports


def tokens_from_document(doc: dict) -> list:
    """Token stream of one JSONL document: "tokens" ids or whitespace words."""
    if "tokens" in doc:
        tokens = doc["tokens"]
        if not isinstance(tokens, list):
            raise ValueError('"tokens" must be a list')
        return tokens
    if "text" in doc:
        if not isinstance(doc["text"], str):
            raise ValueError('"text" must be a string')
        return doc["text"].split()
    raise ValueError('document has neither "tokens" nor "text"')


def read_jsonl_documents(path) -> tuple[list[list], list[str]]:
    """All parseable token streams in a JSONL file, plus skip warnings."""
    streams: list[list] = []
    warnings: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                if not isinstance(doc, dict):
                    raise ValueError("line is not a JSON object")
                streams.append(tokens_from_document(doc))
            except (json.JSONDecodeError, ValueError) as exc:
                warnings.append(f"line {lineno}: {exc}")
    return streams, warnings


def mean_entropy(reports: Iterable[NgramEntropyReport]) -> float:
    values = [r.entropy_bits for r in reports]
    return sum(values) / len(values)
