"""Rugged scores, rank-shift analysis, correlations, and stability stats.

All functions are pure over immutable tables; scores enter as fractions in
[0, 1] and reports render percentages elsewhere.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .errors import UndefinedCorrelationError

PUBLIC = "public"
PRIVATE = "private"


@dataclass(frozen=True)
class BenchmarkRef:
    name: str
    visibility: str  # "public" | "private"
    pair_id: str | None = None

    def __post_init__(self):
        if self.visibility not in (PUBLIC, PRIVATE):
            raise ValueError(f"visibility must be public or private, got {self.visibility!r}")


@dataclass(frozen=True)
class PerfTable:
    models: tuple[str, ...]
    benchmarks: tuple[BenchmarkRef, ...]
    scores: dict[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        seen: dict[str, list[str]] = {}
        for ref in self.benchmarks:
            if ref.pair_id is not None:
                seen.setdefault(ref.pair_id, []).append(ref.visibility)
        for pair_id, sides in seen.items():
            if sorted(sides) != [PRIVATE, PUBLIC]:
                raise ValueError(
                    f"pair {pair_id!r} must link exactly one public and one private benchmark"
                )

    def score(self, model: str, ref: BenchmarkRef) -> float:
        try:
            return self.scores[(model, ref.name)]
        except KeyError:
            raise KeyError(f"no score for model {model!r} on benchmark {ref.name!r}")

    def pairs(self) -> list[tuple[BenchmarkRef, BenchmarkRef]]:
        """(public, private) pairs ordered by pair_id."""
        by_id: dict[str, dict[str, BenchmarkRef]] = {}
        for ref in self.benchmarks:
            if ref.pair_id is not None:
                by_id.setdefault(ref.pair_id, {})[ref.visibility] = ref
        return [(by_id[k][PUBLIC], by_id[k][PRIVATE]) for k in sorted(by_id)]

    def unmatched(self, visibility: str) -> list[BenchmarkRef]:
        return [r for r in self.benchmarks if r.pair_id is None and r.visibility == visibility]

    def private_refs(self) -> list[BenchmarkRef]:
        return [r for r in self.benchmarks if r.visibility == PRIVATE]


@dataclass(frozen=True)
class RSReport:
    model_id: str
    rs1_absolute: float
    rs1_relative: float | None
    rs2: float | None
    rs2_normalized: float | None


def _ratio_term(a: float, b: float, what: str) -> float:
    if a + b == 0.0:
        warnings.warn(f"zero denominator in {what}; term contributes 0", RuntimeWarning)
        return 0.0
    return (a - b) / (a + b)


def rs1_absolute(table: PerfTable, model: str) -> float:
    """Normalized public-minus-private gap; lies in [-4, 4] for scores >= 0.

    Sum of (2/N_p) * sum_i (Mp_i - Mc_i)/(Mp_i + Mc_i) over pairs and
    2 * (avg unmatched public - avg unmatched private) / (their sum).
    An absent group or a zero-denominator term contributes 0 with a warning.
    """
    if model not in table.models:
        raise KeyError(f"model {model!r} not in table")
    pairs = table.pairs()
    pub = table.unmatched(PUBLIC)
    priv = table.unmatched(PRIVATE)
    if not pairs and not (pub and priv):
        raise ValueError(
            "need at least one pair, or both an unmatched public and an "
            "unmatched private benchmark"
        )
    total = 0.0
    if pairs:
        paired_sum = sum(
            _ratio_term(table.score(model, p), table.score(model, c), f"pair {p.pair_id!r}")
            for p, c in pairs
        )
        total += (2.0 / len(pairs)) * paired_sum
    if pub and priv:
        avg_pub = sum(table.score(model, r) for r in pub) / len(pub)
        avg_priv = sum(table.score(model, r) for r in priv) / len(priv)
        total += 2.0 * _ratio_term(avg_pub, avg_priv, "unmatched-average term")
    else:
        warnings.warn(
            "unmatched public/private group absent; unmatched term contributes 0",
            RuntimeWarning,
        )
    return total


def average_ranks(values: list[float], *, descending: bool = False) -> list[float]:
    """1-based ranks with ties averaged."""
    order = sorted(range(len(values)), key=lambda i: -values[i] if descending else values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def rs1_relative(table: PerfTable, models: list[str] | None = None) -> dict[str, float]:
    """Signed mean rank shift per model over the paired benchmarks.

    Rank 1 is the best score on a benchmark (ties averaged). Positive means
    the model ranks worse on the private side, i.e. it looks overestimated
    on the public one.
    """
    model_set = list(models) if models is not None else list(table.models)
    if len(model_set) < 2:
        raise ValueError("rank shifts need at least 2 models")
    pairs = table.pairs()
    if not pairs:
        raise ValueError("rank shifts need at least one public-private pair")

    def bench_ranks(ref: BenchmarkRef) -> dict[str, float]:
        scores = [table.score(m, ref) for m in model_set]
        ranks = average_ranks(scores, descending=True)
        return dict(zip(model_set, ranks))

    shifts = {m: 0.0 for m in model_set}
    for pub_ref, priv_ref in pairs:
        pub_ranks = bench_ranks(pub_ref)
        priv_ranks = bench_ranks(priv_ref)
        for m in model_set:
            shifts[m] += priv_ranks[m] - pub_ranks[m]
    return {m: total / len(pairs) for m, total in shifts.items()}


def rs2(table: PerfTable, model: str) -> tuple[float, float | None]:
    """Population std of the model's private-benchmark scores, and that
    std divided by the mean (None when the mean is zero)."""
    refs = table.private_refs()
    if len(refs) < 2:
        raise ValueError("rs2 needs at least 2 private benchmarks")
    scores = [table.score(model, r) for r in refs]
    mean = sum(scores) / len(scores)
    std = math.sqrt(sum((s - mean) ** 2 for s in scores) / len(scores))
    if mean == 0.0:
        warnings.warn("mean private score is 0; normalized rs2 undefined", RuntimeWarning)
        return std, None
    return std, std / mean


def pearson(x: list[float], y: list[float]) -> float:
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("vectors must have equal length >= 2")
    mx = sum(x) / len(x)
    my = sum(y) / len(y)
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant vector")
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    return sxy / math.sqrt(sxx * syy)


def spearman(x: list[float], y: list[float]) -> float:
    """Pearson correlation of the average-ranked data."""
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("vectors must have equal length >= 2")
    return pearson(average_ranks(list(x)), average_ranks(list(y)))


def kendall(x: list[float], y: list[float]) -> float:
    """Tau-b: (concordant - discordant) / sqrt((n0 - n1)(n0 - n2))."""
    n = len(x)
    if n != len(y) or n < 2:
        raise ValueError("vectors must have equal length >= 2")
    concordant = discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            s = (x[i] - x[j]) * (y[i] - y[j])
            if s > 0:
                concordant += 1
            elif s < 0:
                discordant += 1
    n0 = n * (n - 1) // 2
    n1 = sum(c * (c - 1) // 2 for c in _tie_counts(x))
    n2 = sum(c * (c - 1) // 2 for c in _tie_counts(y))
    denom = math.sqrt((n0 - n1) * (n0 - n2))
    if denom == 0.0:
        raise UndefinedCorrelationError("correlation undefined when all pairs are tied")
    return (concordant - discordant) / denom


def _tie_counts(values: list[float]) -> list[int]:
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return [c for c in counts.values() if c > 1]


@dataclass(frozen=True)
class StabilityStats:
    mean: float
    std: float
    min: float
    max: float


def stability(accuracies: list[float]) -> StabilityStats:
    """Descriptive statistics over per-seed regeneration accuracies."""
    if len(accuracies) < 2:
        raise ValueError("stability needs at least 2 values")
    lo, hi = min(accuracies), max(accuracies)
    mean = sum(accuracies) / len(accuracies)
    if lo == hi:
        return StabilityStats(mean=mean, std=0.0, min=lo, max=hi)
    std = math.sqrt(sum((a - mean) ** 2 for a in accuracies) / len(accuracies))
    return StabilityStats(mean=mean, std=std, min=lo, max=hi)
