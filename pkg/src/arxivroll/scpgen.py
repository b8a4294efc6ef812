"""Task synthesis: fragments and four-candidate selection test cases.

Three task kinds over article fragments: sequencing (restore the order of
four shuffled segments), cloze (map four bank sentences back into blanks),
and prediction (pick the true next sentence among TF-IDF distractors).
Every generator is a pure function of its inputs and a seeded generator, so
regeneration is byte-identical.
"""

from __future__ import annotations

import itertools
import json
import math
import random
import re
from collections import Counter
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path

from . import GENERATOR_VERSION
from .corpus import Article, iter_articles, load_manifest
from .errors import EmptyBenchmarkError
from .latex import MATH_TOKEN
from .util import config_digest, derive_subseed, stable_id

TASK_KINDS = ("sequencing", "cloze", "prediction")
SEGMENT_LABELS = ("A", "B", "C", "D")
BANK_LABELS = ("i", "ii", "iii", "iv")
BANK_HEADER = "Sentence bank:"
_BLANK_FMT = "[BLANK-{}]"

# Tokens that end with a period but do not end a sentence.
_ABBREVIATIONS = frozenset(
    {
        "e.g.", "i.e.", "etc.", "cf.", "vs.", "al.", "resp.", "approx.",
        "Fig.", "Figs.", "Eq.", "Eqs.", "Sec.", "Secs.", "Tab.", "Ref.",
        "Refs.", "No.", "Dr.", "Prof.", "Mr.", "Ms.", "Mrs.", "St.",
    }
)
_INITIAL_RE = re.compile(r"^[A-Z]\.$")
_BOUNDARY_RE = re.compile(r"[.!?](\s+)(?=[\"'(\[]*[A-Z0-9])")


@dataclass(frozen=True)
class FragmentConfig:
    n_paragraphs: int = 1
    min_words: int = 80
    max_math_ratio: float = 0.15
    min_sentences_seq: int = 4
    min_sentences_cloze: int = 6
    min_sentences_pred: int = 3

    def __post_init__(self):
        if self.n_paragraphs < 1:
            raise ValueError("n_paragraphs must be >= 1")
        if self.min_words < 1:
            raise ValueError("min_words must be >= 1")
        if not 0.0 <= self.max_math_ratio <= 1.0:
            raise ValueError("max_math_ratio must lie in [0, 1]")


@dataclass(frozen=True)
class Fragment:
    article_id: str
    paragraph_span: tuple[int, int]
    sentences: tuple[str, ...]
    word_count: int

    @property
    def text(self) -> str:
        return " ".join(self.sentences)


@dataclass(frozen=True)
class Rejection:
    """A fragment or case that failed an eligibility filter (not an error)."""

    reason: str


@dataclass(frozen=True)
class Provenance:
    article_id: str
    seed: int
    generator_version: str


@dataclass(frozen=True)
class TestCase:
    case_id: str
    task_kind: str
    stem: str
    candidates: tuple[str, str, str, str]
    correct_index: int
    domain: str
    provenance: Provenance

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.task_kind!r}")
        if len(self.candidates) != 4 or len(set(self.candidates)) != 4:
            raise ValueError("candidates must be exactly 4 pairwise distinct texts")
        if not 0 <= self.correct_index <= 3:
            raise ValueError("correct_index out of range")


@dataclass(frozen=True)
class Benchmark:
    benchmark_id: str
    period_label: str
    domain: str
    task_kind: str
    seed: int
    items: tuple[TestCase, ...]
    status: str
    created: str
    generator_version: str = GENERATOR_VERSION
    config_digest: str = ""

    def __post_init__(self):
        if self.status not in ("private", "expired"):
            raise ValueError(f"invalid status {self.status!r}")
        ids = [c.case_id for c in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate case_ids in benchmark")
        for c in self.items:
            if c.domain != self.domain or c.task_kind != self.task_kind:
                raise ValueError("all items must share the benchmark domain and task kind")


def split_sentences(paragraph: str) -> list[str]:
    """Rule-based sentence split; joining the result with single spaces
    reproduces the paragraph modulo whitespace."""
    if not paragraph.strip():
        raise ValueError("paragraph must be non-empty")
    pieces = []
    prev = 0
    for m in _BOUNDARY_RE.finditer(paragraph):
        if _guarded(paragraph, m.start()):
            continue
        pieces.append(paragraph[prev : m.start() + 1])
        prev = m.end(1)
    pieces.append(paragraph[prev:])
    sentences = [" ".join(p.split()) for p in pieces]
    return [s for s in sentences if s]


def _guarded(text: str, punct_idx: int) -> bool:
    j = punct_idx
    while j > 0 and not text[j - 1].isspace():
        j -= 1
    token = text[j : punct_idx + 1].lstrip("([\"'")
    return token in _ABBREVIATIONS or bool(_INITIAL_RE.match(token))


def fragment_at(article: Article, start: int, config: FragmentConfig) -> Fragment | Rejection:
    """Build the fragment for one paragraph window and apply the filters."""
    window = article.paragraphs[start : start + config.n_paragraphs]
    sentences = tuple(s for p in window for s in _split_cached(p))
    tokens = [t for s in sentences for t in s.split()]
    word_count = len(tokens)
    if word_count < config.min_words:
        return Rejection("too-short")
    math_tokens = sum(1 for t in tokens if MATH_TOKEN in t)
    if math_tokens / word_count > config.max_math_ratio:
        return Rejection("math-heavy")
    if len(sentences) < 3:
        return Rejection("too-few-sentences")
    return Fragment(
        article_id=article.meta.arxiv_id,
        paragraph_span=(start, start + config.n_paragraphs),
        sentences=sentences,
        word_count=word_count,
    )


@lru_cache(maxsize=65536)
def _split_cached(paragraph: str) -> tuple[str, ...]:
    return tuple(split_sentences(paragraph))


def sample_fragment(
    article: Article, config: FragmentConfig, rng: random.Random
) -> Fragment | Rejection:
    """Pick a uniformly random contiguous window and filter it."""
    n_available = len(article.paragraphs)
    if n_available == 0:
        raise ValueError("article has no paragraphs")
    if n_available < config.n_paragraphs:
        raise ValueError(
            f"article has {n_available} paragraphs; needs >= {config.n_paragraphs}"
        )
    start = rng.randrange(n_available - config.n_paragraphs + 1)
    return fragment_at(article, start, config)


def _case_id(article_id: str, task_kind: str, seed: int, span: tuple[int, int]) -> str:
    return stable_id(article_id, task_kind, seed, span[0], span[1])


def _partition_four(sentences: tuple[str, ...]) -> list[str]:
    base, rem = divmod(len(sentences), 4)
    groups = []
    pos = 0
    for i in range(4):
        size = base + (1 if i < rem else 0)
        groups.append(" ".join(sentences[pos : pos + size]))
        pos += size
    return groups


_ALL_PERMS = tuple(itertools.permutations(range(4)))  # index 0 is the identity


def gen_sequencing(
    fragment: Fragment,
    rng: random.Random,
    *,
    domain: str,
    seed: int,
    generator_version: str = GENERATOR_VERSION,
    min_sentences: int = 4,
) -> TestCase | Rejection:
    """Four contiguous segment groups, shown permuted; answer restores order."""
    if len(fragment.sentences) < max(4, min_sentences):
        return Rejection("too-few-sentences-for-sequencing")
    groups = _partition_four(fragment.sentences)
    pi = _ALL_PERMS[1 + rng.randrange(23)]  # uniform non-identity permutation
    stem = "\n".join(
        f"({SEGMENT_LABELS[slot]}) {groups[pi[slot]]}" for slot in range(4)
    )
    correct = "-".join(SEGMENT_LABELS[pi.index(k)] for k in range(4))
    orderings = ["-".join(SEGMENT_LABELS[i] for i in p) for p in _ALL_PERMS]
    distractors = rng.sample([o for o in orderings if o != correct], 3)
    candidates = [correct] + distractors
    rng.shuffle(candidates)
    return TestCase(
        case_id=_case_id(fragment.article_id, "sequencing", seed, fragment.paragraph_span),
        task_kind="sequencing",
        stem=stem,
        candidates=tuple(candidates),
        correct_index=candidates.index(correct),
        domain=domain,
        provenance=Provenance(fragment.article_id, seed, generator_version),
    )


def _render_assignment(blank_to_bank: tuple[int, ...]) -> str:
    return ", ".join(
        f"{b + 1}→{BANK_LABELS[j]}" for b, j in enumerate(blank_to_bank)
    )


def gen_cloze(
    fragment: Fragment,
    rng: random.Random,
    *,
    domain: str,
    seed: int,
    generator_version: str = GENERATOR_VERSION,
    min_sentences: int = 6,
) -> TestCase | Rejection:
    """Four masked sentences plus a shuffled bank; answer maps blanks to bank."""
    k = len(fragment.sentences)
    if k < max(6, min_sentences):
        return Rejection("too-few-sentences-for-cloze")
    positions = sorted(rng.sample(range(k), 4))
    removed = [fragment.sentences[p] for p in positions]
    bank_source = list(range(4))  # bank slot j holds removed[bank_source[j]]
    rng.shuffle(bank_source)
    bank = [removed[src] for src in bank_source]

    masked = list(fragment.sentences)
    for n, p in enumerate(positions, start=1):
        masked[p] = _BLANK_FMT.format(n)
    stem = (
        " ".join(masked)
        + "\n\n"
        + BANK_HEADER
        + "\n"
        + "\n".join(f"({BANK_LABELS[j]}) {bank[j]}" for j in range(4))
    )

    correct_map = tuple(bank_source.index(b) for b in range(4))
    correct = _render_assignment(correct_map)
    assignments = [_render_assignment(p) for p in _ALL_PERMS]
    distractors = rng.sample([a for a in assignments if a != correct], 3)
    candidates = [correct] + distractors
    rng.shuffle(candidates)
    return TestCase(
        case_id=_case_id(fragment.article_id, "cloze", seed, fragment.paragraph_span),
        task_kind="cloze",
        stem=stem,
        candidates=tuple(candidates),
        correct_index=candidates.index(correct),
        domain=domain,
        provenance=Provenance(fragment.article_id, seed, generator_version),
    )


def gen_prediction(
    fragment: Fragment,
    article: Article,
    rng: random.Random,
    *,
    domain: str,
    seed: int,
    generator_version: str = GENERATOR_VERSION,
    min_sentences: int = 3,
) -> TestCase | Rejection:
    """Stem is the fragment minus its last sentence; distractors are the
    most TF-IDF-similar sentences from the rest of the article."""
    if len(fragment.sentences) < max(3, min_sentences):
        return Rejection("too-few-sentences-for-prediction")
    answer = fragment.sentences[-1]
    stem = " ".join(fragment.sentences[:-1])
    lo, hi = fragment.paragraph_span
    pool = [
        s
        for idx, p in enumerate(article.paragraphs)
        if not lo <= idx < hi
        for s in _split_cached(p)
    ]
    if len(pool) < 3:
        return Rejection("too-few-distractor-sentences")
    distractors: list[str] = []
    for idx in tfidf_rank(answer, pool):
        cand = pool[idx]
        if cand != answer and cand not in distractors:
            distractors.append(cand)
            if len(distractors) == 3:
                break
    if len(distractors) < 3:
        return Rejection("too-few-distinct-distractors")
    candidates = [answer] + distractors
    rng.shuffle(candidates)
    return TestCase(
        case_id=_case_id(fragment.article_id, "prediction", seed, fragment.paragraph_span),
        task_kind="prediction",
        stem=stem,
        candidates=tuple(candidates),
        correct_index=candidates.index(answer),
        domain=domain,
        provenance=Provenance(fragment.article_id, seed, generator_version),
    )


_TOKEN_RE = re.compile(r"[a-z0-9]+")


@lru_cache(maxsize=65536)
def _tfidf_tokens(sentence: str) -> tuple[str, ...]:
    return tuple(_TOKEN_RE.findall(sentence.lower()))


def tfidf_scores(query: str, pool: list[str]) -> list[float]:
    """Cosine similarity of the query to each pool sentence.

    tf is the raw in-sentence count; idf(t) = ln((1+|pool|)/(1+df(t))) + 1
    over the pool; vectors are L2-normalized. Query terms outside the pool
    vocabulary contribute zero.
    """
    if not pool:
        raise ValueError("pool must be non-empty")
    docs = [Counter(_tfidf_tokens(s)) for s in pool]
    df: Counter[str] = Counter()
    for doc in docs:
        df.update(doc.keys())
    n = len(pool)
    idf = {t: math.log((1 + n) / (1 + d)) + 1.0 for t, d in df.items()}

    def unit_vector(counts: Counter[str]) -> dict[str, float]:
        weights = {t: c * idf[t] for t, c in counts.items() if t in idf}
        norm = math.sqrt(sum(w * w for w in weights.values()))
        if norm == 0.0:
            return {}
        return {t: w / norm for t, w in weights.items()}

    q = unit_vector(Counter(t for t in _tfidf_tokens(query) if t in idf))
    scores = []
    for doc in docs:
        d = unit_vector(doc)
        small, large = (q, d) if len(q) <= len(d) else (d, q)
        scores.append(sum(w * large.get(t, 0.0) for t, w in small.items()))
    return scores


def tfidf_rank(query: str, pool: list[str]) -> list[int]:
    """Pool indices by descending similarity; ties keep document order."""
    scores = tfidf_scores(query, pool)
    return sorted(range(len(pool)), key=lambda i: (-scores[i], i))


def reconstruct_source(case: TestCase) -> str:
    """Invert a test case back to its source fragment text.

    For sequencing and cloze this applies the correct candidate to the stem;
    for prediction it appends the correct candidate to the stem.
    """
    if case.task_kind == "sequencing":
        segments = {}
        for line in case.stem.split("\n"):
            label, text = line[1], line[4:]
            segments[label] = text
        order = case.candidates[case.correct_index].split("-")
        return " ".join(segments[label] for label in order)
    if case.task_kind == "cloze":
        masked, _, bank_block = case.stem.partition("\n\n" + BANK_HEADER + "\n")
        bank = {}
        for line in bank_block.split("\n"):
            label, text = line[1:].split(") ", 1)
            bank[label] = text
        text = masked
        for pair in case.candidates[case.correct_index].split(", "):
            blank, label = pair.split("→")
            text = text.replace(_BLANK_FMT.format(blank), bank[label])
        return text
    if case.task_kind == "prediction":
        return case.stem + " " + case.candidates[case.correct_index]
    raise ValueError(f"unknown task kind {case.task_kind!r}")


def build_benchmark(
    corpus_root: str | Path,
    domain: str,
    task_kind: str,
    config: FragmentConfig,
    seed: int,
    target_size: int,
    *,
    period_label: str,
    created: str | None = None,
    generator_version: str = GENERATOR_VERSION,
) -> Benchmark:
    """Generate up to target_size cases, deterministically under the seed.

    Articles are visited in a seed-derived shuffled order; each article's
    paragraph windows are consumed in an independently seeded order without
    replacement, so exhaustion is exact and output is schedule-independent.
    """
    if task_kind not in TASK_KINDS:
        raise ValueError(f"unknown task kind {task_kind!r}")
    if target_size < 1:
        raise ValueError("target_size must be >= 1")
    articles = list(iter_articles(corpus_root, domain))
    if not articles:
        raise EmptyBenchmarkError(f"no articles stored for domain {domain!r}")

    order_rng = random.Random(derive_subseed(seed, f"order|{domain}|{task_kind}"))
    order_rng.shuffle(articles)

    class _State:
        __slots__ = ("article", "rng", "starts", "next")

        def __init__(self, article: Article):
            self.article = article
            self.rng = random.Random(derive_subseed(seed, article.meta.arxiv_id))
            n_starts = len(article.paragraphs) - config.n_paragraphs + 1
            self.starts = list(range(max(0, n_starts)))
            self.rng.shuffle(self.starts)
            self.next = 0

    states = [_State(a) for a in articles]
    min_sentences = {
        "sequencing": config.min_sentences_seq,
        "cloze": config.min_sentences_cloze,
        "prediction": config.min_sentences_pred,
    }[task_kind]

    items: list[TestCase] = []
    while len(items) < target_size and any(s.next < len(s.starts) for s in states):
        for state in states:
            if len(items) >= target_size:
                break
            if state.next >= len(state.starts):
                continue
            start = state.starts[state.next]
            state.next += 1
            fragment = fragment_at(state.article, start, config)
            if isinstance(fragment, Rejection):
                continue
            common = dict(
                domain=domain, seed=seed, generator_version=generator_version,
                min_sentences=min_sentences,
            )
            if task_kind == "sequencing":
                case = gen_sequencing(fragment, state.rng, **common)
            elif task_kind == "cloze":
                case = gen_cloze(fragment, state.rng, **common)
            else:
                case = gen_prediction(fragment, state.article, state.rng, **common)
            if isinstance(case, Rejection):
                continue
            items.append(case)

    if not items:
        raise EmptyBenchmarkError(
            f"no eligible fragments for {task_kind} in domain {domain!r}"
        )
    if created is None:
        manifest = load_manifest(corpus_root)
        if manifest is not None:
            created = f"{manifest.window_end.isoformat()}T00:00:00Z"
        else:
            created = "1970-01-01T00:00:00Z"
    return Benchmark(
        benchmark_id=stable_id(period_label, domain, task_kind, seed, generator_version),
        period_label=period_label,
        domain=domain,
        task_kind=task_kind,
        seed=seed,
        items=tuple(items),
        status="private",
        created=created,
        generator_version=generator_version,
        config_digest=config_digest(asdict(config)),
    )


def benchmark_header(bench: Benchmark) -> dict:
    return {
        "benchmark_id": bench.benchmark_id,
        "period_label": bench.period_label,
        "domain": bench.domain,
        "task_kind": bench.task_kind,
        "seed": bench.seed,
        "status": bench.status,
        "created": bench.created,
        "generator_version": bench.generator_version,
        "config_digest": bench.config_digest,
        "item_count": len(bench.items),
    }


def case_to_json(case: TestCase) -> dict:
    return {
        "case_id": case.case_id,
        "task_kind": case.task_kind,
        "stem": case.stem,
        "candidates": list(case.candidates),
        "correct_index": case.correct_index,
        "domain": case.domain,
        "provenance": asdict(case.provenance),
    }


def case_from_json(obj: dict) -> TestCase:
    return TestCase(
        case_id=obj["case_id"],
        task_kind=obj["task_kind"],
        stem=obj["stem"],
        candidates=tuple(obj["candidates"]),
        correct_index=obj["correct_index"],
        domain=obj["domain"],
        provenance=Provenance(**obj["provenance"]),
    )


def save_benchmark(bench: Benchmark, path: str | Path) -> None:
    """JSONL: one header line, then one test case per line."""
    lines = [json.dumps(benchmark_header(bench), ensure_ascii=False)]
    lines.extend(json.dumps(case_to_json(c), ensure_ascii=False) for c in bench.items)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_benchmark(path: str | Path) -> Benchmark:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        items = tuple(case_from_json(json.loads(line)) for line in fh if line.strip())
    return Benchmark(
        benchmark_id=header["benchmark_id"],
        period_label=header["period_label"],
        domain=header["domain"],
        task_kind=header["task_kind"],
        seed=header["seed"],
        items=items,
        status=header["status"],
        created=header["created"],
        generator_version=header.get("generator_version", GENERATOR_VERSION),
        config_digest=header.get("config_digest", ""),
    )
