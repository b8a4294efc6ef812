from __future__ import annotations

import datetime as dt
import random
from pathlib import Path

import pytest

from arxivroll.corpus import Article, ArticleMeta
from arxivroll.harness import ModelConfig
from arxivroll.scpgen import Fragment, FragmentConfig, build_benchmark

FIXTURE_CORPUS = Path(__file__).parent / "fixtures" / "corpus"


@pytest.fixture(scope="session")
def corpus_root() -> Path:
    assert FIXTURE_CORPUS.is_dir(), "run tests/fixtures/make_corpus.py first"
    return FIXTURE_CORPUS


def make_meta(arxiv_id: str = "2404.00001", domain: str = "cs") -> ArticleMeta:
    return ArticleMeta(arxiv_id, domain, dt.date(2024, 4, 15), f"Title {arxiv_id}")


def make_article(n_paragraphs: int = 3, sentences_per_par: int = 8) -> Article:
    topics = ["solver", "cache", "planner", "index", "router", "ledger", "probe", "scheduler"]
    paragraphs = []
    for p in range(n_paragraphs):
        sentences = []
        for s in range(sentences_per_par):
            topic = topics[(p * sentences_per_par + s) % len(topics)]
            sentences.append(
                f"The {topic} number {p}-{s} keeps its own budget while the "
                f"round {s} window advances over shard {p}."
            )
        paragraphs.append(" ".join(sentences))
    return Article(make_meta(), tuple(paragraphs), sum(len(p) for p in paragraphs))


def make_fragment(n_sentences: int = 8, article_id: str = "2404.00001") -> Fragment:
    sentences = tuple(
        f"Sentence {i} describes step {i} of the pipeline in plain words." for i in range(n_sentences)
    )
    return Fragment(
        article_id=article_id,
        paragraph_span=(0, 1),
        sentences=sentences,
        word_count=sum(len(s.split()) for s in sentences),
    )


def mock_config(url: str, model_id: str = "mock", **kwargs) -> ModelConfig:
    return ModelConfig(model_id=model_id, endpoint_url=url, **kwargs)


@pytest.fixture(scope="session")
def small_bench(corpus_root):
    return build_benchmark(
        corpus_root, "cs", "sequencing", FragmentConfig(), 7, 60, period_label="2024b"
    )


@pytest.fixture
def rng() -> random.Random:
    return random.Random(12345)
