"""Local article corpus: domain types, JSON storage, and the manifest.

Layout: ``<root>/<domain>/<arxiv_id>.json`` plus ``<root>/manifest.json``.
One JSON document per article, UTF-8, keys
{arxiv_id, domain, submitted, title, paragraphs}.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from filelock import FileLock

from .errors import ConflictError
from .util import atomic_write_json, read_json

DOMAINS = ("cs", "econ", "eess", "math", "physics", "q-bio", "q-fin", "stat")


@dataclass(frozen=True)
class ArticleMeta:
    arxiv_id: str
    domain: str
    submitted: dt.date
    title: str

    def __post_init__(self):
        if not self.arxiv_id:
            raise ValueError("arxiv_id must be non-empty")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}; expected one of {DOMAINS}")


@dataclass(frozen=True)
class Article:
    meta: ArticleMeta
    paragraphs: tuple[str, ...]
    raw_char_count: int
    # Extraction diagnostics; not persisted.
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        for i, p in enumerate(self.paragraphs):
            if not p:
                raise ValueError(f"paragraph {i} is empty")
            if "\n" in p:
                raise ValueError(f"paragraph {i} contains a raw newline")


@dataclass
class CorpusManifest:
    period_label: str
    window_start: dt.date
    window_end: dt.date
    counts: dict[str, int] = field(default_factory=dict)
    abstract_only: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.window_start > self.window_end:
            raise ValueError("window_start must not exceed window_end")

    def to_json(self) -> dict:
        return {
            "period_label": self.period_label,
            "window_start": self.window_start.isoformat(),
            "window_end": self.window_end.isoformat(),
            "counts": dict(sorted(self.counts.items())),
            "abstract_only": sorted(self.abstract_only),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CorpusManifest":
        return cls(
            period_label=obj["period_label"],
            window_start=dt.date.fromisoformat(obj["window_start"]),
            window_end=dt.date.fromisoformat(obj["window_end"]),
            counts=dict(obj.get("counts", {})),
            abstract_only=list(obj.get("abstract_only", [])),
        )


def _manifest_path(corpus_root: str | Path) -> Path:
    return Path(corpus_root) / "manifest.json"


def _manifest_lock(corpus_root: str | Path) -> FileLock:
    return FileLock(str(Path(corpus_root) / "manifest.lock"))


def init_corpus(
    corpus_root: str | Path,
    period_label: str,
    window_start: dt.date,
    window_end: dt.date,
) -> CorpusManifest:
    """Create the corpus root and a fresh manifest (idempotent on re-run)."""
    root = Path(corpus_root)
    root.mkdir(parents=True, exist_ok=True)
    with _manifest_lock(root):
        if _manifest_path(root).exists():
            manifest = load_manifest(root)
            if manifest.period_label == period_label:
                return manifest
            raise ConflictError(
                f"corpus at {root} already initialized for period {manifest.period_label!r}"
            )
        manifest = CorpusManifest(period_label, window_start, window_end)
        atomic_write_json(_manifest_path(root), manifest.to_json())
    return manifest


def load_manifest(corpus_root: str | Path) -> CorpusManifest | None:
    path = _manifest_path(corpus_root)
    if not path.exists():
        return None
    return CorpusManifest.from_json(read_json(path))


def article_to_json(article: Article) -> dict:
    return {
        "arxiv_id": article.meta.arxiv_id,
        "domain": article.meta.domain,
        "submitted": article.meta.submitted.isoformat(),
        "title": article.meta.title,
        "paragraphs": list(article.paragraphs),
    }


def article_from_json(obj: dict) -> Article:
    meta = ArticleMeta(
        arxiv_id=obj["arxiv_id"],
        domain=obj["domain"],
        submitted=dt.date.fromisoformat(obj["submitted"]),
        title=obj["title"],
    )
    text = "\n".join(obj["paragraphs"])
    return Article(meta=meta, paragraphs=tuple(obj["paragraphs"]), raw_char_count=len(text))


def store_article(
    article: Article,
    corpus_root: str | Path,
    *,
    abstract_only: bool = False,
) -> str:
    """Persist one article and update the manifest counts atomically.

    Returns the record id ``<domain>/<arxiv_id>``. A second store of the
    same arxiv_id raises ConflictError.
    """
    root = Path(corpus_root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus root {root} does not exist")
    meta = article.meta
    dest = root / meta.domain / f"{meta.arxiv_id}.json"
    with _manifest_lock(root):
        if dest.exists():
            raise ConflictError(f"article {meta.arxiv_id!r} already stored")
        manifest = load_manifest(root)
        if manifest is None:
            # Ad-hoc corpus: window tracks the stored submission dates.
            manifest = CorpusManifest("", meta.submitted, meta.submitted)
        if manifest.period_label == "":
            manifest.window_start = min(manifest.window_start, meta.submitted)
            manifest.window_end = max(manifest.window_end, meta.submitted)
        atomic_write_json(dest, article_to_json(article))
        manifest.counts[meta.domain] = manifest.counts.get(meta.domain, 0) + 1
        if abstract_only:
            manifest.abstract_only.append(meta.arxiv_id)
        atomic_write_json(_manifest_path(root), manifest.to_json())
    return f"{meta.domain}/{meta.arxiv_id}"


def load_article(corpus_root: str | Path, domain: str, arxiv_id: str) -> Article:
    path = Path(corpus_root) / domain / f"{arxiv_id}.json"
    return article_from_json(read_json(path))


def iter_articles(corpus_root: str | Path, domain: str) -> Iterator[Article]:
    """Articles of one domain in arxiv_id order (stable across platforms)."""
    folder = Path(corpus_root) / domain
    if not folder.is_dir():
        return
    for path in sorted(folder.glob("*.json")):
        yield article_from_json(read_json(path))


def article_ids(corpus_root: str | Path, domain: str) -> list[str]:
    folder = Path(corpus_root) / domain
    if not folder.is_dir():
        return []
    return sorted(p.stem for p in folder.glob("*.json"))
