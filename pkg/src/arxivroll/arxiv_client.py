"""arXiv Atom listing client with a serialized, rate-limited request queue.

The base URL is configurable so tests and offline mirrors can stand in for
the real API. All requests from one client instance go through a single
minimum-delay gate (default 3 s between request starts).
"""

from __future__ import annotations

import datetime as dt
import threading
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Callable

import requests

from .corpus import DOMAINS, ArticleMeta
from .errors import FeedParseError, RetryableFetchError

ARXIV_API_URL = "https://export.arxiv.org/api/query"
ARXIV_SOURCE_URL = "https://arxiv.org/e-print"
_ATOM_NS = {
    "atom": "http://www.w3.org/2005/Atom",
    "arxiv": "http://arxiv.org/schemas/atom",
}

# arXiv category prefixes that fold into the physics umbrella domain.
_PHYSICS_ARCHIVES = (
    "physics", "astro-ph", "cond-mat", "gr-qc", "hep-ex", "hep-lat",
    "hep-ph", "hep-th", "math-ph", "nlin", "nucl-ex", "nucl-th", "quant-ph",
)


def category_domain(term: str) -> str | None:
    """Map an arXiv category term (e.g. "cs.LG", "hep-th") to a domain code."""
    prefix = term.split(".", 1)[0]
    if prefix in DOMAINS:
        return prefix
    if prefix in _PHYSICS_ARCHIVES:
        return "physics"
    return None


@dataclass(frozen=True)
class FeedEntry:
    meta: ArticleMeta
    abstract: str


def parse_feed(data: bytes, domain_hint: str | None = None) -> list[FeedEntry]:
    """Parse an Atom feed into entries; raises FeedParseError on bad XML."""
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        offset = _byte_offset(data, exc.position) if exc.position else None
        raise FeedParseError(f"malformed Atom feed: {exc}", byte_offset=offset) from exc
    entries = []
    for entry in root.findall("atom:entry", _ATOM_NS):
        id_url = entry.findtext("atom:id", default="", namespaces=_ATOM_NS).strip()
        arxiv_id = _strip_version(id_url.rsplit("/", 1)[-1])
        title = " ".join(
            entry.findtext("atom:title", default="", namespaces=_ATOM_NS).split()
        )
        abstract = " ".join(
            entry.findtext("atom:summary", default="", namespaces=_ATOM_NS).split()
        )
        published = entry.findtext("atom:published", default="", namespaces=_ATOM_NS)
        domain = _entry_domain(entry) or domain_hint
        if not arxiv_id or not published or domain is None:
            continue
        submitted = dt.date.fromisoformat(published[:10])
        entries.append(
            FeedEntry(
                meta=ArticleMeta(arxiv_id, domain, submitted, title),
                abstract=abstract,
            )
        )
    return entries


def _entry_domain(entry: ET.Element) -> str | None:
    primary = entry.find("arxiv:primary_category", _ATOM_NS)
    if primary is not None:
        domain = category_domain(primary.attrib.get("term", ""))
        if domain:
            return domain
    for cat in entry.findall("atom:category", _ATOM_NS):
        domain = category_domain(cat.attrib.get("term", ""))
        if domain:
            return domain
    return None


def _strip_version(arxiv_id: str) -> str:
    if "v" in arxiv_id:
        stem, _, tail = arxiv_id.rpartition("v")
        if stem and tail.isdigit():
            return stem
    return arxiv_id


def _byte_offset(data: bytes, position: tuple[int, int]) -> int:
    line, column = position
    lines = data.split(b"\n")
    return sum(len(l) + 1 for l in lines[: line - 1]) + column


class ArxivListingClient:
    """Fetches category listings page by page, never faster than min_delay_s."""

    def __init__(
        self,
        base_url: str = ARXIV_API_URL,
        *,
        source_url_base: str = ARXIV_SOURCE_URL,
        min_delay_s: float = 3.0,
        page_size: int = 100,
        timeout_s: float = 30.0,
        transport: Callable[[str, dict], bytes] | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url
        self.source_url_base = source_url_base
        self.min_delay_s = min_delay_s
        self.page_size = page_size
        self.timeout_s = timeout_s
        self._transport = transport or self._http_get
        self._clock = clock
        self._sleep = sleep
        self._gate = threading.Lock()
        self._last_start: float | None = None

    def _http_get(self, url: str, params: dict) -> bytes:
        try:
            resp = requests.get(url, params=params, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise RetryableFetchError(f"listing request failed: {exc}") from exc
        if resp.status_code != 200:
            raise RetryableFetchError(f"listing request returned HTTP {resp.status_code}")
        return resp.content

    def _throttled(self, url: str, params: dict) -> bytes:
        with self._gate:
            now = self._clock()
            if self._last_start is not None:
                wait = self.min_delay_s - (now - self._last_start)
                if wait > 0:
                    self._sleep(wait)
                    now = self._clock()
            self._last_start = now
            return self._transport(url, params)

    def fetch_entries(
        self, domain: str, window: tuple[dt.date, dt.date], page: int
    ) -> list[FeedEntry]:
        """One page of entries for a domain, filtered to the date window."""
        start_date, end_date = window
        if start_date > end_date:
            raise ValueError("window start must not exceed window end")
        if domain not in DOMAINS:
            raise ValueError(f"unknown domain {domain!r}")
        query = (
            f"cat:{domain}.* AND submittedDate:"
            f"[{start_date.strftime('%Y%m%d')}0000 TO {end_date.strftime('%Y%m%d')}2359]"
        )
        params = {
            "search_query": query,
            "start": page * self.page_size,
            "max_results": self.page_size,
            "sortBy": "submittedDate",
            "sortOrder": "ascending",
        }
        data = self._throttled(self.base_url, params)
        entries = parse_feed(data, domain_hint=None)
        return [
            e
            for e in entries
            if e.meta.domain == domain and start_date <= e.meta.submitted <= end_date
        ]

    def fetch_listing(
        self, domain: str, window: tuple[dt.date, dt.date], page: int
    ) -> list[ArticleMeta]:
        """Article metadata for one page, in API order."""
        return [e.meta for e in self.fetch_entries(domain, window, page)]

    def fetch_source(self, arxiv_id: str) -> bytes:
        """Raw e-print source (tarball, gzipped tex, or bare tex bytes).

        Goes through the same rate gate as listing requests.
        """
        return self._throttled(f"{self.source_url_base}/{arxiv_id}", {})
