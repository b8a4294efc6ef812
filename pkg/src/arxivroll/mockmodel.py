"""In-process mock model endpoints, addressed as mock:// URLs.

Profiles:
  mock://always-correct
  mock://uniform?seed=7                      uniform random letter per case
  mock://skill?p=0.5&seed=7                  correct with probability p
  mock://contaminated?hit=0.9&miss=0.3&seed=7&ids=<file>
                                             skill `hit` on memorized case
                                             ids, `miss` elsewhere

The skill draw is keyed on the reconstructed source fragment, not the case
id, so a mock "model" keeps a stable opinion of each fragment across
regenerated benchmarks, the way a real model would. The uniform profile
keys on the case id (pure calibration noise).
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable
from urllib.parse import parse_qs, urlsplit

from .harness import LETTERS
from .scpgen import TestCase, reconstruct_source
from .util import int_draw, unit_draw

Answerer = Callable[[TestCase], str]


def is_mock_url(url: str) -> bool:
    return url.startswith("mock://")


def _params(url: str) -> tuple[str, dict[str, str]]:
    parts = urlsplit(url)
    query = {k: v[-1] for k, v in parse_qs(parts.query).items()}
    return parts.netloc, query


def _skill_answer(case: TestCase, p: float, seed: int) -> str:
    key = reconstruct_source(case)
    if unit_draw("skill", seed, key) < p:
        return LETTERS[case.correct_index]
    wrong = [i for i in range(4) if i != case.correct_index]
    return LETTERS[wrong[int_draw("skill-wrong", seed, key) % 3]]


def build_mock(url: str, *, memorized: set[str] | None = None) -> Answerer:
    """Compile a mock:// URL into a per-case answer function."""
    profile, query = _params(url)
    seed = int(query.get("seed", "0"))

    if profile == "always-correct":
        return lambda case: LETTERS[case.correct_index]

    if profile == "uniform":
        return lambda case: LETTERS[int_draw("uniform", seed, case.case_id) % 4]

    if profile == "skill":
        p = float(query["p"])
        return lambda case: _skill_answer(case, p, seed)

    if profile == "contaminated":
        hit = float(query.get("hit", "0.9"))
        miss = float(query.get("miss", "0.3"))
        known = set(memorized or ())
        if "ids" in query:
            known.update(
                line.strip()
                for line in Path(query["ids"]).read_text(encoding="utf-8").splitlines()
                if line.strip()
            )
        return lambda case: _skill_answer(
            case, hit if case.case_id in known else miss, seed
        )

    raise ValueError(f"unknown mock profile {profile!r}")
