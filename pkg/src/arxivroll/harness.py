"""Prompt rendering, endpoint querying, answer extraction, and scoring.

Decoding is pinned to the greedy contract (temperature 0, capped new
tokens); answers are parsed by exact letter matching; failed or unparseable
responses count as incorrect so n stays comparable across models.
"""

from __future__ import annotations

import json
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from math import sqrt
from pathlib import Path
from typing import Callable

import requests

from .errors import AuthError, QueryFailedError, RunAbortedError
from .scpgen import Benchmark, TestCase
from .util import atomic_write_json, read_json

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

LETTERS = ("A", "B", "C", "D")

_INSTRUCTIONS = {
    "sequencing": (
        "Sequencing task: the four labeled segments below are presented out of "
        "order. Choose the candidate whose label order restores the original text."
    ),
    "cloze": (
        "Cloze task: four sentences were removed from the text below and are "
        "listed in the sentence bank. Choose the candidate that assigns each "
        "blank its original sentence."
    ),
    "prediction": (
        "Prediction task: choose the candidate sentence that comes next after "
        "the text below."
    ),
}
_CLOSING = "Answer with a single letter (A, B, C, or D)."


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff: float = 0.5


@dataclass(frozen=True)
class ModelConfig:
    model_id: str
    endpoint_url: str
    auth_token_env_var: str = ""
    temperature: float = 0.0
    max_new_tokens: int = 50
    request_timeout: float = 30.0
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self):
        if self.temperature != 0.0:
            raise ValueError("temperature must be 0 (greedy decoding contract)")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    @classmethod
    def from_toml(cls, path: str | Path, *, defaults: dict | None = None) -> "ModelConfig":
        """Load a model TOML; file values override the optional defaults
        (e.g. a [model] table from the tool config)."""
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        merged = dict(defaults or {})
        retry_raw = {**merged.pop("retry", {}), **raw.pop("retry", {})}
        merged.update(raw)
        retry = RetryPolicy(
            max_attempts=int(retry_raw.get("max_attempts", 3)),
            base_backoff=float(retry_raw.get("base_backoff", 0.5)),
        )
        try:
            return cls(retry=retry, **merged)
        except TypeError as exc:
            raise ValueError(f"bad model config {path}: {exc}") from None


def render_prompt(case: TestCase) -> str:
    """Deterministic per-task template; no trailing whitespace variance."""
    lines = [_INSTRUCTIONS[case.task_kind], "", case.stem, ""]
    lines.extend(f"{LETTERS[i]}. {case.candidates[i]}" for i in range(4))
    lines.extend(["", _CLOSING])
    return "\n".join(lines)


_ANSWER_STATED_RE = re.compile(
    r"\banswer\s*(?:is\b|:)\s*[\"'(\[{*]*\s*([A-Da-d])(?![A-Za-z0-9])", re.IGNORECASE
)
_PAREN_RE = re.compile(r"\(\s*([A-Da-d])\s*\)")
_STANDALONE_RE = re.compile(r"(?<![A-Za-z0-9])([A-Da-d])(?![A-Za-z0-9])")


def extract_answer(raw: str) -> str:
    """Parse a letter from model output: "answer is/answer:" first, then a
    parenthesized letter, then the first standalone letter token; else "none"."""
    for pattern in (_ANSWER_STATED_RE, _PAREN_RE, _STANDALONE_RE):
        m = pattern.search(raw)
        if m:
            return m.group(1).upper()
    return "none"


def binomial_se_pct(p: float, n: int) -> float:
    """Wald standard error of a proportion, in percentage points."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 100.0 * sqrt(p * (1.0 - p) / n)


def _default_transport(
    url: str, headers: dict, payload: dict, timeout: float
) -> tuple[int, str]:
    resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    return resp.status_code, resp.text


def query_model(
    prompt: str,
    config: ModelConfig,
    *,
    transport: Callable[[str, dict, dict, float], tuple[int, str]] | None = None,
    sleep: Callable[[float], None] = time.sleep,
    token: str | None = None,
) -> str:
    """Send one chat-completion request and return the assistant text.

    Retries transient failures (network, 429, 5xx, malformed body) with
    exponential backoff; auth rejections are fatal for the whole model.
    """
    import os

    transport = transport or _default_transport
    if token is None and config.auth_token_env_var:
        token = os.environ.get(config.auth_token_env_var, "")
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    payload = {
        "model": config.model_id,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0,
        "max_tokens": config.max_new_tokens,
    }
    last_error = "no attempts made"
    for attempt in range(config.retry.max_attempts):
        if attempt:
            sleep(config.retry.base_backoff * 2 ** (attempt - 1))
        try:
            status, body = transport(url=config.endpoint_url, headers=headers,
                                     payload=payload, timeout=config.request_timeout)
        except requests.RequestException as exc:
            last_error = f"network error: {exc}"
            continue
        if status in (401, 403):
            raise AuthError(f"endpoint rejected credentials (HTTP {status})")
        if status == 429 or status >= 500:
            last_error = f"HTTP {status}"
            continue
        if status != 200:
            raise QueryFailedError(f"unexpected HTTP {status}: {body[:200]}")
        try:
            return json.loads(body)["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            last_error = f"malformed response body: {exc}"
            continue
    raise QueryFailedError(f"gave up after {config.retry.max_attempts} attempts: {last_error}")


@dataclass(frozen=True)
class ItemResult:
    case_id: str
    raw_output: str
    extracted: str  # A, B, C, D, or "none"
    correct: bool
    latency_ms: float
    failed: bool = False


@dataclass(frozen=True)
class EvalRun:
    model_id: str
    benchmark_id: str
    items: tuple[ItemResult, ...]
    n: int
    n_correct: int
    accuracy_pct: float
    se_pct: float
    domain: str = ""
    task_kind: str = ""
    period_label: str = ""
    benchmark_seed: int = 0
    tags: tuple[str, ...] = ()
    failures: int = 0


def _assemble_run(
    bench: Benchmark, config: ModelConfig, results: list[ItemResult], tags: tuple[str, ...]
) -> EvalRun:
    items = tuple(sorted(results, key=lambda r: r.case_id))
    n = len(items)
    n_correct = sum(1 for r in items if r.correct)
    p = n_correct / n if n else 0.0
    return EvalRun(
        model_id=config.model_id,
        benchmark_id=bench.benchmark_id,
        items=items,
        n=n,
        n_correct=n_correct,
        accuracy_pct=100.0 * p,
        se_pct=binomial_se_pct(p, n) if n else 0.0,
        domain=bench.domain,
        task_kind=bench.task_kind,
        period_label=bench.period_label,
        benchmark_seed=bench.seed,
        tags=tags,
        failures=sum(1 for r in items if r.failed),
    )


def score_benchmark(
    bench: Benchmark,
    config: ModelConfig,
    *,
    transport: Callable | None = None,
    out_dir: str | Path | None = None,
    tags: tuple[str, ...] = (),
    sleep: Callable[[float], None] = time.sleep,
) -> EvalRun:
    """Evaluate every item and aggregate accuracy with its standard error.

    Items run concurrently up to max_in_flight; results are collected into a
    case_id-ordered list so aggregates are independent of scheduling. Runs
    with more than 50% transport failures abort as unreliable.
    """
    from .mockmodel import build_mock, is_mock_url

    if not bench.items:
        raise ValueError("benchmark has no items")
    answerer = build_mock(config.endpoint_url) if is_mock_url(config.endpoint_url) else None

    def evaluate_one(case: TestCase) -> ItemResult:
        started = time.perf_counter()
        try:
            if answerer is not None:
                raw = answerer(case)
            else:
                raw = query_model(render_prompt(case), config,
                                  transport=transport, sleep=sleep)
        except QueryFailedError:
            latency = (time.perf_counter() - started) * 1000.0
            return ItemResult(case.case_id, "", "none", False, latency, failed=True)
        latency = (time.perf_counter() - started) * 1000.0
        extracted = extract_answer(raw)
        correct = extracted != "none" and LETTERS.index(extracted) == case.correct_index
        return ItemResult(case.case_id, raw, extracted, correct, latency)

    executor = ThreadPoolExecutor(max_workers=config.max_in_flight)
    futures = {executor.submit(evaluate_one, case): case.case_id for case in bench.items}
    results: list[ItemResult] = []
    try:
        for fut in as_completed(futures):
            results.append(fut.result())
    except KeyboardInterrupt:
        executor.shutdown(wait=True, cancel_futures=True)
        if out_dir is not None and results:
            save_run(_assemble_run(bench, config, results, tags + ("interrupted",)),
                     out_dir, config)
        raise
    except AuthError:
        executor.shutdown(wait=True, cancel_futures=True)
        raise
    executor.shutdown()

    run = _assemble_run(bench, config, results, tags)
    if run.failures * 2 > run.n:
        raise RunAbortedError(
            f"{run.failures}/{run.n} items failed at transport level; run unreliable"
        )
    if out_dir is not None:
        save_run(run, out_dir, config)
    return run


def _safe_name(name: str) -> str:
    return re.sub(r"[^\w.-]", "_", name)


def run_path(out_dir: str | Path, model_id: str, benchmark_id: str) -> Path:
    return Path(out_dir) / _safe_name(model_id) / f"{benchmark_id}.json"


def run_to_json(run: EvalRun, config: ModelConfig | None = None) -> dict:
    from . import GENERATOR_VERSION

    doc = {
        "model_id": run.model_id,
        "benchmark_id": run.benchmark_id,
        "domain": run.domain,
        "task_kind": run.task_kind,
        "period_label": run.period_label,
        "benchmark_seed": run.benchmark_seed,
        "generator_version": GENERATOR_VERSION,
        "tags": list(run.tags),
        "n": run.n,
        "n_correct": run.n_correct,
        "accuracy_pct": run.accuracy_pct,
        "se_pct": run.se_pct,
        "failures": run.failures,
        "items": [
            {
                "case_id": r.case_id,
                "raw_output": r.raw_output,
                "extracted": r.extracted,
                "correct": r.correct,
                "latency_ms": r.latency_ms,
                "failed": r.failed,
            }
            for r in run.items
        ],
    }
    if config is not None:
        from .util import config_digest

        echo = {
            "model_id": config.model_id,
            "endpoint_url": config.endpoint_url,
            "auth_token_env_var": config.auth_token_env_var,
            "temperature": config.temperature,
            "max_new_tokens": config.max_new_tokens,
            "request_timeout": config.request_timeout,
            "max_in_flight": config.max_in_flight,
            "retry": {
                "max_attempts": config.retry.max_attempts,
                "base_backoff": config.retry.base_backoff,
            },
        }
        doc["config"] = echo
        doc["config_digest"] = config_digest(echo)
    return doc


def save_run(run: EvalRun, out_dir: str | Path, config: ModelConfig | None = None) -> Path:
    path = run_path(out_dir, run.model_id, run.benchmark_id)
    atomic_write_json(path, run_to_json(run, config))
    return path


def load_run(path: str | Path) -> EvalRun:
    doc = read_json(path)
    items = tuple(
        ItemResult(
            case_id=r["case_id"],
            raw_output=r["raw_output"],
            extracted=r["extracted"],
            correct=r["correct"],
            latency_ms=r["latency_ms"],
            failed=r.get("failed", False),
        )
        for r in doc["items"]
    )
    return EvalRun(
        model_id=doc["model_id"],
        benchmark_id=doc["benchmark_id"],
        items=items,
        n=doc["n"],
        n_correct=doc["n_correct"],
        accuracy_pct=doc["accuracy_pct"],
        se_pct=doc["se_pct"],
        domain=doc.get("domain", ""),
        task_kind=doc.get("task_kind", ""),
        period_label=doc.get("period_label", ""),
        benchmark_seed=doc.get("benchmark_seed", 0),
        tags=tuple(doc.get("tags", [])),
        failures=doc.get("failures", 0),
    )
