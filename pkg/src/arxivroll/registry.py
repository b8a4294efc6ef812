"""Benchmark lifecycle registry and leaderboard reporting.

The registry is an append-only JSONL event log (register/expire); state is
reconstructed by replaying it, so the one-time-use discipline is auditable.
A benchmark only ever moves private -> expired. Expired benchmarks stay
evaluable under an explicit override, with the run tagged "expired-rerun".
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

from filelock import FileLock

from .errors import ConflictError, IntegrityError, LifecycleError
from .harness import EvalRun, binomial_se_pct, load_run
from .metrics import average_ranks
from .util import read_json, sha256_file

DIGEST_ALGO = "sha256"


@dataclass(frozen=True)
class RegistryRecord:
    benchmark_id: str
    period_label: str
    domain: str
    task_kind: str
    status: str  # "private" | "expired"
    created: str
    content_digest: str  # "<algo>:<hex>"
    source_path: str
    expired_at: str | None = None

    def __post_init__(self):
        if (self.status == "expired") != (self.expired_at is not None):
            raise ValueError("status=expired exactly when expired_at is present")


def file_digest(path: str | Path) -> str:
    return f"{DIGEST_ALGO}:{sha256_file(path)}"


class Registry:
    """Single-writer registry over one JSONL event log."""

    def __init__(self, log_path: str | Path):
        self.log_path = Path(log_path)
        self._lock = FileLock(str(self.log_path) + ".lock")

    # -- state reconstruction ------------------------------------------

    def records(self) -> dict[str, RegistryRecord]:
        state: dict[str, RegistryRecord] = {}
        if not self.log_path.exists():
            return state
        with open(self.log_path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    event = json.loads(line)
                    if event["event"] == "register":
                        rec = event["record"]
                        state[rec["benchmark_id"]] = RegistryRecord(**rec)
                    elif event["event"] == "expire":
                        bid = event["benchmark_id"]
                        state[bid] = replace(
                            state[bid], status="expired", expired_at=event["at"]
                        )
                    else:
                        raise KeyError(f"unknown event {event['event']!r}")
                except (KeyError, TypeError, ValueError) as exc:
                    raise IntegrityError(
                        f"corrupt registry log {self.log_path} at line {line_no}: {exc}"
                    ) from exc
        return state

    def get(self, benchmark_id: str) -> RegistryRecord | None:
        return self.records().get(benchmark_id)

    def _append(self, event: dict) -> None:
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")

    # -- lifecycle operations ------------------------------------------

    def register(self, bench_path: str | Path) -> RegistryRecord:
        """Register a benchmark file as a fresh private benchmark."""
        from .scpgen import load_benchmark

        bench_path = Path(bench_path)
        bench = load_benchmark(bench_path)
        with self._lock:
            if bench.benchmark_id in self.records():
                raise ConflictError(f"benchmark {bench.benchmark_id!r} already registered")
            record = RegistryRecord(
                benchmark_id=bench.benchmark_id,
                period_label=bench.period_label,
                domain=bench.domain,
                task_kind=bench.task_kind,
                status="private",
                created=bench.created,
                content_digest=file_digest(bench_path),
                source_path=str(bench_path),
            )
            self._append({"event": "register", "record": record.__dict__})
        return record

    def expire(self, benchmark_id: str, at: str) -> RegistryRecord:
        """Mark a private benchmark expired; expiring twice is a warned no-op."""
        with self._lock:
            record = self.records().get(benchmark_id)
            if record is None:
                raise LifecycleError(f"unknown benchmark {benchmark_id!r}")
            if record.status == "expired":
                warnings.warn(
                    f"benchmark {benchmark_id!r} is already expired", RuntimeWarning
                )
                return record
            self._append({"event": "expire", "benchmark_id": benchmark_id, "at": at})
            return replace(record, status="expired", expired_at=at)

    def verify(self, benchmark_id: str, path: str | Path | None = None) -> None:
        """Check the on-disk file still matches the registered digest."""
        record = self.records().get(benchmark_id)
        if record is None:
            raise LifecycleError(f"unknown benchmark {benchmark_id!r}")
        actual = file_digest(path if path is not None else record.source_path)
        if actual != record.content_digest:
            raise IntegrityError(
                f"benchmark {benchmark_id!r} content digest mismatch: "
                f"registered {record.content_digest}, found {actual}"
            )

    def check_evaluable(self, benchmark_id: str, *, allow_expired: bool) -> tuple[str, ...]:
        """Gate evaluation by lifecycle status; returns tags to stamp the run."""
        record = self.records().get(benchmark_id)
        if record is None:
            raise LifecycleError(
                f"benchmark {benchmark_id!r} is not registered; register it first"
            )
        if record.status == "expired":
            if not allow_expired:
                raise LifecycleError(
                    f"benchmark {benchmark_id!r} is expired; pass --allow-expired "
                    "to rerun it for reproduction (the run will be tagged)"
                )
            return ("expired-rerun",)
        return ()


# -- leaderboard -------------------------------------------------------


@dataclass
class LeaderboardRow:
    model_id: str
    cells: dict[str, tuple[float, float]]  # "domain/task" -> (acc_pct, se_pct)
    mean_accuracy: float
    rank: float
    rs1_absolute: float | None = None
    rs1_relative: float | None = None
    rs2: float | None = None
    rs2_normalized: float | None = None


def build_leaderboard(
    results_dir: str | Path,
    rs_dir: str | Path | None = None,
    registry: Registry | None = None,
) -> list[LeaderboardRow]:
    """Join evaluation runs (and RS reports, when present) into ranked rows.

    Missing cells stay absent; duplicate runs for one (model, benchmark)
    are an error naming both files.
    """
    runs: dict[tuple[str, str], tuple[Path, EvalRun]] = {}
    for path in sorted(Path(results_dir).rglob("*.json")):
        run = load_run(path)
        key = (run.model_id, run.benchmark_id)
        if key in runs:
            raise ConflictError(
                f"duplicate runs for model {key[0]!r} on benchmark {key[1]!r}: "
                f"{runs[key][0]} and {path}"
            )
        runs[key] = (path, run)
    if not runs:
        raise ValueError(f"no evaluation runs found under {results_dir}")

    if registry is not None:
        known = registry.records()
        for _, run in runs.values():
            if run.benchmark_id in known:
                registry.verify(run.benchmark_id)

    # Pool per (model, domain/task) cell: sum correct and totals, recompute.
    tallies: dict[str, dict[str, list[int]]] = {}
    for _, run in runs.values():
        cell = f"{run.domain}/{run.task_kind}"
        bucket = tallies.setdefault(run.model_id, {}).setdefault(cell, [0, 0])
        bucket[0] += run.n_correct
        bucket[1] += run.n

    rs_reports: dict[str, dict] = {}
    if rs_dir is not None and Path(rs_dir).is_dir():
        for path in sorted(Path(rs_dir).glob("*.json")):
            doc = read_json(path)
            rs_reports[doc["model_id"]] = doc

    models = sorted(tallies)
    rows = []
    for model in models:
        cells = {}
        for cell, (n_correct, n) in sorted(tallies[model].items()):
            p = n_correct / n
            cells[cell] = (100.0 * p, binomial_se_pct(p, n))
        mean_acc = sum(acc for acc, _ in cells.values()) / len(cells)
        rs = rs_reports.get(model, {})
        rows.append(
            LeaderboardRow(
                model_id=model,
                cells=cells,
                mean_accuracy=mean_acc,
                rank=0.0,
                rs1_absolute=rs.get("rs1_absolute"),
                rs1_relative=rs.get("rs1_relative"),
                rs2=rs.get("rs2"),
                rs2_normalized=rs.get("rs2_normalized"),
            )
        )
    ranks = average_ranks([r.mean_accuracy for r in rows], descending=True)
    for row, rank in zip(rows, ranks):
        row.rank = rank
    rows.sort(key=lambda r: (r.rank, r.model_id))
    return rows


def _cell_columns(rows: list[LeaderboardRow]) -> list[str]:
    return sorted({cell for row in rows for cell in row.cells})


def _fmt_rank(rank: float) -> str:
    return str(int(rank)) if rank == int(rank) else f"{rank:g}"


def _fmt_rs(value: float | None) -> str:
    return "-" if value is None else f"{value:.3f}"


def emit_report(rows: list[LeaderboardRow], format: str) -> str:
    """Render rows as markdown (acc ± se, one decimal each), json, or csv."""
    if not rows:
        raise ValueError("no rows to report")
    columns = _cell_columns(rows)
    if format == "markdown":
        header = (
            ["Model"] + columns
            + ["Mean", "Rank", "RS1 (abs)", "RS1 (rel)", "RS2", "RS2 (norm)"]
        )
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join(" --- " for _ in header) + "|"]
        for row in rows:
            cells = []
            for col in columns:
                pair = row.cells.get(col)
                cells.append("-" if pair is None else f"{pair[0]:.1f} ± {pair[1]:.1f}")
            lines.append("| " + " | ".join(
                [row.model_id] + cells
                + [f"{row.mean_accuracy:.1f}", _fmt_rank(row.rank),
                   _fmt_rs(row.rs1_absolute), _fmt_rs(row.rs1_relative),
                   _fmt_rs(row.rs2), _fmt_rs(row.rs2_normalized)]
            ) + " |")
        return "\n".join(lines) + "\n"
    if format == "json":
        return json.dumps([_row_to_json(r) for r in rows], ensure_ascii=False, indent=2) + "\n"
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        head = ["model_id"]
        for col in columns:
            head += [f"{col} acc", f"{col} se"]
        head += ["mean_accuracy", "rank", "rs1_absolute", "rs1_relative", "rs2", "rs2_normalized"]
        writer.writerow(head)
        for row in rows:
            record = [row.model_id]
            for col in columns:
                pair = row.cells.get(col)
                record += ["", ""] if pair is None else [repr(pair[0]), repr(pair[1])]
            record += [
                repr(row.mean_accuracy), _fmt_rank(row.rank),
                "" if row.rs1_absolute is None else repr(row.rs1_absolute),
                "" if row.rs1_relative is None else repr(row.rs1_relative),
                "" if row.rs2 is None else repr(row.rs2),
                "" if row.rs2_normalized is None else repr(row.rs2_normalized),
            ]
            writer.writerow(record)
        return buf.getvalue()
    raise ValueError(f"unknown report format {format!r}")


def _row_to_json(row: LeaderboardRow) -> dict:
    return {
        "model_id": row.model_id,
        "cells": {k: {"accuracy_pct": a, "se_pct": s} for k, (a, s) in row.cells.items()},
        "mean_accuracy": row.mean_accuracy,
        "rank": row.rank,
        "rs1_absolute": row.rs1_absolute,
        "rs1_relative": row.rs1_relative,
        "rs2": row.rs2,
        "rs2_normalized": row.rs2_normalized,
    }


def rows_from_json(doc: list[dict]) -> list[LeaderboardRow]:
    rows = []
    for obj in doc:
        rows.append(
            LeaderboardRow(
                model_id=obj["model_id"],
                cells={
                    k: (v["accuracy_pct"], v["se_pct"]) for k, v in obj["cells"].items()
                },
                mean_accuracy=obj["mean_accuracy"],
                rank=obj["rank"],
                rs1_absolute=obj["rs1_absolute"],
                rs1_relative=obj["rs1_relative"],
                rs2=obj["rs2"],
                rs2_normalized=obj["rs2_normalized"],
            )
        )
    return rows
