"""Single `arxivroll` executable: ingest, generate, evaluate, rs, stability,
correlate, registry, and leaderboard subcommands.

Exit codes: 0 success, 1 domain error (bad config, empty benchmark, lifecycle
refusal), 2 usage error. All randomness flows from explicit --seed flags;
every run prints its effective seed and generator version on stderr.
"""

from __future__ import annotations

import argparse
import datetime as dt
import gzip
import io
import json
import logging
import sys
import tarfile
from dataclasses import asdict, replace
from pathlib import Path

from . import GENERATOR_VERSION, __version__
from .arxiv_client import ArxivListingClient
from .corpus import DOMAINS, ArticleMeta, init_corpus, store_article
from .errors import ArxivRollError
from .harness import ModelConfig, score_benchmark
from .latex import extract_text
from .metrics import (
    PRIVATE,
    PUBLIC,
    BenchmarkRef,
    PerfTable,
    kendall,
    pearson,
    rs1_absolute,
    rs1_relative,
    rs2,
    spearman,
    stability,
)
from .registry import Registry, build_leaderboard, emit_report
from .scpgen import FragmentConfig, build_benchmark, load_benchmark, save_benchmark
from .util import atomic_write_json, config_digest, read_json

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("arxivroll")


class _UsageError(Exception):
    """Missing flag that the config file could have provided; exits 2."""


TASK_ALIASES = {
    "s": "sequencing", "sequencing": "sequencing",
    "c": "cloze", "cloze": "cloze",
    "p": "prediction", "prediction": "prediction",
}


def _load_tool_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _setting(args_value, config: dict, key: str, default=None):
    """Precedence: explicit flag > config file > built-in default."""
    if args_value is not None:
        return args_value
    if key in config:
        return config[key]
    return default


def _fragment_config(args, config: dict) -> FragmentConfig:
    section = config.get("fragment", {})
    return FragmentConfig(
        n_paragraphs=int(_setting(args.n_paragraphs, section, "n_paragraphs", 1)),
        min_words=int(_setting(args.min_words, section, "min_words", 80)),
        max_math_ratio=float(_setting(args.max_math_ratio, section, "max_math_ratio", 0.15)),
    )


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text)


def _print_provenance(seed) -> None:
    shown = seed if seed is not None else "-"
    print(f"effective-seed={shown} generator_version={GENERATOR_VERSION}", file=sys.stderr)


# -- subcommand implementations -----------------------------------------


def _cmd_ingest(args, config: dict) -> int:
    domains = [d.strip() for d in args.domains.split(",") if d.strip()]
    for domain in domains:
        if domain not in DOMAINS:
            raise ArxivRollError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
    out = _setting(args.out, config, "corpus_root")
    if out is None:
        raise _UsageError("--out is required (or set corpus_root in --config)")
    out_root = Path(out)
    init_corpus(out_root, args.period, args.date_from, args.date_to)
    if args.source_dir:
        stored, skipped = _ingest_source_dir(
            Path(args.source_dir), domains, out_root, args.date_from
        )
    else:
        client = ArxivListingClient(
            base_url=args.base_url,
            source_url_base=args.source_url,
            min_delay_s=args.delay,
            page_size=args.page_size,
        )
        stored, skipped = ingest_from_api(
            client, domains, (args.date_from, args.date_to), out_root,
            max_per_domain=args.max_per_domain,
        )
    print(f"ingested {stored} articles into {out_root} ({skipped} skipped)")
    return 0


def ingest_from_api(
    client: ArxivListingClient,
    domains: list[str],
    window: tuple[dt.date, dt.date],
    out_root: Path,
    *,
    max_per_domain: int = 1000,
) -> tuple[int, int]:
    """Fetch listings and full sources; fall back to the abstract (flagged in
    the manifest) when a source cannot be fetched or extracted."""
    stored = skipped = 0
    for domain in domains:
        stored_d = 0
        page = 0
        while stored_d < max_per_domain:
            entries = client.fetch_entries(domain, window, page)
            if not entries:
                break
            for entry in entries:
                if stored_d >= max_per_domain:
                    break
                article = None
                abstract_only = False
                try:
                    raw, fmt = _decode_source(client.fetch_source(entry.meta.arxiv_id))
                    article = extract_text(raw, fmt, entry.meta)
                    if not article.paragraphs:
                        raise ArxivRollError("no text extracted")
                except Exception as exc:
                    log.warning(
                        "source failed for %s (%s); keeping abstract only",
                        entry.meta.arxiv_id, exc,
                    )
                    body = entry.abstract or entry.meta.title
                    article = extract_text(body, "plain", entry.meta)
                    abstract_only = True
                try:
                    store_article(article, out_root, abstract_only=abstract_only)
                    stored_d += 1
                except ArxivRollError as exc:
                    log.warning("skipping %s: %s", entry.meta.arxiv_id, exc)
                    skipped += 1
            page += 1
        stored += stored_d
        log.info("domain %s: stored %d articles", domain, stored_d)
    return stored, skipped


def _decode_source(data: bytes) -> tuple[bytes, str]:
    """Sniff an e-print blob: gzip wrapper, tarball, PDF-only, or bare TeX."""
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    if data[:4] == b"%PDF":
        raise ArxivRollError("source is PDF-only")
    buffer = io.BytesIO(data)
    if tarfile.is_tarfile(buffer):
        return _main_tex_from_tar(data), "latex"
    return data, "latex"


def _ingest_source_dir(
    source_dir: Path, domains: list[str], out_root: Path, default_date: dt.date
) -> tuple[int, int]:
    """Offline ingestion from <source_dir>/<domain>/<arxiv_id>.{tex,txt,tar.gz,...}."""
    stored = skipped = 0
    for domain in domains:
        folder = source_dir / domain
        if not folder.is_dir():
            log.warning("no source directory for domain %s", domain)
            continue
        for path in sorted(folder.iterdir()):
            if path.suffix not in (".tex", ".txt", ".gz", ".tar"):
                continue
            arxiv_id = path.name.split(".tar")[0].split(".tex")[0].split(".txt")[0]
            if path.suffix == ".gz" and not path.name.endswith(".tar.gz"):
                arxiv_id = path.name[: -len(".gz")]
            meta = ArticleMeta(arxiv_id, domain, default_date, arxiv_id)
            raw, fmt = _read_source(path)
            try:
                article = extract_text(raw, fmt, meta)
            except Exception as exc:
                log.warning("extraction failed for %s: %s", path, exc)
                skipped += 1
                continue
            if not article.paragraphs:
                log.warning("no text extracted from %s; skipping", path)
                skipped += 1
                continue
            try:
                store_article(article, out_root)
                stored += 1
            except ArxivRollError as exc:
                log.warning("skipping %s: %s", arxiv_id, exc)
                skipped += 1
    return stored, skipped


def _read_source(path: Path) -> tuple[bytes, str]:
    data = path.read_bytes()
    if path.name.endswith((".tar.gz", ".tar")):
        return _main_tex_from_tar(data), "latex"
    if path.suffix == ".gz":
        data = gzip.decompress(data)
        return data, "latex"
    if path.suffix == ".txt":
        return data, "plain"
    return data, "latex"


def _main_tex_from_tar(data: bytes) -> bytes:
    with tarfile.open(fileobj=io.BytesIO(data)) as tar:
        candidates = []
        for member in tar.getmembers():
            if member.isfile() and member.name.endswith(".tex"):
                blob = tar.extractfile(member).read()
                candidates.append(blob)
        if not candidates:
            raise ArxivRollError("source tarball contains no .tex file")
        with_document = [b for b in candidates if b"\\begin{document}" in b]
        pool = with_document or candidates
        return max(pool, key=len)


def _cmd_generate(args, config: dict) -> int:
    task = TASK_ALIASES[args.task]
    frag_config = _fragment_config(args, config)
    corpus = _setting(args.corpus, config, "corpus_root")
    if corpus is None:
        raise _UsageError("--corpus is required (or set corpus_root in --config)")
    bench = build_benchmark(
        corpus,
        args.domain,
        task,
        frag_config,
        args.seed,
        args.size,
        period_label=args.period,
        created=args.created,
    )
    save_benchmark(bench, args.out)
    print(f"wrote {len(bench.items)} {task} items to {args.out} "
          f"(benchmark_id={bench.benchmark_id})")
    if len(bench.items) < args.size:
        log.warning("corpus exhausted at %d items (target %d)", len(bench.items), args.size)
    return 0


def _cmd_evaluate(args, config: dict) -> int:
    bench = load_benchmark(args.bench)
    model_config = ModelConfig.from_toml(args.model_config, defaults=config.get("model"))
    if args.max_in_flight is not None:
        model_config = replace(model_config, max_in_flight=args.max_in_flight)
    tags: tuple[str, ...] = ()
    registry_path = _setting(args.registry, config, "registry_path")
    if registry_path:
        registry = Registry(registry_path)
        tags = registry.check_evaluable(bench.benchmark_id, allow_expired=args.allow_expired)
        registry.verify(bench.benchmark_id, args.bench)
    out_dir = _setting(args.out, config, "results_root", "results")
    run = score_benchmark(bench, model_config, out_dir=out_dir, tags=tags)
    suffix = f" [{', '.join(run.tags)}]" if run.tags else ""
    print(
        f"{run.model_id} on {run.benchmark_id}: "
        f"{run.accuracy_pct:.1f} ± {run.se_pct:.1f} (n={run.n}){suffix}"
    )
    return 0


def _load_pairs_config(path: str) -> tuple[list[tuple[str, str, str]], list[str], list[str]]:
    doc = read_json(path)
    pairs = [
        (pair_id, refs["public"], refs["private"])
        for pair_id, refs in sorted(doc.get("pairs", {}).items())
    ]
    return pairs, list(doc.get("unmatched_public", [])), list(doc.get("unmatched_private", []))


def _table_from_results(
    results_dir: str, pairs, unmatched_public, unmatched_private
) -> PerfTable:
    from .harness import load_run

    refs: list[BenchmarkRef] = []
    for pair_id, pub, priv in pairs:
        refs.append(BenchmarkRef(pub, PUBLIC, pair_id))
        refs.append(BenchmarkRef(priv, PRIVATE, pair_id))
    refs.extend(BenchmarkRef(b, PUBLIC) for b in unmatched_public)
    refs.extend(BenchmarkRef(b, PRIVATE) for b in unmatched_private)
    needed = {r.name for r in refs}

    scores: dict[tuple[str, str], float] = {}
    coverage: dict[str, set[str]] = {}
    for path in sorted(Path(results_dir).rglob("*.json")):
        run = load_run(path)
        if run.benchmark_id in needed:
            scores[(run.model_id, run.benchmark_id)] = run.accuracy_pct / 100.0
            coverage.setdefault(run.model_id, set()).add(run.benchmark_id)
    models = tuple(sorted(m for m, covered in coverage.items() if covered == needed))
    for model, covered in sorted(coverage.items()):
        if covered != needed:
            log.warning(
                "model %s missing scores for %s; excluded",
                model, ", ".join(sorted(needed - covered)),
            )
    if not models:
        raise ArxivRollError("no model covers every benchmark in the pair configuration")
    table_scores = {k: v for k, v in scores.items() if k[0] in models}
    return PerfTable(models=models, benchmarks=tuple(refs), scores=table_scores)


def _cmd_rs(args, config: dict) -> int:
    pairs, unmatched_pub, unmatched_priv = _load_pairs_config(args.pairs)
    results_dir = _setting(args.results, config, "results_root", "results")
    table = _table_from_results(results_dir, pairs, unmatched_pub, unmatched_priv)
    relative = None
    if len(table.models) >= 2 and pairs:
        relative = rs1_relative(table)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for model in table.models:
        rs2_value = rs2_norm = None
        if len(table.private_refs()) >= 2:
            rs2_value, rs2_norm = rs2(table, model)
        report = {
            "model_id": model,
            "rs1_absolute": rs1_absolute(table, model),
            "rs1_relative": None if relative is None else relative[model],
            "rs2": rs2_value,
            "rs2_normalized": rs2_norm,
        }
        atomic_write_json(out_dir / f"{model}.json", report)
        print(
            f"{model}: rs1_abs={report['rs1_absolute']:.4f} "
            f"rs1_rel={_opt(report['rs1_relative'])} rs2={_opt(report['rs2'])} "
            f"rs2_norm={_opt(report['rs2_normalized'])}"
        )
    return 0


def _opt(value: float | None) -> str:
    return "-" if value is None else f"{value:.4f}"


def _cmd_stability(args, config: dict) -> int:
    task = TASK_ALIASES[args.task]
    if args.seeds < 2:
        raise ArxivRollError("--seeds must be >= 2")
    frag_config = _fragment_config(args, config)
    corpus = _setting(args.corpus, config, "corpus_root")
    if corpus is None:
        raise _UsageError("--corpus is required (or set corpus_root in --config)")
    model_config = ModelConfig.from_toml(args.model_config, defaults=config.get("model"))
    accuracies = []
    for seed in range(1, args.seeds + 1):
        bench = build_benchmark(
            corpus, args.domain, task, frag_config, seed, args.size,
            period_label=args.period,
        )
        run = score_benchmark(bench, model_config)
        accuracies.append(run.accuracy_pct)
    stats = stability(accuracies)
    report = {
        "domain": args.domain,
        "task_kind": task,
        "size": args.size,
        "model_id": model_config.model_id,
        "generator_version": GENERATOR_VERSION,
        "config_digest": config_digest(asdict(frag_config)),
        "seeds": list(range(1, args.seeds + 1)),
        "accuracies": accuracies,
        "mean": stats.mean,
        "std": stats.std,
        "min": stats.min,
        "max": stats.max,
    }
    if args.out:
        atomic_write_json(args.out, report)
    print(
        f"stability over {args.seeds} seeds: mean={stats.mean:.2f} "
        f"std={stats.std:.3f} min={stats.min:.2f} max={stats.max:.2f}"
    )
    return 0


def _load_score_table(path: str) -> tuple[str, dict[str, float]]:
    doc = read_json(path)
    if isinstance(doc, dict) and isinstance(doc.get("scores"), dict):
        return doc.get("label", Path(path).stem), {
            str(k): float(v) for k, v in doc["scores"].items()
        }
    return Path(path).stem, {str(k): float(v) for k, v in doc.items()}


def _cmd_correlate(args, config: dict) -> int:
    label_a, table_a = _load_score_table(args.table_a)
    label_b, table_b = _load_score_table(args.table_b)
    only_a = sorted(set(table_a) - set(table_b))
    only_b = sorted(set(table_b) - set(table_a))
    if only_a or only_b:
        raise ArxivRollError(
            "model sets differ: "
            f"only in {label_a}: {only_a or '[]'}; only in {label_b}: {only_b or '[]'}"
        )
    models = sorted(table_a)
    if len(models) < 3:
        raise ArxivRollError("correlation needs at least 3 shared models")
    x = [table_a[m] for m in models]
    y = [table_b[m] for m in models]
    row = {
        "benchmarks": f"{label_a} - {label_b}",
        "spearman": spearman(x, y),
        "pearson": pearson(x, y),
        "kendall": kendall(x, y),
    }
    if args.out:
        atomic_write_json(args.out, row)
    print("| Benchmarks | Spear. Corr. | Pearson Co. | Kendall Corr. |")
    print("| --- | --- | --- | --- |")
    print(
        f"| {row['benchmarks']} | {row['spearman']:.2f} "
        f"| {row['pearson']:.2f} | {row['kendall']:.2f} |"
    )
    return 0


def _cmd_registry(args, config: dict) -> int:
    registry_path = _setting(args.registry, config, "registry_path")
    if registry_path is None:
        raise ArxivRollError("--registry is required (or set registry_path in --config)")
    registry = Registry(registry_path)
    if args.registry_action == "register":
        record = registry.register(args.bench)
        print(f"registered {record.benchmark_id} status={record.status}")
        return 0
    if args.registry_action == "expire":
        at = args.at or dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
        record = registry.expire(args.id, at)
        print(f"{record.benchmark_id} status={record.status} expired_at={record.expired_at}")
        return 0
    if args.registry_action == "list":
        for record in sorted(registry.records().values(), key=lambda r: r.benchmark_id):
            print(
                f"{record.benchmark_id}  {record.period_label}  {record.domain}/"
                f"{record.task_kind}  {record.status}  {record.content_digest[:23]}"
            )
        return 0
    raise ArxivRollError(f"unknown registry action {args.registry_action!r}")


def _cmd_leaderboard(args, config: dict) -> int:
    results_dir = _setting(args.results, config, "results_root", "results")
    registry_path = _setting(args.registry, config, "registry_path")
    registry = Registry(registry_path) if registry_path else None
    rows = build_leaderboard(results_dir, args.rs, registry)
    format_name = {"md": "markdown", "markdown": "markdown", "json": "json", "csv": "csv"}[
        args.format
    ]
    document = emit_report(rows, format_name)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(document, encoding="utf-8")
        print(f"wrote leaderboard to {args.out}")
    else:
        print(document, end="")
    return 0


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arxivroll",
        description="Generate one-time private LLM benchmarks from arXiv "
        "articles, evaluate models on them, and quantify overestimation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="TOML tool config (flags override file values)")
    parser.add_argument("--init", action="store_true",
                        help="create the directories named in the tool config")
    parser.add_argument("--log-level", default=None, help="logging level (default WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="fetch listings and build a local corpus")
    p.add_argument("--domains", required=True, help="comma-separated domain codes")
    p.add_argument("--from", dest="date_from", required=True, type=_parse_date)
    p.add_argument("--to", dest="date_to", required=True, type=_parse_date)
    p.add_argument("--out", help="corpus root directory")
    p.add_argument("--source-dir", help="ingest local LaTeX/plain sources instead of the API")
    p.add_argument("--period", default="adhoc", help="period label for the manifest")
    p.add_argument("--base-url", default="https://export.arxiv.org/api/query")
    p.add_argument("--source-url", default="https://arxiv.org/e-print",
                   help="base URL for e-print source downloads")
    p.add_argument("--delay", type=float, default=3.0, help="min seconds between requests")
    p.add_argument("--page-size", type=int, default=100)
    p.add_argument("--max-per-domain", type=int, default=1000)
    p.set_defaults(func=_cmd_ingest, seed=None)

    p = sub.add_parser("generate", help="build one private benchmark")
    p.add_argument("--corpus", help="corpus root directory")
    p.add_argument("--domain", required=True, choices=DOMAINS)
    p.add_argument("--task", required=True, choices=sorted(TASK_ALIASES))
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--size", required=True, type=int)
    p.add_argument("--period", required=True, help='period label, e.g. "2024b"')
    p.add_argument("--out", required=True, help="output benchmark JSONL path")
    p.add_argument("--created", help="ISO timestamp to stamp (default: corpus window end)")
    p.add_argument("--n-paragraphs", type=int, default=None)
    p.add_argument("--min-words", type=int, default=None)
    p.add_argument("--max-math-ratio", type=float, default=None)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("evaluate", help="score one model on one benchmark")
    p.add_argument("--bench", required=True, help="benchmark JSONL path")
    p.add_argument("--model-config", required=True, help="model TOML config")
    p.add_argument("--out", help="results directory (default: results)")
    p.add_argument("--registry", help="registry log; enforces the lifecycle when given")
    p.add_argument("--allow-expired", action="store_true",
                   help="permit rerunning an expired benchmark (tags the run)")
    p.add_argument("--max-in-flight", type=int, default=None)
    p.set_defaults(func=_cmd_evaluate, seed=None)

    p = sub.add_parser("rs", help="compute rugged scores from evaluation runs")
    p.add_argument("--pairs", required=True, help="pair configuration JSON")
    p.add_argument("--results", help="results directory")
    p.add_argument("--out", required=True, help="output directory for RS reports")
    p.set_defaults(func=_cmd_rs, seed=None)

    p = sub.add_parser("stability", help="regenerate a benchmark across seeds and evaluate")
    p.add_argument("--corpus", help="corpus root directory")
    p.add_argument("--domain", required=True, choices=DOMAINS)
    p.add_argument("--task", required=True, choices=sorted(TASK_ALIASES))
    p.add_argument("--seeds", required=True, type=int, help="number of seeds (1..N)")
    p.add_argument("--size", required=True, type=int)
    p.add_argument("--model-config", required=True)
    p.add_argument("--period", default="stability")
    p.add_argument("--out", help="stability report JSON path")
    p.add_argument("--n-paragraphs", type=int, default=None)
    p.add_argument("--min-words", type=int, default=None)
    p.add_argument("--max-math-ratio", type=float, default=None)
    p.set_defaults(func=_cmd_stability, seed=None)

    p = sub.add_parser("correlate", help="correlate two score tables over shared models")
    p.add_argument("--table-a", required=True)
    p.add_argument("--table-b", required=True)
    p.add_argument("--out", help="output JSON path")
    p.set_defaults(func=_cmd_correlate, seed=None)

    p = sub.add_parser("registry", help="benchmark lifecycle registry")
    actions = p.add_subparsers(dest="registry_action", required=True)
    pa = actions.add_parser("register", help="register a fresh private benchmark")
    pa.add_argument("--bench", required=True)
    pa.add_argument("--registry")
    pa.set_defaults(func=_cmd_registry, seed=None)
    pa = actions.add_parser("expire", help="mark a benchmark expired")
    pa.add_argument("--id", required=True)
    pa.add_argument("--at", help="ISO timestamp (default: now)")
    pa.add_argument("--registry")
    pa.set_defaults(func=_cmd_registry, seed=None)
    pa = actions.add_parser("list", help="list registry records")
    pa.add_argument("--registry")
    pa.set_defaults(func=_cmd_registry, seed=None)

    p = sub.add_parser("leaderboard", help="aggregate runs and RS reports")
    p.add_argument("--results", help="results directory")
    p.add_argument("--rs", help="RS reports directory")
    p.add_argument("--registry", help="verify benchmark digests against this registry")
    p.add_argument("--format", default="md", choices=("md", "markdown", "json", "csv"))
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=_cmd_leaderboard, seed=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    config = {}
    try:
        config = _load_tool_config(args.config)
        level = args.log_level or config.get("log_level", "WARNING")
        logging.basicConfig(level=getattr(logging, str(level).upper(), logging.WARNING))
        if args.init:
            for key in ("corpus_root", "results_root"):
                if key in config:
                    Path(config[key]).mkdir(parents=True, exist_ok=True)
            if "registry_path" in config:
                Path(config["registry_path"]).parent.mkdir(parents=True, exist_ok=True)
        _print_provenance(getattr(args, "seed", None))
        return args.func(args, config)
    except _UsageError as exc:
        print(parser.format_usage(), end="", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ArxivRollError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted; partial results flushed where possible", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
