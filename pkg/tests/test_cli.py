"""CLI surfaces: exit codes, determinism, and the full offline pipeline."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from arxivroll.cli import main

CORPUS = str(Path(__file__).parent / "fixtures" / "corpus")


def _mock_toml(tmp_path: Path, url: str, model_id: str = "mock") -> str:
    path = tmp_path / f"{model_id}.toml"
    path.write_text(f'model_id = "{model_id}"\nendpoint_url = "{url}"\n')
    return str(path)


def _generate(tmp_path: Path, name: str, *, seed: int = 42, task: str = "s",
              domain: str = "cs", size: int = 40) -> Path:
    out = tmp_path / name
    code = main([
        "generate", "--corpus", CORPUS, "--domain", domain, "--task", task,
        "--seed", str(seed), "--size", str(size), "--period", "2024b",
        "--out", str(out),
    ])
    assert code == 0
    return out


# -- usage and exit codes ----------------------------------------------------


def test_unknown_subcommand_exits_2(capsys):
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_missing_required_flag_exits_2(capsys):
    assert main(["generate", "--domain", "cs"]) == 2


def test_missing_corpus_is_usage_error(tmp_path, capsys):
    code = main([
        "generate", "--domain", "cs", "--task", "s", "--seed", "1",
        "--size", "5", "--period", "x", "--out", str(tmp_path / "b.jsonl"),
    ])
    assert code == 2
    err = capsys.readouterr().err
    assert "usage" in err.lower()
    assert "--corpus" in err


def test_domain_error_exits_1(tmp_path, capsys):
    code = main([
        "generate", "--corpus", str(tmp_path), "--domain", "econ", "--task", "s",
        "--seed", "1", "--size", "5", "--period", "x", "--out", str(tmp_path / "b.jsonl"),
    ])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_provenance_line_printed(tmp_path, capsys):
    _generate(tmp_path, "bench.jsonl")
    err = capsys.readouterr().err
    assert "effective-seed=42" in err
    assert "generator_version=scp-1" in err


def test_version_flag(capsys):
    assert main(["--version"]) == 0
    assert "arxivroll" in capsys.readouterr().out


# -- generate ------------------------------------------------------------------


def test_generate_twice_byte_identical(tmp_path):
    a = _generate(tmp_path, "a.jsonl")
    b = _generate(tmp_path, "b.jsonl")
    assert a.read_bytes() == b.read_bytes()


def test_generate_task_aliases(tmp_path):
    path = _generate(tmp_path, "c.jsonl", task="c", size=20)
    header = json.loads(path.read_text().splitlines()[0])
    assert header["task_kind"] == "cloze"


def test_generate_respects_config_file(tmp_path, capsys):
    config = tmp_path / "tool.toml"
    config.write_text(f'corpus_root = "{CORPUS}"\n[fragment]\nmin_words = 80\n')
    out = tmp_path / "viaconfig.jsonl"
    code = main([
        "--config", str(config), "generate", "--domain", "cs", "--task", "s",
        "--seed", "3", "--size", "10", "--period", "2024b", "--out", str(out),
    ])
    assert code == 0
    assert out.exists()


# -- ingest (offline source dir) -----------------------------------------------


def test_ingest_source_dir(tmp_path, capsys):
    source = tmp_path / "src" / "cs"
    source.mkdir(parents=True)
    (source / "2404.90001.tex").write_text(
        "\\documentclass{article}\\begin{document}\n"
        "First paragraph runs long enough to store. It has sentences.\n\n"
        "Second paragraph with math $x+y$ inline. It also has text.\n"
        "\\end{document}\n"
    )
    (source / "2404.90002.txt").write_text("Plain text line one.\nPlain line two.\n")
    out = tmp_path / "corpus"
    code = main([
        "ingest", "--domains", "cs", "--from", "2024-04-01", "--to", "2024-09-30",
        "--out", str(out), "--source-dir", str(tmp_path / "src"), "--period", "2024b",
    ])
    assert code == 0
    stored = json.loads((out / "cs" / "2404.90001.json").read_text())
    assert stored["paragraphs"][1].startswith("Second paragraph with math ⟨MATH⟩")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["counts"] == {"cs": 2}
    assert manifest["period_label"] == "2024b"


def test_ingest_unknown_domain_exits_1(tmp_path):
    assert main([
        "ingest", "--domains", "bogus", "--from", "2024-04-01", "--to", "2024-09-30",
        "--out", str(tmp_path / "c"),
    ]) == 1


def test_ingest_from_api_fetches_sources_with_fallback(tmp_path):
    """Full-source ingestion over a faked transport; a broken source falls
    back to the abstract and is flagged in the manifest."""
    import datetime as dt
    import gzip
    import io
    import tarfile

    from arxivroll.arxiv_client import ArxivListingClient
    from arxivroll.cli import ingest_from_api
    from arxivroll.corpus import init_corpus

    listing = (Path(__file__).parent / "data" / "atom_fixture.xml").read_bytes()

    def tar_gz_source(tex: bytes) -> bytes:
        buf = io.BytesIO()
        with tarfile.open(fileobj=buf, mode="w") as tar:
            info = tarfile.TarInfo("main.tex")
            info.size = len(tex)
            tar.addfile(info, io.BytesIO(tex))
        return gzip.compress(buf.getvalue())

    good = tar_gz_source(
        b"\\begin{document}\nBody paragraph one streams along.\n\n"
        b"Body paragraph two has $x$ math.\n\\end{document}\n"
    )

    def transport(url, params):
        if "/e-print/" in url:
            if url.endswith("2404.11111"):
                return good
            return b"%PDF-1.5 not really a source"
        return listing

    client = ArxivListingClient(
        "https://mirror/api/query", source_url_base="https://mirror/e-print",
        transport=transport, clock=lambda: 0.0, sleep=lambda s: None,
    )
    out = tmp_path / "corpus"
    init_corpus(out, "2024b", dt.date(2024, 4, 1), dt.date(2024, 9, 30))
    stored, skipped = ingest_from_api(
        client, ["cs"], (dt.date(2024, 4, 1), dt.date(2024, 9, 30)), out,
        max_per_domain=2,
    )
    assert (stored, skipped) == (2, 0)
    full = json.loads((out / "cs" / "2404.11111.json").read_text())
    assert full["paragraphs"][1] == "Body paragraph two has ⟨MATH⟩ math."
    fallback = json.loads((out / "cs" / "2405.22222.json").read_text())
    assert fallback["paragraphs"][0].startswith("Sparse kernels benefit")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["abstract_only"] == ["2405.22222"]


def test_init_creates_configured_dirs(tmp_path):
    config = tmp_path / "tool.toml"
    config.write_text(
        f'corpus_root = "{tmp_path / "c"}"\nresults_root = "{tmp_path / "r"}"\n'
        f'registry_path = "{tmp_path / "state" / "reg.log"}"\n'
    )
    a = tmp_path / "a.json"
    a.write_text(json.dumps({"m1": 1.0, "m2": 2.0, "m3": 3.0}))
    assert main(["--config", str(config), "--init", "correlate",
                 "--table-a", str(a), "--table-b", str(a)]) == 0
    assert (tmp_path / "c").is_dir()
    assert (tmp_path / "r").is_dir()
    assert (tmp_path / "state").is_dir()


# -- evaluate + registry lifecycle ----------------------------------------------


def test_full_lifecycle_via_cli(tmp_path, capsys):
    bench = _generate(tmp_path, "bench.jsonl")
    header = json.loads(bench.read_text().splitlines()[0])
    registry_log = str(tmp_path / "registry.log")
    model = _mock_toml(tmp_path, "mock://always-correct", "perfect")

    assert main(["registry", "register", "--bench", str(bench),
                 "--registry", registry_log]) == 0
    assert main(["evaluate", "--bench", str(bench), "--model-config", model,
                 "--out", str(tmp_path / "results"), "--registry", registry_log]) == 0
    run = json.loads(
        (tmp_path / "results" / "perfect" / f"{header['benchmark_id']}.json").read_text()
    )
    assert run["accuracy_pct"] == 100.0
    assert run["tags"] == []

    assert main(["registry", "expire", "--id", header["benchmark_id"],
                 "--at", "2025-01-01T00:00:00Z", "--registry", registry_log]) == 0

    # refusal without override
    code = main(["evaluate", "--bench", str(bench), "--model-config", model,
                 "--out", str(tmp_path / "r2"), "--registry", registry_log])
    assert code == 1
    assert "expired" in capsys.readouterr().err

    # override tags the rerun
    assert main(["evaluate", "--bench", str(bench), "--model-config", model,
                 "--out", str(tmp_path / "r3"), "--registry", registry_log,
                 "--allow-expired"]) == 0
    rerun = json.loads(
        (tmp_path / "r3" / "perfect" / f"{header['benchmark_id']}.json").read_text()
    )
    assert rerun["tags"] == ["expired-rerun"]

    assert main(["registry", "list", "--registry", registry_log]) == 0
    assert "expired" in capsys.readouterr().out


def test_evaluate_tampered_bench_fails(tmp_path, capsys):
    bench = _generate(tmp_path, "bench.jsonl")
    registry_log = str(tmp_path / "registry.log")
    model = _mock_toml(tmp_path, "mock://always-correct")
    assert main(["registry", "register", "--bench", str(bench),
                 "--registry", registry_log]) == 0
    bench.write_text(bench.read_text() + "\n")  # any byte change breaks the digest
    code = main(["evaluate", "--bench", str(bench), "--model-config", model,
                 "--out", str(tmp_path / "results"), "--registry", registry_log])
    assert code == 1


# -- rs / correlate / stability ---------------------------------------------------


def test_rs_command(tmp_path):
    pub = _generate(tmp_path, "pub.jsonl", seed=100, size=30)
    priv = _generate(tmp_path, "priv.jsonl", seed=200, size=30)
    priv2 = _generate(tmp_path, "priv2.jsonl", seed=300, size=30, domain="math")
    ids = {}
    for name, path in (("pub", pub), ("priv", priv), ("priv2", priv2)):
        ids[name] = json.loads(path.read_text().splitlines()[0])["benchmark_id"]
    model = _mock_toml(tmp_path, "mock://skill?p=0.5&seed=4", "skilled")
    for path in (pub, priv, priv2):
        assert main(["evaluate", "--bench", str(path), "--model-config", model,
                     "--out", str(tmp_path / "results")]) == 0
    pairs = tmp_path / "pairs.json"
    pairs.write_text(json.dumps({
        "pairs": {"cs": {"public": ids["pub"], "private": ids["priv"]}},
        "unmatched_public": [],
        "unmatched_private": [ids["priv2"]],
    }))
    assert main(["rs", "--pairs", str(pairs), "--results", str(tmp_path / "results"),
                 "--out", str(tmp_path / "rs")]) == 0
    report = json.loads((tmp_path / "rs" / "skilled.json").read_text())
    assert set(report) == {"model_id", "rs1_absolute", "rs1_relative", "rs2", "rs2_normalized"}
    assert -4.0 <= report["rs1_absolute"] <= 4.0
    assert report["rs2"] is not None

    # leaderboard joins the rs report
    out = tmp_path / "board.md"
    assert main(["leaderboard", "--results", str(tmp_path / "results"),
                 "--rs", str(tmp_path / "rs"), "--format", "md", "--out", str(out)]) == 0
    assert "skilled" in out.read_text()


def test_correlate_command(tmp_path, capsys):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps({"m1": 10.0, "m2": 20.0, "m3": 30.0, "m4": 40.0}))
    b.write_text(json.dumps({"m1": 11.0, "m2": 29.0, "m3": 22.0, "m4": 44.0}))
    out = tmp_path / "corr.json"
    assert main(["correlate", "--table-a", str(a), "--table-b", str(b),
                 "--out", str(out)]) == 0
    row = json.loads(out.read_text())
    assert row["spearman"] == pytest.approx(0.8)
    printed = capsys.readouterr().out
    assert "Spear. Corr." in printed


def test_correlate_self_is_perfect(tmp_path):
    a = tmp_path / "a.json"
    a.write_text(json.dumps({"m1": 10.0, "m2": 20.0, "m3": 30.0}))
    out = tmp_path / "corr.json"
    assert main(["correlate", "--table-a", str(a), "--table-b", str(a),
                 "--out", str(out)]) == 0
    row = json.loads(out.read_text())
    assert (row["pearson"], row["spearman"], row["kendall"]) == (1.0, 1.0, 1.0)


def test_correlate_reversed_is_minus_one(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps({"m1": 1.0, "m2": 2.0, "m3": 3.0}))
    b.write_text(json.dumps({"m1": 9.0, "m2": 8.0, "m3": 7.0}))
    out = tmp_path / "corr.json"
    assert main(["correlate", "--table-a", str(a), "--table-b", str(b),
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())["spearman"] == -1.0


def test_correlate_model_mismatch_lists_difference(tmp_path, capsys):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps({"m1": 1.0, "m2": 2.0, "m3": 3.0}))
    b.write_text(json.dumps({"m1": 1.0, "m2": 2.0, "m4": 4.0}))
    assert main(["correlate", "--table-a", str(a), "--table-b", str(b)]) == 1
    err = capsys.readouterr().err
    assert "m3" in err and "m4" in err


def test_stability_command(tmp_path):
    model = _mock_toml(tmp_path, "mock://always-correct", "perfect")
    out = tmp_path / "stability.json"
    assert main(["stability", "--corpus", CORPUS, "--domain", "cs", "--task", "s",
                 "--seeds", "2", "--size", "15", "--model-config", model,
                 "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["accuracies"] == [100.0, 100.0]
    assert report["std"] == 0.0
    assert report["seeds"] == [1, 2]
    # aggregates recompute from the vector
    from arxivroll.metrics import stability as stats_fn

    stats = stats_fn(report["accuracies"])
    assert (report["mean"], report["std"], report["min"], report["max"]) == (
        stats.mean, stats.std, stats.min, stats.max,
    )


def test_correlate_six_model_tables_match_metric_oracles(tmp_path):
    import random

    from arxivroll.metrics import kendall, pearson, spearman

    rng = random.Random(66)
    models = [f"m{i}" for i in range(6)]
    ta = {m: round(rng.uniform(5, 95), 2) for m in models}
    tb = {m: round(rng.uniform(5, 95), 2) for m in models}
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps(ta))
    b.write_text(json.dumps(tb))
    out = tmp_path / "corr.json"
    assert main(["correlate", "--table-a", str(a), "--table-b", str(b),
                 "--out", str(out)]) == 0
    row = json.loads(out.read_text())
    x = [ta[m] for m in sorted(models)]
    y = [tb[m] for m in sorted(models)]
    assert row["pearson"] == pytest.approx(pearson(x, y), abs=1e-12)
    assert row["spearman"] == pytest.approx(spearman(x, y), abs=1e-12)
    assert row["kendall"] == pytest.approx(kendall(x, y), abs=1e-12)


def test_stability_32_seeds_reports_full_vector(tmp_path):
    model = _mock_toml(tmp_path, "mock://skill?p=0.25&seed=6", "quarter")
    out = tmp_path / "stability.json"
    assert main(["stability", "--corpus", CORPUS, "--domain", "math", "--task", "s",
                 "--seeds", "32", "--size", "50", "--model-config", model,
                 "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert len(report["accuracies"]) == 32
    assert report["seeds"] == list(range(1, 33))
    assert report["generator_version"]
    assert report["config_digest"]


def test_stability_rejects_single_seed(tmp_path):
    model = _mock_toml(tmp_path, "mock://always-correct")
    assert main(["stability", "--corpus", CORPUS, "--domain", "cs", "--task", "s",
                 "--seeds", "1", "--size", "10", "--model-config", model]) == 1


# -- end-to-end smoke -------------------------------------------------------------


def test_full_pipeline_smoke(tmp_path):
    """generate (S, C, P) -> evaluate (mock) -> rs -> leaderboard, twice,
    byte-identical leaderboards."""
    model = _mock_toml(tmp_path, "mock://skill?p=0.6&seed=8", "pipeline-mock")
    boards = []
    for attempt in ("one", "two"):
        base = tmp_path / attempt
        base.mkdir()
        ids = {}
        for task in ("s", "c", "p"):
            for side, seed in (("pub", 301), ("priv", 302)):
                path = base / f"{task}-{side}.jsonl"
                assert main([
                    "generate", "--corpus", CORPUS, "--domain", "cs", "--task", task,
                    "--seed", str(seed), "--size", "25", "--period", "2024b",
                    "--out", str(path),
                ]) == 0
                ids[(task, side)] = json.loads(path.read_text().splitlines()[0])["benchmark_id"]
                assert main(["evaluate", "--bench", str(path), "--model-config", model,
                             "--out", str(base / "results")]) == 0
        pairs = base / "pairs.json"
        pairs.write_text(json.dumps({
            "pairs": {
                task: {"public": ids[(task, "pub")], "private": ids[(task, "priv")]}
                for task in ("s", "c", "p")
            }
        }))
        assert main(["rs", "--pairs", str(pairs), "--results", str(base / "results"),
                     "--out", str(base / "rs")]) == 0
        board = base / "leaderboard.md"
        assert main(["leaderboard", "--results", str(base / "results"),
                     "--rs", str(base / "rs"), "--format", "md",
                     "--out", str(board)]) == 0
        boards.append(board.read_bytes())
    assert boards[0] == boards[1]
def test_model_defaults_from_tool_config(tmp_path):
    from arxivroll.harness import ModelConfig

    model = tmp_path / "model.toml"
    model.write_text(
        'model_id = "o"\nendpoint_url = "mock://always-correct"\nmax_new_tokens = 33\n'
    )
    config = ModelConfig.from_toml(
        model, defaults={"max_in_flight": 9, "max_new_tokens": 17}
    )
    assert config.max_in_flight == 9    # tool-config default applies
    assert config.max_new_tokens == 33  # model file wins over defaults
