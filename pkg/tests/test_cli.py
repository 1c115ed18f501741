"""End-to-end runs of the command-line interface via dispatch()."""

import json

import pytest

from mockserver import MockEndpoint, last_user_content, length_judge
from ragwb.cli import WorkbenchConfig, dispatch
from ragwb.errors import UserInputError
from ragwb.qa import QaPair, save_pairs
from ragwb.judge import load_records


def run_cli(capsys, *argv):
    code = dispatch(list(argv))
    captured = capsys.readouterr()
    return code, captured.out


def write_registry(path, entries):
    path.write_text(json.dumps(entries), encoding="utf-8")
    return str(path)


class TestParsing:
    def test_help_exits_zero(self, capsys):
        code, out = run_cli(capsys, "--help")
        assert code == 0
        assert "ingest" in out

    def test_version_exits_zero(self, capsys):
        code, out = run_cli(capsys, "--version")
        assert code == 0
        assert "ragwb" in out

    def test_unknown_subcommand(self, capsys):
        code, _ = run_cli(capsys, "frobnicate")
        assert code == 1

    def test_missing_required_flag(self, capsys):
        code, _ = run_cli(capsys, "index", "query", "--text", "x")
        assert code == 1


class TestConfig:
    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text('{"thresold": 0.2}', encoding="utf-8")
        with pytest.raises(UserInputError, match="thresold"):
            WorkbenchConfig.load(p)

    def test_missing_paths_rejected(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text('{"corpus": "/no/such/file.json"}', encoding="utf-8")
        with pytest.raises(UserInputError, match="does not exist"):
            WorkbenchConfig.load(p)

    def test_bad_log_level_rejected(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text('{"log_level": "LOUD"}', encoding="utf-8")
        with pytest.raises(UserInputError, match="LOUD"):
            WorkbenchConfig.load(p)

    def test_config_supplies_corpus(self, capsys, tmp_path, corpus50_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"corpus": str(corpus50_path)}), encoding="utf-8")
        code, out = run_cli(capsys, "--config", str(p), "stats", "--format", "json")
        assert code == 0
        assert json.loads(out)["total_records"] == 50

    def test_config_file_errors_exit_one(self, capsys, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text('{"bogus_key": 1}', encoding="utf-8")
        code, _ = run_cli(capsys, "--config", str(p), "stats", "--format", "json")
        assert code == 1
        code, _ = run_cli(capsys, "--config", str(tmp_path / "missing.json"), "stats")
        assert code == 1


class TestStatsAndIngest:
    def test_stats_json_fixture_values(self, capsys, corpus50_path):
        code, out = run_cli(
            capsys, "stats", "--corpus", str(corpus50_path), "--format", "json"
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["total_records"] == 50
        assert payload["extracted_texts"] == 44
        assert payload["most_frequent_program"] == [
            "Ingeniería de Sistemas y Computación",
            18,
        ]
        assert payload["most_frequent_advisor"] == ["García López, María", 9]
        assert payload["most_frequent_year"] == ["2014", 13]

    def test_stats_table(self, capsys, corpus50_path):
        code, out = run_cli(capsys, "stats", "--corpus", str(corpus50_path))
        assert code == 0
        assert "Total records" in out
        assert "50" in out
        assert "García López, María (9 records)" in out

    def test_stats_missing_corpus(self, capsys, tmp_path):
        code, _ = run_cli(capsys, "stats", "--corpus", str(tmp_path / "no.json"))
        assert code == 1

    def test_stats_without_any_corpus(self, capsys):
        code, _ = run_cli(capsys, "stats")
        assert code == 1

    def test_ingest_counts_and_ledger(self, capsys, tmp_path, corpus50_path):
        ledger_path = tmp_path / "ledger.tsv"
        code, out = run_cli(
            capsys,
            "ingest",
            "--corpus",
            str(corpus50_path),
            "--ledger",
            str(ledger_path),
        )
        assert code == 0
        assert "records 50" in out
        assert "processed 44" in out
        assert "failed 6" in out
        lines = ledger_path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 50
        statuses = [line.split("\t")[1] for line in lines]
        assert statuses.count("processed") == 44
        assert statuses.count("failed") == 6


class TestQaCommands:
    def test_fragment_writes_file(self, capsys, tmp_path, corpus50_path):
        out_file = tmp_path / "fragments.json"
        code, out = run_cli(
            capsys,
            "qa",
            "fragment",
            "--corpus",
            str(corpus50_path),
            "--out",
            str(out_file),
            "--max-chars",
            "300",
        )
        assert code == 0
        fragments = json.loads(out_file.read_text(encoding="utf-8"))
        assert fragments
        assert all(len(f["text"]) <= 300 for f in fragments)
        assert f"fragments {len(fragments)}" in out

    def test_fragment_rejects_tiny_bound(self, capsys, tmp_path, corpus50_path):
        code, _ = run_cli(
            capsys,
            "qa",
            "fragment",
            "--corpus",
            str(corpus50_path),
            "--out",
            str(tmp_path / "f.json"),
            "--max-chars",
            "10",
        )
        assert code == 1

    def test_generate_through_endpoint(self, capsys, tmp_path):
        fragments = tmp_path / "fragments.json"
        fragments.write_text(
            json.dumps(
                [{"source_uri": "u1", "ordinal": 0, "text": "el grano de cafe"}]
            ),
            encoding="utf-8",
        )

        def reply(body):
            return "Q: ¿De qué trata?\tA: Del grano de cafe."

        with MockEndpoint(reply=reply) as ep:
            registry = write_registry(
                tmp_path / "registry.json",
                [{"name": "gen", "base_url": ep.base_url, "model_id": "m"}],
            )
            out_file = tmp_path / "pairs.json"
            code, out = run_cli(
                capsys,
                "qa",
                "generate",
                "--fragments",
                str(fragments),
                "--generator",
                "gen",
                "--registry",
                registry,
                "--out",
                str(out_file),
            )
        assert code == 0
        assert "pairs 1" in out
        pairs = json.loads(out_file.read_text(encoding="utf-8"))
        assert pairs[0]["prompt"] == "¿De qué trata?"

    def test_generate_unknown_variant(self, capsys, tmp_path):
        fragments = tmp_path / "fragments.json"
        fragments.write_text("[]", encoding="utf-8")
        registry = write_registry(tmp_path / "registry.json", [])
        code, _ = run_cli(
            capsys,
            "qa",
            "generate",
            "--fragments",
            str(fragments),
            "--generator",
            "nope",
            "--registry",
            registry,
            "--out",
            str(tmp_path / "p.json"),
        )
        assert code == 1

    def make_pairs(self, tmp_path, n=20):
        pairs = [
            QaPair(prompt=f"pregunta {i}", completion=f"respuesta {i}", fragment="")
            for i in range(n)
        ]
        p = tmp_path / "pairs.json"
        save_pairs(pairs, p)
        return p

    def test_split_writes_files_and_honors_seed_flag(self, capsys, tmp_path):
        pairs = self.make_pairs(tmp_path)
        out_dir = tmp_path / "split"
        code, out = run_cli(
            capsys,
            "--seed",
            "7",
            "qa",
            "split",
            "--pairs",
            str(pairs),
            "--out",
            str(out_dir),
        )
        assert code == 0
        assert "train 15" in out and "test 5" in out
        meta = json.loads((out_dir / "split.meta.json").read_text(encoding="utf-8"))
        assert meta["seed"] == 7
        assert meta["train_pairs"] == 15
        train = json.loads((out_dir / "train.json").read_text(encoding="utf-8"))
        test = json.loads((out_dir / "test.json").read_text(encoding="utf-8"))
        assert len(train) == 15 and len(test) == 5

    def test_split_ratio_flag(self, capsys, tmp_path):
        pairs = self.make_pairs(tmp_path)
        out_dir = tmp_path / "split"
        code, out = run_cli(
            capsys,
            "qa",
            "split",
            "--pairs",
            str(pairs),
            "--out",
            str(out_dir),
            "--ratio",
            "0.5",
        )
        assert code == 0
        assert "train 10" in out

    def test_qa_stats_json(self, capsys, tmp_path):
        pairs = self.make_pairs(tmp_path, n=3)
        code, out = run_cli(
            capsys, "qa", "stats", "--pairs", str(pairs), "--format", "json"
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["pairs"] == 3


class TestIndexCommands:
    def build(self, capsys, tmp_path, corpus_path, *extra):
        index_dir = tmp_path / "index"
        code, out = run_cli(
            capsys,
            "index",
            "build",
            "--corpus",
            str(corpus_path),
            "--out",
            str(index_dir),
            *extra,
        )
        return code, out, index_dir

    def test_build_and_query(self, capsys, tmp_path, corpus5_path):
        code, out, index_dir = self.build(capsys, tmp_path, corpus5_path)
        assert code == 0
        assert "documents 5" in out
        assert (index_dir / "index.npy").exists()
        assert (index_dir / "index.meta.json").exists()

        code, out = run_cli(
            capsys,
            "index",
            "query",
            "--dir",
            str(index_dir),
            "--text",
            "café colombiano",
            "--top",
            "2",
            "--format",
            "json",
        )
        assert code == 0
        results = json.loads(out)
        assert len(results) <= 2
        assert results[0]["uri"].endswith("/cafe")
        assert results[0]["score"] > 0

    def test_query_table_format(self, capsys, tmp_path, corpus5_path):
        _, _, index_dir = self.build(capsys, tmp_path, corpus5_path)
        code, out = run_cli(
            capsys,
            "index",
            "query",
            "--dir",
            str(index_dir),
            "--text",
            "café",
            "--top",
            "1",
        )
        assert code == 0
        line = out.splitlines()[0]
        score, uri = line.split("\t")
        assert float(score) > 0
        assert uri.startswith("https://")

    def test_build_skips_empty_texts(self, capsys, tmp_path, corpus50_path):
        code, out, _ = self.build(capsys, tmp_path, corpus50_path)
        assert code == 0
        assert "documents 44" in out

    def test_stopwords_flag(self, capsys, tmp_path, corpus5_path):
        stop = tmp_path / "stop.txt"
        stop.write_text("café\nde\n", encoding="utf-8")
        code, out, index_dir = self.build(
            capsys, tmp_path, corpus5_path, "--stopwords", str(stop)
        )
        assert code == 0
        meta = json.loads((index_dir / "index.meta.json").read_text(encoding="utf-8"))
        assert "café" not in meta["terms"]

    def test_query_missing_dir(self, capsys, tmp_path):
        code, _ = run_cli(
            capsys, "index", "query", "--dir", str(tmp_path / "no"), "--text", "x"
        )
        assert code == 1


class TestRagQuery:
    @pytest.fixture()
    def index_dir(self, capsys, tmp_path, corpus5_path):
        index_dir = tmp_path / "index"
        code, _ = run_cli(
            capsys,
            "index",
            "build",
            "--corpus",
            str(corpus5_path),
            "--out",
            str(index_dir),
        )
        assert code == 0
        return index_dir

    def test_dry_run_payload(self, capsys, tmp_path, corpus5_path, index_dir):
        code, out = run_cli(
            capsys,
            "rag",
            "query",
            "--index",
            str(index_dir),
            "--corpus",
            str(corpus5_path),
            "--text",
            "café colombiano",
            "--threshold",
            "0.0",
            "--limit",
            "2",
            "--dry-run",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["query"] == "café colombiano"
        assert payload["hits"]
        assert payload["hits"][0]["uri"].endswith("/cafe")
        assert "Keep in mind this context:" in payload["prompt"]
        assert payload["prompt"].startswith("café colombiano\n")

    def test_model_path_through_endpoint(self, capsys, tmp_path, corpus5_path, index_dir):
        def reply(body):
            assert "Keep in mind this context:" in last_user_content(body)
            return "El café es importante."

        with MockEndpoint(reply=reply) as ep:
            registry = write_registry(
                tmp_path / "registry.json",
                [{"name": "m1", "base_url": ep.base_url, "model_id": "m"}],
            )
            code, out = run_cli(
                capsys,
                "rag",
                "query",
                "--index",
                str(index_dir),
                "--corpus",
                str(corpus5_path),
                "--text",
                "café colombiano",
                "--threshold",
                "0.0",
                "--model",
                "m1",
                "--registry",
                registry,
            )
        assert code == 0
        payload = json.loads(out)
        assert payload["answer"] == "El café es importante."
        assert payload["model"] == "m1"

    def test_endpoint_down_exits_two(self, capsys, tmp_path, corpus5_path, index_dir):
        registry = write_registry(
            tmp_path / "registry.json",
            [{"name": "m1", "base_url": "http://127.0.0.1:9", "model_id": "m"}],
        )
        code, _ = run_cli(
            capsys,
            "rag",
            "query",
            "--index",
            str(index_dir),
            "--corpus",
            str(corpus5_path),
            "--text",
            "café",
            "--model",
            "m1",
            "--registry",
            registry,
        )
        assert code == 2

    def test_missing_index_exits_one(self, capsys, tmp_path, corpus5_path):
        code, _ = run_cli(
            capsys,
            "rag",
            "query",
            "--corpus",
            str(corpus5_path),
            "--text",
            "café",
            "--dry-run",
        )
        assert code == 1

    def test_missing_model_without_dry_run(self, capsys, tmp_path, corpus5_path, index_dir):
        code, _ = run_cli(
            capsys,
            "rag",
            "query",
            "--index",
            str(index_dir),
            "--corpus",
            str(corpus5_path),
            "--text",
            "café",
        )
        assert code == 1


class TestBench:
    def setup_run(self, tmp_path, ep):
        questions = tmp_path / "questions.json"
        questions.write_text(
            json.dumps(
                [
                    {"id": "q1", "text": "¿Sobre el café?"},
                    {"id": "q2", "text": "¿Sobre los puentes?"},
                ]
            ),
            encoding="utf-8",
        )
        registry = write_registry(
            tmp_path / "registry.json",
            [
                {"name": "corto", "base_url": ep.base_url, "model_id": "m-corto"},
                {"name": "medio", "base_url": ep.base_url, "model_id": "m-medio"},
                {"name": "largo", "base_url": ep.base_url, "model_id": "m-largo"},
                {"name": "judge", "base_url": ep.base_url, "model_id": "m-judge"},
            ],
        )
        return questions, registry

    @staticmethod
    def reply(body):
        model = body.get("model", "")
        if model == "m-judge":
            return length_judge(body)
        sizes = {"m-corto": 1, "m-medio": 2, "m-largo": 3}
        return "palabra " * sizes.get(model, 1)

    def test_run_report_cycle(self, capsys, tmp_path):
        out_dir = tmp_path / "report"
        with MockEndpoint(reply=self.reply) as ep:
            questions, registry = self.setup_run(tmp_path, ep)
            code, out = run_cli(
                capsys,
                "bench",
                "run",
                "--questions",
                str(questions),
                "--registry",
                registry,
                "--judge",
                "judge",
                "--out",
                str(out_dir),
            )
        assert code == 0
        assert out.splitlines()[0].startswith("Variant")
        # longer answers always win under the length judge
        board = json.loads((out_dir / "leaderboard.json").read_text(encoding="utf-8"))
        assert [r["variant"] for r in board["rows"]] == ["largo", "medio", "corto"]
        assert board["rows"][0]["avg_position"] == 1.0
        assert board["rows"][0]["first_places"] == 2

        run = load_records(out_dir / "records.json")
        assert [r.question_id for r in run.records] == ["q1", "q2"]

        before = (out_dir / "leaderboard.csv").read_bytes()
        code, out = run_cli(capsys, "bench", "report", "--dir", str(out_dir))
        assert code == 0
        assert out.splitlines()[0].startswith("Variant")
        assert (out_dir / "leaderboard.csv").read_bytes() == before

    def test_unknown_judge(self, capsys, tmp_path):
        with MockEndpoint(reply=self.reply) as ep:
            questions, registry = self.setup_run(tmp_path, ep)
            code, _ = run_cli(
                capsys,
                "bench",
                "run",
                "--questions",
                str(questions),
                "--registry",
                registry,
                "--judge",
                "nadie",
                "--out",
                str(tmp_path / "r"),
            )
        assert code == 1

    def test_endpoints_down_exit_two(self, capsys, tmp_path):
        questions = tmp_path / "questions.json"
        questions.write_text(
            json.dumps([{"id": "q1", "text": "¿?"}]), encoding="utf-8"
        )
        registry = write_registry(
            tmp_path / "registry.json",
            [
                {"name": "a", "base_url": "http://127.0.0.1:9", "model_id": "m"},
                {"name": "judge", "base_url": "http://127.0.0.1:9", "model_id": "j"},
            ],
        )
        code, _ = run_cli(
            capsys,
            "bench",
            "run",
            "--questions",
            str(questions),
            "--registry",
            registry,
            "--judge",
            "judge",
            "--out",
            str(tmp_path / "r"),
        )
        assert code == 2

    def test_report_missing_records(self, capsys, tmp_path):
        code, _ = run_cli(capsys, "bench", "report", "--dir", str(tmp_path))
        assert code == 1
