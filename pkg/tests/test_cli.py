import json
from pathlib import Path

import pytest

from tablescout.cli import run


def invoke(*argv):
    return run([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """A small synth corpus taken through synth -> mine -> train -> the rest."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    config = root / "config.json"
    config.write_text(
        json.dumps(
            {
                "word_dim": 12,
                "char_dim": 6,
                "use_char": False,
                "question_encoder": "bow",
                "column_intermediate_dim": 16,
                "mlp_hidden_dims": [16, 12],
                "out_dim": 12,
                "question_mlp_dims": [16, 12],
                "word_lstm_dim": 12,
                "margin": 0.5,
                "learning_rate": 0.001,
                "batch_size": 32,
                "max_epochs": 3,
                "eval_every": 5,
                "seed": 2,
            }
        )
    )
    assert invoke(
        "synth", "--out-dir", corpus, "--seed", 2, "--tables", 10,
        "--train-tables", 7, "--questions-per-table", 4, "--word-dim", 12,
    ) == 0
    tuples = root / "tuples.jsonl"
    assert invoke(
        "mine", "--tables", corpus / "tables.train.jsonl",
        "--questions", corpus / "questions.train.jsonl",
        "--embeddings", corpus / "embeddings.txt", "--dim", 12,
        "--strategy", "both", "--seed", 2, "--out", tuples,
    ) == 0
    ckpt = root / "model.ckpt"
    report = root / "train_report.json"
    assert invoke(
        "train", "--tables", corpus / "tables.train.jsonl",
        "--questions", corpus / "questions.train.jsonl",
        "--dev-tables", corpus / "tables.dev.jsonl",
        "--dev-questions", corpus / "questions.dev.jsonl",
        "--embeddings", corpus / "embeddings.txt", "--tuples", tuples,
        "--config", config, "--checkpoint-out", ckpt, "--report-out", report,
    ) == 0
    return root, corpus, config, tuples, ckpt, report


class TestPipeline:
    def test_artifacts_and_manifests_exist(self, pipeline):
        root, corpus, config, tuples, ckpt, report = pipeline
        for artifact in (tuples, ckpt, report, corpus / "tables.train.jsonl"):
            assert artifact.exists()
            manifest = Path(str(artifact) + ".manifest.json")
            assert manifest.exists()
            obj = json.loads(manifest.read_text())
            assert obj["artifact"]["sha256"]
            assert obj["tool_version"]

    def test_eval_and_bm25(self, pipeline):
        root, corpus, config, tuples, ckpt, report = pipeline
        out = root / "eval.json"
        assert invoke(
            "eval", "--checkpoint", ckpt, "--tables", corpus / "tables.dev.jsonl",
            "--questions", corpus / "questions.dev.jsonl",
            "--embeddings", corpus / "embeddings.txt", "--split", "dev",
            "--ks", "1,3", "--out", out,
        ) == 0
        obj = json.loads(out.read_text())
        assert set(obj["p_at_k"]) == {"1", "3"}
        assert obj["split"] == "dev"

        bm25_out = root / "bm25.json"
        assert invoke(
            "bm25-eval", "--tables", corpus / "tables.dev.jsonl",
            "--questions", corpus / "questions.dev.jsonl", "--split", "dev",
            "--ks", "1,3", "--out", bm25_out,
        ) == 0
        assert json.loads(bm25_out.read_text())["checkpoint_fingerprint"] == ""

    def test_encode_and_search(self, pipeline, capsys):
        root, corpus, config, tuples, ckpt, report = pipeline
        vec = root / "dev.vec"
        assert invoke(
            "encode-tables", "--checkpoint", ckpt, "--tables", corpus / "tables.dev.jsonl",
            "--embeddings", corpus / "embeddings.txt", "--out", vec,
        ) == 0
        capsys.readouterr()
        assert invoke(
            "search", "--checkpoint", ckpt, "--vectors", vec,
            "--embeddings", corpus / "embeddings.txt",
            "--query", "what is the value", "-k", 2,
        ) == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("{")]
        assert len(lines) == 2
        hit = json.loads(lines[0])
        assert set(hit) == {"id", "distance"}

    def test_mine_idempotent_modulo_wall_time(self, pipeline):
        root, corpus, config, tuples, ckpt, report = pipeline
        again = root / "tuples2.jsonl"
        assert invoke(
            "mine", "--tables", corpus / "tables.train.jsonl",
            "--questions", corpus / "questions.train.jsonl",
            "--embeddings", corpus / "embeddings.txt", "--dim", 12,
            "--strategy", "both", "--seed", 2, "--out", again,
        ) == 0
        assert again.read_bytes() == tuples.read_bytes()
        m1 = json.loads(Path(str(tuples) + ".manifest.json").read_text())
        m2 = json.loads(Path(str(again) + ".manifest.json").read_text())
        m1["artifact"].pop("path"), m2["artifact"].pop("path")
        m1.pop("wall_time_s"), m2.pop("wall_time_s")
        assert m1 == m2

    def test_prep_round_trip(self, pipeline):
        root, corpus, config, tuples, ckpt, report = pipeline
        out_dir = root / "prepped"
        assert invoke(
            "prep", "--tables", corpus / "tables.dev.jsonl",
            "--questions", corpus / "questions.dev.jsonl",
            "--split", "dev", "--out-dir", out_dir,
        ) == 0
        assert (out_dir / "tables.dev.jsonl").read_bytes() == (corpus / "tables.dev.jsonl").read_bytes()


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "tablescout", "--version"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("tablescout ")


class TestGradcheckCommand:
    def test_custom_config_passes(self, tmp_path, capsys):
        config = tmp_path / "tiny.json"
        config.write_text(
            json.dumps(
                {
                    "word_dim": 8, "char_dim": 6, "use_char": False,
                    "question_encoder": "bow", "column_intermediate_dim": 10,
                    "mlp_hidden_dims": [12, 8], "out_dim": 8,
                    "question_mlp_dims": [12, 8], "word_lstm_dim": 8, "margin": 3.0,
                }
            )
        )
        assert invoke("gradcheck", "--config", config, "--seed", 7) == 0
        out = capsys.readouterr().out
        assert "max relative error" in out


class TestExitCodes:
    def test_unknown_flag_is_2(self):
        assert invoke("eval", "--nonsense") == 2

    def test_hard_mining_without_embeddings_is_1(self, pipeline, capsys):
        root, corpus, *_ = pipeline
        code = invoke(
            "mine", "--tables", corpus / "tables.train.jsonl",
            "--questions", corpus / "questions.train.jsonl",
            "--strategy", "hard", "--out", root / "nope.jsonl",
        )
        assert code == 1
        assert "--embeddings" in capsys.readouterr().err

    def test_random_mining_needs_no_embeddings(self, pipeline):
        root, corpus, *_ = pipeline
        out = root / "random_tuples.jsonl"
        assert invoke(
            "mine", "--tables", corpus / "tables.train.jsonl",
            "--questions", corpus / "questions.train.jsonl",
            "--strategy", "random", "--seed", 2, "--out", out,
        ) == 0
        assert out.exists()

    def test_unknown_subcommand_is_2(self):
        assert invoke("frobnicate") == 2

    def test_validation_failure_is_1(self, tmp_path, capsys):
        missing = tmp_path / "missing.jsonl"
        code = invoke(
            "bm25-eval", "--tables", missing, "--questions", missing,
            "--split", "dev", "--out", tmp_path / "r.json",
        )
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error: corpus:")

    def test_bad_ks_is_1(self, tmp_path, pipeline, capsys):
        root, corpus, config, tuples, ckpt, report = pipeline
        code = invoke(
            "eval", "--checkpoint", ckpt, "--tables", corpus / "tables.dev.jsonl",
            "--questions", corpus / "questions.dev.jsonl",
            "--embeddings", corpus / "embeddings.txt",
            "--ks", "1,zap", "--out", tmp_path / "r.json",
        )
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")
