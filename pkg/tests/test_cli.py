import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from outfitgraph.cli import main, parse_config_file
from outfitgraph.evaluation import read_report

PKG_ROOT = Path(__file__).resolve().parent.parent


def run_cli(argv, env=None):
    """Run the CLI in-process; returns (exit_code, captured prints are live)."""
    return main(argv)


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    code = main(["synth", "--out-dir", str(out), "--n-outfits", "60",
                 "--n-categories", "6", "--items-per-category", "8",
                 "--groups", "2", "--noise", "0.0", "--seed", "3",
                 "--val-fraction", "0.15"])
    assert code == 0
    assert main(["embed-text", "--prepared", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(synth_dir, tmp_path_factory):
    run = tmp_path_factory.mktemp("run")
    code = main(["train", "--prepared", str(synth_dir),
                 "--run-dir", str(run), "--model", "ngnn",
                 "--modality", "visual",
                 "--visual-store", str(synth_dir / "visual.embd"),
                 "--hidden-d", "4", "--max-epochs", "2", "--seed", "3"])
    assert code == 0
    return run


class TestConfigFile:
    def test_parse(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("# comment\nhidden-d = 6\nmodel = hgnn  # inline\n\n")
        assert parse_config_file(path) == {"hidden_d": "6", "model": "hgnn"}

    def test_bad_line(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("just words\n")
        with pytest.raises(ValueError):
            parse_config_file(path)

    def test_flag_beats_config(self, synth_dir, tmp_path):
        conf = tmp_path / "t.conf"
        conf.write_text("max-epochs = 1\nhidden-d = 3\n")
        run = tmp_path / "run"
        code = main(["train", "--prepared", str(synth_dir),
                     "--run-dir", str(run), "--modality", "visual",
                     "--visual-store", str(synth_dir / "visual.embd"),
                     "--config", str(conf), "--hidden-d", "5", "--seed", "3"])
        assert code == 0
        resolved = (run / "config.resolved").read_text()
        assert "hidden_d = 5" in resolved  # flag wins
        assert "max_epochs = 1" in resolved  # config fills the gap


class TestSynthArtifacts:
    def test_layout(self, synth_dir):
        for name in ("items.json", "outfits.json", "split.tsv", "categories.txt",
                     "vocab.txt", "cooccurrence.tsv", "hypergraph.json",
                     "stats.json", "visual.embd", "groups.json", "textual.embd"):
            assert (synth_dir / name).exists(), name

    def test_stats_consistent(self, synth_dir):
        stats = json.loads((synth_dir / "stats.json").read_text())
        splits = (synth_dir / "split.tsv").read_text().strip().split("\n")
        assert stats["outfit_count"] == len(splits)
        assert stats["train"] + stats["validation"] + stats["test"] == len(splits)


class TestTrainCommand:
    def test_run_dir_artifacts(self, trained_dir):
        for name in ("best.ckpt", "last.ckpt", "history.csv", "config.resolved"):
            assert (trained_dir / name).exists(), name

    def test_missing_store_is_usage_error(self, synth_dir, tmp_path):
        code = main(["train", "--prepared", str(synth_dir),
                     "--run-dir", str(tmp_path / "r"), "--modality", "visual",
                     "--max-epochs", "1"])
        assert code == 2

    def test_unknown_model_is_usage_error(self, synth_dir, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--prepared", str(synth_dir),
                  "--run-dir", str(tmp_path / "r"), "--model", "gcn"])
        assert exc.value.code == 2


class TestEvalCommand:
    def test_checkpoint_eval_writes_report(self, synth_dir, trained_dir, tmp_path):
        out = tmp_path / "report.json"
        table = tmp_path / "table.txt"
        code = main(["eval", "--prepared", str(synth_dir),
                     "--checkpoint", str(trained_dir / "best.ckpt"),
                     "--visual-store", str(synth_dir / "visual.embd"),
                     "--out", str(out), "--table", str(table), "--seed", "5"])
        assert code == 0
        report = read_report(out)
        assert report.model_id == "best"
        assert 0.0 <= report.fitb_accuracy <= 1.0
        assert 0.0 <= report.auc <= 1.0
        assert report.n_fitb_questions > 0 and report.n_compat_pairs > 0
        assert "best" in table.read_text()
        # questions/pairs were persisted for reuse
        assert (synth_dir / "eval_fitb_5.json").exists()
        assert (synth_dir / "eval_pairs_5.json").exists()

    def test_random_baseline(self, synth_dir, tmp_path):
        out = tmp_path / "random.json"
        code = main(["eval", "--prepared", str(synth_dir), "--random-baseline",
                     "--out", str(out), "--seed", "5"])
        assert code == 0
        report = read_report(out)
        assert report.model_id == "random"

    def test_threads_give_identical_report(self, synth_dir, trained_dir, tmp_path):
        env_backup = os.environ.get("SOURCE_DATE_EPOCH")
        os.environ["SOURCE_DATE_EPOCH"] = "0"
        try:
            outs = []
            for tag, threads in (("a", "1"), ("b", "3")):
                out = tmp_path / f"{tag}.json"
                code = main(["eval", "--prepared", str(synth_dir),
                             "--checkpoint", str(trained_dir / "best.ckpt"),
                             "--visual-store", str(synth_dir / "visual.embd"),
                             "--out", str(out), "--seed", "5",
                             "--threads", threads])
                assert code == 0
                outs.append(out.read_bytes())
            assert outs[0] == outs[1]
        finally:
            if env_backup is None:
                del os.environ["SOURCE_DATE_EPOCH"]
            else:
                os.environ["SOURCE_DATE_EPOCH"] = env_backup

    def test_no_scorer_is_usage_error(self, synth_dir):
        assert main(["eval", "--prepared", str(synth_dir)]) == 2

    def test_store_dim_mismatch_is_io_error(self, synth_dir, trained_dir, tmp_path):
        code = main(["eval", "--prepared", str(synth_dir),
                     "--checkpoint", str(trained_dir / "best.ckpt"),
                     "--visual-store", str(synth_dir / "textual.embd")])
        assert code == 1  # FormatError -> I/O-class failure


class TestScoreCommand:
    def test_scores_known_items(self, synth_dir, trained_dir, capsys):
        items = json.loads((synth_dir / "items.json").read_text())
        ids = [entry["item_id"] for entry in items[:3]]
        code = main(["score", "--prepared", str(synth_dir),
                     "--checkpoint", str(trained_dir / "best.ckpt"),
                     "--visual-store", str(synth_dir / "visual.embd"), *ids])
        assert code == 0
        value = float(capsys.readouterr().out.strip())
        assert 0.0 < value < 1.0

    def test_unknown_item_is_lookup_error(self, synth_dir, trained_dir):
        code = main(["score", "--prepared", str(synth_dir),
                     "--checkpoint", str(trained_dir / "best.ckpt"),
                     "--visual-store", str(synth_dir / "visual.embd"),
                     "ghost_item"])
        assert code == 4


class TestGradcheckCommand:
    def test_passes_by_default(self, capsys):
        assert main(["gradcheck", "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 6 and "FAIL" not in out

    def test_negative_control_fails(self, capsys):
        env = dict(os.environ, COMPAT_GRAPH_BREAK_GRAD="1")
        proc = subprocess.run(
            [sys.executable, "-m", "outfitgraph.cli", "gradcheck", "--seed", "0"],
            capture_output=True, text=True, env=env,
            cwd=str(PKG_ROOT),
        )
        assert proc.returncode == 5
        assert "FAIL" in proc.stdout
        assert "error" in proc.stderr.lower() or "FAILED" in proc.stderr


class TestMissingInputs:
    def test_prepare_missing_dir_is_io_error(self, tmp_path):
        code = main(["prepare", "--data-dir", str(tmp_path / "nope"),
                     "--out-dir", str(tmp_path / "out")])
        assert code == 1

    def test_eval_missing_prepared_is_io_error(self, tmp_path):
        code = main(["eval", "--prepared", str(tmp_path / "nope"),
                     "--random-baseline"])
        assert code == 1


class TestPrepareCommand:
    def make_raw(self, tmp_path):
        data = tmp_path / "raw"
        data.mkdir()
        entries = []
        for k in range(12):
            entries.append({
                "set_id": str(k),
                "items": [
                    {"index": i + 1, "name": f"piece {c}", "categoryid": c}
                    for i, c in enumerate([1, 2, 3, 4])
                ],
            })
        (data / "outfits.json").write_text(json.dumps(entries))
        return data

    def test_single_file_flow(self, tmp_path, capsys):
        data = self.make_raw(tmp_path)
        out = tmp_path / "prepared"
        code = main(["prepare", "--data-dir", str(data), "--out-dir", str(out),
                     "--min-category-count", "1", "--min-word-freq", "1"])
        assert code == 0
        stats = json.loads(capsys.readouterr().out)
        assert stats["outfit_count"] == 12
        assert (out / "split.tsv").exists()
