import csv
import json

import pytest

from varcontext.cli import main
from varcontext.data import load_annotations
from varcontext.evaluation import corpus_bleu, reference_sets
from varcontext.training import CHECKPOINT_NAME, load_checkpoint

TINY_RUN = """\
[model]
embedding_dim = 4
lstm_hidden = 3
decoder_hidden = 4
gen_min_count = 1
visual_dim = 11
[train]
iterations = 4
log_every = 2
show_progress = false
[synth]
train_scenes = 6
test_scenes = 3
object_count = 3, 4
visual_dim = 11
[run]
seed = 4
"""


def _rows(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """A tiny config and a synthesized annotation file."""
    monkeypatch.delenv("VC_SEED", raising=False)
    config = tmp_path / "tiny.cfg"
    config.write_text(TINY_RUN, encoding="utf-8")
    data = tmp_path / "world.json"
    assert main(["synth", "--config", str(config), "--out", str(data)]) == 0
    return tmp_path, config, data


class TestWorkflow:
    """synth, train, eval, generate and compare through `main`."""

    def test_synth_writes_features(self, workspace):
        tmp_path, _, data = workspace
        document = json.loads(data.read_text(encoding="utf-8"))
        assert set(document) == {"images", "expressions", "splits"}
        assert (tmp_path / "world.features.bin").exists()
        assert (tmp_path / "world.features.index.json").exists()

    def test_train_then_eval(self, workspace, capsys):
        tmp_path, config, data = workspace
        run = tmp_path / "vc"
        assert main(["train", "--config", str(config), "--data", str(data), "--out", str(run)]) == 0
        checkpoint = load_checkpoint(run / CHECKPOINT_NAME)
        assert checkpoint.iteration == 4
        assert checkpoint.metadata["seed"] == 4

        report = tmp_path / "report"
        assert main(["eval", "--checkpoint", str(run / CHECKPOINT_NAME), "--data", str(data),
                     "--out", str(report), "--html", "--workers", "2"]) == 0
        assert "Accuracy on test" in capsys.readouterr().out
        for name in ("eval.csv", "grounding.csv", "context.csv", "attention.csv", "summary.html"):
            assert (report / name).exists(), name
        assert _rows(report / "eval.csv")[0][0] == "split"

    def test_generation_training_and_bleu(self, workspace):
        tmp_path, config, data = workspace
        run = tmp_path / "gen"
        assert main(["train", "--config", str(config), "--data", str(data), "--out", str(run), "--with-gen-pg"]) == 0
        out = tmp_path / "generated"
        assert main(["generate", "--checkpoint", str(run / CHECKPOINT_NAME), "--data", str(data),
                     "--out", str(out)]) == 0
        rows = _rows(out / "generation.csv")
        assert len(rows) > 1
        assert all(row[3] for row in rows[1:])
        bleu = _rows(out / "generation_bleu.csv")
        assert bleu[0] == ["split", "count", "bleu1", "bleu2"]

        dataset = load_annotations(data, visual_dim=11)
        references = reference_sets(dataset)
        expressions = [dataset.expression(int(row[0])) for row in rows[1:]]
        candidates = [row[2].split() for row in rows[1:]]
        refs = [references[(e.scene_id, e.referent_index)] for e in expressions]
        assert int(bleu[1][1]) == len(candidates)
        assert float(bleu[1][2]) == pytest.approx(corpus_bleu(candidates, refs, 1), abs=1e-6)
        assert float(bleu[1][3]) == pytest.approx(corpus_bleu(candidates, refs, 2), abs=1e-6)

    def test_eval_reports_bleu_with_decoder(self, workspace, capsys):
        tmp_path, config, data = workspace
        run = tmp_path / "gen"
        assert main(["train", "--config", str(config), "--data", str(data), "--out", str(run), "--with-gen"]) == 0
        capsys.readouterr()
        assert main(["eval", "--checkpoint", str(run / CHECKPOINT_NAME), "--data", str(data),
                     "--out", str(tmp_path / "report")]) == 0
        assert "BLEU-1" in capsys.readouterr().out

    def test_self_check_scores_one(self, workspace):
        tmp_path, _, data = workspace
        out = tmp_path / "self"
        assert main(["generate", "--self-check", "--data", str(data), "--out", str(out)]) == 0
        _, (split, count, bleu1, bleu2) = _rows(out / "generation_bleu.csv")
        assert split == "test" and int(count) > 0
        assert float(bleu1) == pytest.approx(1.0)
        assert float(bleu2) == pytest.approx(1.0)

    def test_generate_needs_decoder(self, workspace):
        tmp_path, config, data = workspace
        run = tmp_path / "plain"
        assert main(["train", "--config", str(config), "--data", str(data), "--out", str(run)]) == 0
        assert main(["generate", "--checkpoint", str(run / CHECKPOINT_NAME), "--data", str(data),
                     "--out", str(tmp_path / "g")]) == 1

    def test_compare_heads(self, workspace):
        tmp_path, config, data = workspace
        paths = []
        for head in ("vc", "maxpool"):
            run = tmp_path / head
            assert main(["train", "--config", str(config), "--data", str(data), "--out", str(run),
                         "--head", head]) == 0
            paths += ["--checkpoint", str(run / CHECKPOINT_NAME)]
        out = tmp_path / "cmp"
        assert main(["compare", *paths, "--data", str(data), "--out", str(out)]) == 0
        rows = _rows(out / "comparison.csv")
        assert [row[:2] for row in rows[1:]] == [["vc", "1-2"], ["vc", "3-5"], ["vc", "6+"],
                                                 ["maxpool", "1-2"], ["maxpool", "3-5"], ["maxpool", "6+"]]

    def test_resume_continues_iterations(self, workspace):
        tmp_path, config, data = workspace
        run = tmp_path / "vc"
        assert main(["train", "--config", str(config), "--data", str(data), "--out", str(run),
                     "--iterations", "2"]) == 0
        assert main(["train", "--config", str(config), "--data", str(data), "--out", str(run),
                     "--resume", str(run / CHECKPOINT_NAME)]) == 0
        assert load_checkpoint(run / CHECKPOINT_NAME).iteration == 4


class TestExitCodes:

    def test_oracle_passes(self, capsys):
        assert main(["oracle", "mil"]) == 0
        assert capsys.readouterr().out.startswith("mil: PASS")

    def test_unknown_suite(self):
        assert main(["oracle", "bogus"]) == 1

    def test_bad_flag(self):
        assert main(["train", "--bogus"]) == 1

    def test_missing_command(self):
        assert main([]) == 1

    def test_missing_data_file(self, tmp_path, monkeypatch):
        monkeypatch.delenv("VC_SEED", raising=False)
        assert main(["train", "--data", str(tmp_path / "absent.json"), "--out", str(tmp_path / "run")]) == 2

    def test_invalid_annotations(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv("VC_SEED", raising=False)
        data = tmp_path / "bad.json"
        data.write_text(json.dumps({"images": [], "expressions": [{"id": 0, "image_id": 5, "tokens": ["a"]}]}),
                        encoding="utf-8")
        assert main(["train", "--data", str(data), "--out", str(tmp_path / "run")]) == 1
        assert "unknown image 5" in capsys.readouterr().err

    def test_region_without_box(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv("VC_SEED", raising=False)
        data = tmp_path / "nobox.json"
        data.write_text(json.dumps({"images": [{"id": 1, "width": 10, "height": 10, "regions": [{"id": 3}]}],
                                    "expressions": [{"id": 0, "image_id": 1, "tokens": ["a"],
                                                     "referent_region_id": 3}]}), encoding="utf-8")
        assert main(["train", "--data", str(data), "--out", str(tmp_path / "run")]) == 1
        assert "region 3: bbox must be four numeric coordinates" in capsys.readouterr().err

    def test_config_error_lists_lines(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv("VC_SEED", raising=False)
        config = tmp_path / "bad.cfg"
        config.write_text("[train]\nnonsense\n", encoding="utf-8")
        assert main(["synth", "--config", str(config), "--out", str(tmp_path / "w.json")]) == 1
        assert "(lines 2)" in capsys.readouterr().err

    def test_synth_needs_out(self, monkeypatch):
        monkeypatch.delenv("VC_SEED", raising=False)
        assert main(["synth"]) == 1
