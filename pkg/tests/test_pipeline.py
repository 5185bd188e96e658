import json
import re
import shutil

import pytest

from attnalign.data import read_pharaoh, read_text
from attnalign.errors import DataError
from attnalign.pipeline import stages
from attnalign.pipeline.cli import build_parser, main
from attnalign.pipeline.config import ConfigError, PipelineConfig, load_config, parse_config

TINY = """
# a few seconds per stage
data.vocab_size = 8
data.sentences = 120
data.test_sentences = 30
data.min_len = 3
data.max_len = 6
model.embedding_size = 16
model.hidden_units = 32
model.encoder_layers = 1
model.heads = 2
model.align_hidden = 8
train.translation_updates = 40
train.align_updates = 20
train.guided_updates = 20
train.scale = 1.0
train.layer_scale = 1.0
train.batch_tokens = 400
train.translation_warmup = 10
train.layer_warmup = 10
bidir.steps = 3
"""


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.cfg"
    path.write_text(TINY)
    return path


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory, tiny_config):
    work = tmp_path_factory.mktemp("run") / "work"
    assert main(["run", "--workdir", str(work), "--config", str(tiny_config), "--quiet"]) == 0
    return work


def cli(*args):
    return main([str(a) for a in args])


class TestConfig:
    def test_defaults_match_acceptance_setup(self):
        cfg = PipelineConfig()
        d = cfg.data
        assert (d.vocab_size, d.sentences, d.min_len, d.max_len, d.reorder_window, d.split_prob) == \
            (50, 5000, 5, 15, 2, 0.1)
        assert cfg.train.steps("translation") == 900
        assert cfg.train.steps("align") == cfg.train.steps("guided") == 1000

    def test_parse_comments_and_types(self):
        cfg = parse_config("attopt.include_eos = no  # comment\n\nbidir.weight = 2.5\n")
        assert cfg.attopt.include_eos is False and cfg.bidir.weight == 2.5

    @pytest.mark.parametrize("text,match", [
        ("model.nope = 1", "unknown configuration key"),
        ("data.sentences = many", "cannot read"),
        ("no equals sign", "expected"),
        ("attopt.steps = -1", "non-negative"),
        ("bidir.contiguity = sideways", "forward"),
    ])
    def test_errors(self, text, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(text, "x.cfg")

    def test_error_names_line(self):
        with pytest.raises(ConfigError, match="x.cfg:2"):
            parse_config("data.seed = 1\ndata.seed = one\n", "x.cfg")

    def test_overrides_and_round_trip(self, tmp_path):
        cfg = load_config(None, ["attopt.steps=7"])
        assert cfg.attopt.steps == 7
        (tmp_path / "c").write_text(cfg.dumps())
        again = load_config(tmp_path / "c")
        assert again.to_dict() == cfg.to_dict() and again.digest() == cfg.digest()
        assert load_config().digest() != cfg.digest()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(tmp_path / "none")


class TestCliSurface:
    def test_subcommands(self):
        sub = next(a for a in build_parser()._actions if a.dest == "command")
        assert set(sub.choices) >= {
            "train-translation", "train-align-layer", "align", "bidir-align", "guided-train",
            "symmetrize", "evaluate", "gen-synthetic", "learn-bpe", "apply-bpe",
            "project-alignments", "run"}

    def test_help(self, capsys):
        assert cli("--help") == 0
        assert "bidir-align" in capsys.readouterr().out

    def test_usage_errors(self, capsys):
        assert cli("frobnicate") == 2
        assert cli("align", "--att-opt", "--guided") == 2
        assert cli("symmetrize", "--method", "magic", "a", "b") == 2
        assert "invalid choice" in capsys.readouterr().err

    def test_bad_override(self, tmp_path, capsys):
        assert cli("gen-synthetic", "--workdir", tmp_path, "--set", "data.colour=red") == 2
        assert "unknown configuration key" in capsys.readouterr().err

    def test_missing_inputs_name_the_producer(self, tmp_path, capsys):
        assert cli("train-translation", "--workdir", tmp_path) == 3
        assert "attnalign gen-synthetic" in capsys.readouterr().err
        assert cli("align", "--workdir", tmp_path, "--direction", "bwd") == 3
        assert "attnalign train-translation" in capsys.readouterr().err

    def test_output_required_for_bpe(self, tmp_path, capsys):
        (tmp_path / "t").write_text("a b\n")
        assert cli("learn-bpe", "--merges", 3, tmp_path / "t") == 2
        assert "--output" in capsys.readouterr().err


class TestFileCommands:
    def test_symmetrize_and_evaluate(self, tmp_path, capsys):
        (tmp_path / "f").write_text("0-0 1-1\n0-0\n")
        (tmp_path / "b").write_text("0-0 2-1\n0-0 1-1\n")
        (tmp_path / "g").write_text("0-0 1-1 2?1\n0-0 1-1\n")
        out = tmp_path / "gd.txt"
        assert cli("symmetrize", "--workdir", tmp_path, "--quiet", "--output", out,
                   tmp_path / "f", tmp_path / "b") == 0
        assert out.read_text() == "0-0 1-1 2-1\n0-0 1-1\n"
        assert cli("evaluate", "--workdir", tmp_path, "--gold", tmp_path / "g",
                   "--output", tmp_path / "rep", f"gd={out}", tmp_path / "f") == 0
        table = capsys.readouterr().out
        assert re.search(r"^gd\s+0\.00%", table, re.M) and re.search(r"^f\s", table, re.M)
        assert "gd.aer\t0.000000" in (tmp_path / "rep.tsv").read_text()

    def test_one_based_files(self, tmp_path):
        (tmp_path / "f").write_text("1-1 2-2\n")
        out = tmp_path / "u.txt"
        assert cli("symmetrize", "--workdir", tmp_path, "--quiet", "--indexing", 1, "--method",
                   "union", "--output", out, tmp_path / "f", tmp_path / "f") == 0
        assert out.read_text() == "1-1 2-2\n"

    def test_data_errors(self, tmp_path, capsys):
        (tmp_path / "f").write_text("0-0\n")
        (tmp_path / "g").write_text("0-0\n0-0\n")
        (tmp_path / "bad").write_text("0-0 0:1\n")
        assert cli("evaluate", "--workdir", tmp_path, "--gold", tmp_path / "g", tmp_path / "f") == 3
        assert "line is 2" in capsys.readouterr().err
        assert cli("evaluate", "--workdir", tmp_path, "--gold", tmp_path / "g", tmp_path / "bad") == 3
        assert "column 5" in capsys.readouterr().err

    def test_subword_round_trip(self, tmp_path):
        (tmp_path / "src").write_text("lower lowest\nnewer\n")
        (tmp_path / "tgt").write_text("tiefer\nneuer neu\n")
        merges, q = tmp_path / "merges", ["--workdir", tmp_path, "--quiet"]
        assert cli("learn-bpe", *q, "--merges", 8, "--output", merges, tmp_path / "src", tmp_path / "tgt") == 0
        for side in ("src", "tgt"):
            assert cli("apply-bpe", *q, "--merges", merges, "--word-map", tmp_path / f"{side}.map",
                       "--output", tmp_path / f"{side}.bpe", tmp_path / side) == 0
        src_bpe = read_text(tmp_path / "src.bpe")
        tgt_bpe = read_text(tmp_path / "tgt.bpe")
        # link every subword to every subword, then collapse to words
        lines = [" ".join(f"{s}-{t}" for s in range(len(a)) for t in range(len(b)))
                 for a, b in zip(src_bpe, tgt_bpe)]
        (tmp_path / "sub.align").write_text("\n".join(lines) + "\n")
        out = tmp_path / "words.align"
        assert cli("project-alignments", *q, "--src-map", tmp_path / "src.map", "--tgt-map",
                   tmp_path / "tgt.map", "--output", out, tmp_path / "sub.align") == 0
        words = read_pharaoh(out)
        assert words[0].links == {(1, 1), (2, 1)}
        assert words[1].links == {(1, 1), (1, 2)}


class TestChain:
    def test_report_rows(self, tiny_run):
        rows = [line.split()[0] for line in (tiny_run / "reports" / "report.txt").read_text().splitlines()]
        assert rows == ["system", "fwd.forward", "fwd.attopt", "bwd.forward", "bwd.attopt",
                        "attopt.grow-diag", "bidir", "fwd.guided", "bwd.guided", "final"]

    def test_backward_files_use_corpus_orientation(self, tiny_run):
        src, tgt = read_text(tiny_run / "data/test.src"), read_text(tiny_run / "data/test.tgt")
        for name in ("bwd.attopt", "bwd.guided", "bidir", "final"):
            for a, s, t in zip(read_pharaoh(tiny_run / f"alignments/test.{name}.txt"), src, tgt):
                assert all(i <= len(s) and j <= len(t) for i, j in a.links)

    def test_manifests(self, tiny_run):
        manifest = json.loads((tiny_run / "manifests" / "align.test.fwd.attopt.json").read_text())
        assert set(manifest) >= {"version", "config_hash", "seed", "inputs", "outputs", "steps"}
        assert manifest["version"].startswith("v")
        assert not any("time" in key or "date" in key for key in manifest)
        cfg = load_config(None)
        for path, digest in manifest["outputs"].items():
            assert stages._sha256(stages.Path(path)) == digest
        assert manifest["config_hash"] != cfg.digest()  # the tiny config differs from the defaults

    def test_stage_rerun_is_reproducible(self, tiny_run, tiny_config, tmp_path):
        target = tiny_run / "alignments" / "test.fwd.attopt.txt"
        out = tmp_path / "again.txt"
        assert cli("align", "--workdir", tiny_run, "--config", tiny_config, "--att-opt", "--quiet",
                   "--output", out) == 0
        assert out.read_bytes() == target.read_bytes()

    def test_alternative_layer_checkpoint(self, tiny_run, tiny_config, tmp_path):
        layer = tmp_path / "nocl.ckpt"
        q = ["--workdir", tiny_run, "--config", tiny_config, "--quiet"]
        assert cli("train-align-layer", *q, "--lambda", 0, "--steps", 5, "--output", layer) == 0
        assert cli("align", *q, "--layer", layer, "--output", tmp_path / "a.txt") == 0
        assert len(read_pharaoh(tmp_path / "a.txt")) == 30

    def test_missing_upstream_checkpoint(self, tiny_run, tiny_config, tmp_path, capsys):
        work = tmp_path / "w"
        shutil.copytree(tiny_run, work)
        (work / "models" / "align.bwd.ckpt").unlink()
        assert cli("bidir-align", "--workdir", work, "--config", tiny_config) == 3
        assert "train-align-layer --direction bwd" in capsys.readouterr().err

    def test_guided_train_rejects_wrong_alignment_count(self, tiny_run, tiny_config, tmp_path, capsys):
        bad = tmp_path / "short.txt"
        bad.write_text("0-0\n")
        assert cli("guided-train", "--workdir", tiny_run, "--config", tiny_config,
                   "--alignments", bad) == 3
        assert "alignments for" in capsys.readouterr().err


def test_version_string():
    assert re.match(r"^v\d+\.\d+", stages.version_string())


def test_missing_input_is_data_error():
    assert issubclass(stages.MissingInputError, DataError)
