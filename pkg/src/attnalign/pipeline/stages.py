"""Pipeline stages. Each reads its inputs from a work directory, writes one
checkpoint or alignment file plus a JSON run manifest, and returns the path.

Alignment files are always stored in corpus orientation (source-target),
also for the backward direction, so that any two of them can be symmetrized
or evaluated directly.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .. import __version__
from ..attopt import (
    Direction,
    OptConfig,
    extract_bidirectional_batch,
    init_from_directions,
    optimize_batch,
    optimize_bidirectional,
)
from ..checkpoint import load_module, save_module
from ..data import (
    BPE,
    Corpus,
    SyntheticConfig,
    Vocab,
    desegment,
    generate_synthetic,
    learn_bpe,
    load_merges,
    project_to_words,
    read_pharaoh,
    read_text,
    save_merges,
    write_pharaoh,
    write_text,
)
from ..errors import ContractError, DataError
from ..evaluation import Report, evaluate_corpus
from ..links import AlignmentSet
from ..nnmodel import (
    AlignmentLayer,
    FullContextAlignmentLayer,
    ModelConfig,
    TranslationModel,
    compute_features,
    extract_argmax_links,
    make_batch,
    split_states,
    train_translation,
)
from ..objectives import ContiguityConfig, LayerTrainConfig, train_alignment_layer, train_guided
from ..symmetrize import METHODS, symmetrize
from .config import PipelineConfig

DIRECTIONS = ("fwd", "bwd")
ALIGN_METHODS = ("forward", "attopt", "guided")


class MissingInputError(DataError):
    """A stage input does not exist; the message names the stage producing it."""


def version_string() -> str:
    """``v<version>`` plus ``-g<commit>`` when the package lives in a git checkout."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).parent)
        if out.returncode == 0 and out.stdout.strip():
            return f"v{__version__}-g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _check_direction(direction: str) -> None:
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")


@dataclass
class Workspace:
    """Directory layout and shared settings of one pipeline run."""

    root: Path
    cfg: PipelineConfig
    seed: int = 0
    log: Callable[[str], None] | None = None

    def __post_init__(self):
        self.root = Path(self.root)

    # paths --------------------------------------------------------------------------
    def corpus_path(self, split: str, side: str) -> Path:
        return self.root / "data" / f"{split}.{side}"

    def gold_path(self, split: str) -> Path:
        return self.root / "data" / f"{split}.gold"

    def vocab_path(self, side: str) -> Path:
        return self.root / "models" / f"vocab.{side}"

    def checkpoint_path(self, kind: str, direction: str) -> Path:
        return self.root / "models" / f"{kind}.{direction}.ckpt"

    def alignment_path(self, split: str, name: str) -> Path:
        return self.root / "alignments" / f"{split}.{name}.txt"

    def manifest_path(self, stage: str, tag: str = "") -> Path:
        return self.root / "manifests" / (f"{stage}.{tag}.json" if tag else f"{stage}.json")

    # helpers ------------------------------------------------------------------------
    def say(self, message: str) -> None:
        if self.log is not None:
            self.log(message)

    def stage_seed(self, stage: str, direction: str = "") -> int:
        return zlib.crc32(f"{self.seed}:{stage}:{direction}".encode())

    def require(self, path: Path, producer: str) -> Path:
        if not Path(path).exists():
            raise MissingInputError(f"missing input {path}; produce it with `attnalign {producer}`")
        return Path(path)

    def write_manifest(self, stage: str, tag: str, inputs: Sequence[Path], outputs: Sequence[Path],
                       seed: int | None = None, extra: dict | None = None) -> Path:
        manifest = {
            "stage": stage,
            "tag": tag,
            "version": version_string(),
            "config_hash": self.cfg.digest(),
            "seed": self.seed if seed is None else seed,
            "inputs": {str(p): _sha256(Path(p)) for p in inputs},
            "outputs": {str(p): _sha256(Path(p)) for p in outputs},
        }
        manifest.update(extra or {})
        path = self.manifest_path(stage, tag)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    # loading ------------------------------------------------------------------------
    def vocabs(self) -> tuple[Vocab, Vocab]:
        producer = "train-translation --direction fwd"
        return (Vocab.load(self.require(self.vocab_path("src"), producer)),
                Vocab.load(self.require(self.vocab_path("tgt"), producer)))

    def corpus(self, split: str, direction: str = "fwd") -> Corpus:
        """Corpus of ``split`` encoded with the run vocabularies, swapped for ``bwd``."""
        paths = [self.require(self.corpus_path(split, side), "gen-synthetic (or place the corpus there)")
                 for side in ("src", "tgt")]
        src_vocab, tgt_vocab = self.vocabs()
        corpus = Corpus.read(paths[0], paths[1], src_vocab, tgt_vocab)
        return corpus if direction == "fwd" else corpus.reversed()

    def model_config(self, direction: str) -> ModelConfig:
        src_vocab, tgt_vocab = self.vocabs()
        sizes = (len(src_vocab), len(tgt_vocab)) if direction == "fwd" else (len(tgt_vocab), len(src_vocab))
        return ModelConfig(*sizes, **vars(self.cfg.model))

    def translation_model(self, direction: str) -> TranslationModel:
        path = self.require(self.checkpoint_path("translation", direction),
                            f"train-translation --direction {direction}")
        model = TranslationModel(self.model_config(direction), direction=direction)
        load_module(path, model)
        return model.freeze()

    def alignment_layer(self, direction: str, path: Path | None = None) -> AlignmentLayer:
        path = path or self.checkpoint_path("align", direction)
        self.require(path, f"train-align-layer --direction {direction}")
        layer = AlignmentLayer(self.model_config(direction))
        load_module(path, layer)
        return layer

    def guided_layer(self, direction: str) -> FullContextAlignmentLayer:
        path = self.require(self.checkpoint_path("guided", direction),
                            f"guided-train --direction {direction}")
        layer = FullContextAlignmentLayer(self.model_config(direction))
        load_module(path, layer)
        return layer

    def read_alignments(self, path: Path, producer: str, indexing: int = 0) -> list[AlignmentSet]:
        return read_pharaoh(self.require(path, producer), indexing)


def _save_alignments(path: Path, alignments: Sequence[AlignmentSet], indexing: int = 0) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    write_pharaoh(path, alignments, indexing)
    return path


# data stages -----------------------------------------------------------------------------

def gen_synthetic(ws: Workspace, indexing: int = 0) -> list[Path]:
    """Training corpus with gold links; the gold file also serves evaluation."""
    d = ws.cfg.data
    cfg = SyntheticConfig(d.vocab_size, d.sentences, d.min_len, d.max_len, d.reorder_window,
                          d.split_prob)
    corpus, gold = generate_synthetic(cfg, d.seed)
    (ws.root / "data").mkdir(parents=True, exist_ok=True)
    src, tgt, gold_path = ws.corpus_path("train", "src"), ws.corpus_path("train", "tgt"), ws.gold_path("train")
    corpus.write(src, tgt)
    write_pharaoh(gold_path, gold, indexing)
    outputs = [src, tgt, gold_path]
    # the evaluation split is a gold-annotated slice of the training text, as usual
    # for unsupervised aligners that see the test sentences during training
    if d.test_sentences:
        n = min(d.test_sentences, len(corpus))
        write_text(ws.corpus_path("test", "src"), corpus.src[:n])
        write_text(ws.corpus_path("test", "tgt"), corpus.tgt[:n])
        write_pharaoh(ws.gold_path("test"), gold[:n], indexing)
        outputs += [ws.corpus_path("test", s) for s in ("src", "tgt")] + [ws.gold_path("test")]
    ws.write_manifest("gen-synthetic", "", [], outputs, seed=d.seed)
    ws.say(f"wrote {len(corpus)} synthetic sentence pairs to {ws.root / 'data'}")
    return outputs


# training stages -------------------------------------------------------------------------

def train_translation_stage(ws: Workspace, direction: str = "fwd", steps: int | None = None) -> Path:
    _check_direction(direction)
    src_path = ws.require(ws.corpus_path("train", "src"), "gen-synthetic (or place the corpus there)")
    tgt_path = ws.require(ws.corpus_path("train", "tgt"), "gen-synthetic (or place the corpus there)")
    if not (ws.vocab_path("src").exists() and ws.vocab_path("tgt").exists()):
        ws.vocab_path("src").parent.mkdir(parents=True, exist_ok=True)
        Vocab.build(read_text(src_path)).save(ws.vocab_path("src"))
        Vocab.build(read_text(tgt_path)).save(ws.vocab_path("tgt"))
    corpus = ws.corpus("train", direction)
    t = ws.cfg.train
    steps = t.steps("translation") if steps is None else steps
    seed = ws.stage_seed("translation", direction)
    model = TranslationModel(ws.model_config(direction), seed=seed, direction=direction)
    trace = train_translation(model, corpus.pairs(), steps, batch_tokens=t.batch_tokens,
                              lr=t.translation_lr, warmup=t.translation_warmup, seed=seed, log=ws.log)
    out = ws.checkpoint_path("translation", direction)
    save_module(out, model, {"steps": steps, "seed": seed})
    ws.write_manifest("train-translation", direction,
                      [src_path, tgt_path, ws.vocab_path("src"), ws.vocab_path("tgt")], [out], seed,
                      {"steps": steps, "final_loss": round(float(np.mean(trace[-50:])), 6) if trace else None})
    return out


def _layer_config(ws: Workspace, stage: str, steps: int | None, seed: int, lr: float,
                  contiguity: ContiguityConfig | None = None) -> LayerTrainConfig:
    t = ws.cfg.train
    return LayerTrainConfig(steps=t.steps(stage) if steps is None else steps,
                            batch_tokens=t.batch_tokens, lr=lr, warmup=t.layer_warmup, seed=seed,
                            contiguity=contiguity or ContiguityConfig(), dropout=ws.cfg.model.dropout)


def train_align_layer_stage(ws: Workspace, direction: str = "fwd", steps: int | None = None,
                            weight: float | None = None, kernel: int | None = None,
                            output: Path | None = None) -> Path:
    _check_direction(direction)
    model = ws.translation_model(direction)
    before = model.checksum()
    c = ws.cfg.contiguity
    contiguity = ContiguityConfig(kernel_size=c.kernel_size if kernel is None else kernel,
                                  weight=c.weight if weight is None else weight,
                                  logit_dropout=c.logit_dropout)
    seed = ws.stage_seed("align", direction)
    cfg = _layer_config(ws, "align", steps, seed, ws.cfg.train.align_lr, contiguity)
    layer = AlignmentLayer(model.config, seed=seed)
    trace = train_alignment_layer(model, layer, ws.corpus("train", direction).pairs(), cfg, log=ws.log)
    if model.checksum() != before:
        raise ContractError("translation parameters changed during alignment-layer training")
    out = Path(output) if output else ws.checkpoint_path("align", direction)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_module(out, layer, {"steps": cfg.steps, "seed": seed, "weight": contiguity.weight,
                             "kernel_size": contiguity.kernel_size})
    ws.write_manifest("train-align-layer", direction if not output else f"{direction}.{out.stem}",
                      [ws.checkpoint_path("translation", direction)], [out], seed,
                      {"steps": cfg.steps, "translation_checksum": before,
                       "contiguity_weight": contiguity.weight,
                       "final_loss": round(float(np.mean(trace[-25:])), 6) if trace else None})
    return out


def guided_train_stage(ws: Workspace, direction: str = "fwd", alignments: Path | None = None,
                       steps: int | None = None, indexing: int = 0) -> Path:
    _check_direction(direction)
    model = ws.translation_model(direction)
    before = model.checksum()
    source = Path(alignments) if alignments else ws.alignment_path("train", "bidir")
    links = ws.read_alignments(source, "bidir-align --split train", indexing)
    if direction == "bwd":
        links = [a.transpose() for a in links]
    seed = ws.stage_seed("guided", direction)
    cfg = _layer_config(ws, "guided", steps, seed, ws.cfg.train.guided_lr)
    layer = FullContextAlignmentLayer(model.config, seed=seed)
    trace = train_guided(model, layer, ws.corpus("train", direction).pairs(), links, cfg, log=ws.log)
    if model.checksum() != before:
        raise ContractError("translation parameters changed during guided training")
    out = ws.checkpoint_path("guided", direction)
    save_module(out, layer, {"steps": cfg.steps, "seed": seed})
    ws.write_manifest("guided-train", direction, [ws.checkpoint_path("translation", direction), source],
                      [out], seed, {"steps": cfg.steps, "translation_checksum": before,
                                    "final_loss": round(float(np.mean(trace[-25:])), 6) if trace else None})
    return out


# alignment stages ------------------------------------------------------------------------

def _collect(n: int, batches) -> list[AlignmentSet]:
    out: list[AlignmentSet | None] = [None] * n
    for index, links in batches:
        for i, a in zip(index, links):
            out[i] = a
    return out


def align_pairs(model: TranslationModel, layer, pairs, method: str = "forward",
                opt: OptConfig | None = None, batch_tokens: int = 4000) -> list[AlignmentSet]:
    """Argmax links of every pair, in the model's own orientation."""
    if method not in ALIGN_METHODS:
        raise ValueError(f"method must be one of {ALIGN_METHODS}")

    def batches():
        for f in compute_features(model, pairs, batch_tokens):
            if method == "guided":
                logits = layer.attention_logits(f.states, f.kv, f.src_len, f.tgt_len).data
            else:
                direction = Direction.from_features(layer, f)
                steps_cfg = opt if method == "attopt" else OptConfig(steps=0)
                logits, _ = optimize_batch(direction, steps_cfg)
            yield f.index, [extract_argmax_links(s) for s in split_states(logits, f.src_len, f.tgt_len)]

    return _collect(len(pairs), batches())


def attopt_config(ws: Workspace, steps: int | None = None, weight: float | None = None,
                  kernel: int | None = None, bidir: bool = False) -> OptConfig:
    section = ws.cfg.bidir if bidir else ws.cfg.attopt
    contiguity = ContiguityConfig(kernel_size=kernel or ws.cfg.contiguity.kernel_size, logit_dropout=0.0)
    return OptConfig(steps=section.steps if steps is None else steps,
                     learning_rate=section.learning_rate,
                     weight=section.weight if weight is None else weight,
                     contiguity=contiguity, include_eos=ws.cfg.attopt.include_eos,
                     bidir_contiguity=ws.cfg.bidir.contiguity)


def align_stage(ws: Workspace, direction: str = "fwd", split: str = "test", method: str = "forward",
                steps: int | None = None, weight: float | None = None, kernel: int | None = None,
                layer_path: Path | None = None, output: Path | None = None, indexing: int = 0) -> Path:
    _check_direction(direction)
    model = ws.translation_model(direction)
    if method == "guided":
        layer = ws.guided_layer(direction)
        ckpt = ws.checkpoint_path("guided", direction)
    else:
        layer = ws.alignment_layer(direction, layer_path)
        ckpt = Path(layer_path) if layer_path else ws.checkpoint_path("align", direction)
    opt = attopt_config(ws, steps, weight, kernel)
    links = align_pairs(model, layer, ws.corpus(split, direction).pairs(), method, opt,
                        ws.cfg.train.batch_tokens)
    if direction == "bwd":
        links = [a.transpose() for a in links]
    out = Path(output) if output else ws.alignment_path(split, f"{direction}.{method}")
    _save_alignments(out, links, indexing)
    extra = {"method": method, "split": split}
    if method == "attopt":
        extra.update(steps=opt.steps, learning_rate=opt.learning_rate, weight=opt.weight)
    ws.write_manifest("align", out.stem, [ckpt], [out], extra=extra)
    return out


def bidirectional_links(fwd_model, fwd_layer, bwd_model, bwd_layer, corpus: Corpus,
                        opt: OptConfig, batch_tokens: int = 4000) -> tuple[list[AlignmentSet], list[float]]:
    """Jointly optimized links of every pair plus the summed loss per step."""
    pairs_f, pairs_b = corpus.pairs(), corpus.reversed().pairs()
    totals = np.zeros(opt.steps + 1)

    def batches():
        for ff in compute_features(fwd_model, pairs_f, batch_tokens):
            fb = bwd_model.features(make_batch(pairs_b, ff.index))
            state = optimize_bidirectional(
                init_from_directions(Direction.from_features(fwd_layer, ff),
                                     Direction.from_features(bwd_layer, fb)), opt)
            totals[:] += state.losses
            yield ff.index, extract_bidirectional_batch(state)

    links = _collect(len(pairs_f), batches())
    return links, totals.tolist()


def bidir_align_stage(ws: Workspace, split: str = "test", steps: int | None = None,
                      weight: float | None = None, kernel: int | None = None,
                      output: Path | None = None, indexing: int = 0) -> Path:
    fwd_model, bwd_model = ws.translation_model("fwd"), ws.translation_model("bwd")
    fwd_layer, bwd_layer = ws.alignment_layer("fwd"), ws.alignment_layer("bwd")
    opt = attopt_config(ws, steps, weight, kernel, bidir=True)
    links, trace = bidirectional_links(fwd_model, fwd_layer, bwd_model, bwd_layer,
                                       ws.corpus(split, "fwd"), opt, ws.cfg.train.batch_tokens)
    out = Path(output) if output else ws.alignment_path(split, "bidir")
    _save_alignments(out, links, indexing)
    inputs = [ws.checkpoint_path(k, d) for k in ("translation", "align") for d in DIRECTIONS]
    ws.write_manifest("bidir-align", out.stem, inputs, [out],
                      extra={"split": split, "steps": opt.steps, "weight": opt.weight,
                             "loss_trace": [round(x, 4) for x in trace]})
    return out


def symmetrize_stage(ws: Workspace, forward: Path, backward: Path, method: str = "grow-diag",
                     output: Path | None = None, indexing: int = 0) -> Path:
    if method not in METHODS:
        raise ValueError(f"method must be one of {sorted(METHODS)}")
    f = ws.read_alignments(Path(forward), "align --direction fwd", indexing)
    b = ws.read_alignments(Path(backward), "align --direction bwd", indexing)
    if len(f) != len(b):
        raise DataError(f"{forward} has {len(f)} lines but {backward} has {len(b)}")
    out = Path(output) if output else Path(forward).with_name(
        f"{Path(forward).stem}+{Path(backward).stem}.{method}.txt")
    _save_alignments(out, [symmetrize(x, y, method) for x, y in zip(f, b)], indexing)
    ws.write_manifest("symmetrize", out.stem, [Path(forward), Path(backward)], [out],
                      extra={"method": method})
    return out


def evaluate_stage(ws: Workspace, gold: Path, hypotheses: Sequence[tuple[str, Path]],
                   output: Path | None = None, indexing: int = 0) -> Report:
    """Score each named hypothesis file; writes ``<output>.txt`` (table) and ``<output>.tsv``."""
    golds = ws.read_alignments(Path(gold), "gen-synthetic (or supply gold alignments)", indexing)
    report = Report()
    for name, path in hypotheses:
        report.add(name, evaluate_corpus(ws.read_alignments(Path(path), "align", indexing), golds))
    prefix = Path(output) if output else ws.root / "reports" / "report"
    prefix.parent.mkdir(parents=True, exist_ok=True)
    table, tsv = prefix.with_suffix(".txt"), prefix.with_suffix(".tsv")
    table.write_text(report.table(), encoding="utf-8")
    tsv.write_text(report.tsv(), encoding="utf-8")
    ws.write_manifest("evaluate", prefix.name, [Path(gold)] + [Path(p) for _, p in hypotheses],
                      [table, tsv])
    return report


# subword tools -----------------------------------------------------------------------------

def learn_bpe_stage(inputs: Sequence[Path], merges: int, output: Path, min_frequency: int = 2) -> Path:
    table = learn_bpe([read_text(p) for p in inputs], merges, min_frequency)
    save_merges(output, table)
    return Path(output)


def apply_bpe_stage(merges: Path, source: Path, output: Path, map_output: Path | None = None) -> Path:
    """Segment a text file; the word map lists each subword's 1-based word index."""
    bpe = BPE(load_merges(merges))
    segmented, maps = [], []
    for words in read_text(source):
        tokens, word_map = bpe.apply(words)
        segmented.append(tokens)
        maps.append([str(i) for i in word_map])
    write_text(output, segmented)
    if map_output:
        write_text(map_output, maps)
    return Path(output)


def read_word_maps(path: Path) -> list[list[int]]:
    try:
        return [[int(x) for x in line] for line in read_text(path)]
    except ValueError as exc:
        raise DataError(f"{path}: word maps must hold integers ({exc})") from None


def project_alignments_stage(alignments: Path, src_map: Path, tgt_map: Path, output: Path,
                             indexing: int = 0) -> Path:
    subword = read_pharaoh(alignments, indexing)
    src_maps, tgt_maps = read_word_maps(src_map), read_word_maps(tgt_map)
    if not len(subword) == len(src_maps) == len(tgt_maps):
        raise DataError("alignment and word-map files must have the same number of lines")
    words = [project_to_words(a, s, t) for a, s, t in zip(subword, src_maps, tgt_maps)]
    _save_alignments(Path(output), words, indexing)
    return Path(output)


def desegment_file(source: Path, output: Path) -> Path:
    write_text(output, [desegment(tokens) for tokens in read_text(source)])
    return Path(output)


# whole chain ---------------------------------------------------------------------------------

def run_chain(ws: Workspace, split: str = "test", synthetic: bool = True) -> Report:
    """Every stage in order, ending in a report over ``split``.

    Rows: forward-pass and optimized single directions, their grow-diag
    merge, the bidirectional result, both guided models and the final
    grow-diag merge of the guided outputs.
    """
    if synthetic:
        gen_synthetic(ws)
    for d in DIRECTIONS:
        ws.say(f"== train-translation {d}")
        train_translation_stage(ws, d)
        ws.say(f"== train-align-layer {d}")
        train_align_layer_stage(ws, d)
    rows = []
    for d in DIRECTIONS:
        for method in ("forward", "attopt"):
            rows.append((f"{d}.{method}", align_stage(ws, d, split, method)))
    rows.append(("attopt.grow-diag", symmetrize_stage(ws, rows[1][1], rows[3][1], "grow-diag")))
    ws.say("== bidir-align")
    if split != "train":
        bidir_align_stage(ws, "train")
    rows.append(("bidir", bidir_align_stage(ws, split)))
    for d in DIRECTIONS:
        ws.say(f"== guided-train {d}")
        guided_train_stage(ws, d)
        rows.append((f"{d}.guided", align_stage(ws, d, split, "guided")))
    final = symmetrize_stage(ws, rows[-2][1], rows[-1][1], "grow-diag",
                             output=ws.alignment_path(split, "final"))
    rows.append(("final", final))
    report = evaluate_stage(ws, ws.gold_path(split), rows)
    ws.say(report.table())
    return report


__all__ = [name for name in dir() if name.endswith("_stage")] + [
    "DIRECTIONS", "MissingInputError", "Workspace", "align_pairs", "bidirectional_links",
    "gen_synthetic", "run_chain", "version_string",
]
