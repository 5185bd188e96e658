"""Command line entry point: ``attnalign <subcommand> [options]``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error
(including missing stage inputs), 4 numeric error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import AlignError, ContractError, DataError, NumericError
from ..symmetrize import METHODS
from . import stages
from .config import ConfigError, load_config

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(f"{self.prog}: error: {message}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat 'section.key = value' configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--workdir", type=Path, default=Path("work"), help="run directory (default: work)")
    p.add_argument("--seed", type=int, default=0, help="run seed")
    p.add_argument("--indexing", type=int, choices=(0, 1), default=0,
                   help="index base of alignment files on disk")
    p.add_argument("--output", type=Path, help="output path of this stage")
    p.add_argument("--quiet", action="store_true", help="suppress progress messages")


def _direction(p):
    p.add_argument("--direction", choices=stages.DIRECTIONS, default="fwd")


def _opt(p):
    p.add_argument("--steps", type=int, help="update or descent steps (overrides the config)")
    p.add_argument("--lambda", dest="weight", type=float, help="contiguity loss weight")
    p.add_argument("--kernel", type=int, help="contiguity kernel size")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="attnalign", description="Neural word alignment toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-synthetic", help="write a synthetic corpus with gold alignments")
    _common(p)

    p = sub.add_parser("train-translation", help="train a translation model")
    _common(p)
    _direction(p)
    p.add_argument("--steps", type=int)

    p = sub.add_parser("train-align-layer", help="train the alignment layer on a frozen model")
    _common(p)
    _direction(p)
    _opt(p)

    p = sub.add_parser("align", help="extract alignments (forward pass, --att-opt or --guided)")
    _common(p)
    _direction(p)
    _opt(p)
    p.add_argument("--split", default="test")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--att-opt", action="store_true", help="optimize attention before extraction")
    mode.add_argument("--guided", action="store_true", help="use the guided full-context layer")
    p.add_argument("--layer", type=Path, help="alignment-layer checkpoint to use")

    p = sub.add_parser("bidir-align", help="bidirectional attention optimization")
    _common(p)
    _opt(p)
    p.add_argument("--split", default="test")

    p = sub.add_parser("guided-train", help="train the full-context layer on given alignments")
    _common(p)
    _direction(p)
    p.add_argument("--steps", type=int)
    p.add_argument("--alignments", type=Path, help="default: the bidirectional training alignments")

    p = sub.add_parser("symmetrize", help="merge forward and backward alignment files")
    _common(p)
    p.add_argument("--method", choices=sorted(METHODS), default="grow-diag")
    p.add_argument("forward", type=Path)
    p.add_argument("backward", type=Path)

    p = sub.add_parser("evaluate", help="AER, precision and recall against gold alignments")
    _common(p)
    p.add_argument("--gold", type=Path, required=True)
    p.add_argument("hypotheses", nargs="+", metavar="[NAME=]PATH")

    p = sub.add_parser("learn-bpe", help="learn a joint BPE merge table")
    _common(p)
    p.add_argument("--merges", type=int, required=True)
    p.add_argument("--min-frequency", type=int, default=2)
    p.add_argument("inputs", nargs="+", type=Path)

    p = sub.add_parser("apply-bpe", help="segment a text file with a merge table")
    _common(p)
    p.add_argument("--merges", type=Path, required=True)
    p.add_argument("--word-map", type=Path, help="also write 1-based word indices per subword")
    p.add_argument("input", type=Path)

    p = sub.add_parser("project-alignments", help="map subword links to word links")
    _common(p)
    p.add_argument("--src-map", type=Path, required=True)
    p.add_argument("--tgt-map", type=Path, required=True)
    p.add_argument("alignments", type=Path)

    p = sub.add_parser("run", help="run every stage on a synthetic corpus and report")
    _common(p)
    p.add_argument("--split", default="test")
    return parser


def _hypotheses(items):
    out = []
    for item in items:
        name, sep, path = item.partition("=")
        out.append((name, Path(path)) if sep else (Path(item).stem, Path(item)))
    return out


def _need_output(args, what: str) -> Path:
    if args.output is None:
        raise ConfigError(f"{args.command} needs --output for the {what}")
    return args.output


def dispatch(args) -> object:
    cfg = load_config(args.config, args.set)
    if args.command == "gen-synthetic" and args.seed:
        cfg.data.seed = args.seed
    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr, flush=True))
    ws = stages.Workspace(args.workdir, cfg, args.seed, log)
    c = args.command
    if c == "gen-synthetic":
        return stages.gen_synthetic(ws, args.indexing)
    if c == "train-translation":
        return stages.train_translation_stage(ws, args.direction, args.steps)
    if c == "train-align-layer":
        return stages.train_align_layer_stage(ws, args.direction, args.steps, args.weight,
                                              args.kernel, args.output)
    if c == "align":
        method = "attopt" if args.att_opt else "guided" if args.guided else "forward"
        return stages.align_stage(ws, args.direction, args.split, method, args.steps, args.weight,
                                  args.kernel, args.layer, args.output, args.indexing)
    if c == "bidir-align":
        return stages.bidir_align_stage(ws, args.split, args.steps, args.weight, args.kernel,
                                        args.output, args.indexing)
    if c == "guided-train":
        return stages.guided_train_stage(ws, args.direction, args.alignments, args.steps, args.indexing)
    if c == "symmetrize":
        return stages.symmetrize_stage(ws, args.forward, args.backward, args.method, args.output,
                                       args.indexing)
    if c == "evaluate":
        report = stages.evaluate_stage(ws, args.gold, _hypotheses(args.hypotheses), args.output,
                                       args.indexing)
        print(report.table(), end="")
        return report
    if c == "learn-bpe":
        return stages.learn_bpe_stage(args.inputs, args.merges, _need_output(args, "merge table"),
                                      args.min_frequency)
    if c == "apply-bpe":
        return stages.apply_bpe_stage(args.merges, args.input, _need_output(args, "segmented text"),
                                      args.word_map)
    if c == "project-alignments":
        return stages.project_alignments_stage(args.alignments, args.src_map, args.tgt_map,
                                               _need_output(args, "word alignments"), args.indexing)
    if c == "run":
        report = stages.run_chain(ws, args.split)
        print(report.table(), end="")
        return report
    raise ConfigError(f"unknown command {c}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return EXIT_OK
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
        return EXIT_USAGE
    try:
        result = dispatch(args)
    except (ConfigError, ContractError, ValueError) as exc:
        if isinstance(exc, DataError):
            print(f"attnalign: data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"attnalign: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, IndexError) as exc:
        print(f"attnalign: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError, OverflowError) as exc:
        print(f"attnalign: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except AlignError as exc:
        print(f"attnalign: error: {exc}", file=sys.stderr)
        return 1
    if isinstance(result, (str, Path)) and not args.quiet:
        print(result)
    elif isinstance(result, list) and not args.quiet:
        print("\n".join(str(p) for p in result))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
