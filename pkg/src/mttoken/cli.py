"""Command-line entry point: gen-data, train, predict, smooth, eval, gradcheck."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import gradcheck
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config, parse_lines
from .data import generate_synthetic, read_manifest, synthetic_spec_from_pairs, write_manifest
from .metrics import evaluate
from .smoothing import read_predlog, smooth_stream, write_predlog
from .tensor import ContractError, NonFiniteError
from .train import predict_records, train_loop

log = logging.getLogger("mttoken")


def cmd_gen_data(args) -> int:
    pairs = parse_lines(Path(args.spec).read_text(encoding="utf-8").splitlines())
    examples = generate_synthetic(synthetic_spec_from_pairs(pairs))
    write_manifest(args.out, examples)
    log.info("wrote %d frames to %s", len(examples), args.out)
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    examples = read_manifest(args.data)
    result = train_loop(cfg, examples, root=Path(args.data).parent)
    save_checkpoint(args.out, result.params, cfg)
    if result.losses:
        log.info("final loss %.6f after %d updates", result.losses[-1][1], len(result.losses))
    return 0


def cmd_predict(args) -> int:
    params, cfg = load_checkpoint(args.ckpt)
    examples = read_manifest(args.data)
    write_predlog(args.out, predict_records(params, examples, cfg, root=Path(args.data).parent))
    return 0


def cmd_smooth(args) -> int:
    frames, _ = read_predlog(args.inp)
    write_predlog(args.out, smooth_stream(frames, args.window, args.t_au, args.t_expr, args.align))
    return 0


def cmd_eval(args) -> int:
    frames, probs = read_predlog(args.pred)
    report = evaluate(frames, probs, read_manifest(args.truth), args.t_au, args.t_expr,
                      args.threshold, args.average)
    Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
    sys.stdout.write(report.to_text())
    return 0


def cmd_gradcheck(args) -> int:
    return gradcheck.main(args.scale)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mttoken", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize a partially labelled dataset")
    p.add_argument("--spec", required=True, help="key = value file of synthetic spec fields")
    p.add_argument("--out", required=True, help="output manifest (JSON lines)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config", help="key = value config file (default: desk preset)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config value")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write raw per-frame outputs as a prediction log")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    def temperatures(p):
        p.add_argument("--t-au", type=float, default=1.0)
        p.add_argument("--t-expr", type=float, default=5.0)

    p = sub.add_parser("smooth", help="windowed temporal means of a prediction log")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=30)
    p.add_argument("--align", choices=("centered", "trailing"), default="centered")
    temperatures(p)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("eval", help="score a prediction log against manifest labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--report", required=True, help="JSON report path")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--average", choices=("macro", "micro", "weighted"), default="macro")
    temperatures(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every parameter gradient")
    p.add_argument("--scale", choices=("desk",), default="desk")
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ContractError, NonFiniteError, ValueError, OSError, KeyError) as exc:
        print(f"mttoken {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
