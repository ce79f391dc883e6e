"""Command-line interface: ``liftrisk <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import rnle
from .core import FrameError, read_frames, write_frames
from .engine import FeatureMismatch, RiskEngine, replace_settings, replay
from .gmoe import GmoeModel, NumericError
from .io import ConfigError, ModelFormatError, load_config, load_model, save_model, write_records
from .metrics import confusion, evaluate_model, gate_predictions, write_report
from .synth import generate_dataset, load_dataset, save_dataset
from .training import WindowSet, make_training_targets, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _windows(sequences) -> WindowSet:
    return WindowSet.concat([make_training_targets(s) for s in sequences])


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    ds = generate_dataset(args.lifts, cfg.generator, seed, cfg.skeleton)
    out = save_dataset(ds, args.out)
    frames = sum(rec["frames"] for rec in ds.manifest)
    print(f"wrote {len(ds.manifest)} lifts ({frames} frames) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    ds = load_dataset(args.data, cfg.skeleton)
    if not ds.train or not ds.val:
        raise ValueError("dataset needs non-empty train and val splits")
    model = GmoeModel.initialize(cfg.seed, hidden=cfg.hidden)
    model, report = train(model, _windows(ds.train), _windows(ds.val), cfg.training)
    save_model(model, args.out_model)
    report_path = Path(args.report) if args.report else Path(str(args.out_model) + ".train.jsonl")
    with open(report_path, "w", encoding="utf-8") as fh:
        for rec in report.records():
            fh.write(json.dumps(rec) + "\n")
    print(f"trained {report.stop_epoch} epochs ({report.stop_reason}), best epoch {report.best_epoch}; "
          f"model written to {args.out_model}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.data)
    sequences = ds.split(args.split)
    if not sequences:
        raise ValueError(f"split {args.split!r} is empty")
    data = _windows(sequences)
    steps = tuple(int(s) for s in args.steps.split(","))
    report = evaluate_model(model, data, steps)
    cm = confusion(*gate_predictions(model, data))
    write_report(report, cm, args.report)
    print(report.summary())
    return EXIT_OK


def _open_stream(path):
    if path == "-":
        return sys.stdin
    return open(path, encoding="utf-8")


def cmd_assess(args) -> int:
    cfg = load_config(args.config)
    model = load_model(args.model)
    settings = replace_settings(cfg.engine, horizon=args.horizon, drop=args.drop, rise=args.rise,
                                origin=args.origin)
    context = cfg.rnle if args.payload_kg is None else _with_payload(cfg.rnle, args.payload_kg)
    engine = RiskEngine(model, cfg.skeleton, context, settings)
    fh = _open_stream(args.stream)
    try:
        frames = read_frames(fh)
        if args.rate is not None:
            frames = replay(frames, args.rate)
            chunk = args.chunk if args.rate == 0 else 1
        else:
            chunk = 1 if args.stream == "-" else args.chunk
        out = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8")
        try:
            n = write_records(engine.run(frames, chunk), out)
        finally:
            if out is not sys.stdout:
                out.close()
    finally:
        if fh is not sys.stdin:
            fh.close()
    if args.out != "-":
        print(f"wrote {n} records to {args.out}", file=sys.stderr)
    return EXIT_OK


def _with_payload(context, payload):
    return replace(context, payload=float(payload))


def cmd_replay(args) -> int:
    with open(args.file, encoding="utf-8") as fh:
        for frame in replay(read_frames(fh), args.rate):
            write_frames([frame], sys.stdout)
            sys.stdout.flush()
    return EXIT_OK


def cmd_rnle(args) -> int:
    if args.tables:
        print(json.dumps(rnle.dump_tables(), indent=2))
        return EXIT_OK
    if args.H is None or args.V is None or args.D is None:
        raise UsageError("rnle needs --H, --V and --D (or --tables)")
    inp = rnle.NioshInput(args.H, args.V, args.D, args.A, args.F, args.duration, args.coupling,
                          args.payload_kg)
    res = rnle.rwl(inp, args.rounding, args.coupling_mode)
    print(json.dumps({"HM": res.HM, "VM": res.VM, "DM": res.DM, "AM": res.AM, "FM": res.FM,
                      "CM": res.CM, "RWL": res.RWL, "LI": res.LI}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="liftrisk", description="Lifting-risk prediction toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic lifting dataset")
    g.add_argument("--config")
    g.add_argument("--lifts", type=int, default=60)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a model on a dataset directory")
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--out-model", required=True)
    t.add_argument("--report", help="per-epoch training records (default: <model>.train.jsonl)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a model on a dataset split")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True, help="output prefix for .jsonl and .txt reports")
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--steps", default="0,19,49", help="comma-separated future steps")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("assess", help="run the risk engine over a frame stream")
    a.add_argument("--model", required=True)
    a.add_argument("--stream", required=True, help="frame file, or - for stdin")
    a.add_argument("--payload-kg", type=float)
    a.add_argument("--out", default="-")
    a.add_argument("--config")
    a.add_argument("--rate", type=float, help="replay the file at this multiple of real time")
    a.add_argument("--chunk", type=int, default=256, help="frames per inference batch for files")
    a.add_argument("--horizon", type=int)
    a.add_argument("--drop", type=float)
    a.add_argument("--rise", type=float)
    a.add_argument("--origin", choices=("predicted", "measured"))
    a.set_defaults(func=cmd_assess)

    r = sub.add_parser("replay", help="emit a frame file at a multiple of real time")
    r.add_argument("--file", required=True)
    r.add_argument("--rate", type=float, default=1.0, help="0 means as fast as possible")
    r.set_defaults(func=cmd_replay)

    n = sub.add_parser("rnle", help="evaluate the lifting equation or dump its tables")
    n.add_argument("--tables", action="store_true")
    n.add_argument("--H", type=float)
    n.add_argument("--V", type=float)
    n.add_argument("--D", type=float)
    n.add_argument("--A", type=float, default=0.0)
    n.add_argument("--F", type=float, default=7.0)
    n.add_argument("--duration", default="1h", choices=[d.value for d in rnle.Duration])
    n.add_argument("--coupling", default="fair", choices=[c.value for c in rnle.Coupling])
    n.add_argument("--payload-kg", type=float, default=0.0)
    n.add_argument("--rounding", default="exact", choices=[m.value for m in rnle.Rounding])
    n.add_argument("--coupling-mode", default="paper-flat",
                   choices=[m.value for m in rnle.CouplingMode])
    n.set_defaults(func=cmd_rnle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"liftrisk: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, FloatingPointError) as exc:
        print(f"liftrisk: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FrameError, ModelFormatError, ConfigError, FeatureMismatch, OSError, ValueError,
            KeyError) as exc:
        print(f"liftrisk: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
