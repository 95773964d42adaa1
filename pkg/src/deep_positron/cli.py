"""Command-line harness: train, quantize, infer, sweep, dynamic-range.

Every command reads the same JSON config document (the packaged default
unless ``--config`` is given); command-line flags override its fields.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import codec, data, network, sweep, trainer
from .codec import FormatSpec
from .errors import ConfigError, FormatMismatch, PositronError


def _load(args) -> sweep.SweepConfig:
    path = args.config or sweep.default_config_path()
    return sweep.load_config(path)


def _dataset_entry(cfg: sweep.SweepConfig, name: str) -> dict:
    for entry in cfg.datasets:
        if entry["name"] == name:
            return entry
    if name in data.BUILTIN_SCHEMAS:
        return {"name": name}
    raise ConfigError(f"dataset {name!r} is neither in the config nor built in")


def _hidden(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad layer sizes {text!r}") from None
    if any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError("layer sizes must be positive")
    return sizes


def cmd_train(args) -> int:
    cfg = sweep.with_overrides(_load(args), seed=args.seed)
    entry = dict(_dataset_entry(cfg, args.dataset))
    overrides = {k: v for k, v in (("hidden", args.hidden), ("epochs", args.epochs),
                                    ("learning_rate", args.learning_rate)) if v is not None}
    entry["train"] = {**entry.get("train", {}), **overrides}
    ds = data.load_dataset(entry, cfg.seed)
    model = trainer.train(ds, cfg.train_config(entry))
    trainer.save_float_model(model, args.out)
    x, y = ds.test
    acc = trainer.accuracy(model, x, y)
    print(f"wrote {args.out}")
    print(f"{ds.name}: full-precision test accuracy {100 * acc:.1f}% on {len(y)} rows")
    return 0


def cmd_quantize(args) -> int:
    spec = FormatSpec.parse(args.format)
    model = trainer.load_float_model(args.model)
    network.save_model(trainer.quantize(model, spec), args.out)
    print(f"wrote {args.out} ({spec.tag})")
    return 0


def cmd_infer(args) -> int:
    model = network.load_model(args.model)
    if args.format is not None:
        wanted = FormatSpec.parse(args.format)
        if wanted != model.spec:
            raise FormatMismatch(f"model {args.model} is {model.spec.tag}, requested {wanted.tag}")
    cfg = sweep.with_overrides(_load(args), seed=args.seed)
    ds = data.load_dataset(_dataset_entry(cfg, args.dataset), cfg.seed)
    if ds.features.shape[1] != model.input_dim:
        raise ConfigError(f"model takes {model.input_dim} features, {ds.name} has {ds.features.shape[1]}")
    x, y = ds.test
    if args.engine == "emac":
        pred = np.array([network.classify(model, network.quantize_input(model, row)) for row in x],
                        dtype=np.int64)
    else:
        pred = network.CompiledNetwork(model).predict(x)
    print("row,label,prediction")
    for idx, label, p in zip(ds.test_idx, y, pred):
        print(f"{idx},{ds.class_names[label]},{ds.class_names[p]}")
    acc = float(np.mean(pred == y)) if len(y) else 0.0
    print(f"accuracy {100 * acc:.1f}% ({int(np.sum(pred == y))}/{len(y)}) with {model.spec.tag}")
    return 0


def cmd_sweep(args) -> int:
    cfg = sweep.with_overrides(_load(args), seed=args.seed, jobs=args.jobs, output_dir=args.out)
    names = args.datasets.split(",") if args.datasets else None
    rows = sweep.run_sweep(cfg, names)
    paths = sweep.write_reports(rows, cfg, cfg.output_dir)
    sys.stdout.write(paths["text"].read_text())
    print(f"wrote {paths['csv']}, {paths['text']}, {paths['meta']}")
    return 0


def cmd_dynamic_range(args) -> int:
    specs = [FormatSpec.parse(t) for t in args.formats]
    print(f"{'format':<12} {'max':>24} {'min':>24} {'log10(max/min)':>15}")
    for spec in specs:
        mx, mn = codec.format_extrema(spec)
        print(f"{spec.tag:<12} {_num(mx):>24} {_num(mn):>24} {codec.dynamic_range(spec):>15.3f}")
    return 0


def _num(v) -> str:
    return f"{float(v):.6g}"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deep-positron", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", type=Path, help="JSON config document (default: packaged)")
        sp.add_argument("--seed", type=int, help="override the config seed")

    t = sub.add_parser("train", help="train a full-precision model")
    with_config(t)
    t.add_argument("--dataset", required=True)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--hidden", type=_hidden, help="comma-separated hidden layer sizes")
    t.add_argument("--epochs", type=int)
    t.add_argument("--learning-rate", type=float)
    t.set_defaults(func=cmd_train)

    q = sub.add_parser("quantize", help="round a trained model to a format")
    q.add_argument("--model", type=Path, required=True)
    q.add_argument("--format", required=True, help="e.g. posit8es0, float8e4, fixed8q4")
    q.add_argument("--out", type=Path, required=True)
    q.set_defaults(func=cmd_quantize)

    i = sub.add_parser("infer", help="classify a dataset's test split")
    with_config(i)
    i.add_argument("--model", type=Path, required=True)
    i.add_argument("--dataset", required=True)
    i.add_argument("--format", help="refuse to run unless the model has this format")
    i.add_argument("--engine", choices=("compiled", "emac"), default="compiled",
                   help="batched engine or one EMAC call per neuron (same results)")
    i.set_defaults(func=cmd_infer)

    s = sub.add_parser("sweep", help="accuracy across formats and widths")
    with_config(s)
    s.add_argument("--out", help="output directory")
    s.add_argument("--jobs", type=int, help="worker processes")
    s.add_argument("--datasets", help="comma-separated subset of the config datasets")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("dynamic-range", help="max, min and log10(max/min) per format")
    d.add_argument("formats", nargs="+")
    d.set_defaults(func=cmd_dynamic_range)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PositronError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
