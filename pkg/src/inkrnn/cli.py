"""``inkrnn`` command line: preprocess, synth, train-clf, train-gen, eval,
sample and quality.  Every report goes to stdout as one JSON document."""

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import classifier, generator, ink, optim
from .data_io import (
    BUILTIN_TEMPLATES,
    load_model,
    read_jsonl,
    render_svg,
    save_model,
    synthesize_corpus,
    write_jsonl,
)
from .data_io.jsonl import sample_to_record
from .data_io.quality import quality_report
from .errors import (
    ConfigError,
    DegenerateInk,
    EmptyInk,
    InkError,
    InvalidConfig,
    LabelError,
    NumericalError,
    ParseError,
    TokenError,
)

SEED_ENV = "INKRNN_SEED"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_FOUND = 3
EXIT_PARSE = 4
EXIT_INK = 5
EXIT_CONFIG = 6
EXIT_NUMERICAL = 7
EXIT_INTERNAL = 8

# Desk presets train faster with a larger step; full-scale presets keep the
# optimizer defaults.
TRAIN_DEFAULTS = {
    "desk-clf": dict(lr=3e-3, max_epochs=15),
    "desk-gen": dict(lr=3e-3, max_epochs=40),
}


class UsageError(Exception):
    pass


def _seed(args):
    if args.seed is not None:
        return args.seed
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _emit(report):
    json.dump(report, sys.stdout, indent=1, sort_keys=False)
    sys.stdout.write("\n")


def _parse_overrides(pairs):
    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key=value, got {pair!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _split_overrides(overrides, *config_types):
    """Route ``key=value`` overrides to the dataclass that owns the field."""
    parts = [{} for _ in config_types]
    for key, value in overrides.items():
        for i, t in enumerate(config_types):
            if key in {f.name for f in dataclasses.fields(t)}:
                parts[i][key] = tuple(value) if isinstance(value, list) else value
                break
        else:
            raise ConfigError(f"unknown hyperparameter {key!r}")
    return parts


def _preprocess_cfg(args):
    base = ink.PRESETS[args.preset]
    return ink.PreprocessConfig(
        base.dist_factor if args.dist_factor is None else args.dist_factor,
        base.cos_threshold if args.cos_threshold is None else args.cos_threshold,
    )


def _prepare(corpus, cfg, encode):
    """Preprocess and encode every sample; unusable characters are skipped."""
    out, skipped = [], 0
    for s in corpus:
        try:
            out.append((encode(ink.preprocess(s, cfg)), s.label))
        except (EmptyInk, DegenerateInk):
            skipped += 1
    if not out:
        raise EmptyInk("no usable characters in the input corpus")
    return out, skipped


def _opt_config(args, preset_name, overrides):
    base = dict(TRAIN_DEFAULTS.get(preset_name, {}))
    base.update(overrides)
    for flag, key in (("lr", "lr"), ("epochs", "max_epochs"), ("batch", "batch_size")):
        value = getattr(args, flag)
        if value is not None:
            base[key] = value
    return optim.OptConfig(**base)


def _history_path(checkpoint):
    return Path(checkpoint).with_suffix(".history.jsonl")


# ---------------------------------------------------------------------------
# commands


def cmd_preprocess(args):
    cfg = _preprocess_cfg(args)
    corpus = read_jsonl(args.inp)
    kept, skipped, before, after = [], 0, [], []
    for s in corpus:
        try:
            p = ink.preprocess(s, cfg)
        except (EmptyInk, DegenerateInk):
            skipped += 1
            continue
        kept.append(p)
        before.append(len(s))
        after.append(len(p))
    write_jsonl(kept, args.out)
    reduction = float(np.mean(1.0 - np.array(after) / np.array(before))) if kept else 0.0
    return {
        "command": "preprocess",
        "preset": args.preset,
        "dist_factor": cfg.dist_factor,
        "cos_threshold": cfg.cos_threshold,
        "n_in": len(corpus),
        "n_out": len(kept),
        "skipped": skipped,
        "mean_length_before": float(np.mean(before)) if kept else 0.0,
        "mean_length_after": float(np.mean(after)) if kept else 0.0,
        "mean_reduction": reduction,
        "out": str(args.out),
    }


def cmd_synth(args, seed):
    if not 1 <= args.classes <= len(BUILTIN_TEMPLATES):
        raise ConfigError(f"--classes must lie in [1, {len(BUILTIN_TEMPLATES)}]")
    rng = np.random.default_rng(seed)
    corpus = synthesize_corpus(BUILTIN_TEMPLATES[: args.classes], args.per_class, args.noise, rng, split=args.split)
    write_jsonl(corpus, args.out)
    return {
        "command": "synth",
        "classes": args.classes,
        "per_class": args.per_class,
        "noise": args.noise,
        "n": len(corpus),
        "templates": [t.name for t in BUILTIN_TEMPLATES[: args.classes]],
        "out": str(args.out),
    }


def _class_count(corpus, override):
    labels = [s.label for s in corpus if s.label is not None]
    if len(labels) != len(corpus.samples):
        raise LabelError("training data must be labelled")
    return override if override is not None else max(labels) + 1


def cmd_train_clf(args, seed):
    rng = np.random.default_rng(seed)
    net_over, opt_over = _split_overrides(_parse_overrides(args.set), classifier.NetSpec, optim.OptConfig)
    corpus = read_jsonl(args.inp)
    n_classes = _class_count(corpus, args.n_classes)
    spec = classifier.preset(args.arch, n_classes, **net_over)
    opt = _opt_config(args, args.arch, opt_over)
    cfg = ink.RECOGNITION
    data, skipped = _prepare(corpus, cfg, ink.to_line_features)
    model = classifier.ClassifierModel.init(spec, rng)
    model, history = classifier.train(model, data, opt, rng)
    extra = {"preprocess": dataclasses.asdict(cfg), "optimizer": opt.to_dict(), "seed": seed, "arch": args.arch}
    stem = save_model(args.checkpoint, model, extra)
    _history_path(stem).write_text(optim.history_jsonl(history), encoding="utf-8")
    return {
        "command": "train-clf",
        "arch": args.arch,
        "architecture": spec.describe(),
        "optimizer": opt.to_dict(),
        "n_train": len(data),
        "skipped": skipped,
        "history": history,
        "checkpoint": str(stem),
    }


def cmd_train_gen(args, seed):
    rng = np.random.default_rng(seed)
    gen_over, opt_over = _split_overrides(_parse_overrides(args.set), generator.GenConfig, optim.OptConfig)
    corpus = read_jsonl(args.inp)
    n_classes = _class_count(corpus, args.n_classes)
    config = generator.preset(args.arch, n_classes, **gen_over)
    opt = _opt_config(args, args.arch, opt_over)
    cfg = ink.GENERATION
    data, skipped = _prepare(corpus, cfg, ink.to_gen_tokens)
    model = generator.GeneratorModel.init(config, rng)
    model, history = generator.train(model, data, opt, rng)
    extra = {"preprocess": dataclasses.asdict(cfg), "optimizer": opt.to_dict(), "seed": seed, "arch": args.arch}
    stem = save_model(args.checkpoint, model, extra)
    _history_path(stem).write_text(optim.history_jsonl(history), encoding="utf-8")
    return {
        "command": "train-gen",
        "arch": args.arch,
        "config": config.to_dict(),
        "optimizer": opt.to_dict(),
        "n_train": len(data),
        "skipped": skipped,
        "history": history,
        "checkpoint": str(stem),
    }


def _stored_preprocess(extra, default):
    p = extra.get("preprocess")
    return ink.PreprocessConfig(**p) if p else default


def cmd_eval(args, seed):
    rng = np.random.default_rng(seed)
    model, extra = load_model(args.checkpoint, expect="classifier")
    corpus = read_jsonl(args.inp, class_count=model.spec.n_classes)
    data, skipped = _prepare(corpus, _stored_preprocess(extra, ink.RECOGNITION), ink.to_line_features)
    if args.ensemble is None:
        report = classifier.evaluate(model, data)
    else:
        if args.ensemble < 1 or not 0 <= args.p < 1:
            raise ConfigError("--ensemble must be >= 1 and --p in [0, 1)")
        report = classifier.evaluate(model, data, n_sub=args.ensemble, p=args.p, rng=rng)
    return {
        "command": "eval",
        "ensemble": args.ensemble,
        "p": args.p if args.ensemble is not None else None,
        "n": len(data),
        "skipped": skipped,
        **report,
    }


def cmd_sample(args, seed):
    rng = np.random.default_rng(seed)
    model, _ = load_model(args.checkpoint, expect="generator")
    if args.n < 1:
        raise ConfigError("--n must be at least 1")
    samples = generator.sample_characters(model, [args.cls] * args.n, rng, args.max_len)
    out_dir = Path(args.svg_out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, s in enumerate(samples):
        path = out_dir / f"class{args.cls}_{i:03d}.svg"
        path.write_text(render_svg(s, title=f"class {args.cls}"), encoding="utf-8")
        written.append(str(path))
    jsonl_path = Path(args.jsonl_out) if args.jsonl_out else out_dir / f"class{args.cls}.jsonl"
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for s in samples:
            rec = sample_to_record(s)
            rec["end"] = "truncated" if s.truncated else "end_of_char"
            fh.write(json.dumps(rec) + "\n")
    return {
        "command": "sample",
        "class": args.cls,
        "n": args.n,
        "svg": written,
        "jsonl": str(jsonl_path),
        "truncated": int(sum(s.truncated for s in samples)),
    }


def cmd_quality(args, seed):
    rng = np.random.default_rng(seed)
    gen, _ = load_model(args.gen, expect="generator")
    clf, extra = load_model(args.clf, expect="classifier")
    classes = args.classes if args.classes else list(range(gen.config.n_classes))
    report = quality_report(
        gen, clf, classes, args.n_per_class, rng, _stored_preprocess(extra, ink.RECOGNITION), max_len=args.max_len
    )
    report["per_class"] = {str(k): v for k, v in report["per_class"].items()}
    return {"command": "quality", **report}


# ---------------------------------------------------------------------------
# parser


def build_parser():
    ap = argparse.ArgumentParser(prog="inkrnn", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default: ${SEED_ENV} or 0)")
        return p

    p = common(sub.add_parser("preprocess", help="remove redundant points and normalize"))
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=sorted(ink.PRESETS), default="recognition")
    p.add_argument("--dist-factor", type=float, default=None)
    p.add_argument("--cos-threshold", type=float, default=None)

    p = common(sub.add_parser("synth", help="write a synthetic template corpus"))
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--split", default="train")
    p.add_argument("--out", required=True)

    for name, presets, default in (
        ("train-clf", classifier.ARCHITECTURES, "desk-clf"),
        ("train-gen", generator.PRESETS, "desk-gen"),
    ):
        p = common(sub.add_parser(name, help=f"train a {'classifier' if name == 'train-clf' else 'generator'}"))
        p.add_argument("--in", dest="inp", required=True)
        p.add_argument("--arch", choices=sorted(presets), default=default)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--batch", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--n-classes", type=int, default=None)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any model or optimizer field")
        p.add_argument("--checkpoint", required=True)

    p = common(sub.add_parser("eval", help="evaluate a classifier checkpoint"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--ensemble", type=int, default=None)
    p.add_argument("--p", type=float, default=0.3)

    p = common(sub.add_parser("sample", help="draw characters from a generator checkpoint"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--class", dest="cls", type=int, required=True)
    p.add_argument("--n", type=int, default=9)
    p.add_argument("--svg-out", required=True)
    p.add_argument("--jsonl-out", default=None)
    p.add_argument("--max-len", type=int, default=None)

    p = common(sub.add_parser("quality", help="classify generated characters"))
    p.add_argument("--gen", required=True)
    p.add_argument("--clf", required=True)
    p.add_argument("--n-per-class", type=int, default=100)
    p.add_argument("--classes", type=int, nargs="*", default=None)
    p.add_argument("--max-len", type=int, default=None)
    return ap


COMMANDS = {
    "synth": cmd_synth,
    "train-clf": cmd_train_clf,
    "train-gen": cmd_train_gen,
    "eval": cmd_eval,
    "sample": cmd_sample,
    "quality": cmd_quality,
}


def _exit_code(exc):
    if isinstance(exc, FileNotFoundError):
        return EXIT_NOT_FOUND
    if isinstance(exc, ParseError):
        return EXIT_PARSE
    if isinstance(exc, (EmptyInk, DegenerateInk)):
        return EXIT_INK
    if isinstance(exc, (InvalidConfig, LabelError, TokenError)):
        return EXIT_CONFIG
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_INTERNAL


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        seed = _seed(args)
        if args.command == "preprocess":
            report = cmd_preprocess(args)
        else:
            report = COMMANDS[args.command](args, seed)
        _emit({"seed": seed, **report})
    except UsageError as exc:
        print(f"inkrnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"inkrnn: error: no such file: {exc.filename}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except (InkError, OSError) as exc:
        print(f"inkrnn: error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
