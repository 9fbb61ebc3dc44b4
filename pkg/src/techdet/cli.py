"""Command-line front-end: synth, train, detect, eval, viz.

Options come from flags and an optional key=value config file, flags
winning. The effective configuration is echoed to stdout and to a run
log next to the output. Exit codes: 0 success, 1 input or usage error,
2 internal/numerical failure. All randomness flows from --seed;
--threads caps BLAS workers (default 1, for reproducible runs).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_channels(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad channel list {text!r}") from None


# Per-command option tables: name -> (caster, default, help). A None default
# with no config-file value means the option is required.
_COMMON = {
    "seed": (int, 0, "master random seed"),
    "threads": (int, 1, "BLAS thread cap (1 = deterministic)"),
    "out": (str, None, "output path"),
}

_OPTIONS = {
    "synth": {
        **_COMMON,
        "clips": (str, None, "clip manifest CSV (path,label rows)"),
        "vocab": (str, None, "vocabulary JSON file"),
        "n": (int, None, "number of segments to synthesize"),
    },
    "train": {
        **_COMMON,
        "train": (str, None, "training dataset manifest"),
        "val": (str, None, "validation dataset manifest"),
        "k": (int, None, "class count (defaults to the vocabulary size)"),
        "channels": (_parse_channels, (16, 32, 64, 64), "conv widths, comma-separated"),
        "deconv_kernel": (int, 8, "time upsampler kernel"),
        "deconv_stride": (int, 8, "time upsampler stride"),
        "learning_rate": (float, 1e-3, "Adam learning rate"),
        "epochs": (int, 30, "training epochs"),
        "batch_size": (int, 8, "mini-batch size"),
    },
    "detect": {
        **_COMMON,
        "checkpoint": (str, None, "trained model checkpoint"),
        "audio": (str, None, "input WAV (any duration)"),
        "dump_posteriors": (str, "", "also write frame posteriors to this path"),
    },
    "eval": {
        **_COMMON,
        "checkpoint": (str, None, "trained model checkpoint"),
        "test": (str, None, "test dataset manifest"),
    },
    "viz": {
        **_COMMON,
        "reference": (str, None, "reference events JSONL"),
        "predicted": (str, None, "predicted events JSONL"),
        "vocab": (str, "", "vocabulary JSON (default: labels found in the files)"),
        "duration": (float, 0.0, "timeline length in seconds (default: last offset)"),
        "px_per_second": (float, 100.0, "horizontal scale"),
    },
}

_REQUIRED_NOTE = "(required; flag or config file)"


def _build_parser() -> _Parser:
    parser = _Parser(prog="techdet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    for command, table in _OPTIONS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="key=value config file")
        for name, (caster, default, help_text) in table.items():
            note = _REQUIRED_NOTE if default is None else f"(default: {default})"
            p.add_argument(
                f"--{name.replace('_', '-')}", dest=name, type=caster, default=None,
                help=f"{help_text} {note}",
            )
    return parser


def _read_config_file(path: str) -> dict[str, str]:
    from .errors import InputError

    values: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read config file {path}: {e}") from None
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise InputError(f"{path}:{line_no}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _effective_options(command: str, args: argparse.Namespace) -> dict:
    from .errors import InputError

    table = _OPTIONS[command]
    file_values = _read_config_file(args.config) if args.config else {}
    unknown = set(file_values) - set(table)
    if unknown:
        raise InputError(f"unknown config keys for {command}: {', '.join(sorted(unknown))}")

    effective = {}
    for name, (caster, default, _) in table.items():
        flag_value = getattr(args, name)
        if flag_value is not None:
            effective[name] = flag_value
        elif name in file_values:
            try:
                effective[name] = caster(file_values[name])
            except (ValueError, argparse.ArgumentTypeError) as e:
                raise InputError(f"config key {name}: {e}") from None
        elif default is not None:
            effective[name] = default
        else:
            raise InputError(f"missing required option --{name.replace('_', '-')}")
    return effective


def _echo_options(command: str, opts: dict, log_path: Path) -> None:
    lines = [f"command = {command}"] + [
        f"{name} = {_format_value(opts[name])}" for name in sorted(opts)
    ]
    text = "\n".join(lines)
    print(text)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    log_path.write_text(text + "\n")


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _log_path(command: str, out: str) -> Path:
    out_path = Path(out)
    if command == "synth":
        return out_path / "run.log"
    return out_path.parent / (out_path.name + ".log")


# --- command bodies ----------------------------------------------------------

def _cmd_synth(opts: dict) -> int:
    from .dataset import TechniqueVocabulary, build_dataset, load_clip_library

    vocabulary = TechniqueVocabulary.from_json_file(opts["vocab"])
    library = load_clip_library(opts["clips"], vocabulary)
    manifest = build_dataset(library, opts["n"], opts["seed"], opts["out"])
    print(f"wrote {len(manifest.segments)} segments to {opts['out']}")
    return 0


def _cmd_train(opts: dict) -> int:
    from .dataset import load_manifest
    from .fcn import FcnConfig, save_checkpoint, train

    train_man = load_manifest(opts["train"])
    val_man = load_manifest(opts["val"])
    k = opts["k"] if opts.get("k") is not None else train_man.vocabulary.k
    config = FcnConfig(
        k=k,
        channels=opts["channels"],
        deconv_kernel=opts["deconv_kernel"],
        deconv_stride=opts["deconv_stride"],
        learning_rate=opts["learning_rate"],
        epochs=opts["epochs"],
        batch_size=opts["batch_size"],
        seed=opts["seed"],
    )
    params, history = train(config, train_man, val_man, log=print)
    save_checkpoint(params, opts["out"])
    best = max(history, key=lambda row: row["val_accuracy"], default=None)
    if best:
        print(f"best val_accuracy {best['val_accuracy']:.4f} at epoch {best['epoch']}")
    print(f"saved checkpoint to {opts['out']}")
    return 0


def _cmd_detect(opts: dict) -> int:
    from .audio_io import read_wav
    from .dataset import write_annotation
    from .detector import decode_events, detect_variable, write_posteriors
    from .errors import InputError
    from .fcn import load_checkpoint

    params = load_checkpoint(opts["checkpoint"])
    if params.vocabulary is None:
        raise InputError(f"{opts['checkpoint']}: checkpoint carries no vocabulary")
    clip = read_wav(opts["audio"])
    pred = detect_variable(params, clip)
    events = decode_events(pred, params.vocabulary)
    write_annotation(opts["out"], events, params.vocabulary)
    if opts["dump_posteriors"]:
        write_posteriors(opts["dump_posteriors"], pred)
    print(f"wrote {len(events.events)} events ({pred.n_frames} frames) to {opts['out']}")
    return 0


def _cmd_eval(opts: dict) -> int:
    from .evaluator import evaluate_dataset, save_confusion_csv, save_report
    from .fcn import load_checkpoint

    params = load_checkpoint(opts["checkpoint"])
    report = evaluate_dataset(params, opts["test"])
    out_path = Path(opts["out"])
    save_report(report, out_path)
    confusion_path = out_path.with_name(out_path.stem + "_confusion.csv")
    save_confusion_csv(report, confusion_path)
    print(f"average frame accuracy: {report.average_accuracy:.4f}")
    print(f"wrote report to {out_path} and {confusion_path}")
    return 0


def _cmd_viz(opts: dict) -> int:
    import json as _json

    from .dataset import TechniqueVocabulary, read_annotation
    from .errors import DataError
    from .evaluator import render_event_roll

    ref_path, pred_path = opts["reference"], opts["predicted"]
    if opts["vocab"]:
        vocabulary = TechniqueVocabulary.from_json_file(opts["vocab"])
    else:
        labels: list[str] = []
        for path in (ref_path, pred_path):
            for line in Path(path).read_text().splitlines():
                if line.strip():
                    name = _json.loads(line).get("label")
                    if name and name not in labels:
                        labels.append(name)
        if len(labels) < 2:
            raise DataError("need --vocab when the annotations use fewer than 2 labels")
        vocabulary = TechniqueVocabulary(labels=tuple(labels), other_index=len(labels) - 1)

    reference = read_annotation(ref_path, vocabulary)
    predicted = read_annotation(pred_path, vocabulary)
    duration = opts["duration"]
    if duration <= 0:
        offsets = [ev.offset for ann in (reference, predicted) for ev in ann.events]
        if not offsets:
            raise DataError("both annotations are empty and no --duration was given")
        duration = max(offsets)
    render_event_roll(
        reference, predicted, duration, vocabulary, opts["out"],
        px_per_second=opts["px_per_second"],
    )
    print(f"wrote event roll to {opts['out']}")
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "detect": _cmd_detect,
    "eval": _cmd_eval,
    "viz": _cmd_viz,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1

    threads = args.threads if args.threads is not None else 1
    for var in _THREAD_VARS:  # must happen before numpy gets imported
        os.environ.setdefault(var, str(threads))

    from .errors import InputError, TechdetError

    try:
        opts = _effective_options(args.command, args)
        _echo_options(args.command, opts, _log_path(args.command, opts["out"]))
        return _HANDLERS[args.command](opts)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: file not found: {e.filename or e}", file=sys.stderr)
        return 1
    except TechdetError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - last-resort mapping
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
