"""Command-line harness: gen, train, eval, diagnose, report.

Every subcommand is a pure function of its options and input files, so
rerunning a command reproduces its outputs byte for byte. Options may come
from a plain-text config file (`key = value` per line, `#` comments) named
with --config; explicit flags override file values, which override the
built-in defaults.

Exit codes: 0 success, 1 usage error, 2 runtime or data error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import diagnostics, report, treebank
from .model import init_model, load_model, save_model
from .trainer import (
    TrainConfig,
    evaluate,
    read_train_log,
    train,
    write_train_log,
)

PROG = "treegrad"


class UsageError(Exception):
    """Bad flags or config values; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; route through UsageError
    # instead so usage problems get exit code 1 and data problems get 2.
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Option plumbing
# ---------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _band_index(text: str) -> int:
    value = int(text)
    if not 1 <= value <= 10:
        raise argparse.ArgumentTypeError(f"must be in 1..10, got {text}")
    return value


def _sizes(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected train,dev,test sizes, got {text!r}")
    try:
        sizes = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must be integers, got {text!r}")
    if any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError(f"sizes must be positive, got {text!r}")
    return sizes


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise argparse.ArgumentTypeError(
                f"expected one of {', '.join(options)}, got {text!r}"
            )
        return text

    return parse


def load_config_file(path) -> dict:
    """`key = value` lines; keys mirror long flag names without the dashes."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    values = {}
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path} line {line_no}: expected key = value, got {raw!r}")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(args: argparse.Namespace, table: Sequence[tuple]) -> None:
    """Fill in parsed-but-missing options from the config file, then defaults.

    `table` rows are (dest, parser, default, required): parser converts the
    config-file string, default of None plus required=True means the option
    must come from somewhere.
    """
    config = load_config_file(args.config) if args.config else {}
    known = {dest for dest, _, _, _ in table}
    unknown = sorted(set(config) - known)
    if unknown:
        raise UsageError(f"unknown config keys for this command: {', '.join(unknown)}")
    for dest, parse, default, required in table:
        value = getattr(args, dest, None)
        if value is None and dest in config:
            try:
                value = parse(config[dest])
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {dest}: {exc}")
        if value is None:
            value = default
        if value is None and required:
            raise UsageError(f"missing required option --{dest.replace('_', '-')}")
        setattr(args, dest, value)


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

_GEN_TABLE = [
    ("experiment", int, None, True),
    ("i", _band_index, None, True),
    ("sizes", _sizes, (10000, 1000, 1000), True),
    ("seed", int, 42, True),
    ("out", str, None, True),
]


def cmd_gen(args) -> int:
    _resolve(args, _GEN_TABLE)
    if args.experiment not in (1, 2):
        raise UsageError(f"--experiment must be 1 or 2, got {args.experiment}")
    generate = treebank.gen_dataset_exp1 if args.experiment == 1 else treebank.gen_dataset_exp2
    dataset = generate(args.i, sizes=args.sizes, seed=args.seed)
    out = treebank.write_dataset(dataset, args.out)
    total = sum(args.sizes)
    print(f"wrote {total} examples ({args.sizes[0]}/{args.sizes[1]}/{args.sizes[2]}) to {out}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

_TRAIN_TABLE = [
    ("data", str, None, True),
    ("model", _choice("rnn", "rlstm"), None, True),
    ("out", str, None, True),
    ("runs", _positive_int, 5, True),
    ("seed", int, 0, True),
    ("dim", _positive_int, 50, True),
    ("lr", _positive_float, 0.05, True),
    ("batch", _positive_int, None, False),  # default depends on the model
    ("patience", _positive_int, 5, True),
    ("max_epochs", _positive_int, 100, True),
    ("ratios", str, None, False),
    ("timing", _bool, False, True),
]


def _run_one(kind, dataset, config, run_dir, ratios_name, timing):
    """Train one seed; returns (best_epoch, dev_accuracy, test_accuracy)."""
    run_dir.mkdir(parents=True, exist_ok=True)
    model = init_model(kind, config.n_dim, config.seed)
    checkpoint = run_dir / "model.bin"
    sink = None
    collector = None
    if ratios_name:
        collector = diagnostics.RatioCollector(dataset.train)
        sink = collector.sink
        ratios_path = run_dir / ratios_name
        diagnostics.append_ratio_records([], ratios_path, header=True)
    flushed = 0
    best_seen = float("-inf")

    def epoch_hook(record, live_model):
        # checkpoint every new best epoch so the file never lags the log
        nonlocal flushed, best_seen
        if record.dev_accuracy > best_seen:
            best_seen = record.dev_accuracy
            save_model(live_model, checkpoint)
        if collector is not None:
            diagnostics.append_ratio_records(collector.records[flushed:], ratios_path)
            flushed = len(collector.records)

    result = train(model, dataset.train, dataset.dev, config,
                   sink=sink, epoch_hook=epoch_hook)
    save_model(result.model, checkpoint)
    write_train_log(result.log, run_dir / "log.csv", include_timing=timing)
    if collector is not None:
        summary = diagnostics.summarize(collector.records)
        stem = Path(ratios_name).stem
        diagnostics.write_ratio_summary(summary, run_dir / f"{stem}_summary.csv")
    test_accuracy = evaluate(result.model, dataset.test)
    return result.best_epoch, result.best_dev_accuracy, test_accuracy


def cmd_train(args) -> int:
    _resolve(args, _TRAIN_TABLE)
    if args.batch is None:
        args.batch = 20 if args.model == "rnn" else 5
    dataset = treebank.read_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds, best_epochs, dev_accs, test_accs = [], [], [], []
    for k in range(args.runs):
        seed = args.seed + k
        config = TrainConfig(learning_rate=args.lr, batch_size=args.batch,
                             patience=args.patience, max_epochs=args.max_epochs,
                             n_dim=args.dim, seed=seed)
        best_epoch, dev_acc, test_acc = _run_one(
            args.model, dataset, config, out / f"run{k}", args.ratios, args.timing
        )
        seeds.append(seed)
        best_epochs.append(best_epoch)
        dev_accs.append(dev_acc)
        test_accs.append(test_acc)
        print(f"run {k} (seed {seed}): best epoch {best_epoch}, "
              f"dev {dev_acc:.4f}, test {test_acc:.4f}")
    prov = dataset.provenance
    base_config = TrainConfig(learning_rate=args.lr, batch_size=args.batch,
                              patience=args.patience, max_epochs=args.max_epochs,
                              n_dim=args.dim, seed=args.seed)
    summary = report.RunSummary(
        model=args.model,
        experiment=prov.experiment,
        index=prov.index,
        dataset_seed=prov.seed,
        sizes=tuple(prov.sizes),
        config=asdict(base_config),
        run_seeds=tuple(seeds),
        best_epochs=tuple(best_epochs),
        dev_accuracies=tuple(dev_accs),
        test_accuracies=tuple(test_accs),
    )
    report.write_run_summary(summary, out / "summary.json")
    print(f"best test accuracy {summary.max_test_accuracy:.4f} "
          f"(run {summary.best_run} leads on dev); summary in {out / 'summary.json'}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

_EVAL_TABLE = [
    ("checkpoint", str, None, True),
    ("data", str, None, True),
    ("split", _choice("train", "dev", "test"), "test", True),
]


def cmd_eval(args) -> int:
    _resolve(args, _EVAL_TABLE)
    model = load_model(args.checkpoint)
    examples = treebank.read_examples(Path(args.data) / f"{args.split}.txt")
    accuracy = evaluate(model, examples)
    hits = round(accuracy * len(examples))
    print(f"{args.split} accuracy {accuracy:.4f} ({hits}/{len(examples)} examples)")
    return 0


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------

_DIAGNOSE_TABLE = [
    ("checkpoint", str, None, True),
    ("data", str, None, True),
    ("out", str, None, True),
    ("epochs", _positive_int, 10, True),
    ("seed", int, 0, True),
    ("lr", _positive_float, 0.05, True),
    ("batch", _positive_int, None, False),
    ("timing", _bool, False, True),
]


def cmd_diagnose(args) -> int:
    _resolve(args, _DIAGNOSE_TABLE)
    model = load_model(args.checkpoint)
    if args.batch is None:
        args.batch = 20 if model.kind == "rnn" else 5
    dataset = treebank.read_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # patience = max_epochs disables early stopping: the best epoch is
    # always >= 1, so epoch - best can never reach the patience threshold.
    config = TrainConfig(learning_rate=args.lr, batch_size=args.batch,
                         patience=args.epochs, max_epochs=args.epochs,
                         n_dim=model.n, seed=args.seed)
    collector = diagnostics.RatioCollector(dataset.train)
    result = train(model, dataset.train, dataset.dev, config, sink=collector.sink)
    diagnostics.write_ratio_records(collector.records, out / "ratios.csv")
    summary = diagnostics.summarize(collector.records)
    diagnostics.write_ratio_summary(summary, out / "ratios_summary.csv")
    write_train_log(result.log, out / "log.csv", include_timing=args.timing)
    save_model(model, out / "model.bin")  # state after the final epoch
    kept = len(collector.records) - summary.undefined
    print(f"collected {len(collector.records)} ratio records over {args.epochs} epochs "
          f"({kept} defined); outputs in {out}")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

_REPORT_TABLE = [
    ("summaries", None, None, False),  # only settable as flags
    ("ratios", str, None, False),
    ("depth", _positive_int, None, False),
    ("log", str, None, False),
    ("out", str, None, True),
]


def cmd_report(args) -> int:
    _resolve(args, _REPORT_TABLE)
    if not args.summaries and not args.ratios:
        raise UsageError("nothing to report: give --summaries and/or --ratios")
    if args.depth is not None and not args.ratios:
        raise UsageError("--depth needs --ratios")
    if args.log is not None and args.depth is None:
        raise UsageError("--log needs --depth")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.summaries:
        summaries = [report.load_run_summary(p) for p in args.summaries]
        rows = report.accuracy_curve_rows(summaries)
        name = "accuracy_vs_length" if rows[0].experiment == 1 else "accuracy_vs_depth"
        written.append(report.write_accuracy_curve(rows, out / f"{name}.csv"))
        written.append(
            report.plot_accuracy_curve(
                rows, out / f"{name}.svg", sources=list(args.summaries),
                title=f"experiment {rows[0].experiment}",
            )
        )
    if args.ratios:
        summary = report.load_ratio_input(args.ratios)
        written.append(diagnostics.write_ratio_summary(summary, out / "ratio_vs_depth.csv"))
        written.append(
            report.plot_ratio_vs_depth(summary, out / "ratio_vs_depth.svg",
                                       sources=[args.ratios])
        )
        if args.depth is not None:
            log = read_train_log(args.log) if args.log else None
            rows = report.ratio_vs_epoch_rows(summary, args.depth, log=log)
            stem = f"ratio_vs_epoch_depth{args.depth}"
            sources = [args.ratios] + ([args.log] if args.log else [])
            written.append(report.write_ratio_vs_epoch(rows, out / f"{stem}.csv"))
            written.append(
                report.plot_ratio_vs_epoch(rows, args.depth, out / f"{stem}.svg",
                                           sources=sources)
            )
    for path in written:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    gen = sub.add_parser("gen", help="generate a labeled tree dataset",
                         description="Generate a keyword-labeled tree dataset.")
    gen.add_argument("--experiment", type=int, choices=(1, 2),
                     help="1: sentence-length bands; 2: controlled keyword depth")
    gen.add_argument("--i", type=_band_index, metavar="I",
                     help="band index 1..10 (lengths 10i-9..10i, or depths i/i+1)")
    gen.add_argument("--sizes", type=_sizes, metavar="TR,DEV,TEST",
                     help="split sizes (default: 10000,1000,1000)")
    gen.add_argument("--seed", type=int, help="dataset seed (default: 42)")
    gen.add_argument("--out", help="output directory")
    gen.set_defaults(func=cmd_gen)

    tr = sub.add_parser("train", help="train one model over several seeds",
                        description="Train a model on a generated dataset, one run per seed.")
    tr.add_argument("--data", help="dataset directory from gen")
    tr.add_argument("--model", type=_choice("rnn", "rlstm"), metavar="{rnn,rlstm}",
                    help="composition architecture")
    tr.add_argument("--out", help="output directory (per-run subdirs + summary.json)")
    tr.add_argument("--runs", type=_positive_int, help="independent seeds (default: 5)")
    tr.add_argument("--seed", type=int,
                    help="base seed; run k uses seed+k (default: 0)")
    tr.add_argument("--dim", type=_positive_int, help="hidden width n (default: 50)")
    tr.add_argument("--lr", type=_positive_float, help="learning rate (default: 0.05)")
    tr.add_argument("--batch", type=_positive_int,
                    help="minibatch size (default: 20 for rnn, 5 for rlstm)")
    tr.add_argument("--patience", type=_positive_int,
                    help="early-stop patience in epochs (default: 5)")
    tr.add_argument("--max-epochs", type=_positive_int, dest="max_epochs",
                    help="epoch cap (default: 100)")
    tr.add_argument("--ratios", metavar="NAME",
                    help="also record error ratios to NAME in each run dir, "
                         "streamed per epoch")
    tr.add_argument("--timing", nargs="?", const=True, type=_bool,
                    help="write real per-epoch seconds to the log")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a split",
                        description="Report a checkpoint's accuracy on one dataset split.")
    ev.add_argument("--checkpoint", help="model file from train/diagnose")
    ev.add_argument("--data", help="dataset directory")
    ev.add_argument("--split", type=_choice("train", "dev", "test"),
                    metavar="{train,dev,test}", help="split to score (default: test)")
    ev.set_defaults(func=cmd_eval)

    dg = sub.add_parser("diagnose", help="collect error ratios during continued training",
                        description="Continue training a checkpoint for a fixed number "
                                    "of epochs, recording keyword/root error ratios.")
    dg.add_argument("--checkpoint", help="starting model file")
    dg.add_argument("--data", help="dataset directory")
    dg.add_argument("--out", help="output directory")
    dg.add_argument("--epochs", type=_positive_int,
                    help="exact epochs to run, no early stop (default: 10)")
    dg.add_argument("--seed", type=int, help="shuffle seed (default: 0)")
    dg.add_argument("--lr", type=_positive_float, help="learning rate (default: 0.05)")
    dg.add_argument("--batch", type=_positive_int,
                    help="minibatch size (default: 20 for rnn, 5 for rlstm)")
    dg.add_argument("--timing", nargs="?", const=True, type=_bool,
                    help="write real per-epoch seconds to the log")
    dg.set_defaults(func=cmd_diagnose)

    rp = sub.add_parser("report", help="build CSV tables and SVG figures",
                        description="Aggregate training summaries and ratio CSVs into "
                                    "tables and figures.")
    rp.add_argument("--summaries", nargs="+", metavar="SUMMARY.JSON",
                    help="summary.json files, one per model/dataset cell")
    rp.add_argument("--ratios", metavar="CSV",
                    help="ratio records or ratio summary CSV")
    rp.add_argument("--depth", type=_positive_int,
                    help="also slice the ratio table at this keyword depth")
    rp.add_argument("--log", metavar="CSV",
                    help="train log to overlay dev accuracy (needs --depth)")
    rp.add_argument("--out", help="output directory")
    rp.set_defaults(func=cmd_report)

    for p in (gen, tr, ev, dg, rp):
        p.add_argument("--config", metavar="FILE",
                       help="read defaults from a key = value file; flags win")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_usage(sys.stderr)
            print(f"{PROG}: error: a command is required", file=sys.stderr)
            return 1
        return args.func(args)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
