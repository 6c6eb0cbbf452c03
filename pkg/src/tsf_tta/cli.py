"""Command-line entry point: ``tsf-tta {synth,pretrain,run,paas}``."""

from __future__ import annotations

import argparse
import json
import sys

from . import serialize
from .data import CsvDatasetSpec, SynthSpec, atomic_write_text, load_csv, synth_generate, write_csv
from .engine import TtaConfig, dumps_report, run_baseline, run_report, run_stream, trace_csv
from .errors import TsfTtaError
from .forecasters import (
    DLinearForecaster,
    LinearForecaster,
    NormWrapper,
    TrainConfig,
    fit_iterative,
    fit_ridge,
    mse,
)
from .series import SplitSpec, chronological_split, make_windows, stack_windows, standardize
from .spectral import paas

TTA_LR_GRID = (5e-3, 3e-3, 1e-3, 5e-4, 1e-4)
ALPHA_GRID = (0.01, 0.05, 0.1, 0.3)


def _has_timestamp(path: str) -> bool:
    """True when the first data cell of the file is not a number."""
    with open(path) as fh:
        for i, line in enumerate(fh):
            cell = line.split(",")[0].strip()
            try:
                float(cell)
                return False
            except ValueError:
                if i > 0:
                    return True
    return False


def _load(args):
    ts = args.timestamp_column or _has_timestamp(args.data)
    return load_csv(CsvDatasetSpec(args.data, has_timestamp_column=ts))


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="CSV file, one row per time step")
    p.add_argument("--timestamp-column", action="store_true",
                   help="drop the first column (auto-detected when non-numeric)")
    p.add_argument("--split", default="0.6,0.2,0.2", help="train,val,test ratios")
    p.add_argument("--standardize", action="store_true", help="z-score with training-split statistics")


def cmd_synth(args) -> int:
    series = synth_generate(SynthSpec.from_json(args.spec))
    write_csv(series, args.out)
    print(f"wrote {series.T} x {series.C} series to {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    series = _load(args)
    train, val, test = chronological_split(series, SplitSpec.parse(args.split))
    if args.standardize:
        train, val, test = standardize(train, val, test)
    tr_w = make_windows(train, args.L, args.H)
    va_w = make_windows(val, args.L, args.H)
    n_vars = series.C if args.per_variable else None
    if args.ridge:
        if args.model != "linear":
            raise TsfTtaError("--ridge only applies to --model linear")
        model = fit_ridge(tr_w, args.ridge_lambda, per_variable=args.per_variable, instance_norm=args.norm)
    else:
        if args.model == "linear":
            model = LinearForecaster.initial(args.L, args.H, seed=args.seed, n_vars=n_vars)
        else:
            model = DLinearForecaster.initial(args.L, args.H, kernel=args.kernel, seed=args.seed, n_vars=n_vars)
        if args.norm:
            model = NormWrapper(model)
        cfg = TrainConfig(epochs=args.epochs, batch=args.batch, lr=args.lr, weight_decay=args.wd, seed=args.seed)
        model = fit_iterative(model, tr_w, va_w, cfg)
    train_mse = mse(model, *stack_windows(tr_w))
    val_mse = mse(model, *stack_windows(va_w))
    meta = {"L": args.L, "H": args.H, "split": args.split, "train_mse": train_mse, "val_mse": val_mse}
    serialize.save(args.out, model, meta=meta)
    print(json.dumps({"model": args.out, "train_mse": train_mse, "val_mse": val_mse}))
    return 0


def cmd_run(args) -> int:
    model, _, _, meta = serialize.load(args.model_file)
    L = args.L if args.L is not None else model.L
    H = args.H if args.H is not None else model.H
    if (L, H) != (model.L, model.H):
        raise TsfTtaError(f"--L/--H ({L}, {H}) do not match the model ({model.L}, {model.H})")
    series = _load(args)
    train, _, test = chronological_split(series, SplitSpec.parse(args.split))
    if args.standardize:
        train, test = standardize(train, test)
    config = TtaConfig(
        L=L, H=H, lr=args.tta_lr, alpha_init=args.alpha_init,
        steps_per_event=args.steps_per_event,
        enable_full_loss=not args.no_full_loss,
        enable_adjustment=not args.no_adjust,
        fixed_pogt=args.fixed_pogt,
    )
    if args.tta_lr not in TTA_LR_GRID and args.tta_lr != 0:
        print(f"note: --tta-lr {args.tta_lr} is outside the usual grid {TTA_LR_GRID}", file=sys.stderr)
    if args.alpha_init not in ALPHA_GRID:
        print(f"note: --alpha-init {args.alpha_init} is outside the usual grid {ALPHA_GRID}", file=sys.stderr)

    baseline, base_records = run_baseline(model, test, L, H)
    extra = {"data": args.data, "model_file": args.model_file, "split": args.split, "no_tta": args.no_tta}
    if args.no_tta:
        report = run_report(config, baseline, None, extra=extra)
        records = base_records
    else:
        tafas, ledger = run_stream(model, test, config)
        report = run_report(config, baseline, tafas, ledger, extra=extra)
        records = ledger.records
    atomic_write_text(args.report, dumps_report(report))
    if args.trace:
        atomic_write_text(args.trace, trace_csv(records, test))
    print(json.dumps({"mse": report["mse"], "mae": report["mae"], "baseline_mse": baseline.mse}))
    return 0


def cmd_paas(args) -> int:
    series = _load(args)
    windows = make_windows(series, args.L, args.H)
    if not 0 <= args.window_index < len(windows):
        raise TsfTtaError(f"--window-index must lie in [0, {len(windows) - 1}]")
    w = windows[args.window_index]
    rep = paas(w.lookback, args.H)
    out = {"origin": w.origin, **rep.as_dict()}
    if not args.amplitudes:
        out.pop("amplitudes")
    print(json.dumps(out, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsf-tta", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic series")
    p.add_argument("--spec", required=True, help="JSON synth spec")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pretrain", help="fit and save a source forecaster")
    _add_data_args(p)
    p.add_argument("--model", choices=("linear", "dlinear"), default="linear")
    p.add_argument("--norm", action="store_true", help="wrap in instance normalization")
    p.add_argument("--per-variable", action="store_true", help="one weight matrix per variable")
    p.add_argument("--kernel", type=int, default=25, help="DLinear moving-average width")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--H", type=int, required=True)
    p.add_argument("--ridge", action="store_true", help="closed-form fit (linear only)")
    p.add_argument("--ridge-lambda", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--wd", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("run", help="replay the test split with or without adaptation")
    _add_data_args(p)
    p.add_argument("--model-file", required=True)
    p.add_argument("--L", type=int)
    p.add_argument("--H", type=int)
    p.add_argument("--tta-lr", type=float, default=1e-3)
    p.add_argument("--alpha-init", type=float, default=0.1)
    p.add_argument("--steps-per-event", type=int, default=1)
    p.add_argument("--fixed-pogt", type=int, help="use a constant POGT length instead of PAAS")
    p.add_argument("--no-full-loss", action="store_true")
    p.add_argument("--no-adjust", action="store_true")
    p.add_argument("--no-tta", action="store_true", help="frozen baseline only")
    p.add_argument("--report", required=True)
    p.add_argument("--trace", help="optional per-window error trace CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("paas", help="show the spectrum report of one look-back window")
    _add_data_args(p)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--H", type=int, required=True)
    p.add_argument("--window-index", type=int, default=0)
    p.add_argument("--amplitudes", action="store_true", help="include the amplitude matrix")
    p.set_defaults(func=cmd_paas)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TsfTtaError, OSError, ValueError) as exc:
        print(f"tsf-tta {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
