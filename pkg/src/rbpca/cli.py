"""Command-line interface: ``rbpca {gen,fit,monitor,bench,approx-error}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
Relative output paths resolve against ``--output-dir``, then the
``RBPCA_OUTPUT_DIR`` environment variable, then the working directory.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .config import MAP, METHODS, TEST, TRAIN, RunConfig, derive_seed
from .datasets import (
    FAULTS,
    gen_numerical_example,
    iter_csv_rows,
    load_labeled_csv,
    write_csv,
    zscore_apply,
    zscore_fit,
)
from .evaluation import (
    bench_modeling,
    fit_model,
    format_summary,
    input_dim,
    make_monitor,
    model_lag,
    monte_carlo,
    write_rows_csv,
)
from .exceptions import DataError, NumericalError, ParameterError
from .features import (
    approx_kernel,
    exact_gaussian_kernel,
    new_bernoulli_map,
    resolve_width,
    spectral_error,
    spectral_error_bound,
)
from .dynamic import MovingWindowState
from .persistence import load_model, save_model

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
OUTPUT_ENV = "RBPCA_OUTPUT_DIR"
APPROX_N_CAP = 2000
MONITOR_COLUMNS = ["index", "q", "threshold", "alarm", "warming", "label", "updated"]


def _width(text):
    try:
        return float(text)
    except ValueError:
        return text


def _config_flags(parser):
    g = parser.add_argument_group("run configuration (flags override --config)")
    g.add_argument("--config", help="JSON file with RunConfig fields")
    g.add_argument("--method", choices=METHODS)
    g.add_argument("--m", type=int)
    g.add_argument("--p", type=float)
    g.add_argument("--c", type=_width, help="kernel width, scaled-dimension or median-heuristic")
    g.add_argument("--alpha", type=float)
    g.add_argument("--l", type=int, help="time lag (dynamic, 2d)")
    g.add_argument("--w", type=int, help="window width (moving-window)")
    g.add_argument("--delta-level", type=float)
    g.add_argument("--screening", choices=("successive", "greedy"))
    g.add_argument("--seed", type=int)
    g.add_argument("--n-components", type=int)
    g.add_argument("--n-train", type=int)
    g.add_argument("--n-test", type=int)
    g.add_argument("--fault", choices=("fault1", "fault2", "none"))
    g.add_argument("--fault-start", type=int)
    g.add_argument("--train-csv")
    g.add_argument("--test-csv")
    g.add_argument("--label-column")
    g.add_argument("--kpca-cap", type=int)
    g.add_argument("--output-dir")


def build_config(args):
    cfg = RunConfig.from_json(args.config).to_dict() if args.config else {}
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            cfg[f.name] = value
    if cfg.get("fault") == "none":
        cfg["fault"] = None
    return RunConfig.from_dict(cfg)


def output_dir(config_dir=None):
    out = Path(config_dir or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve(path, out_dir):
    path = Path(path)
    return path if path.is_absolute() else out_dir / path


def _training_data(cfg):
    if cfg.train_csv:
        stream = load_labeled_csv(cfg.train_csv, cfg.label_column)
        if stream.labels is not None and stream.labels.any():
            warnings.warn(f"dropping {int(stream.labels.sum())} fault-labelled training rows")
            return stream.X[~stream.labels]
        return stream.X
    return gen_numerical_example(cfg.n_train, derive_seed(cfg.seed, TRAIN)).X


def cmd_gen(args):
    stream = gen_numerical_example(args.n, args.seed)
    if args.fault != "none":
        stream = FAULTS[args.fault](stream, start=args.fault_start)
    path = _resolve(args.out, output_dir(args.output_dir))
    write_csv(stream, path)
    print(f"wrote {stream.n} samples to {path}")
    return 0


def cmd_fit(args):
    cfg = build_config(args)
    out = output_dir(cfg.output_dir)
    X = _training_data(cfg)
    t0 = time.perf_counter()
    model = fit_model(cfg, X, seed=derive_seed(cfg.seed, MAP))
    fit_seconds = time.perf_counter() - t0
    path = _resolve(args.model, out)
    save_model(model, path, cfg.to_dict())
    detector = model.detector if isinstance(model, MovingWindowState) else model
    train_q = detector.train_q
    print(f"method          {cfg.method}")
    print(f"components      {detector.n_components}")
    print(f"q_ucl           {detector.q_ucl:.6g}")
    print(f"self alarm rate {float(np.mean(train_q > detector.q_ucl)):.4f}")
    print(f"fit seconds     {fit_seconds:.4g}")
    print(f"model           {path}")
    return 0


def _stream_rows(cfg, args):
    """Yield ``(x, label)`` pairs without holding a CSV stream in memory."""
    if args.stream_csv:
        rows = iter_csv_rows(args.stream_csv, cfg.label_column)
        next(rows)
        yield from rows
        return
    stream = gen_numerical_example(cfg.n_test, derive_seed(cfg.seed, TEST))
    if cfg.fault is not None:
        stream = FAULTS[cfg.fault](stream, start=cfg.fault_start)
    for x, label in zip(stream.X, stream.labels):
        yield x, bool(label)


def cmd_monitor(args):
    model, stored = load_model(args.model)
    stored.pop("output_dir", None)
    overrides = {k: v for k, v in vars(args).items() if k in stored and v is not None}
    if overrides.get("fault") == "none":
        overrides["fault"] = None
    cfg = RunConfig.from_dict({**stored, **overrides, "output_dir": args.output_dir})
    out = output_dir(cfg.output_dir)
    path = _resolve(args.out, out)
    monitor = make_monitor(model)
    lag = model_lag(model)
    dim = input_dim(model)
    counts = {"n": 0, "warming": 0, "fault": 0, "normal": 0, "hit": 0, "false": 0, "alarm": 0}
    have_labels = False
    updates = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MONITOR_COLUMNS)
        fh.flush()
        for x, label in _stream_rows(cfg, args):
            if x.shape != (dim,):
                raise DataError(f"sample {counts['n'] + 1} has {x.size} variables; model expects {dim}")
            v = monitor.step(x)
            counts["n"] += 1
            updates += bool(v.updated)
            if v.warming:
                counts["warming"] += 1
            else:
                counts["alarm"] += bool(v.alarm)
                if label is not None:
                    have_labels = True
                    key = "fault" if label else "normal"
                    counts[key] += 1
                    counts["hit" if label else "false"] += bool(v.alarm)
            writer.writerow([counts["n"], "" if np.isnan(v.q) else f"{v.q:.17g}",
                             f"{v.threshold:.17g}", int(v.alarm), int(v.warming),
                             "" if label is None else int(label), int(v.updated)])
            fh.flush()
    if counts["n"] and counts["warming"] == counts["n"]:
        warnings.warn(f"stream of {counts['n']} samples is shorter than lag + 1 = {lag + 1}; "
                      "every sample is warming")
    print(f"samples   {counts['n']} ({counts['warming']} warming)")
    print(f"alarms    {counts['alarm']}")
    if have_labels:
        fdr = counts["hit"] / counts["fault"] if counts["fault"] else None
        far = counts["false"] / counts["normal"] if counts["normal"] else None
        print(f"FDR       {'absent' if fdr is None else f'{fdr:.4f}'}")
        print(f"FAR       {'absent' if far is None else f'{far:.4f}'}")
    if isinstance(model, MovingWindowState):
        print(f"updates   {updates}")
    print(f"results   {path}")
    return 0


def cmd_bench(args):
    cfg = build_config(args)
    out = output_dir(cfg.output_dir)
    methods = args.methods.split(",") if args.methods else [cfg.method]
    for method in methods:
        if method not in METHODS:
            raise ParameterError(f"invalid methods entry {method!r}")
    summaries = []
    for method in methods:
        summaries.append(monte_carlo(cfg.replace(method=method), args.replicates))
    write_rows_csv([row for s in summaries for row in s.rows()], out / "accuracy.csv")
    print(format_summary(summaries))
    if args.timing:
        X_train = gen_numerical_example(cfg.n_train, derive_seed(cfg.seed, TRAIN)).X
        X_test = gen_numerical_example(cfg.n_test, derive_seed(cfg.seed, TEST)).X
        rows = bench_modeling(methods, X_train, X_test, cfg, repeats=args.repeats)
        write_rows_csv(rows, out / "timing.csv")
        print()
        print(f"{'method':<16}{'modeling s':>14}{'online s':>14}")
        for r in rows:
            print(f"{r['method']:<16}{r['modeling_seconds']:>14.4g}{r['online_seconds']:>14.3g}")
    print(f"tables in {out}")
    return 0


def approx_error_table(n, ms, p, c, seed, seeds=20):
    """Median and max spectral error of the Bernoulli kernel approximation per ``m``."""
    if n > APPROX_N_CAP:
        raise ParameterError(f"invalid n={n}: the dense exact kernel is capped at {APPROX_N_CAP}")
    X = gen_numerical_example(n, seed).X
    Xn = zscore_apply(X, *zscore_fit(X))
    width = resolve_width(c, Xn, seed=seed)
    K = exact_gaussian_kernel(Xn, width)
    k_norm = float(np.linalg.norm(K, 2))
    rows = []
    for m in ms:
        errs = [spectral_error(approx_kernel(new_bernoulli_map(Xn.shape[1], m, p, width, s)
                                             .embed_batch(Xn)), K) for s in range(seeds)]
        rows.append({"n": n, "m": m, "p": p, "c": width, "median_error": float(np.median(errs)),
                     "max_error": float(np.max(errs)), "kernel_norm": k_norm,
                     "bound": spectral_error_bound(n, m) if m >= 2 else None})
    return rows


def cmd_approx_error(args):
    out = output_dir(args.output_dir)
    if not 0 < args.p < 1:
        raise ParameterError(f"invalid p={args.p!r}: must lie in (0, 1)")
    rows = approx_error_table(args.n, args.m, args.p, args.c, args.seed, args.seeds)
    path = _resolve(args.out, out)
    write_rows_csv(rows, path)
    print(f"{'m':>6}{'median':>12}{'max':>12}{'bound':>14}")
    for r in rows:
        bound = "absent" if r["bound"] is None else f"{r['bound']:.4g}"
        print(f"{r['m']:>6}{r['median_error']:>12.4g}{r['max_error']:>12.4g}{bound:>14}")
    print(f"table in {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="rbpca", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a numerical-example stream as CSV")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fault", choices=("fault1", "fault2", "none"), default="none")
    p.add_argument("--fault-start", type=int, default=201)
    p.add_argument("--out", default="stream.csv")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="fit a monitor and save the model")
    _config_flags(p)
    p.add_argument("--model", default="model.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("monitor", help="monitor a stream with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--stream-csv", help="CSV stream; default: generate from the model's config")
    p.add_argument("--label-column")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--fault", choices=("fault1", "fault2", "none"))
    p.add_argument("--fault-start", type=int)
    p.add_argument("--out", default="monitor.csv")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("bench", help="Monte Carlo accuracy and timing tables")
    _config_flags(p)
    p.add_argument("--methods", help="comma-separated methods; default: --method")
    p.add_argument("--replicates", type=int, default=50)
    p.add_argument("--timing", action="store_true", help="also time modeling and online stages")
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("approx-error", help="spectral error of the kernel approximation")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--m", type=int, nargs="+", default=[1, 200, 800, 4000])
    p.add_argument("--p", type=float, default=0.05)
    p.add_argument("--c", type=_width, default="median-heuristic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--out", default="approx_error.csv")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_approx_error)
    return parser


def _format_warning(message, category, filename, lineno, line=None):
    return f"rbpca: warning: {message}\n"


def main(argv=None):
    args = build_parser().parse_args(argv)
    warnings.formatwarning = _format_warning
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"rbpca: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"rbpca: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"rbpca: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
