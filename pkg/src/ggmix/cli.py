"""
Command-line entry point.

    ggmix generate   --config cfg.json --out DIR
    ggmix fit        DATA.csv [--config fit.json] [-o fit_out.json]
    ggmix tune       DATA.csv [--config fit.json] [-o tune_out.json]
    ggmix experiment [--config spec.json] [--out DIR] [--workers N]
    ggmix metrics    --fit fit_out.json --truth DIR

Options given on the command line override fields of the JSON config file,
which override the built-in defaults.  Failures exit nonzero and print an
error object ``{"schema_version", "error", "message", "line"}`` on stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .core import SCHEMA_VERSION, DataMatrix, read_csv_matrix
from .exceptions import ConfigurationError, DataFormatError, GGMixError
from .metrics import ROW_FIELDS, score_estimate
from .simulation import SyntheticConfig, export_problem, sample_problem

EXIT_CONFIG = 2
EXIT_FIT = 3


def _load_json(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: {exc.msg}", line=exc.lineno) from None
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{path}: config must be a JSON object")
    return obj


def _merge(base: dict, flags: dict) -> dict:
    out = dict(base)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _load_data(path) -> DataMatrix:
    if str(path).endswith(".json"):
        return DataMatrix.from_json(path)
    return DataMatrix.from_csv(path)


def _emit(doc: dict, out_path) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)


def _fit_flags(args) -> dict:
    grid = None
    if args.grid is not None:
        grid = {"start": args.grid[0], "stop": args.grid[1], "step": args.grid[2]}
    return {"K": args.K, "gamma": args.gamma, "tuning": args.tuning, "lambda": args.lam,
            "seed": args.seed, "restarts": args.restarts, "grid": grid}


def cmd_generate(args) -> int:
    cfg = _merge(_load_json(args.config), {"p": args.p, "n_k": args.n_k, "alpha": args.alpha,
                                           "seed": args.seed})
    problem = sample_problem(SyntheticConfig.from_dict(cfg))
    d = export_problem(problem, args.out)
    print(json.dumps({"schema_version": SCHEMA_VERSION, "output_dir": str(d)}))
    return 0


def cmd_fit(args) -> int:
    data = _load_data(args.data)
    cfg = harness.fit_config(_merge(_load_json(args.config), _fit_flags(args)))
    _emit(harness.fit_data(data.values, cfg), args.output)
    return 0


def cmd_tune(args) -> int:
    data = _load_data(args.data)
    cfg = harness.fit_config(_merge(_load_json(args.config), _fit_flags(args)))
    if cfg["tuning"] == "fixed":
        raise ConfigurationError("tune needs a tuning method other than 'fixed'")
    _emit(harness.tune_data(data.values, cfg).to_dict(), args.output)
    return 0


def cmd_experiment(args) -> int:
    base = _load_json(args.config)
    flags = {"regimes": args.regimes, "p_list": args.p, "n_k_list": args.n_k,
             "datasets_per_cell": args.datasets, "master_seed": args.seed, "output_dir": args.out,
             "restarts": args.restarts}
    if args.timing:
        flags["record_timing"] = True
    merged = _merge(base, flags)
    if args.include_p100:
        merged["p_list"] = sorted(set(merged.get("p_list", harness.ExperimentSpec.p_list)) | {100})
    spec = harness.ExperimentSpec.from_dict(merged)
    res = harness.run_experiment(spec, workers=args.workers)
    print(json.dumps({"schema_version": SCHEMA_VERSION, "rows": str(res["rows"]),
                      "summary": str(res["summary"]), "timings": str(res["timings"])}))
    return 0


def cmd_metrics(args) -> int:
    with open(args.fit) as fh:
        fit = json.load(fh)
    truth = Path(args.truth)
    true_labels = read_csv_matrix(truth / "labels.csv").astype(int).ravel()
    true_prec = [read_csv_matrix(truth / "omega1.csv"), read_csv_matrix(truth / "omega2.csv")]
    labels = np.asarray(fit["labels"], dtype=int)
    precisions = [np.asarray(c["precision"]) for c in fit["model"]["components"]]
    if len(labels) != len(true_labels):
        raise ConfigurationError(f"fit has {len(labels)} labels, truth has {len(true_labels)}")
    scores = score_estimate(labels, precisions, true_labels, true_prec)
    p = true_prec[0].shape[0]
    counts = np.bincount(true_labels)
    row = {k: "" for k in ROW_FIELDS}
    row.update(dataset_id=args.dataset_id or truth.name, method=args.method or fit.get("method", ""),
               p=p, n_k=int(counts.min()) if counts.min() == counts.max() else "/".join(map(str, counts)),
               **{"lambda": fit.get("lambda", "")}, **scores)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    w.writerow([repr(v) if isinstance(v, float) else v for v in (row[k] for k in ROW_FIELDS)])
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ggmix", description="Mixtures of sparse Gaussian graphical models.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic two-cluster dataset")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--p", type=int)
    g.add_argument("--n-k", type=int, nargs=2)
    g.add_argument("--alpha", type=float)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    for name, func, hlp in (("fit", cmd_fit, "tune lambda and fit a mixture"),
                            ("tune", cmd_tune, "select lambda only")):
        f = sub.add_parser(name, help=hlp)
        f.add_argument("data", help="headerless numeric CSV (or JSON data container)")
        f.add_argument("--config")
        f.add_argument("-o", "--output")
        f.add_argument("--K", type=int)
        f.add_argument("--gamma", type=int, choices=(0, 1))
        f.add_argument("--tuning", choices=harness.TUNING_METHODS)
        f.add_argument("--lambda", dest="lam", type=float)
        f.add_argument("--grid", type=float, nargs=3, metavar=("START", "STOP", "STEP"))
        f.add_argument("--seed", type=int)
        f.add_argument("--restarts", type=int)
        f.set_defaults(func=func)

    e = sub.add_parser("experiment", help="run the simulation grid")
    e.add_argument("--config")
    e.add_argument("--out")
    e.add_argument("--regimes", nargs="+", choices=harness.REGIMES)
    e.add_argument("--p", type=int, nargs="+")
    e.add_argument("--n-k", type=int, nargs="+")
    e.add_argument("--datasets", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--restarts", type=int)
    e.add_argument("--workers", type=int, help=f"worker processes (default ${harness.WORKERS_ENV} or all cores)")
    e.add_argument("--include-p100", action="store_true", help="add p=100 to the dimension list")
    e.add_argument("--timing", action="store_true", help="fill wall_ms in rows.csv (breaks byte-identity)")
    e.set_defaults(func=cmd_experiment)

    m = sub.add_parser("metrics", help="score a fit against a generated dataset")
    m.add_argument("--fit", required=True)
    m.add_argument("--truth", required=True, help="directory written by 'generate'")
    m.add_argument("--method")
    m.add_argument("--dataset-id")
    m.set_defaults(func=cmd_metrics)
    return ap


def _error(exc, code: int) -> int:
    doc = {"schema_version": SCHEMA_VERSION, "error": type(exc).__name__, "message": str(exc),
           "line": getattr(exc, "line", None)}
    terms = getattr(exc, "terminations", None)
    if terms:
        doc["terminations"] = [list(t) for t in terms]
    print(json.dumps(doc))
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, OSError, KeyError, json.JSONDecodeError) as exc:
        return _error(exc, EXIT_CONFIG)
    except GGMixError as exc:
        return _error(exc, EXIT_FIT)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
