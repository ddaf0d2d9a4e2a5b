"""Command-line entry point: fit, predict, cv, sweep, export-rules, prepare."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .dataset import encode_frame, load_csv, make_folds, read_frame
from .datasets import prepare_crime, prepare_student
from .errors import ConfigError, FairMarsError
from .forward import ForwardConfig
from .model import atomic_write, export_rules, fit, load, save

DEFAULTS = {
    "lambda": "0", "max_terms": 21, "max_degree": 1, "faircoef": False,
    "fairknot": True, "gcv_d": None, "folds": 10, "fold_seed": 0, "fold": 0,
    "include_sensitive": True, "min_group_size": 1, "prune_lambda": None, "strict_paper_mode": False,
    "format": "json", "jobs": 1, "timing": False, "sep": ",", "feature_cols": None,
    "variants": ",".join(evaluation.VARIANTS), "grid": False, "include_pruned": False,
}


class CliError(Exception):
    """Invalid command line; reported on one line with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _data_flags(p):
    p.add_argument("--config", help="JSON file with default flag values")
    p.add_argument("--data", help="input CSV file")
    p.add_argument("--sep", help="field delimiter (default ',')")
    p.add_argument("--response-col")
    p.add_argument("--sensitive-col")
    p.add_argument("--feature-cols", help="comma-separated predictor columns")
    p.add_argument("--include-sensitive", action=argparse.BooleanOptionalAction,
                   help="also use the sensitive column as a predictor (default on)")


def _fit_flags(p):
    p.add_argument("--lambda", dest="lambda_", metavar="LAMBDA", help="fairness weight")
    p.add_argument("--max-terms", type=int)
    p.add_argument("--max-degree", type=int)
    p.add_argument("--faircoef", action=argparse.BooleanOptionalAction)
    p.add_argument("--fairknot", action=argparse.BooleanOptionalAction)
    p.add_argument("--gcv-d", type=float)
    p.add_argument("--prune-lambda", type=float,
                   help="fairness weight for backward pruning (default: same as --lambda)")
    p.add_argument("--min-group-size", type=int)
    p.add_argument("--strict-paper-mode", action=argparse.BooleanOptionalAction,
                   help="run the forward pass to the term budget without early stopping")


def _output_flags(p):
    p.add_argument("--report-out", help="output file (default stdout)")
    p.add_argument("--format", choices=("json", "csv", "text"))
    p.add_argument("--timing", action=argparse.BooleanOptionalAction,
                   help="include wall-clock timings in reports")


def build_parser():
    parser = _Parser(prog="fairmars", description="Fairness-aware MARS regression")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a model and save it")
    _data_flags(p)
    _fit_flags(p)
    p.add_argument("--model-out")
    _output_flags(p)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--config")
    p.add_argument("--model-in")
    p.add_argument("--data")
    p.add_argument("--sep")
    p.add_argument("--report-out")

    for name, help_ in (("cv", "k-fold comparison of model variants"),
                        ("sweep", "single-fold sweep over fairness weights")):
        p = sub.add_parser(name, help=help_)
        _data_flags(p)
        _fit_flags(p)
        p.add_argument("--folds", type=int)
        p.add_argument("--fold-seed", type=int)
        p.add_argument("--jobs", type=int)
        _output_flags(p)
        if name == "cv":
            p.add_argument("--variants", help="comma list of " + ",".join(evaluation.VARIANTS))
            p.add_argument("--grid", action=argparse.BooleanOptionalAction,
                           help="cross-validate fairknot at 0.2,0.4,0.6,0.8 and flag the best")
        else:
            p.add_argument("--fold", type=int, help="test fold id (default 0)")

    p = sub.add_parser("export-rules", help="print the rule table of a saved model")
    p.add_argument("--config")
    p.add_argument("--model-in")
    p.add_argument("--include-pruned", action=argparse.BooleanOptionalAction)
    p.add_argument("--report-out")

    p = sub.add_parser("prepare", help="convert a downloaded benchmark file to CSV")
    p.add_argument("dataset", choices=("student", "crime"))
    p.add_argument("--source", required=True, help="student-mat.csv or communities.data")
    p.add_argument("--names", help="communities.names, when --source is the raw headerless file")
    p.add_argument("--out", required=True)
    return parser


def _settings(args):
    """Merge built-in defaults, the --config file and explicit flags (in that order)."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            cfg = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc.msg}") from None
        if not isinstance(cfg, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        for key, value in cfg.items():
            merged[key.replace("-", "_")] = value
    for key, value in vars(args).items():
        if key == "lambda_":
            key = "lambda"
        if value is not None:
            merged[key] = value
    return merged


def _require(s, *names):
    missing = [n for n in names if not s.get(n)]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise ConfigError(f"{s['command']} requires {flags}")


def _as_list(value):
    if value is None or isinstance(value, list):
        return value
    return [v.strip() for v in str(value).split(",") if v.strip()]


def _parse_lambda(value, allow_list=False):
    text = ",".join(str(v) for v in value) if isinstance(value, list) else str(value)
    parts = text.split(",")
    if len(parts) > 1 and not allow_list:
        raise ConfigError("--lambda takes a single value here (lists only with sweep)")
    try:
        vals = [float(v) for v in parts]
    except ValueError:
        raise ConfigError(f"invalid --lambda value {text!r}") from None
    if any(not (v >= 0 and np.isfinite(v)) for v in vals):
        raise ConfigError(f"--lambda must be finite and >= 0, got {text}")
    return vals if allow_list else vals[0]


def _forward_config(s, penalty):
    return ForwardConfig(
        max_terms=int(s["max_terms"]), max_degree=int(s["max_degree"]),
        penalty=penalty, min_group_size=int(s["min_group_size"]),
        use_fair_knot=bool(s["fairknot"]), early_stop=not s["strict_paper_mode"],
        gcv_penalty=s["gcv_d"], backward_penalty=s["prune_lambda"])


def _dataset(s):
    _require(s, "data", "response_col", "sensitive_col")
    return load_csv(s["data"], s["response_col"], s["sensitive_col"],
                    _as_list(s["feature_cols"]), bool(s["include_sensitive"]), s["sep"])


def _emit(text, path):
    if path:
        atomic_write(path, text)
    else:
        sys.stdout.write(text)


def _cmd_fit(s):
    lam = _parse_lambda(s["lambda"])
    cfg = _forward_config(s, lam)
    _require(s, "model_out")
    ds = _dataset(s)
    res = fit(ds, cfg, faircoef=bool(s["faircoef"]))
    model = res.model
    pred = model.predict(ds.features)
    mse, r2, rep = evaluation.metrics(ds.raw_response, pred, ds.groups, ds.n_groups)
    summary = {"train_mse": mse, "train_r2": r2,
               "train_disparity": rep.to_dict(list(ds.group_names)),
               "n_bases": len(model.bases), "forward_log": res.forward.log,
               "pruning": res.trace.to_dict(), "provenance": model.provenance}
    save(model, s["model_out"])
    if s.get("report_out") or s["format"] != "json":
        text = export_rules(model) + "\n" if s["format"] == "text" else \
            json.dumps(summary, sort_keys=True, indent=1) + "\n"
        _emit(text, s.get("report_out"))
    return 0


def _load_model(s):
    _require(s, "model_in")
    if not Path(s["model_in"]).exists():
        raise ConfigError(f"model file not found: {s['model_in']}")
    return load(s["model_in"])


def _cmd_predict(s):
    model = _load_model(s)
    _require(s, "data")
    frame = read_frame(s["data"], s["sep"])
    X = encode_frame(frame, model.encoding) if model.encoding else \
        frame.astype(float).to_numpy()
    pred = model.predict(X)
    lines = ["prediction"] + [repr(float(v)) for v in pred]
    _emit("\n".join(lines) + "\n", s.get("report_out"))
    return 0


def _cmd_cv(s):
    lam = _parse_lambda(s["lambda"])
    cfg = _forward_config(s, lam)
    variants = _as_list(s["variants"])
    for v in variants:
        evaluation.variant_config(cfg, v, lam)
    ds = _dataset(s)
    folds = make_folds(ds, int(s["folds"]), int(s["fold_seed"]))
    if s["grid"]:
        report = evaluation.select_lambda(ds, cfg, folds, jobs=int(s["jobs"]))
    else:
        report = evaluation.cross_validate(ds, cfg, folds, variants, lam, jobs=int(s["jobs"]))
    _emit(evaluation.render(report, s["format"], bool(s["timing"])), s.get("report_out"))
    return 0


def _cmd_sweep(s):
    lambdas = _parse_lambda(s["lambda"], allow_list=True)
    evaluation._check_lambdas(lambdas)
    cfg = _forward_config(s, 0.0)
    ds = _dataset(s)
    folds = make_folds(ds, int(s["folds"]), int(s["fold_seed"]))
    report = evaluation.lambda_sweep(ds, cfg, lambdas, folds, int(s["fold"]),
                                     faircoef=bool(s["faircoef"]), jobs=int(s["jobs"]))
    _emit(evaluation.render(report, s["format"], bool(s["timing"])), s.get("report_out"))
    return 0


def _cmd_export(s):
    model = _load_model(s)
    _emit(export_rules(model, bool(s["include_pruned"])) + "\n", s.get("report_out"))
    return 0


def _cmd_prepare(s):
    src = Path(s["source"])
    if not src.exists():
        raise ConfigError(f"source file not found: {src}")
    if s["dataset"] == "student":
        n = prepare_student(src, s["out"])
    else:
        n = prepare_crime(src, s.get("names"), s["out"])
    print(f"wrote {n} rows to {s['out']}", file=sys.stderr)
    return 0


COMMANDS = {"fit": _cmd_fit, "predict": _cmd_predict, "cv": _cmd_cv, "sweep": _cmd_sweep,
            "export-rules": _cmd_export, "prepare": _cmd_prepare}


def _one_line(exc):
    return " ".join(str(exc).split())


def run(argv=None):
    """Run the CLI; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise CliError("missing subcommand (fit, predict, cv, sweep, export-rules, prepare)")
        s = _settings(args)
        return COMMANDS[args.command](s)
    except (CliError, ConfigError) as exc:
        print(f"fairmars: error: {_one_line(exc)}", file=sys.stderr)
        return 2
    except (FairMarsError, OSError, ValueError) as exc:
        print(f"fairmars: error: {_one_line(exc)}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
