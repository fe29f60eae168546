"""Command-line entry point: ``tsrisk <subcommand> [options]``.

Exit codes: 0 success, 1 usage or config error, 2 data validation error,
3 infeasible calibration (``calibrate`` only).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from dataclasses import fields, replace

from .core import ParameterGrid
from .crc import InfeasibleError, SplitConfig, tcrc_point, tcrc_split_point
from .experiment import CALIBRATORS, ExperimentConfig, MCConfig, calibrate, mc_validate, run_experiment
from .io import FORMATS, ParseError, dump_dataset, read_dataset
from .ltt import PROCEDURES
from .retrieval import ValidationError, build_loss_tables
from .selection import EmptyFeasibleSetError, ObjectiveConfig, evaluate, select_pair_index
from .synth import SynthConfig, batch_to_queries, synth_batch

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _grid(spec) -> ParameterGrid:
    if isinstance(spec, dict):
        unknown = set(spec) - {"start", "stop", "step"}
        if unknown:
            raise ValueError(f"unknown grid keys {sorted(unknown)}")
        return ParameterGrid.arange(spec["start"], spec.get("stop", 1.0), spec.get("step", 0.001))
    return ParameterGrid(spec)


def _build(cls, values: dict, nested: dict | None = None):
    """Instantiate a config dataclass from a dict, rejecting unknown keys."""
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    values = dict(values)
    for key, conv in (nested or {}).items():
        if key in values:
            values[key] = conv(values[key])
    return cls(**values)


def _synth(d) -> SynthConfig:
    return _build(SynthConfig, d)


def _objective(d) -> ObjectiveConfig:
    return _build(ObjectiveConfig, d)


_NESTED = {"grid_lambda": _grid, "grid_gamma": _grid, "objective": _objective, "synth": _synth}
_TOP_LEVEL = {"synth", "mc", "format", "threads"}


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    return cfg


def _overrides(args, names) -> dict:
    return {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}


_EXP_FLAGS = ("calibrator", "alpha1", "alpha2", "delta", "procedure", "w", "split_fraction", "r0",
              "replications", "calibration_fraction")


def experiment_config(cfg: dict, args) -> ExperimentConfig:
    values = {k: v for k, v in cfg.items() if k not in _TOP_LEVEL}
    values.update(_overrides(args, _EXP_FLAGS))
    if getattr(args, "lambda0", None) is not None:
        values["lambda0"] = args.lambda0 if args.lambda0 == "estimate" else float(args.lambda0)
    if args.seed is not None:
        values["seed"] = args.seed
    return _build(ExperimentConfig, values, _NESTED)


def synth_config(cfg: dict, args) -> SynthConfig:
    s = _synth(cfg.get("synth", {}))
    if getattr(args, "n_queries", None) is not None:
        s = replace(s, n_queries=args.n_queries)
    if args.seed is not None:
        s = replace(s, seed=args.seed)
    return s


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def _load(args, cfg):
    res = read_dataset(args.data, args.format or cfg.get("format"))
    print(f"loaded {args.data}: {res.n_rows} rows, {res.n_queries} queries, "
          f"{res.n_relevant_docs} relevant docs", file=sys.stderr)
    return res.queries


def cmd_calibrate(args, cfg) -> int:
    config = experiment_config(cfg, args)
    queries = _load(args, cfg)
    t1, t2 = build_loss_tables(queries, config.grid_lambda, config.grid_gamma, config.r0)
    split_seed = config.seed
    try:
        feas = calibrate(t1, t2, config, split_seed)
        if args.t is not None and config.calibrator != "ltt":
            if config.calibrator == "tcrc":
                lam, gam = tcrc_point(t1, t2, config.levels, args.t)
            else:
                split = SplitConfig(config.split_fraction, split_seed)
                lam, gam = tcrc_split_point(t1, t2, config.levels, args.t, split, config.lambda0)
        else:
            a, b = select_pair_index(feas, queries, config.objective)
            lam, gam = config.grid_lambda[a], config.grid_gamma[b]
    except (InfeasibleError, EmptyFeasibleSetError) as exc:
        print(f"infeasible at the requested risk levels: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    vals = feas.values()
    out = {
        "method": config.method,
        "alpha1": config.alpha1,
        "alpha2": config.alpha2,
        "n_calibration": t1.n,
        "lambda": lam,
        "gamma": gam,
        "feasible_size": len(feas),
        "feasible_lambda_range": [min(v[0] for v in vals), max(v[0] for v in vals)],
        "feasible_gamma_range": [min(v[1] for v in vals), max(v[1] for v in vals)],
    }
    with _output(args.out) as fh:
        fh.write(json.dumps(out, indent=2) + "\n")
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    r0 = args.r0 if args.r0 is not None else cfg.get("r0", 1)
    for name, v in (("lambda", args.lam), ("gamma", args.gam)):
        if not 0.0 <= v <= 1.0:
            raise UsageError(f"--{name} must lie in [0, 1]")
    report = evaluate(_load(args, cfg), args.lam, args.gam, r0)
    with _output(args.out) as fh:
        fh.write(json.dumps({"lambda": args.lam, "gamma": args.gam, **report.as_dict()}, indent=2) + "\n")
    return EXIT_OK


def cmd_run(args, cfg) -> int:
    config = experiment_config(cfg, args)
    if args.data:
        data = _load(args, cfg)
    else:
        data = synth_batch(synth_config(cfg, args))
    threads = args.threads or cfg.get("threads", 1)
    result = run_experiment(data, config, threads=threads)
    with _output(args.out) as fh:
        fh.write(result.to_csv())
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    queries = batch_to_queries(synth_batch(synth_config(cfg, args)))
    with _output(args.out) as fh:
        dump_dataset(queries, fh, args.format or cfg.get("format", "tsv"))
    return EXIT_OK


_MC_FLAGS = ("calibrator", "trials", "n", "n_test", "alpha1", "alpha2", "delta", "w", "r0", "stage2_slack")


def cmd_validate(args, cfg) -> int:
    values = dict(cfg.get("mc", {}))
    values.update(_overrides(args, _MC_FLAGS))
    if args.lambda0 is not None:
        values["lambda0"] = args.lambda0 if args.lambda0 in ("known", "estimate") else float(args.lambda0)
    if args.seed is not None:
        values["seed"] = args.seed
    for key in ("procedures", "t_values"):
        if key in values:
            values[key] = tuple(values[key])
    if "synth" in cfg and "synth" not in values:
        values["synth"] = cfg["synth"]
    config = _build(MCConfig, values, _NESTED)
    report = mc_validate(config, threads=args.threads or cfg.get("threads", 1))
    with _output(args.out) as fh:
        fh.write(report.text() + "\n")
        fh.write(f"overall: {'PASS' if report.passed else 'FAIL'}\n")
    return EXIT_OK


def cmd_losses(args, cfg) -> int:
    config = experiment_config(cfg, args)
    queries = _load(args, cfg)
    t1, t2 = build_loss_tables(queries, config.grid_lambda, config.grid_gamma, config.r0)
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        if args.stage == 1:
            fh.write("# schema: tsrisk-losses1/1\n")
            w.writerow(("query_id", "lambda", "loss"))
            for q, row in zip(queries, t1.entries):
                for lam, v in zip(config.grid_lambda, row):
                    w.writerow((q.query_id, repr(lam), repr(float(v))))
        else:
            fh.write("# schema: tsrisk-losses2/1\n")
            w.writerow(("query_id", "lambda", "gamma", "loss"))
            for q, slab in zip(queries, t2.entries):
                for lam, row in zip(config.grid_lambda, slab):
                    for gam, v in zip(config.grid_gamma, row):
                        w.writerow((q.query_id, repr(lam), repr(gam), repr(float(v))))
    return EXIT_OK


def _add_calibration_flags(p):
    p.add_argument("--calibrator", choices=CALIBRATORS)
    p.add_argument("--alpha1", type=float)
    p.add_argument("--alpha2", type=float)
    p.add_argument("--delta", type=float, help="LTT family-wise error budget")
    p.add_argument("--procedure", choices=PROCEDURES, help="LTT procedure")
    p.add_argument("--w", type=float, help="geometric weight for the appendix1/appendix3 procedures")
    p.add_argument("--split-fraction", dest="split_fraction", type=float, help="tcrc-s first-part fraction")
    p.add_argument("--lambda0", help="tcrc-s feasibility point: a number or 'estimate'")
    p.add_argument("--r0", type=int, help="relevance cutoff for the ranking stage")


def _add_data_flags(p, required=True):
    p.add_argument("--data", required=required, help="TSV or JSONL file")
    p.add_argument("--format", choices=FORMATS)


def _add_global_flags(p, default=None):
    p.add_argument("--config", default=default, help="JSON config file")
    p.add_argument("--seed", type=int, default=default, help="master seed")
    p.add_argument("--out", default=default, help="output path (default: stdout)")
    p.add_argument("--threads", type=int, default=default, help="worker threads for replications / trials")
    p.add_argument("-v", "--verbose", action="store_true", default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tsrisk", description="Two-stage risk control for ranked retrieval.")
    _add_global_flags(parser)
    # the same flags after the subcommand; SUPPRESS keeps a value given before it
    common = _Parser(add_help=False)
    _add_global_flags(common, default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **k: _add(*a, parents=[common], **k)

    p = sub.add_parser("calibrate", help="calibrate on a file and print the chosen pair")
    _add_data_flags(p)
    _add_calibration_flags(p)
    p.add_argument("--t", type=float, help="tcrc/tcrc-s mixing weight; omit to select by set size")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="metrics of one (lambda, gamma) pair on a test file")
    _add_data_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--gamma", dest="gam", type=float, required=True)
    p.add_argument("--r0", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="replicated split/calibrate/evaluate experiment to CSV")
    _add_data_flags(p, required=False)
    _add_calibration_flags(p)
    p.add_argument("--replications", type=int)
    p.add_argument("--calibration-fraction", dest="calibration_fraction", type=float)
    p.add_argument("--n-queries", dest="n_queries", type=int, help="synthetic queries when --data is absent")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--n-queries", dest="n_queries", type=int)
    p.add_argument("--format", choices=FORMATS)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="Monte Carlo check of a calibrator's guarantee")
    p.add_argument("--calibrator", choices=CALIBRATORS)
    p.add_argument("--trials", type=int)
    p.add_argument("--n", type=int, help="calibration queries per trial")
    p.add_argument("--n-test", dest="n_test", type=int, help="held-out queries per trial")
    p.add_argument("--alpha1", type=float)
    p.add_argument("--alpha2", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--w", type=float)
    p.add_argument("--r0", type=int)
    p.add_argument("--lambda0", help="'known', 'estimate' or a number")
    p.add_argument("--stage2-slack", dest="stage2_slack", type=float)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("losses", help="dump per-query loss tables as CSV")
    _add_data_flags(p)
    p.add_argument("--stage", type=int, choices=(1, 2), default=2)
    p.add_argument("--r0", type=int)
    p.set_defaults(func=cmd_losses)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("tsrisk: a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (ValidationError, ParseError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BrokenPipeError:
        # reader went away (e.g. piped into head); not an error
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TypeError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
