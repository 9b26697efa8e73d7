"""Command-line interface.

Subcommands mirror the pipeline stages: ``generate`` draws task files,
``run`` executes the full experiment, ``meta-train`` and ``evaluate`` run
the two halves separately, ``bounds`` evaluates the theory calculators on
a JSON request, and ``plot`` re-renders a results CSV.

Exit codes: 0 success, 1 configuration or input error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import harness, theory
from .core import load_tasks, save_tasks
from .langevin import DivergenceError
from .metalearn import AllTasksDivergedError, HyperParams, MetaConfig, meta_train, write_trace_csv
from .rng import derive_seed
from .svg import plot_curves

__all__ = ["main", "build_parser"]


class _CliError(Exception):
    """Configuration/input problem; maps to exit code 1."""


class _QuietParser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2); keep our codes
        raise _CliError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _QuietParser(prog="lgdkit", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON file")
    common.add_argument("--seed", type=int, default=None, help="override the config base seed")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads over tasks")
    common.add_argument("--fast", action="store_true", help="reduced budget: keep/5, 50 eval tasks")

    p = sub.add_parser("generate", parents=[common], help="draw tasks into a JSON file")
    p.add_argument("--count", type=int, default=None, help="number of tasks (default: config n_tasks)")

    sub.add_parser("run", parents=[common], help="full pipeline: tasks, meta-training, evaluation, figure")

    p = sub.add_parser("meta-train", parents=[common], help="learn hyperparameters on a task file")
    p.add_argument("--tasks", help="task JSON file (default: generate from config)")
    p.add_argument("--n-train", type=int, default=None, help="truncate tasks to this many rows")

    p = sub.add_parser("evaluate", parents=[common], help="evaluate methods on a task file")
    p.add_argument("--tasks", help="task JSON file (default: generate from config)")
    p.add_argument("--hyperparams", help="hyperparams JSON for the meta_lgd row")

    p = sub.add_parser("bounds", parents=[common], help="evaluate a theory bound from a JSON request")
    p.add_argument("--request", required=True, help="JSON file: {formula, inputs}")

    p = sub.add_parser("plot", parents=[common], help="render a results CSV to SVG")
    p.add_argument("--csv", required=True, help="results CSV path")
    p.add_argument("--title", default="", help="figure title")
    return parser


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise _CliError(f"no such file: {path}")
    except json.JSONDecodeError as exc:
        raise _CliError(f"{path} is not valid JSON: {exc}")


def _load_config(args) -> harness.ExperimentConfig:
    if not args.config:
        raise _CliError("--config is required for this command")
    obj = _load_json(args.config)
    try:
        cfg = harness.config_from_dict(obj)
    except ValueError as exc:
        raise _CliError(f"bad config: {exc}")
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, base_seed=args.seed)
    return cfg


def _require_out(args, kind: str) -> str:
    if not args.out:
        raise _CliError(f"--out ({kind}) is required for this command")
    return args.out


def _cmd_generate(args) -> int:
    cfg = _load_config(args)
    out = _require_out(args, "task file path")
    tasks = harness.generate_tasks(cfg, count=args.count)
    save_tasks(out, tasks)
    print(f"wrote {len(tasks)} tasks to {out}")
    return 0


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    out = _require_out(args, "output directory")
    result = harness.run_experiment(
        cfg, out_dir=out, threads=args.threads, fast=args.fast,
        log=lambda msg: print(msg, flush=True),
    )
    print(f"done in {result.elapsed_seconds:.1f}s; results in {out}/results.csv")
    return 0


def _tasks_for(args, cfg: harness.ExperimentConfig):
    if args.tasks:
        tasks = load_tasks(args.tasks)
        if not tasks:
            raise _CliError(f"{args.tasks} holds no tasks")
        return tasks
    return harness.generate_tasks(cfg)


def _cmd_meta_train(args) -> int:
    cfg = _load_config(args)
    if args.fast:
        cfg = cfg.fast_variant()
    out = _require_out(args, "output directory")
    try:
        tasks = _tasks_for(args, cfg)[: cfg.train_tasks or None]
    except ValueError as exc:
        raise _CliError(str(exc))
    if args.n_train is not None:
        tasks = [t.truncated(args.n_train) for t in tasks]
    meta_cfg = MetaConfig(
        burn=cfg.burn, keep=cfg.keep, steps=cfg.meta_steps, lr=cfg.meta_lr,
        eta_clamp=cfg.eta_clamp,
        base_seed=derive_seed(cfg.base_seed, harness._DATASET_SEED_INDEX + 1),
        cap_factor=cfg.cap_factor,
    )
    res = meta_train(tasks, cfg.prior, meta_cfg)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "hyperparams.json"), "w", encoding="utf-8") as f:
        json.dump(
            {
                "theta": [repr(float(x)) for x in res.hyperparams.theta],
                "eta": repr(float(res.hyperparams.eta)),
                "best_loss": repr(float(res.best_loss)),
                "n_train": tasks[0].n,
            },
            f,
            indent=2,
        )
    write_trace_csv(os.path.join(out, "meta_trace.csv"), res.trace)
    print(
        f"learned theta={np.round(res.hyperparams.theta, 6).tolist()} "
        f"eta={res.hyperparams.eta:.6g} (loss {res.best_loss:.6g}); outputs in {out}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    if args.fast:
        cfg = cfg.fast_variant()
    out = _require_out(args, "output directory")
    methods = cfg.methods
    hp = None
    if args.hyperparams:
        obj = _load_json(args.hyperparams)
        try:
            hp = HyperParams(
                theta=np.array([float(x) for x in obj["theta"]]), eta=float(obj["eta"])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise _CliError(f"bad hyperparams file: {exc}")
    elif "meta_lgd" in methods:
        methods = tuple(m for m in methods if m != "meta_lgd")
    tasks = _tasks_for(args, cfg)
    eval_tasks = tasks[cfg.train_tasks :] if len(tasks) > cfg.train_tasks else tasks
    seeds = np.asarray(
        [derive_seed(cfg.base_seed, cfg.train_tasks + j) for j in range(len(eval_tasks))],
        dtype=np.uint64,
    )
    from .metalearn import evaluate_learning_curve

    os.makedirs(out, exist_ok=True)
    rows = []
    for method in methods:
        fn = harness._method_predictors(cfg, hp)[method]
        points = []
        for n in cfg.n_train_grid:
            pts = evaluate_learning_curve(
                fn, eval_tasks, (n,), cap_factor=cfg.cap_factor,
                threads=args.threads, seeds=seeds,
            )
            points.append(pts[0])
        rows.append(harness.MethodRow(method=method, points=points))
        print(f"{method}: " + ", ".join(f"n={p.n_train} mse={p.mean_mse:.6g}" for p in points))
    csv_path = os.path.join(out, "results.csv")
    harness.write_results_csv(csv_path, rows)
    plot_curves(csv_path, os.path.join(out, "curves.svg"))
    print(f"results in {csv_path}")
    return 0


_BOUND_FORMULAS = {
    "wasserstein", "u2_limit", "ula_params", "empmean", "pdim",
    "task_count", "hoeffding", "bernstein", "erm_bayes",
}


def _cmd_bounds(args) -> int:
    req = _load_json(args.request)
    if not isinstance(req, dict) or "formula" not in req:
        raise _CliError('bounds request must be an object with "formula" and "inputs"')
    formula = req["formula"]
    inputs = req.get("inputs", {})
    if formula not in _BOUND_FORMULAS:
        raise _CliError(f"unknown formula {formula!r}; choose from {sorted(_BOUND_FORMULAS)}")
    if not isinstance(inputs, dict):
        raise _CliError('"inputs" must be an object')
    try:
        result = _eval_bound(formula, dict(inputs))
    except (KeyError, TypeError, ValueError) as exc:
        raise _CliError(f"bad inputs for {formula}: {exc}")
    text = json.dumps(result, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    print(text)
    return 0


def _spec_from(inputs: dict) -> theory.SmoothnessSpec:
    return theory.SmoothnessSpec(
        m=float(inputs.pop("m")),
        L=float(inputs.pop("L")),
        lip_g=float(inputs.pop("lip_g", 1.0)),
        dist0=float(inputs.pop("dist0", 0.0)),
    )


def _eval_bound(formula: str, inputs: dict) -> dict:
    if formula == "wasserstein":
        spec = _spec_from(inputs)
        if "etas" in inputs:
            etas = np.asarray(inputs.pop("etas"), dtype=np.float64)
        else:
            etas = np.full(int(inputs.pop("k")), float(inputs.pop("eta")))
        res = theory.wasserstein_bound(spec, etas, int(inputs.pop("d")))
        out = dataclasses.asdict(res)
    elif formula == "u2_limit":
        spec = _spec_from(inputs)
        out = {"value": theory.u2_limit(spec, float(inputs.pop("eta")), int(inputs.pop("d")))}
    elif formula == "ula_params":
        spec = _spec_from(inputs)
        res = theory.ula_params(
            spec, float(inputs.pop("eps")), float(inputs.pop("delta")), int(inputs.pop("d"))
        )
        out = dataclasses.asdict(res)
    elif formula == "empmean":
        spec = _spec_from(inputs)
        res = theory.empmean_bounds(
            spec,
            keep=int(inputs.pop("keep")),
            eta=float(inputs.pop("eta")),
            r=float(inputs.pop("r")),
            delta=float(inputs.pop("delta")),
            burn=int(inputs.pop("burn", 0)),
        )
        out = dataclasses.asdict(res)
    elif formula == "pdim":
        params = inputs.pop("params", None)
        gj = theory.GJComplexity(**{k: int(v) for k, v in inputs.items()})
        inputs.clear()
        out = dataclasses.asdict(theory.pdim_bound(gj, params=None if params is None else int(params)))
    elif formula == "task_count":
        out = dataclasses.asdict(
            theory.task_count_bound(
                C=float(inputs.pop("C")),
                eps=float(inputs.pop("eps")),
                delta=float(inputs.pop("delta")),
                pdim=float(inputs.pop("pdim")),
                constant=float(inputs.pop("constant", 1.0)),
            )
        )
    elif formula == "hoeffding":
        out = {
            "value": theory.hoeffding_deviation(
                C=float(inputs.pop("C")), delta=float(inputs.pop("delta")), N=int(inputs.pop("N"))
            )
        }
    elif formula == "bernstein":
        out = {
            "value": theory.bernstein_tail(
                N=int(inputs.pop("N")), t=float(inputs.pop("t")),
                V=float(inputs.pop("V")), C=float(inputs.pop("C")),
            )
        }
    else:
        res = theory.erm_bayes_budget(
            C=float(inputs.pop("C")),
            eps1=float(inputs.pop("eps1")),
            eps2=float(inputs.pop("eps2")),
            delta=float(inputs.pop("delta")),
            d=int(inputs.pop("d")),
            h=int(inputs.pop("h")),
            n=int(inputs.pop("n")),
            n_v=int(inputs.pop("n_v")),
            lip_f=float(inputs.pop("lip_f")),
            dist0=float(inputs.pop("dist0", 0.0)),
            constant=float(inputs.pop("constant", 1.0)),
        )
        out = dataclasses.asdict(res)
    if inputs:
        raise ValueError(f"unused inputs {sorted(inputs)}")
    return out


def _cmd_plot(args) -> int:
    out = _require_out(args, "SVG path")
    try:
        plot_curves(args.csv, out, title=args.title)
    except FileNotFoundError:
        raise _CliError(f"no such file: {args.csv}")
    print(f"wrote {out}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "run": _cmd_run,
    "meta-train": _cmd_meta_train,
    "evaluate": _cmd_evaluate,
    "bounds": _cmd_bounds,
    "plot": _cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, AllTasksDivergedError, RuntimeError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
