"""Experiment pipeline: task generation, method rows, learning curves.

One experiment draws T regression tasks from a prior family, meta-trains
hyperparameters on the first block of tasks at each training-set size, and
evaluates five methods on the held-out block across the size grid:

    plain_gd         gradient descent, no regularizer
    oracle_gd        gradient descent at the generating prior's theta*
    oracle_lgd       the chain at theta* and the configured step budget
    oracle_lgd_long  the same chain with a 10x step budget
    meta_lgd         the chain at the learned (theta, eta) for that size

Determinism contract: every random draw is keyed off the experiment base
seed through the counter stream (task i uses derive_seed(base, i); the
evaluation chains use derive_seed(task seed, method slot)), worker threads
only parallelize across tasks, and reductions happen in task order, so a
run's CSV is byte-identical for any --threads value.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .baselines import GdConfig, bayes_oracle_predict, gd_minimize
from .core import Task, save_tasks
from .langevin import LgdConfig, lgd_predict
from .metalearn import (
    CurvePoint,
    HyperParams,
    MetaConfig,
    MetaResult,
    evaluate_learning_curve,
    meta_train,
    write_trace_csv,
)
from .priors import DiagonalGaussian, PriorFamily, prior_from_config, prior_to_config

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "MethodRow",
    "PRESETS",
    "preset_config",
    "config_from_dict",
    "config_to_dict",
    "generate_tasks",
    "run_experiment",
    "write_results_csv",
    "read_results_csv",
]

METHODS = ("plain_gd", "oracle_gd", "oracle_lgd", "oracle_lgd_long", "meta_lgd")

# slot offsets for per-task chain seeds, one per stochastic method
_SLOT_ORACLE_LGD = 1
_SLOT_ORACLE_LGD_LONG = 2
_SLOT_META_LGD = 3


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment; serializable to JSON."""

    prior: PriorFamily
    d_x: int = 10
    n_tasks: int = 250
    n_total: int = 500
    train_tasks: int = 50
    input_scale: float = 1.0  # variance of each input coordinate
    noise_std: float = 1.0
    n_train_grid: tuple[int, ...] = (1, 2, 5, 10, 20, 50, 100)
    burn: int = 500
    keep: int = 5000
    eta: float = 9e-4
    gd_iters: int | None = None  # default: burn + keep
    long_factor: int = 10
    meta_steps: int = 50
    meta_lr: float = 0.4
    eta_clamp: tuple[float, float] = (1e-7, 1.2e-3)
    base_seed: int = 0
    methods: tuple[str, ...] = METHODS
    cap_factor: float = 1e3

    def __post_init__(self) -> None:
        if self.d_x < 1 or self.n_tasks < 1 or self.n_total < 2:
            raise ValueError("d_x, n_tasks >= 1 and n_total >= 2 required")
        if not self.n_train_grid or list(self.n_train_grid) != sorted(set(self.n_train_grid)):
            raise ValueError("n_train_grid must be non-empty and strictly increasing")
        if self.n_train_grid[0] < 1:
            raise ValueError("n_train values must be >= 1")
        if self.n_train_grid[-1] >= self.n_total:
            raise ValueError(
                f"largest n_train {self.n_train_grid[-1]} leaves no validation rows "
                f"out of n_total {self.n_total}"
            )
        if not 0 <= self.train_tasks < self.n_tasks:
            raise ValueError(
                f"need 0 <= train_tasks < n_tasks, got {self.train_tasks} of {self.n_tasks}"
            )
        if self.input_scale <= 0 or self.noise_std < 0:
            raise ValueError("input_scale must be positive and noise_std >= 0")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if "meta_lgd" in self.methods and self.train_tasks < 1:
            raise ValueError("meta_lgd requires train_tasks >= 1")
        if self.long_factor < 1:
            raise ValueError(f"long_factor must be >= 1, got {self.long_factor}")

    @property
    def n_train_max(self) -> int:
        return self.n_train_grid[-1]

    @property
    def n_v(self) -> int:
        return self.n_total - self.n_train_max

    @property
    def eval_tasks(self) -> int:
        return self.n_tasks - self.train_tasks

    def fast_variant(self, eval_cap: int = 50, keep_divisor: int = 5) -> "ExperimentConfig":
        """Reduced budget: keep/5 everywhere and at most 50 eval tasks."""
        eval_n = min(self.eval_tasks, eval_cap)
        return replace(
            self,
            n_tasks=self.train_tasks + eval_n,
            keep=max(1, self.keep // keep_divisor),
        )


@dataclass(frozen=True)
class MethodRow:
    method: str
    points: list[CurvePoint]


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    rows: list[MethodRow]
    meta_results: dict[int, MetaResult] = field(default_factory=dict)
    elapsed_seconds: float = 0.0


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def _preset_isotropic() -> dict:
    return {
        "prior": {"kind": "isotropic", "sigma2": 0.1},
        "input_scale": 1.0,
        "burn": 500,
        "keep": 5000,
        "eta": 9e-4,
        "eta_clamp": [1e-7, 1.2e-3],
    }


def _preset_diagonal() -> dict:
    # variances are drawn per dataset in [0.05, 0.5]; null means "sample at
    # generation time from the base seed"
    return {
        "prior": {"kind": "diagonal", "variances": None},
        "input_scale": 1.0,
        "burn": 500,
        "keep": 5000,
        "eta": 9e-4,
        "eta_clamp": [1e-7, 1.2e-3],
    }


def _preset_softplus() -> dict:
    return {
        "prior": {"kind": "softplus", "alpha": 1.0, "beta": 10.0, "gamma": 0.1},
        "input_scale": 10.0,
        "burn": 5000,
        "keep": 50000,
        "eta": 1e-4,
        "eta_clamp": [1e-7, 1e-4],
    }


PRESETS = {
    "isotropic": _preset_isotropic,
    "diagonal": _preset_diagonal,
    "softplus": _preset_softplus,
}

_DIAG_VARIANCE_RANGE = (0.05, 0.5)
# reserved child-seed index for dataset-level draws (task indices start at 0)
_DATASET_SEED_INDEX = 2**32


def config_from_dict(obj: dict, base_seed: int = 0) -> ExperimentConfig:
    """Build a config from a JSON object, resolving presets and sampled
    prior parameters. Unknown keys are rejected."""
    if not isinstance(obj, dict):
        raise ValueError(f"config must be a JSON object, got {type(obj).__name__}")
    obj = dict(obj)
    preset_name = obj.pop("experiment", None)
    merged: dict = {}
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ValueError(f"unknown experiment preset {preset_name!r}; choose from {sorted(PRESETS)}")
        merged.update(PRESETS[preset_name]())
    merged.update(obj)
    if "prior" not in merged:
        raise ValueError('config needs a "prior" object or an "experiment" preset')
    base_seed = int(merged.pop("base_seed", base_seed))
    d_x = int(merged.pop("d_x", 10))
    prior_cfg = merged.pop("prior")
    if (
        isinstance(prior_cfg, dict)
        and prior_cfg.get("kind") == "diagonal"
        and prior_cfg.get("variances") is None
    ):
        lo, hi = _DIAG_VARIANCE_RANGE
        vr = np.random.default_rng(rng.derive_seed(base_seed, _DATASET_SEED_INDEX))
        prior_cfg = {"kind": "diagonal", "variances": vr.uniform(lo, hi, d_x).tolist()}
    prior = prior_from_config(prior_cfg)
    if isinstance(prior, DiagonalGaussian) and prior.variances.size != d_x:
        raise ValueError(
            f"diagonal prior has {prior.variances.size} variances but d_x={d_x}"
        )
    known = {
        "n_tasks", "n_total", "train_tasks", "input_scale", "noise_std",
        "n_train_grid", "burn", "keep", "eta", "gd_iters", "long_factor",
        "meta_steps", "meta_lr", "eta_clamp", "methods", "cap_factor",
    }
    unknown = set(merged) - known
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    if "n_train_grid" in merged:
        merged["n_train_grid"] = tuple(int(n) for n in merged["n_train_grid"])
    if "eta_clamp" in merged:
        merged["eta_clamp"] = tuple(float(x) for x in merged["eta_clamp"])
    if "methods" in merged:
        merged["methods"] = tuple(merged["methods"])
    return ExperimentConfig(prior=prior, d_x=d_x, base_seed=base_seed, **merged)


def preset_config(name: str, base_seed: int = 0, **overrides) -> ExperimentConfig:
    return config_from_dict({"experiment": name, **overrides}, base_seed=base_seed)


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "prior": prior_to_config(config.prior),
        "d_x": config.d_x,
        "n_tasks": config.n_tasks,
        "n_total": config.n_total,
        "train_tasks": config.train_tasks,
        "input_scale": config.input_scale,
        "noise_std": config.noise_std,
        "n_train_grid": list(config.n_train_grid),
        "burn": config.burn,
        "keep": config.keep,
        "eta": config.eta,
        "gd_iters": config.gd_iters,
        "long_factor": config.long_factor,
        "meta_steps": config.meta_steps,
        "meta_lr": config.meta_lr,
        "eta_clamp": list(config.eta_clamp),
        "base_seed": config.base_seed,
        "methods": list(config.methods),
        "cap_factor": config.cap_factor,
    }


# ---------------------------------------------------------------------------
# task generation
# ---------------------------------------------------------------------------


def generate_tasks(config: ExperimentConfig, count: int | None = None) -> list[Task]:
    """Draw tasks from the configured prior. Task i depends only on
    derive_seed(base_seed, i), so extending the task count never changes
    earlier tasks. Draw order per task: weights, inputs, noise."""
    count = config.n_tasks if count is None else count
    n_keep = config.n_train_max
    tasks = []
    for i in range(count):
        r = np.random.default_rng(rng.derive_seed(config.base_seed, i))
        w_star = config.prior.sample_ground_truth(config.d_x, r)
        X = r.normal(0.0, np.sqrt(config.input_scale), size=(config.n_total, config.d_x))
        eps = r.normal(0.0, config.noise_std, size=config.n_total)
        y = X @ w_star + eps
        tasks.append(
            Task(
                X=X[:n_keep],
                y=y[:n_keep],
                Xv=X[n_keep:],
                yv=y[n_keep:],
                ground_truth=w_star,
            )
        )
    return tasks


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------


def _method_predictors(
    config: ExperimentConfig, meta_hp: HyperParams | None
) -> dict[str, object]:
    """Predictor closures keyed by method name; each maps a task to its
    validation predictions, drawing chain seeds from the task content via
    the task's own derived seed carried on the closure call."""
    prior = config.prior
    theta_star = prior.oracle_theta(config.d_x)
    gd_iters = config.gd_iters if config.gd_iters is not None else config.burn + config.keep

    def plain_gd(task: Task, task_seed: int) -> np.ndarray:
        w = gd_minimize(task, GdConfig(iters=gd_iters, eta=config.eta))
        return task.Xv @ w

    def oracle_gd(task: Task, task_seed: int) -> np.ndarray:
        w = gd_minimize(task, GdConfig(iters=gd_iters, eta=config.eta), prior=prior, theta=theta_star)
        return task.Xv @ w

    def oracle_lgd(task: Task, task_seed: int) -> np.ndarray:
        cfg = LgdConfig(
            burn=config.burn, keep=config.keep, eta=config.eta,
            seed=rng.derive_seed(task_seed, _SLOT_ORACLE_LGD),
        )
        return lgd_predict(task, cfg, prior=prior, theta=theta_star).predictions

    def oracle_lgd_long(task: Task, task_seed: int) -> np.ndarray:
        cfg = LgdConfig(
            burn=config.burn * config.long_factor,
            keep=config.keep * config.long_factor,
            eta=config.eta,
            seed=rng.derive_seed(task_seed, _SLOT_ORACLE_LGD_LONG),
        )
        return lgd_predict(task, cfg, prior=prior, theta=theta_star).predictions

    def meta_lgd(task: Task, task_seed: int) -> np.ndarray:
        assert meta_hp is not None
        cfg = LgdConfig(
            burn=config.burn, keep=config.keep, eta=meta_hp.eta,
            seed=rng.derive_seed(task_seed, _SLOT_META_LGD),
        )
        return lgd_predict(task, cfg, prior=prior, theta=meta_hp.theta).predictions

    return {
        "plain_gd": plain_gd,
        "oracle_gd": oracle_gd,
        "oracle_lgd": oracle_lgd,
        "oracle_lgd_long": oracle_lgd_long,
        "meta_lgd": meta_lgd,
    }


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | None = None,
    threads: int = 1,
    fast: bool = False,
    log=None,
) -> ExperimentResult:
    """Run the full pipeline and optionally write results to ``out_dir``
    (results.csv, curves.svg, tasks.json, config.json, and one
    meta_trace_n{n}.csv per grid point when meta_lgd runs)."""
    t_start = time.time()
    if fast:
        config = config.fast_variant()
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    emit = (lambda msg: None) if log is None else log
    tasks = generate_tasks(config)
    train_tasks = tasks[: config.train_tasks]
    eval_tasks = tasks[config.train_tasks :]
    eval_seeds = [
        rng.derive_seed(config.base_seed, config.train_tasks + j)
        for j in range(len(eval_tasks))
    ]
    emit(
        f"generated {len(tasks)} tasks (d={config.d_x}, n_max={config.n_train_max}, "
        f"n_v={config.n_v}); training on {len(train_tasks)}, evaluating on {len(eval_tasks)}"
    )

    # meta-train once per grid point on tasks truncated to that size
    meta_results: dict[int, MetaResult] = {}
    if "meta_lgd" in config.methods:
        meta_cfg = MetaConfig(
            burn=config.burn,
            keep=config.keep,
            steps=config.meta_steps,
            lr=config.meta_lr,
            eta_clamp=config.eta_clamp,
            base_seed=rng.derive_seed(config.base_seed, _DATASET_SEED_INDEX + 1),
            cap_factor=config.cap_factor,
        )
        for n in config.n_train_grid:
            truncated = [t.truncated(n) for t in train_tasks]
            res = meta_train(truncated, config.prior, meta_cfg)
            meta_results[n] = res
            emit(
                f"meta-trained at n={n}: loss {res.best_loss:.6g}, "
                f"theta {np.round(res.hyperparams.theta, 6)}, eta {res.hyperparams.eta:.6g}"
            )

    rows: list[MethodRow] = []
    for method in config.methods:
        points: list[CurvePoint] = []
        for n in config.n_train_grid:
            hp = meta_results[n].hyperparams if method == "meta_lgd" else None
            fn = _method_predictors(config, hp)[method]
            pts = evaluate_learning_curve(
                fn, eval_tasks, (n,), cap_factor=config.cap_factor,
                threads=threads, seeds=np.asarray(eval_seeds, dtype=np.uint64),
            )
            points.append(pts[0])
        rows.append(MethodRow(method=method, points=points))
        emit(f"evaluated {method}: mse by n = " + ", ".join(f"{p.n_train}:{p.mean_mse:.4g}" for p in points))

    result = ExperimentResult(
        config=config,
        rows=rows,
        meta_results=meta_results,
        elapsed_seconds=time.time() - t_start,
    )
    if out_dir is not None:
        _write_outputs(result, tasks, out_dir)
    return result


def _write_outputs(result: ExperimentResult, tasks: list[Task], out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_results_csv(os.path.join(out_dir, "results.csv"), result.rows)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
        json.dump(config_to_dict(result.config), f, indent=2)
    save_tasks(os.path.join(out_dir, "tasks.json"), tasks)
    for n, mres in result.meta_results.items():
        write_trace_csv(os.path.join(out_dir, f"meta_trace_n{n}.csv"), mres.trace)
    from .svg import plot_curves

    plot_curves(
        os.path.join(out_dir, "results.csv"), os.path.join(out_dir, "curves.svg")
    )


# ---------------------------------------------------------------------------
# results CSV
# ---------------------------------------------------------------------------

_CSV_HEADER = ["method", "n_train", "mean_mse", "stderr", "n_tasks", "diverged_count"]


def write_results_csv(path: str, rows: list[MethodRow]) -> None:
    """Stable float formatting (shortest round-trip repr), stable row order:
    methods in configured order, sizes ascending."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(_CSV_HEADER)
        for row in rows:
            for p in row.points:
                writer.writerow(
                    [
                        row.method,
                        p.n_train,
                        repr(float(p.mean_mse)),
                        repr(float(p.stderr)),
                        p.n_tasks,
                        p.diverged_count,
                    ]
                )


def read_results_csv(path: str) -> list[dict]:
    """Rows as dicts with parsed numerics; malformed rows report their line."""
    out = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV") from None
        if header != _CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(_CSV_HEADER):
                raise ValueError(f"{path}:{lineno}: expected {len(_CSV_HEADER)} fields, got {len(rec)}")
            try:
                out.append(
                    {
                        "method": rec[0],
                        "n_train": int(rec[1]),
                        "mean_mse": float(rec[2]),
                        "stderr": float(rec[3]),
                        "n_tasks": int(rec[4]),
                        "diverged_count": int(rec[5]),
                    }
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not out:
        raise ValueError(f"{path}: no data rows")
    return out
