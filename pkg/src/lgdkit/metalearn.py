"""Hyperparameter learning across tasks and learning-curve evaluation.

The meta-objective is the average validation MSE of consolidated chain
predictions over a collection of tasks, as a function of the regularizer
hyperparameters theta and the step size eta. Both are optimized in log
space with Adam; gradients come from forward-mode tangents propagated
through the chain with the noise realization held fixed (one dual chain
per task per step), or from central finite differences as a slow
cross-check.

Divergent chains do not kill a meta step: the task contributes a capped
loss (a large multiple of its zero-predictor loss) and a zero gradient,
and the step's divergence count is recorded in the trace. Only a step on
which every task diverges aborts.

The returned hyperparameters are the best pair seen at any evaluated
point, not the final iterate; with a noisy-but-deterministic objective the
last Adam step is not necessarily the best one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rng
from .core import Task
from .langevin import DivergenceError
from .priors import PriorFamily

__all__ = [
    "HyperParams",
    "MetaConfig",
    "TraceStep",
    "MetaResult",
    "CurvePoint",
    "AllTasksDivergedError",
    "task_seeds",
    "validation_loss",
    "hypergrad",
    "meta_train",
    "evaluate_learning_curve",
    "write_trace_csv",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class HyperParams:
    """A regularizer parameter vector and a step size, both positive."""

    theta: np.ndarray
    eta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64).ravel())
        if self.theta.size < 1:
            raise ValueError("theta must have at least one entry")
        if np.any(self.theta <= 0) or not np.all(np.isfinite(self.theta)):
            raise ValueError("theta entries must be finite and positive")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")

    @property
    def log_theta(self) -> np.ndarray:
        return np.log(self.theta)

    @property
    def log_eta(self) -> float:
        return float(np.log(self.eta))

    @classmethod
    def from_log(cls, log_theta: np.ndarray, log_eta: float) -> "HyperParams":
        return cls(theta=np.exp(np.asarray(log_theta, dtype=np.float64)), eta=float(np.exp(log_eta)))


@dataclass(frozen=True)
class MetaConfig:
    """Meta-optimization settings.

    burn/keep are the chain lengths used inside the objective; eta_clamp
    bounds the learned step size (the upper end should sit at or below the
    stability edge for the task family); cap_factor scales the
    zero-predictor loss into the divergence cap.
    """

    burn: int
    keep: int
    steps: int = 50
    lr: float = 0.4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    eta_clamp: tuple[float, float] = (1e-7, 1.2e-3)
    base_seed: int = 0
    grad_mode: str = "forward_dual"
    cap_factor: float = 1e3
    theta0: np.ndarray | None = None
    eta0: float | None = None
    fd_step: float = 1e-3

    def __post_init__(self) -> None:
        if self.burn < 0 or self.keep < 1:
            raise ValueError(f"need burn >= 0 and keep >= 1, got {self.burn}, {self.keep}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        lo, hi = self.eta_clamp
        if not (0 < lo <= hi):
            raise ValueError(f"eta_clamp must satisfy 0 < lo <= hi, got {self.eta_clamp}")
        if self.grad_mode not in ("forward_dual", "finite_diff"):
            raise ValueError(f'grad_mode must be "forward_dual" or "finite_diff", got {self.grad_mode!r}')
        if self.cap_factor <= 0:
            raise ValueError(f"cap_factor must be positive, got {self.cap_factor}")
        if self.fd_step <= 0:
            raise ValueError(f"fd_step must be positive, got {self.fd_step}")

    def initial_point(self, h: int) -> "HyperParams":
        theta0 = np.ones(h) if self.theta0 is None else np.asarray(self.theta0, dtype=np.float64)
        if theta0.shape != (h,):
            raise ValueError(f"theta0 must have shape ({h},), got {theta0.shape}")
        lo, hi = self.eta_clamp
        eta0 = float(np.sqrt(lo * hi)) if self.eta0 is None else float(self.eta0)
        eta0 = min(max(eta0, lo), hi)
        return HyperParams(theta=theta0, eta=eta0)


@dataclass(frozen=True)
class TraceStep:
    step: int
    loss: float
    log_theta: np.ndarray
    log_eta: float
    diverged_count: int


@dataclass(frozen=True)
class MetaResult:
    hyperparams: HyperParams
    best_loss: float
    trace: list[TraceStep] = field(default_factory=list)


@dataclass(frozen=True)
class CurvePoint:
    n_train: int
    mean_mse: float
    stderr: float
    n_tasks: int
    diverged_count: int
    losses: np.ndarray


class AllTasksDivergedError(RuntimeError):
    """Every task's chain diverged on one meta step; carries the trace."""

    def __init__(self, step: int, trace: list[TraceStep]) -> None:
        super().__init__(
            f"all tasks diverged at meta step {step}; lower the step-size clamp or lr"
        )
        self.step = step
        self.trace = trace


@dataclass(frozen=True)
class _TaskMats:
    A: np.ndarray
    c: np.ndarray
    Xv: np.ndarray
    yv: np.ndarray
    cap: float


def _prepare(tasks: list[Task], cap_factor: float) -> list[_TaskMats]:
    mats = []
    for t in tasks:
        mats.append(
            _TaskMats(
                A=np.ascontiguousarray(t.X.T @ t.X),
                c=t.X.T @ t.y,
                Xv=t.Xv,
                yv=t.yv,
                cap=cap_factor * float(np.mean(t.yv**2)),
            )
        )
    return mats


def task_seeds(base_seed: int, count: int) -> np.ndarray:
    """Independent per-task noise keys derived from one base seed."""
    return np.array([rng.derive_seed(base_seed, i) for i in range(count)], dtype=np.uint64)


def _loss_mats(
    hp: HyperParams, mats: list[_TaskMats], seeds: np.ndarray, prior: PriorFamily, burn: int, keep: int
) -> tuple[float, int]:
    d = mats[0].A.shape[0]
    prior._check_theta(hp.theta, d)
    wbar = np.empty(d)
    total = 0.0
    diverged = 0
    for tm, seed in zip(mats, seeds):
        status = kernels.lgd_chain(
            tm.A, tm.c, prior.family_code, hp.theta, prior.beta_const,
            burn, keep, hp.eta, np.uint64(int(seed) & _MASK64), np.zeros(d), wbar,
        )
        if status != kernels.STATUS_OK:
            total += tm.cap
            diverged += 1
            continue
        e = tm.Xv @ wbar - tm.yv
        total += float(e @ e) / tm.yv.size
    return total / len(mats), diverged


def validation_loss(
    hp: HyperParams,
    tasks: list[Task],
    seeds: np.ndarray,
    prior: PriorFamily,
    burn: int,
    keep: int,
    cap_factor: float = 1e3,
) -> tuple[float, int]:
    """Mean validation MSE of the chain predictor across tasks at fixed
    noise seeds; diverged tasks contribute their capped loss. Returns
    (loss, diverged task count)."""
    if len(tasks) == 0:
        raise ValueError("need at least one task")
    if len(seeds) != len(tasks):
        raise ValueError(f"got {len(seeds)} seeds for {len(tasks)} tasks")
    return _loss_mats(hp, _prepare(tasks, cap_factor), np.asarray(seeds), prior, burn, keep)


def _hypergrad_mats(
    hp: HyperParams,
    mats: list[_TaskMats],
    seeds: np.ndarray,
    prior: PriorFamily,
    burn: int,
    keep: int,
) -> tuple[np.ndarray, float, int]:
    d = mats[0].A.shape[0]
    prior._check_theta(hp.theta, d)
    h = hp.theta.size
    wbar = np.empty(d)
    tbar = np.empty((h + 1, d))
    grad = np.zeros(h + 1)
    total = 0.0
    diverged = 0
    for tm, seed in zip(mats, seeds):
        status = kernels.lgd_dual_chain(
            tm.A, tm.c, prior.family_code, hp.theta, prior.beta_const,
            burn, keep, hp.eta, np.uint64(int(seed) & _MASK64), wbar, tbar,
        )
        if status != kernels.STATUS_OK:
            total += tm.cap
            diverged += 1
            continue
        e = tm.Xv @ wbar - tm.yv
        n_v = tm.yv.size
        total += float(e @ e) / n_v
        # chain rule through the linear validation head: for each log
        # hyperparameter phi, dl/dphi = (2/n_v) e^T Xv Tbar_phi
        grad += (2.0 / n_v) * ((tm.Xv @ tbar.T).T @ e)
    return grad / len(mats), total / len(mats), diverged


def hypergrad(
    hp: HyperParams,
    tasks: list[Task],
    seeds: np.ndarray,
    prior: PriorFamily,
    burn: int,
    keep: int,
    mode: str = "forward_dual",
    cap_factor: float = 1e3,
    fd_step: float = 1e-3,
) -> tuple[np.ndarray, float, int]:
    """Gradient of the meta-objective in (log theta, log eta).

    Returns (gradient of length h+1, loss, diverged count). The
    finite-difference mode perturbs each log coordinate by +/- fd_step and
    reuses the same noise seeds, so the two modes approximate the same
    fixed-noise derivative.
    """
    if len(seeds) != len(tasks):
        raise ValueError(f"got {len(seeds)} seeds for {len(tasks)} tasks")
    mats = _prepare(tasks, cap_factor)
    seeds = np.asarray(seeds)
    if mode == "forward_dual":
        return _hypergrad_mats(hp, mats, seeds, prior, burn, keep)
    if mode != "finite_diff":
        raise ValueError(f"unknown hypergrad mode {mode!r}")
    center, diverged = _loss_mats(hp, mats, seeds, prior, burn, keep)
    h = hp.theta.size
    phi = np.concatenate([hp.log_theta, [hp.log_eta]])
    grad = np.empty(h + 1)
    for i in range(h + 1):
        hi = phi.copy()
        lo = phi.copy()
        hi[i] += fd_step
        lo[i] -= fd_step
        up, _ = _loss_mats(HyperParams.from_log(hi[:h], hi[h]), mats, seeds, prior, burn, keep)
        dn, _ = _loss_mats(HyperParams.from_log(lo[:h], lo[h]), mats, seeds, prior, burn, keep)
        grad[i] = (up - dn) / (2.0 * fd_step)
    return grad, center, diverged


def meta_train(
    tasks: list[Task],
    prior: PriorFamily,
    config: MetaConfig,
) -> MetaResult:
    """Adam in (log theta, log eta) on the fixed-noise meta-objective.

    The step size is clamped into config.eta_clamp after every update; the
    trace records the objective at every visited point plus the final one,
    and the best-seen point is returned.
    """
    if len(tasks) == 0:
        raise ValueError("need at least one task")
    d = tasks[0].d_x
    h = prior.h(d)
    hp = config.initial_point(h)
    mats = _prepare(tasks, config.cap_factor)
    seeds = task_seeds(config.base_seed, len(tasks))
    log_lo, log_hi = np.log(config.eta_clamp[0]), np.log(config.eta_clamp[1])
    phi = np.concatenate([hp.log_theta, [hp.log_eta]])
    m = np.zeros(h + 1)
    v = np.zeros(h + 1)
    trace: list[TraceStep] = []
    best_loss = np.inf
    best_phi = phi.copy()
    for step in range(config.steps):
        hp = HyperParams.from_log(phi[:h], phi[h])
        if config.grad_mode == "forward_dual":
            grad, loss, diverged = _hypergrad_mats(hp, mats, seeds, prior, config.burn, config.keep)
        else:
            grad, loss, diverged = hypergrad(
                hp, tasks, seeds, prior, config.burn, config.keep,
                mode="finite_diff", cap_factor=config.cap_factor, fd_step=config.fd_step,
            )
        trace.append(TraceStep(step, loss, phi[:h].copy(), float(phi[h]), diverged))
        if loss < best_loss:
            best_loss = loss
            best_phi = phi.copy()
        if diverged == len(tasks):
            raise AllTasksDivergedError(step, trace)
        m = config.beta1 * m + (1.0 - config.beta1) * grad
        v = config.beta2 * v + (1.0 - config.beta2) * grad**2
        mhat = m / (1.0 - config.beta1 ** (step + 1))
        vhat = v / (1.0 - config.beta2 ** (step + 1))
        phi = phi - config.lr * mhat / (np.sqrt(vhat) + config.adam_eps)
        phi[h] = min(max(phi[h], log_lo), log_hi)
    hp = HyperParams.from_log(phi[:h], phi[h])
    loss, diverged = _loss_mats(hp, mats, seeds, prior, config.burn, config.keep)
    trace.append(TraceStep(config.steps, loss, phi[:h].copy(), float(phi[h]), diverged))
    if loss < best_loss:
        best_loss = loss
        best_phi = phi.copy()
    best = HyperParams.from_log(best_phi[:h], best_phi[h])
    # exp(log(clamp)) can overshoot the boundary by an ulp; re-clamp in
    # linear space so the returned eta honors the configured range exactly
    eta = min(max(best.eta, config.eta_clamp[0]), config.eta_clamp[1])
    return MetaResult(
        hyperparams=HyperParams(theta=best.theta, eta=eta),
        best_loss=best_loss,
        trace=trace,
    )


def evaluate_learning_curve(
    predict_fn,
    tasks: list[Task],
    n_train_grid: tuple[int, ...],
    cap_factor: float = 1e3,
    threads: int = 1,
    seeds: np.ndarray | None = None,
) -> list[CurvePoint]:
    """Validation MSE of the predictor across tasks at each training-set
    size: ``predict_fn(task) -> predictions``, or with per-task noise keys
    ``predict_fn(task, seed)`` when ``seeds`` is given.

    Tasks are truncated to their first n rows per grid point. A
    `DivergenceError` from the predictor contributes the task's capped loss
    and increments the divergence count. Results reduce in task order
    regardless of thread count.
    """
    if len(tasks) == 0:
        raise ValueError("need at least one task")
    if seeds is not None and len(seeds) != len(tasks):
        raise ValueError(f"got {len(seeds)} seeds for {len(tasks)} tasks")
    grid = sorted(set(int(n) for n in n_train_grid))
    if grid != list(n_train_grid):
        raise ValueError("n_train_grid must be strictly increasing")
    if grid[0] < 1:
        raise ValueError(f"n_train values must be >= 1, got {grid[0]}")
    if grid[-1] > tasks[0].n:
        raise ValueError(
            f"n_train {grid[-1]} exceeds the {tasks[0].n} training rows available"
        )

    def one(task: Task, n: int, seed) -> tuple[float, int]:
        sub = task.truncated(n)
        try:
            preds = predict_fn(sub) if seed is None else predict_fn(sub, int(seed))
        except DivergenceError:
            return cap_factor * float(np.mean(sub.yv**2)), 1
        e = np.asarray(preds, dtype=np.float64) - sub.yv
        return float(e @ e) / sub.yv.size, 0

    seed_list = [None] * len(tasks) if seeds is None else list(seeds)
    points: list[CurvePoint] = []
    for n in grid:
        if threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(lambda ts: one(ts[0], n, ts[1]), zip(tasks, seed_list)))
        else:
            results = [one(t, n, s) for t, s in zip(tasks, seed_list)]
        losses = np.array([r[0] for r in results])
        diverged = sum(r[1] for r in results)
        stderr = float(losses.std(ddof=1) / np.sqrt(losses.size)) if losses.size > 1 else 0.0
        points.append(
            CurvePoint(
                n_train=n,
                mean_mse=float(losses.mean()),
                stderr=stderr,
                n_tasks=losses.size,
                diverged_count=diverged,
                losses=losses,
            )
        )
    return points


def write_trace_csv(path: str, trace: list[TraceStep]) -> None:
    """Trace table: step, loss, each log-theta component, log eta, count."""
    if not trace:
        raise ValueError("trace is empty")
    h = trace[0].log_theta.size
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["step", "loss"] + [f"log_theta_{i}" for i in range(h)] + ["log_eta", "diverged_count"]
        )
        for ts in trace:
            writer.writerow(
                [ts.step, repr(float(ts.loss))]
                + [repr(float(x)) for x in ts.log_theta]
                + [repr(float(ts.log_eta)), ts.diverged_count]
            )
