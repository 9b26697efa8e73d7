"""Task container, linear model, squared loss, and the sampled potential.

A task is one regression problem: training pairs ``(X, y)``, validation
pairs ``(Xv, yv)``, and optionally the ground-truth weights that generated
them. Arrays are converted to float64, validated for shape consistency,
and frozen (write flag cleared) so tasks are safe to share across worker
threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

__all__ = [
    "Task",
    "LinearModel",
    "SquaredLoss",
    "Model",
    "potential_value",
    "potential_grad",
    "save_tasks",
    "load_tasks",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out is a:
        out = out.copy()
    out.setflags(write=False)
    return out


@dataclass
class Task:
    """One regression task. Immutable after construction.

    Attributes
    ----------
    X, y : training inputs (n, d_x) and targets (n,)
    Xv, yv : validation inputs (n_v, d_x) and targets (n_v,)
    ground_truth : generating weights (d_x,) when known, else None
    """

    X: np.ndarray
    y: np.ndarray
    Xv: np.ndarray
    yv: np.ndarray
    ground_truth: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.X = _freeze(np.atleast_2d(np.asarray(self.X, dtype=np.float64)))
        self.Xv = _freeze(np.atleast_2d(np.asarray(self.Xv, dtype=np.float64)))
        self.y = _freeze(np.asarray(self.y, dtype=np.float64).ravel())
        self.yv = _freeze(np.asarray(self.yv, dtype=np.float64).ravel())
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(
                f"X has {self.X.shape[0]} rows but y has {self.y.shape[0]} entries"
            )
        if self.Xv.shape[0] != self.yv.shape[0]:
            raise ValueError(
                f"Xv has {self.Xv.shape[0]} rows but yv has {self.yv.shape[0]} entries"
            )
        if self.X.shape[1] != self.Xv.shape[1]:
            raise ValueError(
                f"X has {self.X.shape[1]} columns but Xv has {self.Xv.shape[1]}"
            )
        if self.X.shape[0] == 0 or self.Xv.shape[0] == 0:
            raise ValueError("tasks need at least one training and one validation row")
        if self.ground_truth is not None:
            self.ground_truth = _freeze(
                np.asarray(self.ground_truth, dtype=np.float64).ravel()
            )
            if self.ground_truth.shape[0] != self.X.shape[1]:
                raise ValueError(
                    f"ground_truth has {self.ground_truth.shape[0]} entries, "
                    f"expected {self.X.shape[1]}"
                )
        for a in (self.X, self.y, self.Xv, self.yv):
            if not np.all(np.isfinite(a)):
                raise ValueError("task arrays must be finite")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n_v(self) -> int:
        return self.Xv.shape[0]

    @property
    def d_x(self) -> int:
        return self.X.shape[1]

    def truncated(self, n_train: int) -> "Task":
        """Copy of the task keeping only the first ``n_train`` training rows."""
        if not 1 <= n_train <= self.n:
            raise ValueError(f"n_train must be in [1, {self.n}], got {n_train}")
        return Task(
            X=self.X[:n_train],
            y=self.y[:n_train],
            Xv=self.Xv,
            yv=self.yv,
            ground_truth=self.ground_truth,
        )


class Model(Protocol):
    """Prediction model interface: ``predict`` and its weight Jacobian."""

    def predict(self, X: np.ndarray, w: np.ndarray) -> np.ndarray: ...

    def jacobian(self, X: np.ndarray, w: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class LinearModel:
    """f(x; w) = <x, w>."""

    d_x: int

    def __post_init__(self) -> None:
        if self.d_x < 1:
            raise ValueError(f"d_x must be >= 1, got {self.d_x}")

    def predict(self, X: np.ndarray, w: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d_x:
            raise ValueError(f"X must be (n, {self.d_x}), got {X.shape}")
        if w.shape != (self.d_x,):
            raise ValueError(f"w must be ({self.d_x},), got {w.shape}")
        return X @ w

    def jacobian(self, X: np.ndarray, w: np.ndarray) -> np.ndarray:
        # d f(x_i; w) / d w = x_i, independent of w
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d_x:
            raise ValueError(f"X must be (n, {self.d_x}), got {X.shape}")
        return X


@dataclass(frozen=True)
class SquaredLoss:
    """Squared error in two normalizations.

    ``scale="half"`` is the sampler's convention: 1/2 sum_i (y'_i - y_i)^2,
    so that exp(-potential) is the exact Bayes posterior under unit noise.
    ``scale="mean"`` is the reported metric: (1/n) sum_i (y'_i - y_i)^2.
    """

    scale: str = "half"

    def __post_init__(self) -> None:
        if self.scale not in ("half", "mean"):
            raise ValueError(f'scale must be "half" or "mean", got {self.scale!r}')

    def value(self, y_pred: np.ndarray, y_true: np.ndarray) -> float:
        y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
        y_true = np.asarray(y_true, dtype=np.float64).ravel()
        if y_pred.shape != y_true.shape:
            raise ValueError(f"shape mismatch: {y_pred.shape} vs {y_true.shape}")
        sq = float(np.sum((y_pred - y_true) ** 2))
        return 0.5 * sq if self.scale == "half" else sq / y_pred.shape[0]

    def grad_pred(self, y_pred: np.ndarray, y_true: np.ndarray) -> np.ndarray:
        y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
        y_true = np.asarray(y_true, dtype=np.float64).ravel()
        if y_pred.shape != y_true.shape:
            raise ValueError(f"shape mismatch: {y_pred.shape} vs {y_true.shape}")
        diff = y_pred - y_true
        return diff if self.scale == "half" else (2.0 / y_pred.shape[0]) * diff


RegGrad = Callable[[np.ndarray], np.ndarray]


def potential_value(
    task: Task,
    w: np.ndarray,
    neg_log_prior: Callable[[np.ndarray], float] | None,
    model: Model | None = None,
    loss: SquaredLoss | None = None,
) -> float:
    """U(w) = loss(f(X; w), y) + neg_log_prior(w); the sampled potential."""
    model = model if model is not None else LinearModel(task.d_x)
    loss = loss if loss is not None else SquaredLoss("half")
    val = loss.value(model.predict(task.X, w), task.y)
    if neg_log_prior is not None:
        val += float(neg_log_prior(w))
    return val


def potential_grad(
    task: Task,
    w: np.ndarray,
    reg_grad: RegGrad | None,
    model: Model | None = None,
    loss: SquaredLoss | None = None,
) -> np.ndarray:
    """grad_w U(w) = J_f(X; w)^T grad_pred_loss + r(w).

    For the linear model with half loss this is X^T (Xw - y) + r(w).
    """
    model = model if model is not None else LinearModel(task.d_x)
    loss = loss if loss is not None else SquaredLoss("half")
    w = np.asarray(w, dtype=np.float64)
    jac = model.jacobian(task.X, w)
    g = jac.T @ loss.grad_pred(model.predict(task.X, w), task.y)
    if reg_grad is not None:
        g = g + np.asarray(reg_grad(w), dtype=np.float64)
    return g


# ---------------------------------------------------------------------------
# task (de)serialization
# ---------------------------------------------------------------------------


def _task_to_obj(task: Task) -> dict:
    return {
        "d_x": task.d_x,
        "n": task.n,
        "n_v": task.n_v,
        "X": task.X.tolist(),
        "y": task.y.tolist(),
        "Xv": task.Xv.tolist(),
        "yv": task.yv.tolist(),
        "w_star": None if task.ground_truth is None else task.ground_truth.tolist(),
    }


def save_tasks(path: str, tasks: list[Task]) -> None:
    """Write tasks as a JSON array; floats round-trip exactly."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump([_task_to_obj(t) for t in tasks], f)


def load_tasks(path: str) -> list[Task]:
    """Read a task file; malformed entries report their array index."""
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, list):
        raise ValueError(f"task file must hold a JSON array, got {type(raw).__name__}")
    tasks: list[Task] = []
    for i, obj in enumerate(raw):
        try:
            if not isinstance(obj, dict):
                raise ValueError(f"expected an object, got {type(obj).__name__}")
            missing = [k for k in ("d_x", "n", "n_v", "X", "y", "Xv", "yv") if k not in obj]
            if missing:
                raise ValueError(f"missing keys {missing}")
            w_star = obj.get("w_star")
            task = Task(
                X=np.asarray(obj["X"], dtype=np.float64),
                y=np.asarray(obj["y"], dtype=np.float64),
                Xv=np.asarray(obj["Xv"], dtype=np.float64),
                yv=np.asarray(obj["yv"], dtype=np.float64),
                ground_truth=None if w_star is None else np.asarray(w_star, dtype=np.float64),
            )
            for key, got, want in (
                ("d_x", task.d_x, obj["d_x"]),
                ("n", task.n, obj["n"]),
                ("n_v", task.n_v, obj["n_v"]),
            ):
                if got != want:
                    raise ValueError(f"declared {key}={want} but arrays give {got}")
        except (ValueError, TypeError) as exc:
            raise ValueError(f"task {i}: {exc}") from exc
        tasks.append(task)
    return tasks
