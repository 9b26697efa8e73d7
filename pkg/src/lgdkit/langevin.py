"""Unadjusted Langevin chains with consolidated prediction.

The sampler runs

    w_{k+1} = w_k - eta * grad U(w_k) + sqrt(2 eta) * xi_k,

U the half-squared data loss plus the regularizer potential, for ``burn``
burn-in steps followed by ``keep`` consolidation steps, and predicts with
the average over the consolidation window. Two execution paths produce the
same chain:

- a jitted fast path for the linear model with half loss and a known
  regularizer family (this is what every experiment uses);
- a generic python path for arbitrary model/loss/regularizer callables,
  which consolidates by literally averaging per-step predictions.

For the linear model the averaged-prediction and predicted-average forms
coincide exactly, so the fast path accumulates weights and multiplies once.
Both paths draw noise from the same counter stream, so they follow the same
trajectory up to float summation order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels, rng
from .core import LinearModel, Model, SquaredLoss, Task
from .priors import PriorFamily

__all__ = [
    "LgdConfig",
    "LgdResult",
    "ChainMoments",
    "DivergenceError",
    "ula_step",
    "lgd_predict",
    "chain_moments",
]

_MASK64 = (1 << 64) - 1
_NOISE_BLOCK = 8192


class DivergenceError(RuntimeError):
    """A chain iterate went non-finite."""

    def __init__(self, step: int, eta: float) -> None:
        super().__init__(
            f"chain diverged at iterate {step} (eta={eta!r}); reduce the step size"
        )
        self.step = step
        self.eta = eta


@dataclass(frozen=True)
class LgdConfig:
    """Chain parameters.

    burn: discarded steps before consolidation starts.
    keep: consolidation window length; predictions average these iterates.
    eta: step size.
    seed: noise stream key; identical seeds reproduce identical chains.
    """

    burn: int
    keep: int
    eta: float
    seed: int
    record_chain: bool = False
    w0: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.burn < 0:
            raise ValueError(f"burn must be >= 0, got {self.burn}")
        if self.keep < 1:
            raise ValueError(f"keep must be >= 1, got {self.keep}")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")

    def scaled(self, factor: int) -> "LgdConfig":
        """Same chain family with ``factor`` times the step budget."""
        if factor < 1:
            raise ValueError(f"factor must be >= 1, got {factor}")
        return replace(self, burn=self.burn * factor, keep=self.keep * factor)


@dataclass(frozen=True)
class LgdResult:
    predictions: np.ndarray
    weights_mean: np.ndarray
    chain: np.ndarray | None = None


@dataclass(frozen=True)
class ChainMoments:
    mean: np.ndarray
    variance: np.ndarray
    degenerate: bool


def ula_step(w: np.ndarray, grad: np.ndarray, eta: float, xi: np.ndarray) -> np.ndarray:
    """One update of the discretized Langevin dynamics."""
    return w - eta * grad + np.sqrt(2.0 * eta) * xi


def _kernel_seed(seed: int) -> np.uint64:
    return np.uint64(seed & _MASK64)


def lgd_predict(
    task: Task,
    config: LgdConfig,
    prior: PriorFamily | None = None,
    theta: np.ndarray | None = None,
    model: Model | None = None,
    loss: SquaredLoss | None = None,
    reg=None,
) -> LgdResult:
    """Run the chain on a task and return consolidated predictions.

    Pass ``prior`` with ``theta`` for a known regularizer family (jitted
    path when the model and loss are the defaults), or a callable
    ``reg(w) -> grad`` for anything else. Neither means no regularizer.

    Raises `DivergenceError` when an iterate goes non-finite.
    """
    if prior is not None and theta is None:
        raise ValueError("theta is required when a prior family is given")
    if prior is not None and reg is not None:
        raise ValueError("pass either a prior family or a reg callable, not both")
    model = model if model is not None else LinearModel(task.d_x)
    loss = loss if loss is not None else SquaredLoss("half")
    fast = (
        isinstance(model, LinearModel)
        and isinstance(loss, SquaredLoss)
        and loss.scale == "half"
        and reg is None
    )
    if fast:
        return _predict_kernel(task, config, prior, theta)
    if prior is not None:
        theta_arr = np.asarray(theta, dtype=np.float64)
        reg = lambda w: prior.reg_grad(theta_arr, w)
    return _predict_generic(task, config, model, loss, reg)


def _family_args(
    task: Task, prior: PriorFamily | None, theta: np.ndarray | None
) -> tuple[int, np.ndarray, float]:
    if prior is None:
        return kernels.FAMILY_ISOTROPIC, np.zeros(1), 0.0
    theta_arr = np.asarray(theta, dtype=np.float64).ravel()
    prior._check_theta(theta_arr, task.d_x)
    return prior.family_code, theta_arr, prior.beta_const


def _predict_kernel(
    task: Task, config: LgdConfig, prior: PriorFamily | None, theta: np.ndarray | None
) -> LgdResult:
    family, theta_arr, beta = _family_args(task, prior, theta)
    A = np.ascontiguousarray(task.X.T @ task.X)
    c = task.X.T @ task.y
    w0 = np.zeros(task.d_x) if config.w0 is None else np.asarray(config.w0, dtype=np.float64)
    if w0.shape != (task.d_x,):
        raise ValueError(f"w0 must be ({task.d_x},), got {w0.shape}")
    wbar = np.empty(task.d_x)
    if config.record_chain:
        trace = np.empty((config.burn + config.keep, task.d_x))
        status = kernels.lgd_chain_record(
            A, c, family, theta_arr, beta,
            config.burn, config.keep, config.eta,
            _kernel_seed(config.seed), w0, wbar, trace,
        )
    else:
        trace = None
        status = kernels.lgd_chain(
            A, c, family, theta_arr, beta,
            config.burn, config.keep, config.eta,
            _kernel_seed(config.seed), w0, wbar,
        )
    if status != kernels.STATUS_OK:
        raise DivergenceError(int(status), config.eta)
    return LgdResult(predictions=task.Xv @ wbar, weights_mean=wbar, chain=trace)


def _predict_generic(
    task: Task, config: LgdConfig, model: Model, loss: SquaredLoss, reg
) -> LgdResult:
    d = task.d_x
    total = config.burn + config.keep
    w = np.zeros(d) if config.w0 is None else np.asarray(config.w0, dtype=np.float64).copy()
    if w.shape != (d,):
        raise ValueError(f"w0 must be ({d},), got {w.shape}")
    root = np.sqrt(2.0 * config.eta)
    seed = config.seed & _MASK64
    pred_sum = np.zeros(task.n_v)
    w_sum = np.zeros(d)
    trace = np.empty((total, d)) if config.record_chain else None
    k = 0
    while k < total:
        block = min(_NOISE_BLOCK, total - k)
        xi = rng.normals(seed, k, block, d)
        for r_ in range(block):
            g = model.jacobian(task.X, w).T @ loss.grad_pred(
                model.predict(task.X, w), task.y
            )
            if reg is not None:
                g = g + reg(w)
            w = w - config.eta * g + root * xi[r_]
            if trace is not None:
                trace[k] = w
            if not np.all(np.isfinite(w)):
                raise DivergenceError(k + 1, config.eta)
            if k >= config.burn:
                w_sum += w
                pred_sum += model.predict(task.Xv, w)
            k += 1
    return LgdResult(
        predictions=pred_sum / config.keep,
        weights_mean=w_sum / config.keep,
        chain=trace,
    )


def chain_moments(chain: np.ndarray, burn: int) -> ChainMoments:
    """Per-coordinate empirical mean and variance of the post-burn iterates.

    ``chain`` rows are iterates 1..burn+keep as recorded by the chain; the
    first ``burn`` rows are dropped. A single retained row cannot estimate a
    variance, which the result flags as degenerate.
    """
    chain = np.asarray(chain, dtype=np.float64)
    if chain.ndim != 2:
        raise ValueError(f"chain must be (steps, d), got shape {chain.shape}")
    if not 0 <= burn < chain.shape[0]:
        raise ValueError(
            f"burn must be in [0, {chain.shape[0] - 1}], got {burn}"
        )
    post = chain[burn:]
    if post.shape[0] == 1:
        return ChainMoments(mean=post[0].copy(), variance=np.zeros(chain.shape[1]), degenerate=True)
    return ChainMoments(
        mean=post.mean(axis=0), variance=post.var(axis=0), degenerate=False
    )
