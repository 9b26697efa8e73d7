"""Deterministic baselines and closed-form Bayes predictors.

Three reference points the chains are measured against:

- `gd_minimize`: plain gradient descent on the same potential the sampler
  uses (MAP estimate when regularized, least squares when not);
- `ridge_posterior_mean` / `bayes_oracle_predict`: the exact posterior-mean
  predictor, in closed form for Gaussian priors and by dense quadrature for
  the softplus family in up to two dimensions;
- `reference_lgd_predict`: the same chain with a 10x step budget, the
  long-run sampling oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import kernels
from .core import LinearModel, Model, SquaredLoss, Task, potential_grad
from .langevin import DivergenceError, LgdConfig, LgdResult, lgd_predict
from .priors import (
    DiagonalGaussian,
    IsotropicGaussian,
    PriorFamily,
    SoftplusGaussian,
)

__all__ = [
    "GdConfig",
    "gd_minimize",
    "ridge_posterior_mean",
    "bayes_oracle_predict",
    "reference_lgd_predict",
]

_QUAD_NODES = 512


@dataclass(frozen=True)
class GdConfig:
    iters: int
    eta: float
    w0: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.iters < 0:
            raise ValueError(f"iters must be >= 0, got {self.iters}")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")


def gd_minimize(
    task: Task,
    config: GdConfig,
    prior: PriorFamily | None = None,
    theta: np.ndarray | None = None,
    model: Model | None = None,
    loss: SquaredLoss | None = None,
    reg=None,
) -> np.ndarray:
    """Gradient descent on the potential; returns the final weights.

    Same dispatch contract as `lgd_predict`: prior+theta selects the jitted
    path for the default linear model, callables fall back to python.
    Raises `DivergenceError` if iterates go non-finite (step too large).
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
    w0 = np.zeros(task.d_x) if config.w0 is None else np.asarray(config.w0, dtype=np.float64)
    if w0.shape != (task.d_x,):
        raise ValueError(f"w0 must be ({task.d_x},), got {w0.shape}")
    if fast:
        if prior is None:
            family, theta_arr, beta = kernels.FAMILY_ISOTROPIC, np.zeros(1), 0.0
        else:
            theta_arr = np.asarray(theta, dtype=np.float64).ravel()
            prior._check_theta(theta_arr, task.d_x)
            family, beta = prior.family_code, prior.beta_const
        A = np.ascontiguousarray(task.X.T @ task.X)
        c = task.X.T @ task.y
        w_out = np.empty(task.d_x)
        status = kernels.gd_chain(
            A, c, family, theta_arr, beta, config.iters, config.eta, w0, w_out
        )
        if status != kernels.STATUS_OK:
            raise DivergenceError(int(status), config.eta)
        return w_out
    if prior is not None:
        theta_arr = np.asarray(theta, dtype=np.float64)
        reg = lambda w: prior.reg_grad(theta_arr, w)
    w = w0.copy()
    for k in range(config.iters):
        w = w - config.eta * potential_grad(task, w, reg, model=model, loss=loss)
        if not np.all(np.isfinite(w)):
            raise DivergenceError(k + 1, config.eta)
    return w


def ridge_posterior_mean(X: np.ndarray, y: np.ndarray, precision: np.ndarray) -> np.ndarray:
    """Solve (X^T X + diag(precision)) w = X^T y by Cholesky.

    ``precision`` is a scalar or per-coordinate vector of positive prior
    precisions; this is the posterior mean for a Gaussian prior under unit
    observation noise and the exact minimizer of the sampled potential.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X {X.shape} and y {y.shape} are inconsistent")
    d = X.shape[1]
    prec = np.broadcast_to(np.asarray(precision, dtype=np.float64), (d,))
    if np.any(prec <= 0) or not np.all(np.isfinite(prec)):
        raise ValueError("precisions must be finite and positive")
    A = X.T @ X + np.diag(prec)
    return cho_solve(cho_factor(A), X.T @ y)


def _softplus_posterior_mean(task: Task, prior: SoftplusGaussian) -> np.ndarray:
    """Posterior mean by tensor-grid quadrature; exact-reference path.

    Dense grids scale as nodes^d, so this is deliberately capped at d <= 2;
    higher dimensions use `reference_lgd_predict` instead.
    """
    d = task.d_x
    theta = prior.oracle_theta(d)
    half_width = prior._envelope_half_width()
    # cover both the prior bulk and wherever the likelihood pulls the mean
    w_ls = ridge_posterior_mean(task.X, task.y, np.full(d, 1e-8))
    lo = min(-half_width, float(np.min(w_ls)) - half_width)
    hi = max(half_width, float(np.max(w_ls)) + half_width)
    axis = np.linspace(lo, hi, _QUAD_NODES)
    if d == 1:
        W = axis[:, None]
    else:
        g0, g1 = np.meshgrid(axis, axis, indexing="ij")
        W = np.stack([g0.ravel(), g1.ravel()], axis=1)
    # data term through the quadratic form: 1/2 w^T A w - c^T w + const
    A = task.X.T @ task.X
    c = task.X.T @ task.y
    nlp = (
        0.5 * theta[0] * np.sum(W * W, axis=1)
        + theta[1] * np.sum(np.logaddexp(0.0, prior.beta * W), axis=1)
    )
    log_post = -(0.5 * np.sum((W @ A) * W, axis=1) - W @ c) - nlp
    p = np.exp(log_post - log_post.max())
    return (p[:, None] * W).sum(axis=0) / p.sum()


def bayes_oracle_predict(task: Task, prior: PriorFamily) -> np.ndarray:
    """Validation predictions of the exact posterior-mean weights under the
    task's generating prior and unit observation noise."""
    if isinstance(prior, IsotropicGaussian):
        w = ridge_posterior_mean(task.X, task.y, 1.0 / prior.sigma2)
    elif isinstance(prior, DiagonalGaussian):
        w = ridge_posterior_mean(task.X, task.y, prior.oracle_theta(task.d_x))
    elif isinstance(prior, SoftplusGaussian):
        if task.d_x > 2:
            raise ValueError(
                "softplus posterior quadrature is limited to d_x <= 2; "
                "use reference_lgd_predict for higher dimensions"
            )
        w = _softplus_posterior_mean(task, prior)
    else:
        raise ValueError(f"no closed-form oracle for prior type {type(prior).__name__}")
    return task.Xv @ w


def reference_lgd_predict(
    task: Task,
    config: LgdConfig,
    prior: PriorFamily | None = None,
    theta: np.ndarray | None = None,
    budget_factor: int = 10,
) -> LgdResult:
    """The same chain with a scaled-up step budget; long-run oracle row."""
    return lgd_predict(task, config.scaled(budget_factor), prior=prior, theta=theta)
