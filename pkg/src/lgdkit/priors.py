"""Prior families and their regularizers.

Each family bundles four things that must stay consistent with each other:
the distribution that ground-truth weights are drawn from, its negative log
density (up to a constant), the gradient map r(w; theta) that the chains
add to the data gradient, and the oracle hyperparameters theta* for which
r equals the gradient of that negative log density.

Families:

- `IsotropicGaussian(sigma2)`: w ~ N(0, sigma2 I), one hyperparameter
  (the precision), r = theta * w, theta* = 1/sigma2.
- `DiagonalGaussian(variances)`: w_i ~ N(0, v_i), d hyperparameters,
  r_i = theta_i * w_i, theta*_i = 1/v_i.
- `SoftplusGaussian(alpha, beta, gamma)`: density proportional to
  exp(-gamma w^2/2 - alpha softplus(beta w)) per coordinate, a skewed
  unimodal family. beta is a fixed shape constant, not a hyperparameter;
  theta = (quadratic weight, softplus weight), theta* = (gamma, alpha),
  r_i = theta0 w_i + theta1 beta sigmoid(beta w_i).

`reg_grad` is the positive gradient of the negative log prior, so adding it
to the data gradient descends the full posterior potential.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from . import kernels

__all__ = [
    "PriorFamily",
    "IsotropicGaussian",
    "DiagonalGaussian",
    "SoftplusGaussian",
    "quadrature_moments_1d",
    "prior_from_config",
    "prior_to_config",
]


def quadrature_moments_1d(
    neg_log_density: Callable[[np.ndarray], np.ndarray],
    half_width: float,
    tol: float = 1e-10,
) -> tuple[float, float]:
    """Mean and variance of exp(-neg_log_density) on [-W, W] by trapezoid
    quadrature with grid doubling until both moments move less than ``tol``.

    The window must cover essentially all mass; callers pass at least eight
    envelope standard deviations.
    """
    if half_width <= 0:
        raise ValueError(f"half_width must be positive, got {half_width}")
    prev: tuple[float, float] | None = None
    n = 1024
    while n <= (1 << 21):
        x = np.linspace(-half_width, half_width, n + 1)
        nld = np.asarray(neg_log_density(x), dtype=np.float64)
        p = np.exp(nld.min() - nld)
        z = np.trapezoid(p, x)
        mean = float(np.trapezoid(x * p, x) / z)
        second = float(np.trapezoid(x * x * p, x) / z)
        var = second - mean * mean
        if prev is not None:
            if abs(mean - prev[0]) < tol and abs(var - prev[1]) < tol * max(1.0, var):
                return mean, var
        prev = (mean, var)
        n *= 2
    raise RuntimeError("quadrature moments did not converge; widen the window")


class PriorFamily:
    """Shared interface; concrete families override everything."""

    kind: str
    family_code: int
    beta_const: float = 0.0

    def h(self, d: int) -> int:
        """Hyperparameter count at weight dimension d."""
        raise NotImplementedError

    def oracle_theta(self, d: int) -> np.ndarray:
        """theta* for which r(. ; theta) = grad neg log prior."""
        raise NotImplementedError

    def reg_grad(self, theta: np.ndarray, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def neg_log_prior(self, theta: np.ndarray, w: np.ndarray) -> float:
        """Negative log density at theta, dropping the normalizing constant."""
        raise NotImplementedError

    def sample_ground_truth(self, d: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def reg_lipschitz(self, theta: np.ndarray) -> float:
        """Upper bound on the Lipschitz constant of w -> r(w; theta)."""
        raise NotImplementedError

    def reg_strong_convexity(self, theta: np.ndarray) -> float:
        """Lower bound on the curvature the regularizer adds."""
        raise NotImplementedError

    def _check_theta(self, theta: np.ndarray, d: int) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64).ravel()
        want = self.h(d)
        if theta.shape[0] != want:
            raise ValueError(
                f"{self.kind} prior expects {want} hyperparameters at d={d}, "
                f"got {theta.shape[0]}"
            )
        if np.any(theta < 0) or not np.all(np.isfinite(theta)):
            raise ValueError("hyperparameters must be finite and >= 0")
        return theta


@dataclass
class IsotropicGaussian(PriorFamily):
    sigma2: float

    kind = "isotropic"
    family_code = kernels.FAMILY_ISOTROPIC

    def __post_init__(self) -> None:
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    def h(self, d: int) -> int:
        return 1

    def oracle_theta(self, d: int) -> np.ndarray:
        return np.array([1.0 / self.sigma2])

    def reg_grad(self, theta: np.ndarray, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        theta = self._check_theta(theta, w.shape[0])
        return theta[0] * w

    def neg_log_prior(self, theta: np.ndarray, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=np.float64)
        theta = self._check_theta(theta, w.shape[0])
        return 0.5 * theta[0] * float(w @ w)

    def sample_ground_truth(self, d: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(0.0, np.sqrt(self.sigma2), size=d)

    def moments_1d(self) -> tuple[float, float]:
        return 0.0, self.sigma2

    def reg_lipschitz(self, theta: np.ndarray) -> float:
        return float(np.asarray(theta).ravel()[0])

    def reg_strong_convexity(self, theta: np.ndarray) -> float:
        return float(np.asarray(theta).ravel()[0])


@dataclass
class DiagonalGaussian(PriorFamily):
    variances: np.ndarray

    kind = "diagonal"
    family_code = kernels.FAMILY_DIAGONAL

    def __post_init__(self) -> None:
        self.variances = np.asarray(self.variances, dtype=np.float64).ravel()
        if self.variances.size < 1:
            raise ValueError("need at least one variance")
        if not np.all(np.isfinite(self.variances)) or np.any(self.variances <= 0):
            raise ValueError("variances must be finite and positive")

    def __eq__(self, other: object) -> bool:
        # the generated dataclass __eq__ would compare the arrays ambiguously
        if not isinstance(other, DiagonalGaussian):
            return NotImplemented
        return bool(np.array_equal(self.variances, other.variances))

    def h(self, d: int) -> int:
        if d != self.variances.size:
            raise ValueError(
                f"diagonal prior holds {self.variances.size} variances but d={d}"
            )
        return d

    def oracle_theta(self, d: int) -> np.ndarray:
        self.h(d)
        return 1.0 / self.variances

    def reg_grad(self, theta: np.ndarray, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        theta = self._check_theta(theta, w.shape[0])
        return theta * w

    def neg_log_prior(self, theta: np.ndarray, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=np.float64)
        theta = self._check_theta(theta, w.shape[0])
        return 0.5 * float(np.sum(theta * w * w))

    def sample_ground_truth(self, d: int, rng: np.random.Generator) -> np.ndarray:
        self.h(d)
        return rng.normal(0.0, 1.0, size=d) * np.sqrt(self.variances)

    def moments_1d(self) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros(self.variances.size), self.variances.copy()

    def reg_lipschitz(self, theta: np.ndarray) -> float:
        return float(np.max(np.asarray(theta).ravel()))

    def reg_strong_convexity(self, theta: np.ndarray) -> float:
        return float(np.min(np.asarray(theta).ravel()))


@dataclass
class SoftplusGaussian(PriorFamily):
    alpha: float
    beta: float
    gamma: float

    kind = "softplus"
    family_code = kernels.FAMILY_SOFTPLUS
    _inv_cdf_points = 4096
    _envelope_widths = 8.0

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        self.beta_const = float(self.beta)
        self._grid: np.ndarray | None = None
        self._cdf: np.ndarray | None = None

    def h(self, d: int) -> int:
        return 2

    def oracle_theta(self, d: int) -> np.ndarray:
        return np.array([self.gamma, self.alpha])

    def reg_grad(self, theta: np.ndarray, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        theta = self._check_theta(theta, w.shape[0])
        return theta[0] * w + theta[1] * self.beta * expit(self.beta * w)

    def neg_log_prior(self, theta: np.ndarray, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=np.float64)
        theta = self._check_theta(theta, w.shape[0])
        quad = 0.5 * theta[0] * float(w @ w)
        soft = float(np.sum(np.logaddexp(0.0, self.beta * w)))
        return quad + theta[1] * soft

    def _neg_log_1d(self, u: np.ndarray) -> np.ndarray:
        return 0.5 * self.gamma * u * u + self.alpha * np.logaddexp(0.0, self.beta * u)

    def _envelope_half_width(self) -> float:
        # Gaussian envelope exp(-gamma u^2 / 2): density <= envelope up to a
        # constant, so +/- 8 envelope sigmas bounds the support numerically
        return self._envelope_widths / np.sqrt(self.gamma)

    def _ensure_inverse_cdf(self) -> None:
        if self._grid is not None:
            return
        w = self._envelope_half_width()
        grid = np.linspace(-w, w, self._inv_cdf_points)
        nld = self._neg_log_1d(grid)
        p = np.exp(nld.min() - nld)
        cdf = np.concatenate([[0.0], np.cumsum((p[1:] + p[:-1]) * 0.5 * np.diff(grid))])
        self._grid = grid
        self._cdf = cdf / cdf[-1]

    def sample_ground_truth(self, d: int, rng: np.random.Generator) -> np.ndarray:
        self._ensure_inverse_cdf()
        u = rng.random(d)
        return np.interp(u, self._cdf, self._grid)

    def moments_1d(self) -> tuple[float, float]:
        return quadrature_moments_1d(self._neg_log_1d, self._envelope_half_width())

    def mode_1d(self) -> float:
        """Root of the 1-d score gamma u + alpha beta sigmoid(beta u); the
        density peak, strictly between the envelope center and -alpha*beta/gamma."""
        lo = -self.alpha * self.beta / self.gamma
        score = lambda u: self.gamma * u + self.alpha * self.beta * expit(self.beta * u)
        return float(brentq(score, lo, 0.0, xtol=1e-12))

    def reg_lipschitz(self, theta: np.ndarray) -> float:
        theta = np.asarray(theta).ravel()
        # sigmoid' peaks at 1/4
        return float(theta[0] + theta[1] * self.beta**2 / 4.0)

    def reg_strong_convexity(self, theta: np.ndarray) -> float:
        return float(np.asarray(theta).ravel()[0])


# ---------------------------------------------------------------------------
# config round-trip
# ---------------------------------------------------------------------------


def prior_to_config(prior: PriorFamily) -> dict:
    if isinstance(prior, IsotropicGaussian):
        return {"kind": "isotropic", "sigma2": prior.sigma2}
    if isinstance(prior, DiagonalGaussian):
        return {"kind": "diagonal", "variances": prior.variances.tolist()}
    if isinstance(prior, SoftplusGaussian):
        return {
            "kind": "softplus",
            "alpha": prior.alpha,
            "beta": prior.beta,
            "gamma": prior.gamma,
        }
    raise ValueError(f"unknown prior type {type(prior).__name__}")


def prior_from_config(cfg: dict) -> PriorFamily:
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ValueError('prior config must be an object with a "kind" key')
    kind = cfg["kind"]
    try:
        if kind == "isotropic":
            return IsotropicGaussian(sigma2=float(cfg["sigma2"]))
        if kind == "diagonal":
            return DiagonalGaussian(variances=np.asarray(cfg["variances"], dtype=np.float64))
        if kind == "softplus":
            return SoftplusGaussian(
                alpha=float(cfg["alpha"]),
                beta=float(cfg["beta"]),
                gamma=float(cfg["gamma"]),
            )
    except KeyError as exc:
        raise ValueError(f"prior config for kind={kind!r} is missing {exc}") from exc
    raise ValueError(f"unknown prior kind {kind!r}")
