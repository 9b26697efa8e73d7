"""Non-asymptotic guarantees for the chains and the meta-learner.

Calculators, not certificates: each function evaluates a closed-form bound
at the caller's constants and reports the pieces it was built from. Groups:

- Wasserstein-2 contraction of the discretized chain toward its target
  (`wasserstein_bound`, the infinite-step limit `u2_limit`, and the
  parameter recipe `ula_params` that inverts the bounds for a requested
  accuracy);
- concentration of the consolidation average around the target expectation
  (`empmean_bounds`);
- pseudo-dimension of the unrolled-chain hypothesis class counted through
  its arithmetic circuit (`pdim_bound`), and the task-sample sizes that
  make empirical hyperparameter selection generalize (`task_count_bound`,
  `hoeffding_deviation`, `bernstein_tail`, `erm_bayes_budget`).

Conventions: ``m`` and ``L`` are the strong-convexity and smoothness
constants of the potential, ``kappa = 2 L m / (L + m)``, and every step
size must satisfy ``eta <= 1 / (m + L)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SmoothnessSpec",
    "GJComplexity",
    "BoundResult",
    "UlaParams",
    "EmpMeanBounds",
    "ErmBayesBudget",
    "wasserstein_bound",
    "u2_limit",
    "ula_params",
    "empmean_bounds",
    "pdim_bound",
    "task_count_bound",
    "hoeffding_deviation",
    "bernstein_tail",
    "erm_bayes_budget",
]


@dataclass(frozen=True)
class SmoothnessSpec:
    """Curvature box for the potential: m I <= hessian <= L I.

    lip_g is the Lipschitz constant of the statistic whose posterior
    average is being estimated; dist0 the distance from the chain start to
    the potential's minimizer.
    """

    m: float
    L: float
    lip_g: float = 1.0
    dist0: float = 0.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.m) and self.m > 0):
            raise ValueError(f"m must be positive, got {self.m}")
        if not (np.isfinite(self.L) and self.L >= self.m):
            raise ValueError(f"need L >= m > 0, got L={self.L} m={self.m}")
        if self.lip_g <= 0:
            raise ValueError(f"lip_g must be positive, got {self.lip_g}")
        if self.dist0 < 0:
            raise ValueError(f"dist0 must be >= 0, got {self.dist0}")

    @property
    def kappa(self) -> float:
        return 2.0 * self.L * self.m / (self.L + self.m)

    @property
    def eta_max(self) -> float:
        return 1.0 / (self.m + self.L)


@dataclass(frozen=True)
class GJComplexity:
    """Circuit complexity counts for one chain step and its surroundings.

    Per evaluation of model, loss gradient, and regularizer: polynomial
    degree ``delta_*`` and number of distinct predicate polynomials
    ``lambda_*``. ``steps`` is the total chain length (burn plus keep),
    ``h`` the hyperparameter count, ``n``/``n_v`` the sample counts.
    """

    delta_f: int
    lambda_f: int
    delta_l: int
    lambda_l: int
    delta_r: int
    lambda_r: int
    steps: int
    h: int
    n: int
    n_v: int

    def __post_init__(self) -> None:
        if self.delta_f < 1 or self.delta_l < 1:
            raise ValueError("model and loss degrees must be >= 1 (zero degrees are degenerate)")
        if self.delta_r < 0 or min(self.lambda_f, self.lambda_l, self.lambda_r) < 0:
            raise ValueError("degrees and predicate counts must be >= 0")
        if self.steps < 1 or self.h < 1 or self.n < 1 or self.n_v < 1:
            raise ValueError("steps, h, n, n_v must all be >= 1")


@dataclass(frozen=True)
class BoundResult:
    value: float
    formula: str
    inputs: dict = field(default_factory=dict)
    components: dict = field(default_factory=dict)


@dataclass(frozen=True)
class UlaParams:
    eta: float
    burn: int
    keep: int


@dataclass(frozen=True)
class EmpMeanBounds:
    variance_bound: float
    tail_probability: float
    deviation_at_delta: float


@dataclass(frozen=True)
class ErmBayesBudget:
    burn: float
    keep: float
    n_tasks: float


def _check_schedule(spec: SmoothnessSpec, etas: np.ndarray) -> np.ndarray:
    # an empty schedule is legal: zero steps, the chain is still at its start
    etas = np.asarray(etas, dtype=np.float64).ravel()
    if np.any(etas <= 0) or not np.all(np.isfinite(etas)):
        raise ValueError("step sizes must be finite and positive")
    if np.any(etas > spec.eta_max * (1.0 + 1e-12)):
        raise ValueError(
            f"step sizes must satisfy eta <= 1/(m+L) = {spec.eta_max!r}"
        )
    if np.any(np.diff(etas) > 0):
        raise ValueError("the step-size schedule must be non-increasing")
    return etas


def wasserstein_bound(spec: SmoothnessSpec, etas: np.ndarray, d: int) -> BoundResult:
    """Squared W2 distance between the chain law after ``len(etas)`` steps
    and the target: u1 * (dist0^2 + d/m) + u2, with

        u1 = 2 prod_i (1 - kappa eta_i / 2)
        u2 = L^2 d sum_i eta_i^2 (1/kappa + eta_i)
             (2 + L^2 eta_i / m + L^2 eta_i^2 / 6) prod_{j>i} (1 - kappa eta_j / 2)
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    etas = _check_schedule(spec, etas)
    kappa = spec.kappa
    factors = 1.0 - kappa * etas / 2.0
    u1 = 2.0 * float(np.prod(factors))
    # tail[i] = prod_{j > i} factors_j
    rev = np.cumprod(factors[::-1])[::-1]
    tail = np.concatenate([rev[1:], [1.0]])
    terms = (
        spec.L**2
        * d
        * etas**2
        * (1.0 / kappa + etas)
        * (2.0 + spec.L**2 * etas / spec.m + spec.L**2 * etas**2 / 6.0)
        * tail
    )
    u2 = float(np.sum(terms))
    value = u1 * (spec.dist0**2 + d / spec.m) + u2
    return BoundResult(
        value=value,
        formula="w2_squared_chain_vs_target",
        inputs={"m": spec.m, "L": spec.L, "dist0": spec.dist0, "d": d, "k": int(etas.size)},
        components={"u1": u1, "u2": u2},
    )


def u2_limit(spec: SmoothnessSpec, eta: float, d: int) -> float:
    """k -> inf limit of the discretization term u2 at a constant step:
    the geometric series sums to 2/(kappa eta) times the per-step weight."""
    _check_schedule(spec, np.array([eta]))
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    a = (
        spec.L**2
        * d
        * eta**2
        * (1.0 / spec.kappa + eta)
        * (2.0 + spec.L**2 * eta / spec.m + spec.L**2 * eta**2 / 6.0)
    )
    return a / (spec.kappa * eta / 2.0)


def ula_params(spec: SmoothnessSpec, eps: float, delta: float, d: int) -> UlaParams:
    """Chain parameters sufficient for |consolidated mean - target mean| of
    a lip_g-Lipschitz statistic to be at most eps, up to probability delta.

    Recipe: start eta at min(1/(m+L), eps^2/(lip_g^2 d)) and halve until
    the infinite-step discretization term fits in eps^2/2; pick burn so the
    contracted initial distance fits in the other eps^2/2; size the window
    by the variance proposition, keep >= 128 lip_g^2 log(1/delta) /
    (eps^2 kappa^2 eta).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    eta = min(spec.eta_max, eps**2 / (spec.lip_g**2 * d))
    target = eps**2 / 2.0
    for _ in range(200):
        if u2_limit(spec, eta, d) <= target:
            break
        eta /= 2.0
    else:
        raise RuntimeError("no feasible step size after 200 halvings")
    rho = 1.0 - spec.kappa * eta / 2.0
    start = 2.0 * (spec.dist0**2 + d / spec.m)
    if start <= target:
        burn = 0
    else:
        burn = math.ceil(math.log(start / target) / -math.log(rho))
    keep = math.ceil(
        128.0 * spec.lip_g**2 * math.log(1.0 / delta) / (eps**2 * spec.kappa**2 * eta)
    )
    return UlaParams(eta=eta, burn=burn, keep=keep)


def empmean_bounds(
    spec: SmoothnessSpec, keep: int, eta: float, r: float, delta: float, burn: int = 0
) -> EmpMeanBounds:
    """Concentration of the consolidation average of a lip_g-Lipschitz
    statistic around its stationary expectation:

        Var <= 8 lip^2 (1 + C0/(keep eta)) / (kappa^2 keep eta)
        P(dev >= r) <= exp(-r^2 kappa^2 keep eta / (16 lip^2 (1 + C0/(keep eta))))

    with C0 = 1/kappa + 2/(m+L). ``deviation_at_delta`` inverts the tail at
    the requested delta. ``burn`` is accepted for interface symmetry; the
    stationary-start bounds do not consume it.
    """
    _check_schedule(spec, np.array([eta]))
    if keep < 1:
        raise ValueError(f"keep must be >= 1, got {keep}")
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if burn < 0:
        raise ValueError(f"burn must be >= 0, got {burn}")
    kappa = spec.kappa
    lip2 = spec.lip_g**2
    c0 = 1.0 / kappa + 2.0 / (spec.m + spec.L)
    window = keep * eta
    inflate = 1.0 + c0 / window
    variance = 8.0 * lip2 * inflate / (kappa**2 * window)
    tail = math.exp(-(r**2) * kappa**2 * window / (16.0 * lip2 * inflate))
    dev = math.sqrt(16.0 * lip2 * inflate * math.log(1.0 / delta) / (kappa**2 * window))
    return EmpMeanBounds(variance_bound=variance, tail_probability=tail, deviation_at_delta=dev)


def pdim_bound(gj: GJComplexity, params: int | None = None) -> BoundResult:
    """Pseudo-dimension bound for the unrolled chain as a function of its
    hyperparameters: params * (log2 Delta + log2 Lambda), where Delta is
    the degree of the end-to-end circuit polynomial and Lambda its
    predicate count.

    One chain step multiplies the iterate degree by
    2 delta_f (delta_l + 1) + delta_r + 2 (loss gradient through the model,
    model Jacobian, regularizer, update affine terms); the final prediction
    and loss contribute the leading delta_f delta_l. Computed in log space
    so long chains cannot overflow.
    """
    if params is None:
        params = gj.h
    if params < 1:
        raise ValueError(f"params must be >= 1, got {params}")
    step_base = 2 * gj.delta_f * (gj.delta_l + 1) + gj.delta_r + 2
    log2_delta = (
        math.log2(gj.delta_f) + math.log2(gj.delta_l) + gj.steps * math.log2(step_base)
    )
    lam = (
        gj.steps * (gj.n * (2 * gj.lambda_f + gj.lambda_l) + gj.lambda_r)
        + gj.n_v * gj.lambda_f
        + gj.n_v * gj.lambda_l
        + 1
    )
    log2_lambda = math.log2(lam)
    value = params * (log2_delta + log2_lambda)
    return BoundResult(
        value=value,
        formula="pdim_unrolled_chain",
        inputs={"steps": gj.steps, "params": params},
        components={"log2_delta": log2_delta, "log2_lambda": log2_lambda, "step_base": step_base},
    )


def task_count_bound(
    C: float, eps: float, delta: float, pdim: float, constant: float = 1.0
) -> BoundResult:
    """Tasks sufficient for uniform eps-accurate empirical means over a
    class of pseudo-dimension pdim with losses in [0, C]:
    constant * (C/eps)^2 * (pdim + ln(1/delta))."""
    if C <= 0 or eps <= 0 or constant <= 0:
        raise ValueError("C, eps, constant must be positive")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if pdim < 0:
        raise ValueError(f"pdim must be >= 0, got {pdim}")
    value = constant * (C / eps) ** 2 * (pdim + math.log(1.0 / delta))
    return BoundResult(
        value=value,
        formula="uniform_convergence_task_count",
        inputs={"C": C, "eps": eps, "delta": delta, "pdim": pdim, "constant": constant},
    )


def hoeffding_deviation(C: float, delta: float, N: int) -> float:
    """Two-sided Hoeffding radius for N means of [0, C] variables:
    C sqrt(ln(1/delta) / (2N))."""
    if C <= 0 or N < 1:
        raise ValueError("need C > 0 and N >= 1")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    return C * math.sqrt(math.log(1.0 / delta) / (2.0 * N))


def bernstein_tail(N: int, t: float, V: float, C: float) -> float:
    """One-sided Bernstein tail for centered variables bounded by C with
    variance at most V: exp(-3 N t^2 / (2 (3V + Ct)))."""
    if N < 1 or C <= 0 or V < 0 or t < 0:
        raise ValueError("need N >= 1, C > 0, V >= 0, t >= 0")
    if t == 0:
        return 1.0
    return math.exp(-3.0 * N * t**2 / (2.0 * (3.0 * V + C * t)))


def _log_floor(x: float) -> float:
    # asymptotic expressions: log factors floored at 1 to stay positive and
    # monotone for small arguments
    return max(math.log(x), 1.0)


def erm_bayes_budget(
    C: float,
    eps1: float,
    eps2: float,
    delta: float,
    d: int,
    h: int,
    n: int,
    n_v: int,
    lip_f: float,
    dist0: float = 0.0,
    constant: float = 1.0,
) -> ErmBayesBudget:
    """Chain and task budgets for empirically selected hyperparameters to
    be eps1-close in meta-loss and the chain eps2-close to its posterior,
    with probability 1 - delta. With alpha = lip_f / eps2:

        burn    ~ d alpha^2 log((d + dist0^2) alpha^2)
        keep    ~ d alpha^4 log(2 n_v / delta)
        n_tasks ~ (C/eps1)^2 d h log(d (n + n_v)) (alpha^2 log(alpha) + alpha^4 log(2/delta))
    """
    if min(C, eps1, eps2, lip_f, constant) <= 0:
        raise ValueError("C, eps1, eps2, lip_f, constant must be positive")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if min(d, h, n, n_v) < 1:
        raise ValueError("d, h, n, n_v must be >= 1")
    if dist0 < 0:
        raise ValueError(f"dist0 must be >= 0, got {dist0}")
    alpha = lip_f / eps2
    burn = constant * d * alpha**2 * _log_floor((d + dist0**2) * alpha**2)
    keep = constant * d * alpha**4 * _log_floor(2.0 * n_v / delta)
    n_tasks = (
        constant
        * (C / eps1) ** 2
        * d
        * h
        * _log_floor(d * (n + n_v))
        * (alpha**2 * _log_floor(alpha) + alpha**4 * _log_floor(2.0 / delta))
    )
    return ErmBayesBudget(burn=burn, keep=keep, n_tasks=n_tasks)
