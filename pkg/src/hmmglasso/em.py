"""Penalized Baum-Welch (HMMGLasso).

Each M-step solves, per state, a graphical lasso on the responsibility
weighted covariance with multiplier ``2 * lam * sqrt(pi_k) / n_k``, so the
amount of shrinkage adapts to the effective size of every state.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (GaussianState, HmmModel, Responsibilities, SufficientStats,
                   forward_backward)
from .errors import FitError, SingularCovarianceError
from .glasso import PENALTY_KINDS, PenaltySpec, glasso_solve, penalty_value

#: Relative ridge added to weighted covariances before penalized solves.
COV_FLOOR = 1e-8
#: Condition number above which an unpenalized covariance counts as singular.
MAX_CONDITION = 1e12

CONVERGED = "converged"
STATE_COLLAPSED = "state_collapsed"
MAX_ITER = "max_iter"
OBJECTIVE_INCREASE = "objective_increase"


def lambda_uni(n, p):
    """Universal regularization level sqrt(2 n log p) / 2."""
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    return math.sqrt(2.0 * n * math.log(p)) / 2.0


@dataclass(frozen=True)
class FitConfig:
    """Settings for one HMMGLasso run.

    ``lam=None`` resolves to :func:`lambda_uni` and ``pi_min=None`` to
    ``5 / n`` once the data size is known. ``diagonal=True`` swaps the
    graphical lasso M-step for a diagonal covariance MLE.
    """

    lam: float | None = None
    penalty_kind: str = "parcor"
    eps: float = 1e-3
    pi_min: float | None = None
    max_iter: int = 500
    diagonal: bool = False

    def __post_init__(self):
        if self.penalty_kind not in PENALTY_KINDS:
            raise ValueError(f"unknown penalty kind {self.penalty_kind!r}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.lam is not None and not self.lam >= 0:
            raise ValueError("lam must be nonnegative")
        if self.pi_min is not None and not 0 < self.pi_min < 1:
            raise ValueError("pi_min must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def resolve(self, n, p):
        """Fill in data-dependent defaults."""
        return replace(
            self,
            lam=lambda_uni(n, p) if self.lam is None else float(self.lam),
            pi_min=min(5.0 / n, 0.5) if self.pi_min is None else float(self.pi_min),
        )


@dataclass(frozen=True, eq=False)
class Initialization:
    """Starting point for EM: responsibilities, transition matrix, state sizes."""

    u: np.ndarray
    transition: np.ndarray
    pi: np.ndarray = field(default=None)

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim != 2:
            raise ValueError("u must be an (n, K) array")
        if np.any(np.abs(u.sum(axis=1) - 1) > 1e-8):
            raise ValueError("rows of u must sum to one")
        trans = np.array(self.transition, dtype=float)
        if trans.shape != (u.shape[1], u.shape[1]):
            raise ValueError("transition must be K x K")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "transition", trans)
        object.__setattr__(self, "pi", u.sum(axis=0) / u.shape[0])

    @classmethod
    def from_responsibilities(cls, u):
        u = np.asarray(u, dtype=float)
        K = u.shape[1]
        return cls(u=u, transition=np.full((K, K), 1.0 / K))

    @property
    def num_states(self):
        return self.u.shape[1]


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of :func:`fit_hmmglasso`.

    ``termination`` is one of ``converged``, ``state_collapsed``,
    ``max_iter`` or ``objective_increase``; ``collapsed_state`` names the
    offending state for ``state_collapsed``.
    """

    model: HmmModel
    resp: Responsibilities
    config: FitConfig
    penalized_nll_trace: list
    termination: str
    iterations: int
    collapsed_state: int | None = None

    @property
    def num_states(self):
        return self.model.num_states

    @property
    def log_likelihood(self):
        return self.resp.log_likelihood

    def labels(self):
        return self.resp.labels()


def _weighted_covariances(stats, weights):
    means = stats.t1 / weights[:, None]
    covs = stats.t2 / weights[:, None, None] - np.einsum("ki,kj->kij", means, means)
    return means, 0.5 * (covs + np.swapaxes(covs, 1, 2))


def _state_precision(cov, k, config, rho, warm):
    p = cov.shape[0]
    if config.diagonal:
        d = np.diag(cov)
        if np.any(d <= 0):
            raise SingularCovarianceError(
                f"state {k} has a zero-variance coordinate", state=k)
        return np.diag(1.0 / d)
    if rho == 0:
        eig = np.linalg.eigvalsh(cov)
        if eig[0] <= 0 or eig[-1] / eig[0] > MAX_CONDITION:
            raise SingularCovarianceError(
                f"weighted covariance of state {k} is singular", state=k)
        prec = np.linalg.inv(cov)
        return 0.5 * (prec + prec.T)
    cov = cov + COV_FLOOR * np.diag(np.diag(cov))
    if np.any(np.diag(cov) <= 0):
        raise SingularCovarianceError(
            f"state {k} has a zero-variance coordinate", state=k)
    if warm is not None and warm.shape != (p, p):
        warm = None
    prec, _ = glasso_solve(cov, PenaltySpec(config.penalty_kind, rho), warm_start=warm)
    return prec


def m_step(stats, pi, initial, config, transition=None, warm_states=None):
    """Maximization step.

    Parameters
    ----------
    stats : SufficientStats
    pi : ndarray, shape (K,)
        Scaled effective sizes from the preceding E-step.
    initial : ndarray, shape (K,)
        Posterior of the first observation, used as the initial law.
    config : FitConfig
        Must be resolved (``lam`` and ``pi_min`` set).
    transition : ndarray, optional
        Use this transition matrix instead of re-estimating it.
    warm_states : sequence of GaussianState, optional
        Previous estimates, used to warm-start the graphical lasso.

    Returns
    -------
    HmmModel
    """
    weights = stats.weights
    if np.any(weights <= 0):
        k = int(np.argmin(weights))
        raise SingularCovarianceError(f"state {k} has no mass", state=k)
    means, covs = _weighted_covariances(stats, weights)
    K = len(weights)
    states = []
    for k in range(K):
        rho = 2.0 * config.lam * math.sqrt(pi[k]) / weights[k]
        warm = warm_states[k].precision if warm_states is not None else None
        prec = _state_precision(covs[k], k, config, rho, warm)
        states.append(GaussianState(means[k], prec))

    if transition is None:
        counts = stats.t3
        rows = counts.sum(axis=1, keepdims=True)
        transition = np.where(rows > 0, counts / np.where(rows > 0, rows, 1.0), 1.0 / K)
    transition = transition / transition.sum(axis=1, keepdims=True)
    initial = np.asarray(initial, dtype=float)
    initial = initial / initial.sum()
    return HmmModel(states=tuple(states), transition=transition, initial=initial)


def penalized_nll(model, resp, config):
    """-loglik + lam * sum_k sqrt(pi_k) Pen(Omega_k)."""
    value = -resp.log_likelihood
    if config.lam and not config.diagonal:
        for k, state in enumerate(model.states):
            value += (config.lam * math.sqrt(resp.pi[k])
                      * penalty_value(state.precision, config.penalty_kind,
                                      state.covariance))
    return value


def _relative_change(new_model, old_model):
    err = 0.0
    for a, b in zip(new_model.states, old_model.states):
        err = max(err, float(np.max(np.abs(a.covariance - b.covariance)
                                    / (1.0 + np.abs(a.covariance)))))
    return err


def _as_initialization(init, K):
    if not isinstance(init, Initialization):
        init = Initialization.from_responsibilities(init)
    if init.num_states != K:
        raise ValueError(f"initialization has {init.num_states} states, expected {K}")
    return init


def fit_hmmglasso(data, K, config=None, init=None):
    """Fit a K-state HMM with penalized state-specific precision matrices.

    Starts with an M-step from ``init`` (the first M-step keeps the
    initial transition matrix) and alternates M- and E-steps until the
    largest relative change in any covariance entry drops below
    ``config.eps``, some state's scaled size drops below ``pi_min``, or
    ``max_iter`` is reached.

    Parameters
    ----------
    data : array_like, shape (n, p)
    K : int
    config : FitConfig, optional
    init : Initialization or array_like of shape (n, K)
        Starting responsibilities (and transition matrix).

    Returns
    -------
    FitResult
        On state collapse the last iterate with all states above
        ``pi_min`` is returned.
    """
    data = np.asarray(data, dtype=float)
    n, p = data.shape
    if K < 1:
        raise ValueError("K must be at least 1")
    if init is None:
        raise ValueError("an initialization is required")
    init = _as_initialization(init, K)
    if init.u.shape[0] != n:
        raise ValueError("initialization length does not match the data")
    config = (config or FitConfig()).resolve(n, p)

    u, pi, counts = init.u, init.pi, None
    prev = None
    trace = []
    increases = 0
    termination, collapsed = MAX_ITER, None
    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        stats = SufficientStats.from_data(
            data, u, counts if counts is not None else np.zeros((K, K)))
        model = m_step(
            stats, pi, u[0], config,
            transition=init.transition if iteration == 1 else None,
            warm_states=prev[0].states if prev is not None else None)
        resp = forward_backward(data, model, keep_pairwise=False)
        if not np.isfinite(resp.log_likelihood):
            raise FitError(
                f"non-finite log-likelihood at iteration {iteration}",
                iteration=iteration)
        value = penalized_nll(model, resp, config)

        if np.any(resp.pi < config.pi_min):
            termination, collapsed = STATE_COLLAPSED, int(np.argmin(resp.pi))
            if prev is None:
                trace.append(value)
                prev = (model, resp)
            break

        if trace and value > trace[-1]:
            increases += 1
        else:
            increases = 0
        trace.append(value)
        err = _relative_change(model, prev[0]) if prev is not None else np.inf
        prev = (model, resp)
        if err < config.eps:
            termination = CONVERGED
            break
        if config.penalty_kind != "invcov" and increases >= 3:
            termination = OBJECTIVE_INCREASE
            break
        u, pi, counts = resp.u, resp.pi, resp.transition_counts

    model, resp = prev
    return FitResult(model=model, resp=resp, config=config,
                     penalized_nll_trace=trace, termination=termination,
                     iterations=iteration, collapsed_state=collapsed)
