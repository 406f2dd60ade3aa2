"""Gaussian-emission HMM primitives: state parameters, smoothing, sampling.

All probability recursions run in log space so long sequences do not
underflow. States are indexed from 0.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DegenerateStateError, DimensionError

LOG_2PI = np.log(2.0 * np.pi)

#: Quadratic forms above this are treated as zero density instead of overflowing.
MAX_QUADRATIC_FORM = 1e12


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Emission parameters of one hidden state.

    Parameters
    ----------
    mean : array_like, shape (p,)
    precision : array_like, shape (p, p)
        Symmetric positive definite inverse covariance.

    The covariance, its Cholesky factor and ``log_det_precision`` are derived
    once at construction.
    """

    mean: np.ndarray
    precision: np.ndarray
    covariance: np.ndarray = field(init=False, repr=False)
    log_det_precision: float = field(init=False)
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        precision = np.array(self.precision, dtype=float)
        p = mean.shape[0]
        if precision.shape != (p, p):
            raise DimensionError(
                f"precision has shape {precision.shape}, expected {(p, p)}")
        if not np.all(np.isfinite(precision)) or not np.all(np.isfinite(mean)):
            raise DegenerateStateError("state parameters are not finite")
        if np.max(np.abs(precision - precision.T), initial=0.0) > 1e-10:
            raise ValueError("precision matrix is not symmetric")
        precision = 0.5 * (precision + precision.T)
        try:
            chol = np.linalg.cholesky(precision)
        except np.linalg.LinAlgError:
            raise DegenerateStateError(
                "precision matrix is not positive definite") from None
        chol_inv = np.linalg.inv(chol)
        covariance = chol_inv.T @ chol_inv
        covariance = 0.5 * (covariance + covariance.T)
        for arr in (mean, precision, covariance, chol):
            arr.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "precision", precision)
        object.__setattr__(self, "covariance", covariance)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "log_det_precision",
                           float(2.0 * np.sum(np.log(np.diag(chol)))))

    @classmethod
    def from_covariance(cls, mean, covariance):
        cov = np.asarray(covariance, dtype=float)
        prec = np.linalg.inv(cov)
        return cls(mean, 0.5 * (prec + prec.T))

    @property
    def dim(self):
        return self.mean.shape[0]

    def quadratic_form(self, x):
        """(x - mean)^T precision (x - mean), row-wise for 2-d ``x``."""
        z = (np.asarray(x, dtype=float) - self.mean) @ self._chol
        return np.sum(z * z, axis=-1)


def log_emission_density(x, state):
    """Log multivariate normal density of ``x`` under ``state``.

    ``x`` may be a single observation of shape (p,) or a batch (n, p).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != state.dim:
        raise DimensionError(
            f"observation has dimension {x.shape[-1]}, state has {state.dim}")
    quad = state.quadratic_form(x)
    out = 0.5 * state.log_det_precision - 0.5 * state.dim * LOG_2PI - 0.5 * quad
    out = np.where(quad > MAX_QUADRATIC_FORM, -np.inf, out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class HmmModel:
    """Full parameter set: K emission states, transition matrix, initial law."""

    states: tuple
    transition: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        states = tuple(self.states)
        if not states:
            raise ValueError("an HMM needs at least one state")
        dims = {s.dim for s in states}
        if len(dims) != 1:
            raise DimensionError(f"states have mixed dimensions {sorted(dims)}")
        K = len(states)
        transition = np.array(self.transition, dtype=float)
        initial = np.array(self.initial, dtype=float).reshape(-1)
        if transition.shape != (K, K) or initial.shape != (K,):
            raise DimensionError("transition/initial shapes do not match K")
        if np.any(transition < 0) or np.any(np.abs(transition.sum(1) - 1) > 1e-10):
            raise ValueError("transition rows must be probability vectors")
        if np.any(initial < 0) or abs(initial.sum() - 1) > 1e-10:
            raise ValueError("initial distribution must be a probability vector")
        transition.flags.writeable = False
        initial.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "initial", initial)

    @property
    def num_states(self):
        return len(self.states)

    @property
    def dim(self):
        return self.states[0].dim

    def permuted(self, order):
        """Return the same model with states reordered as ``order``."""
        order = np.asarray(order)
        return HmmModel(
            states=tuple(self.states[i] for i in order),
            transition=self.transition[np.ix_(order, order)],
            initial=self.initial[order],
        )


@dataclass(frozen=True, eq=False)
class Responsibilities:
    """Smoothing posteriors from one forward-backward pass.

    Attributes
    ----------
    u : ndarray, shape (n, K)
        P(S_t = k | X).
    v : ndarray, shape (n - 1, K, K) or None
        P(S_t = k, S_{t+1} = k' | X). Omitted when not requested.
    transition_counts : ndarray, shape (K, K)
        Expected transition counts, the sum of ``v`` over t.
    pi : ndarray, shape (K,)
        Scaled effective state sizes n_k / n.
    log_likelihood : float
        Observed-data log-likelihood.
    """

    u: np.ndarray
    v: np.ndarray | None
    transition_counts: np.ndarray
    pi: np.ndarray
    log_likelihood: float

    @property
    def n(self):
        return self.u.shape[0]

    @property
    def num_states(self):
        return self.u.shape[1]

    @property
    def effective_sizes(self):
        return self.pi * self.n

    def labels(self):
        return np.argmax(self.u, axis=1)


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """Responsibility-weighted sufficient statistics.

    ``t1[k] = sum_t u_k(t) x_t``, ``t2[k] = sum_t u_k(t) x_t x_t^T`` and
    ``t3`` holds the expected transition counts.
    """

    t1: np.ndarray
    t2: np.ndarray
    t3: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_data(cls, data, u, transition_counts):
        data = np.asarray(data, dtype=float)
        u = np.asarray(u, dtype=float)
        t1 = u.T @ data
        t2 = np.einsum("tk,ti,tj->kij", u, data, data, optimize=True)
        t2 = 0.5 * (t2 + np.swapaxes(t2, 1, 2))
        return cls(t1=t1, t2=t2, t3=np.asarray(transition_counts, dtype=float),
                   weights=u.sum(axis=0))


def emission_log_densities(data, states):
    """Matrix of log densities, shape (n, K); raises on NaN or +inf."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise DimensionError("data must be a 2-d array")
    out = np.empty((data.shape[0], len(states)))
    for k, state in enumerate(states):
        out[:, k] = log_emission_density(data, state)
        bad = ~(np.isfinite(out[:, k]) | np.isneginf(out[:, k]))
        if np.any(bad):
            raise DegenerateStateError(
                f"non-finite emission log-density for state {k}", state=k)
    return out


@njit(cache=True)
def _logsumexp_vec(a):
    m = -np.inf
    for x in a:
        if x > m:
            m = x
    if m == -np.inf:
        return -np.inf
    s = 0.0
    for x in a:
        s += np.exp(x - m)
    return m + np.log(s)


@njit(cache=True)
def _forward(log_b, log_a, log_init):
    # Normalized forward pass: each row of log_alpha is shifted to sum to
    # one and the shifts log_c add up to the log-likelihood. Keeping rows
    # at unit scale avoids cancellation between alpha, beta and the
    # likelihood on long sequences.
    n, K = log_b.shape
    log_alpha = np.empty((n, K))
    log_c = np.empty(n)
    for k in range(K):
        log_alpha[0, k] = log_init[k] + log_b[0, k]
    log_c[0] = _logsumexp_vec(log_alpha[0])
    for k in range(K):
        log_alpha[0, k] -= log_c[0]
    tmp = np.empty(K)
    for t in range(1, n):
        if log_c[t - 1] == -np.inf:
            log_c[t:] = -np.inf
            log_alpha[t:] = -np.inf
            break
        for k in range(K):
            for j in range(K):
                tmp[j] = log_alpha[t - 1, j] + log_a[j, k]
            log_alpha[t, k] = log_b[t, k] + _logsumexp_vec(tmp)
        log_c[t] = _logsumexp_vec(log_alpha[t])
        for k in range(K):
            log_alpha[t, k] -= log_c[t]
    return log_alpha, log_c


@njit(cache=True)
def _backward(log_b, log_a, log_c):
    # Backward pass scaled by the forward shifts, so that
    # exp(log_alpha + log_beta) is the smoothing posterior.
    n, K = log_b.shape
    log_beta = np.zeros((n, K))
    tmp = np.empty(K)
    for t in range(n - 2, -1, -1):
        for j in range(K):
            for k in range(K):
                tmp[k] = log_a[j, k] + log_b[t + 1, k] + log_beta[t + 1, k]
            log_beta[t, j] = _logsumexp_vec(tmp) - log_c[t + 1]
    return log_beta


@njit(cache=True)
def _backward_selfscaled(log_b, log_a):
    # Backward pass normalized by its own row sums; independent of the
    # forward pass. Returns the rows and their log shifts.
    n, K = log_b.shape
    log_beta = np.zeros((n, K))
    log_d = np.zeros(n)
    tmp = np.empty(K)
    for t in range(n - 2, -1, -1):
        for j in range(K):
            for k in range(K):
                tmp[k] = log_a[j, k] + log_b[t + 1, k] + log_beta[t + 1, k]
            log_beta[t, j] = _logsumexp_vec(tmp)
        log_d[t] = _logsumexp_vec(log_beta[t])
        if log_d[t] == -np.inf:
            break
        for j in range(K):
            log_beta[t, j] -= log_d[t]
    return log_beta, log_d


@njit(cache=True)
def _pairwise(log_alpha, log_beta, log_b, log_a, log_c, keep):
    n, K = log_b.shape
    counts = np.zeros((K, K))
    v = np.zeros((n - 1 if keep else 0, K, K))
    for t in range(n - 1):
        for j in range(K):
            for k in range(K):
                e = np.exp(log_alpha[t, j] + log_a[j, k] + log_b[t + 1, k]
                           + log_beta[t + 1, k] - log_c[t + 1])
                counts[j, k] += e
                if keep:
                    v[t, j, k] = e
    return v, counts


def _safe_log(a):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(a, dtype=float))


def forward_backward(data, model, keep_pairwise=True, log_densities=None):
    """Exact smoothing posteriors and observed-data log-likelihood.

    Parameters
    ----------
    data : array_like, shape (n, p)
    model : HmmModel
    keep_pairwise : bool
        Store the full (n - 1, K, K) pairwise posterior array. When False
        only its sum over t is kept, which is all the M-step needs.
    log_densities : ndarray, shape (n, K), optional
        Precomputed emission log densities.

    Returns
    -------
    Responsibilities
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 1:
        raise DimensionError("data must be a non-empty (n, p) array")
    if data.shape[1] != model.dim:
        raise DimensionError(
            f"data has {data.shape[1]} columns, model has dimension {model.dim}")
    log_b = (emission_log_densities(data, model.states)
             if log_densities is None else np.asarray(log_densities, dtype=float))
    log_a = _safe_log(model.transition)
    log_init = _safe_log(model.initial)

    log_alpha, log_c = _forward(log_b, log_a, log_init)
    log_lik = math.fsum(log_c) if np.all(np.isfinite(log_c)) else -np.inf
    if not np.isfinite(log_lik):
        return Responsibilities(
            u=np.full(log_b.shape, np.nan), v=None,
            transition_counts=np.full((model.num_states,) * 2, np.nan),
            pi=np.full(model.num_states, np.nan), log_likelihood=float(log_lik))
    log_beta = _backward(log_b, log_a, log_c)

    u = np.exp(log_alpha + log_beta)
    u /= u.sum(axis=1, keepdims=True)
    v, counts = _pairwise(log_alpha, log_beta, log_b, log_a, log_c,
                          bool(keep_pairwise))
    return Responsibilities(
        u=u,
        v=v if keep_pairwise else None,
        transition_counts=counts,
        pi=u.sum(axis=0) / u.shape[0],
        log_likelihood=float(log_lik),
    )


def backward_log_likelihood(data, model):
    """Log-likelihood assembled from the backward pass (consistency check)."""
    log_b = emission_log_densities(data, model.states)
    log_beta, log_d = _backward_selfscaled(log_b, _safe_log(model.transition))
    head = _logsumexp_vec(_safe_log(model.initial) + log_b[0] + log_beta[0])
    if not (np.isfinite(head) and np.all(np.isfinite(log_d))):
        return -np.inf
    return float(head + math.fsum(log_d))


def log_likelihood(data, model):
    """Observed-data log-likelihood via the forward pass only."""
    log_b = emission_log_densities(data, model.states)
    _, log_c = _forward(log_b, _safe_log(model.transition), _safe_log(model.initial))
    return math.fsum(log_c) if np.all(np.isfinite(log_c)) else -np.inf


def sample_path(model, n, seed=None):
    """Draw ``n`` observations and their hidden labels from ``model``.

    Returns
    -------
    data : ndarray, shape (n, p)
    labels : ndarray of int, shape (n,)
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    K, p = model.num_states, model.dim
    cum_trans = np.cumsum(model.transition, axis=1)
    cum_trans[:, -1] = 1.0
    draws = rng.random(n)
    labels = np.empty(n, dtype=np.int64)
    labels[0] = min(np.searchsorted(np.cumsum(model.initial), draws[0], side="right"),
                    K - 1)
    for t in range(1, n):
        labels[t] = np.searchsorted(cum_trans[labels[t - 1]], draws[t], side="right")
    z = rng.standard_normal((n, p))
    data = np.empty((n, p))
    for k, state in enumerate(model.states):
        idx = labels == k
        chol_cov = np.linalg.cholesky(state.covariance)
        data[idx] = state.mean + z[idx] @ chol_cov.T
    return data, labels
