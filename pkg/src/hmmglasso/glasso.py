"""Graphical lasso for a single state's precision matrix.

Solves::

    min_Omega  -log|Omega| + tr(Omega C) + rho * Pen(Omega)

for three penalties on the off-diagonal entries:

``invcov``
    sum of |Omega_ll'| (classical graphical lasso).
``parcor``
    sum of |Omega_ll'| / sqrt(Omega_ll Omega_l'l'), i.e. the l1-norm of the
    partial correlations.
``invcor``
    sum of |Omega_ll'| sqrt(Sigma_ll Sigma_l'l'), the l1-norm of the
    inverse correlation matrix.

Diagonal entries are never penalized. ``invcov`` is solved by blockwise
coordinate descent (one lasso per column). The two scale-free penalties are
handled by freezing their scale factors at the current iterate, solving the
resulting entry-weighted problem, and repeating.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import GlassoConvergenceError, SingularCovarianceError

PENALTY_KINDS = ("invcov", "parcor", "invcor")

#: Entries with magnitude at or below this count as structural zeros.
EDGE_TOL = 1e-8


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty function and its multiplier ``rho``."""

    kind: str = "parcor"
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if not self.rho >= 0:
            raise ValueError("rho must be nonnegative")


def partial_correlation(precision):
    """Psi_ll' = -Omega_ll' / sqrt(Omega_ll Omega_l'l') (diagonal is -1)."""
    precision = np.asarray(precision, dtype=float)
    d = np.diag(precision)
    if np.any(d <= 0):
        raise ValueError("precision has a non-positive diagonal entry")
    s = np.sqrt(d)
    return -precision / np.outer(s, s)


def penalty_value(precision, kind, covariance=None):
    """Evaluate Pen(Omega) for ``kind``; sums over both off-diagonal triangles."""
    precision = np.asarray(precision, dtype=float)
    off = ~np.eye(precision.shape[0], dtype=bool)
    if kind == "invcov":
        mat = precision
    elif kind == "parcor":
        mat = partial_correlation(precision)
    elif kind == "invcor":
        if covariance is None:
            covariance = np.linalg.inv(precision)
        s = np.sqrt(np.diag(covariance))
        mat = precision * np.outer(s, s)
    else:
        raise ValueError(f"unknown penalty kind {kind!r}")
    return float(np.abs(mat[off]).sum())


def glasso_objective(precision, cov_emp, penalty):
    sign, logdet = np.linalg.slogdet(precision)
    if sign <= 0:
        return np.inf
    fit = -logdet + float(np.sum(precision * cov_emp))
    if penalty.rho == 0:
        return fit
    return fit + penalty.rho * penalty_value(precision, penalty.kind)


def graph_of(precision, tol=EDGE_TOL):
    """Undirected edges ``(l, l')`` with ``l < l'`` and ``|Omega_ll'| > tol``."""
    precision = np.asarray(precision)
    rows, cols = np.nonzero(np.triu(np.abs(precision) > tol, k=1))
    return {(int(i), int(j)) for i, j in zip(rows, cols)}


@njit(cache=True)
def _glasso_cd(C, pen, W, B, tol, max_iter, inner_tol, inner_max):
    # Blockwise coordinate descent on the working covariance W. Column j of B
    # holds the lasso coefficients beta = -Omega[:, j] / Omega[j, j].
    # Convergence is measured in units of sqrt(C_ii C_jj) so the stopping
    # point does not depend on how the coordinates are scaled.
    p = C.shape[0]
    scale = np.sqrt(np.diag(C))
    n_iter = 0
    converged = False
    for it in range(max_iter):
        n_iter = it + 1
        max_change = 0.0
        for j in range(p):
            for _ in range(inner_max):
                dmax = 0.0
                for i in range(p):
                    if i == j:
                        continue
                    r = C[i, j]
                    for k in range(p):
                        if k != j and k != i:
                            r -= W[i, k] * B[k, j]
                    lam = pen[i, j]
                    if r > lam:
                        new = (r - lam) / W[i, i]
                    elif r < -lam:
                        new = (r + lam) / W[i, i]
                    else:
                        new = 0.0
                    d = abs(new - B[i, j]) * scale[i] / scale[j]
                    if d > dmax:
                        dmax = d
                    B[i, j] = new
                if dmax < inner_tol:
                    break
            for i in range(p):
                if i == j:
                    continue
                w = 0.0
                for k in range(p):
                    if k != j:
                        w += W[i, k] * B[k, j]
                change = abs(w - W[i, j]) / (scale[i] * scale[j])
                if np.isnan(change) or change > max_change:
                    max_change = change
                W[i, j] = w
                W[j, i] = w
        if np.isnan(max_change) or max_change > 1e300:
            break
        if max_change < tol:
            converged = True
            break

    omega = np.zeros((p, p))
    for j in range(p):
        s = W[j, j]
        for k in range(p):
            if k != j:
                s -= W[j, k] * B[k, j]
        if not s > 0:
            converged = False
            s = np.nan
        omega[j, j] = 1.0 / s
        for i in range(p):
            if i != j:
                omega[i, j] = -B[i, j] * omega[j, j]
    return omega, n_iter, converged


def _check_cov(cov_emp):
    C = np.array(cov_emp, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("covariance must be square")
    if np.max(np.abs(C - C.T), initial=0.0) > 1e-10 * max(1.0, np.abs(C).max()):
        raise ValueError("covariance must be symmetric")
    C = 0.5 * (C + C.T)
    if np.any(np.diag(C) <= 0):
        raise ValueError("covariance has a non-positive diagonal entry")
    return C


def _symmetrize(omega):
    return 0.5 * (omega + omega.T)


def _is_pd(mat):
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return False
    return True


def _start_covariance(C, pen, omega0):
    # Column updates keep W positive definite only if W starts inside the
    # dual box |W - C| <= pen (diagonal fixed at C). Take the first positive
    # definite feasible candidate.
    candidates = []
    if omega0 is not None and _is_pd(omega0):
        W = np.linalg.inv(omega0)
        candidates.append(C + np.clip(0.5 * (W + W.T) - C, -pen, pen))
    candidates.append(C)
    candidates.append(np.sign(C) * np.maximum(np.abs(C) - pen, 0.0))
    for W in candidates:
        W = W.copy()
        np.fill_diagonal(W, np.diag(C))
        if _is_pd(W):
            return W
    return np.diag(np.diag(C))


def weighted_glasso(cov_emp, weights, warm_start=None, tol=1e-6, max_iter=1000):
    """Graphical lasso with an entry-wise penalty matrix.

    Minimizes ``-log|Omega| + tr(Omega C) + sum_{l != l'} weights_ll' |Omega_ll'|``.

    Parameters
    ----------
    cov_emp : ndarray, shape (p, p)
    weights : ndarray, shape (p, p)
        Symmetric nonnegative penalty weights; the diagonal is ignored.
    warm_start : ndarray, shape (p, p), optional
        Starting precision. Defaults to ``diag(1 / C_ll)``.
    tol : float
        Stop when no working-covariance entry moves by more than
        ``tol * sqrt(C_ll C_l'l')`` over a full sweep.

    Returns
    -------
    precision : ndarray, shape (p, p)
    n_iter : int
    """
    C = _check_cov(cov_emp)
    p = C.shape[0]
    pen = np.array(weights, dtype=float)
    np.fill_diagonal(pen, 0.0)
    if p == 1:
        return np.array([[1.0 / C[0, 0]]]), 0
    if warm_start is None:
        B = np.zeros((p, p))
        W = _start_covariance(C, pen, None)
    else:
        omega0 = np.asarray(warm_start, dtype=float)
        B = -omega0 / np.diag(omega0)[None, :]
        np.fill_diagonal(B, 0.0)
        W = _start_covariance(C, pen, omega0)
    omega, n_iter, converged = _glasso_cd(
        C, pen, W, B, tol, max_iter, tol * 1e-2, 10 * p + 100)
    omega = _symmetrize(omega)
    if not converged:
        raise GlassoConvergenceError(
            f"graphical lasso did not converge in {max_iter} sweeps",
            precision=omega, n_iter=n_iter)
    return omega, n_iter


def _ensure_pd(omega):
    try:
        np.linalg.cholesky(omega)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError(
            "graphical lasso produced a non positive definite precision") from None
    return omega


def glasso_solve(cov_emp, penalty, warm_start=None, tol=1e-6, max_iter=1000,
                 max_outer=50, outer_tol=1e-6):
    """Penalized precision estimate for one empirical covariance.

    Parameters
    ----------
    cov_emp : array_like, shape (p, p)
        Symmetric positive semidefinite matrix with positive diagonal.
    penalty : PenaltySpec
    warm_start : array_like, shape (p, p), optional
        Previous precision estimate (EM passes the last state estimate).
    tol : float
        Coordinate-descent convergence threshold.
    max_outer : int
        Cap on reweighting rounds for ``parcor``/``invcor``.
    outer_tol : float
        Reweighting stops once the objective moves by less than this.

    Returns
    -------
    precision : ndarray, shape (p, p)
    obj : float
        Attained value of the penalized objective.
    """
    C = _check_cov(cov_emp)
    p = C.shape[0]
    if penalty.rho == 0:
        try:
            np.linalg.cholesky(C)
        except np.linalg.LinAlgError:
            raise SingularCovarianceError(
                "covariance is singular and rho = 0") from None
        omega = _symmetrize(np.linalg.inv(C))
        return omega, glasso_objective(omega, C, penalty)

    if penalty.kind == "invcov":
        weights = np.full((p, p), penalty.rho)
        omega, _ = weighted_glasso(C, weights, warm_start, tol, max_iter)
        omega = _ensure_pd(omega)
        return omega, glasso_objective(omega, C, penalty)

    omega = (np.diag(1.0 / np.diag(C)) if warm_start is None
             else np.asarray(warm_start, dtype=float))
    obj = glasso_objective(omega, C, penalty) if warm_start is not None else np.inf
    for _ in range(max_outer):
        if penalty.kind == "parcor":
            d = np.sqrt(np.diag(omega))
            weights = penalty.rho / np.outer(d, d)
        else:
            s = np.sqrt(np.diag(np.linalg.inv(omega)))
            weights = penalty.rho * np.outer(s, s)
        omega, _ = weighted_glasso(C, weights, omega, tol, max_iter)
        omega = _ensure_pd(omega)
        new_obj = glasso_objective(omega, C, penalty)
        done = abs(obj - new_obj) < outer_tol
        obj = new_obj
        if done:
            break
    return omega, obj
