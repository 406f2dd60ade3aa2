"""Reference estimators and evaluation metrics for the simulation studies."""
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .em import FitConfig, Initialization, fit_hmmglasso, lambda_uni
from .glasso import EDGE_TOL, PenaltySpec, glasso_solve, graph_of


# -- K-means -----------------------------------------------------------------

def _sq_distances(data, centers):
    d = (np.sum(data ** 2, axis=1)[:, None] - 2.0 * data @ centers.T
         + np.sum(centers ** 2, axis=1)[None, :])
    return np.maximum(d, 0.0)


def _kmeans_pp(data, K, rng):
    n = data.shape[0]
    centers = np.empty((K, data.shape[1]))
    centers[0] = data[rng.integers(n)]
    closest = np.sum((data - centers[0]) ** 2, axis=1)
    for k in range(1, K):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers[k] = data[idx]
        closest = np.minimum(closest, np.sum((data - centers[k]) ** 2, axis=1))
    return centers


def lloyd(data, centers, max_iter=300):
    """Lloyd iterations from ``centers``.

    Returns
    -------
    labels : ndarray of int
    centers : ndarray
    history : list of float
        Within-cluster sum of squares after every assignment step.
    """
    data = np.asarray(data, dtype=float)
    centers = np.array(centers, dtype=float)
    K = centers.shape[0]
    labels = None
    history = []
    for _ in range(max_iter):
        dist = _sq_distances(data, centers)
        new_labels = np.argmin(dist, axis=1)
        history.append(float(dist[np.arange(len(data)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=K)
        for k in range(K):
            if counts[k] > 0:
                centers[k] = data[labels == k].mean(axis=0)
            else:
                # Move an empty center onto the worst-fit point.
                far = int(np.argmax(dist[np.arange(len(data)), labels]))
                centers[k] = data[far]
                labels[far] = k
                dist[far, :] = 0.0
    return labels, centers, history


def kmeans(data, K, restarts=100, seed=None, max_iter=300):
    """Best-of-``restarts`` K-means (k-means++ seeding, Lloyd refinement).

    Returns ``(labels, centers, inertia)``.
    """
    data = np.asarray(data, dtype=float)
    if K < 1 or K > data.shape[0]:
        raise ValueError("K must be between 1 and the number of observations")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        labels, centers, history = lloyd(data, _kmeans_pp(data, K, rng), max_iter)
        if best is None or history[-1] < best[2]:
            best = (labels, centers, history[-1])
    return best


def kmeans_init(data, K, restarts=100, seed=None):
    """Hard responsibilities from K-means, uniform transition matrix."""
    data = np.asarray(data, dtype=float)
    labels, _, _ = kmeans(data, K, restarts=restarts, seed=seed)
    u = np.zeros((data.shape[0], K))
    u[np.arange(data.shape[0]), labels] = 1.0
    return Initialization(u=u, transition=np.full((K, K), 1.0 / K))


# -- baseline fits -------------------------------------------------------------

def fit_unpenalized(data, K, config=None, init=None):
    """Unpenalized MLE with dense covariances; ``pi_min`` defaults to p / n."""
    data = np.asarray(data, dtype=float)
    n, p = data.shape
    config = config or FitConfig()
    config = replace(config, lam=0.0,
                     pi_min=config.pi_min if config.pi_min is not None else p / n)
    return fit_hmmglasso(data, K, config, init)


def fit_diagcov(data, K, config=None, init=None):
    """MLE restricted to diagonal covariance matrices."""
    config = replace(config or FitConfig(), lam=0.0, diagonal=True)
    return fit_hmmglasso(data, K, config, init)


def _universal_rho(n_k, n, p):
    return 2.0 * lambda_uni(n, p) * np.sqrt(n_k / n) / n_k


def pooled_glasso(data, rho=None, kind="parcor"):
    """Graphical lasso on the pooled sample covariance, ignoring states.

    ``rho`` defaults to the universal level for a single state, 2 lambda_uni / n.
    """
    data = np.asarray(data, dtype=float)
    n, p = data.shape
    cov = np.cov(data, rowvar=False, bias=True).reshape(p, p)
    if rho is None:
        rho = _universal_rho(n, n, p)
    prec, _ = glasso_solve(cov, PenaltySpec(kind, rho))
    return prec


def kmeans_glasso(data, K, restarts=100, seed=None, kind="parcor"):
    """K-means clustering followed by a graphical lasso per cluster.

    Each cluster gets the universal multiplier computed from its size.
    Returns ``(labels, precisions)``.
    """
    data = np.asarray(data, dtype=float)
    n, p = data.shape
    labels, _, _ = kmeans(data, K, restarts=restarts, seed=seed)
    precisions = []
    for k in range(K):
        x = data[labels == k]
        cov = np.cov(x, rowvar=False, bias=True).reshape(p, p)
        cov = cov + 1e-8 * np.diag(np.diag(cov))
        prec, _ = glasso_solve(cov, PenaltySpec(kind, _universal_rho(len(x), n, p)))
        precisions.append(prec)
    return labels, precisions


# -- metrics -------------------------------------------------------------------

def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1.0) / 2.0


def contingency_table(labels_a, labels_b):
    _, a = np.unique(np.asarray(labels_a), return_inverse=True)
    _, b = np.unique(np.asarray(labels_b), return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    return table


def adjusted_rand_index(labels_a, labels_b):
    """Adjusted Rand index (Hubert and Arabie) between two partitions."""
    labels_a = np.asarray(labels_a)
    labels_b = np.asarray(labels_b)
    if labels_a.shape != labels_b.shape:
        raise ValueError("label vectors differ in length")
    n = labels_a.shape[0]
    if n < 2:
        return 1.0
    table = contingency_table(labels_a, labels_b)
    sum_cells = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / _comb2(n)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


@dataclass(frozen=True)
class GraphMetrics:
    tpr: float
    fpr: float
    true_edges: int
    estimated_edges: int


def graph_metrics(estimated, truth, p):
    """True/false positive rates of an estimated edge set.

    With an empty true graph the TPR is reported as 1 (nothing to miss).
    """
    estimated, truth = set(estimated), set(truth)
    n_pairs = p * (p - 1) // 2
    tp = len(estimated & truth)
    fp = len(estimated - truth)
    tpr = tp / len(truth) if truth else 1.0
    negatives = n_pairs - len(truth)
    fpr = fp / negatives if negatives > 0 else 0.0
    return GraphMetrics(tpr=tpr, fpr=fpr, true_edges=len(truth),
                        estimated_edges=len(estimated))


def match_states(est_labels, true_labels, n_est=None, n_true=None):
    """Map each true state to the estimated state it overlaps most.

    Uses a maximum-overlap assignment; true states left unmatched (fewer
    estimated than true states) map to ``None``.
    """
    est_labels = np.asarray(est_labels)
    true_labels = np.asarray(true_labels)
    n_est = int(est_labels.max()) + 1 if n_est is None else n_est
    n_true = int(true_labels.max()) + 1 if n_true is None else n_true
    overlap = np.zeros((n_true, n_est))
    np.add.at(overlap, (true_labels, est_labels), 1)
    rows, cols = linear_sum_assignment(-overlap)
    mapping = {k: None for k in range(n_true)}
    for r, c in zip(rows, cols):
        mapping[int(r)] = int(c)
    return mapping


def state_graph_metrics(est_precisions, est_labels, true_precisions, true_labels,
                        tol=EDGE_TOL):
    """Per-true-state graph metrics after matching estimated states."""
    p = true_precisions[0].shape[0]
    mapping = match_states(est_labels, true_labels, len(est_precisions),
                           len(true_precisions))
    out = []
    for k, true_prec in enumerate(true_precisions):
        j = mapping[k]
        est_edges = graph_of(est_precisions[j], tol) if j is not None else set()
        out.append(graph_metrics(est_edges, graph_of(true_prec, tol), p))
    return out
