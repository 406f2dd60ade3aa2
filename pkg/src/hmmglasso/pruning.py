"""Greedy backward pruning over the number of states.

Starting from one fit at ``k_max``, every step builds two candidate
initializations for ``kappa - 1`` states (merge the two closest states,
or drop the smallest one), refits both warm-started, and keeps whichever
scores better. The model is initialized exactly once.
"""
from dataclasses import dataclass, field

import numpy as np

from .em import FitConfig, Initialization, fit_hmmglasso
from .errors import HmmGlassoError
from .selection import CRITERIA, score


def sym_kl(a, b, mean_term="standard"):
    """Symmetric Kullback-Leibler divergence between two Gaussian states.

    ``tr{(S_a - S_b)(S_b^-1 - S_a^-1)} + d^T M d`` with ``d = mu_a - mu_b``.
    ``mean_term="standard"`` uses ``M = S_a^-1 + S_b^-1``; ``"printed"``
    uses ``M = S_a^-1 - S_b^-1``, which vanishes for equal covariances.
    """
    if a.dim != b.dim:
        raise ValueError("states differ in dimension")
    trace_term = float(np.sum((a.covariance - b.covariance).T
                              * (b.precision - a.precision)))
    d = a.mean - b.mean
    if mean_term == "standard":
        m = a.precision + b.precision
    elif mean_term == "printed":
        m = a.precision - b.precision
    else:
        raise ValueError(f"unknown mean_term {mean_term!r}")
    return trace_term + float(d @ m @ d)


def closest_pair(model, mean_term="standard"):
    """Pair ``(k1, k2)``, ``k1 < k2``, with the smallest symmetric KL."""
    K = model.num_states
    if K < 2:
        raise ValueError("need at least two states")
    best, pair = np.inf, None
    for i in range(K):
        for j in range(i + 1, K):
            d = sym_kl(model.states[i], model.states[j], mean_term)
            if d < best:
                best, pair = d, (i, j)
    if pair is None:
        pair = (0, 1)
    return pair


def _normalize_rows(mat):
    mat = np.array(mat, dtype=float)
    rows = mat.sum(axis=1, keepdims=True)
    K = mat.shape[1]
    return np.where(rows > 0, mat / np.where(rows > 0, rows, 1.0), 1.0 / K)


def merge_init(fit, k1, k2):
    """Initial conditions with states ``k1`` and ``k2`` merged.

    The merged state takes the lower index. Its responsibilities are the
    sum of both; its outgoing transitions are the sum of both rows; every
    transition into it is set to ``1 / (K - 1)``. Rows are renormalized
    afterwards.
    """
    if k1 == k2:
        raise ValueError("cannot merge a state with itself")
    lo, hi = sorted((int(k1), int(k2)))
    u = np.array(fit.resp.u, dtype=float)
    trans = np.array(fit.model.transition, dtype=float)
    K = u.shape[1]
    keep = [k for k in range(K) if k != hi]

    u[:, lo] += u[:, hi]
    u = u[:, keep]
    trans[lo, :] += trans[hi, :]
    trans = trans[np.ix_(keep, keep)]
    trans[:, keep.index(lo)] = 1.0 / (K - 1)
    return Initialization(u=u, transition=_normalize_rows(trans))


def delete_init(fit, k):
    """Initial conditions with state ``k`` removed and rows renormalized.

    Observations whose whole posterior mass sat on ``k`` restart from a
    uniform assignment over the remaining states.
    """
    u = np.asarray(fit.resp.u, dtype=float)
    K = u.shape[1]
    if K < 2:
        raise ValueError("cannot delete the only state")
    keep = [j for j in range(K) if j != int(k)]
    u = _normalize_rows(u[:, keep])
    trans = _normalize_rows(np.asarray(fit.model.transition)[np.ix_(keep, keep)])
    return Initialization(u=u, transition=trans)


@dataclass(frozen=True, eq=False)
class PruneStep:
    """Fit retained at one number of states.

    ``action`` is ``None`` for the initial fit, otherwise
    ``("merge", k1, k2)`` or ``("delete", k)`` with indices referring to the
    previous (larger) model. ``candidates`` holds the criterion value of
    each refit tried at this step.
    """

    K: int
    fit: object
    scores: dict
    action: tuple | None = None
    candidates: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class PruneTrace:
    steps: list
    criterion: str
    selected_K: int

    @property
    def selected(self):
        return next(s for s in self.steps if s.K == self.selected_K)

    def by_K(self):
        return {s.K: s for s in self.steps}


def _scores(fit):
    return {c: score(fit, c) for c in CRITERIA}


def backward_prune(data, k_min, k_max, config=None, criterion="mmdl", init=None,
                   initializer=None, mean_term="standard", fit_fn=fit_hmmglasso):
    """Greedy backward pruning from ``k_max`` down to ``k_min`` states.

    Parameters
    ----------
    data : array_like, shape (n, p)
    k_min, k_max : int
        ``1 <= k_min < k_max``.
    config : FitConfig, optional
    criterion : {"mmdl", "bic"}
        Decides between merge and delete and selects the final K.
    init : Initialization, optional
        Starting point at ``k_max``.
    initializer : callable, optional
        ``initializer(data, k_max) -> Initialization``; called once when
        ``init`` is not given. Defaults to K-means with 100 restarts.
    mean_term : {"standard", "printed"}
        Mean term of the symmetric KL used to pick the merge pair.
    fit_fn : callable
        Fitting routine, ``fit_fn(data, K, config, init)``.

    Returns
    -------
    PruneTrace
    """
    if not 1 <= k_min < k_max:
        raise ValueError("need 1 <= k_min < k_max")
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    data = np.asarray(data, dtype=float)
    config = config or FitConfig()
    if init is None:
        if initializer is None:
            from .baselines import kmeans_init

            def initializer(x, K):
                return kmeans_init(x, K, restarts=100, seed=0)
        init = initializer(data, k_max)

    fit = fit_fn(data, k_max, config, init)
    steps = [PruneStep(K=fit.num_states, fit=fit, scores=_scores(fit))]
    kappa = k_max
    while kappa > k_min:
        k1, k2 = closest_pair(fit.model, mean_term)
        smallest = int(np.argmin(fit.resp.pi))
        candidates = {}
        for action, make in ((("merge", k1, k2), lambda: merge_init(fit, k1, k2)),
                             (("delete", smallest), lambda: delete_init(fit, smallest))):
            try:
                cand = fit_fn(data, kappa - 1, config, make())
            except HmmGlassoError:
                continue
            candidates[action] = (cand, _scores(cand))
        if not candidates:
            raise HmmGlassoError(f"both refits failed at K = {kappa - 1}")
        # Ties go to the merge candidate, which is tried first.
        action = min(candidates, key=lambda a: candidates[a][1][criterion].total)
        fit, scores = candidates[action]
        kappa -= 1
        steps.append(PruneStep(
            K=kappa, fit=fit, scores=scores, action=action,
            candidates={a: c[1][criterion].total for a, c in candidates.items()}))

    selected = min(steps, key=lambda s: s.scores[criterion].total).K
    return PruneTrace(steps=steps, criterion=criterion, selected_K=selected)
