"""Synthetic benchmark: data-generating models and the two experiments.

Models 1-3 share a design (block-sparse means, precision matrices with p
edges of which half are shared by all states) and differ in n and p.
Model 4 has two identity-precision states separated by their means and
further zero-mean states that differ by two edges each.
"""
import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .baselines import (adjusted_rand_index, fit_diagcov, fit_unpenalized,
                        graph_metrics, kmeans_glasso, kmeans_init, pooled_glasso,
                        state_graph_metrics)
from .core import GaussianState, HmmModel, sample_path
from .em import FitConfig, fit_hmmglasso
from .errors import HmmGlassoError
from .glasso import graph_of
from .pruning import backward_prune
from .selection import CRITERIA, score

DEFAULT_SIZES = {1: (2000, 10), 2: (2000, 75), 3: (1000, 100), 4: (5000, 50)}

#: Magnitude of generated off-diagonal precision entries before standardizing.
EDGE_MAGNITUDE = 0.5
MIN_EIGENVALUE = 0.1


@dataclass(frozen=True)
class SimSpec:
    """One simulation setting. ``n``/``p`` default to the model's sizes."""

    model_id: int = 1
    K_true: int = 2
    n: int | None = None
    p: int | None = None
    alpha: float = 2.0
    seed: int = 0
    uneven_blocks: bool = False

    def __post_init__(self):
        if self.model_id not in DEFAULT_SIZES:
            raise ValueError(f"unknown model {self.model_id}")
        if self.K_true < 1:
            raise ValueError("K_true must be positive")
        n, p = DEFAULT_SIZES[self.model_id]
        object.__setattr__(self, "n", n if self.n is None else int(self.n))
        object.__setattr__(self, "p", p if self.p is None else int(self.p))


def _self_transition_matrix(K, stay=0.9, move=0.1):
    """Rows ``gamma * (move, ..., stay, ..., move)`` scaled to sum to one."""
    gamma = 1.0 / (stay + move * (K - 1))
    trans = np.full((K, K), move * gamma)
    np.fill_diagonal(trans, stay * gamma)
    return trans


def stationary_distribution(transition):
    vals, vecs = np.linalg.eig(np.asarray(transition).T)
    vec = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return vec / vec.sum()


def precision_from_support(pairs, p):
    """Unit-diagonal SPD precision with nonzeros exactly on ``pairs``.

    Entries alternate in sign with magnitude 0.5, a multiple of the identity
    lifts the smallest eigenvalue to 0.1, and the result is rescaled to a
    unit diagonal.
    """
    A = np.zeros((p, p))
    for idx, (i, j) in enumerate(pairs):
        A[i, j] = A[j, i] = EDGE_MAGNITUDE * (-1.0) ** idx
    delta = MIN_EIGENVALUE - np.linalg.eigvalsh(A)[0] if pairs else MIN_EIGENVALUE
    omega = A + delta * np.eye(p)
    d = np.sqrt(np.diag(omega))
    omega = omega / np.outer(d, d)
    np.fill_diagonal(omega, 1.0)
    return omega


def _state_supports(p, K, n_shared, n_unique, rng):
    all_pairs = list(itertools.combinations(range(p), 2))
    order = rng.permutation(len(all_pairs))
    shared = [all_pairs[i] for i in order[:n_shared]]
    pool = [all_pairs[i] for i in order[n_shared:]]
    if len(pool) >= K * n_unique:
        chunks = [pool[k * n_unique:(k + 1) * n_unique] for k in range(K)]
    else:
        if len(pool) < n_unique:
            raise ValueError("p is too small for the requested number of edges")
        chunks = [[pool[i] for i in rng.choice(len(pool), n_unique, replace=False)]
                  for _ in range(K)]
    return [shared + chunk for chunk in chunks]


def _block_means(spec):
    K, p = spec.K_true, spec.p
    if p % K and not spec.uneven_blocks:
        raise ValueError(f"p = {p} is not divisible by K_true = {K}")
    block = p // K
    if block < 1:
        raise ValueError("p must be at least K_true")
    means = np.zeros((K, p))
    for k in range(K):
        means[k, k * block:(k + 1) * block] = (-1.0) ** (k + 1) * spec.alpha / np.sqrt(block)
    return means


def build_truth(spec):
    """Data-generating HMM for ``spec``; the chain starts in its stationary law."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0]))
    K, p = spec.K_true, spec.p
    if spec.model_id in (1, 2, 3):
        transition = _self_transition_matrix(K)
        means = _block_means(spec)
        n_shared = p // 2
        supports = _state_supports(p, K, n_shared, p - n_shared, rng)
        precisions = [precision_from_support(s, p) for s in supports]
    else:
        if p < 2:
            raise ValueError("model 4 needs p >= 2")
        transition = _self_transition_matrix(K)
        transition[K - 1] = 1.0 / K
        means = np.zeros((K, p))
        for k in range(min(K, 2)):
            means[k, k] = spec.alpha
        precisions = [np.eye(p) for _ in range(min(K, 2))]
        if K > 2:
            supports = _state_supports(p, K - 2, 0, 2, rng)
            precisions += [precision_from_support(s, p) for s in supports]
    states = tuple(GaussianState(means[k], precisions[k]) for k in range(K))
    return HmmModel(states=states, transition=transition,
                    initial=stationary_distribution(transition))


def generate(spec):
    """Sample ``(data, labels, truth)`` for ``spec``; deterministic in the seed."""
    truth = build_truth(spec)
    data, labels = sample_path(truth, spec.n,
                               np.random.SeedSequence([spec.seed, 1]))
    return data, labels, truth


# -- experiments ---------------------------------------------------------------

EXPERIMENT_1_METHODS = ("bwprun", "hmmgl", "unpen", "diagcov")
EXPERIMENT_2_METHODS = ("bwprun", "hmmgl", "kmeans_glasso", "glasso")


def replicate_seed(seed, spec_index, replicate):
    return int(np.random.SeedSequence([seed, spec_index, replicate]).generate_state(1)[0])


def _brute_force(data, K_values, fitter, config, restarts, seed):
    fits = {}
    for K in K_values:
        try:
            fits[K] = fitter(data, K, config, kmeans_init(data, K, restarts, seed))
        except HmmGlassoError:
            continue
    return fits


def _select(fits, criterion):
    if not fits:
        return None
    return min(fits.values(), key=lambda f: score(f, criterion).total)


def _exp1_replicate(spec, methods, criteria, k_max, restarts, config, timing):
    data, labels, _ = generate(spec)
    base = {"experiment": 1, "model": spec.model_id, "K_true": spec.K_true,
            "n": spec.n, "p": spec.p, "alpha": spec.alpha, "seed": spec.seed}
    fitters = {"hmmgl": fit_hmmglasso, "unpen": fit_unpenalized,
               "diagcov": fit_diagcov}
    records = []
    for method in methods:
        start = time.perf_counter()
        if method == "bwprun":
            init = kmeans_init(data, k_max, restarts, spec.seed)
            selected = {}
            for crit in criteria:
                trace = backward_prune(data, 1, k_max, config, crit, init=init)
                selected[crit] = trace.selected.fit
        elif method in fitters:
            fits = _brute_force(data, range(1, spec.K_true + 3), fitters[method],
                                config, restarts, spec.seed)
            selected = {crit: _select(fits, crit) for crit in criteria}
        else:
            raise ValueError(f"unknown method {method!r}")
        runtime = time.perf_counter() - start if timing else None
        for crit in criteria:
            fit = selected[crit]
            records.append(dict(
                base, method=method, criterion=crit,
                selected_K=fit.num_states if fit is not None else None,
                ARI=adjusted_rand_index(fit.labels(), labels) if fit is not None else None,
                runtime=runtime))
    return records


def _exp2_replicate(spec, methods, k_max, restarts, config, timing):
    data, labels, truth = generate(spec)
    true_precisions = [s.precision for s in truth.states]
    base = {"experiment": 2, "model": spec.model_id, "K_true": spec.K_true,
            "n": spec.n, "p": spec.p, "alpha": spec.alpha, "seed": spec.seed}
    records = []
    for method in methods:
        start = time.perf_counter()
        if method == "bwprun":
            trace = backward_prune(data, 1, k_max, config, "mmdl",
                                   init=kmeans_init(data, k_max, restarts, spec.seed))
            fit = trace.selected.fit
            metrics = state_graph_metrics([s.precision for s in fit.model.states],
                                          fit.labels(), true_precisions, labels)
        elif method == "hmmgl":
            fit = fit_hmmglasso(data, spec.K_true, config,
                                kmeans_init(data, spec.K_true, restarts, spec.seed))
            metrics = state_graph_metrics([s.precision for s in fit.model.states],
                                          fit.labels(), true_precisions, labels)
        elif method == "kmeans_glasso":
            km_labels, precs = kmeans_glasso(data, spec.K_true, restarts, spec.seed)
            metrics = state_graph_metrics(precs, km_labels, true_precisions, labels)
        elif method == "glasso":
            edges = graph_of(pooled_glasso(data))
            metrics = [graph_metrics(edges, graph_of(prec), spec.p)
                       for prec in true_precisions]
        else:
            raise ValueError(f"unknown method {method!r}")
        runtime = time.perf_counter() - start if timing else None
        for k, m in enumerate(metrics):
            records.append(dict(base, method=method, state=k, TPR=m.tpr, FPR=m.fpr,
                                true_edges=m.true_edges,
                                estimated_edges=m.estimated_edges, runtime=runtime))
    return records


def _run(task_fn, specs, replicates, seed, n_jobs, args):
    tasks = [replace(spec, seed=replicate_seed(seed, i, r))
             for i, spec in enumerate(specs) for r in range(replicates)]
    reps = [r for _ in specs for r in range(replicates)]
    if n_jobs and n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(task_fn, tasks, *[[a] * len(tasks) for a in args]))
    else:
        results = [task_fn(t, *args) for t in tasks]
    out = []
    for rep, recs in zip(reps, results):
        for rec in recs:
            rec["replicate"] = rep
            out.append(rec)
    return out


def run_experiment_1(specs, methods=EXPERIMENT_1_METHODS, criteria=CRITERIA,
                     replicates=1, seed=0, k_max=15, restarts=100, config=None,
                     n_jobs=1, timing=True):
    """State-recovery experiment.

    For every spec and replicate, fits each method and records the
    selected number of states and the adjusted Rand index against the true
    labels. ``bwprun`` prunes from ``k_max``; the other methods fit
    K = 1, ..., K_true + 2 from K-means starts and select by criterion.

    Returns
    -------
    list of dict
        One record per (spec, replicate, method, criterion).
    """
    return _run(_exp1_replicate, specs, replicates, seed, n_jobs,
                (tuple(methods), tuple(criteria), k_max, restarts, config, timing))


def run_experiment_2(specs, methods=EXPERIMENT_2_METHODS, replicates=1, seed=0,
                     k_max=15, restarts=100, config=None, n_jobs=1, timing=True):
    """Graph-recovery experiment: per-state edge TPR/FPR for each method.

    Returns
    -------
    list of dict
        One record per (spec, replicate, method, true state).
    """
    return _run(_exp2_replicate, specs, replicates, seed, n_jobs,
                (tuple(methods), k_max, restarts, config, timing))


def spec_record(spec):
    return asdict(spec)
