"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from conftest import random_model
from oracles import enumerate_paths, glasso_dual_value, random_spd
from hmmglasso.baselines import adjusted_rand_index, kmeans_init
from hmmglasso.core import forward_backward
from hmmglasso.em import FitConfig, fit_hmmglasso, lambda_uni
from hmmglasso.glasso import PenaltySpec, glasso_solve, graph_of
from hmmglasso.pruning import backward_prune
from hmmglasso.selection import degrees_of_freedom, score
from hmmglasso.simbench import SimSpec, generate, run_experiment_1, run_experiment_2

pytestmark = pytest.mark.slow

RESTARTS = 100
SCORED_FITS = []


def _report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[acceptance {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def _identity_gap(fit):
    """Largest violation of the BIC/MMDL identity for a fit, plus MMDL <= BIC."""
    bic, mmdl = score(fit, "bic").total, score(fit, "mmdl").total
    gap = 0.5 * math.fsum(math.log(1.0 / pi) * degrees_of_freedom(s)
                          for pi, s in zip(fit.resp.pi, fit.model.states))
    return abs((bic - mmdl) - gap), mmdl <= bic


def test_criterion_01_e_step_oracle(capsys):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n, K, p = int(rng.integers(2, 9)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        model = random_model(rng, K, p)
        data = rng.standard_normal((n, p)) * 1.5
        u, v, ll = enumerate_paths(data, [s.mean for s in model.states],
                                   [s.covariance for s in model.states],
                                   model.transition, model.initial)
        resp = forward_backward(data, model)
        worst = max(worst, np.max(np.abs(resp.u - u)), np.max(np.abs(resp.v - v)),
                    abs(resp.log_likelihood - ll))
    elapsed = time.perf_counter() - start
    _report(capsys, 1, worst <= 1e-10 and elapsed < 10,
            f"50 instances, max deviation {worst:.2e} (<= 1e-10), {elapsed:.1f} s (< 10 s)")


def test_criterion_02_glasso_oracle(capsys):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        C = random_spd(rng, int(rng.integers(2, 6)))
        for rho in (0.05, 0.2, 0.5):
            _, obj = glasso_solve(C, PenaltySpec("invcov", rho))
            worst = max(worst, abs(obj - glasso_dual_value(C, rho)))
    elapsed = time.perf_counter() - start
    _report(capsys, 2, worst <= 1e-6 and elapsed < 60,
            f"60 problems, max objective gap {worst:.2e} (<= 1e-6), {elapsed:.1f} s (< 60 s)")


def test_criterion_03_em_monotonicity(capsys):
    worst = -np.inf
    for seed in range(10):
        data, _, _ = generate(SimSpec(1, 2, seed=seed))
        fit = fit_hmmglasso(data, 2, FitConfig(penalty_kind="invcov"),
                            kmeans_init(data, 2, RESTARTS, seed))
        SCORED_FITS.append(fit)
        worst = max(worst, np.max(np.diff(fit.penalized_nll_trace), initial=-np.inf))
    _report(capsys, 3, worst <= 1e-8,
            f"10 fits, largest per-step increase {worst:.2e} (<= 1e-8)")


def test_criterion_04_universal_lambda(capsys):
    a, b = lambda_uni(2000, 10), lambda_uni(5000, 50)
    ok = abs(a - 47.9853) <= 1e-3 and abs(b - 98.8940) <= 1e-3
    _report(capsys, 4, ok, f"lambda_uni(2000,10) = {a:.4f}, lambda_uni(5000,50) = {b:.4f}")


def test_criterion_05_experiment_one_surrogate(capsys):
    start = time.perf_counter()
    selected, aris = [], []
    for seed in range(20):
        data, labels, _ = generate(SimSpec(1, 2, n=2000, p=10, alpha=2.0, seed=seed))
        trace = backward_prune(data, 1, 8, criterion="mmdl",
                               init=kmeans_init(data, 8, RESTARTS, seed))
        SCORED_FITS.extend(step.fit for step in trace.steps)
        selected.append(trace.selected_K)
        aris.append(adjusted_rand_index(trace.selected.fit.labels(), labels))
    elapsed = time.perf_counter() - start
    share = np.mean(np.array(selected) == 2)
    median = float(np.median(aris))
    ok = share >= 0.8 and median >= 0.9 and elapsed < 900
    _report(capsys, 5, ok,
            f"K=2 selected in {share:.0%} of seeds (>= 80%), median ARI {median:.3f} "
            f"(>= 0.9), {elapsed:.0f} s (< 900 s); selected K {selected}")


def test_criterion_06_diagcov_contrast(capsys):
    # K_true = 4 does not divide p = 30, so the mean blocks are uneven.
    spec = SimSpec(3, 4, n=1000, p=30, alpha=2.0, uneven_blocks=True)
    records = run_experiment_1([spec], ("bwprun", "diagcov"), ("mmdl",), replicates=20,
                               seed=6, k_max=8, restarts=RESTARTS, timing=False)
    med = {m: float(np.median([r["ARI"] for r in records if r["method"] == m]))
           for m in ("bwprun", "diagcov")}
    diff = med["bwprun"] - med["diagcov"]
    _report(capsys, 6, diff >= 0.2,
            f"median ARI bwprun {med['bwprun']:.3f} - diagcov {med['diagcov']:.3f} "
            f"= {diff:.3f} (>= 0.2)")


def test_criterion_07_experiment_two_surrogate(capsys):
    def mean_tpr(records, method):
        return float(np.mean([r["TPR"] for r in records if r["method"] == method]))

    common = dict(replicates=10, seed=7, k_max=8, restarts=RESTARTS, timing=False)
    base = run_experiment_2([SimSpec(3, 2, n=1000, p=30, alpha=2.0)],
                            ("bwprun", "glasso"), **common)
    bw, pooled = mean_tpr(base, "bwprun"), mean_tpr(base, "glasso")
    km = [mean_tpr(run_experiment_2([SimSpec(3, 2, n=1000, p=30, alpha=a)],
                                    ("kmeans_glasso",), **common), "kmeans_glasso")
          for a in (2.0, 6.0, 10.0)]
    # TPR is capped at 1, so "improves" means never decreasing and ending higher.
    monotone = km[0] <= km[1] <= km[2] and km[2] > km[0]
    _report(capsys, 7, bw > pooled and monotone,
            f"mean TPR bwprun {bw:.3f} > pooled glasso {pooled:.3f}; kmeans+glasso TPR "
            f"over alpha 2/6/10: {km[0]:.3f}/{km[1]:.3f}/{km[2]:.3f}")


def test_criterion_08_parcor_scale_invariance(capsys):
    agreements, same_edges = [], True
    for seed in range(5):
        data, _, _ = generate(SimSpec(1, 2, seed=seed))
        scales = np.random.default_rng(100 + seed).uniform(0.1, 10.0, data.shape[1])
        init = kmeans_init(data, 2, RESTARTS, seed)
        a = fit_hmmglasso(data, 2, FitConfig(), init)
        b = fit_hmmglasso(data * scales, 2, FitConfig(), init)
        SCORED_FITS.extend([a, b])
        agreements.append(np.mean(a.labels() == b.labels()))
        same_edges &= all(graph_of(sa.precision) == graph_of(sb.precision)
                          for sa, sb in zip(a.model.states, b.model.states))
    worst = min(agreements)
    _report(capsys, 8, worst >= 0.999 and same_edges,
            f"min state agreement {worst:.4%} (>= 99.9%), identical edge sets: {same_edges}")


def test_criterion_09_bic_mmdl_identity(capsys):
    fits = list(SCORED_FITS)
    if not fits:  # run in isolation
        data, _, _ = generate(SimSpec(1, 2, n=600, seed=9))
        trace = backward_prune(data, 1, 4, init=kmeans_init(data, 4, 10, 9))
        fits = [step.fit for step in trace.steps]
    gaps, orders = zip(*(_identity_gap(f) for f in fits))
    worst = max(gaps)
    _report(capsys, 9, worst <= 1e-10 and all(orders),
            f"{len(fits)} fits, max identity error {worst:.2e} (<= 1e-10), "
            f"MMDL <= BIC for all: {all(orders)}")


def test_criterion_10_single_initialization(capsys):
    data, _, _ = generate(SimSpec(1, 2, seed=10))
    calls = []

    def initializer(x, K):
        calls.append(K)
        return kmeans_init(x, K, RESTARTS, 10)
    trace = backward_prune(data, 1, 8, initializer=initializer)
    ok = calls == [8] and [s.K for s in trace.steps] == list(range(8, 0, -1))
    _report(capsys, 10, ok, f"initializer calls {calls} over {len(trace.steps)} steps")
