import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import baum_welch_1d_from_u
from hmmglasso.baselines import adjusted_rand_index, kmeans_init
from hmmglasso.core import GaussianState, HmmModel, SufficientStats, forward_backward
from hmmglasso.em import (CONVERGED, MAX_ITER, STATE_COLLAPSED, FitConfig,
                          Initialization, fit_hmmglasso, lambda_uni, m_step,
                          penalized_nll)
from hmmglasso.errors import SingularCovarianceError
from hmmglasso.glasso import PenaltySpec, glasso_solve, graph_of
from hmmglasso.simbench import SimSpec, generate


def _hard_u(labels, K):
    u = np.zeros((len(labels), K))
    u[np.arange(len(labels)), labels] = 1.0
    return u


# -- lambda_uni -------------------------------------------------------------------

def test_lambda_uni_values():
    assert lambda_uni(123, 1) == 0.0
    assert lambda_uni(2000, 10) == pytest.approx(math.sqrt(4000 * math.log(10)) / 2)
    assert lambda_uni(2000, 10) == pytest.approx(47.9853, abs=1e-3)
    assert lambda_uni(5000, 50) == pytest.approx(98.8940, abs=1e-3)
    with pytest.raises(ValueError):
        lambda_uni(0, 3)


# -- FitConfig ----------------------------------------------------------------------

def test_config_validation_and_defaults():
    with pytest.raises(ValueError):
        FitConfig(eps=0)
    with pytest.raises(ValueError):
        FitConfig(pi_min=1.0)
    with pytest.raises(ValueError):
        FitConfig(lam=-1.0)
    with pytest.raises(ValueError):
        FitConfig(penalty_kind="ridge")
    cfg = FitConfig().resolve(2000, 10)
    assert cfg.lam == pytest.approx(lambda_uni(2000, 10))
    assert cfg.pi_min == pytest.approx(5 / 2000)
    assert cfg.eps == 1e-3 and cfg.penalty_kind == "parcor" and cfg.max_iter == 500


# -- M-step ----------------------------------------------------------------------------

def test_m_step_hard_labels_unpenalized_is_sample_moments(rng):
    data = rng.standard_normal((60, 3))
    labels = np.repeat([0, 1], 30)
    u = _hard_u(labels, 2)
    stats = SufficientStats.from_data(data, u, np.ones((2, 2)))
    cfg = FitConfig(lam=0.0).resolve(60, 3)
    model = m_step(stats, u.mean(axis=0), u[0], cfg)
    for k in range(2):
        x = data[labels == k]
        assert np.allclose(model.states[k].mean, x.mean(axis=0), atol=1e-12)
        assert np.allclose(model.states[k].covariance, np.cov(x, rowvar=False, bias=True),
                           atol=1e-10)
    assert np.allclose(model.transition, 0.5)
    assert np.allclose(model.initial, [1.0, 0.0])


def test_m_step_penalty_multiplier(rng):
    # The state precision equals a glasso solve at rho = 2 lam sqrt(pi_k) / n_k.
    data = rng.standard_normal((80, 4))
    u = rng.dirichlet([1.0, 1.0], size=80)
    stats = SufficientStats.from_data(data, u, np.ones((2, 2)))
    pi = u.mean(axis=0)
    cfg = FitConfig(lam=3.0, penalty_kind="invcov").resolve(80, 4)
    model = m_step(stats, pi, u[0], cfg)
    for k in range(2):
        nk = u[:, k].sum()
        mean = (u[:, k:k + 1] * data).sum(axis=0) / nk
        cov = (u[:, k:k + 1] * (data - mean)).T @ (data - mean) / nk
        cov = cov + 1e-8 * np.diag(np.diag(cov))
        expected, _ = glasso_solve(cov, PenaltySpec("invcov", 2 * 3.0 * np.sqrt(pi[k]) / nk))
        assert np.allclose(model.states[k].precision, expected, atol=1e-6)


def test_m_step_huge_lambda_gives_diagonal(rng):
    data = rng.standard_normal((100, 5)) @ rng.standard_normal((5, 5))
    u = rng.dirichlet([1.0, 1.0, 1.0], size=100)
    stats = SufficientStats.from_data(data, u, np.ones((3, 3)))
    for kind in ("invcov", "parcor", "invcor"):
        cfg = FitConfig(lam=1e6, penalty_kind=kind).resolve(100, 5)
        model = m_step(stats, u.mean(axis=0), u[0], cfg)
        assert all(graph_of(s.precision) == set() for s in model.states)


def test_m_step_identical_responsibilities_identical_states(rng):
    data = rng.standard_normal((50, 3))
    col = rng.random(50)
    u = np.column_stack([col, col, 2 * col])
    u /= u.sum(axis=1, keepdims=True)
    stats = SufficientStats.from_data(data, u, np.ones((3, 3)))
    model = m_step(stats, u.mean(axis=0), u[0], FitConfig(lam=2.0).resolve(50, 3))
    assert np.allclose(model.states[0].mean, model.states[1].mean)
    assert np.allclose(model.states[0].precision, model.states[1].precision)


def test_m_step_singular_unpenalized_names_state(rng):
    data = rng.standard_normal((40, 5))
    labels = np.zeros(40, dtype=int)
    labels[:3] = 1  # three points cannot support a 5-d covariance
    u = _hard_u(labels, 2)
    stats = SufficientStats.from_data(data, u, np.ones((2, 2)))
    with pytest.raises(SingularCovarianceError) as info:
        m_step(stats, u.mean(axis=0), u[0], FitConfig(lam=0.0).resolve(40, 5))
    assert info.value.state == 1


def test_m_step_diagonal_config(rng):
    data = rng.standard_normal((100, 4)) @ rng.standard_normal((4, 4))
    u = _hard_u(rng.integers(0, 2, 100), 2)
    stats = SufficientStats.from_data(data, u, np.ones((2, 2)))
    cfg = FitConfig(lam=0.0, diagonal=True).resolve(100, 4)
    model = m_step(stats, u.mean(axis=0), u[0], cfg)
    for s in model.states:
        assert np.count_nonzero(s.precision - np.diag(np.diag(s.precision))) == 0


# -- fit_hmmglasso ---------------------------------------------------------------------------

def test_single_state_fit(rng):
    data = rng.standard_normal((300, 4)) @ rng.standard_normal((4, 4))
    cfg = FitConfig(penalty_kind="invcov")
    fit = fit_hmmglasso(data, 1, cfg, np.ones((300, 1)))
    assert fit.termination == CONVERGED
    assert fit.iterations == 2
    state = fit.model.states[0]
    assert np.allclose(state.mean, data.mean(axis=0))
    cov = np.cov(data, rowvar=False, bias=True)
    cov = cov + 1e-8 * np.diag(np.diag(cov))
    expected, _ = glasso_solve(cov, PenaltySpec("invcov", 2 * lambda_uni(300, 4) / 300))
    assert np.allclose(state.precision, expected, atol=1e-6)


def test_unpenalized_univariate_matches_textbook_baum_welch():
    rng = np.random.default_rng(3)
    labels = np.repeat([0, 1, 0, 1], 50)
    x = np.where(labels == 0, rng.normal(-1.0, 1.0, 200), rng.normal(1.5, 0.7, 200))
    u0 = _hard_u((x > 0).astype(int), 2)
    trans0 = np.array([[0.7, 0.3], [0.4, 0.6]])
    n_iter = 15
    cfg = FitConfig(lam=0.0, eps=1e-300, max_iter=n_iter)
    fit = fit_hmmglasso(x[:, None], 2, cfg, Initialization(u=u0, transition=trans0))
    assert fit.termination == MAX_ITER and fit.iterations == n_iter
    expected = baum_welch_1d_from_u(x, u0, trans0, n_iter)
    assert fit.log_likelihood == pytest.approx(expected, abs=1e-6)


def test_first_iteration_keeps_initial_transition(rng):
    data, _, _ = generate(SimSpec(1, 2, n=300, seed=2))
    init = kmeans_init(data, 2, restarts=3, seed=0)
    trans0 = np.array([[0.6, 0.4], [0.2, 0.8]])
    fit = fit_hmmglasso(data, 2, FitConfig(max_iter=1),
                        Initialization(u=init.u, transition=trans0))
    assert np.array_equal(fit.model.transition, trans0)


def test_model_one_recovery():
    data, labels, _ = generate(SimSpec(model_id=1, K_true=2, seed=0))
    fit = fit_hmmglasso(data, 2, FitConfig(), kmeans_init(data, 2, restarts=10, seed=0))
    assert fit.termination == CONVERGED
    assert adjusted_rand_index(fit.labels(), labels) > 0.9


@pytest.mark.parametrize("seed", range(3))
def test_invcov_trace_non_increasing(seed):
    data, _, _ = generate(SimSpec(model_id=1, K_true=2, seed=seed))
    fit = fit_hmmglasso(data, 2, FitConfig(penalty_kind="invcov"),
                        kmeans_init(data, 2, restarts=10, seed=seed))
    assert np.all(np.diff(fit.penalized_nll_trace) <= 1e-8)


def test_trace_matches_penalized_nll(rng):
    data, _, _ = generate(SimSpec(1, 2, n=400, seed=5))
    fit = fit_hmmglasso(data, 2, FitConfig(), kmeans_init(data, 2, restarts=3, seed=0))
    assert fit.penalized_nll_trace[-1] == pytest.approx(
        penalized_nll(fit.model, fit.resp, fit.config), rel=1e-12)
    assert len(fit.penalized_nll_trace) == fit.iterations


def test_state_collapse_returns_last_valid_iterate():
    rng = np.random.default_rng(8)
    data = rng.standard_normal((400, 2))
    u = rng.dirichlet([1, 1, 1, 1, 1], size=400)
    fit = fit_hmmglasso(data, 5, FitConfig(pi_min=0.19), u)
    assert fit.termination == STATE_COLLAPSED
    assert 0 <= fit.collapsed_state < 5
    assert np.isclose(fit.resp.pi.sum(), 1.0)


def test_fit_requires_initialization(rng):
    with pytest.raises(ValueError):
        fit_hmmglasso(rng.standard_normal((20, 2)), 2)
    with pytest.raises(ValueError):
        fit_hmmglasso(rng.standard_normal((20, 2)), 2, init=np.ones((20, 3)) / 3)


@pytest.mark.parametrize("kind", ["parcor", "invcor"])
def test_other_penalties_fit(kind):
    data, labels, _ = generate(SimSpec(1, 2, seed=6))
    fit = fit_hmmglasso(data, 2, FitConfig(penalty_kind=kind),
                        kmeans_init(data, 2, restarts=5, seed=0))
    assert fit.termination in (CONVERGED, "objective_increase")
    assert adjusted_rand_index(fit.labels(), labels) > 0.9


def test_parcor_scale_invariance():
    data, _, _ = generate(SimSpec(1, 2, seed=9))
    init = kmeans_init(data, 2, restarts=10, seed=0)
    scales = np.random.default_rng(9).uniform(0.1, 10.0, data.shape[1])
    a = fit_hmmglasso(data, 2, FitConfig(), init)
    b = fit_hmmglasso(data * scales, 2, FitConfig(), init)
    assert np.max(np.abs(a.resp.u - b.resp.u)) < 1e-6
    for sa, sb in zip(a.model.states, b.model.states):
        assert graph_of(sa.precision) == graph_of(sb.precision)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), K=st.integers(1, 3))
def test_effective_sizes_sum_to_one(seed, K):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((120, 3))
    u = rng.dirichlet(np.ones(K), size=120)
    fit = fit_hmmglasso(data, K, FitConfig(max_iter=5, pi_min=0.01), u)
    assert fit.resp.pi.sum() == pytest.approx(1.0, abs=1e-10)
    assert isinstance(fit.model, HmmModel)
    assert all(isinstance(s, GaussianState) for s in fit.model.states)
    resp = forward_backward(data, fit.model)
    assert resp.log_likelihood == pytest.approx(fit.log_likelihood, abs=1e-9)
