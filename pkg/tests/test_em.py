import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from mpmath import mp, mpf
from mpmath import exp as mexp

from ggmix import em
from ggmix.core import GaussianComponent, MixtureModel, PenaltyConfig, penalized_log_likelihood
from ggmix.exceptions import ConfigurationError, FitFailedError, InvalidCovarianceError
from ggmix.glasso import glasso_fit
from ggmix.metrics import rand_index
from ggmix.simulation import SyntheticConfig, sample_problem

from conftest import blobs, random_spd


def _model(comps, w):
    return MixtureModel(tuple(comps), w)


# E-step ---------------------------------------------------------------------

def test_e_step_identical_components_equal_split(rng):
    c = GaussianComponent(rng.normal(size=3), random_spd(rng, 3))
    tau = em.e_step(rng.normal(size=(10, 3)), _model([c, c], [0.5, 0.5]))
    assert np.allclose(tau, 0.5, atol=1e-15)


@given(st.floats(1e-6, 0.5))
def test_e_step_identical_components_return_weights(delta):
    c = GaussianComponent([0.0, 1.0], [[1.0, 0.2], [0.2, 2.0]])
    X = np.random.default_rng(0).normal(size=(5, 2))
    tau = em.e_step(X, _model([c, c], [1 - delta, delta]))
    assert np.allclose(tau, [1 - delta, delta], rtol=1e-12, atol=0)


def test_e_step_matches_extended_precision_ratio():
    mp.dps = 50
    c1 = GaussianComponent([0.0], [[1.0]])
    c2 = GaussianComponent([8.0], [[1.0]])
    tau = em.e_step(np.array([[0.0]]), _model([c1, c2], [0.4, 0.6]))
    f1 = mpf("0.4") * mexp(mpf(0))
    f2 = mpf("0.6") * mexp(-mpf(64) / 2)
    ref = float(f2 / (f1 + f2))
    assert tau[0, 1] == pytest.approx(ref, rel=1e-12)
    assert tau[0, 0] == pytest.approx(1 - ref, abs=1e-15)


def test_e_step_rows_sum_to_one(rng):
    comps = [GaussianComponent(rng.normal(size=2) * 3, random_spd(rng, 2)) for _ in range(3)]
    tau = em.e_step(rng.normal(size=(40, 2)) * 10, _model(comps, [0.2, 0.3, 0.5]))
    assert np.max(np.abs(tau.sum(axis=1) - 1)) <= 1e-10


# M-step ---------------------------------------------------------------------

def test_m_step_pi_examples():
    assert np.array_equal(em.m_step_pi([[1, 0]] * 5), [1.0, 0.0])
    assert np.array_equal(em.m_step_pi([[0.5, 0.5]] * 3), [0.5, 0.5])
    assert np.allclose(em.m_step_pi([[1, 0], [1, 0], [0.5, 0.5], [0, 1]]), [0.625, 0.375], atol=0)


def test_m_step_mu_examples(rng):
    X = rng.normal(size=(9, 3))
    (mu,) = em.m_step_mu(X, np.ones((9, 1)))
    assert np.allclose(mu, X.mean(axis=0))
    a, b = em.m_step_mu(X, np.full((9, 2), 0.5))
    assert np.allclose(a, X.mean(axis=0)) and np.allclose(b, X.mean(axis=0))
    m = em.m_step_mu(np.array([[0.0], [2.0], [5.0]]), np.array([[1, 0], [1, 0], [0, 1]], dtype=float))
    assert np.allclose(np.ravel(m), [1.0, 5.0])


def test_scaled_lambda_mapping():
    assert np.array_equal(em.scaled_lambdas([0.3, 0.7], PenaltyConfig(0.2, 1)), [0.2, 0.2])
    assert em.scaled_lambdas([0.25, 0.75], PenaltyConfig(0.2, 0))[0] == 0.2 / 0.25
    assert np.array_equal(em.scaled_lambdas([0.25, 0.75], PenaltyConfig(0.2, 0)), [0.2 / 0.25, 0.2 / 0.75])


def test_m_step_omega_single_hard_cluster_is_plain_glasso(rng):
    X = rng.normal(size=(30, 4))
    tau = np.ones((30, 1))
    mu = em.m_step_mu(X, tau)
    pi = em.m_step_pi(tau)
    (om,) = em.m_step_omega(X, tau, mu, pi, PenaltyConfig(0.2, 0))
    S = np.cov(X.T, bias=True)
    assert np.allclose(om, glasso_fit(S, 0.2).omega, atol=1e-10)


def test_m_step_omega_gamma0_uses_scaled_penalty(rng):
    X = rng.normal(size=(40, 3))
    tau = np.zeros((40, 2))
    tau[:10, 0] = 1
    tau[10:, 1] = 1
    mu = em.m_step_mu(X, tau)
    pi = em.m_step_pi(tau)
    om = em.m_step_omega(X, tau, mu, pi, PenaltyConfig(0.05, 0))
    S0 = np.cov(X[:10].T, bias=True)
    assert np.allclose(om[0], glasso_fit(S0, 0.05 * 4).omega, atol=1e-10)


# harden ---------------------------------------------------------------------

def test_harden_examples(rng):
    assert em.harden([[0.9, 0.1]])[0] == 0
    assert em.harden([[0.5, 0.5]])[0] == 0
    tau = rng.dirichlet([1, 1, 1], size=4)
    assert np.array_equal(em.harden(tau), [max(range(3), key=lambda k: row[k]) for row in tau])


# fit ------------------------------------------------------------------------

@pytest.mark.parametrize("gamma", [0, 1])
def test_k1_is_single_glasso(rng, gamma):
    X = rng.normal(size=(40, 5))
    res = em.fit(X, em.EmConfig(K=1, penalty=PenaltyConfig(0.2, gamma), restarts=2))
    S = np.cov(X.T, bias=True)
    assert np.allclose(res.model.precisions[0], glasso_fit(S, 0.2).omega, atol=1e-6)
    assert len(res.pll_trace) >= 1
    assert np.all(res.labels == 0)


def test_separable_blobs_recovered():
    # random balanced starts sit near a saddle on separated blobs; the default
    # eps=1e-4 can stop there, so a tighter relative tolerance is used
    X, truth = blobs()
    res = em.fit(X, em.EmConfig(K=2, penalty=PenaltyConfig(0.1, 1), restarts=5, rel_tol=1e-6))
    assert rand_index(res.labels, truth) == 1.0


def test_synthetic_large_sample_clusters_well():
    rands = []
    for seed in range(20):
        prob = sample_problem(SyntheticConfig(p=25, n_k=(200, 200), seed=seed))
        res = em.fit(prob.data, em.EmConfig(K=2, penalty=PenaltyConfig(0.15, 1), restarts=5, seed=seed))
        rands.append(rand_index(res.labels, prob.true_labels))
    assert np.mean(rands) >= 0.9


def _monotone(trace, slack=1e-8):
    return all(b >= a - slack * abs(a) for a, b in zip(trace, trace[1:]))


@pytest.mark.parametrize("seed", range(10))
def test_gamma0_trace_monotone(seed):
    prob = sample_problem(SyntheticConfig(p=10, n_k=(30, 30), seed=seed))
    cfg = em.EmConfig(K=2, penalty=PenaltyConfig(0.1, 0))
    labels = em.random_partition(60, 2, 4, np.random.default_rng(seed))
    res = em.em_from_partition(prob.data, cfg, labels)
    assert _monotone(res.pll_trace)
    # the stored trace is the penalized likelihood of the returned model
    assert res.pll == pytest.approx(penalized_log_likelihood(prob.data, res.model, cfg.penalty), rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_gamma1_selected_restart_improves(seed):
    prob = sample_problem(SyntheticConfig(p=10, n_k=(30, 30), seed=seed))
    res = em.fit(prob.data, em.EmConfig(K=2, penalty=PenaltyConfig(0.2, 1), restarts=5, seed=seed))
    assert res.pll_trace[-1] >= res.pll_trace[0]
    assert len(res.q_improved) == len(res.pll_trace) - 1


def test_label_permutation_equivariance():
    prob = sample_problem(SyntheticConfig(p=8, n_k=(25, 25), seed=3))
    cfg = em.EmConfig(K=2, penalty=PenaltyConfig(0.15, 0))
    labels = em.random_partition(50, 2, 4, np.random.default_rng(1))
    a = em.em_from_partition(prob.data, cfg, labels)
    b = em.em_from_partition(prob.data, cfg, 1 - labels)
    assert b.pll == pytest.approx(a.pll, abs=1e-6)
    assert np.allclose(a.model.precisions[0], b.model.precisions[1], atol=1e-8)
    assert np.allclose(a.tau, b.tau[:, ::-1], atol=1e-8)


def test_fit_is_deterministic():
    prob = sample_problem(SyntheticConfig(p=8, n_k=(25, 25), seed=5))
    cfg = em.EmConfig(K=2, penalty=PenaltyConfig(0.2, 1), restarts=4, seed=11)
    a, b = em.fit(prob.data, cfg), em.fit(prob.data, cfg)
    assert a.pll_trace == b.pll_trace
    assert np.array_equal(a.tau, b.tau)
    for x, y in zip(a.model.precisions, b.model.precisions):
        assert np.array_equal(x, y)


def test_responsibilities_valid_after_fit():
    prob = sample_problem(SyntheticConfig(p=8, n_k=(25, 25), seed=2))
    res = em.fit(prob.data, em.EmConfig(K=3, penalty=PenaltyConfig(0.3, 1), restarts=3))
    assert np.max(np.abs(res.tau.sum(axis=1) - 1)) <= 1e-10


def test_unpenalized_singular_raises_invalid_covariance():
    prob = sample_problem(SyntheticConfig(p=25, n_k=(15, 15), seed=0))
    with pytest.raises(InvalidCovarianceError):
        em.fit(prob.data, em.EmConfig(K=2, penalty=PenaltyConfig(0.0, 1), restarts=3))


def test_all_degenerate_raises():
    X, _ = blobs(n_k=10)
    cfg = em.EmConfig(K=2, penalty=PenaltyConfig(0.1, 1), restarts=3, min_cluster_size=10)
    with pytest.raises(FitFailedError) as info:
        em.fit(X, cfg)
    assert len(info.value.terminations) == 3


def test_config_validation():
    with pytest.raises(ConfigurationError):
        em.EmConfig(K=0)
    with pytest.raises(ConfigurationError):
        em.EmConfig(rel_tol=0)
    with pytest.raises(ConfigurationError):
        em.fit(np.zeros((5, 2)), em.EmConfig(K=2))


def test_random_partition_respects_minimum():
    r = np.random.default_rng(0)
    for n in (8, 9, 30):
        labels = em.random_partition(n, 2, 4, r)
        assert np.bincount(labels, minlength=2).min() >= 4


def test_rel_change_guard():
    assert em._rel_change(1e-15, 0.0, 1e-4)
    assert not em._rel_change(1.0, 0.0, 1e-4)
    assert em._rel_change(-100.0, -100.005, 1e-4)


def test_fit_result_json(rng):
    X, _ = blobs(n_k=20)
    res = em.fit(X, em.EmConfig(K=2, penalty=PenaltyConfig(0.1, 1), restarts=2))
    d = res.to_dict()
    assert d["schema_version"] == 1 and len(d["labels"]) == 40
    assert d["termination"] in {t.value for t in em.Termination}
