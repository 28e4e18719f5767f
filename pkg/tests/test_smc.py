import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize, stats
from scipy.special import logsumexp

from rulsmc import streams
from rulsmc.bayes import GaussianMeanPosterior
from rulsmc.damage import ModelParams
from rulsmc.dist.executor import JobSpec, MutationExecutor, dispatch_mutation
from rulsmc.mcmc import ConfigError, gibbs_sigma, mcmc_step
from rulsmc.smc import (
    DegeneracyError,
    ParticleEnsemble,
    SmcConfig,
    adapt_delta_phi,
    ess,
    ess_from_log_weights,
    init_ensemble,
    mutate,
    resample_systematic,
    reweight,
    run_smc,
    systematic_indices,
)


def ensemble_from(log_like, weights=None, phi=0.0, params=None):
    log_like = np.asarray(log_like, dtype=float)
    n = len(log_like)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    with np.errstate(divide="ignore"):
        log_w = np.log(w / w.sum())
    if params is None:
        params = np.column_stack([np.arange(n, dtype=float), np.zeros(n), np.ones(n)])
    return ParticleEnsemble(params=params, log_weights=log_w, log_like=log_like, misfit=np.zeros(n),
                            ids=np.arange(n), phi=phi)


def test_fresh_ensemble_uniform(crack_target):
    ens = init_ensemble(SmcConfig(n_particles=1000), crack_target)
    assert ens.phi == 0.0
    assert ens.weights.max() == pytest.approx(1e-3, rel=1e-14)
    assert ess(ens) == pytest.approx(1000, rel=1e-12)
    assert np.array_equal(ens.ids, np.arange(1000))


def test_prior_draw_matches_uniform_bounds(crack_target):
    ens = init_ensemble(SmcConfig(n_particles=100_000, seed=3), crack_target)
    la = ens.params[:, 0]
    assert la.min() >= -8.0 and la.max() <= -1.0
    d = stats.kstest(la, stats.uniform(loc=-8.0, scale=7.0).cdf).statistic
    # asymptotic 1% critical value of the one-sample KS statistic
    assert d < 1.628 / math.sqrt(len(la))


@pytest.mark.parametrize("log_w,expected", [
    (np.full(1000, -np.log(1000)), 1000.0),
    (np.array([0.0, -np.inf, -np.inf, -np.inf]), 1.0),
    (np.log([0.8, 0.2]), 1.0 / 0.68),
])
def test_ess_cases(log_w, expected):
    assert ess_from_log_weights(log_w) == pytest.approx(expected, rel=1e-12)


def test_ess_two_weights_value():
    assert ess_from_log_weights(np.log([0.8, 0.2])) == pytest.approx(1.470588, abs=1e-6)


def test_ess_stable_for_extreme_log_weights():
    lw = [-1e4, -1e4 - math.log(4)]
    # exp underflows here, so a naive sum of squares would divide 0 by 0
    w = 1.0 / (1.0 + math.exp(lw[1] - lw[0]))
    assert ess_from_log_weights(lw) == pytest.approx(1.0 / (w * w + (1 - w) ** 2), rel=1e-12)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=40))
def test_ess_bounds(log_w):
    n = len(log_w)
    e = ess_from_log_weights(log_w)
    assert 1.0 - 1e-9 <= e <= n + 1e-9
    uniform = max(log_w) - min(log_w) == 0
    assert (abs(e - n) < 1e-9 * n) == uniform or (not uniform and max(log_w) - min(log_w) < 1e-6)


def test_flat_likelihood_single_step():
    ens = ensemble_from(np.full(50, -3.7))
    assert adapt_delta_phi(ens, SmcConfig(n_particles=50)) == 1.0


def test_two_particle_root():
    c, kappa = 10.0, 0.75
    ens = ensemble_from([0.0, -c])
    cfg = SmcConfig(n_particles=2, ess_target_frac=kappa, phi_bisect_tol=1e-9)

    def excess(d):
        r = math.exp(-c * d)
        return (1 + r) ** 2 / (1 + r * r) - kappa * 2

    root = optimize.brentq(excess, 1e-9, 1.0, xtol=1e-14)
    assert root == pytest.approx(math.log(2 + math.sqrt(3)) / c, rel=1e-10)
    assert adapt_delta_phi(ens, cfg) == pytest.approx(root, abs=1e-7)


def test_two_particle_root_default_tolerance():
    c = 10.0
    ens = ensemble_from([0.0, -c])
    cfg = SmcConfig(n_particles=2, ess_target_frac=0.75)
    phi = adapt_delta_phi(ens, cfg)
    assert abs(ess_from_log_weights([0.0, -c * phi]) - 1.5) <= cfg.bisect_tol


@given(st.lists(st.floats(-1e4, 0.0), min_size=2, max_size=30), st.floats(0.0, 0.999))
def test_progress_guarantee(log_like, phi):
    ens = ensemble_from(log_like, phi=phi)
    new = adapt_delta_phi(ens, SmcConfig(n_particles=len(log_like)))
    assert phi < new <= 1.0


def test_adapt_at_one_is_an_error():
    with pytest.raises(ValueError):
        adapt_delta_phi(ensemble_from([0.0, 1.0], phi=1.0), SmcConfig(n_particles=2))


def test_reweight_zero_increment():
    ens = ensemble_from([0.0, -1.0, -5.0], weights=[0.2, 0.3, 0.5], phi=0.4)
    out = reweight(ens, 0.4)
    assert np.array_equal(out.log_weights, ens.log_weights)


def test_reweight_equal_log_like_keeps_uniform():
    out = reweight(ensemble_from(np.full(8, -12.0)), 0.7)
    np.testing.assert_allclose(out.weights, 1 / 8, rtol=1e-14)
    assert out.phi == 0.7


def test_reweight_three_particles():
    out = reweight(ensemble_from([0.0, -1.0, -2.0]), 1.0)
    want = np.exp([0.0, -1.0, -2.0])
    np.testing.assert_allclose(out.weights, want / want.sum(), rtol=1e-14)


def test_reweight_all_outside_support_is_degenerate():
    with pytest.raises(DegeneracyError, match="step"):
        reweight(ensemble_from(np.full(4, -np.inf)), 0.5)


def test_reweight_rejects_decreasing_phi():
    with pytest.raises(ValueError):
        reweight(ensemble_from([0.0, 0.0], phi=0.5), 0.4)


@given(st.lists(st.floats(-200, 0), min_size=2, max_size=30), st.floats(0.0, 1.0))
def test_normalized_after_reweight_and_resample(log_like, phi):
    ens = reweight(ensemble_from(log_like), phi)
    assert abs(logsumexp(ens.log_weights)) < 1e-12
    res = resample_systematic(ens, streams.stream(0, streams.RESAMPLE))
    assert abs(logsumexp(res.log_weights)) < 1e-12


def test_uniform_weights_resample_to_permutation():
    ens = ensemble_from(np.zeros(17))
    for seed in range(20):
        out = resample_systematic(ens, streams.stream(seed, streams.RESAMPLE))
        assert sorted(out.params[:, 0]) == list(range(17))


def test_point_mass_resample():
    ens = ensemble_from(np.arange(6.0), weights=[0, 0, 0, 1, 0, 0])
    out = resample_systematic(ens, streams.stream(1, streams.RESAMPLE))
    assert np.all(out.params[:, 0] == 3)
    assert np.all(out.log_like == 3.0)
    assert np.array_equal(out.ids, np.arange(6))


@pytest.mark.parametrize("n", [10, 7, 13])
def test_systematic_count_bounds_every_offset(n):
    w = np.array([0.5, 0.3, 0.2])
    # counts only change where an offset position crosses a cumulative weight
    breaks = np.unique(np.concatenate([[0.0], np.mod(n * np.cumsum(w), 1.0)]))
    mids = 0.5 * (breaks + np.append(breaks[1:], 1.0))
    for u in np.concatenate([breaks, mids]):
        counts = np.bincount(systematic_indices(w, u, n), minlength=3)
        assert counts.sum() == n
        assert np.all(counts >= np.floor(n * w - 1e-12)) and np.all(counts <= np.ceil(n * w + 1e-12)), (u, counts)


def test_systematic_unbiased():
    rng = np.random.default_rng(8)
    w = np.linspace(1.0, 2.0, 10)
    w /= w.sum()
    counts = np.zeros(10)
    trials = 10_000
    for _ in range(trials):
        counts += np.bincount(systematic_indices(w, rng.random()), minlength=10)
    np.testing.assert_allclose(counts / trials, 10 * w, rtol=0.02)


def test_mutate_zero_steps_is_identity(crack_target):
    ens = init_ensemble(SmcConfig(n_particles=16), crack_target)
    out = mutate(ens, SmcConfig(n_particles=16, n_mcmc=0), crack_target)
    assert np.array_equal(out.params, ens.params)


def test_single_particle_matches_mcmc_chain(crack_target, truth):
    seed, step, n_mcmc = 4, 3, 6
    cov = np.diag([1e-4, 1e-3])
    x0 = truth.as_array()
    misfit = crack_target.misfit(x0[None, :], crack_target.predict(x0[None, :]))
    ll = crack_target.log_like_from_misfit(x0[None, :], misfit)
    ens = ParticleEnsemble(params=x0[None, :].copy(), log_weights=np.zeros(1), log_like=ll, misfit=misfit,
                           ids=np.array([0]), phi=1.0, step_index=step, seed=seed)
    spec = JobSpec(phi=1.0, n_mcmc=n_mcmc, proposal_cov=cov, step_index=step, seed=seed)
    out = dispatch_mutation(ens, spec, MutationExecutor(), crack_target)

    rng = streams.particle_stream(seed, 0, step)
    cur, n_acc = truth, 0
    t = crack_target
    for _ in range(n_mcmc):
        cur, acc = mcmc_step(cur, cov, t, rng)
        n_acc += acc
        cur = gibbs_sigma(cur, t.observations, t.law, t.prior, rng)
    assert np.array_equal(out.params[0], cur.as_array())
    assert out.accept_counts[0] == n_acc
    assert n_acc > 0


def test_serial_and_threaded_bit_identical(crack_target):
    cfg = SmcConfig(n_particles=64, n_mcmc=3, seed=5)
    a = run_smc(cfg, crack_target)
    b = run_smc(cfg, crack_target, MutationExecutor(mode="threaded", n_threads=4, batch_size=7))
    assert a.draws.tobytes() == b.draws.tobytes()
    assert a.diagnostics["schedule"] == b.diagnostics["schedule"]


def test_schedule_and_mutation_invariants(crack_target):
    s = run_smc(SmcConfig(n_particles=128, n_mcmc=3, seed=2), crack_target)
    sched = np.array(s.diagnostics["schedule"])
    assert sched[0] == 0.0 and sched[-1] == 1.0
    assert np.all(np.diff(sched) > 0)
    assert all(1.0 <= e <= 128 for e in s.diagnostics["ess"])
    assert len(s) == 128
    assert np.all(np.isfinite(crack_target.log_prior(s.draws)))
    assert s.sampler_tag == "SMC"
    ens = s.diagnostics["final_ensemble"]
    assert np.all(ens.log_weights == ens.log_weights[0])


def test_mutation_preserves_weights_and_support(crack_target):
    cfg = SmcConfig(n_particles=64, n_mcmc=4, seed=1)
    ens = init_ensemble(cfg, crack_target)
    ens = reweight(ens, adapt_delta_phi(ens, cfg))
    out = mutate(ens, cfg, crack_target)
    assert np.array_equal(out.log_weights, ens.log_weights)
    assert len(out) == len(ens)
    assert np.all(np.isfinite(crack_target.log_prior(out.params)))
    assert not np.array_equal(out.params, ens.params)


def test_flat_likelihood_recovers_prior():
    # noise so large that every particle has the same likelihood
    g = GaussianMeanPosterior(np.zeros((1, 1)), np.eye(1) * 1e16)
    s = run_smc(SmcConfig(n_particles=1024, n_mcmc=5, seed=7), g)
    assert s.diagnostics["schedule"] == [0.0, 1.0]
    assert stats.kstest(s.draws[:, 0], stats.uniform(loc=-100, scale=200).cdf).pvalue > 0.01


def test_same_seed_same_output(crack_target):
    cfg = SmcConfig(n_particles=32, n_mcmc=2, seed=11)
    assert run_smc(cfg, crack_target).draws.tobytes() == run_smc(cfg, crack_target).draws.tobytes()


def test_conjugate_mean_small():
    rng = np.random.default_rng(1)
    data = rng.normal(3.0, 1.0, size=(30, 1))
    g = GaussianMeanPosterior(data, np.eye(1))
    s = run_smc(SmcConfig(n_particles=512, n_mcmc=5, seed=3), g)
    assert s.mean()[0] == pytest.approx(g.posterior_mean[0], rel=0.03)


def test_particle_view(crack_target):
    ens = init_ensemble(SmcConfig(n_particles=4), crack_target)
    p = ens.particle(2)
    assert isinstance(p.params, ModelParams) and p.id == 2
    assert p.log_weight == pytest.approx(-math.log(4))
    assert len(ens.particles()) == 4


@pytest.mark.parametrize("kw", [dict(n_particles=1), dict(n_mcmc=-1), dict(ess_target_frac=0.0),
                                dict(ess_target_frac=1.0)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SmcConfig(**kw)


def test_resample_keeps_phi_and_step(crack_target):
    ens = replace(ensemble_from([0.0, -1.0, -2.0], phi=0.3), step_index=4)
    out = resample_systematic(ens, streams.stream(0, streams.RESAMPLE))
    assert (out.phi, out.step_index) == (0.3, 4)
