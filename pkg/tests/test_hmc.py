import io
import math

import numpy as np
import pytest
from scipy import stats

from bayescp.hmc import (Chain, ChainSet, DualAveraging, HmcConfig, SamplingFailedError,
                         accept_probability, adapt_step_size, chain_rng, hmc_transition,
                         leapfrog, read_draws_csv, run_chains, sample_chain, write_draws_csv)
from bayescp.model import derive_priors


def std_normal(z):
    z = np.asarray(z, dtype=float)
    return -0.5 * float(z @ z), -z


def std_normal_grad(z):
    return -np.asarray(z, dtype=float)


# -- leapfrog -----------------------------------------------------------------

def test_free_particle():
    z, p = np.array([1.0, -2.0]), np.array([0.3, 0.7])
    z1, p1 = leapfrog(z, p, 0.25, lambda v: np.zeros(2))
    np.testing.assert_array_equal(z1, z + 0.25 * p)
    np.testing.assert_array_equal(p1, p)


def test_hand_computed_step():
    z1, p1 = leapfrog(np.array([1.0]), np.array([0.0]), 0.1, std_normal_grad)
    p_half = 0.0 + 0.05 * -1.0
    z_new = 1.0 + 0.1 * p_half
    p_new = p_half + 0.05 * -z_new
    assert z1[0] == pytest.approx(z_new, abs=1e-15)
    assert p1[0] == pytest.approx(p_new, abs=1e-15)
    assert (z_new, p_new) == pytest.approx((0.995, -0.09975))


def test_reversibility(rng):
    grad = lambda v: -np.array([4.0, 1.0, 0.25]) * v + np.sin(v)
    for _ in range(20):
        z0, p0 = rng.normal(size=3), rng.normal(size=3)
        z, p = z0, p0
        for _ in range(50):
            z, p = leapfrog(z, p, 0.05, grad)
        p = -p
        for _ in range(50):
            z, p = leapfrog(z, p, 0.05, grad)
        np.testing.assert_allclose(z, z0, atol=1e-10)
        np.testing.assert_allclose(-p, p0, atol=1e-10)


def test_non_finite_gradient_propagates():
    z1, p1 = leapfrog(np.array([1.0]), np.array([0.0]), 0.1, lambda v: np.array([np.nan]))
    assert not np.all(np.isfinite(z1)) or not np.all(np.isfinite(p1))


# -- transitions --------------------------------------------------------------

def test_metropolis_formula():
    assert accept_probability(math.log(2.0)) == pytest.approx(0.5, abs=1e-15)
    assert accept_probability(-3.0) == 1.0
    assert accept_probability(float("nan")) == 0.0


def test_tiny_steps_conserve_energy():
    rng = np.random.default_rng(1)
    for step in (1e-2, 1e-3, 1e-4):
        tr = hmc_transition(np.array([0.7, -1.2]), rng, step, 10, std_normal)
        assert abs(tr.energy_change) < 10 * step**2
        assert tr.accept_prob > 1 - 10 * step**2


def test_two_d_standard_normal_moments():
    rng = np.random.default_rng(5)
    z = np.zeros(2)
    current = std_normal(z)
    draws = np.empty((20000, 2))
    for i in range(20000):
        step = 0.4 * (1 + 0.2 * (2 * rng.random() - 1))
        tr = hmc_transition(z, rng, step, 4, std_normal, current)
        z, current = tr.z, (tr.logp, tr.grad)
        draws[i] = z
    assert np.all(np.abs(draws.mean(axis=0)) < 0.05)
    cov = np.cov(draws.T)
    assert np.all(np.abs(np.diag(cov) - 1.0) < 0.1)


def test_divergence_is_rejected():
    # steep quadratic with a step far past the stability limit
    stiff = lambda v: (-0.5 * 1e6 * float(v @ v), -1e6 * v)
    z0 = np.array([0.01])
    tr = hmc_transition(z0, np.random.default_rng(0), 0.1, 10, stiff)
    assert tr.diverged and not tr.accepted
    np.testing.assert_array_equal(tr.z, z0)


def test_non_finite_state_is_divergence():
    def cliff(v):
        # finite only at the starting point itself
        return (-0.08, -v) if v[0] == 0.4 else (-math.inf, np.full(1, np.nan))
    tr = hmc_transition(np.array([0.4]), np.random.default_rng(0), 0.5, 5, cliff)
    assert tr.diverged and not tr.accepted


def test_transition_consumes_fixed_randomness():
    a, b = np.random.default_rng(3), np.random.default_rng(3)
    hmc_transition(np.zeros(2), a, 0.1, 3, std_normal)
    hmc_transition(np.zeros(2), b, 50.0, 3, std_normal)
    assert a.random() == b.random()


# -- adaptation ---------------------------------------------------------------

def test_step_shrinks_when_everything_is_rejected():
    schedule, final = adapt_step_size(np.zeros(60), 0.1, 0.8)
    assert np.all(np.diff(schedule) < 0)
    assert final < 0.1


def test_step_settles_at_target_acceptance():
    schedule, _ = adapt_step_size(np.full(5000, 0.8), 0.1, 0.8)
    diffs = np.abs(np.diff(np.log(schedule)))
    assert diffs[-1] < 1e-12
    assert np.all(diffs[100:] <= diffs[99] + 1e-15)


def test_dual_averaging_final_is_averaged_iterate():
    da = DualAveraging(0.5, 0.8)
    assert da.final_step_size == 0.5
    for a in (0.9, 0.3, 0.85):
        da.update(a)
    assert da.final_step_size > 0 and da.step_size > 0


def test_adapted_acceptance_on_standard_normal():
    cfg = HmcConfig(num_samples=2000, warmup_steps=500, num_leapfrog_steps=8, seed=0)
    _, acc, ndiv, step, _ = sample_chain(std_normal, np.array([3.0]), cfg, chain_rng(0, 0))
    assert 0.6 <= acc <= 0.95
    assert ndiv == 0 and step > 0


def test_divergences_do_not_drop_with_larger_steps():
    stiff = lambda v: (-0.5 * float(v @ (np.array([400.0, 1.0]) * v)), -np.array([400.0, 1.0]) * v)
    counts = []
    for step in (0.02, 0.2, 2.0):
        cfg = HmcConfig(num_samples=300, warmup_steps=0, initial_step_size=step,
                        num_leapfrog_steps=16, step_size_jitter=0.0, seed=1)
        _, _, ndiv, _, _ = sample_chain(stiff, np.array([0.01, 0.5]), cfg, chain_rng(1, 0))
        counts.append(ndiv)
    assert counts == sorted(counts)
    assert counts[-1] > 0


def test_config_validation():
    for bad in ({"num_samples": 0}, {"num_chains": 0}, {"warmup_steps": -1},
                {"initial_step_size": 0.0}, {"num_leapfrog_steps": 0},
                {"target_accept": 1.0}, {"divergence_energy_threshold": 0.0}):
        with pytest.raises(ValueError):
            HmcConfig(**bad)
    assert HmcConfig().to_dict()["warmup_steps"] == 500


def test_default_config():
    cfg = HmcConfig()
    assert (cfg.warmup_steps, cfg.num_chains, cfg.num_samples) == (500, 4, 800)
    assert cfg.num_leapfrog_steps == 32 and cfg.target_accept == 0.8
    assert cfg.divergence_energy_threshold == 1000.0


# -- multi-chain runs ---------------------------------------------------------

QUICK = HmcConfig(num_samples=60, num_chains=3, warmup_steps=60, seed=5)


def test_same_seed_same_draws(small_series):
    pr = derive_priors(small_series)
    a = run_chains(small_series, pr, "normal", 20.0, QUICK)
    b = run_chains(small_series, pr, "normal", 20.0, QUICK)
    for ca, cb in zip(a.chains, b.chains):
        np.testing.assert_array_equal(ca.draws, cb.draws)


def test_different_seed_different_draws(small_series):
    pr = derive_priors(small_series)
    a = run_chains(small_series, pr, "normal", 20.0, QUICK)
    b = run_chains(small_series, pr, "normal", 20.0, HmcConfig(num_samples=60, num_chains=3,
                                                                warmup_steps=60, seed=6))
    assert not np.array_equal(a.chains[0].draws[0], b.chains[0].draws[0])


def test_serial_and_parallel_agree(small_series):
    pr = derive_priors(small_series)
    a = run_chains(small_series, pr, "cauchy", 20.0, QUICK, parallel=False)
    b = run_chains(small_series, pr, "cauchy", 20.0, QUICK, parallel=True)
    for ca, cb in zip(a.chains, b.chains):
        np.testing.assert_array_equal(ca.draws, cb.draws)
        assert ca.num_divergences == cb.num_divergences


def test_chain_streams_are_seed_plus_index(small_series):
    pr = derive_priors(small_series)
    one = HmcConfig(num_samples=60, num_chains=1, warmup_steps=60, seed=7)
    shifted = run_chains(small_series, pr, "normal", 20.0, one)
    full = run_chains(small_series, pr, "normal", 20.0, QUICK.__class__(
        num_samples=60, num_chains=3, warmup_steps=60, seed=5))
    np.testing.assert_array_equal(shifted.chains[0].draws, full.chains[2].draws)


def test_draws_respect_bounds(small_fit):
    draws = small_fit.pooled()
    assert draws.shape == (small_fit.num_chains * small_fit.num_draws, 6)
    assert np.all((draws[:, 4] > 0) & (draws[:, 4] < 1))
    assert np.all((draws[:, 5] > 0) & (draws[:, 5] < small_fit.sigma_upper))
    for c in small_fit.chains:
        assert 0.0 <= c.accept_rate <= 1.0 and c.final_step_size > 0


def test_hard_mode_runs(small_series):
    pr = derive_priors(small_series)
    cs = run_chains(small_series, pr, "normal", 0.0, QUICK)
    assert cs.meta == {"likelihood": "normal", "sharpness": 0.0}
    assert np.all(np.isfinite(cs.pooled()))


def test_all_divergent_raises(small_series):
    pr = derive_priors(small_series)
    cfg = HmcConfig(num_samples=20, num_chains=2, warmup_steps=0, initial_step_size=50.0, seed=0)
    with pytest.raises(SamplingFailedError) as info:
        run_chains(small_series, pr, "normal", 20.0, cfg)
    assert info.value.chain_set.total_divergences == 40


def test_chain_set_requires_equal_lengths():
    with pytest.raises(ValueError):
        ChainSet([Chain(np.zeros((3, 6)), 1.0, 0, 0.1), Chain(np.zeros((4, 6)), 1.0, 0, 0.1)],
                 HmcConfig())


def test_draws_csv_round_trip(small_fit):
    buf = io.StringIO()
    write_draws_csv(small_fit, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "chain,iter,w1,w2,b1,b2,tau,sigma"
    back = read_draws_csv(io.StringIO(text))
    assert back.num_chains == small_fit.num_chains
    for a, b in zip(small_fit.chains, back.chains):
        np.testing.assert_array_equal(a.draws, b.draws)
    with pytest.raises(ValueError):
        read_draws_csv(io.StringIO("chain,iter,w1\n0,0,1.0\n"))


def test_one_d_normal_ks():
    cfg = HmcConfig(num_samples=10000, warmup_steps=500, num_leapfrog_steps=8, seed=2)
    draws, *_ = sample_chain(std_normal, np.array([0.0]), cfg, chain_rng(2, 0))
    x = draws[:, 0]
    assert stats.kstest(x, "norm").statistic < 0.03
