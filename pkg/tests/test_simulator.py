import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from branchveil import streams
from branchveil.laws import BevertonHoltPoisson, BinarySplit
from branchveil.simulator import (CoupledPaths, SimConfig, decompose_martingale, replicate,
                                  resolve_index, simulate_coupled, simulate_fast_coupled,
                                  simulate_path)

BH = BevertonHoltPoisson(2, 1)
BS = BinarySplit(0.5, 1)


def test_config_validation():
    with pytest.raises(ValueError, match="c must exceed 1/2"):
        SimConfig(K=100, c=0.4)
    with pytest.raises(ValueError, match="gamma must exceed c"):
        SimConfig(K=100, c=0.7, gamma=0.6)
    with pytest.raises(ValueError):
        SimConfig(K=100, z0=1.5)
    with pytest.raises(ValueError):
        SimConfig(K=100, mode="turbo")


def test_generation_uniform_prefixes_are_shared():
    key = streams.stream_key(5, "exact", 3)
    long = streams.generation_uniforms(key, 4, 1000)
    short = streams.generation_uniforms(key, 4, 10)
    np.testing.assert_array_equal(long[:10], short)
    assert not np.array_equal(streams.generation_uniforms(key, 5, 10), short)
    other = streams.stream_key(5, "exact", 4)
    assert not np.array_equal(streams.generation_uniforms(other, 4, 10), short)


@pytest.mark.parametrize("mode", ["exact", "fast"])
def test_pure_doubling(mode):
    path = simulate_path(BinarySplit(1, 0), SimConfig(K=1e6, mode=mode), horizon=10)
    assert path.counts[10] == 1024
    np.testing.assert_array_equal(path.counts, 2 ** np.arange(11))


@pytest.mark.parametrize("mode,R", [("fast", 100_000), ("exact", 20_000)])
def test_one_step_extinction_probability(mode, R):
    cfg = SimConfig(K=math.inf, mode=mode, seed=1)
    z1 = replicate(BH, cfg, R, "Z", index=1)
    p = math.exp(-2)
    assert abs(np.mean(z1 == 0) - p) < 4 * math.sqrt(p * (1 - p) / R)


def test_fast_and_exact_agree_in_law():
    cfg_f = SimConfig(K=1e3, mode="fast", seed=2)
    cfg_e = SimConfig(K=1e3, mode="exact", seed=3)
    zf = replicate(BS, cfg_f, 2000, "Z", index="n_K")
    ze = replicate(BS, cfg_e, 2000, "Z", index="n_K")
    assert stats.ks_2samp(zf, ze).pvalue > 0.01


def test_deterministic_law_fast_equals_exact():
    for K in (1e3, 2 ** 20):
        a = simulate_path(BinarySplit(1, 0), SimConfig(K=K, z0=3, mode="exact"))
        b = simulate_path(BinarySplit(1, 0), SimConfig(K=K, z0=3, mode="fast"))
        np.testing.assert_array_equal(a.counts, b.counts)


@pytest.mark.parametrize("law", [BS, BH])
def test_one_step_conditional_mean(law):
    K, z = 1000.0, 400
    cfg = SimConfig(K=K, z0=z, seed=4)
    z1 = replicate(law, cfg, 20_000, "Z", index=1)
    x = z / K
    mean, var = z * float(law.mean(x, K)), z * float(law.variance(x, K))
    assert abs(z1.mean() - mean) < 4 * math.sqrt(var / z1.size)


def test_draw_instrumentation():
    cfg = SimConfig(K=1e4, seed=7, mode="exact")
    p = simulate_path(BS, cfg)
    assert p.draws == int(p.counts[:-1].sum())
    q = simulate_path(BS, SimConfig(K=1e4, seed=7, mode="fast"))
    live = int(np.sum(q.counts[:-1] > 0))
    assert q.draws == live <= cfg.horizon(BS.a)


def test_fast_mode_cost_at_large_capacity():
    import time
    cfg = SimConfig(K=1e6, seed=0)
    t0 = time.perf_counter()
    for r in range(200):
        simulate_path(BH, cfg, r)
    assert (time.perf_counter() - t0) / 200 < 1e-3


def test_overflow_guard():
    with pytest.raises(OverflowError):
        simulate_path(BinarySplit(1, 0), SimConfig(K=1e30, z0=2 ** 61, mode="fast"), horizon=2)


def test_same_seed_same_path_different_seed_differs():
    cfg = SimConfig(K=1e4, seed=11)
    a = simulate_path(BH, cfg, 5).counts
    np.testing.assert_array_equal(a, simulate_path(BH, cfg, 5).counts)
    assert not np.array_equal(a, simulate_path(BH, cfg, 6).counts)


@pytest.mark.parametrize("law", [BS, BH])
def test_coupled_sandwich(law):
    cfg = SimConfig(K=1e4, seed=0, mode="exact")
    for r in range(300):
        cp = simulate_coupled(law, cfg, r)
        assert cp.sandwich_violations() == 0


def test_coupled_process_matches_exact_path():
    cfg = SimConfig(K=1e4, seed=9, mode="exact")
    for r in range(20):
        np.testing.assert_array_equal(simulate_coupled(BH, cfg, r).Z,
                                      simulate_path(BH, cfg, r).counts)


def test_coupled_processes_coincide_without_density_dependence():
    cfg = SimConfig(K=1e3, seed=1, mode="exact")
    for r in range(50):
        cp = simulate_coupled(BinarySplit(0.5, 0), cfg, r)
        np.testing.assert_array_equal(cp.Z, cp.Z_gw)
        np.testing.assert_array_equal(cp.Z, cp.Z_gamma)


def test_sandwich_violation_counter():
    cp = CoupledPaths(np.array([1, 3]), np.array([1, 2]), np.array([1, 1]), 10.0, 0.8, None, None)
    assert cp.sandwich_violations() == 1


def test_fast_coupled_ordering():
    cfg = SimConfig(K=1e5, seed=3)
    for r in range(200):
        path, zt = simulate_fast_coupled(BH, cfg, r, gw_horizon=cfg.horizon(2) + 5)
        assert np.all(path.counts <= zt[:path.counts.size])


def test_doob_frequency_bound():
    K, c, gamma = 1e4, 0.6, 0.8
    cfg = SimConfig(K=K, c=c, gamma=gamma, seed=2, mode="exact")
    n_K = cfg.n_K(BS.a)
    R = 1000
    hits = sum(1 for r in range(R)
               if (t := simulate_coupled(BS, cfg, r, horizon=n_K).tau) is not None and t <= n_K)
    freq = hits / R
    assert freq <= 2 * K ** (c - gamma) + 4 * math.sqrt(max(freq, 1 / R) / R)


def test_martingale_differences_have_mean_zero_and_variance_x_sigma2():
    K = 1e4
    cfg = SimConfig(K=K, z0=2000, seed=6)  # start at x = 0.2
    eps, var = [], []
    for r in range(3000):
        tr = decompose_martingale(simulate_path(BH, cfg, r, horizon=1), BH)
        eps.append(tr.eps[0])
        var.append(tr.cond_var[0])
    eps = np.array(eps)
    v = var[0]
    assert v == pytest.approx(0.2 * float(BH.variance(0.2)))
    assert abs(eps.mean()) < 4 * math.sqrt(v / eps.size)
    c = eps - eps.mean()
    se = math.sqrt((np.mean(c ** 4) - eps.var() ** 2) / eps.size)
    assert abs(eps.var() - v) < 4 * se


def test_deterministic_law_has_no_noise():
    cfg = SimConfig(K=2 ** 12, z0=5)
    tr = decompose_martingale(simulate_path(BinarySplit(1, 0), cfg), BinarySplit(1, 0))
    assert np.all(tr.eps == 0) and np.all(tr.cond_var == 0)


def test_resolve_index():
    assert resolve_index("log", 2.0, 1024.0) == 10
    assert resolve_index("log+3", 2.0, 1024.0) == 13
    assert resolve_index("log-1", 2.0, 1024.0) == 9
    assert resolve_index("n_K", 2.0, 1024.0, c=0.6) == 6
    assert resolve_index(4, 2.0, 1024.0) == 4
    assert resolve_index(lambda K: math.sqrt(math.log2(K)), 2.0, 1024.0) == 3
    with pytest.raises(ValueError):
        resolve_index("later", 2.0, 1024.0)


def test_replicate_matches_single_paths():
    cfg = SimConfig(K=1e4, seed=12)
    X = replicate(BH, cfg, 5, "X")
    n = resolve_index("log", 2.0, 1e4)
    for r in range(5):
        assert X[r] == simulate_path(BH, cfg, r, horizon=n).counts[n] / 1e4
    np.testing.assert_array_equal(X, replicate(BH, cfg, 5, "X"))
    W = replicate(BH, cfg, 5, "Z/a^n")
    np.testing.assert_allclose(W, X * 1e4 / 2.0 ** n)


def test_replicate_rejects_index_beyond_n_max():
    with pytest.raises(ValueError, match="n_max"):
        replicate(BH, SimConfig(K=1e4, n_max=5), 3, index="log")


def test_replicate_parallel_matches_serial():
    cfg = SimConfig(K=1e4, seed=3)
    np.testing.assert_array_equal(replicate(BH, cfg, 40, "Z", workers=1),
                                  replicate(BH, cfg, 40, "Z", workers=2))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), z0=st.integers(1, 20), rep=st.integers(0, 1000))
def test_coupled_ordering_property(seed, z0, rep):
    cfg = SimConfig(K=500.0, z0=z0, seed=seed, mode="exact")
    assert simulate_coupled(BS, cfg, rep).sandwich_violations() == 0
