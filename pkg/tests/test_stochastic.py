import itertools
import math

import numpy as np
import pytest

from mncastle import stochastic as st


# ---------------------------------------------------------------------------
# pl_sample


def test_pl_sample_near_deterministic():
    rng = st.stream(0, "pl")
    theta = np.array([100.0, 50.0, 0.0])
    hits = 0
    for _ in range(10_000):
        if np.array_equal(st.pl_sample(theta, rng), [0, 1, 2]):
            hits += 1
    assert hits / 10_000 >= 0.999


def test_pl_sample_exchangeable_uniform():
    rng = st.stream(1, "pl")
    theta = np.zeros(3)
    orders = st.pl_sample_batch(theta, 100_000, rng)
    keys = orders @ np.array([9, 3, 1])
    _, counts = np.unique(keys, return_counts=True)
    assert len(counts) == 6
    p = 1 / 6
    bound = 3 * math.sqrt(p * (1 - p) / 100_000)
    assert np.all(np.abs(counts / 100_000 - p) < bound + 1e-12)


def test_pl_sample_two_node_probability():
    rng = st.stream(2, "pl")
    theta = np.array([1.0, 0.0])
    orders = st.pl_sample_batch(theta, 100_000, rng)
    freq = np.mean(orders[:, 0] == 0)
    assert abs(freq - math.e / (math.e + 1)) < 0.01


# ---------------------------------------------------------------------------
# pl_log_prob


def test_pl_log_prob_uniform():
    theta = np.zeros(3)
    assert abs(st.pl_log_prob(theta, [2, 0, 1]) - math.log(1 / 6)) < 1e-12


def test_pl_log_prob_two_node():
    theta = np.array([1.0, 0.0])
    assert abs(st.pl_log_prob(theta, [0, 1]) - math.log(math.e / (math.e + 1))) < 1e-12


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_pl_log_prob_normalizes(n):
    rng = np.random.default_rng(n)
    theta = rng.standard_normal(n)
    total = sum(math.exp(st.pl_log_prob(theta, list(perm)))
                for perm in itertools.permutations(range(n)))
    assert abs(total - 1.0) < 1e-10


def test_pl_sample_log_prob_consistency():
    rng = st.stream(3, "consistency")
    theta = np.array([0.7, -0.3, 0.1])
    draws = 100_000
    orders = st.pl_sample_batch(theta, draws, rng)
    keys = orders @ np.array([9, 3, 1])
    for perm in itertools.permutations(range(3)):
        p = math.exp(st.pl_log_prob(theta, list(perm)))
        key = perm[0] * 9 + perm[1] * 3 + perm[2]
        freq = np.mean(keys == key)
        assert abs(freq - p) < 3 * math.sqrt(p * (1 - p) / draws) + 1e-9


# ---------------------------------------------------------------------------
# pl_mode


def test_pl_mode_basic():
    assert np.array_equal(st.pl_mode([0.1, 2.0, 1.0]), [1, 2, 0])


def test_pl_mode_tie_break():
    assert np.array_equal(st.pl_mode(np.zeros(4)), [0, 1, 2, 3])


def test_pl_mode_maximizes_log_prob():
    rng = np.random.default_rng(11)
    for n in (2, 3, 4):
        theta = rng.standard_normal(n)
        best = st.pl_log_prob(theta, st.pl_mode(theta))
        for perm in itertools.permutations(range(n)):
            assert best >= st.pl_log_prob(theta, list(perm)) - 1e-12


# ---------------------------------------------------------------------------
# kernels / gram


def test_rbf_diagonal_is_sigma():
    t = np.linspace(0, 5, 7)
    K = st.gram(st.RBF(0.4, 1.3), t)
    assert np.allclose(np.diag(K), 0.4)


def test_rbf_closed_form():
    K = st.gram(st.RBF(0.1, 2.0), np.array([0.0, 2.0]))
    assert abs(K[0, 1] - 0.1 * math.exp(-0.5)) < 1e-14


def test_sum_kernel_linearity():
    t = np.linspace(0, 3, 9)
    k1, k2 = st.RBF(0.5, 1.0), st.Matern32(0.2, 0.7)
    K = st.gram(st.SumKernel((k1, k2)), t)
    assert np.allclose(K, st.gram(k1, t) + st.gram(k2, t))


def test_gram_symmetric_and_choleskyable():
    t = np.linspace(0, 10, 50)
    for expr in ("rbf(1,2)", "periodic(1,2,2)", "linear(1)", "matern32(1,2)",
                 "periodic(1,2,2)+linear(1)*matern32(1,2)"):
        K = st.gram(st.parse_kernel(expr), t + 0.1)
        assert np.max(np.abs(K - K.T)) < 1e-12
        st.cholesky_with_retries(K)


def test_kernel_expr_roundtrip():
    expr = "periodic(1.0,2.0,2.0)+linear(1.0)*matern32(1.0,2.0)"
    k = st.parse_kernel(expr)
    k2 = st.parse_kernel(k.expr())
    t = np.linspace(0, 4, 11)
    assert np.allclose(st.gram(k, t), st.gram(k2, t))


def test_kernel_parse_errors():
    for bad in ("", "rbf(1)", "spectral(1,2)", "rbf(-1,2)", "rbf(1,2)++linear(1)"):
        with pytest.raises(ValueError):
            st.parse_kernel(bad)


# ---------------------------------------------------------------------------
# gp_sample_batched


def test_gp_covariance_monte_carlo():
    rng = st.stream(4, "gp")
    t = np.array([0.0, 0.5, 1.5, 3.0])
    kern = st.RBF(1.0, 1.0)
    paths = st.gp_sample_batched(kern, t, (10_000,), rng)
    emp = np.cov(paths.T, bias=True)
    K = st.gram(kern, t)
    assert np.max(np.abs(emp - K) / np.maximum(np.abs(K), 0.2)) < 0.05


def test_gp_long_lengthscale_constant_limit():
    rng = st.stream(5, "gp")
    t = np.linspace(0, 10, 100)
    paths = st.gp_sample_batched(st.RBF(1.0, 1e5), t, (50,), rng)
    dev = paths - paths[:, :1]
    assert np.std(dev) < 0.01 * 1.0


def test_gp_batch_independence():
    rng = st.stream(6, "gp")
    t = np.linspace(0, 5, 8)
    paths = st.gp_sample_batched(st.RBF(1.0, 1.0), t, (10_000, 2), rng)
    a = paths[:, 0, 3]
    b = paths[:, 1, 3]
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 0.05


def test_gp_requires_increasing_times():
    rng = st.stream(7, "gp")
    with pytest.raises(ValueError):
        st.gp_sample_batched(st.RBF(1, 1), np.array([0.0, 0.0, 1.0]), (2,), rng)


# ---------------------------------------------------------------------------
# streams


def test_stream_determinism_and_separation():
    a1 = st.stream(42, "x").standard_normal(5)
    a2 = st.stream(42, "x").standard_normal(5)
    b = st.stream(42, "y").standard_normal(5)
    c = st.stream(43, "x").standard_normal(5)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)
