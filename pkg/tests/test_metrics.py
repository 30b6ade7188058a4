import numpy as np
import pytest

from hybridbf import metrics
from oracles import crandn, weighted_mse


def test_scalar_mmse_receiver():
    P, N0 = 2.0, 0.5
    M = metrics.mmse_receiver(np.array([[1.0]]), np.array([[np.sqrt(P)]]), N0)
    assert M[0, 0] == pytest.approx(np.sqrt(P) / (P + N0), rel=1e-14)


def test_zero_precoder_gives_zero_receiver():
    assert np.all(metrics.mmse_receiver(np.ones((3, 4)), np.zeros((4, 2)), 1.0) == 0)
    assert np.all(metrics.mu_mmse_receiver(np.ones((2, 4)), np.zeros((4, 2)), 1.0) == 0)


def test_mmse_receiver_is_locally_optimal():
    rng = np.random.default_rng(0)
    H, V = crandn(rng, 2, 2), crandn(rng, 2, 2)
    w = np.array([1.3, 0.7])
    N0 = 0.4
    M = metrics.mmse_receiver(H, V, N0)
    base = weighted_mse(H, V, M, w, N0)
    for _ in range(100):
        d = 1e-3 * crandn(rng, 2, 2)
        assert weighted_mse(H, V, M + d, w, N0) >= base - 1e-12


def test_noise_power_must_be_positive():
    with pytest.raises(ValueError):
        metrics.mmse_receiver(np.eye(2), np.eye(2), 0.0)


def test_sinr_equals_inverse_mse_minus_one():
    rng = np.random.default_rng(1)
    for _ in range(20):
        H, V = crandn(rng, 4, 6), crandn(rng, 6, 3)
        M = metrics.mmse_receiver(H, V, 0.3)
        e = np.real(np.diag(metrics.su_error_matrix(H, V, M, 0.3)))
        np.testing.assert_allclose(metrics.su_stream_sinr(H, V, 0.3), 1 / e - 1, rtol=1e-9)


def test_sinr_with_given_combiner_is_scale_invariant():
    rng = np.random.default_rng(2)
    H, V, M = crandn(rng, 3, 4), crandn(rng, 4, 2), crandn(rng, 3, 2)
    s1 = metrics.su_stream_sinr(H, V, 1.0, M)
    s2 = metrics.su_stream_sinr(H, V, 1.0, M * np.array([3.0, 0.1j]))
    np.testing.assert_allclose(s1, s2, rtol=1e-12)
    # the MMSE combiner achieves the rate-optimal SINR
    np.testing.assert_allclose(metrics.su_stream_sinr(H, V, 1.0, metrics.mmse_receiver(H, V, 1.0)),
                               metrics.su_stream_sinr(H, V, 1.0), rtol=1e-9)


def test_logdet_equals_stream_sum_when_streams_orthogonal():
    rng = np.random.default_rng(3)
    H = crandn(rng, 4, 8)
    _, s, Vh = np.linalg.svd(H)
    V = Vh.conj().T[:, :3] * np.array([0.5, 0.3, 0.2])
    assert metrics.su_sum_rate(H, V, 0.2) == pytest.approx(metrics.su_logdet_rate(H, V, 0.2), abs=1e-9)


def test_logdet_upper_bounds_stream_sum():
    rng = np.random.default_rng(4)
    for _ in range(50):
        H, V = crandn(rng, 4, 8), crandn(rng, 8, 3)
        assert metrics.su_sum_rate(H, V, 0.5) <= metrics.su_logdet_rate(H, V, 0.5) + 1e-12


def test_mu_rate_equals_log_inverse_mse():
    rng = np.random.default_rng(5)
    for _ in range(20):
        Hu, V = crandn(rng, 3, 6), crandn(rng, 6, 3)
        m = metrics.mu_mmse_receiver(Hu, V, 0.7)
        e = metrics.mu_user_errors(Hu, V, m, 0.7)
        np.testing.assert_allclose(metrics.mu_user_rates(Hu, V, 0.7), np.log2(1 / e), rtol=1e-10)


def test_mu_scalar_receiver_formula():
    g, p, N0 = 0.8 - 0.6j, 2.0, 0.5
    m = metrics.mu_mmse_receiver(np.array([[g]]), np.array([[np.sqrt(p)]]), N0)
    assert m[0] == pytest.approx(np.sqrt(p) * np.conj(g) / (p * abs(g) ** 2 + N0), rel=1e-14)


def test_mu_receiver_locally_optimal():
    rng = np.random.default_rng(6)
    Hu, V = crandn(rng, 3, 4), crandn(rng, 4, 3)
    m = metrics.mu_mmse_receiver(Hu, V, 0.2)
    e = metrics.mu_user_errors(Hu, V, m, 0.2)
    for _ in range(100):
        d = 1e-3 * crandn(rng, 3)
        assert np.all(metrics.mu_user_errors(Hu, V, m + d, 0.2) >= e - 1e-12)


def test_weights_floor():
    np.testing.assert_allclose(metrics.weights_from_errors([0.5, 0.0, -1.0], 1e-6), [2.0, 1e6, 1e6])
