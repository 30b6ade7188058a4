import numpy as np
import pytest

from hybridbf import metrics, su
from hybridbf.channel import generate_geometric_channel
from hybridbf.core import PartitionSpec, stacked_precoder
from hybridbf.solver import SolverConfig
from oracles import crandn, fd_gradient, stack, tiny_su, waterfill_bisect, weighted_mse

N0 = 0.5
TINY = PartitionSpec(4, 2, 2)


def _mw(H, V):
    M = metrics.mmse_receiver(H, V, N0)
    e = np.real(np.diag(metrics.su_error_matrix(H, V, M, N0)))
    return M, 1.0 / e


def _feasible(a, D, P):
    V = stack(a, D)
    return D * np.sqrt(P / np.sum(np.abs(V) ** 2))


# -- digital update ---------------------------------------------------------------


@pytest.mark.parametrize("P", [0.05, 1.0, 100.0])
def test_digital_update_stationary(P):
    for seed in range(5):
        _, H, a, D = tiny_su(seed)
        M, w = _mw(H, stack(a, D))
        Dn, alpha = su.fa_update_digital(H, TINY, a, M, w, P)

        def lag(X):
            V = stack(a, X)
            return weighted_mse(H, V, M, w, N0) + alpha * (np.sum(np.abs(V) ** 2) - P)

        assert np.linalg.norm(fd_gradient(lag, Dn)) < 1e-6


def test_digital_update_power_and_descent():
    rng = np.random.default_rng(10)
    for seed in range(100):
        _, H, a, D = tiny_su(seed)
        P = float(rng.uniform(0.1, 3.0))
        D = _feasible(a, D, P)
        M, w = _mw(H, stack(a, D))
        Dn, alpha = su.fa_update_digital(H, TINY, a, M, w, P)
        power = np.sum(np.abs(stack(a, Dn)) ** 2)
        assert power <= P * (1 + 1e-6)
        if alpha > 0:
            assert power == pytest.approx(P, rel=1e-6)
        assert weighted_mse(H, stack(a, Dn), M, w, N0) <= weighted_mse(H, stack(a, D), M, w, N0) + 1e-8


def test_digital_update_unconstrained_fully_digital():
    _, H, _, D = tiny_su(3, nt=2, na=2, nr=2, ns=2)
    a = np.ones((2, 1), dtype=complex)
    M, w = _mw(H, D)
    Dn, alpha = su.fa_update_digital(H, PartitionSpec(2, 2, 2), a, M, w, 1e9)
    assert alpha == 0.0
    W = np.diag(w)
    ref = np.linalg.solve(H.conj().T @ M @ W @ M.conj().T @ H, H.conj().T @ M @ W)
    np.testing.assert_allclose(Dn, ref, rtol=1e-9, atol=1e-12)


# -- analog updates ---------------------------------------------------------------


@pytest.mark.parametrize("P", [0.05, 1.0, 100.0])
def test_full_analog_update_stationary(P):
    for seed in range(5):
        _, H, a, D = tiny_su(seed)
        M, w = _mw(H, stack(a, D))
        an, alpha, skipped = su.fa_update_analog(H, TINY, a, D, M, w, P)
        assert not skipped.any()

        def lag(x):
            V = stack(x, D)
            return weighted_mse(H, V, M, w, N0) + alpha * (np.sum(np.abs(V) ** 2) - P)

        assert np.linalg.norm(fd_gradient(lag, an)) < 1e-6


def test_full_analog_update_power_and_descent():
    rng = np.random.default_rng(11)
    for seed in range(100):
        _, H, a, D = tiny_su(seed)
        P = float(rng.uniform(0.1, 3.0))
        D = _feasible(a, D, P)
        M, w = _mw(H, stack(a, D))
        an, alpha, _ = su.fa_update_analog(H, TINY, a, D, M, w, P)
        assert np.sum(np.abs(stack(an, D)) ** 2) <= P * (1 + 1e-6)
        assert weighted_mse(H, stack(an, D), M, w, N0) <= weighted_mse(H, stack(a, D), M, w, N0) + 1e-8


def test_full_analog_reduces_to_subarray_formula():
    rng = np.random.default_rng(12)
    H = crandn(rng, 3, 5)
    a = crandn(rng, 1, 5)
    M, w = _mw(H, a.T)
    part = PartitionSpec(5, 1, 1)
    af, alpha_f, _ = su.fa_update_analog(H, part, a, np.ones((1, 1)), M, w, 0.3)
    asub, alpha_s = su.sa_update_analog(H, part, a, M, w, 0.3)
    np.testing.assert_allclose(af, asub, rtol=1e-9)
    ref = np.linalg.solve(H.conj().T @ M * w @ M.conj().T @ H + alpha_s * np.eye(5), H.conj().T @ M[:, 0] * w[0])
    np.testing.assert_allclose(asub[0], ref, rtol=1e-9)


def test_zero_digital_row_freezes_subarray():
    _, H, a, D = tiny_su(4)
    D[1] = 0
    M, w = _mw(H, stack(a, D))
    an, _, skipped = su.fa_update_analog(H, TINY, a, D, M, w, 1.0)
    assert skipped.tolist() == [False, True]
    np.testing.assert_array_equal(an[1], a[1])


@pytest.mark.parametrize("P", [0.05, 1.0, 100.0])
def test_subarray_analog_update_stationary(P):
    eye = np.eye(2)
    for seed in range(5):
        _, H, a, _ = tiny_su(seed)
        M, w = _mw(H, stack(a, eye))
        an, alpha = su.sa_update_analog(H, TINY, a, M, w, P)

        def lag(x):
            return weighted_mse(H, stack(x, eye), M, w, N0) + alpha * (np.sum(np.abs(x) ** 2) - P)

        assert np.linalg.norm(fd_gradient(lag, an)) < 1e-6


def test_subarray_update_unconstrained_when_budget_huge():
    _, H, a, _ = tiny_su(5)
    M, w = _mw(H, stack(a, np.eye(2)))
    an, alpha = su.sa_update_analog(H, TINY, a, M, w, 1e9)
    assert alpha == 0.0
    for j in range(2):
        Hj = H[:, 2 * j:2 * j + 2]
        ref = np.linalg.solve(Hj.conj().T @ M @ np.diag(w) @ M.conj().T @ Hj, Hj.conj().T @ M[:, j] * w[j])
        np.testing.assert_allclose(an[j], ref, rtol=1e-8)


# -- WMMSE solvers ---------------------------------------------------------------


@pytest.fixture(scope="module")
def channels():
    return [generate_geometric_channel(s, 16, 4).matrix for s in range(8)]


@pytest.mark.parametrize("solver", [su.solve_fa_wmmse, su.solve_sa_wmmse])
def test_wmmse_monotone_feasible(channels, solver):
    cfg = SolverConfig.from_snr(5.0)
    part = PartitionSpec(16, 4, 4)
    for H in channels:
        out = solver(H, part, cfg)
        assert np.all(np.diff(out.trace) >= -1e-6)
        assert out.power <= cfg.power * (1 + 1e-6)
        assert len(out.trace) == out.iterations <= cfg.max_iters
        assert out.sum_rate == pytest.approx(out.trace[-1], rel=1e-12)
        assert out.sum_rate <= su.digital_svd_baseline(H, cfg.power, cfg.noise_power, 4).sum_rate + 1e-9


def test_subarray_solution_keeps_block_structure(channels):
    out = su.solve_sa_wmmse(channels[0], PartitionSpec(16, 4, 4), SolverConfig.from_snr(5.0))
    V = out.precoder
    for i in range(4):
        mask = np.ones(16, bool)
        mask[4 * i:4 * i + 4] = False
        assert np.all(V[mask, i] == 0)


def test_non_convergence_is_reported_not_raised(channels):
    out = su.solve_fa_wmmse(channels[0], PartitionSpec(16, 4, 4), SolverConfig.from_snr(5.0, max_iters=2, rel_tol=1e-12))
    assert out.iterations == 2 and not out.converged


def test_solver_preconditions():
    cfg = SolverConfig()
    with pytest.raises(ValueError):
        su.solve_fa_wmmse(np.ones((2, 8)), PartitionSpec(8, 4, 3), cfg)
    with pytest.raises(ValueError):
        su.solve_sa_wmmse(np.ones((4, 8)), PartitionSpec(8, 4, 2), cfg)


def test_n1_hybrid_equals_digital(channels):
    cfg = SolverConfig.from_snr(5.0)
    for H in channels[:4]:
        hyb = su.solve_fa_wmmse(H, PartitionSpec(16, 16, 4), cfg).sum_rate
        dig = su.digital_su_wmmse(H, 4, cfg).sum_rate
        assert hyb == pytest.approx(dig, rel=1e-3)


@pytest.mark.parametrize("solver", [su.solve_fa_wmmse, su.solve_sa_wmmse])
def test_single_rf_chain_matches_dominant_mode(channels, solver):
    cfg = SolverConfig.from_snr(5.0)
    for H in channels[:4]:
        ref = su.analog_single_stream(H, cfg.power, cfg.noise_power).sum_rate
        assert solver(H, PartitionSpec(16, 1, 1), cfg).sum_rate == pytest.approx(ref, rel=1e-3)


# -- transmit-receive ZF ------------------------------------------------------------


def test_txrx_zf_nulls_interference(channels):
    cfg = SolverConfig.from_snr(5.0)
    part = PartitionSpec(16, 4, 4)
    for H in channels:
        out = su.txrx_zf(H, part, cfg)
        assert not out.failed
        C = np.abs(out.combiner.conj().T @ H @ out.precoder)
        on = out.info["powers"] > 0
        d = np.diag(C)
        off = C - np.diag(d)
        assert np.all(off[on][:, on] < 1e-9 * d[on][:, None])
        assert out.power == pytest.approx(cfg.power, rel=1e-12)


def test_zf_combiner_step_diagonalizes_before_normalization(channels):
    part = PartitionSpec(16, 4, 4)
    H = channels[1]
    M = np.linalg.svd(H)[0][:, :4]
    for _ in range(3):
        Vbar = stacked_precoder(su.zf_subarray_precoder(H, part, M), np.eye(4))
        M = su.zf_combiner(H, Vbar)
        T = np.abs(M.conj().T @ H @ Vbar)
        assert np.max(T - np.diag(np.diag(T))) < 1e-9
        M = M / np.linalg.norm(M, axis=0)


def test_txrx_zf_scalar_case():
    h = 0.6 - 0.8j
    out = su.txrx_zf(np.array([[h * 2]]), PartitionSpec(1, 1, 1), SolverConfig(power=2.0, noise_power=0.5))
    assert out.sum_rate == pytest.approx(np.log2(1 + 2.0 * 4 / 0.5), rel=1e-12)
    assert abs(out.info["unit_precoder"][0, 0]) == pytest.approx(1.0)


def test_txrx_zf_rank_deficient_flags_failure():
    H = np.ones((2, 4), dtype=complex)
    out = su.txrx_zf(H, PartitionSpec(4, 2, 2), SolverConfig())
    assert out.failed and np.isnan(out.sum_rate)
    assert "rank deficient" in out.message


def test_txrx_zf_preconditions():
    with pytest.raises(ValueError, match="ns == na"):
        su.txrx_zf(np.ones((4, 8)), PartitionSpec(8, 4, 2), SolverConfig())
    with pytest.raises(ValueError, match="n >= ns"):
        su.txrx_zf(np.ones((4, 4)), PartitionSpec(4, 4, 4), SolverConfig())


# -- waterfilling and baselines ---------------------------------------------------------


@pytest.mark.parametrize(
    "gains,P,expect",
    [([1, 1], 2.0, [1, 1]), ([2, 1], 1.0, [0.75, 0.25]), ([10, 1e-9], 0.5, [0.5, 0])],
)
def test_waterfill_examples(gains, P, expect):
    np.testing.assert_allclose(su.waterfill(gains, P, 1.0), expect, atol=1e-12)


def test_waterfill_matches_bisection_oracle():
    rng = np.random.default_rng(13)
    for _ in range(200):
        g = rng.exponential(size=rng.integers(1, 8))
        P, n0 = rng.uniform(0.1, 5), rng.uniform(0.1, 2)
        ref, _ = waterfill_bisect(g, P, n0)
        np.testing.assert_allclose(su.waterfill(g, P, n0), ref, atol=1e-9)


def test_waterfill_zero_gain_and_errors():
    np.testing.assert_allclose(su.waterfill([0.0, 1.0], 1.0, 1.0), [0.0, 1.0])
    with pytest.raises(ValueError):
        su.waterfill([0.0, 0.0], 1.0, 1.0)
    with pytest.raises(ValueError):
        su.waterfill([-1.0], 1.0, 1.0)


def test_svd_baseline_identity():
    assert su.digital_svd_baseline(np.eye(2), 2.0, 1.0, 2).sum_rate == pytest.approx(2.0, abs=1e-12)


def test_svd_baseline_rank_one_uses_one_stream():
    rng = np.random.default_rng(14)
    H = np.outer(crandn(rng, 3), crandn(rng, 4))
    multi = su.digital_svd_baseline(H, 1.0, 0.3, 2)
    assert multi.info["powers"][1] == 0.0
    assert multi.sum_rate == pytest.approx(su.analog_single_stream(H, 1.0, 0.3).sum_rate, rel=1e-12)


def test_svd_baseline_is_capacity():
    rng = np.random.default_rng(15)
    for _ in range(20):
        H = crandn(rng, 4, 6)
        out = su.digital_svd_baseline(H, 1.0, 0.5, 4)
        assert out.sum_rate == pytest.approx(metrics.su_logdet_rate(H, out.precoder, 0.5), rel=1e-10)
