"""Rates, SINRs, MSEs and WMMSE weights.

Conventions: ``H`` is the ``(nr, nt)`` channel, ``V`` the ``(nt, ns)``
overall precoder, ``M`` the ``(nr, ns)`` receive combiner applied as
``M^H y``. In the multi-user case the rows of ``Hu`` are ``h_k^H`` and the
scalar receiver ``m_k`` is applied as ``m_k y_k``. Rates are in bits/s/Hz.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "E_FLOOR",
    "mmse_receiver",
    "mu_mmse_receiver",
    "su_error_matrix",
    "mu_user_errors",
    "su_stream_sinr",
    "su_stream_rates",
    "su_sum_rate",
    "su_logdet_rate",
    "mu_user_sinr",
    "mu_user_rates",
    "weights_from_errors",
]

E_FLOOR = 1e-12


def _check_noise(N0: float) -> None:
    if not N0 > 0:
        raise ValueError(f"noise power must be positive, got {N0}")


def mmse_receiver(H: np.ndarray, V: np.ndarray, N0: float) -> np.ndarray:
    """Joint MMSE combiner ``(H V V^H H^H + N0 I)^{-1} H V``."""
    _check_noise(N0)
    HV = H @ V
    R = HV @ HV.conj().T + N0 * np.eye(H.shape[0])
    return np.linalg.solve(R, HV)


def mu_mmse_receiver(Hu: np.ndarray, V: np.ndarray, N0: float) -> np.ndarray:
    """Per-user MMSE scalars ``m_k = (h_k^H v_k)^* / (sum_l |h_k^H v_l|^2 + N0)``."""
    _check_noise(N0)
    G = Hu @ V
    total = np.sum(np.abs(G) ** 2, axis=1) + N0
    return np.conj(np.diag(G)) / total


def su_error_matrix(H: np.ndarray, V: np.ndarray, M: np.ndarray, N0: float) -> np.ndarray:
    """MSE matrix ``E = E[(s - M^H y)(s - M^H y)^H]`` for unit-power symbols."""
    MHV = M.conj().T @ (H @ V)
    ns = V.shape[1]
    return np.eye(ns) - MHV - MHV.conj().T + N0 * (M.conj().T @ M) + MHV @ MHV.conj().T


def mu_user_errors(Hu: np.ndarray, V: np.ndarray, m: np.ndarray, N0: float) -> np.ndarray:
    """Per-user MSE ``e_k`` for scalar receivers ``m`` (real, length Nu)."""
    G = Hu @ V
    sig = m * np.diag(G)
    total = np.sum(np.abs(G) ** 2, axis=1) + N0
    return np.real(1.0 - 2.0 * sig.real + np.abs(m) ** 2 * total)


def su_stream_sinr(H: np.ndarray, V: np.ndarray, N0: float, M: np.ndarray | None = None) -> np.ndarray:
    """Per-stream SINR.

    With ``M=None`` the rate-optimal (MMSE) receiver is assumed, i.e.
    ``v_i^H H^H (sum_{l != i} H v_l v_l^H H^H + N0 I)^{-1} H v_i``. With a
    given combiner the noise is scaled by ``||m_i||^2`` so the result is
    invariant to rescaling any column of ``M``.
    """
    _check_noise(N0)
    HV = H @ V
    ns = HV.shape[1]
    if M is not None:
        C = M.conj().T @ HV
        p = np.abs(C) ** 2
        sig = np.diag(p).copy()
        interf = p.sum(axis=1) - sig
        noise = N0 * np.sum(np.abs(M) ** 2, axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            sinr = np.where(sig > 0, sig / (noise + interf), 0.0)
        return sinr
    R = HV @ HV.conj().T + N0 * np.eye(H.shape[0])
    sinr = np.empty(ns)
    for i in range(ns):
        h = HV[:, i]
        Ri = R - np.outer(h, h.conj())
        sinr[i] = np.real(h.conj() @ np.linalg.solve(Ri, h))
    return np.maximum(sinr, 0.0)


def su_stream_rates(H: np.ndarray, V: np.ndarray, N0: float, M: np.ndarray | None = None) -> np.ndarray:
    return np.log2(1.0 + su_stream_sinr(H, V, N0, M))


def su_sum_rate(H: np.ndarray, V: np.ndarray, N0: float, M: np.ndarray | None = None) -> float:
    return float(np.sum(su_stream_rates(H, V, N0, M)))


def su_logdet_rate(H: np.ndarray, V: np.ndarray, N0: float) -> float:
    """``log2 det(I + H V V^H H^H / N0)`` (joint-decoding rate)."""
    _check_noise(N0)
    HV = H @ V
    G = np.eye(V.shape[1]) + (HV.conj().T @ HV) / N0
    sign, logdet = np.linalg.slogdet(G)
    return float(logdet / np.log(2.0))


def mu_user_sinr(Hu: np.ndarray, V: np.ndarray, N0: float) -> np.ndarray:
    """``|h_k^H v_k|^2 / (N0 + sum_{l != k} |h_k^H v_l|^2)``; the scalar receiver cancels."""
    _check_noise(N0)
    p = np.abs(Hu @ V) ** 2
    sig = np.diag(p).copy()
    return sig / (N0 + p.sum(axis=1) - sig)


def mu_user_rates(Hu: np.ndarray, V: np.ndarray, N0: float) -> np.ndarray:
    return np.log2(1.0 + mu_user_sinr(Hu, V, N0))


def weights_from_errors(errors, floor: float = E_FLOOR) -> np.ndarray:
    """WMMSE weights ``w_i = 1 / max(e_i, floor)``."""
    e = np.real(np.asarray(errors))
    return 1.0 / np.maximum(e, floor)
