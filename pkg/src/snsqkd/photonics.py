"""Closed-form detection model for the relay's two threshold detectors.

The relay interferes the two arriving pulses on a 50:50 beamsplitter. For
coherent inputs the detector intensities are

    I_L = (I_A + I_B + 2 v sqrt(I_A I_B) cos(delta)) / 2
    I_R = (I_A + I_B - 2 v sqrt(I_A I_B) cos(delta)) / 2

with visibility ``v = 1 - 2 e_a``; this is the intensity-mixing misalignment
model I_L' = (1 - e_a) I_L + e_a I_R. Each detector fires with probability
``1 - (1 - p_dark) exp(-I)`` and the two detectors are independent.

Everything below is written as a normally ordered Gaussian kernel,
``<u| :exp(-a^dag K a): |w> = <u|w> exp(-u^dag K w)`` with a 2x2 coupling
matrix ``K`` per detector, which covers both coherent products and the
virtual superposition states |chi+->.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import (
    ChannelParams,
    ConfigError,
    PhaseMode,
    ProtocolParams,
    WindowClass,
    arm_transmittances,
)

DEFAULT_NODES = 1024


@dataclass(frozen=True)
class ClickDistribution:
    p_l_only: float
    p_r_only: float
    p_both: float
    p_none: float

    @property
    def total(self) -> float:
        return self.p_l_only + self.p_r_only + self.p_both + self.p_none


def coupling_matrices(eta_a: float, eta_b: float, e_a: float) -> tuple[np.ndarray, np.ndarray]:
    """Kernels ``K_L``, ``K_R`` acting on the sender-side amplitudes (A, B).

    ``K_L + K_R = diag(eta_a, eta_b)``: every photon reaching the relay lands on
    one of the two detectors.
    """
    v = 1.0 - 2.0 * e_a
    cross = v * math.sqrt(eta_a * eta_b) / 2
    k_l = np.array([[eta_a / 2, cross], [cross, eta_b / 2]])
    k_r = np.array([[eta_a / 2, -cross], [-cross, eta_b / 2]])
    return k_l, k_r


def _quad(k: np.ndarray, u: tuple, w: tuple):
    """u^dag K w for broadcastable amplitude pairs u = (u_A, u_B)."""
    return (
        np.conj(u[0]) * (k[0, 0] * w[0] + k[0, 1] * w[1])
        + np.conj(u[1]) * (k[1, 0] * w[0] + k[1, 1] * w[1])
    )


def _no_click(k: np.ndarray, window_class: WindowClass, mu, delta):
    """Probability that no photon is registered by the detector(s) in ``k``.

    Dark counts are not included here.
    """
    mu = np.asarray(mu, dtype=float)
    delta = np.asarray(delta, dtype=float)
    amp = np.sqrt(mu)
    amp_a = amp + 0j
    amp_b = amp * np.exp(1j * delta)
    zero = np.zeros(np.broadcast(amp_a, amp_b).shape, dtype=complex)
    if not window_class.is_virtual:
        send_a = window_class in (WindowClass.ZTILDE_A, WindowClass.BOTH)
        send_b = window_class in (WindowClass.ZTILDE_B, WindowClass.BOTH)
        v = (amp_a if send_a else zero, amp_b if send_b else zero)
        return np.exp(-np.real(_quad(k, v, v)))
    # |chi+-> = (|0, a_B> +- |a_A, 0>) / N
    sign = 1.0 if window_class is WindowClass.XPLUS else -1.0
    v1 = (zero, amp_b)
    v2 = (amp_a, zero)
    # Written as g - 1 terms via expm1: for |chi-> at small mu the O(1) parts
    # cancel exactly instead of leaving rounding noise over a tiny norm.
    d11 = np.expm1(-np.real(_quad(k, v1, v1)))
    d22 = np.expm1(-np.real(_quad(k, v2, v2)))
    z = -mu - _quad(k, v1, v2)  # log of <v1|v2> exp(-v1^dag K v2); the overlap is e^-mu
    d12 = np.expm1(np.real(z)) * np.cos(np.imag(z)) - 2 * np.sin(np.imag(z) / 2) ** 2
    if sign > 0:
        return (4 + d11 + d22 + 2 * d12) / (2 * (1 + np.exp(-mu)))
    return (d11 + d22 - 2 * d12) / (-2 * np.expm1(-mu))


def joint_outcomes(window_class: WindowClass, mu, delta, eta_a: float, eta_b: float, e_a: float, p_dark: float):
    """Arrays (p_l_only, p_r_only, p_both, p_none), broadcast over mu and delta."""
    k_l, k_r = coupling_matrices(eta_a, eta_b, e_a)
    keep = 1.0 - p_dark
    no_l = keep * _no_click(k_l, window_class, mu, delta)
    no_r = keep * _no_click(k_r, window_class, mu, delta)
    none = keep * keep * _no_click(k_l + k_r, window_class, mu, delta)
    l_only = no_r - none
    r_only = no_l - none
    both = 1.0 - no_l - no_r + none
    return l_only, r_only, both, none


def detector_intensities(i_a, i_b, delta, e_a: float):
    """Mean photon numbers reaching the left and right detectors."""
    v = 1.0 - 2.0 * e_a
    cross = v * np.sqrt(np.asarray(i_a) * np.asarray(i_b)) * np.cos(delta)
    total = np.asarray(i_a) + np.asarray(i_b)
    return (total + 2 * cross) / 2, (total - 2 * cross) / 2


def click_probabilities(i_l, i_r, p_dark: float):
    """Single-detector click probabilities for the given detector intensities."""
    keep = 1.0 - p_dark
    return 1.0 - keep * np.exp(-np.asarray(i_l)), 1.0 - keep * np.exp(-np.asarray(i_r))


def click_distribution(
    window_class: WindowClass, delta: float, params: ProtocolParams, ch: ChannelParams
) -> ClickDistribution:
    """Joint outcome distribution of the two detectors for one window.

    ``delta`` is the residual phase gamma_B - gamma_A after compensation.
    """
    eta_a, eta_b = arm_transmittances(ch)
    out = joint_outcomes(window_class, params.mu, delta, eta_a, eta_b, ch.e_a, ch.p_dark)
    return ClickDistribution(*(float(x) for x in out))


def acceptance_half_width(lambda_ps):
    """Half-width theta of each accepted phase lobe, |delta| <= theta mod pi."""
    return np.arccos(1.0 - np.asarray(lambda_ps, dtype=float))


def acceptance_fraction(lambda_ps):
    """Fraction of uniformly random phase differences passing post-selection."""
    return 2.0 * acceptance_half_width(lambda_ps) / math.pi


def accepted(delta, lambda_ps):
    """Post-selection rule 1 - |cos(delta)| <= |lambda|."""
    return 1.0 - np.abs(np.cos(delta)) <= abs(lambda_ps)


def _as_classes(window_class: WindowClass | Iterable[WindowClass]) -> tuple[WindowClass, ...]:
    if isinstance(window_class, WindowClass):
        return (window_class,)
    return tuple(window_class)


def effective_rates_grid(
    window_class: WindowClass | Iterable[WindowClass],
    mu,
    ch: ChannelParams,
    phase_mode: PhaseMode = PhaseMode.COMPENSATION,
    lambda_ps=None,
    *,
    nodes: int = DEFAULT_NODES,
    relabel: bool = True,
):
    """Vectorized effective rates (S_L, S_R) over broadcastable ``mu``/``lambda_ps``.

    A tuple of classes is averaged with equal weights, which is how the merged
    Z-tilde class is formed from its two single-sender halves.
    """
    classes = _as_classes(window_class)
    eta_a, eta_b = arm_transmittances(ch)
    mu = np.asarray(mu, dtype=float)
    s_l = s_r = 0.0
    if PhaseMode(phase_mode) is PhaseMode.COMPENSATION:
        for c in classes:
            l_only, r_only, _, _ = joint_outcomes(c, mu, 0.0, eta_a, eta_b, ch.e_a, ch.p_dark)
            s_l = s_l + l_only
            s_r = s_r + r_only
        return s_l / len(classes), s_r / len(classes)

    if lambda_ps is None:
        raise ConfigError("post-selection needs lambda_ps", field="lambda_ps")
    lam = np.asarray(lambda_ps, dtype=float)
    if np.any(lam <= 0):
        raise ConfigError("lambda_ps = 0 accepts a measure-zero set of phases", field="lambda_ps")
    theta = acceptance_half_width(lam)[..., None]
    x, w = np.polynomial.legendre.leggauss(nodes)
    mu_b = mu[..., None]
    # Near delta = pi the detectors swap roles; relabeling folds that lobe onto delta ~ 0.
    for c in classes:
        lobe0 = joint_outcomes(c, mu_b, theta * x, eta_a, eta_b, ch.e_a, ch.p_dark)
        lobe1 = joint_outcomes(c, mu_b, math.pi + theta * x, eta_a, eta_b, ch.e_a, ch.p_dark)
        l1, r1 = (lobe1[1], lobe1[0]) if relabel else (lobe1[0], lobe1[1])
        s_l = s_l + 0.25 * np.sum(w * (lobe0[0] + l1), axis=-1)
        s_r = s_r + 0.25 * np.sum(w * (lobe0[1] + r1), axis=-1)
    return s_l / len(classes), s_r / len(classes)


def effective_rates(
    window_class: WindowClass | Iterable[WindowClass],
    params: ProtocolParams,
    ch: ChannelParams,
    phase_mode: PhaseMode | None = None,
    *,
    nodes: int = DEFAULT_NODES,
    relabel: bool = True,
) -> tuple[float, float]:
    """Effective-event rates (S_L, S_R) for a window class.

    In post-selection mode the rates are averaged over the accepted phase
    differences, with detectors relabeled for cos(delta) < 0 when ``relabel``.
    """
    mode = PhaseMode(phase_mode or params.phase_mode)
    s_l, s_r = effective_rates_grid(
        window_class, params.mu, ch, mode, params.lambda_ps, nodes=nodes, relabel=relabel
    )
    return float(s_l), float(s_r)
