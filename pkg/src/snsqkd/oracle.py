"""Brute-force checks in a truncated two-mode Fock space.

States live in the box basis |n_A, n_B>, 0 <= n_A, n_B <= cutoff, flattened
as ``n_A * (cutoff + 1) + n_B``. Detector effects are built from scratch:
the beamsplitter, misalignment and loss enter through a 2x2 coupling matrix
``K`` per detector, and the no-click effect ``:exp(-a^dag K a):`` is the
second quantization of ``I - K``, assembled sector by sector in total photon
number. Nothing here reuses the closed-form click formulas of
``photonics``, so agreement between the two is a real check.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.linalg import expm, logm
from scipy.special import gammainc, gammaln

from .estimator import (
    analytic_yields,
    chi_plus_coefficients,
    estimate_bounds,
    s_xplus_bounds,
)
from .model import (
    ChannelParams,
    PhaseMode,
    ProtocolParams,
    UndefinedRateError,
    arm_transmittances,
)
from .photonics import acceptance_half_width, coupling_matrices

DEFAULT_CUTOFF = 40
TAIL_TOL = 1e-12


class TruncationError(ValueError):
    """The Fock cutoff cannot represent a state to the required accuracy."""


@dataclass
class FockState:
    cutoff: int
    amplitudes: np.ndarray
    tail_mass: float = 0.0

    @property
    def modes(self) -> int:
        return 1 if len(self.amplitudes) == self.cutoff + 1 else 2

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self, other: "FockState") -> "FockState":
        if self.modes != 1 or other.modes != 1 or self.cutoff != other.cutoff:
            raise ValueError("tensor product needs two single-mode states with equal cutoff")
        tail = 1 - (1 - self.tail_mass) * (1 - other.tail_mass)
        return FockState(self.cutoff, np.kron(self.amplitudes, other.amplitudes), tail)

    def inner(self, other: "FockState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def __add__(self, other: "FockState") -> "FockState":
        return FockState(self.cutoff, self.amplitudes + other.amplitudes, self.tail_mass + other.tail_mass)

    def __sub__(self, other: "FockState") -> "FockState":
        return FockState(self.cutoff, self.amplitudes - other.amplitudes, self.tail_mass + other.tail_mass)

    def scaled(self, c: complex) -> "FockState":
        return FockState(self.cutoff, c * self.amplitudes, self.tail_mass)

    def normalized(self) -> "FockState":
        return self.scaled(1 / self.norm)


def poisson_tail(mean: float, cutoff: int) -> float:
    """P(n > cutoff) for a Poisson distribution."""
    if mean == 0:
        return 0.0
    return float(gammainc(cutoff + 1, mean))


def _coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    n = np.arange(cutoff + 1)
    r = abs(alpha)
    if r == 0:
        amp = np.zeros(cutoff + 1, dtype=complex)
        amp[0] = 1.0
        return amp
    logmag = -r * r / 2 + n * math.log(r) - gammaln(n + 1) / 2
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def coherent(alpha: complex, cutoff: int = DEFAULT_CUTOFF, *, tol: float = TAIL_TOL) -> FockState:
    """Truncated single-mode coherent state (not renormalized).

    Raises ``TruncationError`` when the discarded Poisson tail exceeds ``tol``.
    """
    mean = abs(alpha) ** 2
    tail = poisson_tail(mean, cutoff)
    if tail > tol:
        raise TruncationError(
            f"cutoff {cutoff} too small for |alpha|^2 = {mean:g}: tail mass {tail:.3g} > {tol:g}"
        )
    if mean > cutoff / 4:
        warnings.warn(f"cutoff {cutoff} is tight for |alpha|^2 = {mean:g}", RuntimeWarning, stacklevel=2)
    return FockState(cutoff, _coherent_amplitudes(alpha, cutoff), tail)


def vacuum(cutoff: int = DEFAULT_CUTOFF, modes: int = 1) -> FockState:
    amp = np.zeros((cutoff + 1) ** modes, dtype=complex)
    amp[0] = 1.0
    return FockState(cutoff, amp)


def vacuum_removed(alpha: complex, cutoff: int = DEFAULT_CUTOFF, *, tol: float = TAIL_TOL) -> FockState:
    """|a~> with sqrt(1 - e^-mu)|a~> = |a> - e^-mu/2 |0>, built componentwise.

    The vacuum component is exactly zero, which avoids the cancellation of
    the subtraction at small ``mu``.
    """
    mean = abs(alpha) ** 2
    if mean == 0:
        raise ValueError("vacuum-removed state undefined for alpha = 0")
    state = coherent(alpha, cutoff, tol=tol)
    amp = state.amplitudes.copy()
    amp[0] = 0.0
    return FockState(cutoff, amp / math.sqrt(-math.expm1(-mean)), state.tail_mass)


def product(a: FockState, b: FockState) -> FockState:
    return a.tensor(b)


def sender_states(mu: float, cutoff: int = DEFAULT_CUTOFF, gamma_a: float = 0.0, gamma_b: float = 0.0) -> dict[str, FockState]:
    """Named two-mode states: '00', '0B', 'A0', 'AB', 'tt' (both vacuum-removed)."""
    amp = math.sqrt(mu)
    alpha_a = amp * np.exp(1j * gamma_a)
    alpha_b = amp * np.exp(1j * gamma_b)
    vac = vacuum(cutoff)
    ca = coherent(alpha_a, cutoff)
    cb = coherent(alpha_b, cutoff)
    out = {
        "00": vac.tensor(vac),
        "0B": vac.tensor(cb),
        "A0": ca.tensor(vac),
        "AB": ca.tensor(cb),
    }
    if mu > 0:
        out["tt"] = vacuum_removed(alpha_a, cutoff).tensor(vacuum_removed(alpha_b, cutoff))
    return out


def chi_state(mu: float, sign: int, cutoff: int = DEFAULT_CUTOFF, gamma_a: float = 0.0, gamma_b: float = 0.0) -> FockState:
    """(|0, a_B> +- |a_A, 0>), normalized numerically."""
    s = sender_states(mu, cutoff, gamma_a, gamma_b)
    raw = s["0B"] + s["A0"] if sign > 0 else s["0B"] - s["A0"]
    return raw.normalized()


# --- identities -----------------------------------------------------------

@dataclass(frozen=True)
class ChiCheck:
    residual: float
    vacuum_overlap: float

    @property
    def passed(self) -> bool:
        return self.residual < 1e-10 and self.vacuum_overlap == 0.0


def verify_chi_decomposition(mu: float, cutoff: int = DEFAULT_CUTOFF) -> ChiCheck:
    """Distance between |chi+> built directly and from its three-term expansion.

    Also returns the largest vacuum amplitude of the vacuum-removed states,
    which is zero by construction.
    """
    s = sender_states(mu, cutoff)
    direct = chi_state(mu, +1, cutoff)
    c = chi_plus_coefficients(mu)
    expanded = s["00"].scaled(c.c0) + s["AB"].scaled(c.c1) - s["tt"].scaled(c.c2)
    residual = float(np.linalg.norm(direct.amplitudes - expanded.amplitudes))
    amp = math.sqrt(mu)
    overlaps = [
        abs(vacuum_removed(amp, cutoff).amplitudes[0]),
        abs(s["tt"].amplitudes[0]),
    ]
    return ChiCheck(residual, float(max(overlaps)))


class DensityOperator:
    """Mixed state stored as a weighted ensemble of pure states.

    ``matrix`` materializes the dense operator; ``trace_distance`` works on
    the ensemble's span, which is exact and avoids dense eigensolves.
    """

    def __init__(self, cutoff: int, weights, states: list[FockState]):
        self.cutoff = cutoff
        self.weights = np.asarray(weights, dtype=float)
        self.vectors = np.stack([s.amplitudes for s in states], axis=1)

    @property
    def matrix(self) -> np.ndarray:
        return (self.vectors * self.weights) @ self.vectors.conj().T

    @property
    def trace(self) -> float:
        return float(np.sum(self.weights * np.sum(np.abs(self.vectors) ** 2, axis=0)))

    def validate(self, *, atol: float = 1e-10) -> None:
        m = self.matrix
        if not np.allclose(m, m.conj().T, atol=1e-12):
            raise AssertionError("density operator is not Hermitian")
        if abs(np.trace(m).real - 1) > atol:
            raise AssertionError(f"trace {np.trace(m).real} differs from 1")
        if np.linalg.eigvalsh(m).min() < -atol:
            raise AssertionError("density operator has a negative eigenvalue")

    def trace_distance(self, other: "DensityOperator") -> float:
        vecs = np.concatenate([self.vectors, other.vectors], axis=1)
        w = np.concatenate([self.weights, -other.weights])
        q, r = np.linalg.qr(vecs)
        small = (r * w) @ r.conj().T
        return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh((small + small.conj().T) / 2))))


def rho_ztilde(mu: float, cutoff: int = DEFAULT_CUTOFF) -> DensityOperator:
    s = sender_states(mu, cutoff)
    return DensityOperator(cutoff, [0.5, 0.5], [s["0B"], s["A0"]])


def rho_x(mu: float, cutoff: int = DEFAULT_CUTOFF) -> DensityOperator:
    """X-window state mixing |chi+-> with weights |N+-|^2 / 4."""
    c_plus = 2 * (1 + math.exp(-mu)) / 4
    c_minus = 2 * (-math.expm1(-mu)) / 4
    if c_minus == 0:
        return DensityOperator(cutoff, [c_plus], [chi_state(mu, +1, cutoff)])
    return DensityOperator(cutoff, [c_plus, c_minus], [chi_state(mu, +1, cutoff), chi_state(mu, -1, cutoff)])


def verify_rho_equality(mu: float, cutoff: int = DEFAULT_CUTOFF) -> float:
    """Trace distance between the single-sender mixture and the X-window mixture."""
    return rho_ztilde(mu, cutoff).trace_distance(rho_x(mu, cutoff))


def coherent_overlap(mu: float, cutoff: int = DEFAULT_CUTOFF) -> complex:
    """<0, a_B | a_A, 0>, which should equal e^-mu."""
    s = sender_states(mu, cutoff)
    return s["0B"].inner(s["A0"])


# --- detector effects ----------------------------------------------------

def _sector_one_body(g: np.ndarray, n: int) -> np.ndarray:
    """Matrix of sum_ij g_ij a_i^dag a_j on the n-photon sector |k, n-k>, k = 0..n."""
    k = np.arange(n + 1)
    m = np.zeros((n + 1, n + 1), dtype=complex)
    m[k, k] = g[0, 0] * k + g[1, 1] * (n - k)
    kk = k[:-1]
    hop = np.sqrt((kk + 1) * (n - kk))
    m[kk + 1, kk] = g[0, 1] * hop  # a^dag b: |k, n-k> -> |k+1, n-k-1>
    m[kk, kk + 1] = g[1, 0] * hop  # b^dag a
    return m


def _rotation_generator(w: np.ndarray) -> np.ndarray:
    if np.linalg.det(w) < 0:
        w = w.copy()
        w[:, 1] *= -1
    return logm(w)


class BlockOperator:
    """Operator that is block diagonal in total photon number, on the box basis."""

    def __init__(self, cutoff: int, blocks: dict[int, tuple[np.ndarray, np.ndarray]]):
        self.cutoff = cutoff
        self.blocks = blocks

    def expectation(self, state: FockState) -> float:
        amp = state.amplitudes
        total = 0.0
        for idx, mat in self.blocks.values():
            v = amp[idx]
            total += float(np.real(np.vdot(v, mat @ v)))
        return total

    def to_dense(self) -> np.ndarray:
        d = (self.cutoff + 1) ** 2
        out = np.zeros((d, d), dtype=complex)
        for idx, mat in self.blocks.values():
            out[np.ix_(idx, idx)] = mat
        return out

    def combine(self, other: "BlockOperator", a: float = 1.0, b: float = 1.0) -> "BlockOperator":
        return BlockOperator(self.cutoff, {
            n: (idx, a * mat + b * other.blocks[n][1]) for n, (idx, mat) in self.blocks.items()
        })


def _sector_indices(n: int, cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """Kept k values of sector n and their box indices."""
    k = np.arange(max(0, n - cutoff), min(n, cutoff) + 1)
    return k, k * (cutoff + 1) + (n - k)


def second_quantized(t: np.ndarray, cutoff: int) -> BlockOperator:
    """Gamma(T) for real symmetric ``t`` with eigenvalues in [0, 1].

    Gamma(T) maps a_j^dag to sum_i T_ij a_i^dag; for T = I - K it is the
    no-click effect :exp(-a^dag K a): of an ideal threshold detector.
    """
    evals, w = np.linalg.eigh(t)
    evals = np.clip(evals, 0.0, 1.0)
    gen = _rotation_generator(w)
    if np.linalg.det(w) < 0:
        w = w.copy()
        w[:, 1] *= -1
    blocks = {}
    for n in range(2 * cutoff + 1):
        u = expm(_sector_one_body(gen, n))
        k = np.arange(n + 1)
        diag = evals[0] ** k * evals[1] ** (n - k)
        full = (u * diag) @ u.conj().T
        keep, idx = _sector_indices(n, cutoff)
        blocks[n] = (idx, full[np.ix_(keep, keep)])
    return BlockOperator(cutoff, blocks)


def _diagonal_block_operator(values: Callable[[np.ndarray, np.ndarray], np.ndarray], cutoff: int) -> BlockOperator:
    blocks = {}
    for n in range(2 * cutoff + 1):
        keep, idx = _sector_indices(n, cutoff)
        blocks[n] = (idx, np.diag(values(keep, n - keep)).astype(complex))
    return BlockOperator(cutoff, blocks)


@lru_cache(maxsize=64)
def _effects_cached(eta_a: float, eta_b: float, e_a: float, p_dark: float, cutoff: int):
    k_l, k_r = coupling_matrices(eta_a, eta_b, e_a)
    keep = 1.0 - p_dark
    no_l = second_quantized(np.eye(2) - k_l, cutoff)
    no_r = second_quantized(np.eye(2) - k_r, cutoff)
    no_l = no_l.combine(no_l, keep, 0.0)
    no_r = no_r.combine(no_r, keep, 0.0)
    none = _diagonal_block_operator(lambda a, b: keep * keep * (1 - eta_a) ** a * (1 - eta_b) ** b, cutoff)
    ident = _diagonal_block_operator(lambda a, b: np.ones_like(a, dtype=float), cutoff)
    only_l = no_r.combine(none, 1.0, -1.0)
    only_r = no_l.combine(none, 1.0, -1.0)
    both = ident.combine(no_l, 1.0, -1.0).combine(no_r, 1.0, -1.0).combine(none, 1.0, 1.0)
    return {"L": only_l, "R": only_r, "none": none, "both": both}


def interferometer_effects(ch: ChannelParams, cutoff: int = DEFAULT_CUTOFF) -> dict[str, BlockOperator]:
    """POVM of the honest relay on sender-side modes: 'L', 'R' (single clicks), 'none', 'both'."""
    eta_a, eta_b = arm_transmittances(ch)
    return _effects_cached(eta_a, eta_b, ch.e_a, ch.p_dark, cutoff)


def fock_yields(state: FockState, ch: ChannelParams, cutoff: int | None = None) -> tuple[float, float]:
    """(only-left, only-right) click probabilities of ``state`` at an honest relay."""
    eff = interferometer_effects(ch, cutoff or state.cutoff)
    return eff["L"].expectation(state), eff["R"].expectation(state)


# --- virtual X windows -------------------------------------------------------

@dataclass(frozen=True)
class VirtualXYields:
    """Effective-event yields of the virtual X+ and X- windows."""

    mu: float
    p_plus: float
    xplus_L: float
    xplus_R: float
    xminus_L: float
    xminus_R: float

    @property
    def e_ph(self) -> float:
        p_minus = 1 - self.p_plus
        den = self.p_plus * (self.xplus_L + self.xplus_R) + p_minus * (self.xminus_L + self.xminus_R)
        if den <= 0:
            raise UndefinedRateError("no effective X windows")
        return (self.p_plus * self.xplus_R + p_minus * self.xminus_L) / den


def virtual_x_yields(params: ProtocolParams, ch: ChannelParams, cutoff: int = DEFAULT_CUTOFF,
                     *, delta: float = 0.0, nodes: int = 32, relabel: bool = True) -> VirtualXYields:
    """Exact X+-/X- yields at an honest relay.

    In post-selection mode the yields are averaged over the accepted phase
    differences, swapping detectors where cos(delta) < 0 when ``relabel``.
    """
    mu = params.mu
    eff = interferometer_effects(ch, cutoff)

    def at(d: float) -> np.ndarray:
        plus = chi_state(mu, +1, cutoff, 0.0, d)
        minus = chi_state(mu, -1, cutoff, 0.0, d)
        return np.array([eff["L"].expectation(plus), eff["R"].expectation(plus),
                         eff["L"].expectation(minus), eff["R"].expectation(minus)])

    if params.phase_mode is PhaseMode.COMPENSATION:
        y = at(delta)
    else:
        theta = float(acceptance_half_width(params.lambda_ps))
        x, w = np.polynomial.legendre.leggauss(nodes)
        y = np.zeros(4)
        for xi, wi in zip(x, w):
            y += wi * at(theta * xi)
            far = at(math.pi + theta * xi)
            y += wi * (far[[1, 0, 3, 2]] if relabel else far)
        y *= 0.25
    p_plus = (1 + math.exp(-mu)) / 2
    return VirtualXYields(mu, p_plus, *map(float, y))


def brute_force_eph(params: ProtocolParams, ch: ChannelParams, seed: int = 0,
                    n_virtual_windows: int | None = None, *, cutoff: int = DEFAULT_CUTOFF,
                    delta: float = 0.0) -> float:
    """True phase-flip error rate of the virtual X windows at an honest relay.

    With ``n_virtual_windows=None`` the asymptotic value is returned;
    otherwise that many windows are sampled and the empirical rate
    (n_X+^R + n_X-^L) / n_X is returned.
    """
    y = virtual_x_yields(params, ch, cutoff, delta=delta)
    if n_virtual_windows is None:
        return y.e_ph
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    n_plus = int(rng.binomial(n_virtual_windows, y.p_plus))
    n_minus = n_virtual_windows - n_plus
    plus = rng.multinomial(n_plus, [y.xplus_L, y.xplus_R, max(0.0, 1 - y.xplus_L - y.xplus_R)])
    minus = rng.multinomial(n_minus, [y.xminus_L, y.xminus_R, max(0.0, 1 - y.xminus_L - y.xminus_R)])
    n_x = plus[0] + plus[1] + minus[0] + minus[1]
    if n_x == 0:
        raise UndefinedRateError("no effective X windows sampled")
    return float(plus[1] + minus[0]) / n_x


# --- Cauchy-bound soundness -----------------------------------------------------

BoundsFn = Callable[[float, float, float], tuple[float, float]]


@dataclass
class ContainmentReport:
    mu: float
    trials: int
    checks: int
    violations: int
    worst_excess: float
    min_margin: float
    families: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return asdict(self)


def containment(s_chi: float, s_o: float, s_b: float, mu: float, bounds: BoundsFn = s_xplus_bounds,
                tol: float = 1e-12) -> tuple[bool, float]:
    """Whether ``s_chi`` lies in the bound interval, and the signed slack (negative = violated)."""
    lo, up = bounds(min(max(s_o, 0.0), 1.0), min(max(s_b, 0.0), 1.0), mu)
    slack = min(s_chi - lo, up - s_chi)
    return slack >= -tol, slack


def _random_effect_rows(rng: np.random.Generator, family: str, dim: int, span: np.ndarray) -> np.ndarray:
    """Rows A of an effect M = A^dag A / ||A||^2 (spectral norm), so 0 <= M <= I."""
    def ginibre(r: int) -> np.ndarray:
        return rng.standard_normal((r, dim)) + 1j * rng.standard_normal((r, dim))

    if family == "ginibre":
        a = ginibre(int(rng.integers(1, 9)))
    else:
        r = int(rng.integers(1, 3))
        coeff = rng.standard_normal((r, span.shape[1])) + 1j * rng.standard_normal((r, span.shape[1]))
        a = coeff @ span.conj().T
        a = a + rng.uniform(0, 0.3) * ginibre(r) / math.sqrt(dim)
    smax = np.linalg.svd(a, compute_uv=False)[0]
    return a / smax


def verify_cauchy_bounds(mu: float, trials: int = 1000, seed: int = 0, *, cutoff: int = DEFAULT_CUTOFF,
                         bounds: BoundsFn = s_xplus_bounds) -> ContainmentReport:
    """Check the X+ yield bounds against random two-outcome relay measurements.

    Each trial draws global phases and an effect M with 0 <= M <= I, either a
    low-rank Ginibre effect on the whole truncated space or one concentrated
    on the span of |0,0>, |a_A,a_B> and |a~_A,a~_B> (where the bounds are
    tight). Both outcomes M and I - M are checked.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=[seed, 1]))
    dim = (cutoff + 1) ** 2
    violations = 0
    checks = 0
    worst = 0.0
    min_margin = math.inf
    families = {"ginibre": 0, "span": 0}
    for _ in range(trials):
        gamma_a, gamma_b = rng.uniform(0, 2 * math.pi, 2)
        s = sender_states(mu, cutoff, gamma_a, gamma_b)
        chi = chi_state(mu, +1, cutoff, gamma_a, gamma_b)
        span, _ = np.linalg.qr(np.stack([s["00"].amplitudes, s["AB"].amplitudes, s["tt"].amplitudes], axis=1))
        family = "ginibre" if rng.random() < 0.5 else "span"
        families[family] += 1
        a = _random_effect_rows(rng, family, dim, span)
        norms = {}
        for key, st in (("chi", chi), ("00", s["00"]), ("AB", s["AB"])):
            norms[key] = (float(np.sum(np.abs(a @ st.amplitudes) ** 2)), st.norm ** 2)
        for outcome in ("M", "I-M"):
            vals = {k: (v if outcome == "M" else n - v) for k, (v, n) in norms.items()}
            ok, slack = containment(vals["chi"], vals["00"], vals["AB"], mu, bounds)
            checks += 1
            min_margin = min(min_margin, slack)
            if not ok:
                violations += 1
                worst = max(worst, -slack)
    return ContainmentReport(mu, trials, checks, violations, worst, min_margin, families)


def _mutant(sign_index: int) -> BoundsFn:
    """s_xplus_bounds with the sign of one cross term flipped in both bounds."""
    def bounds(s_o: float, s_b: float, mu: float) -> tuple[float, float]:
        e = math.exp(-mu)
        g = -math.expm1(-mu)
        pre = 1 / (2 * (1 + e))
        terms = [2 * math.sqrt(s_o * s_b), 2 * g * math.sqrt(s_o), 2 * g / e * math.sqrt(s_b)]
        terms[sign_index] = -terms[sign_index]
        cross = sum(terms)
        direct = e * s_o + s_b / e
        up = min(max(pre * (direct + g * g / e + cross), 0.0), 1.0)
        lo = min(max(pre * (direct - cross), 0.0), 1.0)
        return lo, up
    return bounds


MUTATIONS: dict[str, BoundsFn] = {
    "cross-ob": _mutant(0),
    "cross-o": _mutant(1),
    "cross-b": _mutant(2),
}


# --- suite -----------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


MU_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
SOUNDNESS_GRID = {"distance_km": (0.0, 100.0, 200.0), "mu": (0.1, 0.5, 1.0), "e_a": (0.0, 0.1, 0.2)}


def eph_soundness(distance_km: float, mu: float, e_a: float, *, cutoff: int = DEFAULT_CUTOFF,
                  phase_mode: PhaseMode = PhaseMode.COMPENSATION, lambda_ps: float = 0.1) -> tuple[float, float]:
    """(true phase-flip rate, estimator's upper bound) for one honest configuration."""
    ch = ChannelParams(distance_km=distance_km, e_a=e_a)
    params = ProtocolParams(mu=mu, q=0.5, lambda_ps=lambda_ps, phase_mode=phase_mode)
    true = brute_force_eph(params, ch, cutoff=cutoff)
    bound = estimate_bounds(analytic_yields(params, ch), mu).e_ph_upper
    return true, bound


def run_suite(*, cutoff: int = DEFAULT_CUTOFF, trials: int = 1000, seed: int = 0,
              bounds: BoundsFn = s_xplus_bounds, mus: tuple[float, ...] = MU_GRID,
              cauchy_mus: tuple[float, ...] = (0.2, 0.5, 1.0)) -> list[CheckResult]:
    """Every oracle identity and soundness check, one result per check."""
    out: list[CheckResult] = []
    for mu in mus:
        chk = verify_chi_decomposition(mu, cutoff)
        out.append(CheckResult(f"chi+ decomposition mu={mu:g}", chk.residual, 1e-10, chk.passed,
                               f"vacuum overlap {chk.vacuum_overlap:g}"))
        td = verify_rho_equality(mu, cutoff)
        out.append(CheckResult(f"rho_Z~ = rho_X mu={mu:g}", td, 1e-10, td < 1e-10))
        ov = coherent_overlap(mu, cutoff)
        err = abs(ov - math.exp(-mu))
        out.append(CheckResult(f"<0,aB|aA,0> = e^-mu mu={mu:g}", err, 1e-12, err < 1e-12))
        c = chi_plus_coefficients(mu)
        s = c.n_plus_sq / 4 + c.n_minus_sq / 4
        out.append(CheckResult(f"|N+|^2/4 + |N-|^2/4 = 1 mu={mu:g}", abs(s - 1), 0.0, s == 1.0))
    for mu in cauchy_mus:
        rep = verify_cauchy_bounds(mu, trials, seed, cutoff=cutoff, bounds=bounds)
        out.append(CheckResult(f"Cauchy containment mu={mu:g}", rep.violations, 0, rep.passed,
                               f"{rep.checks} checks, worst excess {rep.worst_excess:.3g}"))
    for d in SOUNDNESS_GRID["distance_km"]:
        for mu in SOUNDNESS_GRID["mu"]:
            for ea in SOUNDNESS_GRID["e_a"]:
                true, bound = eph_soundness(d, mu, ea, cutoff=cutoff)
                out.append(CheckResult(f"e_ph <= bound L={d:g} mu={mu:g} e_a={ea:g}", true - bound, 0.0,
                                       true <= bound, f"true {true:.6g}, bound {bound:.6g}"))
    if cutoff >= 30:
        ch = ChannelParams(distance_km=100, e_a=0.05)
        params = ProtocolParams(mu=0.5, q=0.5)
        diff = abs(brute_force_eph(params, ch, cutoff=30) - brute_force_eph(params, ch, cutoff=cutoff))
        out.append(CheckResult(f"cutoff 30 vs {cutoff} e_ph", diff, 1e-8, diff < 1e-8))
    return out
