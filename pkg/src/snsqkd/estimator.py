"""Yield bounds, phase-flip bound, tagged key rate and parameter optimization.

The estimator only ever sees class-level yields (``YieldSet``) and the
observed bit-flip rate; it never touches per-window data from the undisclosed
subset.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    ZTILDE,
    ChannelParams,
    PhaseMode,
    ProtocolParams,
    UndefinedRateError,
    WindowClass,
    YieldSet,
    window_class_prior,
)
from .photonics import DEFAULT_NODES, acceptance_fraction, effective_rates_grid


def entropy(x):
    """Binary entropy in bits, with H(0) = H(1) = 0.

    >>> float(entropy(0.5))
    1.0
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any((arr < 0) | (arr > 1)):
        raise ValueError(f"entropy argument must lie in [0, 1], got {x}")
    inside = (arr > 0) & (arr < 1)
    safe = np.where(inside, arr, 0.5)
    h = np.where(inside, -safe * np.log2(safe) - (1 - safe) * np.log2(1 - safe), 0.0)
    return float(h) if h.ndim == 0 else h


def phase_entropy(e_ph_upper):
    """Privacy-amplification cost of a phase-flip upper bound.

    A bound at or above 1/2 says nothing about the true rate, so it costs a
    full bit rather than the (symmetric) binary entropy of the bound.
    """
    return entropy(np.minimum(e_ph_upper, 0.5))


@dataclass(frozen=True)
class ChiDecomposition:
    """|chi+> = c0 |0,0> + c1 |a_A,a_B> - c2 |a~_A,a~_B>, plus |N+-|^2."""

    c0: float
    c1: float
    c2: float
    n_plus_sq: float
    n_minus_sq: float


def chi_plus_coefficients(mu: float) -> ChiDecomposition:
    if not mu > 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    e = math.exp(-mu)
    root = math.exp(-mu / 2) * math.sqrt(2 * (1 + e))
    one_minus_e = -math.expm1(-mu)
    n_minus_sq = 2 * one_minus_e
    return ChiDecomposition(
        c0=math.exp(-mu / 2) / math.sqrt(2 * (1 + e)),
        c1=1 / root,
        c2=one_minus_e / root,
        # derived from n_minus_sq so the X+/X- probabilities sum to exactly 1
        n_plus_sq=4 - n_minus_sq,
        n_minus_sq=n_minus_sq,
    )


def _check_yield(name: str, s) -> None:
    s = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(s)) or np.any((s < 0) | (s > 1)):
        raise ValueError(f"{name} must lie in [0, 1], got {s}")


def yield_bounds_generic(c0, c1, c2, s_phi0, s_phi1, *, clamp: bool = True):
    """Lower and upper bound on the yield of c0|phi0> + c1|phi1> + c2|phi2>.

    Only the yields of |phi0> and |phi1> are known; the unknown yield of
    |phi2> is replaced by its worst case 1. Works elementwise on arrays.
    """
    _check_yield("s_phi0", s_phi0)
    _check_yield("s_phi1", s_phi1)
    a0, a1, a2 = abs(c0), abs(c1), abs(c2)
    s0 = np.asarray(s_phi0, dtype=float)
    s1 = np.asarray(s_phi1, dtype=float)
    r0, r1 = np.sqrt(s0), np.sqrt(s1)
    base = a0 * a0 * s0 + a1 * a1 * s1
    cross = 2 * a0 * a1 * r0 * r1 + 2 * a0 * a2 * r0 + 2 * a1 * a2 * r1
    upper = base + a2 * a2 + cross
    lower = base - cross
    if clamp:
        upper = np.clip(upper, 0.0, 1.0)
        lower = np.clip(lower, 0.0, 1.0)
    if np.ndim(upper) == 0:
        return float(lower), float(upper)
    return lower, upper


def s_xplus_bounds(s_o, s_b, mu: float, *, clamp: bool = True):
    """Bounds on the X+ yield for one detector from neither/both-send yields.

    Written out term by term; ``yield_bounds_generic`` with the
    ``chi_plus_coefficients`` must give the same numbers.
    """
    _check_yield("s_o", s_o)
    _check_yield("s_b", s_b)
    mu = np.asarray(mu, dtype=float)
    if np.any(~(mu > 0)):
        raise ValueError(f"mu must be > 0, got {mu}")
    e = np.exp(-mu)
    g = -np.expm1(-mu)
    s_o = np.asarray(s_o, dtype=float)
    s_b = np.asarray(s_b, dtype=float)
    pre = 1 / (2 * (1 + e))
    direct = e * s_o + s_b / e
    cross = 2 * np.sqrt(s_o * s_b) + 2 * g * np.sqrt(s_o) + 2 * g / e * np.sqrt(s_b)
    upper = pre * (direct + g * g / e + cross)
    lower = pre * (direct - cross)
    if clamp:
        upper = np.clip(upper, 0.0, 1.0)
        lower = np.clip(lower, 0.0, 1.0)
    if np.ndim(upper) == 0:
        return float(lower), float(upper)
    return lower, upper


def phase_flip_upper(s_ztilde_L, s_ztilde_R, s_xplus_upper_R, s_xplus_lower_L, mu, *,
                     prefactor: str = "appendix", clamp: bool = True):
    """Upper bound on the phase-flip error rate of single-sender windows.

    ``prefactor='appendix'`` weights the bound gap by (1 + e^-mu), the X+
    share of X windows times two. ``'outline'`` uses (1 + e^-2mu) for
    comparison only.
    """
    for name, v in (("s_ztilde_L", s_ztilde_L), ("s_ztilde_R", s_ztilde_R),
                    ("s_xplus_upper_R", s_xplus_upper_R), ("s_xplus_lower_L", s_xplus_lower_L)):
        _check_yield(name, v)
    den = 2 * (np.asarray(s_ztilde_L, dtype=float) + np.asarray(s_ztilde_R, dtype=float))
    if np.any(den <= 0):
        raise UndefinedRateError("no effective single-sender events; phase-flip rate undefined")
    if prefactor == "appendix":
        weight = 1 + np.exp(-np.asarray(mu))
    elif prefactor == "outline":
        weight = 1 + np.exp(-2 * np.asarray(mu))
    else:
        raise ValueError(f"unknown prefactor {prefactor!r}")
    gap = np.asarray(s_xplus_upper_R, dtype=float) - np.asarray(s_xplus_lower_L, dtype=float)
    e = (weight * gap + 2 * np.asarray(s_ztilde_L, dtype=float)) / den
    if clamp:
        e = np.clip(e, 0.0, 1.0)
    return float(e) if np.ndim(e) == 0 else e


@dataclass(frozen=True)
class BoundSet:
    s_xplus_upper_R: float
    s_xplus_lower_L: float
    e_ph_upper: float
    yields: YieldSet
    mu: float
    clamp_events: int = 0

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["yields"] = self.yields.to_dict()
        return d


def estimate_bounds(yields: YieldSet, mu: float, *, prefactor: str = "appendix") -> BoundSet:
    """Bounds and the phase-flip upper bound from observed class yields."""
    raw_lo_l, raw_up_l = s_xplus_bounds(yields.s_o_L, yields.s_b_L, mu, clamp=False)
    raw_lo_r, raw_up_r = s_xplus_bounds(yields.s_o_R, yields.s_b_R, mu, clamp=False)
    lo_l = min(max(raw_lo_l, 0.0), 1.0)
    up_r = min(max(raw_up_r, 0.0), 1.0)
    raw_e = phase_flip_upper(yields.s_ztilde_L, yields.s_ztilde_R, up_r, lo_l, mu,
                             prefactor=prefactor, clamp=False)
    e = min(max(raw_e, 0.0), 1.0)
    clamps = int(lo_l != raw_lo_l) + int(up_r != raw_up_r) + int(e != raw_e)
    return BoundSet(up_r, lo_l, e, yields, mu, clamps)


@dataclass(frozen=True)
class KeyRateReport:
    e_z: float
    e_ph_upper: float
    s_ztilde: float
    s_total: float
    n_f: float
    rate_per_window: float
    no_key: bool
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def total_effective_rate(yields: YieldSet, params: ProtocolParams) -> float:
    return (
        window_class_prior(params, ZTILDE) * yields.s_ztilde
        + window_class_prior(params, WindowClass.BOTH) * yields.s_b
        + window_class_prior(params, WindowClass.NEITHER) * yields.s_o
    )


def analytic_bit_flip(yields: YieldSet, params: ProtocolParams) -> float:
    total = total_effective_rate(yields, params)
    if total <= 0:
        raise UndefinedRateError("no effective events expected")
    wrong = (window_class_prior(params, WindowClass.BOTH) * yields.s_b
             + window_class_prior(params, WindowClass.NEITHER) * yields.s_o)
    return wrong / total


def key_rate(
    yields: YieldSet,
    e_z: float,
    e_ph_upper: float,
    params: ProtocolParams,
    *,
    acceptance: float = 1.0,
    subtract_test_windows: bool = False,
) -> KeyRateReport:
    """Tagged-model key rate per window.

    rate = P(Z~) S_Z~ (1 - H(e_ph)) - f S_tot H(E_Z), scaled by the
    post-selection acceptance and optionally by the share of windows left
    after disclosing subset v. Negative rates are reported as zero with
    ``no_key`` set.
    """
    _check_yield("e_z", e_z)
    _check_yield("e_ph_upper", e_ph_upper)
    _check_yield("acceptance", acceptance)
    s_tot = total_effective_rate(yields, params)
    sifted = window_class_prior(params, ZTILDE) * yields.s_ztilde
    raw = sifted * (1 - phase_entropy(e_ph_upper)) - params.f * s_tot * entropy(e_z)
    raw *= acceptance
    if subtract_test_windows:
        raw *= 1 - params.test_fraction_v
    no_key = not raw > 0
    rate = 0.0 if no_key else raw
    return KeyRateReport(
        e_z=e_z,
        e_ph_upper=e_ph_upper,
        s_ztilde=yields.s_ztilde,
        s_total=s_tot,
        n_f=rate * params.n_windows,
        rate_per_window=rate,
        no_key=no_key,
        params=params.to_dict(),
    )


def analytic_yields(params: ProtocolParams, ch: ChannelParams, *, nodes: int = DEFAULT_NODES) -> YieldSet:
    """Expected class yields from the closed-form detection model."""
    mode = params.phase_mode
    lam = params.lambda_ps
    vals = {}
    for name, classes in (("ztilde", ZTILDE), ("b", WindowClass.BOTH), ("o", WindowClass.NEITHER)):
        s_l, s_r = effective_rates_grid(classes, params.mu, ch, mode, lam, nodes=nodes)
        vals[f"s_{name}_L"] = min(max(float(s_l), 0.0), 1.0)
        vals[f"s_{name}_R"] = min(max(float(s_r), 0.0), 1.0)
    return YieldSet(**vals)


def analytic_report(params: ProtocolParams, ch: ChannelParams, *, prefactor: str = "appendix",
                    nodes: int = DEFAULT_NODES) -> tuple[BoundSet, KeyRateReport]:
    """Expected bounds and key rate for the given parameters (infinite N)."""
    yields = analytic_yields(params, ch, nodes=nodes)
    bounds = estimate_bounds(yields, params.mu, prefactor=prefactor)
    acc = 1.0
    if params.phase_mode is PhaseMode.POSTSELECTION:
        acc = float(acceptance_fraction(params.lambda_ps))
    report = key_rate(yields, analytic_bit_flip(yields, params), bounds.e_ph_upper, params, acceptance=acc)
    return bounds, report


def analyze(tally, params: ProtocolParams, *, prefactor: str = "appendix") -> tuple[BoundSet, KeyRateReport]:
    """Bounds and key rate from a simulated tally, using disclosed data only.

    Reads yields and the bit-flip rate from subset v; the post-selection
    acceptance is the observed fraction of accepted windows in v.
    """
    from .simulator import bit_flip_error  # local: simulator imports photonics, not estimator

    yields = tally.yield_set("v", accepted_only=True)
    bounds = estimate_bounds(yields, params.mu, prefactor=prefactor)
    acc = 1.0
    if params.phase_mode is PhaseMode.POSTSELECTION:
        classes = (*ZTILDE, WindowClass.BOTH, WindowClass.NEITHER)
        acc = tally.n_windows(classes, "v", True) / tally.n_windows(classes, "v", False)
    e_z = bit_flip_error(tally, "v", accepted_only=True)
    return bounds, key_rate(yields, e_z, bounds.e_ph_upper, params, acceptance=acc)


# --- optimization -------------------------------------------------------

Q_RANGE = (1e-4, 0.9)
MU_RANGE = (1e-7, 1.0)
LAMBDA_RANGE = (0.005, 0.3)


def rate_surface(ch: ChannelParams, f: float, phase_mode: PhaseMode, q, mu, lam=None, *,
                 prefactor: str = "appendix", nodes: int = DEFAULT_NODES) -> np.ndarray:
    """Analytic key rate on a grid, shape ``(len(q), len(mu), len(lam))``.

    Non-positive rates are returned as 0.
    """
    mode = PhaseMode(phase_mode)
    q = np.asarray(q, dtype=float)[:, None, None]
    mu = np.asarray(mu, dtype=float)[None, :, None]
    if mode is PhaseMode.POSTSELECTION:
        lam = np.asarray(lam, dtype=float)[None, None, :]
        acc = acceptance_fraction(lam)
    else:
        lam = np.asarray([np.nan])[None, None, :]
        acc = np.ones_like(lam)
    mu_b, lam_b = np.broadcast_arrays(mu, lam)
    lam_arg = None if mode is PhaseMode.COMPENSATION else lam_b[0]
    rates = {}
    for name, classes in (("z", ZTILDE), ("b", WindowClass.BOTH), ("o", WindowClass.NEITHER)):
        s_l, s_r = effective_rates_grid(classes, mu_b[0], ch, mode, lam_arg, nodes=nodes)
        rates[name] = (np.clip(s_l, 0, 1)[None], np.clip(s_r, 0, 1)[None])
    (o_l, o_r), (b_l, b_r), (z_l, z_r) = rates["o"], rates["b"], rates["z"]
    lower_l, _ = s_xplus_bounds(o_l, b_l, mu)
    _, upper_r = s_xplus_bounds(o_r, b_r, mu)
    e_ph = phase_flip_upper(z_l, z_r, upper_r, lower_l, mu, prefactor=prefactor)
    pz, pb, po = 2 * q * (1 - q), q * q, (1 - q) ** 2
    s_z = z_l + z_r
    s_tot = pz * s_z + pb * (b_l + b_r) + po * (o_l + o_r)
    e_z = np.clip((pb * (b_l + b_r) + po * (o_l + o_r)) / s_tot, 0.0, 1.0)
    raw = acc * (pz * s_z * (1 - phase_entropy(e_ph)) - f * s_tot * entropy(e_z))
    return np.where(raw > 0, raw, 0.0)


@dataclass(frozen=True)
class OptimizeResult:
    q: float
    mu: float
    lambda_ps: float | None
    report: KeyRateReport
    evaluations: int

    def to_dict(self) -> dict:
        return {"q": self.q, "mu": self.mu, "lambda": self.lambda_ps,
                "evaluations": self.evaluations, "report": self.report.to_dict()}


def coarse_grid(phase_mode: PhaseMode, points: int = 41, lambda_points: int = 9):
    """Log-spaced starting grid over (q, mu[, lambda]), each axis ascending."""
    q = np.geomspace(*Q_RANGE, points)
    mu = np.geomspace(*MU_RANGE, points)
    lam = np.geomspace(*LAMBDA_RANGE, lambda_points) if PhaseMode(phase_mode) is PhaseMode.POSTSELECTION else None
    return q, mu, lam


def _refine(axis: np.ndarray, idx: int, lo: float, hi: float, points: int) -> np.ndarray:
    a = axis[max(idx - 1, 0)]
    b = axis[min(idx + 1, len(axis) - 1)]
    return np.geomspace(max(a, lo), min(b, hi), points)


def optimize(
    ch: ChannelParams,
    f: float = 1.1,
    phase_mode: PhaseMode = PhaseMode.COMPENSATION,
    *,
    n_windows: int = 1,
    refinements: int = 4,
    points: int = 41,
    prefactor: str = "appendix",
    nodes: int = 256,
) -> OptimizeResult:
    """Coarse-to-fine log-grid search for the (q, mu[, lambda]) maximizing the key rate.

    Each refinement zooms onto the neighbours of the current best point.
    Ties resolve to the lexicographically smallest (q, mu, lambda) because
    ``argmax`` returns the first maximum of ascending axes.
    """
    mode = PhaseMode(phase_mode)
    q, mu, lam = coarse_grid(mode, points)
    best = (-1.0, None)
    evaluations = 0
    for level in range(refinements + 1):
        surf = rate_surface(ch, f, mode, q, mu, lam, prefactor=prefactor, nodes=nodes)
        evaluations += surf.size
        i, j, k = np.unravel_index(int(np.argmax(surf)), surf.shape)
        value = float(surf[i, j, k])
        point = (float(q[i]), float(mu[j]), None if lam is None else float(lam[k]))
        if value > best[0]:
            best = (value, point)
        if value <= 0:
            break
        q = _refine(q, i, *Q_RANGE, 21)
        mu = _refine(mu, j, *MU_RANGE, 21)
        if lam is not None:
            lam = _refine(lam, k, *LAMBDA_RANGE, 9)
    value, point = best
    if value <= 0 or point is None:
        point = (float(Q_RANGE[0]), float(MU_RANGE[1]), None if lam is None else float(LAMBDA_RANGE[0]))
    q_best, mu_best, lam_best = point
    params = ProtocolParams(mu=mu_best, q=q_best, lambda_ps=lam_best if lam_best is not None else 0.1,
                            f=f, n_windows=n_windows, phase_mode=mode)
    _, report = analytic_report(params, ch, prefactor=prefactor, nodes=max(nodes, DEFAULT_NODES))
    return OptimizeResult(q_best, mu_best, lam_best, report, evaluations)
