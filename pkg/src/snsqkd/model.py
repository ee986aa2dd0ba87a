"""Protocol, channel and detector parameters shared by every module.

All parameter types are frozen dataclasses that validate themselves on
construction. ``from_dict`` is strict: unknown keys raise, so a typo in an
experiment config fails loudly instead of silently falling back to a default.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Mapping


class ConfigError(ValueError):
    """Invalid parameter value or unknown configuration field.

    ``field`` names the offending parameter when one can be identified.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class UndefinedRateError(ArithmeticError):
    """A rate was requested from a sample with no effective events."""


class PhaseMode(str, Enum):
    COMPENSATION = "compensation"
    POSTSELECTION = "postselection"


class WindowClass(str, Enum):
    """Kind of time window, by the two parties' sending decisions.

    ``XPLUS``/``XMINUS`` only occur in the virtual protocol evaluated by the
    oracle; the real protocol never produces them.
    """

    ZTILDE_A = "ZTildeA"  # Alice sends, Bob does not
    ZTILDE_B = "ZTildeB"  # Bob sends, Alice does not
    BOTH = "BBoth"
    NEITHER = "ONeither"
    XPLUS = "XPlus"
    XMINUS = "XMinus"

    @property
    def is_virtual(self) -> bool:
        return self in (WindowClass.XPLUS, WindowClass.XMINUS)

    @property
    def code(self) -> int:
        return _CLASS_ORDER.index(self)


_CLASS_ORDER = list(WindowClass)
REAL_CLASSES = (WindowClass.ZTILDE_A, WindowClass.ZTILDE_B, WindowClass.BOTH, WindowClass.NEITHER)
ZTILDE = (WindowClass.ZTILDE_A, WindowClass.ZTILDE_B)


def class_from_code(code: int) -> WindowClass:
    return _CLASS_ORDER[code]


def _check_fields(cls: type, data: Mapping[str, Any]) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown field(s) {unknown}", field=unknown[0])


def _require(cond: bool, field: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{field}: {message}", field=field)


@dataclass(frozen=True)
class ProtocolParams:
    """Source and decision parameters.

    Attributes:
        mu: Mean photon number of each coherent pulse.
        q: Probability that each party decides to send.
        lambda_ps: Post-selection acceptance |lambda|; ignored in compensation mode.
        f: Error-correction inefficiency factor.
        n_windows: Total number of time windows N.
        phase_mode: Active phase compensation by the relay, or post-selection.
        test_fraction_v: Fraction of windows disclosed for error testing.
        intensity_jitter: Relative per-window intensity reduction drawn
            uniformly from [0, jitter]; sent intensities never exceed ``mu``.
            Simulator only, off by default.
    """

    mu: float
    q: float
    lambda_ps: float = 0.1
    f: float = 1.1
    n_windows: int = 1_000_000
    phase_mode: PhaseMode = PhaseMode.COMPENSATION
    test_fraction_v: float = 0.1
    intensity_jitter: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "phase_mode", PhaseMode(self.phase_mode))
        _require(math.isfinite(self.mu) and self.mu > 0, "mu", f"must be > 0, got {self.mu}")
        _require(0 < self.q < 1, "q", f"must satisfy 0 < q < 1, got {self.q}")
        _require(0 <= self.lambda_ps <= 1, "lambda_ps", f"must lie in [0, 1], got {self.lambda_ps}")
        _require(self.f >= 1, "f", f"must be >= 1, got {self.f}")
        _require(
            isinstance(self.n_windows, int) and not isinstance(self.n_windows, bool) and self.n_windows >= 1,
            "n_windows",
            f"must be an integer >= 1, got {self.n_windows!r}",
        )
        _require(0 < self.test_fraction_v < 1, "test_fraction_v", f"must lie in (0, 1), got {self.test_fraction_v}")
        _require(0 <= self.intensity_jitter < 1, "intensity_jitter", f"must lie in [0, 1), got {self.intensity_jitter}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ProtocolParams":
        _check_fields(cls, data)
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["phase_mode"] = self.phase_mode.value
        return d

    def replace(self, **changes: Any) -> "ProtocolParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class ChannelParams:
    """Fiber link and detector parameters.

    ``charlie_position`` is the fraction of ``distance_km`` between Alice and
    the relay; 0.5 puts the relay at the midpoint.
    """

    distance_km: float
    loss_db_per_km: float = 0.2
    eta_det: float = 0.8
    p_dark: float = 1e-11
    e_a: float = 0.0
    charlie_position: float = 0.5

    def __post_init__(self) -> None:
        _require(math.isfinite(self.distance_km) and self.distance_km >= 0, "distance_km", f"must be >= 0, got {self.distance_km}")
        _require(self.loss_db_per_km >= 0, "loss_db_per_km", f"must be >= 0, got {self.loss_db_per_km}")
        _require(0 < self.eta_det <= 1, "eta_det", f"must lie in (0, 1], got {self.eta_det}")
        _require(0 <= self.p_dark <= 1, "p_dark", f"must lie in [0, 1], got {self.p_dark}")
        _require(0 <= self.e_a <= 0.5, "e_a", f"must lie in [0, 0.5], got {self.e_a}")
        _require(0 <= self.charlie_position <= 1, "charlie_position", f"must lie in [0, 1], got {self.charlie_position}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ChannelParams":
        _check_fields(cls, data)
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes: Any) -> "ChannelParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DetectorEvent:
    left_click: bool
    right_click: bool

    @property
    def effective(self) -> bool:
        return self.left_click != self.right_click

    @property
    def detector(self) -> str | None:
        """'L' or 'R' for an effective event, None otherwise."""
        if not self.effective:
            return None
        return "L" if self.left_click else "R"


@dataclass(frozen=True)
class YieldSet:
    """Observed per-detector yields S_y^d for the three observable classes.

    The Z-tilde yields merge both single-sender classes.
    """

    s_ztilde_L: float
    s_ztilde_R: float
    s_b_L: float
    s_b_R: float
    s_o_L: float
    s_o_R: float

    def __post_init__(self) -> None:
        for name, value in dataclasses.asdict(self).items():
            _require(0 <= value <= 1, name, f"yield must lie in [0, 1], got {value}")

    @property
    def s_ztilde(self) -> float:
        return self.s_ztilde_L + self.s_ztilde_R

    @property
    def s_b(self) -> float:
        return self.s_b_L + self.s_b_R

    @property
    def s_o(self) -> float:
        return self.s_o_L + self.s_o_R

    def to_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


def window_class_prior(params: ProtocolParams, window_class: WindowClass | Iterable[WindowClass]) -> float:
    """Prior probability of a window class, or of a union of classes.

    Pass ``ZTILDE`` for the merged single-sender class.
    """
    if isinstance(window_class, WindowClass):
        q = params.q
        if window_class.is_virtual:
            raise ValueError(f"{window_class.value} windows only exist in the virtual protocol")
        if window_class in ZTILDE:
            return q * (1 - q)
        if window_class is WindowClass.BOTH:
            return q * q
        return (1 - q) ** 2
    return sum(window_class_prior(params, c) for c in set(window_class))


def arm_transmittances(ch: ChannelParams) -> tuple[float, float]:
    """Alice-arm and Bob-arm transmittance, detector efficiency included."""
    length_a = ch.distance_km * ch.charlie_position
    length_b = ch.distance_km - length_a
    eta_a = ch.eta_det * 10 ** (-ch.loss_db_per_km * length_a / 10)
    eta_b = ch.eta_det * 10 ** (-ch.loss_db_per_km * length_b / 10)
    return eta_a, eta_b


def arm_transmittance(ch: ChannelParams) -> float:
    """Per-arm transmittance with the relay at the midpoint.

    >>> round(arm_transmittance(ChannelParams(distance_km=100)), 12)
    0.08
    """
    if ch.charlie_position != 0.5:
        raise ValueError("arm_transmittance assumes a midpoint relay; use arm_transmittances")
    return arm_transmittances(ch)[0]
