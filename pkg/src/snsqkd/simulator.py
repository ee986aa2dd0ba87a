"""Window-level Monte Carlo of the sending-or-not-sending protocol.

Random numbers come from the Philox4x64-10 counter-based generator
(``numpy.random.Philox``) keyed with ``(seed, shard_index)`` and a zero
counter. Each chunk of ``n`` windows consumes, in this order:

    1. ``random((2, n))``  send decisions, row 0 Alice, row 1 Bob
    2. ``random((2, n))``  global phases gamma_A, gamma_B  (post-selection only)
    3. ``random((2, n))``  intensity jitter                 (jitter > 0 only)
    4. ``random((2, n))``  left / right detector clicks
    5. ``random(n)``       test-subset assignment

so a shard's tally is a pure function of (params, channel, seed, shard
index, shard size, chunk size).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import (
    REAL_CLASSES,
    ZTILDE,
    ChannelParams,
    ConfigError,
    PhaseMode,
    ProtocolParams,
    UndefinedRateError,
    WindowClass,
    YieldSet,
    arm_transmittances,
    class_from_code,
)
from .photonics import accepted, click_probabilities, detector_intensities

SUBSETS = ("v", "u")
VARIANTS = ("all", "accepted")
N_CLASSES = len(WindowClass)
CHUNK_SIZE = 1 << 20

_N, _L, _R = 0, 1, 2


def provenance_of(params: ProtocolParams, ch: ChannelParams) -> str:
    blob = json.dumps({"protocol": params.to_dict(), "channel": ch.to_dict()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class ProvenanceMismatch(ValueError):
    pass


class WindowTally:
    """Window and single-click counts per subset, class and selection variant.

    ``counts[subset, class, variant, k]`` with k = 0 windows, 1 left-only
    clicks, 2 right-only clicks. Subset ``u`` holds every window not disclosed
    in ``v``. The ``accepted`` variant keeps only post-selected windows, with
    detectors relabeled where the phase difference is near pi; in
    compensation mode it equals ``all``.

    A tally with ``provenance=None`` is the merge identity for any provenance.
    """

    def __init__(self, counts: np.ndarray | None = None, provenance: str | None = None):
        if counts is None:
            counts = np.zeros((len(SUBSETS), N_CLASSES, len(VARIANTS), 3), dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.provenance = provenance

    @classmethod
    def zero(cls, provenance: str | None = None) -> "WindowTally":
        return cls(provenance=provenance)

    def merge(self, other: "WindowTally") -> "WindowTally":
        if None not in (self.provenance, other.provenance) and self.provenance != other.provenance:
            raise ProvenanceMismatch(f"cannot merge tallies from {self.provenance} and {other.provenance}")
        return WindowTally(self.counts + other.counts, self.provenance or other.provenance)

    __add__ = merge

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WindowTally):
            return NotImplemented
        return self.provenance == other.provenance and np.array_equal(self.counts, other.counts)

    def __repr__(self) -> str:
        return f"WindowTally(provenance={self.provenance!r}, windows={int(self.counts[:, :, 0, _N].sum())})"

    def _select(self, classes, subset, accepted_only: bool, k: int) -> int:
        if isinstance(classes, WindowClass):
            classes = (classes,)
        s = slice(None) if subset is None else SUBSETS.index(subset)
        cols = [c.code for c in classes]
        sub = self.counts[s][..., cols, int(accepted_only), k]
        return int(sub.sum())

    def n_windows(self, classes, subset: str | None = None, accepted_only: bool = False) -> int:
        return self._select(classes, subset, accepted_only, _N)

    def n_clicks(self, classes, detector: str, subset: str | None = None, accepted_only: bool = False) -> int:
        return self._select(classes, subset, accepted_only, _L if detector == "L" else _R)

    def n_effective(self, classes, subset: str | None = None, accepted_only: bool = False) -> int:
        return self.n_clicks(classes, "L", subset, accepted_only) + self.n_clicks(classes, "R", subset, accepted_only)

    def yield_of(self, classes, detector: str, subset: str | None = None, accepted_only: bool = False) -> float:
        n = self.n_windows(classes, subset, accepted_only)
        if n == 0:
            return math.nan
        return self.n_clicks(classes, detector, subset, accepted_only) / n

    def yield_set(self, subset: str | None = "v", accepted_only: bool = True) -> YieldSet:
        values = {}
        for name, classes in (("ztilde", ZTILDE), ("b", WindowClass.BOTH), ("o", WindowClass.NEITHER)):
            if self.n_windows(classes, subset, accepted_only) == 0:
                raise UndefinedRateError(f"no {name} windows in subset {subset!r}")
            for d in "LR":
                values[f"s_{name}_{d}"] = self.yield_of(classes, d, subset, accepted_only)
        return YieldSet(**values)

    def to_csv(self, accepted_only: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "detector", "n_windows", "n_effective", "subset"])
        classes = list(REAL_CLASSES) + [c for c in (WindowClass.XPLUS, WindowClass.XMINUS) if self.n_windows(c)]
        for subset in SUBSETS:
            for c in classes:
                for d in "LR":
                    w.writerow([c.value, d, self.n_windows(c, subset, accepted_only),
                                self.n_clicks(c, d, subset, accepted_only), subset])
        return buf.getvalue()

    def to_dict(self) -> dict:
        out: dict = {"provenance": self.provenance}
        for si, subset in enumerate(SUBSETS):
            for vi, variant in enumerate(VARIANTS):
                out[f"{subset}/{variant}"] = {
                    class_from_code(ci).value: dict(zip(("n_windows", "n_L", "n_R"), map(int, self.counts[si, ci, vi])))
                    for ci in range(N_CLASSES)
                }
        return out


@dataclass
class WindowRecords:
    """Per-window outcomes of one chunk. ``delta`` is None without phase sampling."""

    window_class: np.ndarray  # int8 class codes
    left: np.ndarray
    right: np.ndarray
    in_v: np.ndarray
    delta: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.window_class)


def _count(records: WindowRecords, mask: np.ndarray | None, swap: np.ndarray | None) -> np.ndarray:
    """(subset, class, 3) counts for the windows selected by ``mask``."""
    left, right = records.left, records.right
    if swap is not None:
        left, right = np.where(swap, right, left), np.where(swap, left, right)
    key = np.where(records.in_v, 0, N_CLASSES) + records.window_class.astype(np.int64)
    sel = np.ones(len(key), dtype=bool) if mask is None else mask
    size = len(SUBSETS) * N_CLASSES
    out = np.empty((size, 3), dtype=np.int64)
    out[:, _N] = np.bincount(key[sel], minlength=size)
    out[:, _L] = np.bincount(key[sel & left & ~right], minlength=size)
    out[:, _R] = np.bincount(key[sel & right & ~left], minlength=size)
    return out.reshape(len(SUBSETS), N_CLASSES, 3)


def tally_records(
    records: WindowRecords,
    lambda_ps: float | None = None,
    *,
    relabel: bool = True,
    provenance: str | None = None,
) -> WindowTally:
    """Tally a chunk of records; ``lambda_ps`` enables the accepted variant."""
    counts = np.zeros((len(SUBSETS), N_CLASSES, len(VARIANTS), 3), dtype=np.int64)
    counts[:, :, 0] = _count(records, None, None)
    if lambda_ps is None:
        counts[:, :, 1] = counts[:, :, 0]
    else:
        if records.delta is None:
            raise ValueError("post-selection needs per-window phases")
        mask = accepted(records.delta, lambda_ps)
        swap = (np.cos(records.delta) < 0) if relabel else None
        counts[:, :, 1] = _count(records, mask, swap)
    return WindowTally(counts, provenance)


def post_select(records: WindowRecords, lambda_ps: float, *, relabel: bool = True,
                provenance: str | None = None) -> WindowTally:
    """Tally of only the windows satisfying 1 - |cos(gamma_B - gamma_A)| <= |lambda|.

    Both variants of the returned tally hold the accepted windows.
    """
    if not 0 <= lambda_ps <= 1:
        raise ConfigError(f"lambda_ps must lie in [0, 1], got {lambda_ps}", field="lambda_ps")
    t = tally_records(records, lambda_ps, relabel=relabel, provenance=provenance)
    t.counts[:, :, 0] = t.counts[:, :, 1]
    return t


def sample_chunk(rng: np.random.Generator, n: int, params: ProtocolParams, ch: ChannelParams) -> WindowRecords:
    """Sample ``n`` windows; see the module docstring for the draw order."""
    eta_a, eta_b = arm_transmittances(ch)
    send = rng.random((2, n)) < params.q
    send_a, send_b = send[0], send[1]
    code = np.full(n, WindowClass.NEITHER.code, dtype=np.int8)
    code[send_a & ~send_b] = WindowClass.ZTILDE_A.code
    code[~send_a & send_b] = WindowClass.ZTILDE_B.code
    code[send_a & send_b] = WindowClass.BOTH.code

    delta = None
    if params.phase_mode is PhaseMode.POSTSELECTION:
        gamma = rng.random((2, n)) * (2 * math.pi)
        delta = gamma[1] - gamma[0]
    mu_a = np.where(send_a, params.mu, 0.0)
    mu_b = np.where(send_b, params.mu, 0.0)
    if params.intensity_jitter > 0:
        jit = rng.random((2, n))
        mu_a = mu_a * (1 - params.intensity_jitter * jit[0])
        mu_b = mu_b * (1 - params.intensity_jitter * jit[1])

    i_l, i_r = detector_intensities(eta_a * mu_a, eta_b * mu_b, 0.0 if delta is None else delta, ch.e_a)
    p_l, p_r = click_probabilities(i_l, i_r, ch.p_dark)
    u = rng.random((2, n))
    left = u[0] < p_l
    right = u[1] < p_r
    in_v = rng.random(n) < params.test_fraction_v
    return WindowRecords(code, left, right, in_v, delta)


def make_rng(seed: int, shard_index: int = 0) -> np.random.Generator:
    if seed < 0 or shard_index < 0:
        raise ValueError("seed and shard index must be non-negative")
    return np.random.Generator(np.random.Philox(key=[seed, shard_index]))


def shard_sizes(n_windows: int, shards: int) -> list[int]:
    base, extra = divmod(n_windows, shards)
    return [base + (i < extra) for i in range(shards)]


def run_shard(
    params: ProtocolParams,
    ch: ChannelParams,
    seed: int,
    shard_index: int,
    n_windows: int,
    *,
    chunk_size: int = CHUNK_SIZE,
    relabel: bool = True,
) -> WindowTally:
    rng = make_rng(seed, shard_index)
    prov = provenance_of(params, ch)
    lam = params.lambda_ps if params.phase_mode is PhaseMode.POSTSELECTION else None
    tally = WindowTally.zero(prov)
    remaining = n_windows
    while remaining > 0:
        n = min(chunk_size, remaining)
        records = sample_chunk(rng, n, params, ch)
        tally = tally.merge(tally_records(records, lam, relabel=relabel, provenance=prov))
        remaining -= n
    return tally


def bit_flip_error(tally: WindowTally, subset: str | None = "v", accepted_only: bool = True) -> float:
    """Fraction of effective windows whose two bits disagree.

    Single-sender windows always agree; both-send and neither-send windows
    always disagree.
    """
    wrong = tally.n_effective((WindowClass.BOTH, WindowClass.NEITHER), subset, accepted_only)
    total = tally.n_effective(REAL_CLASSES, subset, accepted_only)
    if total == 0:
        raise UndefinedRateError(f"no effective events in subset {subset!r}")
    return wrong / total


@dataclass
class SimulationResult:
    tally: WindowTally
    params: ProtocolParams
    channel: ChannelParams
    seed: int
    shards: int

    @property
    def accepted_only(self) -> bool:
        return self.params.phase_mode is PhaseMode.POSTSELECTION

    @property
    def yields(self) -> YieldSet:
        """Yields observed on the disclosed subset v."""
        return self.tally.yield_set("v", accepted_only=True)

    @property
    def e_z_observed(self) -> float:
        return bit_flip_error(self.tally, "v", accepted_only=True)

    @property
    def acceptance_observed(self) -> float:
        total = self.tally.n_windows(REAL_CLASSES)
        return self.tally.n_windows(REAL_CLASSES, accepted_only=True) / total

    def to_dict(self) -> dict:
        out: dict = {
            "config": {"protocol": self.params.to_dict(), "channel": self.channel.to_dict()},
            "seed": self.seed,
            "shards": self.shards,
            "rng": "Philox4x64-10, key=(seed, shard_index)",
            "chunk_size": CHUNK_SIZE,
            "acceptance_observed": self.acceptance_observed,
            "tally": self.tally.to_dict(),
        }
        try:
            out["yields_v"] = self.yields.to_dict()
            out["e_z_observed"] = self.e_z_observed
        except UndefinedRateError as exc:
            out["yields_v"] = None
            out["e_z_observed"] = None
            out["warning"] = str(exc)
        return out


def run(
    params: ProtocolParams,
    ch: ChannelParams,
    seed: int,
    *,
    shards: int = 1,
    workers: int = 1,
    chunk_size: int = CHUNK_SIZE,
    relabel: bool = True,
) -> SimulationResult:
    """Simulate ``params.n_windows`` windows split across ``shards`` streams.

    The result depends on ``shards`` but not on ``workers``.
    """
    if shards < 1:
        raise ValueError("shards must be >= 1")
    sizes = shard_sizes(params.n_windows, shards)

    def one(i: int) -> WindowTally:
        return run_shard(params, ch, seed, i, sizes[i], chunk_size=chunk_size, relabel=relabel)

    if workers > 1 and shards > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(shards)))
    else:
        parts = [one(i) for i in range(shards)]
    return SimulationResult(merge_all(parts), params, ch, seed, shards)


def merge_all(tallies: Iterable[WindowTally]) -> WindowTally:
    total = WindowTally.zero()
    for t in tallies:
        total = total.merge(t)
    return total
