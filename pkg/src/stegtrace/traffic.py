"""Emission schedules for clean, LACK and delay-modulation streams.

Times are integer microseconds. A schedule records, for every packet of a
stream, the time the source puts it on the wire and whether the packet was
used for steganography.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import InvalidParameterError

MS = 1000  # microseconds per millisecond

# Minimum sequence distance between two steganographic packets. Three keeps the
# neighbourhoods of LACK packets disjoint (packet k, its successor k+1, and the
# packet k+2 that follows it on the wire), which is also why P must stay below 1/3.
LACK_MIN_SEPARATION = 3
DELAYMOD_MIN_SEPARATION = 2


@dataclass(frozen=True)
class StreamSpec:
    stream_id: str
    source: int
    destination: int
    T1: int
    duration: int

    def __post_init__(self):
        if self.T1 <= 0:
            raise InvalidParameterError(f"T1 must be positive, got {self.T1}")
        if self.duration < self.T1:
            raise InvalidParameterError(f"duration {self.duration} is shorter than T1 {self.T1}")
        if self.source == self.destination:
            raise InvalidParameterError(f"stream {self.stream_id!r} has identical source and destination")

    @property
    def packet_count(self) -> int:
        return self.duration // self.T1


@dataclass(frozen=True)
class NoSteg:
    kind = "none"


@dataclass(frozen=True)
class Lack:
    T2: int
    P: float
    kind = "lack"

    def __post_init__(self):
        if self.T2 <= 0:
            raise InvalidParameterError(f"LACK T2 must be positive, got {self.T2}")
        if not 0 <= self.P < 1 / LACK_MIN_SEPARATION:
            raise InvalidParameterError(f"LACK P must lie in [0, 1/3), got {self.P}")


@dataclass(frozen=True)
class DelayMod:
    T2: int
    P: float
    L: int
    bits: tuple[int, ...] | None = None
    kind = "delaymod"

    def __post_init__(self):
        if self.T2 <= 0:
            raise InvalidParameterError(f"delay-modulation T2 must be positive, got {self.T2}")
        if not 0 <= self.P < 1 / DELAYMOD_MIN_SEPARATION:
            raise InvalidParameterError(f"delay-modulation P must lie in [0, 1/2), got {self.P}")
        if self.L < 1:
            raise InvalidParameterError(f"buffer length L must be >= 1, got {self.L}")
        if self.bits is not None:
            if any(b not in (0, 1) for b in self.bits):
                raise InvalidParameterError("bits must be 0 or 1")
            object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))


StegMethod = Union[NoSteg, Lack, DelayMod]


@dataclass(frozen=True, eq=False)
class EmissionSchedule:
    """Per-packet departure times at the source, indexed by sequence number.

    ``symbol`` holds the carried bit for delay-modulated packets and -1
    everywhere else.
    """

    emit_time: np.ndarray
    steg: np.ndarray
    symbol: np.ndarray

    def __len__(self) -> int:
        return len(self.emit_time)

    @property
    def seq(self) -> np.ndarray:
        return np.arange(len(self.emit_time))

    @property
    def steg_count(self) -> int:
        return int(self.steg.sum())

    def entries(self) -> list[tuple[int, int, bool, int | None]]:
        return [
            (k, int(t), bool(s), None if b < 0 else int(b))
            for k, (t, s, b) in enumerate(zip(self.emit_time, self.steg, self.symbol))
        ]

    def wire_gaps(self) -> np.ndarray:
        """Gaps between consecutive packets in departure order."""
        return np.diff(np.sort(self.emit_time, kind="stable"))

    def __eq__(self, other):
        if not isinstance(other, EmissionSchedule):
            return NotImplemented
        return (
            np.array_equal(self.emit_time, other.emit_time)
            and np.array_equal(self.steg, other.steg)
            and np.array_equal(self.symbol, other.symbol)
        )


@dataclass(frozen=True)
class GapProfile:
    """Expected inter-packet gap values and the fraction of gaps at each."""

    values: tuple[int, ...]
    fractions: tuple[float, ...]

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.values, self.fractions))

    def __len__(self) -> int:
        return len(self.values)


def _select_positions(n: int, count: int, min_sep: int, rng: np.random.Generator) -> np.ndarray:
    """Pick ``count`` sequence numbers in [1, n-2], pairwise at least ``min_sep`` apart.

    Every admissible placement is equally likely: choose ``count`` points from a
    compressed range, then re-insert the mandatory spacing.
    """
    if count == 0:
        return np.empty(0, dtype=np.int64)
    eligible = n - 2
    free = eligible - (count - 1) * (min_sep - 1)
    if free < count:
        raise InvalidParameterError(
            f"cannot place {count} steganographic packets {min_sep} apart in a {n}-packet stream"
        )
    picks = np.sort(rng.choice(free, size=count, replace=False))
    return 1 + picks + np.arange(count) * (min_sep - 1)


def _target_count(P: float, n: int) -> int:
    return math.floor(P * n + 0.5)


def _empty_schedule(n: int, T1: int, offset: int = 0) -> EmissionSchedule:
    return EmissionSchedule(
        emit_time=np.arange(n, dtype=np.int64) * T1 + offset,
        steg=np.zeros(n, dtype=bool),
        symbol=np.full(n, -1, dtype=np.int8),
    )


def schedule_clean(spec: StreamSpec) -> EmissionSchedule:
    return _empty_schedule(spec.packet_count, spec.T1)


def _check_lack(method: Lack, T1: int) -> None:
    if method.T2 == T1:
        raise InvalidParameterError("LACK T2 equal to T1 makes the delayed packet collide with its successor")
    if method.T2 >= 2 * T1:
        raise InvalidParameterError(
            f"LACK T2={method.T2} must stay below 2*T1={2 * T1} so a delayed packet overtakes only its successor"
        )


def schedule_lack(spec: StreamSpec, method: Lack, rng_seed: int) -> EmissionSchedule:
    """Delay a seeded selection of packets by ``T2``.

    Exactly ``round(P * N)`` packets are delayed, chosen uniformly among the
    placements that keep them at least three sequence numbers apart.
    """
    _check_lack(method, spec.T1)
    sched = _empty_schedule(spec.packet_count, spec.T1)
    n = len(sched)
    count = _target_count(method.P, n)
    rng = np.random.default_rng(rng_seed)
    chosen = _select_positions(n, count, LACK_MIN_SEPARATION, rng)
    sched.emit_time[chosen] += method.T2
    sched.steg[chosen] = True
    return sched


def schedule_delaymod(spec: StreamSpec, method: DelayMod, rng_seed: int) -> EmissionSchedule:
    """Shift modulated packets by +T2 (bit 1) or -T2 (bit 0).

    The sender holds ``L`` packets in a buffer, so every packet leaves ``L * T1``
    later than its nominal slot; that headroom is what allows advancing one.
    With explicit ``bits`` the number of modulated packets equals ``len(bits)``;
    otherwise ``round(P * N)`` packets carry random bits.
    """
    if method.T2 >= spec.T1:
        raise InvalidParameterError(f"delay modulation needs T2 < T1, got T2={method.T2} T1={spec.T1}")
    sched = _empty_schedule(spec.packet_count, spec.T1, offset=method.L * spec.T1)
    n = len(sched)
    rng = np.random.default_rng(rng_seed)
    count = len(method.bits) if method.bits is not None else _target_count(method.P, n)
    chosen = _select_positions(n, count, DELAYMOD_MIN_SEPARATION, rng)
    if method.bits is not None:
        bits = np.asarray(method.bits, dtype=np.int8)
    else:
        bits = rng.integers(0, 2, size=count).astype(np.int8)
    sched.emit_time[chosen] += np.where(bits == 1, method.T2, -method.T2)
    sched.steg[chosen] = True
    sched.symbol[chosen] = bits
    return sched


def schedule_stream(spec: StreamSpec, method: StegMethod, rng_seed: int) -> EmissionSchedule:
    if isinstance(method, Lack):
        return schedule_lack(spec, method, rng_seed)
    if isinstance(method, DelayMod):
        return schedule_delaymod(spec, method, rng_seed)
    return schedule_clean(spec)


def analytic_gap_profile(method: StegMethod, T1: int) -> GapProfile:
    """Expected gap values (in departure order) and their share of all gaps."""
    parts: list[tuple[int, float]]
    if isinstance(method, Lack) and method.P > 0:
        P, T2 = method.P, method.T2
        if T2 > T1:
            # wire order k-1, k+1, k, k+2 around a delayed packet k
            parts = [(abs(T2 - T1), P), (2 * T1, P), (abs(2 * T1 - T2), P), (T1, 1 - 3 * P)]
        else:
            parts = [(T1 + T2, P), (T1 - T2, P), (T1, 1 - 2 * P)]
    elif isinstance(method, DelayMod) and method.P > 0:
        P, T2 = method.P, method.T2
        parts = [(T1 + T2, P), (T1 - T2, P), (T1, 1 - 2 * P)]
    else:
        parts = [(T1, 1.0)]
    merged: dict[int, float] = {}
    for value, frac in parts:
        merged[value] = merged.get(value, 0.0) + frac
    values = tuple(sorted(merged))
    return GapProfile(values, tuple(merged[v] for v in values))


def decode_delaymod(gaps, method: DelayMod, T1: int) -> list[int]:
    """Recover bits from a gap series of one delay-modulated stream.

    A long gap (T1+T2) followed by a short one (T1-T2) is a 1, the reverse a 0.
    Gaps are classified against the expected values with a T2/2 window; gaps
    that fit neither are nominal and unmatched halves are ignored.
    """
    values = np.asarray(getattr(gaps, "values", gaps), dtype=float)
    long_gap, short_gap = T1 + method.T2, T1 - method.T2
    window = method.T2 / 2
    labels: list[str] = []
    for g in values:
        if abs(g - long_gap) < window:
            labels.append("H")
        elif abs(g - short_gap) < window:
            labels.append("L")
        else:
            labels.append("N")
    bits: list[int] = []
    i = 0
    while i < len(labels) - 1:
        pair = labels[i] + labels[i + 1]
        if pair == "HL":
            bits.append(1)
            i += 2
        elif pair == "LH":
            bits.append(0)
            i += 2
        else:
            i += 1
    return bits


def bits_from_string(text: str) -> tuple[int, ...]:
    if any(ch not in "01" for ch in text):
        raise InvalidParameterError(f"bit string may contain only 0 and 1: {text!r}")
    return tuple(int(ch) for ch in text)


def bits_to_string(bits: Sequence[int]) -> str:
    return "".join(str(int(b)) for b in bits)
