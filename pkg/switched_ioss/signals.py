"""Switching signals: representation, validation, generation and window counts."""
from __future__ import annotations

import bisect
import json
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import DEFAULT_SIGNAL_RESOLUTION, GRID_TOL
from .errors import DeadEndError, SignalDomainError, SignalError
from .family import StabilityClass, SystemFamily

if TYPE_CHECKING:  # pragma: no cover
    from .conditions import DwellCertificate

log = logging.getLogger("switched_ioss")

ClassMap = Union[SystemFamily, Mapping[int, Union[StabilityClass, str, bool]]]


def _stable_set(classes: ClassMap) -> set:
    if isinstance(classes, SystemFamily):
        return set(classes.stable)
    out = set()
    for p, c in classes.items():
        if c is True or c in (StabilityClass.STABLE, "stable", "S"):
            out.add(int(p))
    return out


@dataclass(frozen=True)
class SwitchingSignal:
    """
    Right-continuous piecewise-constant ``sigma``: ``sigma(t) = index_i`` on
    ``[tau_i, tau_{i+1})``, defined on ``[0, horizon]``.
    """

    entries: Tuple[Tuple[float, int], ...]
    horizon: float

    def __post_init__(self):
        entries = tuple((float(t), int(p)) for t, p in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise SignalError("a switching signal needs at least one entry")
        if entries[0][0] != 0.0:
            raise SignalError(f"first switching instant must be 0, got {entries[0][0]}")
        taus = [t for t, _ in entries]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise SignalError("switching instants must be strictly increasing")
        if not self.horizon > taus[-1]:
            raise SignalError(f"horizon {self.horizon} must exceed the last instant {taus[-1]}")

    @classmethod
    def constant(cls, index: int, horizon: float) -> "SwitchingSignal":
        return cls(((0.0, index),), horizon)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.entries])

    @property
    def indices(self) -> List[int]:
        return [p for _, p in self.entries]

    @property
    def switch_count(self) -> int:
        return len(self.entries) - 1

    def evaluate(self, t: float) -> int:
        if not (0.0 <= t <= self.horizon):
            raise SignalDomainError(f"t={t} outside [0, {self.horizon}]")
        i = bisect.bisect_right([tau for tau, _ in self.entries], t) - 1
        return self.entries[i][1]

    __call__ = evaluate

    def evaluate_many(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if ts.size and (ts.min() < 0.0 or ts.max() > self.horizon):
            raise SignalDomainError(f"times outside [0, {self.horizon}]")
        pos = np.searchsorted(self.times, ts, side="right") - 1
        return np.asarray(self.indices)[pos]

    def segments(self) -> List[Tuple[float, float, int]]:
        """``(start, end, index)`` for each activation, the last one ending at the horizon."""
        ends = [t for t, _ in self.entries[1:]] + [self.horizon]
        return [(t, e, p) for (t, p), e in zip(self.entries, ends)]

    def dwell_times(self) -> List[float]:
        """Inter-switch gaps followed by the final partial dwell."""
        return [e - s for s, e, _ in self.segments()]

    def truncate(self, horizon: float) -> "SwitchingSignal":
        kept = tuple((t, p) for t, p in self.entries if t < horizon)
        return SwitchingSignal(kept, horizon)

    def to_dict(self) -> Dict:
        return {"entries": [[t, p] for t, p in self.entries], "horizon": self.horizon}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "SwitchingSignal":
        try:
            return cls(tuple((t, p) for t, p in obj["entries"]), float(obj["horizon"]))
        except (KeyError, TypeError, ValueError) as e:
            raise SignalError(f"malformed signal JSON: {e}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SwitchingSignal":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise SignalError(f"malformed signal JSON: {e}") from None

    def to_frame(self, step: float) -> pd.DataFrame:
        n = int(round(self.horizon / step))
        t = np.arange(n + 1) * step
        t[-1] = min(t[-1], self.horizon)
        return pd.DataFrame({"t": t, "sigma": self.evaluate_many(t)})


# --- counts on ]s, t] -------------------------------------------------------


@dataclass(frozen=True)
class SwitchCounts:
    N: int
    N_S: int
    N_U: int
    T_S: float
    T_U: float


def counts(signal: SwitchingSignal, classes: ClassMap, s: float, t: float) -> SwitchCounts:
    """
    Switches on the half-open window ``]s, t]`` split by the class of the mode
    switched into, and activation time of each class inside the window.
    """
    if not s < t:
        raise SignalDomainError(f"degenerate interval ]{s}, {t}]")
    if s < 0 or t > signal.horizon:
        raise SignalDomainError(f"interval ]{s}, {t}] outside [0, {signal.horizon}]")
    stable = _stable_set(classes)
    n_s = n_u = 0
    for tau, p in signal.entries[1:]:
        if s < tau <= t:
            if p in stable:
                n_s += 1
            else:
                n_u += 1
    t_u = 0.0
    for a, b, p in signal.segments():
        if p not in stable:
            t_u += max(0.0, min(b, t) - max(a, s))
    t_s = (t - s) - t_u
    return SwitchCounts(n_s + n_u, n_s, n_u, t_s, t_u)


def _ticks(x: float) -> int:
    return int(round(x / GRID_TOL))


@dataclass(frozen=True)
class WindowBound:
    name: str
    lhs: float
    rhs: float
    holds: bool


def window_bounds(
    signal: SwitchingSignal,
    classes: ClassMap,
    s: float,
    t: float,
    delta: float,
    Delta: float,
    delta_check: float,
    Delta_hat: float,
) -> List[WindowBound]:
    """
    Counting and duration bounds on ``]s, t]`` for a stabilizing signal.

    Durations are snapped onto a 1e-9 grid and compared as integers. The
    upper count bound carries ``+1`` and the unstable-count bound rounds up,
    since a window may start just before a switch. The stable-time bound
    discounts a final switch into a stable mode whose dwell is cut by ``t``.
    The lower count bound is skipped when ``t`` is the horizon.
    """
    c = counts(signal, classes, s, t)
    stable = _stable_set(classes)
    L = _ticks(t - s)
    in_window = [p for tau, p in signal.entries[1:] if s < tau <= t]
    last_into_stable = bool(in_window) and in_window[-1] in stable

    out = []
    if t < signal.horizon:
        lo = L // _ticks(Delta)
        out.append(WindowBound("N >= floor(L/Delta)", c.N, lo, c.N >= lo))
    hi = L // _ticks(delta) + 1
    out.append(WindowBound("N <= floor(L/delta) + 1", c.N, hi, c.N <= hi))
    nu = math.ceil(c.N / 2)
    out.append(WindowBound("N_U <= ceil(N/2)", c.N_U, nu, c.N_U <= nu))
    k = c.N_S - int(last_into_stable)
    ts_lo = k * _ticks(delta_check)
    out.append(WindowBound("T_S >= N_S' * delta_check", _ticks(c.T_S), ts_lo, _ticks(c.T_S) >= ts_lo))
    tu_hi = (c.N_U + 1) * _ticks(Delta_hat)
    out.append(WindowBound("T_U <= (N_U + 1) * Delta_hat", _ticks(c.T_U), tu_hi, _ticks(c.T_U) <= tu_hi))
    return out


# --- validation -------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    position: int
    reason: str
    detail: str = ""

    def __str__(self) -> str:
        extra = f" ({self.detail})" if self.detail else ""
        return f"{self.reason} at {self.position}{extra}"


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return not self.violations

    def reasons(self) -> List[str]:
        return [v.reason for v in self.violations]

    def to_dict(self) -> Dict:
        return {"passed": self.passed, "violations": [str(v) for v in self.violations]}


def _is_sink(family: SystemFamily, p: int) -> bool:
    return not family.graph.successors(p)


def _admissible_violations(signal: SwitchingSignal, family: SystemFamily, tol: float) -> List[Violation]:
    out: List[Violation] = []
    idx = signal.indices
    for i, p in enumerate(idx):
        if p not in family.subsystems:
            out.append(Violation(i, "unknown subsystem", str(p)))
    for i, (p, q) in enumerate(zip(idx, idx[1:])):
        if not family.graph.allows(p, q):
            out.append(Violation(i, "edge not allowed", f"({p}, {q})"))
    dwells = signal.dwell_times()
    for i, g in enumerate(dwells[:-1]):
        if g < family.delta - tol:
            out.append(Violation(i, "dwell too short", f"{g:g} < {family.delta:g}"))
        if g > family.Delta + tol:
            out.append(Violation(i, "dwell too long", f"{g:g} > {family.Delta:g}"))
    last = len(dwells) - 1
    if dwells[-1] > family.Delta + tol and not _is_sink(family, idx[-1]):
        out.append(Violation(last, "dwell too long", f"final {dwells[-1]:g} > {family.Delta:g}"))
    return out


def validate_admissible(signal: SwitchingSignal, family: SystemFamily, tol: float = GRID_TOL) -> ValidationReport:
    """
    Edges must be in the switch graph and inter-switch gaps in ``[delta, Delta]``.

    The final partial dwell is exempt from the minimum but capped at
    ``Delta`` unless the final mode has no outgoing edge.
    """
    return ValidationReport(tuple(_admissible_violations(signal, family, tol)))


def validate_stabilizing(
    signal: SwitchingSignal,
    family: SystemFamily,
    cert: "DwellCertificate",
    tol: float = GRID_TOL,
) -> ValidationReport:
    """Admissible, no two consecutive unstable activations, class-dependent dwell windows."""
    out = _admissible_violations(signal, family, tol)
    idx = signal.indices
    stable = set(family.stable)
    for i, (p, q) in enumerate(zip(idx, idx[1:])):
        if p not in stable and q not in stable:
            out.append(Violation(i, "consecutive unstable", f"{p} -> {q}"))
    dwells = signal.dwell_times()
    last = len(dwells) - 1
    for i, (g, p) in enumerate(zip(dwells, idx)):
        final = i == last
        if p in stable:
            lo, hi, tag = cert.delta_check, family.Delta, "stable dwell outside [delta_check, Delta]"
        else:
            lo, hi, tag = family.delta, cert.Delta_hat, "unstable dwell outside [delta, Delta_hat]"
        too_short = not final and g < lo - tol
        too_long = g > hi + tol and not (final and _is_sink(family, p))
        if too_short or too_long:
            out.append(Violation(i, tag, f"{g:g}"))
    return ValidationReport(tuple(out))


# --- generation -------------------------------------------------------------


def _draw_ticks(rng: np.random.Generator, lo: float, hi: float, resolution: float) -> int:
    k_lo = math.ceil(lo / resolution - GRID_TOL)
    k_hi = math.floor(hi / resolution + GRID_TOL)
    if k_hi < k_lo:
        raise SignalError(f"no multiple of {resolution:g} in the dwell window [{lo:g}, {hi:g}]")
    return int(rng.integers(k_lo, k_hi + 1))


def generate_signal(
    family: SystemFamily,
    cert: "DwellCertificate",
    horizon: float,
    seed: int,
    resolution: float = DEFAULT_SIGNAL_RESOLUTION,
) -> SwitchingSignal:
    """
    Draw a random stabilizing signal on ``[0, horizon]``.

    The first mode is uniform over all modes. Each next mode is uniform over
    the out-edges allowed after the current mode (an unstable mode may only
    be followed by a stable one). Dwell times are uniform multiples of
    ``resolution`` in ``[delta_check, Delta]`` for stable modes and
    ``[delta, Delta_hat]`` for unstable ones. A mode without out-edges is
    kept until the horizon.

    Raises
    ------
    DeadEndError
        When the current mode has out-edges but none is allowed.
    """
    if not horizon > 0:
        raise SignalDomainError(f"horizon must be positive, got {horizon}")
    if not cert.feasible:
        raise SignalError("cannot generate signals from an infeasible certificate")
    rng = np.random.default_rng(seed)
    per_unit = round(1.0 / resolution)
    exact = abs(per_unit * resolution - 1.0) < 1e-12
    stable = set(family.stable)
    modes = family.indices
    p = modes[int(rng.integers(len(modes)))]
    ticks = 0
    entries = [(0.0, p)]
    while True:
        succ = family.graph.successors(p)
        if not succ:
            break
        allowed = succ if p in stable else [q for q in succ if q in stable]
        if not allowed:
            raise DeadEndError(p)
        if p in stable:
            ticks += _draw_ticks(rng, cert.delta_check, family.Delta, resolution)
        else:
            ticks += _draw_ticks(rng, family.delta, cert.Delta_hat, resolution)
        tau = ticks / per_unit if exact else ticks * resolution
        if tau >= horizon - GRID_TOL:
            break
        p = allowed[int(rng.integers(len(allowed)))]
        entries.append((tau, p))
    return SwitchingSignal(tuple(entries), float(horizon))


def generate_signals(
    family: SystemFamily,
    cert: "DwellCertificate",
    horizon: float,
    seeds: Iterable[int],
    resolution: float = DEFAULT_SIGNAL_RESOLUTION,
) -> List[SwitchingSignal]:
    return [generate_signal(family, cert, horizon, s, resolution) for s in seeds]
