"""Fixed-step simulation of the switched plant and of both state-norm estimators.

All integration uses the classical four-stage Runge-Kutta step on a
uniform grid ``t_k = k h``. Switching instants must fall on grid nodes;
inputs and the forcing term ``gamma1(|v|) + gamma2(|y|)`` are held at their
node value over each step.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from .config import DEFAULT_STEP, DIVERGENCE_NORM, GRID_TOL
from .errors import DivergenceError, EmptyTrajectoryError, SignalDomainError, SimulationError, SwitchMisalignmentError
from .family import LyapunovData, SystemFamily
from .inputs import InputSignal
from .signals import SwitchingSignal

if TYPE_CHECKING:  # pragma: no cover
    from .conditions import DwellCertificate, EstimatorParams

log = logging.getLogger("switched_ioss")


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def rk4_solve(f: Callable[[float, np.ndarray], np.ndarray], x0, h: float, n_steps: int) -> np.ndarray:
    """Integrate ``x' = f(t, x)`` for ``n_steps`` steps; returns all ``n_steps + 1`` nodes."""
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    out = np.empty((n_steps + 1, x.size))
    out[0] = x
    for k in range(n_steps):
        x = rk4_step(f, k * h, x, h)
        out[k + 1] = x
    return out


def time_grid(h: float, T: float) -> np.ndarray:
    """Nodes ``0, h, ..., T``; ``T`` must be a multiple of ``h``."""
    if not h > 0:
        raise SimulationError(f"step must be positive, got {h}")
    if not T > 0:
        raise EmptyTrajectoryError(f"horizon must be positive, got {T}")
    K = int(round(T / h))
    if K == 0 or abs(K * h - T) > GRID_TOL * max(1.0, T):
        raise SwitchMisalignmentError(f"horizon {T} is not a multiple of the step {h}")
    return np.arange(K + 1) * h


def _switch_nodes(signal: SwitchingSignal, h: float, K: int) -> np.ndarray:
    """Mode index active on each step ``[t_k, t_{k+1})``, from switches snapped to nodes."""
    modes = np.empty(K + 1, dtype=int)
    modes[:] = signal.entries[0][1]
    for tau, p in signal.entries[1:]:
        k = int(round(tau / h))
        if k > K:
            break
        if abs(k * h - tau) > GRID_TOL:
            raise SwitchMisalignmentError(f"switching instant {tau} is not on the grid of step {h}")
        modes[k:] = p
    return modes


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Node values of one co-simulation run; optional estimator channels may be None."""

    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray
    sigma: np.ndarray
    z: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    zeta: Optional[np.ndarray] = None
    upsilon: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.times)
        if n == 0:
            raise EmptyTrajectoryError("trajectory has no nodes")
        for name in ("states", "outputs", "inputs", "sigma", "z", "w", "zeta", "upsilon"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise SimulationError(f"channel {name} has {len(arr)} nodes, expected {n}")

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def state_norm(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def input_norm(self) -> np.ndarray:
        return np.linalg.norm(self.inputs, axis=1)

    def output_norm(self) -> np.ndarray:
        return np.linalg.norm(self.outputs, axis=1)

    def with_channels(self, **channels) -> "Trajectory":
        return replace(self, **channels)

    def to_frame(self) -> pd.DataFrame:
        """Columns ``t, x1.., y1.., v1.., sigma, z, w, zeta, upsilon``; missing channels are empty."""
        n = len(self.times)
        cols: Dict[str, np.ndarray] = {"t": self.times}
        for prefix, arr in (("x", self.states), ("y", self.outputs), ("v", self.inputs)):
            for i in range(arr.shape[1]):
                cols[f"{prefix}{i + 1}"] = arr[:, i]
        cols["sigma"] = self.sigma
        for name in ("z", "w", "zeta", "upsilon"):
            arr = getattr(self, name)
            cols[name] = arr if arr is not None else np.full(n, np.nan)
        return pd.DataFrame(cols)


def integrate_switched(
    family: SystemFamily,
    signal: SwitchingSignal,
    input: InputSignal,
    x0,
    h: float = DEFAULT_STEP,
    T: Optional[float] = None,
) -> Trajectory:
    """
    Integrate ``x' = f_sigma(x, v)`` and record ``y = h_sigma(x)`` at every node.

    The state is continuous across switches; the new mode applies from the
    switching node onward.

    Raises
    ------
    SwitchMisalignmentError
        A switching instant or the horizon is off the grid.
    DivergenceError
        The state becomes non-finite or its norm exceeds the divergence bound.
    """
    T = signal.horizon if T is None else T
    if T > signal.horizon + GRID_TOL:
        raise SignalDomainError(f"horizon {T} exceeds the signal horizon {signal.horizon}")
    times = time_grid(h, T)
    K = len(times) - 1
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != family.state_dim:
        raise SimulationError(f"x0 has {x.size} entries, state dimension is {family.state_dim}")
    modes = _switch_nodes(signal, h, K)
    v = input.sample(times, family.input_dim)

    rhs = {p: s.rhs_function() for p, s in family.subsystems.items()}
    out = {p: s.output_function() for p, s in family.subsystems.items()}
    states = np.empty((K + 1, family.state_dim))
    outputs = np.empty((K + 1, family.output_dim))
    states[0] = x
    for k in range(K):
        f = rhs[modes[k]]
        vk = v[k]
        x = rk4_step(lambda _t, xx: f(xx, vk), times[k], x, h)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
            raise DivergenceError(k + 1, float(times[k + 1]))
        states[k + 1] = x
    for k in range(K + 1):
        outputs[k] = out[modes[k]](states[k])
    return Trajectory(times, states, outputs, v, modes)


# --- estimators ---------------------------------------------------------------


def zeta_schedule(delta_tilde: float, Delta_tilde: float, t: float, tol: float = GRID_TOL) -> int:
    """
    Mode of the periodic estimator schedule: 0 on ``]kP, kP + delta~]``,
    1 on ``]kP + delta~, (k+1)P]`` with ``P = delta~ + Delta~``, and 0 at ``t = 0``.
    """
    if not (delta_tilde > 0 and Delta_tilde > 0):
        raise SimulationError("schedule durations must be positive")
    if t < 0:
        raise SignalDomainError(f"negative time {t}")
    if t <= tol:
        return 0
    P = delta_tilde + Delta_tilde
    k = math.ceil(t / P - tol) - 1
    r = t - k * P
    return 0 if r <= delta_tilde + tol else 1


def zeta_schedule_many(delta_tilde: float, Delta_tilde: float, times: np.ndarray, tol: float = GRID_TOL) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise SignalDomainError("negative time in schedule query")
    P = delta_tilde + Delta_tilde
    k = np.ceil(times / P - tol) - 1
    r = times - k * P
    out = np.where(r <= delta_tilde + tol, 0, 1)
    out[times <= tol] = 0
    return out.astype(int)


def gamma_bar(lyapunov: LyapunovData, v: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Node values of ``gamma1(|v|) + gamma2(|y|)``."""
    v_norm = np.linalg.norm(np.atleast_2d(v), axis=1) if np.size(v) else np.zeros(len(y))
    y_norm = np.linalg.norm(np.atleast_2d(y), axis=1) if np.size(y) else np.zeros(len(v))
    return np.asarray(lyapunov.gamma_bar(v_norm, y_norm), dtype=float)


def _integrate_scalar_modes(
    rates: np.ndarray, forcing: np.ndarray, s0: float, h: float, times: np.ndarray, channel: str
) -> np.ndarray:
    """RK4 for ``s' = rate_k s + g_k`` with rate and forcing held over step ``k``."""
    if s0 < 0:
        raise SimulationError(f"{channel}0 must be nonnegative, got {s0}")
    K = len(times) - 1
    out = np.empty(K + 1)
    out[0] = s = float(s0)
    for k in range(K):
        a, g = rates[k], forcing[k]
        s = float(rk4_step(lambda _t, ss: a * ss + g, times[k], np.array([s]), h)[0])
        if not math.isfinite(s) or abs(s) > DIVERGENCE_NORM:
            raise DivergenceError(k + 1, float(times[k + 1]), channel)
        out[k + 1] = s
    if out.min() < -1e-12:
        raise SimulationError(f"{channel} became negative ({out.min():g})")
    return out


def integrate_estimator(
    params: "EstimatorParams",
    family: SystemFamily,
    v: np.ndarray,
    y: np.ndarray,
    z0: float,
    h: float = DEFAULT_STEP,
    T: Optional[float] = None,
) -> np.ndarray:
    """
    Integrate ``z' = g_zeta(z)`` with ``g_0 = -lambda_s* z + gbar`` and
    ``g_1 = lambda_u* z + gbar``; ``v`` and ``y`` are node samples on the
    same grid. The schedule mode of a step is read at its midpoint.
    """
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    T = (len(v) - 1) * h if T is None else T
    times = time_grid(h, T)
    if len(v) != len(times) or len(y) != len(times):
        raise SimulationError("v and y must be sampled on the estimator grid")
    zeta = zeta_schedule_many(params.delta_tilde, params.Delta_tilde, times[:-1] + 0.5 * h)
    rates = np.where(zeta == 0, -params.lambda_s_star, params.lambda_u_star)
    g = gamma_bar(family.lyapunov, v, y)
    return _integrate_scalar_modes(rates, g, z0, h, times, "z")


def upsilon_channel(family: SystemFamily, sigma: np.ndarray) -> np.ndarray:
    stable = np.array(family.stable)
    return np.where(np.isin(sigma, stable), 0, 1).astype(int)


def integrate_reference_estimator(
    family: SystemFamily,
    cert: "DwellCertificate",
    params: "EstimatorParams",
    signal: SwitchingSignal,
    v: np.ndarray,
    y: np.ndarray,
    w0: float,
    h: float = DEFAULT_STEP,
    T: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integrate the signal-tracking estimator ``w' = g_upsilon(w)`` where
    ``upsilon = 0`` exactly when the active mode is stable.

    Returns ``(w, upsilon)`` on the node grid.
    """
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    T = (len(v) - 1) * h if T is None else T
    times = time_grid(h, T)
    if len(v) != len(times) or len(y) != len(times):
        raise SimulationError("v and y must be sampled on the estimator grid")
    upsilon = upsilon_channel(family, _switch_nodes(signal, h, len(times) - 1))
    rates = np.where(upsilon == 0, -params.lambda_s_star, params.lambda_u_star)
    g = gamma_bar(family.lyapunov, v, y)
    w = _integrate_scalar_modes(rates, g, w0, h, times, "w")
    return w, upsilon


def co_simulate(
    family: SystemFamily,
    cert: "DwellCertificate",
    params: "EstimatorParams",
    signal: SwitchingSignal,
    input: InputSignal,
    x0,
    z0: float,
    w0: Optional[float] = None,
    h: float = DEFAULT_STEP,
    T: Optional[float] = None,
) -> Trajectory:
    """Plant plus both estimators on one grid; ``w0`` defaults to ``z0``."""
    traj = integrate_switched(family, signal, input, x0, h, T)
    z = integrate_estimator(params, family, traj.inputs, traj.outputs, z0, h, traj.horizon)
    w, upsilon = integrate_reference_estimator(
        family, cert, params, signal, traj.inputs, traj.outputs, z0 if w0 is None else w0, h, traj.horizon
    )
    zeta = zeta_schedule_many(params.delta_tilde, params.Delta_tilde, traj.times)
    return traj.with_channels(z=z, w=w, zeta=zeta, upsilon=upsilon)
