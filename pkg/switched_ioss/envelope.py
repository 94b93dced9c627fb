"""Explicit stability and estimation envelopes, and their checks along runs.

The constants follow the stability argument for stabilizing signals:
``c1 = lambda_s dc + lambda_u Dh`` and ``c2 = -(dwell condition)`` bound the
exponential weight ``Xi``; ``psi2_bar`` bounds the accumulated input weight.
For the estimators, ``b``/``b_tilde`` bound the error between Lyapunov value
and the signal-tracking estimator ``w``, and ``c`` bounds ``w / z``.

The stability inequality is checked with ``alpha = alpha_lower``, the level
at which it is derived.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .comparison import KInfFunction
from .conditions import DwellCertificate, EstimatorParams, eval_eq9
from .config import GRID_TOL
from .errors import InfeasibleCertificateError, InfeasibleParametersError
from .family import LyapunovData, SystemFamily
from .signals import SwitchingSignal
from .sim import Trajectory, gamma_bar

log = logging.getLogger("switched_ioss")


def _tail_sum(c1: float, c2: float, dwell: float) -> float:
    """``exp(c1) / (exp(c2 dwell) - 1)``: geometric tail of ``exp(c1 - c2 k dwell)``, k >= 1."""
    return math.exp(c1) / math.expm1(c2 * dwell)


def psi2_bar_formula(c1: float, c2: float, dwell: float, rate_s: float, rate_u: Optional[float]) -> float:
    """
    ``(1/rate_s) e^c1 / (e^{c2 dwell} - 1) + (1/rate_u) e^c1 (1 + 1/(e^{c2 dwell} - 1))``;
    the second term is dropped when ``rate_u`` is None.
    """
    out = _tail_sum(c1, c2, dwell) / rate_s
    if rate_u is not None:
        out += (math.exp(c1) + _tail_sum(c1, c2, dwell)) / rate_u
    return out


@dataclass(frozen=True)
class Envelope:
    """Proof constants plus the comparison functions they are combined with."""

    c1: float
    c2: float
    psi2_bar: float
    alpha_lower: KInfFunction
    alpha_upper: KInfFunction
    gamma1: KInfFunction
    gamma2: KInfFunction
    degenerate: bool = False
    # estimation fields
    c1_tilde: Optional[float] = None
    c2_tilde: Optional[float] = None
    b: Optional[float] = None
    b_tilde: Optional[float] = None
    c_ratio: Optional[float] = None
    c_alternative: Optional[float] = None

    def beta(self, r, s):
        return np.asarray(self.alpha_upper(r)) * np.exp(self.c1 - self.c2 * np.asarray(s, dtype=float))

    def chi1(self, r):
        return np.asarray(self.gamma1(r)) * self.psi2_bar

    def chi2(self, r):
        return np.asarray(self.gamma2(r)) * self.psi2_bar

    @property
    def has_estimation(self) -> bool:
        return self.b is not None

    def beta_bar(self, r, t):
        arg = np.exp(self.c1 - self.c2 * np.asarray(t, dtype=float)) * np.asarray(self.alpha_upper(r))
        return self.alpha_lower.inverse(arg)

    def chi_bar(self, r):
        if self.b_tilde is None:
            raise InfeasibleParametersError(["estimation constants were not built"])
        return self.alpha_lower.inverse((1.0 + self.b_tilde) * np.asarray(r, dtype=float))

    def to_dict(self) -> Dict:
        keys = (
            "c1", "c2", "psi2_bar", "degenerate", "c1_tilde", "c2_tilde", "b", "b_tilde", "c_ratio", "c_alternative"
        )
        out = {k: getattr(self, k) for k in keys}
        out["log_c_ratio"] = math.log(self.c_ratio) if self.c_ratio else None
        for name in ("alpha_lower", "alpha_upper", "gamma1", "gamma2"):
            out[name] = str(getattr(self, name))
        return out


def build_ioss_envelope(family: SystemFamily, cert: DwellCertificate) -> Envelope:
    """
    Tightest admissible constants: ``c1 = lambda_s dc + lambda_u Dh``,
    ``c2 = -(dwell condition)``. Families without unstable modes drop the
    ``1/lambda_u`` term of ``psi2_bar``.
    """
    if not cert.feasible:
        raise InfeasibleCertificateError(f"certificate is infeasible ({cert.reason})")
    L = family.lyapunov
    c1 = L.lambda_s * cert.delta_check + L.lambda_u * cert.Delta_hat
    c2 = -eval_eq9(L.lambda_s, L.lambda_u, L.mu, family.delta, family.Delta, cert.delta_check, cert.Delta_hat)
    degenerate = not family.unstable
    if degenerate:
        log.warning("Family %s has no unstable subsystem: using the reduced envelope", family.name)
    psi2 = psi2_bar_formula(c1, c2, family.delta, L.lambda_s, None if degenerate else L.lambda_u)
    return Envelope(c1, c2, psi2, L.alpha_lower, L.alpha_upper, L.gamma1, L.gamma2, degenerate)


def build_estimation_envelope(
    family: SystemFamily,
    cert: DwellCertificate,
    params: EstimatorParams,
    base: Optional[Envelope] = None,
) -> Envelope:
    """
    Add ``c1~ = (lambda_s - lambda_s* + lambda_u - lambda_u*) Dh``,
    ``c2~ = -(condition 12)``, ``b``, ``b~ = (mu - 1) b`` and the ratio bound
    ``c = exp((lambda_u* + lambda_s*)(dc Dh/(2 delta) + Dh))``.

    ``c_alternative`` replaces ``dc`` by ``delta~`` in ``c``; only ``c_ratio`` is
    used by the checks.
    """
    if not params.accepted:
        raise InfeasibleParametersError(params.violations)
    env = base or build_ioss_envelope(family, cert)
    L = family.lyapunov
    c1t = params.slack * cert.Delta_hat
    c2t = -params.cond_values["12"]
    b = math.exp(c1t) * (1.0 + 1.0 / math.expm1(c2t * family.delta))
    rate = params.lambda_u_star + params.lambda_s_star
    c = math.exp(rate * (cert.delta_check * cert.Delta_hat / (2 * family.delta) + cert.Delta_hat))
    c_alt = math.exp(rate * (params.delta_tilde * cert.Delta_hat / (2 * family.delta) + cert.Delta_hat))
    return replace(
        env,
        c1_tilde=c1t,
        c2_tilde=c2t,
        b=b,
        b_tilde=(L.mu - 1.0) * b,
        c_ratio=c,
        c_alternative=c_alt,
    )


# --- exact weights from a signal ----------------------------------------------


def _signal_tables(signal: SwitchingSignal, stable: set):
    seg = signal.segments()
    starts = np.array([a for a, _, _ in seg])
    ends = np.array([b for _, b, _ in seg])
    is_u = np.array([p not in stable for _, _, p in seg], dtype=bool)
    cum_u = np.concatenate([[0.0], np.cumsum(np.where(is_u, ends - starts, 0.0))[:-1]])
    return starts, ends, is_u, cum_u


def xi_curve(signal: SwitchingSignal, family: SystemFamily, times: np.ndarray) -> np.ndarray:
    """``Xi(0, t) = -lambda_s T_S + lambda_u T_U + ln(mu) N`` on ``]0, t]`` for every ``t``."""
    L = family.lyapunov
    times = np.asarray(times, dtype=float)
    starts, _, is_u, cum_u = _signal_tables(signal, set(family.stable))
    k = np.searchsorted(starts, times + GRID_TOL, side="right") - 1
    k = np.clip(k, 0, len(starts) - 1)
    t_u = cum_u[k] + np.where(is_u[k], np.maximum(times - starts[k], 0.0), 0.0)
    t_s = times - t_u
    n = k  # switches at starts[1..k] lie in ]0, t]
    return -L.lambda_s * t_s + L.lambda_u * t_u + math.log(L.mu) * n


def psi1_curve(signal: SwitchingSignal, family: SystemFamily, times: np.ndarray) -> np.ndarray:
    return np.exp(xi_curve(signal, family, times))


def psi2_curve(
    signal: SwitchingSignal,
    family: SystemFamily,
    times: np.ndarray,
    as_printed: bool = False,
) -> np.ndarray:
    """
    Accumulated input weight at each ``t``: every activation contributes its
    flow gain ``(1 - e^{-lambda_s d})/lambda_s`` or ``(e^{lambda_u d} - 1)/lambda_u``
    times ``exp(Xi(end, t))``. Activations completed before ``t`` also carry the
    comparison factor ``mu`` of the switch that ends them unless ``as_printed``.
    """
    L = family.lyapunov
    times = np.asarray(times, dtype=float)
    xi_t = xi_curve(signal, family, times)
    stable = set(family.stable)
    total = np.zeros_like(times)
    for a, b, p in signal.segments():
        active = times > a + GRID_TOL
        if not active.any():
            break
        end = np.minimum(b, times)
        d = np.where(active, end - a, 0.0)
        if p in stable:
            gain = -np.expm1(-L.lambda_s * d) / L.lambda_s
        else:
            gain = np.expm1(L.lambda_u * d) / L.lambda_u
        completed = times >= b - GRID_TOL
        xi_end = xi_curve(signal, family, np.minimum(end, signal.horizon))
        weight = np.exp(xi_t - xi_end)
        if not as_printed:
            weight = np.where(completed & (b < signal.horizon), weight * L.mu, weight)
        total += np.where(active, gain * weight, 0.0)
    return total


# --- reports ------------------------------------------------------------------


@dataclass(frozen=True)
class SlackReport:
    """Smallest ``rhs - lhs`` over the nodes of a run."""

    name: str
    min_slack: float
    argmin_time: float
    nodes: int
    tol: float = 0.0

    @property
    def passed(self) -> bool:
        return self.min_slack >= -self.tol

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "min_slack": self.min_slack,
            "argmin_time": self.argmin_time,
            "nodes": self.nodes,
            "passed": self.passed,
        }


def slack_report(name: str, times: np.ndarray, lhs: np.ndarray, rhs: np.ndarray, tol: float = 0.0) -> SlackReport:
    slack = np.asarray(rhs, dtype=float) - np.asarray(lhs, dtype=float)
    k = int(np.argmin(slack))
    report = SlackReport(name, float(slack[k]), float(times[k]), len(times), tol)
    if not report.passed:
        log.warning("Check %s failed: slack %.3g at t=%g", name, report.min_slack, report.argmin_time)
    return report


def running_max(a: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(np.asarray(a, dtype=float))


def ioss_curves(
    trajectory: Trajectory, envelope: Envelope, include_outputs: bool = True
) -> Tuple[np.ndarray, np.ndarray]:
    """``alpha_lower(|x(t)|)`` and the stability envelope at every node."""
    x_norm = trajectory.state_norm()
    lhs = np.asarray(envelope.alpha_lower(x_norm))
    rhs = envelope.beta(x_norm[0], trajectory.times) + envelope.chi1(running_max(trajectory.input_norm()))
    if include_outputs:
        rhs = rhs + envelope.chi2(running_max(trajectory.output_norm()))
    return lhs, rhs


def check_ioss_inequality(
    trajectory: Trajectory,
    family: SystemFamily,
    envelope: Envelope,
    include_outputs: bool = True,
    tol: float = 0.0,
) -> SlackReport:
    """
    ``alpha_lower(|x(t)|) <= beta(|x0|, t) + chi1(|v|_[0,t]) + chi2(|y|_[0,t])``
    at every node, sup norms taken over nodes. With ``include_outputs=False``
    the output term is dropped (input-to-state form; with zero input this is
    the global asymptotic stability form).
    """
    lhs, rhs = ioss_curves(trajectory, envelope, include_outputs)
    return slack_report("ioss" if include_outputs else "iss", trajectory.times, lhs, rhs, tol)


@dataclass(frozen=True)
class PsiBoundReport:
    psi1: SlackReport
    psi2: SlackReport

    @property
    def passed(self) -> bool:
        return self.psi1.passed and self.psi2.passed


def check_psi_bounds(
    signal: SwitchingSignal,
    family: SystemFamily,
    envelope: Envelope,
    times: np.ndarray,
    as_printed: bool = False,
) -> PsiBoundReport:
    """``Xi(0, t) <= c1 - c2 t`` (log form of the psi1 bound) and ``psi2(t) <= psi2_bar``."""
    xi = xi_curve(signal, family, times)
    psi1 = slack_report("psi1", times, xi, envelope.c1 - envelope.c2 * np.asarray(times))
    psi2 = psi2_curve(signal, family, times, as_printed)
    psi2_rep = slack_report("psi2", times, psi2, np.full(len(times), envelope.psi2_bar))
    return PsiBoundReport(psi1, psi2_rep)


def check_lyapunov_chain(
    trajectory: Trajectory,
    signal: SwitchingSignal,
    family: SystemFamily,
    rtol: float = 1e-6,
) -> SlackReport:
    """
    ``V_sigma(t)(x(t)) <= psi1(t) V_sigma(0)(x0) + gbar_sup(t) psi2(t)`` along a run,
    with ``psi1``, ``psi2`` computed exactly from the signal.
    """
    L = family.lyapunov
    times = trajectory.times
    v_now = np.empty(len(times))
    for p in family.indices:
        mask = trajectory.sigma == p
        if mask.any():
            v_now[mask] = L.V[p].values(trajectory.states[mask])
    v0 = L.V[int(trajectory.sigma[0])](trajectory.states[0])
    g_sup = running_max(gamma_bar(L, trajectory.inputs, trajectory.outputs))
    rhs = psi1_curve(signal, family, times) * v0 + g_sup * psi2_curve(signal, family, times)
    tol = rtol * max(1.0, float(np.max(np.abs(rhs))))
    return slack_report("lyapunov_chain", times, v_now, rhs, tol)


@dataclass(frozen=True)
class EstimatorBoundsReport:
    checks: Dict[str, SlackReport] = field(default_factory=dict)
    skipped: Tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.checks.values())

    def to_dict(self) -> Dict:
        return {
            "passed": self.passed,
            "checks": {k: r.to_dict() for k, r in self.checks.items()},
            "skipped": list(self.skipped),
        }


def check_estimator_bounds(trajectory: Trajectory, envelope: Envelope, tol: float = 0.0) -> EstimatorBoundsReport:
    """
    (A) ``|x| <= beta_bar(|x0| + z0, t) + chi_bar(c z)``;
    (B) ``|x| <= beta_bar(|x0| + w0, t) + chi_bar(w)``;
    (C) ``w <= c z``, only when ``w0 <= z0``.
    """
    if not envelope.has_estimation:
        raise InfeasibleParametersError(["estimation constants were not built"])
    if trajectory.z is None:
        raise InfeasibleParametersError(["trajectory has no z channel"])
    t = trajectory.times
    x_norm = trajectory.state_norm()
    z, w = trajectory.z, trajectory.w
    c = envelope.c_ratio
    checks: Dict[str, SlackReport] = {}
    skipped: List[str] = []

    rhs_a = envelope.beta_bar(x_norm[0] + abs(z[0]), t) + envelope.chi_bar(c * z)
    checks["A"] = slack_report("A", t, x_norm, rhs_a, tol)
    if w is None:
        skipped += ["B", "C"]
    else:
        rhs_b = envelope.beta_bar(x_norm[0] + abs(w[0]), t) + envelope.chi_bar(w)
        checks["B"] = slack_report("B", t, x_norm, rhs_b, tol)
        if w[0] <= z[0]:
            checks["C"] = slack_report("C", t, w, c * z, tol)
        else:
            skipped.append("C")
    return EstimatorBoundsReport(checks, tuple(skipped))


def estimator_iss_constants(params: EstimatorParams) -> Tuple[float, float, float]:
    """
    ``(c_bar, c_bar1, psi_z_bar)`` for the scheduled estimator with unit comparison factor.

    ``psi_z_bar`` takes the shorter schedule phase, ``min(delta_tilde, Delta_tilde)``,
    as the dwell between switches of ``zeta``.
    """
    c_bar = -params.cond_values["14"]
    c_bar1 = params.lambda_s_star * params.delta_tilde + params.lambda_u_star * params.Delta_tilde
    dwell = min(params.delta_tilde, params.Delta_tilde)
    psi = psi2_bar_formula(c_bar1, c_bar, dwell, params.lambda_s_star, params.lambda_u_star)
    return c_bar, c_bar1, psi


def check_estimator_iss(
    times: np.ndarray,
    z: np.ndarray,
    v: np.ndarray,
    y: np.ndarray,
    params: EstimatorParams,
    lyapunov: LyapunovData,
    tol: float = 1e-9,
) -> SlackReport:
    """
    ``z(t) <= e^{-c_bar t} z0 + psi_z_bar sup_{s<=t} gbar(s)``.

    ``psi_z_bar`` is built with dwell ``min(delta_tilde, Delta_tilde)``, see
    :func:`estimator_iss_constants`.
    """
    if not params.accepted:
        raise InfeasibleParametersError(params.violations)
    c_bar, _, psi = estimator_iss_constants(params)
    times = np.asarray(times, dtype=float)
    g_sup = running_max(gamma_bar(lyapunov, v, y))
    rhs = np.exp(-c_bar * times) * z[0] + psi * g_sup
    return slack_report("estimator_iss", times, z, rhs, tol)
