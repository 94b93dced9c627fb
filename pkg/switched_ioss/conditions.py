"""Scalar dwell-time and estimator conditions, with their searches."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import DWELL_GRID_N, ESTIMATOR_GRID_N
from .errors import ConditionDomainError, InfeasibleCertificateError
from .family import SystemFamily

log = logging.getLogger("switched_ioss")

_EPS = 1e-12


def eval_eq9(
    lambda_s: float,
    lambda_u: float,
    mu: float,
    delta: float,
    Delta: float,
    delta_check: float,
    Delta_hat: float,
) -> float:
    """
    Dwell-time condition value; the pair ``(delta_check, Delta_hat)`` is
    usable when the result is negative.

    ``-lambda_s dc/Delta + lambda_s dc/(2 delta) + lambda_u Dh/(2 delta) + ln(mu)/delta``
    """
    if not lambda_s > 0:
        raise ConditionDomainError(f"lambda_s must be positive, got {lambda_s}")
    if not lambda_u >= 0:
        raise ConditionDomainError(f"lambda_u must be nonnegative, got {lambda_u}")
    if not mu >= 1:
        raise ConditionDomainError(f"mu must be >= 1, got {mu}")
    if not 0 < delta <= Delta:
        raise ConditionDomainError(f"need 0 < delta <= Delta, got {delta}, {Delta}")
    for name, val in (("delta_check", delta_check), ("Delta_hat", Delta_hat)):
        if not (delta - _EPS <= val <= Delta + _EPS):
            raise ConditionDomainError(f"{name}={val} outside [{delta}, {Delta}]")
    return (
        -lambda_s * delta_check / Delta
        + lambda_s * delta_check / (2 * delta)
        + lambda_u * Delta_hat / (2 * delta)
        + math.log(mu) / delta
    )


def optimal_dwell_times(delta: float, Delta: float) -> Tuple[float, float]:
    """Minimiser of the dwell-time condition: it is linear in each of the two bounds."""
    delta_check = Delta if (1.0 / (2 * delta) - 1.0 / Delta) < 0 else delta
    return delta_check, delta


def grid_search_eq9(
    lambda_s: float,
    lambda_u: float,
    mu: float,
    delta: float,
    Delta: float,
    grid_n: int = DWELL_GRID_N,
) -> Tuple[float, float, float]:
    """Brute-force minimum over a ``grid_n x grid_n`` grid of ``[delta, Delta]^2``."""
    if grid_n < 2:
        raise ConditionDomainError("grid_n must be at least 2")
    eval_eq9(lambda_s, lambda_u, mu, delta, Delta, delta, delta)
    g = np.linspace(delta, Delta, grid_n)
    dc, dh = np.meshgrid(g, g, indexing="ij")
    vals = (
        -lambda_s * dc / Delta
        + lambda_s * dc / (2 * delta)
        + lambda_u * dh / (2 * delta)
        + math.log(mu) / delta
    )
    i, j = np.unravel_index(int(np.argmin(vals)), vals.shape)
    return float(g[i]), float(g[j]), float(vals[i, j])


def find_dwell_times(
    lambda_s: float,
    lambda_u: float,
    mu: float,
    delta: float,
    Delta: float,
    grid_n: int = DWELL_GRID_N,
) -> Optional[Tuple[float, float, float]]:
    """
    Best ``(delta_check, Delta_hat, value)`` or None when no pair in
    ``[delta, Delta]^2`` makes the condition negative.

    Returns None at once when ``Delta >= 2 delta``: no pair can work then.
    """
    if grid_n < 2:
        raise ConditionDomainError("grid_n must be at least 2")
    if Delta >= 2 * delta:
        log.debug("Delta=%g >= 2*delta=%g: dwell-time condition cannot hold", Delta, 2 * delta)
        return None
    dc, dh = optimal_dwell_times(delta, Delta)
    value = eval_eq9(lambda_s, lambda_u, mu, delta, Delta, dc, dh)
    _, _, grid_min = grid_search_eq9(lambda_s, lambda_u, mu, delta, Delta, grid_n)
    if value > grid_min + 1e-9:
        # linear objective: the corner is never beaten by an interior grid point
        raise AssertionError(f"analytic optimum {value} above grid minimum {grid_min}")
    if value >= 0:
        return None
    return dc, dh, value


# --- sufficient conditions ----------------------------------------------------


@dataclass(frozen=True)
class Prop2Result:
    """Which sufficient conditions hold, and the condition value each one implies."""

    flags: Dict[str, bool]
    implied_values: Dict[str, float]

    def consistent(self) -> bool:
        return all(self.implied_values[k] < 0 for k, ok in self.flags.items() if ok)


def check_prop2(lambda_s: float, lambda_u: float, mu: float, delta: float, Delta: float) -> Prop2Result:
    """
    Evaluate the four closed-form sufficient conditions.

    (i)   ``mu == 1`` and ``Delta^2/(2 delta^2) < lambda_s/(lambda_s + lambda_u)``
    (ii)  ``lambda_u Delta/(2 delta) + ln mu/delta < lambda_s (delta/Delta - Delta/(2 delta))``
    (iii) ``lambda_u/2 + ln mu/delta < lambda_s (1 - Delta/(2 delta))``
    (iv)  ``lambda_u Delta/(2 delta) + ln mu/delta < lambda_s (delta/Delta - 1/2)``

    (iii) certifies the pair ``(Delta, delta)``, (iv) the pair ``(delta, Delta)``;
    (i) and (ii) certify every pair, so the worst corner is reported for them.
    """
    lm = math.log(mu) / delta
    flags = {
        "i": mu == 1 and Delta ** 2 / (2 * delta ** 2) < lambda_s / (lambda_s + lambda_u),
        "ii": lambda_u * Delta / (2 * delta) + lm < lambda_s * (delta / Delta - Delta / (2 * delta)),
        "iii": lambda_u / 2 + lm < lambda_s * (1 - Delta / (2 * delta)),
        "iv": lambda_u * Delta / (2 * delta) + lm < lambda_s * (delta / Delta - 0.5),
    }
    corners = [
        eval_eq9(lambda_s, lambda_u, mu, delta, Delta, a, b)
        for a in (delta, Delta)
        for b in (delta, Delta)
    ]
    worst = max(corners)
    implied = {
        "i": worst,
        "ii": worst,
        "iii": eval_eq9(lambda_s, lambda_u, mu, delta, Delta, Delta, delta),
        "iv": eval_eq9(lambda_s, lambda_u, mu, delta, Delta, delta, Delta),
    }
    return Prop2Result(flags, implied)


# --- certificate --------------------------------------------------------------


@dataclass(frozen=True)
class DwellCertificate:
    """Chosen dwell bounds for a family together with every diagnostic computed for them."""

    lambda_s: float
    lambda_u: float
    mu: float
    delta: float
    Delta: float
    delta_check: float
    Delta_hat: float
    lhs9: float
    sufficient_flags: Dict[str, bool] = field(default_factory=dict)
    margin: float = 0.0
    has_stable: bool = True
    assumption3: bool = True
    reason: Optional[str] = None

    def __post_init__(self):
        for name, val in (("delta_check", self.delta_check), ("Delta_hat", self.Delta_hat)):
            if not (self.delta - _EPS <= val <= self.Delta + _EPS):
                raise ConditionDomainError(f"{name}={val} outside [{self.delta}, {self.Delta}]")

    @property
    def feasible(self) -> bool:
        return self.has_stable and self.assumption3 and self.lhs9 < -self.margin

    @property
    def prop1_violated(self) -> bool:
        return self.Delta >= 2 * self.delta

    def to_dict(self) -> Dict:
        out = asdict(self)
        out["feasible"] = self.feasible
        out["prop1_violated"] = self.prop1_violated
        return out

    @classmethod
    def from_dict(cls, obj: Dict) -> "DwellCertificate":
        keys = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in keys})


def certify(
    family: SystemFamily,
    delta_check: Optional[float] = None,
    Delta_hat: Optional[float] = None,
    margin: float = 0.0,
    grid_n: int = DWELL_GRID_N,
) -> DwellCertificate:
    """
    Build a certificate for ``family``.

    Explicit ``delta_check``/``Delta_hat`` (arguments first, then the
    family's configured pair) are evaluated as given; otherwise the
    minimising pair is used.
    """
    L = family.lyapunov
    delta, Delta = family.delta, family.Delta
    dc = delta_check if delta_check is not None else family.delta_check
    dh = Delta_hat if Delta_hat is not None else family.Delta_hat
    reason = None
    if dc is None or dh is None:
        found = find_dwell_times(L.lambda_s, L.lambda_u, L.mu, delta, Delta, grid_n)
        odc, odh = optimal_dwell_times(delta, Delta)
        dc = odc if dc is None else dc
        dh = odh if dh is None else dh
        if found is None:
            reason = "no dwell-time pair makes the condition negative"
    lhs9 = eval_eq9(L.lambda_s, L.lambda_u, L.mu, delta, Delta, dc, dh)
    if Delta >= 2 * delta:
        reason = "Prop. 1: Delta >= 2*delta rules out every dwell-time pair"
    elif lhs9 >= -margin and reason is None:
        reason = f"condition value {lhs9:.6g} is not below -{margin:g}"
    has_stable = bool(family.stable)
    if not has_stable:
        reason = "no stable subsystem"
    bad = family.graph.assumption3_violations(family.stable, family.unstable)
    if bad:
        reason = f"unstable subsystem {bad[0]} has no edge to a stable subsystem"
    prop2 = check_prop2(L.lambda_s, L.lambda_u, L.mu, delta, Delta)
    cert = DwellCertificate(
        lambda_s=L.lambda_s,
        lambda_u=L.lambda_u,
        mu=L.mu,
        delta=delta,
        Delta=Delta,
        delta_check=float(dc),
        Delta_hat=float(dh),
        lhs9=float(lhs9),
        sufficient_flags=prop2.flags,
        margin=margin,
        has_stable=has_stable,
        assumption3=not bad,
        reason=reason,
    )
    log.info(
        "Dwell condition at (%g, %g): %.4f -> %s",
        cert.delta_check, cert.Delta_hat, cert.lhs9, "feasible" if cert.feasible else "infeasible",
    )
    return cert


# --- estimator conditions -----------------------------------------------------


@dataclass(frozen=True)
class ConditionViolation:
    name: str
    value: float
    relation: str

    def __str__(self) -> str:
        return f"({self.name}) = {self.value:.6g}, needs {self.relation}"


# name -> strict?  every value must be negative (strict) or nonpositive
ESTIMATOR_CONDITIONS: Dict[str, bool] = {
    "10a_lower": True,
    "10a_upper": True,
    "10b": False,
    "10c": False,
    "11": True,
    "12": True,
    "13_positive": True,
    "13a": False,
    "13b": False,
    "14": True,
    "15": False,
}


@dataclass(frozen=True)
class EstimatorParams:
    """Estimator rates and schedule with the value of every condition they must meet."""

    lambda_s_star: float
    lambda_u_star: float
    delta_tilde: float
    Delta_tilde: float
    cond_values: Dict[str, float]
    violations: Tuple[ConditionViolation, ...] = ()
    slack: float = 0.0

    @property
    def accepted(self) -> bool:
        return not self.violations

    @property
    def period(self) -> float:
        return self.delta_tilde + self.Delta_tilde

    def scalar_values(self) -> Tuple[float, float, float, float]:
        return tuple(self.cond_values[k] for k in ("11", "12", "14", "15"))

    def to_dict(self) -> Dict:
        return {
            "lambda_s_star": self.lambda_s_star,
            "lambda_u_star": self.lambda_u_star,
            "delta_tilde": self.delta_tilde,
            "Delta_tilde": self.Delta_tilde,
            "cond_values": dict(self.cond_values),
            "violations": [str(v) for v in self.violations],
            "slack": self.slack,
            "accepted": self.accepted,
        }




def _estimator_values(lambda_s, lambda_u, mu, delta, Delta, dc, dh, ls, lu, dt, Dt) -> Dict[str, object]:
    """Signed condition values (negative or nonpositive when met); works on arrays."""
    slack = lambda_s - ls + lambda_u - lu
    return {
        "10a_lower": -ls,
        "10a_upper": ls - lambda_s,
        "10b": lambda_u - lu,
        "10c": -slack,
        "11": -ls * dc / Delta + ls * dc / (2 * delta) + lu * dh / (2 * delta),
        "12": math.log(mu) / delta - (lambda_s - ls) + slack * dh / (2 * delta),
        "13_positive": -np.minimum(dt, Dt),
        "13a": dt - dc,
        "13b": dh - Dt,
        "14": -ls + (ls + lu) * Dt / (dt + Dt),
        "15": Dt * dh / (2 * delta) + dt * dh / (2 * delta) - Dt,
    }


def _require_feasible(cert: DwellCertificate) -> None:
    if not cert.feasible:
        raise InfeasibleCertificateError(
            f"certificate is infeasible ({cert.reason or f'value {cert.lhs9:.6g}'})"
        )


def eval_estimator_conditions(
    family: SystemFamily,
    cert: DwellCertificate,
    lambda_s_star: float,
    lambda_u_star: float,
    delta_tilde: float,
    Delta_tilde: float,
    margin: float = 0.0,
) -> EstimatorParams:
    """
    Evaluate every estimator condition for one candidate.

    The result always carries the values; ``violations`` lists each failed
    condition and ``accepted`` is true when there are none. Strict
    conditions need ``value < -margin``, the others ``value <= -margin``.
    """
    _require_feasible(cert)
    L = family.lyapunov
    raw = _estimator_values(
        L.lambda_s, L.lambda_u, L.mu, family.delta, family.Delta,
        cert.delta_check, cert.Delta_hat,
        lambda_s_star, lambda_u_star, delta_tilde, Delta_tilde,
    )
    values = {k: float(v) for k, v in raw.items()}
    violations = []
    for name, strict in ESTIMATOR_CONDITIONS.items():
        v = values[name]
        ok = v < -margin if strict else v <= -margin
        if not ok:
            violations.append(ConditionViolation(name, v, f"< {-margin:g}" if strict else f"<= {-margin:g}"))
    return EstimatorParams(
        lambda_s_star=float(lambda_s_star),
        lambda_u_star=float(lambda_u_star),
        delta_tilde=float(delta_tilde),
        Delta_tilde=float(Delta_tilde),
        cond_values=values,
        violations=tuple(violations),
        slack=L.lambda_s - lambda_s_star + L.lambda_u - lambda_u_star,
    )


def find_estimator_params(
    family: SystemFamily,
    cert: DwellCertificate,
    grid_n: int = ESTIMATOR_GRID_N,
    margin: float = 0.0,
) -> Optional[EstimatorParams]:
    """
    Grid search for estimator parameters.

    ``lambda_s*`` runs over ``lambda_s * i/(n+1)``, ``lambda_u*`` over
    ``[lambda_u, lambda_u + lambda_s - lambda_s*]``, ``delta~`` over
    ``]0, delta_check]`` and ``Delta~`` over ``[Delta_hat, 4 Delta_hat]``. The
    accepted candidate with the largest smallest slack across the four
    scalar conditions wins; None when the grid holds no accepted candidate.
    """
    _require_feasible(cert)
    if grid_n < 2:
        raise ConditionDomainError("grid_n must be at least 2")
    L = family.lyapunov
    n = grid_n
    ls = L.lambda_s * np.arange(1, n + 1) / (n + 1)
    frac = np.linspace(0.0, 1.0, n)
    dt = cert.delta_check * np.arange(1, n + 1) / n
    Dt = cert.Delta_hat * (1.0 + 3.0 * np.linspace(0.0, 1.0, n))
    LS, FR, DT, DDT = np.meshgrid(ls, frac, dt, Dt, indexing="ij")
    LU = L.lambda_u + FR * (L.lambda_s - LS)
    vals = _estimator_values(
        L.lambda_s, L.lambda_u, L.mu, family.delta, family.Delta,
        cert.delta_check, cert.Delta_hat, LS, LU, DT, DDT,
    )
    c11, c12, c14, c15 = (vals[k] for k in ("11", "12", "14", "15"))
    ok = (c11 < -margin) & (c12 < -margin) & (c14 < -margin) & (c15 <= -margin)
    if not ok.any():
        log.info("No estimator parameters on a %d^4 grid", n)
        return None
    score = np.where(ok, np.minimum.reduce([-c11, -c12, -c14, -c15]), -np.inf)
    k = np.unravel_index(int(np.argmax(score)), score.shape)
    params = eval_estimator_conditions(family, cert, LS[k], LU[k], DT[k], DDT[k], margin)
    log.debug("Estimator grid optimum %s (min slack %.4g)", params.to_dict(), score[k])
    if not params.accepted:
        # grid check and scalar re-check disagree only at floating-point ties
        log.warning("Grid candidate failed the scalar re-check: %s", [str(v) for v in params.violations])
        return None
    return params
