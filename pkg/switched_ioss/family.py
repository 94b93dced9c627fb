"""Subsystem family, Lyapunov-like data and the admissible-switch graph.

A :class:`SystemFamily` is immutable once built and is safe to share
read-only between threads and worker processes: it only holds parsed
expression trees, compiled callables are looked up from a module cache.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .comparison import KInfFunction
from .config import FD_STEP, ORIGIN_TOL, PROBE_INPUT_RANGE, PROBE_SAMPLES, PROBE_STATE_RANGE
from .errors import AssumptionViolationError, FamilyConfigError, InvariantViolationError
from .expressions import Expression

log = logging.getLogger("switched_ioss")


class StabilityClass(str, Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


def state_names(d: int) -> Tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(d))


def input_names(m: int) -> Tuple[str, ...]:
    return tuple(f"v{i + 1}" for i in range(m))


@dataclass(frozen=True)
class Subsystem:
    """One mode ``x' = f_p(x, v)``, ``y = h_p(x)``."""

    index: int
    dynamics: Tuple[Expression, ...]
    output: Tuple[Expression, ...]
    stability_class: StabilityClass
    input_dim: int

    @property
    def state_dim(self) -> int:
        return len(self.dynamics)

    @property
    def output_dim(self) -> int:
        return len(self.output)

    @property
    def is_stable(self) -> bool:
        return self.stability_class is StabilityClass.STABLE

    def _argnames(self) -> Tuple[str, ...]:
        return state_names(self.state_dim) + input_names(self.input_dim)

    def rhs_function(self) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
        """Scalar-backend ``(x, v) -> f_p(x, v)`` for step-by-step integration."""
        names = self._argnames()
        fs = [e.compile(names, backend="math") for e in self.dynamics]

        def rhs(x: np.ndarray, v: np.ndarray) -> np.ndarray:
            args = (*x, *v)
            return np.array([f(*args) for f in fs], dtype=float)

        return rhs

    def output_function(self) -> Callable[[np.ndarray], np.ndarray]:
        names = state_names(self.state_dim)
        hs = [e.compile(names, backend="math") for e in self.output]

        def out(x: np.ndarray) -> np.ndarray:
            return np.array([h(*x) for h in hs], dtype=float)

        return out

    def f(self, x: Sequence[float], v: Sequence[float]) -> np.ndarray:
        return self.rhs_function()(np.asarray(x, float), np.asarray(v, float))

    def h(self, x: Sequence[float]) -> np.ndarray:
        return self.output_function()(np.asarray(x, float))

    def f_batch(self, X: np.ndarray, Vin: np.ndarray) -> np.ndarray:
        """Vectorised ``f_p`` on sample rows ``X`` (n, d) and ``Vin`` (n, m)."""
        names = self._argnames()
        cols = [X[:, i] for i in range(X.shape[1])] + [Vin[:, j] for j in range(Vin.shape[1])]
        out = [np.broadcast_to(e.compile(names, backend="numpy")(*cols), (X.shape[0],)) for e in self.dynamics]
        return np.stack(out, axis=1)

    def h_batch(self, X: np.ndarray) -> np.ndarray:
        names = state_names(self.state_dim)
        cols = [X[:, i] for i in range(X.shape[1])]
        out = [np.broadcast_to(e.compile(names, backend="numpy")(*cols), (X.shape[0],)) for e in self.output]
        return np.stack(out, axis=1)


@dataclass(frozen=True)
class LyapunovFunction:
    """
    ``V_p`` either as ``scale * x^T Q x`` or as an expression in ``x1..xd``.

    The quadratic form has an analytic gradient; expression-backed
    functions fall back to central finite differences.
    """

    Q: Optional[Tuple[Tuple[float, ...], ...]] = None
    scale: float = 1.0
    expression: Optional[Expression] = None

    def __post_init__(self):
        if (self.Q is None) == (self.expression is None):
            raise FamilyConfigError("V needs exactly one of a quadratic form or an expression")

    @classmethod
    def quadratic(cls, Q, scale: float = 1.0) -> "LyapunovFunction":
        Qa = np.asarray(Q, dtype=float)
        if Qa.ndim != 2 or Qa.shape[0] != Qa.shape[1]:
            raise FamilyConfigError(f"Q must be square, got shape {Qa.shape}")
        if not np.allclose(Qa, Qa.T):
            raise InvariantViolationError("Q must be symmetric")
        if scale <= 0 or np.linalg.eigvalsh(Qa).min() <= 0:
            raise InvariantViolationError("quadratic V must be positive definite")
        return cls(Q=tuple(tuple(row) for row in Qa.tolist()), scale=float(scale))

    @property
    def is_quadratic(self) -> bool:
        return self.Q is not None

    def values(self, X: np.ndarray) -> np.ndarray:
        """``V`` on rows of ``X`` with shape (n, d)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.Q is not None:
            Q = np.asarray(self.Q)
            return self.scale * np.einsum("ni,ij,nj->n", X, Q, X)
        f = self.expression.compile(state_names(X.shape[1]), backend="numpy")
        return np.broadcast_to(f(*[X[:, i] for i in range(X.shape[1])]), (X.shape[0],)).astype(float)

    def __call__(self, x: Sequence[float]) -> float:
        return float(self.values(np.asarray(x, float)[None, :])[0])

    def gradients(self, X: np.ndarray, step: float = FD_STEP, numeric: bool = False) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.Q is not None and not numeric:
            Q = np.asarray(self.Q)
            return self.scale * X @ (Q + Q.T)
        grads = np.empty_like(X)
        for i in range(X.shape[1]):
            e = np.zeros(X.shape[1])
            e[i] = step
            grads[:, i] = (self.values(X + e) - self.values(X - e)) / (2.0 * step)
        return grads

    def __str__(self) -> str:
        if self.expression is not None:
            return str(self.expression)
        return f"{self.scale:g} * x^T {list(map(list, self.Q))} x"


@dataclass(frozen=True)
class LyapunovData:
    """Rates, comparison factor, gains and sandwich bounds shared by all modes."""

    V: Dict[int, LyapunovFunction]
    lambda_s: float
    lambda_u: float
    mu: float
    gamma1: KInfFunction
    gamma2: KInfFunction
    alpha_lower: KInfFunction
    alpha_upper: KInfFunction

    def validate(self) -> None:
        if not self.lambda_s > 0:
            raise InvariantViolationError(f"lambda_s must be positive, got {self.lambda_s}")
        if not self.lambda_u > 0:
            raise InvariantViolationError(f"lambda_u must be positive, got {self.lambda_u}")
        if not self.mu >= 1:
            raise InvariantViolationError(f"mu must be >= 1, got {self.mu}")
        if not self.alpha_upper.at_least_identity:
            raise InvariantViolationError("alpha_upper must be stored as max(r, alpha_upper(r))")
        for fn in (self.gamma1, self.gamma2, self.alpha_lower, self.alpha_upper):
            fn.validate()

    def gamma_bar(self, v_norm, y_norm):
        """``gamma1(|v|) + gamma2(|y|)``, the forcing term of the estimators."""
        return self.gamma1(v_norm) + self.gamma2(y_norm)


@dataclass(frozen=True)
class SwitchGraph:
    edges: FrozenSet[Tuple[int, int]]

    def __post_init__(self):
        loops = sorted(p for p, q in self.edges if p == q)
        if loops:
            raise FamilyConfigError(f"self-loop edge ({loops[0]}, {loops[0]}) is not allowed")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, int]]) -> "SwitchGraph":
        return cls(frozenset((int(p), int(q)) for p, q in pairs))

    def allows(self, p: int, q: int) -> bool:
        return (p, q) in self.edges

    def successors(self, p: int) -> List[int]:
        return sorted(q for a, q in self.edges if a == p)

    def assumption3_violations(self, stable: Iterable[int], unstable: Iterable[int]) -> List[int]:
        """Unstable indices without an edge into the stable set."""
        stable = set(stable)
        return [p for p in sorted(unstable) if not any(q in stable for q in self.successors(p))]


@dataclass(frozen=True)
class SystemFamily:
    """Subsystems, Lyapunov data, switch graph and the admissible dwell window."""

    subsystems: Dict[int, Subsystem]
    lyapunov: LyapunovData
    graph: SwitchGraph
    delta: float
    Delta: float
    name: str = "family"
    # optional preferred dwell bounds for the stabilizing class
    delta_check: Optional[float] = None
    Delta_hat: Optional[float] = None

    @property
    def indices(self) -> List[int]:
        return sorted(self.subsystems)

    @property
    def stable(self) -> List[int]:
        return [p for p in self.indices if self.subsystems[p].is_stable]

    @property
    def unstable(self) -> List[int]:
        return [p for p in self.indices if not self.subsystems[p].is_stable]

    @property
    def state_dim(self) -> int:
        return self.subsystems[self.indices[0]].state_dim

    @property
    def input_dim(self) -> int:
        return self.subsystems[self.indices[0]].input_dim

    @property
    def output_dim(self) -> int:
        return self.subsystems[self.indices[0]].output_dim

    def is_stable(self, p: int) -> bool:
        return self.subsystems[p].is_stable

    def classes(self) -> Dict[int, StabilityClass]:
        return {p: s.stability_class for p, s in self.subsystems.items()}

    def validate(self) -> None:
        """Probe every structural invariant; raises on the first failure."""
        if not self.subsystems:
            raise FamilyConfigError("family has no subsystems")
        if not (0 < self.delta <= self.Delta):
            raise InvariantViolationError(f"need 0 < delta <= Delta, got {self.delta}, {self.Delta}")
        missing_v = set(self.subsystems) - set(self.lyapunov.V)
        if missing_v:
            raise FamilyConfigError(f"no Lyapunov function for subsystem {min(missing_v)}")
        for p, q in self.graph.edges:
            for i in (p, q):
                if i not in self.subsystems:
                    raise FamilyConfigError(f"edge ({p}, {q}) references unknown subsystem {i}")
        self.lyapunov.validate()
        check_origin(self)
        bad = self.graph.assumption3_violations(self.stable, self.unstable)
        if bad:
            raise AssumptionViolationError(bad[0])


def check_origin(family: SystemFamily, tol: float = ORIGIN_TOL) -> None:
    """``f_p(0, 0) = 0`` and ``h_p(0) = 0`` for every mode."""
    x0 = np.zeros(family.state_dim)
    v0 = np.zeros(family.input_dim)
    for p in family.indices:
        s = family.subsystems[p]
        fx = s.f(x0, v0)
        hx = s.h(x0)
        if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(hx))):
            raise InvariantViolationError(f"subsystem {p} is not finite at the origin")
        if np.max(np.abs(fx), initial=0.0) > tol:
            raise InvariantViolationError(f"f_{p}(0, 0) != 0")
        if np.max(np.abs(hx), initial=0.0) > tol:
            raise InvariantViolationError(f"h_{p}(0) != 0")


# --- sampled Lyapunov conditions ---------------------------------------------


@dataclass(frozen=True)
class LyapunovProbeReport:
    """Minimum slack (rhs - lhs) of each sampled condition; negative means violated."""

    samples: int
    sandwich_slack: float
    flow_slack: Dict[int, float]
    comparison_slack: Dict[Tuple[int, int], float]
    tol: float = 1e-7
    gradient_mismatch: Dict[int, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        slacks = [self.sandwich_slack, *self.flow_slack.values(), *self.comparison_slack.values()]
        return all(s >= -self.tol for s in slacks)

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "passed": self.passed,
            "sandwich_slack": self.sandwich_slack,
            "flow_slack": {str(k): v for k, v in self.flow_slack.items()},
            "comparison_slack": {f"{p}->{q}": v for (p, q), v in self.comparison_slack.items()},
            "gradient_mismatch": {str(k): v for k, v in self.gradient_mismatch.items()},
        }


def sample_lyapunov_conditions(
    family: SystemFamily,
    n: int = PROBE_SAMPLES,
    seed: int = 0,
    state_range: Tuple[float, float] = PROBE_STATE_RANGE,
    input_range: Tuple[float, float] = PROBE_INPUT_RANGE,
    numeric_gradient: bool = False,
    tol: float = 1e-7,
) -> LyapunovProbeReport:
    """
    Check the sandwich bound, the decay/growth rates and the comparison
    factor on ``n`` uniformly drawn (state, input) pairs.

    Stable modes must satisfy ``dV.f <= -lambda_s V + gamma1(|v|) + gamma2(|y|)``;
    unstable modes the same with ``+lambda_u V``. Each edge ``(p, q)`` must
    satisfy ``V_q <= mu V_p``.
    """
    rng = np.random.default_rng(seed)
    lyap = family.lyapunov
    X = rng.uniform(*state_range, size=(n, family.state_dim))
    Vin = rng.uniform(*input_range, size=(n, family.input_dim))
    r = np.linalg.norm(X, axis=1)
    v_norm = np.linalg.norm(Vin, axis=1)

    lo = lyap.alpha_lower(r)
    hi = lyap.alpha_upper(r)
    sandwich = np.inf
    flow: Dict[int, float] = {}
    mismatch: Dict[int, float] = {}
    for p in family.indices:
        Vp = lyap.V[p]
        vals = Vp.values(X)
        sandwich = min(sandwich, float(np.min(vals - lo)), float(np.min(hi - vals)))
        s = family.subsystems[p]
        grad = Vp.gradients(X, numeric=numeric_gradient)
        if Vp.is_quadratic:
            fd = Vp.gradients(X, numeric=True)
            denom = np.maximum(np.abs(grad), 1.0)
            mismatch[p] = float(np.max(np.abs(fd - grad) / denom))
        lhs = np.einsum("ni,ni->n", grad, s.f_batch(X, Vin))
        y_norm = np.linalg.norm(s.h_batch(X), axis=1)
        rate = -lyap.lambda_s if s.is_stable else lyap.lambda_u
        rhs = rate * vals + lyap.gamma_bar(v_norm, y_norm)
        flow[p] = float(np.min(rhs - lhs))

    comparison: Dict[Tuple[int, int], float] = {}
    for p, q in sorted(family.graph.edges):
        comparison[(p, q)] = float(np.min(lyap.mu * lyap.V[p].values(X) - lyap.V[q].values(X)))

    report = LyapunovProbeReport(n, float(sandwich), flow, comparison, tol, mismatch)
    if not report.passed:
        log.warning("Sampled Lyapunov conditions violated on %d samples: %s", n, report.to_dict())
    return report
