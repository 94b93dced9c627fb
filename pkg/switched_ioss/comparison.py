"""Class-K-infinity comparison functions written in the expression language."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .config import INVERSE_TOL, KINF_GRID_MAX, KINF_GRID_POINTS
from .errors import InvariantViolationError
from .expressions import Expression, parse_expression

log = logging.getLogger("switched_ioss")

KINF_VARIABLES = ("r",)


@dataclass(frozen=True)
class KInfFunction:
    """
    A scalar function ``r -> a(r)`` of a nonnegative argument.

    ``at_least_identity`` stores ``max(r, a(r))`` instead of ``a(r)``; the
    upper sandwich bound is kept in that form so that ``a(r) >= r`` holds.
    """

    expression: Expression
    name: str = "alpha"
    at_least_identity: bool = False

    @classmethod
    def parse(cls, src: str, name: str = "alpha", at_least_identity: bool = False) -> "KInfFunction":
        return cls(parse_expression(src, variables=KINF_VARIABLES), name, at_least_identity)

    def __call__(self, r):
        f = self.expression.compile(KINF_VARIABLES, backend="numpy")
        r_arr = np.asarray(r, dtype=float)
        out = np.asarray(f(r_arr), dtype=float) + np.zeros_like(r_arr)
        if self.at_least_identity:
            out = np.maximum(r_arr, out)
        return out if out.ndim else float(out)

    def inverse(self, value, tol: float = INVERSE_TOL):
        """Invert by bisection on ``[0, r_max]``, doubling ``r_max`` until it brackets."""
        return _inverse_vec(self, np.asarray(value, dtype=float), tol)

    def validate(self, r_max: float = KINF_GRID_MAX, n: int = KINF_GRID_POINTS) -> None:
        """Check ``a(0) = 0`` and strict increase on a uniform grid over ``[0, r_max]``."""
        at0 = float(self(0.0))
        if abs(at0) > 1e-12:
            raise InvariantViolationError(f"{self.name}(0) = {at0:g}, expected 0")
        grid = np.linspace(0.0, r_max, n)
        vals = self(grid)
        if not np.all(np.isfinite(vals)):
            raise InvariantViolationError(f"{self.name} is not finite on [0, {r_max:g}]")
        if not np.all(np.diff(vals) > 0):
            bad = int(np.argmin(np.diff(vals) > 0))
            raise InvariantViolationError(
                f"{self.name} is not strictly increasing near r={grid[bad]:g}"
            )

    def __str__(self) -> str:
        inner = str(self.expression)
        return f"max(r, {inner})" if self.at_least_identity else inner


def _scalar_inverse(fn: KInfFunction, y: float, tol: float) -> float:
    if y <= 0.0:
        return 0.0
    if not np.isfinite(y):
        return float("inf")
    hi = 1.0
    while fn(hi) < y:
        hi *= 2.0
        if hi > 1e300:
            return float("inf")
    return float(bisect(lambda r: fn(r) - y, 0.0, hi, xtol=tol, maxiter=2000))


def _inverse_vec(fn: KInfFunction, values: np.ndarray, tol: float):
    if values.ndim == 0:
        return _scalar_inverse(fn, float(values), tol)
    return _bisect_many(fn, values, tol)


def _bisect_many(fn: KInfFunction, y: np.ndarray, tol: float) -> np.ndarray:
    """Elementwise bisection over whole arrays (trajectory-length inputs)."""
    y = np.asarray(y, dtype=float)
    lo = np.zeros_like(y)
    hi = np.ones_like(y)
    grow = fn(hi) < y
    while np.any(grow):
        hi = np.where(grow, 2.0 * hi, hi)
        if np.any(hi > 1e300):
            break
        grow = fn(hi) < y
    while np.any(hi - lo > tol * np.maximum(1.0, hi)):
        mid = 0.5 * (lo + hi)
        below = fn(mid) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    out[y <= 0.0] = 0.0
    return out

