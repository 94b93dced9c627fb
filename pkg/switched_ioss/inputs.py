"""Exogenous input signals ``v(t)``.

:class:`InputSignal` is the port; the simulator only calls :meth:`sample`
on the node grid and holds each value over the following step.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .config import GRID_TOL
from .errors import SignalError
from .expressions import Expression, parse_expression_list

INPUT_VARIABLES = ("t",)


class InputSignal(ABC):
    """Abstract input ``v: [0, T] -> R^m``."""

    @abstractmethod
    def sample(self, times: np.ndarray, dim: int) -> np.ndarray:
        """Values at ``times`` as an array of shape ``(len(times), dim)``."""

    @abstractmethod
    def to_dict(self) -> Dict:
        """JSON-ready description, recorded in run manifests."""


@dataclass(frozen=True)
class ZeroInput(InputSignal):
    def sample(self, times: np.ndarray, dim: int) -> np.ndarray:
        return np.zeros((len(times), dim))

    def to_dict(self) -> Dict:
        return {"kind": "zero"}


@dataclass(frozen=True)
class UniformPiecewiseInput(InputSignal):
    """
    Piecewise-constant input, redrawn uniformly in ``[lo, hi]^m`` every
    ``period`` time units (``period=None`` redraws at every node).
    """

    lo: float
    hi: float
    period: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise SignalError(f"empty input range [{self.lo}, {self.hi}]")
        if self.period is not None and not self.period > 0:
            raise SignalError(f"input period must be positive, got {self.period}")

    def sample(self, times: np.ndarray, dim: int) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if len(times) == 0:
            return np.zeros((0, dim))
        if self.period is None:
            piece = np.arange(len(times))
        else:
            piece = np.floor(times / self.period + GRID_TOL).astype(int)
        rng = np.random.default_rng(self.seed)
        draws = rng.uniform(self.lo, self.hi, size=(int(piece.max()) + 1, dim))
        return draws[piece]

    def to_dict(self) -> Dict:
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi, "period": self.period, "seed": self.seed}


@dataclass(frozen=True)
class ExpressionInput(InputSignal):
    """Input given as expressions in ``t``, one per input channel."""

    components: Tuple[Expression, ...]

    @classmethod
    def parse(cls, src: str) -> "ExpressionInput":
        return cls(tuple(parse_expression_list(src, variables=INPUT_VARIABLES)))

    def sample(self, times: np.ndarray, dim: int) -> np.ndarray:
        if len(self.components) != dim:
            raise SignalError(f"input has {len(self.components)} components, family expects {dim}")
        times = np.asarray(times, dtype=float)
        cols = [
            np.broadcast_to(e.compile(INPUT_VARIABLES, backend="numpy")(times), times.shape)
            for e in self.components
        ]
        return np.stack(cols, axis=1) if cols else np.zeros((len(times), 0))

    def to_dict(self) -> Dict:
        return {"kind": "expr", "components": [str(e) for e in self.components]}


def parse_input_spec(spec: str, seed: int = 0) -> InputSignal:
    """
    ``zero`` | ``uniform:lo,hi[,period]`` | ``expr:<e>`` or ``expr:[e1, e2]``.
    """
    spec = spec.strip()
    if spec == "zero":
        return ZeroInput()
    kind, _, rest = spec.partition(":")
    if kind == "uniform":
        try:
            parts = [float(p) for p in rest.split(",")]
        except ValueError:
            raise SignalError(f"bad uniform input spec {spec!r}") from None
        if len(parts) not in (2, 3):
            raise SignalError(f"uniform input needs lo,hi[,period], got {spec!r}")
        period = parts[2] if len(parts) == 3 else None
        return UniformPiecewiseInput(parts[0], parts[1], period, seed)
    if kind == "expr":
        return ExpressionInput.parse(rest)
    raise SignalError(f"unknown input kind {kind!r}")
