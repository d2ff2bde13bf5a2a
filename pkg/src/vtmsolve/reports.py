"""Solve outcome reporting shared by all iterative methods."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

DIVERGENCE_LIMIT = 1e12


class SolveStatus(enum.Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    MAX_ITERATIONS = "max_iterations"


class Diverged(RuntimeError):
    """Raised by raise_for_status when a run blew past the divergence limit."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class MaxIterations(RuntimeError):
    """Raised by raise_for_status when the iteration budget ran out."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class SolveReport:
    """Result of one iterative solve.

    residual_history holds the relative residual after each iteration;
    twin_mismatch the final maximum disagreement |u_a - u_b| across
    wire endpoints before averaging (NaN for methods without twins),
    with the per-iteration trace in twin_mismatch_history; cf_estimate
    the observed asymptotic contraction of the residual tail, NaN when
    too few pre-convergence residuals exist.
    """

    method: str
    status: SolveStatus
    iterations: int
    x: np.ndarray | None
    residual_history: list = field(default_factory=list)
    twin_mismatch: float = float("nan")
    twin_mismatch_history: list = field(default_factory=list)
    cf_estimate: float = float("nan")
    wall_seconds: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "status": self.status.value,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
            "residual_history": [float(r) for r in self.residual_history],
            "twin_mismatch": float(self.twin_mismatch),
            "twin_mismatch_history": [float(t) for t in self.twin_mismatch_history],
            "cf_estimate": float(self.cf_estimate),
            "wall_seconds": float(self.wall_seconds),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def raise_for_status(self) -> "SolveReport":
        """Turn a failed outcome into its exception; return self if converged."""
        if self.status is SolveStatus.DIVERGED:
            raise Diverged(f"{self.method} diverged at iteration "
                           f"{self.iterations}", self.iterations)
        if self.status is SolveStatus.MAX_ITERATIONS:
            raise MaxIterations(f"{self.method} did not converge within "
                                f"{self.iterations} iterations", self.iterations)
        return self


def residual_status(rel_res: float, tol: float) -> SolveStatus | None:
    """Classify one residual sample: converged, diverged, or neither."""
    if not np.isfinite(rel_res) or rel_res > DIVERGENCE_LIMIT:
        return SolveStatus.DIVERGED
    if rel_res <= tol:
        return SolveStatus.CONVERGED
    return None


def estimate_cf(history, stride: int = 1) -> float:
    """Geometric-mean contraction of the residual tail.

    Uses up to the last 10 pre-convergence ratios spaced `stride`
    iterations apart (stride 2 measures the two-tick contraction of
    alternating exchanges).
    """
    h = [r for r in history if np.isfinite(r) and r > 0]
    if len(h) <= stride:
        return float("nan")
    ratios = [h[i + stride] / h[i] for i in range(len(h) - stride)]
    tail = ratios[-10:]
    if not tail:
        return float("nan")
    return float(np.exp(np.mean(np.log(tail))))
