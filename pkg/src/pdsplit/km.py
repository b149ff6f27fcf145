"""Generic relaxed fixed-point iteration with stopping and diagnostics.

Runs z_{n+1} = (1 - lambda_n) z_n + lambda_n S z_n for any state type
supporting +, -, scalar * and .norm() (plain vectors and primal-dual
states alike).  Non-convergence is reported as data, not raised, so
parameter sweeps can record failures.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

from .linalg import SaddleOperator, seminorm

__all__ = [
    "FixedPointMap",
    "RelaxationSchedule",
    "IterTrace",
    "KMResult",
    "Monitor",
    "FejerMonitor",
    "DisplacementMonitor",
    "km_iterate",
    "residual_rel",
    "fejer_monitor",
    "displacement_monitor",
]


@dataclass(frozen=True)
class FixedPointMap:
    """A self-map of the iteration space, applied once per step."""

    apply: Callable[[Any], Any]
    block_dims: tuple[int, ...] | None = None


@dataclass(frozen=True)
class RelaxationSchedule:
    """Relaxation parameters lambda_n in [0, 2], constant or tabulated."""

    lambda_at: Callable[[int], float]
    descriptor: str

    @staticmethod
    def constant(lam: float) -> "RelaxationSchedule":
        lam = float(lam)
        _check_lambda(lam)
        return RelaxationSchedule(lambda n: lam, f"constant({lam})")

    @staticmethod
    def from_sequence(values: Sequence[float]) -> "RelaxationSchedule":
        vals = [float(v) for v in values]
        if not vals:
            raise ValueError("empty relaxation sequence")
        for v in vals:
            _check_lambda(v)

        def at(n: int) -> float:
            return vals[n] if n < len(vals) else vals[-1]

        return RelaxationSchedule(at, f"sequence(len={len(vals)})")

    def divergence_surrogate(self, n_terms: int,
                             floor: float | None = None) -> float:
        """Partial sum of lambda_n (2 - lambda_n), the divergence
        surrogate guaranteeing asymptotic regularity.

        With ``floor`` given, stops accumulating once the floor is
        reached (long constant schedules clear it after a few terms).
        """
        total = 0.0
        for n in range(n_terms):
            lam = self.lambda_at(n)
            total += lam * (2.0 - lam)
            if floor is not None and total >= floor:
                break
        return total


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 2.0:
        raise ValueError(f"relaxation parameter {lam} outside [0, 2]")


@dataclass(frozen=True)
class IterTrace:
    """Per-iteration record: update index, relative step residual,
    optional objective value and displacement seminorm, wall time."""

    n: int
    residual: float
    objective: Optional[float] = None
    displacement: Optional[float] = None
    wall_ms: float = 0.0


@dataclass
class KMResult:
    state: Any
    trace: list[IterTrace] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    @property
    def final_residual(self) -> float:
        return self.trace[-1].residual if self.trace else math.inf


def residual_rel(z_next, z) -> float:
    """Relative step size sqrt(||z_next - z||^2 / ||z||^2).

    Returns +inf when ||z|| = 0 (sentinel for an uninformative base
    point).
    """
    nz = z.norm()
    if nz == 0.0:
        return math.inf
    return (z_next - z).norm() / nz


class Monitor:
    """Per-iteration observer; subclasses record convergence diagnostics."""

    def start(self, z0) -> None:
        pass

    def observe(self, n: int, z, sz, z_next) -> None:
        pass


class FejerMonitor(Monitor):
    """Distance to an anchor in the saddle seminorm, per iterate.

    The anchor must be (numerically) fixed for the shadow of the
    iteration map, e.g. the limit of a high-precision pre-solve; the
    seminorm ignores kernel components, so the anchor's shadow is what
    matters.
    """

    def __init__(self, v_op: SaddleOperator, anchor):
        self.v_op = v_op
        self.anchor = anchor
        self.values: list[float] = []

    def start(self, z0) -> None:
        self.values.append(seminorm(self.v_op, z0 - self.anchor))

    def observe(self, n, z, sz, z_next) -> None:
        self.values.append(seminorm(self.v_op, z_next - self.anchor))

    @property
    def max_single_step_increase(self) -> float:
        if len(self.values) < 2:
            return 0.0
        return max(
            b - a for a, b in zip(self.values[:-1], self.values[1:])
        )


class DisplacementMonitor(Monitor):
    """Seminorm of the displacement S z_n - z_n, per iteration."""

    def __init__(self, v_op: SaddleOperator):
        self.v_op = v_op
        self.values: list[float] = []

    def observe(self, n, z, sz, z_next) -> None:
        self.values.append(seminorm(self.v_op, sz - z))

    @property
    def last_value(self) -> Optional[float]:
        return self.values[-1] if self.values else None

    @property
    def initial(self) -> float:
        return self.values[0]

    @property
    def final(self) -> float:
        return self.values[-1]

    @property
    def ratio(self) -> float:
        return self.final / self.initial if self.initial != 0.0 else 0.0


def fejer_monitor(v_op: SaddleOperator, anchor) -> FejerMonitor:
    return FejerMonitor(v_op, anchor)


def displacement_monitor(v_op: SaddleOperator) -> DisplacementMonitor:
    return DisplacementMonitor(v_op)


def km_iterate(
    s_map: FixedPointMap,
    z0,
    sched: RelaxationSchedule,
    eps: float | None,
    max_iter: int,
    monitors: Sequence[Monitor] = (),
    objective_fn: Callable[[Any], float] | None = None,
    divergence_floor: float = 1.0,
) -> KMResult:
    """Relaxed fixed-point iteration until residual_rel < eps.

    ``eps=None`` disables the stopping rule and runs exactly
    ``max_iter`` steps (used by sequence-equivalence checks).  If the
    iteration stops at ``max_iter`` without meeting ``eps`` the result
    is flagged non-converged rather than raising.  Bit-deterministic
    for identical inputs and schedule.
    """
    if eps is not None and eps <= 0:
        raise ValueError("eps must be positive (or None for fixed-count runs)")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if sched.divergence_surrogate(max_iter,
                                  floor=divergence_floor) < divergence_floor:
        warnings.warn(
            "relaxation schedule has a small divergence surrogate "
            "sum(lambda_n (2 - lambda_n)); convergence may stall",
            stacklevel=2,
        )
    disp_mon = next(
        (m for m in monitors if isinstance(m, DisplacementMonitor)), None
    )
    for m in monitors:
        m.start(z0)
    z = z0
    trace: list[IterTrace] = []
    converged = False
    for n in range(max_iter):
        t0 = time.perf_counter()
        sz = s_map.apply(z)
        lam = sched.lambda_at(n)
        z_next = (1.0 - lam) * z + lam * sz
        r = residual_rel(z_next, z)
        for m in monitors:
            m.observe(n, z, sz, z_next)
        obj = objective_fn(z_next) if objective_fn is not None else None
        disp = disp_mon.last_value if disp_mon is not None else None
        trace.append(
            IterTrace(n, r, obj, disp, (time.perf_counter() - t0) * 1e3)
        )
        z = z_next
        if eps is not None and r < eps:
            converged = True
            break
    return KMResult(state=z, trace=trace, converged=converged,
                    iterations=len(trace))
