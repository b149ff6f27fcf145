"""Relaxed Douglas-Rachford splitting and its primal-dual formulation.

The reflected-resolvent operator, its relaxed iteration, the
primal-dual recurrence with coupling fixed to the identity and dual
preconditioner fixed to the inverse of the primal one, and the exact
transport between fixed points of the two formulations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .km import (
    FixedPointMap,
    IterTrace,
    KMResult,
    Monitor,
    RelaxationSchedule,
    km_iterate,
)
from .linalg import HVector, PDState, Precond, identity_op
from .monotone import MonotoneOp
from .primal_dual import PDProblem, pd_iterate

__all__ = [
    "DRSProblem",
    "PDDRSResult",
    "drs_operator",
    "drs_iterate",
    "pd_drs_iterate",
    "fixed_point_transport",
    "as_pd_problem",
    "equivalence_deviation",
]


@dataclass(frozen=True)
class DRSProblem:
    """Two-operator inclusion 0 in A x + B x with a preconditioner."""

    A: MonotoneOp
    B: MonotoneOp
    upsilon: Precond

    @property
    def dim(self) -> int:
        return self.upsilon.dim


def drs_operator(p: DRSProblem, z: HVector) -> HVector:
    """Reflected-resolvent composition J_B(2 J_A z - z) + z - J_A z."""
    ja = p.A.resolvent(p.upsilon, z)
    refl = HVector(2.0 * ja.data - z.data, z.dims)
    jb = p.B.resolvent(p.upsilon, refl)
    return HVector(jb.data + z.data - ja.data, z.dims)


def drs_iterate(
    p: DRSProblem,
    z0: HVector,
    sched: RelaxationSchedule,
    eps: float | None,
    max_iter: int,
    monitors: tuple[Monitor, ...] = (),
) -> KMResult:
    s_map = FixedPointMap(apply=lambda z: drs_operator(p, z))
    return km_iterate(s_map, z0, sched, eps, max_iter, monitors=monitors)


def as_pd_problem(p: DRSProblem) -> PDProblem:
    """Primal-dual problem with identity coupling and dual
    preconditioner equal to the inverse of the primal one."""
    return PDProblem(
        A=p.A,
        blocks=((p.B, identity_op(p.dim)),),
        upsilon=p.upsilon,
        sigmas=(p.upsilon.inverse(),),
    )


@dataclass
class PDDRSResult:
    state: PDState
    z_sequence: list[HVector] = field(default_factory=list)
    trace: list[IterTrace] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


class _AuxCollector(Monitor):
    """Records z_n = x_n - Y u_n along the primal-dual recurrence."""

    def __init__(self, upsilon: Precond):
        self.upsilon = upsilon
        self.zs: list[HVector] = []

    def _map(self, state: PDState) -> HVector:
        return HVector(
            state.x.data - self.upsilon.apply(state.duals[0].data),
            state.x.dims,
        )

    def start(self, z0: PDState) -> None:
        self.zs.append(self._map(z0))

    def observe(self, n, z, sz, z_next) -> None:
        self.zs.append(self._map(z_next))


def pd_drs_iterate(
    p: DRSProblem,
    x0: HVector,
    u0: HVector,
    sched: RelaxationSchedule,
    eps: float | None,
    max_iter: int,
) -> PDDRSResult:
    """Primal-dual recurrence equivalent to relaxed Douglas-Rachford.

    Runs the primal-dual iteration with identity coupling and dual
    preconditioner the inverse of the primal one, and emits the
    auxiliary sequence z_n = x_n - Y u_n, which coincides step by step
    with the classic relaxed iteration started at z_0 = x_0 - Y u_0.
    """
    pd = as_pd_problem(p)
    z0 = PDState(x0, (u0,))
    collector = _AuxCollector(p.upsilon)
    result = pd_iterate(pd, z0, sched, eps, max_iter, monitors=(collector,))
    return PDDRSResult(
        state=result.state,
        z_sequence=collector.zs,
        trace=result.trace,
        converged=result.converged,
        iterations=result.iterations,
    )


def _solve_id_plus_sq(upsilon: Precond, arr: np.ndarray) -> np.ndarray:
    """(Id + Y^2)^{-1} applied to a flat array; closed form for scalar
    and diagonal preconditioners, dense solve otherwise."""
    if upsilon.kind == "scalar":
        return arr / (1.0 + upsilon.value ** 2)
    if upsilon.kind == "diagonal":
        return arr / (1.0 + np.asarray(upsilon.value) ** 2)
    m = upsilon.as_matrix()
    return np.linalg.solve(np.eye(upsilon.dim) + m @ m, arr)


def fixed_point_transport(
    p: DRSProblem, z_hat: HVector, tol: float = 1e-8
) -> PDState:
    """Transport a fixed point of the reflected-resolvent operator to a
    shadow-fixed primal-dual state.

    Returns (x, u) = ((Id + Y^2)^{-1} z, -Y (Id + Y^2)^{-1} z).  The
    inverse map x - Y u recovers z exactly, and one application of the
    primal-dual resolvent to the result yields a zero of the inclusion.
    """
    drift = (drs_operator(p, z_hat) - z_hat).norm()
    if drift > tol * (1.0 + z_hat.norm()):
        raise ValueError(
            f"z_hat is not a fixed point to tolerance ({drift:.3e})"
        )
    w = _solve_id_plus_sq(p.upsilon, z_hat.data)
    return PDState(
        HVector(w, z_hat.dims),
        (HVector(-p.upsilon.apply(w), z_hat.dims),),
    )


def equivalence_deviation(
    p: DRSProblem,
    x0: HVector,
    u0: HVector,
    sched: RelaxationSchedule,
    iters: int,
) -> float:
    """Max componentwise gap between the primal-dual auxiliary sequence
    and the classic relaxed iteration over a fixed number of steps."""
    pd_run = pd_drs_iterate(p, x0, u0, sched, eps=None, max_iter=iters)
    z0 = HVector(x0.data - p.upsilon.apply(u0.data), x0.dims)
    s_map = FixedPointMap(apply=lambda z: drs_operator(p, z))

    class _Collect(Monitor):
        def __init__(self):
            self.zs = []

        def start(self, z):
            self.zs.append(z)

        def observe(self, n, z, sz, z_next):
            self.zs.append(z_next)

    coll = _Collect()
    km_iterate(s_map, z0, sched, eps=None, max_iter=iters, monitors=(coll,))
    dev = 0.0
    for za, zb in zip(pd_run.z_sequence, coll.zs):
        dev = max(dev, float(np.max(np.abs(za.data - zb.data))))
    return dev
