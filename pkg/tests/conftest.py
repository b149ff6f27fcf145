import numpy as np
import pytest

from pdsplit import (
    PDState,
    SaddleOperator,
    hvector,
    identity_op,
    matrix_op,
    scalar_precond,
)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(rng, dims):
    """Random primal-dual state with the given block dimensions."""
    parts = [hvector(rng.standard_normal(d)) for d in dims]
    return PDState(parts[0], tuple(parts[1:]))


def adjoint_gap(op, rng, trials=100):
    """Worst normalized adjoint-identity violation over random pairs."""
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.dom_dim)
        y = rng.standard_normal(op.cod_dim)
        lhs = float(op.forward(x) @ y)
        rhs = float(x @ op.adjoint(y))
        scale = np.linalg.norm(x) * np.linalg.norm(y) + 1.0
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def identity_saddle(dim=1):
    """Critical saddle operator: identity preconditioners and coupling."""
    return SaddleOperator(
        scalar_precond(1.0, dim),
        (scalar_precond(1.0, dim),),
        (identity_op(dim),),
    )


def random_saddle(rng, n, m, scale=1.0):
    """Saddle operator with random coupling scaled to satisfy the
    step-size condition with the given margin."""
    mat = rng.standard_normal((m, n))
    tau = float(rng.uniform(0.5, 1.5))
    sig = float(rng.uniform(0.5, 1.5))
    norm = np.linalg.norm(mat, 2)
    mat *= scale / (norm * np.sqrt(tau * sig))
    return SaddleOperator(
        scalar_precond(tau, n),
        (scalar_precond(sig, m),),
        (matrix_op(mat),),
    )
