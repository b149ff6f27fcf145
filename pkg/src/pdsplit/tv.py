"""Total-variation deblurring experiment at desk scale.

Problem assembly (quadratic data fit, two anisotropic difference
blocks, box constraint block), the relaxed primal-dual solver on it,
step-size parameterizations on the critical boundary, metrics and a
reproducible parameter sweep.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .km import KMResult, Monitor, RelaxationSchedule
from .linalg import HVector, LinOp, PDState, identity_op, scalar_precond
from .monotone import (
    QuadraticDataFit,
    box_operator,
    data_fit_operator,
    l1_operator,
)
from .primal_dual import PDProblem, pd_iterate

__all__ = [
    "ImageGrid",
    "TVConfig",
    "TVRunResult",
    "SweepGrid",
    "TVInstance",
    "gradient_norm_sq",
    "build_gradient_ops",
    "build_gaussian_blur",
    "gaussian_kernel",
    "add_gaussian_noise",
    "tv_objective",
    "psnr",
    "synthetic_image",
    "boundary_sigmas",
    "equal_critical_sigma",
    "build_problem",
    "run_tv_solver",
    "sweep",
    "SWEEP_COLUMNS",
]


@dataclass(frozen=True)
class ImageGrid:
    """Grayscale image: an n1 x n2 float grid plus its dynamic range."""

    pixels: np.ndarray
    peak: float = 255.0

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
            raise ValueError("image must be 2-D with both sides >= 2")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image entries must be finite")
        if self.peak <= 0:
            raise ValueError("peak must be positive")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def as_hvector(self) -> HVector:
        return HVector(self.pixels.ravel(), self.pixels.shape)


@dataclass(frozen=True)
class TVConfig:
    """Step sizes, regularization and run controls for one solve.

    The step sizes must satisfy
    tau * (sigma1*||D1||^2 + sigma2*||D2||^2 + sigma3) <= 1 + 1e-4
    on the target grid; ``build_problem`` enforces this.
    """

    tau: float
    sigma1: float
    sigma2: float
    sigma3: float
    alpha: float = 0.01
    relaxation: float = 1.0
    eps: float = 1e-8
    max_iter: int = 100000
    seed: int = 0
    blur_size: int = 9
    blur_std: float = 4.0
    noise_std_rel: float = 1e-3


def gradient_norm_sq(n: int) -> float:
    """Largest eigenvalue of the 1-D forward-difference normal matrix.

    Forward differences with a zero last row have normal matrix equal
    to the path-graph Laplacian, whose spectrum is 4 sin^2(k pi / 2n);
    the maximum is 4 cos^2(pi / 2n), just below 4.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    return 4.0 * math.cos(math.pi / (2.0 * n)) ** 2


def build_gradient_ops(n1: int, n2: int) -> tuple[LinOp, LinOp]:
    """Forward-difference operators along each axis (zero last row).

    Adjoints are negative divergences, so the adjoint identity holds
    exactly.  Both map flat n1*n2 vectors to flat n1*n2 vectors.
    """
    if n1 < 2 or n2 < 2:
        raise ValueError("grid must be at least 2 x 2")
    n = n1 * n2
    shape = (n1, n2)

    def d1_fwd(v: np.ndarray) -> np.ndarray:
        x = v.reshape(shape)
        g = np.empty_like(x)
        np.subtract(x[1:, :], x[:-1, :], out=g[:-1, :])
        g[-1, :] = 0.0
        return g.ravel()

    def d1_adj(v: np.ndarray) -> np.ndarray:
        y = v.reshape(shape)
        d = np.empty_like(y)
        np.negative(y[0, :], out=d[0, :])
        np.subtract(y[:-2, :], y[1:-1, :], out=d[1:-1, :])
        d[-1, :] = y[-2, :]
        return d.ravel()

    def d2_fwd(v: np.ndarray) -> np.ndarray:
        x = v.reshape(shape)
        g = np.empty_like(x)
        np.subtract(x[:, 1:], x[:, :-1], out=g[:, :-1])
        g[:, -1] = 0.0
        return g.ravel()

    def d2_adj(v: np.ndarray) -> np.ndarray:
        y = v.reshape(shape)
        d = np.empty_like(y)
        np.negative(y[:, 0], out=d[:, 0])
        np.subtract(y[:, :-2], y[:, 1:-1], out=d[:, 1:-1])
        d[:, -1] = y[:, -2]
        return d.ravel()

    d1 = LinOp(d1_fwd, d1_adj, n, n, grid_shape=shape)
    d2 = LinOp(d2_fwd, d2_adj, n, n, grid_shape=shape)
    return d1, d2


def gaussian_kernel(size: int, std: float) -> np.ndarray:
    """Truncated, normalized Gaussian kernel (sums to 1)."""
    if size % 2 == 0:
        raise ValueError("kernel size must be odd")
    if std <= 0:
        raise ValueError("std must be positive")
    x = np.arange(size, dtype=np.float64) - size // 2
    k1 = np.exp(-0.5 * (x / std) ** 2)
    k2 = np.outer(k1, k1)
    return k2 / k2.sum()


def build_gaussian_blur(
    n1: int, n2: int, size: int = 9, std: float = 4.0
) -> LinOp:
    """Periodic Gaussian blur, diagonalized by the FFT.

    Self-adjoint by kernel symmetry; its transfer function is attached
    to the operator so quadratic resolvents can reuse it.
    """
    kern = gaussian_kernel(size, std)
    if size > n1 or size > n2:
        raise ValueError("kernel larger than the image")
    pad = np.zeros((n1, n2))
    pad[:size, :size] = kern
    pad = np.roll(np.roll(pad, -(size // 2), axis=0), -(size // 2), axis=1)
    symbol = np.fft.fft2(pad)
    sym_conj = np.conj(symbol)
    shape = (n1, n2)

    def fwd(v: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(symbol * np.fft.fft2(v.reshape(shape))).real.ravel()

    def adj(v: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(sym_conj * np.fft.fft2(v.reshape(shape))).real.ravel()

    n = n1 * n2
    return LinOp(fwd, adj, n, n, fft_symbol=symbol, grid_shape=shape)


def add_gaussian_noise(img: ImageGrid, std_rel: float, seed: int) -> ImageGrid:
    """Additive zero-mean white Gaussian noise.

    ``std_rel`` is the standard deviation on the unit-scaled image, so
    the absolute deviation is std_rel * peak.  Deterministic per seed.
    """
    if std_rel < 0:
        raise ValueError("noise level must be nonnegative")
    if std_rel == 0:
        return img
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, std_rel * img.peak, size=img.shape)
    return ImageGrid(img.pixels + noise, img.peak)


def tv_objective(
    x: ImageGrid, R: LinOp, b: HVector, alpha: float
) -> float:
    """Data fit plus anisotropic total variation:
    0.5*||R x - b||^2 + alpha * (||D1 x||_1 + ||D2 x||_1)."""
    n1, n2 = x.shape
    d1, d2 = build_gradient_ops(n1, n2)
    xv = x.pixels.ravel()
    resid = R.forward(xv) - b.data
    tv = np.abs(d1.forward(xv)).sum() + np.abs(d2.forward(xv)).sum()
    return 0.5 * float(resid @ resid) + alpha * float(tv)


def psnr(x: ImageGrid, ref: ImageGrid) -> float:
    """Peak signal-to-noise ratio 10 log10(peak^2 N / ||x - ref||^2).

    Returns +inf when the images coincide.
    """
    if x.shape != ref.shape:
        raise ValueError("image shapes differ")
    err = x.pixels - ref.pixels
    sq = float(np.sum(err * err))
    if sq == 0.0:
        return math.inf
    n = err.size
    return 10.0 * math.log10(ref.peak ** 2 * n / sq)


def synthetic_image(n1: int, n2: int, peak: float = 255.0) -> ImageGrid:
    """Deterministic piecewise-constant test image.

    A flat background with a bright rectangle, a mid-gray disc and a
    dark bar; cartoon-like content that total-variation models recover
    well.
    """
    img = np.full((n1, n2), 0.25 * peak)
    r0, r1 = n1 // 8, n1 // 2
    c0, c1 = n2 // 8, n2 // 2
    img[r0:r1, c0:c1] = 0.85 * peak
    ii, jj = np.mgrid[0:n1, 0:n2]
    disc = (ii - 2 * n1 // 3) ** 2 + (jj - 2 * n2 // 3) ** 2 <= (
        min(n1, n2) // 5
    ) ** 2
    img[disc] = 0.55 * peak
    img[(7 * n1) // 10:(8 * n1) // 10, n2 // 6:(5 * n2) // 6] = 0.1 * peak
    return ImageGrid(img, peak)


def boundary_sigmas(
    tau: float, gamma1: float, gamma2: float, d1_sq: float, d2_sq: float
) -> tuple[float, float, float]:
    """Dual step sizes on the critical boundary.

    sigma1 = gamma1 (1 - gamma2) / (tau ||D1||^2),
    sigma2 = (1 - gamma1)(1 - gamma2) / (tau ||D2||^2),
    sigma3 = gamma2 / tau,
    so tau (sigma1 ||D1||^2 + sigma2 ||D2||^2 + sigma3) = 1 exactly.
    """
    if not (0 < gamma1 < 1 and 0 < gamma2 < 1):
        raise ValueError("gamma parameters must lie in (0, 1)")
    if tau <= 0:
        raise ValueError("tau must be positive")
    return (
        gamma1 * (1.0 - gamma2) / (tau * d1_sq),
        (1.0 - gamma1) * (1.0 - gamma2) / (tau * d2_sq),
        gamma2 / tau,
    )


def equal_critical_sigma(tau: float, d1_sq: float, d2_sq: float) -> float:
    """Single critical dual step size shared by all blocks:
    sigma = 1 / (tau (1 + ||D1||^2 + ||D2||^2))."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return 1.0 / (tau * (1.0 + d1_sq + d2_sq))


def build_problem(cfg: TVConfig, observed: ImageGrid, R: LinOp) -> PDProblem:
    """Assemble the three-block primal-dual problem for one image.

    Blocks: anisotropic differences along each axis with an l1 penalty,
    and an identity-coupled box constraint on the dynamic range.
    """
    n1, n2 = observed.shape
    n = n1 * n2
    if R.dom_dim != n or R.cod_dim != n:
        raise ValueError("blur operator does not match the image grid")
    d1_sq = gradient_norm_sq(n1)
    d2_sq = gradient_norm_sq(n2)
    bound = cfg.tau * (
        cfg.sigma1 * d1_sq + cfg.sigma2 * d2_sq + cfg.sigma3
    )
    if bound > 1.0 + 1e-4:
        raise ValueError(
            f"step sizes violate the boundary condition ({bound:.6f} > 1)"
        )
    if min(cfg.tau, cfg.sigma1, cfg.sigma2, cfg.sigma3) <= 0:
        raise ValueError("step sizes must be positive")
    d1, d2 = build_gradient_ops(n1, n2)
    b = observed.as_hvector()
    quad = QuadraticDataFit(R, b)
    return PDProblem(
        A=data_fit_operator(quad),
        blocks=(
            (l1_operator(cfg.alpha), d1),
            (l1_operator(cfg.alpha), d2),
            (box_operator(0.0, observed.peak), identity_op(n)),
        ),
        upsilon=scalar_precond(cfg.tau, n),
        sigmas=(
            scalar_precond(cfg.sigma1, n),
            scalar_precond(cfg.sigma2, n),
            scalar_precond(cfg.sigma3, n),
        ),
    )


@dataclass
class TVRunResult:
    image: ImageGrid
    duals: tuple[HVector, ...]
    result: KMResult
    problem: PDProblem

    @property
    def converged(self) -> bool:
        return self.result.converged

    @property
    def iterations(self) -> int:
        return self.result.iterations

    @property
    def trace(self):
        return self.result.trace

    @property
    def state(self) -> PDState:
        return self.result.state


def run_tv_solver(
    cfg: TVConfig,
    observed: ImageGrid,
    R: LinOp,
    monitors: tuple[Monitor, ...] = (),
    record_objective: bool = False,
) -> TVRunResult:
    """Relaxed primal-dual solve of the deblurring problem.

    Starts from the observed image with zero duals and stops when the
    relative primal-dual step drops below ``cfg.eps``.  The returned
    image is the final (relaxed) primal iterate; it may leave the box
    by a relaxation-sized margin mid-run, while one extra resolvent
    application lands inside it.
    """
    problem = build_problem(cfg, observed, R)
    z0 = problem.initial_state(observed.as_hvector())
    sched = RelaxationSchedule.constant(cfg.relaxation)
    objective_fn = None
    if record_objective:
        b = observed.as_hvector()
        alpha = cfg.alpha

        def objective_fn(state: PDState) -> float:
            grid = ImageGrid(state.x.as_grid(), observed.peak)
            return tv_objective(grid, R, b, alpha)

    result = pd_iterate(
        problem, z0, sched, cfg.eps, cfg.max_iter,
        monitors=monitors, objective_fn=objective_fn,
    )
    restored = ImageGrid(result.state.x.as_grid(), observed.peak)
    return TVRunResult(
        image=restored,
        duals=result.state.duals,
        result=result,
        problem=problem,
    )


@dataclass(frozen=True)
class TVInstance:
    """Shared experiment setup: image, blur and noise model, run
    controls used by every sweep cell."""

    n1: int = 64
    n2: int = 64
    peak: float = 255.0
    alpha: float = 0.01
    blur_size: int = 9
    blur_std: float = 4.0
    noise_std_rel: float = 1e-3
    eps: float = 1e-8
    max_iter: int = 100000


@dataclass(frozen=True)
class SweepGrid:
    """Cells of the step-size study: every (tau, gamma1, gamma2)
    triple on the critical boundary, plus one equal-sigma cell per tau
    when ``include_equal_sigma`` is set."""

    tau_values: tuple[float, ...]
    gamma1_values: tuple[float, ...]
    gamma2_values: tuple[float, ...]
    lambda_values: tuple[float, ...]
    include_equal_sigma: bool = True


SWEEP_COLUMNS = (
    "tau", "sigma1", "sigma2", "sigma3", "lambda", "seed",
    "iterations", "converged", "final_residual", "objective",
    "psnr", "wall_ms",
)


def _sweep_cells(grid: SweepGrid, d1_sq: float, d2_sq: float):
    cells = []
    for tau in grid.tau_values:
        for g1 in grid.gamma1_values:
            for g2 in grid.gamma2_values:
                cells.append((tau,) + boundary_sigmas(tau, g1, g2, d1_sq, d2_sq))
        if grid.include_equal_sigma:
            s = equal_critical_sigma(tau, d1_sq, d2_sq)
            cells.append((tau, s, s, s))
    return cells


def _run_cell(cfg, observed, R, clean, b):
    t0 = time.perf_counter()
    try:
        run = run_tv_solver(cfg, observed, R)
        wall_ms = (time.perf_counter() - t0) * 1e3
        return {
            "tau": cfg.tau,
            "sigma1": cfg.sigma1,
            "sigma2": cfg.sigma2,
            "sigma3": cfg.sigma3,
            "lambda": cfg.relaxation,
            "seed": cfg.seed,
            "iterations": run.iterations,
            "converged": run.converged,
            "final_residual": run.result.final_residual,
            "objective": tv_objective(run.image, R, b, cfg.alpha),
            "psnr": psnr(run.image, clean),
            "wall_ms": wall_ms,
        }
    except Exception:
        wall_ms = (time.perf_counter() - t0) * 1e3
        return {
            "tau": cfg.tau,
            "sigma1": cfg.sigma1,
            "sigma2": cfg.sigma2,
            "sigma3": cfg.sigma3,
            "lambda": cfg.relaxation,
            "seed": cfg.seed,
            "iterations": 0,
            "converged": False,
            "final_residual": math.nan,
            "objective": math.nan,
            "psnr": math.nan,
            "wall_ms": wall_ms,
        }


def sweep(
    grid: SweepGrid,
    instance: TVInstance,
    seeds: Sequence[int],
    workers: int | None = None,
) -> list[dict]:
    """Run every sweep cell for every seed; one row per (cell, seed).

    Cells are independent and reproducible: each builds its observation
    from the shared clean image and the row's seed, and rows come back
    in deterministic cell-major order regardless of scheduling.
    """
    d1_sq = gradient_norm_sq(instance.n1)
    d2_sq = gradient_norm_sq(instance.n2)
    clean = synthetic_image(instance.n1, instance.n2, instance.peak)
    R = build_gaussian_blur(
        instance.n1, instance.n2, instance.blur_size, instance.blur_std
    )
    blurred = ImageGrid(
        R.forward(clean.pixels.ravel()).reshape(clean.shape), instance.peak
    )
    observations = {
        seed: add_gaussian_noise(blurred, instance.noise_std_rel, seed)
        for seed in seeds
    }
    jobs = []
    for tau, s1, s2, s3 in _sweep_cells(grid, d1_sq, d2_sq):
        for lam in grid.lambda_values:
            for seed in seeds:
                cfg = TVConfig(
                    tau=tau, sigma1=s1, sigma2=s2, sigma3=s3,
                    alpha=instance.alpha, relaxation=lam,
                    eps=instance.eps, max_iter=instance.max_iter,
                    seed=seed, blur_size=instance.blur_size,
                    blur_std=instance.blur_std,
                    noise_std_rel=instance.noise_std_rel,
                )
                jobs.append(cfg)
    b_cache = {
        seed: observations[seed].as_hvector() for seed in seeds
    }
    if workers is None or workers <= 1:
        rows = [
            _run_cell(cfg, observations[cfg.seed], R, clean, b_cache[cfg.seed])
            for cfg in jobs
        ]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(
                    _run_cell, cfg, observations[cfg.seed], R, clean,
                    b_cache[cfg.seed],
                )
                for cfg in jobs
            ]
            rows = [f.result() for f in futures]
    return rows
