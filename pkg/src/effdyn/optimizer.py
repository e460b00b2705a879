"""Brute-force maximization of the channel fidelity over IR unitaries.

Independent of the mean-field rule; used as its oracle on small instances.
The iterate is moved along exponential coordinates W -> W exp(i sum_a c_a B_a)
around the current point, with B_a the traceless Hermitian basis elements.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import fidelity_value
from .linalg import (
    ATOL_EIGEN,
    BipartiteOperator,
    exp_i_hermitian,
    haar_unitary,
    hermitian_basis,
    is_unitary,
    validate_density,
)

FD_STEP = 1e-6
TIE_TOL = 1e-12
ARMIJO = 0.3


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 4
    max_iters: int = 2000
    initial_step: float = 1.0
    grad_tolerance: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.grad_tolerance <= 0:
            raise ValueError("grad_tolerance must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")


@dataclass(frozen=True)
class OptResult:
    best_unitary: np.ndarray
    best_fidelity: float
    iterations: int
    converged: bool
    restart_index: int
    history: tuple = ()

    def to_json(self) -> dict:
        return {
            "best_fidelity": float(self.best_fidelity),
            "iterations": self.iterations,
            "converged": bool(self.converged),
            "restart_index": self.restart_index,
            "best_unitary": [[[z.real, z.imag] for z in row] for row in self.best_unitary],
        }


def _polar(w: np.ndarray) -> np.ndarray:
    x, _, yh = np.linalg.svd(w)
    return x @ yh


def _ascend(u: BipartiteOperator, rho: np.ndarray, start: np.ndarray, cfg: OptimizerConfig,
            generators: np.ndarray, restart: int) -> OptResult:
    def objective(w):
        return fidelity_value(u, rho, w)

    def move(w, coeffs):
        h = np.tensordot(coeffs, generators, axes=1)
        return w @ exp_i_hermitian(h)

    w = _polar(start)
    f = objective(w)
    history = [f]
    step = cfg.initial_step
    converged = False
    it = 0
    n = len(generators)
    for it in range(1, cfg.max_iters + 1):
        grad = np.empty(n)
        for a in range(n):
            e = np.zeros(n)
            e[a] = FD_STEP
            grad[a] = (objective(move(w, e)) - objective(move(w, -e))) / (2 * FD_STEP)
        gnorm = np.linalg.norm(grad)
        if gnorm < cfg.grad_tolerance:
            converged = True
            break
        t = step
        accepted = False
        while t > 1e-14:
            trial = _polar(move(w, t * grad))
            ft = objective(trial)
            # Armijo sufficient increase; rejects overshoots that barely gain
            if ft > f + ARMIJO * t * gnorm**2:
                w, f = trial, ft
                accepted = True
                break
            t /= 2
        if not accepted:
            # no ascent direction resolvable above the objective noise floor
            converged = gnorm < 1e3 * cfg.grad_tolerance
            break
        history.append(f)
        step = min(2 * t, cfg.initial_step)
    return OptResult(w, float(f), it, converged, restart, tuple(history))


def maximize_fidelity(u: BipartiteOperator, rho_uv: np.ndarray, cfg: OptimizerConfig | None = None,
                      warm_start: np.ndarray | None = None, jobs: int = 1) -> OptResult:
    """Best channel fidelity over IR unitaries, by multi-start ascent.

    Restart 0 begins at ``warm_start`` when given; every other restart starts
    from a Haar-random unitary drawn from a stream spawned off ``cfg.seed``.
    The first restart within 1e-12 of the best fidelity wins ties.
    """
    cfg = OptimizerConfig() if cfg is None else cfg
    if u.d_ir > 16:
        raise ValueError("the brute-force oracle is limited to d_ir <= 16")
    if not is_unitary(u.matrix, ATOL_EIGEN):
        raise ValueError("u is not unitary")
    rho = validate_density(rho_uv, u.d_uv)
    generators = hermitian_basis(u.d_ir)[1:]
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    starts = []
    for r, ss in enumerate(streams):
        if r == 0 and warm_start is not None:
            starts.append(np.asarray(warm_start, dtype=complex))
        else:
            starts.append(haar_unitary(u.d_ir, np.random.Generator(np.random.PCG64(ss))))
    if u.d_ir == 1:
        return OptResult(np.ones((1, 1), complex), fidelity_value(u, rho, np.ones((1, 1))), 0, True, 0)

    def run(r):
        return _ascend(u, rho, starts[r], cfg, generators, r)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, range(cfg.restarts)))
    else:
        results = [run(r) for r in range(cfg.restarts)]
    top = max(res.best_fidelity for res in results)
    return next(res for res in results if res.best_fidelity >= top - TIE_TOL)


def phase_align(a: np.ndarray, b: np.ndarray) -> float:
    """min over phi of the Frobenius norm ||a - exp(i phi) b||."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    sq = np.linalg.norm(a) ** 2 + np.linalg.norm(b) ** 2 - 2 * abs(np.vdot(b, a))
    return float(np.sqrt(max(sq, 0.0)))
