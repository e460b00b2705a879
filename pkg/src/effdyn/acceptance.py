"""Exit criteria of the library, runnable from pytest or ``effdyn selftest``."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import channel as ch
from . import diracqw as dq
from . import meanfield as mf
from . import wavepacket as wp
from .linalg import (
    BipartiteOperator,
    haar_unitary,
    make_rng,
    partial_trace,
    random_density,
    random_hermitian,
    trace_distance,
)
from .optimizer import OptimizerConfig, maximize_fidelity


@dataclass(frozen=True)
class CriterionResult:
    number: str
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:>4} {self.name}: {self.detail}"


def random_bloch(rng: np.random.Generator) -> dq.BlochVector:
    """Uniform point in the Bloch ball."""
    v = rng.standard_normal(3)
    v *= rng.uniform() ** (1 / 3) / np.linalg.norm(v)
    return dq.BlochVector(*v)


def weak_coupling_instances(n: int = 10, seed: int = 2024):
    """Seeded random 2 (x) 2 families with full-rank UV states."""
    rng = make_rng(seed)
    return [(mf.random_family(2, 2, rng), random_density(2, rng)) for _ in range(n)]


def criterion_1() -> CriterionResult:
    t0 = time.perf_counter()
    rng = make_rng(1)
    worst = 0.0
    for _ in range(20):
        r = random_bloch(rng)
        closed = dq.mu_dirac(r, "closed_form")
        for L in (2, 4, 8):
            worst = max(worst, abs(dq.mu_dirac(r, "generic", L) - closed))
    dt = time.perf_counter() - t0
    return CriterionResult("1", "mu closed form vs generic box mu", worst <= 1e-9 and dt < 10,
                           f"max dev {worst:.2e} (tol 1e-9), {dt:.2f}s (<10s)")


def criterion_2() -> CriterionResult:
    rng = make_rng(2)
    worst = 0.0
    for L in (2, 3, 5, 8, 13):
        for _ in range(5):
            r = random_bloch(rng)
            s1, s2 = dq.box_sums(L, r)
            worst = max(worst, abs(s1 - 2), abs(s2 - (3 * r.r_x**2 + r.r_y**2) / 2))
    return CriterionResult("2", "box analytic sums", worst <= 1e-12, f"max dev {worst:.2e} (tol 1e-12)")


def criterion_3() -> CriterionResult:
    t0 = time.perf_counter()
    gaps = {1e-2: [], 1e-3: []}
    below = 0.0
    for i, (fam, rho) in enumerate(weak_coupling_instances()):
        gen = mf.extract_h_mix(fam)
        for theta in gaps:
            u = fam.unitary(theta)
            u_mf = mf.effective_unitary(fam, rho, theta, gen)
            f_mf = ch.fidelity_value(u, rho, u_mf)
            res = maximize_fidelity(u, rho, OptimizerConfig(restarts=3, seed=100 + i), warm_start=u_mf)
            gaps[theta].append(res.best_fidelity - f_mf)
            below = min(below, res.best_fidelity - f_mf)
    dt = time.perf_counter() - t0
    g2, g3 = max(gaps[1e-2]), max(gaps[1e-3])
    ok = g2 <= 1e-5 and g3 <= 1e-8 and below >= -1e-12 and dt < 60
    return CriterionResult("3", "mean-field optimality vs optimizer", ok,
                           f"max gap {g2:.2e} @1e-2 (tol 1e-5), {g3:.2e} @1e-3 (tol 1e-8), "
                           f"min gap {below:.1e}, {dt:.1f}s (<60s)")


THETAS_ORDER = (0.04, 0.02, 0.01, 0.005)


def expansion_slope(fam, rho) -> float:
    gen = mf.extract_h_mix(fam)
    rows = mf.sweep(fam, rho, THETAS_ORDER, gen)
    res = [abs(r.exact_fidelity - (1 - r.theta**2 * r.mu_direct)) for r in rows]
    return float(np.polyfit(np.log(THETAS_ORDER), np.log(res), 1)[0])


def criterion_4() -> CriterionResult:
    slopes = [expansion_slope(f, r) for f, r in weak_coupling_instances()]
    return CriterionResult("4", "fidelity expansion order", min(slopes) >= 2.7,
                           f"min log-log slope {min(slopes):.3f} (>= 2.7)")


def criterion_5() -> CriterionResult:
    rng = make_rng(5)
    worst = 0.0
    for _ in range(20):
        d_ir, d_uv = (int(v) for v in rng.integers(1, 5, size=2))
        h = BipartiteOperator(random_hermitian(d_ir * d_uv, rng), d_ir, d_uv)
        rho = random_density(d_uv, rng)
        gen = mf.decompose(h)
        vals = [mf.mu(gen, rho, m) for m in mf.MU_METHODS]
        worst = max(worst, abs(vals[0] - vals[1]), abs(vals[1] - vals[2]), abs(vals[0] - vals[2]))
    return CriterionResult("5", "mu method agreement", worst <= 1e-9, f"max pairwise dev {worst:.2e} (tol 1e-9)")


def criterion_6() -> CriterionResult:
    zs = []
    for seed in range(5):
        rng = make_rng(600 + seed)
        u = BipartiteOperator(haar_unitary(4, rng), 2, 2)
        rho = random_density(2, rng)
        u_ir = haar_unitary(2, rng)
        zs.append(ch.haar_average_identity_check(u, rho, u_ir, 2000, seed=seed).z_score)
    return CriterionResult("6", "Haar-average fidelity identity", max(zs) <= 3,
                           f"max |mc - closed| / se = {max(zs):.2f} (<= 3)")


def controlled_instance(seed: int = 7):
    rng = make_rng(seed)
    while True:
        u0, u1 = haar_unitary(2, rng), haar_unitary(2, rng)
        if np.linalg.norm(u0 - u1, 2) >= 0.5:
            return u0, u1


def criterion_7() -> CriterionResult:
    u0, u1 = controlled_instance()
    u = ch.controlled_unitary(u0, u1)
    f_pure = ch.channel_fidelity_unitary_target(u, np.diag([1, 0]), u0).fidelity
    f_mixed = ch.channel_fidelity_unitary_target(u, np.eye(2) / 2, u0).fidelity
    ok = abs(f_pure - 1) <= 1e-9 and f_mixed < 1 - 1e-3
    return CriterionResult("7", "controlled-unitary diagnostics", ok,
                           f"rank-1 F = {f_pure:.12f}, full-rank F = {f_mixed:.6f}")


def criterion_8() -> CriterionResult:
    worst = max(dq.factorization_residual(dq.RingWalkConfig(t, L))
                for t in (0, 0.05, 0.2, 0.4) for L in (2, 4, 8))
    return CriterionResult("8", "Dirac U^2 factorization", worst <= 1e-10, f"max residual {worst:.2e} (tol 1e-10)")


def criterion_9() -> CriterionResult:
    rng = make_rng(9)
    worst = 0.0
    for _ in range(32):
        k = rng.uniform(-np.pi, np.pi)
        theta = rng.uniform(0, np.pi / 4)
        r = random_bloch(rng)
        worst = max(worst, np.max(np.abs(dq.mean_field_block(theta, r, k)
                                          - dq.effective_walk_blocks(theta, r, k)[0])))
    return CriterionResult("9", "effective walk = V_IR exp(i theta H_IR)", worst <= 1e-10,
                           f"max dev {worst:.2e} (tol 1e-10)")


def _phase_residual(blocks: np.ndarray, omega: np.ndarray) -> float:
    ev = np.linalg.eigvals(blocks)
    target = np.stack([np.exp(1j * omega), np.exp(-1j * omega)], axis=-1)
    d = np.abs(ev[..., :, None] - target[..., None, :]).min(axis=-1)
    return float(d.max())


def criterion_10() -> CriterionResult:
    L = 16
    worst = 0.0
    for theta in (0.0, 0.1, 0.2, np.pi / 4):
        cfg = dq.RingWalkConfig(theta, L)
        k = cfg.fine_k(cfg.fine_momenta())
        worst = max(worst, _phase_residual(dq.walk_blocks(theta, k), dq.dispersion(theta, k).omega))
        kc = cfg.coarse_k(cfg.coarse_momenta())
        for r in (dq.BlochVector(1, 0, 0), dq.BlochVector(0.3, -0.6, 0.2), dq.BlochVector()):
            blocks = dq.effective_walk_blocks(theta, r, kc)
            worst = max(worst, _phase_residual(blocks, dq.dispersion(theta, kc, r).omega_ir))
    return CriterionResult("10", "dispersion relations", worst <= 1e-10, f"max eigenphase residual {worst:.2e} (tol 1e-10)")


REFERENCE_PACKET = wp.GaussianPacketSpec(sigma_k=0.02, k0=0.2, x0=-200)


def _series_check(L: int, n_max: int, budget: float) -> tuple[bool, str]:
    t0 = time.perf_counter()
    series = wp.trace_distance_series(dq.RingWalkConfig(0.2, L), REFERENCE_PACKET, None, n_max)
    dt = time.perf_counter() - t0
    fit = wp.fit_window(series, 20, n_max)
    ok = series[0][1] == 0 and fit.slope > 0 and fit.r2 >= 0.9 and dt < budget
    return ok, (f"2L={2 * L}: E_0={series[0][1]}, slope {fit.slope:.3e}, R^2 {fit.r2:.4f}, "
                f"{dt:.2f}s (<{budget:.0f}s)")


def criterion_11a() -> CriterionResult:
    ok, msg = _series_check(200, 100, 30)
    return CriterionResult("11a", "wavepacket E_n desk scale", ok, msg)


def criterion_11b() -> CriterionResult:
    ok, msg = _series_check(1000, 250, 600)
    return CriterionResult("11b", "wavepacket E_n full scale", ok, msg)


def dense_series(L: int, spec: wp.GaussianPacketSpec, theta: float, r: dq.BlochVector, n_max: int) -> list[float]:
    """E_n from explicit position-space matrices and dense partial traces."""
    cfg = dq.RingWalkConfig(theta, L)
    u = dq.walk_operator(cfg)
    u2 = u @ u
    u_ir = dq.effective_unitary_dense(cfg, r)
    psi = wp.build_packet(cfg, spec).vector()
    rho_ir = partial_trace(BipartiteOperator(np.outer(psi, psi.conj()), 4 * L, 2), "UV")
    out = []
    eff = rho_ir
    for n in range(n_max + 1):
        exact = partial_trace(BipartiteOperator(np.outer(psi, psi.conj()), 4 * L, 2), "UV")
        out.append(trace_distance(exact, eff))
        psi = u2 @ psi
        eff = u_ir @ eff @ u_ir.conj().T
    return out


def criterion_11c() -> CriterionResult:
    worst = 0.0
    spec = wp.GaussianPacketSpec(sigma_k=0.15, k0=0.3, x0=5)
    for L in (16, 32):
        r = dq.BlochVector(np.cos(0.3), -np.sin(0.3), 0)
        dense = dense_series(L, spec, 0.2, r, 20)
        low = wp.trace_distance_series(dq.RingWalkConfig(0.2, L), spec, r, 20)
        worst = max(worst, max(abs(a - b) for a, (_, b) in zip(dense, low)))
    return CriterionResult("11c", "low-rank vs dense trace distance", worst <= 1e-9,
                           f"max dev {worst:.2e} (tol 1e-9)")


def criterion_12() -> CriterionResult:
    k0 = REFERENCE_PACKET.k0
    state = wp.build_packet(dq.RingWalkConfig(0.2, 200), REFERENCE_PACKET)
    r = wp.packet_bloch_vector(state)
    phi = np.array([1, np.exp(-1j * k0)]) / np.sqrt(2)
    oracle = dq.BlochVector.from_density(np.outer(phi, phi.conj()))
    dev = max(abs(r.r_x - np.cos(k0)), abs(r.r_y + np.sin(k0)), abs(r.r_z))
    dev_oracle = abs(r.r_y - oracle.r_y)
    ok = dev <= 1e-2 and dev_oracle <= 1e-2 and abs(oracle.r_y + np.sin(k0)) <= 1e-12
    return CriterionResult("12", "packet UV Bloch vector", ok,
                           f"r = ({r.r_x:.4f}, {r.r_y:.4f}, {r.r_z:.1e}), dev {dev:.2e}, "
                           f"r_y vs oracle {dev_oracle:.2e} (tol 1e-2)")


CRITERIA: dict[str, Callable[[], CriterionResult]] = {
    "1": criterion_1,
    "2": criterion_2,
    "3": criterion_3,
    "4": criterion_4,
    "5": criterion_5,
    "6": criterion_6,
    "7": criterion_7,
    "8": criterion_8,
    "9": criterion_9,
    "10": criterion_10,
    "11a": criterion_11a,
    "11b": criterion_11b,
    "11c": criterion_11c,
    "12": criterion_12,
}


def run_all(selected=None) -> list[CriterionResult]:
    keys = list(CRITERIA) if selected is None else list(selected)
    unknown = [k for k in keys if k not in CRITERIA]
    if unknown:
        raise ValueError(f"unknown criteria {unknown}; choose from {list(CRITERIA)}")
    return [CRITERIA[k]() for k in keys]
