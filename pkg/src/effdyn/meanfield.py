"""Weak-coupling effective dynamics.

A family U(theta) = (V_IR (x) V_UV) U_MIX(theta) with U_MIX(0) = 1 is
approximated on the IR factor by U_IR = V_IR exp(i theta H_IR), where H_IR is
the average of the mixing generator over the UV state. The leftover fidelity
deficit at order theta^2 is theta^2 * mu.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel import fidelity_value
from .linalg import (
    ATOL_EIGEN,
    BipartiteOperator,
    exp_i_hermitian,
    hermitian_basis,
    is_hermitian,
    is_unitary,
    kron,
    make_rng,
    haar_unitary,
    normalized_trace,
    random_hermitian,
    validate_density,
)

MU_METHODS = ("direct", "correlator", "variance")


@dataclass(frozen=True)
class WeakCouplingFamily:
    v_ir: np.ndarray
    v_uv: np.ndarray
    u_mix: Callable[[float], BipartiteOperator]

    @property
    def d_ir(self) -> int:
        return self.v_ir.shape[0]

    @property
    def d_uv(self) -> int:
        return self.v_uv.shape[0]

    def unitary(self, theta: float) -> BipartiteOperator:
        """The full step (V_IR (x) V_UV) U_MIX(theta)."""
        v = BipartiteOperator(kron(self.v_ir, self.v_uv), self.d_ir, self.d_uv)
        return v @ self.u_mix(theta)


@dataclass(frozen=True)
class MixGenerator:
    """H_MIX together with its expansion sum_l H_UV[l] (x) B[l] over a Hermitian IR basis."""

    h_mix: BipartiteOperator
    h_uv: np.ndarray | None = None
    basis: np.ndarray | None = None
    richardson_residual: float | None = field(default=None, compare=False)

    @property
    def d_ir(self) -> int:
        return self.h_mix.d_ir

    @property
    def d_uv(self) -> int:
        return self.h_mix.d_uv

    def reconstruct(self) -> np.ndarray:
        if self.h_uv is None:
            raise ValueError("generator has no decomposition")
        return np.einsum("lij,lab->iajb", self.basis, self.h_uv).reshape(
            self.h_mix.dim, self.h_mix.dim
        )


def decompose(h_mix: BipartiteOperator) -> MixGenerator:
    """Attach the coefficients H_UV[l] = Tr_IR[(B_l (x) 1) H_MIX] / d_ir."""
    if not is_hermitian(h_mix.matrix, ATOL_EIGEN):
        raise ValueError("H_MIX is not Hermitian")
    basis = hermitian_basis(h_mix.d_ir)
    h_uv = np.einsum("lji,iajb->lab", basis, h_mix.tensor()) / h_mix.d_ir
    return MixGenerator(h_mix, h_uv, basis)


def _central_difference(family: WeakCouplingFamily, step: float) -> np.ndarray:
    plus = family.u_mix(step).matrix
    minus = family.u_mix(-step).matrix
    for m in (plus, minus):
        if not is_unitary(m, ATOL_EIGEN):
            raise ValueError("u_mix is not unitary at the sampled theta")
    h = -1j * (plus - minus) / (2 * step)
    return (h + h.conj().T) / 2


def extract_h_mix(family: WeakCouplingFamily, step: float = 1e-4) -> MixGenerator:
    """H_MIX = -i dU_MIX/dtheta at 0 from a symmetric central difference.

    The returned generator records the change produced by halving the step
    as ``richardson_residual``; it should scale as step**2.
    """
    if not 0 < step <= 0.1:
        raise ValueError("step must lie in (0, 0.1]")
    h = _central_difference(family, step)
    h_half = _central_difference(family, step / 2)
    gen = decompose(BipartiteOperator(h, family.d_ir, family.d_uv))
    return MixGenerator(gen.h_mix, gen.h_uv, gen.basis, float(np.max(np.abs(h - h_half))))


def _as_generator(gen: MixGenerator | BipartiteOperator) -> MixGenerator:
    if isinstance(gen, BipartiteOperator):
        return decompose(gen)
    return gen


def mean_field_h_ir(gen: MixGenerator | BipartiteOperator, rho_uv: np.ndarray) -> np.ndarray:
    """H_IR = Tr_UV[(1_IR (x) rho_UV) H_MIX]."""
    h = gen.h_mix if isinstance(gen, MixGenerator) else gen
    rho_uv = validate_density(rho_uv, h.d_uv)
    out = np.einsum("iajb,ba->ij", h.tensor(), rho_uv)
    return (out + out.conj().T) / 2


def effective_unitary(family: WeakCouplingFamily, rho_uv: np.ndarray, theta: float,
                      gen: MixGenerator | None = None) -> np.ndarray:
    """V_IR exp(i theta H_IR) with the mean-field H_IR."""
    if abs(theta) > 0.5:
        raise ValueError("|theta| must be <= 0.5")
    gen = extract_h_mix(family) if gen is None else gen
    return family.v_ir @ exp_i_hermitian(mean_field_h_ir(gen, rho_uv), theta)


def _mu_direct(h: BipartiteOperator, rho: np.ndarray) -> float:
    d = h.d_ir
    t = h.tensor()
    h2 = BipartiteOperator(h.matrix @ h.matrix, h.d_ir, h.d_uv).tensor()
    tr_ir_h2 = np.einsum("iaib->ab", h2) / d
    tr_ir_h = np.einsum("iaib->ab", t) / d
    h_ir = np.einsum("iajb,ba->ij", t, rho)
    term1 = np.trace(rho @ tr_ir_h2)
    term2 = np.trace(rho @ tr_ir_h @ tr_ir_h)
    term3 = np.trace(h_ir @ h_ir) / d
    term4 = np.trace(rho @ tr_ir_h) ** 2
    return float(np.real(term1 - term2 - term3 + term4))


def _mu_correlator(gen: MixGenerator, rho: np.ndarray) -> float:
    b = gen.basis
    a = gen.h_uv
    d = gen.d_ir
    b_mean = np.einsum("lii->l", b) / d
    ir = np.einsum("lij,mji->lm", b, b) / d - np.outer(b_mean, b_mean)
    a_mean = np.einsum("lij,ji->l", a, rho)
    uv = np.einsum("lij,mjk,ki->lm", a, a, rho) - np.outer(a_mean, a_mean)
    return float(np.real(np.sum(ir * uv)))


def _mu_variance(gen: MixGenerator, rho: np.ndarray) -> float:
    b = gen.basis
    d = gen.d_ir
    gram = np.einsum("lij,mji->lm", b, b)
    if (len(b) != d * d or np.max(np.abs(b[0] - np.eye(d))) > ATOL_EIGEN
            or np.max(np.abs(gram - d * np.eye(len(b)))) > ATOL_EIGEN):
        raise ValueError("variance form needs the normalized basis with B_0 = identity")
    a = gen.h_uv[1:]
    mean = np.einsum("lij,ji->l", a, rho)
    sq = np.einsum("lij,ljk,ki->l", a, a, rho)
    return float(np.real(np.sum(sq - mean**2)))


def mu(gen: MixGenerator | BipartiteOperator, rho_uv: np.ndarray, method: str = "direct") -> float:
    """Dissipation error mu: the theta^2 fidelity deficit of the mean-field unitary.

    ``direct`` evaluates partial traces of H_MIX and H_MIX^2, ``correlator``
    contracts connected IR and UV correlators of an arbitrary decomposition,
    ``variance`` sums UV variances in the normalized basis with B_0 = 1.
    """
    gen = _as_generator(gen)
    rho_uv = validate_density(rho_uv, gen.d_uv)
    if method == "direct":
        return _mu_direct(gen.h_mix, rho_uv)
    if method not in MU_METHODS:
        raise ValueError(f"unknown method {method!r}")
    if gen.h_uv is None or gen.basis is None:
        raise ValueError(f"method {method!r} needs a decomposed generator")
    if method == "correlator":
        return _mu_correlator(gen, rho_uv)
    return _mu_variance(gen, rho_uv)


def connected_ir_variance(delta: np.ndarray) -> float:
    """<delta^2>_IR - <delta>_IR^2 with <.>_IR = Tr[.]/d."""
    return float(np.real(normalized_trace(delta @ delta) - normalized_trace(delta) ** 2))


def predicted_fidelity(gen: MixGenerator | BipartiteOperator, rho_uv: np.ndarray, theta: float,
                       candidate_h_ir: np.ndarray | None = None) -> float:
    """Second-order fidelity 1 - theta^2 (Var_IR(delta) + mu) for U_IR = V_IR exp(i theta H)."""
    gen = _as_generator(gen)
    h_mf = mean_field_h_ir(gen, rho_uv)
    penalty = 0.0
    if candidate_h_ir is not None:
        candidate_h_ir = np.asarray(candidate_h_ir, dtype=complex)
        if not is_hermitian(candidate_h_ir, ATOL_EIGEN):
            raise ValueError("candidate H_IR is not Hermitian")
        penalty = connected_ir_variance(candidate_h_ir - h_mf)
    return 1.0 - theta**2 * (penalty + mu(gen, rho_uv, "direct"))


def exact_fidelity(family: WeakCouplingFamily, rho_uv: np.ndarray, theta: float, u_ir: np.ndarray) -> float:
    return fidelity_value(family.unitary(theta), np.asarray(rho_uv, dtype=complex), u_ir)


@dataclass(frozen=True)
class SweepRow:
    theta: float
    mu_direct: float
    mu_correlator: float
    mu_variance: float
    predicted_fidelity: float
    exact_fidelity: float

    @property
    def residual(self) -> float:
        return abs(self.exact_fidelity - self.predicted_fidelity)

    def to_json(self) -> dict:
        return {
            "theta": self.theta,
            "mu_direct": self.mu_direct,
            "mu_correlator": self.mu_correlator,
            "mu_variance": self.mu_variance,
            "predicted_fidelity": self.predicted_fidelity,
            "exact_fidelity": self.exact_fidelity,
            "residual": self.residual,
        }


def sweep(family: WeakCouplingFamily, rho_uv: np.ndarray, thetas, gen: MixGenerator | None = None) -> list[SweepRow]:
    """Predicted against exact fidelity of the mean-field unitary over theta."""
    gen = extract_h_mix(family) if gen is None else gen
    mus = [mu(gen, rho_uv, m) for m in MU_METHODS]
    rows = []
    for theta in thetas:
        u_ir = effective_unitary(family, rho_uv, theta, gen)
        rows.append(SweepRow(
            float(theta), *mus,
            predicted_fidelity=predicted_fidelity(gen, rho_uv, theta),
            exact_fidelity=exact_fidelity(family, rho_uv, theta, u_ir),
        ))
    return rows


def random_family(d_ir: int, d_uv: int, seed: int | np.random.Generator | None = None) -> WeakCouplingFamily:
    """Seeded family U_MIX(theta) = exp(i theta (H1 + theta H2)) with random factors.

    The theta-dependent generator gives U_MIX a nontrivial second-order
    term beyond -H1^2 / 2.
    """
    rng = make_rng(seed)
    v_ir = haar_unitary(d_ir, rng)
    v_uv = haar_unitary(d_uv, rng)
    n = d_ir * d_uv
    h1 = random_hermitian(n, rng)
    h2 = random_hermitian(n, rng)
    h1 /= np.linalg.norm(h1, 2)
    h2 /= np.linalg.norm(h2, 2)

    def u_mix(theta: float) -> BipartiteOperator:
        return BipartiteOperator(exp_i_hermitian(h1 + theta * h2, theta), d_ir, d_uv)

    return WeakCouplingFamily(v_ir, v_uv, u_mix)
