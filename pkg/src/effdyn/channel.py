"""Channels obtained by tracing out the UV factor, and their fidelity to unitaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    ATOL_EIGEN,
    ATOL_EXACT,
    BipartiteOperator,
    is_unitary,
    make_rng,
    unitarity_residual,
    validate_density,
)

UNIT_FIDELITY_TOL = 1e-9
FACTORIZATION_TOL = 1e-8


@dataclass(frozen=True)
class ChoiOperator:
    """Choi matrix on H_out (x) H_ref, output factor major."""

    matrix: np.ndarray
    d_ir: int
    source: str = ""

    def output_trace(self) -> np.ndarray:
        """Trace over the output factor; the identity for a trace-preserving map."""
        t = self.matrix.reshape(self.d_ir, self.d_ir, self.d_ir, self.d_ir)
        return np.einsum("iaib->ab", t)


@dataclass(frozen=True)
class FidelityReport:
    fidelity: float
    o_uv: np.ndarray
    d_ir: int
    d_uv: int
    is_unit_fidelity: bool
    o_uv_unitarity_residual: float
    seed: int | None = None

    def to_json(self) -> dict:
        return {
            "fidelity": self.fidelity,
            "d_ir": self.d_ir,
            "d_uv": self.d_uv,
            "unit_fidelity": self.is_unit_fidelity,
            "o_uv_unitarity_residual": self.o_uv_unitarity_residual,
            "seed": self.seed,
        }


def _check_inputs(u: BipartiteOperator, rho_uv=None, u_ir=None):
    if not is_unitary(u.matrix, ATOL_EIGEN):
        raise ValueError("u is not unitary")
    if rho_uv is not None:
        rho_uv = validate_density(rho_uv, u.d_uv)
    if u_ir is not None:
        u_ir = np.asarray(u_ir, dtype=complex)
        if u_ir.shape != (u.d_ir, u.d_ir):
            raise ValueError(f"u_ir has shape {u_ir.shape}, expected ({u.d_ir}, {u.d_ir})")
        if not is_unitary(u_ir, ATOL_EIGEN):
            raise ValueError("u_ir is not unitary")
    return rho_uv, u_ir


def apply_induced_channel(u: BipartiteOperator, rho_uv: np.ndarray, rho_ir: np.ndarray) -> np.ndarray:
    """Tr_UV[U (rho_ir (x) rho_uv) U^dag]."""
    t = u.tensor()
    return np.einsum("iajb,jl,bc,kalc->ik", t, rho_ir, rho_uv, t.conj())


def induced_channel_choi(u: BipartiteOperator, rho_uv: np.ndarray) -> ChoiOperator:
    """Choi matrix of rho_ir -> Tr_UV[U (rho_ir (x) rho_uv) U^dag].

    Built as (D (x) id)(|1>><<1|) = sum_jl D(|j><l|) (x) |j><l|.
    """
    rho_uv, _ = _check_inputs(u, rho_uv)
    d = u.d_ir
    t = u.tensor()
    c = np.einsum("iajb,bc,kalc->ijkl", t, rho_uv, t.conj())
    return ChoiOperator(c.reshape(d * d, d * d), d, "induced")


def unitary_choi(u_ir: np.ndarray) -> ChoiOperator:
    """|U>><<U| with |U>> = sum_ij U_ij |i>|j>."""
    u_ir = np.asarray(u_ir, dtype=complex)
    v = u_ir.reshape(-1)
    return ChoiOperator(np.outer(v, v.conj()), u_ir.shape[0], "unitary")


def o_uv(u: BipartiteOperator, u_ir: np.ndarray) -> np.ndarray:
    """O_UV = Tr_IR[(U_IR^dag (x) 1_UV) U]."""
    u_ir = np.asarray(u_ir, dtype=complex)
    if u_ir.shape != (u.d_ir, u.d_ir):
        raise ValueError(f"u_ir has shape {u_ir.shape}, expected ({u.d_ir}, {u.d_ir})")
    return np.einsum("ji,jaib->ab", u_ir.conj(), u.tensor())


def _fidelity_from_o(o: np.ndarray, rho_uv: np.ndarray, d_ir: int) -> float:
    return float(np.real(np.trace(o @ rho_uv @ o.conj().T))) / d_ir**2


def fidelity_value(u: BipartiteOperator, rho_uv: np.ndarray, u_ir: np.ndarray) -> float:
    """Unchecked fidelity; the hot path used by the optimizer."""
    return _fidelity_from_o(o_uv(u, u_ir), rho_uv, u.d_ir)


def channel_fidelity_unitary_target(
    u: BipartiteOperator, rho_uv: np.ndarray, u_ir: np.ndarray, seed: int | None = None
) -> FidelityReport:
    """Channel fidelity between the induced IR channel and U_IR . U_IR^dag.

    With a unitary target the Choi state of the target is pure, so the
    state fidelity is an overlap and equals Tr[O rho O^dag] / d_ir^2.
    """
    rho_uv, u_ir = _check_inputs(u, rho_uv, u_ir)
    o = o_uv(u, u_ir)
    f = _fidelity_from_o(o, rho_uv, u.d_ir)
    return FidelityReport(
        fidelity=f,
        o_uv=o,
        d_ir=u.d_ir,
        d_uv=u.d_uv,
        is_unit_fidelity=abs(1 - f) <= UNIT_FIDELITY_TOL,
        o_uv_unitarity_residual=unitarity_residual(o / u.d_ir),
        seed=seed,
    )


def choi_overlap_fidelity(u: BipartiteOperator, rho_uv: np.ndarray, u_ir: np.ndarray) -> float:
    """<<U_IR| D |U_IR>> / d_ir^2 computed from the explicit Choi matrix."""
    choi = induced_channel_choi(u, rho_uv).matrix
    v = np.asarray(u_ir, dtype=complex).reshape(-1)
    return float(np.real(v.conj() @ choi @ v)) / u.d_ir**2


@dataclass(frozen=True)
class HaarCheck:
    mc_estimate: float
    closed_form: float
    std_error: float
    n_samples: int
    seed: int | None

    @property
    def z_score(self) -> float:
        diff = abs(self.mc_estimate - self.closed_form)
        if diff <= ATOL_EXACT:
            # zero-variance cases (every sample exact) leave only rounding noise
            return 0.0
        return diff / self.std_error if self.std_error > 0 else np.inf


def haar_average_identity_check(
    u: BipartiteOperator,
    rho_uv: np.ndarray,
    u_ir: np.ndarray,
    n_samples: int,
    seed: int | None = None,
) -> HaarCheck:
    """Monte Carlo estimate of (d+1) E_psi <psi|U_IR^dag D(psi) U_IR|psi> - 1.

    For a unitary target this equals d_ir times the channel fidelity.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    rho_uv, u_ir = _check_inputs(u, rho_uv, u_ir)
    d = u.d_ir
    rng = make_rng(seed)
    z = rng.standard_normal((n_samples, d)) + 1j * rng.standard_normal((n_samples, d))
    psi = z / np.linalg.norm(z, axis=1, keepdims=True)
    t = u.tensor()
    # out[s, i, k] = D(|psi_s><psi_s|)[i, k]
    out = np.einsum("iajb,sj,sl,bc,kalc->sik", t, psi, psi.conj(), rho_uv, t.conj())
    phi = psi @ u_ir.T  # rows are U_IR |psi_s>
    overlap = np.real(np.einsum("si,sik,sk->s", phi.conj(), out, phi))
    samples = (d + 1) * overlap - 1
    closed = d * _fidelity_from_o(o_uv(u, u_ir), rho_uv, d)
    return HaarCheck(
        mc_estimate=float(samples.mean()),
        closed_form=float(closed),
        std_error=float(samples.std(ddof=1) / np.sqrt(n_samples)),
        n_samples=n_samples,
        seed=seed,
    )


@dataclass(frozen=True)
class FactorizationDiagnostic:
    fidelity: float
    o_uv_unitarity_residual: float
    rho_full_rank: bool
    unit_fidelity: bool

    @property
    def consistent(self) -> bool:
        """Unit fidelity with a full-rank UV state forces O_UV / d_ir to be unitary."""
        if self.unit_fidelity and self.rho_full_rank:
            return self.o_uv_unitarity_residual <= FACTORIZATION_TOL
        return True


def factorization_diagnostic(u: BipartiteOperator, rho_uv: np.ndarray, u_ir: np.ndarray) -> FactorizationDiagnostic:
    rep = channel_fidelity_unitary_target(u, rho_uv, u_ir)
    evals = np.linalg.eigvalsh(np.asarray(rho_uv, dtype=complex))
    return FactorizationDiagnostic(
        fidelity=rep.fidelity,
        o_uv_unitarity_residual=rep.o_uv_unitarity_residual,
        rho_full_rank=bool(evals.min() > ATOL_EIGEN),
        unit_fidelity=rep.is_unit_fidelity,
    )


def controlled_unitary(u0: np.ndarray, u1: np.ndarray) -> BipartiteOperator:
    """U0 (x) |0><0| + U1 (x) |1><1| with a qubit UV control."""
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    u0 = np.asarray(u0, dtype=complex)
    return BipartiteOperator(np.kron(u0, p0) + np.kron(u1, p1), u0.shape[0], 2)
