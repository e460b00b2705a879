"""Dense complex linear algebra on bipartite IR (x) UV spaces.

All bipartite operators use IR-major ordering: the row/column index of a
basis vector |i_ir>|i_uv> is ``i_ir * d_uv + i_uv``, so that
``np.kron(a_ir, b_uv)`` is the product operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

ATOL_EXACT = 1e-12
ATOL_EIGEN = 1e-10


class Side(str, Enum):
    IR = "IR"
    UV = "UV"


@dataclass(frozen=True)
class BipartiteOperator:
    """Square matrix acting on H_IR (x) H_UV, IR-major."""

    matrix: np.ndarray
    d_ir: int
    d_uv: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.d_ir * self.d_uv
        if m.shape != (n, n):
            raise ValueError(
                f"matrix shape {m.shape} does not match d_ir*d_uv = {n}"
            )
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.d_ir * self.d_uv

    def tensor(self) -> np.ndarray:
        """View as a rank-4 tensor indexed [ir, uv, ir', uv']."""
        return self.matrix.reshape(self.d_ir, self.d_uv, self.d_ir, self.d_uv)

    def dag(self) -> "BipartiteOperator":
        return BipartiteOperator(self.matrix.conj().T, self.d_ir, self.d_uv)

    def __matmul__(self, other: "BipartiteOperator") -> "BipartiteOperator":
        if (self.d_ir, self.d_uv) != (other.d_ir, other.d_uv):
            raise ValueError("factor dimensions differ")
        return BipartiteOperator(self.matrix @ other.matrix, self.d_ir, self.d_uv)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tensor product with the first argument as the major (IR) factor."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def partial_trace(op: BipartiteOperator, side: Side | str) -> np.ndarray:
    """Trace out the named factor and return the operator on the other one."""
    side = Side(side)
    t = op.tensor()
    if side is Side.UV:
        return np.einsum("iaja->ij", t)
    return np.einsum("aiaj->ij", t)


def is_hermitian(a: np.ndarray, atol: float = ATOL_EXACT) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.max(
        np.abs(a - a.conj().T), initial=0.0
    ) <= atol


def is_unitary(a: np.ndarray, atol: float = ATOL_EIGEN) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    return unitarity_residual(a) <= atol


def unitarity_residual(a: np.ndarray) -> float:
    """Max-entry deviation of a^dag a from the identity."""
    a = np.asarray(a)
    return float(np.max(np.abs(a.conj().T @ a - np.eye(a.shape[0]))))


def validate_density(rho: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Return ``rho`` as a complex array, raising if it is not a density matrix."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if dim is not None and rho.shape[0] != dim:
        raise ValueError(f"density matrix has dimension {rho.shape[0]}, expected {dim}")
    if not is_hermitian(rho, ATOL_EXACT):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > ATOL_EXACT:
        raise ValueError(f"density matrix trace {np.trace(rho).real} != 1")
    if np.linalg.eigvalsh(rho).min() < -ATOL_EIGEN:
        raise ValueError("density matrix has a negative eigenvalue")
    return rho


def hermitian_basis(d: int) -> np.ndarray:
    """Generalized Gell-Mann basis normalized to Tr[B_a B_b] = d delta_ab.

    Returns an array of shape ``(d*d, d, d)``. Element 0 is the identity,
    followed by the symmetric, antisymmetric and diagonal generators. For
    d = 2 this is exactly (I, sigma_x, sigma_y, sigma_z).
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    out = [np.eye(d, dtype=complex)]
    scale = np.sqrt(d / 2)
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[j, k] = s[k, j] = 1
            out.append(scale * s)
    for j in range(d):
        for k in range(j + 1, d):
            a = np.zeros((d, d), dtype=complex)
            a[j, k] = -1j
            a[k, j] = 1j
            out.append(scale * a)
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1
        diag[l] = -l
        diag *= np.sqrt(2 / (l * (l + 1)))
        out.append(scale * np.diag(diag).astype(complex))
    return np.array(out)


def exp_i_hermitian(h: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """exp(i * scale * h) for Hermitian ``h`` via eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h, ATOL_EIGEN):
        raise ValueError("exp_i_hermitian requires a Hermitian matrix")
    h = (h + h.conj().T) / 2
    w, v = np.linalg.eigh(h)
    return (v * np.exp(1j * scale * w)) @ v.conj().T


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Half the trace norm of ``rho - sigma``."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    diff = rho - sigma
    diff = (diff + diff.conj().T) / 2
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def make_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """PCG64 generator from an integer seed (or pass a Generator through)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def haar_unitary(d: int, seed: int | np.random.Generator | None = None) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = make_rng(seed)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * ph


def haar_state(d: int, seed: int | np.random.Generator | None = None) -> np.ndarray:
    """Haar-random unit vector, returned as a ``(d, 1)`` column."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = make_rng(seed)
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return (z / np.linalg.norm(z)).reshape(d, 1)


def haar_random(kind: str, d: int, seed: int | np.random.Generator | None = None) -> np.ndarray:
    if kind == "unitary":
        return haar_unitary(d, seed)
    if kind == "pure_state":
        return haar_state(d, seed)
    raise ValueError(f"unknown kind {kind!r}")


def random_hermitian(d: int, seed: int | np.random.Generator | None = None) -> np.ndarray:
    rng = make_rng(seed)
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (z + z.conj().T) / 2


def random_density(d: int, seed: int | np.random.Generator | None = None, rank: int | None = None) -> np.ndarray:
    rng = make_rng(seed)
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def normalized_trace(a: np.ndarray) -> complex:
    """Tr[a] / dim, the uniform IR average."""
    a = np.asarray(a)
    return np.trace(a) / a.shape[0]
