"""Dirac quantum walk on a ring of 4L sites and its pairwise binning.

Conventions:

* translation T|x> = |x - 1> (mod 4L);
* fine momenta p in [-2L, 2L - 1], k = pi p / (2L), with
  |p> = (4L)^(-1/2) sum_x exp(-i k x)|x>, so T|p> = exp(-i k)|p>;
* coarse momenta q in [-L, L - 1], kappa = pi q / L, on the 2L bins;
* full-space index ``c * 4L + x`` (coin major). Writing x = 2 x_ir + x_uv
  this is already IR-major for IR = (coin, bin) and UV = parity,
  with IR index ``c * 2L + x_ir``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import BipartiteOperator, exp_i_hermitian
from .meanfield import MixGenerator, WeakCouplingFamily, mu as _mu

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class RingWalkConfig:
    theta: float
    L: int

    def __post_init__(self):
        if not 0 <= self.theta <= np.pi / 4 + 1e-15:
            raise ValueError("theta must lie in [0, pi/4]")
        if int(self.L) != self.L or self.L < 2:
            raise ValueError("L must be an integer >= 2")

    @property
    def n_sites(self) -> int:
        return 4 * self.L

    @property
    def n_bins(self) -> int:
        return 2 * self.L

    def fine_momenta(self) -> np.ndarray:
        return np.arange(-2 * self.L, 2 * self.L)

    def coarse_momenta(self) -> np.ndarray:
        return np.arange(-self.L, self.L)

    def fine_k(self, p) -> np.ndarray:
        return np.pi * np.asarray(p) / (2 * self.L)

    def coarse_k(self, q) -> np.ndarray:
        return np.pi * np.asarray(q) / self.L


@dataclass(frozen=True)
class BlochVector:
    r_x: float = 0.0
    r_y: float = 0.0
    r_z: float = 0.0

    def __post_init__(self):
        if self.r_x**2 + self.r_y**2 + self.r_z**2 > 1 + 1e-12:
            raise ValueError("Bloch vector longer than 1")

    def density(self) -> np.ndarray:
        return (np.eye(2) + self.r_x * PAULI_X + self.r_y * PAULI_Y + self.r_z * PAULI_Z) / 2

    @classmethod
    def from_density(cls, rho: np.ndarray) -> "BlochVector":
        rho = np.asarray(rho)
        r = [float(np.real(np.trace(rho @ s))) for s in (PAULI_X, PAULI_Y, PAULI_Z)]
        n = np.linalg.norm(r)
        if n > 1:
            r = [c / n for c in r]
        return cls(*r)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.r_x, self.r_y, self.r_z)


@dataclass(frozen=True)
class MomentumBlock:
    p: int
    k: float
    block: np.ndarray


def _check_zone(p: int, half: int) -> None:
    if not -half <= p < half:
        raise ValueError(f"momentum index {p} outside [{-half}, {half - 1}]")


def walk_blocks(theta: float, k) -> np.ndarray:
    """U(k) = [[e^{ik} cos t, -i sin t], [-i sin t, e^{-ik} cos t]], stacked over k."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    out = np.empty(k.shape + (2, 2), dtype=complex)
    c, s = np.cos(theta), np.sin(theta)
    out[..., 0, 0] = np.exp(1j * k) * c
    out[..., 0, 1] = -1j * s
    out[..., 1, 0] = -1j * s
    out[..., 1, 1] = np.exp(-1j * k) * c
    return out


def walk_block(cfg: RingWalkConfig, p: int) -> MomentumBlock:
    _check_zone(p, 2 * cfg.L)
    k = float(cfg.fine_k(p))
    return MomentumBlock(p, k, walk_blocks(cfg.theta, k)[0])


def coarse_grain_index(x: int, L: int) -> tuple[int, int]:
    """Site x -> (bin, parity) with x = 2 * bin + parity."""
    if not 0 <= x < 4 * L:
        raise ValueError(f"site {x} outside [0, {4 * L - 1}]")
    return x // 2, x % 2


def fold_momentum(p: int, L: int) -> tuple[int, int]:
    """Fine momentum p -> (coarse q, branch).

    The bin momentum |p>_IR is periodic in p with period 2L, so p and p +- 2L
    land on the same q in [-L, L - 1]. ``branch`` is 0 when p already lies in
    the coarse zone and 1 for the aliased partner.
    """
    _check_zone(p, 2 * L)
    q = (p + L) % (2 * L) - L
    return q, int(q != p)


def translation(n: int) -> np.ndarray:
    """T|x> = |x - 1| on a ring of n sites."""
    t = np.zeros((n, n), dtype=complex)
    x = np.arange(n)
    t[(x - 1) % n, x] = 1
    return t


def walk_operator(cfg: RingWalkConfig) -> np.ndarray:
    """Dense one-step walk on the 8L-dimensional space, coin-major."""
    t = translation(cfg.n_sites)
    c, s = np.cos(cfg.theta), np.sin(cfg.theta)
    eye = np.eye(cfg.n_sites)
    return np.block([[c * t.conj().T, -1j * s * eye], [-1j * s * eye, c * t]])


def v_ir(L: int) -> np.ndarray:
    """diag(T_IR^dag, T_IR) on coin (x) bins."""
    t = translation(2 * L)
    z = np.zeros_like(t)
    return np.block([[t.conj().T, z], [z, t]])


def u_mix_dense(theta: float, L: int) -> np.ndarray:
    """U_MIX = [[A, -iB], [-iB^dag, A^dag]] with A = cos^2 - sin^2 T^2, B = sin cos (T + T^dag) T^2."""
    t = translation(4 * L)
    t2 = t @ t
    c, s = np.cos(theta), np.sin(theta)
    a = c**2 * np.eye(4 * L) - s**2 * t2
    b = s * c * (t + t.conj().T) @ t2
    return np.block([[a, -1j * b], [-1j * b.conj().T, a.conj().T]])


def u_squared_factorization(cfg: RingWalkConfig) -> WeakCouplingFamily:
    """Split U^2 = (V_IR (x) 1) U_MIX(theta) over the binned factorization."""
    L = cfg.L

    def u_mix(theta: float) -> BipartiteOperator:
        return BipartiteOperator(u_mix_dense(theta, L), 4 * L, 2)

    return WeakCouplingFamily(v_ir(L), np.eye(2, dtype=complex), u_mix)


def factorization_residual(cfg: RingWalkConfig) -> float:
    u = walk_operator(cfg)
    fam = u_squared_factorization(cfg)
    return float(np.max(np.abs(u @ u - fam.unitary(cfg.theta).matrix)))


def _flip(phase) -> np.ndarray:
    """[[0, e^{-i phase}], [e^{i phase}, 0]], stacked."""
    phase = np.atleast_1d(np.asarray(phase, dtype=float))
    out = np.zeros(phase.shape + (2, 2), dtype=complex)
    out[..., 0, 1] = np.exp(-1j * phase)
    out[..., 1, 0] = np.exp(1j * phase)
    return out


def h_mix_fine_blocks(cfg: RingWalkConfig) -> np.ndarray:
    """Coin blocks of H_MIX per fine momentum: -2 cos(k) flip(2k)."""
    k = cfg.fine_k(cfg.fine_momenta())
    return -2 * np.cos(k)[:, None, None] * _flip(2 * k)


def fine_momentum_vectors(L: int) -> np.ndarray:
    """Rows are the position-space vectors |p>, p in [-2L, 2L - 1]."""
    p = np.arange(-2 * L, 2 * L)
    x = np.arange(4 * L)
    return np.exp(-1j * np.pi * np.outer(p, x) / (2 * L)) / np.sqrt(4 * L)


def coarse_momentum_vectors(L: int) -> np.ndarray:
    """Rows are the bin-space vectors |q>_IR, q in [-L, L - 1]."""
    q = np.arange(-L, L)
    x = np.arange(2 * L)
    return np.exp(-1j * np.pi * np.outer(q, x) / L) / np.sqrt(2 * L)


def _momentum_diagonal(blocks: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """sum_p blocks[p] (x) |p><p| in coin-major position space."""
    proj = np.einsum("px,py->pxy", vecs, vecs.conj())
    n = vecs.shape[1]
    return np.einsum("pcd,pxy->cxdy", blocks, proj).reshape(2 * n, 2 * n)


def h_mix_dense(cfg: RingWalkConfig) -> np.ndarray:
    """Closed-form H_MIX assembled from its fine-momentum blocks."""
    return _momentum_diagonal(h_mix_fine_blocks(cfg), fine_momentum_vectors(cfg.L))


def box_uv_factor(k) -> np.ndarray:
    """UV factor of the binned H_MIX at coarse q, with k = pi q / (2L).

    Folding the pair p, p + 2L onto q gives |u_p><u_p| - |u_{p+2L}><u_{p+2L}|
    for u_p = (|0> + e^{-ik}|1>)/sqrt 2, i.e. [[0, e^{ik}], [e^{-ik}, 0]].
    """
    return _flip(-np.asarray(k))


def h_mix_dirac(cfg: RingWalkConfig) -> MixGenerator:
    """Closed-form generator with its box decomposition over the coarse momenta.

    The decomposition pairs UV operators -2 cos(k_q) [[0, e^{ik_q}], [e^{-ik_q}, 0]]
    with IR operators flip(kappa_q) (x) |q><q|_IR (one per coarse momentum), a
    valid but not orthonormal expansion, so only the ``direct`` and
    ``correlator`` forms of mu apply to it.
    """
    L = cfg.L
    q = cfg.coarse_momenta()
    k = np.pi * q / (2 * L)
    h_uv = -2 * np.cos(k)[:, None, None] * box_uv_factor(k)
    vecs = coarse_momentum_vectors(L)
    proj = np.einsum("qx,qy->qxy", vecs, vecs.conj())
    ir = np.einsum("qcd,qxy->qcxdy", _flip(cfg.coarse_k(q)), proj).reshape(len(q), 4 * L, 4 * L)
    h = BipartiteOperator(h_mix_dense(cfg), 4 * L, 2)
    return MixGenerator(h, h_uv, ir)


def gamma(r: BlochVector, k) -> np.ndarray | float:
    """Momentum-dependent mass factor r_x (1 + cos k) - r_y sin k."""
    k = np.asarray(k, dtype=float)
    g = r.r_x * (1 + np.cos(k)) - r.r_y * np.sin(k)
    return float(g) if g.ndim == 0 else g


def mean_field_kernel(r: BlochVector, kappa) -> np.ndarray:
    """Per-coarse-momentum H_IR block: -gamma(kappa) [[0, e^{-i kappa}], [e^{i kappa}, 0]]."""
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    return -np.asarray(gamma(r, kappa))[..., None, None] * _flip(kappa)


def effective_walk_blocks(theta: float, r: BlochVector, kappa) -> np.ndarray:
    """U_IR(kappa): the walk block with theta replaced by gamma(kappa) theta."""
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    m = np.asarray(gamma(r, kappa)) * theta
    out = np.empty(kappa.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(1j * kappa) * np.cos(m)
    out[..., 0, 1] = -1j * np.sin(m)
    out[..., 1, 0] = -1j * np.sin(m)
    out[..., 1, 1] = np.exp(-1j * kappa) * np.cos(m)
    return out


def effective_walk_block(cfg: RingWalkConfig, r: BlochVector, p: int) -> MomentumBlock:
    _check_zone(p, cfg.L)
    k = float(cfg.coarse_k(p))
    return MomentumBlock(p, k, effective_walk_blocks(cfg.theta, r, k)[0])


def mean_field_block(theta: float, r: BlochVector, kappa: float) -> np.ndarray:
    """V_IR(kappa) exp(i theta H_IR(kappa)), exponentiated numerically."""
    v = np.diag([np.exp(1j * kappa), np.exp(-1j * kappa)])
    return v @ exp_i_hermitian(mean_field_kernel(r, kappa)[0], theta)


def effective_unitary_dense(cfg: RingWalkConfig, r: BlochVector) -> np.ndarray:
    """U_IR on coin (x) bins, assembled from the coarse-momentum blocks."""
    blocks = effective_walk_blocks(cfg.theta, r, cfg.coarse_k(cfg.coarse_momenta()))
    return _momentum_diagonal(blocks, coarse_momentum_vectors(cfg.L))


@dataclass(frozen=True)
class Dispersion:
    k: np.ndarray
    omega: np.ndarray
    omega_ir: np.ndarray | None = None


def dispersion(theta: float, k, r: BlochVector | None = None) -> Dispersion:
    """omega = arccos(cos k cos theta) and, given r, omega_IR with theta -> gamma(k) theta."""
    k = np.asarray(k, dtype=float)
    omega = np.arccos(np.clip(np.cos(k) * np.cos(theta), -1, 1))
    omega_ir = None
    if r is not None:
        omega_ir = np.arccos(np.clip(np.cos(k) * np.cos(gamma(r, k) * theta), -1, 1))
    return Dispersion(k, omega, omega_ir)


def eigenphases(blocks: np.ndarray) -> np.ndarray:
    """Eigenphases of stacked 2x2 unitaries, sorted ascending."""
    return np.sort(np.angle(np.linalg.eigvals(blocks)), axis=-1)


def mu_dirac_closed(r: BlochVector) -> float:
    return 0.5 * (4 - 3 * r.r_x**2 - r.r_y**2)


def mu_dirac(r: BlochVector, method: str = "closed_form", L: int = 4) -> float:
    """Dissipation error of the binned Dirac walk.

    ``generic`` builds H_MIX on the 4L-site ring (d_IR = 4L including the
    coin) and evaluates the partial-trace form of mu on it.
    """
    if method == "closed_form":
        return mu_dirac_closed(r)
    if method != "generic":
        raise ValueError(f"unknown method {method!r}")
    cfg = RingWalkConfig(0.0, L)
    return _mu(h_mix_dirac(cfg), r.density(), "direct")


def box_sums(L: int, r: BlochVector) -> tuple[float, float]:
    """(2/L) sum_q cos^2(pi q / 2L) and (1/2L) sum_q gamma(pi q / L)^2 over the coarse zone."""
    q = np.arange(-L, L)
    s1 = 2 / L * np.sum(np.cos(np.pi * q / (2 * L)) ** 2)
    s2 = np.sum(np.asarray(gamma(r, np.pi * q / L)) ** 2) / (2 * L)
    return float(s1), float(s2)
