"""Gaussian wavepackets on the Dirac ring: exact binned dynamics vs the effective walk.

States are stored in position space as ``(coin, site)`` arrays. Momentum
amplitudes are obtained with orthonormal FFTs: the amplitude on the fine
momentum p sits at index ``p mod 4L`` (and coarse q at ``q mod 2L``).
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .diracqw import BlochVector, RingWalkConfig, effective_walk_blocks, walk_blocks

log = logging.getLogger(__name__)

BANDS = ("plus", "minus")


@dataclass(frozen=True)
class GaussianPacketSpec:
    sigma_k: float
    k0: float
    x0: int
    band: str = "plus"

    def __post_init__(self):
        if self.sigma_k <= 0:
            raise ValueError("sigma_k must be positive")
        if self.band not in BANDS:
            raise ValueError(f"band must be one of {BANDS}")

    @property
    def broad(self) -> bool:
        """True outside the sigma_k << 1 regime where UV and IR nearly factorize."""
        return self.sigma_k > 0.1


@dataclass
class RingState:
    """Walker amplitudes, shape (2, 4L), indexed [coin, site]."""

    amplitudes: np.ndarray

    @property
    def n_sites(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def amplitude(self, x: int, c: int) -> complex:
        return complex(self.amplitudes[c, x])

    def vector(self) -> np.ndarray:
        """Flattened coin-major vector (index c * 4L + x)."""
        return self.amplitudes.reshape(-1)

    def momentum(self) -> np.ndarray:
        return np.fft.ifft(self.amplitudes, axis=1, norm="ortho")

    @classmethod
    def from_momentum(cls, a: np.ndarray) -> "RingState":
        return cls(np.fft.fft(a, axis=1, norm="ortho"))

    def site_density(self) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=0)

    def mean_position(self, center: float) -> float:
        """Mean site measured on the ring as a displacement from ``center``."""
        n = self.n_sites
        x = np.arange(n)
        disp = (x - center + n / 2) % n - n / 2
        return float(center + np.sum(disp * self.site_density()) / self.norm**2)


@dataclass
class LowRankDensity:
    """rho = sum_i weights[i] |v_i><v_i| on the IR space (coin x bins), coin-major."""

    vectors: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def rank(self) -> int:
        return len(self.weights)

    def trace(self) -> float:
        return float(np.sum(self.weights * np.sum(np.abs(self.vectors) ** 2, axis=1)))

    def dense(self) -> np.ndarray:
        return np.einsum("i,ia,ib->ab", self.weights, self.vectors, self.vectors.conj())

    def factors(self) -> np.ndarray:
        """Rows sqrt(w_i) v_i."""
        return np.sqrt(self.weights)[:, None] * self.vectors


def low_rank_trace_distance(rho: LowRankDensity, sigma: LowRankDensity) -> float:
    """Trace distance of two low-rank densities without forming dense matrices.

    With the difference written as F S F^dag (F the stacked factors, S the
    signs) and F = QR, the nonzero spectrum is that of the small matrix R S R^dag.
    """
    f = np.concatenate([rho.factors(), sigma.factors()]).T
    signs = np.concatenate([np.ones(rho.rank), -np.ones(sigma.rank)])
    _, r = np.linalg.qr(f)
    small = (r * signs) @ r.conj().T
    small = (small + small.conj().T) / 2
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(small))))


def _band_vectors(theta: float, k: np.ndarray, band: str) -> np.ndarray:
    """Normalized eigenvectors (stacked over k) of U(k) with eigenvalue e^{-i omega} (plus) or e^{+i omega} (minus)."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    sign = 1.0 if band == "plus" else -1.0
    s, c = np.sin(theta), np.cos(theta)
    omega = np.arccos(np.clip(c * np.cos(k), -1, 1))
    h = -1j * (sign * np.sin(omega) + c * np.sin(k))
    w = np.stack([np.full(k.shape, -1j * s), h], axis=-1)
    norms = np.linalg.norm(w, axis=-1)
    bad = norms < 1e-12
    if np.any(bad):
        # theta = 0: U(k) = diag(e^{ik}, e^{-ik}); pick the coin vector carrying the band's eigenvalue
        kb = np.angle(np.exp(1j * k[bad]))
        upper = (kb < 0) if band == "plus" else (kb >= 0)
        w[bad] = np.where(upper[:, None], [1, 0], [0, 1])
        norms[bad] = 1.0
    return w / norms[..., None]


@dataclass(frozen=True)
class BandEigensystem:
    p: int
    k: float
    omega: float
    w_plus: np.ndarray
    w_minus: np.ndarray


def band_eigensystem(cfg: RingWalkConfig, p: int) -> BandEigensystem:
    if not -2 * cfg.L <= p < 2 * cfg.L:
        raise ValueError(f"momentum index {p} outside the fine zone")
    k = float(cfg.fine_k(p))
    w_plus = _band_vectors(cfg.theta, k, "plus")[0]
    w_minus = _band_vectors(cfg.theta, k, "minus")[0]
    omega = float(np.arccos(np.clip(np.cos(cfg.theta) * np.cos(k), -1, 1)))
    return BandEigensystem(p, k, omega, w_plus, w_minus)


def _fine_k_by_index(L: int) -> np.ndarray:
    """Momentum k for FFT index j = p mod 4L, taken in [-pi, pi)."""
    n = 4 * L
    j = np.arange(n)
    p = np.where(j >= 2 * L, j - n, j)
    return np.pi * p / (2 * L)


def _coarse_k_by_index(L: int) -> np.ndarray:
    n = 2 * L
    j = np.arange(n)
    q = np.where(j >= L, j - n, j)
    return np.pi * q / L


def build_packet(cfg: RingWalkConfig, spec: GaussianPacketSpec) -> RingState:
    """Gaussian superposition of one band's eigenvectors, centred at k0 and site x0."""
    k = _fine_k_by_index(cfg.L)
    dk = np.angle(np.exp(1j * (k - spec.k0)))
    if np.count_nonzero(np.abs(dk) <= 3 * spec.sigma_k) < 8:
        raise ValueError(
            f"sigma_k={spec.sigma_k} is under-resolved by the momentum grid of L={cfg.L}"
        )
    if spec.broad:
        log.warning("sigma_k=%g > 0.1: UV/IR factorization of the packet is poor", spec.sigma_k)
    psi = np.exp(-dk**2 / (2 * spec.sigma_k**2) + 1j * k * spec.x0)
    a = (psi[:, None] * _band_vectors(cfg.theta, k, spec.band)).T
    a /= np.linalg.norm(a)
    return RingState.from_momentum(a)


def _apply_blocks(blocks: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Apply stacked 2x2 blocks to momentum amplitudes of shape (2, n)."""
    return np.einsum("jcd,dj->cj", blocks, a)


def evolve_exact(cfg: RingWalkConfig, state: RingState, n: int) -> RingState:
    """Apply U^(2n) blockwise in momentum space."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return RingState(state.amplitudes.copy())
    u = walk_blocks(cfg.theta, _fine_k_by_index(cfg.L))
    u2n = np.linalg.matrix_power(u @ u, n)
    return RingState.from_momentum(_apply_blocks(u2n, state.momentum()))


def reduce_to_ir(state: RingState) -> LowRankDensity:
    """Trace out the parity of the site inside each bin.

    The slices at fixed parity, psi_u(c, x_ir) = psi(c, 2 x_ir + u), give
    rho_IR = sum_u |psi_u><psi_u|, so the rank is at most two.
    """
    amps = state.amplitudes
    slices = [amps[:, u::2].reshape(-1) for u in (0, 1)]
    vecs, weights = [], []
    for v in slices:
        nrm = np.linalg.norm(v)
        if nrm > 0:
            vecs.append(v / nrm)
            weights.append(nrm**2)
    return LowRankDensity(np.array(vecs), np.array(weights))


def reduce_to_uv(state: RingState) -> np.ndarray:
    """2x2 density matrix of the parity degree of freedom."""
    s = [state.amplitudes[:, u::2].reshape(-1) for u in (0, 1)]
    return np.array([[np.vdot(s[b], s[a]) for b in (0, 1)] for a in (0, 1)])


def packet_bloch_vector(state: RingState) -> BlochVector:
    return BlochVector.from_density(reduce_to_uv(state))


def _coin_bins(v: np.ndarray) -> np.ndarray:
    return v.reshape(2, -1)


def evolve_effective(cfg: RingWalkConfig, r: BlochVector, rho: LowRankDensity, n: int) -> LowRankDensity:
    """Apply U_IR^n to each factor vector, blockwise over coarse momenta."""
    if n < 0:
        raise ValueError("n must be non-negative")
    blocks = np.linalg.matrix_power(
        effective_walk_blocks(cfg.theta, r, _coarse_k_by_index(cfg.L)), n
    )
    out = []
    for v in rho.vectors:
        b = np.fft.ifft(_coin_bins(v), axis=1, norm="ortho")
        out.append(np.fft.fft(_apply_blocks(blocks, b), axis=1, norm="ortho").reshape(-1))
    return LowRankDensity(np.array(out), rho.weights.copy())


def trace_distance_series(cfg: RingWalkConfig, spec: GaussianPacketSpec, r: BlochVector | None,
                          n_max: int, state: RingState | None = None) -> list[tuple[int, float]]:
    """E_n between tracing-then-U_IR^n and U^(2n)-then-tracing, for n = 0..n_max.

    ``r`` defaults to the Bloch vector of the packet's reduced parity state.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    state = build_packet(cfg, spec) if state is None else state
    r = packet_bloch_vector(state) if r is None else r
    u = walk_blocks(cfg.theta, _fine_k_by_index(cfg.L))
    u2 = u @ u
    u_ir = effective_walk_blocks(cfg.theta, r, _coarse_k_by_index(cfg.L))

    a = state.momentum()
    rho0 = reduce_to_ir(state)
    eff = np.array([np.fft.ifft(_coin_bins(v), axis=1, norm="ortho") for v in rho0.vectors])
    weights = rho0.weights

    def coarse(vecs):
        return np.array([np.fft.fft(b, axis=1, norm="ortho").reshape(-1) for b in vecs])

    series = [(0, 0.0)]
    for n in range(1, n_max + 1):
        a = _apply_blocks(u2, a)
        eff = np.array([_apply_blocks(u_ir, b) for b in eff])
        exact = reduce_to_ir(RingState(np.fft.fft(a, axis=1, norm="ortho")))
        approx = LowRankDensity(coarse(eff), weights)
        series.append((n, low_rank_trace_distance(exact, approx)))
    return series


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float


def linear_fit(ns, values) -> LinearFit:
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    slope, intercept = np.polyfit(ns, values, 1)
    resid = values - (slope * ns + intercept)
    ss_tot = np.sum((values - values.mean()) ** 2)
    r2 = 1 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 0.0
    return LinearFit(float(slope), float(intercept), float(r2))


def fit_window(series, start: int = 20, stop: int | None = None) -> LinearFit:
    """Least-squares line through E_n for start <= n <= stop."""
    pts = [(n, e) for n, e in series if n >= start and (stop is None or n <= stop)]
    if len(pts) < 2:
        raise ValueError("fit window holds fewer than two points")
    ns, es = zip(*pts)
    return linear_fit(ns, es)


def _number(name: str, value, cast):
    # YAML 1.1 reads exponent literals such as 1e-2 as strings
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            raise ValueError(f"config key {name} must be a number, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or cast(value) != value:
        raise ValueError(f"config key {name} must be {cast.__name__}, got {value!r}")
    return cast(value)


@dataclass
class ExperimentConfig:
    L: int
    theta: float
    sigma_k: float
    k0: float
    x0: int
    n_max: int
    out_csv: str
    out_json: str
    band: str = "plus"
    r_x: float | None = None
    r_y: float | None = None
    r_z: float | None = None
    seed: int = 0
    fit_start: int = field(default=20)

    def __post_init__(self):
        casts = {"L": int, "x0": int, "n_max": int, "seed": int, "fit_start": int,
                 "theta": float, "sigma_k": float, "k0": float}
        optional = {"r_x": float, "r_y": float, "r_z": float}
        for name, cast in (casts | optional).items():
            value = getattr(self, name)
            if value is None and name in optional:
                continue
            setattr(self, name, _number(name, value, cast))
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")

    @classmethod
    def from_mapping(cls, data: dict, base: Path | None = None) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        missing = {"L", "theta", "sigma_k", "k0", "x0", "n_max", "out_csv", "out_json"} - set(data)
        if missing:
            raise ValueError(f"missing config keys: {sorted(missing)}")
        cfg = cls(**data)
        if base is not None:
            cfg.out_csv = str(base / cfg.out_csv) if not Path(cfg.out_csv).is_absolute() else cfg.out_csv
            cfg.out_json = str(base / cfg.out_json) if not Path(cfg.out_json).is_absolute() else cfg.out_json
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a flat key-value mapping")
        return cls.from_mapping(data, path.parent)

    def bloch(self) -> BlochVector | None:
        if self.r_x is None and self.r_y is None and self.r_z is None:
            return None
        return BlochVector(self.r_x or 0.0, self.r_y or 0.0, self.r_z or 0.0)


def write_series_csv(path: str | Path, series) -> None:
    lines = ["n,trace_distance"] + [f"{n},{e!r}" for n, e in series]
    Path(path).write_text("\n".join(lines) + "\n")


def run_experiment(config: ExperimentConfig | str | Path) -> dict:
    """Run the E_n series for a config and write the CSV and JSON summary."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.load(config)
    t0 = time.perf_counter()
    walk = RingWalkConfig(cfg.theta, cfg.L)
    spec = GaussianPacketSpec(cfg.sigma_k, cfg.k0, cfg.x0, cfg.band)
    state = build_packet(walk, spec)
    r = cfg.bloch() or packet_bloch_vector(state)
    series = trace_distance_series(walk, spec, r, cfg.n_max, state=state)
    start = min(cfg.fit_start, cfg.n_max // 2)
    fit = fit_window(series, start)
    runtime_ms = (time.perf_counter() - t0) * 1e3
    summary = {
        "params": {k: v for k, v in asdict(cfg).items() if k not in ("out_csv", "out_json")},
        "bloch_vector": list(r.as_tuple()),
        "fit_range": [start, cfg.n_max],
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r2": fit.r2,
        "max_E": max(e for _, e in series),
        "runtime_ms": runtime_ms,
        "seed": cfg.seed,
    }
    written = []
    try:
        write_series_csv(cfg.out_csv, series)
        written.append(Path(cfg.out_csv))
        Path(cfg.out_json).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        for p in written:
            p.unlink(missing_ok=True)
        raise OSError(f"failed writing experiment output ({exc.filename}): {exc.strerror}") from exc
    summary["series"] = series
    return summary
