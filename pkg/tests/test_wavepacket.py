import csv
import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from effdyn import diracqw as dq
from effdyn import wavepacket as wp
from effdyn.linalg import trace_distance


def dense_ir(state: wp.RingState) -> np.ndarray:
    """Partial trace over parity of the dense projector, coin-major (c, bin) ordering."""
    psi = state.amplitudes.reshape(2, -1, 2)  # [coin, bin, parity]
    return np.einsum("cbu,dfu->cbdf", psi, psi.conj()).reshape(psi.shape[0] * psi.shape[1], -1)


def test_spec_validation():
    with pytest.raises(ValueError):
        wp.GaussianPacketSpec(0.0, 0.2, 0)
    with pytest.raises(ValueError):
        wp.GaussianPacketSpec(0.1, 0.2, 0, band="up")
    assert wp.GaussianPacketSpec(0.15, 0, 0).broad and not wp.GaussianPacketSpec(0.02, 0, 0).broad


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, np.pi / 4), st.integers(-32, 31))
def test_band_eigensystem(theta, p):
    cfg = dq.RingWalkConfig(theta, 16)
    es = wp.band_eigensystem(cfg, p)
    u = dq.walk_block(cfg, p).block
    assert np.linalg.norm(u @ es.w_plus - np.exp(-1j * es.omega) * es.w_plus) <= 1e-10
    assert np.linalg.norm(u @ es.w_minus - np.exp(1j * es.omega) * es.w_minus) <= 1e-10
    assert abs(np.vdot(es.w_plus, es.w_minus)) <= 1e-10
    assert np.linalg.norm(es.w_plus) == pytest.approx(1)
    assert np.cos(es.omega) == pytest.approx(np.cos(es.k) * np.cos(theta), abs=1e-10)


def test_band_eigensystem_free_walk_is_coin_basis():
    cfg = dq.RingWalkConfig(0.0, 8)
    for p in (-5, 3, 0):
        es = wp.band_eigensystem(cfg, p)
        u = dq.walk_block(cfg, p).block
        for w, lam in ((es.w_plus, np.exp(-1j * es.omega)), (es.w_minus, np.exp(1j * es.omega))):
            assert sorted(np.abs(w)) == pytest.approx([0, 1])
            assert np.linalg.norm(u @ w - lam * w) <= 1e-12
        assert abs(np.vdot(es.w_plus, es.w_minus)) <= 1e-12
    with pytest.raises(ValueError):
        wp.band_eigensystem(cfg, 16)


def test_reference_packet_norm_and_peak():
    cfg = dq.RingWalkConfig(0.2, 1000)
    state = wp.build_packet(cfg, wp.GaussianPacketSpec(0.02, 0.2, -200))
    assert state.norm == pytest.approx(1, abs=1e-12)
    peak = int(np.argmax(state.site_density()))
    assert min((peak + 200) % 4000, (-200 - peak) % 4000) <= 2
    r = wp.packet_bloch_vector(state)
    assert r.r_x == pytest.approx(np.cos(0.2), abs=1e-2)
    assert r.r_y == pytest.approx(-np.sin(0.2), abs=1e-2)
    assert r.r_z == pytest.approx(0, abs=1e-2)


def test_build_packet_rejects_under_resolved_grid():
    with pytest.raises(ValueError, match="under-resolved"):
        wp.build_packet(dq.RingWalkConfig(0.2, 16), wp.GaussianPacketSpec(0.02, 0.2, 0))


def test_build_packet_warns_when_broad(caplog):
    with caplog.at_level(logging.WARNING, logger="effdyn.wavepacket"):
        wp.build_packet(dq.RingWalkConfig(0.2, 32), wp.GaussianPacketSpec(0.2, 0.0, 0))
    assert "factorization" in caplog.text


@pytest.mark.parametrize("band,sign", [("plus", -1), ("minus", 1)])
def test_group_velocity_drift(band, sign):
    theta, k0, n = 0.2, 0.5, 25
    cfg = dq.RingWalkConfig(theta, 400)
    state = wp.build_packet(cfg, wp.GaussianPacketSpec(0.05, k0, 0, band))
    omega = np.arccos(np.cos(k0) * np.cos(theta))
    vg = np.cos(theta) * np.sin(k0) / np.sin(omega)
    drift = wp.evolve_exact(cfg, state, n).mean_position(0) - state.mean_position(0)
    # n double steps are 2n applications of the walk
    assert drift == pytest.approx(sign * 2 * n * vg, rel=0.05)


def test_evolve_exact_identity_and_norm():
    cfg = dq.RingWalkConfig(0.3, 50)
    state = wp.build_packet(cfg, wp.GaussianPacketSpec(0.1, 0.4, 10))
    np.testing.assert_array_equal(wp.evolve_exact(cfg, state, 0).amplitudes, state.amplitudes)
    assert wp.evolve_exact(cfg, state, 1000).norm == pytest.approx(1, abs=1e-10)
    with pytest.raises(ValueError):
        wp.evolve_exact(cfg, state, -1)


@pytest.mark.parametrize("L", [2, 5, 16])
def test_momentum_evolution_matches_dense(L):
    cfg = dq.RingWalkConfig(0.35, L)
    rng = np.random.default_rng(L)
    amps = rng.standard_normal((2, 4 * L)) + 1j * rng.standard_normal((2, 4 * L))
    state = wp.RingState(amps / np.linalg.norm(amps))
    w = dq.walk_operator(cfg)
    dense = np.linalg.matrix_power(w @ w, 3) @ state.vector()
    np.testing.assert_allclose(wp.evolve_exact(cfg, state, 3).vector(), dense, atol=1e-9)


def test_reduce_product_state_is_rank_one():
    rng = np.random.default_rng(0)
    ir = rng.standard_normal(2 * 8) + 1j * rng.standard_normal(2 * 8)
    ir /= np.linalg.norm(ir)
    uv = np.array([0.6, 0.8j])
    amps = np.einsum("a,u->au", ir, uv).reshape(2, 8, 2).reshape(2, 16)
    rho = wp.reduce_to_ir(wp.RingState(amps))
    np.testing.assert_allclose(rho.dense(), np.outer(ir, ir.conj()), atol=1e-12)
    assert np.linalg.matrix_rank(rho.dense(), tol=1e-10) == 1


def test_reduce_orthogonal_parities_is_even_mixture():
    amps = np.zeros((2, 8), dtype=complex)
    amps[0, 0] = amps[1, 3] = 1 / np.sqrt(2)  # parity 0 at bin 0, parity 1 at bin 1
    rho = wp.reduce_to_ir(wp.RingState(amps))
    np.testing.assert_allclose(sorted(np.linalg.eigvalsh(rho.dense()))[-2:], [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(rho.dense(), dense_ir(wp.RingState(amps)), atol=1e-15)


def test_reduce_reference_packet_trace_and_rank():
    cfg = dq.RingWalkConfig(0.2, 32)
    state = wp.build_packet(cfg, wp.GaussianPacketSpec(0.1, 0.2, -20))
    rho = wp.reduce_to_ir(state)
    assert rho.rank <= 2
    assert rho.trace() == pytest.approx(1, abs=1e-10)
    np.testing.assert_allclose(rho.dense(), dense_ir(state), atol=1e-12)
    assert np.trace(rho.dense()).real == pytest.approx(1, abs=1e-10)


def test_low_rank_density_rejects_negative_weights():
    with pytest.raises(ValueError):
        wp.LowRankDensity(np.eye(2), [1.0, -0.1])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 2), st.integers(1, 2))
def test_low_rank_trace_distance_matches_dense(seed, r1, r2):
    rng = np.random.default_rng(seed)

    def rand_low_rank(rank):
        v = rng.standard_normal((rank, 12)) + 1j * rng.standard_normal((rank, 12))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        w = rng.random(rank)
        return wp.LowRankDensity(v, w / w.sum())

    a, b = rand_low_rank(r1), rand_low_rank(r2)
    assert wp.low_rank_trace_distance(a, b) == pytest.approx(trace_distance(a.dense(), b.dense()), abs=1e-9)


def test_evolve_effective_examples():
    cfg = dq.RingWalkConfig(0.2, 16)
    state = wp.build_packet(cfg, wp.GaussianPacketSpec(0.15, 0.3, 5))
    rho = wp.reduce_to_ir(state)
    same = wp.evolve_effective(cfg, dq.BlochVector(0.9, 0, 0), rho, 0)
    np.testing.assert_allclose(same.dense(), rho.dense(), atol=1e-14)

    massless = wp.evolve_effective(cfg, dq.BlochVector(0, 0, 0), rho, 3)
    # r = 0 leaves V_IR: the two coin components translate in opposite directions
    u = dq.effective_unitary_dense(cfg, dq.BlochVector(0, 0, 0))
    np.testing.assert_allclose(u, dq.v_ir(16), atol=1e-12)
    vn = np.linalg.matrix_power(u, 3)
    np.testing.assert_allclose(massless.dense(), vn @ rho.dense() @ vn.conj().T, atol=1e-12)

    long = wp.evolve_effective(cfg, dq.BlochVector(0.9, 0.1, 0), rho, 1000)
    assert long.trace() == pytest.approx(1, abs=1e-10)
    assert long.rank == rho.rank
    np.testing.assert_array_equal(long.weights, rho.weights)


def test_evolve_effective_matches_dense():
    cfg = dq.RingWalkConfig(0.25, 8)
    r = dq.BlochVector(0.7, -0.2, 0.1)
    state = wp.build_packet(cfg, wp.GaussianPacketSpec(0.25, 0.3, 0))
    rho = wp.reduce_to_ir(state)
    un = np.linalg.matrix_power(dq.effective_unitary_dense(cfg, r), 4)
    np.testing.assert_allclose(
        wp.evolve_effective(cfg, r, rho, 4).dense(), un @ rho.dense() @ un.conj().T, atol=1e-12
    )


@pytest.mark.parametrize("L", [16, 32])
def test_series_matches_dense_computation(L):
    cfg = dq.RingWalkConfig(0.2, L)
    spec = wp.GaussianPacketSpec(0.15, 0.3, 5)
    state = wp.build_packet(cfg, spec)
    r = wp.packet_bloch_vector(state)
    series = wp.trace_distance_series(cfg, spec, r, 10, state=state)
    u_eff = dq.effective_unitary_dense(cfg, r)
    rho0 = dense_ir(state)
    for n, e in series:
        exact = dense_ir(wp.evolve_exact(cfg, state, n))
        un = np.linalg.matrix_power(u_eff, n)
        assert e == pytest.approx(trace_distance(exact, un @ rho0 @ un.conj().T), abs=1e-9)


def test_series_starts_at_zero_and_rejects_empty():
    cfg = dq.RingWalkConfig(0.2, 100)
    spec = wp.GaussianPacketSpec(0.05, 0.2, -40)
    assert wp.trace_distance_series(cfg, spec, None, 5)[0] == (0, 0.0)
    with pytest.raises(ValueError):
        wp.trace_distance_series(cfg, spec, None, 0)


def test_series_global_phase_invariance():
    cfg = dq.RingWalkConfig(0.2, 100)
    spec = wp.GaussianPacketSpec(0.05, 0.2, -40)
    state = wp.build_packet(cfg, spec)
    rotated = wp.RingState(np.exp(0.83j) * state.amplitudes)
    a = wp.trace_distance_series(cfg, spec, None, 30, state=state)
    b = wp.trace_distance_series(cfg, spec, None, 30, state=rotated)
    np.testing.assert_allclose([e for _, e in a], [e for _, e in b], atol=1e-12)


@pytest.mark.parametrize("k0", [0.0, 1.0])
def test_first_step_error_grows_with_sigma(k0):
    cfg = dq.RingWalkConfig(0.2, 200)
    e1 = [wp.trace_distance_series(cfg, wp.GaussianPacketSpec(s, k0, 0), None, 1)[1][1] for s in (0.02, 0.05, 0.1)]
    assert e1[0] < e1[1] < e1[2]


def test_error_after_ten_steps_grows_with_sigma_at_reference_momentum():
    cfg = dq.RingWalkConfig(0.2, 200)
    e10 = [wp.trace_distance_series(cfg, wp.GaussianPacketSpec(s, 0.2, 0), None, 10)[10][1] for s in (0.02, 0.05, 0.1)]
    assert e10[0] < e10[1] < e10[2]


def test_linear_fit_and_window():
    fit = wp.linear_fit([0, 1, 2, 3], [1, 3, 5, 7])
    assert (fit.slope, fit.intercept, fit.r2) == pytest.approx((2, 1, 1))
    series = [(n, 0.5 * n) for n in range(30)]
    assert wp.fit_window(series, 20).slope == pytest.approx(0.5)
    with pytest.raises(ValueError):
        wp.fit_window(series, 29)


def write_config(path, **overrides):
    data = {"L": 50, "theta": 0.2, "sigma_k": 0.1, "k0": 0.2, "x0": -20, "n_max": 40,
            "out_csv": "series.csv", "out_json": "summary.json", "seed": 7}
    data.update(overrides)
    path.write_text("\n".join(f"{k}: {v}" for k, v in data.items()) + "\n")
    return path


def test_config_loading(tmp_path):
    cfg = wp.ExperimentConfig.load(write_config(tmp_path / "c.yaml", sigma_k="1e-1"))
    assert cfg.sigma_k == 0.1 and cfg.out_csv == str(tmp_path / "series.csv")
    assert cfg.bloch() is None
    assert wp.ExperimentConfig.load(write_config(tmp_path / "c.yaml", r_x=1)).bloch().as_tuple() == (1, 0, 0)
    for bad in ({"L": "abc"}, {"L": 2.5}, {"n_max": 0}, {"colour": "red"}):
        with pytest.raises(ValueError):
            wp.ExperimentConfig.load(write_config(tmp_path / "c.yaml", **bad))
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ValueError):
        wp.ExperimentConfig.load(tmp_path / "list.yaml")
    with pytest.raises(OSError, match="missing.yaml"):
        wp.ExperimentConfig.load(tmp_path / "missing.yaml")


def test_run_experiment_outputs(tmp_path):
    summary = wp.run_experiment(write_config(tmp_path / "c.yaml"))
    with open(tmp_path / "series.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["n", "trace_distance"]
    assert len(rows) == 42 and rows[1] == ["0", "0.0"]
    data = json.loads((tmp_path / "summary.json").read_text())
    assert set(data) == {"params", "bloch_vector", "fit_range", "slope", "intercept", "r2", "max_E", "runtime_ms", "seed"}
    assert data["seed"] == 7 and data["fit_range"] == [20, 40]
    assert data["slope"] == summary["slope"] > 0


def test_run_experiment_deterministic(tmp_path):
    path = write_config(tmp_path / "c.yaml")
    wp.run_experiment(path)
    first_csv = (tmp_path / "series.csv").read_bytes()
    first = json.loads((tmp_path / "summary.json").read_text())
    wp.run_experiment(path)
    assert (tmp_path / "series.csv").read_bytes() == first_csv
    second = json.loads((tmp_path / "summary.json").read_text())
    first.pop("runtime_ms"), second.pop("runtime_ms")
    assert first == second


def test_run_experiment_free_walk_has_no_error(tmp_path):
    summary = wp.run_experiment(write_config(tmp_path / "c.yaml", theta=0))
    assert max(e for _, e in summary["series"]) <= 1e-10


def test_packet_bloch_vector_beats_hand_set(tmp_path):
    derived = wp.run_experiment(write_config(tmp_path / "a.yaml", L=200, sigma_k=0.05, n_max=100))
    hand = wp.run_experiment(write_config(tmp_path / "b.yaml", L=200, sigma_k=0.05, n_max=100, r_x=1, r_y=0, r_z=0))
    assert 0 < derived["slope"] <= hand["slope"]


def test_run_experiment_reports_io_failure(tmp_path):
    cfg = wp.ExperimentConfig.load(write_config(tmp_path / "c.yaml", out_json="no/such/dir/s.json"))
    with pytest.raises(OSError, match="s.json"):
        wp.run_experiment(cfg)
    assert not (tmp_path / "series.csv").exists()


@pytest.mark.parametrize("name", ["full.yaml", "desk.yaml"])
def test_shipped_configs_run(tmp_path, name):
    from pathlib import Path

    cfg = wp.ExperimentConfig.load(Path(__file__).parents[1] / "configs" / name)
    cfg.out_csv, cfg.out_json = str(tmp_path / "s.csv"), str(tmp_path / "s.json")
    summary = wp.run_experiment(cfg)
    assert summary["series"][0] == (0, 0.0)
    assert summary["slope"] > 0 and summary["r2"] >= 0.9
