import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from effdyn import meanfield as mf
from effdyn.channel import fidelity_value
from effdyn.linalg import (
    BipartiteOperator,
    exp_i_hermitian,
    haar_unitary,
    is_hermitian,
    kron,
    make_rng,
    random_density,
    random_hermitian,
    unitarity_residual,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2, dtype=complex)
ZERO = np.diag([1.0, 0.0]).astype(complex)
PLUS = np.full((2, 2), 0.5, dtype=complex)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def ir_uv(b_ir, a_uv):
    """The operator written A_UV (x) B_IR, stored IR-major."""
    return BipartiteOperator(kron(b_ir, a_uv), b_ir.shape[0], a_uv.shape[0])


def exp_family(h: BipartiteOperator, seed=0):
    rng = make_rng(seed)
    v_ir, v_uv = haar_unitary(h.d_ir, rng), haar_unitary(h.d_uv, rng)
    return mf.WeakCouplingFamily(
        v_ir, v_uv, lambda t: BipartiteOperator(exp_i_hermitian(h.matrix, t), h.d_ir, h.d_uv)
    )


def test_extract_recovers_known_generator():
    h = BipartiteOperator(random_hermitian(6, 3), 3, 2)
    for step in (1e-2, 1e-3):
        gen = mf.extract_h_mix(exp_family(h), step)
        # third-order Taylor remainder of exp(i t h) bounds the error
        bound = step**2 * np.linalg.norm(h.matrix, 2) ** 3
        assert np.abs(gen.h_mix.matrix - h.matrix).max() <= bound
        assert is_hermitian(gen.h_mix.matrix, 1e-10)


def test_extract_richardson_scales_quadratically():
    fam = mf.random_family(2, 2, 5)
    r1 = mf.extract_h_mix(fam, 1e-2).richardson_residual
    r2 = mf.extract_h_mix(fam, 5e-3).richardson_residual
    assert 3 < r1 / r2 < 5


def test_extract_identity_family_is_zero():
    fam = mf.WeakCouplingFamily(I2, I2, lambda t: BipartiteOperator(np.eye(4), 2, 2))
    assert np.abs(mf.extract_h_mix(fam).h_mix.matrix).max() == 0


def test_extract_rejects_bad_step_and_non_unitary_family():
    fam = mf.random_family(2, 2, 0)
    with pytest.raises(ValueError):
        mf.extract_h_mix(fam, 0.0)
    with pytest.raises(ValueError):
        mf.extract_h_mix(fam, 0.2)
    bad = mf.WeakCouplingFamily(I2, I2, lambda t: BipartiteOperator((1 + t) * np.eye(4), 2, 2))
    with pytest.raises(ValueError):
        mf.extract_h_mix(bad)


def test_random_family_invariants():
    fam = mf.random_family(3, 2, 9)
    assert np.abs(fam.u_mix(0.0).matrix - np.eye(6)).max() <= 1e-10
    for t in np.linspace(-0.5, 0.5, 7):
        assert unitarity_residual(fam.u_mix(t).matrix) <= 1e-10


@pytest.mark.parametrize("d_ir,d_uv", [(2, 2), (3, 2), (2, 3)])
def test_decomposition_reconstructs(d_ir, d_uv):
    gen = mf.decompose(BipartiteOperator(random_hermitian(d_ir * d_uv, 4), d_ir, d_uv))
    assert np.abs(gen.reconstruct() - gen.h_mix.matrix).max() <= 1e-9


def test_decompose_rejects_non_hermitian():
    with pytest.raises(ValueError):
        mf.decompose(BipartiteOperator(np.triu(np.ones((4, 4))), 2, 2))


def test_h_ir_product_form():
    a, b = random_hermitian(2, 1), random_hermitian(3, 2)
    rho = random_density(2, 3)
    got = mf.mean_field_h_ir(ir_uv(b, a), rho)
    np.testing.assert_allclose(got, np.trace(rho @ a) * b, atol=1e-12)


def test_h_ir_vanishes_for_traceless_uv_at_maximal_mixing():
    h = ir_uv(SX, SZ).matrix + ir_uv(SZ, SX).matrix
    got = mf.mean_field_h_ir(BipartiteOperator(h, 2, 2), I2 / 2)
    assert np.abs(got).max() <= 1e-15


def test_h_ir_dimension_mismatch():
    with pytest.raises(ValueError):
        mf.mean_field_h_ir(ir_uv(SX, SZ), np.eye(3) / 3)


def test_effective_unitary_examples():
    fam = mf.random_family(2, 2, 1)
    rho = random_density(2, 1)
    np.testing.assert_allclose(mf.effective_unitary(fam, rho, 0.0), fam.v_ir, atol=1e-15)
    with pytest.raises(ValueError):
        mf.effective_unitary(fam, rho, 0.6)

    b = random_hermitian(3, 7)
    fact = exp_family(ir_uv(b, I2), 7)
    u_ir = mf.effective_unitary(fact, rho, 0.1)
    assert unitarity_residual(u_ir) <= 1e-10
    np.testing.assert_allclose(u_ir, fact.v_ir @ exp_i_hermitian(b, 0.1), atol=1e-7)
    assert fidelity_value(fact.unitary(0.1), rho, u_ir) == pytest.approx(1, abs=1e-9)


def test_mu_examples():
    b = random_hermitian(2, 0)
    assert mf.mu(ir_uv(b, I2), random_density(2, 0)) == pytest.approx(0, abs=1e-12)
    h = ir_uv(SX, SZ)
    for method in mf.MU_METHODS:
        assert mf.mu(h, ZERO, method) == pytest.approx(0, abs=1e-12)
        assert mf.mu(h, PLUS, method) == pytest.approx(1, abs=1e-12)


def test_mu_rejects_unknown_method_and_missing_decomposition():
    h = ir_uv(SX, SZ)
    with pytest.raises(ValueError):
        mf.mu(h, ZERO, "spectral")
    with pytest.raises(ValueError):
        mf.mu(mf.MixGenerator(h), ZERO, "correlator")


def test_variance_method_needs_normalized_basis():
    gen = mf.decompose(ir_uv(SX, SZ))
    skewed = mf.MixGenerator(gen.h_mix, gen.h_uv, 2 * gen.basis)
    with pytest.raises(ValueError):
        mf.mu(skewed, PLUS, "variance")


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 3))
def test_mu_methods_agree_and_nonnegative(seed, d_ir, d_uv):
    rng = make_rng(seed)
    gen = mf.decompose(BipartiteOperator(random_hermitian(d_ir * d_uv, rng), d_ir, d_uv))
    rho = random_density(d_uv, rng)
    vals = [mf.mu(gen, rho, m) for m in mf.MU_METHODS]
    assert min(vals) >= -1e-10
    assert abs(vals[0] - vals[1]) <= 1e-9 and abs(vals[1] - vals[2]) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(-5, 5))
def test_identity_shift_invariance(seed, c):
    fam = mf.random_family(2, 2, seed)
    rho = random_density(2, seed)
    gen = mf.extract_h_mix(fam)
    shifted = mf.decompose(BipartiteOperator(gen.h_mix.matrix + c * np.eye(4), 2, 2))
    for m in mf.MU_METHODS:
        assert abs(mf.mu(gen, rho, m) - mf.mu(shifted, rho, m)) <= 1e-12 * (1 + abs(c))
    theta = 0.05
    u = fam.unitary(theta)
    f0 = fidelity_value(u, rho, mf.effective_unitary(fam, rho, theta, gen))
    f1 = fidelity_value(u, rho, mf.effective_unitary(fam, rho, theta, shifted))
    assert abs(f0 - f1) <= 1e-12


def test_predicted_fidelity_examples():
    fam = mf.random_family(2, 2, 3)
    rho = random_density(2, 3)
    gen = mf.extract_h_mix(fam)
    theta = 0.02
    m = mf.mu(gen, rho)
    h = mf.mean_field_h_ir(gen, rho)
    base = mf.predicted_fidelity(gen, rho, theta)
    assert base == pytest.approx(1 - theta**2 * m, abs=1e-15)
    assert mf.predicted_fidelity(gen, rho, theta, h) == pytest.approx(base, abs=1e-15)
    assert mf.predicted_fidelity(gen, rho, theta, h + np.eye(2)) == pytest.approx(base, abs=1e-15)
    assert mf.predicted_fidelity(gen, rho, theta, h + SX) == pytest.approx(1 - theta**2 * (1 + m), abs=1e-14)
    with pytest.raises(ValueError):
        mf.predicted_fidelity(gen, rho, theta, np.array([[0, 1], [0, 0]]))


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_mean_field_is_maximal(seed):
    rng = make_rng(seed)
    gen = mf.decompose(BipartiteOperator(random_hermitian(6, rng), 3, 2))
    rho = random_density(2, rng)
    h = mf.mean_field_h_ir(gen, rho)
    best = mf.predicted_fidelity(gen, rho, 0.1)
    p = random_hermitian(3, rng)
    p /= np.linalg.norm(p, 2)
    for eps in (0.1, -0.1):
        assert mf.predicted_fidelity(gen, rho, 0.1, h + eps * p) <= best + 1e-15


@pytest.mark.parametrize("seed", range(5))
def test_expansion_order(seed):
    fam = mf.random_family(2, 2, seed)
    rho = random_density(2, seed + 100)
    thetas = [0.04, 0.02, 0.01, 0.005]
    rows = mf.sweep(fam, rho, thetas)
    res = np.array([r.residual for r in rows])
    slope = np.polyfit(np.log(thetas), np.log(res), 1)[0]
    assert slope >= 2.7
    assert all(r.predicted_fidelity <= 1 for r in rows)


def test_sweep_json_keys():
    fam = mf.random_family(2, 2, 0)
    row = mf.sweep(fam, random_density(2, 0), [0.01])[0]
    assert set(row.to_json()) == {
        "theta", "mu_direct", "mu_correlator", "mu_variance",
        "predicted_fidelity", "exact_fidelity", "residual",
    }
