import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interferolab.core import (
    Architecture,
    ShapeError,
    TrainingSet,
    add_tomography_noise,
    derive_rng,
    forward_unitary,
    generate_training_set,
    max_unitarity_error,
    sample_haar_unitary,
    sample_random_arch,
    sample_uniform_phases,
)


def chain_product_oracle(arch, phases):
    """Build every layer matrix explicitly and multiply right to left."""
    n = arch.modes
    u = np.eye(n, dtype=complex)
    for layer in range(arch.phase_layers):
        phi = np.zeros((n, n), dtype=complex)
        for k in range(n):
            phi[k, k] = np.cos(phases[layer][k]) + 1j * np.sin(phases[layer][k])
        u = phi @ u
        if layer < arch.phase_layers - 1:
            u = arch.basis[layer] @ u
    return u


def identity_arch(n, l):
    return Architecture(n, l, tuple(np.eye(n) for _ in range(l - 1)))


class TestForwardUnitary:
    def test_identity(self):
        u = forward_unitary(identity_arch(2, 2), np.zeros((2, 2)))
        assert np.array_equal(u, np.eye(2))

    def test_diagonal_phase_product(self):
        phases = np.array([[np.pi / 2, 0.0], [0.0, 0.0]])
        u = forward_unitary(identity_arch(2, 2), phases)
        np.testing.assert_allclose(u, np.diag([1j, 1.0]), atol=1e-15)

    def test_matches_chain_oracle(self):
        rng = derive_rng(11)
        arch = sample_random_arch(3, 4, rng)
        phases = sample_uniform_phases(3, 4, rng)
        assert np.max(np.abs(forward_unitary(arch, phases) - chain_product_oracle(arch, phases))) < 1e-13

    def test_two_layer_triple_product(self):
        rng = derive_rng(12)
        arch = sample_random_arch(4, 2, rng)
        phases = sample_uniform_phases(4, 2, rng)
        expected = np.diag(np.exp(1j * phases[1])) @ arch.basis[0] @ np.diag(np.exp(1j * phases[0]))
        assert np.max(np.abs(forward_unitary(arch, phases) - expected)) < 1e-14

    def test_batched_matches_single(self):
        rng = derive_rng(13)
        arch = sample_random_arch(3, 3, rng)
        phases = sample_uniform_phases(3, 3, rng, size=7)
        batch = forward_unitary(arch, phases)
        for p, u in zip(phases, batch):
            np.testing.assert_allclose(u, forward_unitary(arch, p), atol=1e-15)

    def test_shape_error(self):
        arch = identity_arch(2, 3)
        with pytest.raises(ShapeError):
            forward_unitary(arch, np.zeros((2, 2)))

    @settings(max_examples=40, deadline=None)
    @given(
        n=st.integers(1, 5),
        l=st.integers(2, 5),
        seed=st.integers(0, 2**32),
        entry=st.integers(0, 100),
    )
    def test_unitary_and_periodic(self, n, l, seed, entry):
        rng = derive_rng(seed)
        arch = sample_random_arch(n, l, rng)
        phases = sample_uniform_phases(n, l, rng)
        u = forward_unitary(arch, phases)
        assert max_unitarity_error(u) < 1e-12
        shifted = phases.copy()
        shifted.flat[entry % shifted.size] += 2 * np.pi
        assert np.max(np.abs(forward_unitary(arch, shifted) - u)) < 1e-13


class TestNoise:
    def test_zero_noise_is_bitwise_identity(self):
        u = sample_haar_unitary(3, derive_rng(1))
        out = add_tomography_noise(u, 0.0, derive_rng(2))
        assert np.array_equal(out, u)
        assert out is not u

    def test_noise_power(self):
        u = np.zeros((1000, 1000), dtype=complex)
        noise = add_tomography_noise(u, 0.1, derive_rng(3))
        power = np.mean(np.abs(noise) ** 2)
        assert 0.0099 <= power <= 0.0101

    def test_deterministic(self):
        u = np.eye(3, dtype=complex)
        a = add_tomography_noise(u, 0.2, derive_rng(4))
        b = add_tomography_noise(u, 0.2, derive_rng(4))
        assert np.array_equal(a, b)

    def test_negative_eps(self):
        with pytest.raises(ValueError):
            add_tomography_noise(np.eye(2), -0.1, derive_rng(0))


class TestHaar:
    def test_scalar(self):
        q = sample_haar_unitary(1, derive_rng(5))
        assert q.shape == (1, 1)
        assert abs(abs(q[0, 0]) - 1) < 1e-14

    def test_unitary(self):
        assert max_unitarity_error(sample_haar_unitary(4, derive_rng(6))) < 1e-12

    def test_first_moment(self):
        rng = derive_rng(7)
        vals = np.array([abs(sample_haar_unitary(2, rng)[0, 0]) ** 2 for _ in range(100_000)])
        assert 0.495 <= vals.mean() <= 0.505

    def test_phase_correction_removes_bias(self):
        # without the R-diagonal correction the diagonal phases of Q are biased
        rng = derive_rng(8)
        d = np.array([sample_haar_unitary(2, rng)[0, 0] for _ in range(20_000)])
        assert abs(np.mean(d)) < 0.02

    def test_invalid(self):
        with pytest.raises(ValueError):
            sample_haar_unitary(0, derive_rng(0))


class TestArchitecture:
    def test_random_arch(self):
        arch = sample_random_arch(3, 4, derive_rng(9))
        assert len(arch.basis) == 3
        assert all(max_unitarity_error(b) < 1e-12 for b in arch.basis)

    def test_minimal(self):
        assert len(sample_random_arch(2, 2, derive_rng(9)).basis) == 1

    def test_deterministic(self):
        assert sample_random_arch(3, 4, derive_rng(10)) == sample_random_arch(3, 4, derive_rng(10))
        assert sample_random_arch(3, 4, derive_rng(10)) != sample_random_arch(3, 4, derive_rng(11))

    def test_single_layer_rejected(self):
        with pytest.raises(ValueError):
            sample_random_arch(3, 1, derive_rng(0))

    def test_non_unitary_rejected(self):
        with pytest.raises(ValueError):
            Architecture(2, 2, (np.ones((2, 2)),))

    def test_wrong_basis_count(self):
        with pytest.raises(ShapeError):
            Architecture(2, 3, (np.eye(2),))

    def test_roundtrip_and_hash(self):
        arch = sample_random_arch(3, 3, derive_rng(14))
        data = arch.to_dict()
        assert data["modes"] == 3 and data["phase_layers"] == 3
        assert np.shape(data["basis"]) == (2, 3, 3, 2)
        back = Architecture.from_dict(data)
        assert back == arch
        assert back.hash() == arch.hash()
        assert len(arch.hash()) == 64

    def test_basis_immutable(self):
        arch = sample_random_arch(2, 2, derive_rng(0))
        with pytest.raises(ValueError):
            arch.basis[0][0, 0] = 0


class TestPhases:
    def test_range_and_shape(self):
        p = sample_uniform_phases(4, 3, derive_rng(15))
        assert p.shape == (3, 4)
        assert np.all((p >= 0) & (p < 2 * np.pi))

    def test_mean(self):
        p = sample_uniform_phases(1000, 1000, derive_rng(16))
        assert abs(p.mean() - np.pi) < 0.01

    def test_deterministic(self):
        assert np.array_equal(sample_uniform_phases(3, 3, derive_rng(1)), sample_uniform_phases(3, 3, derive_rng(1)))

    def test_child_streams_are_independent_of_order(self):
        a = [derive_rng(5, t).random() for t in range(4)]
        b = [derive_rng(5, t).random() for t in reversed(range(4))][::-1]
        assert a == b
        assert len(set(a)) == 4


class TestTrainingSet:
    def test_noiseless(self):
        arch = sample_random_arch(3, 3, derive_rng(17))
        ts = generate_training_set(arch, 5, 0.0, derive_rng(18))
        assert len(ts) == 5
        for phases, u in ts.samples:
            assert np.array_equal(u, forward_unitary(arch, phases))

    def test_singleton(self):
        arch = sample_random_arch(2, 2, derive_rng(17))
        assert len(generate_training_set(arch, 1, 0.0, derive_rng(1))) == 1

    def test_noise_statistic(self):
        arch = sample_random_arch(3, 4, derive_rng(19))
        eps = 0.05
        ts = generate_training_set(arch, 100, eps, derive_rng(20))
        exact = forward_unitary(arch, ts.phases)
        power = np.mean(np.abs(ts.matrices - exact) ** 2)
        assert 0.8 * eps**2 <= power <= 1.2 * eps**2

    def test_invalid_size(self):
        arch = sample_random_arch(2, 2, derive_rng(0))
        with pytest.raises(ValueError):
            generate_training_set(arch, 0, 0.0, derive_rng(0))

    def test_roundtrip(self):
        arch = sample_random_arch(2, 3, derive_rng(21))
        ts = generate_training_set(arch, 4, 0.1, derive_rng(22))
        data = ts.to_dict()
        assert data["architecture_hash"] == arch.hash()
        assert np.shape(data["samples"][0]["matrix"]) == (2, 2, 2)
        back = TrainingSet.from_dict(data)
        assert np.array_equal(back.phases, ts.phases)
        assert np.array_equal(back.matrices, ts.matrices)
        assert back.noise_eps == 0.1

    def test_inconsistent_shapes(self):
        with pytest.raises(ShapeError):
            TrainingSet("x", np.zeros((2, 2, 3)), np.zeros((2, 2, 2)))
        with pytest.raises(ShapeError):
            TrainingSet("x", np.zeros((0, 2, 2)), np.zeros((0, 2, 2)))
