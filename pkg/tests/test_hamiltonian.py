"""Gradient, invariance, and support checks for the Hamiltonian terms."""

import numpy as np
import pytest

from vortexlab.hamiltonian import (
    HamiltonianSpec,
    LinearInvariantTerm,
    SliceMomentTerm,
    default_cutoff,
    height_hamiltonian,
    smoothstep,
)
from vortexlab.toric import ToricTarget

CP1 = ToricTarget(n=2, k=1, weights=((1, 1),), tau=(0.5,), name="cp1")


def fd_gradient(term, t, z, h=1e-6):
    """Central-difference Euclidean gradient as a complex vector."""
    z = np.asarray(z, dtype=complex)
    out = np.zeros_like(z)
    for j in range(z.shape[-1]):
        e = np.zeros(z.shape[-1])
        e[j] = h
        dx = (term.value(t, z + e) - term.value(t, z - e)) / (2 * h)
        dy = (term.value(t, z + 1j * e) - term.value(t, z - 1j * e)) / (2 * h)
        out[..., j] = dx + 1j * dy
    return out


def sample_loop(n_t=64):
    # a loop lying exactly on the zero level of the moment map
    ts = np.arange(n_t) / n_t
    x = np.zeros((n_t, 2), dtype=complex)
    x[:, 0] = np.sqrt(1.0 - 0.05 ** 2) * np.exp(0.25j * np.sin(2 * np.pi * ts))
    x[:, 1] = 0.05 * np.exp(2j * np.pi * ts)
    return x


def slice_term(big_k=2.0):
    return SliceMomentTerm(CP1, sample_loop(), big_k=big_k, r_cut=0.4)


def test_smoothstep_profile():
    assert smoothstep(-1.0) == 0.0
    assert smoothstep(2.0) == 1.0
    assert 0.0 < smoothstep(0.5) < 1.0


def test_linear_term_gradient_matches_fd():
    rng = np.random.default_rng(4)
    term = LinearInvariantTerm([1.0, -1.0], epsilon=0.1, cutoff=default_cutoff(CP1))
    for _ in range(8):
        z = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        z *= rng.uniform(0.5, 2.2)
        analytic = term.gradient(0.0, z)
        numeric = fd_gradient(term, 0.0, z)
        assert np.allclose(analytic, numeric, atol=2e-8)


def test_slice_term_gradient_matches_fd():
    rng = np.random.default_rng(7)
    term = slice_term()
    loop = sample_loop()
    for trial in range(10):
        t = float(rng.uniform(0, 1))
        base = loop[int(t * loop.shape[0]) % loop.shape[0]]
        z = base + 0.15 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
        analytic = term.gradient(t, z)
        numeric = fd_gradient(term, t, z)
        assert np.allclose(analytic, numeric, atol=5e-7)


def test_slice_term_invariant_under_action():
    rng = np.random.default_rng(8)
    term = slice_term()
    loop = sample_loop()
    for _ in range(6):
        z = loop[11] + 0.1 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
        v0 = term.value(0.37, z)
        for theta in rng.standard_normal(3):
            assert term.value(0.37, CP1.act([theta], z)) == pytest.approx(v0, abs=1e-12)


def test_slice_term_vanishes_on_zero_level_and_loop():
    term = slice_term()
    loop = sample_loop()
    ts = np.arange(loop.shape[0]) / loop.shape[0]
    # identically zero on the zero level of the moment map
    z_level = CP1.project_to_zero_level(np.array([0.9 + 0.1j, 0.6 - 0.3j]))
    assert term.value(0.2, z_level) == pytest.approx(0.0, abs=1e-14)
    # vanishes to first order along the loop: gradient is zero there
    grads = term.gradient(ts, loop)
    assert np.max(np.abs(grads)) < 1e-10


def test_compact_support():
    spec = height_hamiltonian(CP1, epsilon=0.1)
    far = np.array([3.0 + 0.1j, 2.5j])  # |z| beyond 2 sqrt(2 |tau|) = 2
    assert abs(spec.value(0.0, far)) == 0.0
    assert np.allclose(spec.field(0.0, far), 0.0)


def test_field_wirtinger_linearization():
    rng = np.random.default_rng(5)
    spec = height_hamiltonian(CP1, epsilon=0.1)
    z = np.array([0.8 + 0.2j, 0.4 - 0.5j])
    a, b = spec.field_wirtinger(0.0, z)
    for _ in range(5):
        dz = 1e-5 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
        direct = spec.field(0.0, z + dz) - spec.field(0.0, z)
        linear = a @ dz + b @ np.conj(dz)
        assert np.allclose(direct, linear, atol=1e-11)


def test_height_hamiltonian_descends_to_height():
    # on the zero level sum rho = 2 tau = 1, so H = eps (rho_1 - rho_2)
    spec = height_hamiltonian(CP1, epsilon=0.1)
    rng = np.random.default_rng(6)
    for _ in range(5):
        z = CP1.project_to_zero_level(rng.standard_normal(2)
                                      + 1j * rng.standard_normal(2))
        rho = np.abs(z) ** 2
        assert spec.value(0.0, z) == pytest.approx(0.1 * (rho[0] - rho[1]), abs=1e-12)
