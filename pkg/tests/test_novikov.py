"""Tests for the coefficient lattice and truncated formal sums."""

import numpy as np
import pytest

from vortexlab.errors import LatticeMismatch
from vortexlab.novikov import GammaLattice, NovikovElement, lattice_from_toric
from vortexlab.toric import ToricTarget

CP1 = ToricTarget(n=2, k=1, weights=((1, 1),), tau=(0.5,), name="cp1")


def minimal_coupling_pairing(target, gen_index, samples=4096):
    """Quadrature oracle for the area weight of a lattice generator.

    For the degree-one bundle with clutching loop theta(t) = 2*pi*t*e_a and
    the constant zero section, the minimal-coupling integral reduces to
    -mu(0) . (holonomy jump of the connection across the equator), and the
    jump equals the quadrature of theta'(t) around the loop.
    """
    ts = np.linspace(0.0, 1.0, samples + 1)
    theta = 2.0 * np.pi * ts[:, None] * np.eye(target.k)[gen_index]
    jump = np.trapezoid(np.gradient(theta, ts, axis=0), ts, axis=0)
    mu0 = target.moment_map(np.zeros(target.n, dtype=complex))
    return float(-mu0 @ jump)


def test_lattice_from_toric_weights():
    lat = lattice_from_toric(CP1)
    assert lat.rank == 1
    assert lat.c1_weight((1,)) == 2
    oracle = minimal_coupling_pairing(CP1, 0)
    assert oracle == pytest.approx(2 * np.pi * 0.5, rel=1e-12)
    assert lat.omega_weight((1,)) == pytest.approx(oracle, rel=1e-9)


def test_zero_class_has_zero_weights():
    lat = lattice_from_toric(CP1)
    assert lat.omega_weight((0,)) == 0.0
    assert lat.c1_weight((0,)) == 0


def test_weights_additive():
    lat = lattice_from_toric(CP1)
    assert lat.c1_weight((2,)) == 2 * lat.c1_weight((1,)) == 4
    assert lat.omega_weight((2,)) == pytest.approx(2 * lat.omega_weight((1,)))
    rng = np.random.default_rng(5)
    big = GammaLattice(rank=3, omega_gen=(0.3, -1.2, 2.0), c1_gen=(1, 0, -2))
    for _ in range(20):
        b1 = tuple(rng.integers(-4, 5, size=3))
        b2 = tuple(rng.integers(-4, 5, size=3))
        b12 = tuple(x + y for x, y in zip(b1, b2))
        assert big.omega_weight(b12) == pytest.approx(
            big.omega_weight(b1) + big.omega_weight(b2))
        assert big.c1_weight(b12) == big.c1_weight(b1) + big.c1_weight(b2)


def test_degree_shift():
    lat = lattice_from_toric(CP1)
    assert lat.degree_shift((0,), 7) == 7
    assert lat.degree_shift((1,), 1) == 1 - 4 == -3
    assert lat.degree_shift((-1,), 0) == 4


def test_multiply_identity_and_monomials():
    lat = lattice_from_toric(CP1)
    one = NovikovElement.unit(lat, window=50)
    el = NovikovElement(lat, {(-1,): 1, (0,): 1}, window=50)
    assert one * el == el
    qa = NovikovElement.monomial(lat, (2,), window=50)
    qb = NovikovElement.monomial(lat, (-3,), window=50)
    assert (qa * qb).terms == {(-1,): 1}


def test_difference_of_squares_by_hand():
    # (1 + q^{-e})(1 - q^{-e}) = 1 - q^{-2e}: direct convolution gives the
    # cross terms q^{-e} - q^{-e} which cancel over Z and over Z2.
    lat = lattice_from_toric(CP1)
    w = 2 * abs(lat.omega_weight((1,))) + 1
    for base in ("Z", "Z2"):
        a = NovikovElement(lat, {(0,): 1, (-1,): 1}, base=base, window=w)
        b = NovikovElement(lat, {(0,): 1, (-1,): -1}, base=base, window=w)
        prod = a * b
        assert not prod.truncated
        assert prod == NovikovElement(lat, {(0,): 1, (-2,): -1}, base=base, window=w)


def test_window_truncation_flag():
    lat = lattice_from_toric(CP1)
    w = 1.5 * abs(lat.omega_weight((1,)))
    a = NovikovElement(lat, {(0,): 1, (-1,): 1}, window=w)
    assert not a.truncated
    prod = a * a  # the q^{-2e} term falls below the window
    assert prod.truncated
    assert (0,) in prod.terms and (-2,) not in prod.terms


def test_finiteness_invariant_on_construction():
    lat = lattice_from_toric(CP1)
    el = NovikovElement(lat, {(-5,): 1, (1,): 1}, window=2.0)
    assert el.truncated
    assert all(lat.omega_weight(b) >= -2.0 for b in el.terms)


def test_ring_axioms_without_truncation():
    lat = lattice_from_toric(CP1)
    rng = np.random.default_rng(11)
    for _ in range(25):
        def rand_el():
            terms = {(int(b),): int(c) for b, c in
                     zip(rng.integers(-2, 3, 3), rng.integers(-3, 4, 3))}
            return NovikovElement(lat, terms, base="Z", window=100.0)
        a, b, c = rand_el(), rand_el(), rand_el()
        assert not ((a * b) * c).truncated
        assert (a * b) * c == a * (b * c)
        assert a * (b + c) == a * b + a * c


def test_lattice_mismatch_raises():
    lat = lattice_from_toric(CP1)
    other = GammaLattice(rank=1, omega_gen=(1.0,), c1_gen=(1,))
    a = NovikovElement.unit(lat)
    b = NovikovElement.unit(other)
    with pytest.raises(LatticeMismatch):
        a * b


def test_inverse_within_window():
    lat = lattice_from_toric(CP1)
    w = 4 * abs(lat.omega_weight((1,)))
    a = NovikovElement(lat, {(0,): 1, (-1,): 1}, base="Z2", window=w)
    inv = a.inverse()
    prod = a * inv
    assert prod.terms == {(0,): 1}
