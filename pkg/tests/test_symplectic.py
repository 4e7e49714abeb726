"""Tests for the symplectic path algebra and the crossing-count index."""

import numpy as np
import pytest

from vortexlab.errors import (
    DimensionMismatch,
    NondegeneracyViolation,
    NotALoop,
    SymmetryViolation,
)
from vortexlab.linalg import direct_sum_matrix, expm_batched, standard_j
from vortexlab.symplectic import (
    SymplecticPath,
    conjugate_path,
    cz_index,
    maslov_loop,
    path_from_linearization,
)

# ----------------------------------------------------------------------
# builders


def rotation_path(rate, count=65):
    """Path t -> exp(2*pi*rate*J*t) in Sp(2)."""
    ts = np.linspace(0, 1, count)
    j = standard_j(2)
    return SymplecticPath(expm_batched(2 * np.pi * rate * ts[:, None, None] * j))


def gauge_block_generator():
    """The symmetric 4x4 generator S0 = [[0, I], [I, 0]] (1-dim blocks)."""
    s0 = np.zeros((4, 4))
    s0[:2, 2:] = np.eye(2)
    s0[2:, :2] = np.eye(2)
    return s0


def gauge_block_path(count=65):
    """t -> exp(J S0 t): the hyperbolic path diag(e^{-t}, e^{t}) blockwise."""
    ts = np.linspace(0, 1, count)
    gen = standard_j(4) @ gauge_block_generator()
    return SymplecticPath(expm_batched(ts[:, None, None] * gen))


def random_symplectic(rng, dim, scale=0.6):
    sym = rng.standard_normal((dim, dim))
    sym = 0.5 * (sym + sym.T) * scale
    return expm_batched(standard_j(dim) @ sym)


def random_nondegenerate_path(rng, dim, count=65):
    """Integrate a random low-frequency symmetric generator; redraw until the
    endpoint is safely nondegenerate."""
    ts = np.linspace(0, 1, count)
    for _ in range(50):
        coef = [0.5 * (m + m.T) for m in rng.standard_normal((3, dim, dim))]
        s = (coef[0][None] * 1.5
             + coef[1][None] * np.cos(2 * np.pi * ts)[:, None, None]
             + coef[2][None] * np.sin(2 * np.pi * ts)[:, None, None])
        path = path_from_linearization(s)
        if abs(np.linalg.det(path.samples[-1] - np.eye(dim))) > 1e-3:
            return path, s
    raise RuntimeError("could not draw a nondegenerate path")


def direct_sum_paths(pa, pb):
    assert pa.sample_count == pb.sample_count
    return SymplecticPath(direct_sum_matrix(pa.samples, pb.samples), check=False)


def rotation_loop(winding, dim=2, count=129, conjugator=None):
    ts = np.linspace(0, 1, count)
    gen = 2 * np.pi * winding * standard_j(dim)
    samples = expm_batched(ts[:, None, None] * gen)
    if conjugator is not None:
        samples = conjugator @ samples @ np.linalg.inv(conjugator)
    return samples


# ----------------------------------------------------------------------
# worked examples


def test_hyperbolic_gauge_block_has_index_zero():
    # exp(J S0 t) = diag(e^{-t}, e^{t}) blockwise: no unit-circle eigenvalue
    # for t > 0, hence index exactly 0.
    path = gauge_block_path()
    ev = np.linalg.eigvals(path.samples[-1])
    assert np.max(np.abs(np.abs(ev) - 1)) > 0.5
    assert cz_index(path) == 0


def test_small_positive_rotation_has_index_one():
    # Symbolic oracle: the only crossing is at t = 0 where the crossing form
    # is 2*pi*0.1*I (positive definite, signature 2), contributing 2 * (1/2).
    assert cz_index(rotation_path(0.1)) == 1


def test_direct_sum_of_examples():
    total = direct_sum_paths(gauge_block_path(), rotation_path(0.1))
    assert cz_index(total) == 0 + 1


def test_negative_rotation_has_index_minus_one():
    assert cz_index(rotation_path(-0.1)) == -1


def test_multi_turn_rotation_counts_interior_crossings():
    # Oracle: index of a rotation of total angle 2*pi*a is 2*floor(a) + 1.
    assert cz_index(rotation_path(1.5, count=129)) == 3
    assert cz_index(rotation_path(2.25, count=129)) == 5


# ----------------------------------------------------------------------
# maslov loops


def test_constant_identity_loop():
    loop = np.broadcast_to(np.eye(2), (64, 2, 2))
    assert maslov_loop(loop) == 0


def test_rotation_loop_winding_oracle():
    # Independent oracle: accumulate the phase of det of the unitary part
    # directly (here the loop is itself unitary, det = e^{2*pi*i*t}).
    samples = rotation_loop(1)
    dets = samples[:, 0, 0] + 1j * samples[:, 1, 0]
    accumulated = np.sum(np.angle(dets[1:] / dets[:-1])) / (2 * np.pi)
    assert round(accumulated) == 1
    assert maslov_loop(samples) == 1


def test_loop_concatenation_doubles_index():
    one = rotation_loop(1)
    doubled = np.concatenate([one[:-1], one])
    assert maslov_loop(doubled) == 2 * maslov_loop(one)


def test_not_a_loop_raises():
    path = rotation_path(0.1)
    with pytest.raises(NotALoop):
        maslov_loop(path.samples)


# ----------------------------------------------------------------------
# conjugation


def test_conjugation_by_identity_is_noop():
    path = rotation_path(0.1)
    out = conjugate_path(path, np.eye(2))
    assert np.allclose(out.samples, path.samples)


def test_conjugation_by_constant_rotation_preserves_index():
    rng = np.random.default_rng(7)
    path = rotation_path(0.1)
    b = random_symplectic(rng, 2)
    assert cz_index(conjugate_path(path, b)) == 1


def test_conjugation_by_varying_path_preserves_index():
    rng = np.random.default_rng(11)
    path = gauge_block_path()
    ts = path.times
    base = 0.3 * standard_j(4) @ np.diag([1.0, 2.0, 1.0, 2.0])
    conj = expm_batched(np.sin(np.pi * ts)[:, None, None] * base)
    assert cz_index(conjugate_path(path, conj)) == 0


def test_conjugation_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        conjugate_path(rotation_path(0.1), np.eye(4))


# ----------------------------------------------------------------------
# path_from_linearization


def test_zero_generator_gives_identity_path():
    s = np.zeros((33, 2, 2))
    path = path_from_linearization(s)
    assert np.allclose(path.samples, np.eye(2), atol=1e-13)


def test_gauge_block_generator_integration():
    s = np.broadcast_to(gauge_block_generator(), (65, 4, 4))
    path = path_from_linearization(s)
    exact = gauge_block_path().samples
    assert np.max(np.abs(path.samples - exact)) < 1e-9
    assert cz_index(path) == 0


def test_constant_rotation_generator_closed_form():
    rate = 0.1
    s = np.broadcast_to(2 * np.pi * rate * np.eye(2), (65, 2, 2))
    path = path_from_linearization(s)
    exact = rotation_path(rate).samples
    assert np.max(np.abs(path.samples - exact)) < 1e-10


def test_generator_symmetry_enforced():
    s = np.zeros((33, 2, 2))
    s[:, 0, 1] = 1.0  # not symmetric
    with pytest.raises(SymmetryViolation):
        path_from_linearization(s)


def test_output_samples_are_symplectic():
    rng = np.random.default_rng(3)
    path, _ = random_nondegenerate_path(rng, 4)
    j = standard_j(4)
    defect = np.max(np.abs(np.swapaxes(path.samples, 1, 2) @ j @ path.samples - j))
    assert defect < 1e-10


# ----------------------------------------------------------------------
# invariants


def test_endpoint_nondegeneracy_enforced():
    loop = rotation_loop(1, count=65)
    with pytest.raises(NondegeneracyViolation):
        cz_index(SymplecticPath(loop, check=False))


def test_index_stable_under_refinement():
    path = rotation_path(1.5, count=129)
    value = cz_index(path)
    assert cz_index(path.refined(2)) == value


@pytest.mark.parametrize("dim", [2, 4])
def test_axiom_suite_randomized(dim):
    rng = np.random.default_rng(100 + dim)
    for trial in range(12):
        path, s = random_nondegenerate_path(rng, dim)
        value = cz_index(path)

        # conjugation invariance
        b = random_symplectic(rng, dim)
        assert cz_index(conjugate_path(path, b)) == value

        # homotopy invariance: perturb the generator by a bump vanishing at
        # the endpoints, redrawing if the endpoint walks too close to
        # degeneracy along the way
        bump = rng.standard_normal((dim, dim))
        bump = 0.5 * (bump + bump.T)
        ts = np.linspace(0, 1, s.shape[0])
        profile = (np.sin(np.pi * ts) ** 2)[:, None, None]
        end_gap = abs(np.linalg.det(path.samples[-1] - np.eye(dim)))
        perturbed = path_from_linearization(s + 0.05 * profile * bump)
        new_gap = abs(np.linalg.det(perturbed.samples[-1] - np.eye(dim)))
        if new_gap > 0.2 * end_gap:
            assert cz_index(perturbed) == value

        # direct-sum additivity against a reference block
        other = rotation_path(0.1, count=path.sample_count)
        assert cz_index(direct_sum_paths(path, other)) == value + 1

        # loop shift by twice the Maslov index
        w = int(rng.integers(-2, 3))
        conj = random_symplectic(rng, dim)
        fine = path.refined(4)
        loop = rotation_loop(w, dim=dim, count=fine.sample_count, conjugator=conj)
        mu = maslov_loop(loop)
        assert mu == w * (dim // 2)
        shifted = SymplecticPath(loop @ fine.samples, check=False)
        assert cz_index(shifted) == value + 2 * mu


def test_hyperbolic_vanishing_randomized():
    rng = np.random.default_rng(42)
    s0 = gauge_block_generator()
    for _ in range(8):
        b = random_symplectic(rng, 4)
        scale = float(rng.uniform(0.3, 2.0))
        gen = scale * np.linalg.inv(b) @ (standard_j(4) @ s0) @ b
        ts = np.linspace(0, 1, 65)
        samples = expm_batched(ts[:, None, None] * gen)
        path = SymplecticPath(samples)
        ev = np.linalg.eigvals(samples[-1])
        assert np.max(np.abs(np.abs(ev) - 1)) > 1e-3
        assert cz_index(path) == 0
