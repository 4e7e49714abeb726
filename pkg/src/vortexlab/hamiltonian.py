"""Invariant Hamiltonians on toric targets.

A Hamiltonian is a sum of terms, each exposing a value and an analytic
Euclidean gradient (as a complex vector, so the Hamiltonian field is
i * gradient).  Terms built from the invariant coordinates rho_j = |z_j|^2
are exactly torus-invariant by construction; compact support is imposed by a
C^2 radial cutoff far outside the zero level of the moment map.

Field linearizations are returned as Wirtinger pairs (A, B) with
dY = A dz + B conj(dz); consumers assemble whatever real block form they
need from these.
"""

import numpy as np

from .errors import InvalidTarget


def smoothstep(x):
    """C^2 monotone step: 0 for x <= 0, 1 for x >= 1 (quintic)."""
    s = np.clip(x, 0.0, 1.0)
    return s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)


def smoothstep_d(x):
    s = np.clip(x, 0.0, 1.0)
    return 30.0 * s ** 2 * (1.0 - s) ** 2


class RadialCutoff:
    """Profile cut(sigma) of the total radius sigma = sum rho_j: identically
    1 inside sigma_on, 0 beyond sigma_off, C^2 in between."""

    def __init__(self, sigma_on, sigma_off):
        if sigma_off <= sigma_on:
            raise InvalidTarget("cutoff window is empty")
        self.sigma_on = float(sigma_on)
        self.sigma_off = float(sigma_off)

    def value(self, sigma):
        return 1.0 - smoothstep((sigma - self.sigma_on)
                                / (self.sigma_off - self.sigma_on))

    def derivative(self, sigma):
        return -smoothstep_d((sigma - self.sigma_on)
                             / (self.sigma_off - self.sigma_on)) \
            / (self.sigma_off - self.sigma_on)


def default_cutoff(target):
    """Support control at R_supp = 2 sqrt(2 |tau|): the profile is 1 on the
    region containing the zero level and all bounded dynamics."""
    scale = target.support_scale() ** 2  # = 2 |tau|
    return RadialCutoff(2.25 * scale, 4.0 * scale)


class LinearInvariantTerm:
    """H = epsilon * (sum_j c_j rho_j + c0) * cut(sigma)."""

    def __init__(self, coeffs, epsilon=1.0, offset=0.0, cutoff=None):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.epsilon = float(epsilon)
        self.offset = float(offset)
        self.cutoff = cutoff

    def value(self, t, z):
        rho = np.abs(z) ** 2
        core = rho @ self.coeffs + self.offset
        if self.cutoff is None:
            return self.epsilon * core
        return self.epsilon * core * self.cutoff.value(rho.sum(axis=-1))

    def gradient(self, t, z):
        rho = np.abs(z) ** 2
        if self.cutoff is None:
            return 2.0 * self.epsilon * self.coeffs * np.asarray(z)
        sigma = rho.sum(axis=-1)
        core = rho @ self.coeffs + self.offset
        cut = self.cutoff.value(sigma)
        dcut = self.cutoff.derivative(sigma)
        partials = self.coeffs * cut[..., None] + (core * dcut)[..., None]
        return 2.0 * self.epsilon * partials * np.asarray(z)


class SliceMomentTerm:
    """Symmetry-breaking term K * cut(q) * mu(z) * v(z, t) around one loop.

    Rank-1 torus actions only.  The displacement from the loop orbit is
    measured through the phase-normalized invariant monomials
    zeta_m = z_m (conj(z_q)/|z_q|)^{p_m} (q the marked coordinate,
    p_m = W_m / W_q an integer); v is the first displacement component read
    in a rotating frame, q the squared displacement over r_cut^2.  The moment
    factor makes the term vanish identically on the zero level, and the
    displacement factor makes it vanish to first order along the loop.
    """

    def __init__(self, target, loop_x, big_k, r_cut, frame_freq=1, marked=None):
        if target.k != 1:
            raise InvalidTarget("slice terms implemented for rank-1 actions")
        self.target = target
        self.big_k = float(big_k)
        self.r_cut = float(r_cut)
        self.frame_freq = int(frame_freq)
        loop_x = np.asarray(loop_x, dtype=complex)
        mags = np.abs(loop_x).min(axis=0)
        self.marked = int(np.argmax(mags)) if marked is None else int(marked)
        w = np.asarray(target.weights, dtype=float)[0]
        if abs(w[self.marked]) < 1e-12:
            raise InvalidTarget("marked coordinate has zero weight")
        powers = w / w[self.marked]
        if not np.allclose(powers, np.round(powers)):
            raise InvalidTarget("slice monomials need integer weight ratios")
        self.powers = np.round(powers).astype(int)
        self.others = [m for m in range(target.n) if m != self.marked]
        zeta_loop = self._zeta(loop_x)
        self._loop_spec = np.fft.fft(zeta_loop, axis=0) / loop_x.shape[0]

    # -- slice coordinates ---------------------------------------------

    def _zeta(self, z):
        zq = z[..., self.marked]
        unit = np.conj(zq) / np.abs(zq)
        return np.stack([z[..., m] * unit ** self.powers[m] for m in self.others],
                        axis=-1)

    def _zeta_wirtinger(self, z, zeta, idx):
        """(df/dz_m, df/dz_q, df/dzbar_q) for f = zeta[..., idx]."""
        m = self.others[idx]
        p = self.powers[m]
        zq = z[..., self.marked]
        f = zeta[..., idx]
        return f / z[..., m], -(p / 2.0) * f / zq, (p / 2.0) * f / np.conj(zq)

    def _loop_zeta_at(self, t):
        n = self._loop_spec.shape[0]
        freqs = np.fft.fftfreq(n, d=1.0 / n)
        phases = np.exp(2j * np.pi * np.multiply.outer(np.asarray(t, dtype=float),
                                                       freqs))
        return phases @ self._loop_spec

    def _frame(self, t):
        return np.exp(-2j * np.pi * self.frame_freq * np.asarray(t, dtype=float))

    # -- evaluation -------------------------------------------------------

    def value(self, t, z):
        z = np.asarray(z, dtype=complex)
        d = self._zeta(z) - self._loop_zeta_at(t)
        q = np.sum(np.abs(d) ** 2, axis=-1) / self.r_cut ** 2
        cut = 1.0 - smoothstep(q)
        mu = self.target.moment_map(z)[..., 0]
        v = np.real(self._frame(t) * d[..., 0])
        return self.big_k * cut * mu * v

    def gradient(self, t, z):
        z = np.asarray(z, dtype=complex)
        zeta = self._zeta(z)
        d = zeta - self._loop_zeta_at(t)
        q = np.sum(np.abs(d) ** 2, axis=-1) / self.r_cut ** 2
        cut = 1.0 - smoothstep(q)
        dcut_dq = -smoothstep_d(q)
        mu = self.target.moment_map(z)[..., 0]
        frame = self._frame(t)
        v = np.real(frame * d[..., 0])

        mark = self.marked
        # grad q = (1/r^2) sum_m grad |d_m|^2, with
        # grad_j F = 2 dF/d conj(z_j) for real F
        grad_q = np.zeros_like(z)
        for idx, m in enumerate(self.others):
            dz_m, dz_q, dzbar_q = self._zeta_wirtinger(z, zeta, idx)
            dm = d[..., idx]
            grad_q[..., m] += 2.0 * dm * np.conj(dz_m)
            grad_q[..., mark] += 2.0 * (np.conj(dm) * dzbar_q + dm * np.conj(dz_q))
        grad_q /= self.r_cut ** 2

        # grad v for v = Re(frame * d_0)
        dz_m, dz_q, dzbar_q = self._zeta_wirtinger(z, zeta, 0)
        grad_v = np.zeros_like(z)
        grad_v[..., self.others[0]] = np.conj(frame * dz_m)
        grad_v[..., mark] = frame * dzbar_q + np.conj(frame * dz_q)

        grad_mu = self.target.moment_gradient(z)[..., 0, :]

        return self.big_k * ((dcut_dq * mu * v)[..., None] * grad_q
                             + (cut * v)[..., None] * grad_mu
                             + (cut * mu)[..., None] * grad_v)


class HamiltonianSpec:
    """Sum of invariant terms with the field and linearization helpers the
    solvers need."""

    def __init__(self, target, terms=(), label=""):
        self.target = target
        self.terms = list(terms)
        self.label = label

    def value(self, t, z):
        z = np.asarray(z, dtype=complex)
        total = np.zeros(z.shape[:-1])
        for term in self.terms:
            total = total + term.value(t, z)
        return total

    def gradient(self, t, z):
        z = np.asarray(z, dtype=complex)
        total = np.zeros_like(z)
        for term in self.terms:
            total = total + term.gradient(t, z)
        return total

    def field(self, t, z):
        """Hamiltonian vector field Y(t, z) = i grad H."""
        return 1j * self.gradient(t, z)

    def field_wirtinger(self, t, z, step=1e-6):
        """Wirtinger pair (A, B) of the field: dY = A dz + B conj(dz).

        Central differences of the analytic field; shape (..., n, n)."""
        z = np.asarray(z, dtype=complex)
        n = z.shape[-1]
        a = np.zeros(z.shape + (n,), dtype=complex)
        b = np.zeros_like(a)
        for j in range(n):
            e = np.zeros(n)
            e[j] = step
            dx = (self.field(t, z + e) - self.field(t, z - e)) / (2 * step)
            dy = (self.field(t, z + 1j * e) - self.field(t, z - 1j * e)) / (2 * step)
            a[..., j] = 0.5 * (dx - 1j * dy)
            b[..., j] = 0.5 * (dx + 1j * dy)
        return a, b

    def with_terms(self, extra, label=None):
        return HamiltonianSpec(self.target, self.terms + list(extra),
                               label=label or self.label)


def zero_hamiltonian(target):
    return HamiltonianSpec(target, [], label="zero")


def height_hamiltonian(target, epsilon, coeffs=None):
    """Invariant lift of a height-style function on the quotient: for the
    standard projective-line instance this is epsilon * (rho_1 - rho_2)
    inside the support region."""
    if coeffs is None:
        coeffs = np.zeros(target.n)
        coeffs[0] = 1.0
        if target.n > 1:
            coeffs[1] = -1.0
    return HamiltonianSpec(
        target,
        [LinearInvariantTerm(coeffs, epsilon=epsilon, cutoff=default_cutoff(target))],
        label=f"height(eps={epsilon})")
