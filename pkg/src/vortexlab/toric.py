"""Toric targets: C^n with a torus action, moment maps, capped loops, and the
gauged action functional.

Conventions (used everywhere in the package):

* omega(v, w) = Im <w, v> with the Hermitian pairing <v, w> = sum conj(v_j) w_j
  (so omega = -sum_j dx_j ^ dy_j); the metric is g = Re <., .>, and the
  compatible complex structure is J = -i (the unique choice with
  omega(J., .) = g).
* Hamiltonian vector fields satisfy iota_{Y_H} omega = dH, which gives
  Y_H = i * grad H with the Euclidean gradient written as a complex vector.
* The torus T^k acts by z_j -> exp(i (W^T theta)_j) z_j for theta in R^k
  (period 2*pi in each coordinate); the infinitesimal action is
  X_xi = i (W^T xi) z = Y_{mu . xi}, and d(mu . xi) = iota_{X_xi} omega.
* mu_a(z) = 1/2 sum_j W_aj |z_j|^2 - tau_a.

This is the unique sign package under which the loop equation
x' + X_f(x) - Y_H(x) = 0 is the critical-point equation of the action
functional below and the recapping shift of the action is the constant
area weight of the class (both facts are pinned by tests).

A capped loop stores the loop samples, the multiplier component, and an
abstract cap class relative to the radial-contraction reference cap; the two
weights of the class carry all of its effect on actions and gradings.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import HypothesisFailed, InvalidTarget, QuadratureDiverged
from .linalg import smith_normal_form


@dataclass(frozen=True)
class ToricTarget:
    """C^n with a rank-k torus action given by an integer weight matrix."""

    n: int
    k: int
    weights: tuple          # k rows of n integers
    tau: tuple              # k moment-shift values
    name: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.shape != (self.k, self.n):
            raise InvalidTarget(f"weight matrix shape {w.shape} != ({self.k}, {self.n})")
        if len(self.tau) != self.k:
            raise InvalidTarget("moment shift has wrong rank")
        if not np.all(w == np.round(w)):
            raise InvalidTarget("weights must be integers")

    @property
    def w(self):
        return np.asarray(self.weights, dtype=float)

    @property
    def tau_vec(self):
        return np.asarray(self.tau, dtype=float)

    def moment_map(self, z):
        """mu(z); batched over leading axes of z."""
        z = np.asarray(z)
        rho = np.abs(z) ** 2
        return 0.5 * rho @ self.w.T - self.tau_vec

    def moment_gradient(self, z):
        """Euclidean gradients of the k moment components as complex vectors:
        grad mu_a = W_aj z_j (shape (..., k, n))."""
        z = np.asarray(z)
        return self.w[..., :, :] * z[..., None, :]

    def infinitesimal_action(self, xi, z):
        """X_xi(z) = i (W^T xi) z."""
        z = np.asarray(z)
        angles = np.asarray(xi) @ self.w
        return 1j * angles * z

    def act(self, theta, z):
        """Torus action exp(i W^T theta) z."""
        z = np.asarray(z)
        return np.exp(1j * (np.asarray(theta) @ self.w)) * z

    def support_scale(self):
        """Radius scale sqrt(2 |tau|) of the zero level set."""
        return math.sqrt(2.0 * float(np.linalg.norm(self.tau_vec))) or 1.0

    def project_to_zero_level(self, z, iters=60):
        """Rescale z along torus-orbit directions onto mu^{-1}(0).

        Newton in the scaling exponents r: z_j -> exp((W^T r)_j / 2) z_j.
        Returns None when the orbit does not meet the zero level.
        """
        z = np.asarray(z, dtype=complex)
        rho = np.abs(z) ** 2
        if np.any(rho.sum() == 0):
            return None
        r = np.zeros(self.k)
        for _ in range(iters):
            scaled = rho * np.exp(self.w.T @ r)
            val = 0.5 * self.w @ scaled - self.tau_vec
            if np.max(np.abs(val)) < 1e-13:
                break
            jac = 0.5 * self.w @ (scaled[:, None] * self.w.T)
            try:
                step = np.linalg.solve(jac, val)
            except np.linalg.LinAlgError:
                return None
            step_norm = np.linalg.norm(step)
            if step_norm > 10:
                step *= 10 / step_norm
            r -= step
        else:
            return None
        return np.exp(0.5 * (self.w.T @ r)) * z


# ----------------------------------------------------------------------
# hypothesis checks


def _sample_zero_level(target, rng, count):
    samples = []
    tries = 0
    while len(samples) < count and tries < 20 * count:
        tries += 1
        z = rng.standard_normal(target.n) + 1j * rng.standard_normal(target.n)
        p = target.project_to_zero_level(z)
        if p is not None and np.max(np.abs(target.moment_map(p))) < 1e-10:
            samples.append(p)
    return samples


def check_hypotheses(target, rng=None, sweep=64, raise_on_fail=True):
    """Run the standing-assumption sweeps for a toric target.

    Clauses: properness of mu, regularity of the zero level, freeness of the
    action there, positive quotient dimension, and the flat convexity pair
    (f = |z|^2, J = i) outside the compact core.  Returns a report dict; when
    raise_on_fail is set the first violated clause raises HypothesisFailed.
    """
    rng = rng or np.random.default_rng(0)
    report = {"target": target.name, "clauses": {}}

    def record(clause, ok, detail):
        report["clauses"][clause] = {"pass": bool(ok), "detail": detail}
        if not ok and raise_on_fail:
            raise HypothesisFailed(clause, detail)

    # positive quotient dimension
    record("positive quotient dimension", target.n - target.k > 0,
           f"dim quotient = {2 * (target.n - target.k)}")

    # properness: some c in R^k has (c^T W)_j >= 1 for all j
    res = linprog(c=np.zeros(target.k), A_ub=-target.w.T,
                  b_ub=-np.ones(target.n), bounds=[(None, None)] * target.k,
                  method="highs")
    record("moment map proper", res.success,
           "positive combination of weight rows exists" if res.success
           else "no positive combination of weight rows; zero level unbounded")

    samples = _sample_zero_level(target, rng, sweep)
    record("zero level attained", len(samples) > 0,
           f"{len(samples)}/{sweep} orbit projections landed on the level set")

    # regular value: the k x k Gram of the moment differentials has full rank
    min_gram = np.inf
    for p in samples:
        gram = target.w @ (np.abs(p) ** 2 * target.w).T
        min_gram = min(min_gram, float(np.linalg.eigvalsh(gram)[0]))
    record("zero a regular value", min_gram > 1e-8,
           f"min Gram eigenvalue over sweep = {min_gram:.3e}")

    # free action: the integer weight matrix restricted to the support of a
    # sample must have unit elementary divisors
    free_ok, worst = True, None
    wi = np.asarray(target.weights, dtype=int)
    for p in samples:
        support = np.abs(p) > 1e-8
        sub = wi[:, support]
        div = smith_normal_form(sub)
        if len(div) < target.k or any(d != 1 for d in div):
            free_ok, worst = False, div
            break
    record("action free on zero level", free_ok,
           "unit elementary divisors on all sampled supports" if free_ok
           else f"stabilizer detected: divisors {worst}")

    # flat convex structure: f = |z|^2, J = i, checked outside the core.
    # Second-derivative clause holds identically (Hess f = 2 I); the radial
    # clause asks that the rotated moment field does not push f inward, which
    # for the flat model is the sign of 4 mu . (mu + tau).
    radius = target.support_scale() + 1.0
    worst_val = np.inf
    for _ in range(sweep):
        z = rng.standard_normal(target.n) + 1j * rng.standard_normal(target.n)
        z *= (radius + rng.uniform(0, 2.0)) / np.linalg.norm(z)
        mu = target.moment_map(z)
        worst_val = min(worst_val, float(4.0 * mu @ (mu + target.tau_vec)))
    record("flat convex structure", worst_val >= -1e-9,
           f"min radial monotonicity value = {worst_val:.3e} outside radius {radius:.2f}")

    report["pass"] = all(c["pass"] for c in report["clauses"].values())
    return report


# ----------------------------------------------------------------------
# capped loops and the action functional


@dataclass
class CappedLoop:
    """Loop (x, f) sampled at N_t uniform points of [0, 1) plus a cap class
    relative to the radial reference cap."""

    x: np.ndarray            # (N_t, n) complex
    f: np.ndarray            # (N_t, k) real
    cap_class: tuple = ()

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=complex)
        self.f = np.atleast_2d(np.asarray(self.f, dtype=float))
        if self.f.shape[0] != self.x.shape[0]:
            raise InvalidTarget("loop and multiplier sample counts differ")
        n_t = self.x.shape[0]
        if n_t < 64 or n_t % 2:
            raise InvalidTarget(f"need an even sample count >= 64, got {n_t}")
        self.cap_class = tuple(int(b) for b in self.cap_class)

    @property
    def sample_count(self):
        return self.x.shape[0]

    @property
    def times(self):
        return np.arange(self.sample_count) / self.sample_count

    def resampled(self, n_t):
        """Trigonometric resampling to n_t points (exact for band-limited loops)."""
        return CappedLoop(x=trig_resample(self.x, n_t),
                          f=trig_resample(self.f, n_t),
                          cap_class=self.cap_class)


def loop_derivative(values):
    """Spectral d/dt of periodic samples on [0,1) (Nyquist mode dropped)."""
    values = np.asarray(values)
    n = values.shape[0]
    freqs = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        freqs[n // 2] = 0.0
    spec = np.fft.fft(values, axis=0)
    return np.fft.ifft(2j * np.pi * freqs[:, None] * spec, axis=0)


def trig_resample(values, n_new):
    """Resample periodic samples by Fourier zero-padding/truncation."""
    values = np.asarray(values)
    n = values.shape[0]
    if n_new == n:
        return values.copy()
    spec = np.fft.fft(values, axis=0)
    out = np.zeros((n_new,) + values.shape[1:], dtype=complex)
    half = min(n, n_new) // 2
    out[:half] = spec[:half]
    out[-half:] = spec[-half:]
    result = np.fft.ifft(out, axis=0) * (n_new / n)
    return result if np.iscomplexobj(values) else result.real


def cap_omega_integral(x):
    """Integral of omega over the radial-contraction cap of the loop x.

    omega is exact on C^n, so this Stokes boundary integral is the value for
    every cap of x; in the package orientation it equals
    -1/2 integral Im <x, x'> dt."""
    dx = loop_derivative(x)
    integrand = np.sum(np.imag(np.conj(x) * dx), axis=1)
    return -0.5 * float(np.mean(integrand))


def action_functional(target, spec, loop, lattice=None, check_tol=1e-8):
    """Gauged action of a capped loop.

    Value = -(cap integral) + mean_t(mu(x) . f - H_t(x)) - area weight of the
    cap class.  The quadrature is spectral in t; stability is verified by
    doubling the sample count, and QuadratureDiverged is raised if the two
    values disagree beyond check_tol.
    """
    from .novikov import lattice_from_toric

    def evaluate(lp):
        cap = cap_omega_integral(lp.x)
        mu = target.moment_map(lp.x)
        pairing = np.sum(mu * lp.f, axis=1)
        ham = spec.value(lp.times, lp.x) if spec is not None else 0.0
        return -cap + float(np.mean(pairing - ham))

    value = evaluate(loop)
    refined = loop.resampled(2 * loop.sample_count)
    value_fine = evaluate(refined)
    if abs(value_fine - value) > check_tol * max(1.0, abs(value)):
        raise QuadratureDiverged(
            f"action quadrature unstable: {value} vs {value_fine}")
    if loop.cap_class:
        lattice = lattice or lattice_from_toric(target)
        value_fine -= lattice.omega_weight(loop.cap_class)
    return value_fine
