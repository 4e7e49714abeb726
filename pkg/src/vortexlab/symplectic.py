"""Symplectic path algebra and the Conley-Zehnder index.

A path is a sampled map A: [0,1] -> Sp(2n) with A(0) = I and nondegenerate
endpoint det(A(1) - I) != 0.  The index is the regularized crossing count of
the eigenvalue 1: the crossing form at time t is Q(v) = <v, S(t) v> on
ker(A(t) - I) with S(t) = -J A'(t) A(t)^{-1}; interior crossings contribute
their signature and the forced crossing at t = 0 contributes half of one.
With this convention a positive small rotation in Sp(2) has index 1 and a
path that is hyperbolic for t > 0 has index 0.
"""

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    NondegeneracyViolation,
    NotALoop,
    RefinementDiverged,
    SymmetryViolation,
)
from .linalg import (
    expm_batched,
    logm_batched,
    polar_unitary,
    standard_j,
    symplectic_defect,
    symplectic_project,
    unitary_to_complex,
)

TOL_SP = 1e-10          # symplecticity tolerance for matrix invariants
TOL_NONDEG = 1e-8       # endpoint nondegeneracy gate on |det(A(1) - I)|
MAX_REFINEMENTS = 8     # doublings allowed in the cz refinement loop
BISECT_TOL = 1e-12      # crossing localization tolerance in t
MIN_SAMPLES = 16


def check_symplectic_matrix(a, tol=TOL_SP):
    """Validate the symplectic matrix invariants; raise on failure."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] % 2:
        raise DimensionMismatch(f"expected an even square matrix, got {a.shape}")
    defect = symplectic_defect(a)
    if defect > tol:
        raise SymmetryViolation(f"A^T J A - J deviates by {defect:.3e} (tol {tol:.1e})")
    det = np.linalg.det(a)
    if abs(det - 1.0) > max(tol * 1e3, 1e-7):
        raise SymmetryViolation(f"det(A) = {det} differs from 1")
    return a


class SymplecticPath:
    """Uniformly sampled symplectic path with nondegenerate endpoint."""

    def __init__(self, samples, check=True, tol_sp=TOL_SP, tol_nondeg=TOL_NONDEG,
                 generator=None):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 3 or samples.shape[1] != samples.shape[2]:
            raise DimensionMismatch("samples must be a stack of square matrices")
        if samples.shape[0] < MIN_SAMPLES:
            raise DimensionMismatch(f"need at least {MIN_SAMPLES} samples")
        self.samples = samples
        self.dim = samples.shape[1]
        self.sample_count = samples.shape[0]
        self.generator = generator  # sampled S(t) when the path came from one
        self._segment_logs = None
        if check:
            self.validate(tol_sp=tol_sp, tol_nondeg=tol_nondeg)

    def validate(self, tol_sp=TOL_SP, tol_nondeg=TOL_NONDEG):
        j = standard_j(self.dim)
        defect = np.max(np.abs(np.swapaxes(self.samples, 1, 2) @ j @ self.samples - j))
        if defect > tol_sp:
            raise SymmetryViolation(f"sample symplecticity defect {defect:.3e}")
        if np.max(np.abs(self.samples[0] - np.eye(self.dim))) > 1e-8:
            raise NondegeneracyViolation("path does not start at the identity")
        end_det = abs(np.linalg.det(self.samples[-1] - np.eye(self.dim)))
        if end_det <= tol_nondeg:
            raise NondegeneracyViolation(
                f"|det(A(1) - I)| = {end_det:.3e} <= {tol_nondeg:.1e}")

    @property
    def times(self):
        return np.linspace(0.0, 1.0, self.sample_count)

    # -- evaluation between samples ------------------------------------

    def _logs(self):
        if self._segment_logs is None:
            steps = np.linalg.solve(self.samples[:-1], self.samples[1:])
            try:
                self._segment_logs = logm_batched(steps)
            except np.linalg.LinAlgError:
                self._segment_logs = np.array(
                    [np.real(scipy.linalg.logm(m)) for m in steps])
        return self._segment_logs

    def at(self, t):
        """Evaluate the path at arbitrary t in [0,1] by geodesic interpolation."""
        t = float(np.clip(t, 0.0, 1.0))
        h = 1.0 / (self.sample_count - 1)
        i = min(int(t / h), self.sample_count - 2)
        tau = (t - i * h) / h
        if tau < 1e-14:
            return self.samples[i]
        if tau > 1 - 1e-14:
            return self.samples[i + 1]
        return self.samples[i] @ expm_batched(tau * self._logs()[i])

    def refined(self, factor=2):
        """Path resampled at `factor` times the resolution (same endpoints)."""
        m = self.sample_count
        if self.generator is not None:
            ts = np.linspace(0.0, 1.0, m)
            fine_ts = np.linspace(0.0, 1.0, (m - 1) * factor + 1)
            gen = np.empty((fine_ts.size, self.dim, self.dim))
            for r in range(self.dim):
                for c in range(self.dim):
                    gen[:, r, c] = np.interp(fine_ts, ts, self.generator[:, r, c])
            return path_from_linearization(gen, resymplectify=False)
        midpoint_steps = expm_batched(self._logs() / factor)
        new_count = (m - 1) * factor + 1
        samples = np.empty((new_count, self.dim, self.dim))
        samples[::factor] = self.samples
        current = self.samples[:-1]
        for sub in range(1, factor):
            current = current @ midpoint_steps
            samples[sub::factor][: m - 1] = current
        return SymplecticPath(samples, check=False)


def conjugate_path(path, conjugators):
    """Pointwise conjugation B(t) A(t) B(t)^{-1}; preserves the index."""
    b = np.asarray(conjugators, dtype=float)
    if b.shape[-2:] != (path.dim, path.dim):
        raise DimensionMismatch(
            f"conjugator dimension {b.shape[-2:]} does not match path dim {path.dim}")
    if b.ndim == 2:
        b = np.broadcast_to(b, path.samples.shape).copy()
    if b.shape != path.samples.shape:
        raise DimensionMismatch(
            f"conjugator stack {b.shape} does not match path {path.samples.shape}")
    binv = np.linalg.inv(b)
    return SymplecticPath(b @ path.samples @ binv, check=False)


def path_from_linearization(generator_samples, resymplectify=True):
    """Integrate Psi'(t) = J S(t) Psi(t), Psi(0) = I from sampled symmetric S.

    Each step uses the exponential of the generator frozen at the segment
    midpoint; samples are projected back onto Sp(2n) afterwards.
    """
    s = np.asarray(generator_samples, dtype=float)
    if s.ndim != 3 or s.shape[1] != s.shape[2]:
        raise DimensionMismatch("generator samples must be a stack of square matrices")
    sym_defect = np.max(np.abs(s - np.swapaxes(s, 1, 2)))
    if sym_defect > 1e-9:
        raise SymmetryViolation(f"generator symmetry defect {sym_defect:.3e}")
    m = s.shape[0]
    j = standard_j(s.shape[1])
    dt = 1.0 / (m - 1)
    mid = 0.5 * (s[:-1] + s[1:])
    steps = expm_batched(dt * (j @ mid))
    samples = np.empty_like(s)
    samples[0] = np.eye(s.shape[1])
    for i in range(m - 1):
        samples[i + 1] = steps[i] @ samples[i]
    if resymplectify:
        defect = max(symplectic_defect(samples[i]) for i in (m // 2, m - 1))
        if defect > 1e-13:
            for i in range(1, m):
                samples[i] = symplectic_project(samples[i])
    return SymplecticPath(samples, check=False, generator=s)


def maslov_loop(loop_samples, tol=1e-8):
    """Maslov index of a loop at the identity via the winding of det of the
    unitary polar factor."""
    samples = np.asarray(loop_samples, dtype=float)
    if np.max(np.abs(samples[0] - samples[-1])) > tol:
        raise NotALoop("loop endpoints differ beyond tolerance")
    u = polar_unitary(samples)
    dets = np.linalg.det(unitary_to_complex(u))
    steps = np.angle(dets[1:] / dets[:-1])
    if np.max(np.abs(steps)) > 1.0:
        raise RefinementDiverged("loop sampled too coarsely for winding count")
    return int(np.round(np.sum(steps) / (2 * np.pi)))


# -- crossing machinery -------------------------------------------------


def _generator_at(path, t, h):
    """S(t) = -J Psi'(t) Psi(t)^{-1} by central differences of the path."""
    j = standard_j(path.dim)
    if t - h < 0:
        a0, a1, a2 = path.at(t), path.at(t + h), path.at(t + 2 * h)
        dpsi = (-3 * a0 + 4 * a1 - a2) / (2 * h)
        psi = a0
    elif t + h > 1:
        a0, a1, a2 = path.at(t), path.at(t - h), path.at(t - 2 * h)
        dpsi = (3 * a0 - 4 * a1 + a2) / (2 * h)
        psi = a0
    else:
        dpsi = (path.at(t + h) - path.at(t - h)) / (2 * h)
        psi = path.at(t)
    s = -j @ dpsi @ np.linalg.inv(psi)
    return 0.5 * (s + s.T)


def _signature(sym, reg):
    vals = np.linalg.eigvalsh(sym)
    return int(np.sum(vals > reg) - np.sum(vals < -reg))


def _crossing_signature(path, t, h, kernel_tol=1e-5, reg=1e-6):
    a = path.at(t)
    gap = a - np.eye(path.dim)
    u, sing, vt = np.linalg.svd(gap)
    scale = max(1.0, sing[0])
    kernel = vt[sing < kernel_tol * scale].T
    if kernel.shape[1] == 0:
        return 0
    s = _generator_at(path, t, h)
    q = kernel.T @ s @ kernel
    q = 0.5 * (q + q.T)
    return _signature(q, reg * max(1.0, np.max(np.abs(q))))


def _det_gap(path, t):
    return np.linalg.det(path.at(t) - np.eye(path.dim))


def _minimize_absdet(path, lo, hi, iters=80):
    """Golden-section minimization of |det(A(t) - I)| on [lo, hi]."""
    phi = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc, fd = abs(_det_gap(path, c)), abs(_det_gap(path, d))
    for _ in range(iters):
        if b - a < BISECT_TOL:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = abs(_det_gap(path, c))
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = abs(_det_gap(path, d))
    t = 0.5 * (a + b)
    return t, abs(_det_gap(path, t))


def _bisect_sign_change(path, lo, hi, flo):
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if hi - lo < BISECT_TOL:
            return mid
        fmid = _det_gap(path, mid)
        if fmid == 0.0:
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _crossings(path, zero_gate=1e-9):
    """Locate interior eigenvalue-1 crossings of a sampled path.

    Detects both sign changes of det(A(t) - I) and tangential zeros (local
    minima of the absolute value reaching zero), which occur for elliptic
    rotation-type paths.
    """
    ts = path.times
    dets = np.linalg.det(path.samples - np.eye(path.dim))
    scale = max(1.0, float(np.median(np.abs(dets))))
    found = []
    h = ts[1] - ts[0]
    # sign changes
    for i in range(len(ts) - 1):
        if dets[i] == 0.0 and ts[i] > 0:
            found.append(ts[i])
        elif np.sign(dets[i]) * np.sign(dets[i + 1]) < 0:
            found.append(_bisect_sign_change(path, ts[i], ts[i + 1], dets[i]))
    # tangential zeros at interior local minima of |det|; only minima already
    # well below the neighbouring scale can hide a zero of even order
    absd = np.abs(dets)
    for i in range(1, len(ts) - 1):
        if absd[i] <= absd[i - 1] and absd[i] <= absd[i + 1]:
            local = max(1.0, absd[i - 1], absd[i + 1])
            if absd[i] > 0.2 * local:
                continue
            t_min, f_min = _minimize_absdet(path, ts[i - 1], ts[i + 1])
            if f_min < zero_gate * local and t_min > 4 * h / 10:
                found.append(t_min)
    found.sort()
    merged = []
    for t in found:
        if t < 1e-10 or t > 1 - 1e-10:
            continue
        if merged and t - merged[-1] < 1e-8:
            continue
        merged.append(t)
    return merged, scale


def _cz_value(path):
    h = 0.25 / (path.sample_count - 1)
    s0 = _generator_at(path, 0.0, h)
    total = 0.5 * _signature(s0, 1e-6 * max(1.0, np.max(np.abs(s0))))
    crossings, _ = _crossings(path)
    for t in crossings:
        total += _crossing_signature(path, t, h)
    return total


def cz_index(path, max_refinements=MAX_REFINEMENTS):
    """Conley-Zehnder index by regularized crossing count with adaptive
    refinement: the resolution is doubled until two successive levels agree."""
    path.validate()
    prev = None
    current = path
    for _ in range(max_refinements + 1):
        value = _cz_value(current)
        if prev is not None and value == prev:
            if abs(value - round(value)) > 1e-9:
                raise RefinementDiverged(f"non-integer crossing count {value}")
            return int(round(value))
        prev = value
        current = current.refined(2)
    raise RefinementDiverged(
        f"crossing count did not stabilize within {max_refinements} doublings")
