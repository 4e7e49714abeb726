"""Finite-dimensional constrained Morse oracle.

For a constraint mu: R^N -> R with regular zero level and a function f whose
restriction to the level set is Morse, the multiplier function
F(x, eta) = f(x) + eta mu(x) on R^{N+1} has the same critical points, with
ambient index one above the constrained index.  This module builds the
signed Morse-Smale-Witten complex of F over the integers by shooting the
negative gradient flow from unstable spheres, and checks it against the
constrained picture.

The eta-direction of the metric can be scaled by 1/lambda^2, which turns the
flow into (x', eta') = (-grad_x F, -lambda^2 mu); large lambda pins the flow
to the constraint level set.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCritical, NonConvergentFlow
from .linalg import smith_normal_form

ARRIVAL_RADIUS = 1e-3
GRAD_TOL = 1e-12
DEGENERACY_TOL = 1e-8

# Default eta-metric scale for flow-line counting.  The multiplier direction
# carries a transverse saddle whose connecting lines can die in mirror pairs
# as the scale shrinks (they do on the circle model near 1.41); at scale 2
# every shipped model realizes the constrained-picture counts.
DEFAULT_METRIC_SCALE = 2.0


@dataclass
class FiniteModel:
    """Ambient constraint/function pair with analytic derivatives."""

    name: str
    dim: int
    f: callable
    grad_f: callable
    hess_f: callable
    mu: callable
    grad_mu: callable
    hess_mu: callable
    box_radius: float = 2.5
    eta_radius: float = 3.0

    # -- multiplier function on R^{N+1} ---------------------------------

    def grad_big(self, state, lam=1.0):
        """Metric gradient of F at state = (x, eta); eta-block scaled by lambda^2."""
        x, eta = state[..., :-1], state[..., -1]
        gx = self.grad_f(x) + eta[..., None] * self.grad_mu(x)
        ge = lam ** 2 * self.mu(x)
        return np.concatenate([gx, ge[..., None]], axis=-1)

    def hess_big(self, state, lam=1.0):
        x, eta = state[..., :-1], state[..., -1]
        n = self.dim
        shape = state.shape[:-1]
        h = np.zeros(shape + (n + 1, n + 1))
        h[..., :n, :n] = self.hess_f(x) + eta[..., None, None] * self.hess_mu(x)
        gmu = self.grad_mu(x)
        h[..., :n, n] = gmu
        h[..., n, :n] = lam ** 2 * gmu
        return h

    def check_regular_level(self, rng=None, sweep=200, tol=1e-6):
        """|grad mu| bounded below on a sample sweep of the zero level."""
        rng = rng or np.random.default_rng(0)
        worst = np.inf
        found = 0
        for _ in range(sweep):
            x = self.box_radius * rng.uniform(-1, 1, self.dim)
            x = self._project_level(x)
            if x is None:
                continue
            found += 1
            worst = min(worst, float(np.linalg.norm(self.grad_mu(x))))
        if found == 0 or worst <= tol:
            raise DegenerateCritical(
                f"constraint not regular on sweep (min |grad mu| = {worst})")
        return worst

    def _project_level(self, x, iters=60):
        for _ in range(iters):
            v = self.mu(x)
            if abs(v) < 1e-12:
                return x
            g = self.grad_mu(x)
            ng = g @ g
            if ng < 1e-12:
                return None
            x = x - (v / ng) * g
        return None


@dataclass
class CriticalPoint:
    x: np.ndarray
    eta: float
    index: int
    constrained_index: int
    hessian: np.ndarray
    value: float

    @property
    def state(self):
        return np.concatenate([self.x, [self.eta]])

    def unstable_frame(self, lam=1.0):
        """Ordered orientation frame of the unstable subspace of the scaled
        flow linearization (eigenvalue-ascending, QR with positive diagonal
        so the orientation is the eigenvector-order convention)."""
        d = np.ones(len(self.x) + 1)
        d[-1] = lam
        sym = d[:, None] * self.hessian * d[None, :]
        vals, vecs = np.linalg.eigh(sym)
        frame = d[:, None] * vecs[:, vals < 0]
        if frame.shape[1] == 0:
            return frame, vals
        q, r = np.linalg.qr(frame)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        return q * signs[None, :], vals


# ----------------------------------------------------------------------
# shipped models


def circle_model():
    return FiniteModel(
        name="circle", dim=2,
        f=lambda x: x[..., 1],
        grad_f=lambda x: np.stack([np.zeros(x.shape[:-1]),
                                   np.ones(x.shape[:-1])], axis=-1),
        hess_f=lambda x: np.zeros(x.shape[:-1] + (2, 2)),
        mu=lambda x: 0.5 * (np.sum(x ** 2, axis=-1) - 1.0),
        grad_mu=lambda x: x.copy(),
        hess_mu=lambda x: np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy(),
    )


def sphere_model():
    return FiniteModel(
        name="sphere", dim=3,
        f=lambda x: x[..., 2],
        grad_f=lambda x: np.stack([np.zeros(x.shape[:-1]),
                                   np.zeros(x.shape[:-1]),
                                   np.ones(x.shape[:-1])], axis=-1),
        hess_f=lambda x: np.zeros(x.shape[:-1] + (3, 3)),
        mu=lambda x: 0.5 * (np.sum(x ** 2, axis=-1) - 1.0),
        grad_mu=lambda x: x.copy(),
        hess_mu=lambda x: np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3)).copy(),
    )


def torus_model(tilt=0.25):
    """Ring of radius 2 around the z-axis, tube radius 1; the height is
    tilted so the four critical points are Morse-Smale."""

    def rho(x):
        return np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2)

    def mu(x):
        return 0.5 * ((rho(x) - 2.0) ** 2 + x[..., 2] ** 2 - 1.0)

    def grad_mu(x):
        r = rho(x)
        fac = (r - 2.0) / r
        return np.stack([fac * x[..., 0], fac * x[..., 1], x[..., 2]], axis=-1)

    def hess_mu(x):
        r = rho(x)
        out = np.zeros(x.shape[:-1] + (3, 3))
        xx, yy = x[..., 0], x[..., 1]
        out[..., 0, 0] = 1.0 - 2.0 / r + 2.0 * xx ** 2 / r ** 3
        out[..., 1, 1] = 1.0 - 2.0 / r + 2.0 * yy ** 2 / r ** 3
        out[..., 0, 1] = out[..., 1, 0] = 2.0 * xx * yy / r ** 3
        out[..., 2, 2] = 1.0
        return out

    direction = np.array([1.0, 0.0, tilt])
    return FiniteModel(
        name="torus", dim=3,
        f=lambda x: x @ direction,
        grad_f=lambda x: np.broadcast_to(direction, x.shape).copy(),
        hess_f=lambda x: np.zeros(x.shape[:-1] + (3, 3)),
        mu=mu, grad_mu=grad_mu, hess_mu=hess_mu,
        box_radius=3.5,
    )


MODELS = {"circle": circle_model, "sphere": sphere_model, "torus": torus_model}


# ----------------------------------------------------------------------
# critical points


def critical_points(model, rng=None, starts=200, seeds=()):
    """Multistart Newton on grad F; returns points sorted by value.

    Each point records the ambient Morse index, the constrained index of the
    restriction (computed from the projected Hessian), and the ambient
    Hessian; any near-singular Hessian raises DegenerateCritical.  Explicit
    seed states are polished before the random starts.
    """
    rng = rng or np.random.default_rng(0)
    model.check_regular_level(rng=rng)
    found = []
    random_starts = [np.concatenate([
        model.box_radius * rng.uniform(-1, 1, model.dim),
        [model.eta_radius * rng.uniform(-1, 1)],
    ]) for _ in range(starts)]
    for state in [np.asarray(s, dtype=float) for s in seeds] + random_starts:
        state = _newton(model, state)
        if state is None:
            continue
        if any(np.linalg.norm(state - s) < 1e-6 for s in found):
            continue
        found.append(state)

    points = []
    for state in found:
        x, eta = state[:-1], float(state[-1])
        hess = model.hess_big(state)
        vals = np.linalg.eigvalsh(hess)
        if np.min(np.abs(vals)) < DEGENERACY_TOL:
            raise DegenerateCritical(
                f"critical point {state} has near-zero Hessian eigenvalue")
        index = int(np.sum(vals < 0))
        gmu = model.grad_mu(x)
        tangent = _null_complement(gmu)
        hc = tangent.T @ (model.hess_f(x) + eta * model.hess_mu(x)) @ tangent
        cvals = np.linalg.eigvalsh(hc)
        if np.min(np.abs(cvals)) < DEGENERACY_TOL:
            raise DegenerateCritical(
                f"constrained Hessian degenerate at {x}")
        cindex = int(np.sum(cvals < 0))
        if index != cindex + 1:
            raise DegenerateCritical(
                f"index shift violated at {x}: ambient {index}, constrained {cindex}")
        points.append(CriticalPoint(x=x, eta=eta, index=index,
                                    constrained_index=cindex, hessian=hess,
                                    value=float(model.f(x))))
    points.sort(key=lambda p: (p.index, p.value, tuple(np.round(p.state, 6))))
    return points


def _newton(model, state, iters=80):
    for _ in range(iters):
        g = model.grad_big(state)
        gn = np.linalg.norm(g)
        if gn < GRAD_TOL:
            return state
        h = model.hess_big(state)
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(h, g, rcond=None)
        norm = np.linalg.norm(step)
        if norm > 1.0:
            step /= norm
        state = state - step
        if np.linalg.norm(state) > 10 * (model.box_radius + model.eta_radius):
            return None
    return None


def _null_complement(gmu):
    """Orthonormal basis of the tangent space of the level set."""
    n = len(gmu)
    q, _ = np.linalg.qr(np.column_stack([gmu / np.linalg.norm(gmu),
                                         np.eye(n)]))
    return q[:, 1:n]


def smallest_positive_curvature(points):
    vals = []
    for p in points:
        ev = np.abs(np.linalg.eigvalsh(p.hessian))
        vals.append(np.min(ev))
    return float(min(vals))


# ----------------------------------------------------------------------
# flow lines


@dataclass
class FlowLine:
    direction: np.ndarray
    sign: int
    miss: float
    mu_max: float


def _metric_scale(model, lam):
    scale = np.ones(model.dim + 1)
    scale[-1] = lam
    return scale


def _flow_batch(model, states, lam, dt):
    """One RK4 step of the scaled negative gradient flow (batched)."""

    def vel(s):
        g = model.grad_big(s, lam=lam)
        return -g

    k1 = vel(states)
    k2 = vel(states + 0.5 * dt * k1)
    k3 = vel(states + 0.5 * dt * k2)
    k4 = vel(states + dt * k3)
    return states + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _sphere_directions(k, n_dirs, rng):
    if k == 1:
        return np.array([[1.0], [-1.0]])
    if k == 2:
        angles = 2 * np.pi * np.arange(n_dirs) / n_dirs
        return np.column_stack([np.cos(angles), np.sin(angles)])
    # Fibonacci sphere for k = 3
    i = np.arange(n_dirs) + 0.5
    phi = np.arccos(1 - 2 * i / n_dirs)
    golden = np.pi * (1 + np.sqrt(5))
    theta = golden * i
    return np.column_stack([np.cos(theta) * np.sin(phi),
                            np.sin(theta) * np.sin(phi), np.cos(phi)])


def _flow_unstable_frame(model, point, lam, sign_dir):
    """Orientation frame of the expanding directions of sign_dir * flow."""
    d = np.ones(model.dim + 1)
    d[-1] = lam
    sym = sign_dir * (d[:, None] * point.hessian * d[None, :])
    vals, vecs = np.linalg.eigh(sym)
    frame = d[:, None] * vecs[:, vals < 0]
    if frame.shape[1] == 0:
        return frame
    qq, rr = np.linalg.qr(frame)
    signs = np.sign(np.diag(rr))
    signs[signs == 0] = 1.0
    return qq * signs[None, :]


def flow_value(model, state):
    """Multiplier function F = f + eta mu at a state."""
    x, eta = state[..., :-1], state[..., -1]
    return model.f(x) + eta * model.mu(x)


def slaved_multiplier(model, x):
    """Least-squares multiplier eta*(x) = -(grad f . grad mu)/|grad mu|^2."""
    gf, gm = model.grad_f(x), model.grad_mu(x)
    return -np.sum(gf * gm, axis=-1) / np.sum(gm * gm, axis=-1)


# -- constrained flow on the level set (used to seed ambient lines) ------


def _project_level_batch(model, x, iters=4):
    for _ in range(iters):
        v = model.mu(x)
        g = model.grad_mu(x)
        x = x - (v / np.sum(g * g, axis=-1))[..., None] * g
    return x


def _constrained_velocity(model, x):
    gf = model.grad_f(x)
    gm = model.grad_mu(x)
    coef = np.sum(gf * gm, axis=-1) / np.sum(gm * gm, axis=-1)
    return -(gf - coef[..., None] * gm)


def _constrained_flow(model, x, dt, steps, record=False):
    path = [x.copy()] if record else None
    for _ in range(steps):
        k1 = _constrained_velocity(model, x)
        k2 = _constrained_velocity(model, x + 0.5 * dt * k1)
        k3 = _constrained_velocity(model, x + 0.5 * dt * k2)
        k4 = _constrained_velocity(model, x + dt * k3)
        x = _project_level_batch(model, x + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4))
        if record:
            path.append(x.copy())
    return (x, np.array(path)) if record else x


def _constrained_frame(model, point):
    """Orthonormal frame of the constrained-unstable directions at a
    critical point (tangent eigenvectors with negative eigenvalue)."""
    basis = _null_complement(model.grad_mu(point.x))
    hc = basis.T @ (model.hess_f(point.x)
                    + point.eta * model.hess_mu(point.x)) @ basis
    vals, vecs = np.linalg.eigh(hc)
    return basis @ vecs[:, vals < 0]


def constrained_portrait(model, p, points, dt=2e-2, t_max=120.0,
                         n_dirs=180, offset=1e-3, bisect_t_max=50.0,
                         bisect_iters=22):
    """All constrained flow lines out of p, grouped by their target point.

    The constrained picture has no transverse multiplier saddle, so direct
    shooting works: for one unstable direction the two rays are themselves
    the lines; for two, rays generically reach a minimum and the separatrix
    directions into saddles are bisected (in a single batch) as flips of the
    approach-side label at the minimum.  Returns {point index: [paths]}.
    """
    frame = _constrained_frame(model, p)
    k = frame.shape[1]
    steps = int(t_max / dt)
    pts_x = np.array([r.x for r in points])

    tangent_frames = []
    for r in points:
        basis = _null_complement(model.grad_mu(r.x))
        hc = basis.T @ (model.hess_f(r.x) + r.eta * model.hess_mu(r.x)) @ basis
        vals, vecs = np.linalg.eigh(hc)
        order = np.argsort(np.abs(vals))
        tangent_frames.append(basis @ vecs[:, order])

    def sweep_labels(starts, horizon=None):
        """Batched terminal labels (settle point, approach side)."""
        x = _project_level_batch(model, np.array(starts, dtype=float))
        n = x.shape[0]
        labels = [None] * n
        sides = np.zeros(n, dtype=int)
        alive = np.ones(n, dtype=bool)
        idx_all = np.arange(n)
        for _ in range(int(horizon / dt) if horizon else steps):
            live = idx_all[alive]
            if live.size == 0:
                break
            x[live] = _constrained_flow(model, x[live], dt, 1)
            d = np.linalg.norm(x[live][:, None, :] - pts_x[None, :, :], axis=2)
            nearest = np.argmin(d, axis=1)
            dmin = d[np.arange(live.size), nearest]
            entering = (dmin < 0.2) & (sides[live] == 0)
            for pos in np.where(entering)[0]:
                ray = live[pos]
                fr = tangent_frames[int(nearest[pos])]
                d_vec = x[ray] - pts_x[nearest[pos]]
                ang = np.arctan2(d_vec @ fr[:, 1], d_vec @ fr[:, 0])
                # 1-based entry sector (0 still means "not recorded")
                sides[ray] = 1 + int((ang + np.pi) / (2 * np.pi) * 8) % 8
            speed = np.linalg.norm(_constrained_velocity(model, x[live]), axis=1)
            for pos in np.where(speed < 1e-8)[0]:
                ray = live[pos]
                labels[ray] = ("pt", int(nearest[pos]), int(sides[ray]))
                alive[ray] = False
        for ray in range(n):
            if labels[ray] is None:
                labels[ray] = ("timeout",)
        return labels

    def trace(x0):
        x = _project_level_batch(model, np.asarray(x0, dtype=float)[None, :])[0]
        path = [x.copy()]
        for _ in range(steps):
            x = _constrained_flow(model, x[None, :], dt, 1)[0]
            path.append(x.copy())
            if np.linalg.norm(_constrained_velocity(model, x[None, :])) < 1e-9:
                break
        return np.array(path)

    def assign(path, gate=5e-3):
        """Clip the path where it first passes a critical point (separatrix
        rays graze their saddle and then settle elsewhere, so the earliest
        gate entry wins, not the globally closest approach)."""
        d_all = np.linalg.norm(path[:, None, :] - pts_x[None, :, :], axis=2)
        d_all[:, [i for i, r in enumerate(points) if r is p]] = np.inf
        inside = np.where(np.min(d_all, axis=1) < gate)[0]
        if inside.size == 0:
            return None
        first = inside[0]
        idx = int(np.argmin(d_all[first]))
        # walk to the local minimum of the distance to that point
        k_min = first
        while k_min + 1 < len(path) and d_all[k_min + 1, idx] <= d_all[k_min, idx]:
            k_min += 1
        return idx, path[: k_min + 1]

    out = {}

    def push(idx, path):
        out.setdefault(idx, []).append(path)

    if k == 1:
        for sgn in (1.0, -1.0):
            hit = assign(trace(p.x + sgn * offset * frame[:, 0]))
            if hit:
                push(*hit)
        return out
    if k != 2:
        raise NonConvergentFlow("constrained unstable spheres above S^1 unsupported")

    angles = 2 * np.pi * np.arange(n_dirs) / n_dirs
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    labels = sweep_labels(p.x[None, :] + offset * dirs @ frame.T)

    lo_list, hi_list, lo_labels = [], [], []
    for i in range(n_dirs):
        j = (i + 1) % n_dirs
        if labels[i] != labels[j]:
            lo_list.append(angles[i])
            hi_list.append(angles[i] + 2 * np.pi / n_dirs)
            lo_labels.append(labels[i])
    lo = np.array(lo_list)
    hi = np.array(hi_list)
    for _ in range(bisect_iters):
        mid = 0.5 * (lo + hi)
        starts = p.x[None, :] + offset * np.column_stack(
            [np.cos(mid), np.sin(mid)]) @ frame.T
        mids = sweep_labels(starts, horizon=bisect_t_max)
        for b in range(len(lo)):
            if mids[b] == lo_labels[b]:
                lo[b] = mid[b]
            else:
                hi[b] = mid[b]
    for b in range(len(lo)):
        ang = 0.5 * (lo[b] + hi[b])
        hit = assign(trace(p.x + offset * (frame @ np.array([np.cos(ang),
                                                             np.sin(ang)]))))
        if hit:
            push(*hit)
    return out


def constrained_flow_lines(model, p, q, points, **kw):
    """Constrained lines from p that end at q (see constrained_portrait)."""
    portrait = constrained_portrait(model, p, points, **kw)
    for idx, r in enumerate(points):
        if r is q:
            return portrait.get(idx, [])
    return []


def backward_constrained_seeds(model, p, q, dt=2e-2, t_max=120.0, offset=1e-3):
    """Constrained p-to-q paths found by shooting backward from q.

    Complements the forward portrait: a line that threads a neighbourhood of
    another saddle is invisible to forward fate labels, but the backward
    trace from q along its stable tangent directions climbs straight back to
    p.  Only run when the stable tangent at q is one-dimensional.
    """
    basis = _null_complement(model.grad_mu(q.x))
    hc = basis.T @ (model.hess_f(q.x) + q.eta * model.hess_mu(q.x)) @ basis
    vals, vecs = np.linalg.eigh(hc)
    stable = basis @ vecs[:, vals > 0]
    if stable.shape[1] != 1:
        return []
    steps = int(t_max / dt)
    out = []
    for sgn in (1.0, -1.0):
        x = _project_level_batch(
            model, (q.x + sgn * offset * stable[:, 0])[None, :])[0]
        path = [x.copy()]
        for _ in range(steps):
            x = _constrained_flow(model, x[None, :], -dt, 1)[0]
            path.append(x.copy())
            if np.linalg.norm(_constrained_velocity(model, x[None, :])) < 1e-9:
                break
        path = np.array(path)
        d_to_p = np.linalg.norm(path - p.x, axis=1)
        k_min = int(np.argmin(d_to_p))
        if d_to_p[k_min] < 5e-3:
            out.append(path[: k_min + 1][::-1])
    return out


# -- ambient connecting lines by collocation -----------------------------


def _resample_path(path, m):
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if arc[-1] == 0:
        return np.repeat(path[:1], m + 1, axis=0)
    arc /= arc[-1]
    s = np.linspace(0, 1, m + 1)
    out = np.empty((m + 1, path.shape[1]))
    for c in range(path.shape[1]):
        out[:, c] = np.interp(s, arc, path[:, c])
    return out


def connecting_line_bvp(model, p, q, guess, t_guess, lam=1.0, m=200,
                        delta=None, iters=80):
    """Arclength-gauge collocation for one connecting line of the scaled flow.

    The line is solved as dx/dtau = -L ghat(x) with ghat the unit scaled
    gradient and L the unknown total length: uniform-tau nodes are then
    equidistributed, no phase condition is needed (the system is exactly
    square for an index gap of one), and the endpoint directions are
    unknowns on the unstable sphere of p / stable sphere of q at radius
    delta.  Damped Gauss-Newton with a coloring finite-difference Jacobian.
    Returns (path, duration, residual_norm); the duration is recovered from
    segment lengths over gradient speeds.
    """
    ambient = model.dim + 1
    fw = _flow_unstable_frame(model, p, lam, 1.0)
    bw = _flow_unstable_frame(model, q, lam, -1.0)
    ka, kb = fw.shape[1], bw.shape[1]

    path = _resample_path(guess, m)
    if delta is None:
        # endpoint offsets must be resolvable by the segment length: the unit
        # gradient turns over at the critical-point scale
        total = float(np.sum(np.linalg.norm(np.diff(path, axis=0), axis=1)))
        delta = max(1.5 * total / m, 0.02)
    da = fw.T @ (path[1] - p.state)
    da /= max(np.linalg.norm(da), 1e-12)
    db = bw.T @ (path[-2] - q.state)
    db /= max(np.linalg.norm(db), 1e-12)
    length0 = float(np.sum(np.linalg.norm(np.diff(path, axis=0), axis=1)))
    z = np.concatenate([path[1:-1].ravel(), [length0], da, db])
    n_interior = (m - 1) * ambient

    def assemble(z):
        interior = z[:n_interior].reshape(m - 1, ambient)
        length = z[n_interior]
        da_v = z[n_interior + 1: n_interior + 1 + ka]
        db_v = z[n_interior + 1 + ka:]
        na, nb = np.linalg.norm(da_v), np.linalg.norm(db_v)
        x0 = p.state + delta * fw @ (da_v / na)
        x1 = q.state + delta * bw @ (db_v / nb)
        return np.vstack([x0, interior, x1]), length, na, nb

    def residual(z):
        full, length, na, nb = assemble(z)
        mid = 0.5 * (full[1:] + full[:-1])
        g = model.grad_big(mid, lam=lam)
        speed = np.maximum(np.linalg.norm(g, axis=1), 1e-300)
        r = np.diff(full, axis=0) * m + length * g / speed[:, None]
        return np.concatenate([r.ravel(), [na - 1.0, nb - 1.0]])

    def jacobian(z, r0):
        h = 1e-7
        jac = np.zeros((len(r0), len(z)))
        for comp in range(ambient):
            for color in range(2):
                cols = [(i - 1) * ambient + comp for i in range(1, m)
                        if (i - 1) % 2 == color]
                if not cols:
                    continue
                e = np.zeros(len(z))
                e[cols] = h
                dr = (residual(z + e) - residual(z - e)) / (2 * h)
                for col in cols:
                    node = col // ambient
                    rows = list(range(node * ambient, (node + 2) * ambient))
                    jac[rows, col] = dr[rows]
        for extra in range(1 + ka + kb):
            e = np.zeros(len(z))
            e[n_interior + extra] = h
            jac[:, n_interior + extra] = (residual(z + e) - residual(z - e)) / (2 * h)
        return jac

    res = residual(z)
    for _ in range(iters):
        norm = np.linalg.norm(res)
        if norm < 1e-10 * m:
            break
        jac = jacobian(z, res)
        col = np.maximum(np.linalg.norm(jac, axis=0), 1e-8)
        step, *_ = np.linalg.lstsq(jac / col, res, rcond=None)
        step /= col
        improved = False
        for damp in (1.0, 0.5, 0.25, 0.1, 0.03, 0.01):
            trial = z - damp * step
            r_try = residual(trial)
            if np.linalg.norm(r_try) < norm:
                z, res = trial, r_try
                improved = True
                break
        if not improved:
            break
    full, length, _, _ = assemble(z)
    mid = 0.5 * (full[1:] + full[:-1])
    speed = np.maximum(np.linalg.norm(model.grad_big(mid, lam=lam), axis=1),
                       1e-300)
    seg_len = np.linalg.norm(np.diff(full, axis=0), axis=1)
    duration = float(np.sum(seg_len / speed))
    return full, duration, float(np.linalg.norm(res) / np.sqrt(m))


def _continue_in_lambda(model, p, q, guess, target_lam, m_nodes, start_lam,
                        max_bisections=10):
    """Converge the line at a forgiving metric scale, then walk the scale to
    the target, bisecting any step where the solve loses the line."""
    t_guess = 20.0
    current = None
    lam_now = None
    for lam0 in (start_lam, 2.0, 1.0, 0.5):
        path, t_val, res = connecting_line_bvp(model, p, q, guess, t_guess,
                                               lam=lam0, m=m_nodes)
        if res < 1e-8:
            current, t_guess, lam_now = path, t_val, lam0
            break
    if current is None:
        return None, None, np.inf
    bisections = 0
    while abs(lam_now - target_lam) > 1e-12:
        trial_lam = target_lam
        path, t_val, res = connecting_line_bvp(model, p, q, current, t_guess,
                                               lam=trial_lam, m=m_nodes)
        while res > 1e-8:
            bisections += 1
            if bisections > max_bisections:
                return None, None, np.inf
            trial_lam = 0.5 * (lam_now + trial_lam)
            path, t_val, res = connecting_line_bvp(model, p, q, current,
                                                   t_guess, lam=trial_lam,
                                                   m=m_nodes)
        current, t_guess, lam_now = path, t_val, trial_lam
    return current, t_guess, res


def flow_lines(model, p, q, lam=None, n_dirs=360, rng=None, m_nodes=160,
               points=None, seeds=None):
    """Count the negative-gradient flow lines from p to q with signs.

    Requires index gap one.  Transverse to the constraint the multiplier
    function is a saddle, which makes single-ended shooting exponentially
    ill conditioned; lines are instead obtained by shooting the constrained
    flow on the level set (well conditioned), lifting each constrained line
    with the slaved multiplier, and converging the ambient line by
    collocation with continuation in the metric scaling.  Signs transport
    the unstable frame of p along the converged path.
    """
    if p.index - q.index != 1:
        raise ValueError("flow lines are counted only across an index gap of one")
    if lam is None:
        lam = DEFAULT_METRIC_SCALE
    pts = points if points is not None else [p, q]
    if seeds is None:
        seeds = []
        # cheap seed sources first: one-dimensional shooting from either end
        if _constrained_frame(model, p).shape[1] == 1:
            seeds += constrained_flow_lines(model, p, q, pts, n_dirs=n_dirs)
        seeds += backward_constrained_seeds(model, p, q)
        if not seeds:
            # full separatrix sweep as a fallback
            seeds = constrained_flow_lines(model, p, q, pts, n_dirs=n_dirs)
    else:
        seeds = list(seeds) + backward_constrained_seeds(model, p, q)
    lines = []
    for seed in seeds:
        eta = slaved_multiplier(model, seed)
        guess = np.column_stack([seed, eta])
        path, t_val, res = _continue_in_lambda(
            model, p, q, guess, lam, m_nodes, start_lam=max(4.0, 2 * lam))
        if path is None or res > 1e-6:
            continue
        direction = _flow_unstable_frame(model, p, lam, 1.0).T @ (path[1] - p.state)
        direction /= max(np.linalg.norm(direction), 1e-15)
        if any(np.linalg.norm(direction - ln.direction) < 1e-4 for ln in lines):
            continue
        mu_peak = float(np.max(np.abs(model.mu(path[:, :-1]))))
        sign = _transport_sign(model, p, q, path, lam, t_val / m_nodes)
        lines.append(FlowLine(direction=direction, sign=sign, miss=res,
                              mu_max=mu_peak))
    return lines


def _transport_sign(model, p, q, traj, lam, dt):
    """Orientation sign of a flow line given its integrated path.

    The unstable frame of p is transported by the linearized flow along the
    stored trajectory (QR-renormalized with positive diagonal, which
    preserves orientation) and compared at closest approach to q against
    the frame [flow direction, unstable frame of q].
    """
    fr, _ = p.unstable_frame(lam=lam)
    d_to_q = np.linalg.norm(traj - q.state, axis=1)
    end = int(np.argmin(d_to_q))
    for i in range(end):
        h = model.hess_big(traj[i], lam=lam)
        h_new = model.hess_big(traj[i + 1], lam=lam)
        k1 = -h @ fr
        k2 = -h @ (fr + 0.5 * dt * k1)
        k3 = -h @ (fr + 0.5 * dt * k2)
        k4 = -h_new @ (fr + dt * k3)
        fr = fr + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        qq, rr = np.linalg.qr(fr)
        signs = np.sign(np.diag(rr))
        signs[signs == 0] = 1.0
        fr = qq * signs[None, :]
    flow_dir = -model.grad_big(traj[end], lam=lam)
    norm = np.linalg.norm(flow_dir)
    if norm < 1e-14:
        raise NonConvergentFlow("line stalled before reaching the target")
    flow_dir /= norm
    q_frame, _ = q.unstable_frame(lam=lam)
    basis = np.column_stack([flow_dir, q_frame])
    coeff, *_ = np.linalg.lstsq(basis, fr, rcond=None)
    det = np.linalg.det(coeff)
    if abs(det) < 1e-8:
        raise NonConvergentFlow("degenerate frame comparison at arrival")
    return int(np.sign(det))


# ----------------------------------------------------------------------
# complex and homology


@dataclass
class MorseComplex:
    points: list
    boundary: dict          # (i_from, i_to) -> signed count
    lam: float = 1.0
    counts: dict = field(default_factory=dict)
    mu_localization: float = 0.0

    def boundary_matrix(self, index):
        """Integer matrix of the boundary from index grading to index - 1."""
        rows = [i for i, p in enumerate(self.points) if p.index == index - 1]
        cols = [i for i, p in enumerate(self.points) if p.index == index]
        mat = np.zeros((len(rows), len(cols)), dtype=int)
        for (a, b), val in self.boundary.items():
            if a in cols and b in rows:
                mat[rows.index(b), cols.index(a)] = val
        return mat

    def gradings(self):
        return sorted({p.index for p in self.points})

    def squared_is_zero(self):
        for k in self.gradings():
            m1 = self.boundary_matrix(k)
            m2 = self.boundary_matrix(k + 1)
            if m1.size and m2.size and np.any(m1 @ m2):
                return False
        return True

    def homology_ranks(self):
        """Free ranks of ker/im per grading (torsion reported separately)."""
        ranks = {}
        torsion = {}
        for k in self.gradings():
            n_k = sum(1 for p in self.points if p.index == k)
            mk = self.boundary_matrix(k)
            mk1 = self.boundary_matrix(k + 1)
            r_k = np.linalg.matrix_rank(mk) if mk.size else 0
            r_k1 = np.linalg.matrix_rank(mk1) if mk1.size else 0
            ranks[k] = n_k - r_k - r_k1
            if mk1.size:
                divisors = smith_normal_form(mk1)
                torsion[k] = [d for d in divisors if d not in (0, 1)]
            else:
                torsion[k] = []
        return ranks, torsion


def build_complex(model, lam=None, rng=None, n_dirs=360):
    """Critical points, gap-one flow counts, and signed boundary operator."""
    if lam is None:
        lam = DEFAULT_METRIC_SCALE
    rng = rng or np.random.default_rng(0)
    points = critical_points(model, rng=rng)
    boundary = {}
    counts = {}
    mu_peak = 0.0
    for i, p in enumerate(points):
        targets = [j for j, q in enumerate(points) if p.index - q.index == 1]
        for j in targets:
            q = points[j]
            lines = flow_lines(model, p, q, lam=lam, rng=rng, points=points)
            counts[(i, j)] = [line.sign for line in lines]
            if lines:
                mu_peak = max(mu_peak, max(line.mu_max for line in lines))
            total = int(sum(line.sign for line in lines))
            if total or lines:
                boundary[(i, j)] = total
    return MorseComplex(points=points, boundary=boundary, lam=lam,
                        counts=counts, mu_localization=mu_peak)


def adiabatic_sweep(model, lambdas, rng_seed=0, n_dirs=360):
    """Rebuild the complex across metric scalings; ranks must not move."""
    results = []
    for lam in lambdas:
        cx = build_complex(model, lam=lam,
                           rng=np.random.default_rng(rng_seed), n_dirs=n_dirs)
        ranks, torsion = cx.homology_ranks()
        results.append({
            "lambda": lam,
            "ranks": ranks,
            "torsion": torsion,
            "d_squared_zero": cx.squared_is_zero(),
            "counts": {k: list(v) for k, v in cx.counts.items()},
            "mu_localization": cx.mu_localization,
        })
    return results
