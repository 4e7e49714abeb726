"""Shared matrix utilities: standard symplectic structures, batched exponentials,
symplectic projection, and integer Smith reduction.

Real coordinates on R^{2n} are ordered (x_1..x_n, y_1..y_n); a complex vector
z corresponds to (Re z, Im z) and multiplication by i is the standard matrix
J_{2n} = [[0, -I], [I, 0]].
"""

import numpy as np


def standard_j(two_n):
    """Standard complex-structure matrix J on R^{two_n}."""
    if two_n % 2:
        raise ValueError("dimension must be even")
    n = two_n // 2
    j = np.zeros((two_n, two_n))
    j[:n, n:] = -np.eye(n)
    j[n:, :n] = np.eye(n)
    return j


def omega_form(two_n):
    """Gram matrix of the symplectic form: omega(v, w) = v^T Om w."""
    # omega(v, w) = <J v, w>  =>  Om = J^T = -J
    return -standard_j(two_n)


def symplectic_defect(a):
    """Max-norm of A^T J A - J (how far A is from Sp(2n))."""
    j = standard_j(a.shape[-1])
    return float(np.max(np.abs(a.T @ j @ a - j)))


def is_symplectic(a, tol=1e-10):
    return symplectic_defect(a) <= tol


def symplectic_project(a, sweeps=3):
    """Project a near-symplectic matrix back onto Sp(2n).

    Uses the quadratically convergent averaging A <- (A + J^T A^{-T} J)/2,
    whose fixed points are exactly the symplectic matrices.
    """
    j = standard_j(a.shape[-1])
    out = np.array(a, dtype=float)
    for _ in range(sweeps):
        out = 0.5 * (out + j.T @ np.linalg.inv(out).T @ j)
    return out


def expm_batched(a):
    """Matrix exponential of a stack of small square matrices.

    Scaling-and-squaring with a fixed-order Taylor kernel; accurate to
    machine precision for the well-scaled inputs used here.
    """
    a = np.asarray(a, dtype=float)
    single = a.ndim == 2
    if single:
        a = a[None]
    norms = np.abs(a).sum(axis=-1).max(axis=-1)  # induced inf-norm
    norms = np.maximum(norms, 1e-300)
    s = np.maximum(0, np.ceil(np.log2(norms / 0.25))).astype(int)
    smax = int(s.max())
    b = a / (2.0 ** s)[:, None, None]
    d = a.shape[-1]
    eye = np.broadcast_to(np.eye(d), b.shape)
    # Horner evaluation of sum_{k<=17} B^k / k!
    out = eye + b / 17.0
    for k in range(16, 0, -1):
        out = eye + (b @ out) / k
    for step in range(smax):
        mask = s > step
        if not mask.any():
            break
        out[mask] = out[mask] @ out[mask]
    return out[0] if single else out


def logm_batched(m, tol=0.3, max_roots=20):
    """Principal matrix logarithm of a stack of matrices near the identity
    component (inverse scaling-and-squaring with a Denman-Beavers square
    root and a Mercator series kernel)."""
    m = np.asarray(m, dtype=float)
    single = m.ndim == 2
    if single:
        m = m[None]
    d = m.shape[-1]
    eye = np.eye(d)
    work = m.copy()
    roots = 0
    while np.max(np.abs(work - eye)) > tol:
        if roots >= max_roots:
            raise np.linalg.LinAlgError("matrix log did not reduce to the series regime")
        x, y = work.copy(), np.broadcast_to(eye, work.shape).copy()
        for _ in range(30):
            xn = 0.5 * (x + np.linalg.inv(y))
            yn = 0.5 * (y + np.linalg.inv(x))
            if np.max(np.abs(xn - x)) < 1e-15:
                x, y = xn, yn
                break
            x, y = xn, yn
        work = x
        roots += 1
    e = work - eye
    # log(I + E) = E (c_1 + E (c_2 + ...)) with c_k = (-1)^{k+1} / k
    terms = 30
    acc = ((-1.0) ** (terms + 1) / terms) * np.broadcast_to(eye, e.shape).copy()
    for k in range(terms - 1, 0, -1):
        acc = ((-1.0) ** (k + 1) / k) * eye + e @ acc
    out = (e @ acc) * 2.0 ** roots
    return out[0] if single else out


def polar_unitary(a):
    """Orthogonal factor of the polar decomposition A = U P (stack-friendly)."""
    u, _, vt = np.linalg.svd(a)
    return u @ vt


def unitary_to_complex(u):
    """Convert an orthogonal-symplectic matrix to its complex unitary form.

    With the (x, y) block ordering, such a matrix reads [[X, -Y], [Y, X]] and
    corresponds to X + iY.
    """
    two_n = u.shape[-1]
    n = two_n // 2
    return u[..., :n, :n] + 1j * u[..., n:, :n]


def direct_sum_matrix(a, b):
    """Symplectic direct sum respecting the (x.., y..) coordinate ordering."""
    na, nb = a.shape[-1] // 2, b.shape[-1] // 2
    n = na + nb
    out = np.zeros(a.shape[:-2] + (2 * n, 2 * n))
    ia = np.r_[0:na, n:n + na]
    ib = np.r_[na:n, n + na:2 * n]
    out[..., ia[:, None], ia[None, :]] = a
    out[..., ib[:, None], ib[None, :]] = b
    return out


def winding_number(values, tol=1e-9):
    """Winding of a closed discrete path in C^* around the origin."""
    values = np.asarray(values, dtype=complex)
    if np.min(np.abs(values)) < tol:
        raise ValueError("path passes through the origin")
    angles = np.angle(values[1:] / values[:-1])
    total = float(np.sum(angles))
    return int(np.round(total / (2 * np.pi)))


def smith_normal_form(mat):
    """Elementary divisors of an integer matrix (Smith normal form diagonal).

    Plain Euclidean reduction; intended for the small matrices arising from
    boundary operators and weight data.
    """
    a = np.array(mat, dtype=object)
    if a.size == 0:
        return []
    rows, cols = a.shape
    divisors = []
    r = 0
    while r < min(rows, cols):
        sub = a[r:, r:]
        nz = np.argwhere(sub != 0)
        if nz.size == 0:
            break
        # move smallest-magnitude nonzero entry to the pivot position
        i, j = min(nz, key=lambda ij: abs(sub[ij[0], ij[1]]))
        a[[r, r + i]] = a[[r + i, r]]
        a[:, [r, r + j]] = a[:, [r + j, r]]
        while True:
            done = True
            for i in range(r + 1, rows):
                if a[i, r] % a[r, r] != 0:
                    q = a[i, r] // a[r, r]
                    a[i] -= q * a[r]
                    if a[i, r] != 0:
                        a[[r, i]] = a[[i, r]]
                        done = False
            for j in range(r + 1, cols):
                if a[r, j] % a[r, r] != 0:
                    q = a[r, j] // a[r, r]
                    a[:, j] -= q * a[:, r]
                    if a[r, j] != 0:
                        a[:, [r, j]] = a[:, [j, r]]
                        done = False
            if done:
                break
        for i in range(r + 1, rows):
            a[i] -= (a[i, r] // a[r, r]) * a[r]
        for j in range(r + 1, cols):
            a[:, j] -= (a[r, j] // a[r, r]) * a[:, r]
        divisors.append(int(abs(a[r, r])))
        r += 1
    return divisors
