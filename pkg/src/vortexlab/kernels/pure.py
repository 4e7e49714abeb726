"""NumPy reference implementation of the cylinder hot kernels.

Fields live on a staggered grid: the map u at nodes (i, j), the axial
connection component phi on s-links (i+1/2, j), the angular component psi on
t-links (i, j+1/2); t is periodic.  The compatible complex structure of the
package conventions is J = -i (see the toric module), so the first equation
reads D^A_s u - i (D^A_t u - Y) = 0.  Differences of u are gauge-covariant:
neighbours are parallel-transported through the link exponentials before
differencing, which makes every output here exactly invariant under discrete
gauge transformations.
"""

import numpy as np

BACKEND = "pure"


def _angles(conn, wt, step):
    # per-component transport angles step * (W^T conn)_c
    return step * np.einsum("ija,ac->ijc", conn, wt)


def covariant_ds(u, phi, wt, ds, order=2):
    """Covariant s-derivative at interior nodes i = 1..Ns-2."""
    a = np.exp(1j * _angles(phi, wt, ds))
    fwd = a[1:-1] * u[2:]
    bwd = np.conj(a[:-2]) * u[:-2]
    out = (fwd - bwd) / (2.0 * ds)
    if order == 4:
        # fourth-order interior rows; second-order closure at i=1, Ns-2
        a2f = a[2:-2] * a[3:-1]
        a2b = np.conj(a[1:-3] * a[0:-4])
        out4 = (-a2f * u[4:] + 8.0 * a[2:-2] * u[3:-1]
                - 8.0 * np.conj(a[1:-3]) * u[1:-3] + a2b * u[:-4]) / (12.0 * ds)
        out[1:-1] = out4
    return out


def covariant_dt(u, psi, wt, dt, order=4):
    """Covariant t-derivative at every node (periodic)."""
    b = np.exp(1j * _angles(psi, wt, dt))
    up1 = np.roll(u, -1, axis=1)
    um1 = np.roll(u, 1, axis=1)
    bm1 = np.roll(b, 1, axis=1)
    if order == 2:
        return (b * up1 - np.conj(bm1) * um1) / (2.0 * dt)
    up2 = np.roll(u, -2, axis=1)
    um2 = np.roll(u, 2, axis=1)
    bp2 = b * np.roll(b, -1, axis=1)
    bm2 = bm1 * np.roll(b, 2, axis=1)
    return (-bp2 * up2 + 8.0 * b * up1 - 8.0 * np.conj(bm1) * um1
            + np.conj(bm2) * um2) / (12.0 * dt)


def residual_fields(u, phi, psi, y, mu, lam, wt, ds, dt, order_s=4, order_t=4):
    """Interior residuals of the flow system.

    Returns (e1, e2): e1 complex on interior nodes i = 1..Ns-2, e2 real on
    solved plaquettes i = 1..Ns-3 (the outermost plaquette on each side
    belongs to the boundary closure).
    """
    ds_u = covariant_ds(u, phi, wt, ds, order=order_s)
    dt_u = covariant_dt(u, psi, wt, dt, order=order_t)
    e1 = ds_u - 1j * (dt_u[1:-1] - y[1:-1])

    dpsi = (psi[1:] - psi[:-1]) / ds
    dphi = (np.roll(phi, -1, axis=1) - phi) / dt
    mu_next = np.roll(mu, -1, axis=1)
    mu_plaq = 0.25 * (mu[:-1] + mu[1:] + mu_next[:-1] + mu_next[1:])
    e2 = (dpsi - dphi + lam ** 2 * mu_plaq)[1:-1]
    return e1, e2


def slink_energy_density(u, phi, wt, ds):
    """|covariant forward s-difference|^2 on s-links, summed over components."""
    a = np.exp(1j * _angles(phi, wt, ds))
    diff = (a * u[1:] - u[:-1]) / ds
    return np.sum(np.abs(diff) ** 2, axis=2)
