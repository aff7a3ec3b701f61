"""Independent reference solvers used by the acceptance suite.

Nothing here imports the package: the planar solver works directly on a
polar cell grid in the physical variable u, with no harmonic profiles, no
gauge and no mode splitting.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla


def polar_heat_solve(phi, V, *, R=30.0, n_r=600, n_theta=48, times=(1.0, 10.0),
                     dt_max=0.02, startup=4):
    """Solve ``u_t = Lap u - V(|x|) u`` on the disc ``|x| < R`` with u = 0 on the rim.

    Cell-centred finite volumes in (r, theta): radial fluxes through the
    faces ``r_{j +- 1/2}`` (the face at r = 0 has zero length), angular
    fluxes with periodic wrap.  Time stepping is Crank-Nicolson after
    ``startup`` backward-Euler steps, on a step that grows geometrically
    from ``dt_max / 1000`` up to ``dt_max`` and lands on every requested time.

    Parameters
    ----------
    phi : callable
        Initial data ``phi(x, y)`` on arrays.
    V : callable
        Radial potential ``V(r)``.
    times : sequence of float
        Output times.

    Returns
    -------
    r, theta : ndarray
        Cell centres.
    fields : dict
        ``{t: u}`` with ``u`` of shape ``(n_r, n_theta)``.
    """
    dr = R / n_r
    dth = 2.0 * np.pi / n_theta
    r = (np.arange(n_r) + 0.5) * dr
    th = (np.arange(n_theta) + 0.5) * dth
    faces = np.arange(n_r + 1) * dr

    # 1-D radial operator (per unit angle): (1/r) d/dr (r du/dr) with u(R) = 0 by ghost reflection
    lo = faces[:-1] / (r * dr * dr)
    hi = faces[1:] / (r * dr * dr)
    diag_r = -(lo + hi)
    diag_r[-1] -= hi[-1]  # Dirichlet: ghost value -u_last at the rim face
    Lr = sps.diags([lo[1:], diag_r, hi[:-1]], [-1, 0, 1], format="csr")
    # 1-D periodic second difference in theta
    e = np.ones(n_theta)
    Lt = sps.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], format="lil")
    Lt[0, -1] = 1.0
    Lt[-1, 0] = 1.0
    Lt = Lt.tocsr() / dth ** 2
    inv_r2 = sps.diags(1.0 / r ** 2)
    # unknowns ordered u[j, m] -> j * n_theta + m
    L = (sps.kron(Lr, sps.identity(n_theta)) + sps.kron(inv_r2, Lt)
         - sps.kron(sps.diags(V(r)), sps.identity(n_theta))).tocsc()
    eye = sps.identity(L.shape[0], format="csc")

    X = r[:, None] * np.cos(th)[None, :]
    Y = r[:, None] * np.sin(th)[None, :]
    u = np.asarray(phi(X, Y), dtype=float).ravel()

    factors = {}

    def advance(u, dt, theta):
        key = (round(dt, 14), theta)
        if key not in factors:
            factors[key] = spla.splu((eye - theta * dt * L).tocsc())
        rhs = u + (1.0 - theta) * dt * (L @ u) if theta < 1 else u
        return factors[key].solve(rhs)

    out = {}
    t, dt, n = 0.0, dt_max / 1000.0, 0
    for stop in sorted(times):
        while t < stop * (1 - 1e-13):
            h = min(dt, stop - t)
            u = advance(u, h, 1.0 if n < startup else 0.5)
            t += h
            n += 1
            dt = min(dt * 1.5, dt_max)
        out[stop] = u.reshape(n_r, n_theta).copy()
    return r, th, out
