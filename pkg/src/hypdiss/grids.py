"""Deterministic direction sets on the unit sphere and radial frequency grids.

All grids are fixed by their parameters (no randomness), so repeated runs
produce identical sampling points and quadrature weights.
"""

import numpy as np

from .errors import InvalidParameter

#: Default number of equi-angular directions in d=2.
EQUIANGULAR_POINTS_2D = 64


def unit_directions(d, count=None):
    """Directions on S^{d-1} with quadrature weights summing to its measure.

    d=1 uses {-1,+1} with unit weights (counting measure on S^0); d=2 an
    equi-angular set (default 64 points); d=3 the 26-point degree-7 Lebedev
    rule (octahedron vertices, edge midpoints and cube corners).

    Returns (omegas, weights) with omegas of shape (m, d).
    """
    if d == 1:
        om = np.array([[1.0], [-1.0]])
        w = np.array([1.0, 1.0])
        return om, w
    if d == 2:
        m = EQUIANGULAR_POINTS_2D if count is None else int(count)
        if m < 2:
            raise InvalidParameter("need at least 2 directions in d=2")
        th = 2.0 * np.pi * np.arange(m) / m
        om = np.stack([np.cos(th), np.sin(th)], axis=1)
        w = np.full(m, 2.0 * np.pi / m)
        return om, w
    if d == 3:
        return _lebedev26()
    raise InvalidParameter(f"unsupported space dimension d={d}")


def _lebedev26():
    pts = []
    wts = []
    # octahedron vertices, weight 1/21
    for i in range(3):
        for s in (1.0, -1.0):
            e = np.zeros(3)
            e[i] = s
            pts.append(e)
            wts.append(1.0 / 21.0)
    # edge midpoints (+-1, +-1, 0)/sqrt(2), weight 4/105
    for i in range(3):
        for j in range(i + 1, 3):
            for si in (1.0, -1.0):
                for sj in (1.0, -1.0):
                    e = np.zeros(3)
                    e[i] = si
                    e[j] = sj
                    pts.append(e / np.sqrt(2.0))
                    wts.append(4.0 / 105.0)
    # cube corners (+-1, +-1, +-1)/sqrt(3), weight 9/280
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            for sz in (1.0, -1.0):
                pts.append(np.array([sx, sy, sz]) / np.sqrt(3.0))
                wts.append(9.0 / 280.0)
    om = np.array(pts)
    w = 4.0 * np.pi * np.array(wts)
    return om, w


def radial_loggrid(lo=1e-3, hi=1e3, count=49):
    """Log-spaced frequency magnitudes in [lo, hi]."""
    if not (0 < lo < hi):
        raise InvalidParameter("need 0 < lo < hi")
    return np.logspace(np.log10(lo), np.log10(hi), int(count))


def radial_quadrature(lo, hi, count, d):
    """Radial nodes and weights for integrals over the shell lo <= |xi| <= hi.

    Approximates int_lo^hi g(r) r^{d-1} dr by a trapezoidal rule in log r,
    i.e. int g(r) r^d dlog r.  Returns (r, w) with sum(w * f(r)) the
    quadrature of f against the radial measure r^{d-1} dr.
    """
    r = radial_loggrid(lo, hi, count)
    t = np.log(r)
    wt = np.zeros_like(t)
    wt[1:-1] = 0.5 * (t[2:] - t[:-2])
    wt[0] = 0.5 * (t[1] - t[0])
    wt[-1] = 0.5 * (t[-1] - t[-2])
    return r, wt * r**d


def product_grid(omegas, dir_weights, r, r_weights):
    """Tensor grid xi = r_i * omega_j with combined quadrature weights.

    Returns (xi, w): xi of shape (len(r)*len(omegas), d), radial index major.
    sum(w * f(xi)) approximates the whole-space integral of f over the shell.
    """
    xi = (r[:, None, None] * omegas[None, :, :]).reshape(-1, omegas.shape[1])
    w = (r_weights[:, None] * dir_weights[None, :]).reshape(-1)
    return xi, w


def check_unit(omega, tol=1e-12):
    """Validate that omega is a unit vector; returns it as a float array."""
    from .errors import NonUnitDirection

    om = np.asarray(omega, dtype=float).reshape(-1)
    if abs(np.linalg.norm(om) - 1.0) > tol:
        raise NonUnitDirection(f"|omega| = {np.linalg.norm(om)!r} != 1")
    return om
