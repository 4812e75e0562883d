"""Equilibrium coefficients that reproduce *grid* moments to round-off.

The continuum solution of :mod:`qbgk.equilibrium` matches the moments only
up to the midpoint-rule error of the momentum grid. For time integration we
instead want the discrete sums of ``M_ii`` (resp. ``M_12 + M_21``) to equal
the discrete moments of ``f`` exactly, so that each relaxation step is
conservative to round-off. The continuum coefficients (or the previous
step's) serve as the starting point of a damped Newton iteration on the
discrete moment equations; the Jacobian is assembled analytically from
``d/du (exp(u) + tau)^-1 = -M (1 - tau M)``.
"""

import math

import numpy as np

from .distributions import equilibrium_values, moment_sums
from .equilibrium import InterCoeffs, IntraCoeffs
from .errors import ConvergenceError
from .quantum_integrals import Statistics, occupancy

NEWTON_MAX_ITER = 40
NEWTON_ACCEPT = 1e-11
_NOISE_FLOOR = 4e-16


def _admissible(stat, a, c):
    if not (a > 0 and math.isfinite(a) and math.isfinite(c)):
        return False
    return stat is Statistics.FERMION or c > 0


def _newton(residual, jacobian, theta, valid, what):
    r = residual(theta)
    norm = float(np.max(np.abs(r)))
    it = 0
    for it in range(1, NEWTON_MAX_ITER + 1):
        if norm <= _NOISE_FLOOR:
            break
        try:
            step = np.linalg.solve(jacobian(theta), -r)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        improved = False
        while lam > 1e-8:
            cand = theta + lam * step
            if valid(cand):
                rc = residual(cand)
                nc = float(np.max(np.abs(rc)))
                if nc < norm:
                    theta, r, norm, improved = cand, rc, nc, True
                    break
            lam *= 0.5
        if not improved:
            break
    if not norm <= NEWTON_ACCEPT:
        raise ConvergenceError(f"discrete {what} fit stalled at residual {norm:.3e} after {it} steps")
    return theta, it


def fit_intra_discrete(mom, m, tau, grid, guess):
    """Coefficients whose grid equilibrium has grid moments ``mom``.

    Parameters
    ----------
    mom : SpeciesMoments
        Target discrete moments.
    guess : IntraCoeffs
        Starting point, typically the continuum solution or the previous step.
    """
    stat = Statistics.parse(tau)
    px, py, pz = (g.ravel() for g in grid.mesh)
    psq = grid.p_squared.ravel()
    vol = grid.cell_volume
    pscale = math.sqrt(2.0 * m * mom.N * mom.E)
    scale = np.array([mom.N, pscale, pscale, pscale, mom.E])
    target = np.concatenate(([mom.N], mom.P, [mom.E]))
    phi = np.stack([np.ones_like(px), px, py, pz, psq / (2.0 * m)])

    def residual(th):
        vals = equilibrium_values(th[0], th[1:4], th[4], m, stat, grid)
        N, P, E = moment_sums(vals, grid, m)
        return (np.concatenate(([N], P, [E])) - target) / scale

    def jacobian(th):
        a, b, c = th[0], th[1:4], th[4]
        qx, qy, qz = px - m * b[0], py - m * b[1], pz - m * b[2]
        u = (a / m) * (qx * qx + qy * qy + qz * qz) + c
        f = occupancy(stat.tau, u)
        df = -f * (1.0 - stat.tau * f)
        du = np.stack([(u - c) / a, -2.0 * a * qx, -2.0 * a * qy, -2.0 * a * qz, np.ones_like(u)])
        return vol * (phi @ (df * du).T) / scale[:, None]

    theta0 = np.concatenate(([guess.a], guess.b, [guess.c]))
    theta, it = _newton(residual, jacobian, theta0, lambda th: _admissible(stat, th[0], th[4]), "intra")
    return IntraCoeffs(a=float(theta[0]), b=theta[1:4].copy(), c=float(theta[4]), iterations=it)


def fit_inter_discrete(mom1, mom2, m1, m2, tau1, tau2, grid, guess):
    """Mixture coefficients ``(a, b, c12, c21)`` matching the grid constraints:
    each species' mass, the total momentum and the total energy."""
    stat1, stat2 = Statistics.parse(tau1), Statistics.parse(tau2)
    px, py, pz = (g.ravel() for g in grid.mesh)
    psq = grid.p_squared.ravel()
    vol = grid.cell_volume
    ptot = mom1.P + mom2.P
    etot = mom1.E + mom2.E
    pscale = math.sqrt(2.0 * (m1 * mom1.N + m2 * mom2.N) * etot)
    scale = np.array([mom1.N, mom2.N, pscale, pscale, pscale, etot])
    target = np.concatenate(([mom1.N, mom2.N], ptot, [etot]))
    ones, zeros = np.ones_like(px), np.zeros_like(px)
    phi1 = np.stack([ones, zeros, px, py, pz, psq / (2.0 * m1)])
    phi2 = np.stack([zeros, ones, px, py, pz, psq / (2.0 * m2)])

    def residual(th):
        a, b = th[0], th[1:4]
        v1 = equilibrium_values(a, b, th[4], m1, stat1, grid)
        v2 = equilibrium_values(a, b, th[5], m2, stat2, grid)
        N1, P1, E1 = moment_sums(v1, grid, m1)
        N2, P2, E2 = moment_sums(v2, grid, m2)
        got = np.concatenate(([N1, N2], P1 + P2, [E1 + E2]))
        return (got - target) / scale

    def _species_block(a, b, c, m, stat, phi, slot):
        qx, qy, qz = px - m * b[0], py - m * b[1], pz - m * b[2]
        q2 = qx * qx + qy * qy + qz * qz
        f = occupancy(stat.tau, (a / m) * q2 + c)
        df = -f * (1.0 - stat.tau * f)
        dc1 = ones if slot == 0 else zeros
        dc2 = zeros if slot == 0 else ones
        du = np.stack([q2 / m, -2.0 * a * qx, -2.0 * a * qy, -2.0 * a * qz, dc1, dc2])
        return phi @ (df * du).T

    def jacobian(th):
        a, b = th[0], th[1:4]
        jac = _species_block(a, b, th[4], m1, stat1, phi1, 0)
        jac += _species_block(a, b, th[5], m2, stat2, phi2, 1)
        return vol * jac / scale[:, None]

    def valid(th):
        return _admissible(stat1, th[0], th[4]) and _admissible(stat2, th[0], th[5])

    theta0 = np.concatenate(([guess.a], guess.b, [guess.c12, guess.c21]))
    theta, it = _newton(residual, jacobian, theta0, valid, "inter")
    return InterCoeffs(
        a=float(theta[0]), b=theta[1:4].copy(), c12=float(theta[4]), c21=float(theta[5]), iterations=it
    )
