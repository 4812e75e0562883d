"""Reference values of the quantum moment integrals through polylogarithms.

Expanding ``1/(e^u + tau) = sum_k (-tau)^(k-1) e^(-k u)`` term by term gives

    int_0^inf r^s dr / (exp(r^2 + x) + tau)
        = -tau Gamma((s+1)/2) / 2 * Li_{(s+1)/2}(-tau e^(-x)),

so ``h_{+1}(x) = -pi^{3/2} Li_{3/2}(-e^{-x})`` and
``h_{-1}(x) = pi^{3/2} Li_{3/2}(e^{-x})``. This route shares no code with the
quadrature in :mod:`qbgk.quantum_integrals` and is used only for validation.
"""

import math

import mpmath as mp

from .quantum_integrals import Statistics

_DPS = 30


def polylog_series(s, z, tol=1e-16, max_terms=10**6):
    """``Li_s(z)`` by the defining series, for real ``|z| < 1``."""
    if not abs(z) < 1:
        raise ValueError("direct series needs |z| < 1")
    total = 0.0
    zk = 1.0
    for k in range(1, max_terms + 1):
        zk *= z
        term = zk / k ** s
        total += term
        if abs(term) < tol * max(1.0, abs(total)):
            return total
    raise RuntimeError(f"polylog series for z={z} did not converge in {max_terms} terms")


def radial_oracle(tau, x, s):
    """``int_0^inf r^s / (exp(r^2 + x) + tau) dr`` via ``mpmath.polylog``."""
    stat = Statistics.parse(tau)
    t = stat.tau
    with mp.workdps(_DPS):
        nu = mp.mpf(s + 1) / 2
        z = -t * mp.exp(-mp.mpf(x))
        val = -t * mp.gamma(nu) / 2 * mp.re(mp.polylog(nu, z))
        return float(val)


def moment0_oracle(tau, x):
    return 4.0 * math.pi * radial_oracle(tau, x, 2)


def moment2_oracle(tau, x):
    return 4.0 * math.pi * radial_oracle(tau, x, 4)


def moment0_series(tau, x):
    """Number integral from :func:`polylog_series`; requires ``x > 0``."""
    t = Statistics.parse(tau).tau
    return -t * math.pi ** 1.5 * polylog_series(1.5, -t * math.exp(-x))


def moment2_series(tau, x):
    t = Statistics.parse(tau).tau
    return -t * 1.5 * math.pi ** 1.5 * polylog_series(2.5, -t * math.exp(-x))


def j_oracle(tau, x):
    return moment0_oracle(tau, x) / moment2_oracle(tau, x) ** 0.6


def d_oracle(tau, x):
    i0, i2, i4 = (radial_oracle(tau, x, s) for s in (0, 2, 4))
    return 1.8 * i2 * i2 - i4 * i0
