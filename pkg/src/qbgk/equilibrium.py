"""Equilibrium coefficients of the two-species quantum BGK model.

Given the moments ``(N_i, P_i, E_i)`` of two species, this module finds

* the intra-species coefficients ``(a_i, b_i, c_i)`` of ``M_ii`` so that
  ``M_ii`` carries exactly the mass, momentum and energy of species ``i``;
* the inter-species coefficients ``(a, b, c12, c21)`` of ``M_12``, ``M_21``
  so that each species keeps its mass while the pair keeps its total
  momentum and energy.

The equilibria are

    M(p) = 1 / (exp(m a |p/m - b|^2 + c) + tau).

The fugacities follow from one-dimensional monotone root problems
(``j_tau(c) = ratio`` for the intra case, ``g_{tau,tau2}(c12) = ratio``
for the inter case), after which ``a`` and ``b`` are explicit.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError
from .quantum_integrals import (
    J_FERMI_LIMIT,
    GSweep,
    Statistics,
    _density_scale,
    _g_unchecked,
    admissible_lower_bound,
    inv_moment0,
    j_val,
    moment0,
    moment2,
    moments02,
)
from .rootfind import bisect_decreasing, expand_down, expand_up

MIN_DENSITY = 1e-300
BOUNDARY_RTOL = 1e-12
FERMI_CLAMP = -50.0
LOWER_NUDGE = 1e-12


def _vec3(v):
    arr = np.array(v, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class SpeciesMoments:
    """Number density ``N``, momentum density ``P`` and kinetic energy ``E``."""

    N: float
    P: np.ndarray
    E: float

    def __post_init__(self):
        object.__setattr__(self, "N", float(self.N))
        object.__setattr__(self, "E", float(self.E))
        object.__setattr__(self, "P", _vec3(self.P))

    @classmethod
    def from_dict(cls, d):
        return cls(N=d["N"], P=d.get("P", (0.0, 0.0, 0.0)), E=d["E"])

    def to_dict(self):
        return {"N": self.N, "P": self.P.tolist(), "E": self.E}

    def __repr__(self):
        return f"SpeciesMoments(N={self.N!r}, P={self.P.tolist()!r}, E={self.E!r})"


@dataclass(frozen=True, eq=False)
class IntraCoeffs:
    a: float
    b: np.ndarray
    c: float
    iterations: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "b", _vec3(self.b))

    def to_dict(self):
        return {"a": self.a, "b": self.b.tolist(), "c": self.c, "iterations": self.iterations}


@dataclass(frozen=True, eq=False)
class InterCoeffs:
    a: float
    b: np.ndarray
    c12: float
    c21: float
    iterations: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "b", _vec3(self.b))

    def to_dict(self):
        return {
            "a": self.a,
            "b": self.b.tolist(),
            "c12": self.c12,
            "c21": self.c21,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class MixtureProblem:
    m1: float
    m2: float
    tau1: Statistics
    tau2: Statistics
    mom1: SpeciesMoments
    mom2: SpeciesMoments

    def __post_init__(self):
        if not (self.m1 > 0 and self.m2 > 0):
            raise ValueError("masses must be positive")
        object.__setattr__(self, "tau1", Statistics.parse(self.tau1))
        object.__setattr__(self, "tau2", Statistics.parse(self.tau2))

    def swapped(self):
        return MixtureProblem(self.m2, self.m1, self.tau2, self.tau1, self.mom2, self.mom1)

    @property
    def total_mass_density(self):
        return self.m1 * self.mom1.N + self.m2 * self.mom2.N


# -- intra-species ----------------------------------------------------------


def internal_energy_scalar(m, mom):
    """``2 m E - |P|^2 / N``; may be non-positive, callers reject that."""
    return 2.0 * m * mom.E - float(mom.P @ mom.P) / mom.N


def _intra_status(m, tau, mom):
    """Return ``(ratio, None)`` when feasible, else ``(ratio, InfeasibleError)``."""
    stat = Statistics.parse(tau)
    if not mom.N >= MIN_DENSITY:
        return math.nan, InfeasibleError("density below representable floor", f"N={mom.N!r}")
    eint = internal_energy_scalar(m, mom)
    if not eint > 0:
        return math.nan, InfeasibleError("nonpositive internal energy", f"2mE-|P|^2/N={eint!r}")
    ratio = mom.N / eint ** 0.6
    bound = J_FERMI_LIMIT if stat is Statistics.FERMION else j_val(stat, 0.0)
    if stat is Statistics.FERMION:
        ok = ratio <= bound * (1.0 + BOUNDARY_RTOL)
    else:
        ok = ratio < bound * (1.0 - BOUNDARY_RTOL)
    if not ok:
        rel = f"N/(2mE-|P|^2/N)^(3/5) = {ratio!r} exceeds j_{stat.tau:+d}(l) = {bound!r}"
        return ratio, InfeasibleError("degeneracy bound exceeded", rel)
    return ratio, None


def check_feasibility_intra(m, tau, mom):
    """True iff ``solve_intra`` has a (unique) solution for these moments."""
    return _intra_status(m, tau, mom)[1] is None


def solve_intra(m, tau, mom):
    """Coefficients of the single-species equilibrium ``M_ii``.

    ``c`` solves ``j_tau(c) = N / (2mE - |P|^2/N)^{3/5}``, then
    ``a = m h_tau(c)^{2/3} N^{-2/3}`` and ``b = P / (m N)``.
    """
    stat = Statistics.parse(tau)
    ratio, err = _intra_status(m, stat, mom)
    if err is not None:
        raise err

    def j(x):
        return j_val(stat, x)

    iters = 0
    if stat is Statistics.FERMION and ratio >= J_FERMI_LIMIT * (1.0 - BOUNDARY_RTOL):
        warnings.warn(
            "intra ratio sits on the fermion degeneracy limit; clamping c to "
            f"{FERMI_CLAMP}", RuntimeWarning, stacklevel=2,
        )
        c = FERMI_CLAMP
    else:
        lo = 0.0 if stat is Statistics.BOSON else expand_down(j, ratio, FERMI_CLAMP)
        hi = expand_up(j, ratio, lo + 1.0)
        c, iters = bisect_decreasing(j, ratio, lo, hi)
    a = m * moment0(stat, c) ** (2.0 / 3.0) * mom.N ** (-2.0 / 3.0)
    b = mom.P / (m * mom.N)
    return IntraCoeffs(a=a, b=b, c=c, iterations=iters)


# -- inter-species ----------------------------------------------------------


def mixture_internal_energy(prob):
    """``2E1 + 2E2 - |P1 + P2|^2 / (m1 N1 + m2 N2)``."""
    ptot = prob.mom1.P + prob.mom2.P
    return 2.0 * (prob.mom1.E + prob.mom2.E) - float(ptot @ ptot) / prob.total_mass_density


def _fermion_first(prob):
    return prob.tau1 is Statistics.BOSON and prob.tau2 is Statistics.FERMION


def _inter_status(prob):
    """``(ratio, lower, g_lower, error_or_None)`` for a fermion-first problem."""
    m1, m2 = prob.m1, prob.m2
    N1, N2 = prob.mom1.N, prob.mom2.N
    if not (N1 >= MIN_DENSITY and N2 >= MIN_DENSITY):
        err = InfeasibleError("density below representable floor", f"N1={N1!r}, N2={N2!r}")
        return math.nan, math.nan, math.nan, err
    emix = mixture_internal_energy(prob)
    if not emix > 0:
        err = InfeasibleError(
            "nonpositive mixture internal energy",
            f"2E1+2E2-|P1+P2|^2/(m1N1+m2N2)={emix!r}",
        )
        return math.nan, math.nan, math.nan, err
    ratio = N1 / emix ** 0.6
    kappa = _density_scale(m1, m2, N1, N2)
    lower = admissible_lower_bound(prob.tau1, prob.tau2, m1, m2, N1, N2)
    g_lower = _g_unchecked(prob.tau1, prob.tau2, m1, m2, kappa, lower)
    any_boson = Statistics.BOSON in (prob.tau1, prob.tau2)
    if any_boson:
        ok = ratio < g_lower * (1.0 - BOUNDARY_RTOL)
    else:
        ok = ratio <= g_lower * (1.0 + BOUNDARY_RTOL)
    if not ok:
        rel = (
            f"N1/(mixture internal energy)^(3/5) = {ratio!r} exceeds "
            f"g({lower!r}) = {g_lower!r}"
        )
        return ratio, lower, g_lower, InfeasibleError("degeneracy bound exceeded", rel)
    return ratio, lower, g_lower, None


def check_feasibility_inter(prob):
    """True iff the mixture relations determine ``(a, b, c12, c21)``."""
    if _fermion_first(prob):
        prob = prob.swapped()
    return _inter_status(prob)[3] is None


def solve_inter(prob):
    """Coefficients ``(a, b, c12, c21)`` of the mixture equilibria ``M_12``, ``M_21``.

    A boson-fermion problem is solved with the species swapped so that the
    fermion is species 1, and the result is mapped back to the caller's order.
    """
    if _fermion_first(prob):
        res = solve_inter(prob.swapped())
        return InterCoeffs(a=res.a, b=res.b, c12=res.c21, c21=res.c12, iterations=res.iterations)

    ratio, lower, g_lower, err = _inter_status(prob)
    if err is not None:
        raise err
    m1, m2 = prob.m1, prob.m2
    stat1, stat2 = prob.tau1, prob.tau2
    kappa = _density_scale(m1, m2, prob.mom1.N, prob.mom2.N)

    g = GSweep(stat1, stat2, m1, m2, kappa)

    iters = 0
    if lower == -math.inf:
        if ratio >= g_lower * (1.0 - BOUNDARY_RTOL):
            warnings.warn(
                "mixture ratio sits on the fermion degeneracy limit; clamping c12 to "
                f"{FERMI_CLAMP}", RuntimeWarning, stacklevel=2,
            )
            c12 = FERMI_CLAMP
        else:
            lo = expand_down(g, ratio, FERMI_CLAMP)
            hi = expand_up(g, ratio, lo + 1.0)
            c12, iters = bisect_decreasing(g, ratio, lo, hi)
    else:
        lo = lower + LOWER_NUDGE * max(1.0, abs(lower))
        if g(lo) < ratio:
            lo = lower
        hi = expand_up(g, ratio, lo + 1.0)
        c12, iters = bisect_decreasing(g, ratio, lo, hi)

    c21 = inv_moment0(stat2, kappa * moment0(stat1, c12))
    emix = mixture_internal_energy(prob)
    a = ((m1 ** 1.5 * moment2(stat1, c12) + m2 ** 1.5 * moment2(stat2, c21)) / emix) ** 0.4
    b = (prob.mom1.P + prob.mom2.P) / prob.total_mass_density
    return InterCoeffs(a=a, b=b, c12=c12, c21=c21, iterations=iters)


# -- forward map and residual checks ----------------------------------------


def equilibrium_moments(a, b, c, m, tau):
    """Continuum moments of ``1/(exp(m a |p/m - b|^2 + c) + tau)``."""
    b = _vec3(b)
    h, e2 = moments02(tau, c)
    scale = m / a
    N = scale ** 1.5 * h
    P = m * N * b
    E = (scale ** 2.5 * e2 + m * m * float(b @ b) * N) / (2.0 * m)
    return SpeciesMoments(N=N, P=P, E=E)


@dataclass
class VerificationReport:
    """Relative residuals of the conservation constraints."""

    residuals: dict
    tol: float

    @property
    def max_residual(self):
        return max(self.residuals.values())

    @property
    def passed(self):
        return self.max_residual <= self.tol

    def to_dict(self):
        return {
            "residuals": dict(self.residuals),
            "max_residual": self.max_residual,
            "tol": self.tol,
            "passed": self.passed,
        }


def _intra_residuals(coeffs, m, tau, mom, tag):
    got = equilibrium_moments(coeffs.a, coeffs.b, coeffs.c, m, tau)
    pscale = math.sqrt(2.0 * m * mom.N * mom.E)
    return {
        f"N{tag}": abs(got.N - mom.N) / mom.N,
        f"P{tag}": float(np.linalg.norm(got.P - mom.P)) / pscale,
        f"E{tag}": abs(got.E - mom.E) / mom.E,
    }


def verify_coeffs(coeffs, prob, tol=1e-8, species=None):
    """Check the moment constraints by continuum quadrature.

    ``coeffs`` may be an :class:`InterCoeffs` (five mixture constraints), a
    pair of :class:`IntraCoeffs` (three constraints per species) or a single
    :class:`IntraCoeffs` together with ``species`` in ``{1, 2}``.

    Momentum residuals are normalised by ``sqrt(2 M E)`` (``M`` the mass
    density), an upper bound of ``|P|`` that never vanishes.
    """
    if isinstance(coeffs, InterCoeffs):
        got1 = equilibrium_moments(coeffs.a, coeffs.b, coeffs.c12, prob.m1, prob.tau1)
        got2 = equilibrium_moments(coeffs.a, coeffs.b, coeffs.c21, prob.m2, prob.tau2)
        ptot = prob.mom1.P + prob.mom2.P
        etot = prob.mom1.E + prob.mom2.E
        pscale = math.sqrt(2.0 * prob.total_mass_density * etot)
        res = {
            "N1": abs(got1.N - prob.mom1.N) / prob.mom1.N,
            "N2": abs(got2.N - prob.mom2.N) / prob.mom2.N,
            "P": float(np.linalg.norm(got1.P + got2.P - ptot)) / pscale,
            "E": abs(got1.E + got2.E - etot) / etot,
        }
        return VerificationReport(res, tol)
    if isinstance(coeffs, IntraCoeffs):
        if species not in (1, 2):
            raise ValueError("species must be 1 or 2 for a single IntraCoeffs")
        m, tau, mom = (
            (prob.m1, prob.tau1, prob.mom1) if species == 1 else (prob.m2, prob.tau2, prob.mom2)
        )
        return VerificationReport(_intra_residuals(coeffs, m, tau, mom, species), tol)
    c1, c2 = coeffs
    res = _intra_residuals(c1, prob.m1, prob.tau1, prob.mom1, 1)
    res.update(_intra_residuals(c2, prob.m2, prob.tau2, prob.mom2, 2))
    return VerificationReport(res, tol)
