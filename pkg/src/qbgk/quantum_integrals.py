"""Moment integrals of the Fermi-Dirac and Bose-Einstein kernels.

Every quantity here reduces to radial integrals

    I_s(tau, x) = int_0^inf r**s / (exp(r**2 + x) + tau) dr,   s in {0, 2, 4},

evaluated with composite Gauss-Legendre quadrature on panels placed around
the singularities of the integrand in the complex plane (the Fermi edge at
``r = sqrt(-x)`` for degenerate fermions, the pole at ``r = i sqrt(x)`` for
bosons close to condensation). The node set depends only on ``(tau, x)``, so
results are reproducible bit for bit.

Sign convention: ``tau = +1`` is a fermion, ``tau = -1`` a boson.
"""

import bisect
import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import pairwise

import numpy as np

from .errors import DomainError, QuadratureError, RangeError
from .rootfind import BISECT_RTOL, bisect_decreasing, expand_down, expand_up

FOUR_PI = 4.0 * math.pi

#: lim_{x -> -inf} j_{+1}(x)
J_FERMI_LIMIT = FOUR_PI ** 0.4 * 5.0 ** 0.6 / 3.0

# Below this a boson argument is indistinguishable from 0 at double precision:
# h_{-1}(x) - h_{-1}(0) ~ 2 pi^2 sqrt(x).
BOSE_ZERO_CLAMP = 1e-28

# Relative slack tolerated when a boson inverse is asked for h_{-1}(0) itself.
BOSE_EDGE_SLACK = 1e-12

_GL_HI = np.polynomial.legendre.leggauss(24)
_GL_LO = np.polynomial.legendre.leggauss(16)
_MAX_PANEL = 0.5


class Statistics(enum.IntEnum):
    """Occupancy sign ``tau`` of a species."""

    FERMION = 1
    BOSON = -1

    @property
    def tau(self):
        return int(self)

    @property
    def lower_limit(self):
        """Left end of the admissible fugacity range, ``l(tau)``."""
        return -math.inf if self is Statistics.FERMION else 0.0

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            key = value.strip().lower()
            if key in ("fermion", "fd", "+1", "1"):
                return cls.FERMION
            if key in ("boson", "be", "-1"):
                return cls.BOSON
            raise ValueError(f"unknown statistics {value!r}")
        try:
            return cls(int(value))
        except (TypeError, ValueError):
            raise ValueError(f"statistics must be +1 (fermion) or -1 (boson), got {value!r}")

    @property
    def label(self):
        return self.name.lower()


@dataclass(frozen=True)
class IntegralAccuracy:
    """Accuracy controls for the radial quadrature.

    ``rel_tol`` is the largest acceptable discrepancy between the 24- and
    16-point rules on the same panels, relative to the integral.
    ``tail_cutoff`` overrides the default truncation radius
    ``sqrt(max(0, 40 - x)) + 10``.
    """

    rel_tol: float = 1e-12
    tail_cutoff: float = None

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.tail_cutoff is not None and not self.tail_cutoff > 0:
            raise ValueError("tail_cutoff must be positive")

    def cutoff(self, x):
        if self.tail_cutoff is not None:
            return float(self.tail_cutoff)
        return math.sqrt(max(0.0, 40.0 - x)) + 10.0


DEFAULT_ACCURACY = IntegralAccuracy()


def _check_domain(stat, x):
    if math.isnan(x):
        raise DomainError("x is NaN")
    if stat is Statistics.BOSON:
        if x < 0:
            raise DomainError(f"boson integrals need x >= 0, got {x!r}")
        if x < BOSE_ZERO_CLAMP:
            return 0.0
    return float(x)


def _breakpoints(stat, x, cutoff):
    pts = [0.0, cutoff]
    capped_from = 0.0
    if stat is Statistics.FERMION and x < 0:
        r0 = math.sqrt(-x)
        width = min(0.25, 0.5 / r0)
        off = width
        pts.append(r0)
        while off < max(r0, cutoff):
            pts.extend((r0 - off, r0 + off))
            off *= 2.0
        # left of the edge all poles are at distance >= r0 - r; geometric panels suffice
        capped_from = r0
    elif stat is Statistics.BOSON and 0 < x < 1:
        s = math.sqrt(x)
        pts.extend(np.geomspace(s / 16.0, 1.0, math.ceil(math.log2(16.0 / s)) + 1))
    pts = np.unique(np.clip(np.asarray(pts, dtype=float), 0.0, cutoff))
    out = [pts[0]]
    for a, b in pairwise(pts):
        if b >= capped_from and b - a > _MAX_PANEL:
            a0 = max(a, capped_from)
            if a0 > a:
                out.append(a0)
            k = math.ceil((b - a0) / _MAX_PANEL)
            out.extend(a0 + (b - a0) * np.arange(1, k) / k)
        out.append(b)
    return np.asarray(out)


class _PanelRule:
    """High- and low-order nodes on shared panels, stored back to back so that
    the integrand is evaluated once for both rules."""

    def __init__(self, pts):
        a, b = pts[:-1], pts[1:]
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        nodes, weights = [], []
        for t, w in (_GL_HI, _GL_LO):
            nodes.append((mid[:, None] + half[:, None] * t[None, :]).ravel())
            weights.append((half[:, None] * w[None, :]).ravel())
        n_hi = nodes[0].size
        self.nodes = np.concatenate(nodes)
        self.r2 = self.nodes * self.nodes
        self.w_hi = np.concatenate((weights[0], np.zeros(nodes[1].size)))
        self.w_lo = np.concatenate((np.zeros(n_hi), weights[1]))
        self._by_powers = {}

    def matrix(self, powers):
        """Rows ``r^s w_hi`` then ``r^s w_lo`` for each ``s`` in ``powers``."""
        mat = self._by_powers.get(powers)
        if mat is None:
            rs = np.stack([self.nodes ** s for s in powers])
            mat = np.concatenate((rs * self.w_hi, rs * self.w_lo))
            self._by_powers[powers] = mat
        return mat


def _panel_key(stat, x, acc):
    """Snap the panel layout parameters to a fine lattice so that nearby
    ``x`` share cached rules.

    Breakpoints only need to sit near the Fermi edge or the Bose scale, not
    on it, and the embedded error estimate still guards every evaluation. The
    default cutoff is only ever rounded up.
    """
    cutoff = acc.cutoff(x)
    if acc.tail_cutoff is None:
        cutoff = math.ceil(4.0 * cutoff) / 4.0
    if stat is Statistics.FERMION and x < 0:
        r0 = math.sqrt(-x)
        q = min(0.25, 0.5 / r0) / 64.0
        x = -(round(r0 / q) * q) ** 2
    elif stat is Statistics.BOSON and 0 < x < 1:
        x = 4.0 ** (round(16.0 * math.log2(x) / 2.0) / 16.0)
    return stat, x, cutoff


@lru_cache(maxsize=4096)
def _panel_rules(stat, x, cutoff):
    return _PanelRule(_breakpoints(stat, x, cutoff))


def occupancy(tau, u):
    """``1 / (exp(u) + tau)`` evaluated without overflow.

    For bosons ``u`` must be positive.
    """
    u = np.asarray(u, dtype=float)
    # exp overflows to inf where the occupancy underflows to 0 anyway
    with np.errstate(over="ignore"):
        if tau > 0:
            return 1.0 / (np.exp(u) + 1.0)
        return 1.0 / np.expm1(u)


def radial_integrals(tau, x, powers=(0, 2, 4), accuracy=None):
    """Return ``[I_s(tau, x) for s in powers]`` as an array.

    Raises
    ------
    DomainError
        For ``tau = -1`` and ``x < 0``, or for ``I_0`` of a boson at ``x = 0``
        (divergent).
    QuadratureError
        If the embedded lower-order rule disagrees by more than
        ``accuracy.rel_tol``.
    """
    stat = Statistics.parse(tau)
    acc = accuracy or DEFAULT_ACCURACY
    x = _check_domain(stat, x)
    if stat is Statistics.BOSON and x == 0.0 and 0 in powers:
        raise DomainError("I_0 diverges for bosons at x = 0")
    rule = _panel_rules(*_panel_key(stat, x, acc))
    k = len(powers)
    both = rule.matrix(tuple(float(s) for s in powers)) @ occupancy(stat.tau, rule.r2 + x)
    hi, lo = both[:k], both[k:]
    err = np.abs(hi - lo)
    if np.any(err > acc.rel_tol * np.abs(hi)):
        raise QuadratureError(
            f"radial quadrature at tau={stat.tau}, x={x!r} missed rel_tol={acc.rel_tol:g} "
            f"(estimates {err / np.abs(hi)})"
        )
    return hi


def moment0(tau, x, accuracy=None):
    """Number integral ``h_tau(x) = int_{R^3} dp / (exp(|p|^2 + x) + tau)``."""
    stat = Statistics.parse(tau)
    if stat is Statistics.FERMION and x == -math.inf:
        return math.inf
    return FOUR_PI * float(radial_integrals(stat, x, (2,), accuracy)[0])


def moment2(tau, x, accuracy=None):
    """Second moment ``int_{R^3} |p|^2 dp / (exp(|p|^2 + x) + tau)``."""
    stat = Statistics.parse(tau)
    if stat is Statistics.FERMION and x == -math.inf:
        return math.inf
    return FOUR_PI * float(radial_integrals(stat, x, (4,), accuracy)[0])


def moments02(tau, x, accuracy=None):
    """``(moment0, moment2)`` from one quadrature pass."""
    i2, i4 = radial_integrals(tau, x, (2, 4), accuracy)
    return FOUR_PI * float(i2), FOUR_PI * float(i4)


def j_val(tau, x, accuracy=None):
    """``j_tau(x) = h_tau(x) / moment2(x)**(3/5)``.

    ``x = -inf`` is accepted for fermions and returns the analytic limit
    :data:`J_FERMI_LIMIT`.
    """
    stat = Statistics.parse(tau)
    if stat is Statistics.FERMION and x == -math.inf:
        return J_FERMI_LIMIT
    h, m2 = moments02(stat, x, accuracy)
    return h / m2 ** 0.6


def j_lower_limit(tau):
    """``j_tau(l(tau))``: supremum of ``j_tau`` over the admissible domain."""
    stat = Statistics.parse(tau)
    return j_val(stat, stat.lower_limit)


def bose_h_max():
    """``h_{-1}(0) = pi^{3/2} zeta(3/2)``, the largest boson density integral."""
    return moment0(Statistics.BOSON, 0.0)


def inv_moment0(tau, target, accuracy=None):
    """Invert the strictly decreasing ``h_tau`` by bracketing and bisection.

    Raises
    ------
    RangeError
        If ``target <= 0``, or for bosons if ``target`` exceeds ``h_{-1}(0)``.
    ConvergenceError
        If bisection hits its iteration cap.
    """
    return inv_moment0_counted(tau, target, accuracy)[0]


def inv_moment0_counted(tau, target, accuracy=None, bracket=None):
    """Like :func:`inv_moment0` but also returns the bisection count.

    ``bracket`` is an optional ``(lo, hi)`` guess for the root, for instance
    from neighbouring solves. It is trusted only if the root lands strictly
    inside it; otherwise the full bracket search runs.
    """
    stat = Statistics.parse(tau)
    target = float(target)
    if not target > 0 or math.isnan(target):
        raise RangeError(f"h_tau^-1 needs a positive target, got {target!r}")
    if target == math.inf:
        if stat is Statistics.FERMION:
            return -math.inf, 0
        raise RangeError("h_{-1}^-1(inf) does not exist")

    def h(x):
        return moment0(stat, x, accuracy)

    if bracket is not None:
        lo, hi = bracket
        if stat is Statistics.BOSON:
            lo = max(lo, 0.0)
        if lo < hi:
            x, it = bisect_decreasing(h, target, lo, hi)
            edge = 4.0 * BISECT_RTOL * max(1.0, abs(x))
            if lo + edge < x < hi - edge:
                return x, it

    if stat is Statistics.BOSON:
        hmax = h(0.0)
        if target > hmax * (1.0 + BOSE_EDGE_SLACK):
            raise RangeError(
                f"target {target!r} exceeds h_-1(0) = {hmax!r}, the boson maximum"
            )
        if target >= hmax:
            return 0.0, 0
        lo = 0.0
        hi = expand_up(h, target, 1.0)
    else:
        lo = expand_down(h, target, -50.0)
        hi = expand_up(h, target, lo + 1.0)
    return bisect_decreasing(h, target, lo, hi)


def _density_scale(m1, m2, N1, N2):
    # kappa in y(x) = h_{tau'}^{-1}(kappa h_tau(x))
    for name, v in (("m1", m1), ("m2", m2), ("N1", N1), ("N2", N2)):
        if not v > 0:
            raise DomainError(f"{name} must be positive, got {v!r}")
    return (m1 / m2) ** 1.5 * (N2 / N1)


def y_of_x(tau, tau2, m1, m2, N1, N2, x, accuracy=None):
    """Fugacity of species 2 that matches the density ratio ``N1/N2``.

    ``m1^{3/2} h_tau(x) / (m2^{3/2} h_tau2(y)) = N1/N2``.
    """
    kappa = _density_scale(m1, m2, N1, N2)
    stat2 = Statistics.parse(tau2)
    if Statistics.parse(tau) is Statistics.FERMION and x == -math.inf:
        if stat2 is Statistics.FERMION:
            return -math.inf
        raise RangeError("boson partner cannot match an infinite fermion density")
    return inv_moment0(stat2, kappa * moment0(tau, x, accuracy), accuracy)


def admissible_lower_bound(tau, tau2, m1, m2, N1, N2, accuracy=None):
    """Left end of the interval on which ``g_{tau,tau2}`` is defined and decreasing.

    ``max(l(tau), h_tau^{-1}((m2/m1)^{3/2} (N1/N2) h_tau2(l(tau2))))``, with
    ``h_tau^{-1}`` of a value above the boson maximum read as "below 0".
    """
    stat, stat2 = Statistics.parse(tau), Statistics.parse(tau2)
    kappa = _density_scale(m1, m2, N1, N2)
    if stat2 is Statistics.FERMION:
        return stat.lower_limit
    t = bose_h_max() / kappa
    if stat is Statistics.BOSON and t >= bose_h_max():
        return 0.0
    return max(stat.lower_limit, inv_moment0(stat, t, accuracy))


def _g_unchecked(stat, stat2, m1, m2, kappa, x, accuracy=None):
    return _g_and_y(stat, stat2, m1, m2, kappa, x, accuracy)[0]


def _g_and_y(stat, stat2, m1, m2, kappa, x, accuracy=None, y_bracket=None):
    if x == -math.inf:
        # both fermions: y -> -inf with (-y)^{3/2} = kappa (-x)^{3/2} asymptotically
        g = J_FERMI_LIMIT * m1 ** 1.5 / (m1 ** 1.5 + m2 ** 1.5 * kappa ** (5.0 / 3.0)) ** 0.6
        return g, -math.inf
    h1, e1 = moments02(stat, x, accuracy)
    y = inv_moment0_counted(stat2, kappa * h1, accuracy, y_bracket)[0]
    e2 = moment2(stat2, y, accuracy)
    return m1 ** 1.5 * h1 / (m1 ** 1.5 * e1 + m2 ** 1.5 * e2) ** 0.6, y


class GSweep:
    """``g(x)`` for repeated evaluation inside a root search.

    ``y(x)`` is increasing, so the partner fugacities of the nearest
    evaluated neighbours of ``x`` bracket ``y(x)``; the inner inversion then
    starts from that narrow bracket instead of searching from scratch.
    """

    def __init__(self, stat, stat2, m1, m2, kappa, accuracy=None):
        self._args = (stat, stat2, m1, m2, kappa)
        self._accuracy = accuracy
        self._xs = []
        self._ys = []

    def __call__(self, x):
        i = bisect.bisect_left(self._xs, x)
        bracket = None
        if 0 < i < len(self._xs):
            lo, hi = self._ys[i - 1], self._ys[i]
            if math.isfinite(lo) and math.isfinite(hi):
                pad = 1e-11 * max(1.0, abs(lo), abs(hi))
                bracket = (lo - pad, hi + pad)
        g, y = _g_and_y(*self._args, x, self._accuracy, bracket)
        self._xs.insert(i, x)
        self._ys.insert(i, y)
        return g


def g_val(tau, tau2, m1, m2, N1, N2, x, accuracy=None):
    """``g_{tau,tau2}(x) = k_{tau,tau2}(x, y(x))``.

    Raises :class:`DomainError` below :func:`admissible_lower_bound`. At
    ``x = -inf`` (fermion-fermion only) the closed-form limit is returned.
    """
    stat, stat2 = Statistics.parse(tau), Statistics.parse(tau2)
    kappa = _density_scale(m1, m2, N1, N2)
    lower = admissible_lower_bound(stat, stat2, m1, m2, N1, N2, accuracy)
    if x < lower - 1e-12 * max(1.0, abs(lower)):
        raise DomainError(f"g is only defined for x >= {lower!r}, got {x!r}")
    if x == -math.inf and stat2 is not Statistics.FERMION:
        raise DomainError("g(-inf) requires a fermion partner")
    return _g_unchecked(stat, stat2, m1, m2, kappa, max(x, lower), accuracy)


def d_func(tau, x, accuracy=None):
    """``D_tau(x) = 9/5 I_2^2 - I_4 I_0`` (negative on the admissible domain).

    For bosons at ``x = 0`` ``I_0`` diverges and ``-inf`` is returned.
    """
    stat = Statistics.parse(tau)
    x = _check_domain(stat, x)
    if stat is Statistics.BOSON and x == 0.0:
        return -math.inf
    i0, i2, i4 = radial_integrals(stat, x, (0, 2, 4), accuracy)
    return float(1.8 * i2 * i2 - i4 * i0)
