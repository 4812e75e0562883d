"""Occupancy fields on a cell-centred cubic momentum grid.

Arrays are indexed ``values[ix, iy, iz]``. All reductions run in a fixed
order so that repeated evaluations are bit-identical, and the first moment
is accumulated as a sum over mirror pairs ``(p, -p)``, which makes it exactly
zero for fields that are even in ``p``.
"""

import math
import os
import struct
import tempfile
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .equilibrium import SpeciesMoments, _vec3
from .errors import DomainError
from .quantum_integrals import Statistics, occupancy

FERMION_SLACK = 1e-12
# 1 - e^u rounds to 1 for u < -37; the largest double below 1 is the closest
# value that still honours the strict Pauli bound
FERMION_MAX = float(np.nextafter(1.0, 0.0))
TAIL_EXPONENT = 64.0

SNAPSHOT_MAGIC = b"QBGKSNAP"
SNAPSHOT_VERSION = 1
_SNAPSHOT_HEADER = struct.Struct("<8sIIddi")


@dataclass(frozen=True)
class MomentumGrid:
    """Uniform grid of ``n**3`` cells covering ``[-p_max, p_max]**3``."""

    p_max: float
    n: int

    def __post_init__(self):
        if not self.p_max > 0:
            raise ValueError(f"p_max must be positive, got {self.p_max!r}")
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 4, got {self.n!r}")
        object.__setattr__(self, "p_max", float(self.p_max))
        object.__setattr__(self, "n", int(self.n))

    @property
    def dp(self):
        return 2.0 * self.p_max / self.n

    @property
    def cell_volume(self):
        return self.dp ** 3

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @cached_property
    def nodes(self):
        # half-integer multiples of dp: exactly antisymmetric about 0
        return (np.arange(self.n) + 0.5 - 0.5 * self.n) * self.dp

    @cached_property
    def mesh(self):
        return np.meshgrid(self.nodes, self.nodes, self.nodes, indexing="ij")

    @cached_property
    def p_squared(self):
        px, py, pz = self.mesh
        return px * px + py * py + pz * pz

    @classmethod
    def auto(cls, params, n):
        """Smallest box whose boundary occupancies are negligible for every
        species in ``params``, an iterable of ``(a, b, c, m)``."""
        return cls(p_max=max(required_p_max(*prm) for prm in params), n=n)

    def to_dict(self):
        return {"p_max": self.p_max, "n": self.n}


def required_p_max(a, b, c, m):
    """Half-width beyond which ``exp(-u) < e**-64`` for the given equilibrium.

    Reduces to ``m |b| + 8 sqrt(m / a)`` for ``c >= 0``.
    """
    return m * float(np.linalg.norm(_vec3(b))) + math.sqrt(m / a) * math.sqrt(
        TAIL_EXPONENT + max(0.0, -c)
    )


@dataclass(eq=False)
class DistributionField:
    """Occupancies of one species on a :class:`MomentumGrid`."""

    values: np.ndarray
    tau: Statistics
    m: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.tau = Statistics.parse(self.tau)
        self.m = float(self.m)
        if not self.m > 0:
            raise ValueError("mass must be positive")

    def check(self):
        """Raise :class:`DomainError` unless ``0 <= f`` (and ``f <= 1`` for fermions)."""
        v = self.values
        if not np.all(np.isfinite(v)):
            raise DomainError("occupancy contains non-finite values")
        if v.min(initial=0.0) < 0:
            raise DomainError(f"negative occupancy {v.min()!r}")
        if self.tau is Statistics.FERMION and v.max(initial=0.0) > 1.0 + FERMION_SLACK:
            raise DomainError(f"fermion occupancy {v.max()!r} exceeds 1")
        return self

    def copy(self):
        return DistributionField(self.values.copy(), self.tau, self.m)


def equilibrium_values(a, b, c, m, tau, grid):
    """Raw array ``1/(exp(a |p - m b|^2 / m + c) + tau)`` on ``grid``."""
    b = _vec3(b)
    px, py, pz = grid.mesh
    dx, dy, dz = px - m * b[0], py - m * b[1], pz - m * b[2]
    u = (a / m) * (dx * dx + dy * dy + dz * dz) + c
    vals = occupancy(int(tau), u)
    if int(tau) > 0:
        np.minimum(vals, FERMION_MAX, out=vals)
    return vals


def eval_equilibrium(a, b, c, m, tau, grid):
    """Fermi-Dirac or Bose-Einstein field with coefficients ``(a, b, c)``."""
    stat = Statistics.parse(tau)
    if not (a > 0 and math.isfinite(a)):
        raise DomainError(f"a must be positive and finite, got {a!r}")
    if not math.isfinite(c):
        raise DomainError(f"c must be finite, got {c!r}")
    if stat is Statistics.BOSON and not c > 0:
        raise DomainError(f"boson equilibrium needs c > 0, got {c!r}")
    return DistributionField(equilibrium_values(a, b, c, m, stat, grid), stat, m)


def _first_moment(values, grid, axis):
    others = tuple(ax for ax in range(3) if ax != axis)
    marginal = values.sum(axis=others)
    half = grid.n // 2
    pos = grid.nodes[half:]
    # pair node k with its mirror n-1-k so that even fields give exactly zero
    return float(np.dot(pos, marginal[half:] - marginal[half - 1 :: -1]))


def moment_sums(values, grid, m):
    """``(N, P, E)`` of a raw array, without building a :class:`SpeciesMoments`."""
    vol = grid.cell_volume
    N = vol * float(values.sum())
    P = vol * np.array([_first_moment(values, grid, ax) for ax in range(3)])
    E = vol * float((values * grid.p_squared).sum()) / (2.0 * m)
    return N, P, E


def discrete_moments(field, grid):
    """Midpoint-rule moments ``dp^3 sum f {1, p, |p|^2 / (2m)}``."""
    N, P, E = moment_sums(field.values, grid, field.m)
    return SpeciesMoments(N=N, P=P, E=E)


def entropy_density(values, tau):
    """Pointwise ``f ln f + (1 - f) ln(1 - f)`` (fermion) or
    ``f ln f - (1 + f) ln(1 + f)`` (boson).

    ``x ln x`` takes its limit value 0 at ``x = 0``, so ``f = 0`` (and
    ``f = 1`` for fermions) contributes exactly nothing.
    """
    stat = Statistics.parse(tau)
    v = np.asarray(values, dtype=float)
    if v.size and v.min() < 0:
        raise DomainError(f"negative occupancy {v.min()!r}")
    if stat is Statistics.FERMION:
        if v.size and v.max() > 1.0 + FERMION_SLACK:
            raise DomainError(f"fermion occupancy {v.max()!r} exceeds 1")
        f = np.clip(v, 0.0, 1.0)
        return _xlogx(f) + _xlogx(1.0 - f)
    return _xlogx(v) - (1.0 + v) * np.log1p(v)


def _xlogx(x):
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, x * np.log(safe), 0.0)


def h_functional(field1, field2, grid):
    """Discrete quantum H-functional of a two-species state."""
    total = 0.0
    for fld in (field1, field2):
        total += float(entropy_density(fld.values, fld.tau).sum())
    return grid.cell_volume * total


@dataclass(frozen=True, eq=False)
class VelocityMoments:
    """Moments of the velocity density ``fbar(v) = m^3 f(m v)``."""

    N: float
    u: np.ndarray
    E: float


def p_to_v_moments(mom, m):
    """Express momentum-space moments through the velocity density.

    Mass and energy integrals coincide; the momentum becomes the mean
    velocity ``P / (m N)``.
    """
    if not m > 0:
        raise ValueError("mass must be positive")
    return VelocityMoments(N=mom.N, u=mom.P / (m * mom.N), E=mom.E)


def v_to_p_moments(vmom, m):
    if not m > 0:
        raise ValueError("mass must be positive")
    return SpeciesMoments(N=vmom.N, P=m * vmom.N * np.asarray(vmom.u, dtype=float), E=vmom.E)


def velocity_density(field, grid):
    """``(v_nodes, fbar)`` where ``fbar = m^3 f`` on nodes ``v = p / m``."""
    return grid.nodes / field.m, field.m ** 3 * field.values


# -- snapshot files ---------------------------------------------------------


def snapshot_bytes(field, grid):
    header = _SNAPSHOT_HEADER.pack(
        SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.n, grid.p_max, field.m, int(field.tau)
    )
    body = np.asarray(field.values, dtype="<f8").ravel(order="F").tobytes()
    return header + body


def write_snapshot(path, field, grid):
    """Write a field atomically in the little-endian snapshot layout."""
    if field.values.shape != grid.shape:
        raise ValueError("field shape does not match grid")
    _atomic_write(path, snapshot_bytes(field, grid))


def read_snapshot(path):
    """Return ``(field, grid)`` from a snapshot file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _SNAPSHOT_HEADER.size:
        raise ValueError(f"{path}: truncated snapshot header")
    magic, version, n, p_max, m, tau = _SNAPSHOT_HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    count = n ** 3
    body = raw[_SNAPSHOT_HEADER.size :]
    if len(body) != 8 * count:
        raise ValueError(f"{path}: expected {count} doubles, found {len(body) / 8:g}")
    grid = MomentumGrid(p_max=p_max, n=n)
    values = np.frombuffer(body, dtype="<f8").reshape(grid.shape, order="F").astype(float)
    return DistributionField(values, tau, m), grid


def _atomic_write(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
