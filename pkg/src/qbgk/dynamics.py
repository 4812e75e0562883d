"""Time integration of the two-species quantum BGK system.

Two modes are supported: space-homogeneous (a single cell, relaxation only)
and a periodic 1D slab in ``x`` with first-order upwind transport along
``p_x``. Transport and relaxation are combined by Lie (default) or Strang
splitting.

The relaxation substep freezes the attractors at the start of the step and
integrates ``df/dt = nu_intra (M_ii - f) + nu_inter (M_ij - f)`` exactly:

    f <- e^{-nu dt} f + (1 - e^{-nu dt}) (nu_intra M_ii + nu_inter M_ij) / nu,

with ``nu = nu_intra + nu_inter``. This is a convex combination, so
``0 <= f < 1`` is preserved for fermions, and when the attractors reproduce
the grid moments of ``f`` the step conserves mass, momentum and energy to
round-off.
"""

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .discrete import fit_inter_discrete, fit_intra_discrete
from .distributions import (
    DistributionField,
    MomentumGrid,
    entropy_density,
    equilibrium_values,
    moment_sums,
    read_snapshot,
)
from .equilibrium import MixtureProblem, SpeciesMoments, solve_inter, solve_intra
from .errors import (
    BoundViolationError,
    CFLError,
    ConvergenceError,
    InfeasibleError,
    QBGKError,
)
from .quantum_integrals import Statistics

MODES = ("homogeneous", "slab1d")
SPLITTINGS = ("lie", "strang")
DIAG_HEADER = ("t", "mass1", "mass2", "px", "py", "pz", "energy", "H", "maxf1", "maxf2")


@dataclass(frozen=True)
class Species:
    mass: float
    stat: Statistics

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"species mass must be positive, got {self.mass!r}")
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "stat", Statistics.parse(self.stat))


@dataclass(frozen=True)
class SimConfig:
    """Run parameters. ``init`` is a plain dict, see :func:`initial_state`."""

    dt: float
    t_end: float
    grid: MomentumGrid
    species: tuple
    init: dict = field(default_factory=dict)
    mode: str = "homogeneous"
    nx: int = 1
    x_length: float = 1.0
    diag_every: int = 1
    nu_intra: float = 1.0
    nu_inter: float = 1.0
    splitting: str = "lie"
    discrete_consistent: bool = True

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        if len(self.species) != 2:
            raise ValueError("exactly two species are required")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.splitting not in SPLITTINGS:
            raise ValueError(f"splitting must be one of {SPLITTINGS}, got {self.splitting!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")
        if int(self.nx) != self.nx or self.nx < 1:
            raise ValueError("nx must be a positive integer")
        if self.mode == "homogeneous" and self.nx != 1:
            raise ValueError("homogeneous mode uses exactly one cell")
        if not self.x_length > 0:
            raise ValueError("x_length must be positive")
        if int(self.diag_every) != self.diag_every or self.diag_every < 1:
            raise ValueError("diag_every must be a positive integer")
        if not (self.nu_intra >= 0 and self.nu_inter >= 0 and self.nu_intra + self.nu_inter > 0):
            raise ValueError("collision frequencies must be non-negative with a positive sum")
        if self.mode == "slab1d" and self.cfl > 1.0:
            raise CFLError(f"CFL number {self.cfl:.6g} exceeds 1")

    @property
    def dx(self):
        return self.x_length / self.nx

    @property
    def cfl(self):
        # fastest node is p_max - dp/2, not the grid edge
        fast = float(self.grid.nodes[-1])
        return self.dt * fast / (min(s.mass for s in self.species) * self.dx)


class DiagRecord(NamedTuple):
    t: float
    mass1: float
    mass2: float
    px: float
    py: float
    pz: float
    energy: float
    H: float
    maxf1: float
    maxf2: float


@dataclass
class SimState:
    """Occupancies of both species in every cell, shape ``(nx, n, n, n)``.

    ``coeffs`` caches the last discrete coefficients per cell as warm starts.
    """

    config: SimConfig
    t: float
    f: list
    step: int = 0
    diagnostics: list = field(default_factory=list)
    coeffs: list = None

    def __post_init__(self):
        self.f = [np.asarray(v, dtype=float) for v in self.f]
        shape = (self.config.nx,) + self.config.grid.shape
        for v in self.f:
            if v.shape != shape:
                raise ValueError(f"field shape {v.shape} != {shape}")
        if self.coeffs is None:
            self.coeffs = [None] * self.config.nx

    @property
    def grid(self):
        return self.config.grid

    def field(self, species, cell=0):
        sp = self.config.species[species]
        return DistributionField(self.f[species][cell], sp.stat, sp.mass)

    def copy(self):
        return replace(
            self, f=[v.copy() for v in self.f], diagnostics=list(self.diagnostics),
            coeffs=list(self.coeffs),
        )


# -- diagnostics ------------------------------------------------------------


def diagnose(state):
    cfg = state.config
    grid = cfg.grid
    w = cfg.dx if cfg.mode == "slab1d" else 1.0
    mass = [0.0, 0.0]
    mom = np.zeros(3)
    energy = 0.0
    H = 0.0
    for cell in range(cfg.nx):
        for s, sp in enumerate(cfg.species):
            vals = state.f[s][cell]
            N, P, E = moment_sums(vals, grid, sp.mass)
            mass[s] += w * N
            mom += w * P
            energy += w * E
            H += w * grid.cell_volume * float(entropy_density(vals, sp.stat).sum())
    maxf = [float(v.max()) for v in state.f]
    return DiagRecord(state.t, mass[0], mass[1], mom[0], mom[1], mom[2], energy, H, maxf[0], maxf[1])


def diagnostics_csv(records):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DIAG_HEADER)
    for rec in records:
        writer.writerow([format(v, ".17g") for v in rec])
    return buf.getvalue()


def read_diagnostics_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != DIAG_HEADER:
            raise ValueError(f"unexpected diagnostics header {header}")
        return [DiagRecord(*map(float, row)) for row in reader]


# -- relaxation -------------------------------------------------------------


def _with_context(err, **ctx):
    if isinstance(err, InfeasibleError):
        merged = dict(err.context)
        merged.update(ctx)
        return InfeasibleError(err.reason, err.relation, **merged)
    extras = ", ".join(f"{k}={v}" for k, v in ctx.items())
    return type(err)(f"{err} [{extras}]")


def _intra_coeffs(cfg, s, mom, guess):
    sp = cfg.species[s]
    if not cfg.discrete_consistent:
        return solve_intra(sp.mass, sp.stat, mom)
    if guess is not None:
        try:
            return fit_intra_discrete(mom, sp.mass, sp.stat, cfg.grid, guess)
        except ConvergenceError:
            pass
    start = solve_intra(sp.mass, sp.stat, mom)
    return fit_intra_discrete(mom, sp.mass, sp.stat, cfg.grid, start)


def _inter_coeffs(cfg, mom1, mom2, guess):
    s1, s2 = cfg.species
    if not cfg.discrete_consistent:
        return solve_inter(MixtureProblem(s1.mass, s2.mass, s1.stat, s2.stat, mom1, mom2))
    args = (mom1, mom2, s1.mass, s2.mass, s1.stat, s2.stat, cfg.grid)
    if guess is not None:
        try:
            return fit_inter_discrete(*args, guess)
        except ConvergenceError:
            pass
    start = solve_inter(MixtureProblem(s1.mass, s2.mass, s1.stat, s2.stat, mom1, mom2))
    return fit_inter_discrete(*args, start)


def _relax_cell(cfg, cell, f1, f2, cached, dt):
    grid = cfg.grid
    fields = (f1, f2)
    moms = []
    for s, sp in enumerate(cfg.species):
        N, P, E = moment_sums(fields[s], grid, sp.mass)
        moms.append(SpeciesMoments(N, P, E))
    present = [m.N > 0 for m in moms]
    if not any(present):
        return f1, f2, cached
    old = cached or (None, None, None)

    intra = [None, None]
    for s in range(2):
        if present[s]:
            try:
                intra[s] = _intra_coeffs(cfg, s, moms[s], old[s])
            except InfeasibleError as err:
                raise _with_context(err, cell=cell, species=s + 1, stage="intra") from err

    inter = None
    if all(present):
        try:
            inter = _inter_coeffs(cfg, moms[0], moms[1], old[2])
        except InfeasibleError as err:
            raise _with_context(err, cell=cell, stage="inter") from err

    nu = cfg.nu_intra + cfg.nu_inter
    decay = math.exp(-nu * dt)
    gain = -math.expm1(-nu * dt)
    out = []
    for s, sp in enumerate(cfg.species):
        if not present[s]:
            out.append(fields[s])
            continue
        ci = intra[s]
        m_ii = equilibrium_values(ci.a, ci.b, ci.c, sp.mass, sp.stat, grid)
        if inter is None:
            # lone species: the mixture relations collapse onto the single-species ones
            m_ij = m_ii
        else:
            c_ij = inter.c12 if s == 0 else inter.c21
            m_ij = equilibrium_values(inter.a, inter.b, c_ij, sp.mass, sp.stat, grid)
        target = (cfg.nu_intra * m_ii + cfg.nu_inter * m_ij) / nu
        new = decay * fields[s] + gain * target
        lo = float(new.min())
        if lo < 0 or (sp.stat is Statistics.FERMION and float(new.max()) >= 1.0):
            raise BoundViolationError(
                f"occupancy left its range after relaxation (min={lo!r}, max={float(new.max())!r}) "
                f"[cell={cell}, species={s + 1}]"
            )
        out.append(new)
    return out[0], out[1], (intra[0], intra[1], inter)


def _workers():
    try:
        return max(1, int(os.environ.get("THREADS", "1")))
    except ValueError:
        return 1


def relax_step(state, dt):
    """One frozen-attractor relaxation step in every cell; returns a new state."""
    cfg = state.config
    new = state.copy()

    def work(cell):
        return _relax_cell(cfg, cell, state.f[0][cell], state.f[1][cell], state.coeffs[cell], dt)

    workers = min(_workers(), cfg.nx)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, range(cfg.nx)))
    else:
        results = [work(cell) for cell in range(cfg.nx)]
    for cell, (g1, g2, cached) in enumerate(results):
        new.f[0][cell] = g1
        new.f[1][cell] = g2
        new.coeffs[cell] = cached
    return new


# -- transport --------------------------------------------------------------


def courant_numbers(grid, mass, dt, dx):
    """Signed Courant number ``p_x dt / (m dx)`` of every ``p_x`` node."""
    return grid.nodes * dt / (mass * dx)


def upwind(values, nu):
    """First-order upwind update along axis 0 (periodic), written as a convex
    combination so that unit Courant number gives an exact shift.

    ``values`` has shape ``(nx, n, ...)``, ``nu`` the Courant numbers of the
    ``n`` nodes along axis 1.
    """
    shape = (1, -1) + (1,) * (values.ndim - 2)
    nu = np.asarray(nu, dtype=float).reshape(shape)
    pos = np.clip(nu, 0.0, None)
    neg = np.clip(-nu, 0.0, None)
    return (
        (1.0 - pos - neg) * values
        + pos * np.roll(values, 1, axis=0)
        + neg * np.roll(values, -1, axis=0)
    )


def transport_step(state, dt):
    """Advect both species along ``x`` with velocity ``p_x / m``."""
    cfg = state.config
    if cfg.mode != "slab1d":
        raise ValueError("transport is only defined in slab1d mode")
    new = state.copy()
    for s, sp in enumerate(cfg.species):
        nu = courant_numbers(cfg.grid, sp.mass, dt, cfg.dx)
        peak = float(np.max(np.abs(nu)))
        if peak > 1.0 + 1e-12:
            raise CFLError(f"Courant number {peak:.6g} exceeds 1 for species {s + 1}")
        new.f[s] = upwind(state.f[s], nu)
    return new


# -- initial data and driver ------------------------------------------------


def _cell_centres(cfg):
    return (np.arange(cfg.nx) + 0.5) * cfg.dx


def initial_state(cfg):
    """Build the initial :class:`SimState` from ``cfg.init``.

    ``init["kind"]`` is one of

    ``"equilibria"``
        ``species``: two dicts with ``a``, ``b``, ``c``; every cell gets the
        same pair of shifted quantum equilibria.
    ``"cosine"``
        As above, with the fugacity of each species modulated in ``x`` so that
        ``exp(-c)`` carries the factor ``1 + amplitude cos(2 pi k x / L)``.
    ``"snapshot"``
        ``paths``: two snapshot files, copied into every cell.
    """
    init = cfg.init or {}
    kind = init.get("kind", "equilibria")
    grid = cfg.grid
    shape = (cfg.nx,) + grid.shape
    f = [np.empty(shape), np.empty(shape)]
    if kind in ("equilibria", "cosine"):
        specs = init["species"]
        if len(specs) != 2:
            raise ValueError("init.species needs two entries")
        amp = float(init.get("amplitude", 0.0)) if kind == "cosine" else 0.0
        k = float(init.get("wavenumber", 1.0))
        mod = 1.0 + amp * np.cos(2.0 * math.pi * k * _cell_centres(cfg) / cfg.x_length)
        if np.any(mod <= 0):
            raise ValueError("cosine amplitude must keep 1 + A cos(...) positive")
        for s, (sp, prm) in enumerate(zip(cfg.species, specs)):
            for cell in range(cfg.nx):
                c = float(prm["c"]) - math.log(mod[cell])
                f[s][cell] = DistributionField(
                    equilibrium_values(float(prm["a"]), prm.get("b", (0, 0, 0)), c, sp.mass, sp.stat, grid),
                    sp.stat, sp.mass,
                ).check().values
                if sp.stat is Statistics.BOSON and not c > 0:
                    raise ValueError(f"boson fugacity must stay positive (cell {cell}: c={c!r})")
    elif kind == "snapshot":
        paths = init["paths"]
        for s, (sp, path) in enumerate(zip(cfg.species, paths)):
            fld, g = read_snapshot(path)
            if g != grid:
                raise ValueError(f"{path}: snapshot grid {g} does not match config grid {grid}")
            if fld.tau is not sp.stat or fld.m != sp.mass:
                raise ValueError(f"{path}: snapshot species does not match config species {s + 1}")
            fld.check()
            f[s][:] = fld.values
    else:
        raise ValueError(f"unknown init kind {kind!r}")
    return SimState(cfg, 0.0, f)


def _advance(state, dt):
    cfg = state.config
    if cfg.mode == "slab1d":
        if cfg.splitting == "strang":
            state = transport_step(state, 0.5 * dt)
            state = relax_step(state, dt)
            state = transport_step(state, 0.5 * dt)
        else:
            state = transport_step(state, dt)
            state = relax_step(state, dt)
    else:
        state = relax_step(state, dt)
    state.t += dt
    state.step += 1
    return state


def step_times(cfg):
    """Step sizes that land exactly on ``t_end``."""
    n_full = math.floor(cfg.t_end / cfg.dt + 1e-9)
    steps = [cfg.dt] * n_full
    rest = cfg.t_end - n_full * cfg.dt
    if rest > 1e-12 * max(1.0, cfg.t_end):
        steps.append(rest)
    return steps


def run(config, state=None, callback=None):
    """Integrate from ``state`` (default: :func:`initial_state`) to ``t_end``.

    Diagnostics are recorded at ``t = 0``, every ``diag_every`` steps and at
    the final step. Errors are re-raised with the step index and time.
    """
    if state is None:
        state = initial_state(config)
    else:
        state = state.copy()
    state.diagnostics.append(diagnose(state))
    steps = step_times(config)
    for k, dt in enumerate(steps):
        try:
            state = _advance(state, dt)
        except QBGKError as err:
            raise _with_context(err, step=k, t=state.t) from err
        if (k + 1) % config.diag_every == 0 or k == len(steps) - 1:
            state.diagnostics.append(diagnose(state))
        if callback is not None:
            callback(state)
    return state
