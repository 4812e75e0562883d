"""Self-check suite behind ``qbgk verify``.

Every check returns a :class:`CheckResult`; tolerances are multiplied by
``tol_scale`` so that tests can force the failure path.
"""

import math
import time
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import oracle
from .distributions import (
    MomentumGrid,
    discrete_moments,
    eval_equilibrium,
    required_p_max,
)
from .dynamics import SimConfig, Species, run
from .equilibrium import (
    MixtureProblem,
    SpeciesMoments,
    equilibrium_moments,
    solve_inter,
    solve_intra,
    verify_coeffs,
)
from .quantum_integrals import (
    IntegralAccuracy,
    Statistics,
    admissible_lower_bound,
    d_func,
    g_val,
    inv_moment0,
    j_val,
    moment0,
    moment2,
)

FERMION_GRID = (-10.0, -5.0, -1.0, 0.0, 1.0, 5.0, 10.0)
BOSON_GRID = (0.1, 0.5, 1.0, 5.0, 10.0)
PAIRS = ((1, 1), (1, -1), (-1, -1))
MASS_RATIOS = (1.0, 2.0, 10.0)
# (a, b, c) with the fugacity of a fermion slot shifted by FERMION_SHIFT
PARAM_SETS = (
    (1.0, (0.0, 0.0, 0.0), 0.5, 0.3),
    (0.7, (0.2, -0.1, 0.3), 1.5, 2.0),
    (2.0, (-0.5, 0.0, 0.1), 3.0, 0.8),
)
FERMION_SHIFT = -3.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def increasing_samples(tau, n=60, lo=None, hi=12.0):
    """``n`` increasing sample points of the admissible domain of ``tau``."""
    stat = Statistics.parse(tau)
    if lo is None:
        lo = 0.0 if stat is Statistics.BOSON else -15.0
    return np.linspace(lo, hi, n)


def strictly_decreasing(values):
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) < 0))


# -- forward-constructed mixture cases --------------------------------------


@dataclass(frozen=True)
class RoundTripCase:
    tau1: int
    tau2: int
    m1: float
    m2: float
    a: float
    b: tuple
    c12: float
    c21: float

    def problem(self):
        mom1 = equilibrium_moments(self.a, self.b, self.c12, self.m1, self.tau1)
        mom2 = equilibrium_moments(self.a, self.b, self.c21, self.m2, self.tau2)
        return MixtureProblem(self.m1, self.m2, self.tau1, self.tau2, mom1, mom2)


def roundtrip_cases():
    """27 cases: three statistics pairs, three mass ratios, three parameter sets."""
    cases = []
    for (t1, t2), ratio, (a, b, c1, c2) in product(PAIRS, MASS_RATIOS, PARAM_SETS):
        c12 = c1 + (FERMION_SHIFT if t1 == 1 else 0.0)
        c21 = c2 + (FERMION_SHIFT if t2 == 1 else 0.0)
        cases.append(RoundTripCase(t1, t2, 1.0, ratio, a, b, c12, c21))
    return cases


def roundtrip_error(case):
    """Largest relative deviation of the recovered ``(a, b, c12, c21)``.

    Components are compared relative to ``max(1, |exact|)``, so that zero
    velocities and fugacities are measured absolutely.
    """
    got = solve_inter(case.problem())
    pairs = [(got.a, case.a), (got.c12, case.c12), (got.c21, case.c21)]
    pairs += list(zip(got.b, case.b))
    return max(abs(x - y) / max(1.0, abs(y)) for x, y in pairs), got


# -- individual checks ------------------------------------------------------


def check_oracle(scale=1.0):
    tol = 1e-10 * scale
    worst = 0.0
    for tau, grid in ((1, FERMION_GRID), (-1, BOSON_GRID)):
        for x in grid:
            for fn, ref in ((moment0, oracle.moment0_oracle), (moment2, oracle.moment2_oracle)):
                worst = max(worst, abs(fn(tau, x) / ref(tau, x) - 1.0))
    return worst <= tol, f"max rel err {worst:.2e} (tol {tol:.0e})"


def check_monotone(scale=1.0):
    bad = []
    for tau in (1, -1):
        xs = increasing_samples(tau)
        for name, fn in (("h", moment0), ("moment2", moment2), ("j", j_val)):
            if not strictly_decreasing([fn(tau, x) for x in xs]):
                bad.append(f"{name}{tau:+d}")
    return not bad, "all strictly decreasing" if not bad else "not decreasing: " + ", ".join(bad)


def g_samples(tau1, tau2, m1, m2, N1, N2, n=50):
    lower = admissible_lower_bound(tau1, tau2, m1, m2, N1, N2)
    lo = -15.0 if lower == -math.inf else lower
    return np.linspace(lo, lo + 15.0, n)


def check_g_monotone(scale=1.0):
    bad = []
    for (t1, t2), ratio in product(PAIRS, MASS_RATIOS):
        xs = g_samples(t1, t2, 1.0, ratio, 1.0, 0.7)
        vals = [g_val(t1, t2, 1.0, ratio, 1.0, 0.7, x) for x in xs]
        if not strictly_decreasing(vals):
            bad.append(f"({t1:+d},{t2:+d}) m2/m1={ratio:g}")
    return not bad, "9 configurations decreasing" if not bad else "not decreasing: " + "; ".join(bad)


def check_d_negative(scale=1.0):
    worst = -math.inf
    for tau in (1, -1):
        xs = increasing_samples(tau, lo=-15.0 if tau == 1 else 0.01, hi=40.0)
        worst = max(worst, max(d_func(tau, x) for x in xs))
    return worst < 0, f"max D = {worst:.3e}"


def check_inverse(scale=1.0):
    tol = 1e-9 * scale
    worst = 0.0
    for tau in (1, -1):
        for x in increasing_samples(tau, n=20, lo=-10.0 if tau == 1 else 0.05, hi=10.0):
            worst = max(worst, abs(inv_moment0(tau, moment0(tau, x)) - x) / max(1.0, abs(x)))
    return worst <= tol, f"max |h^-1(h(x)) - x| {worst:.2e} (tol {tol:.0e})"


def check_roundtrip(scale=1.0):
    tol = 1e-8 * scale
    worst = 0.0
    worst_res = 0.0
    cases = roundtrip_cases()
    for case in cases:
        err, got = roundtrip_error(case)
        worst = max(worst, err)
        worst_res = max(worst_res, verify_coeffs(got, case.problem()).max_residual)
    ok = worst <= tol and worst_res <= tol
    return ok, f"{len(cases)} cases, coeff err {worst:.2e}, residual {worst_res:.2e} (tol {tol:.0e})"


def check_reduction(scale=1.0):
    tol = 1e-10 * scale
    worst = 0.0
    for tau, m, mom in (
        (1, 1.0, SpeciesMoments(1.0, (0.2, 0.0, 0.0), 1.3)),
        (-1, 2.0, SpeciesMoments(0.5, (0.0, 0.1, 0.0), 1.0)),
    ):
        intra = solve_intra(m, tau, mom)
        inter = solve_inter(MixtureProblem(m, m, tau, tau, mom, mom))
        diffs = [inter.a / intra.a - 1.0, inter.c12 - intra.c, inter.c21 - intra.c]
        diffs += list(inter.b - intra.b)
        worst = max(worst, max(abs(d) for d in diffs))
    return worst <= tol, f"max |inter - intra| {worst:.2e} (tol {tol:.0e})"


def _homogeneous_config(n, steps, dt=0.02):
    prm = [(1.0, (0.4, 0.0, 0.0), -1.0, 1.0), (1.5, (-0.3, 0.2, 0.0), 1.0, 2.0)]
    species = (Species(1.0, Statistics.FERMION), Species(2.0, Statistics.BOSON))
    init = {"kind": "equilibria", "species": [{"a": a, "b": list(b), "c": c} for a, b, c, _ in prm]}
    grid = MomentumGrid.auto(prm, n)
    return SimConfig(dt=dt, t_end=steps * dt, grid=grid, species=species, init=init)


def check_h_theorem(scale=1.0, n=16, steps=25):
    cfg = _homogeneous_config(n, steps)
    state = run(cfg)
    rec = np.array(state.diagnostics)
    H = rec[:, 7]
    rise = np.diff(H) - 1e-14 * scale * np.abs(H[:-1])
    drift = max(
        abs(rec[-1, 1] / rec[0, 1] - 1.0),
        abs(rec[-1, 2] / rec[0, 2] - 1.0),
        abs(rec[-1, 6] / rec[0, 6] - 1.0),
    )
    ok = bool(np.all(rise <= 0)) and drift <= 1e-11 * scale and rec[:, 8].max() < 1.0
    return ok, f"H {H[0]:.6f} -> {H[-1]:.6f}, max step change {np.diff(H).max():.2e}, drift {drift:.1e}"


def convergence_rate(ns=(32, 48, 64), a=1.0, c=0.0, m=1.0, tau=1):
    """Least-squares slope of ``log |N_grid - N|`` against ``log n``.

    Returns ``(rate, errors)``; the box is fixed by :func:`required_p_max`.
    """
    exact = equilibrium_moments(a, (0.0, 0.0, 0.0), c, m, tau).N
    p_max = required_p_max(a, (0.0, 0.0, 0.0), c, m)
    errs = []
    for n in ns:
        grid = MomentumGrid(p_max, n)
        field = eval_equilibrium(a, (0.0, 0.0, 0.0), c, m, tau, grid)
        errs.append(abs(discrete_moments(field, grid).N - exact) / exact)
    slope = np.polyfit(np.log(ns), np.log(np.maximum(errs, 1e-300)), 1)[0]
    return -float(slope), errs


def check_convergence(scale=1.0):
    # the midpoint rule on these analytic integrands is spectrally accurate,
    # so only "at least second order" is asserted
    rate, errs = convergence_rate(ns=(24, 32, 40))
    ok = rate >= 2.0 - 0.3 * scale
    return ok, f"observed order {rate:.1f}, errors " + ", ".join(f"{e:.1e}" for e in errs)


def check_tail(scale=1.0):
    worst = 0.0
    for tau, xs in ((1, FERMION_GRID), (-1, BOSON_GRID)):
        for x in xs:
            base = IntegralAccuracy()
            wide = IntegralAccuracy(tail_cutoff=2.0 * base.cutoff(x))
            for fn in (moment0, moment2):
                worst = max(worst, abs(fn(tau, x, wide) / fn(tau, x, base) - 1.0))
    tol = IntegralAccuracy().rel_tol * scale
    return worst <= tol, f"max change {worst:.1e} when doubling the cutoff (tol {tol:.0e})"


def check_long_run(scale=1.0):
    return check_h_theorem(scale, n=24, steps=200)


QUICK = (
    ("oracle equivalence", check_oracle),
    ("h/moment2/j monotone", check_monotone),
    ("g monotone", check_g_monotone),
    ("D negative", check_d_negative),
    ("inverse consistency", check_inverse),
    ("round-trip recovery", check_roundtrip),
    ("symmetric reduction", check_reduction),
    ("H monotone + conservation", check_h_theorem),
)
FULL = QUICK + (
    ("grid refinement order", check_convergence),
    ("tail robustness", check_tail),
    ("long run H + conservation", check_long_run),
)


def run_checks(level="quick", tol_scale=1.0):
    if level not in ("quick", "full"):
        raise ValueError(f"level must be 'quick' or 'full', got {level!r}")
    results = []
    for name, fn in QUICK if level == "quick" else FULL:
        t0 = time.perf_counter()
        try:
            ok, detail = fn(tol_scale)
        except Exception as err:  # noqa: BLE001  a crashing check is a failing check
            ok, detail = False, f"{type(err).__name__}: {err}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results


def format_table(results):
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  time    detail"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<{width}}  {status:<6}  {r.seconds:5.1f}s  {r.detail}")
    return "\n".join(lines)
