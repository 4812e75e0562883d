"""Bracketing and bisection for strictly decreasing scalar functions."""

from .errors import ConvergenceError, RangeError

MAX_BISECT_ITER = 200
BISECT_RTOL = 1e-13
MAX_EXPAND_STEPS = 80


def bisect_decreasing(func, target, lo, hi, rtol=BISECT_RTOL, max_iter=MAX_BISECT_ITER):
    """Solve ``func(x) == target`` for a strictly decreasing ``func``.

    The bracket must satisfy ``func(lo) >= target >= func(hi)``; this is the
    caller's job, it is not re-checked here. Iteration stops once the bracket
    is narrower than ``rtol * max(1, |x|)``.

    Returns
    -------
    x : float
        Midpoint of the final bracket.
    iterations : int
        Number of halvings performed.
    """
    if not lo <= hi:
        raise ValueError(f"invalid bracket [{lo}, {hi}]")
    for it in range(max_iter + 1):
        mid = 0.5 * (lo + hi)
        if hi - lo <= rtol * max(1.0, abs(mid)):
            return mid, it
        if func(mid) > target:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError(
        f"bisection did not converge in {max_iter} iterations (bracket [{lo!r}, {hi!r}])"
    )


def expand_down(func, target, start, max_steps=MAX_EXPAND_STEPS):
    """Walk left from ``start`` until ``func(x) >= target``.

    Steps double in length each time, so the search reaches any finite
    abscissa in logarithmically many evaluations.
    """
    x = start
    step = max(1.0, abs(start))
    for _ in range(max_steps):
        if func(x) >= target:
            return x
        x -= step
        step *= 2.0
    raise RangeError(f"no lower bracket found for target {target!r} (last x={x!r})")


def expand_up(func, target, start, max_steps=MAX_EXPAND_STEPS):
    """Walk right from ``start`` until ``func(x) <= target``."""
    x = start
    step = max(1.0, abs(start))
    for _ in range(max_steps):
        if func(x) <= target:
            return x
        x += step
        step *= 2.0
    raise RangeError(f"no upper bracket found for target {target!r} (last x={x!r})")
