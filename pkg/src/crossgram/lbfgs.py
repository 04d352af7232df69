"""Limited-memory BFGS with a strong-Wolfe line search (cubic interpolation)."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max_iter"
LINE_SEARCH_FAILED = "line_search_failed"


class OptimizerAbort(RuntimeError):
    """Non-finite objective; carries the best point seen so far."""

    def __init__(self, iteration, x, f, records):
        super().__init__(f"objective returned a non-finite value or gradient at iteration {iteration}")
        self.iteration = iteration
        self.x = x
        self.f = f
        self.records = records


@dataclass
class Options:
    memory: int = 10
    max_iter: int = 500
    gtol: float = 1e-7
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 20


@dataclass
class IterationRecord:
    iteration: int
    f: float
    gnorm: float
    step: float = 0.0
    evals: int = 0
    f_prev: float = math.nan
    slope0: float = math.nan  # g(x)^T d before the step
    slope: float = math.nan   # g(x + step d)^T d after it


@dataclass
class OptimizeResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    status: str
    iterations: int
    evals: int
    records: list = field(default_factory=list)

    @property
    def success(self):
        return self.status == CONVERGED


class History:
    """Ring of curvature pairs (s, y) with the scaling of the newest pair."""

    def __init__(self, memory=10):
        self.pairs = deque(maxlen=memory)
        self.gamma = 1.0

    def __len__(self):
        return len(self.pairs)

    def push(self, s, y):
        sy = float(s @ y)
        if not sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            return False
        self.pairs.append((s, y, 1.0 / sy))
        self.gamma = sy / float(y @ y)
        return True

    def clear(self):
        self.pairs.clear()


def two_loop_direction(history, g):
    """Return -H g for the L-BFGS inverse-Hessian approximation H."""
    q = np.array(g, dtype=np.float64)
    alphas = []
    for s, y, rho in reversed(history.pairs):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    r = history.gamma * q
    for (s, y, rho), a in zip(history.pairs, reversed(alphas)):
        b = rho * float(y @ r)
        r += (a - b) * s
    return -r


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), or None."""
    if a == b:
        return None
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    x = b - (b - a) * (db + d2 - d1) / denom
    return x if math.isfinite(x) else None


class _NonFinite(Exception):
    pass


def _line_search(evaluate, f0, slope0, alpha, c1, c2, max_evals):
    """Strong-Wolfe search along a fixed direction.

    ``evaluate(alpha)`` returns (f, g, slope).  Returns
    ``(accepted, best)`` where each is a tuple (alpha, f, g, slope) or None.
    """
    evals = 0
    best = None

    def trial(a):
        nonlocal evals, best
        evals += 1
        f, g, slope = evaluate(a)
        if best is None or f < best[1]:
            best = (a, f, g, slope)
        return f, g, slope

    def armijo(a, f):
        return f <= f0 + c1 * a * slope0

    def curvature(slope):
        return abs(slope) <= -c2 * slope0

    def zoom(lo, hi):
        # lo/hi are (alpha, f, slope); lo satisfies sufficient decrease
        while evals < max_evals:
            a_lo, f_lo, s_lo = lo
            a_hi, f_hi, s_hi = hi
            left, right = min(a_lo, a_hi), max(a_lo, a_hi)
            width = right - left
            a = _cubic_min(a_lo, f_lo, s_lo, a_hi, f_hi, s_hi)
            if a is None or not (left + 0.1 * width <= a <= right - 0.1 * width):
                a = 0.5 * (a_lo + a_hi)
            if a == a_lo or a == a_hi:
                return None
            f, g, slope = trial(a)
            if not armijo(a, f) or f >= f_lo:
                hi = (a, f, slope)
            else:
                if curvature(slope):
                    return (a, f, g, slope)
                if slope * (a_hi - a_lo) >= 0:
                    hi = lo
                lo = (a, f, slope)
        return None

    prev = (0.0, f0, slope0)
    accepted = None
    while evals < max_evals:
        f, g, slope = trial(alpha)
        if not armijo(alpha, f) or (evals > 1 and f >= prev[1]):
            accepted = zoom(prev, (alpha, f, slope))
            break
        if curvature(slope):
            accepted = (alpha, f, g, slope)
            break
        if slope >= 0:
            accepted = zoom((alpha, f, slope), prev)
            break
        nxt = _cubic_min(prev[0], prev[1], prev[2], alpha, f, slope)
        if nxt is None or nxt <= 1.1 * alpha:
            nxt = 2.0 * alpha
        prev = (alpha, f, slope)
        alpha = min(nxt, 4.0 * alpha)
    return accepted, best, evals


def minimize(fun, x0, options=None, callback=None, **kwargs):
    """Minimize ``fun(x) -> (value, gradient)`` from ``x0``.

    ``callback(record, x)`` is invoked for the starting point (iteration 0)
    and after every accepted step.  Raises OptimizerAbort on a non-finite
    value or gradient.
    """
    opts = options or Options()
    for k, v in kwargs.items():
        if not hasattr(opts, k):
            raise TypeError(f"unknown option {k!r}")
        setattr(opts, k, v)

    x = np.array(x0, dtype=np.float64).ravel()
    records = []
    total_evals = 0
    iteration = 0
    best = (x, math.inf)

    def call(point):
        nonlocal total_evals
        total_evals += 1
        f, g = fun(point)
        f = float(f)
        g = np.asarray(g, dtype=np.float64).ravel()
        if not math.isfinite(f) or not np.all(np.isfinite(g)):
            raise _NonFinite
        return f, g

    try:
        f, g = call(x)
    except _NonFinite:
        raise OptimizerAbort(0, x, math.nan, records) from None
    best = (x, f)
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    rec = IterationRecord(0, f, gnorm, evals=1)
    records.append(rec)
    if callback is not None:
        callback(rec, x)

    history = History(opts.memory)
    ever_stored = False
    status = MAX_ITER
    while True:
        if gnorm <= opts.gtol:
            status = CONVERGED
            break
        if iteration >= opts.max_iter:
            status = MAX_ITER
            break
        d = two_loop_direction(history, g)
        slope0 = float(g @ d)
        if not slope0 < 0:
            history.clear()
            d = -history.gamma * g
            slope0 = float(g @ d)
        if ever_stored:
            alpha0 = 1.0
        else:
            alpha0 = min(1.0, 1.0 / float(np.sum(np.abs(g))))

        def along(a, x=x, d=d):
            fa, ga = call(x + a * d)
            return fa, ga, float(ga @ d)

        try:
            accepted, ls_best, evals = _line_search(along, f, slope0, alpha0, opts.c1, opts.c2, opts.max_ls)
        except _NonFinite:
            raise OptimizerAbort(iteration + 1, best[0], best[1], records) from None

        if accepted is None:
            if len(history):
                log.debug("line search failed at iteration %d; resetting history", iteration + 1)
                history.clear()
                continue
            if ls_best is not None and ls_best[1] < f:
                x = x + ls_best[0] * d
                f, g = ls_best[1], ls_best[2]
            log.warning("line search failed at iteration %d", iteration + 1)
            status = LINE_SEARCH_FAILED
            break

        step, f_new, g_new, slope = accepted
        x_new = x + step * d
        ever_stored |= history.push(x_new - x, g_new - g)
        iteration += 1
        rec = IterationRecord(iteration, f_new, float(np.max(np.abs(g_new))), step, evals, f, slope0, slope)
        records.append(rec)
        x, f, g, gnorm = x_new, f_new, g_new, rec.gnorm
        best = (x, f)
        if callback is not None:
            callback(rec, x)

    return OptimizeResult(x=x, f=f, g=g, status=status, iterations=iteration,
                          evals=total_evals, records=records)
