"""Closed-form bound functions, a scalar maximizer and the lower-bound table."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

EULER_GAMMA = 0.5772156649015329
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class BoundEvaluationError(ArithmeticError):
    """A bound function produced a non-finite value or a non-positive denominator."""


# --- harmonic numbers -----------------------------------------------------

def harmonic(n: int) -> float:
    """H(n) by direct summation; H(0) = 0."""
    n = int(n)
    if n < 0:
        raise ValueError("harmonic number of a negative integer")
    if n == 0:
        return 0.0
    return math.fsum(1.0 / np.arange(1, n + 1, dtype=float))


def harmonic_diff(a: int, b: int) -> float:
    """H(a) - H(b), summed over the differing terms only."""
    a, b = int(a), int(b)
    if a < 0 or b < 0:
        raise ValueError("harmonic number of a negative integer")
    if a == b:
        return 0.0
    if a < b:
        return -harmonic_diff(b, a)
    return math.fsum(1.0 / np.arange(b + 1, a + 1, dtype=float))


def harmonic_table(n: int) -> np.ndarray:
    """Array ``H`` with ``H[j]`` the j-th harmonic number for j = 0..n."""
    out = np.zeros(n + 1)
    if n:
        out[1:] = np.cumsum(1.0 / np.arange(1, n + 1, dtype=float))
    return out


# --- closed forms ---------------------------------------------------------

def pos_ub(y):
    """Upper bound on the per-facility cost ratio after best response, y >= 1."""
    y = np.asarray(y, dtype=float)
    ly = np.log(y)
    return (1.5 + y + ly) / (0.5 + y - ly)


def pos_lb_asymptotic(p):
    """Limit of the metric lower-bound ratio as a function of the batch fraction p."""
    p = np.asarray(p, dtype=float)
    lp = np.log(p)
    return (0.25 + 0.5 * (1.0 / p - lp)) / (0.75 + 0.5 * (1.0 / p + lp))


def metric_spoa_ub_denominator(y, alpha: float = math.e, gamma: float = EULER_GAMMA):
    y = np.asarray(y, dtype=float)
    return (y - alpha * np.log(y) + alpha * (gamma + math.log(alpha) - 1.0)) / (1.0 + alpha)


def metric_spoa_ub(y, alpha: float = math.e, gamma: float = EULER_GAMMA):
    """Log-relaxed upper bound on the metric unweighted SPoA, y = |A*(v)|/r."""
    y = np.asarray(y, dtype=float)
    num = 1.0 - gamma + np.log(y)
    return 1.0 + 2.0 * alpha + 2.0 * alpha * num / metric_spoa_ub_denominator(y, alpha, gamma)


def metric_spoa_connection_factor(group: int, r: int, alpha: float) -> float:
    """Sum over k = ceil(alpha*r)+1 .. group of (1/r - alpha/k); empty sum is 0.

    Times beta_v/(1+alpha) this lower-bounds the optimum connection cost of
    the agents outside a minimal disagreeing subset.
    """
    top = math.ceil(alpha * r)
    if group <= top:
        return 0.0
    ks = np.arange(top + 1, group + 1, dtype=float)
    return math.fsum(1.0 / r - alpha / ks)


def metric_spoa_exact(group: int, r: int, alpha: float) -> float:
    """Per-facility SPoA bound with exact harmonic numbers (no log relaxation)."""
    dh = harmonic_diff(group, r)
    factor = metric_spoa_connection_factor(group, r, alpha)
    return 1.0 + 2.0 * alpha + 2.0 * alpha * dh / (1.0 + factor / (1.0 + alpha))


# --- metric lower-bound construction: closed forms ------------------------

def metric_pos_batch_costs(k: int, r: int, lam: int, eps: float = 0.0) -> tuple[float, float]:
    """Optimum and post-cascade cost of one batch of the metric construction.

    Matches the generated instance exactly: returns ``(c_opt, c_eq)`` where
    ``c_opt`` includes the batch facility and ``c_eq`` excludes the hub's
    facility cost.
    """
    head = r / (k - r + 1)
    dk = harmonic_diff(k, k - r)
    dl = harmonic_diff(lam + r, lam)
    opt = 1.0 + 0.5 * (head - dk + dl + r * eps)
    eq = (k - r) / (k - r + 1) + 0.5 * (head + dk - dl - r * eps)
    return opt, eq


def pos_lb_batch_opt_reported(k: int, r: int, lam: int) -> float:
    """The batch optimum cost as used in the table ratio (carries an extra -r/(2(lam+r)))."""
    return (1.0 + 0.5 * (r / (k - r + 1) - harmonic_diff(k, k - r))
            - 0.5 * r / (lam + r) + 0.5 * harmonic_diff(lam + r, lam))


def _table_terms(n: int, rs: np.ndarray, lam: int, eps: float):
    k = math.isqrt(n)
    H = harmonic_table(k)
    tail = np.concatenate([[0.0], np.cumsum(1.0 / (lam + np.arange(1, int(rs.max()) + 1, dtype=float)))])
    dk = H[k] - H[k - rs]
    dl = tail[rs]
    head = rs / (k - rs + 1.0)
    hub = 0.5 * rs / (lam + rs)
    num = (k - rs) / (k - rs + 1.0) + 0.5 * (head + dk) - hub - 0.5 * dl - 0.5 * rs * eps
    den = 1.0 / math.sqrt(n) + 1.0 + 0.5 * (head - dk) - hub + 0.5 * dl + 0.5 * rs * eps
    return num / den


def _check_square(n: int) -> int:
    k = math.isqrt(int(n))
    if n < 4 or k * k != n:
        raise ValueError(f"n = {n} is not a perfect square >= 4")
    return k


def pos_lb_ratio(n: int, r: int, lam: Optional[int] = None, eps: float = 0.0) -> float:
    """Lower-bound ratio for one batch of k = sqrt(n) agents, r of them paying extra."""
    k = _check_square(n)
    if not 1 <= r <= k - 1:
        raise ValueError(f"r = {r} must lie in [1, {k - 1}]")
    lam = n if lam is None else int(lam)
    return float(_table_terms(n, np.array([r]), lam, eps)[0])


def pos_lb_best(n: int, lam: Optional[int] = None, eps: float = 0.0) -> tuple[int, float]:
    """Integer r in [1, k-1] maximizing the lower-bound ratio, with its value."""
    k = _check_square(n)
    lam = n if lam is None else int(lam)
    rs = np.arange(1, k, dtype=np.int64)
    vals = _table_terms(n, rs, lam, eps)
    j = int(np.argmax(vals))
    return int(rs[j]), float(vals[j])


def pos_lb_table(n: int, remain_fraction: Optional[float] = 0.27, maximize_r: bool = False,
                 lam: Optional[int] = None, eps: float = 0.0) -> float:
    """Lower-bound estimate at size n.

    Either the remaining batch is fixed at ceil(remain_fraction * k) agents,
    or r is maximized over all integers in [1, k-1].
    """
    k = _check_square(n)
    if maximize_r or remain_fraction is None:
        return pos_lb_best(n, lam, eps)[1]
    r = k - math.ceil(remain_fraction * k)
    return pos_lb_ratio(n, r, lam, eps)


# --- maximization ---------------------------------------------------------

@dataclass
class BoundCurve:
    function_id: str
    parameter: str
    xs: np.ndarray
    fs: np.ndarray
    argmax: float
    max: float
    tol: float

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.xs.tolist(), self.fs.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,f\n")
        for x, f in zip(self.xs, self.fs):
            buf.write(f"{float(x)!r},{float(f)!r}\n")
        buf.write(f"# argmax={self.argmax!r} max={self.max!r}\n")
        return buf.getvalue()


def _finite(xs, fs, name):
    bad = ~np.isfinite(fs)
    if np.any(bad):
        x = float(np.asarray(xs)[bad][0])
        raise BoundEvaluationError(f"{name}: non-finite value at x={x!r}")


def _grid(a: float, b: float, points: int, scale: str) -> np.ndarray:
    if scale == "log":
        if a <= 0:
            raise ValueError("log grid needs a positive lower end")
        return np.geomspace(a, b, points)
    if scale != "linear":
        raise ValueError(f"unknown grid scale {scale!r}")
    return np.linspace(a, b, points)


def _golden(f, lo: float, hi: float, tol: float, name: str) -> tuple[float, float]:
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc, fd = float(f(c)), float(f(d))
    while hi - lo > tol:
        if not (math.isfinite(fc) and math.isfinite(fd)):
            raise BoundEvaluationError(f"{name}: non-finite value near x={c!r}")
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - INV_PHI * (hi - lo)
            fc = float(f(c))
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = float(f(d))
    x = 0.5 * (lo + hi)
    return x, float(f(x))


BOUND_FUNCTIONS: dict[str, Callable] = {
    "pos-ub": pos_ub,
    "pos-lb-asym": pos_lb_asymptotic,
    "metric-spoa-ub": metric_spoa_ub,
}


def _sample_and_refine(f, name: str, a: float, b: float, tol: float, points: int, scale: str):
    if not a < b:
        raise ValueError("interval must have a < b")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if points < 10_000:
        raise ValueError("grid needs at least 10^4 points")
    xs = _grid(a, b, points, scale)
    fs = np.asarray(f(xs), dtype=float)
    _finite(xs, fs, name)
    j = int(np.argmax(fs))
    lo, hi = xs[max(j - 1, 0)], xs[min(j + 1, len(xs) - 1)]
    x, fx = _golden(f, float(lo), float(hi), tol, name)
    if not math.isfinite(fx):
        raise BoundEvaluationError(f"{name}: non-finite value at x={x!r}")
    if fx < fs[j]:
        x, fx = float(xs[j]), float(fs[j])
    return xs, fs, x, fx


def scalar_maximize(function: Union[str, Callable], interval: tuple[float, float],
                    tol: float = 1e-6, points: int = 10_001, scale: str = "linear") -> tuple[float, float]:
    """Dense grid scan followed by golden-section refinement around the best cell."""
    if isinstance(function, str):
        name, f = function, BOUND_FUNCTIONS[function]
    else:
        name, f = getattr(function, "__name__", "function"), function
    _, _, x, fx = _sample_and_refine(f, name, float(interval[0]), float(interval[1]), tol, points, scale)
    return x, fx


def _curve(name, parameter, f, a, b, tol, points, scale) -> BoundCurve:
    xs, fs, x, fx = _sample_and_refine(f, name, a, b, tol, points, scale)
    pos = int(np.searchsorted(xs, x))
    if not (pos < len(xs) and xs[pos] == x):
        xs = np.insert(xs, pos, x)
        fs = np.insert(fs, pos, fx)
    return BoundCurve(name, parameter, xs, fs, x, fx, tol)


def pos_ub_curve(a: float = 1.0, b: float = 100.0, points: int = 10_001, tol: float = 1e-6) -> BoundCurve:
    if a < 1:
        raise ValueError("y must be >= 1")
    return _curve("pos-ub", "y", pos_ub, a, b, tol, points, "linear")


def pos_lb_asymptotic_curve(a: float = 0.01, b: float = 0.99, points: int = 10_001,
                            tol: float = 1e-6) -> BoundCurve:
    if not 0 < a < b < 1:
        raise ValueError("p range must lie inside (0, 1)")
    return _curve("pos-lb-asym", "p", pos_lb_asymptotic, a, b, tol, points, "linear")


def metric_spoa_ub_curve(a: float = 1.0, b: float = 1e6, alpha: float = math.e,
                         gamma: float = EULER_GAMMA, points: int = 10_001, tol: float = 1e-6,
                         scale: str = "log") -> BoundCurve:
    if a < 1 or alpha < 1 or not 0 < gamma < 1:
        raise ValueError("need y >= 1, alpha >= 1 and 0 < gamma < 1")
    xs = _grid(a, b, points, scale)
    den = metric_spoa_ub_denominator(xs, alpha, gamma)
    if np.any(den <= 0):
        raise BoundEvaluationError(f"metric-spoa-ub: denominator <= 0 at y={float(xs[den <= 0][0])!r}")

    def f(y):
        return metric_spoa_ub(y, alpha, gamma)

    return _curve("metric-spoa-ub", "y", f, a, b, tol, points, scale)


def metric_spoa_constant(alpha: float = math.e, gamma: float = EULER_GAMMA) -> float:
    """Numeric maximum of the log-relaxed metric SPoA bound over y in [1, 10^6]."""
    return metric_spoa_ub_curve(alpha=alpha, gamma=gamma).max
