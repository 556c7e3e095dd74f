"""Numerical Dickman rho, smooth-number counts, and sieved harmonic sums.

The rho table is built unit interval by unit interval from the delay form
rho'(u) = -rho(u-1)/u, integrating a fully known right-hand side with a
fourth-order cell quadrature. Kinks of rho sit at integers, which are always
grid points, so every quadrature stencil stays inside one smooth piece.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import AccuracyError, DomainError, RangeError, ResourceError
from .primes import PrimeTable, sieve

EULER_GAMMA = 0.5772156649015329

DEFAULT_STEP = 2.0 ** -12
RESIDUAL_TOL = 1e-8


def _cell_integrals(f: np.ndarray, h: float) -> np.ndarray:
    """Integral of f over each grid cell, cubic through 4 nodes per cell.

    Stencils are clamped to the block [f[0], f[-1]], so they never straddle
    the block boundary; error is O(h^5) per cell for smooth f.
    """
    n = len(f) - 1
    out = np.empty(n)
    out[0] = (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]) * (h / 24.0)
    out[1 : n - 1] = (-f[0 : n - 2] + 13.0 * f[1 : n - 1]
                      + 13.0 * f[2:n] - f[3 : n + 1]) * (h / 24.0)
    out[n - 1] = (f[n - 3] - 5.0 * f[n - 2] + 19.0 * f[n - 1] + 9.0 * f[n]) * (h / 24.0)
    return out


@dataclass(frozen=True)
class DickmanTable:
    """Dickman rho sampled on a uniform grid over [0, u_max].

    Immutable once built; rho() interpolates linearly between grid points
    and cell_prefix holds prefix integrals of the table for O(1) range
    integration.
    """

    u_max: float
    step: float
    values: np.ndarray
    cell_prefix: np.ndarray
    cells_per_unit: int

    def grid(self) -> np.ndarray:
        return np.arange(len(self.values)) / self.cells_per_unit

    def rho(self, u):
        u_arr = np.asarray(u, dtype=float)
        if np.any(u_arr < 0) or np.any(u_arr > self.u_max):
            raise RangeError(f"u={u} outside [0, {self.u_max}]")
        out = np.interp(u_arr, self.grid(), self.values)
        return float(out) if np.isscalar(u) or u_arr.ndim == 0 else out

    def integral(self, a: float, b: float) -> float:
        """Integral of the tabulated rho over [a, b] within [0, u_max]."""
        if a > b:
            raise DomainError("integral needs a <= b")
        if a < 0 or b > self.u_max:
            raise RangeError(f"[{a}, {b}] outside [0, {self.u_max}]")
        n = self.cells_per_unit
        ia = min(int(math.ceil(a * n - 1e-9)), len(self.values) - 1)
        ib = max(int(math.floor(b * n + 1e-9)), 0)
        if ia > ib:
            # both endpoints inside one cell
            return (b - a) * 0.5 * (self.rho(a) + self.rho(b))
        core = float(self.cell_prefix[ib] - self.cell_prefix[ia])
        left = (ia / n - a) * 0.5 * (self.rho(a) + float(self.values[ia]))
        right = (b - ib / n) * 0.5 * (float(self.values[ib]) + self.rho(b))
        return core + left + right


def build_rho(u_max: float, step: float = DEFAULT_STEP) -> DickmanTable:
    """Build the rho table on [0, ceil(u_max)] at roughly the requested step.

    The step is snapped to 1/n for integer n so integers land on grid
    points. Integration runs on L(u) = log rho(u), whose delay form
    L'(u) = -exp(L(u-1) - L(u))/u keeps every quantity at unit scale;
    integrating rho itself would compute each new value as a tiny
    difference of large neighbours and lose the entire mantissa by u
    around 13. Stepping is an order-4 implicit Adams sweep, restarted at
    every integer so no stencil crosses a derivative kink. After the
    build, the integral-equation residual |u rho(u) - integral of rho
    over [u-1, u]| is verified to be at most 1e-8 at every grid point;
    failure raises AccuracyError.
    """
    if u_max < 2:
        raise DomainError("u_max must be at least 2")
    if not (0 < step <= 1.0 / 256.0):
        raise DomainError("step must be in (0, 1/256]")
    n = round(1.0 / step)
    units = int(math.ceil(u_max - 1e-12))
    total = units * n
    h = 1.0 / n
    exp = math.exp
    log_rho = [0.0] * (total + 1)
    f = [0.0] * (total + 1)  # f[j] = L'(t_j), defined for t_j >= 1
    f[n] = -1.0
    c9, c19, c5, c1 = (9.0 * h / 24.0, 19.0 * h / 24.0, 5.0 * h / 24.0,
                       h / 24.0)
    for m in range(1, units):
        lo = m * n
        # bootstrap the first three cells from one clamped 4-point stencil
        x0, f0 = log_rho[lo], f[lo]
        x1, x2, x3 = x0 + h * f0, x0 + 2 * h * f0, x0 + 3 * h * f0
        d1, d2, d3 = (log_rho[lo + i - n] for i in (1, 2, 3))
        t1, t2, t3 = (lo + 1) * h, (lo + 2) * h, (lo + 3) * h
        for _ in range(10):
            f1 = -exp(d1 - x1) / t1
            f2 = -exp(d2 - x2) / t2
            f3 = -exp(d3 - x3) / t3
            x1 = x0 + (9 * f0 + 19 * f1 - 5 * f2 + f3) * c1
            x2 = x1 + (-f0 + 13 * f1 + 13 * f2 - f3) * c1
            x3 = x2 + (f0 - 5 * f1 + 19 * f2 + 9 * f3) * c1
        log_rho[lo + 1], log_rho[lo + 2], log_rho[lo + 3] = x1, x2, x3
        f[lo + 1] = -exp(d1 - x1) / t1
        f[lo + 2] = -exp(d2 - x2) / t2
        f[lo + 3] = -exp(d3 - x3) / t3
        for j in range(lo + 4, lo + n + 1):
            delayed = log_rho[j - n]
            t_j = j * h
            base = log_rho[j - 1] + c19 * f[j - 1] - c5 * f[j - 2] + c1 * f[j - 3]
            # explicit 4-step prediction, then Newton on the implicit cell
            x = log_rho[j - 1] + (55.0 * f[j - 1] - 59.0 * f[j - 2]
                                  + 37.0 * f[j - 3] - 9.0 * f[j - 4]) * c1
            for _ in range(2):
                fx = -exp(delayed - x) / t_j
                x -= (x - base - c9 * fx) / (1.0 + c9 * fx)
            log_rho[j] = x
            f[j] = -exp(delayed - x) / t_j
    vals = np.exp(np.array(log_rho))
    vals[: n + 1] = 1.0
    cells = np.empty(total)
    for m in range(units):
        lo = m * n
        cells[lo : lo + n] = _cell_integrals(vals[lo : lo + n + 1], h)
    prefix = np.concatenate(([0.0], np.cumsum(cells)))
    table = DickmanTable(u_max=float(units), step=h, values=vals,
                         cell_prefix=prefix, cells_per_unit=n)
    worst = float(integral_residuals(table).max())
    if worst > RESIDUAL_TOL:
        raise AccuracyError(
            f"residual {worst:.3e} exceeds {RESIDUAL_TOL}; reduce the step")
    return table


def integral_residuals(table: DickmanTable) -> np.ndarray:
    """|u rho(u) - integral over [u-1, u]| at every grid point u > 1."""
    n = table.cells_per_unit
    total = len(table.values) - 1
    j = np.arange(n + 1, total + 1)
    window = table.cell_prefix[j] - table.cell_prefix[j - n]
    return np.abs((j / n) * table.values[j] - window)


class TailIntegral(NamedTuple):
    value: float
    tail_bound: float


def rho_tail_integral(table: DickmanTable, u: float) -> TailIntegral:
    """Integral of rho from u to the end of the table, plus an honest tail bound.

    The analytic bound u_max^(-u_max) on the discarded integral beyond the
    table is reported separately, never silently added to the value.
    """
    if not (0 <= u <= table.u_max):
        raise RangeError(f"u={u} outside [0, {table.u_max}]")
    value = table.integral(u, table.u_max)
    bound = math.exp(-table.u_max * math.log(table.u_max))
    return TailIntegral(value=value, tail_bound=bound)


# ---------------------------------------------------------------------------
# exact smooth counts


def _smooth_count(x: int, primes: list[int], budget: int) -> int:
    """Count of n <= x whose prime factors all lie in `primes` (includes 1).

    Buchstab-style recursion psi(x, i) = psi(x, i-1) + psi(x // p_i, i),
    memoized on (floor(x), largest allowed prime index) and driven by an
    explicit stack so deep prime lists cannot overflow Python's recursion
    limit.
    """
    if x < 1:
        return 0
    if not primes:
        return 1
    memo: dict[tuple[int, int], int] = {}
    start = (x, len(primes) - 1)
    stack = [start]
    ops = 0
    while stack:
        key = stack[-1]
        if key in memo:
            stack.pop()
            continue
        x0, i = key
        if x0 < 1:
            memo[key] = 0
            stack.pop()
            continue
        if i < 0:
            memo[key] = 1
            stack.pop()
            continue
        ops += 1
        if ops > budget:
            raise ResourceError(f"smooth count exceeded budget of {budget} states")
        if primes[i] > x0:
            child = (x0, bisect_right(primes, x0) - 1)
            if child in memo:
                memo[key] = memo[child]
                stack.pop()
            else:
                stack.append(child)
            continue
        c1 = (x0, i - 1)
        c2 = (x0 // primes[i], i)
        v1 = memo.get(c1)
        v2 = memo.get(c2)
        if v1 is not None and v2 is not None:
            memo[key] = v1 + v2
            stack.pop()
        else:
            if v1 is None:
                stack.append(c1)
            if v2 is None:
                stack.append(c2)
    return memo[start]


def psi_exact(x: int, y: int, table: PrimeTable | None = None,
              budget: int = 10_000_000) -> int:
    """Exact count of y-smooth integers in [1, x] (1 counts as smooth)."""
    if x < 1:
        raise DomainError("x must be at least 1")
    if y < 2:
        raise DomainError("y must be at least 2")
    if x > 10**12:
        raise ResourceError("x beyond 1e12 exceeds the recursion budget")
    if table is None or table.limit < y:
        table = sieve(y)
    primes = [int(p) for p in table.primes_upto(y)]
    return _smooth_count(int(x), primes, budget)


@dataclass(frozen=True)
class SmoothCount:
    """Exact smooth count next to its rho-based prediction."""

    x: int
    y: int
    exact: int
    rho_estimate: float
    ratio: float


def psi_ratio_report(y: int, u: float, table: DickmanTable,
                     prime_table: PrimeTable | None = None) -> SmoothCount:
    """Compare the exact count of y-smooth n <= y^u against x * rho(u)."""
    x = round(float(y) ** u)
    if x < 1 or x > 10**12:
        raise DomainError(f"y^u = {x} not representable at desk scale")
    estimate = x * table.rho(u)
    exact = psi_exact(x, y, table=prime_table)
    return SmoothCount(x=x, y=y, exact=exact, rho_estimate=estimate,
                       ratio=exact / estimate)


# ---------------------------------------------------------------------------
# sieved harmonic sums


class SievedHarmonicSum(NamedTuple):
    value: float
    truncation_bound: float


def _harmonic_over_smooth(x_top: int, primes: list[int], lower: int,
                          budget: int) -> float:
    """Sum of 1/n over `primes`-smooth n with lower < n <= x_top."""
    total = 1.0 if lower < 1 else 0.0
    ops = 0

    def rec(i: int, n: int) -> None:
        nonlocal total, ops
        for j in range(i, len(primes)):
            p = primes[j]
            m = n * p
            if m > x_top:
                break
            while m <= x_top:
                ops += 1
                if ops > budget:
                    raise ResourceError("smooth harmonic sum budget exceeded")
                if m > lower:
                    total += 1.0 / m
                rec(j + 1, m)
                m *= p

    rec(0, 1)
    return total


def restricted_smooth_sum(x: int, y: int, qualifying: Callable[[int], bool],
                          *, tail: bool = False, x_cut: int | None = None,
                          table: PrimeTable | None = None,
                          budget: int = 5_000_000) -> SievedHarmonicSum:
    """Product-weighted harmonic sum over integers smooth over a prime subset.

    Let P be the primes p <= y with qualifying(p). The value is
    prod_{p in P} (1 - 1/p) * sum 1/n, the sum running over n <= x composed
    only of primes in P. In tail mode the sum instead runs over
    x < n <= x_cut, and the second field reports a Rankin-type bound
    (exponent 1/2) on the discarded n > x_cut part; if that bound exceeds
    10 percent of the value an AccuracyError is raised.
    """
    if x < 0:
        raise DomainError("x must be nonnegative")
    if y < 2:
        raise DomainError("y must be at least 2")
    if table is None or table.limit < y:
        table = sieve(y)
    ps = [int(p) for p in table.primes_upto(y) if qualifying(int(p))]
    if ps:
        log_prod = float(np.log1p(-1.0 / np.array(ps, dtype=float)).sum())
        product = math.exp(log_prod)
    else:
        product = 1.0
    if not tail:
        s = _harmonic_over_smooth(int(x), ps, lower=0, budget=budget)
        return SievedHarmonicSum(value=product * s, truncation_bound=0.0)
    if x_cut is None or x_cut <= x:
        raise DomainError("tail mode needs x_cut > x")
    s = _harmonic_over_smooth(int(x_cut), ps, lower=int(x), budget=budget)
    value = product * s
    rankin = math.exp(sum(-math.log1p(-p ** -0.5) for p in ps))
    bound = product * rankin / math.sqrt(x_cut)
    if bound > 0.1 * value:
        raise AccuracyError(
            f"truncation bound {bound:.3e} exceeds 10% of value {value:.3e}; "
            "raise x_cut")
    return SievedHarmonicSum(value=value, truncation_bound=bound)


def monotone_inclusion_check(x: int, y: int, qualifying: Callable[[int], bool],
                             table: PrimeTable | None = None) -> bool:
    """Check that shrinking the prime set cannot grow the weighted tail sum.

    Both tails are evaluated exactly through the identity
    value(infinity) = 1, which holds for any prime subset because the full
    harmonic sum telescopes against the product; only finite enumeration up
    to x is needed. Tolerance 1e-9 absolute.
    """
    if table is None or table.limit < y:
        table = sieve(y)
    part = restricted_smooth_sum(x, y, qualifying, table=table)
    full = restricted_smooth_sum(x, y, lambda p: True, table=table)
    lhs_tail = 1.0 - part.value
    rhs_tail = 1.0 - full.value
    return lhs_tail <= rhs_tail + 1e-9


def count_class_one_smooth(x: int, q: int, table: PrimeTable | None = None,
                           budget: int = 10_000_000) -> int:
    """Count of n <= x composed only of primes p = 1 (mod q); includes n = 1."""
    if q < 3:
        raise DomainError("q must be at least 3")
    if x < 1:
        raise DomainError("x must be at least 1")
    if x == 1:
        return 1
    if table is None or table.limit < x:
        table = sieve(max(int(x), 2))
    ps = [int(p) for p in table.primes_upto(int(x)) if p % q == 1]
    return _smooth_count(int(x), ps, budget)
