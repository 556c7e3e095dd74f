"""Direct search for consecutive primes confined to one residue class.

Windows (Q*n, Q*n + H] are scanned for primes, split into the target class
A_n and the rest B_n. Whenever |A_n| >= |B_n| + 2 two members of A_n must be
adjacent in the full prime sequence; the scan never assumes this, it always
re-derives adjacency from the window's complete prime list, and the
streaming hunter re-verifies every emitted pair with an independent
primality test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ConstructionError, DomainError
from .modulus_builder import ModulusPlan
from .moments import fourth_moment, positivity_functional
from .primes import PrimeTable, is_prime, next_prime, prime_window

HUNT_SEGMENT = 1 << 21


@dataclass(frozen=True)
class PairRecord:
    """A consecutive prime pair inside the class, with its normalized gap."""

    first: int
    second: int
    gap: int
    ratio: float


@dataclass(frozen=True)
class IntervalScan:
    """Class counts for one window and the extracted pair, if any."""

    n: int
    in_count: int
    off_count: int
    pair: tuple[int, int] | None
    gap: int | None

    @property
    def forced(self) -> bool:
        """Whether the counting criterion alone already guarantees a pair."""
        return self.in_count >= self.off_count + 2


def scan_interval(plan: ModulusPlan, n: int, table: PrimeTable) -> IntervalScan:
    """Scan (Q*n, Q*n + H] and extract the first adjacent in-class pair.

    Adjacency inside the window implies adjacency in the full prime
    sequence, because any prime strictly between two window primes lies in
    the window as well.
    """
    q_int = plan.q_int()
    h_top = int(plan.h_bound)
    lo = q_int * n
    flags = prime_window(table, lo, lo + h_top)
    ps = lo + 1 + np.flatnonzero(flags)
    in_mask = ps % plan.q == plan.a
    pair = None
    gap = None
    for i in range(len(ps) - 1):
        if in_mask[i] and in_mask[i + 1]:
            pair = (int(ps[i]), int(ps[i + 1]))
            gap = pair[1] - pair[0]
            break
    return IntervalScan(n=n, in_count=int(in_mask.sum()),
                        off_count=int((~in_mask).sum()), pair=pair, gap=gap)


def iter_class_pairs(q: int, a: int, limit: int,
                     table: PrimeTable) -> Iterator[tuple[int, int]]:
    """Consecutive prime pairs below limit with both members = a (mod q).

    Streams over a segmented sieve with O(segment) memory; the previous
    prime is carried across segment boundaries so no gap is split.
    """
    if q < 1 or math.gcd(q, a % q) != 1:
        raise DomainError(f"need a residue class coprime to q={q}")
    if math.isqrt(limit) > table.limit:
        raise DomainError(
            f"limit {limit} needs base primes to {math.isqrt(limit)}")
    a %= q
    prev = None
    prev_in = False
    for lo in range(1, limit, HUNT_SEGMENT):
        hi = min(lo + HUNT_SEGMENT, limit)
        flags = prime_window(table, lo, hi)
        for p in (lo + 1 + np.flatnonzero(flags)):
            p = int(p)
            now_in = p % q == a
            if prev_in and now_in:
                yield (prev, p)
            prev, prev_in = p, now_in


def hunt(q: int, a: int, limit: int, max_gap: int,
         table: PrimeTable) -> list[PairRecord]:
    """All same-class consecutive pairs below limit with gap at most max_gap.

    Every record is re-verified with the deterministic primality test and a
    next-prime adjacency check before being emitted.
    """
    records = []
    for p, p2 in iter_class_pairs(q, a, limit, table):
        gap = p2 - p
        if gap > max_gap:
            continue
        if not (is_prime(p) and is_prime(p2) and next_prime(p) == p2):
            raise ConstructionError(f"sieve produced a bogus pair ({p}, {p2})")
        records.append(PairRecord(first=p, second=p2, gap=gap,
                                  ratio=gap / math.log(p)))
    return records


@dataclass(frozen=True)
class GapStats:
    """Gap histogram for same-class consecutive pairs and cumulative counts."""

    q: int
    a: int
    limit: int
    histogram: dict
    cumulative: tuple


def gap_statistics(q: int, a: int, limit: int, table: PrimeTable) -> GapStats:
    """Histogram of gaps over all qualifying pairs plus counts at powers of 10."""
    hist: dict[int, int] = {}
    seconds = []
    for p, p2 in iter_class_pairs(q, a, limit, table):
        hist[p2 - p] = hist.get(p2 - p, 0) + 1
        seconds.append(p2)
    seconds_arr = np.array(seconds if seconds else [0], dtype=np.int64)
    grid = []
    y = 10
    while y < limit:
        grid.append(y)
        y *= 10
    grid.append(limit)
    cumulative = tuple((y, int((seconds_arr <= y).sum() if seconds else 0))
                       for y in grid)
    return GapStats(q=q, a=a % q, limit=limit,
                    histogram=dict(sorted(hist.items())), cumulative=cumulative)


class GoodWindowCount(NamedTuple):
    count: int
    cs_bound: float | None
    functional_measured: float


def count_good_windows(plan: ModulusPlan, shifts, n_top: int, cutoff: float,
                       ell: int, table: PrimeTable) -> GoodWindowCount:
    """Number of n in (N, 2N] whose window holds an in-class adjacent pair.

    Also evaluates the Cauchy-Schwarz floor
    N^2 (Q/phi(Q))^(2k) F^2 (H log 3QN)^(-2) / sum(weight^4), where F is the
    measured functional; the floor is reported only when F > 0, since the
    derivation needs a positive functional.
    """
    q_int = plan.q_int()
    h_top = int(plan.h_bound)
    k = len(tuple(shifts))
    lo = q_int * (n_top + 1)
    hi = 2 * q_int * n_top + h_top
    flags = prime_window(table, lo, hi)
    ps = lo + 1 + np.flatnonzero(flags)
    good = np.zeros(n_top, dtype=bool)
    for i in range(len(ps) - 1):
        p, p2 = int(ps[i]), int(ps[i + 1])
        if p % plan.q != plan.a or p2 % plan.q != plan.a:
            continue
        n_lo = max(n_top + 1, -((h_top - p2) // q_int))  # ceil((p2 - H)/Q)
        n_hi = min(2 * n_top, (p - 1) // q_int)
        if n_lo <= n_hi:
            good[n_lo - n_top - 1 : n_hi - n_top] = True
    report = positivity_functional(plan, shifts, n_top, cutoff, ell, table)
    fourth = fourth_moment(plan, shifts, n_top, cutoff, ell)
    cs_bound = None
    if report.functional_measured > 0 and fourth.measured > 0:
        log_3qn = math.log(3 * q_int * n_top)
        cs_bound = (n_top ** 2 * plan.phi_ratio ** (-2 * k)
                    * report.functional_measured ** 2
                    / (plan.h_bound * log_3qn) ** 2 / fourth.measured)
    return GoodWindowCount(count=int(good.sum()), cs_bound=cs_bound,
                           functional_measured=report.functional_measured)
