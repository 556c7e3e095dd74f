"""Prime generation plus Chebyshev-theta and Mertens-product queries in progressions.

The central object is PrimeTable, an immutable cache of every prime up to a
fixed limit with a flag array for O(1) membership. Sieving is segmented, so
the working set during construction is O(sqrt(limit) + segment); the finished
table itself is O(limit) and is safe to share across threads. All query
methods are pure.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, RangeError, ResourceError

PRIME_CACHE_MAGIC = 0x31564D5250504741  # little-endian b"APGPRMV1"
DEFAULT_MEMORY_BUDGET = 1 << 31
DEFAULT_SEGMENT = 1 << 22

# Deterministic Miller-Rabin witness set, valid for all n < 3.3e24.
_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin primality test (exact for 64-bit inputs)."""
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d = n - 1
    s = 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def next_prime(n: int) -> int:
    """Smallest prime strictly greater than n."""
    m = max(n + 1, 2)
    if m > 2 and m % 2 == 0:
        m += 1
    while not is_prime(m):
        m += 1 if m == 2 else 2
    return m


def euler_phi(n: int) -> int:
    """Euler totient by trial division (the moduli used here are tiny)."""
    if n < 1:
        raise DomainError(f"phi({n}) undefined")
    result = n
    m = n
    p = 2
    while p * p <= m:
        if m % p == 0:
            result -= result // p
            while m % p == 0:
                m //= p
        p += 1 if p == 2 else 2
    if m > 1:
        result -= result // m
    return result


def prime_factors(n: int) -> tuple[int, ...]:
    """Distinct prime factors of n, ascending, by trial division."""
    if n < 1:
        raise DomainError(f"cannot factor {n}")
    out = []
    m = n
    p = 2
    while p * p <= m:
        if m % p == 0:
            out.append(p)
            while m % p == 0:
                m //= p
        p += 1 if p == 2 else 2
    if m > 1:
        out.append(m)
    return tuple(out)


def _simple_sieve(limit: int) -> np.ndarray:
    flags = np.ones(limit + 1, dtype=bool)
    flags[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if flags[p]:
            flags[p * p :: p] = False
    return np.flatnonzero(flags).astype(np.int64)


def _check_class(q: int, a: int) -> int:
    if q < 1:
        raise DomainError(f"modulus {q} must be positive")
    a %= q
    if math.gcd(q, a) != 1:
        raise DomainError(f"residue {a} not coprime to modulus {q}")
    return a


@dataclass(frozen=True)
class PrimeTable:
    """All primes up to `limit`, ascending, plus a membership flag array."""

    limit: int
    primes: np.ndarray
    flags: np.ndarray

    def __contains__(self, n: int) -> bool:
        return 0 <= n <= self.limit and bool(self.flags[n])

    def __len__(self) -> int:
        return len(self.primes)

    def _check_range(self, x: int) -> None:
        if x > self.limit:
            raise RangeError(f"x={x} exceeds table limit {self.limit}")

    def primes_upto(self, x: int) -> np.ndarray:
        """View of the primes <= x (x may not exceed the table limit)."""
        self._check_range(x)
        return self.primes[: int(np.searchsorted(self.primes, x, side="right"))]

    def class_primes(self, x: int, q: int, a: int) -> np.ndarray:
        """Primes p <= x with p = a (mod q); q = 1 means every prime."""
        ps = self.primes_upto(x)
        if q == 1:
            return ps
        return ps[ps % q == a % q]

    def residue_class_count(self, x: int, q: int, a: int) -> int:
        """Number of primes p <= x with p = a (mod q)."""
        if q < 1:
            raise DomainError(f"modulus {q} must be positive")
        return int(len(self.class_primes(x, q, a % q)))

    def theta_sum(self, x: int, q: int = 1, a: int = 0) -> float:
        """Sum of log p over primes p <= x with p = a (mod q).

        Accumulated as a single pass over tabulated primes in double
        precision; the absolute error grows like 1e-12 times the number of
        terms, which is negligible at desk scale.
        """
        a = _check_class(q, a)
        ps = self.class_primes(x, q, a)
        if len(ps) == 0:
            return 0.0
        return float(np.log(ps.astype(np.float64)).sum())

    def theta_error_max(self, m: int, q: int = 1) -> float:
        """Worst-case progression error of the theta sum up to m.

        Maximizes |theta(x; q, a) - x/phi(q)| over every integer x <= m and
        every residue a coprime to q. Between jumps of theta the difference
        is monotone in x, so only the jump points p, the pre-jump points
        p - 1, and x = m need to be examined; this is checked against a
        dense scan in the tests.
        """
        if m < 1:
            raise DomainError("m must be at least 1")
        self._check_range(m)
        phi = euler_phi(q)
        classes = [a for a in range(q) if math.gcd(a, q) == 1] or [0]
        best = 0.0
        for a in classes:
            ps = self.class_primes(m, q, a)
            if len(ps) == 0:
                best = max(best, m / phi)
                continue
            pf = ps.astype(np.float64)
            theta = np.cumsum(np.log(pf))
            at_jump = np.abs(theta - pf / phi).max()
            prev = np.concatenate(([0.0], theta[:-1]))
            before = np.abs(prev - (pf - 1.0) / phi).max()
            tail = abs(theta[-1] - m / phi)
            best = max(best, float(at_jump), float(before), float(tail))
        return best

    def mertens_product(self, x: int, q: int = 1, a: int = 0) -> float:
        """Product of (1 - 1/p) over primes p <= x with p = a (mod q).

        Computed in log space and exponentiated once, for stability.
        """
        a = _check_class(q, a)
        ps = self.class_primes(x, q, a)
        if len(ps) == 0:
            return 1.0
        return float(np.exp(np.log1p(-1.0 / ps.astype(np.float64)).sum()))

    def fit_mertens_constant(self, q: int, a: int, xs: list[int]) -> "MertensFit":
        """Estimate the progression Mertens constant from sample points.

        Each sample contributes product(x) * (log x)^(1/phi(q)); the fitted
        constant is their mean and the per-point values are kept so drift
        across the sample range stays visible.
        """
        a = _check_class(q, a)
        if len(xs) < 3:
            raise DomainError("need at least 3 sample points")
        if list(xs) != sorted(set(int(x) for x in xs)):
            raise DomainError("sample points must be strictly increasing")
        expo = 1.0 / euler_phi(q)
        points = []
        per_point = []
        for x in xs:
            value = self.mertens_product(int(x), q, a)
            points.append((int(x), value))
            per_point.append(value * math.log(x) ** expo)
        fitted = float(np.mean(per_point))
        return MertensFit(q=q, a=a, sample_points=tuple(points),
                          per_point=tuple(per_point), fitted_constant=fitted)


@dataclass(frozen=True)
class MertensFit:
    """Sampled progression Mertens products and the fitted constant."""

    q: int
    a: int
    sample_points: tuple[tuple[int, float], ...]
    per_point: tuple[float, ...]
    fitted_constant: float


def sieve(limit: int, *, memory_budget: int = DEFAULT_MEMORY_BUDGET,
          segment: int = DEFAULT_SEGMENT) -> PrimeTable:
    """Segmented sieve of Eratosthenes producing a PrimeTable up to limit."""
    if limit < 2:
        raise DomainError("sieve limit must be at least 2")
    approx = int(1.3 * limit / max(math.log(limit), 1.0)) + 16
    needed = (limit + 1) + 8 * approx
    if needed > memory_budget:
        raise ResourceError(
            f"sieve to {limit} needs about {needed} bytes, budget is {memory_budget}")
    root = math.isqrt(limit)
    base = _simple_sieve(max(root, 2))
    flags = np.zeros(limit + 1, dtype=bool)
    for lo in range(0, limit + 1, segment):
        hi = min(lo + segment, limit + 1)
        seg = np.ones(hi - lo, dtype=bool)
        if lo == 0:
            seg[: min(2, hi)] = False
        for p in base:
            p = int(p)
            start = max(p * p, ((lo + p - 1) // p) * p)
            if start < hi:
                seg[start - lo :: p] = False
        flags[lo:hi] = seg
    primes = np.flatnonzero(flags).astype(np.int64)
    return PrimeTable(limit=limit, primes=primes, flags=flags)


def prime_window(table: PrimeTable, lo: int, hi: int) -> np.ndarray:
    """Primality flags for the integers in the window (lo, hi].

    Needs base primes up to isqrt(hi), so the table limit must cover that.
    Entry i of the result refers to the integer lo + 1 + i. A base prime p
    is never marked composite because marking starts at p*p.
    """
    if hi <= lo:
        raise DomainError("empty window")
    if lo < 0:
        raise DomainError("window must start at a nonnegative integer")
    root = math.isqrt(hi)
    if root > table.limit:
        raise RangeError(
            f"window up to {hi} needs base primes to {root}, table has {table.limit}")
    n0 = lo + 1
    seg = np.ones(hi - lo, dtype=bool)
    if n0 < 2:
        seg[: 2 - n0] = False
    for p in table.primes_upto(root):
        p = int(p)
        start = max(p * p, ((n0 + p - 1) // p) * p)
        if start <= hi:
            seg[start - n0 :: p] = False
    return seg


def save_cache(table: PrimeTable, path: str | Path) -> None:
    """Write the table as a header {magic, limit} plus little-endian u64 primes."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", PRIME_CACHE_MAGIC, table.limit))
        fh.write(table.primes.astype("<u8").tobytes())


def load_cache(path: str | Path) -> PrimeTable:
    """Read a prime cache file back into a PrimeTable."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16:
        raise DomainError(f"{path} is not a prime cache file")
    magic, limit = struct.unpack_from("<QQ", raw)
    if magic != PRIME_CACHE_MAGIC:
        raise DomainError(f"{path} has wrong magic {magic:#x}")
    primes = np.frombuffer(raw, dtype="<u8", offset=16).astype(np.int64)
    flags = np.zeros(limit + 1, dtype=bool)
    flags[primes] = True
    return PrimeTable(limit=int(limit), primes=primes, flags=flags)


def cached_sieve(limit: int, path: str | Path, **kwargs) -> PrimeTable:
    """Load the cache at path if it covers limit, otherwise sieve and rewrite it."""
    path = Path(path)
    if path.exists():
        try:
            table = load_cache(path)
            if table.limit >= limit:
                return table
        except DomainError:
            pass
    table = sieve(limit, **kwargs)
    save_cache(table, path)
    return table
