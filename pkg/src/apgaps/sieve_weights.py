"""Truncated divisor-sum sieve weights for systems of shifted linear forms.

A TupleSpec fixes the forms Q*x + h_1, ..., Q*x + h_k. The weight attached
to n is (1/j!) * sum over squarefree d <= R, d coprime to Q*p0, of
mu(d) * (log(R/d))^j, the sum restricted to d dividing the form product at
n. Divisibility is always decided prime by prime through the root sets of
the form product mod p; the product itself is never constructed, since it
overflows machine integers immediately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError, ResourceError
from .modulus_builder import ModulusPlan

MAX_CUTOFF = 200_000


@lru_cache(maxsize=8)
def _small_primes(limit: int) -> tuple[int, ...]:
    flags = np.ones(limit + 1, dtype=bool)
    flags[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if flags[p]:
            flags[p * p :: p] = False
    return tuple(int(p) for p in np.flatnonzero(flags))


def _factor_squarefree(d: int) -> tuple[int, ...] | None:
    """Prime factors of d, or None if d is not squarefree."""
    out = []
    m = d
    p = 2
    while p * p <= m:
        if m % p == 0:
            m //= p
            if m % p == 0:
                return None
            out.append(p)
        p += 1 if p == 2 else 2
    if m > 1:
        out.append(m)
    return tuple(out)


@dataclass
class TupleSpec:
    """Shift system over a modulus plan; treated as immutable after creation.

    Root sets mod p are cached on first use; the cache is read-mostly and
    shared lookups are safe.
    """

    plan: ModulusPlan
    shifts: tuple[int, ...]
    spread: int
    admissible: bool
    _q_prime_set: frozenset = field(repr=False, compare=False, default_factory=frozenset)
    _root_cache: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.shifts)

    @property
    def h_bound(self) -> float:
        return self.plan.h_bound


def tuple_spec(plan: ModulusPlan, shifts) -> TupleSpec:
    """Validate shifts and compute spread and the admissibility flag.

    For k <= log H admissibility is exactly coprimality of the shift product
    with Q; for larger k the root-count definition (fewer than p roots mod
    every prime) is checked directly over the primes where it could fail.
    """
    shifts = tuple(int(h) for h in shifts)
    if len(set(shifts)) != len(shifts):
        raise DomainError("shifts must be distinct")
    h_top = int(plan.h_bound)
    if any(h < 1 or h > h_top for h in shifts):
        raise DomainError(f"shifts must lie in [1, {h_top}]")
    spread = 1
    for i in range(len(shifts)):
        for j in range(i + 1, len(shifts)):
            spread *= abs(shifts[i] - shifts[j])
    gcd_free = all(
        all(h % p for h in shifts) for p in plan.distinct_primes)
    k = len(shifts)
    spec = TupleSpec(plan=plan, shifts=shifts, spread=spread, admissible=gcd_free,
                     _q_prime_set=frozenset(plan.distinct_primes))
    if plan.h_bound > 1 and k <= math.log(plan.h_bound):
        return spec
    if gcd_free:
        # beyond the small-k regime, small primes off Q can still be saturated
        for p in _small_primes(max(k, 2)):
            if p <= k and p not in spec._q_prime_set:
                if root_count(spec, p) >= p:
                    spec.admissible = False
                    break
    return spec


def _q_mod(spec: TupleSpec, modulus: int) -> int:
    """Q reduced mod `modulus`, built from the factor list."""
    value = spec.plan.q % modulus
    for p in spec.plan.blocked:
        if p != spec.plan.p0:
            value = value * (p % modulus) % modulus
    return value


def roots_mod_p(spec: TupleSpec, p: int) -> tuple[int, ...]:
    """Residues n mod p at which the form product vanishes.

    For p not dividing Q these are -h_i / Q mod p; for p dividing Q the
    product is constant mod p, so the set is empty or everything.
    """
    cached = spec._root_cache.get(p)
    if cached is not None:
        return cached
    if p in spec._q_prime_set:
        if any(h % p == 0 for h in spec.shifts):
            roots = tuple(range(p))
        else:
            roots = ()
    else:
        inv = pow(_q_mod(spec, p), -1, p)
        roots = tuple(sorted({(-h * inv) % p for h in spec.shifts}))
    spec._root_cache[p] = roots
    return roots


def root_count(spec: TupleSpec, p: int) -> int:
    """Number of residues mod p killing the form product (0 <= count <= p)."""
    return len(roots_mod_p(spec, p))


def roots_mod(spec: TupleSpec, d: int) -> tuple[int, ...]:
    """Root set mod a squarefree d, combined from the prime root sets by CRT."""
    if d < 1:
        raise DomainError("d must be positive")
    if d == 1:
        return (0,)
    factors = _factor_squarefree(d)
    if factors is None:
        raise DomainError(f"d={d} is not squarefree")
    residues = [0]
    modulus = 1
    for p in factors:
        rp = roots_mod_p(spec, p)
        inv = pow(modulus % p, -1, p)
        merged = []
        for r in residues:
            for s in rp:
                merged.append(r + modulus * (((s - r) * inv) % p))
        residues = merged
        modulus *= p
    return tuple(sorted(residues))


@dataclass(frozen=True)
class WeightParams:
    """Cutoff R, exponent j, and the primes excluded by the coprimality rule."""

    cutoff: float
    power: int
    excluded: frozenset

    @classmethod
    def from_plan(cls, plan: ModulusPlan, cutoff: float, power: int) -> "WeightParams":
        if cutoff <= 1:
            raise DomainError("cutoff R must exceed 1")
        if power < 1:
            raise DomainError("power j must be at least 1")
        excluded = set(plan.distinct_primes)
        if plan.p0 > 1:
            excluded.add(plan.p0)
        return cls(cutoff=float(cutoff), power=int(power),
                   excluded=frozenset(excluded))


def lambda_coeff(d: int, params: WeightParams) -> float:
    """Single divisor coefficient mu(d) * (log(R/d))^j / j!, with the support rules.

    Zero for d > R, for non-squarefree d, and for d sharing a prime with the
    excluded set.
    """
    if d < 1:
        raise DomainError("d must be positive")
    if d > params.cutoff:
        return 0.0
    factors = _factor_squarefree(d)
    if factors is None:
        return 0.0
    if any(p in params.excluded for p in factors):
        return 0.0
    sign = -1.0 if len(factors) % 2 else 1.0
    return sign * math.log(params.cutoff / d) ** params.power / math.factorial(params.power)


def usable_primes(spec: TupleSpec, params: WeightParams) -> list[int]:
    """Primes p <= R outside the excluded set; these carry the whole weight.

    Off Q every prime has at least one root, so no further filtering is
    needed.
    """
    if params.cutoff > MAX_CUTOFF:
        raise ResourceError(f"cutoff {params.cutoff} beyond enumeration budget")
    return [p for p in _small_primes(int(params.cutoff))
            if p not in params.excluded]


def weight(spec: TupleSpec, n: int, params: WeightParams) -> float:
    """Weight at n via root-set membership (the fast form).

    Only primes whose root set contains n mod p can divide the form product,
    so the divisor enumeration runs over squarefree products of those hit
    primes, pruned at R.
    """
    if n < 1:
        raise DomainError("n must be positive")
    hits = [p for p in usable_primes(spec, params)
            if (n % p) in roots_mod_p(spec, p)]
    j = params.power
    cutoff = params.cutoff
    total = math.log(cutoff) ** j

    def rec(i: int, d: int, sign: float) -> None:
        nonlocal total
        for idx in range(i, len(hits)):
            m = d * hits[idx]
            if m > cutoff:
                break
            total += -sign * math.log(cutoff / m) ** j
            rec(idx + 1, m, -sign)

    rec(0, 1, 1.0)
    return total / math.factorial(j)


def weight_by_trial_division(spec: TupleSpec, n: int, params: WeightParams) -> float:
    """Weight at n by direct divisibility tests (the independent slow form).

    Enumerates every squarefree d <= R over the non-excluded primes and
    keeps d exactly when the form product vanishes mod d, computed as
    prod((Q mod d) * n + h_i) mod d. Shares no root-set machinery with
    weight(), so the two implementations cross-check each other.
    """
    if n < 1:
        raise DomainError("n must be positive")
    ps = usable_primes(spec, params)
    j = params.power
    cutoff = params.cutoff
    total = math.log(cutoff) ** j

    def divides(d: int) -> bool:
        qn = _q_mod(spec, d) * n
        prod = 1
        for h in spec.shifts:
            prod = prod * ((qn + h) % d) % d
        return prod == 0

    def rec(i: int, d: int, sign: float) -> None:
        nonlocal total
        for idx in range(i, len(ps)):
            m = d * ps[idx]
            if m > cutoff:
                break
            if divides(m):
                total += -sign * math.log(cutoff / m) ** j
            rec(idx + 1, m, -sign)

    rec(0, 1, 1.0)
    return total / math.factorial(j)


def weight_support(spec: TupleSpec, params: WeightParams,
                   budget: int = 5_000_000) -> list[tuple[int, float, tuple[int, ...]]]:
    """All triples (d, lambda_d, roots mod d) with nonzero coefficient.

    This is the data needed to evaluate the weight on a whole range of n at
    once: n carries coefficient lambda_d exactly when n mod d lies in the
    root set of d.
    """
    ps = usable_primes(spec, params)
    out = [(1, lambda_coeff(1, params), (0,))]
    work = 0

    def rec(i: int, d: int, sign: float, residues: list[int], modulus: int) -> None:
        nonlocal work
        for idx in range(i, len(ps)):
            p = ps[idx]
            m = d * p
            if m > params.cutoff:
                break
            rp = roots_mod_p(spec, p)
            inv = pow(modulus % p, -1, p)
            merged = sorted(r + modulus * (((s - r) * inv) % p)
                            for r in residues for s in rp)
            work += len(merged)
            if work > budget:
                raise ResourceError("weight support enumeration budget exceeded")
            lam = -sign * math.log(params.cutoff / m) ** params.power \
                / math.factorial(params.power)
            out.append((m, lam, tuple(merged)))
            rec(idx + 1, m, -sign, merged, m)

    rec(0, 1, 1.0, [0], 1)
    return out


@dataclass(frozen=True)
class SeriesValue:
    """Truncated local-density product with its reported tail uncertainty."""

    value: float
    tail_bound: float
    admissible: bool


def singular_series(spec: TupleSpec, p_cut: int, table) -> SeriesValue:
    """Local-density product prod_p (1 - nu(p)/p) * (1 - 1/p)^(-k).

    Exact root counts are used for all p up to max(p_cut, H); beyond that
    every prime has exactly k roots, so log factors are accumulated until
    the increment drops below 1e-12, and the analytic remainder k^2/p_stop
    is reported as tail_bound rather than added to the value. Inadmissible
    systems return 0 with the flag lowered.
    """
    if not spec.admissible:
        return SeriesValue(value=0.0, tail_bound=0.0, admissible=False)
    k = spec.k
    h_top = int(spec.h_bound)
    exact_cut = max(int(p_cut), h_top)
    if exact_cut > table.limit:
        raise DomainError(
            f"need exact root counts to {exact_cut}, table has {table.limit}")
    ps = table.primes_upto(exact_cut)
    qset = spec._q_prime_set
    on_q = np.array([int(p) in qset for p in ps])
    off = ps[~on_q].astype(np.int64)
    # off Q the root count is k minus collisions among shifts mod p
    nu = np.full(len(off), k, dtype=np.int64)
    collided = np.zeros(len(off), dtype=bool)
    shifts = spec.shifts
    for i in range(k):
        for j in range(i + 1, k):
            collided |= (abs(shifts[i] - shifts[j]) % off) == 0
    for idx in np.flatnonzero(collided):
        p = int(off[idx])
        nu[idx] = len({h % p for h in shifts})
    off_f = off.astype(np.float64)
    total = float((np.log1p(-nu / off_f) - k * np.log1p(-1.0 / off_f)).sum())
    for p in ps[on_q]:
        total += -k * math.log1p(-1.0 / float(p))
    # tail with exactly k roots per prime
    tail_ps = table.primes[np.searchsorted(table.primes, exact_cut, side="right"):]
    p_stop = exact_cut
    if len(tail_ps):
        tail_f = tail_ps.astype(np.float64)
        incr = np.log1p(-k / tail_f) - k * np.log1p(-1.0 / tail_f)
        small = np.flatnonzero(np.abs(incr) < 1e-12)
        stop = int(small[0]) if len(small) else len(tail_ps)
        total += float(incr[:stop].sum())
        p_stop = int(tail_ps[stop - 1]) if stop else exact_cut
    return SeriesValue(value=math.exp(total), tail_bound=k * k / p_stop,
                       admissible=True)
