"""Construction of a highly composite modulus that biases coprime residues.

The modulus Q = q * prod(blocked primes) is chosen so that, among the
integers in (0, H] coprime to Q, the residue class a (mod q) keeps its
members while the other classes are thinned out. Q is never materialized as
a single integer for real parameter sizes; every coprimality test runs
against the factor list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConstructionError, DomainError, RangeError, ResourceError
from .primes import PrimeTable, is_prime, prime_factors

MIN_H = 5000.0
DEFAULT_C = 4.0

# Clause tags recorded per blocked prime (first matching clause wins).
CLAUSE_MANUAL = 0
CLAUSE_SMALL_CLASS_ONE = 1   # p <= log H and p = 1 (mod q)
CLAUSE_NEUTRAL = 2           # p <= H/(log H)^2, p in neither class 1 nor a
CLAUSE_MID_CLASS_ONE = 3     # cut(H) <= p <= H/(log H)^2 and p = 1 (mod q)
CLAUSE_TARGET_CLASS = 4      # p <= H/cut(H) and p = a (mod q)


def cut_threshold(h_bound: float) -> float:
    """Slowly growing split point exp(log H * logloglog H / (2 loglog H))."""
    if h_bound < MIN_H:
        raise DomainError(f"H must be at least {MIN_H}")
    big_l = math.log(h_bound)
    return math.exp(big_l * math.log(math.log(big_l)) / (2.0 * math.log(big_l)))


def build_prime_set(q: int, a: int, h_bound: float,
                    table: PrimeTable) -> dict[int, int]:
    """The blocked-prime set for (q, a, H) with one clause tag per prime.

    Clauses follow the two-branch definition (a = 1 mod q versus not); where
    clauses overlap the lowest clause number is recorded. The mid-range
    class-1 clause is empty whenever cut(H) > H/(log H)^2, which happens for
    moderate H.
    """
    if q < 3:
        raise DomainError("q must be at least 3")
    a %= q
    if math.gcd(q, a) != 1:
        raise DomainError(f"residue {a} not coprime to {q}")
    if h_bound > table.limit:
        raise RangeError(f"H={h_bound} exceeds table limit {table.limit}")
    log_h = math.log(h_bound)
    cut = cut_threshold(h_bound)
    lim_neutral = h_bound / log_h**2
    lim_target = h_bound / cut
    ps = table.primes_upto(int(min(table.limit, max(lim_neutral, lim_target, log_h))))
    r = ps % q
    tags: dict[int, int] = {}

    def admit(mask: np.ndarray, clause: int) -> None:
        for p in ps[mask]:
            tags.setdefault(int(p), clause)

    if a == 1:
        admit((ps <= log_h) & (r == 1), CLAUSE_SMALL_CLASS_ONE)
        admit((ps <= lim_neutral) & (r != 1), CLAUSE_NEUTRAL)
    else:
        admit((ps <= log_h) & (r == 1), CLAUSE_SMALL_CLASS_ONE)
        admit((ps <= lim_neutral) & (r != 1) & (r != a), CLAUSE_NEUTRAL)
        admit((ps >= cut) & (ps <= lim_neutral) & (r == 1), CLAUSE_MID_CLASS_ONE)
        admit((ps <= lim_target) & (r == a), CLAUSE_TARGET_CLASS)
    return tags


@dataclass(frozen=True)
class ModulusPlan:
    """Factored modulus Q = q * prod(blocked primes except p0). Immutable.

    `blocked` is the full tagged prime set; p0 (1 if unused) is the one
    prime excluded from Q. Derived fields are precomputed by the factories.
    """

    q: int
    a: int
    h_bound: float
    t_cut: float
    p0: int
    blocked: tuple[int, ...]
    clause_tags: tuple[int, ...]
    c_bound: float
    toy: bool
    q_primes: tuple[int, ...]
    distinct_primes: tuple[int, ...]
    distinct_primes_tilde: tuple[int, ...]
    log_q_total: float
    phi_ratio: float
    phi_ratio_tilde: float

    def coprime(self, m: int) -> bool:
        """gcd(Q, m) == 1, tested against the factor list."""
        return all(m % p for p in self.distinct_primes)

    def q_int(self, max_log: float = 50.0) -> int:
        """Q as an exact integer; refuses when log Q exceeds max_log."""
        if self.log_q_total > max_log:
            raise RangeError(
                f"log Q = {self.log_q_total:.1f} too large to materialize")
        value = self.q
        for p in self.blocked:
            if p != self.p0:
                value *= p
        return value

    def factors_with_multiplicity(self) -> tuple[int, ...]:
        """Primes of Q with multiplicity: q's factorization then the blocked set."""
        out = []
        m = self.q
        p = 2
        while p * p <= m:
            while m % p == 0:
                out.append(p)
                m //= p
            p += 1 if p == 2 else 2
        if m > 1:
            out.append(m)
        out.extend(p for p in self.blocked if p != self.p0)
        return tuple(out)


def _phi_ratio(primes: tuple[int, ...]) -> float:
    if not primes:
        return 1.0
    return float(np.exp(np.log1p(-1.0 / np.array(primes, dtype=float)).sum()))


def _finish_plan(q: int, a: int, h_bound: float, t_cut: float, p0: int,
                 tags: dict[int, int], c_bound: float, toy: bool) -> ModulusPlan:
    blocked = tuple(sorted(tags))
    clause_tags = tuple(tags[p] for p in blocked)
    q_primes = prime_factors(q)
    factors = tuple(p for p in blocked if p != p0)
    distinct = tuple(sorted(set(q_primes) | set(factors)))
    distinct_tilde = tuple(sorted(set(q_primes) | set(blocked)))
    log_q_total = math.log(q) + float(sum(math.log(p) for p in factors))
    return ModulusPlan(
        q=q, a=a % q, h_bound=float(h_bound), t_cut=t_cut, p0=p0,
        blocked=blocked, clause_tags=clause_tags, c_bound=c_bound, toy=toy,
        q_primes=q_primes, distinct_primes=distinct,
        distinct_primes_tilde=distinct_tilde, log_q_total=log_q_total,
        phi_ratio=_phi_ratio(distinct), phi_ratio_tilde=_phi_ratio(distinct_tilde))


def build_plan(q: int, a: int, h_bound: float, table: PrimeTable, *,
               p0: int | None = None, c: float = DEFAULT_C) -> ModulusPlan:
    """Build and validate a modulus plan for (q, a) at height H.

    Raises DomainError for an inadmissible injected p0 and ConstructionError
    when log Q exceeds c * H / (log H)^2; the error message carries the
    measured margin so the caller can raise c deliberately.
    """
    tags = build_prime_set(q, a, h_bound, table)
    log_h = math.log(h_bound)
    if p0 is not None:
        if not is_prime(p0):
            raise DomainError(f"injected p0={p0} is not prime")
        if p0 <= log_h:
            raise DomainError(f"injected p0={p0} must exceed log H = {log_h:.2f}")
        if q % p0 == 0:
            raise DomainError(f"injected p0={p0} divides q={q}")
    p0_val = p0 if p0 is not None else 1
    plan = _finish_plan(q, a % q, h_bound, cut_threshold(h_bound), p0_val,
                        tags, c, toy=False)
    bound = c * h_bound / log_h**2
    margin = plan.log_q_total * log_h**2 / h_bound
    if plan.log_q_total > bound:
        raise ConstructionError(
            f"log Q = {plan.log_q_total:.1f} exceeds c*H/(log H)^2 = {bound:.1f} "
            f"(measured c would need to be >= {margin:.2f})")
    # every prime of Q must stay below H, and every prime up to log H must divide Q
    if plan.distinct_primes and plan.distinct_primes[-1] > h_bound:
        raise ConstructionError("a factor of Q exceeds H")
    present = set(plan.distinct_primes)
    for p in table.primes_upto(int(log_h)):
        if int(p) not in present:
            raise ConstructionError(f"prime {int(p)} <= log H does not divide Q")
    return plan


def toy_plan(q: int, a: int, h_bound: float = 12.0,
             extra_primes: tuple[int, ...] = ()) -> ModulusPlan:
    """Small hand-built plan for experiments; skips the height-H machinery."""
    if q < 1:
        raise DomainError("q must be positive")
    a %= q
    if math.gcd(q, a) != 1:
        raise DomainError(f"residue {a} not coprime to {q}")
    seen = set(prime_factors(q))
    for p in extra_primes:
        if not is_prime(p):
            raise DomainError(f"extra factor {p} is not prime")
        if p in seen:
            raise DomainError(f"extra factor {p} repeats a prime of the plan")
        seen.add(p)
    tags = {int(p): CLAUSE_MANUAL for p in extra_primes}
    return _finish_plan(q, a, h_bound, float("nan"), 1, tags,
                        float("inf"), toy=True)


@dataclass(frozen=True)
class ResidueSets:
    """Coprime residues h in (0, H] split by class: h = a (mod q) or not."""

    in_class: np.ndarray
    off_class: np.ndarray
    tilde: bool

    @property
    def in_count(self) -> int:
        return int(len(self.in_class))

    @property
    def off_count(self) -> int:
        return int(len(self.off_class))


def residue_sets(plan: ModulusPlan, *, tilde: bool = False) -> ResidueSets:
    """Sieve (0, H] against the plan's factor list and split by residue class.

    tilde=True uses the factor set with p0 kept in, matching the
    pre-exceptional-prime modulus.
    """
    h_top = int(plan.h_bound)
    factors = plan.distinct_primes_tilde if tilde else plan.distinct_primes
    coprime = np.ones(h_top + 1, dtype=bool)
    coprime[0] = False
    for p in factors:
        if p <= h_top:
            coprime[p::p] = False
    h = np.arange(h_top + 1)
    in_mask = (h % plan.q) == plan.a
    return ResidueSets(in_class=h[coprime & in_mask],
                       off_class=h[coprime & ~in_mask], tilde=tilde)


@dataclass(frozen=True)
class BalanceReport:
    """Measured residue-class balance next to the benchmark quantities."""

    q: int
    a: int
    h_bound: float
    in_count: int
    off_count: int
    h_over_log_h: float
    phi_scaled_h: float
    off_ratio: float        # |T| * log H / H
    balance_ratio: float    # (|S| - |T|) * Q / (H * phi(Q))
    phi_ratio: float
    below_target_regime: bool


def balance_report(plan: ModulusPlan,
                   sets: ResidueSets | None = None) -> BalanceReport:
    """Compare |S|, |T| with H/log H and H*phi(Q)/Q for this plan.

    Instances with |S| <= |T| are flagged as below the regime where the
    class bias has kicked in, rather than treated as failures.
    """
    if sets is None:
        sets = residue_sets(plan)
    h_bound = plan.h_bound
    log_h = math.log(h_bound)
    s_count, t_count = sets.in_count, sets.off_count
    return BalanceReport(
        q=plan.q, a=plan.a, h_bound=h_bound,
        in_count=s_count, off_count=t_count,
        h_over_log_h=h_bound / log_h,
        phi_scaled_h=h_bound * plan.phi_ratio,
        off_ratio=t_count * log_h / h_bound,
        balance_ratio=(s_count - t_count) / (h_bound * plan.phi_ratio),
        phi_ratio=plan.phi_ratio,
        below_target_regime=s_count <= t_count)


def sweep_balance(q: int, a: int, x_top: float, table: PrimeTable, *,
                  exponent: float = 10.0, c: float = DEFAULT_C,
                  points: int = 7) -> list[BalanceReport]:
    """Balance reports over a geometric H-grid in [x_top/(log x_top)^A, x_top].

    The favourable H is only known to exist somewhere in this window, so the
    sweep reports every grid point; callers pick the best balance_ratio.
    """
    if points < 1:
        raise DomainError("need at least one grid point")
    lo = max(MIN_H, x_top / math.log(x_top) ** exponent)
    hs = np.geomspace(lo, x_top, points)
    out = []
    for h_bound in sorted(set(float(h) for h in hs)):
        plan = build_plan(q, a, h_bound, table, c=c)
        out.append(balance_report(plan))
    return out


class RankinBound(NamedTuple):
    restricted_sum: float
    majorant: float


def rankin_bound(plan: ModulusPlan, x_top: int, table: PrimeTable,
                 budget: int = 2_000_000) -> RankinBound:
    """Rankin-trick check for sums over class-1-smooth d in (sqrt(X), X].

    The restricted sum adds (X/d) * (d/sqrt(X))^(1/3) over integers d in
    (sqrt(X), X] composed only of primes p <= log X with p = 1 (mod q); the
    majorant is X^(5/6) * prod over all p <= log X of (1 - p^(-2/3))^(-1).
    """
    if x_top < 100:
        raise DomainError("X must be at least 100")
    log_x = math.log(x_top)
    all_small = [int(p) for p in table.primes_upto(int(log_x))]
    qual = [p for p in all_small if p % plan.q == 1]
    root = math.sqrt(x_top)
    total = 0.0
    ops = 0

    def rec(i: int, d: int) -> None:
        nonlocal total, ops
        for j in range(i, len(qual)):
            m = d * qual[j]
            while m <= x_top:
                ops += 1
                if ops > budget:
                    raise ResourceError("Rankin enumeration budget exceeded")
                if m > root:
                    total += (x_top / m) * (m / root) ** (1.0 / 3.0)
                rec(j + 1, m)
                m *= qual[j]

    rec(0, 1)
    majorant = x_top ** (5.0 / 6.0) * math.exp(
        sum(-math.log1p(-p ** (-2.0 / 3.0)) for p in all_small))
    return RankinBound(restricted_sum=total, majorant=majorant)


def plan_to_json(plan: ModulusPlan) -> dict:
    """JSON-ready record for a plan; exact round trip via plan_from_json."""
    return {
        "schema": "apgaps.plan.v1",
        "q": plan.q,
        "a": plan.a,
        "h_bound": plan.h_bound,
        "t_cut": None if math.isnan(plan.t_cut) else plan.t_cut,
        "p0": plan.p0,
        "c": None if math.isinf(plan.c_bound) else plan.c_bound,
        "toy": plan.toy,
        "factors": list(plan.blocked),
        "clauses": list(plan.clause_tags),
    }


def plan_from_json(record: dict) -> ModulusPlan:
    """Rebuild a plan from its JSON record, recomputing derived fields."""
    if record.get("schema") != "apgaps.plan.v1":
        raise DomainError("not a plan record")
    tags = dict(zip((int(p) for p in record["factors"]),
                    (int(t) for t in record["clauses"])))
    t_cut = record.get("t_cut")
    c = record.get("c")
    return _finish_plan(
        q=int(record["q"]), a=int(record["a"]), h_bound=float(record["h_bound"]),
        t_cut=float("nan") if t_cut is None else float(t_cut),
        p0=int(record["p0"]), tags=tags,
        c_bound=float("inf") if c is None else float(c),
        toy=bool(record["toy"]))
