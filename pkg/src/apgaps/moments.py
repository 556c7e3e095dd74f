"""Moment sums of the sieve weights and the signed positivity functional.

Everything here evaluates sums over n in (N, 2N]. Weights are laid down on
the whole range at once from the (d, coefficient, root set) support list,
so the work is a handful of strided array updates rather than a divisor
search per n. Evaluation order is fixed, so identical parameters reproduce
identical floating-point results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, RangeError
from .modulus_builder import ModulusPlan, ResidueSets, residue_sets
from .primes import PrimeTable, prime_window
from .sieve_weights import TupleSpec, WeightParams, tuple_spec, weight_support

MC_THRESHOLD = 1_000_000
DEFAULT_SAMPLES = 100_000
THETA_BLOCK = 1 << 25


def default_ell(k: int) -> int:
    """The default second parameter floor(sqrt(k))."""
    return math.isqrt(k)


def default_epsilon_prime(epsilon: float, c_q: float = 0.1) -> float:
    """Default cutoff defect c_q * epsilon / 10; c_q is configurable."""
    return c_q * epsilon / 10.0


def _validate_cutoff(n_top: int, cutoff: float) -> float:
    """Check R = N^(1/4 - eps') for some eps' in (0, 1/4); return eps'."""
    if n_top < 2:
        raise DomainError("N must be at least 2")
    if not (1.0 < cutoff < n_top ** 0.25):
        raise DomainError(
            f"cutoff {cutoff} must lie strictly between 1 and N^(1/4)")
    return 0.25 - math.log(cutoff) / math.log(n_top)


def _spec_for(plan: ModulusPlan, shifts) -> TupleSpec:
    spec = tuple_spec(plan, shifts)
    if not spec.admissible:
        raise DomainError("shift system shares a prime with the modulus")
    return spec


def weight_values(spec: TupleSpec, params: WeightParams, n_top: int,
                  n_sample: np.ndarray | None = None) -> np.ndarray:
    """Weights for all n in (N, 2N], or for the sampled n when given."""
    support = weight_support(spec, params)
    if n_sample is None:
        arr = np.zeros(n_top)
        for d, lam, residues in support:
            for r in residues:
                start = (r - (n_top + 1)) % d
                arr[start::d] += lam
        return arr
    arr = np.zeros(len(n_sample))
    for d, lam, residues in support:
        mask = np.isin(n_sample % d, residues)
        arr[mask] += lam
    return arr


class MomentResult(NamedTuple):
    measured: float
    predicted: float
    std_error: float | None = None


def moment2(plan: ModulusPlan, shifts, n_top: int, cutoff: float, ell: int, *,
            samples: int | None = None, seed: int = 0) -> MomentResult:
    """Second moment of the weights over (N, 2N], measured and predicted.

    measured = (1/N) * (phi(Q)/Q)^k * sum of weight(n)^2; the prediction is
    binom(2*ell, ell) * (log R)^(k+2*ell) / (k+2*ell)!. Above the Monte
    Carlo threshold the sum is estimated from a uniform sample with the
    standard error reported.
    """
    spec = _spec_for(plan, shifts)
    k = spec.k
    _validate_cutoff(n_top, cutoff)
    params = WeightParams.from_plan(plan, cutoff, k + ell)
    predicted = math.comb(2 * ell, ell) * math.log(cutoff) ** (k + 2 * ell) \
        / math.factorial(k + 2 * ell)
    phi_pow = plan.phi_ratio ** k
    if samples is None and n_top > MC_THRESHOLD:
        samples = DEFAULT_SAMPLES
    if samples:
        rng = np.random.default_rng(seed)
        ns = rng.integers(n_top + 1, 2 * n_top + 1, size=samples, endpoint=False)
        sq = weight_values(spec, params, n_top, n_sample=ns) ** 2
        measured = phi_pow * float(sq.mean())
        err = phi_pow * float(sq.std(ddof=1)) / math.sqrt(samples)
        return MomentResult(measured=measured, predicted=predicted, std_error=err)
    w = weight_values(spec, params, n_top)
    measured = phi_pow * float(w @ w) / n_top
    return MomentResult(measured=measured, predicted=predicted)


class ThetaMomentResult(NamedTuple):
    measured: float
    predicted: float
    case: str


def _theta_dots(plan: ModulusPlan, hs, n_top: int, table: PrimeTable,
                weights_sq: np.ndarray) -> dict[int, float]:
    """Sums over n in (N, 2N] of theta(Q*n + h) * weights_sq[n - N - 1].

    One window sieve per block serves every shift in hs.
    """
    q_int = plan.q_int()
    hs = [int(h) for h in hs]
    h_max = max(hs)
    totals = {h: 0.0 for h in hs}
    block = max(1, THETA_BLOCK // q_int)
    for b_lo in range(n_top + 1, 2 * n_top + 1, block):
        b_hi = min(b_lo + block - 1, 2 * n_top)
        lo = q_int * (b_lo - 1)
        flags = prime_window(table, lo, q_int * b_hi + h_max)
        ns = np.arange(b_lo, b_hi + 1, dtype=np.int64)
        w_part = weights_sq[b_lo - n_top - 1 : b_hi - n_top]
        base = q_int * ns
        for h in hs:
            vals = base + h
            hit = flags[vals - (lo + 1)]
            theta = np.where(hit, np.log(vals.astype(np.float64)), 0.0)
            totals[h] += float(theta @ w_part)
    return totals


def theta_moment(plan: ModulusPlan, shifts, h: int, n_top: int, cutoff: float,
                 ell: int, table: PrimeTable) -> ThetaMomentResult:
    """Prime-log-weighted second moment at shift h, with its case label.

    The prediction splits on whether Q*x + h is one of the forms: outside
    the system it gains a factor Q/phi(Q); inside it gains one extra power
    of log R and the bumped binomial/factorial pair.
    """
    spec = _spec_for(plan, shifts)
    k = spec.k
    _validate_cutoff(n_top, cutoff)
    h = int(h)
    if not (1 <= h <= int(plan.h_bound)):
        raise DomainError(f"h={h} outside (0, {int(plan.h_bound)}]")
    if not plan.coprime(h):
        raise DomainError(f"h={h} shares a factor with the modulus")
    params = WeightParams.from_plan(plan, cutoff, k + ell)
    w = weight_values(spec, params, n_top)
    dot = _theta_dots(plan, [h], n_top, table, w * w)[h]
    measured = plan.phi_ratio ** k * dot / n_top
    case = "in" if h in spec.shifts else "out"
    predicted = _theta_prediction(plan, spec, cutoff, ell, h)
    return ThetaMomentResult(measured=measured, predicted=predicted, case=case)


def _theta_prediction(plan: ModulusPlan, spec: TupleSpec, cutoff: float,
                      ell: int, h: int) -> float:
    k = spec.k
    log_r = math.log(cutoff)
    if h in spec.shifts:
        return math.comb(2 * ell + 2, ell + 1) * log_r ** (k + 2 * ell + 1) \
            / math.factorial(k + 2 * ell + 1)
    return (1.0 / plan.phi_ratio) * math.comb(2 * ell, ell) \
        * log_r ** (k + 2 * ell) / math.factorial(k + 2 * ell)


@dataclass(frozen=True)
class FunctionalReport:
    """Measured versus predicted values for the signed functional and its parts."""

    n_top: int
    cutoff: float
    epsilon: float
    epsilon_prime: float
    k: int
    ell: int
    plan: ModulusPlan
    shifts: tuple[int, ...]
    in_count: int
    off_count: int
    moment2_measured: float
    moment2_predicted: float
    theta_measured: dict
    theta_predicted: dict
    bracket: float
    functional_measured: float
    functional_predicted: float

    def theta_total(self) -> float:
        """Signed sum of the per-shift theta moments (in-class minus off-class)."""
        a, q = self.plan.a, self.plan.q
        return sum(v if h % q == a else -v for h, v in self.theta_measured.items())


def positivity_functional(plan: ModulusPlan, shifts, n_top: int, cutoff: float,
                          ell: int, table: PrimeTable, *,
                          sets: ResidueSets | None = None) -> FunctionalReport:
    """Evaluate the signed functional that forces same-class prime pairs.

    measured = (1/N) (phi(Q)/Q)^k * sum over n of
        (sum_{h in S} theta(Qn+h) - sum_{h in T} theta(Qn+h) - log(3QN))
        * weight(n)^2,
    where S are the coprime residues in class a and T the remaining coprime
    residues. The prediction multiplies the plain second-moment prediction
    by log N times the bracket

        (Q/phi(Q)) (|S| - |T|) / log N
        + [2(2*ell+1)/(ell+1)] [k/(k+2*ell+1)] (1/4 - eps') - 1.
    """
    spec = _spec_for(plan, shifts)
    k = spec.k
    eps_prime = _validate_cutoff(n_top, cutoff)
    if any(h % plan.q != plan.a for h in spec.shifts):
        raise DomainError("every shift must lie in the target class a mod q")
    if sets is None:
        sets = residue_sets(plan)
    q_int = plan.q_int()
    log_n = math.log(n_top)
    log_3qn = math.log(3 * q_int * n_top)
    params = WeightParams.from_plan(plan, cutoff, k + ell)
    w = weight_values(spec, params, n_top)
    w_sq = w * w
    phi_pow = plan.phi_ratio ** k
    sum_sq = float(w_sq.sum())
    in_set = {int(h) for h in sets.in_class}
    all_h = sorted(in_set | {int(h) for h in sets.off_class})
    dots = _theta_dots(plan, all_h, n_top, table, w_sq)
    theta_meas = {}
    theta_pred = {}
    signed = -log_3qn * sum_sq
    for h_val in all_h:
        signed += dots[h_val] if h_val in in_set else -dots[h_val]
        theta_meas[h_val] = phi_pow * dots[h_val] / n_top
        theta_pred[h_val] = _theta_prediction(plan, spec, cutoff, ell, h_val)
    measured = phi_pow * signed / n_top
    m2_pred = math.comb(2 * ell, ell) * math.log(cutoff) ** (k + 2 * ell) \
        / math.factorial(k + 2 * ell)
    bracket = (sets.in_count - sets.off_count) / (plan.phi_ratio * log_n) \
        + (2.0 * (2 * ell + 1) / (ell + 1)) * (k / (k + 2 * ell + 1)) \
        * (0.25 - eps_prime) - 1.0
    return FunctionalReport(
        n_top=n_top, cutoff=cutoff, epsilon=plan.h_bound / log_n,
        epsilon_prime=eps_prime, k=k, ell=ell, plan=plan, shifts=spec.shifts,
        in_count=sets.in_count, off_count=sets.off_count,
        moment2_measured=phi_pow * sum_sq / n_top, moment2_predicted=m2_pred,
        theta_measured=theta_meas, theta_predicted=theta_pred, bracket=bracket,
        functional_measured=measured,
        functional_predicted=m2_pred * log_n * bracket)


def bracket_value(plan: ModulusPlan, sets: ResidueSets, log_n: float, k: int,
                  ell: int, eps_prime: float) -> float:
    """The bracket alone, for predicted-only reports on large real plans."""
    return (sets.in_count - sets.off_count) / (plan.phi_ratio * log_n) \
        + (2.0 * (2 * ell + 1) / (ell + 1)) * (k / (k + 2 * ell + 1)) \
        * (0.25 - eps_prime) - 1.0


class FourthMomentResult(NamedTuple):
    measured: float
    majorant: float


def fourth_moment(plan: ModulusPlan, shifts, n_top: int, cutoff: float,
                  ell: int) -> FourthMomentResult:
    """Raw fourth moment of the weights next to the N (log N)^(19k+4l) majorant.

    Requires R^4 < N, the regime where the fourth-power divisor count stays
    controlled.
    """
    spec = _spec_for(plan, shifts)
    k = spec.k
    if not (1.0 < cutoff and cutoff ** 4 < n_top):
        raise DomainError("need 1 < R and R^4 < N")
    params = WeightParams.from_plan(plan, cutoff, k + ell)
    w = weight_values(spec, params, n_top)
    measured = float((w ** 4).sum())
    majorant = n_top * math.log(n_top) ** (19 * k + 4 * ell)
    return FourthMomentResult(measured=measured, majorant=majorant)


def ap_error_sum(plan: ModulusPlan, n_top: int, d_max: int,
                 table: PrimeTable) -> float:
    """Sum of worst-case progression errors over stretched moduli Q*D.

    D runs over squarefree integers up to d_max coprime to Q*p0. The desk
    constraints Q*d_max <= 1e6 and 3*Q*N <= table limit are enforced with
    advice in the error message.
    """
    q_int = plan.q_int()
    if q_int * d_max > 1_000_000:
        raise RangeError(
            f"Q*D_max = {q_int * d_max} exceeds 1e6; shrink D_max or the plan")
    m_top = 3 * q_int * n_top
    if m_top > table.limit:
        raise RangeError(
            f"3*Q*N = {m_top} exceeds table limit {table.limit}; shrink N")
    total = 0.0
    for d in range(1, d_max + 1):
        factors = _squarefree_factors(d)
        if factors is None:
            continue
        if not plan.coprime(d):
            continue
        if plan.p0 > 1 and d % plan.p0 == 0:
            continue
        total += table.theta_error_max(m_top, q_int * d)
    return total


def _squarefree_factors(d: int):
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
    return out
