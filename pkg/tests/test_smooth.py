import math
import random

import numpy as np
import pytest

from apgaps import (AccuracyError, DomainError, RangeError, build_rho,
                    count_class_one_smooth, monotone_inclusion_check,
                    psi_exact, psi_ratio_report, restricted_smooth_sum,
                    rho_tail_integral, sieve)
from apgaps.smooth import EULER_GAMMA, integral_residuals


def fine_rho(u_top, step=1e-5):
    """Independent oracle: trapezoid stepping of the delay equation.

    Uses plain cumulative trapezoid per unit interval, a different scheme
    from the table builder.
    """
    n = round(1.0 / step)
    units = int(math.ceil(u_top))
    t = np.arange(units * n + 1) / n
    vals = np.ones(units * n + 1)
    for m in range(1, units):
        lo = m * n
        g = -vals[lo - n : lo + 1] / t[lo : lo + n + 1]
        incr = 0.5 * (g[:-1] + g[1:]) / n
        vals[lo + 1 : lo + n + 1] = vals[lo] + np.cumsum(incr)
    return vals


def enumerate_smooth(x, primes):
    """All integers <= x whose prime factors lie in `primes` (includes 1)."""
    out = [1]

    def rec(i, n):
        for j in range(i, len(primes)):
            m = n * primes[j]
            if m > x:
                break
            while m <= x:
                out.append(m)
                rec(j + 1, m)
                m *= primes[j]

    rec(0, 1)
    return sorted(out)


def test_rho_flat_start(rho_table):
    for u in (0.0, 0.25, 0.5, 1.0):
        assert rho_table.rho(u) == 1.0


def test_rho_closed_form_on_1_2(rho_table):
    us = np.linspace(1.0, 2.0, 257)
    err = np.abs(rho_table.rho(us) - (1 - np.log(us)))
    assert err.max() <= 1e-8


def test_rho_at_three_against_fine_oracle(rho_table):
    oracle = fine_rho(3.0)[-1]
    assert abs(oracle - 0.0486083883) < 1e-7  # frozen from the oracle itself
    assert rho_table.rho(3.0) == pytest.approx(oracle, abs=1e-7)


def test_rho_residual_invariant(rho_table):
    assert float(integral_residuals(rho_table).max()) <= 1e-8


def test_rho_shape_invariants(rho_table):
    vals = rho_table.values
    n = rho_table.cells_per_unit
    assert np.all(vals > 0) and np.all(vals <= 1.0)
    after_one = vals[n:]
    assert np.all(np.diff(after_one) < 0)


def test_rho_majorant_and_log_asymptotics(rho_table):
    for u in range(2, 9):
        assert rho_table.rho(float(u)) <= 1.0 / math.factorial(u)
    for u in (10.0, 15.0, 20.0):
        ratio = math.log(rho_table.rho(u)) / (-u * math.log(u))
        assert 0.7 <= ratio <= 1.3


def test_rho_build_validation():
    with pytest.raises(DomainError):
        build_rho(1.5)
    with pytest.raises(DomainError):
        build_rho(10.0, step=1.0 / 128.0)


def test_rho_coarsest_allowed_step_still_accurate():
    table = build_rho(6.0, step=1.0 / 256.0)
    assert float(integral_residuals(table).max()) <= 1e-8


def test_tail_integral(rho_table):
    total = rho_tail_integral(rho_table, 0.0)
    assert total.value == pytest.approx(math.exp(EULER_GAMMA), abs=1e-8)
    assert total.tail_bound == pytest.approx(30.0**-30.0)
    top = rho_tail_integral(rho_table, rho_table.u_max)
    assert top.value == 0.0
    one = rho_tail_integral(rho_table, 1.0)
    assert one.value == pytest.approx(math.exp(EULER_GAMMA) - 1.0, abs=1e-8)
    with pytest.raises(RangeError):
        rho_tail_integral(rho_table, rho_table.u_max + 1)


def test_tail_integral_off_grid(rho_table):
    # splitting at an arbitrary interior point is consistent
    a = rho_tail_integral(rho_table, 1.2345).value
    b = rho_table.integral(1.2345, 7.6) + rho_tail_integral(rho_table, 7.6).value
    assert a == pytest.approx(b, rel=1e-10)


def test_psi_exact_examples():
    assert psi_exact(100, 5) == 34
    assert psi_exact(10, 10) == 10
    assert psi_exact(1, 2) == 1


def test_psi_exact_against_enumeration(table):
    rng = random.Random(11)
    for _ in range(25):
        x = rng.randrange(2, 10**5)
        y = rng.randrange(2, 500)
        primes = [int(p) for p in table.primes_upto(y)]
        assert psi_exact(x, y, table=table) == len(enumerate_smooth(x, primes))


def test_psi_exact_monotone(table):
    rng = random.Random(5)
    for _ in range(20):
        x = rng.randrange(10, 10**4)
        y = rng.randrange(3, 100)
        base = psi_exact(x, y, table=table)
        assert psi_exact(x + rng.randrange(1, 50), y, table=table) >= base
        assert psi_exact(x, y + rng.randrange(1, 20), table=table) >= base


def test_psi_exact_validation():
    with pytest.raises(DomainError):
        psi_exact(0, 10)
    with pytest.raises(DomainError):
        psi_exact(10, 1)
    with pytest.raises(Exception):
        psi_exact(10**13, 100)


def test_psi_ratio_report(rho_table, table):
    flat = psi_ratio_report(100, 1.0, rho_table, table)
    assert flat.exact == 100 and flat.ratio == pytest.approx(1.0)
    mid = psi_ratio_report(1000, 2.0, rho_table, table)
    assert 0.8 <= mid.ratio <= 1.2
    small = psi_ratio_report(100, 3.0, rho_table, table)
    assert 0.5 <= small.ratio <= 1.6


def test_restricted_smooth_sum_full_set(table):
    # with every prime allowed the weighted sum telescopes toward 1
    res = restricted_smooth_sum(10**6, 10, lambda p: True, table=table)
    assert res.value <= 1.0 + 1e-12
    assert res.value > 0.97


def test_restricted_smooth_sum_empty_set(table):
    res = restricted_smooth_sum(100, 10, lambda p: False, table=table)
    assert res.value == 1.0


def test_restricted_smooth_sum_hand_case(table):
    members = enumerate_smooth(100, [3, 7])
    want = (1 - 1 / 3) * (1 - 1 / 7) * sum(1.0 / n for n in members)
    res = restricted_smooth_sum(100, 10, lambda p: p in (3, 7), table=table)
    assert res.value == pytest.approx(want, rel=1e-12)
    assert members == [1, 3, 7, 9, 21, 27, 49, 63, 81]


def test_restricted_smooth_sum_tail_mode(table):
    res = restricted_smooth_sum(10, 10, lambda p: p in (3, 7), tail=True,
                                x_cut=10**7, table=table)
    members = enumerate_smooth(10**7, [3, 7])
    want = (1 - 1 / 3) * (1 - 1 / 7) * sum(1.0 / n for n in members if n > 10)
    assert res.value == pytest.approx(want, rel=1e-12)
    assert res.truncation_bound > 0
    # the exact tail identity: value(infinity) - value(x) = 1 - finite part
    head = restricted_smooth_sum(10, 10, lambda p: p in (3, 7), table=table)
    assert res.value <= 1.0 - head.value
    assert (1.0 - head.value) - res.value <= res.truncation_bound


def test_restricted_smooth_sum_tail_accuracy_error(table):
    with pytest.raises(AccuracyError):
        restricted_smooth_sum(10, 10, lambda p: p in (3, 7), tail=True,
                              x_cut=12, table=table)


def test_monotone_inclusion_examples(table):
    assert monotone_inclusion_check(50, 10, lambda p: True, table=table)
    assert monotone_inclusion_check(50, 10, lambda p: p in (3, 7), table=table)
    assert monotone_inclusion_check(100, 20, lambda p: p == 11, table=table)


def test_monotone_inclusion_random(table):
    rng = random.Random(17)
    for _ in range(10):
        y = rng.randrange(5, 40)
        x = rng.randrange(10, 2000)
        allowed = {int(p) for p in table.primes_upto(y)
                   if rng.random() < 0.5}
        assert monotone_inclusion_check(x, y, lambda p: p in allowed,
                                        table=table)


def test_count_class_one_smooth(table):
    assert count_class_one_smooth(50, 4, table=table) == 8
    assert count_class_one_smooth(6, 3, table=table) == 1
    assert count_class_one_smooth(1, 5, table=table) == 1
    # oracle: direct enumeration
    primes = [int(p) for p in table.primes_upto(500) if p % 4 == 1]
    assert count_class_one_smooth(500, 4, table=table) == len(
        enumerate_smooth(500, primes))
    with pytest.raises(DomainError):
        count_class_one_smooth(10, 2, table=table)
