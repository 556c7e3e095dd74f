import math
import random

import numpy as np
import pytest

from apgaps import (DomainError, RangeError, ResourceError, cached_sieve,
                    is_prime, load_cache, next_prime, prime_window, save_cache,
                    sieve)

EULER_GAMMA = 0.5772156649015329


def trial_is_prime(n):
    if n < 2:
        return False
    for d in range(2, math.isqrt(n) + 1):
        if n % d == 0:
            return False
    return True


def test_sieve_small():
    assert list(sieve(10).primes) == [2, 3, 5, 7]
    assert list(sieve(2).primes) == [2]


def test_sieve_million_count(table):
    # 78498 frozen from a one-off trial-division count
    assert len(table.primes_upto(10**6)) == 78498


def test_sieve_matches_trial_division_on_sample(table):
    rng = random.Random(7)
    for _ in range(300):
        n = rng.randrange(2, 10**6)
        assert (n in table) == trial_is_prime(n)


def test_sieve_errors():
    with pytest.raises(DomainError):
        sieve(1)
    with pytest.raises(ResourceError):
        sieve(10**6, memory_budget=1000)


def test_sieve_is_segmented_consistently():
    a = sieve(100000, segment=1 << 9)
    b = sieve(100000)
    assert np.array_equal(a.primes, b.primes)


def test_miller_rabin_against_sieve(table):
    rng = random.Random(123)
    for _ in range(10**4):
        n = rng.randrange(2, 10**6)
        assert is_prime(n) == (n in table)
    assert not is_prime(1) and not is_prime(0)
    assert is_prime(2**61 - 1)  # Mersenne prime
    assert not is_prime(2**61 + 1)


def test_next_prime():
    assert next_prime(1) == 2
    assert next_prime(23) == 29
    assert next_prime(2) == 3


def test_theta_sum_examples(table):
    want = sum(math.log(p) for p in (2, 3, 5, 7))
    assert table.theta_sum(10) == pytest.approx(want, rel=1e-12)
    assert table.theta_sum(1, 3, 1) == 0.0
    assert table.theta_sum(13, 4, 1) == pytest.approx(
        math.log(5) + math.log(13), rel=1e-12)


def test_theta_sum_errors(table):
    with pytest.raises(RangeError):
        table.theta_sum(10**7, 1, 0)
    with pytest.raises(DomainError):
        table.theta_sum(100, 4, 2)


def test_theta_split_over_residues(table):
    # summing the class theta sums over every residue recovers the full sum
    for x, q in [(10**5, 3), (10**5, 4), (54321, 10)]:
        ps = table.primes_upto(x)
        total = 0.0
        for a in range(q):
            cls = ps[ps % q == a]
            total += float(np.log(cls.astype(float)).sum()) if len(cls) else 0.0
        assert total == pytest.approx(table.theta_sum(x), rel=1e-9)


def brute_theta_error(table, m, q):
    phi = sum(1 for a in range(1, q + 1) if math.gcd(a, q) == 1)
    classes = [a for a in range(q) if math.gcd(a, q) == 1] or [0]
    best = 0.0
    for a in classes:
        for x in range(1, m + 1):
            th = sum(math.log(int(p)) for p in table.primes_upto(x)
                     if q == 1 or p % q == a)
            best = max(best, abs(th - x / phi))
    return best


@pytest.mark.parametrize("m,q", [(10, 1), (2, 3), (50, 1), (50, 3), (37, 4), (60, 5)])
def test_theta_error_max_against_dense_scan(table, m, q):
    assert table.theta_error_max(m, q) == pytest.approx(
        brute_theta_error(table, m, q), rel=1e-12)


def test_theta_error_max_boundary(table):
    # no primes at or below 1, so the extreme sits at x = 1
    assert table.theta_error_max(1, 2) == 1.0


def test_theta_error_max_monotone_in_m(table):
    values = [table.theta_error_max(m, 3) for m in range(2, 400, 7)]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_mertens_product_examples(table):
    direct = 1.0
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29):
        direct *= 1 - 1 / p
    assert table.mertens_product(30) == pytest.approx(direct, rel=1e-12)
    assert table.mertens_product(2, 3, 2) == pytest.approx(0.5, rel=1e-12)
    direct41 = 1.0
    for p in (5, 13, 17, 29, 37, 41):
        direct41 *= 1 - 1 / p
    assert table.mertens_product(50, 4, 1) == pytest.approx(direct41, rel=1e-12)


def test_mertens_recomputation_tolerance(table):
    # log-space evaluation against plain multiplication, 1e-12 relative
    for x, q, a in [(10**5, 1, 0), (10**5, 3, 2), (99991, 4, 3)]:
        direct = 1.0
        for p in table.class_primes(x, q, a):
            direct *= 1 - 1 / int(p)
        assert table.mertens_product(x, q, a) == pytest.approx(direct, rel=1e-12)


def test_mertens_asymptotic(table):
    for x in (10**5, 10**6):
        ratio = table.mertens_product(x) * math.exp(EULER_GAMMA) * math.log(x)
        assert 0.9 <= ratio <= 1.1


def test_fit_mertens_constant(table):
    fit = table.fit_mertens_constant(1, 0, [10**4, 10**5, 10**6])
    assert fit.fitted_constant == pytest.approx(math.exp(-EULER_GAMMA), rel=0.05)
    fit3 = table.fit_mertens_constant(3, 2, [10**4, 10**5, 10**6])
    assert max(fit3.per_point) / min(fit3.per_point) < 1.1
    with pytest.raises(DomainError):
        table.fit_mertens_constant(3, 2, [10, 100])


def test_residue_class_count(table):
    assert table.residue_class_count(13, 4, 1) == 2
    assert table.residue_class_count(1, 5, 2) == 0
    assert table.residue_class_count(100, 1, 0) == 25


def test_prime_window_matches_table(table):
    flags = prime_window(table, 1000, 2000)
    for i, n in enumerate(range(1001, 2001)):
        assert bool(flags[i]) == (n in table)
    # window straddling small primes
    low = prime_window(table, 0, 30)
    assert [n for n, f in zip(range(1, 31), low) if f] == [
        2, 3, 5, 7, 11, 13, 17, 19, 23, 29]


def test_prime_window_needs_base_primes():
    small = sieve(10)
    with pytest.raises(RangeError):
        prime_window(small, 10**4, 10**4 + 100)


def test_cache_roundtrip(tmp_path, table):
    path = tmp_path / "primes.bin"
    small = sieve(10**4)
    save_cache(small, path)
    back = load_cache(path)
    assert back.limit == small.limit
    assert np.array_equal(back.primes, small.primes)
    assert 9973 in back and 9999 not in back
    # insufficient cached limit triggers regeneration
    bigger = cached_sieve(10**5, path)
    assert bigger.limit == 10**5
    assert load_cache(path).limit == 10**5
    # a larger cache is reused as-is
    again = cached_sieve(10**4, path)
    assert again.limit == 10**5


def test_cache_rejects_garbage(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a cache file at all")
    with pytest.raises(DomainError):
        load_cache(path)
