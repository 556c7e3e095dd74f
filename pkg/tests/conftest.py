import pytest

from apgaps import build_rho, sieve


@pytest.fixture(scope="session")
def table():
    """One shared prime table to 1e6; immutable, so sharing is safe."""
    return sieve(10**6)


@pytest.fixture(scope="session")
def rho_table():
    return build_rho(30.0)
