import os
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def round_fraction(x, t, emin=None, emax=None):
    """Independent oracle: round ``x`` to t significand bits, nearest-even, with exact rationals.

    Returns a Fraction, or None on overflow in a clamped format.
    """
    x = Fraction(x)
    if x == 0:
        return Fraction(0)
    sign = 1 if x > 0 else -1
    a = abs(x)
    e = a.numerator.bit_length() - a.denominator.bit_length()
    if Fraction(2) ** e > a:
        e -= 1
    # now 2^e <= a < 2^(e+1)
    if emin is not None:
        e = max(e, emin)
    q = Fraction(2) ** (e - t + 1)
    k = a / q
    n = k.numerator // k.denominator
    rem = k - n
    if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and n % 2 == 1):
        n += 1
    r = n * q
    if emax is not None:
        big = (2 - Fraction(2) ** (1 - t)) * Fraction(2) ** emax
        if r > big:
            return None
    return sign * r


@pytest.fixture(scope="session")
def hierarchy_1d_small():
    from mgmp.fem import Fem1dSpec
    from mgmp.hierarchy import build_1d_hierarchy

    return build_1d_hierarchy(Fem1dSpec(n_levels=6))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
