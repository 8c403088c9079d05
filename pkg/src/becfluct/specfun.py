"""Gamma and Riemann zeta on the real axis."""

import math

import mpmath

EULER_GAMMA = 0.57721566490153286061

# B_2, B_4, ..., B_14
_BERNOULLI = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6)
_EM_N = 16


def euler_gamma():
    return EULER_GAMMA


def gamma_fn(s):
    """Gamma function for real s > 0."""
    s = float(s)
    if not s > 0 or not math.isfinite(s):
        raise ValueError(f"gamma_fn needs s > 0, got {s}")
    # evaluated at 30 digits so the double result is correctly rounded
    with mpmath.workdps(30):
        return float(mpmath.gamma(s))


def zeta_fn(s):
    """Riemann zeta for real s > 1 by Euler-Maclaurin summation.

    Direct sum of the first 15 terms, integral tail, half-term and seven
    Bernoulli corrections; relative error is at the 1e-16 level for s
    up to a few hundred.
    """
    s = float(s)
    if not s > 1 or not math.isfinite(s):
        raise ValueError(f"zeta_fn needs s > 1, got {s}")
    n = _EM_N
    head = math.fsum(k ** -s for k in range(1, n))
    tail = n ** (1 - s) / (s - 1) + 0.5 * n ** -s
    rising = s
    power = n ** (-s - 1)
    for j, b in enumerate(_BERNOULLI, 1):
        tail += b / math.factorial(2 * j) * rising * power
        rising *= (s + 2 * j - 1) * (s + 2 * j)
        power /= n * n
    return head + tail
