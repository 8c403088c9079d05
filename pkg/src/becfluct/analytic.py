"""Closed-form predictions for the ideal Bose gas in the canonical ensemble.

Everything here is a deterministic function of the Weyl constants (L, alpha)
or of a generated spectrum. Infinite series over the spectrum are summed
over the generated levels and the omitted tail is bounded with the envelope
E_j >= K j**(1/alpha), K taken as the minimum of E_j / j**(1/alpha) over the
generated excited states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import ExtendSpectrumError, SpectrumError, UnsupportedRegimeError
from .specfun import EULER_GAMMA, gamma_fn, zeta_fn
from .spectrum import WeylParams, spectrum_weyl


@dataclass(frozen=True)
class ThermalConfig:
    """Particle number and temperature, with k_B = 1.

    ``t`` is the reduced temperature; the physical temperature is
    ``T = t * n**(1/alpha)`` for alpha > 1 and ``T = t * n / log(n)`` for
    alpha == 1.
    """

    n: int
    t: float
    alpha: float
    T: float
    beta: float

    @classmethod
    def create(cls, n, t, alpha):
        n = int(n)
        if n < 1:
            raise ValueError("n must be a positive integer")
        if not t > 0:
            raise ValueError("t must be positive")
        if not alpha >= 1:
            raise ValueError("alpha must be >= 1")
        if alpha > 1:
            T = t * n ** (1.0 / alpha)
        else:
            if n < 3:
                raise ValueError("alpha == 1 scaling needs n >= 3")
            T = t * n / math.log(n)
        return cls(n, float(t), float(alpha), T, 1.0 / T)

    @classmethod
    def at_temperature(cls, n, T, alpha):
        """Config with a given physical temperature (t is back-computed)."""
        n = int(n)
        scaling = n ** (1.0 / alpha) if alpha > 1 else n / math.log(n)
        return cls(n, T / scaling, float(alpha), float(T), 1.0 / T)

    @classmethod
    def from_ratio(cls, n, t_over_tc, weyl):
        return cls.create(n, t_over_tc * critical_t(weyl), weyl.alpha)

    @property
    def scaling(self):
        """n**(1/alpha), or n/log n when alpha == 1."""
        if self.alpha > 1:
            return self.n ** (1.0 / self.alpha)
        return self.n / math.log(self.n)


@dataclass(frozen=True)
class LimitLaw:
    """Limit of (N_0 - E N_0) / scale(n) in one of the four regimes.

    For ``law == "scaled-W"`` the limit is ``multiplier * W`` with W as
    produced by :func:`becfluct.sampler.sample_w` (normalisation included
    there). For ``law == "normal"`` it is N(0, variance).
    """

    regime: str
    scale_label: str
    law: str
    variance: float | None = None
    multiplier: float | None = None
    alpha: float = 1.0

    def scale(self, n):
        n = float(n)
        if self.regime == "alpha-eq-1":
            return n / math.log(n)
        if self.regime == "alpha-in-1-2":
            return n ** (1.0 / self.alpha)
        if self.regime == "alpha-eq-2":
            return math.sqrt(n * math.log(n))
        return math.sqrt(n)


def critical_t(weyl):
    """Reduced critical temperature t_c (k_B = 1)."""
    if weyl.alpha > 1:
        a = weyl.alpha
        return (weyl.L * a * gamma_fn(a) * zeta_fn(a)) ** (-1.0 / a)
    return 1.0 / weyl.L


def within_hypothesis(t, weyl):
    return t < critical_t(weyl)


def condensate_fraction(t, weyl):
    """Limiting N_0/n: 1 - (t/t_c)**alpha below t_c, 0 at and above it.

    The value above t_c is a convention; check :func:`within_hypothesis`.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    r = t / critical_t(weyl)
    if r >= 1:
        return 0.0
    return 1.0 - r**weyl.alpha


def w_normalization(weyl):
    """Constant in front of the sum defining W."""
    if weyl.alpha > 1:
        a = weyl.alpha
        return (weyl.L * a * gamma_fn(a) * zeta_fn(a)) ** (-1.0 / a)
    return 1.0 / weyl.L


def energy_lln_constant(weyl):
    """Limit of E_tot / T**(1+alpha)."""
    a = weyl.alpha
    if a > 1:
        return weyl.L * a * gamma_fn(a + 1) * zeta_fn(a + 1)
    return weyl.L * math.pi**2 / 6.0


def gumbel_sf(x):
    """P(W >= x) for the 1D harmonic trap: exp(-exp(x - gamma))."""
    return math.exp(-math.exp(x - EULER_GAMMA))


def gumbel_char_fn(xi):
    """E exp(i xi W) for the Gumbel law above: exp(i gamma xi) Gamma(1 + i xi)."""
    import mpmath

    return complex(mpmath.exp(1j * EULER_GAMMA * xi) * mpmath.gamma(1 + 1j * xi))


def limit_law(weyl, t):
    """Regime, scale and limit law of the condensate fluctuations."""
    tc = critical_t(weyl)
    if not 0 < t < tc:
        raise UnsupportedRegimeError(f"t={t} is not below t_c={tc}")
    r = t / tc
    a = weyl.alpha
    if a == 1:
        return LimitLaw("alpha-eq-1", "n/log n", "scaled-W", multiplier=r, alpha=a)
    if a < 2:
        return LimitLaw("alpha-in-1-2", f"n^(1/{a:g})", "scaled-W", multiplier=r, alpha=a)
    if a == 2:
        return LimitLaw("alpha-eq-2", "sqrt(n log n)", "normal",
                        variance=3.0 * r**2 / math.pi**2, alpha=a)
    return LimitLaw("alpha-gt-2", "sqrt(n)", "normal",
                    variance=r**a * zeta_fn(a - 1) / zeta_fn(a), alpha=a)


# -- tail envelopes ---------------------------------------------------------

def envelope_constant(spectrum, alpha):
    """K = min over generated excited states j of E_j / j**(1/alpha)."""
    e = spectrum.energies[1:]
    last_index = spectrum.cumulative[1:] - 1
    if e.size == 0:
        raise SpectrumError("spectrum has no excited levels")
    return float(np.min(e / last_index ** (1.0 / alpha)))


def _tail_params(spectrum):
    alpha = spectrum_weyl(spectrum).alpha
    return envelope_constant(spectrum, alpha), alpha, spectrum.n_states - 1


def _envelope_integral(h, K, alpha, start_x, unit=1.0):
    """Integral of h(unit * K x**(1/alpha)) over x > start_x.

    Equals (alpha / (unit K)**alpha) * int_{u0}^inf h(u) u**(alpha-1) du.
    """
    u0 = unit * K * start_x ** (1.0 / alpha)
    power = getattr(h, "power", None)
    if power is not None:
        # h(u) = u**-power in closed form
        if power <= alpha:
            return math.inf
        val = u0 ** (alpha - power) / (power - alpha)
    else:
        val, _ = integrate.quad(lambda u: h(u) * u ** (alpha - 1.0), u0, np.inf, limit=200)
    return alpha / (unit * K) ** alpha * max(val, 0.0)


def _remainder(spectrum, h, unit=1.0):
    """Bound on sum_{j beyond generated} h(unit * E_j), h decreasing."""
    if spectrum.complete:
        return 0.0
    K, alpha, J = _tail_params(spectrum)
    return _envelope_integral(h, K, alpha, J, unit)


def _required_cutoff(spectrum, h, tol, unit=1.0):
    """Energy cutoff whose envelope remainder falls below tol."""
    K, alpha, J = _tail_params(spectrum)

    def excess(logx):
        return math.log(_envelope_integral(h, K, alpha, math.exp(logx), unit) + 1e-300) - math.log(tol)

    lo = math.log(max(J, 1))
    hi = lo + 1.0
    while excess(hi) > 0:
        hi += 2.0
        if hi > 700:
            raise SpectrumError("cannot reach requested tolerance")
    x = math.exp(optimize.brentq(excess, lo, hi)) if excess(lo) > 0 else float(J)
    weyl = spectrum_weyl(spectrum)
    # the envelope constant is taken from the current prefix; a longer
    # prefix can only lower K, so leave head-room
    return 1.25 * (x / weyl.L) ** (1.0 / weyl.alpha)


def _certified(spectrum, h, tol, unit=1.0, name="series"):
    rem = _remainder(spectrum, h, unit)
    if rem > tol:
        raise ExtendSpectrumError(
            f"{name}: omitted tail bound {rem:.3g} exceeds tol {tol:.3g}; extend spectrum",
            _required_cutoff(spectrum, h, tol, unit))
    return rem


def _bose(u):
    with np.errstate(over="ignore", divide="ignore"):
        return 1.0 / np.expm1(u)


def _bose_var(u):
    with np.errstate(over="ignore", divide="ignore"):
        return 0.25 / np.sinh(0.5 * u) ** 2


def _excited(spectrum):
    return spectrum.energies[1:], spectrum.multiplicities[1:].astype(float)


def mean_M(beta, spectrum, tol=1e-8):
    """E(M) = sum_j 1/(exp(beta E_j) - 1) over excited states."""
    _certified(spectrum, _bose, tol, beta, "mean_M")
    e, m = _excited(spectrum)
    return math.fsum(m * _bose(beta * e))


def var_M(beta, spectrum, tol=1e-8):
    _certified(spectrum, _bose_var, tol, beta, "var_M")
    e, m = _excited(spectrum)
    return math.fsum(m * _bose_var(beta * e))


def mean_R(beta, spectrum, tol=1e-8):
    """E(R), R = sum_j E_j Z_j (the excited-state energy)."""
    _certified(spectrum, lambda u: u * _bose(u) / beta, tol, beta, "mean_R")
    e, m = _excited(spectrum)
    return math.fsum(m * e * _bose(beta * e))


def var_R(beta, spectrum, tol=1e-8):
    _certified(spectrum, lambda u: u * u * _bose_var(u) / beta**2, tol, beta, "var_R")
    e, m = _excited(spectrum)
    return math.fsum(m * e * e * _bose_var(beta * e))


def occupancy_tail(beta, spectrum, level_index):
    """Bound on the expected number of particles above level ``level_index``.

    Exact sum over generated levels past the index plus the envelope
    remainder beyond the generated cutoff.
    """
    e = spectrum.energies[level_index + 1:]
    m = spectrum.multiplicities[level_index + 1:].astype(float)
    return math.fsum(m * _bose(beta * e)) + _remainder(spectrum, _bose, beta)


# -- W: characteristic function, tails, mgf --------------------------------

def _inv_sq(u):
    return 1.0 / (u * u)


_inv_sq.power = 2.0


def inverse_square_remainder(spectrum):
    """Envelope bound on sum m/E^2 beyond the generated cutoff (inf if divergent)."""
    if spectrum.complete:
        return 0.0
    if spectrum_weyl(spectrum).alpha >= 2:
        return math.inf
    return _remainder(spectrum, _inv_sq)


def inverse_square_tail(spectrum, start_level=1):
    """(exact generated part, envelope remainder) of sum m/E^2 from a level on."""
    e = spectrum.energies[start_level:]
    m = spectrum.multiplicities[start_level:].astype(float)
    return math.fsum(m / (e * e)), inverse_square_remainder(spectrum)


def _check_square_summable(spectrum):
    if spectrum.complete:
        return
    if spectrum_weyl(spectrum).alpha >= 2:
        raise UnsupportedRegimeError("sum 1/E_j^2 diverges for alpha >= 2")


def u_char_fn(xi, spectrum, terms=None, with_error=False):
    """E exp(i xi U) for U = sum (X_j - 1)/E_j over the first ``terms`` levels.

    Principal logarithms; each level is weighted by its multiplicity. With
    ``with_error`` also returns the bound xi^2/2 * sum_{omitted} 1/E_j^2 on
    the modulus of the omitted log-factor.
    """
    stop = spectrum.n_levels if terms is None else min(int(terms) + 1, spectrum.n_levels)
    e = spectrum.energies[1:stop]
    m = spectrum.multiplicities[1:stop].astype(float)
    z = 1j * xi / e
    logphi = np.sum(m * (-np.log1p(-z) - z))
    value = complex(np.exp(logphi))
    if not with_error:
        return value
    if xi == 0:
        return value, 0.0
    gen, rem = inverse_square_tail(spectrum, stop)
    return value, 0.5 * xi * xi * (gen + rem)


def w_char_fn(xi, spectrum, weyl=None, terms=None, with_error=False):
    """E exp(i xi W) with W = c * sum (1 - X_j)/E_j, i.e. u_char_fn at -c xi."""
    c = w_normalization(weyl or spectrum_weyl(spectrum))
    return u_char_fn(-c * xi, spectrum, terms, with_error)


def _state_partial_sums(spectrum):
    e = spectrum.energies[1:]
    m = spectrum.multiplicities[1:]
    inv = m / e
    before = np.concatenate([[0.0], np.cumsum(inv)[:-1]])
    states_before = np.concatenate([[0], np.cumsum(m)[:-1]])
    return e, m, before, states_before


def harmonic_index(spectrum, limit):
    """Largest n with sum_{j<=n} 1/E_j <= limit (capped at generated states)."""
    e, m, before, states_before = _state_partial_sums(spectrum)
    k = int(np.searchsorted(before, limit, side="right")) - 1
    if k < 0:
        return 0
    take = min(int(m[k]), int(math.floor((limit - before[k]) * e[k] * (1 + 1e-15))))
    return int(states_before[k]) + max(take, 0)


def harmonic_index_reaching(spectrum, target):
    """Smallest n with sum_{j<=n} 1/E_j >= target, or None if not generated."""
    e, m, before, states_before = _state_partial_sums(spectrum)
    after = before + m / e
    k = int(np.searchsorted(after, target, side="left"))
    if k >= e.size:
        return None
    need = max(1, int(math.ceil((target - before[k]) * e[k] * (1 - 1e-15))))
    return int(states_before[k]) + min(need, int(m[k]))


def _inverse_square_after_state(spectrum, n_states_done):
    """Generated-only sum of 1/E_j^2 over excited states j > n_states_done."""
    e = spectrum.energies[1:]
    m = spectrum.multiplicities[1:]
    cum = np.cumsum(m)
    k = int(np.searchsorted(cum, n_states_done, side="right"))
    if k >= e.size:
        return 0.0
    partial = (cum[k] - n_states_done) / e[k] ** 2
    return partial + math.fsum(m[k + 1:] / e[k + 1:] ** 2)


def tail_upper_bound(x, spectrum):
    """Upper bound on P(W >= x), W with unit normalisation.

    Uses the largest n_x within the generated states; the omitted-tail sum
    is over-estimated with the envelope remainder, so the bound stays valid.
    """
    if not x > 0:
        raise ValueError("x must be positive")
    _check_square_summable(spectrum)
    n_x = harmonic_index(spectrum, x / 2.0)
    tail = _inverse_square_after_state(spectrum, n_x) + inverse_square_remainder(spectrum)
    if tail == 0:
        return 0.0
    return math.exp(-x * x / (8.0 * tail))


def tail_lower_bound(x, spectrum):
    """Lower bound on P(W >= x), W with unit normalisation.

    The omitted-tail sum is under-estimated by its generated part only.
    """
    if not x > 0:
        raise ValueError("x must be positive")
    _check_square_summable(spectrum)
    n_xp = harmonic_index_reaching(spectrum, 2.0 * x)
    if n_xp is None:
        if spectrum.complete:
            return 0.0
        raise ExtendSpectrumError("partial sums of 1/E_j do not reach 2x in range",
                                  2.0 * spectrum.cutoff)
    tail = _inverse_square_after_state(spectrum, n_xp)
    if tail == 0:
        return 0.0
    return 2.0**-22 * math.exp(-120.0 * x * x / tail)


def neg_w_mgf(lam, spectrum, terms=None, with_error=False):
    """E exp(-lam W) = prod_j exp(-lam/E_j)/(1 - lam/E_j), lam < E_1.

    With ``with_error`` also returns an upper bound on the omitted part of
    log E exp(-lam W) (the omitted factors are all >= 1).
    """
    e1 = spectrum.energies[1]
    if lam >= e1:
        raise ValueError(f"mgf of -W diverges for lam >= E_1 = {e1}")
    stop = spectrum.n_levels if terms is None else min(int(terms) + 1, spectrum.n_levels)
    e = spectrum.energies[1:stop]
    m = spectrum.multiplicities[1:stop].astype(float)
    y = lam / e
    logphi = math.fsum(m * (-y - np.log1p(-y)))
    value = math.exp(logphi)
    if not with_error:
        return value
    gen, rem = inverse_square_tail(spectrum, stop)
    if lam > 0:
        e_next = spectrum.energies[stop] if stop < spectrum.n_levels else spectrum.cutoff
        factor = lam * lam / (2.0 * (1.0 - lam / e_next))
    else:
        factor = lam * lam / 2.0
    return value, factor * (gen + rem)


def chernoff_left_tail(x, spectrum, terms=None):
    """min over 0 < lam < E_1 of exp(-lam x) E exp(-lam W) >= P(W <= -x)."""
    if not x > 0:
        raise ValueError("x must be positive")
    e1 = spectrum.energies[1]

    def objective(s):
        lam = s * e1
        val, err = neg_w_mgf(lam, spectrum, terms, with_error=True)
        return -lam * x + math.log(val) + err

    grid = np.linspace(0.01, 0.99, 50)
    vals = [objective(s) for s in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded")
    best = min(vals[i], res.fun)
    return min(1.0, math.exp(best))


__all__ = [
    "ThermalConfig", "LimitLaw", "WeylParams", "critical_t", "within_hypothesis",
    "condensate_fraction", "w_normalization", "energy_lln_constant", "gumbel_sf",
    "gumbel_char_fn", "limit_law", "envelope_constant", "mean_M", "var_M", "mean_R",
    "var_R", "occupancy_tail", "inverse_square_remainder", "inverse_square_tail", "u_char_fn", "w_char_fn",
    "harmonic_index", "harmonic_index_reaching", "tail_upper_bound", "tail_lower_bound",
    "neg_w_mgf", "chernoff_left_tail",
]
