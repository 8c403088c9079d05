"""Exact Monte Carlo for the ideal Bose gas.

The canonical ensemble with n particles is the law of independent
geometrics Z_1, Z_2, ... (one per excited state) conditioned on
M = sum Z_j <= n, with N_0 = n - M; it is sampled here by plain rejection.
The grand canonical ensemble is the unconditioned product law with every
level (ground included) shifted by the chemical potential.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytic import (
    ThermalConfig,
    _bose,
    _inv_sq,
    _required_cutoff,
    inverse_square_remainder,
    occupancy_tail,
    w_normalization,
)
from .errors import ExtendSpectrumError, RejectionFailure, ReplicaError, UnsupportedRegimeError
from .rng import RngStream, as_generator
from .spectrum import spectrum_weyl

# levels with more states than this are drawn as one negative binomial
NEGBIN_MIN_MULTIPLICITY = 9


@dataclass(frozen=True)
class OccupationSample:
    """One configuration, stored sparsely.

    ``levels``/``counts`` hold the non-zero occupation per energy level
    (aggregated over its states). ``resolved`` holds per-state counts for
    the lowest levels, so that e.g. the occupation of a single eigenstate
    of a degenerate level is available.
    """

    levels: np.ndarray
    counts: np.ndarray
    n: int
    energy: float
    tries: int = 1
    truncation_epsilon: float = 0.0
    resolved: dict = field(default_factory=dict)

    @property
    def occupations(self):
        return {int(k): int(c) for k, c in zip(self.levels, self.counts)}

    def level_count(self, index):
        i = np.searchsorted(self.levels, index)
        if i < self.levels.size and self.levels[i] == index:
            return int(self.counts[i])
        return 0

    @property
    def n0(self):
        return self.level_count(0)

    @property
    def excited(self):
        return self.n - self.n0


def _geometric(gen, x):
    """floor(log U / -x): geometric counts with P(k) = e^{-xk}(1 - e^{-x})."""
    u = 1.0 - gen.random(x.shape)  # in (0, 1]
    return np.floor(np.log(u) / -x).astype(np.int64)


def sample_geometric(beta, energy, rng):
    """One geometric draw with success probability 1 - exp(-beta*energy)."""
    x = beta * energy
    if not x > 0:
        raise ValueError("beta*energy must be positive (the ground level is never drawn here)")
    return int(_geometric(as_generator(rng), np.array([x]))[0])


class _LevelDraw:
    """Independent geometric occupations for a fixed set of levels.

    ``x`` is beta*(E - mu) per level. Levels with small multiplicity (or
    that must be resolved per state) get explicit geometrics, the rest
    a single negative binomial per level.
    """

    def __init__(self, x, mult, resolve):
        mult = np.asarray(mult, dtype=np.int64)
        explicit = (mult < NEGBIN_MIN_MULTIPLICITY) | (np.arange(mult.size) < resolve)
        self.n_levels = mult.size
        self.explicit = np.flatnonzero(explicit)
        self.bulk = np.flatnonzero(~explicit)
        em = mult[self.explicit]
        self.state_x = np.repeat(x[self.explicit], em)
        self.offsets = np.concatenate([[0], np.cumsum(em)[:-1]]).astype(np.int64)
        self.bulk_m = mult[self.bulk]
        with np.errstate(over="ignore"):
            self.bulk_p = -np.expm1(-x[self.bulk])
        self.resolve = resolve

    def draw(self, gen):
        counts = np.zeros(self.n_levels, dtype=np.int64)
        states = _geometric(gen, self.state_x) if self.state_x.size else np.zeros(0, np.int64)
        if self.explicit.size:
            counts[self.explicit] = np.add.reduceat(states, self.offsets) if states.size else 0
        if self.bulk.size:
            counts[self.bulk] = gen.negative_binomial(self.bulk_m, self.bulk_p)
        resolved = {}
        for k in range(min(self.resolve, self.n_levels)):
            i = np.searchsorted(self.explicit, k)
            start = self.offsets[i]
            stop = self.offsets[i + 1] if i + 1 < self.offsets.size else states.size
            resolved[k] = tuple(int(v) for v in states[start:stop])
        return counts, resolved


def _truncation_index(beta, spectrum, epsilon, first_level):
    """Last level index to keep so the omitted expected occupancy is < epsilon."""
    e = spectrum.energies[first_level:]
    m = spectrum.multiplicities[first_level:].astype(float)
    occ = m * _bose(beta * e)
    # suffix[i]: expected occupancy strictly above level first_level + i
    suffix = np.concatenate([np.cumsum(occ[::-1])[::-1][1:], [0.0]])
    rem = occupancy_tail(beta, spectrum, spectrum.n_levels - 1)
    total = suffix + rem
    if total[-1] >= epsilon:
        raise ExtendSpectrumError(
            f"omitted occupancy {total[-1]:.3g} >= epsilon {epsilon:.3g}; extend spectrum",
            _required_cutoff(spectrum, _bose, epsilon / 2, beta))
    k = int(np.argmax(total < epsilon))
    return first_level + k, float(total[k])


class CanonicalSampler:
    """Rejection sampler for the canonical ensemble at fixed (n, beta)."""

    def __init__(self, config, spectrum, epsilon=1e-3, resolve_levels=2):
        self.config = config
        self.spectrum = spectrum
        self.n = int(config.n)
        self.beta = float(config.beta)
        last, self.epsilon = _truncation_index(self.beta, spectrum, epsilon, 1)
        self.last_level = last
        e = spectrum.energies[1:last + 1]
        self.energies = e
        self._levels = _LevelDraw(self.beta * e, spectrum.multiplicities[1:last + 1],
                                  max(resolve_levels - 1, 0))

    def draw(self, rng, max_tries=1000):
        gen = as_generator(rng)
        n = self.n
        total_m = 0
        for tries in range(1, max_tries + 1):
            counts, resolved = self._levels.draw(gen)
            m = int(counts.sum())
            total_m += m
            if m <= n:
                return self._package(counts, resolved, n - m, tries)
        raise RejectionFailure(
            f"no configuration with M <= n={n} in {max_tries} tries "
            f"(mean M/n = {total_m / max_tries / n:.3g}); t is likely at or above t_c",
            acceptance=0.0)

    def sample(self, rng, count, max_tries=1000):
        """``count`` consecutive draws from a single stream."""
        gen = as_generator(rng)
        return [self.draw(gen, max_tries) for _ in range(count)]

    def _package(self, counts, resolved, n0, tries):
        nz = np.flatnonzero(counts)
        levels = np.concatenate([[0], nz + 1]) if n0 > 0 else nz + 1
        vals = np.concatenate([[n0], counts[nz]]) if n0 > 0 else counts[nz]
        energy = float(np.dot(counts[nz], self.energies[nz]))
        res = {0: (n0,)}
        res.update({k + 1: v for k, v in resolved.items()})
        return OccupationSample(levels.astype(np.int64), vals.astype(np.int64), self.n,
                                energy, tries, self.epsilon, res)

    def acceptance_rate(self, rng, trials=1000):
        """Fraction of unconditioned draws with M <= n."""
        gen = as_generator(rng)
        ok = sum(int(self._levels.draw(gen)[0].sum()) <= self.n for _ in range(trials))
        return ok / trials


def sample_canonical(config, spectrum, rng, max_tries=1000, epsilon=1e-3):
    """One canonical configuration; see :class:`CanonicalSampler`."""
    return CanonicalSampler(config, spectrum, epsilon).draw(rng, max_tries)


# -- grand canonical -------------------------------------------------------

def expected_count(spectrum, T, mu):
    """Grand-canonical mean particle number over all generated levels."""
    e = spectrum.energies
    m = spectrum.multiplicities.astype(float)
    return math.fsum(m * _bose((e - mu) / T))


def solve_chemical_potential(spectrum, T, n, rtol=1e-8):
    """mu < 0 with expected_count(mu) == n, by bisection on log(-mu)."""
    if not n > 0:
        raise ValueError("n must be positive")
    target = float(n)
    lo, hi = math.log(T) - 60.0, math.log(T) + 5.0  # bracket for log(-mu)
    while expected_count(spectrum, T, -math.exp(hi)) > target:
        hi += 5.0
    while expected_count(spectrum, T, -math.exp(lo)) < target:
        lo -= 5.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        c = expected_count(spectrum, T, -math.exp(mid))
        if abs(c - target) <= rtol * target:
            return -math.exp(mid)
        if c > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return -math.exp(0.5 * (lo + hi))


class GrandCanonicalSampler:
    """Independent geometric occupation of every level, ground included."""

    def __init__(self, spectrum, T, mu, epsilon=1e-3, resolve_levels=1):
        if not mu < 0:
            raise ValueError("chemical potential must be negative (below the ground level)")
        self.spectrum = spectrum
        self.T = float(T)
        self.mu = float(mu)
        beta = 1.0 / self.T
        last, self.epsilon = _truncation_index(beta, spectrum, epsilon, 1)
        e = spectrum.energies[:last + 1]
        self.energies = e
        self._levels = _LevelDraw(beta * (e - self.mu), spectrum.multiplicities[:last + 1],
                                  resolve_levels)

    def draw(self, rng):
        counts, resolved = self._levels.draw(as_generator(rng))
        nz = np.flatnonzero(counts)
        return OccupationSample(nz.astype(np.int64), counts[nz], int(counts.sum()),
                                float(np.dot(counts[nz], self.energies[nz])), 1,
                                self.epsilon, resolved)


def sample_grand_canonical(spectrum, T, mu, rng, epsilon=1e-3):
    return GrandCanonicalSampler(spectrum, T, mu, epsilon).draw(rng)


# -- the limit variable W ----------------------------------------------------

def _block_error(w, m, starts):
    s0 = np.add.reduceat(m, starts)
    wb = np.add.reduceat(m * w, starts) / s0
    ids = np.repeat(np.arange(starts.size), np.diff(np.append(starts, w.size)))
    return float(np.sum(m * (w - wb[ids]) ** 2)), s0, wb


def _greedy_blocks(w, m, tau):
    """Consecutive blocks whose spread bound S0 * range^2 / 4 stays <= tau."""
    cm = np.concatenate([[0.0], np.cumsum(m)])
    n = w.size
    starts = []
    i = 0
    while i < n:
        starts.append(i)
        lo, hi = i, n - 1  # largest end with bound <= tau
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if (cm[mid + 1] - cm[i]) * (w[i] - w[mid]) ** 2 / 4.0 <= tau:
                lo = mid
            else:
                hi = mid - 1
        i = lo + 1
    return np.array(starts, dtype=np.int64)


@dataclass(frozen=True)
class WSampler:
    """Draws of W = c * sum_j (1 - X_j)/E_j with certified L2 error.

    Consecutive levels are grouped into blocks sharing one weight (the
    block mean of 1/E); inside a block the sum of the unit exponentials is
    a single Gamma(block size) draw. The coupling error
    c^2 * [sum_j (1/E_j - w_B)^2 + omitted tail of 1/E_j^2] is computed
    exactly (tail: envelope bound) and is at most delta^2.
    """

    weights: np.ndarray
    sizes: np.ndarray
    normalization: float
    last_level: int
    delta: float
    requested_delta: float
    method: str

    @property
    def n_blocks(self):
        return self.weights.size

    def draw(self, rng, size=None, chunk=4096):
        gen = as_generator(rng)
        count = 1 if size is None else int(size)
        mean_part = float(np.dot(self.sizes, self.weights))
        out = np.empty(count)
        for start in range(0, count, chunk):
            k = min(chunk, count - start)
            g = gen.standard_gamma(self.sizes, size=(k, self.sizes.size))
            out[start:start + k] = self.normalization * (mean_part - g @ self.weights)
        return float(out[0]) if size is None else out

    def info(self):
        return {"J": self.last_level, "delta": self.delta, "requested_delta": self.requested_delta,
                "normalization": self.normalization, "blocks": self.n_blocks,
                "method": self.method}


def build_w_sampler(spectrum, weyl=None, delta=1e-3, method="blocked"):
    """Plan a W sampler accurate to ``delta`` in L2 (see :class:`WSampler`).

    ``method="truncate"`` keeps every level as its own block and only
    truncates; ``"blocked"`` uses all generated levels and merges them.
    """
    weyl = weyl or spectrum_weyl(spectrum)
    if weyl.alpha >= 2 and not spectrum.complete:
        raise UnsupportedRegimeError("W is undefined for alpha >= 2 (normal regimes)")
    if not delta > 0:
        raise ValueError("delta must be positive")
    c = w_normalization(weyl)
    budget = (delta / c) ** 2
    rem = inverse_square_remainder(spectrum)
    if rem > budget / 2:
        raise ExtendSpectrumError(
            f"W tail bound {c * math.sqrt(rem):.3g} too large for delta={delta}",
            _required_cutoff(spectrum, _inv_sq, budget / 2))
    e = spectrum.energies[1:]
    m = spectrum.multiplicities[1:].astype(float)
    w = 1.0 / e
    if method == "truncate":
        tail = np.concatenate([np.cumsum((m * w * w)[::-1])[::-1][1:], [0.0]]) + rem
        k = int(np.argmax(tail <= budget))
        err2 = float(tail[k])
        weights, sizes = w[:k + 1], m[:k + 1]
    elif method == "blocked":
        # merging may use at most a quarter of the error budget
        quota = min(budget - rem, 0.25 * budget)
        lo, hi = math.log(quota) - 40.0, math.log(quota) + 10.0
        best = None
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            starts = _greedy_blocks(w, m, math.exp(mid))
            err, s0, wb = _block_error(w, m, starts)
            if err <= quota:
                best = (err, s0, wb)
                lo = mid
            else:
                hi = mid
            if hi - lo < 0.05:
                break
        if best is None:
            starts = np.arange(w.size)
            best = _block_error(w, m, starts)
        qerr, sizes, weights = best
        err2 = qerr + rem
        k = w.size - 1
    else:
        raise ValueError(f"unknown method {method!r}")
    return WSampler(np.ascontiguousarray(weights), np.ascontiguousarray(sizes), c, k + 1,
                    c * math.sqrt(err2), delta, method)


def sample_w(spectrum, weyl=None, delta=1e-3, rng=0, size=None, method="blocked"):
    """Draw W (one value, or an array when ``size`` is given)."""
    return build_w_sampler(spectrum, weyl, delta, method).draw(rng, size)


def spectrum_for_w(kind, delta, scale=1.0, start_cutoff=1000.0, method="blocked"):
    """Built-in spectrum long enough for a W sampler at ``delta``."""
    from .spectrum import build_spectrum

    cutoff = start_cutoff
    for _ in range(20):
        spec = build_spectrum(kind, scale, cutoff)
        try:
            return spec, build_w_sampler(spec, None, delta, method)
        except ExtendSpectrumError as err:
            cutoff = max(err.required_cutoff, 1.5 * cutoff)
    raise RuntimeError("could not reach requested delta")


def spectrum_for_beta(kind, beta, epsilon=1e-3, scale=1.0, start_cutoff=None):
    """Built-in spectrum whose omitted occupancy at ``beta`` is below epsilon."""
    from .spectrum import build_spectrum

    cutoff = start_cutoff or 30.0 / beta
    for _ in range(20):
        spec = build_spectrum(kind, scale, cutoff)
        try:
            _truncation_index(beta, spec, epsilon, 1)
            return spec
        except ExtendSpectrumError as err:
            cutoff = max(err.required_cutoff, 1.5 * cutoff)
    raise RuntimeError("could not reach requested epsilon")


# -- replication -------------------------------------------------------------

def replicate(task, count, base_seed, workers=1):
    """Run ``task(RngStream(base_seed, i))`` for i in range(count), in order.

    Results depend only on base_seed and the index, never on ``workers``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")

    def run(i):
        try:
            return task(RngStream(int(base_seed), i))
        except Exception as exc:  # noqa: BLE001 - re-raised with the index
            raise ReplicaError(i, exc) from exc

    if workers <= 1:
        return [run(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(count)))


__all__ = [
    "OccupationSample", "RngStream", "ThermalConfig", "sample_geometric", "CanonicalSampler",
    "sample_canonical", "expected_count", "solve_chemical_potential", "GrandCanonicalSampler",
    "sample_grand_canonical", "WSampler", "build_w_sampler", "sample_w", "spectrum_for_w",
    "spectrum_for_beta", "replicate",
]
