"""Verification suites: each one reproduces a limit statement at finite size.

A suite returns a :class:`SuiteResult` holding one or more
:class:`~becfluct.stats.GofReport` checks plus diagnostic numbers (exact
finite-n predictions, timings, sampler settings). Suites are deterministic
given the seed.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import analytic as an
from .errors import ExtendSpectrumError
from .rng import RngStream
from .sampler import (CanonicalSampler, GrandCanonicalSampler, solve_chemical_potential,
                      spectrum_for_beta, spectrum_for_w)
from .specfun import EULER_GAMMA, zeta_fn
from .spectrum import analytic_weyl, dump_spectrum, load_spectrum
from .stats import (GofReport, binomial_upper, empirical_char_fn, exponential_cdf, ks_critical,
                    ks_statistic, ks_test, moments, normal_cdf)

DEFAULT_SEED = 20240611
# equality checks report 1.0 on mismatch, 0.0 otherwise
MISMATCH_TOL = 0.5


@dataclass
class SuiteResult:
    name: str
    title: str
    checks: list
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {"name": self.name, "title": self.title, "pass": self.passed,
                "seconds": round(self.seconds, 3), "checks": [c.to_dict() for c in self.checks],
                "details": self.details}


# -- shared canonical run -----------------------------------------------------

@dataclass(frozen=True)
class CanonicalRun:
    config: an.ThermalConfig
    n0: np.ndarray
    n1_state: np.ndarray
    energy: np.ndarray
    epsilon: float
    last_level: int
    exact: dict


@lru_cache(maxsize=4)
def canonical_run(kind, n, ratio, count, seed):
    """``count`` canonical draws at t = ratio * t_c, plus exact finite-n moments."""
    weyl = analytic_weyl(kind)
    config = an.ThermalConfig.from_ratio(n, ratio, weyl)
    spec = spectrum_for_beta(kind, config.beta)
    sampler = CanonicalSampler(config, spec)
    draws = sampler.sample(RngStream(seed, 0), count)
    n0 = np.array([d.n0 for d in draws], dtype=float)
    n1 = np.array([d.resolved[1][0] for d in draws], dtype=float)
    energy = np.array([d.energy for d in draws])
    beta = config.beta
    exact = {
        "mean_n0_over_n": 1.0 - series(an.mean_M, kind, beta) / n,
        "var_M_over_n": series(an.var_M, kind, beta) / n,
        "mean_energy_over_T^(alpha+1)": series(an.mean_R, kind, beta) * beta ** (weyl.alpha + 1),
    }
    return CanonicalRun(config, n0, n1, energy, sampler.epsilon, sampler.last_level, exact)


def series(fn, kind, beta, tol=1e-8):
    """Evaluate a spectral series, extending the built-in spectrum until certified."""
    spec = spectrum_for_beta(kind, beta, epsilon=tol)
    for _ in range(20):
        try:
            return fn(beta, spec, tol)
        except ExtendSpectrumError as err:
            spec = spec.extend(max(err.required_cutoff, 1.5 * spec.cutoff))
    raise RuntimeError(f"{fn.__name__} did not converge")


def _moment_check(name, value, target, tol, n, reference, relative=False):
    stat = abs(value - target) / abs(target) if relative else abs(value - target)
    return GofReport(name, float(stat), tol, n, reference)


# -- suites -------------------------------------------------------------------

def suite_gumbel(seed=DEFAULT_SEED, samples=10_000, delta=1e-3):
    spec, ws = spectrum_for_w("harmonic-1d", delta)
    w = ws.draw(RngStream(seed, 1), samples)
    sf = lambda x: np.exp(-np.exp(np.asarray(x) - EULER_GAMMA))  # noqa: E731
    stat = ks_statistic(w, lambda x: 1.0 - sf(x))
    check = GofReport("ks-exact-cdf", stat, 0.025, samples, "Gumbel survival exp(-e^(x-gamma))")
    return [check], {"sampler": ws.info(), "cutoff": spec.cutoff,
                     "ks_critical_1pct": ks_critical(samples)}


def suite_fraction(seed=DEFAULT_SEED, draws=500):
    run = canonical_run("harmonic-3d", 100_000, 0.5, 5000, seed)
    frac = run.n0[:draws] / run.config.n
    target = an.condensate_fraction(run.config.t, analytic_weyl("harmonic-3d"))
    check = _moment_check("moment-match", float(frac.mean()), target, 0.01, draws,
                          f"limit condensate fraction {target:.6f}")
    return [check], {"mean": float(frac.mean()), "limit": target,
                     "exact_finite_n": run.exact["mean_n0_over_n"], "T": run.config.T}


def suite_clt(seed=DEFAULT_SEED, draws=5000):
    run = canonical_run("harmonic-3d", 100_000, 0.5, 5000, seed)
    weyl = analytic_weyl("harmonic-3d")
    law = an.limit_law(weyl, run.config.t)
    z = (run.n0[:draws] - run.n0[:draws].mean()) / math.sqrt(run.config.n)
    _, var, skew, kurt = moments(z)
    checks = [
        _moment_check("moment-match", var, law.variance, 0.10, draws,
                      f"limit variance {law.variance:.6f}", relative=True),
        GofReport("ks-exact-cdf", ks_statistic(z, normal_cdf(0.0, law.variance)), 0.03, draws,
                  f"N(0, {law.variance:.6f})"),
    ]
    return checks, {"sample_variance": var, "limit_variance": law.variance,
                    "exact_finite_n_variance": run.exact["var_M_over_n"],
                    "skewness": skew, "excess_kurtosis": kurt}


def suite_nonnormal(seed=DEFAULT_SEED, samples=10_000, delta=0.2):
    spec, ws = spectrum_for_w("box-3d", delta)
    w = ws.draw(RngStream(seed, 4), samples)
    _, var, skew, kurt = moments(w)
    checks = [ks_test(w, normal_cdf(0.0, var), f"N(0, sample variance {var:.4f})",
                      level=0.01, test="ks-normal-fitted", reject_expected=True)]
    unit = w / ws.normalization
    tails = {}
    for x in (2.0, 3.0):
        bound = an.tail_upper_bound(x, spec)
        p_hat = float(np.mean(unit >= x))
        # the bound must not sit below the 99% lower confidence limit
        lower = p_hat - (binomial_upper(p_hat, samples) - p_hat)
        checks.append(GofReport("tail-bound", max(lower, 0.0), bound, samples,
                                f"x={x:g}: upper bound on P(W >= x) vs 99% lower limit"))
        tails[f"{x:g}"] = {"empirical": p_hat, "bound": bound}
    return checks, {"sampler": ws.info(), "skewness": skew, "excess_kurtosis": kurt,
                    "tails": tails}


def suite_marginal(seed=DEFAULT_SEED, draws=5000):
    run = canonical_run("harmonic-3d", 100_000, 0.5, 5000, seed)
    n = run.config.n
    x = run.n1_state[:draws] / n ** (1 / 3)
    cdf = exponential_cdf(run.config.t)
    crit = ks_critical(draws)
    checks = [GofReport("ks-exact-cdf", ks_statistic(x, cdf), crit, draws,
                        f"Exp(mean t={run.config.t:.6f})")]
    # lattice spacing n^(-1/3): spread each count uniformly over its cell
    jitter = RngStream(seed, 5).generator().random(draws)
    xj = (run.n1_state[:draws] + jitter) / n ** (1 / 3)
    checks.append(GofReport("ks-exact-cdf", ks_statistic(xj, cdf), crit, draws,
                            "same law, count + U(0,1) continuity correction"))
    # one state of the first excited level (energy 1 for the default scale)
    exact_mean = 1.0 / math.expm1(run.config.beta) / n ** (1 / 3)
    return checks, {"mean": float(x.mean()), "t": run.config.t, "exact_finite_n_mean": exact_mean,
                    "lattice_step": n ** (-1 / 3)}


def suite_energy(seed=DEFAULT_SEED, draws=200):
    run = canonical_run("harmonic-3d", 100_000, 0.5, 5000, seed)
    weyl = analytic_weyl("harmonic-3d")
    target = an.energy_lln_constant(weyl)
    val = float(np.mean(run.energy[:draws] / run.config.T ** (weyl.alpha + 1)))
    check = _moment_check("moment-match", val, target, 0.05, draws,
                          f"limit energy constant {target:.6f}", relative=True)
    return [check], {"mean": val, "limit": target,
                     "exact_finite_n": run.exact["mean_energy_over_T^(alpha+1)"]}


def gibbs_enumeration(energies, n, beta):
    """Exact canonical law on a finite spectrum of single states, by enumeration."""
    weights = {}
    for occ in itertools.product(range(n + 1), repeat=len(energies)):
        if sum(occ) == n:
            weights[occ] = math.exp(-beta * sum(k * e for k, e in zip(occ, energies)))
    z = math.fsum(weights.values())
    return {k: v / z for k, v in weights.items()}


def suite_gibbs(seed=DEFAULT_SEED, draws=100_000):
    energies, n, beta = (0.0, 1.0, 2.0), 3, 1.0
    exact = gibbs_enumeration(energies, n, beta)
    spec = load_spectrum("0 1\n1 1\n2 1\n")
    sampler = CanonicalSampler(an.ThermalConfig.at_temperature(n, 1 / beta, 1.0), spec,
                               epsilon=1e-12)
    gen = RngStream(seed, 7).generator()
    counts = {}
    for _ in range(draws):
        d = sampler.draw(gen)
        key = tuple(d.level_count(i) for i in range(3))
        counts[key] = counts.get(key, 0) + 1
    keys = set(exact) | set(counts)
    tv = 0.5 * sum(abs(counts.get(k, 0) / draws - exact.get(k, 0.0)) for k in keys)
    p3 = counts.get((3, 0, 0), 0) / draws
    checks = [GofReport("total-variation", tv, 0.02, draws, "exhaustive enumeration")]
    return checks, {"configurations": len(exact), "P(N0=3) exact": exact[(3, 0, 0)],
                    "P(N0=3) sampled": p3}


def suite_weyl_limits(seed=DEFAULT_SEED):
    checks, details = [], {}
    for kind in ("harmonic-3d", "harmonic-2d"):
        weyl = analytic_weyl(kind)
        beta = 0.01
        val = beta**weyl.alpha * series(an.mean_M, kind, beta)
        target = weyl.L * weyl.alpha * an.gamma_fn(weyl.alpha) * zeta_fn(weyl.alpha)
        checks.append(_moment_check("moment-match", val, target, 0.03, 0,
                                    f"{kind}: L alpha Gamma(alpha) zeta(alpha)", relative=True))
        details[f"mean_M {kind}"] = val / target
    beta = 1e-4
    val = beta * series(an.mean_M, "harmonic-1d", beta) / math.log(1 / beta)
    checks.append(_moment_check("moment-match", val, 1.0, 0.10, 0, "harmonic-1d: L = 1",
                                relative=True))
    details["mean_M harmonic-1d"] = val
    weyl = analytic_weyl("harmonic-3d")
    beta = 0.01
    val = beta ** (1 + weyl.alpha) * series(an.mean_R, "harmonic-3d", beta)
    target = an.energy_lln_constant(weyl)
    checks.append(_moment_check("moment-match", val, target, 0.03, 0,
                                "harmonic-3d energy: L alpha Gamma(alpha+1) zeta(alpha+1)", relative=True))
    details["mean_R harmonic-3d"] = val / target
    return checks, details


def suite_charfn(seed=DEFAULT_SEED, samples=100_000, delta=1e-3):
    spec, ws = spectrum_for_w("harmonic-1d", delta)
    w = ws.draw(RngStream(seed, 9), samples)
    checks, details = [], {}
    for xi in (0.5, 1.0, 2.0):
        emp = empirical_char_fn(w, xi)
        ana, err = an.w_char_fn(xi, spec, with_error=True)
        checks.append(GofReport("char-fn-match", abs(emp - ana), 0.02, samples,
                                f"xi={xi:g}: analytic characteristic function"))
        details[f"{xi:g}"] = {"empirical": [emp.real, emp.imag], "analytic": [ana.real, ana.imag],
                              "series_error_bound": err}
    return checks, details


def suite_ensemble_gap(seed=DEFAULT_SEED, draws=1000):
    kind, n = "harmonic-3d", 10_000
    weyl = analytic_weyl(kind)
    config = an.ThermalConfig.from_ratio(n, 0.5, weyl)
    spec = spectrum_for_beta(kind, config.beta)
    mu = solve_chemical_potential(spec, config.T, n)
    canon = CanonicalSampler(config, spec).sample(RngStream(seed, 10), draws)
    gc = GrandCanonicalSampler(spec, config.T, mu)
    gen = RngStream(seed, 11).generator()
    grand = [gc.draw(gen) for _ in range(draws)]
    sd_c = float(np.std([d.n0 for d in canon], ddof=1))
    sd_g = float(np.std([d.n0 for d in grand], ddof=1))
    ratio = sd_g / sd_c
    # pass when ratio >= 10, i.e. 10 / ratio <= 1
    check = GofReport("std-ratio", 10.0 / ratio, 1.0, draws, "grand/canonical std(N0) >= 10")
    return [check], {"mu": mu, "std_canonical": sd_c, "std_grand": sd_g, "ratio": ratio}


def suite_determinism(seed=DEFAULT_SEED):
    checks, details = [], {}
    spec, ws = spectrum_for_w("harmonic-1d", 1e-2)
    a = ws.draw(RngStream(seed, 12), 1000).tobytes()
    b = ws.draw(RngStream(seed, 12), 1000).tobytes()
    checks.append(GofReport("identical-output", float(a != b), MISMATCH_TOL, 1000,
                            "W samples, byte equality"))

    config = an.ThermalConfig.from_ratio(1000, 0.5, analytic_weyl("harmonic-3d"))
    base = spectrum_for_beta("harmonic-3d", config.beta)
    text = dump_spectrum(base)

    def run(spectrum):
        draws = CanonicalSampler(config, spectrum).sample(RngStream(seed, 13), 200)
        return [(tuple(d.levels), tuple(d.counts)) for d in draws]

    ref = run(load_spectrum(text))
    checks.append(GofReport("identical-output", float(ref != run(load_spectrum(text))), MISMATCH_TOL,
                            200, "canonical samples, equality"))
    for shift in (0.5, 1024.0, -7.25):
        shifted = "\n".join(f"{e + shift!r} {m}" for e, m, _ in base.rows())
        same = run(load_spectrum(shifted)) == ref
        checks.append(GofReport("shift-invariance", float(not same), MISMATCH_TOL, 200,
                                f"shift {shift:g}: sample equality"))
    details["shifts"] = [0.5, 1024.0, -7.25]
    return checks, details


SUITES = {
    "gumbel": ("W for the 1d harmonic trap against the Gumbel law", suite_gumbel),
    "fraction": ("condensate fraction, harmonic-3d", suite_fraction),
    "clt": ("normal fluctuations of N0, harmonic-3d", suite_clt),
    "nonnormal": ("non-normal W for the 3d box", suite_nonnormal),
    "marginal": ("exponential excited-state marginal", suite_marginal),
    "energy": ("energy law of large numbers", suite_energy),
    "gibbs": ("small-instance exact enumeration", suite_gibbs),
    "weyl-limits": ("deterministic Weyl-scaled means", suite_weyl_limits),
    "charfn": ("characteristic function of W", suite_charfn),
    "ensemble-gap": ("grand canonical vs canonical spread", suite_ensemble_gap),
    "determinism": ("seeding and energy-shift invariance", suite_determinism),
}


def run_suite(name, seed=DEFAULT_SEED):
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    title, fn = SUITES[name]
    start = time.perf_counter()
    checks, details = fn(seed)
    return SuiteResult(name, title, checks, details, time.perf_counter() - start)


def run_suites(names=None, seed=DEFAULT_SEED):
    return [run_suite(n, seed) for n in (names or SUITES)]
