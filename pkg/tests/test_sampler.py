import itertools
import math

import numpy as np
import pytest
from scipy import stats as sps

from becfluct import analytic as an
from becfluct.errors import (ExtendSpectrumError, RejectionFailure, ReplicaError,
                             UnsupportedRegimeError)
from becfluct.rng import RngStream, as_generator
from becfluct.sampler import (CanonicalSampler, GrandCanonicalSampler, build_w_sampler,
                              expected_count, replicate, sample_canonical, sample_geometric,
                              sample_grand_canonical, sample_w, solve_chemical_potential,
                              spectrum_for_beta, spectrum_for_w)
from becfluct.spectrum import analytic_weyl, build_spectrum, load_spectrum


def enumerate_gibbs(state_energies, n, beta):
    """Exact canonical law over per-state occupations (independent oracle)."""
    law = {}
    for occ in itertools.product(range(n + 1), repeat=len(state_energies)):
        if sum(occ) == n:
            law[occ] = math.exp(-beta * sum(k * e for k, e in zip(occ, state_energies)))
    z = sum(law.values())
    return {k: v / z for k, v in law.items()}


def level_law(state_law, mults):
    """Collapse a per-state law to per-level totals."""
    out = {}
    for occ, p in state_law.items():
        key, i = [], 0
        for m in mults:
            key.append(sum(occ[i:i + m]))
            i += m
        out[tuple(key)] = out.get(tuple(key), 0.0) + p
    return out


def test_gibbs_three_levels_p_n0():
    law = enumerate_gibbs((0, 1, 2), 3, 1.0)
    assert len(law) == 10
    assert law[(3, 0, 0)] == pytest.approx(0.5605, abs=5e-5)


@pytest.mark.parametrize("rows,n,beta", [
    ([(0, 1), (1, 1), (2, 1)], 3, 1.0),
    ([(0, 1), (0.5, 2), (1.5, 1)], 4, 0.8),
    ([(0, 1), (1, 1), (1.3, 1), (2, 1)], 5, 0.6),
    ([(0, 1), (0.7, 3)], 2, 1.5),
])
def test_canonical_matches_enumeration(rows, n, beta):
    spec = load_spectrum([f"{e} {m}" for e, m in rows])
    states = [e for e, m in rows for _ in range(m)]
    mults = [m for _, m in rows]
    exact = level_law(enumerate_gibbs(states, n, beta), mults)
    config = an.ThermalConfig.at_temperature(n, 1 / beta, 1.0)
    sampler = CanonicalSampler(config, spec, epsilon=1e-12)
    draws = 100_000
    counts = {}
    for d in sampler.sample(RngStream(99, len(rows)), draws):
        key = tuple(d.level_count(i) for i in range(len(rows)))
        counts[key] = counts.get(key, 0) + 1
    keys = set(exact) | set(counts)
    tv = 0.5 * sum(abs(counts.get(k, 0) / draws - exact.get(k, 0)) for k in keys)
    assert tv < 0.02


def test_geometric_moments():
    gen = np.random.default_rng(1)
    x = np.array([sample_geometric(1.0, 1.0, gen) for _ in range(200_000)])
    assert x.mean() == pytest.approx(1 / (math.e - 1), rel=0.01)
    assert np.all(x >= 0)
    assert sample_geometric(1.0, 20.0, RngStream(3)) == 0
    with pytest.raises(ValueError):
        sample_geometric(1.0, 0.0, gen)


def test_geometric_law_chi_square():
    gen = np.random.default_rng(2)
    x = np.array([sample_geometric(0.7, 1.0, gen) for _ in range(50_000)])
    q = math.exp(-0.7)
    k = np.arange(8)
    expected = (1 - q) * q**k * x.size
    observed = np.array([(x == v).sum() for v in k])
    expected = np.append(expected, x.size - expected.sum())
    observed = np.append(observed, (x >= 8).sum())
    assert sps.chisquare(observed, expected).pvalue > 1e-3


def test_negative_binomial_path_matches_explicit():
    # multiplicity 12 goes through a single negative binomial draw
    spec = load_spectrum("0 1\n1 12\n")
    gc = GrandCanonicalSampler(spec, 1.0, -0.5, epsilon=1e-12)
    gen = RngStream(4).generator()
    tot = np.array([gc.draw(gen).level_count(1) for _ in range(40_000)])
    p = 1 - math.exp(-1.5)
    assert tot.mean() == pytest.approx(12 * (1 - p) / p, rel=0.02)
    assert tot.var() == pytest.approx(12 * (1 - p) / p**2, rel=0.05)


def test_cold_limit_all_in_ground():
    spec = build_spectrum("harmonic-3d", 1.0, 5)
    config = an.ThermalConfig.at_temperature(50, 0.01, 3)
    for d in CanonicalSampler(config, spec).sample(RngStream(1), 50):
        assert d.n0 == 50 and d.energy == 0


def test_sample_structure():
    config = an.ThermalConfig.from_ratio(1000, 0.5, analytic_weyl("harmonic-3d"))
    spec = spectrum_for_beta("harmonic-3d", config.beta)
    d = sample_canonical(config, spec, RngStream(8))
    occ = d.occupations
    assert sum(occ.values()) == 1000 and occ.get(0, 0) == d.n0
    assert all(v > 0 for v in occ.values())
    assert d.tries >= 1 and 0 < d.truncation_epsilon < 1e-3
    assert sum(d.resolved[1]) == d.level_count(1) and len(d.resolved[1]) == 3
    assert d.excited == 1000 - d.n0


def test_finite_n_moments_match_exact_series():
    weyl = analytic_weyl("harmonic-3d")
    config = an.ThermalConfig.from_ratio(20_000, 0.5, weyl)
    spec = spectrum_for_beta("harmonic-3d", config.beta)
    draws = CanonicalSampler(config, spec).sample(RngStream(11), 3000)
    m = np.array([d.excited for d in draws], dtype=float)
    # at t/t_c = 0.5 the conditioning event has probability ~1, so M is
    # essentially the unconditioned sum of geometrics
    exact_spec = spectrum_for_beta("harmonic-3d", config.beta, epsilon=1e-9)
    mean = an.mean_M(config.beta, exact_spec, tol=1e-6)
    var = an.var_M(config.beta, exact_spec, tol=1e-6)
    assert abs(m.mean() - mean) < 4 * math.sqrt(var / m.size)
    assert m.var(ddof=1) == pytest.approx(var, rel=0.08)


def test_acceptance_rate_high_below_tc():
    weyl = analytic_weyl("harmonic-3d")
    config = an.ThermalConfig.from_ratio(10_000, 0.8, weyl)
    spec = spectrum_for_beta("harmonic-3d", config.beta)
    assert CanonicalSampler(config, spec).acceptance_rate(RngStream(2), 400) > 0.5


def test_rejection_failure_above_tc():
    weyl = analytic_weyl("harmonic-3d")
    config = an.ThermalConfig.from_ratio(200, 1.5, weyl)
    spec = spectrum_for_beta("harmonic-3d", config.beta)
    with pytest.raises(RejectionFailure) as info:
        sample_canonical(config, spec, RngStream(1), max_tries=50)
    assert info.value.acceptance == 0.0


def test_truncation_requires_long_spectrum():
    config = an.ThermalConfig.from_ratio(10_000, 0.5, analytic_weyl("harmonic-3d"))
    with pytest.raises(ExtendSpectrumError) as info:
        CanonicalSampler(config, build_spectrum("harmonic-3d", 1.0, 50))
    assert info.value.required_cutoff > 50


# -- grand canonical ------------------------------------------------------------

def test_mu_single_level():
    spec = load_spectrum("0 1\n")
    for T in (0.3, 1.0, 7.0):
        assert solve_chemical_potential(spec, T, 1) == pytest.approx(-T * math.log(2), rel=1e-8)


def test_mu_reproduces_n_and_approaches_zero():
    spec = build_spectrum("harmonic-3d", 1.0, 400)
    T = 10.0
    mus = []
    for n in (2_000, 10_000, 50_000):
        mu = solve_chemical_potential(spec, T, n)
        assert mu < 0
        assert expected_count(spec, T, mu) == pytest.approx(n, rel=1e-6)
        mus.append(mu)
    assert mus[0] < mus[1] < mus[2] < 0


def test_grand_canonical_ground_moments():
    spec = load_spectrum("0 1\n3 1\n")
    T, mu = 1.0, -0.2
    gc = GrandCanonicalSampler(spec, T, mu, epsilon=1e-12)
    gen = RngStream(6).generator()
    n0 = np.array([gc.draw(gen).level_count(0) for _ in range(200_000)], dtype=float)
    a = math.exp(-mu / T)
    assert n0.mean() == pytest.approx(1 / (a - 1), rel=0.02)
    assert n0.var() == pytest.approx(a / (a - 1) ** 2, rel=0.03)


def test_grand_canonical_deep_negative_mu_empty():
    spec = build_spectrum("harmonic-1d", 1.0, 50)
    d = sample_grand_canonical(spec, 1.0, -200.0, RngStream(1))
    assert d.n == 0 and d.occupations == {}
    with pytest.raises(ValueError):
        GrandCanonicalSampler(spec, 1.0, 0.0)


# -- W sampler ------------------------------------------------------------------

def test_w_gumbel_survival_at_zero():
    spec, ws = spectrum_for_w("harmonic-1d", 1e-3)
    w = ws.draw(RngStream(7), 10_000)
    assert abs(np.mean(w >= 0) - an.gumbel_sf(0.0)) < 0.02
    assert ws.delta <= 1e-3


def test_w_mean_zero_and_variance():
    spec, ws = spectrum_for_w("harmonic-1d", 1e-2)
    w = ws.draw(RngStream(8), 100_000)
    assert abs(w.mean()) < 3 * w.std() / math.sqrt(w.size)
    # Var W = zeta(2) for the 1d trap
    assert w.var() == pytest.approx(math.pi**2 / 6, rel=0.03)


def test_w_box_3d_skewness_sign():
    spec, ws = spectrum_for_w("box-3d", 0.2)
    w = ws.draw(RngStream(9), 20_000)
    # third cumulant of c * sum (1 - X)/E is -2 c^3 sum 1/E^3 < 0
    skew = sps.skew(w)
    assert skew < 0


def test_blocked_and_truncated_agree():
    spec = build_spectrum("harmonic-1d", 1.0, 40_000)
    a = build_w_sampler(spec, delta=0.02, method="blocked")
    b = build_w_sampler(spec, delta=0.02, method="truncate")
    assert a.n_blocks < b.n_blocks
    wa, wb = a.draw(RngStream(1), 40_000), b.draw(RngStream(2), 40_000)
    assert sps.ks_2samp(wa, wb).pvalue > 1e-3


def test_w_sampler_certified_error_is_exact_coupling_error():
    # finite spectrum, unit multiplicities: blocks are runs of consecutive levels
    spec = load_spectrum("0 1\n1 1\n2 1\n4 1\n8 1\n16 1\n")
    w = 1 / np.array([1, 2, 4, 8, 16.0])
    for delta in (0.05, 0.2, 10.0):
        ws = build_w_sampler(spec, analytic_weyl("harmonic-1d"), delta=delta)
        per_level = np.repeat(ws.weights, ws.sizes.astype(int))
        assert per_level.size == w.size
        assert ws.delta == pytest.approx(math.sqrt(np.sum((w - per_level) ** 2)), abs=1e-15)
        assert ws.delta <= delta


def test_w_sampler_errors():
    with pytest.raises(UnsupportedRegimeError):
        build_w_sampler(build_spectrum("harmonic-3d", 1.0, 50))
    with pytest.raises(ExtendSpectrumError):
        build_w_sampler(build_spectrum("harmonic-1d", 1.0, 100), delta=1e-3)
    with pytest.raises(ValueError):
        build_w_sampler(build_spectrum("harmonic-1d", 1.0, 100), delta=0)


def test_sample_w_scalar_and_array():
    spec = build_spectrum("harmonic-1d", 1.0, 20_000)
    assert isinstance(sample_w(spec, delta=0.05, rng=RngStream(1)), float)
    assert sample_w(spec, delta=0.05, rng=RngStream(1), size=5).shape == (5,)


# -- rng and replication ----------------------------------------------------------

def test_streams_reproducible_and_distinct():
    a = RngStream(1, 0).generator().random(4)
    assert np.array_equal(a, RngStream(1, 0).generator().random(4))
    assert not np.array_equal(a, RngStream(1, 1).generator().random(4))
    assert not np.array_equal(a, RngStream(2, 0).generator().random(4))
    assert isinstance(as_generator(5), np.random.Generator)
    with pytest.raises(TypeError):
        as_generator("seed")


def test_replicate_order_independent():
    config = an.ThermalConfig.from_ratio(2000, 0.5, analytic_weyl("harmonic-3d"))
    spec = spectrum_for_beta("harmonic-3d", config.beta)
    sampler = CanonicalSampler(config, spec)

    def task(stream):
        return sampler.draw(stream).n0

    serial = replicate(task, 40, 123)
    assert serial == replicate(task, 40, 123, workers=4)
    assert replicate(task, 1, 123) == [task(RngStream(123, 0))]
    assert serial != replicate(task, 40, 124)


def test_replicate_reports_index():
    def task(stream):
        if stream.stream_id == 3:
            raise RuntimeError("boom")
        return stream.stream_id

    with pytest.raises(ReplicaError) as info:
        replicate(task, 5, 0)
    assert info.value.index == 3
    with pytest.raises(ValueError):
        replicate(task, 0, 0)


def test_shift_invariance_of_samples():
    base = build_spectrum("harmonic-2d", 1.0, 60)
    config = an.ThermalConfig.from_ratio(500, 0.5, analytic_weyl("harmonic-2d"))
    ref = None
    for shift in (0.0, 0.25, 4096.0, -3.5):
        spec = load_spectrum([f"{e + shift!r} {m}" for e, m, _ in base.rows()])
        draws = CanonicalSampler(config, spec).sample(RngStream(77), 100)
        got = [(tuple(d.levels), tuple(d.counts)) for d in draws]
        ref = ref or got
        assert got == ref
