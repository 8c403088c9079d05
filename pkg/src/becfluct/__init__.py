"""Canonical-ensemble occupation statistics for the ideal Bose gas in a trap."""

from .analytic import (LimitLaw, ThermalConfig, condensate_fraction, critical_t, gumbel_char_fn,
                       gumbel_sf, limit_law, mean_M, mean_R, tail_lower_bound, tail_upper_bound,
                       u_char_fn, var_M, var_R, w_char_fn, w_normalization, within_hypothesis)
from .errors import (CapacityError, ExtendSpectrumError, OutOfRangeError, RejectionFailure,
                     ReplicaError, SpectrumError, UnsupportedRegimeError)
from .rng import RngStream
from .sampler import (CanonicalSampler, GrandCanonicalSampler, OccupationSample, WSampler,
                      build_w_sampler, replicate, sample_canonical, sample_grand_canonical,
                      sample_w, solve_chemical_potential)
from .specfun import euler_gamma, gamma_fn, zeta_fn
from .spectrum import (EnergySpectrum, WeylParams, analytic_weyl, build_spectrum, count_levels,
                       fit_weyl, load_spectrum)
from .stats import GofReport, ks_statistic, ks_test

__version__ = "0.1.0"
