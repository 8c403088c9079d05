"""Single-particle energy spectra: generation, loading, counting, Weyl fits.

Energies are always stored shifted so that the ground state sits at 0, and
degenerate eigenvalues are stored once with their multiplicity.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .errors import CapacityError, OutOfRangeError, SpectrumError

HARMONIC_KINDS = ("harmonic-1d", "harmonic-2d", "harmonic-3d")
BOX_KINDS = ("box-2d", "box-3d")
BUILTIN_KINDS = HARMONIC_KINDS + BOX_KINDS
KINDS = BUILTIN_KINDS + ("custom",)

MAX_LATTICE_POINTS = 10**8
MAX_LEVELS = 10**8

# floor() guard so that e.g. cutoff=3*scale keeps the level at exactly 3*scale
_EPS = 1e-12


@dataclass(frozen=True)
class WeylParams:
    """Constants of the counting law #{j : E_j <= lam} ~ L * lam**alpha."""

    L: float
    alpha: float
    residual: float | None = None

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"L must be positive, got {self.L}")
        if not self.alpha >= 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")


@dataclass(frozen=True, eq=False)
class EnergySpectrum:
    """Distinct shifted energy levels with multiplicities.

    Attributes
    ----------
    energies : ndarray
        Strictly increasing level energies, ``energies[0] == 0``.
    multiplicities : ndarray of int64
        Degeneracy of each level, ``multiplicities[0] == 1``.
    kind : str
        One of :data:`KINDS`.
    scale : float
        Energy unit (hbar*omega or the box constant C).
    raw_ground_energy : float
        Ground energy before the shift.
    cutoff : float
        Energy up to which the spectrum is known to be complete.
    complete : bool
        True when no levels exist above ``cutoff`` (finite spectra).
    """

    energies: np.ndarray
    multiplicities: np.ndarray
    kind: str = "custom"
    scale: float = 1.0
    raw_ground_energy: float = 0.0
    cutoff: float = field(default=float("nan"))
    complete: bool = False

    def __post_init__(self):
        e = np.array(self.energies, dtype=float)
        m = np.array(self.multiplicities, dtype=np.int64)
        if e.ndim != 1 or e.shape != m.shape or e.size == 0:
            raise SpectrumError("energies and multiplicities must be equal-length 1-d arrays")
        if self.kind not in KINDS:
            raise SpectrumError(f"unknown spectrum kind {self.kind!r}")
        if e[0] != 0.0:
            raise SpectrumError("ground level must be shifted to energy 0")
        if m[0] != 1:
            raise SpectrumError("ground state must be unique (multiplicity 1)")
        if np.any(np.diff(e) <= 0):
            raise SpectrumError("energies must be strictly increasing")
        if np.any(m < 1):
            raise SpectrumError("multiplicities must be >= 1")
        if not self.scale > 0:
            raise SpectrumError("scale must be positive")
        e.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "multiplicities", m)
        cutoff = self.cutoff
        if math.isnan(cutoff):
            cutoff = float(e[-1])
        object.__setattr__(self, "cutoff", float(cutoff))
        cum = np.cumsum(m)
        cum.flags.writeable = False
        object.__setattr__(self, "_cum", cum)

    def __len__(self):
        return self.energies.size

    @property
    def n_levels(self):
        return self.energies.size

    @property
    def n_states(self):
        return int(self._cum[-1])

    @property
    def cumulative(self):
        """Number of states at or below each level."""
        return self._cum

    @property
    def weyl(self):
        """Closed-form Weyl constants for built-in traps, else None."""
        if self.kind in BUILTIN_KINDS:
            return analytic_weyl(self.kind, self.scale)
        return None

    def truncate(self, cutoff):
        """Return the prefix of levels with energy <= cutoff."""
        k = int(np.searchsorted(self.energies, cutoff, side="right"))
        return EnergySpectrum(self.energies[:k], self.multiplicities[:k], self.kind,
                              self.scale, self.raw_ground_energy,
                              min(cutoff, self.cutoff), False)

    def extend(self, cutoff):
        """Regenerate a built-in spectrum up to a larger cutoff."""
        if self.kind not in BUILTIN_KINDS:
            raise SpectrumError("only built-in spectra can be extended")
        if cutoff <= self.cutoff:
            return self
        return build_spectrum(self.kind, self.scale, cutoff)

    def shifted_to(self, raw_ground_energy):
        """Same levels reported with a different pre-shift ground energy."""
        return EnergySpectrum(self.energies, self.multiplicities, self.kind, self.scale,
                              raw_ground_energy, self.cutoff, self.complete)

    def state_energies(self, start=1, stop=None):
        """Energies with multiplicity expanded, one entry per eigenstate."""
        return np.repeat(self.energies[start:stop], self.multiplicities[start:stop])

    def rows(self):
        """Yield (energy, multiplicity, cumulative_count) per level."""
        for e, m, c in zip(self.energies, self.multiplicities, self._cum):
            yield float(e), int(m), int(c)


def _harmonic_multiplicity(dim, s):
    if dim == 1:
        return np.ones_like(s)
    if dim == 2:
        return s + 1
    return (s + 1) * (s + 2) // 2


def _square_sum_counts(dim, q):
    """Number of non-negative integer tuples with sum of squares == v, v <= q."""
    r = math.isqrt(q)
    sq = np.arange(r + 1, dtype=np.int64) ** 2
    pair = (sq[:, None] + sq[None, :]).ravel()
    c2 = np.bincount(pair[pair <= q], minlength=q + 1).astype(np.int64)
    if dim == 2:
        return c2
    # exact lattice-point total before building the 3d table
    c2cum = np.cumsum(c2)
    total = int(sum(c2cum[q - s] for s in sq))
    if total > MAX_LATTICE_POINTS:
        raise CapacityError(f"box-3d cutoff needs {total} lattice points "
                            f"(budget {MAX_LATTICE_POINTS})")
    c3 = np.zeros(q + 1, dtype=np.int64)
    for s in sq:
        c3[s:] += c2[: q + 1 - s]
    return c3


def build_spectrum(kind, scale=1.0, energy_cutoff=10.0):
    """Generate all shifted levels of a built-in trap up to ``energy_cutoff``.

    Harmonic traps use level ``s*scale`` with multiplicity 1, s+1 or
    (s+1)(s+2)/2. Boxes enumerate ``scale*(i^2+j^2[+k^2])`` over
    non-negative integers exactly.
    """
    if kind not in BUILTIN_KINDS:
        raise SpectrumError(f"unknown built-in kind {kind!r}")
    if not scale > 0:
        raise SpectrumError("scale must be positive")
    if not energy_cutoff > 0:
        raise SpectrumError("energy_cutoff must be positive")
    q = int(math.floor(energy_cutoff / scale * (1 + _EPS)))
    if q + 1 > MAX_LEVELS:
        raise CapacityError(f"{q + 1} levels requested (budget {MAX_LEVELS})")
    if kind in HARMONIC_KINDS:
        dim = int(kind[-2])
        s = np.arange(q + 1, dtype=np.int64)
        mult = _harmonic_multiplicity(dim, s)
        if dim == 3 and mult.sum() > 2**62:
            raise CapacityError("state count overflows int64")
        return EnergySpectrum(s * float(scale), mult, kind, scale, dim * scale / 2.0,
                              energy_cutoff, False)
    dim = int(kind[-2])
    counts = _square_sum_counts(dim, q)
    v = np.flatnonzero(counts)
    return EnergySpectrum(v * float(scale), counts[v], kind, scale, 0.0, energy_cutoff, False)


def count_levels(spectrum, lam):
    """S(lam): number of eigenstates with shifted energy <= lam."""
    if lam < 0:
        return 0
    if lam > spectrum.cutoff and not spectrum.complete:
        raise OutOfRangeError(f"lambda={lam} beyond generated cutoff {spectrum.cutoff}")
    k = int(np.searchsorted(spectrum.energies, lam, side="right"))
    return int(spectrum.cumulative[k - 1])


def analytic_weyl(kind, scale=1.0):
    """Closed-form (L, alpha) for the built-in traps.

    The harmonic-1d and box-3d constants are the ones obtained by direct
    counting (1/C and pi/(6 C^1.5)); both are checked against the lattice
    count in the test suite.
    """
    c = float(scale)
    table = {
        "harmonic-1d": (1.0 / c, 1.0),
        "harmonic-2d": (1.0 / (2.0 * c**2), 2.0),
        "harmonic-3d": (1.0 / (6.0 * c**3), 3.0),
        "box-2d": (math.pi / (4.0 * c), 1.0),
        "box-3d": (math.pi / (6.0 * c**1.5), 1.5),
    }
    if kind not in table:
        raise SpectrumError(f"no closed-form Weyl constants for kind {kind!r}")
    L, alpha = table[kind]
    return WeylParams(L, alpha)


def _loglog_fit(x, y, shift):
    A = np.column_stack([np.ones_like(x), np.log(x + shift)])
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    res = y - A @ coef
    return coef, float(res @ res)


def fit_weyl(spectrum, lambda_grid, level=0.99):
    """Least-squares fit of log S(lam) against log lam.

    A one-parameter energy offset ``log(lam + a)`` is added when an F-test
    at ``level`` says it explains the data significantly better; harmonic
    traps need it at moderate lam, pure power laws do not. ``alpha`` is
    clipped to 1 from below (with L refitted).
    """
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3:
        raise SpectrumError("lambda_grid needs at least 3 points")
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise SpectrumError("lambda_grid must be positive and strictly increasing")
    counts = np.array([count_levels(spectrum, g) for g in grid], dtype=float)
    if np.any(counts <= 0):
        raise SpectrumError("S(lambda) = 0 on the grid")
    y = np.log(counts)
    if np.ptp(y) == 0:
        raise SpectrumError("S(lambda) is constant on the grid")

    coef, rss0 = _loglog_fit(grid, y, 0.0)
    shift = 0.0
    dof = grid.size - 3
    if dof >= 1:
        opt = optimize.minimize_scalar(lambda a: _loglog_fit(grid, y, a)[1],
                                       bounds=(-0.5 * grid[0], grid[0]), method="bounded",
                                       options={"xatol": 1e-10})
        coef1, rss1 = _loglog_fit(grid, y, opt.x)
        f_stat = (rss0 - rss1) / max(rss1 / dof, np.finfo(float).tiny)
        if f_stat > stats.f.ppf(level, 1, dof):
            coef, shift = coef1, float(opt.x)
    logL, alpha = coef
    if alpha < 1.0:
        alpha = 1.0
        logL = float(np.mean(y - np.log(grid + shift)))
    pred = logL + alpha * np.log(grid + shift)
    residual = float(np.sqrt(np.mean((y - pred) ** 2)))
    return WeylParams(float(np.exp(logL)), float(alpha), residual)


def spectrum_weyl(spectrum):
    """Weyl constants used for tail bounds: closed form if known, else fitted."""
    if spectrum.weyl is not None:
        return spectrum.weyl
    hi = spectrum.cutoff
    lo = max(hi / 64.0, spectrum.energies[1] if spectrum.n_levels > 1 else hi)
    if spectrum.n_levels < 8 or hi < 10 * lo:
        raise SpectrumError("spectrum too short to estimate Weyl constants")
    return fit_weyl(spectrum, np.geomspace(lo, hi, 8))


def _read_lines(source):
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, encoding="utf-8") as fh:
            return fh.read().splitlines()
    if isinstance(source, str):
        return source.splitlines()
    return list(source)


def load_spectrum(source, complete=True):
    """Read "energy multiplicity" lines (path, text, or iterable of lines).

    Duplicate energies are merged, the ground level is shifted to zero.
    A loaded spectrum is treated as the full (finite) spectrum unless
    ``complete=False``.
    """
    energies, mults = [], []
    for lineno, raw in enumerate(_read_lines(source), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise SpectrumError(f"line {lineno}: expected 'energy multiplicity', got {raw!r}")
        try:
            e = float(parts[0])
            m = int(parts[1])
        except ValueError:
            raise SpectrumError(f"line {lineno}: non-numeric entry {raw!r}") from None
        if not math.isfinite(e):
            raise SpectrumError(f"line {lineno}: non-finite energy")
        if m < 1:
            raise SpectrumError(f"line {lineno}: multiplicity must be positive, got {m}")
        if energies and e < energies[-1]:
            raise SpectrumError(f"line {lineno}: energies must be non-decreasing")
        if energies and e == energies[-1]:
            mults[-1] += m
        else:
            energies.append(e)
            mults.append(m)
    if not energies:
        raise SpectrumError("empty spectrum file")
    if mults[0] != 1:
        raise SpectrumError(f"degenerate ground state (multiplicity {mults[0]}); "
                            "the ground state must be unique")
    e0 = energies[0]
    shifted = np.array(energies) - e0
    return EnergySpectrum(shifted, np.array(mults), "custom", 1.0, e0,
                          float(shifted[-1]), complete)


def dump_spectrum(spectrum, raw=True):
    """Text in the format read by :func:`load_spectrum`."""
    offset = spectrum.raw_ground_energy if raw else 0.0
    return "".join(f"{e + offset!r} {m}\n" for e, m, _ in spectrum.rows())
