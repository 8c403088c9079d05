"""Command-line entry point: ``becfluct <command> [options]``.

Every command is a pure function of its resolved configuration and seed.
Tabular output is CSV preceded by ``#`` header lines echoing the tool
version and the full configuration; ``--format json`` wraps the same rows
in one JSON object instead.

Exit codes: 0 success, 1 failed check or sampling failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import __version__
from . import analytic as an
from .errors import (ExtendSpectrumError, RejectionFailure, ReplicaError, SpectrumError,
                     UnsupportedRegimeError)
from .sampler import (CanonicalSampler, GrandCanonicalSampler, build_w_sampler, replicate,
                      solve_chemical_potential, spectrum_for_beta, spectrum_for_w)
from .rng import RngStream
from .spectrum import (BUILTIN_KINDS, analytic_weyl, build_spectrum, load_spectrum,
                       spectrum_weyl)
from .stats import histogram
from .suites import DEFAULT_SEED, SUITES, run_suites

TOOL = "becfluct"


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    trap: str = "harmonic-3d"
    scale: float = 1.0
    n: int = 10_000
    t_over_tc: float = 0.5
    samples: int = 1000
    seed: int = DEFAULT_SEED
    cutoff_eps: float = 1e-3
    delta_w: float = 1e-3
    out: str = "-"
    format: str = "csv"

    def validate(self):
        if self.trap not in BUILTIN_KINDS and not os.path.isfile(self.trap):
            raise UsageError(f"trap {self.trap!r} is neither a built-in kind "
                             f"({', '.join(BUILTIN_KINDS)}) nor a readable file")
        if not self.scale > 0:
            raise UsageError("scale must be positive")
        if self.n < 1:
            raise UsageError("n must be >= 1")
        if not self.t_over_tc > 0:
            raise UsageError("t_over_tc must be positive")
        if self.samples < 1:
            raise UsageError("samples must be >= 1")
        if not (self.cutoff_eps > 0 and self.delta_w > 0):
            raise UsageError("cutoff_eps and delta_w must be positive")
        if self.format not in ("csv", "json"):
            raise UsageError("format must be csv or json")
        return self


_CASTS = {f.name: f.type for f in fields(RunConfig)}
_TYPES = {"str": str, "float": float, "int": int}


def _cast(key, value):
    try:
        return _TYPES[_CASTS[key]](value)
    except ValueError:
        raise UsageError(f"bad value for {key}: {value!r}") from None


def read_config_file(path):
    """Flat ``key = value`` file; '#' starts a comment."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as err:
        raise UsageError(f"cannot read config file: {err}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CASTS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _cast(key, value)
    return values


def resolve_config(args):
    """flags > config file > defaults."""
    values = read_config_file(args.config) if args.config else {}
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    return RunConfig(**values).validate()


# -- output -------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _header(cfg, command, extra):
    lines = [f"# {TOOL} {__version__}", f"# command={command}"]
    lines += [f"# {k}={v}" for k, v in asdict(cfg).items()]
    lines += [f"# {k}={v}" for k, v in extra.items()]
    return "\n".join(lines) + "\n"


def _table(cfg, command, columns, rows, extra=None):
    extra = extra or {}
    if cfg.format == "json":
        doc = {"tool": TOOL, "version": __version__, "command": command, "config": asdict(cfg),
               "meta": extra, "columns": list(columns),
               "rows": [[_json_num(v) for v in r] for r in rows]}
        return json.dumps(doc, indent=1) + "\n"
    body = ",".join(columns) + "\n" + "".join(",".join(_fmt(v) for v in r) + "\n" for r in rows)
    return _header(cfg, command, extra) + body


def _json_num(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


def _emit(cfg, text):
    if cfg.out == "-":
        sys.stdout.write(text)
    else:
        with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# -- helpers --------------------------------------------------------------------

def _spectrum(cfg, cutoff):
    if cfg.trap in BUILTIN_KINDS:
        return build_spectrum(cfg.trap, cfg.scale, cutoff)
    return load_spectrum(cfg.trap)


def _thermal(cfg):
    if cfg.trap in BUILTIN_KINDS:
        weyl = analytic_weyl(cfg.trap, cfg.scale)
        config = an.ThermalConfig.from_ratio(cfg.n, cfg.t_over_tc, weyl)
        spec = spectrum_for_beta(cfg.trap, config.beta, cfg.cutoff_eps, cfg.scale)
    else:
        spec = load_spectrum(cfg.trap)
        config = an.ThermalConfig.from_ratio(cfg.n, cfg.t_over_tc, spectrum_weyl(spec))
    return config, spec


def _w_sampler(cfg):
    if cfg.trap in BUILTIN_KINDS:
        return spectrum_for_w(cfg.trap, cfg.delta_w, cfg.scale)
    spec = load_spectrum(cfg.trap)
    return spec, build_w_sampler(spec, None, cfg.delta_w)


def _grid(text, name):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{name} must be a comma-separated list of numbers") from None
    if not vals:
        raise UsageError(f"{name} is empty")
    return vals


# -- commands -------------------------------------------------------------------

def cmd_spectrum(cfg, args):
    spec = _spectrum(cfg, args.cutoff * cfg.scale if args.cutoff else 10 * cfg.scale)
    rows = list(spec.rows())
    extra = {"raw_ground_energy": spec.raw_ground_energy, "cutoff": spec.cutoff}
    _emit(cfg, _table(cfg, "spectrum", ("energy", "multiplicity", "cumulative_count"), rows, extra))
    return 0


def cmd_fraction(cfg, args):
    ratios = _grid(args.grid, "--grid")
    if cfg.trap in BUILTIN_KINDS:
        weyl = analytic_weyl(cfg.trap, cfg.scale)
    else:
        weyl = spectrum_weyl(load_spectrum(cfg.trap))
    tc = an.critical_t(weyl)
    rows = [(r, an.condensate_fraction(r * tc, weyl), an.within_hypothesis(r * tc, weyl))
            for r in ratios]
    extra = {"L": weyl.L, "alpha": weyl.alpha, "t_c": tc}
    _emit(cfg, _table(cfg, "fraction", ("t_over_tc", "fraction", "within_hypothesis"), rows,
                      extra))
    return 0


def cmd_bounds(cfg, args):
    xs = _grid(args.x, "--x")
    if any(x <= 0 for x in xs):
        raise UsageError("--x values must be positive")
    spec, ws = _w_sampler(cfg)
    mc = None
    if args.mc:
        mc = ws.draw(_stream(cfg), cfg.samples) / ws.normalization
    rows = []
    for x in xs:
        upper = an.tail_upper_bound(x, spec)
        lower = _lower_bound(x, spec)
        row = [x, lower, upper]
        if mc is not None:
            row.append(float(np.mean(mc >= x)))
        rows.append(row)
    cols = ["x", "lower", "upper"] + (["mc_estimate"] if mc is not None else [])
    _emit(cfg, _table(cfg, "bounds", cols, rows, {"cutoff": spec.cutoff}))
    return 0


def _lower_bound(x, spec):
    for _ in range(6):
        try:
            return an.tail_lower_bound(x, spec)
        except ExtendSpectrumError as err:
            spec = spec.extend(max(err.required_cutoff, 2 * spec.cutoff))
    return math.nan


def _stream(cfg):
    return RngStream(cfg.seed, 0)


def cmd_sample_ensemble(cfg, args):
    config, spec = _thermal(cfg)
    sampler = CanonicalSampler(config, spec, cfg.cutoff_eps)
    draws = replicate(sampler.draw, cfg.samples, cfg.seed, args.workers)
    rows = [(i, d.n0, d.n - d.n0, d.energy, d.tries) for i, d in enumerate(draws)]
    extra = {"T": config.T, "t": config.t, "epsilon": sampler.epsilon,
             "last_level": sampler.last_level}
    _emit(cfg, _table(cfg, "sample-ensemble", ("replica", "N0", "Ntot_excited", "Etot", "tries"),
                      rows, extra))
    return 0


def cmd_grand_canonical(cfg, args):
    config, spec = _thermal(cfg)
    mu = solve_chemical_potential(spec, config.T, cfg.n)
    sampler = GrandCanonicalSampler(spec, config.T, mu, cfg.cutoff_eps)
    draws = replicate(sampler.draw, cfg.samples, cfg.seed, args.workers)
    rows = [(i, d.n0, d.n) for i, d in enumerate(draws)]
    extra = {"T": config.T, "mu": mu, "epsilon": sampler.epsilon}
    _emit(cfg, _table(cfg, "grand-canonical", ("replica", "N0", "Ntotal"), rows, extra))
    return 0


def cmd_sample_w(cfg, args):
    spec, ws = _w_sampler(cfg)
    w = ws.draw(_stream(cfg), cfg.samples)
    info = ws.info()
    side = dict(info, histogram=[list(b) for b in histogram(w, args.bins)], config=asdict(cfg),
                version=__version__)
    if cfg.format == "json":
        doc = {"tool": TOOL, "version": __version__, "command": "sample-w",
               "config": asdict(cfg), "meta": side, "values": [float(v) for v in w]}
        _emit(cfg, json.dumps(doc, indent=1) + "\n")
    else:
        _emit(cfg, _header(cfg, "sample-w", info) + "".join(f"{v!r}\n" for v in w.tolist()))
    sidecar = args.sidecar or (cfg.out + ".json" if cfg.out != "-" else None)
    if sidecar:
        with open(sidecar, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(side, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_verify(cfg, args):
    names = args.suite or list(SUITES)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s): {', '.join(unknown)}; "
                         f"choose from {', '.join(SUITES)}")
    results = run_suites(names, cfg.seed)
    failed = [r.name for r in results if not r.passed]
    report = {"tool": TOOL, "version": __version__, "config": asdict(cfg),
              "pass": not failed, "failed": failed, "suites": [r.to_dict() for r in results]}
    _emit(cfg, json.dumps(report, indent=1, sort_keys=True) + "\n")
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}", file=sys.stderr)
    if failed:
        print(f"failing suites: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {
    "spectrum": (cmd_spectrum, "levels, multiplicities and cumulative counts"),
    "fraction": (cmd_fraction, "limit condensate fraction over a t/t_c grid"),
    "bounds": (cmd_bounds, "upper and lower bounds on P(W >= x)"),
    "sample-ensemble": (cmd_sample_ensemble, "canonical occupation samples"),
    "sample-w": (cmd_sample_w, "samples of the limit variable W"),
    "grand-canonical": (cmd_grand_canonical, "grand canonical samples at matched mu"),
    "verify": (cmd_verify, "run verification suites, JSON report"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file (flags override it)")
    common.add_argument("--trap", help="built-in kind or spectrum file")
    common.add_argument("--scale", type=float)
    common.add_argument("--n", type=int)
    common.add_argument("--t-over-tc", dest="t_over_tc", type=float)
    common.add_argument("--samples", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--cutoff-eps", dest="cutoff_eps", type=float)
    common.add_argument("--delta-w", dest="delta_w", type=float)
    common.add_argument("--out", help="output path, '-' for stdout")
    common.add_argument("--format", choices=("csv", "json"))

    parser = argparse.ArgumentParser(prog=TOOL, description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {name: sub.add_parser(name, parents=[common], help=h)
            for name, (_, h) in COMMANDS.items()}
    subs["spectrum"].add_argument("--cutoff", type=float, help="energy cutoff in units of scale")
    subs["fraction"].add_argument("--grid", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    subs["bounds"].add_argument("--x", default="0.5,1,2,3")
    subs["bounds"].add_argument("--mc", action="store_true", help="add a Monte Carlo column")
    for name in ("sample-ensemble", "grand-canonical"):
        subs[name].add_argument("--workers", type=int, default=1)
    subs["sample-w"].add_argument("--bins", type=int, default=40)
    subs["sample-w"].add_argument("--sidecar", help="JSON sidecar path (default OUT.json)")
    subs["verify"].add_argument("--suite", action="append", help="suite name (repeatable)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command][0](cfg, args)
    except (UsageError, SpectrumError, UnsupportedRegimeError, ValueError) as err:
        print(f"{TOOL}: error: {err}", file=sys.stderr)
        return 2
    except (RejectionFailure, ReplicaError) as err:
        print(f"{TOOL}: sampling failed: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
