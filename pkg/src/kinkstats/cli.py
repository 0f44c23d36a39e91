"""Command-line front end.

Commands: ``distribution``, ``sweep``, ``fit``, ``theory`` and ``modes``.  Every
output file starts with the package version and the fully resolved
configuration.  Settings resolve as command-line flag, then ``--config`` JSON
file, then built-in default.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cache import CACHE_ENV, RowCache, default_cache_dir
from .counting import PAIRINGS
from .dynamics import INTEGRATORS, METHODS, SolverConfig, mode_probabilities
from .modes import ChainParams, QuenchProtocol, momentum_grid
from .scaling import (
    FitError,
    SweepTable,
    TableFormatError,
    compare_distribution,
    fit_power_law,
    sweep,
)
from .theory import (
    adiabatic_onset,
    binomial_model,
    erf_corrected_cumulants,
    kzm_density,
    normal_approximation,
    regime,
    scaling_cumulant_ratio,
)

log = logging.getLogger("kinkstats")

DEFAULTS = {
    "n": 400,
    "j": 1.0,
    "hbar": 1.0,
    "tau": None,
    "tau_grid": None,
    "method": "ode",
    "pairing": "independent",
    "qmax": 3,
    "abs_tol": 1e-10,
    "rel_tol": 1e-10,
    "integrator": "magnus",
    "start_factor": 1.0,
    "out": ".",
    "cache_dir": None,
    "workers": 1,
    "input": None,
    "q": None,
    "tau_range": None,
}

# per-command defaults for the quench times when neither --tau nor --tau-grid is set
DEFAULT_TAUS = {
    "distribution": {"tau": [10.0, 100.0, 1000.0]},
    "sweep": {"tau_grid": "2:200:25"},
    "theory": {"tau": [100.0]},
    "modes": {"tau": [100.0]},
}


class ConfigError(ValueError):
    pass


def parse_grid(spec: str):
    """``lo:hi:points`` -> log-spaced quench times."""
    try:
        lo, hi, points = spec.split(":")
        lo, hi, points = float(lo), float(hi), int(points)
    except ValueError:
        raise ConfigError(f"tau grid must look like lo:hi:points, got {spec!r}") from None
    if not 0 < lo <= hi or points < 1:
        raise ConfigError(f"invalid tau grid {spec!r}")
    return [float(x) for x in np.geomspace(lo, hi, points)]


def parse_range(spec: str):
    try:
        lo, hi = spec.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise ConfigError(f"tau range must look like lo:hi, got {spec!r}") from None


def _common(parser):
    parser.add_argument("--config", help="JSON file with settings (keys as flag names)")
    parser.add_argument("--n", type=int, help="number of spins (even)")
    parser.add_argument("--j", type=float, help="Ising coupling J")
    parser.add_argument("--hbar", type=float)
    parser.add_argument("--tau", type=float, nargs="+", help="quench time(s)")
    parser.add_argument("--tau-grid", help="log-spaced quench times lo:hi:points")
    parser.add_argument("--method", choices=METHODS)
    parser.add_argument("--pairing", choices=PAIRINGS)
    parser.add_argument("--qmax", type=int)
    parser.add_argument("--abs-tol", type=float)
    parser.add_argument("--rel-tol", type=float)
    parser.add_argument("--integrator", choices=INTEGRATORS)
    parser.add_argument("--start-factor", type=float, help="ramp starts at t = -a tau_Q")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--cache-dir", help=f"sweep cache directory (default ${CACHE_ENV})")
    parser.add_argument("--workers", type=int, help="parallel sweep cells")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinkstats", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kinkstats {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "distribution": "exact kink-number distribution vs the Gaussian approximation",
        "sweep": "cumulants over a range of quench times (cached, resumable)",
        "fit": "power-law fits to a sweep table",
        "theory": "closed-form scaling predictions",
        "modes": "dump the per-mode excitation probabilities",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "fit":
            p.add_argument("--input", help="sweep CSV to fit")
            p.add_argument("--q", type=int, nargs="+", help="cumulant orders (default 1..qmax)")
            p.add_argument("--tau-range", help="restrict fit to lo:hi")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    config = dict(DEFAULTS)
    if args.command == "theory":
        config["qmax"] = 10
    config.update(DEFAULT_TAUS.get(args.command, {}))
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from None
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "tau" in loaded or "tau_grid" in loaded:
            config["tau"] = config["tau_grid"] = None
        config.update(loaded)
    flags = {k: v for k, v in vars(args).items() if k in DEFAULTS and v is not None}
    if "tau" in flags or "tau_grid" in flags:
        config["tau"] = config["tau_grid"] = None
    config.update(flags)
    if config["cache_dir"] is None and default_cache_dir() is not None:
        config["cache_dir"] = str(default_cache_dir())
    if config["tau"] is not None and config["tau_grid"] is not None:
        raise ConfigError("give either tau or tau_grid, not both")
    if isinstance(config["tau"], (int, float)):
        config["tau"] = [config["tau"]]
    return config


def quench_times(config) -> list:
    if config["tau_grid"] is not None:
        return parse_grid(config["tau_grid"])
    if not config["tau"]:
        raise ConfigError("no quench time given")
    return [float(t) for t in config["tau"]]


def _params(config):
    return ChainParams(config["n"], config["j"], config["hbar"])


def _solver(config):
    return SolverConfig(config["abs_tol"], config["rel_tol"], integrator=config["integrator"])


def _header_lines(config):
    return f"# kinkstats {__version__}\n# config: {json.dumps(config, sort_keys=True)}\n"


def _fmt(x):
    return format(float(x), ".17g")


def _tag(tau):
    return format(tau, "g")


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def _write_json(path: Path, obj):
    _write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _csv_text(config, header, rows):
    buf = io.StringIO()
    buf.write(_header_lines(config))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands

def cmd_distribution(config) -> int:
    params, solver, out = _params(config), _solver(config), Path(config["out"])
    for tau in quench_times(config):
        cmp = compare_distribution(params, tau, config["method"], solver,
                                   pairing=config["pairing"], start_factor=config["start_factor"])
        stem = f"distribution_N{params.N}_tau{_tag(tau)}"
        rows = [[n, _fmt(pe), _fmt(pn)] for n, pe, pn in zip(cmp.n, cmp.exact, cmp.normal)]
        _write(out / f"{stem}.csv", _csv_text(config, ["n", "P_exact", "P_normal"], rows))
        _write_json(out / f"{stem}.json", {
            "version": __version__, "config": config, "N": params.N, "tau_Q": tau,
            "kappa1": cmp.kappa1, "kappa2": cmp.kappa2, "tv_distance": cmp.tv_distance,
            "regime": cmp.regime, "flags": list(cmp.flags),
        })
        print(f"tau_Q={tau:g}: kappa1={cmp.kappa1:.4f} kappa2={cmp.kappa2:.4f} "
              f"TV={cmp.tv_distance:.4f} regime={cmp.regime}")
        for flag in cmp.flags:
            print(f"  warning: {flag}", file=sys.stderr)
    return 0


def cmd_sweep(config) -> int:
    params, solver, out = _params(config), _solver(config), Path(config["out"])
    cache = RowCache(config["cache_dir"]) if config["cache_dir"] else None
    table = sweep(params, quench_times(config), config["method"], config["qmax"], solver,
                  pairing=config["pairing"], start_factor=config["start_factor"],
                  cache=cache, workers=config["workers"])
    _write(out / f"sweep_N{params.N}_{config['method']}.csv", table.to_csv(config))
    print(f"{len(table)} rows, {len(table.failures)} failures")
    for failure in table.failures:
        print(f"error: tau_Q={failure['tau_Q']:g}: {failure['error']}", file=sys.stderr)
    return 1 if table.failures else 0


def cmd_fit(config) -> int:
    if not config["input"]:
        raise ConfigError("fit needs --input <sweep.csv>")
    path = Path(config["input"])
    try:
        table = SweepTable.from_csv(path.read_text())
    except TableFormatError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    tau_range = parse_range(config["tau_range"]) if config["tau_range"] else None
    orders = config["q"] or list(range(1, table.qmax + 1))
    out = Path(config["out"])
    status = 0
    groups = sorted({(r.N, r.method) for r in table.rows})
    for N, method in groups:
        sub = table.select(N=N, method=method)
        for q in orders:
            try:
                fit = fit_power_law(sub, q, tau_range)
            except FitError as exc:
                print(f"error: N={N} {method} q={q}: {exc}", file=sys.stderr)
                status = 1
                continue
            suffix = f"_N{N}_{method}" if len(groups) > 1 else ""
            _write_json(out / f"fit_q{q}{suffix}.json",
                        {"version": __version__, "config": config, "N": N, "method": method,
                         **fit.to_dict()})
            print(f"N={N} {method} q={q}: alpha={fit.alpha:.4f} R^2={fit.r_squared:.4f} "
                  f"({fit.n_points} points, {fit.n_excluded} excluded)")
    return status


def theory_entry(params, tau, qmax):
    if not 1 <= qmax <= 10:
        raise ConfigError(f"scaling ratios are unsupported beyond q=10 (requested qmax={qmax})")
    d = kzm_density(params, tau)
    k1, k2 = erf_corrected_cumulants(params, tau)
    normal = normal_approximation(params.N, d)
    binom = binomial_model(params.N, d)
    return {
        "tau_Q": tau,
        "density": d,
        "mean": params.N * d,
        "kappa1_erf": k1,
        "kappa2_erf": k2,
        "scaling_ratios": {str(q): scaling_cumulant_ratio(q) for q in range(1, qmax + 1)},
        "normal": {"mean": normal.mean, "variance": normal.variance},
        "binomial": {"n_domains": binom.n_domains, "n_trials": binom.n_trials, "p": binom.p},
        "regime": regime(params, tau),
    }


def cmd_theory(config) -> int:
    params = _params(config)
    entries = [theory_entry(params, tau, config["qmax"]) for tau in quench_times(config)]
    onset = adiabatic_onset(params)
    _write_json(Path(config["out"]) / "theory.json",
                {"version": __version__, "config": config, "N": params.N,
                 "adiabatic_onset": onset, "entries": entries})
    print(f"adiabatic onset tau_Q* = {onset:.4f}")
    for e in entries:
        print(f"tau_Q={e['tau_Q']:g}: d={e['density']:.4g} <n>={e['mean']:.4f} "
              f"kappa2={e['kappa2_erf']:.4f} regime={e['regime']}")
    return 0


def cmd_modes(config) -> int:
    params, solver, out = _params(config), _solver(config), Path(config["out"])
    k = momentum_grid(params).momenta
    for tau in quench_times(config):
        probs = mode_probabilities(params, QuenchProtocol(tau, config["start_factor"]),
                                   config["method"], solver)
        rows = [[ell, _fmt(kk), _fmt(pk)] for ell, (kk, pk) in enumerate(zip(k, probs.p), 1)]
        _write(out / f"modes_N{params.N}_tau{_tag(tau)}_{config['method']}.csv",
               _csv_text(config, ["l", "k", "p"], rows))
    return 0


COMMANDS = {
    "distribution": cmd_distribution,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
    "theory": cmd_theory,
    "modes": cmd_modes,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = resolve_config(args)
        return COMMANDS[args.command](config)
    except (ConfigError, ValueError, RuntimeError, ArithmeticError, OSError) as exc:
        print(f"kinkstats {args.command}: error: {exc}", file=sys.stderr)
        return 1
