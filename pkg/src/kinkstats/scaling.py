"""Quench-time sweeps, power-law fits and comparisons with the scaling theory."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .cache import RowCache
from .counting import (
    cumulants_exact,
    cumulants_from_distribution,
    kink_distribution,
    total_variation,
)
from .dynamics import ModeProbabilities, SolverConfig, mode_probabilities
from .modes import ChainParams, QuenchProtocol
from .theory import (
    adiabatic_onset,
    kzm_density,
    normal_approximation,
    regime,
    scaling_cumulant_ratio,
)

log = logging.getLogger(__name__)

MIN_FIT_POINTS = 5


class FitError(ValueError):
    pass


class TableFormatError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class SweepRow:
    N: int
    tau_Q: float
    method: str
    kappa: tuple
    wall_time: float = 0.0

    @property
    def key(self):
        return (self.N, self.tau_Q, self.method)


@dataclass
class SweepTable:
    """Cumulants per ``(N, tau_Q, method)``, kept sorted by key."""

    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        rows, self.rows = self.rows, []
        for row in rows:
            self.add(row)

    def add(self, row: SweepRow):
        if any(r.key == row.key for r in self.rows):
            raise ValueError(f"duplicate sweep row {row.key}")
        if not all(math.isfinite(x) for x in row.kappa):
            raise ValueError(f"non-finite cumulant in row {row.key}")
        self.rows.append(row)
        self.rows.sort(key=lambda r: r.key)

    def __len__(self):
        return len(self.rows)

    @property
    def qmax(self) -> int:
        return min((len(r.kappa) for r in self.rows), default=0)

    def select(self, N=None, method=None) -> "SweepTable":
        return SweepTable([r for r in self.rows
                           if (N is None or r.N == N) and (method is None or r.method == method)],
                          config=dict(self.config))

    @property
    def taus(self) -> np.ndarray:
        return np.array([r.tau_Q for r in self.rows])

    def kappa(self, q: int) -> np.ndarray:
        return np.array([r.kappa[q - 1] for r in self.rows])

    # -- serialisation -----------------------------------------------------

    def to_csv(self, config: dict | None = None) -> str:
        """CSV text preceded by ``#`` header lines carrying the version and config."""
        qmax = self.qmax
        buf = io.StringIO()
        buf.write(f"# kinkstats {__version__}\n")
        buf.write(f"# config: {json.dumps(config if config is not None else self.config, sort_keys=True)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["N", "tau_Q", "method"] + [f"kappa{q}" for q in range(1, qmax + 1)]
                        + ["wall_time"])
        for r in self.rows:
            writer.writerow([r.N, _fmt(r.tau_Q), r.method]
                            + [_fmt(x) for x in r.kappa[:qmax]] + [_fmt(r.wall_time)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SweepTable":
        config = {}
        header = None
        table = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            if line.startswith("#"):
                if line.startswith("# config:"):
                    try:
                        config = json.loads(line[len("# config:"):])
                    except ValueError as exc:
                        raise TableFormatError(f"unreadable config header ({exc})", lineno)
                continue
            fields = next(csv.reader([line]))
            if header is None:
                header = fields
                if header[:3] != ["N", "tau_Q", "method"] or "kappa1" not in header:
                    raise TableFormatError("expected header N,tau_Q,method,kappa1,...", lineno)
                kappa_cols = [i for i, h in enumerate(header) if h.startswith("kappa")]
                if [header[i] for i in kappa_cols] != [f"kappa{q}" for q in range(1, len(kappa_cols) + 1)]:
                    raise TableFormatError("kappa columns must be kappa1..kappaQ in order", lineno)
                wall_col = header.index("wall_time") if "wall_time" in header else None
                continue
            if len(fields) != len(header):
                raise TableFormatError(f"expected {len(header)} fields, got {len(fields)}", lineno)
            try:
                row = SweepRow(int(fields[0]), float(fields[1]), fields[2],
                               tuple(float(fields[i]) for i in kappa_cols),
                               float(fields[wall_col]) if wall_col is not None else 0.0)
                table.add(row)
            except ValueError as exc:
                raise TableFormatError(str(exc), lineno) from None
        if header is None:
            raise TableFormatError("no header row found")
        table.config = config
        return table


def _fmt(x: float) -> str:
    return format(x, ".17g")


# ---------------------------------------------------------------------------
# Sweeps

def cumulants_for(probs: ModeProbabilities, qmax: int, pairing: str = "independent"):
    if pairing == "independent":
        return cumulants_exact(probs, qmax)
    return cumulants_from_distribution(kink_distribution(probs, pairing), qmax)


def solver_record(solver: SolverConfig) -> dict:
    """Solver settings as strict JSON (an unbounded step is written as ``"inf"``)."""
    return {k: ("inf" if isinstance(v, float) and math.isinf(v) else v)
            for k, v in asdict(solver).items()}


def cell_key(params, tau_Q, method, qmax, solver, pairing, start_factor) -> dict:
    return {"N": params.N, "J": params.J, "hbar": params.hbar, "tau_Q": tau_Q,
            "method": method, "qmax": qmax, "pairing": pairing,
            "start_factor": start_factor,
            "solver": solver_record(solver) if method == "ode" else None}


def compute_cell(params, tau_Q, method, qmax, solver, pairing, start_factor):
    start = time.perf_counter()
    probs = mode_probabilities(params, QuenchProtocol(tau_Q, start_factor), method, solver)
    report = cumulants_for(probs, qmax, pairing)
    return tuple(float(x) for x in report.kappa), time.perf_counter() - start


def _compute_cell_safe(args):
    try:
        return compute_cell(*args), None
    except (RuntimeError, ArithmeticError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def sweep(params: ChainParams, tau_list, method: str = "ode", qmax: int = 3,
          solver: SolverConfig = SolverConfig(), *, pairing: str = "independent",
          start_factor: float = 1.0, cache: RowCache | None = None,
          workers: int = 1) -> SweepTable:
    """Cumulants ``kappa_1..kappa_qmax`` for every quench time in ``tau_list``.

    Cells are independent; with ``workers > 1`` they run in a process pool and
    are reassembled by key, so the table is the same as a serial run.  Cells
    found in ``cache`` are not recomputed; failing cells are recorded in
    ``table.failures`` and the sweep carries on.
    """
    taus = sorted({float(t) for t in tau_list})
    if not taus:
        raise ValueError("tau_list is empty")
    if taus[0] <= 0:
        raise ValueError("quench times must be positive")
    config = {"N": params.N, "J": params.J, "hbar": params.hbar, "method": method,
              "qmax": qmax, "pairing": pairing, "start_factor": start_factor,
              "solver": solver_record(solver)}
    table = SweepTable(config=config)
    pending = []
    for tau in taus:
        key = cell_key(params, tau, method, qmax, solver, pairing, start_factor)
        hit = cache.get(key) if cache is not None else None
        if hit is not None:
            table.add(SweepRow(params.N, tau, method, tuple(hit["kappa"]), hit["wall_time"]))
        else:
            pending.append((tau, key))
    args = [(params, tau, method, qmax, solver, pairing, start_factor) for tau, _ in pending]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_compute_cell_safe, args))
    else:
        results = [_compute_cell_safe(a) for a in args]
    for (tau, key), (result, error) in zip(pending, results):
        if error is not None:
            log.error("sweep cell N=%d tau_Q=%g failed: %s", params.N, tau, error)
            table.failures.append({"N": params.N, "tau_Q": tau, "method": method, "error": error})
            continue
        kappa, wall = result
        table.add(SweepRow(params.N, tau, method, kappa, wall))
        if cache is not None:
            cache.put(key, {"kappa": list(kappa), "wall_time": wall})
    return table


# ---------------------------------------------------------------------------
# Fits

@dataclass(frozen=True)
class FitResult:
    """Least-squares fit ``kappa_q = amplitude * tau_Q**(-alpha)``."""

    q: int
    alpha: float
    amplitude: float
    r_squared: float
    tau_range: tuple
    n_points: int
    n_excluded: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def fit_power_law(table: SweepTable, q: int, tau_range=None) -> FitResult:
    """OLS of ``log kappa_q`` on ``log tau_Q``; rows with ``kappa_q <= 0`` are skipped."""
    if len({(r.N, r.method) for r in table.rows}) > 1:
        raise FitError("table mixes system sizes or methods; select one first")
    if not 1 <= q <= table.qmax:
        raise FitError(f"cumulant order {q} not present in table (qmax={table.qmax})")
    lo, hi = tau_range if tau_range is not None else (-math.inf, math.inf)
    rows = [r for r in table.rows if lo <= r.tau_Q <= hi]
    usable = [r for r in rows if r.kappa[q - 1] > 0]
    excluded = len(rows) - len(usable)
    if not usable:
        raise FitError(f"no rows with positive kappa_{q} in tau range {tau_range}")
    if len(usable) < MIN_FIT_POINTS:
        raise FitError(f"need at least {MIN_FIT_POINTS} points, have {len(usable)} "
                       f"({excluded} excluded)")
    x = np.log([r.tau_Q for r in usable])
    y = np.log([r.kappa[q - 1] for r in usable])
    xc, yc = x - x.mean(), y - y.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise FitError("all quench times coincide")
    slope = float(xc @ yc) / sxx
    intercept = y.mean() - slope * x.mean()
    resid = yc - slope * xc
    syy = float(yc @ yc)
    r2 = 1.0 - float(resid @ resid) / syy if syy > 0 else 1.0
    return FitResult(q, -slope, math.exp(intercept), r2,
                     (usable[0].tau_Q, usable[-1].tau_Q), len(usable), excluded)


# ---------------------------------------------------------------------------
# Distribution comparison

@dataclass(frozen=True)
class DistributionComparison:
    exact: np.ndarray
    normal: np.ndarray
    tv_distance: float
    kappa1: float
    kappa2: float
    regime: str
    flags: tuple = ()
    source: dict = field(default_factory=dict)

    @property
    def n(self) -> np.ndarray:
        return np.arange(len(self.exact))


ADIABATIC_FLAG = "adiabatic regime: normal approximation unreliable"
NEAR_ONSET_FLAG = "near adiabatic onset: normal approximation unreliable"
DEGENERATE_FLAG = "degenerate distribution: all probability at n=0"


def compare_to_normal(probs: ModeProbabilities, pairing: str = "independent") -> DistributionComparison:
    params = probs.params
    dist = kink_distribution(probs, pairing)
    cums = cumulants_for(probs, 2, pairing)
    gauss = normal_approximation(params.N, kzm_density(params, probs.tau_Q)).pmf(params.N)
    reg = regime(params, probs.tau_Q)
    flags = []
    if reg == "adiabatic":
        flags.append(ADIABATIC_FLAG)
    elif reg == "near-onset":
        flags.append(NEAR_ONSET_FLAG)
    if not np.any(probs.p):
        flags.append(DEGENERATE_FLAG)
    return DistributionComparison(dist.probabilities, gauss,
                                  total_variation(dist.probabilities, gauss),
                                  cums[1], cums[2], reg, tuple(flags),
                                  {"N": params.N, "tau_Q": probs.tau_Q, "method": probs.method,
                                   "pairing": pairing})


def compare_distribution(params: ChainParams, tau_Q: float, method: str = "ode",
                         solver: SolverConfig = SolverConfig(), *, pairing: str = "independent",
                         start_factor: float = 1.0) -> DistributionComparison:
    """Exact ``P(n)`` against the Gaussian ``N(N d, 3 N d / pi^2)`` on ``n = 0..N``."""
    probs = mode_probabilities(params, QuenchProtocol(tau_Q, start_factor), method, solver)
    return compare_to_normal(probs, pairing)


# ---------------------------------------------------------------------------
# Finite-size study

def scaling_deviation(table: SweepTable, q: int, params: ChainParams) -> np.ndarray:
    """``kappa_q / (ratio_q N d) - 1`` per row: departure from the scaling limit."""
    theory = np.array([scaling_cumulant_ratio(q) * params.N * kzm_density(params, r.tau_Q)
                       for r in table.rows])
    return table.kappa(q) / theory - 1.0


def breakdown_tau(table: SweepTable, q: int, params: ChainParams, rel_tol: float = 0.05):
    """First quench time past the scaling window where ``kappa_q`` leaves it.

    Scanning upward in ``tau_Q``, the window opens at the first row within
    ``rel_tol`` of the scaling-limit value; the breakdown is the first later
    row outside it.  Returns ``None`` if the window never opens or never closes.
    """
    dev = np.abs(scaling_deviation(table, q, params))
    inside = np.flatnonzero(dev <= rel_tol)
    if not len(inside):
        return None
    after = np.flatnonzero(dev[inside[0]:] > rel_tol)
    return float(table.taus[inside[0] + after[0]]) if len(after) else None


@dataclass
class FiniteSizeStudy:
    tables: dict
    fits: dict
    breakdown: dict

    def scaled(self, N: int, q: int):
        """``(tau_Q, kappa_q / N)`` for one system size."""
        table = self.tables[N]
        return table.taus, table.kappa(q) / N


def finite_size_study(N_list, tau_list, method: str = "lz", qmax: int = 3,
                      solver: SolverConfig = SolverConfig(), *, J: float = 1.0,
                      hbar: float = 1.0, pairing: str = "independent", fit_range=None,
                      rel_tol: float = 0.05, cache: RowCache | None = None,
                      workers: int = 1) -> FiniteSizeStudy:
    tables, fits, breakdown = {}, {}, {}
    for N in N_list:
        params = ChainParams(N, J, hbar)
        table = sweep(params, tau_list, method, qmax, solver, pairing=pairing,
                      cache=cache, workers=workers)
        tables[N] = table
        fits[N], breakdown[N] = {}, {}
        for q in range(1, qmax + 1):
            try:
                fits[N][q] = fit_power_law(table, q, fit_range)
            except FitError as exc:
                log.warning("N=%d q=%d: %s", N, q, exc)
                fits[N][q] = None
            breakdown[N][q] = breakdown_tau(table, q, params, rel_tol) if q <= 10 else None
        log.info("N=%d: adiabatic onset %.4g, breakdown %s", N, adiabatic_onset(params),
                 breakdown[N])
    return FiniteSizeStudy(tables, fits, breakdown)
