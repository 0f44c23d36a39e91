"""Closed-form scaling theory for the kink statistics of a slow linear quench.

In the continuum limit with Landau-Zener mode probabilities the cumulant
generating function of the kink number is

    log P~(theta) = (N / 2 pi) int_{-pi}^{pi} dk log[1 + (e^{i theta} - 1) exp(-2 pi J tau_Q k^2 / hbar)]
                  = -N d sum_p (1 - e^{i theta})^p p^{-3/2} erf(sqrt(pi p) / 2 d)

with the Kibble-Zurek density ``d = (1/2pi) sqrt(hbar / 2 J tau_Q)``.  Setting
all error functions to one gives ``-N d Li_{3/2}(1 - e^{i theta})``, whose
cumulants are all proportional to ``N d``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate, special, stats

from .counting import cumulant_polynomials
from .modes import ChainParams

#: Radius below which the polylogarithm series is summed directly.
SERIES_RADIUS = 0.99

#: Probability of forming a kink per domain in the binomial picture, 1 - 3/pi^2.
BINOMIAL_P = 1.0 - 3.0 / math.pi ** 2

# Regime thresholds on the mean kink number N d.
ADIABATIC_MEAN = 1.0
NEAR_ONSET_MEAN = 2.0


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScalingTheory:
    params: ChainParams
    tau_Q: float

    @property
    def d(self) -> float:
        return kzm_density(self.params, self.tau_Q)

    @property
    def mean(self) -> float:
        return self.params.N * self.d


def kzm_density(params: ChainParams, tau_Q: float) -> float:
    """Mean kink density ``d = (1/2pi) sqrt(hbar / (2 J tau_Q))``."""
    if not tau_Q > 0:
        raise ValueError(f"tau_Q must be positive, got {tau_Q}")
    return math.sqrt(params.hbar / (2.0 * params.J * tau_Q)) / (2.0 * math.pi)


def _series_terms(r: float) -> int:
    """Terms needed before the geometric tail bound ``r^n / (1 - r)`` drops below 1e-16."""
    return max(1, math.ceil(math.log(1e-16 * (1.0 - r)) / math.log(r)))


def polylog_three_halves(z: complex) -> complex:
    """``Li_{3/2}(z) = sum_p z^p / p^{3/2}`` for ``|z| <= 0.99``.

    Terms are added until the geometric bound on the remaining tail,
    ``|term| / (1 - |z|)``, drops below 1e-16.
    """
    z = complex(z)
    r = abs(z)
    if r > SERIES_RADIUS:
        raise ValueError(f"|z| = {r:.6g} outside the series domain |z| <= {SERIES_RADIUS}")
    if r == 0:
        return 0j
    p = np.arange(1, _series_terms(r) + 1, dtype=float)
    terms = np.exp(p * np.log(z)) / p ** 1.5
    # smallest terms first
    return complex(np.sum(terms[::-1]))


def _continuum_cgf(theta, N, d):
    a = 1.0 / (4.0 * math.pi * d * d)     # 2 pi J tau_Q / hbar expressed through d
    w = cmath.exp(1j * theta) - 1.0

    def integrand(k):
        return cmath.log(1.0 + w * math.exp(-a * k * k))

    # at |theta| = pi the argument vanishes where exp(-a k^2) = 1/2
    k_half = math.sqrt(math.log(2.0) / a)
    points = [k_half] if k_half < math.pi else None
    parts = []
    for fn in (lambda k: integrand(k).real, lambda k: integrand(k).imag):
        value, err = integrate.quad(fn, 0.0, math.pi, epsabs=1e-13, epsrel=1e-13,
                                    limit=400, points=points)
        if not err < 1e-11:
            raise QuadratureError(f"continuum CGF quadrature error estimate {err:.3e} "
                                  f"at theta={theta}")
        parts.append(value)
    # integrand is even in k
    return N / math.pi * complex(parts[0], parts[1])


def cgf_continuum(theta: float, N: int, d: float) -> complex:
    """Continuum-limit CGF by adaptive quadrature over ``k in [-pi, pi]``."""
    if not -math.pi <= theta <= math.pi:
        raise ValueError("theta must lie in [-pi, pi]")
    return _continuum_cgf(theta, N, d)


def cgf_scaling(theta: float, N: int, d: float) -> complex:
    """Scaling-limit cumulant generating function ``-N d Li_{3/2}(1 - e^{i theta})``.

    Outside the series domain ``|1 - e^{i theta}| > 0.99`` the continuum
    integral is used instead; the two agree wherever the error functions of
    the finite momentum range are saturated.
    """
    if not -math.pi <= theta <= math.pi:
        raise ValueError("theta must lie in [-pi, pi]")
    z = 1.0 - cmath.exp(1j * theta)
    if abs(z) <= SERIES_RADIUS:
        return -N * d * polylog_three_halves(z)
    return _continuum_cgf(theta, N, d)


def cgf_erf_series(theta: float, N: int, d: float, terms: int | None = None) -> complex:
    """Erf-weighted series for the continuum CGF (requires ``|1 - e^{i theta}| < 1``).

    ``terms=None`` sums until the geometric tail bound drops below 1e-16.
    """
    z = 1.0 - cmath.exp(1j * theta)
    r = abs(z)
    if r >= 1:
        raise ValueError("the erf-weighted series needs |1 - exp(i theta)| < 1")
    if r == 0:
        return 0j
    p = np.arange(1, (terms or _series_terms(r)) + 1, dtype=float)
    weights = special.erf(np.sqrt(np.pi * p) / (2.0 * d)) / p ** 1.5
    return complex(-N * d * np.sum((np.exp(p * np.log(z)) * weights)[::-1]))


def erf_corrected_cumulants(params: ChainParams, tau_Q: float) -> tuple[float, float]:
    """Mean and variance of the kink number in the continuum limit, finite-``k``-range corrected."""
    x = params.J * tau_Q / params.hbar
    prefactor = params.N * kzm_density(params, tau_Q)
    kappa1 = prefactor * math.erf(math.pi * math.sqrt(2.0 * math.pi * x))
    kappa2 = prefactor * (math.erf(math.sqrt(2.0 * math.pi ** 3 * x))
                          - math.erf(math.sqrt(4.0 * math.pi ** 3 * x)) / math.sqrt(2.0))
    return kappa1, kappa2


@lru_cache(maxsize=None)
def scaling_cumulant_ratio(q: int) -> float:
    """``kappa_q / kappa_1`` in the scaling limit, for ``q = 1..10``.

    Integrating ``f_q(exp(-a k^2))`` over the real line turns each monomial
    ``c_j p^j`` into ``c_j / sqrt(j)`` times the mean, so the ratio is the
    radical ``sum_j c_j / sqrt(j)``; it is summed at 40 digits since the
    integer coefficients reach the millions for ``q = 10``.
    """
    if not 1 <= q <= 10:
        raise ValueError(f"scaling ratios are tabulated for q = 1..10 only, got {q}")
    coeffs = cumulant_polynomials(q)[q - 1]
    with mpmath.workdps(40):
        value = mpmath.fsum(c / mpmath.sqrt(j) for j, c in enumerate(coeffs) if j and c)
        return float(value)


@dataclass(frozen=True)
class NormalApproximation:
    mean: float
    variance: float

    def pdf(self, n):
        return stats.norm.pdf(n, loc=self.mean, scale=math.sqrt(self.variance))

    def pmf(self, n_max: int) -> np.ndarray:
        """Density at ``n = 0..n_max`` renormalised to unit sum."""
        values = self.pdf(np.arange(n_max + 1))
        return values / math.fsum(values)


def normal_approximation(N: int, d: float) -> NormalApproximation:
    """Gaussian ``N(N d, 3 N d / pi^2)``."""
    mean = N * d
    if not mean > 0:
        raise ValueError("N d must be positive")
    return NormalApproximation(mean, 3.0 * mean / math.pi ** 2)


@dataclass(frozen=True)
class BinomialModel:
    n_domains: float
    p: float = BINOMIAL_P

    @property
    def n_trials(self) -> int:
        return max(1, round(self.n_domains))

    def pmf(self, n):
        return stats.binom.pmf(n, self.n_trials, self.p)


def binomial_model(N: int, d: float) -> BinomialModel:
    """``B(N_D, p)`` with ``p = 1 - 3/pi^2`` and ``N_D = N d / p`` (rounded for the pmf)."""
    mean = N * d
    if not mean > 0:
        raise ValueError("N d must be positive")
    return BinomialModel(mean / BINOMIAL_P)


def adiabatic_onset(params: ChainParams) -> float:
    """Quench time ``hbar N^2 / (8 pi^2 J)`` at which the mean kink number reaches one."""
    return params.hbar * params.N ** 2 / (8.0 * math.pi ** 2 * params.J)


def regime(params: ChainParams, tau_Q: float) -> str:
    """Classify a quench by its mean kink number ``N d``.

    ``"adiabatic"`` once ``N d < 1`` (past the onset), ``"near-onset"`` for
    ``N d < 2`` (``tau_Q`` beyond a quarter of the onset time), else ``"scaling"``.
    """
    mean = params.N * kzm_density(params, tau_Q)
    if mean < ADIABATIC_MEAN:
        return "adiabatic"
    if mean < NEAR_ONSET_MEAN:
        return "near-onset"
    return "scaling"
