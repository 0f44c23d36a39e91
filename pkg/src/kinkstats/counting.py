"""Full counting statistics of kinks: the Poisson binomial distribution.

Every momentum mode contributes an independent Bernoulli variable, so the
characteristic function of the kink number factorises over modes::

    P~(theta) = prod_k [1 + (exp(i theta) - 1) p_k]

Only positive wavevectors are stored.  Under the default ``"independent"``
pairing the modes ``+k`` and ``-k`` are separate Bernoulli factors with the
same probability; under ``"paired"`` each ``+-k`` pair is one factor that adds
two kinks at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb, gammaln

from .dynamics import ModeProbabilities

PAIRINGS = ("independent", "paired")

IMAG_RESIDUE = 1e-10
NEGATIVE_ZERO = 1e-12
NORMALIZATION_RESIDUE = 1e-10


class DistributionError(ArithmeticError):
    """Numerical fault while inverting a characteristic function."""


@dataclass(frozen=True)
class KinkDistribution:
    """``P(n)`` for ``n = 0..N``."""

    probabilities: np.ndarray
    mode_pairing: str = "independent"
    source: dict = field(default_factory=dict, compare=False)

    @property
    def support(self) -> np.ndarray:
        return np.arange(len(self.probabilities))

    def mean(self) -> float:
        return math.fsum(self.support * self.probabilities)


@dataclass(frozen=True)
class CumulantReport:
    kappa: tuple
    method: str = "recursion"

    @property
    def qmax(self) -> int:
        return len(self.kappa)

    def __getitem__(self, q):
        """One-based access: ``report[1]`` is the mean."""
        if not 1 <= q <= self.qmax:
            raise IndexError(f"cumulant order {q} outside 1..{self.qmax}")
        return self.kappa[q - 1]


def _check_pairing(pairing):
    if pairing not in PAIRINGS:
        raise ValueError(f"pairing must be one of {PAIRINGS}, got {pairing!r}")


def bernoulli_factors(probs: ModeProbabilities, pairing: str = "independent"):
    """Expand stored modes into ``(probabilities, step)`` of the Bernoulli factors."""
    _check_pairing(pairing)
    p = np.asarray(probs.p, dtype=float)
    if pairing == "independent":
        return np.concatenate([p, p]), 1
    return p, 2


def _char_product(theta, p, step):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phase = np.expm1(1j * step * theta)
    out = np.empty(theta.shape, dtype=complex)
    # chunk over theta so memory stays O(chunk * modes)
    chunk = max(1, 2 ** 22 // max(len(p), 1))
    for start in range(0, len(theta), chunk):
        sl = slice(start, start + chunk)
        out[sl] = np.prod(1.0 + phase[sl, None] * p[None, :], axis=1)
    return out


def characteristic_function(theta, probs: ModeProbabilities, pairing: str = "independent"):
    """Characteristic function of the kink number at angle(s) ``theta``."""
    p, step = bernoulli_factors(probs, pairing)
    out = _char_product(theta, p, step)
    return complex(out[0]) if np.ndim(theta) == 0 else out


def _cleanup(raw, pairing):
    if np.max(np.abs(raw.imag)) > IMAG_RESIDUE:
        raise DistributionError(f"imaginary residue {np.max(np.abs(raw.imag)):.3e} "
                                f"exceeds {IMAG_RESIDUE:g}")
    P = raw.real.copy()
    if np.min(P) < -NEGATIVE_ZERO:
        raise DistributionError(f"negative probability {np.min(P):.3e} beyond rounding")
    P[P < 0] = 0.0
    if pairing == "paired":
        P[1::2] = 0.0
    total = math.fsum(P)
    if abs(total - 1.0) > NORMALIZATION_RESIDUE:
        raise DistributionError(f"normalisation residue {total - 1.0:.3e}")
    return P / total


def poisson_binomial_pmf(p, step: int = 1) -> np.ndarray:
    """PMF of ``step * (sum of Bernoulli(p_i))`` by inverting the characteristic function.

    The characteristic function is a trigonometric polynomial of degree
    ``M = step * len(p)``, so sampling it at ``M + 1`` equispaced angles and
    applying an inverse DFT recovers ``P(n)`` exactly up to rounding.
    """
    p = np.asarray(p, dtype=float)
    size = step * len(p) + 1
    if np.all((p == 0) | (p == 1)):
        # deterministic count; skip the transform so the point mass is exact
        P = np.zeros(size)
        P[step * int(np.count_nonzero(p))] = 1.0
        return P
    theta = 2.0 * np.pi * np.arange(size) / size
    values = _char_product(theta, p, step)
    # P(n) = (1/M+1) sum_j P~(theta_j) exp(-i theta_j n), numpy's forward convention
    raw = np.fft.fft(values) / size
    return _cleanup(raw, "paired" if step == 2 else "independent")


def poisson_binomial_convolution(p, step: int = 1) -> np.ndarray:
    """Same PMF by folding in one Bernoulli factor at a time."""
    P = np.zeros(step * len(p) + 1)
    P[0] = 1.0
    top = 0
    for pk in p:
        P[step:top + step + 1] = P[step:top + step + 1] * (1.0 - pk) + P[:top + 1] * pk
        P[:step] *= 1.0 - pk
        top += step
    return P


def kink_distribution(probs: ModeProbabilities, pairing: str = "independent") -> KinkDistribution:
    p, step = bernoulli_factors(probs, pairing)
    return KinkDistribution(poisson_binomial_pmf(p, step), pairing,
                            {"method": probs.method, "tau_Q": probs.tau_Q, "N": probs.params.N,
                             "inversion": "dft"})


def kink_distribution_convolution(probs: ModeProbabilities,
                                  pairing: str = "independent") -> KinkDistribution:
    p, step = bernoulli_factors(probs, pairing)
    return KinkDistribution(poisson_binomial_convolution(p, step), pairing,
                            {"method": probs.method, "tau_Q": probs.tau_Q, "N": probs.params.N,
                             "inversion": "convolution"})


def kink_distribution_enumeration(p, step: int = 1) -> np.ndarray:
    """Brute force over all ``2^m`` outcomes of ``m`` Bernoulli variables (small ``m`` only)."""
    p = np.asarray(p, dtype=float)
    m = len(p)
    if m > 20:
        raise ValueError("enumeration is limited to 20 Bernoulli variables")
    P = np.zeros(step * m + 1)
    bits = np.arange(m)
    for start in range(0, 2 ** m, 2 ** 14):
        outcomes = (np.arange(start, min(start + 2 ** 14, 2 ** m))[:, None] >> bits) & 1
        weight = np.prod(np.where(outcomes == 1, p, 1.0 - p), axis=1)
        P += np.bincount(step * outcomes.sum(axis=1), weights=weight, minlength=len(P))
    return P


# ---------------------------------------------------------------------------
# Cumulants

def cumulant_polynomials(qmax: int) -> list[list[int]]:
    """Integer coefficients of ``f_q``, ``q = 1..qmax``, lowest degree first.

    ``f_1(p) = p`` and ``f_{q+1}(p) = p (1 - p) f_q'(p)``; ``sum_k f_q(p_k)`` is
    the q-th cumulant of the Poisson binomial distribution.
    """
    if not 1 <= qmax <= 20:
        raise ValueError(f"qmax must lie in 1..20, got {qmax}")
    polys = [[0, 1]]
    for _ in range(qmax - 1):
        f = polys[-1]
        deriv = [j * f[j] for j in range(1, len(f))]  # coefficients of f', degree shifted
        nxt = [0] * (len(f) + 1)
        for j, c in enumerate(deriv):
            nxt[j + 1] += c   # p * f'
            nxt[j + 2] -= c   # -p^2 * f'
        polys.append(nxt)
    return polys


def _bernoulli_cumulant(coeffs, q, p):
    """Evaluate ``f_q`` at ``p``, reflecting to ``min(p, 1-p)`` to curb cancellation.

    For ``q >= 2`` the cumulants of ``Bernoulli(1-p)`` equal ``(-1)^q`` times
    those of ``Bernoulli(p)``.
    """
    if q == 1:
        return p.copy()
    sign = np.where(p > 0.5, (-1.0) ** q, 1.0)
    x = np.minimum(p, 1.0 - p)
    return sign * np.polynomial.polynomial.polyval(x, np.array(coeffs, dtype=float))


def cumulants_exact(probs: ModeProbabilities, qmax: int = 3,
                    pairing: str = "independent") -> CumulantReport:
    """``kappa_q = 2 sum_{k>0} f_q(p_k)`` with compensated summation."""
    _check_pairing(pairing)
    if pairing != "independent":
        raise ValueError("the polynomial recursion assumes independent Bernoulli modes; "
                         "use cumulants_from_distribution on the paired distribution")
    polys = cumulant_polynomials(qmax)
    p = np.asarray(probs.p, dtype=float)
    kappa = tuple(2.0 * math.fsum(_bernoulli_cumulant(polys[q - 1], q, p))
                  for q in range(1, qmax + 1))
    return CumulantReport(kappa, "recursion")


def moments_from_distribution(dist: KinkDistribution, qmax: int, origin: float = 0.0) -> list[float]:
    """Moments ``sum_n (n - origin)^q P(n)``, ``q = 1..qmax``; raw moments by default.

    Taking ``origin`` at the mean keeps the moments of order ``q`` near
    ``sigma^q`` instead of ``mean^q``, which removes most of the cancellation
    in the conversion to cumulants.
    """
    if not 1 <= qmax <= 10:
        raise ValueError(f"qmax must lie in 1..10, got {qmax}")
    n = dist.support.astype(float) - origin
    P = np.asarray(dist.probabilities)
    return [math.fsum(n ** q * P) for q in range(1, qmax + 1)]


def cumulants_from_moments(moments, origin: float = 0.0) -> CumulantReport:
    """Standard recursion ``kappa_q = mu'_q - sum_{m<q} C(q-1, m-1) kappa_m mu'_{q-m}``.

    ``moments`` are taken about ``origin``; only ``kappa_1`` depends on it.
    """
    moments = list(moments)
    if not 1 <= len(moments) <= 10:
        raise ValueError("between 1 and 10 moments are supported")
    kappa = []
    for q in range(1, len(moments) + 1):
        acc = [moments[q - 1]]
        acc += [-comb(q - 1, m - 1, exact=True) * kappa[m - 1] * moments[q - m - 1]
                for m in range(1, q)]
        kappa.append(math.fsum(acc))
    kappa[0] += origin
    return CumulantReport(tuple(kappa), "moments")


def cumulants_from_distribution(dist: KinkDistribution, qmax: int) -> CumulantReport:
    """Cumulants of ``P(n)`` through moments about its mean."""
    mean = dist.mean()
    return cumulants_from_moments(moments_from_distribution(dist, qmax, mean), mean)


def le_cam_diagnostic(probs: ModeProbabilities, dist: KinkDistribution | None = None):
    """Le Cam bound ``2 sum_k p_k^2`` and the actual distance to Poisson(kappa_1).

    Both sums run over the full ``+-k`` grid; the distance is
    ``sum_{n=0}^{N} |P(n) - Poisson(n; kappa_1)|``.
    """
    p = np.asarray(probs.p, dtype=float)
    bound = 4.0 * math.fsum(p * p)
    if dist is None:
        dist = kink_distribution(probs, "independent")
    mean = 2.0 * math.fsum(p)
    n = dist.support
    if mean > 0:
        poisson = np.exp(n * math.log(mean) - mean - gammaln(n + 1))
    else:
        poisson = (n == 0).astype(float)
    tv = math.fsum(np.abs(dist.probabilities - poisson))
    return bound, tv


def total_variation(P, Q) -> float:
    """``sum_n |P(n) - Q(n)|`` (no factor 1/2)."""
    return math.fsum(np.abs(np.asarray(P) - np.asarray(Q)))
