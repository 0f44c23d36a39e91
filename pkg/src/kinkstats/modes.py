"""Momentum-mode decomposition of the periodic transverse-field Ising chain.

After the Jordan-Wigner and Fourier transformations the even-parity sector
of the chain splits into independent two-level blocks, one per positive
wavevector ``k``::

    H_k = h_z sigma^z + h_x sigma^x,   h_z = 2 (g - cos k),   h_x = 2 sin k

in units of the coupling ``J``.  The transverse field is ramped linearly,
``g(t) = 1 - t / tau_Q``, from ``t = -a tau_Q`` to ``t = +tau_Q``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Critical field of the transition crossed by the ramp.
G_CRITICAL = 1.0


@dataclass(frozen=True)
class ChainParams:
    """Physical constants of a chain of ``N`` spins.

    Parameters
    ----------
    N : int
        Number of spins; even and at least 2.
    J : float
        Ising coupling (energy unit).
    hbar : float
        Reduced Planck constant (action unit).
    """

    N: int
    J: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if isinstance(self.N, bool) or int(self.N) != self.N:
            raise ValueError(f"N must be an integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if self.N < 2 or self.N % 2:
            raise ValueError(f"N must be even and >= 2, got {self.N}")
        if not self.J > 0:
            raise ValueError(f"J must be positive, got {self.J}")
        if not self.hbar > 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")

    @property
    def g_c(self) -> float:
        return G_CRITICAL

    @property
    def n_modes(self) -> int:
        """Number of stored (positive) wavevectors."""
        return self.N // 2


@dataclass(frozen=True)
class QuenchProtocol:
    """Linear ramp ``g(t) = 1 - t/tau_Q`` on ``[-start_factor*tau_Q, tau_Q]``."""

    tau_Q: float
    start_factor: float = 1.0

    def __post_init__(self):
        if not self.tau_Q > 0:
            raise ValueError(f"tau_Q must be positive, got {self.tau_Q}")
        if not self.start_factor >= 1:
            raise ValueError(f"start_factor must be >= 1, got {self.start_factor}")

    @property
    def start_time(self) -> float:
        return -self.start_factor * self.tau_Q

    @property
    def end_time(self) -> float:
        return self.tau_Q


@dataclass(frozen=True)
class ModeGrid:
    """Positive wavevectors ``k_l = (2l - 1) pi / N``, ``l = 1..N/2``, ascending."""

    momenta: np.ndarray

    def __len__(self):
        return len(self.momenta)

    def full(self) -> np.ndarray:
        """The complete set ``{+-k_l}`` in ascending order."""
        return np.concatenate([-self.momenta[::-1], self.momenta])


def momentum_grid(params: ChainParams) -> ModeGrid:
    ell = np.arange(1, params.N // 2 + 1)
    k = (2 * ell - 1) * np.pi / params.N
    k.flags.writeable = False
    return ModeGrid(k)


def magnetic_field(t, protocol: QuenchProtocol):
    """Transverse field ``g(t) = 1 - t/tau_Q``; broadcasts over arrays of times."""
    return G_CRITICAL * (1.0 - t / protocol.tau_Q)


def mode_field_coefficients(k, g):
    """Return ``(h_z, h_x)``, the sigma^z and sigma^x coefficients of ``H_k`` in units of J."""
    return 2.0 * (g - np.cos(k)), 2.0 * np.sin(k)


def _check_wavevector(k):
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0) or np.any(k >= np.pi):
        raise ValueError("wavevector must lie strictly inside (0, pi); "
                         "k = 0 and k = pi are degenerate blocks")
    return k


def instantaneous_eigensystem(k, g):
    """Eigen-decomposition of the mode block at fixed field.

    Parameters
    ----------
    k : float or ndarray
        Wavevector(s) in ``(0, pi)``.
    g : float or ndarray
        Transverse field.

    Returns
    -------
    energy : float or ndarray
        ``E = sqrt(h_z**2 + h_x**2)``; the eigenvalues are ``-E`` and ``+E``.
    ground, excited : ndarray
        Unit eigenvectors with the component index first (shape ``(2, ...)``).
        Both have a real, non-negative first component.
    """
    k = _check_wavevector(k)
    hz, hx = mode_field_coefficients(k, g)
    energy = np.hypot(hz, hx)
    # half-angle form stays accurate when |h_z| >> h_x, unlike (h_x, E - h_z)
    half = 0.5 * np.arctan2(hx, hz)
    cos_half, sin_half = np.cos(half), np.sin(half)
    ground = np.array([sin_half, -cos_half])
    excited = np.array([cos_half, sin_half])
    return energy, ground, excited
