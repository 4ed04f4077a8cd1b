"""Truncated Fock-space oracle for the undisplaced two-mode squeezed vacuum.

Everything here is built from number-state amplitudes and ladder-operator
matrix elements only; nothing is imported from :mod:`tmss_crypto.gaussian`
so the two routes stay independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import InvalidArgument, TruncationError

DEFAULT_CUTOFF = 60
DEFAULT_TAIL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FockVector:
    """Pure two-mode state; ``amps[n1, n2]`` is the amplitude of ``|n1, n2>``."""

    amps: np.ndarray
    tail: float = 0.0

    @property
    def cutoff(self):
        return self.amps.shape[0] - 1

    def norm2(self):
        return float(np.vdot(self.amps, self.amps).real)


@dataclass(frozen=True, eq=False)
class FockMixture:
    """Two-mode mixed state as an ensemble ``rho = sum_k |phi_k><phi_k|``.

    ``branches[k]`` has the same ``(n1, n2)`` layout as :attr:`FockVector.amps`.
    Keeping the ensemble instead of the dense ``(N+1)^2 x (N+1)^2`` matrix is
    exact and keeps memory at ``O(K (N+1)^2)``.
    """

    branches: np.ndarray
    tail: float = 0.0

    @property
    def cutoff(self):
        return self.branches.shape[1] - 1

    def trace(self):
        return float(np.sum(np.abs(self.branches) ** 2))

    def reduced_density(self, keep_mode):
        if keep_mode == 0:
            rho = np.einsum("kam,kbm->ab", self.branches, self.branches.conj())
        elif keep_mode == 1:
            rho = np.einsum("kma,kmb->ab", self.branches, self.branches.conj())
        else:
            raise InvalidArgument("keep_mode must be 0 or 1")
        return FockDensity(rho, self.tail)


@dataclass(frozen=True, eq=False)
class FockDensity:
    """Single-mode density matrix in the number basis."""

    rho: np.ndarray
    tail: float = 0.0

    @property
    def cutoff(self):
        return self.rho.shape[0] - 1

    def populations(self):
        return np.diag(self.rho).real.copy()

    def mean_photon_number(self):
        return float(np.arange(self.rho.shape[0]) @ self.populations())


def annihilation(dim):
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)


def truncation_tail(s, cutoff):
    """Probability lost by keeping photon numbers ``0..cutoff``: ``tanh(s)^(2(N+1))``."""
    return math.tanh(s) ** (2 * (cutoff + 1))


def cutoff_for(s, tail_tol=DEFAULT_TAIL_TOL, minimum=DEFAULT_CUTOFF):
    """Smallest cutoff (at least ``minimum``) whose truncation tail is below ``tail_tol``."""
    t = math.tanh(s)
    if t == 0.0:
        return minimum
    n = math.ceil(math.log(tail_tol) / (2 * math.log(t))) - 1
    return max(minimum, n)


def tmss_fock(s, theta=0.0, cutoff=DEFAULT_CUTOFF, tail_tol=DEFAULT_TAIL_TOL):
    """Number-state expansion ``(1/cosh s) sum_n (-e^{i theta} tanh s)^n |n, n>``."""
    if cutoff < 1:
        raise InvalidArgument("cutoff must be >= 1")
    if s < 0 or not math.isfinite(s):
        raise InvalidArgument("squeezing magnitude must be finite and >= 0")
    tail = truncation_tail(s, cutoff)
    if tail > tail_tol:
        raise TruncationError(
            f"cutoff {cutoff} leaves tail {tail:.3e} > {tail_tol:.1e} at s={s}; "
            f"use cutoff >= {cutoff_for(s, tail_tol, minimum=1)}"
        )
    n = np.arange(cutoff + 1)
    ratio = -np.exp(1j * theta) * math.tanh(s)
    amps = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    amps[n, n] = ratio ** n / math.cosh(s)
    return FockVector(amps, tail)


def reduced_density(state, keep_mode):
    """Partial trace of a pure two-mode state over the other mode."""
    psi = state.amps
    if keep_mode == 0:
        rho = psi @ psi.conj().T
    elif keep_mode == 1:
        rho = psi.T @ psi.conj()
    else:
        raise InvalidArgument("keep_mode must be 0 or 1")
    return FockDensity(rho, state.tail)


def thermal_populations(mean_photons, cutoff):
    n = np.arange(cutoff + 1)
    return mean_photons ** n / (mean_photons + 1.0) ** (n + 1)


def beamsplitter_vacuum_amplitudes(cutoff, eta):
    """``T[k, m, n] = (<m| <k|) U_BS (|n> |0>)`` for a vacuum ancilla.

    The output ancilla holds ``k`` photons, the transmitted mode ``m = n - k``:
    ``sqrt(C(n, k)) sqrt(eta)^(n-k) (-sqrt(1-eta))^k``.
    """
    if not 0.0 <= eta <= 1.0:
        raise InvalidArgument(f"transmissivity must lie in [0, 1], got {eta}")
    dim = cutoff + 1
    T = np.zeros((dim, dim, dim))
    t, r = math.sqrt(eta), -math.sqrt(1.0 - eta)
    for n in range(dim):
        for k in range(n + 1):
            log_binom = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
            T[k, n - k, n] = math.exp(0.5 * log_binom) * t ** (n - k) * r ** k
    return T


def apply_loss_fock(state, mode, eta):
    """Send ``mode`` through a beamsplitter with a vacuum ancilla and trace the ancilla out."""
    if mode not in (0, 1):
        raise InvalidArgument("mode must be 0 or 1")
    T = beamsplitter_vacuum_amplitudes(state.cutoff, eta)
    if mode == 1:
        branches = np.einsum("kmn,an->kam", T, state.amps)
    else:
        branches = np.einsum("kmn,nb->kmb", T, state.amps)
    keep = np.sum(np.abs(branches) ** 2, axis=(1, 2)) > 0
    return FockMixture(branches[keep], state.tail)


def tap_fock(state, mode, eta):
    """Like :func:`apply_loss_fock` but also return the ancilla's (Eve's) reduced density."""
    T = beamsplitter_vacuum_amplitudes(state.cutoff, eta)
    if mode == 1:
        joint = np.einsum("kmn,an->kam", T, state.amps)
    elif mode == 0:
        joint = np.einsum("kmn,nb->kmb", T, state.amps)
    else:
        raise InvalidArgument("mode must be 0 or 1")
    eve = np.einsum("kab,lab->kl", joint, joint.conj())
    return FockMixture(joint, state.tail), FockDensity(eve, state.tail)


def _padded(array, dim, axes):
    pad = [(0, 0)] * array.ndim
    for ax in axes:
        pad[ax] = (0, dim - array.shape[ax])
    return np.pad(array, pad)


def _rotated_quadrature(dim, chi):
    a = annihilation(dim)
    return a * np.exp(-1j * chi) + a.conj().T * np.exp(1j * chi)


def quadrature_moments(state, mode_phases, tail_tol=DEFAULT_TAIL_TOL):
    """Means and 2x2 covariance of ``(x_chi1 on mode 1, x_chi2 on mode 2)``.

    Accepts a :class:`FockVector` or :class:`FockMixture`. The state is padded
    by one level before the ladder operators act, so the truncated operators
    introduce no error beyond the state's own truncation.
    """
    if state.tail > tail_tol:
        raise TruncationError(f"state truncation tail {state.tail:.3e} exceeds {tail_tol:.1e}")
    if isinstance(state, FockVector):
        branches = state.amps[None]
    elif isinstance(state, FockMixture):
        branches = state.branches
    else:
        raise InvalidArgument(f"unsupported state type {type(state).__name__}")
    dim = branches.shape[1] + 1
    psi = _padded(branches, dim, (1, 2))
    chi1, chi2 = mode_phases
    X1 = _rotated_quadrature(dim, chi1)
    X2 = _rotated_quadrature(dim, chi2)
    v1 = np.einsum("ab,kbc->kac", X1, psi)
    v2 = np.einsum("cb,kab->kac", X2, psi)
    norm = float(np.sum(np.abs(psi) ** 2))
    vecs = (v1, v2)
    means = np.array([np.vdot(psi, v).real for v in vecs]) / norm
    second = np.array([[np.vdot(u, v).real for v in vecs] for u in vecs]) / norm
    return means, second - np.outer(means, means)


def single_mode_quadrature_moments(density, chi):
    """Mean and variance of ``x_chi`` for a single-mode :class:`FockDensity`."""
    dim = density.rho.shape[0] + 1
    rho = _padded(density.rho, dim, (0, 1))
    X = _rotated_quadrature(dim, chi)
    norm = float(np.trace(rho).real)
    mean = float(np.trace(rho @ X).real) / norm
    second = float(np.trace(rho @ X @ X).real) / norm
    return mean, second - mean ** 2
