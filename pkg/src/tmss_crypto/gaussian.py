"""Gaussian-state engine based on first and second quadrature moments.

Conventions used throughout the package:

* quadratures ``x = a + a^dag`` and ``p = -i (a - a^dag)``, so the vacuum has
  ``Var(x) = Var(p) = 1``;
* moments are ordered ``(x1, p1, x2, p2, ...)``;
* a coherent amplitude ``alpha`` shifts the mean to ``(2 Re alpha, 2 Im alpha)``;
* the rotated quadrature read out by a local oscillator of phase ``chi`` is
  ``x_chi = a e^{-i chi} + a^dag e^{i chi} = cos(chi) x + sin(chi) p``.

With the two-mode squeezer ``exp(conj(zeta) a1 a2 - zeta a1^dag a2^dag)`` and
``zeta = s e^{i theta}``, the variance of ``x1_chi1 + x2_chi2`` is
``2 [cosh 2s - sinh 2s cos(chi1 + chi2 - theta)]``, i.e. the minimum sits at
``chi1 + chi2 = theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SqueezeParams:
    """Squeezing magnitude ``s`` and phase ``theta`` (reduced modulo 2 pi)."""

    s: float
    theta: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.s) or self.s < 0:
            raise InvalidArgument(f"squeezing magnitude must be finite and >= 0, got {self.s}")
        if not math.isfinite(self.theta):
            raise InvalidArgument(f"squeezing phase must be finite, got {self.theta}")
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)
        object.__setattr__(self, "s", float(self.s))


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Immutable n-mode Gaussian state.

    Attributes:
        mean: length ``2n`` vector of quadrature means.
        cov: ``2n x 2n`` symmetric covariance matrix (vacuum = identity).
    """

    mean: np.ndarray
    cov: np.ndarray
    n_modes: int = field(init=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.cov, dtype=float)
        if mean.ndim != 1 or mean.size % 2 or mean.size == 0:
            raise InvalidArgument("mean must be a non-empty vector of even length")
        if cov.shape != (mean.size, mean.size):
            raise InvalidArgument(f"cov shape {cov.shape} does not match mean length {mean.size}")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise InvalidArgument("covariance matrix is not symmetric")
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "n_modes", mean.size // 2)

    def block(self, i, j=None):
        """The 2x2 covariance block between modes ``i`` and ``j`` (default ``j = i``)."""
        j = i if j is None else j
        return self.cov[2 * i:2 * i + 2, 2 * j:2 * j + 2]

    def reduced(self, modes):
        """Marginal state of the listed modes, in the listed order."""
        idx = _quadrature_indices(self, modes)
        return GaussianState(self.mean[idx], self.cov[np.ix_(idx, idx)])

    def symplectic_eigenvalues(self):
        """Symplectic spectrum of the covariance matrix (all >= 1 for a physical state)."""
        omega = symplectic_form(self.n_modes)
        ev = np.linalg.eigvals(1j * omega @ self.cov)
        return np.sort(np.abs(ev.real))[::2]

    def is_physical(self, tol=1e-9):
        return bool(np.all(self.symplectic_eigenvalues() >= 1.0 - tol))

    def purity(self):
        """``1 / sqrt(det cov)``; equals 1 for pure states in this convention."""
        return 1.0 / math.sqrt(np.linalg.det(self.cov))


def symplectic_form(n_modes):
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def rotation(phi):
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, s], [-s, c]])


def quadrature_vector(chi):
    """Row vector ``u`` with ``x_chi = u . (x, p)``."""
    return np.array([math.cos(chi), math.sin(chi)])


def _check_mode(state, mode):
    if not isinstance(mode, (int, np.integer)) or not 0 <= mode < state.n_modes:
        raise InvalidArgument(f"mode index {mode!r} out of range for {state.n_modes}-mode state")


def _quadrature_indices(state, modes):
    idx = []
    for m in modes:
        _check_mode(state, m)
        idx.extend((2 * m, 2 * m + 1))
    return np.array(idx, dtype=int)


def _embed(state, modes, local):
    """Lift a symplectic matrix acting on ``modes`` to the full phase space."""
    S = np.eye(2 * state.n_modes)
    idx = _quadrature_indices(state, modes)
    S[np.ix_(idx, idx)] = local
    return S


def apply_symplectic(state, S, d=None):
    """Return the state with moments ``S mean + d`` and ``S cov S^T``."""
    mean = S @ state.mean
    if d is not None:
        mean = mean + d
    return GaussianState(mean, S @ state.cov @ S.T)


def vacuum(n_modes):
    if not isinstance(n_modes, (int, np.integer)) or n_modes < 1:
        raise InvalidArgument(f"n_modes must be a positive integer, got {n_modes!r}")
    return GaussianState(np.zeros(2 * n_modes), np.eye(2 * n_modes))


def thermal(mean_photons):
    """Single-mode thermal state with quadrature variance ``2 n + 1``."""
    if mean_photons < 0:
        raise InvalidArgument("mean photon number must be >= 0")
    return GaussianState(np.zeros(2), (2.0 * mean_photons + 1.0) * np.eye(2))


def tensor(*states):
    """Direct sum of independent Gaussian states (mode order preserved)."""
    mean = np.concatenate([st.mean for st in states])
    cov = np.zeros((mean.size, mean.size))
    k = 0
    for st in states:
        n = st.mean.size
        cov[k:k + n, k:k + n] = st.cov
        k += n
    return GaussianState(mean, cov)


def two_mode_squeeze_symplectic(params):
    """4x4 symplectic matrix of the two-mode squeezer on ``(x1, p1, x2, p2)``.

    Heisenberg action: ``a1 -> cosh(s) a1 - e^{i theta} sinh(s) a2^dag`` and the
    same with 1 and 2 exchanged.
    """
    ch, sh = math.cosh(params.s), math.sinh(params.s)
    ct, st = math.cos(params.theta), math.sin(params.theta)
    off = -sh * np.array([[ct, st], [st, -ct]])
    S = np.zeros((4, 4))
    S[:2, :2] = S[2:, 2:] = ch * np.eye(2)
    S[:2, 2:] = S[2:, :2] = off
    return S


def two_mode_squeeze(state, mode_a, mode_b, params):
    if mode_a == mode_b:
        raise InvalidArgument("two-mode squeezing needs two distinct modes")
    S = _embed(state, (mode_a, mode_b), two_mode_squeeze_symplectic(params))
    return apply_symplectic(state, S)


def tmss(params, alpha=0j, beta=0j):
    """Displaced two-mode squeezed vacuum ``D1(alpha) D2(beta) S12(zeta)|0,0>``."""
    state = two_mode_squeeze(vacuum(2), 0, 1, params)
    if alpha:
        state = displace(state, 0, alpha.real, alpha.imag)
    if beta:
        state = displace(state, 1, beta.real, beta.imag)
    return state


def phase_rotate(state, mode, phi):
    """Rotate ``mode`` by ``phi`` (``a -> a e^{-i phi}``).

    Measuring ``x_chi`` afterwards is the same as measuring ``x_{chi + phi}``
    on the input, i.e. rotating a mode is equivalent to shifting its LO phase.
    """
    _check_mode(state, mode)
    return apply_symplectic(state, _embed(state, (mode,), rotation(phi)))


def displace(state, mode, re, im):
    _check_mode(state, mode)
    d = np.zeros(2 * state.n_modes)
    d[2 * mode] = 2.0 * re
    d[2 * mode + 1] = 2.0 * im
    return GaussianState(state.mean + d, state.cov)


def _check_eta(eta):
    if not (0.0 <= eta <= 1.0):
        raise InvalidArgument(f"transmissivity must lie in [0, 1], got {eta}")


def loss_channel(state, mode, eta):
    """Pure-loss channel: beamsplitter of transmissivity ``eta`` with a vacuum ancilla."""
    _check_mode(state, mode)
    _check_eta(eta)
    t = math.sqrt(eta)
    scale = np.ones(2 * state.n_modes)
    scale[2 * mode:2 * mode + 2] = t
    cov = state.cov * np.outer(scale, scale)
    cov[2 * mode:2 * mode + 2, 2 * mode:2 * mode + 2] += (1.0 - eta) * np.eye(2)
    return GaussianState(state.mean * scale, cov)


def beamsplitter_symplectic(eta):
    """``b' = sqrt(eta) b + sqrt(1-eta) v``, ``v' = -sqrt(1-eta) b + sqrt(eta) v``."""
    t, r = math.sqrt(eta), math.sqrt(1.0 - eta)
    return np.block([[t * np.eye(2), r * np.eye(2)], [-r * np.eye(2), t * np.eye(2)]])


def tap_channel(state, mode, eta):
    """Split off a fraction ``1 - eta`` of ``mode`` into a new last mode.

    Returns ``(state, tap_mode)`` where ``state`` has ``n_modes + 1`` modes and
    ``tap_mode`` is the index of the tapped output. Discarding that mode gives
    exactly :func:`loss_channel`.
    """
    _check_mode(state, mode)
    if not (0.0 < eta < 1.0):
        raise InvalidArgument(f"tap transmissivity must lie strictly inside (0, 1), got {eta}")
    extended = tensor(state, vacuum(1))
    tap_mode = state.n_modes
    S = _embed(extended, (mode, tap_mode), beamsplitter_symplectic(eta))
    return apply_symplectic(extended, S), tap_mode


def add_quadrature_noise(state, mode, epsilon, phi):
    """Add classical Gaussian noise of variance ``epsilon`` along quadrature ``x_phi``."""
    _check_mode(state, mode)
    if not math.isfinite(epsilon) or epsilon < 0:
        raise InvalidArgument(f"noise variance must be >= 0, got {epsilon}")
    u = quadrature_vector(phi)
    cov = state.cov.copy()
    cov[2 * mode:2 * mode + 2, 2 * mode:2 * mode + 2] += epsilon * np.outer(u, u)
    return GaussianState(state.mean, cov)


def quadrature_moments(state, modes, phases):
    """Mean vector and covariance of ``(x_{phases[0]}^{(modes[0])}, ...)``."""
    if len(modes) != len(phases):
        raise InvalidArgument("need one LO phase per mode")
    idx = _quadrature_indices(state, modes)
    U = np.zeros((len(modes), idx.size))
    for k, chi in enumerate(phases):
        U[k, 2 * k:2 * k + 2] = quadrature_vector(chi)
    sub_mean = state.mean[idx]
    sub_cov = state.cov[np.ix_(idx, idx)]
    return U @ sub_mean, U @ sub_cov @ U.T


def sum_quadrature_variance(state, modes, phases):
    """Variance of the summed photocurrent ``sum_k x_{phases[k]}^{(modes[k])}``."""
    _, cov = quadrature_moments(state, modes, phases)
    return float(np.sum(cov))
