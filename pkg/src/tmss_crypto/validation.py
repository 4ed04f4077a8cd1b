"""Cross-checks between the Gaussian engine, the Fock oracle and the closed forms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import attacks, fock, gaussian
from .measurement import LOSetting, combined_variance, lossy_combined_variance

S_GRID = (0.2, 0.5, 1.0, 1.2)
ETA_GRID = (0.0, 0.25, 0.5, 0.93, 1.0)
PHASE_PAIRS = tuple((k * math.pi / 4, (3 * k % 8) * math.pi / 8) for k in range(8))


@dataclass
class Check:
    name: str
    max_deviation: float
    tolerance: float

    @property
    def passed(self):
        return bool(self.max_deviation <= self.tolerance)

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name:<48} max dev {self.max_deviation:.3e}  (tol {self.tolerance:.0e})"


def relative_deviation(a, b, floor=1e-9):
    """Elementwise relative deviation; entries with ``|b| <= floor`` compare absolutely."""
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    scale = np.where(np.abs(b) > floor, np.abs(b), 1.0)
    return float(np.max(np.abs(a - b) / scale))


def fock_state(s, theta=0.0, tail_tol=fock.DEFAULT_TAIL_TOL):
    return fock.tmss_fock(s, theta, fock.cutoff_for(s, tail_tol), tail_tol)


def gaussian_vs_fock(s_grid=S_GRID, eta_grid=ETA_GRID, phases=PHASE_PAIRS, theta=0.0):
    """Worst relative deviation of quadrature means and covariances over the grid."""
    worst = 0.0
    for s in s_grid:
        params = gaussian.SqueezeParams(s, theta)
        psi = fock_state(s, theta)
        for eta in eta_grid:
            g_state = gaussian.loss_channel(gaussian.tmss(params), 1, eta)
            f_state = psi if eta == 1.0 else fock.apply_loss_fock(psi, 1, eta)
            for chis in phases:
                gm, gc = gaussian.quadrature_moments(g_state, (0, 1), chis)
                fm, fc = fock.quadrature_moments(f_state, chis)
                worst = max(worst, relative_deviation(gm, fm), relative_deviation(gc, fc))
    return worst


def closed_form_vs_engines(s_grid=S_GRID, eta_grid=ETA_GRID, phases=PHASE_PAIRS):
    """Worst deviation of the lossy variance law from the Gaussian engine."""
    worst = 0.0
    for s in s_grid:
        params = gaussian.SqueezeParams(s)
        for eta in eta_grid:
            state = gaussian.loss_channel(gaussian.tmss(params), 1, eta)
            for chi1, chi2 in phases:
                lo1, lo2 = LOSetting(chi1), LOSetting(chi2)
                expected = lossy_combined_variance(params, lo1, lo2, eta)
                got = gaussian.sum_quadrature_variance(state, (0, 1), (chi1, chi2))
                worst = max(worst, relative_deviation(got, expected))
                if eta == 1.0:
                    worst = max(worst, relative_deviation(combined_variance(params, lo1, lo2), expected))
    return worst


def symplectic_deviation(s_grid=S_GRID, thetas=(0.0, 0.7, 2.5), phis=(0.0, 1.1, math.pi)):
    omega2 = gaussian.symplectic_form(2)
    omega1 = gaussian.symplectic_form(1)
    worst = 0.0
    for s in s_grid:
        for theta in thetas:
            S = gaussian.two_mode_squeeze_symplectic(gaussian.SqueezeParams(s, theta))
            worst = max(worst, float(np.max(np.abs(S @ omega2 @ S.T - omega2))))
    for phi in phis:
        R = gaussian.rotation(phi)
        worst = max(worst, float(np.max(np.abs(R @ omega1 @ R.T - omega1))))
    return worst


def loss_composition_deviation(s_grid=S_GRID, pairs=((0.9, 0.5), (0.25, 0.93), (1.0, 0.3), (0.0, 0.7))):
    worst = 0.0
    for s in s_grid:
        state = gaussian.tmss(gaussian.SqueezeParams(s, 0.4))
        for e1, e2 in pairs:
            twice = gaussian.loss_channel(gaussian.loss_channel(state, 1, e1), 1, e2)
            once = gaussian.loss_channel(state, 1, e1 * e2)
            worst = max(worst, float(np.max(np.abs(twice.cov - once.cov))))
    return worst


def phase_blindness_deviation(s_grid=S_GRID, thetas=(0.0, 0.9, 2.0, math.pi, 5.5)):
    """Max matrix-norm difference of single-mode reduced states across squeezing phases."""
    worst = 0.0
    for s in s_grid:
        ref = [fock.reduced_density(fock_state(s, thetas[0]), m).rho for m in (0, 1)]
        for theta in thetas[1:]:
            for m in (0, 1):
                rho = fock.reduced_density(fock_state(s, theta), m).rho
                worst = max(worst, float(np.linalg.norm(rho - ref[m], 2)))
    return worst


def thermal_deviation(s_grid=S_GRID):
    worst = 0.0
    for s in s_grid:
        psi = fock_state(s)
        p = fock.reduced_density(psi, 0).populations()
        q = fock.thermal_populations(math.sinh(s) ** 2, psi.cutoff)
        worst = max(worst, float(np.max(np.abs(p - q))))
    return worst


def snr_identity_deviation(s_grid=np.linspace(0.0, 1.2, 13), eta_grid=np.linspace(0.0, 1.0, 21)):
    worst = 0.0
    for s in s_grid:
        for eta in eta_grid:
            v_min, v_max = attacks.variance_levels(float(s), float(eta))
            worst = max(worst, abs(attacks.snr(float(s), float(eta)) - (v_max - v_min) / v_min))
    return worst


def run_checks():
    return [
        Check("gaussian vs fock moments (relative)", gaussian_vs_fock(), 1e-6),
        Check("closed-form variance vs gaussian (relative)", closed_form_vs_engines(), 1e-12),
        Check("symplectic form preserved", symplectic_deviation(), 1e-12),
        Check("loss composition", loss_composition_deviation(), 1e-12),
        Check("reduced state phase blindness (2-norm)", phase_blindness_deviation(), 1e-12),
        Check("reduced state is thermal", thermal_deviation(), 1e-12),
        Check("SNR closed form = (Vmax-Vmin)/Vmin", snr_identity_deviation(), 1e-12),
    ]
