"""Eavesdropper models, their analytic signatures, and the security verdict.

The excess-noise scenario is a stand-in for quantum attacks such as an
optical tap or a QND measurement: Gaussian noise injected along one
quadrature of Bob's mode. Bob only ever reads ``x_chi2``, so the attack shows
up in the check statistics in proportion to ``cos^2(phi - chi2)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import gaussian
from .errors import CalibrationError, InvalidArgument
from .measurement import LOSetting, lossy_combined_variance

REPORT_VERSION = 1
DB = 10.0 / math.log(10.0)

ATTACK_KINDS = ("none", "intercept_resend", "partial_tap", "excess_noise")


@dataclass(frozen=True)
class AttackScenario:
    """What Eve does to Bob's mode.

    Only the fields of the chosen ``kind`` are used:
    ``s_eve`` for intercept-resend (``None`` = same squeezing as the source),
    ``eta`` and ``eve_measures`` for a partial tap, ``epsilon`` and ``phi``
    for excess noise.
    """

    kind: str = "none"
    s_eve: float | None = None
    eta: float = 1.0
    eve_measures: bool = True
    epsilon: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise InvalidArgument(f"unknown attack kind {self.kind!r}")
        if self.kind == "intercept_resend" and self.s_eve is not None:
            if not math.isfinite(self.s_eve) or self.s_eve < 0:
                raise InvalidArgument("s_eve must be finite and >= 0")
        if self.kind == "partial_tap" and not 0.0 < self.eta < 1.0:
            raise InvalidArgument(f"tap transmissivity must lie in (0, 1), got {self.eta}")
        if self.kind == "excess_noise":
            if not math.isfinite(self.epsilon) or self.epsilon < 0:
                raise InvalidArgument("excess noise must be finite and >= 0")
            if not math.isfinite(self.phi):
                raise InvalidArgument("noise quadrature angle must be finite")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def intercept_resend(cls, s_eve=None):
        return cls("intercept_resend", s_eve=s_eve)

    @classmethod
    def partial_tap(cls, eta, eve_measures=True):
        return cls("partial_tap", eta=eta, eve_measures=eve_measures)

    @classmethod
    def excess_noise(cls, epsilon, phi=0.0):
        return cls("excess_noise", epsilon=epsilon, phi=phi)

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "intercept_resend":
            out["s_eve"] = self.s_eve
        elif self.kind == "partial_tap":
            out.update(eta=self.eta, eve_measures=self.eve_measures)
        elif self.kind == "excess_noise":
            out.update(epsilon=self.epsilon, phi=self.phi)
        return out

    @property
    def eve_keeps_mode(self):
        return self.kind == "intercept_resend" or (self.kind == "partial_tap" and self.eve_measures)


def parse_attack(spec):
    """Parse ``none``, ``intercept-resend[:s_eve]``, ``tap:eta`` or ``noise:epsilon[:phi]``."""
    parts = spec.strip().split(":")
    name, args = parts[0].lower(), parts[1:]
    try:
        values = [float(a) for a in args]
    except ValueError:
        raise InvalidArgument(f"non-numeric attack parameter in {spec!r}") from None
    if name == "none" and not values:
        return AttackScenario.none()
    if name == "intercept-resend" and len(values) <= 1:
        return AttackScenario.intercept_resend(values[0] if values else None)
    if name == "tap" and len(values) == 1:
        return AttackScenario.partial_tap(values[0])
    if name == "noise" and len(values) in (1, 2):
        return AttackScenario.excess_noise(*values)
    raise InvalidArgument(
        f"bad attack spec {spec!r}; expected none, intercept-resend[:s_eve], tap:eta or noise:epsilon[:phi]"
    )


@dataclass
class EveRecord:
    """Eve's homodyne samples (one array per slot) and, optionally, her bit guesses."""

    samples: dict = field(default_factory=dict)
    lo_phase: float = 0.0
    bit_estimates: dict | None = None


def apply_attack(state, scenario, rng_seed=None, bob_mode=1, s_source=None):
    """Apply ``scenario`` to ``bob_mode``.

    Returns ``(state, eve_mode)``. When Eve keeps a mode (tap with
    ``eve_measures``, or the intercepted original in intercept-resend) it is
    appended as the last mode and ``eve_mode`` is its index, otherwise ``None``.
    For intercept-resend, Bob's mode is replaced by one half of a fresh
    two-mode squeezed state whose partner Eve discards, so it carries no
    correlation with Alice. ``s_source`` is the squeezing Eve infers from the
    single-mode noise when ``scenario.s_eve`` is unset.
    """
    if scenario.kind == "none":
        return state, None
    if scenario.kind == "partial_tap":
        if scenario.eve_measures:
            return gaussian.tap_channel(state, bob_mode, scenario.eta)
        return gaussian.loss_channel(state, bob_mode, scenario.eta), None
    if scenario.kind == "excess_noise":
        return gaussian.add_quadrature_noise(state, bob_mode, scenario.epsilon, scenario.phi), None

    s_eve = scenario.s_eve if scenario.s_eve is not None else s_source
    if s_eve is None:
        raise InvalidArgument("intercept-resend needs s_eve or the source squeezing")
    theta_eve = np.random.default_rng(rng_seed).uniform(0.0, gaussian.TWO_PI)
    resent = gaussian.tmss(gaussian.SqueezeParams(s_eve, theta_eve)).reduced([1])
    n = state.n_modes
    combined = gaussian.tensor(state, resent)
    # Bob's slot refilled with the resent mode, the intercepted original moved last
    perm = [n if m == bob_mode else m for m in range(n)] + [bob_mode]
    return combined.reduced(perm), n


def eve_combined_levels(s, scenario):
    """Eve's predicted (bit 0, bit 1) combined variances and her LO offset from Bob's."""
    params = gaussian.SqueezeParams(s)
    if scenario.kind == "partial_tap":
        # the tapped port carries the correlation with the opposite sign
        eta_eve, offset = 1.0 - scenario.eta, math.pi
    elif scenario.kind == "intercept_resend":
        eta_eve, offset = 1.0, 0.0
    else:
        raise InvalidArgument(f"Eve holds no mode under {scenario.kind!r}")
    lo = LOSetting(0.0)
    return (
        lossy_combined_variance(params, lo, LOSetting(0.0), eta_eve),
        lossy_combined_variance(params, lo, LOSetting(math.pi), eta_eve),
        offset,
    )


def eve_estimate_bits(eve_record, alice_public, s, scenario):
    """Combine Eve's samples with Alice's public record and threshold like Bob does."""
    v0, v1, _ = eve_combined_levels(s, scenario)
    threshold = math.sqrt(v0 * v1)
    guesses = {}
    for sl in alice_public.slots:
        if sl.slot_id in eve_record.samples:
            v = float(np.var(sl.samples + eve_record.samples[sl.slot_id], ddof=1))
            guesses[sl.slot_id] = 0 if v < threshold else 1
    return guesses


def _params(params):
    return params if isinstance(params, gaussian.SqueezeParams) else gaussian.SqueezeParams(float(params))


def variance_levels(params, eta):
    """Minimum and maximum combined variance over LO phases for transmissivity ``eta``."""
    params = _params(params)
    if not 0.0 <= eta <= 1.0:
        raise InvalidArgument(f"transmissivity must lie in [0, 1], got {eta}")
    c, h = math.cosh(2 * params.s), math.sinh(2 * params.s)
    base = (1.0 - eta) + (1.0 + eta) * c
    swing = 2.0 * math.sqrt(eta) * h
    return base - swing, base + swing


def degree_of_squeezing(params, eta):
    """Measured squeezing in dB relative to the coherent-state level 2 (negative = squeezed)."""
    v_min, _ = variance_levels(params, eta)
    return 10.0 * math.log10(v_min / 2.0)


def snr(params, eta):
    """``(V_max - V_min) / V_min`` using the closed form ``4 sqrt(eta) sinh 2s / V_min``."""
    params = _params(params)
    v_min, _ = variance_levels(params, eta)
    return 4.0 * math.sqrt(eta) * math.sinh(2 * params.s) / v_min


def to_db(ratio):
    return 10.0 * math.log10(ratio) if ratio > 0 else -math.inf


@dataclass(frozen=True)
class Baseline:
    """Calibrated channel: variance levels and the squeezing/transmissivity they imply."""

    v_min: float
    v_max: float
    s_eff: float
    eta_est: float
    n_slots: int = 0

    @property
    def D_dB(self):
        return 10.0 * math.log10(self.v_min / 2.0)

    @property
    def SNR(self):
        return (self.v_max - self.v_min) / self.v_min

    @property
    def SNR_dB(self):
        return to_db(self.SNR)

    @property
    def threshold(self):
        return math.sqrt(self.v_min * self.v_max)

    @classmethod
    def from_model(cls, s, eta=1.0):
        v_min, v_max = variance_levels(s, eta)
        return cls(v_min, v_max, float(s), float(eta), 0)

    @classmethod
    def from_levels(cls, v_min, v_max, n_slots=0):
        """Invert the lossy variance law for ``(s, eta)`` given measured levels."""
        if not 0 < v_min < v_max:
            raise CalibrationError(f"calibration levels must satisfy 0 < V_min < V_max, got {v_min}, {v_max}")
        half_sum = 0.5 * (v_min + v_max)
        quarter_diff = 0.25 * (v_max - v_min)

        def mismatch(eta):
            h = quarter_diff / math.sqrt(eta)
            return (1.0 - eta) + (1.0 + eta) * math.sqrt(1.0 + h * h) - half_sum

        lo = 1e-12
        if mismatch(1.0) >= 0:
            eta = 1.0
        elif mismatch(lo) <= 0:
            eta = lo
        else:
            eta = brentq(mismatch, lo, 1.0, xtol=1e-14)
        s_eff = 0.5 * math.asinh(quarter_diff / math.sqrt(eta))
        return cls(v_min, v_max, s_eff, eta, int(n_slots))

    def to_dict(self):
        out = asdict(self)
        out.update(D_dB=self.D_dB, SNR=self.SNR, SNR_dB=self.SNR_dB)
        return out


@dataclass(frozen=True)
class CheckStatistics:
    """Pooled check-slot variances per disclosed bit value with their degrees of freedom."""

    v0: float | None
    v1: float | None
    dof0: int
    dof1: int

    @classmethod
    def from_slot_variances(cls, variances0, variances1, samples_per_slot):
        k = samples_per_slot - 1
        v0 = float(np.mean(variances0)) if len(variances0) else None
        v1 = float(np.mean(variances1)) if len(variances1) else None
        return cls(v0, v1, k * len(variances0), k * len(variances1))


@dataclass
class SecurityReport:
    baseline_D_dB: float
    measured_D_dB: float | None
    baseline_SNR_dB: float
    measured_SNR_dB: float | None
    n_check_slots: int
    verdict: str
    margins: dict
    stderr: dict

    @property
    def alarm(self):
        return self.verdict == "alarm"

    def to_dict(self):
        return {"version": REPORT_VERSION, **asdict(self)}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else float(x)


def security_verdict(baseline, stats, n_check_slots, tol_D=0.5, tol_SNR=0.5, z=3.0):
    """Compare check-slot statistics to the calibrated baseline.

    Alarm when the measured squeezing degree rises above the baseline by more
    than ``tol_D`` dB, or the SNR drops by more than ``tol_SNR`` dB. Each
    tolerance is widened by ``z`` standard errors of the chi-squared variance
    estimator, so small check samples do not raise false alarms. Margins are
    positive when inside tolerance.
    """
    if baseline is None:
        raise CalibrationError("no calibration baseline; run calibrate_channel first")
    if n_check_slots < 1 or (stats.v0 is None and stats.v1 is None):
        raise InvalidArgument("at least one check slot is required")

    margins, stderr = {}, {}
    alarm = False
    measured_D = measured_SNR_dB = None

    if stats.v0 is not None:
        measured_D = 10.0 * math.log10(stats.v0 / 2.0)
        stderr["D_dB"] = DB * math.sqrt(2.0 / stats.dof0)
        margins["D_dB"] = tol_D + z * stderr["D_dB"] - (measured_D - baseline.D_dB)
        alarm |= margins["D_dB"] < 0

    if stats.v0 is not None and stats.v1 is not None:
        ratio = stats.v1 / stats.v0
        rel = math.sqrt(2.0 / stats.dof0 + 2.0 / stats.dof1)
        if ratio > 1.0:
            measured_SNR_dB = to_db(ratio - 1.0)
            stderr["SNR_dB"] = DB * rel * ratio / (ratio - 1.0)
            margins["SNR_dB"] = tol_SNR + z * stderr["SNR_dB"] - (baseline.SNR_dB - measured_SNR_dB)
            alarm |= margins["SNR_dB"] < 0
        else:
            # no modulation contrast left at all
            stderr["SNR_dB"] = None
            margins["SNR_dB"] = None
            alarm = True
    elif stats.v0 is None:
        # only high-level check slots: compare the antisqueezed level directly
        dev = abs(10.0 * math.log10(stats.v1 / baseline.v_max))
        stderr["V_max_dB"] = DB * math.sqrt(2.0 / stats.dof1)
        margins["V_max_dB"] = tol_D + z * stderr["V_max_dB"] - dev
        alarm |= margins["V_max_dB"] < 0

    return SecurityReport(
        baseline_D_dB=baseline.D_dB,
        measured_D_dB=_finite_or_none(measured_D),
        baseline_SNR_dB=baseline.SNR_dB,
        measured_SNR_dB=_finite_or_none(measured_SNR_dB),
        n_check_slots=int(n_check_slots),
        verdict="alarm" if alarm else "secure",
        margins=margins,
        stderr=stderr,
    )
