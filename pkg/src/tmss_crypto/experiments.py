"""Loss sweeps of the squeezing degree and SNR, analytic and Monte-Carlo, as CSV rows."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import attacks, gaussian
from .attacks import DB
from .errors import InvalidArgument
from .measurement import LOSetting, sample_quadratures, slot_rng

CSV_COLUMNS = ("s", "eta", "loss", "D_dB", "SNR", "SNR_dB", "source", "mc_stderr_D", "mc_stderr_SNR")
DEFAULT_S_VALUES = (0.2, 0.5, 1.0)
KINDS = ("degree", "snr", "both")


@dataclass(frozen=True)
class LossGrid:
    """Grid over the loss ``1 - eta``; points are ``start + k * step`` up to ``stop``."""

    start: float = 0.0
    stop: float = 1.0
    step: float = 0.01

    def __post_init__(self):
        if not self.step > 0:
            raise InvalidArgument("grid step must be > 0")
        if not 0.0 <= self.start <= self.stop <= 1.0:
            raise InvalidArgument("loss grid must satisfy 0 <= start <= stop <= 1")

    def losses(self):
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9))
        # rounding keeps shared points bit-identical when the step is refined
        return [round(self.start + k * self.step, 12) for k in range(n + 1)]


@dataclass(frozen=True)
class SweepSpec:
    s_values: tuple = DEFAULT_S_VALUES
    grid: LossGrid = field(default_factory=LossGrid)
    outputs: str = "analytic"
    samples_per_slot: int = 200
    slots: int = 100
    seed: int = 0

    def __post_init__(self):
        if not len(self.s_values):
            raise InvalidArgument("s_values must be non-empty")
        for s in self.s_values:
            gaussian.SqueezeParams(s)
        if self.outputs not in ("analytic", "monte_carlo", "both"):
            raise InvalidArgument("outputs must be analytic, monte_carlo or both")
        if self.slots < 2 or self.samples_per_slot < 2:
            raise InvalidArgument("Monte-Carlo runs need >= 2 slots and >= 2 samples per slot")


@dataclass
class SweepRow:
    s: float
    eta: float
    loss: float
    D_dB: float | None
    SNR: float | None
    SNR_dB: float | None
    source: str
    mc_stderr_D: float | None = None
    mc_stderr_SNR: float | None = None


@dataclass
class SweepResult:
    rows: list

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(getattr(row, c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def select(self, source="analytic", s=None):
        return [r for r in self.rows if r.source == source and (s is None or r.s == s)]


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _analytic_row(s, loss, kind):
    eta = round(1.0 - loss, 12)
    D = attacks.degree_of_squeezing(s, eta) if kind in ("degree", "both") else None
    snr = attacks.snr(s, eta) if kind in ("snr", "both") else None
    snr_db = None if snr is None else attacks.to_db(snr)
    if snr_db is not None and not math.isfinite(snr_db):
        snr_db = None
    return SweepRow(s, eta, loss, D, snr, snr_db, "analytic")


def mc_levels(s, eta, slots, samples_per_slot, seed):
    """Monte-Carlo estimate of the two combined-variance levels.

    Half the slots are measured at the variance minimum, half at the maximum;
    returns pooled variances and their degrees of freedom.
    """
    state = gaussian.loss_channel(gaussian.tmss(gaussian.SqueezeParams(s)), 1, eta)
    pooled = {0: [], 1: []}
    for slot in range(slots):
        bit = slot % 2
        los = (LOSetting(math.pi * bit), LOSetting(0.0))
        draws = sample_quadratures(state, (0, 1), los, samples_per_slot, slot_rng(seed, slot))
        pooled[bit].append(np.var(draws.sum(axis=1), ddof=1))
    k = samples_per_slot - 1
    return (
        float(np.mean(pooled[0])), float(np.mean(pooled[1])),
        k * len(pooled[0]), k * len(pooled[1]),
    )


def _mc_row(s, loss, kind, spec, index):
    eta = round(1.0 - loss, 12)
    v0, v1, dof0, dof1 = mc_levels(s, eta, spec.slots, spec.samples_per_slot, [spec.seed, index])
    row = SweepRow(s, eta, loss, None, None, None, "mc")
    if kind in ("degree", "both"):
        row.D_dB = 10.0 * math.log10(v0 / 2.0)
        row.mc_stderr_D = DB * math.sqrt(2.0 / dof0)
    if kind in ("snr", "both"):
        # linear SNR = v1/v0 - 1, delta method on the log-ratio
        row.SNR = v1 / v0 - 1.0
        row.mc_stderr_SNR = (v1 / v0) * math.sqrt(2.0 / dof0 + 2.0 / dof1)
        row.SNR_dB = attacks.to_db(row.SNR) if row.SNR > 0 else None
    return row


def sweep(spec, kind="both"):
    """Rows ordered s-major, loss-minor; analytic rows before MC rows for each point."""
    if kind not in KINDS:
        raise InvalidArgument(f"kind must be one of {KINDS}")
    rows = []
    index = 0
    for s in spec.s_values:
        for loss in spec.grid.losses():
            if spec.outputs in ("analytic", "both"):
                rows.append(_analytic_row(float(s), loss, kind))
            if spec.outputs in ("monte_carlo", "both"):
                rows.append(_mc_row(float(s), loss, kind, spec, index))
            index += 1
    return SweepResult(rows)


def sweep_degree(spec):
    return sweep(spec, "degree")


def sweep_snr(spec):
    return sweep(spec, "snr")


def zero_crossing_eta(s):
    """Transmissivity where the minimum combined variance equals the coherent level 2."""
    if s <= 0:
        raise InvalidArgument("no crossing for s = 0 (D is identically 0)")
    return brentq(lambda eta: attacks.variance_levels(s, eta)[0] - 2.0, 0.0, 1.0, xtol=1e-14)


@dataclass
class HeadlineReport:
    D_lossless_dB: float
    D_tapped_dB: float
    delta_D_dB: float
    SNR_lossless_dB: float
    SNR_tapped_dB: float
    delta_SNR_dB: float
    passed: bool

    def lines(self):
        mark = "PASS" if self.passed else "FAIL"
        return [
            f"[{mark}] s=1, 7% interception: dD = {self.delta_D_dB:.3f} dB, dSNR = {self.delta_SNR_dB:.3f} dB",
            f"       D(eta=1) = {self.D_lossless_dB:.3f} dB, D(eta=0.93) = {self.D_tapped_dB:.3f} dB",
            f"       SNR(eta=1) = {self.SNR_lossless_dB:.3f} dB, SNR(eta=0.93) = {self.SNR_tapped_dB:.3f} dB",
        ]


def headline_check(s=1.0, eta=0.93, window=(0.8, 1.2)):
    """Loss of squeezing and SNR (in dB) caused by intercepting ``1 - eta`` of the mode."""
    d1, d2 = attacks.degree_of_squeezing(s, 1.0), attacks.degree_of_squeezing(s, eta)
    n1, n2 = attacks.to_db(attacks.snr(s, 1.0)), attacks.to_db(attacks.snr(s, eta))
    dd, dn = d2 - d1, n1 - n2
    lo, hi = window
    passed = lo <= dd <= hi and lo <= dn <= hi
    if s == 1.0:
        passed = passed and 8.5 <= abs(d1) <= 8.8
    return HeadlineReport(d1, d2, dd, n1, n2, dn, passed)
