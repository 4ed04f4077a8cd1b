"""Balanced homodyne detection at each station and classical photocurrent combination.

Variances are in shot-noise units with ``|E_LO| = 1``: a coherent state gives a
combined (summed) photocurrent variance of exactly 2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import gaussian
from .errors import InvalidArgument, UnsupportedConfiguration

RECORD_VERSION = 1


@dataclass(frozen=True)
class LOSetting:
    chi: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.chi):
            raise InvalidArgument("LO phase must be finite")
        if not self.amplitude > 0:
            raise InvalidArgument("LO amplitude must be positive")


def _equal_amplitude(lo1, lo2):
    if not math.isclose(lo1.amplitude, lo2.amplitude, rel_tol=1e-12):
        raise UnsupportedConfiguration(
            f"local oscillators must have equal amplitudes, got {lo1.amplitude} and {lo2.amplitude}"
        )
    return lo1.amplitude


def combined_variance(params, lo1, lo2):
    """Variance of the summed photocurrents for a lossless two-mode squeezed state."""
    amp = _equal_amplitude(lo1, lo2)
    half = 0.5 * (lo1.chi + lo2.chi - params.theta)
    return 2.0 * amp ** 2 * (
        math.exp(-2 * params.s) * math.cos(half) ** 2 + math.exp(2 * params.s) * math.sin(half) ** 2
    )


def lossy_combined_variance(params, lo1, lo2, eta):
    """Combined variance when only the second mode passes a channel of transmissivity ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise InvalidArgument(f"transmissivity must lie in [0, 1], got {eta}")
    amp = _equal_amplitude(lo1, lo2)
    c = math.cos(lo1.chi + lo2.chi - params.theta)
    root = math.sqrt(eta)
    mid = 0.5 * (1.0 + eta)
    return amp ** 2 * (
        (1.0 - eta)
        + math.exp(-2 * params.s) * (mid + root * c)
        + math.exp(2 * params.s) * (mid - root * c)
    )


def slot_rng(seed, slot_id, stream=0):
    """Generator for one time slot, derived from ``(seed, stream, slot_id)`` only.

    Independent of the order in which slots are processed.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream, slot_id)))


def _rng(rng_seed):
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def sample_quadratures(state, modes, los, n_samples, rng_seed, efficiency=1.0):
    """Joint draws of ``x_chi`` on several modes; returns an array of shape ``(n, len(modes))``.

    ``efficiency`` < 1 models a lossy detector as a loss channel in front of each
    homodyne; the default (ideal detector) leaves the state untouched.
    """
    if n_samples < 1:
        raise InvalidArgument("n_samples must be >= 1")
    if efficiency != 1.0:
        for m in modes:
            state = gaussian.loss_channel(state, m, efficiency)
    mean, cov = gaussian.quadrature_moments(state, modes, [lo.chi for lo in los])
    amps = np.array([lo.amplitude for lo in los])
    rng = _rng(rng_seed)
    draws = rng.multivariate_normal(mean, cov, size=n_samples, method="eigh")
    return draws * amps


def sample_homodyne(state, mode, lo, n_samples, rng_seed, efficiency=1.0):
    return sample_quadratures(state, (mode,), (lo,), n_samples, rng_seed, efficiency)[:, 0]


@dataclass
class RecordSlot:
    slot_id: int
    samples: np.ndarray
    lo_phase: float | None = None


@dataclass
class PhotocurrentRecord:
    """Per-slot homodyne samples of one station.

    ``lo_phase`` is kept only in the owner's private copy; :meth:`public`
    and :meth:`to_public_json` strip it.
    """

    slots: list = field(default_factory=list)

    def __post_init__(self):
        counts = {len(sl.samples) for sl in self.slots}
        if len(counts) > 1:
            raise InvalidArgument("all slots of a record must hold the same number of samples")

    @property
    def samples_per_slot(self):
        return len(self.slots[0].samples) if self.slots else 0

    def slot_ids(self):
        return [sl.slot_id for sl in self.slots]

    def select(self, slot_ids):
        wanted = set(slot_ids)
        return PhotocurrentRecord([sl for sl in self.slots if sl.slot_id in wanted])

    def public(self):
        return PhotocurrentRecord([RecordSlot(sl.slot_id, sl.samples) for sl in self.slots])

    def to_public_dict(self):
        return {
            "version": RECORD_VERSION,
            "slot_count": len(self.slots),
            "samples_per_slot": self.samples_per_slot,
            "slots": [
                {"slot_id": int(sl.slot_id), "samples": [float(v) for v in sl.samples]}
                for sl in self.slots
            ],
        }

    def to_public_json(self):
        return json.dumps(self.to_public_dict())

    @classmethod
    def from_public_dict(cls, data):
        if data.get("version") != RECORD_VERSION:
            raise InvalidArgument(f"unsupported record version {data.get('version')!r}")
        slots = [RecordSlot(int(d["slot_id"]), np.array(d["samples"], dtype=float)) for d in data["slots"]]
        record = cls(slots)
        if len(slots) != data["slot_count"] or (slots and record.samples_per_slot != data["samples_per_slot"]):
            raise InvalidArgument("record header does not match its slots")
        return record

    @classmethod
    def from_public_json(cls, text):
        return cls.from_public_dict(json.loads(text))


def correlated_sample_pair(state, lo1, lo2, n_samples, rng_seed, modes=(0, 1), slot_id=0):
    """Draw one slot of joint homodyne data on two modes as a pair of records."""
    if state.n_modes < 2:
        raise InvalidArgument("a two-mode (or larger) state is required")
    draws = sample_quadratures(state, modes, (lo1, lo2), n_samples, rng_seed)
    return (
        PhotocurrentRecord([RecordSlot(slot_id, draws[:, 0], lo1.chi)]),
        PhotocurrentRecord([RecordSlot(slot_id, draws[:, 1], lo2.chi)]),
    )


def combine_records(a, b):
    """Per-slot sum of two records, returned as a list of ``(slot_id, samples)``."""
    if a.slot_ids() != b.slot_ids():
        raise InvalidArgument("records do not share the same slot structure")
    if a.samples_per_slot != b.samples_per_slot:
        raise InvalidArgument("records hold different numbers of samples per slot")
    return [(sa.slot_id, sa.samples + sb.samples) for sa, sb in zip(a.slots, b.slots)]


def sample_variance(samples):
    return float(np.var(samples, ddof=1))
