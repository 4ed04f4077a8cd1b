"""Alice/Bob session: LO-phase bit encoding, variance decoding and check-bit verification.

Per time slot Alice prepares a fresh two-mode squeezed state, keeps mode 0 and
sends mode 1 to Bob. Bob always measures at the same LO phase; Alice picks
``chi1 = theta - chi_bob + pi * bit`` so bit 0 lands on the variance minimum
and bit 1 on the maximum. Neither record alone depends on the bit; the sum of
the two photocurrents does.

Session order is fixed: both parties measure, Alice discloses check slots,
Bob verifies against the calibrated baseline, and only then are the remaining
slots disclosed (always in key mode, only if secure in message mode).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import attacks, gaussian
from .attacks import AttackScenario, Baseline, CheckStatistics, EveRecord
from .errors import CalibrationError, InvalidArgument, ProtocolError
from .measurement import (
    LOSetting,
    PhotocurrentRecord,
    RecordSlot,
    combine_records,
    sample_quadratures,
    slot_rng,
)

TRANSCRIPT_VERSION = 1
THRESHOLD_MODES = ("geometric-mean", "likelihood-ratio")
BIT_PHASE = {0: 0.0, 1: math.pi}

# independent seed streams, so e.g. enabling theta hopping never shifts the samples
STREAM_SAMPLES = 0
STREAM_ATTACK = 1
STREAM_THETA = 2
STREAM_CALIBRATION = 3
STREAM_SCHEDULE = 4
STREAM_KEY = 5


@dataclass(frozen=True)
class ChannelModel:
    """Honest channel transmissivity between Alice and Bob."""

    eta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise InvalidArgument(f"channel transmissivity must lie in [0, 1], got {self.eta}")


@dataclass(frozen=True)
class ProtocolConfig:
    s: float = 1.0
    theta: float = 0.0
    samples_per_slot: int = 200
    bob_lo_phase: float = 0.0
    theta_modulation: bool = False
    decision_threshold_mode: str = "geometric-mean"
    check_bit_fraction: float = 0.25
    rng_seed: int = 0
    channel_eta: float = 1.0
    calibration_slots: int = 200
    tol_D: float = 0.5
    tol_SNR: float = 0.5
    confidence_z: float = 3.0
    detector_efficiency: float = 1.0

    def __post_init__(self):
        gaussian.SqueezeParams(self.s, self.theta)
        if int(self.samples_per_slot) != self.samples_per_slot or self.samples_per_slot < 2:
            raise InvalidArgument("samples_per_slot must be an integer >= 2")
        if self.decision_threshold_mode not in THRESHOLD_MODES:
            raise InvalidArgument(f"decision_threshold_mode must be one of {THRESHOLD_MODES}")
        if not 0.0 < self.check_bit_fraction < 1.0:
            raise InvalidArgument("check_bit_fraction must lie strictly inside (0, 1)")
        ChannelModel(self.channel_eta)
        if not 0.0 < self.detector_efficiency <= 1.0:
            raise InvalidArgument("detector_efficiency must lie in (0, 1]")
        if self.calibration_slots < 0:
            raise InvalidArgument("calibration_slots must be >= 0")
        if self.tol_D < 0 or self.tol_SNR < 0 or self.confidence_z < 0:
            raise InvalidArgument("tolerances must be >= 0")

    @property
    def squeeze(self):
        return gaussian.SqueezeParams(self.s, self.theta)

    @property
    def channel(self):
        return ChannelModel(self.channel_eta)

    def to_dict(self):
        return asdict(self)


@dataclass
class Encoded:
    """Output of :func:`alice_encode`. ``truth`` maps slot id to bit, theta and Alice's LO phase."""

    alice: PhotocurrentRecord
    bob: PhotocurrentRecord
    truth: dict
    eve: EveRecord | None = None


def _slot_theta(config, seed, slot_id):
    if config.theta_modulation:
        return float(slot_rng(seed, slot_id, STREAM_THETA).uniform(0.0, 2 * math.pi))
    return config.squeeze.theta


def prepare_slot_state(config, theta, attack=None, seed=0, slot_id=0):
    """Source state for one slot after the attack and the honest channel.

    Returns ``(state, eve_mode)``; Alice holds mode 0 and Bob mode 1.
    """
    state = gaussian.tmss(gaussian.SqueezeParams(config.s, theta))
    eve_mode = None
    if attack is not None and attack.kind != "none":
        state, eve_mode = attacks.apply_attack(
            state, attack, rng_seed=slot_rng(seed, slot_id, STREAM_ATTACK), bob_mode=1, s_source=config.s
        )
    if config.channel_eta < 1.0:
        state = gaussian.loss_channel(state, 1, config.channel_eta)
    if config.detector_efficiency < 1.0:
        state = gaussian.loss_channel(state, 0, config.detector_efficiency)
        state = gaussian.loss_channel(state, 1, config.detector_efficiency)
    return state, eve_mode


def alice_encode(bits, config, attack=None, seed=None, slot_ids=None):
    """Prepare, transmit and measure one slot per bit.

    Sampling for slot ``k`` depends only on ``(seed, k)``.
    """
    bits = [int(b) for b in bits]
    if not bits:
        raise InvalidArgument("bits must be non-empty")
    if any(b not in (0, 1) for b in bits):
        raise InvalidArgument("bits must be 0 or 1")
    seed = config.rng_seed if seed is None else seed
    slot_ids = list(range(len(bits))) if slot_ids is None else list(slot_ids)
    if len(slot_ids) != len(bits):
        raise InvalidArgument("need one slot id per bit")
    attack = attack or AttackScenario.none()

    chi_bob = config.bob_lo_phase
    alice_slots, bob_slots, truth = [], [], {}
    eve = EveRecord() if attack.eve_keeps_mode else None
    if eve is not None:
        _, _, offset = attacks.eve_combined_levels(config.s, attack)
        eve.lo_phase = chi_bob + offset
    for slot_id, bit in zip(slot_ids, bits):
        theta = _slot_theta(config, seed, slot_id)
        chi_alice = (theta - chi_bob + BIT_PHASE[bit]) % (2 * math.pi)
        state, eve_mode = prepare_slot_state(config, theta, attack, seed, slot_id)
        modes, los = [0, 1], [LOSetting(chi_alice), LOSetting(chi_bob)]
        if eve_mode is not None:
            modes.append(eve_mode)
            los.append(LOSetting(eve.lo_phase))
        draws = sample_quadratures(
            state, modes, los, config.samples_per_slot, slot_rng(seed, slot_id, STREAM_SAMPLES)
        )
        alice_slots.append(RecordSlot(slot_id, draws[:, 0], chi_alice))
        bob_slots.append(RecordSlot(slot_id, draws[:, 1], chi_bob))
        if eve_mode is not None:
            eve.samples[slot_id] = draws[:, 2]
        truth[slot_id] = {"bit": bit, "theta": theta, "chi_alice": chi_alice}
    return Encoded(PhotocurrentRecord(alice_slots), PhotocurrentRecord(bob_slots), truth, eve)


@dataclass(frozen=True)
class BitDecision:
    slot_id: int
    estimated_variance: float
    threshold: float
    decoded_bit: int
    llr_margin: float


def decision_threshold(baseline, samples_per_slot, mode="geometric-mean"):
    """Variance threshold separating the two levels.

    ``geometric-mean`` uses ``sqrt(V_min V_max)``, which balances the
    chi-squared error exponents of both hypotheses; ``likelihood-ratio`` is the
    point where the two scaled chi-squared densities cross.
    """
    v0, v1 = baseline.v_min, baseline.v_max
    if mode == "geometric-mean":
        return math.sqrt(v0 * v1)
    if mode == "likelihood-ratio":
        return math.log(v1 / v0) / (1.0 / v0 - 1.0 / v1)
    raise InvalidArgument(f"unknown threshold mode {mode!r}")


def log_likelihood_ratio(variance, baseline, samples_per_slot):
    """``log p(S^2 | V_min) - log p(S^2 | V_max)`` for the unbiased sample variance."""
    k = samples_per_slot - 1
    v0, v1 = baseline.v_min, baseline.v_max
    return 0.5 * k * (math.log(v1 / v0) - variance * (1.0 / v0 - 1.0 / v1))


def decide_bit(variance, threshold):
    # ties go to bit 1, the alarm-conservative side
    return 0 if variance < threshold else 1


def bob_decode(bob_record, alice_public, config, baseline):
    if baseline is None:
        raise CalibrationError("no calibration available; run calibrate_channel first")
    n = bob_record.samples_per_slot
    threshold = decision_threshold(baseline, n, config.decision_threshold_mode)
    decisions = []
    for slot_id, combined in combine_records(alice_public, bob_record):
        v = float(np.var(combined, ddof=1))
        decisions.append(
            BitDecision(slot_id, v, threshold, decide_bit(v, threshold), log_likelihood_ratio(v, baseline, n))
        )
    return decisions


def calibrate_channel(config, n_calibration_slots=None, seed=None):
    """Estimate the two variance levels from known-bit slots on the honest channel.

    The caller asserts the channel is not being attacked while this runs.
    """
    n = config.calibration_slots if n_calibration_slots is None else n_calibration_slots
    if n < 2:
        raise CalibrationError(f"calibration needs at least 2 slots (one per bit value), got {n}")
    seed = config.rng_seed if seed is None else seed
    cal_seed = [int(seed), STREAM_CALIBRATION]
    bits = [k % 2 for k in range(n)]
    enc = alice_encode(bits, config, AttackScenario.none(), seed=cal_seed)
    levels = {0: [], 1: []}
    for slot_id, combined in combine_records(enc.alice.public(), enc.bob):
        levels[enc.truth[slot_id]["bit"]].append(float(np.var(combined, ddof=1)))
    return Baseline.from_levels(float(np.mean(levels[0])), float(np.mean(levels[1])), n)


@dataclass
class SlotSchedule:
    bits: list
    is_check: list

    @property
    def check_slots(self):
        return [k for k, c in enumerate(self.is_check) if c]

    @property
    def message_slots(self):
        return [k for k, c in enumerate(self.is_check) if not c]

    @property
    def message_bits(self):
        return [self.bits[k] for k in self.message_slots]

    @property
    def check_bits(self):
        return [self.bits[k] for k in self.check_slots]


def check_slot_count(n_message, fraction):
    """Check slots make up ``fraction`` of all slots, with a floor of one."""
    return max(1, round(fraction * n_message / (1.0 - fraction)))


def make_message_session(message_bits, config, seed=None):
    """Interleave random check bits at random positions among the message bits.

    Check-bit values are a shuffled, balanced mix of zeros and ones (the odd
    one out drawn at random), so both variance levels are probed.
    """
    message_bits = [int(b) for b in message_bits]
    if not message_bits:
        raise InvalidArgument("message must be non-empty")
    if not 0.0 < config.check_bit_fraction < 1.0:
        raise InvalidArgument("check_bit_fraction must lie strictly inside (0, 1)")
    seed = config.rng_seed if seed is None else seed
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(STREAM_SCHEDULE,)))
    n_check = check_slot_count(len(message_bits), config.check_bit_fraction)
    total = n_check + len(message_bits)
    check_positions = set(rng.choice(total, size=n_check, replace=False).tolist())
    values = [0] * (n_check // 2) + [1] * (n_check // 2)
    if n_check % 2:
        values.append(int(rng.integers(2)))
    check_values = rng.permutation(values).tolist()
    bits, is_check = [], []
    msg, chk = iter(message_bits), iter(check_values)
    for k in range(total):
        c = k in check_positions
        is_check.append(c)
        bits.append(next(chk) if c else next(msg))
    return SlotSchedule(bits, is_check)


class Phase(enum.Enum):
    PREPARED = "prepared"
    MEASURED = "measured"
    CHECKS_DISCLOSED = "checks_disclosed"
    VERIFIED = "verified"
    FINISHED = "finished"


@dataclass
class SessionTranscript:
    config: dict
    mode: str
    attack: dict
    schedule_is_check: list
    baseline: dict
    public_messages: list
    decisions: list
    decoded_bits: list
    combined_variances: list
    security_report: dict
    disclosed: bool
    alice_private: dict = field(default_factory=dict)
    bob_private: dict = field(default_factory=dict)

    @property
    def verdict(self):
        return self.security_report["verdict"]

    def decoded_payload(self):
        """Decoded message/key bits (``None`` entries where the slot was never disclosed)."""
        return [b for b, c in zip(self.decoded_bits, self.schedule_is_check) if not c]

    def to_dict(self, include_private=False):
        out = {
            "version": TRANSCRIPT_VERSION,
            "includes_private": bool(include_private),
            "mode": self.mode,
            "config": self.config,
            "attack": self.attack,
            "baseline": self.baseline,
            "public_messages": self.public_messages,
            "decisions": self.decisions,
            "decoded_bits": self.decoded_bits,
            "combined_variances": self.combined_variances,
            "security_report": self.security_report,
            "disclosed": self.disclosed,
        }
        if include_private:
            out["alice_private"] = self.alice_private
            out["bob_private"] = self.bob_private
        return out

    def to_json(self, include_private=False):
        return json.dumps(self.to_dict(include_private), indent=1, sort_keys=True)


class Session:
    """One protocol run; each step may only be taken once and in order."""

    def __init__(self, config, schedule, mode="message", attack=None, baseline=None):
        if mode not in ("key", "message"):
            raise InvalidArgument("mode must be 'key' or 'message'")
        self.config = config
        self.schedule = schedule
        self.mode = mode
        self.attack = attack or AttackScenario.none()
        self.baseline = baseline
        self.phase = Phase.PREPARED
        self.public_messages = []
        self.report = None
        self.decisions = {}
        self.disclosed = False

    def _require(self, phase):
        if self.phase is not phase:
            raise ProtocolError(f"step requires phase {phase.value}, session is in {self.phase.value}")

    def transmit(self):
        """Alice encodes every slot and both parties measure."""
        self._require(Phase.PREPARED)
        self.encoded = alice_encode(self.schedule.bits, self.config, self.attack)
        self.phase = Phase.MEASURED

    def disclose_checks(self):
        self._require(Phase.MEASURED)
        slots = self.schedule.check_slots
        self.public_messages.append({
            "type": "check_disclosure",
            "slot_ids": slots,
            "check_bits": self.schedule.check_bits,
            "alice_record": self.encoded.alice.select(slots).public().to_public_dict(),
        })
        self.phase = Phase.CHECKS_DISCLOSED

    def verify(self):
        self._require(Phase.CHECKS_DISCLOSED)
        if self.baseline is None:
            raise CalibrationError("no calibration available; run calibrate_channel first")
        slots = self.schedule.check_slots
        alice = PhotocurrentRecord.from_public_dict(self.public_messages[-1]["alice_record"])
        for d in bob_decode(self.encoded.bob.select(slots), alice, self.config, self.baseline):
            self.decisions[d.slot_id] = d
        by_bit = {0: [], 1: []}
        for slot_id, bit in zip(slots, self.schedule.check_bits):
            by_bit[bit].append(self.decisions[slot_id].estimated_variance)
        stats = CheckStatistics.from_slot_variances(by_bit[0], by_bit[1], self.config.samples_per_slot)
        self.report = attacks.security_verdict(
            self.baseline, stats, len(slots),
            tol_D=self.config.tol_D, tol_SNR=self.config.tol_SNR, z=self.config.confidence_z,
        )
        self.phase = Phase.VERIFIED

    def disclose_payload(self):
        """Release Alice's record for the remaining slots; withheld on alarm in message mode."""
        self._require(Phase.VERIFIED)
        if self.mode == "key" or not self.report.alarm:
            slots = self.schedule.message_slots
            record = self.encoded.alice.select(slots).public()
            self.public_messages.append({
                "type": "payload_disclosure",
                "slot_ids": slots,
                "alice_record": record.to_public_dict(),
            })
            for d in bob_decode(self.encoded.bob.select(slots), record, self.config, self.baseline):
                self.decisions[d.slot_id] = d
            self.disclosed = True
        self.phase = Phase.FINISHED

    def transcript(self):
        self._require(Phase.FINISHED)
        n = len(self.schedule.bits)
        decisions = [asdict(self.decisions[k]) for k in range(n) if k in self.decisions]
        decoded = [self.decisions[k].decoded_bit if k in self.decisions else None for k in range(n)]
        variances = [self.decisions[k].estimated_variance if k in self.decisions else None for k in range(n)]
        enc = self.encoded
        return SessionTranscript(
            config=self.config.to_dict(),
            mode=self.mode,
            attack=self.attack.to_dict(),
            schedule_is_check=list(self.schedule.is_check),
            baseline=self.baseline.to_dict(),
            public_messages=self.public_messages,
            decisions=decisions,
            decoded_bits=decoded,
            combined_variances=variances,
            security_report=self.report.to_dict(),
            disclosed=self.disclosed,
            alice_private={
                "bits": list(self.schedule.bits),
                "lo_phases": [sl.lo_phase for sl in enc.alice.slots],
                "thetas": [enc.truth[k]["theta"] for k in range(n)],
                "record": _private_record(enc.alice),
            },
            bob_private={"record": _private_record(enc.bob)},
        )


def _private_record(record):
    out = record.to_public_dict()
    for entry, sl in zip(out["slots"], record.slots):
        entry["lo_phase"] = sl.lo_phase
    return out


def random_bits(n, seed):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(STREAM_KEY,)))
    return rng.integers(0, 2, size=n).tolist()


def run_session(config, bits=None, mode="key", attack=None, baseline=None, n_random_bits=256):
    """Full session: calibrate (unless ``baseline`` is given), transmit, verify, disclose.

    ``bits`` is the message in message mode or the key in key mode; when
    omitted, ``n_random_bits`` random key bits are drawn from the seed.
    """
    if bits is None:
        if mode == "message":
            raise InvalidArgument("message mode needs message bits")
        bits = random_bits(n_random_bits, config.rng_seed)
    if baseline is None:
        baseline = calibrate_channel(config)
    session = Session(config, make_message_session(bits, config), mode, attack, baseline)
    session.transmit()
    session.disclose_checks()
    session.verify()
    session.disclose_payload()
    return session.transcript()
