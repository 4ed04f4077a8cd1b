import json
import math

import numpy as np
import pytest
from scipy.stats import chi2, ks_2samp

from tmss_crypto import attacks, protocol
from tmss_crypto.attacks import AttackScenario, Baseline
from tmss_crypto.errors import CalibrationError, InvalidArgument, ProtocolError
from tmss_crypto.measurement import PhotocurrentRecord, RecordSlot, combine_records
from tmss_crypto.protocol import ProtocolConfig

BASE = Baseline.from_model(1.0)


def slot_variances(enc):
    return {k: float(np.var(v, ddof=1)) for k, v in combine_records(enc.alice.public(), enc.bob)}


def within_sigmas(estimate, target, n, k=3.0):
    return abs(estimate - target) <= k * target * math.sqrt(2.0 / (n - 1))


@pytest.mark.parametrize("bit, target", [(0, 2 * math.exp(-2)), (1, 2 * math.exp(2))])
def test_single_slot_levels(bit, target):
    n = 100_000
    cfg = ProtocolConfig(samples_per_slot=n, rng_seed=1)
    enc = protocol.alice_encode([bit], cfg)
    assert within_sigmas(slot_variances(enc)[0], target, n)


def test_short_round_trip():
    cfg = ProtocolConfig(rng_seed=5)
    enc = protocol.alice_encode([0, 1, 0, 1], cfg)
    decisions = protocol.bob_decode(enc.bob, enc.alice.public(), cfg, BASE)
    assert [d.decoded_bit for d in decisions] == [0, 1, 0, 1]
    assert all(d.llr_margin > 0 for d in decisions[::2])
    assert all(d.llr_margin < 0 for d in decisions[1::2])


def test_encode_rejects_bad_bits():
    cfg = ProtocolConfig()
    with pytest.raises(InvalidArgument):
        protocol.alice_encode([], cfg)
    with pytest.raises(InvalidArgument):
        protocol.alice_encode([0, 2], cfg)


def test_alice_lo_phase_schedule():
    cfg = ProtocolConfig(theta=0.5, bob_lo_phase=0.2)
    enc = protocol.alice_encode([0, 1], cfg)
    assert enc.alice.slots[0].lo_phase == pytest.approx(0.3)
    assert enc.alice.slots[1].lo_phase == pytest.approx(0.3 + math.pi)
    assert all(sl.lo_phase == 0.2 for sl in enc.bob.slots)


def test_tie_breaks_toward_one():
    assert protocol.decide_bit(BASE.threshold, BASE.threshold) == 1
    assert protocol.decide_bit(BASE.v_min, BASE.threshold) == 0


def test_analytic_feed_decodes_zero():
    # samples whose unbiased variance is exactly V_min
    x = np.array([1.0, -1.0]) * math.sqrt(BASE.v_min / 2)
    alice = PhotocurrentRecord([RecordSlot(0, x)])
    bob = PhotocurrentRecord([RecordSlot(0, np.zeros(2))])
    d, = protocol.bob_decode(bob, alice, ProtocolConfig(), BASE)
    assert d.estimated_variance == pytest.approx(BASE.v_min)
    assert d.decoded_bit == 0


def test_decode_requires_calibration():
    cfg = ProtocolConfig()
    enc = protocol.alice_encode([0], cfg)
    with pytest.raises(CalibrationError):
        protocol.bob_decode(enc.bob, enc.alice.public(), cfg, None)


def test_decode_rejects_slot_mismatch():
    cfg = ProtocolConfig()
    enc = protocol.alice_encode([0, 1], cfg)
    with pytest.raises(InvalidArgument):
        protocol.bob_decode(enc.bob, enc.alice.select([0]).public(), cfg, BASE)


def test_thresholds():
    gm = protocol.decision_threshold(BASE, 200, "geometric-mean")
    lr = protocol.decision_threshold(BASE, 200, "likelihood-ratio")
    assert gm == pytest.approx(2.0, rel=1e-12)
    assert BASE.v_min < lr < BASE.v_max
    # the likelihood ratio vanishes at its own threshold
    assert protocol.log_likelihood_ratio(lr, BASE, 200) == pytest.approx(0.0, abs=1e-9)


def test_round_trip_ten_thousand_bits():
    cfg = ProtocolConfig(rng_seed=11)
    bits = protocol.random_bits(10_000, 99)
    enc = protocol.alice_encode(bits, cfg)
    decoded = [d.decoded_bit for d in protocol.bob_decode(enc.bob, enc.alice.public(), cfg, BASE)]
    errors = sum(a != b for a, b in zip(bits, decoded))
    assert errors / len(bits) < 1e-4


def test_likelihood_ratio_mode_decodes():
    cfg = ProtocolConfig(rng_seed=3, decision_threshold_mode="likelihood-ratio")
    bits = protocol.random_bits(500, 1)
    enc = protocol.alice_encode(bits, cfg)
    assert [d.decoded_bit for d in protocol.bob_decode(enc.bob, enc.alice.public(), cfg, BASE)] == bits


def test_schedule_half_checks():
    cfg = ProtocolConfig(check_bit_fraction=0.5, rng_seed=4)
    msg = protocol.random_bits(100, 0)
    a = protocol.make_message_session(msg, cfg)
    b = protocol.make_message_session(msg, cfg)
    assert len(a.bits) == 200 and len(a.check_slots) == 100
    assert a.is_check == b.is_check and a.bits == b.bits
    assert a.message_bits == msg
    assert abs(sum(a.check_bits) - 50) == 0
    other = protocol.make_message_session(msg, ProtocolConfig(check_bit_fraction=0.5, rng_seed=5))
    assert other.is_check != a.is_check


def test_schedule_floor_of_one_check():
    s = protocol.make_message_session([1, 0, 1], ProtocolConfig(check_bit_fraction=1e-6))
    assert len(s.check_slots) == 1
    assert s.message_bits == [1, 0, 1]


def test_schedule_rejects_empty_message():
    with pytest.raises(InvalidArgument):
        protocol.make_message_session([], ProtocolConfig())


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1])
def test_config_rejects_bad_fraction(fraction):
    with pytest.raises(InvalidArgument):
        ProtocolConfig(check_bit_fraction=fraction)


def test_config_rejects_bad_values():
    with pytest.raises(InvalidArgument):
        ProtocolConfig(samples_per_slot=1)
    with pytest.raises(InvalidArgument):
        ProtocolConfig(s=-1.0)
    with pytest.raises(InvalidArgument):
        ProtocolConfig(decision_threshold_mode="vote")


def test_check_disclosure_contents():
    cfg = ProtocolConfig(rng_seed=2)
    t = protocol.run_session(cfg, bits=[0, 1] * 30, mode="message", baseline=BASE)
    first = t.public_messages[0]
    assert first["type"] == "check_disclosure"
    sched = [k for k, c in enumerate(t.schedule_is_check) if c]
    assert first["slot_ids"] == sched
    assert first["alice_record"]["slot_count"] == len(sched)
    assert [s["slot_id"] for s in first["alice_record"]["slots"]] == sched


def test_session_honest_channel():
    cfg = ProtocolConfig(rng_seed=8)
    message = protocol.random_bits(300, 8)
    t = protocol.run_session(cfg, bits=message, mode="message")
    assert t.verdict == "secure"
    assert t.disclosed
    assert t.decoded_payload() == message
    assert [m["type"] for m in t.public_messages] == ["check_disclosure", "payload_disclosure"]


@pytest.mark.parametrize("attack", [AttackScenario.intercept_resend(), AttackScenario.partial_tap(0.5)])
def test_session_attacks_block_message(attack):
    cfg = ProtocolConfig(rng_seed=8)
    t = protocol.run_session(cfg, bits=protocol.random_bits(300, 8), mode="message", attack=attack, baseline=BASE)
    assert t.verdict == "alarm"
    assert not t.disclosed
    assert [m["type"] for m in t.public_messages] == ["check_disclosure"]
    assert all(b is None for b in t.decoded_payload())
    assert len(t.decoded_bits) == len(t.schedule_is_check)


def test_tap_half_degrades_squeezing():
    drop = attacks.degree_of_squeezing(1.0, 0.5) - attacks.degree_of_squeezing(1.0, 1.0)
    assert drop == pytest.approx(5.7357, abs=1e-3)
    t = protocol.run_session(ProtocolConfig(rng_seed=1), bits=[0, 1] * 150, mode="message",
                             attack=AttackScenario.partial_tap(0.5), baseline=BASE)
    report = t.security_report
    assert report["measured_D_dB"] - report["baseline_D_dB"] == pytest.approx(drop, abs=0.3)


def test_key_mode_discloses_and_discards_on_alarm():
    cfg = ProtocolConfig(rng_seed=3)
    t = protocol.run_session(cfg, mode="key", attack=AttackScenario.intercept_resend(), baseline=BASE, n_random_bits=64)
    assert t.verdict == "alarm"
    assert t.disclosed
    assert None not in t.decoded_payload()


def test_calibration_levels():
    base = protocol.calibrate_channel(ProtocolConfig(rng_seed=1), 400)
    # 200 slots per level, 199 dof each: D stderr about 0.03 dB
    assert base.D_dB == pytest.approx(-8.685889638065037, abs=0.15)
    assert base.s_eff == pytest.approx(1.0, abs=0.03)
    lossy = protocol.calibrate_channel(ProtocolConfig(rng_seed=1, channel_eta=0.93), 400)
    assert lossy.D_dB == pytest.approx(-7.749458670754523, abs=0.15)
    assert lossy.eta_est == pytest.approx(0.93, abs=0.03)


@pytest.mark.parametrize("n", [0, 1])
def test_calibration_rejects_too_few_slots(n):
    with pytest.raises(CalibrationError):
        protocol.calibrate_channel(ProtocolConfig(), n)


def test_session_requires_calibration():
    cfg = ProtocolConfig()
    session = protocol.Session(cfg, protocol.make_message_session([0, 1], cfg), "message")
    session.transmit()
    session.disclose_checks()
    with pytest.raises(CalibrationError):
        session.verify()


def test_session_step_order_is_enforced():
    cfg = ProtocolConfig()
    session = protocol.Session(cfg, protocol.make_message_session([0, 1, 1], cfg), "message", baseline=BASE)
    with pytest.raises(ProtocolError):
        session.disclose_checks()
    session.transmit()
    with pytest.raises(ProtocolError):
        session.verify()
    with pytest.raises(ProtocolError):
        session.disclose_payload()
    session.disclose_checks()
    with pytest.raises(ProtocolError):
        session.transmit()
    session.verify()
    session.disclose_payload()
    with pytest.raises(ProtocolError):
        session.disclose_payload()
    assert session.transcript().decoded_payload() == [0, 1, 1]


def test_public_transcript_hides_phases_and_payload():
    cfg = ProtocolConfig(rng_seed=6)
    t = protocol.run_session(cfg, bits=[1, 0, 1, 1, 0, 0, 1, 0], mode="message", baseline=BASE)
    public = t.to_dict()
    text = json.dumps(public["public_messages"])
    assert "lo_phase" not in text and "theta" not in text
    assert "alice_private" not in public and public["includes_private"] is False
    assert "bits" not in json.dumps(public["public_messages"]).replace("check_bits", "")
    private = t.to_dict(include_private=True)
    assert private["includes_private"] is True
    assert private["alice_private"]["bits"] == [int(b) for b in protocol.make_message_session(
        [1, 0, 1, 1, 0, 0, 1, 0], cfg).bits]
    assert "lo_phase" in private["alice_private"]["record"]["slots"][0]


def test_transcript_is_deterministic():
    cfg = ProtocolConfig(rng_seed=21, theta_modulation=True)
    runs = [protocol.run_session(cfg, mode="key", attack=AttackScenario.partial_tap(0.8), n_random_bits=40)
            for _ in range(2)]
    assert runs[0].to_json(include_private=True) == runs[1].to_json(include_private=True)


def _pooled_records(bits_value, cfg, slots=500):
    enc = protocol.alice_encode([bits_value] * slots, cfg)
    alice = np.concatenate([sl.samples for sl in enc.alice.slots])
    bob = np.concatenate([sl.samples for sl in enc.bob.slots])
    return alice, bob


def test_public_and_bob_records_do_not_leak_the_bit():
    cfg = ProtocolConfig(theta_modulation=True, rng_seed=0)
    a0, b0 = _pooled_records(0, cfg)
    a1, b1 = _pooled_records(1, ProtocolConfig(theta_modulation=True, rng_seed=1))
    assert a0.size == 100_000
    assert ks_2samp(a0, a1).pvalue > 1e-3
    assert ks_2samp(b0, b1).pvalue > 1e-3
    assert within_sigmas(np.var(a0, ddof=1), math.cosh(2.0), a0.size, k=4)


def test_theta_modulation_keeps_slot_variances():
    bits = [0, 1] * 200
    plain = protocol.alice_encode(bits, ProtocolConfig(rng_seed=4))
    hopped = protocol.alice_encode(bits, ProtocolConfig(rng_seed=4, theta_modulation=True))
    thetas = {round(hopped.truth[k]["theta"], 6) for k in hopped.truth}
    assert len(thetas) > 300
    n = 200 * 199
    for enc in (plain, hopped):
        v = slot_variances(enc)
        low = np.mean([v[k] for k in range(0, 400, 2)])
        high = np.mean([v[k] for k in range(1, 400, 2)])
        assert within_sigmas(low, 2 * math.exp(-2), n, k=4)
        assert within_sigmas(high, 2 * math.exp(2), n, k=4)


def test_ber_non_increasing_in_samples_per_slot():
    # s = 0.5 keeps the two levels close enough for errors to appear at small n
    base = Baseline.from_model(0.5)
    bits = protocol.random_bits(2000, 17)
    bers = []
    for n in (10, 50, 200, 1000):
        cfg = ProtocolConfig(s=0.5, samples_per_slot=n, rng_seed=17)
        enc = protocol.alice_encode(bits, cfg)
        decoded = [d.decoded_bit for d in protocol.bob_decode(enc.bob, enc.alice.public(), cfg, base)]
        bers.append(np.mean([a != b for a, b in zip(bits, decoded)]))
    assert bers[0] > 0
    assert all(x >= y for x, y in zip(bers, bers[1:]))


def test_eve_reads_bits_only_with_public_record():
    scen = AttackScenario.partial_tap(0.5)
    cfg = ProtocolConfig(rng_seed=9)
    bits = protocol.random_bits(200, 9)
    enc = protocol.alice_encode(bits, cfg, attack=scen)
    guesses = attacks.eve_estimate_bits(enc.eve, enc.alice.public(), cfg.s, scen)
    accuracy = np.mean([guesses[k] == b for k, b in enumerate(bits)])
    assert accuracy > 0.99


def test_per_slot_error_at_default_settings():
    # (n - 1) S / V is chi-square with n - 1 dof; the threshold sits at sqrt(Vmin Vmax) = 2
    k = ProtocolConfig().samples_per_slot - 1
    miss_zero = chi2.sf(k * BASE.threshold / BASE.v_min, k)
    miss_one = chi2.cdf(k * BASE.threshold / BASE.v_max, k)
    assert miss_zero == pytest.approx(1.3620633595004026e-192, rel=1e-6)
    assert miss_one == pytest.approx(4.013835100114707e-51, rel=1e-6)
    assert max(miss_zero, miss_one) < 1e-6
