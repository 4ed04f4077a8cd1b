import csv
import io
import math

import numpy as np
import pytest

from tmss_crypto import attacks, experiments
from tmss_crypto.errors import InvalidArgument
from tmss_crypto.experiments import CSV_COLUMNS, LossGrid, SweepSpec


def analytic(s_values=(0.0, 0.2, 0.5, 1.0), step=0.01, kind="both"):
    return experiments.sweep(SweepSpec(s_values=s_values, grid=LossGrid(step=step)), kind)


def test_grid_points():
    losses = LossGrid().losses()
    assert len(losses) == 101
    assert losses[0] == 0.0 and losses[-1] == 1.0
    assert 0.07 in losses
    assert LossGrid(0.0, 0.1, 0.05).losses() == [0.0, 0.05, 0.1]


@pytest.mark.parametrize("kwargs", [dict(step=0.0), dict(step=-0.1), dict(start=0.5, stop=0.2), dict(stop=1.5)])
def test_grid_rejects(kwargs):
    with pytest.raises(InvalidArgument):
        LossGrid(**kwargs)


def test_spec_rejects():
    with pytest.raises(InvalidArgument):
        SweepSpec(s_values=())
    with pytest.raises(InvalidArgument):
        SweepSpec(s_values=(-1.0,))
    with pytest.raises(InvalidArgument):
        SweepSpec(outputs="both-ish")
    with pytest.raises(InvalidArgument):
        experiments.sweep(SweepSpec(), "entropy")


def test_sweep_values_match_closed_form():
    res = analytic()
    for row in res.rows:
        assert row.eta == pytest.approx(1 - row.loss, abs=1e-12)
        assert row.D_dB == pytest.approx(attacks.degree_of_squeezing(row.s, row.eta), abs=1e-12)
        assert row.SNR == pytest.approx(attacks.snr(row.s, row.eta), abs=1e-12)
    r, = [r for r in res.select(s=1.0) if r.loss == 0.07]
    assert r.D_dB == pytest.approx(-7.749458670754523, abs=1e-9)
    assert r.SNR_dB == pytest.approx(16.1975, abs=1e-4)


def test_unsqueezed_rows_are_flat():
    for row in analytic().select(s=0.0):
        assert row.D_dB == pytest.approx(0.0, abs=1e-12)
        assert row.SNR == pytest.approx(0.0, abs=1e-12)
        assert row.SNR_dB is None


def test_no_snr_at_full_loss():
    for row in analytic().rows:
        if row.loss == 1.0:
            assert row.SNR == 0.0
            assert row.SNR_dB is None


@pytest.mark.parametrize("s", [0.2, 0.5, 1.0])
def test_monotone_in_loss(s):
    rows = analytic().select(s=s)
    D = [r.D_dB for r in rows]
    snr = [r.SNR for r in rows]
    assert all(a < b for a, b in zip(D, D[1:]))
    assert all(a > b for a, b in zip(snr, snr[1:]))


@pytest.mark.parametrize("s", [0.2, 0.5, 1.0])
def test_crossing_above_shot_noise(s):
    eta0 = experiments.zero_crossing_eta(s)
    assert 0.0 < eta0 < 1.0
    assert attacks.degree_of_squeezing(s, eta0) == pytest.approx(0.0, abs=1e-10)
    rows = analytic().select(s=s)
    assert rows[0].D_dB < 0 < rows[-1].D_dB


def test_crossing_value_at_unit_squeezing():
    assert experiments.zero_crossing_eta(1.0) == pytest.approx(0.21355, abs=1e-4)
    with pytest.raises(InvalidArgument):
        experiments.zero_crossing_eta(0.0)


def test_headline():
    rep = experiments.headline_check()
    assert rep.passed
    assert rep.delta_D_dB == pytest.approx(0.936, abs=1e-3)
    assert rep.delta_SNR_dB == pytest.approx(1.094, abs=1e-3)
    assert rep.D_lossless_dB == pytest.approx(-8.685889638065037, abs=1e-9)
    assert rep.lines()[0].startswith("[PASS]")


def test_squeezing_damage_grows_with_s():
    deltas = [experiments.headline_check(s=s).delta_D_dB for s in (0.2, 0.5, 1.0)]
    assert deltas[0] < deltas[1] < deltas[2]


def test_refined_grid_shares_values():
    coarse = {(r.s, r.loss): r.D_dB for r in analytic(step=0.01).rows}
    fine = {(r.s, r.loss): r.D_dB for r in analytic(step=0.005).rows}
    assert set(coarse) <= set(fine)
    assert all(coarse[k] == fine[k] for k in coarse)


def test_csv_layout_and_determinism():
    a = analytic().to_csv()
    b = analytic().to_csv()
    assert a == b
    rows = list(csv.reader(io.StringIO(a)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + 4 * 101
    degree_only = list(csv.DictReader(io.StringIO(analytic(kind="degree").to_csv())))
    assert degree_only[0]["SNR"] == ""


def test_write_csv(tmp_path):
    res = analytic(s_values=(1.0,))
    path = tmp_path / "sweep.csv"
    res.write_csv(path)
    assert path.read_bytes() == res.to_csv().encode()


def test_monte_carlo_rows_agree_with_closed_form():
    spec = SweepSpec(s_values=(0.5, 1.0), grid=LossGrid(0.0, 1.0, 0.25), outputs="both", slots=40, seed=3)
    res = experiments.sweep(spec)
    exact = {(r.s, r.loss): r for r in res.select("analytic")}
    mc = res.select("mc")
    assert len(mc) == len(exact)
    for r in mc:
        ref = exact[(r.s, r.loss)]
        assert abs(r.D_dB - ref.D_dB) <= 4 * r.mc_stderr_D
        assert abs(r.SNR - ref.SNR) <= 4 * r.mc_stderr_SNR + 1e-12
    again = experiments.sweep(spec)
    assert res.to_csv() == again.to_csv()


def test_mc_stderr_scales_with_slots():
    small = experiments.sweep(SweepSpec(s_values=(1.0,), grid=LossGrid(0, 0, 1), outputs="monte_carlo", slots=20))
    large = experiments.sweep(SweepSpec(s_values=(1.0,), grid=LossGrid(0, 0, 1), outputs="monte_carlo", slots=80))
    ratio = small.rows[0].mc_stderr_D / large.rows[0].mc_stderr_D
    assert ratio == pytest.approx(2.0, rel=1e-12)


def test_mc_levels_are_seeded():
    a = experiments.mc_levels(1.0, 0.9, 10, 50, 7)
    b = experiments.mc_levels(1.0, 0.9, 10, 50, 7)
    c = experiments.mc_levels(1.0, 0.9, 10, 50, 8)
    assert a == b and a != c
    assert a[2] == a[3] == 5 * 49
    assert np.isfinite(a[:2]).all() and math.isfinite(a[0])
