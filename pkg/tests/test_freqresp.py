import math

import numpy as np
import pytest

from bodyflight.aero import total_wrench
from bodyflight.freefall import trim_state
from bodyflight.freqresp import (
    EMBEDDED_PLANTS,
    FrequencyResponse,
    PatternPlant,
    SteadyStateError,
    embedded_plant,
    first_order_plant,
    frequency_response,
    integrator_plant,
    linearity_check,
    margins,
    measure_point,
    read_bode_csv,
    saturating_plant,
    second_order_plant,
    step_features,
    step_response,
    write_bode_csv,
    write_bode_svg,
    write_margins_json,
)
from bodyflight.rotations import quat_to_matrix

from conftest import symmetric_offset

GRID = np.logspace(-1, 1, 9)


def _hip_pattern():
    p = np.zeros(45)
    p[27] = 1.0  # hip_l psi
    return p


def test_first_order_corner():
    g, ph = measure_point(first_order_plant(), 1.0, 1.0)
    assert g == pytest.approx(1 / math.sqrt(2), rel=0.01)
    assert math.degrees(ph) == pytest.approx(-45.0, abs=1.0)


def test_first_order_low_frequency():
    g, ph = measure_point(first_order_plant(), 0.01, 1.0)
    assert g == pytest.approx(1.0, rel=0.01)
    assert abs(math.degrees(ph)) < 1.0


def test_integrator_slope():
    fr = frequency_response(integrator_plant(), grid=[0.5, 5.0])
    slope = (fr.gain_db[1] - fr.gain_db[0]) / 1.0
    assert slope == pytest.approx(-20.0, abs=0.5)
    np.testing.assert_allclose(fr.phase_deg, -90.0, atol=1.0)


@pytest.mark.parametrize("plant", [first_order_plant(), integrator_plant(), second_order_plant()],
                         ids=["first_order", "integrator", "second_order"])
def test_matches_analytic_transfer(plant):
    fr = frequency_response(plant, grid=GRID)
    h = plant.transfer(GRID)
    np.testing.assert_allclose(fr.gain, np.abs(h), rtol=0.02)
    dphi = np.degrees(np.angle(fr.complex() / h))
    assert np.max(np.abs(dphi)) < 2.0


def test_resonance_peak():
    fr = frequency_response(second_order_plant(2.0, 0.2), grid=[2.0])
    # |G(j omega_n)| = 1 / (2 zeta)
    assert fr.gain[0] == pytest.approx(2.5, rel=0.02)
    assert fr.phase_deg[0] == pytest.approx(-90.0, abs=2.0)


def test_embedded_plants_named():
    for name in EMBEDDED_PLANTS:
        assert embedded_plant(name).transfer(np.array([1.0])).shape == (1,)
    with pytest.raises(ValueError, match="unknown plant"):
        embedded_plant("lti:nope")


def test_linear_plant_passes_linearity_check():
    rep = linearity_check(first_order_plant(), [0.5, 1.0, 2.0], grid=GRID)
    assert rep.max_gain_deviation_db < 0.1
    assert rep.max_phase_deviation_deg < 0.5


def test_saturation_detected():
    rep = linearity_check(saturating_plant(0.5), [0.1, 1.0], grid=[0.05, 0.1])
    assert rep.max_gain_deviation_db > 3.0


def test_linearity_needs_two_amplitudes():
    with pytest.raises(ValueError):
        linearity_check(first_order_plant(), [1.0])


def test_longer_transient_discard_changes_little():
    p = second_order_plant()
    g1, _ = measure_point(p, 1.5, 1.0)
    g2, _ = measure_point(p, 1.5, 1.0, transient_scale=2.0)
    assert abs(g2 - g1) / g1 < 0.005


def test_transient_cap_raises():
    with pytest.raises(SteadyStateError):
        measure_point(second_order_plant(2.0, 1e-4), 2.0, 1.0, ramp_periods=0, ramp_time=0, max_transient=3)


def test_errors_recorded_per_frequency():
    fr = frequency_response(second_order_plant(2.0, 1e-4), grid=[0.5, 2.0], ramp_periods=0, ramp_time=0,
                            max_transient=3)
    assert 1 in fr.errors
    assert math.isnan(fr.gain[1])
    assert np.isfinite(fr.gain[0])


def test_bad_grid_rejected():
    with pytest.raises(ValueError):
        frequency_response(first_order_plant(), grid=[1.0, 0.5])
    with pytest.raises(ValueError):
        frequency_response(first_order_plant(), amplitude=0.0, grid=[1.0])


def test_unwrapped_phase_rewraps_to_raw():
    fr = FrequencyResponse.from_transfer_function([1], [1, 3, 3, 1], np.logspace(-1, 2, 50))
    assert fr.phase_deg[-1] < -180.0
    rewrapped = np.angle(np.exp(1j * fr.phase))
    np.testing.assert_allclose(rewrapped, fr.raw_phase, atol=1e-12)


def test_margin_infinite_for_first_order():
    rep = margins(FrequencyResponse.from_transfer_function([1], [1, 1]))
    assert math.isinf(rep.gain_margin_db)
    assert not rep.has_phase_crossover
    assert rep.to_dict()["gain_margin_db"] == "infinite"


def test_margin_of_triple_pole():
    w = np.logspace(-2, 2, 400)
    fr = FrequencyResponse.from_transfer_function([1], [1, 3, 3, 1], w)
    rep = margins(fr)
    # 1/(s+1)^3 crosses -180 deg at sqrt(3) with |G| = 1/8
    assert rep.gain_margin_db == pytest.approx(20 * math.log10(8), abs=0.5)
    assert rep.phase_crossover_rad_s == pytest.approx(math.sqrt(3), rel=0.02)
    doubled = margins(fr, k_p=2.0)
    assert doubled.gain_margin_db - rep.gain_margin_db == pytest.approx(-6.02, abs=0.1)


def test_phase_margin():
    w = np.logspace(-2, 2, 400)
    fr = FrequencyResponse.from_transfer_function([1], [1, 0], w)
    rep = margins(fr)
    assert rep.phase_margin_deg == pytest.approx(90.0, abs=0.5)
    assert rep.gain_crossover_rad_s == pytest.approx(1.0, rel=0.02)


def test_margins_reject_bad_gain():
    with pytest.raises(ValueError):
        margins(FrequencyResponse.from_transfer_function([1], [1, 1]), k_p=0.0)


def test_margins_json(tmp_path):
    import json

    path = tmp_path / "margins.json"
    write_margins_json(path, margins(FrequencyResponse.from_transfer_function([1], [1, 1])))
    data = json.loads(path.read_text())
    assert data["gain_margin_db"] == "infinite"
    assert data["phase_crossover_rad_s"] == "no crossover"


def test_bode_csv_round_trip(tmp_path):
    fr = FrequencyResponse.from_transfer_function([1], [1, 3, 3, 1], GRID)
    path = tmp_path / "bode.csv"
    write_bode_csv(path, fr)
    back = read_bode_csv(path)
    np.testing.assert_array_equal(back.omega, fr.omega)
    np.testing.assert_array_equal(back.gain, fr.gain)
    np.testing.assert_allclose(back.phase, fr.phase, atol=1e-12)


def test_read_bode_rejects_other_csv(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="Bode"):
        read_bode_csv(path)


def test_bode_svg(tmp_path):
    pytest.importorskip("matplotlib")
    fr = FrequencyResponse.from_transfer_function([1], [1, 1], GRID)
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    write_bode_svg(a, fr, title="first order")
    write_bode_svg(b, fr, title="first order")
    assert a.read_text().startswith("<?xml")
    assert a.read_bytes() == b.read_bytes()


def test_step_features_nonminimum_phase():
    t = np.linspace(0, 10, 1001)
    # (1 - s) / (s + 1)^2 step response
    y = 1 - np.exp(-t) - 2 * t * np.exp(-t)
    f = step_features(t, y)
    assert f.initial_sign == -1
    assert f.nonminimum_phase
    assert f.steady_value == pytest.approx(1.0, abs=0.01)


def test_step_features_first_order():
    t = np.linspace(0, 10, 2001)
    f = step_features(t, 1 - np.exp(-t))
    assert f.initial_sign == 1
    assert not f.nonminimum_phase
    assert f.rise_time == pytest.approx(math.log(9), rel=0.02)


def test_step_features_flat():
    f = step_features(np.arange(5.0), np.zeros(5))
    assert f.initial_sign == 0
    assert math.isnan(f.rise_time)


def test_lti_step():
    r = step_response(first_order_plant(), 2.0, duration=10.0, dt=0.01)
    assert r.features.steady_value == pytest.approx(2.0, rel=0.01)


def test_symmetric_pattern_step_has_no_yaw(config, neutral):
    pattern = symmetric_offset(4, 1.0)
    pattern /= np.linalg.norm(pattern)
    r = step_response(PatternPlant.skydiver(config, neutral, pattern), 0.1, duration=3.0)
    assert abs(r.features.steady_value) < 1e-6


def test_hip_step_turns_with_the_yaw_moment(config, neutral):
    plant = PatternPlant.skydiver(config, neutral, _hip_pattern())
    r1 = step_response(plant, 0.05, duration=10.0)
    r2 = step_response(plant, 0.1, duration=10.0)
    s = r1.features.steady_value
    assert abs(s) > 1e-3
    trim = trim_state(config, neutral)
    v_body = quat_to_matrix(trim.orientation).T @ trim.velocity
    yaw_moment = total_wrench(config, neutral + 0.05 * _hip_pattern(), v_body, np.zeros(3)).moment[2]
    assert np.sign(s) == np.sign(yaw_moment)
    assert r2.features.steady_value / s == pytest.approx(2.0, rel=0.1)
    assert r1.trajectory is not None


def test_skydiver_sine_point(config, neutral):
    plant = PatternPlant.skydiver(config, neutral, _hip_pattern())
    g, _ = measure_point(plant, 2.0, 0.05, cycles=4)
    assert np.isfinite(g) and g > 0
