import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from ykshaping.bench_plants import make_minimum_phase_fixture
from ykshaping.lti import RationalTF, StateSpace, series, tf_to_ss
from ykshaping.qdesign import NotchSpec
from ykshaping.simulate import closed_loop_disturbance_sim, lsim, transient_length
from ykshaping.ykloop import DesignPlan, achieved_sensitivity, iterate_design

FS = 1000.0


@pytest.fixture(scope="module")
def design():
    l = make_minimum_phase_fixture()
    rec = iterate_design(l, DesignPlan([[NotchSpec(300.0)], [NotchSpec(700.0)]]))
    return l, rec[-1].controller_reduced


def test_lsim_examples():
    x = np.random.default_rng(0).standard_normal(50)
    np.testing.assert_array_equal(lsim(RationalTF.gain(1.0, FS), x), x)
    imp = np.zeros(10)
    imp[0] = 1.0
    np.testing.assert_array_equal(lsim(RationalTF.delay(1, FS), imp), np.roll(imp, 1))
    np.testing.assert_allclose(lsim(RationalTF([1], [1, -0.5], FS), imp), 0.5 ** np.arange(10),
                               atol=1e-12)
    np.testing.assert_allclose(lsim(tf_to_ss(RationalTF([1], [1, -0.5], FS)), imp),
                               0.5 ** np.arange(10), atol=1e-12)


def test_lsim_static_state_space():
    np.testing.assert_array_equal(lsim(StateSpace.static(2.0, FS), [1.0, 2.0]), [2.0, 4.0])


def test_transient_length_rule():
    assert transient_length(0.9, 10_000) == 100
    assert transient_length(0.999, 10_000) == 5000
    with pytest.raises(ValueError):
        transient_length(1.0, 100)


def test_notch_frequency_rejected(design):
    l, c = design
    r = closed_loop_disturbance_sim(l, c, [300.0], [1.0], 20_000)
    assert r.ratios[0] <= 1e-3


def test_half_sensitivity_point(design):
    l, c = design
    fs = l.sample_rate

    def excess(f):
        return abs(achieved_sensitivity(l, c, [f]).values[0]) - 0.5

    f_half = brentq(excess, 5.0, 150.0, xtol=1e-10)
    r = closed_loop_disturbance_sim(l, c, [f_half], [1.0], 40_000)
    assert r.ratios[0] == pytest.approx(0.5, rel=0.01)
    assert r.max_pole_modulus < 1.0 and fs == r.sample_rate


def test_zero_disturbance(design):
    l, c = design
    r = closed_loop_disturbance_sim(l, c, [], [], 2_000)
    assert not np.any(r.e)
    r = closed_loop_disturbance_sim(l, c, [100.0], [0.0], 10_000)
    assert not np.any(r.e) and np.isnan(r.ratios[0])


def test_window_spans_whole_periods(design):
    l, c = design
    r = closed_loop_disturbance_sim(l, c, [123.0, 456.0], [1.0, 1.0], 20_000)
    periods = r.window_samples * 123.0 / l.sample_rate
    assert abs(periods - round(periods)) <= 123.0 / l.sample_rate
    assert r.window_samples + r.transient_samples <= 20_000


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(20.0, 3900.0), min_size=1, max_size=3, unique=True))
def test_consistency_with_frequency_response(design, freqs):
    l, c = design
    freqs = sorted(freqs)
    if min(np.diff(freqs), default=100.0) < 20.0:
        return
    amps = [1.0] * len(freqs)
    r = closed_loop_disturbance_sim(l, c, freqs, amps, 40_000)
    s = np.abs(achieved_sensitivity(l, c, freqs).values)
    big = s > 1e-3
    np.testing.assert_allclose(r.ratios[big], s[big], rtol=1e-2)
    assert np.all(r.ratios[~big] <= 2e-3)


def test_linearity(design):
    l, c = design
    a = closed_loop_disturbance_sim(l, c, [150.0, 900.0], [1.0, 0.3], 20_000)
    b = closed_loop_disturbance_sim(l, c, [150.0, 900.0], [2.0, 0.6], 20_000)
    np.testing.assert_allclose(np.array(b.steady_state_amplitude),
                               2 * np.array(a.steady_state_amplitude), rtol=1e-10)


def test_input_injection(design):
    l, c = design
    r = closed_loop_disturbance_sim(l, c, [900.0], [1.0], 20_000, injection="input", plant=l)
    w = 2 * np.pi * 900.0 / l.sample_rate
    s = achieved_sensitivity(l, c, [900.0]).values[0]
    assert r.ratios[0] == pytest.approx(abs(l.evaluate(np.array([w]))[0] * s), rel=1e-2)
    with pytest.raises(ValueError):
        closed_loop_disturbance_sim(l, c, [900.0], [1.0], 20_000, injection="input")
    with pytest.raises(ValueError):
        closed_loop_disturbance_sim(l, c, [900.0], [1.0], 20_000, injection="sideways")


def test_errors(design):
    l, c = design
    with pytest.raises(ValueError):
        closed_loop_disturbance_sim(l, c, [10.0], [1.0], 1_000)
    with pytest.raises(ValueError):
        closed_loop_disturbance_sim(l, c, [10.0], [1.0, 2.0], 40_000)
    with pytest.raises(ValueError):
        closed_loop_disturbance_sim(l, c, [l.sample_rate], [1.0], 40_000)
    unstable = series(l, RationalTF.gain(50.0, l.sample_rate))
    with pytest.raises(ValueError):
        closed_loop_disturbance_sim(unstable, StateSpace.static(1.0, l.sample_rate), [100.0],
                                    [1.0], 40_000)


def test_csv_export(design):
    l, c = design
    r = closed_loop_disturbance_sim(l, c, [700.0], [1.0], 5_000)
    lines = r.to_csv().splitlines()
    assert lines[0] == "k,e" and len(lines) == 5_001
    assert float(lines[10].split(",")[1]) == r.e[9]
