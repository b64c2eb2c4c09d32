import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ykshaping.bench_plants import dual_stage_plan, make_dual_stage_fixture, make_minimum_phase_fixture
from ykshaping.inversion import zpetc_inverse
from ykshaping.lti import RationalTF, StateSpace, bode_integral, sensitivity, series
from ykshaping.polynomial import Polynomial
from ykshaping.qdesign import NotchSpec, build_q, scale_depth
from ykshaping.ykloop import (DesignDestabilized, DesignPlan, RealizabilityError,
                              achieved_sensitivity, cascade_design, inverse_yk_controller,
                              iterate_design, predicted_sensitivity, run_design,
                              std_yk_controller, summary_dict)

FS = 1000.0
W = np.linspace(0.0, np.pi, 257)[1:]
GROUPS = [[NotchSpec(120.0), NotchSpec(180.0)], [NotchSpec(300.0)],
          [NotchSpec(510.0), NotchSpec(700.0)]]


@pytest.fixture(scope="module")
def mp():
    return make_minimum_phase_fixture()


@pytest.fixture(scope="module")
def mp_records(mp):
    return iterate_design(mp, DesignPlan(GROUPS))


# ------------------------------------------------------------------ std YK

def test_std_yk_q_zero_returns_c():
    c = RationalTF([1.0, -0.3], [1.0, 0.2], FS)
    out = std_yk_controller(c, [0, 1], [1, -1], RationalTF([0.0], [1.0], FS))
    np.testing.assert_allclose(out.evaluate(W), c.evaluate(W), rtol=1e-14)


def test_std_yk_hand_algebra():
    out = std_yk_controller(RationalTF.gain(1.0, FS), [0, 1], [1, -1], RationalTF.gain(1.0, FS))
    np.testing.assert_allclose(out.evaluate(W), (2 - np.exp(-1j * W)) / (1 - np.exp(-1j * W)),
                               rtol=1e-13)


def test_std_yk_sensitivity_identity():
    # P = N/D with N C + D = 1, so S_all = (1 - N Q) / (1 + P C)
    n, d = Polynomial([0, 1]), Polynomial([1, -1])
    c = RationalTF.gain(1.0, FS)
    q = RationalTF([0.3, 0.1], [1.0, -0.5], FS)
    call = std_yk_controller(c, n, d, q)
    p = RationalTF(n, d, FS)
    got = sensitivity(series(p, call)).evaluate(W)
    want = (1 - n.on_unit_circle(W) * q.evaluate(W)) / (1 + p.evaluate(W) * c.evaluate(W))
    assert np.max(np.abs(got - want)) <= 1e-10


def test_std_yk_realizability_error():
    with pytest.raises(RealizabilityError):
        std_yk_controller(RationalTF.gain(1.0, FS), [1.0], [1.0], RationalTF.gain(1.0, FS))


def test_std_yk_rejects_unstable_q():
    with pytest.raises(ValueError):
        std_yk_controller(RationalTF.gain(1.0, FS), [0, 1], [1], RationalTF([1], [1, -1.5], FS))


# -------------------------------------------------------------- inverse YK

def test_inverse_yk_q_zero(mp):
    inv = zpetc_inverse(mp)
    c = RationalTF.gain(1.0, mp.sample_rate)
    assert inverse_yk_controller(c, inv, build_q([], inv.m, mp.sample_rate)) is c


def test_inverse_yk_delay_mismatch(mp):
    inv = zpetc_inverse(mp)
    with pytest.raises(ValueError):
        inverse_yk_controller(RationalTF.gain(1.0, mp.sample_rate), inv,
                              build_q([NotchSpec(300.0)], inv.m + 1, mp.sample_rate))


@settings(max_examples=25, deadline=None)
@given(st.floats(60.0, 3800.0), st.floats(5.0, 40.0), st.floats(0.2, 1.0))
def test_inverse_yk_exact_identity_min_phase(mp, f0, bw, g):
    fs = mp.sample_rate
    inv = zpetc_inverse(mp)
    q = scale_depth(build_q([NotchSpec(f0, bw)], inv.m, fs), g)
    c = inverse_yk_controller(RationalTF.gain(1.0, fs), inv, q)
    w = np.linspace(0.0, np.pi, 2049)[1:]
    s = sensitivity(series(mp, c)).evaluate(w)
    want = sensitivity(mp).evaluate(w) * q.shaping_evaluate(w)
    assert np.max(np.abs(s - want)) <= 1e-10


def test_inverse_yk_internal_model_poles(mp):
    fs = mp.sample_rate
    inv = zpetc_inverse(mp)
    f0 = 440.0
    c = inverse_yk_controller(RationalTF.gain(1.0, fs), inv, build_q([NotchSpec(f0)], inv.m, fs))
    assert isinstance(c, RationalTF)
    target = np.exp(1j * 2 * np.pi * f0 / fs)
    p = c.poles()
    assert np.min(np.abs(p - target)) <= 1e-6 and np.min(np.abs(p - target.conjugate())) <= 1e-6


def test_inverse_yk_state_space_path_matches_rational(mp):
    fs = mp.sample_rate
    inv = zpetc_inverse(mp)
    q = build_q([NotchSpec(300.0)], inv.m, fs)
    tf = inverse_yk_controller(RationalTF.gain(1.0, fs), inv, q)
    ss = inverse_yk_controller(StateSpace.static(1.0, fs), inv, q)
    w = np.linspace(0.01, np.pi, 300)
    np.testing.assert_allclose(ss.evaluate(w), tf.evaluate(w), rtol=1e-9)


# -------------------------------------------------------------- predictions

def test_predicted_examples(mp):
    fs = mp.sample_rate
    f = np.array([50.0, 120.0, 180.0, 900.0])
    s0 = achieved_sensitivity(mp, StateSpace.static(1.0, fs), f)
    np.testing.assert_array_equal(predicted_sensitivity(s0, build_q([], 2, fs)).values, s0.values)
    q = build_q([NotchSpec(120.0), NotchSpec(180.0)], 2, fs)
    v = predicted_sensitivity(s0, q).values
    assert abs(v[1]) < 1e-12 and abs(v[2]) < 1e-12


def test_predicted_product_associative(mp_records, mp):
    final = mp_records[-1].sensitivity_predicted.values
    s = mp_records[0].sensitivity_achieved.values.copy()
    w = mp_records[0].sensitivity_achieved.w
    for r in mp_records[1:]:
        for q in r.qfilters:
            s = s * q.shaping_evaluate(w)
    assert np.max(np.abs(s - final)) <= 1e-12


def test_achieved_unity_controller_is_baseline(mp):
    f = np.linspace(1.0, mp.sample_rate / 2, 100)
    a = achieved_sensitivity(mp, StateSpace.static(1.0, mp.sample_rate), f).values
    np.testing.assert_allclose(a, sensitivity(mp).evaluate(2 * np.pi * f / mp.sample_rate),
                               rtol=1e-12)


# ------------------------------------------------------------------ driver

def test_empty_plan_is_baseline(mp):
    rec = iterate_design(mp, DesignPlan(()))
    assert len(rec) == 1 and rec[0].stage_index == 0
    np.testing.assert_array_equal(rec[0].sensitivity_achieved.values,
                                  rec[0].sensitivity_predicted.values)


def test_single_notch_depth_and_gap(mp):
    rec = iterate_design(mp, DesignPlan([[NotchSpec(250.0)]]))
    r = rec[-1]
    s_t = achieved_sensitivity(mp, r.controller_reduced, [250.0]).values[0]
    assert 20 * np.log10(abs(s_t) + 1e-300) <= -60.0
    f = r.sensitivity_achieved.freqs_hz
    off = (np.abs(f - 250.0) > 1.0) & (f > 0)
    gap = np.abs(20 * np.log10(np.abs(r.sensitivity_achieved.values[off])
                               / np.abs(r.sensitivity_predicted.values[off])))
    assert np.nanmax(gap[np.isfinite(gap)]) <= 2.0


@pytest.mark.parametrize("red", [None, 4])
def test_exact_identity_every_stage(mp, red):
    rec = iterate_design(mp, DesignPlan(GROUPS, reduction_order=red))
    for r in rec[1:]:
        gap = np.abs(r.sensitivity_achieved.values - r.sensitivity_predicted.values)
        assert gap.max() <= 1e-10
        assert r.stable
        assert all(d >= 100.0 for d in r.notch_depths_db.values())


def test_waterbed_every_stage(mp_records):
    for r in mp_records:
        assert abs(r.bode_integral_value) <= 2e-2
        assert r.bode_integral_value == pytest.approx(bode_integral(r.sensitivity_achieved))


@pytest.mark.parametrize("red", [2, 3, 4])
def test_order_accounting(mp, red):
    rec = iterate_design(mp, DesignPlan(GROUPS, reduction_order=red))
    n = 0
    for r in rec[1:]:
        n += len(r.qfilters)
        assert r.surplus == 0
        assert r.controller_reduced.order <= n * red


def test_destabilized_run_reports_failed_stage():
    fx = make_dual_stage_fixture()
    with pytest.raises(DesignDestabilized) as ei:
        iterate_design(fx.l_ss, dual_stage_plan(4, cancel_radius=0.95))
    e = ei.value
    assert len(e.records) == 1 and e.records[0].stage_index == 0
    assert e.failed.max_pole_modulus >= 1.0 and not e.failed.stable


def test_unstable_baseline_rejected():
    l = RationalTF([0, 3.0], [1, -0.5], FS)
    with pytest.raises(ValueError):
        iterate_design(l, DesignPlan([[NotchSpec(100.0)]]))


def test_plan_validation():
    with pytest.raises(ValueError):
        DesignPlan([[NotchSpec(100.0)], [NotchSpec(100.0)]])
    with pytest.raises(ValueError):
        DesignPlan([[NotchSpec(100.0)]], reduction_order=1)
    with pytest.raises(ValueError):
        DesignPlan([[]])
    with pytest.raises(ValueError):
        DesignPlan([[NotchSpec(100.0)]], mode="other")
    with pytest.raises(TypeError):
        DesignPlan([[100.0]])
    p = DesignPlan([[NotchSpec(300.0), NotchSpec(100.0)]])
    assert [s.freq_hz for s in p.specs] == [100.0, 300.0]


def test_plan_m_checked(mp):
    with pytest.raises(ValueError):
        iterate_design(mp, DesignPlan([[NotchSpec(100.0)]], m=5))


def test_summary_json_ready(mp_records):
    doc = summary_dict(mp_records, DesignPlan(GROUPS))
    text = json.dumps(doc, allow_nan=False)
    assert json.loads(text)["n_notches"] == 5
    assert len(doc["stages"]) == 4


# ----------------------------------------------------------------- cascade

def test_cascade_single_stage_equals_iterate(mp):
    groups = [[NotchSpec(300.0)]]
    a = iterate_design(mp, DesignPlan(groups, cancel_radius=0.999))
    b = run_design(mp, DesignPlan(groups, cancel_radius=0.999, mode="cascaded_method2"))
    assert np.max(np.abs(a[-1].sensitivity_achieved.values
                         - b[-1].sensitivity_achieved.values)) <= 1e-9


def test_cascade_loop_order_grows(mp):
    rec = cascade_design(mp, DesignPlan(GROUPS, cancel_radius=0.999, mode="cascaded_method2"))
    orders = [r.loop_order for r in rec]
    assert all(b > a for a, b in zip(orders, orders[1:]))
    assert orders[-1] >= 20 * orders[0]
    assert all(r.stable for r in rec)


def test_cascade_accumulates_more_inversion_error():
    fx = make_dual_stage_fixture()
    groups = [[NotchSpec(f, 7.64) for f in g] for g in ((120.0, 180.0), (229.0, 290.0))]
    it = iterate_design(fx.l_ss, DesignPlan(groups, reduction_order=4, cancel_radius=0.999))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ca = cascade_design(fx.l_ss, DesignPlan(groups, reduction_order=4, cancel_radius=0.999,
                                                 mode="cascaded_method2"))
    acc = [r.accumulated_inversion_error for r in ca]
    assert all(b >= a for a, b in zip(acc, acc[1:]))
    assert acc[-1] >= it[-1].accumulated_inversion_error
