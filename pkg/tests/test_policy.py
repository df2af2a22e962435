import json
import math

import numpy as np
import pytest

from bdrelay.channel import (
    CapacitySet,
    ChannelStats,
    NodePowers,
    RayleighGains,
    mode_capacity_arrays,
)
from bdrelay.policy import (
    COIN_LAYOUTS,
    CalibrationError,
    PolicyParams,
    build_calibration_sample,
    calibrate,
    coin_case,
    draw_coin_arrays,
    estimate_expectations,
    indicator_arrays,
    metric_arrays,
    select_mode,
    select_modes,
    tie_gate,
)

ORACLE_CAPS = CapacitySet(c1r=2.0, c2r=1.0, cr1=1.5, cr2=2.0, cr=2.5)


def fig3_scenario(omega1_db, pr_db, omega2_db=0.0):
    stats = ChannelStats.from_db(omega1_db, omega2_db)
    powers = NodePowers.from_db(10.0, 10.0, pr_db)
    return powers, stats


def test_metric_values_at_reference_point():
    lam = metric_arrays(ORACLE_CAPS, 0.5, 0.5, 0.0)
    assert lam.shape == (6,)
    np.testing.assert_allclose(lam, [1.0, 0.5, 1.25, 0.75, 1.0, 1.75],
                               rtol=0, atol=0)


def test_metric_shapes_and_broadcast_identity():
    # the broadcast score is always the sum of the two single-downlink scores
    rng = np.random.default_rng(11)
    powers = NodePowers(4.0, 2.0, 7.0)
    for _ in range(20):
        s1 = rng.exponential(1.3, size=256)
        s2 = rng.exponential(0.6, size=256)
        caps = mode_capacity_arrays(s1, s2, powers)
        mu1, mu2, t = rng.random(3)
        lam = metric_arrays(caps, mu1, mu2, t)
        assert lam.shape == (6, 256)
        np.testing.assert_allclose(lam[5], lam[3] + lam[4], rtol=1e-12)
        assert np.all(lam >= 0.0)


def test_selection_picks_highest_scoring_eligible_mode():
    lam = metric_arrays(ORACLE_CAPS, 0.5, 0.5, 0.0).reshape(6, 1)
    all_on = np.ones((6, 1), dtype=bool)
    assert select_modes(lam, all_on)[0] == 6
    # masking the winner promotes the runner-up
    no_m6 = all_on.copy()
    no_m6[5] = False
    assert select_modes(lam, no_m6)[0] == 3


def test_selection_breaks_ties_toward_lowest_index():
    lam = np.array([[1.0], [1.0], [1.0 - 1e-13], [0.5], [0.5], [0.5]])
    ind = np.ones((6, 1), dtype=bool)
    assert select_modes(lam, ind)[0] == 1
    ind[0] = False
    assert select_modes(lam, ind)[0] == 2


def test_scalar_selection_wrapper():
    params = PolicyParams(region="R0", mu1=0.5, mu2=0.5, t_share=0.0)
    assert select_mode(ORACLE_CAPS, params, "interior_t", {}) == 6


def test_policy_params_validation():
    with pytest.raises(ValueError):
        PolicyParams(region="R3", mu1=0.5, mu2=0.5, t_share=0.5)
    with pytest.raises(ValueError):
        PolicyParams(region="R0", mu1=1.5, mu2=0.5, t_share=0.5)
    with pytest.raises(ValueError):
        PolicyParams(region="R0", mu1=0.5, mu2=0.5, t_share=0.5, p3=-0.01)


def test_policy_params_json_round_trip():
    params = PolicyParams(region="R1", mu1=1.0, mu2=0.25, t_share=0.0,
                          p3=0.5, p4=0.1, p5=0.9)
    again = PolicyParams.from_json(params.to_json())
    assert again == params
    payload = json.loads(params.to_json())
    assert list(payload) == ["region", "mu1", "mu2", "t_share",
                             "p1", "p2", "p3", "p4", "p5"]


def test_policy_params_json_rejects_wrong_fields():
    good = PolicyParams(region="R0", mu1=0.4, mu2=0.4,
                        t_share=0.5).to_json_dict()
    missing = dict(good)
    del missing["t_share"]
    with pytest.raises(ValueError):
        PolicyParams.from_json_dict(missing)
    extra = dict(good)
    extra["bogus"] = 1.0
    with pytest.raises(ValueError):
        PolicyParams.from_json_dict(extra)


def test_coin_case_dispatch():
    pr = NodePowers(10.0, 10.0, 10.0)
    above = NodePowers(10.0, 10.0, 5.0)
    below = NodePowers(10.0, 10.0, 20.0)
    r1 = PolicyParams(region="R1", mu1=1.0, mu2=0.5, t_share=0.0)
    assert coin_case(r1, pr) == "p2_equal_pr"
    assert coin_case(r1, above) == "p2_above_pr"
    assert coin_case(r1, below) == "p2_below_pr"
    r2 = PolicyParams(region="R2", mu1=0.5, mu2=1.0, t_share=1.0)
    assert coin_case(r2, pr) == "p1_equal_pr"
    r0 = PolicyParams(region="R0", mu1=0.4, mu2=0.4, t_share=0.5)
    assert coin_case(r0, pr) == "interior_t"
    low = PolicyParams(region="R0", mu1=0.8, mu2=0.3, t_share=0.0)
    assert coin_case(low, pr) == "t_zero"
    tied = PolicyParams(region="R0", mu1=1.0, mu2=0.0, t_share=0.0,
                        p1=0.65, p2=0.94)
    assert coin_case(tied, pr) == "t_zero_tie"
    tied_hi = PolicyParams(region="R0", mu1=0.0, mu2=1.0, t_share=1.0,
                           p1=0.65, p2=0.94)
    assert coin_case(tied_hi, pr) == "t_one_tie"


def test_draw_coin_arrays_follows_layout():
    rng = np.random.default_rng(3)
    params = PolicyParams(region="R1", mu1=1.0, mu2=0.0, t_share=0.0,
                          p3=0.5, p4=0.25, p5=0.75)
    coins = draw_coin_arrays("p2_equal_pr", params, rng, 10_000)
    assert set(coins) == {"p3", "p4", "p5"}
    assert abs(coins["p3"].mean() - 0.5) < 0.02
    incomplete = PolicyParams(region="R1", mu1=1.0, mu2=0.0, t_share=0.0)
    with pytest.raises(ValueError):
        draw_coin_arrays("p2_equal_pr", incomplete, rng, 10)
    assert draw_coin_arrays("interior_t", incomplete, rng, 10) == {}


def coin_stub(case, n, rng):
    return {name: rng.random(n) < 0.5 for name in COIN_LAYOUTS[case]}


def test_indicator_layouts_leave_one_mode_eligible():
    rng = np.random.default_rng(17)
    n = 512
    for case in COIN_LAYOUTS:
        coins = coin_stub(case, n, rng)
        if case.endswith("_tie"):
            coins["up"] = rng.random(n) < 0.5
        ind = indicator_arrays(case, coins, n)
        assert ind.shape == (6, n)
        assert np.all(ind.any(axis=0))
    with pytest.raises(ValueError):
        indicator_arrays("bogus", {}, 4)


def test_indicator_layout_details():
    rng = np.random.default_rng(23)
    n = 256
    coins = coin_stub("p2_above_pr", n, rng)
    ind = indicator_arrays("p2_above_pr", coins, n)
    x = coins["p1"]
    assert not ind[0].any() and not ind[3].any() and not ind[4].any()
    assert ind[5].all()
    assert np.array_equal(ind[2], x) and np.array_equal(ind[1], ~x)
    ind = indicator_arrays("interior_t", {}, n)
    assert ind[2].all() and ind[5].all()
    assert not (ind[0] | ind[1] | ind[3] | ind[4]).any()
    coins = coin_stub("t_zero_tie", n, rng)
    coins["up"] = rng.random(n) < 0.6
    ind = indicator_arrays("t_zero_tie", coins, n)
    up, x = coins["up"], coins["p2"]
    assert np.array_equal(ind[2], up)
    assert not ind[3].any()
    assert np.array_equal(ind[4], ~up & ~x)
    assert np.array_equal(ind[5], ~up & x)
    # on every slot exactly one of the three rows fires
    assert np.all(ind[2] ^ ind[4] ^ ind[5])


def test_tie_gate_masks():
    caps = mode_capacity_arrays(np.array([0.1, 1.0, 5.0]),
                                np.array([0.2, 1.0, 0.3]),
                                NodePowers(10.0, 10.0, 10.0))
    params = PolicyParams(region="R0", mu1=1.0, mu2=0.0, t_share=0.0,
                          p1=0.6, p2=0.5)
    up = tie_gate(caps, params, "t_zero_tie")
    ratio = caps.cr / (caps.c2r + caps.cr1)
    assert np.array_equal(up, ratio >= 0.6)
    unset = PolicyParams(region="R0", mu1=1.0, mu2=0.0, t_share=0.0)
    with pytest.raises(ValueError):
        tie_gate(caps, unset, "t_zero_tie")
    with pytest.raises(ValueError):
        tie_gate(caps, params, "interior_t")


def test_calibration_symmetric_point_is_balanced():
    powers, stats = fig3_scenario(0.0, 10.0)
    res = calibrate(powers, stats, calib_samples=65536, seed=0)
    assert res.params.region == "R0"
    assert res.case == "interior_t"
    assert math.isclose(res.params.mu1, res.params.mu2, abs_tol=1e-12)
    assert abs(res.params.t_share - 0.5) < 0.02
    exp = estimate_expectations(powers, stats, res.params,
                                calib_samples=65536, seed=0)
    assert abs(exp["residual_b1"]) < 1e-3
    assert abs(exp["residual_b2"]) < 1e-3


def test_calibration_region_trajectory():
    # strong user-1 link pushes into R1, weak into R2, middle stays balanced
    expected = {-10.0: ("R2", "p1_equal_pr"), -4.0: ("R2", "p1_equal_pr"),
                0.0: ("R0", "interior_t"), 4.0: ("R0", "t_zero_tie"),
                10.0: ("R1", "p2_equal_pr")}
    for omega1_db, (region, case) in expected.items():
        powers, stats = fig3_scenario(omega1_db, 10.0)
        res = calibrate(powers, stats, calib_samples=32768, seed=0)
        assert (res.params.region, res.case) == (region, case), omega1_db


def test_calibration_relay_power_changes_sub_case():
    powers, stats = fig3_scenario(8.0, 5.0)
    res = calibrate(powers, stats, calib_samples=32768, seed=0)
    assert (res.params.region, res.case) == ("R1", "p2_above_pr")
    assert res.params.mu1 == 1.0
    powers, stats = fig3_scenario(8.0, 15.0)
    res = calibrate(powers, stats, calib_samples=32768, seed=0)
    assert (res.params.region, res.case) == ("R1", "p2_below_pr")
    assert res.params.mu2 == 0.0 and res.params.p2 is not None


def test_calibration_tied_point_balances_both_queues():
    powers, stats = fig3_scenario(4.0, 10.0)
    res = calibrate(powers, stats, calib_samples=65536, seed=0)
    assert res.case == "t_zero_tie"
    p = res.params
    assert (p.mu1, p.mu2, p.t_share) == (1.0, 0.0, 0.0)
    assert 0.0 <= p.p1 <= 1.0 and 0.0 <= p.p2 <= 1.0
    exp = estimate_expectations(powers, stats, p, calib_samples=65536, seed=0)
    assert abs(exp["residual_b1"]) < 1e-3
    assert abs(exp["residual_b2"]) < 1e-3
    # the mirrored geometry lands in the mirrored case
    powers = NodePowers.from_db(10.0, 10.0, 10.0)
    stats = ChannelStats.from_db(0.0, 4.0)
    res = calibrate(powers, stats, calib_samples=65536, seed=0)
    assert res.case == "t_one_tie"
    p = res.params
    assert (p.mu1, p.mu2, p.t_share) == (0.0, 1.0, 1.0)
    exp = estimate_expectations(powers, stats, p, calib_samples=65536, seed=0)
    assert abs(exp["residual_b1"]) < 1e-3
    assert abs(exp["residual_b2"]) < 1e-3


def test_calibration_sample_is_seed_stable():
    powers, stats = fig3_scenario(2.0, 10.0)
    gains = RayleighGains(stats)
    a = build_calibration_sample(powers, gains, 4096, seed=5)
    b = build_calibration_sample(powers, gains, 4096, seed=5)
    c = build_calibration_sample(powers, gains, 4096, seed=6)
    assert np.array_equal(a.cr, b.cr)
    assert not np.array_equal(a.cr, c.cr)
    with pytest.raises(ValueError):
        build_calibration_sample(powers, gains, 1, seed=0)


def test_calibration_fuzz_params_stay_in_range():
    rng = np.random.default_rng(424242)
    checked = 0
    for i in range(50):
        pr_db = float(rng.uniform(0.0, 16.0))
        if i % 10 == 7:
            p2_db = pr_db      # exercise the power-equality sub-cases
        else:
            p2_db = float(rng.uniform(0.0, 16.0))
        powers = NodePowers.from_db(float(rng.uniform(0.0, 16.0)), p2_db,
                                    pr_db)
        stats = ChannelStats.from_db(float(rng.uniform(-8.0, 8.0)),
                                     float(rng.uniform(-8.0, 8.0)))
        res = calibrate(powers, stats, calib_samples=8192, seed=9)
        p = res.params
        for name in ("mu1", "mu2", "t_share", "p1", "p2", "p3", "p4", "p5"):
            v = getattr(p, name)
            assert v is None or 0.0 <= v <= 1.0, (i, name, v)
        exp = estimate_expectations(powers, stats, p, calib_samples=8192,
                                    seed=9)
        assert abs(exp["residual_b1"]) < 8e-3, (i, res.case, exp)
        assert abs(exp["residual_b2"]) < 8e-3, (i, res.case, exp)
        checked += 1
    assert checked == 50
