import math

import numpy as np
import pytest

from bdrelay.channel import (
    CapacitySet,
    ChannelDraw,
    ChannelStats,
    DiscreteGains,
    NodePowers,
    RayleighGains,
    capacity,
    db_to_linear,
    mode_capacities,
    mode_capacity_arrays,
    sample_gains,
    sample_uniforms,
)


def test_capacity_known_points():
    assert capacity(0.0) == 0.0
    assert capacity(1.0) == 1.0
    assert capacity(3.0) == 2.0
    assert math.isclose(capacity(2.0), 1.584962500721156, rel_tol=1e-15)


def test_capacity_array_matches_scalar():
    snr = np.array([0.0, 1.0, 2.0, 3.0, 10.0])
    out = capacity(snr)
    assert out.shape == snr.shape
    for s, c in zip(snr, out):
        assert c == capacity(float(s))


def test_capacity_rejects_bad_snr():
    with pytest.raises(ValueError):
        capacity(-0.5)
    with pytest.raises(ValueError):
        capacity(math.nan)
    with pytest.raises(ValueError):
        capacity(np.array([1.0, -2.0]))


def test_db_to_linear_known_points():
    assert db_to_linear(0.0) == 1.0
    assert db_to_linear(10.0) == 10.0
    assert math.isclose(db_to_linear(-10.0), 0.1, rel_tol=1e-15)
    assert math.isclose(db_to_linear(20.0), 100.0, rel_tol=1e-15)


def test_db_to_linear_rejects_nonfinite():
    with pytest.raises(ValueError):
        db_to_linear(math.inf)
    with pytest.raises(ValueError):
        db_to_linear(np.array([0.0, math.nan]))


def test_power_and_stats_validation():
    with pytest.raises(ValueError):
        NodePowers(p1=0.0, p2=1.0, pr=1.0)
    with pytest.raises(ValueError):
        NodePowers(p1=1.0, p2=-2.0, pr=1.0)
    with pytest.raises(ValueError):
        ChannelStats(omega1=1.0, omega2=0.0)
    with pytest.raises(ValueError):
        ChannelDraw(s1=-1.0, s2=0.0)
    powers = NodePowers.from_db(10.0, 10.0, 5.0)
    assert math.isclose(powers.p1, 10.0)
    assert math.isclose(powers.pr, db_to_linear(5.0))
    stats = ChannelStats.from_db(0.0, -10.0)
    assert stats.omega1 == 1.0


def test_mac_shares_at_unit_gains():
    caps = mode_capacities(ChannelDraw(1.0, 1.0), NodePowers(1.0, 1.0, 1.0))
    assert caps.c1r == 1.0
    assert caps.c2r == 1.0
    assert math.isclose(caps.cr, 1.584962500721156, rel_tol=1e-15)
    assert math.isclose(caps.c12r(0.5), 0.792481250360578, rel_tol=1e-15)
    assert math.isclose(caps.c21r(0.5), 0.792481250360578, rel_tol=1e-15)


def test_mac_share_endpoints():
    caps = CapacitySet(c1r=2.0, c2r=1.0, cr1=1.5, cr2=2.0, cr=2.5)
    assert caps.c12r(0.0) == caps.cr - caps.c2r
    assert caps.c21r(0.0) == caps.c2r
    assert caps.c12r(1.0) == caps.c1r
    assert caps.c21r(1.0) == caps.cr - caps.c1r
    with pytest.raises(ValueError):
        caps.c12r(-0.1)
    with pytest.raises(ValueError):
        caps.c21r(1.1)


def test_mac_shares_sum_to_mac_capacity():
    # the two decode-order shares must split the sum capacity exactly
    rng = np.random.default_rng(1234)
    powers = NodePowers(10.0, 10.0, 10.0)
    n = 100_000
    s1 = -1.5 * np.log(1.0 - rng.random(n))
    s2 = -0.7 * np.log(1.0 - rng.random(n))
    caps = mode_capacity_arrays(s1, s2, powers)
    for t in (0.0, 0.25, 0.5, 0.774, 1.0):
        gap = np.abs(caps.c12r(t) + caps.c21r(t) - caps.cr)
        assert np.all(gap <= 1e-12 * np.maximum(caps.cr, 1.0))


def test_scalar_and_array_capacities_agree():
    rng = np.random.default_rng(7)
    powers = NodePowers(3.0, 0.5, 8.0)
    s1 = rng.exponential(2.0, size=50)
    s2 = rng.exponential(0.3, size=50)
    arr = mode_capacity_arrays(s1, s2, powers)
    for i in range(s1.size):
        one = mode_capacities(ChannelDraw(float(s1[i]), float(s2[i])), powers)
        assert math.isclose(arr.c1r[i], one.c1r, rel_tol=1e-15)
        assert math.isclose(arr.c2r[i], one.c2r, rel_tol=1e-15)
        assert math.isclose(arr.cr1[i], one.cr1, rel_tol=1e-15)
        assert math.isclose(arr.cr2[i], one.cr2, rel_tol=1e-15)
        assert math.isclose(arr.cr[i], one.cr, rel_tol=1e-15)


def test_rayleigh_inverse_cdf():
    gains = RayleighGains(ChannelStats(omega1=2.0, omega2=0.5))
    u = math.exp(-1.0)
    s1, s2 = gains.from_uniforms(np.array([u]), np.array([u]))
    assert math.isclose(s1[0], 2.0, rel_tol=1e-12)
    assert math.isclose(s2[0], 0.5, rel_tol=1e-12)


def test_rayleigh_sample_mean():
    gains = RayleighGains(ChannelStats(omega1=3.0, omega2=0.25))
    rng = np.random.default_rng(99)
    s1, s2 = sample_gains(rng, gains, 200_000)
    assert abs(s1.mean() - 3.0) < 0.05
    assert abs(s2.mean() - 0.25) < 0.01
    assert np.all(s1 >= 0.0) and np.all(np.isfinite(s1))


def test_sample_uniforms_stay_in_half_open_interval():
    rng = np.random.default_rng(5)
    u1, u2 = sample_uniforms(rng, 100_000)
    assert u1.min() > 0.0 and u1.max() <= 1.0
    assert u2.min() > 0.0 and u2.max() <= 1.0


def test_discrete_gains_mapping():
    gains = DiscreteGains([0.0, 1.0, 4.0], [0.2, 0.5, 0.3],
                          [2.0], [1.0])
    u1 = np.array([0.05, 0.2, 0.21, 0.7, 0.71, 1.0])
    u2 = np.full(u1.shape, 1.0)
    s1, s2 = gains.from_uniforms(u1, u2)
    assert list(s1) == [0.0, 0.0, 1.0, 1.0, 4.0, 4.0]
    assert list(s2) == [2.0] * 6


def test_discrete_gains_validation():
    with pytest.raises(ValueError):
        DiscreteGains([1.0, 2.0], [0.6, 0.6], [1.0], [1.0])
    with pytest.raises(ValueError):
        DiscreteGains([1.0, -2.0], [0.5, 0.5], [1.0], [1.0])
    with pytest.raises(ValueError):
        DiscreteGains([1.0], [0.5, 0.5], [1.0], [1.0])
