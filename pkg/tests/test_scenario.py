import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfmimo.scenario import (PRESETS, ConfigError, Geometry, SystemConfig, assign_pilots,
                             distance_matrix, generate_drop, hata_constant,
                             large_scale_coefficient, load_config, noise_power, path_loss_db,
                             wrapped_distance)


def brute_force_wrap(a, b, side, dh):
    best = np.inf
    for sx, sy in itertools.product((-side, 0.0, side), repeat=2):
        d = np.hypot(a[0] - b[0] - sx, a[1] - b[1] - sy)
        best = min(best, np.sqrt(d * d + dh * dh))
    return best


coord = st.floats(0.0, 1000.0, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(coord, coord, coord, coord)
def test_wrapped_distance_matches_nine_copies(ax, ay, bx, by):
    side, dh = 1000.0, 13.35
    got = wrapped_distance(np.array([ax, ay]), np.array([bx, by]), side, dh)
    assert got == pytest.approx(brute_force_wrap((ax, ay), (bx, by), side, dh), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(coord, coord, coord, coord)
def test_wrapped_distance_is_symmetric_and_bounded(ax, ay, bx, by):
    a, b = np.array([ax, ay]), np.array([bx, by])
    d = wrapped_distance(a, b, 1000.0)
    assert d == pytest.approx(wrapped_distance(b, a, 1000.0))
    assert d <= np.sqrt(2) * 500.0 + 1e-9


def test_hata_constant_reference_value():
    # COST-231 Hata at 1.9 GHz with 15 m / 1.65 m antennas is 140.7 dB
    assert hata_constant(SystemConfig(carrier_freq=1.9e9)) == pytest.approx(140.715, abs=1e-3)


def test_noise_power_reference_value():
    # -174 dBm/Hz + 10 log10(20 MHz) + 9 dB = -91.97 dBm
    dbm = 10 * np.log10(noise_power(SystemConfig())) + 30
    assert dbm == pytest.approx(-174 + 10 * np.log10(20e6) + 9, abs=0.05)


def test_path_loss_slopes():
    cfg = SystemConfig()
    pl = lambda d: float(path_loss_db(d, cfg))
    assert pl(1.0) == pl(cfg.d0) == pl(5.0)
    assert pl(cfg.d1 / 2) - pl(cfg.d1) == pytest.approx(20 * np.log10(2))
    assert pl(200.0) - pl(400.0) == pytest.approx(35 * np.log10(2))
    # continuous at both breakpoints
    assert pl(cfg.d1 * (1 + 1e-9)) == pytest.approx(pl(cfg.d1), abs=1e-6)
    assert pl(cfg.d0 * (1 + 1e-9)) == pytest.approx(pl(cfg.d0), abs=1e-6)


def test_shadowing_only_beyond_far_breakpoint():
    cfg = SystemConfig()
    d = np.array([5.0, 30.0, 50.0, 80.0, 300.0])
    shadow = np.full(d.shape, 6.0)
    ratio_db = 10 * np.log10(large_scale_coefficient(d, shadow, cfg)
                             / large_scale_coefficient(d, np.zeros_like(d), cfg))
    np.testing.assert_allclose(ratio_db, [0, 0, 0, 6, 6], atol=1e-9)


def test_beta_is_noise_normalized():
    cfg = SystemConfig()
    beta = large_scale_coefficient(np.array([100.0]), np.zeros(1), cfg)
    expected = 10 ** (path_loss_db(100.0, cfg) / 10) / noise_power(cfg)
    assert beta[0] == pytest.approx(expected)


def test_distance_matrix_shape_and_height_floor():
    cfg = SystemConfig(L=3, M=4, K=2, tau_p=2)
    geo = Geometry(ap_positions=np.zeros((3, 2)), ue_positions=np.zeros((2, 2)))
    d = distance_matrix(geo, cfg)
    assert d.shape == (3, 2)
    np.testing.assert_allclose(d, cfg.ap_height - cfg.ue_height)


@pytest.mark.parametrize("kw", [
    dict(L=0), dict(tau_p=5, K=4), dict(tau_p=300, K=400, tau_c=200), dict(L=1, M=2, K=2, tau_p=1),
    dict(xi_dl=0.0), dict(xi_dl=1.5), dict(d0=60.0), dict(pilot_mode="greedy"),
])
def test_invalid_configs_rejected(kw):
    with pytest.raises(ConfigError):
        SystemConfig(**kw)


def test_fpzf_requires_more_antennas_than_pilots():
    with pytest.raises(ConfigError):
        SystemConfig(L=4, M=3, K=4, tau_p=3).require_fpzf()
    SystemConfig(L=4, M=4, K=4, tau_p=3).require_fpzf()


def test_presets_valid_for_fpzf():
    for cfg in PRESETS.values():
        cfg.require_fpzf()
    assert PRESETS["desk"].L == 64 and PRESETS["desk"].M == 16


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"preset": "desk", "K": 8}))
    cfg = load_config(path)
    assert cfg == PRESETS["desk"].replace(K=8)
    path.write_text(json.dumps(cfg.to_dict()))
    assert SystemConfig.from_file(path) == cfg
    path.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ConfigError):
        SystemConfig.from_file(path)


def test_pilot_assignment_modes():
    p = assign_pilots(7, 3, mode="distinct")
    np.testing.assert_array_equal(p.index, [0, 1, 2, 0, 1, 2, 0])
    assert p.same_pilot()[0, 3] and not p.same_pilot()[0, 1]
    np.testing.assert_array_equal(p.cochannel(0), [0, 3, 6])
    r = assign_pilots(50, 4, seed=1)
    assert r.index.min() >= 0 and r.index.max() < 4
    with pytest.raises(ValueError):
        assign_pilots(3, 2, mode="other")


def test_drop_is_deterministic_and_seed_sensitive():
    cfg = PRESETS["small"]
    a, b, c = generate_drop(cfg, 3), generate_drop(cfg, 3), generate_drop(cfg, 4)
    np.testing.assert_array_equal(a.beta, b.beta)
    np.testing.assert_array_equal(a.pilots.index, b.pilots.index)
    assert not np.array_equal(a.beta, c.beta)
    assert np.all(a.beta > 0) and np.all(np.isfinite(a.beta))
    assert a.beta.shape == (cfg.L, cfg.K)
