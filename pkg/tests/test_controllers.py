import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evoctrl.controllers import (RegulatoryPolicy, ReservoirNet, decode_swarm_genotype,
                                 encode_swarm_genotype, load_reservoirs, regulatory_probability,
                                 regulatory_update, reservoir_forward, reservoir_init, save_reservoirs)

unit_inputs = st.lists(st.floats(-1, 1), min_size=9, max_size=9)


def test_zero_readout_gives_zero_output():
    net = reservoir_init(np.random.default_rng(0), 2.0)
    assert reservoir_forward(net, np.random.default_rng(1).uniform(-1, 1, 9)) == (0.0, 0.0)
    assert reservoir_forward(net, np.zeros(9)) == (0.0, 0.0)


def test_init_is_seeded_and_bounded():
    a = reservoir_init(np.random.default_rng(7), 1.0)
    b = reservoir_init(np.random.default_rng(7), 1.0)
    assert np.array_equal(a.w_h1, b.w_h1) and np.array_equal(a.w_h2, b.w_h2)
    rng = np.random.default_rng(0)
    draws = np.concatenate([reservoir_init(rng, 1.0).w_h1.ravel() for _ in range(125)])
    assert draws.size >= 10_000 and np.max(np.abs(draws)) <= 1.0
    with pytest.raises(ValueError):
        reservoir_init(rng, 0.0)


def test_hidden_weights_are_read_only():
    net = reservoir_init(np.random.default_rng(0), 2.0)
    with pytest.raises(ValueError):
        net.w_h1[0, 0] = 5.0


def test_hand_forward_pass():
    w_out = np.zeros((2, 9))
    w_out[0, 0] = 1.0
    net = ReservoirNet(np.eye(9), np.eye(9), w_out)
    v, w = reservoir_forward(net, np.eye(9)[0])
    assert math.isclose(v, math.tanh(1.0), rel_tol=1e-15) and w == 0.0
    assert math.isclose(v, 0.7616, abs_tol=1e-4)


def test_zero_hidden_network_ignores_input_sign():
    net = ReservoirNet(np.zeros((9, 9)), np.zeros((9, 9)), np.ones((2, 9)))
    s = np.linspace(-1, 1, 9)
    assert reservoir_forward(net, s) == reservoir_forward(net, -s) == (0.0, 0.0)


def test_forward_only_maps_speed_to_unit_interval():
    net = ReservoirNet(np.zeros((9, 9)), np.zeros((9, 9)))
    assert reservoir_forward(net, np.zeros(9), forward_only=True) == (0.5, 0.0)


def test_forward_rejects_non_finite_input():
    net = reservoir_init(np.random.default_rng(0), 2.0)
    with pytest.raises(ValueError):
        reservoir_forward(net, [np.nan] + [0.0] * 8)
    with pytest.raises(ValueError):
        reservoir_forward(net, np.zeros(8))


@settings(max_examples=200, deadline=None)
@given(unit_inputs, st.integers(0, 2**32 - 1), st.booleans())
def test_outputs_bounded(s, seed, forward_only):
    rng = np.random.default_rng(seed)
    net = decode_swarm_genotype(rng.uniform(-10, 10, 18), [reservoir_init(rng, 2.0)])[0]
    v, w = reservoir_forward(net, s, forward_only)
    assert -1 <= v <= 1 and -1 <= w <= 1
    if forward_only:
        assert v >= 0


@settings(max_examples=100, deadline=None)
@given(unit_inputs, st.integers(0, 2**32 - 1), st.integers(0, 8), st.floats(0.01, 1.0))
def test_output_monotone_in_readout(s, seed, b, delta):
    rng = np.random.default_rng(seed)
    base = reservoir_init(rng, 2.0)
    x = rng.uniform(-1, 1, 18)
    h2 = np.maximum(base.w_h2 @ np.maximum(base.w_h1 @ np.asarray(s), 0), 0)
    bumped = x.copy()
    bumped[b] += delta  # v-row entry b
    v0, _ = reservoir_forward(decode_swarm_genotype(x, [base])[0], s)
    v1, _ = reservoir_forward(decode_swarm_genotype(bumped, [base])[0], s)
    assert v1 >= v0 if h2[b] > 0 else v1 == v0


def test_decode_zero_and_identical_halves():
    rng = np.random.default_rng(2)
    res = [reservoir_init(rng, 1.0), reservoir_init(rng, 1.0)]
    for net in decode_swarm_genotype(np.zeros(36), res):
        assert reservoir_forward(net, rng.uniform(-1, 1, 9)) == (0.0, 0.0)
    half = rng.uniform(-1, 1, 18)
    shared = [res[0], res[0]]
    a, b = decode_swarm_genotype(np.concatenate([half, half]), shared)
    s = rng.uniform(-1, 1, 9)
    assert reservoir_forward(a, s) == reservoir_forward(b, s)


def test_decode_block_layout():
    res = [reservoir_init(np.random.default_rng(0), 1.0)]
    x = np.arange(18.0)
    net = decode_swarm_genotype(x, res)[0]
    assert net.w_out[0].tolist() == list(range(9)) and net.w_out[1].tolist() == list(range(9, 18))
    with pytest.raises(ValueError):
        decode_swarm_genotype(np.zeros(36), res)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=36, max_size=36))
def test_heterogeneous_round_trip(x):
    rng = np.random.default_rng(0)
    res = [reservoir_init(rng, 1.0), reservoir_init(rng, 1.0)]
    assert encode_swarm_genotype(decode_swarm_genotype(x, res)).tolist() == x


def test_reservoir_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    res = decode_swarm_genotype(rng.normal(size=36), [reservoir_init(rng, 1.0), reservoir_init(rng, 1.0)])
    save_reservoirs(res, tmp_path / "r.json", seed=3)
    back = load_reservoirs(tmp_path / "r.json")
    for a, b in zip(res, back):
        assert np.array_equal(a.w_h1, b.w_h1) and np.array_equal(a.w_h2, b.w_h2)
        assert np.array_equal(a.w_out, b.w_out)


@pytest.mark.parametrize("light, p", [(255, 1.0), (230, 1.0), (229, 0.75), (100, 0.75),
                                      (76.0001, 0.75), (76, 0.5), (0, 0.5)])
def test_regulatory_bands(light, p):
    assert regulatory_probability(light) == p


def test_regulatory_rejects_out_of_range_light():
    with pytest.raises(ValueError):
        regulatory_probability(256.0)
    with pytest.raises(ValueError):
        regulatory_probability(-1.0)


@pytest.mark.parametrize("kwargs", [dict(probabilities=(1.0, 0.5)), dict(probabilities=(1.2, 0.5, 0.5)),
                                    dict(thresholds=(76.0, 229.0)), dict(update_period=0.0)])
def test_policy_validation(kwargs):
    with pytest.raises(ValueError):
        RegulatoryPolicy(**kwargs)


def test_bright_light_always_picks_first_group():
    rng = np.random.default_rng(0)
    assert all(regulatory_update(1, 255.0, rng) == 0 for _ in range(1000))


@pytest.mark.parametrize("light, p", [(255.0, 1.0), (150.0, 0.75), (0.0, 0.5)])
def test_regulatory_frequencies(light, p):
    rng = np.random.default_rng(11)
    freq = np.mean([regulatory_update(0, light, rng) == 0 for _ in range(10_000)])
    assert abs(freq - p) <= 0.02
