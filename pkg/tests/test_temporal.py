import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ndvgan.errors import CapabilityError, ConfigurationError, ContractError
from ndvgan.nn import conv_transpose_out_len
from ndvgan.solvers import SolverConfig, TimeGrid, integrate_ode
from ndvgan.tensor import Tensor
from ndvgan.temporal import (
    TemporalGeneratorSpec,
    baseline_nonlinearities,
    build_temporal_generator,
    count_parameters,
    extrapolate_backward,
    generate_latents,
    match_parameter_budget,
    prepend_depth_for,
    two_layer_params,
)


def spec(family="ode", d=4, T=8, **kw):
    return TemporalGeneratorSpec(family=family, latent_dim=d, num_frames=T, **kw)


def zc(n=3, d=4, seed=0):
    return np.random.default_rng(seed).standard_normal((n, d))


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        spec(family="gru")
    with pytest.raises(ConfigurationError):
        spec(family="sde", order=2)
    with pytest.raises(ConfigurationError):
        spec(fx_shape="equal_params")
    with pytest.raises(ConfigurationError):
        spec(param_budget=100)
    with pytest.raises(ConfigurationError):
        spec(T=1)
    assert spec(order=3).label == "ode3"


def test_parameter_counts_at_d50():
    assert count_parameters(build_temporal_generator(spec(d=50, T=16))) == 2550
    assert count_parameters(build_temporal_generator(spec(d=50, T=16, fx_shape="two_layer"))) == 5100
    assert count_parameters(build_temporal_generator(spec("lstm", d=50, T=16))) == 4 * (2 * 50 * 50 + 50) == 20200
    base = count_parameters(build_temporal_generator(spec(d=50, T=16)))
    deeper = count_parameters(build_temporal_generator(spec(d=50, T=16, prepend_fcn_depth=1)))
    assert deeper - base == 50 * 50 + 50


def test_sde_has_two_networks():
    assert count_parameters(build_temporal_generator(spec("sde", d=5))) == 2 * (25 + 5)


def test_conv1d_length_doubling():
    d = 50
    gen = build_temporal_generator(spec("conv1d", d=d, T=16))
    assert len(gen.layers) == 4
    n, lengths = 1, [1]
    for _ in gen.layers:
        n = conv_transpose_out_len(n, 4, 2, 1)
        lengths.append(n)
    assert lengths == [1, 2, 4, 8, 16]
    traj = gen(zc(2, d))
    assert traj.num_frames == 16 and traj.frames[0].shape == (2, d)


def test_conv1d_unreachable_length_suggests():
    with pytest.raises(ConfigurationError, match="try 8 or 16"):
        build_temporal_generator(spec("conv1d", T=12))


def test_lstm_shape_and_range():
    traj = build_temporal_generator(spec("lstm", d=6, T=16))(zc(4, 6) * 5)
    assert traj.num_frames == 16
    for z in traj.frames:
        assert z.shape == (4, 6) and np.all(np.abs(z.data) < 1)


def test_zero_field_is_constant():
    gen = build_temporal_generator(spec(order=2))
    for p in gen.f.parameters():
        p.data = np.zeros_like(p.data)
    traj = gen(zc())
    for z in traj.frames:
        assert np.array_equal(z.data, traj.frames[0].data)
    assert np.array_equal(traj.frames[0].data, zc())
    for z in extrapolate_backward(gen, traj, 3):
        assert np.array_equal(z.data, traj.frames[0].data)


def test_prepend_fcn_sets_initial_state():
    gen = build_temporal_generator(spec(prepend_fcn_depth=2))
    traj = gen(zc())
    expected = np.tanh(np.tanh(zc() @ gen.prepend[0].affine.weight.data + gen.prepend[0].affine.bias.data)
                       @ gen.prepend[1].affine.weight.data + gen.prepend[1].affine.bias.data)
    assert np.allclose(traj.frames[0].data, expected, rtol=0, atol=1e-15)


@pytest.mark.parametrize("family,order", [("ode", 1), ("ode", 3), ("sde", 1)])
def test_oversample_bit_matches_frames(family, order):
    gen = build_temporal_generator(spec(family, order=order))
    base = gen(zc(), noise_seed=5)
    dense = gen(zc(), oversample=2, noise_seed=5)
    assert len(dense.dense) == (8 - 1) * 2 + 1
    for i, z in enumerate(base.frames):
        assert np.array_equal(z.data, dense.frames[i].data)
        assert np.array_equal(z.data, dense.dense[2 * i].data)
    assert np.allclose(dense.dense_times[:3], [0.0, 0.5, 1.0])
    with pytest.raises(ContractError):
        gen(zc(), oversample=3, noise_seed=5)


def test_field_outputs_bounded():
    for family in ("ode", "sde"):
        gen = build_temporal_generator(spec(family, d=5))
        x = Tensor(np.random.default_rng(1).standard_normal((50, 5)) * 2)
        f = gen.f if family == "ode" else gen.mu
        assert np.all(np.abs(f(x).data) < 1)
        if family == "sde":
            s = gen.sigma(x).data
            assert np.all((s > 0) & (s < 0.5))


def test_capability_matrix():
    for family in ("conv1d", "lstm"):
        gen = build_temporal_generator(spec(family))
        with pytest.raises(CapabilityError):
            gen(zc(), oversample=2)
        with pytest.raises(CapabilityError):
            extrapolate_backward(gen, gen(zc()), 2)
    sde = build_temporal_generator(spec("sde"))
    sde(zc(), oversample=2, noise_seed=1)
    with pytest.raises(CapabilityError):
        extrapolate_backward(sde, sde(zc(), noise_seed=1), 2)
    ode = build_temporal_generator(spec(order=2))
    ode(zc(), oversample=4)
    assert len(extrapolate_backward(ode, ode(zc()), 3)) == 3


def test_sde_requires_seed():
    with pytest.raises(ContractError):
        build_temporal_generator(spec("sde"))(zc())


@pytest.mark.parametrize("order", [1, 2, 3])
def test_backward_forward_round_trip(order):
    gen = build_temporal_generator(spec(order=order))
    traj = gen(zc())
    n = 4
    back = extrapolate_backward(gen, traj, n)
    # restart from the full state at -n and integrate forward again
    s = gen.steps_per_unit
    states = integrate_ode(gen.field(), traj.initial_state, SolverConfig("rk4", TimeGrid(0.0, -float(n), s)))
    fwd = integrate_ode(gen.field(), states[-1], SolverConfig("rk4", TimeGrid(-float(n), 0.0, s)))
    z0 = traj.initial_state.data
    assert np.linalg.norm(fwd[-1].data - z0) / np.linalg.norm(z0) < 1e-4
    assert np.array_equal(back[-1].data, states[-1].data[:, :4] if order > 1 else states[-1].data)


def test_backward_linear_field_analytic():
    a = 0.7
    gen = build_temporal_generator(spec(d=1))
    layer = gen.f.layers[0]
    layer.activation = "relu"  # ż = a·z is linear on z > 0
    layer.affine.weight.data = np.array([[a]])
    layer.affine.bias.data = np.zeros(1)
    traj = gen(np.array([[0.8]]), num_frames=2)
    back = extrapolate_backward(gen, traj, 1)
    assert back[0].data[0, 0] == pytest.approx(0.8 * math.exp(-a), abs=1e-4)


def test_generate_latents_wrapper_and_determinism():
    for family in ("conv1d", "lstm", "ode", "sde"):
        a = generate_latents(build_temporal_generator(spec(family, seed=3)), zc(), noise_seed=9)
        b = generate_latents(build_temporal_generator(spec(family, seed=3)), zc(), noise_seed=9)
        assert all(np.array_equal(x.data, y.data) for x, y in zip(a.frames, b.frames))
        assert a.num_frames == 8


def test_budget_examples():
    d = 50
    assert match_parameter_budget(two_layer_params(d, 37), d) == 37
    brute = min(range(1, 4097), key=lambda w: (abs(two_layer_params(d, w) - 20200), w))
    assert match_parameter_budget(20200, d) == brute
    with pytest.raises(ConfigurationError):
        match_parameter_budget(10, d)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 3), st.integers(1, 2), st.integers(0, 30000))
def test_budget_matches_bruteforce(d, depth, networks, extra):
    fixed = depth * (d * d + d)

    def count(w):
        return fixed + networks * two_layer_params(d, w)

    target = count(1) + extra
    brute = min(range(1, target + 2), key=lambda w: (abs(count(w) - target), w))
    assert match_parameter_budget(target, d, depth, networks) == brute
    assert match_parameter_budget(target + 7, d, depth, networks) >= brute


@pytest.mark.parametrize("family,base", [("ode", "conv1d"), ("sde", "lstm"), ("ode", "lstm")])
def test_equal_params_within_two_percent(family, base):
    d, T = 50, 16
    depth = prepend_depth_for(base, T)
    budget = count_parameters(build_temporal_generator(spec(base, d=d, T=T)))
    gen = build_temporal_generator(
        spec(family, d=d, T=T, fx_shape="equal_params", param_budget=budget, prepend_fcn_depth=depth)
    )
    assert abs(count_parameters(gen) - budget) / budget <= 0.02


def test_prepend_rule():
    assert baseline_nonlinearities("conv1d", 16) == 4
    assert prepend_depth_for("conv1d", 16) == 3
    assert prepend_depth_for("lstm", 16) == 0
    with pytest.raises(ContractError):
        baseline_nonlinearities("ode", 16)


def test_single_layer_ode_smaller_than_baselines():
    d, T = 50, 16
    ode = count_parameters(build_temporal_generator(spec(d=d, T=T)))
    assert ode < count_parameters(build_temporal_generator(spec("conv1d", d=d, T=T)))
    assert ode < count_parameters(build_temporal_generator(spec("lstm", d=d, T=T)))


def test_replace_keeps_validation():
    with pytest.raises(ConfigurationError):
        replace(spec(), family="lstm", order=2)
