import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ndvgan import tensor as T
from ndvgan.errors import ContractError, DivergenceError
from ndvgan.solvers import (
    SolverConfig,
    TimeGrid,
    augment_to_first_order,
    integrate_ode,
    integrate_sde,
    node_index,
    sample_wiener,
)
from ndvgan.tensor import Tensor


def ode(method, t0, t1, s):
    return SolverConfig(method, TimeGrid(t0, t1, s))


def final(states):
    return states[-1].data


def growth_error(method, s):
    return abs(final(integrate_ode(lambda z, t: z, Tensor([1.0]), ode(method, 0.0, 1.0, s)))[0] - math.e)


def test_grid_nodes():
    g = TimeGrid(0.0, 2.0, 4)
    assert g.n_steps == 8 and g.h == 0.25
    assert g.times()[0] == 0.0 and g.times()[-1] == 2.0
    with pytest.raises(ContractError):
        TimeGrid(1.0, 1.0, 4)
    with pytest.raises(ContractError):
        TimeGrid(0.0, 1.1, 4)
    assert node_index(g, 1.5) == 6
    with pytest.raises(ContractError):
        node_index(g, 0.1)


def test_zero_field_is_constant():
    z0 = Tensor([[0.3, -2.0]])
    for m in ("euler", "rk4"):
        for z in integrate_ode(lambda z, t: z * 0.0, z0, ode(m, 0.0, 3.0, 2)):
            assert np.array_equal(z.data, z0.data)


def test_rk4_exponential():
    assert growth_error("rk4", 4) < 1e-4


def test_rk4_polynomial_integrand_exact():
    out = integrate_ode(lambda z, t: z * 0.0 + t, Tensor([0.0]), ode("rk4", 0.0, 2.0, 3))
    assert final(out)[0] == pytest.approx(2.0, abs=1e-14)


@pytest.mark.parametrize("method,lo,hi", [("euler", 1.8, 2.2), ("rk4", 14.0, 18.0)])
def test_convergence_order(method, lo, hi):
    for s in (4, 8, 16):
        ratio = growth_error(method, s) / growth_error(method, 2 * s)
        assert lo <= ratio <= hi, (s, ratio)


def test_divergence_reports_step():
    with pytest.raises(DivergenceError) as info:
        integrate_ode(lambda z, t: z * z, Tensor([10.0]), ode("euler", 0.0, 10.0, 1))
    assert info.value.step is not None


def test_ode_rejects_em():
    with pytest.raises(ContractError):
        integrate_ode(lambda z, t: z, Tensor([1.0]), ode("euler_maruyama", 0.0, 1.0, 4))


def test_time_reversal_round_trip():
    w = np.array([[0.3, -0.8], [0.5, 0.2]])

    def f(z, t):
        return (z @ Tensor(w)).tanh()

    z0 = Tensor([[0.7, -0.4]])
    zt = final(integrate_ode(f, z0, ode("rk4", 0.0, 5.0, 4)))
    back = final(integrate_ode(f, Tensor(zt), ode("rk4", 5.0, 0.0, 4)))
    assert np.linalg.norm(back - z0.data) / np.linalg.norm(z0.data) < 1e-4


def test_grid_refinement_consistency():
    w = np.array([[0.1, -1.0], [1.0, 0.1]])

    def f(z, t):
        return (z @ Tensor(w)).tanh()

    z0 = Tensor([[1.0, 0.5]])
    coarse = integrate_ode(f, z0, ode("rk4", 0.0, 6.0, 4))
    fine = integrate_ode(f, z0, ode("rk4", 0.0, 6.0, 8))
    for i in range(7):
        a, b = coarse[4 * i].data, fine[8 * i].data
        assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-3


def test_harmonic_oscillator():
    field = augment_to_first_order(lambda s, t: -s[..., 0:1], 2, 1)
    grid = TimeGrid(0.0, math.pi, 64 / math.pi)
    assert grid.h == pytest.approx(math.pi / 64)
    out = integrate_ode(field, Tensor([[1.0, 0.0]]), SolverConfig("rk4", grid))
    assert final(out)[0, 0] == pytest.approx(-1.0, abs=1e-3)


def test_third_order_polynomial():
    z0, v0, a0, t_end = 0.5, -1.25, 0.75, 3.0
    field = augment_to_first_order(lambda s, t: s[..., 0:1] * 0.0, 3, 1)
    out = integrate_ode(field, Tensor([[z0, v0, a0]]), ode("rk4", 0.0, t_end, 4))
    assert final(out)[0, 0] == pytest.approx(z0 + v0 * t_end + a0 * t_end**2 / 2, abs=1e-12)


def test_order_one_passthrough():
    f = lambda z, t: z  # noqa: E731
    assert augment_to_first_order(f, 1, 3) is f
    with pytest.raises(ContractError):
        augment_to_first_order(f, 4, 3)


def test_wiener_path_basics():
    g = TimeGrid(0.0, 1.0, 8)
    a, b = sample_wiener(3, g, 11), sample_wiener(3, g, 11)
    assert a.increments.shape == (8, 3)
    assert np.array_equal(a.increments, b.increments)
    assert np.array_equal(a.path()[0], np.zeros(3))
    assert not a.increments.flags.writeable
    with pytest.raises(ContractError):
        sample_wiener(0, g, 1)


def test_wiener_increment_statistics():
    inc = sample_wiener(1, TimeGrid(0.0, 10000.0, 10), 2024).increments.ravel()
    assert inc.size == 100_000
    assert -0.01 <= inc.mean() <= 0.01
    assert 0.095 <= inc.var(ddof=1) <= 0.105


def em(mu, sigma, z0, t_end, s, seed):
    grid = TimeGrid(0.0, t_end, s)
    w = sample_wiener(Tensor(z0).size, grid, seed)
    return integrate_sde(mu, sigma, Tensor(z0), w, SolverConfig("euler_maruyama", grid)), w


def test_sde_zero_diffusion_matches_euler():
    mu = lambda z, t: (z * 1.3).tanh() - z * 0.2  # noqa: E731
    z0 = np.array([[0.4, -0.9, 1.5]])
    sde, _ = em(mu, lambda z, t: z * 0.0, z0, 4.0, 8, 5)
    ref = integrate_ode(mu, Tensor(z0), ode("euler", 0.0, 4.0, 8))
    for a, b in zip(sde, ref):
        assert np.array_equal(a.data, b.data)


def test_sde_constant_diffusion_telescopes():
    c = 0.7
    out, w = em(lambda z, t: z * 0.0, lambda z, t: z * 0.0 + c, np.array([0.25, -1.0]), 2.0, 8, 9)
    assert np.allclose(out[-1].data, np.array([0.25, -1.0]) + c * w.path()[-1], rtol=0, atol=1e-14)


def test_sde_unit_variance():
    # 10,000 independent paths integrated as one batched state
    out, _ = em(lambda z, t: z * 0.0, lambda z, t: z * 0.0 + 1.0, np.zeros(10_000), 1.0, 8, 31337)
    assert 0.95 <= out[-1].data.var(ddof=1) <= 1.05


def test_sde_rejects_backward_and_mismatch():
    g = TimeGrid(1.0, 0.0, 4)
    with pytest.raises(ContractError):
        integrate_sde(lambda z, t: z, lambda z, t: z, Tensor([0.0]), sample_wiener(1, g, 0), SolverConfig("euler_maruyama", g))
    g2 = TimeGrid(0.0, 1.0, 4)
    with pytest.raises(ContractError):
        integrate_sde(
            lambda z, t: z,
            lambda z, t: z,
            Tensor([0.0]),
            sample_wiener(1, TimeGrid(0.0, 1.0, 8), 0),
            SolverConfig("euler_maruyama", g2),
        )


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-2, 2), st.floats(0.05, 1.0))
def test_sde_deterministic_given_path(seed, z0, scale):
    mu = lambda z, t: (z * scale).tanh()  # noqa: E731
    sigma = lambda z, t: (z * 0.3).sigmoid() * 0.5  # noqa: E731
    a, _ = em(mu, sigma, np.array([z0]), 2.0, 4, seed)
    b, _ = em(mu, sigma, np.array([z0]), 2.0, 4, seed)
    assert np.array_equal(a[-1].data, b[-1].data)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-2, 2))
def test_linear_field_matches_closed_form(z0, rate):
    out = integrate_ode(lambda z, t: z * rate, Tensor([z0]), ode("rk4", 0.0, 1.0, 16))
    assert final(out)[0] == pytest.approx(z0 * math.exp(rate), rel=1e-5, abs=1e-9)


def test_solver_gradients_flow_to_parameters():
    w = T.parameter(np.array([[0.4, -0.3], [0.2, 0.5]]))
    z0 = Tensor([[0.5, -1.0]])
    f = lambda: T.tensor_sum(integrate_ode(lambda z, t: (z @ w).tanh(), z0, ode("rk4", 0.0, 2.0, 4))[-1])  # noqa: E731
    assert T.grad_check(f, [w]) < 1e-6
