"""Fixed-step ODE/SDE integrators over tensors.

Every step is built from differentiable tensor ops, so gradients of the
discrete trajectory come from backpropagating through the unrolled steps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DivergenceError, NumericError
from .tensor import Tensor

DIVERGENCE_LIMIT = 1e6
ODE_METHODS = ("euler", "rk4")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid from ``t_start`` to ``t_end`` with spacing 1/steps_per_unit.

    ``t_end < t_start`` gives a grid stepping backwards in time.
    """

    t_start: float
    t_end: float
    steps_per_unit: float

    def __post_init__(self):
        if self.steps_per_unit <= 0:
            raise ContractError("steps_per_unit must be positive")
        if self.t_end == self.t_start:
            raise ContractError("time grid is empty (t_end == t_start)")
        exact = abs(self.t_end - self.t_start) * self.steps_per_unit
        if abs(exact - round(exact)) > 1e-9 * max(1.0, exact):
            raise ContractError(
                f"(t_end - t_start) * steps_per_unit = {exact} is not an integer step count"
            )

    @property
    def n_steps(self):
        return int(round(abs(self.t_end - self.t_start) * self.steps_per_unit))

    @property
    def h(self):
        return (self.t_end - self.t_start) / self.n_steps

    def times(self):
        return self.t_start + self.h * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class SolverConfig:
    method: str
    grid: TimeGrid

    def __post_init__(self):
        if self.method not in ODE_METHODS + ("euler_maruyama",):
            raise ContractError(f"unknown solver method {self.method!r}")


@dataclass(frozen=True)
class WienerPath:
    """Brownian increments, one per solver step: ``increments[k] ~ N(0, |h| I)``."""

    dim: int
    grid: TimeGrid
    increments: np.ndarray
    seed: int

    def path(self):
        """Cumulative W at every grid node, starting from W_0 = 0."""
        return np.concatenate([np.zeros((1, self.dim)), np.cumsum(self.increments, axis=0)])


def sample_wiener(dim, grid, seed):
    """Sample increments with numpy's PCG64 bit generator and its ziggurat normal sampler.

    The same (dim, grid, seed) always gives the same increments.
    """
    if dim < 1:
        raise ContractError("Wiener path dimension must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    inc = rng.standard_normal((grid.n_steps, dim)) * np.sqrt(abs(grid.h))
    inc.setflags(write=False)
    return WienerPath(dim=dim, grid=grid, increments=inc, seed=seed)


def _check(z, step):
    d = z.data
    if not np.isfinite(d).all():
        raise DivergenceError(step, "non-finite state")
    if np.abs(d).max(initial=0.0) > DIVERGENCE_LIMIT:
        raise DivergenceError(step, f"|state| exceeded {DIVERGENCE_LIMIT:g}")


def _euler_step(f, z, t, h):
    return z + f(z, t) * h


def _rk4_step(f, z, t, h):
    k1 = f(z, t)
    k2 = f(z + k1 * (h / 2), t + h / 2)
    k3 = f(z + k2 * (h / 2), t + h / 2)
    k4 = f(z + k3 * h, t + h)
    return z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6)


def integrate_ode(f, z0, config):
    """States at every node of ``config.grid``; ``f(state, t)`` returns the derivative."""
    if config.method not in ODE_METHODS:
        raise ContractError(f"integrate_ode needs one of {ODE_METHODS}, got {config.method!r}")
    step_fn = _rk4_step if config.method == "rk4" else _euler_step
    z = T.as_tensor(z0)
    grid = config.grid
    times, h = grid.times(), grid.h
    out = [z]
    for k in range(grid.n_steps):
        try:
            z = step_fn(f, z, times[k], h)
        except NumericError as exc:
            raise DivergenceError(k, str(exc)) from exc
        if z.shape != out[0].shape:
            raise ContractError(f"vector field changed state shape {out[0].shape} -> {z.shape}")
        _check(z, k)
        out.append(z)
    return out


def integrate_sde(mu, sigma, z0, wiener, config):
    """Euler-Maruyama with diagonal diffusion: z + mu*h + sigma * dW."""
    if config.method != "euler_maruyama":
        raise ContractError("integrate_sde requires method 'euler_maruyama'")
    grid = config.grid
    if grid.t_end < grid.t_start:
        raise ContractError("SDE integration backwards in time is not supported")
    if wiener.grid != grid or wiener.increments.shape[0] != grid.n_steps:
        raise ContractError("Wiener path grid does not match solver grid")
    z = T.as_tensor(z0)
    if wiener.increments.shape[1] != z.size:
        raise ContractError(f"Wiener dim {wiener.increments.shape[1]} != state size {z.size}")
    times, h = grid.times(), grid.h
    out = [z]
    for k in range(grid.n_steps):
        dw = wiener.increments[k].reshape(z.shape)
        try:
            t = times[k]
            s = sigma(z, t)
            if s.shape != z.shape:
                raise ContractError(f"diffusion shape {s.shape} != state shape {z.shape}")
            z = z + mu(z, t) * h + s * Tensor(dw)
        except NumericError as exc:
            raise DivergenceError(k, str(exc)) from exc
        _check(z, k)
        out.append(z)
    return out


def augment_to_first_order(f, order, d):
    """Turn a field for the ``order``-th derivative into a first-order field.

    The augmented state is [z, z', ..., z^(order-1)] along the last axis;
    ``f`` receives that whole state and returns the top derivative.
    """
    if order not in (1, 2, 3):
        raise ContractError(f"order must be 1, 2 or 3, got {order}")
    if order == 1:
        return f

    def field(state, t):
        if state.shape[-1] != order * d:
            raise ContractError(f"augmented state width {state.shape[-1]} != {order}*{d}")
        return T.concat([state[..., d:], f(state, t)], axis=-1)

    return field


def node_index(grid, t):
    """Index of the grid node at time ``t`` (must lie on the grid)."""
    k = (t - grid.t_start) / grid.h
    kr = int(round(k))
    if abs(k - kr) > 1e-9 or not 0 <= kr <= grid.n_steps:
        raise ContractError(f"time {t} is not a node of the grid")
    return kr
