"""Temporal generators: map a content vector z_c to latents z_0..z_{T-1}.

Families: ``conv1d`` and ``lstm`` (discrete baselines), ``ode`` (orders 1-3)
and ``sde``. Continuous families integrate a learned field whose final
activation is tanh (sigmoid * 0.5 for the diffusion), with an optional FCN
applied to z_c beforehand.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import CapabilityError, ConfigurationError, ContractError
from .nn import RELU_GAIN, ConvTransposeNd, Dense, LSTMCell, Module
from .solvers import (
    SolverConfig,
    TimeGrid,
    augment_to_first_order,
    integrate_ode,
    integrate_sde,
    sample_wiener,
)
from .tensor import Tensor

FAMILIES = ("conv1d", "lstm", "ode", "sde")
FX_SHAPES = ("single_layer", "two_layer", "equal_params")
DIFFUSION_SCALE = 0.5


@dataclass
class TemporalGeneratorSpec:
    family: str
    latent_dim: int
    num_frames: int
    order: int = 1
    fx_shape: str = "single_layer"
    prepend_fcn_depth: int = 0
    param_budget: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}; expected {FAMILIES}", "family")
        if self.fx_shape not in FX_SHAPES:
            raise ConfigurationError(f"unknown fx_shape {self.fx_shape!r}; expected {FX_SHAPES}", "fx_shape")
        if self.order not in (1, 2, 3):
            raise ConfigurationError("order must be 1, 2 or 3", "order")
        if self.order > 1 and self.family != "ode":
            raise ConfigurationError("order > 1 is only defined for the ode family", "order")
        if (self.param_budget is not None) != (self.fx_shape == "equal_params"):
            raise ConfigurationError("param_budget is required iff fx_shape == 'equal_params'", "param_budget")
        if self.latent_dim < 1:
            raise ConfigurationError("latent_dim must be >= 1", "latent_dim")
        if self.num_frames < 2:
            raise ConfigurationError("num_frames must be >= 2", "num_frames")
        if self.prepend_fcn_depth < 0:
            raise ConfigurationError("prepend_fcn_depth must be >= 0", "prepend_fcn_depth")

    @property
    def label(self):
        if self.family == "ode":
            return f"ode{self.order}"
        return self.family

    def to_dict(self):
        return asdict(self)


@dataclass
class LatentTrajectory:
    """z_c plus per-frame latents; ``dense`` holds latents at spacing 1/oversample."""

    z_c: Tensor
    frames: list
    dense: list | None = None
    dense_times: np.ndarray | None = None
    initial_state: Tensor | None = field(default=None, repr=False)

    @property
    def num_frames(self):
        return len(self.frames)


# --- parameter bookkeeping --------------------------------------------------------
def two_layer_params(d, w):
    return d * w + w + w * d + d


def match_parameter_budget(target, d, depth=0, networks=1):
    """Hidden width w of a d->w->d field whose generator count is closest to ``target``.

    ``depth`` prepend layers (d*d + d each) and ``networks`` copies of the
    field (2 for drift + diffusion) are included in the count. Ties go to
    the smaller width.
    """
    fixed = depth * (d * d + d)

    def count(w):
        return fixed + networks * two_layer_params(d, w)

    if target < count(1):
        raise ConfigurationError(
            f"parameter budget {target} is below the minimum {count(1)} (w=1)", "param_budget"
        )
    slope = networks * (2 * d + 1)
    guess = max(1, (target - fixed - networks * d) // slope)
    best = min((w for w in (guess, guess + 1) if w >= 1), key=lambda w: (abs(count(w) - target), w))
    return best


def baseline_nonlinearities(family, num_frames):
    """Activation layers in a discrete baseline's temporal generator."""
    if family == "conv1d":
        return conv1d_layers(num_frames)
    if family == "lstm":
        return 1
    raise ContractError(f"{family!r} is not a baseline family")


def prepend_depth_for(baseline, num_frames):
    """FCN depth that gives an ODE/SDE variant the baseline's nonlinearity count."""
    return baseline_nonlinearities(baseline, num_frames) - 1


def conv1d_layers(num_frames):
    n = int(round(math.log2(num_frames))) if num_frames > 0 else 0
    if num_frames < 2 or 2**n != num_frames:
        lo = 2 ** max(1, int(math.floor(math.log2(max(num_frames, 2)))))
        raise ConfigurationError(
            f"conv1d temporal generator doubles length per layer; num_frames={num_frames} "
            f"is unreachable (try {lo} or {lo * 2})",
            "num_frames",
        )
    return n


# --- generators -----------------------------------------------------------------------
class TemporalGenerator(Module):
    supports_oversample = False
    supports_backward = False

    def forward(self, z_c, num_frames=None, oversample=1, noise_seed=None):
        raise NotImplementedError


def _as_batch(z_c, d):
    z = T.as_tensor(z_c)
    if z.ndim == 1:
        z = z.reshape(1, -1)
    if z.ndim != 2 or z.shape[1] != d:
        raise ContractError(f"z_c must have trailing dimension {d}, got shape {z.shape}")
    return z


class Conv1dTemporal(TemporalGenerator):
    """Transposed 1-D convolutions (kernel 4, stride 2, pad 1) doubling 1 -> T."""

    def __init__(self, spec, rng):
        self.spec = spec
        d = spec.latent_dim
        n = conv1d_layers(spec.num_frames)
        gains = [RELU_GAIN] * (n - 1) + [1.0]
        self.layers = [ConvTransposeNd(d, d, (4,), 2, 1, rng, g) for g in gains]

    def forward(self, z_c, num_frames=None, oversample=1, noise_seed=None):
        d, n_frames = self.spec.latent_dim, self.spec.num_frames
        if num_frames not in (None, n_frames):
            raise CapabilityError(f"conv1d generator is fixed at {n_frames} frames")
        if oversample != 1:
            raise CapabilityError("oversampling is not supported by the conv1d family")
        z = _as_batch(z_c, d)
        x = z.reshape(z.shape[0], d, 1)
        for i, layer in enumerate(self.layers):
            x = layer(x)
            x = x.tanh() if i == len(self.layers) - 1 else x.relu()
        frames = [x[:, :, t] for t in range(n_frames)]
        return LatentTrajectory(z_c=z, frames=frames)


class LSTMTemporal(TemporalGenerator):
    """Single LSTM cell fed z_c at every step; the hidden state is the frame latent."""

    def __init__(self, spec, rng):
        self.spec = spec
        self.cell = LSTMCell(spec.latent_dim, spec.latent_dim, rng)

    def forward(self, z_c, num_frames=None, oversample=1, noise_seed=None):
        if oversample != 1:
            raise CapabilityError("oversampling is not supported by the lstm family")
        n_frames = num_frames or self.spec.num_frames
        z = _as_batch(z_c, self.spec.latent_dim)
        h = Tensor(np.zeros(z.shape))
        c = Tensor(np.zeros(z.shape))
        frames = []
        for _ in range(n_frames):
            h, c = self.cell(z, h, c)
            frames.append(h)
        return LatentTrajectory(z_c=z, frames=frames)


class FieldNet(Module):
    """f: R^d -> R^d in one of the ablation shapes. ``out`` picks the final squashing."""

    def __init__(self, d, fx_shape, rng, hidden=None, out="tanh"):
        self.out = out
        if fx_shape == "single_layer":
            widths = [d, d]
        elif fx_shape == "two_layer":
            widths = [d, d, d]
        else:
            widths = [d, hidden, d]
        last = "sigmoid" if out == "half_sigmoid" else "tanh"
        self.layers = [
            Dense(a, b, rng, "tanh" if i < len(widths) - 2 else last)
            for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))
        ]

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x * DIFFUSION_SCALE if self.out == "half_sigmoid" else x


class ContinuousTemporal(TemporalGenerator):
    supports_oversample = True

    def __init__(self, spec, rng, method, steps_per_unit, networks):
        self.spec = spec
        d = spec.latent_dim
        self.method = method
        self.steps_per_unit = steps_per_unit
        self.prepend = [Dense(d, d, rng, "tanh") for _ in range(spec.prepend_fcn_depth)]
        self.hidden = None
        if spec.fx_shape == "equal_params":
            self.hidden = match_parameter_budget(spec.param_budget, d, spec.prepend_fcn_depth, networks)

    def initial_state(self, z):
        z0 = z
        for layer in self.prepend:
            z0 = layer(z0)
        order = self.spec.order
        if order > 1:
            # higher derivatives start at rest
            z0 = T.concat([z0, Tensor(np.zeros((z.shape[0], (order - 1) * z.shape[1])))], axis=-1)
        return z0

    def _grid(self, n_frames):
        return TimeGrid(0.0, float(n_frames - 1), self.steps_per_unit)

    def _read(self, z, states, n_frames, oversample):
        d = self.spec.latent_dim
        s = self.steps_per_unit
        if s % oversample:
            raise ContractError(f"oversample {oversample} must divide steps_per_unit {s}")
        pos = [st[:, :d] if self.spec.order > 1 else st for st in states]
        frames = [pos[i * s] for i in range(n_frames)]
        stride = s // oversample
        dense = pos[::stride] if oversample > 1 else None
        times = np.arange(len(pos))[::stride] / s if oversample > 1 else None
        return LatentTrajectory(z_c=z, frames=frames, dense=dense, dense_times=times, initial_state=states[0])


class ODETemporal(ContinuousTemporal):
    supports_backward = True

    def __init__(self, spec, rng, method="rk4", steps_per_unit=4):
        super().__init__(spec, rng, method, steps_per_unit, networks=1)
        self.f = FieldNet(spec.latent_dim, spec.fx_shape, rng, self.hidden)

    def field(self):
        d = self.spec.latent_dim
        order = self.spec.order
        if order == 1:
            return lambda state, t: self.f(state)
        return augment_to_first_order(lambda state, t: self.f(state[:, :d]), order, d)

    def forward(self, z_c, num_frames=None, oversample=1, noise_seed=None):
        n_frames = num_frames or self.spec.num_frames
        z = _as_batch(z_c, self.spec.latent_dim)
        cfg = SolverConfig(self.method, self._grid(n_frames))
        states = integrate_ode(self.field(), self.initial_state(z), cfg)
        return self._read(z, states, n_frames, oversample)


class SDETemporal(ContinuousTemporal):
    def __init__(self, spec, rng, steps_per_unit=8):
        super().__init__(spec, rng, "euler_maruyama", steps_per_unit, networks=2)
        self.mu = FieldNet(spec.latent_dim, spec.fx_shape, rng, self.hidden)
        self.sigma = FieldNet(spec.latent_dim, spec.fx_shape, rng, self.hidden, out="half_sigmoid")

    def forward(self, z_c, num_frames=None, oversample=1, noise_seed=None):
        if noise_seed is None:
            raise ContractError("the sde family needs a noise_seed to fix its Wiener path")
        n_frames = num_frames or self.spec.num_frames
        z = _as_batch(z_c, self.spec.latent_dim)
        grid = self._grid(n_frames)
        wiener = sample_wiener(z.size, grid, noise_seed)
        states = integrate_sde(
            lambda s, t: self.mu(s),
            lambda s, t: self.sigma(s),
            self.initial_state(z),
            wiener,
            SolverConfig("euler_maruyama", grid),
        )
        return self._read(z, states, n_frames, oversample)


def build_temporal_generator(spec, ode_method="rk4", ode_steps_per_unit=4, sde_steps_per_unit=8):
    """Construct the generator for ``spec`` with parameters drawn from ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    if spec.family == "conv1d":
        return Conv1dTemporal(spec, rng)
    if spec.family == "lstm":
        return LSTMTemporal(spec, rng)
    if spec.family == "ode":
        return ODETemporal(spec, rng, ode_method, ode_steps_per_unit)
    return SDETemporal(spec, rng, sde_steps_per_unit)


def generate_latents(generator, z_c, num_frames=None, oversample=1, noise_seed=None):
    return generator(z_c, num_frames=num_frames, oversample=oversample, noise_seed=noise_seed)


def extrapolate_backward(generator, trajectory, n_frames):
    """Latents at times -1, -2, ..., -n obtained by integrating from z_0 backwards."""
    if not generator.supports_backward:
        raise CapabilityError(
            f"backward extrapolation is not supported by the {generator.spec.family} family"
        )
    if n_frames < 1:
        return []
    state0 = trajectory.initial_state
    s = generator.steps_per_unit
    cfg = SolverConfig(generator.method, TimeGrid(0.0, -float(n_frames), s))
    states = integrate_ode(generator.field(), state0, cfg)
    d = generator.spec.latent_dim
    return [states[i * s][:, :d] if generator.spec.order > 1 else states[i * s] for i in range(1, n_frames + 1)]


def count_parameters(generator):
    return generator.num_parameters()
