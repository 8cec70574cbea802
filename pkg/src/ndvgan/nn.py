"""Parameterized layers built on :mod:`ndvgan.tensor`."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Parameter container; attributes that are tensors or modules are walked in insertion order."""

    def named_parameters(self, prefix=""):
        for name, val in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield full, val
            elif isinstance(val, Module):
                yield from val.named_parameters(full + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        for name, p in self.named_parameters():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.size != p.size:
                raise ValueError(f"parameter {name}: expected {p.size} values, got {arr.size}")
            p.data = arr.reshape(p.shape).copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def bias_init(rng, n, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return T.parameter(rng.uniform(-bound, bound, size=(n,)))


RELU_GAIN = np.sqrt(2.0)
LEAKY_GAIN = np.sqrt(2.0 / (1.0 + 0.2**2))


def uniform_init(rng, shape, fan_in, gain=1.0):
    """Uniform weights with variance gain^2 / fan_in (unit-variance outputs for unit-variance inputs)."""
    bound = gain * np.sqrt(3.0 / fan_in)
    return T.parameter(rng.uniform(-bound, bound, size=shape))


class Linear(Module):
    def __init__(self, n_in, n_out, rng, gain=1.0):
        self.weight = uniform_init(rng, (n_in, n_out), n_in, gain)
        self.bias = bias_init(rng, n_out, n_in)

    def forward(self, x):
        return x @ self.weight + self.bias


class Dense(Module):
    """Affine layer followed by a named activation."""

    def __init__(self, n_in, n_out, rng, activation="tanh"):
        self.affine = Linear(n_in, n_out, rng)
        self.activation = activation

    def forward(self, x):
        return T.apply_activation(self.affine(x), self.activation)


class ConvNd(Module):
    def __init__(self, c_in, c_out, kernel, stride, padding, rng, gain=1.0):
        kernel = tuple(kernel)
        fan_in = c_in * int(np.prod(kernel))
        self.weight = uniform_init(rng, (c_out, c_in) + kernel, fan_in, gain)
        self.bias = bias_init(rng, c_out, fan_in)
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        y = T.conv(x, self.weight, self.stride, self.padding)
        return y + self.bias.reshape((-1,) + (1,) * (y.ndim - 2))


class ConvTransposeNd(Module):
    def __init__(self, c_in, c_out, kernel, stride, padding, rng, gain=1.0):
        kernel = tuple(kernel)
        # each output position sees about prod(kernel / stride) taps per input channel
        strides = np.broadcast_to(stride, (len(kernel),))
        fan_in = max(1.0, c_in * float(np.prod(np.array(kernel) / strides)))
        self.weight = uniform_init(rng, (c_in, c_out) + kernel, fan_in, gain)
        self.bias = bias_init(rng, c_out, fan_in)
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        y = T.conv_transpose(x, self.weight, self.stride, self.padding)
        return y + self.bias.reshape((-1,) + (1,) * (y.ndim - 2))


def conv_out_len(n, k, s, p):
    return (n + 2 * p - k) // s + 1


def conv_transpose_out_len(n, k, s, p):
    return (n - 1) * s - 2 * p + k


class LSTMCell(Module):
    """Standard 4-gate cell with one combined weight over [input, hidden]."""

    def __init__(self, n_in, hidden, rng):
        self.hidden = hidden
        self.weight = T.parameter(rng.uniform(-1, 1, size=(n_in + hidden, 4 * hidden)) / np.sqrt(hidden))
        self.bias = bias_init(rng, 4 * hidden, hidden)

    def forward(self, x, h, c):
        gates = T.concat_features(x, h) @ self.weight + self.bias
        n = self.hidden
        i = gates[:, 0:n].sigmoid()
        f = gates[:, n : 2 * n].sigmoid()
        g = gates[:, 2 * n : 3 * n].tanh()
        o = gates[:, 3 * n : 4 * n].sigmoid()
        c = f * c + i * g
        h = o * c.tanh()
        return h, c
