"""Finite-difference verification of every trainable block, end to end through the solvers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .ablation import spec_for_family
from .gan import build_gan
from .tensor import Tensor
from .temporal import build_temporal_generator


@dataclass
class GradcheckResult:
    block: str
    max_error: float
    worst_param: str
    worst_index: int


def _check(block, named, f, eps, hook):
    names = [n for n, _ in named]
    params = [p for _, p in named]
    report = T.grad_check(f, params, eps=eps, analytic_hook=hook, report=True)
    k = int(np.argmax([e for e, _ in report]))
    return GradcheckResult(block, report[k][0], names[k], report[k][1])


def _projection(rng, shape):
    # a random readout keeps every output entry in play and avoids symmetric cancellation
    return Tensor(rng.standard_normal(shape))


def _corrupt_first_entry(grads):
    grads[0].reshape(-1)[0] += 1.0


def run_gradcheck(config, families, eps=1e-5, inject_fault=False, batch=2):
    """grad_check each temporal family, the image generator and the discriminator.

    Each block is reduced to a scalar by a fixed random projection of its
    outputs. ``inject_fault`` corrupts one analytic gradient entry per block
    so that the harness can be shown to fail.
    """
    hook = _corrupt_first_entry if inject_fault else None
    rng = np.random.default_rng(config.gan.noise_seed)
    d = config.temporal.latent_dim
    n_frames = config.temporal.num_frames
    solver = config.solver.generator_kwargs()
    results = []

    z_c = rng.standard_normal((batch, d))
    readout = _projection(rng, (n_frames, batch, d))
    for name in families:
        spec = spec_for_family(name, config.temporal)
        gen = build_temporal_generator(spec, **solver)
        noise_seed = int(rng.integers(2**31))

        def f(gen=gen, noise_seed=noise_seed):
            traj = gen(z_c, noise_seed=noise_seed)
            return T.tensor_sum(T.stack(traj.frames) * readout)

        results.append(_check(f"gt.{name}", list(gen.named_parameters()), f, eps, hook))

    gan = build_gan(config.gan, config.temporal, config.dataset, solver)
    x = Tensor(rng.standard_normal((batch, 2 * d)))
    img_shape = (batch, 1, config.dataset.height, config.dataset.width)
    img_readout = _projection(rng, img_shape)
    results.append(
        _check("gi", list(gan.image.named_parameters()), lambda: T.tensor_sum(gan.image(x) * img_readout), eps, hook)
    )

    video = Tensor(rng.uniform(size=(batch, n_frames) + img_shape[1:]))
    score_readout = _projection(rng, (batch,))
    results.append(
        _check("d", list(gan.disc.named_parameters()), lambda: T.tensor_sum(gan.disc(video) * score_readout), eps, hook)
    )
    return results
