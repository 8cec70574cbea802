"""Image generator, video discriminator, adversarial losses and the training loop."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import synth_dataset
from .errors import ConfigurationError, ContractError, NumericError, ShapeError
from .formats import read_csv, read_ndck, write_csv, write_ndck
from .metrics import gaussian_stats, stride_plan, surrogate_metrics, train_probe
from .nn import LEAKY_GAIN, RELU_GAIN, ConvNd, ConvTransposeNd, Linear, Module
from .tensor import Adam, Tensor, no_grad
from .temporal import build_temporal_generator

log = logging.getLogger(__name__)

PHIS = ("bce", "hinge", "identity")
METRICS_HEADER = (
    "step", "family", "order", "fx_shape", "param_count", "is_mean", "is_std", "fid", "loss_d", "loss_g",
)
EVAL_STREAM = 7919  # distinct seed stream for the fixed evaluation noise


@dataclass
class GanConfig:
    phi: str = "bce"
    batch_size: int = 16
    total_steps: int = 2000
    metric_interval: int = 100
    param_seed: int = 0
    data_seed: int = 0
    noise_seed: int = 0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    g_width: int = 64
    d_width: int = 8
    eval_samples: int = 160
    final_eval_samples: int = 320

    def __post_init__(self):
        if self.phi not in PHIS:
            raise ConfigurationError(f"unknown phi {self.phi!r}; expected {PHIS}", "phi")
        if self.batch_size < 2:
            raise ConfigurationError("batch_size must be >= 2", "batch_size")
        if self.total_steps < 1 or self.metric_interval < 1:
            raise ConfigurationError("total_steps and metric_interval must be positive", "total_steps")
        if self.total_steps % self.metric_interval:
            raise ConfigurationError("metric_interval must divide total_steps", "metric_interval")
        if self.eval_samples % 10 or self.final_eval_samples % 10:
            raise ConfigurationError("evaluation sample counts must be multiples of 10", "eval_samples")


class ImageGenerator(Module):
    """G_i: linear projection to a (H/4, W/4) seed, two stride-2 transposed convs, sigmoid."""

    def __init__(self, latent_dim, channels, height, width, rng, base_width=32):
        if height % 4 or width % 4:
            raise ConfigurationError("frame height and width must be multiples of 4", "height")
        self.in_dim = 2 * latent_dim
        self.seed_shape = (base_width, height // 4, width // 4)
        self.project = Linear(self.in_dim, int(np.prod(self.seed_shape)), rng, RELU_GAIN)
        half = max(1, base_width // 2)
        self.up1 = ConvTransposeNd(base_width, half, (4, 4), 2, 1, rng, RELU_GAIN)
        self.up2 = ConvTransposeNd(half, channels, (4, 4), 2, 1, rng)

    def forward(self, x):
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"image generator expects input width {self.in_dim}, got {x.shape[-1]}")
        h = self.project(x).relu().reshape((x.shape[0],) + self.seed_shape)
        h = self.up1(h).relu()
        return self.up2(h).sigmoid()


class VideoDiscriminator(Module):
    """Three strided 3-D convolutions over (T, H, W) then a linear logit."""

    def __init__(self, num_frames, channels, height, width, rng, base_width=16):
        self.video_shape = (num_frames, channels, height, width)
        plan, out_shape = stride_plan((num_frames, height, width), 3)
        widths = [channels, base_width, 2 * base_width, 4 * base_width]
        self.convs = [ConvNd(a, b, k, s, p, rng, LEAKY_GAIN) for (a, b), (k, s, p) in zip(zip(widths[:-1], widths[1:]), plan)]
        self.head = Linear(widths[-1] * (int(np.prod(out_shape)) + 1), 1, rng)

    def forward(self, video):
        if tuple(video.shape[1:]) != self.video_shape:
            raise ShapeError(f"discriminator expects videos of shape {self.video_shape}, got {video.shape[1:]}")
        x = (video * 2.0 - 1.0).transpose(0, 2, 1, 3, 4)
        for conv in self.convs:
            x = T.leaky_relu(conv(x))
        feats = x.reshape(x.shape[0], -1)
        return self.head(T.concat_features(feats, batch_spread(x))).reshape(-1)


def batch_spread(x, eps=1e-8):
    """Across-batch standard deviation per channel of an (N, C, ...) feature map.

    Returned as (N, C) columns shared by every sample. A generator that always
    produces the same kind of motion leaves the channels tuned to the other
    kind flat, which the head can then pick up on.
    """
    centered = x - T.mean(x, axis=0)
    std = T.sqrt(T.mean(centered * centered, axis=0) + eps)
    per_channel = T.mean(std, axis=tuple(range(1, std.ndim)))
    return Tensor(np.ones((x.shape[0], 1))) * per_channel.reshape(1, -1)


def generate_video(image_generator, trajectory, latents=None):
    """Frame i = G_i(concat(z_c, z_i)); returns (B, T, C, H, W)."""
    frames = trajectory.frames if latents is None else latents
    z_c = trajectory.z_c
    n = len(frames)
    zt = T.stack(frames, axis=1)
    zc = T.stack([z_c] * n, axis=1)
    if zt.shape != zc.shape:
        raise ShapeError(f"latent shape {zt.shape} does not match content shape {zc.shape}")
    x = T.concat_features(zc, zt)
    b = x.shape[0]
    img = image_generator(x.reshape(b * n, -1))
    return img.reshape((b, n) + img.shape[1:])


def discriminate(discriminator, video):
    return discriminator(T.as_tensor(video))


def gan_losses(phi, d_real, d_fake):
    """(loss_d, loss_g) for raw discriminator logits. BCE uses the non-saturating G loss."""
    d_real, d_fake = T.as_tensor(d_real), T.as_tensor(d_fake)
    if d_real.size == 0 or d_fake.size == 0:
        raise ContractError("score batches must be non-empty")
    if phi == "bce":
        loss_d = T.softplus(-d_real).mean() + T.softplus(d_fake).mean()
        loss_g = T.softplus(-d_fake).mean()
    elif phi == "hinge":
        loss_d = (1.0 - d_real).relu().mean() + (d_fake + 1.0).relu().mean()
        loss_g = -d_fake.mean()
    elif phi == "identity":
        loss_d = -d_real.mean() + d_fake.mean()
        loss_g = -d_fake.mean()
    else:
        raise ContractError(f"unknown phi {phi!r}")
    return loss_d, loss_g


@dataclass
class VideoGAN:
    temporal: Module
    image: ImageGenerator
    disc: VideoDiscriminator

    def generator_parameters(self):
        return self.temporal.parameters() + self.image.parameters()

    def named_blocks(self):
        for prefix, mod in (("gt", self.temporal), ("gi", self.image), ("d", self.disc)):
            for name, p in mod.named_parameters():
                yield f"{prefix}.{name}", p

    def sample(self, z_c, noise_seed, oversample=1):
        traj = self.temporal(z_c, oversample=oversample, noise_seed=noise_seed)
        return traj, generate_video(self.image, traj)


def build_gan(config, temporal_spec, dataset_spec, solver=None):
    solver = solver or {}
    if temporal_spec.num_frames != dataset_spec.num_frames:
        raise ConfigurationError("temporal num_frames must equal dataset num_frames", "num_frames")
    rng = np.random.default_rng(config.param_seed)
    gt = build_temporal_generator(temporal_spec, **solver)
    d = temporal_spec.latent_dim
    gi = ImageGenerator(d, 1, dataset_spec.height, dataset_spec.width, rng, config.g_width)
    disc = VideoDiscriminator(dataset_spec.num_frames, 1, dataset_spec.height, dataset_spec.width, rng, config.d_width)
    return VideoGAN(gt, gi, disc)


def step_noise(config, step, batch, d):
    """Per-step latent batch and Wiener seed; a pure function of (noise_seed, step)."""
    rng = np.random.default_rng([config.noise_seed, step])
    z = rng.standard_normal((batch, d))
    return z, int(rng.integers(2**62))


def step_batch(config, step, n_data):
    return np.random.default_rng([config.data_seed, step]).integers(n_data, size=config.batch_size)


def sample_videos(gan, n, seed, chunk=80):
    """Generate n videos (numpy) from the fixed noise stream ``seed`` without recording a graph."""
    d = gan.temporal.spec.latent_dim
    rng = np.random.default_rng([seed, EVAL_STREAM])
    z = rng.standard_normal((n, d))
    out = []
    with no_grad():
        for i in range(0, n, chunk):
            _, v = gan.sample(z[i : i + chunk], noise_seed=seed * 1000003 + i)
            out.append(v.data)
    return np.concatenate(out)


def _adam_blocks(prefix, state):
    blocks = {f"{prefix}.step": np.array([state.step], dtype=float)}
    for i, (m, v) in enumerate(zip(state.m, state.v)):
        blocks[f"{prefix}.m.{i}"] = m
        blocks[f"{prefix}.v.{i}"] = v
    return blocks


def _load_adam(prefix, blocks, params, state):
    state.step = int(blocks[f"{prefix}.step"][0])
    state.m = [blocks[f"{prefix}.m.{i}"].reshape(p.shape).copy() for i, p in enumerate(params)] if state.step else []
    state.v = [blocks[f"{prefix}.v.{i}"].reshape(p.shape).copy() for i, p in enumerate(params)] if state.step else []


def model_blocks(gan):
    return {name: p.data for name, p in gan.named_blocks()}


def load_model_blocks(gan, blocks, prefixes=("gt", "gi", "d")):
    for name, p in gan.named_blocks():
        if name.split(".", 1)[0] not in prefixes:
            continue
        if name not in blocks:
            raise ContractError(f"checkpoint lacks parameter block {name!r}")
        arr = blocks[name]
        if arr.size != p.size:
            raise ContractError(f"checkpoint block {name!r} has {arr.size} values, expected {p.size}")
        p.data = arr.reshape(p.shape).copy()


@dataclass
class TrainResult:
    gan: VideoGAN
    rows: list
    timings: list
    best_row: dict | None
    best_blocks: dict | None
    initial_metrics: tuple
    probe: object
    reference_stats: tuple
    diverged: bool = False
    error: str = ""

    @property
    def seconds_per_step(self):
        return float(np.mean(self.timings)) if self.timings else float("nan")

    def best_gan(self):
        """Restore the model to the best checkpoint in place and return it."""
        gan = self.gan
        if self.best_blocks is not None:
            load_model_blocks(gan, self.best_blocks)
        return gan


def prepare_probe(dataset_spec, probe_steps=300):
    """Train the frozen probe once per dataset; returns (probe, reference stats, data)."""
    videos, labels = synth_dataset(dataset_spec)
    held = synth_dataset(replace(dataset_spec, seed=dataset_spec.seed + 1))
    probe = train_probe(videos, labels, heldout=held, seed=dataset_spec.seed, steps=probe_steps)
    feats, _ = probe.predict(videos)
    return probe, gaussian_stats(feats), (videos, labels)


def train(config, temporal_spec, dataset_spec, solver=None, probe_bundle=None, output_dir=None, resume=False):
    """Alternating D/G Adam updates with periodic surrogate metrics.

    Returns a :class:`TrainResult`; with ``output_dir`` also writes
    ``metrics.csv``, ``timing.csv``, ``latest.ndck`` and ``best.ndck``.
    """
    probe, ref_stats, (videos, _labels) = probe_bundle or prepare_probe(dataset_spec)
    gan = build_gan(config, temporal_spec, dataset_spec, solver)
    d = temporal_spec.latent_dim
    betas = (config.beta1, config.beta2)
    g_opt = Adam(gan.generator_parameters(), lr=config.lr, betas=betas)
    d_opt = Adam(gan.disc.parameters(), lr=config.lr, betas=betas)
    label = dict(
        family=temporal_spec.label,
        order=temporal_spec.order,
        fx_shape=temporal_spec.fx_shape if temporal_spec.family in ("ode", "sde") else "original",
        param_count=gan.temporal.num_parameters(),
    )

    def evaluate(n):
        return surrogate_metrics(probe, sample_videos(gan, n, config.noise_seed), ref_stats)

    initial = evaluate(config.eval_samples)
    rows, timings, best_row, best_blocks = [], [], None, None
    start = 0
    out = Path(output_dir) if output_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    if resume and out and (out / "latest.ndck").exists():
        blocks = read_ndck(out / "latest.ndck")
        load_model_blocks(gan, blocks)
        _load_adam("adam_g", blocks, g_opt.params, g_opt.state)
        _load_adam("adam_d", blocks, d_opt.params, d_opt.state)
        start = int(blocks["meta.step"][0])
        rows = [r for r in read_csv(out / "metrics.csv") if int(r["step"]) <= start]
        timings = [float(r["seconds"]) for r in read_csv(out / "timing.csv")][:start]
        if rows:
            best_row = max(rows, key=lambda r: float(r["is_mean"]))
            best_blocks = read_ndck(out / "best.ndck")
        rows = [[r[k] for k in METRICS_HEADER] for r in rows]
        best_row = [best_row[k] for k in METRICS_HEADER] if best_row else None

    diverged, error = False, ""
    last_good = model_blocks(gan)
    for step in range(start + 1, config.total_steps + 1):
        t0 = time.perf_counter()
        try:
            real = Tensor(videos[step_batch(config, step, len(videos))])
            z, wseed = step_noise(config, step, config.batch_size, d)
            _, fake = gan.sample(z, noise_seed=wseed)

            loss_d, _ = gan_losses(config.phi, gan.disc(real), gan.disc(fake.detach()))
            d_opt.zero_grad()
            T.backward(loss_d, d_opt.params)
            d_opt.step()

            _, loss_g = gan_losses(config.phi, Tensor(np.zeros(1)), gan.disc(fake))
            g_opt.zero_grad()
            T.backward(loss_g, g_opt.params)
            g_opt.step()
        except NumericError as exc:
            diverged, error = True, f"step {step}: {exc}"
            log.warning("training diverged at %s", error)
            load_model_blocks(gan, last_good)
            break
        timings.append(time.perf_counter() - t0)

        if step % config.metric_interval == 0:
            is_mean, is_std, fid = evaluate(config.eval_samples)
            row = [
                step, label["family"], label["order"], label["fx_shape"], label["param_count"],
                repr(is_mean), repr(is_std), repr(fid), repr(loss_d.item()), repr(loss_g.item()),
            ]
            rows.append(row)
            last_good = model_blocks(gan)
            if best_row is None or is_mean > float(best_row[5]):
                best_row, best_blocks = row, last_good
                if out:
                    write_ndck(out / "best.ndck", best_blocks)
            log.info("step %d  IS %.3f  FID %.4f  loss_d %.3f  loss_g %.3f", step, is_mean, fid, loss_d.item(), loss_g.item())
            if out:
                ckpt = dict(last_good)
                ckpt.update(_adam_blocks("adam_g", g_opt.state))
                ckpt.update(_adam_blocks("adam_d", d_opt.state))
                ckpt["meta.step"] = np.array([step], dtype=float)
                write_ndck(out / "latest.ndck", ckpt)
                write_csv(out / "metrics.csv", METRICS_HEADER, rows)
                write_csv(out / "timing.csv", ("step", "seconds"), [(i + 1, repr(s)) for i, s in enumerate(timings)])

    # rows read as strings, same as read_csv gives back
    best = dict(zip(METRICS_HEADER, map(str, best_row))) if best_row else None
    return TrainResult(
        gan=gan,
        rows=[dict(zip(METRICS_HEADER, map(str, r))) for r in rows],
        timings=timings,
        best_row=best,
        best_blocks=best_blocks,
        initial_metrics=initial,
        probe=probe,
        reference_stats=ref_stats,
        diverged=diverged,
        error=error,
    )
