"""Closed-form synthetic video datasets labeled by motion class."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError

KINDS = ("bouncing_ball", "moving_bar")
BAR_WIDTH = 3
BAR_SPEED = 1  # pixels per frame
BALL_RADIUS = 2.0
BALL_SPEED = 1.5


@dataclass
class SyntheticSpec:
    kind: str = "moving_bar"
    num_classes: int = 2
    num_frames: int = 8
    height: int = 16
    width: int = 16
    samples_per_class: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown dataset kind {self.kind!r}; expected {KINDS}", "kind")
        if self.num_classes < 2:
            raise ConfigurationError("num_classes must be >= 2", "num_classes")
        if self.kind == "moving_bar" and self.num_classes > 4:
            raise ConfigurationError("moving_bar supports at most 4 directions", "num_classes")
        if self.num_frames < 2:
            raise ConfigurationError("num_frames must be >= 2", "num_frames")
        if self.samples_per_class < 1:
            raise ConfigurationError("samples_per_class must be >= 1", "samples_per_class")
        if self.kind == "moving_bar" and BAR_WIDTH >= min(self.height, self.width):
            raise ConfigurationError(
                f"bar width {BAR_WIDTH} does not fit a {self.height}x{self.width} frame", "height"
            )
        if self.kind == "bouncing_ball" and 2 * BALL_RADIUS + 2 > min(self.height, self.width):
            raise ConfigurationError(
                f"ball radius {BALL_RADIUS} does not fit a {self.height}x{self.width} frame", "height"
            )

    def to_dict(self):
        return asdict(self)


def _coverage(start, size):
    """Fraction of each pixel [c, c+1) covered by the wrapped interval [start, start + BAR_WIDTH)."""
    c = np.arange(size)
    cov = np.zeros(size)
    for shift in (-size, 0, size):
        lo, hi = start % size + shift, start % size + shift + BAR_WIDTH
        cov += np.clip(np.minimum(c + 1, hi) - np.maximum(c, lo), 0.0, 1.0)
    return np.clip(cov, 0.0, 1.0)


def render_moving_bar(direction, offset, num_frames, height, width):
    """Anti-aliased bar of BAR_WIDTH pixels translating with wraparound.

    direction 0: rightward, 1: leftward (vertical bar); 2: downward, 3: upward
    (horizontal bar). ``offset`` is the (real-valued) leading edge at t=0.
    """
    video = np.zeros((num_frames, 1, height, width))
    sign = 1 if direction in (0, 2) else -1
    size = width if direction in (0, 1) else height
    for t in range(num_frames):
        cov = _coverage(offset + sign * BAR_SPEED * t, size)
        if direction in (0, 1):
            video[t, 0] = np.broadcast_to(cov, (height, width))
        else:
            video[t, 0] = np.broadcast_to(cov[:, None], (height, width))
    return video


def _fold(x, lo, hi):
    """Reflect x into [lo, hi] (closed form of elastic bouncing)."""
    span = hi - lo
    y = np.mod(x - lo, 2 * span)
    return lo + np.where(y > span, 2 * span - y, y)


def render_bouncing_ball(angle, start, num_frames, height, width):
    """Anti-aliased disc moving at BALL_SPEED along ``angle``, reflecting off the borders."""
    ys, xs = np.mgrid[0:height, 0:width]
    r = BALL_RADIUS
    t = np.arange(num_frames)
    cx = _fold(start[0] + BALL_SPEED * np.cos(angle) * t, r, width - 1 - r)
    cy = _fold(start[1] + BALL_SPEED * np.sin(angle) * t, r, height - 1 - r)
    video = np.zeros((num_frames, 1, height, width))
    for i in range(num_frames):
        dist = np.hypot(xs - cx[i], ys - cy[i])
        video[i, 0] = np.clip(r + 0.5 - dist, 0.0, 1.0)
    return video


def synth_dataset(spec):
    """Balanced labeled videos, shape (N, T, 1, H, W), deterministic in ``spec.seed``.

    Samples are ordered class by class.
    """
    rng = np.random.default_rng(spec.seed)
    videos, labels = [], []
    for k in range(spec.num_classes):
        for _ in range(spec.samples_per_class):
            if spec.kind == "moving_bar":
                size = spec.width if k in (0, 1) else spec.height
                v = render_moving_bar(k, rng.uniform(0, size), spec.num_frames, spec.height, spec.width)
            else:
                r = BALL_RADIUS
                start = (rng.uniform(r, spec.width - 1 - r), rng.uniform(r, spec.height - 1 - r))
                angle = 2 * np.pi * k / spec.num_classes
                v = render_bouncing_ball(angle, start, spec.num_frames, spec.height, spec.width)
            videos.append(v)
            labels.append(k)
    return np.stack(videos), np.array(labels)
