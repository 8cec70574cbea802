"""Probe classifier and surrogate Inception Score / Frechet distance."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, TrainingError
from .nn import RELU_GAIN, ConvNd, Linear, Module, conv_out_len
from .tensor import Adam, Tensor, no_grad

FEATURE_DIM = 16


@dataclass
class MetricReport:
    family: str
    order: int
    fx_shape: str
    param_count: int
    surrogate_is_mean: float
    surrogate_is_std: float
    surrogate_fid: float
    seconds_per_step: float
    failed: bool = False

    CSV_HEADER = ("family", "order", "fx_shape", "param_count", "is_mean", "is_std", "fid", "seconds_per_step")

    def csv_row(self):
        return [
            self.family,
            self.order,
            self.fx_shape,
            self.param_count,
            repr(float(self.surrogate_is_mean)),
            repr(float(self.surrogate_is_std)),
            repr(float(self.surrogate_fid)),
            repr(float(self.seconds_per_step)),
        ]


def axis_kernel(n):
    """(kernel, stride, pad) that halves an axis of length n >= 2, keeps length 1."""
    return (4, 2, 1) if n >= 2 else (3, 1, 1)


def stride_plan(shape, layers):
    """Per-layer (kernels, strides, pads) for a stack of halving 3-D convolutions."""
    plan, cur = [], list(shape)
    for _ in range(layers):
        ksp = [axis_kernel(n) for n in cur]
        plan.append(tuple(zip(*ksp)))
        cur = [conv_out_len(n, k, s, p) for n, (k, s, p) in zip(cur, ksp)]
    return plan, tuple(cur)


class ProbeClassifier(Module):
    """Two 3-D conv layers, global average pooling to 16 features, linear class head."""

    def __init__(self, num_frames, height, width, num_classes, rng, channels=1):
        plan, _ = stride_plan((num_frames, height, width), 2)
        (k1, s1, p1), (k2, s2, p2) = plan
        self.conv1 = ConvNd(channels, 8, k1, s1, p1, rng, RELU_GAIN)
        self.conv2 = ConvNd(8, FEATURE_DIM, k2, s2, p2, rng, RELU_GAIN)
        self.head = Linear(FEATURE_DIM, num_classes, rng)
        self.accuracy = float("nan")

    def features(self, videos):
        """videos: (B, T, C, H, W) -> (B, 16)."""
        x = T.as_tensor(videos).transpose(0, 2, 1, 3, 4)
        x = self.conv1(x).relu()
        x = self.conv2(x).relu()
        return x.mean(axis=(2, 3, 4))

    def forward(self, videos):
        return self.head(self.features(videos))

    def predict(self, videos, batch=256):
        """(features, class probabilities) as numpy arrays, no graph recorded."""
        feats, probs = [], []
        with no_grad():
            for i in range(0, len(videos), batch):
                f = self.features(videos[i : i + batch])
                logits = self.head(f)
                feats.append(f.data)
                probs.append(np.exp(T.log_softmax(logits).data))
        return np.concatenate(feats), np.concatenate(probs)


def cross_entropy(logits, labels):
    logp = T.log_softmax(logits)
    onehot = np.zeros(logp.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    return -(logp * Tensor(onehot)).sum() * (1.0 / len(labels))


def train_probe(videos, labels, heldout=None, seed=0, steps=300, batch_size=32, lr=3e-3):
    """Fit the probe on labeled videos; held-out accuracy is stored on ``.accuracy``."""
    num_classes = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=num_classes)
    if counts.min() < 50:
        raise ContractError(f"probe training needs >= 50 samples per class, got {counts.min()}")
    _, t, c, h, w = videos.shape
    rng = np.random.default_rng(seed)
    probe = ProbeClassifier(t, h, w, num_classes, rng, channels=c)
    opt = Adam(probe.parameters(), lr=lr, betas=(0.9, 0.999))
    for _ in range(steps):
        idx = rng.choice(len(videos), size=batch_size, replace=False)
        opt.zero_grad()
        loss = cross_entropy(probe(videos[idx]), labels[idx])
        T.backward(loss, opt.params)
        opt.step()
    hv, hl = heldout if heldout is not None else (videos, labels)
    probe.accuracy = probe_accuracy(probe, hv, hl)
    if probe.accuracy <= 1.0 / num_classes + 0.1:
        raise TrainingError(f"probe accuracy {probe.accuracy:.3f} did not exceed chance after {steps} steps")
    return probe


def probe_accuracy(probe, videos, labels):
    _, probs = probe.predict(videos)
    return float((probs.argmax(axis=1) == labels).mean())


def inception_score(probs, splits=10):
    """exp(mean_x KL(p(y|x) || p(y))) per split; returns (mean, std) over splits."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or len(probs) == 0:
        raise ContractError("probs must be a non-empty N x K array")
    if (probs < 0).any() or np.abs(probs.sum(axis=1) - 1.0).max() > 1e-6:
        raise ContractError("every row of probs must be a probability distribution")
    if splits < 1 or len(probs) % splits:
        raise ContractError(f"N={len(probs)} is not divisible by splits={splits}")
    scores = []
    for part in np.split(probs, splits):
        marginal = part.mean(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(part > 0, part * (np.log(part) - np.log(marginal)), 0.0)
        scores.append(math.exp(terms.sum(axis=1).mean()))
    return float(np.mean(scores)), float(np.std(scores))


def matrix_sqrt_psd(s):
    """Symmetric square root through the eigendecomposition."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {s.shape}")
    scale = max(1.0, float(np.abs(s).max(initial=0.0)))
    if np.abs(s - s.T).max(initial=0.0) > 1e-8 * scale:
        raise ContractError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh((s + s.T) / 2)
    if vals.min(initial=0.0) < -1e-10 * scale:
        raise ContractError(f"matrix is indefinite (min eigenvalue {vals.min():.3g})")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(mu1, s1, mu2, s2):
    """||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), clamped at 0."""
    mu1, mu2 = np.atleast_1d(mu1).astype(float), np.atleast_1d(mu2).astype(float)
    s1, s2 = np.atleast_2d(s1).astype(float), np.atleast_2d(s2).astype(float)
    if mu1.shape != mu2.shape or s1.shape != s2.shape or s1.shape != (mu1.size, mu1.size):
        raise ContractError(f"dimension mismatch: mu {mu1.shape}/{mu2.shape}, cov {s1.shape}/{s2.shape}")
    r1 = matrix_sqrt_psd(s1)
    # Tr((S1 S2)^(1/2)) == Tr((R1 S2 R1)^(1/2)), and the latter is symmetric PSD
    inner = r1 @ s2 @ r1
    cross = np.trace(matrix_sqrt_psd((inner + inner.T) / 2))
    diff = mu1 - mu2
    val = float(diff @ diff + np.trace(s1) + np.trace(s2) - 2.0 * cross)
    return max(val, 0.0)


def gaussian_stats(features):
    return features.mean(axis=0), np.cov(features, rowvar=False)


def surrogate_metrics(probe, videos, reference_stats, splits=10):
    """(is_mean, is_std, fid) of ``videos`` under a frozen probe."""
    feats, probs = probe.predict(videos)
    is_mean, is_std = inception_score(probs, splits)
    mu, cov = gaussian_stats(feats)
    fid = frechet_distance(mu, cov, *reference_stats)
    return is_mean, is_std, fid
