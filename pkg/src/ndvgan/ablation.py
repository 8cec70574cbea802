"""Family/order ablation: train every temporal generator under identical settings."""
from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

from .errors import NDVError, NumericError
from .formats import write_csv
from .gan import prepare_probe, sample_videos, train
from .metrics import MetricReport, surrogate_metrics
from .temporal import build_temporal_generator

log = logging.getLogger(__name__)

FAMILY_NAMES = ("conv1d", "lstm", "ode1", "ode2", "ode3", "sde")
FINAL_EVAL_STREAM = 1


def spec_for_family(name, base):
    """Derive the spec for a grid column from a shared base spec."""
    if name not in FAMILY_NAMES:
        raise ValueError(f"unknown family {name!r}; valid names: {', '.join(FAMILY_NAMES)}")
    if name in ("conv1d", "lstm"):
        return replace(base, family=name, order=1, fx_shape="single_layer", param_budget=None, prepend_fcn_depth=0)
    if name == "sde":
        return replace(base, family="sde", order=1)
    return replace(base, family="ode", order=int(name[-1]))


def _row_label(spec):
    fx = spec.fx_shape if spec.family in ("ode", "sde") else "original"
    return spec.label, spec.order, fx


def ablation_run(specs, gan_config, dataset_spec, solver=None, output_dir=None, probe_bundle=None):
    """One :class:`MetricReport` per spec; a diverging family yields a failed row."""
    specs = list(specs)
    if len({(s.latent_dim, s.num_frames) for s in specs}) > 1:
        raise ValueError("all specs in an ablation must share latent_dim and num_frames")
    bundle = probe_bundle or prepare_probe(dataset_spec)
    reports = []
    for spec in specs:
        family, order, fx = _row_label(spec)
        sub = Path(output_dir) / family if output_dir else None
        try:
            result = train(gan_config, spec, dataset_spec, solver=solver, probe_bundle=bundle, output_dir=sub)
            if result.best_blocks is None:
                raise NumericError(result.error or "no checkpoint before divergence")
            gan = result.best_gan()
            videos = sample_videos(gan, gan_config.final_eval_samples, gan_config.noise_seed + FINAL_EVAL_STREAM)
            is_mean, is_std, fid = surrogate_metrics(bundle[0], videos, bundle[1], splits=10)
            reports.append(
                MetricReport(family, order, fx, gan.temporal.num_parameters(), is_mean, is_std, fid, result.seconds_per_step)
            )
        except NDVError as exc:
            log.warning("family %s failed: %s", family, exc)
            nan = float("nan")
            count = build_temporal_generator(spec, **(solver or {})).num_parameters()
            reports.append(MetricReport(family, order, fx, count, nan, nan, nan, nan, failed=True))
    return reports


def write_report(path, reports):
    write_csv(path, MetricReport.CSV_HEADER, [r.csv_row() for r in reports])
