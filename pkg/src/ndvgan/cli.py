"""Command-line entry point: ``ndvgan {train,ablate,sample,interpolate,backtrack,gradcheck}``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 I/O or corrupt file, 4 capability not supported by the family.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_IO, EXIT_CAPABILITY = 0, 1, 2, 3, 4
GRADCHECK_TOL = 1e-6

log = logging.getLogger("ndvgan")


def _threads():
    from .errors import ConfigurationError

    raw = os.environ.get("NDEV_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigurationError(f"NDEV_THREADS must be a positive integer, got {raw!r}", "NDEV_THREADS")
    return n


def _load_config(path):
    from .config import ExperimentConfig

    return ExperimentConfig.load(path)


def cmd_train(args):
    from .gan import train

    cfg = _load_config(args.config)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "config.json")
    result = train(
        cfg.gan, cfg.temporal, cfg.dataset, solver=cfg.solver.generator_kwargs(), output_dir=out, resume=args.resume
    )
    if result.best_row:
        print(f"best step {result.best_row['step']}  IS {float(result.best_row['is_mean']):.4f}  "
              f"FID {float(result.best_row['fid']):.4f}")
    if result.diverged:
        print(f"training diverged: {result.error}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_ablate(args):
    from .ablation import FAMILY_NAMES, ablation_run, spec_for_family, write_report

    names = [n.strip() for n in args.families.split(",") if n.strip()]
    bad = [n for n in names if n not in FAMILY_NAMES]
    if bad or not names:
        print(f"unknown family {', '.join(bad) or '(none)'}; valid names: {', '.join(FAMILY_NAMES)}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = _load_config(args.config)
    specs = [spec_for_family(n, cfg.temporal) for n in names]
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = ablation_run(specs, cfg.gan, cfg.dataset, solver=cfg.solver.generator_kwargs(), output_dir=out)
    path = Path(args.out) if args.out else out / "report.csv"
    write_report(path, reports)
    for r in reports:
        print(f"{r.family:7s} params {r.param_count:7d}  IS {r.surrogate_is_mean:.4f}±{r.surrogate_is_std:.4f}  "
              f"FID {r.surrogate_fid:.4f}  s/step {r.seconds_per_step:.4f}")
    return EXIT_OK


# --- checkpoint-driven commands ---------------------------------------------------------
def _load_gan(checkpoint, config_path=None):
    from .formats import read_ndck
    from .gan import build_gan, load_model_blocks

    ckpt = Path(checkpoint)
    blocks = read_ndck(ckpt)
    cfg_path = Path(config_path) if config_path else ckpt.parent / "config.json"
    if not cfg_path.exists():
        raise FileNotFoundError(f"no config found for checkpoint (looked for {cfg_path})")
    cfg = _load_config(cfg_path)
    gan = build_gan(cfg.gan, cfg.temporal, cfg.dataset, cfg.solver.generator_kwargs())
    load_model_blocks(gan, blocks, prefixes=("gt", "gi"))
    return cfg, gan


def _render(gan, z_c, latents):
    """Frames for one video, each rendered from its own (z_c, z_t) row."""
    from . import tensor as T
    from .tensor import Tensor

    with T.no_grad():
        frames = [gan.image(T.concat_features(Tensor(z_c[None]), Tensor(z[None]))).data[0] for z in latents]
    return np.stack(frames)


def _latents(gan, count, seed, oversample=1):
    from .tensor import no_grad

    d = gan.temporal.spec.latent_dim
    z_c = np.random.default_rng(seed).standard_normal((count, d))
    with no_grad():
        traj = gan.temporal(z_c, oversample=oversample, noise_seed=seed)
    return z_c, traj


def _write_video(out_dir, stem, video, fmt):
    from .formats import write_ndev, write_pgm

    if fmt == "ndev":
        write_ndev(out_dir / f"{stem}.ndev", video)
    else:
        d = out_dir / stem
        d.mkdir(parents=True, exist_ok=True)
        for t, frame in enumerate(video):
            write_pgm(d / f"frame_{t:03d}.pgm", frame[0])


def _frame_rows(latents, i):
    return [z.data[i] for z in latents]


def cmd_sample(args):
    _, gan = _load_gan(args.checkpoint, args.config)
    z_c, traj = _latents(gan, args.count, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        _write_video(out, f"sample_{i:03d}", _render(gan, z_c[i], _frame_rows(traj.frames, i)), args.format)
    return EXIT_OK


def cmd_interpolate(args):
    from .errors import CapabilityError, ConfigurationError

    _, gan = _load_gan(args.checkpoint, args.config)
    if not gan.temporal.supports_oversample:
        raise CapabilityError(f"capability not supported by family {gan.temporal.spec.family}")
    if args.factor < 1 or gan.temporal.steps_per_unit % args.factor:
        raise ConfigurationError(
            f"factor {args.factor} must divide steps_per_unit {gan.temporal.steps_per_unit}", "factor"
        )
    z_c, traj = _latents(gan, args.count, args.seed, oversample=args.factor)
    latents = traj.dense if args.factor > 1 else traj.frames
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        _write_video(out, f"interp_{i:03d}", _render(gan, z_c[i], _frame_rows(latents, i)), args.format)
    return EXIT_OK


def cmd_backtrack(args):
    from .errors import CapabilityError
    from .temporal import extrapolate_backward
    from .tensor import no_grad

    _, gan = _load_gan(args.checkpoint, args.config)
    if not gan.temporal.supports_backward:
        raise CapabilityError(f"capability not supported by family {gan.temporal.spec.family}")
    z_c, traj = _latents(gan, args.count, args.seed)
    with no_grad():
        pre = extrapolate_backward(gan.temporal, traj, args.n)
    latents = list(reversed(pre)) + traj.frames
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        _write_video(out, f"backtrack_{i:03d}", _render(gan, z_c[i], _frame_rows(latents, i)), args.format)
    return EXIT_OK


def cmd_gradcheck(args):
    from .ablation import FAMILY_NAMES
    from .verify import run_gradcheck

    cfg = _load_config(args.config)
    names = [n.strip() for n in args.families.split(",")] if args.families else list(FAMILY_NAMES)
    bad = [n for n in names if n not in FAMILY_NAMES]
    if bad:
        print(f"unknown family {', '.join(bad)}; valid names: {', '.join(FAMILY_NAMES)}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_gradcheck(cfg, names, eps=args.eps, inject_fault=args.inject_fault)
    ok = True
    for r in results:
        passed = r.max_error < GRADCHECK_TOL
        ok &= passed
        line = f"{r.block:12s} max_rel_err={r.max_error:.3e} {'PASS' if passed else 'FAIL'}"
        if not passed:
            line += f"  worst: {r.worst_param}[{r.worst_index}]"
        print(line)
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser():
    p = argparse.ArgumentParser(prog="ndvgan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="train one configuration")
    s.add_argument("config")
    s.add_argument("--resume", action="store_true", help="continue from output_dir/latest.ndck")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("ablate", help="train a grid of temporal generator families")
    s.add_argument("config")
    s.add_argument("--families", default="conv1d,lstm,ode1,ode2,ode3,sde")
    s.add_argument("--out", help="report path (default: output_dir/report.csv)")
    s.set_defaults(fn=cmd_ablate)

    for name, fn, helptext in (
        ("sample", cmd_sample, "generate videos from a checkpoint"),
        ("interpolate", cmd_interpolate, "generate videos at a higher frame rate"),
        ("backtrack", cmd_backtrack, "prepend frames integrated backwards in time"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("checkpoint")
        s.add_argument("--count", type=int, default=1)
        s.add_argument("--seed", type=int, required=True)
        s.add_argument("--format", choices=("ndev", "pgm"), default="ndev")
        s.add_argument("--out", default="samples")
        s.add_argument("--config", help="config JSON (default: config.json beside the checkpoint)")
        if name == "interpolate":
            s.add_argument("--factor", type=int, required=True)
        if name == "backtrack":
            s.add_argument("--n", type=int, required=True)
        s.set_defaults(fn=fn)

    s = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    s.add_argument("config")
    s.add_argument("--families", help="comma-separated subset (default: all)")
    s.add_argument("--eps", type=float, default=1e-5)
    s.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    from threadpoolctl import threadpool_limits

    from .errors import CapabilityError, ConfigurationError, CorruptFileError

    try:
        with threadpool_limits(limits=_threads()):
            return args.fn(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapabilityError as exc:
        print(f"capability not supported by family: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (CorruptFileError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
