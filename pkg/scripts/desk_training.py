#!/usr/bin/env python3
"""Train conv1d, ode1 and sde on moving bars and compare against the untrained models.

Writes one run directory per family under the config's output_dir plus a
summary.csv with untrained/best surrogate metrics and seconds per step.

    python scripts/desk_training.py configs/desk_moving_bar.json
"""
import argparse
import logging
import time
from pathlib import Path

from threadpoolctl import threadpool_limits

from ndvgan.ablation import spec_for_family
from ndvgan.config import ExperimentConfig
from ndvgan.formats import write_csv
from ndvgan.gan import prepare_probe, train

FAMILIES = ("conv1d", "ode1", "sde")
HEADER = ("family", "is_untrained", "is_best", "fid_untrained", "fid_best", "best_step", "final_step",
          "seconds_per_step", "wall_seconds")


def run(cfg, families=FAMILIES):
    """Train each family; returns {family: TrainResult}."""
    bundle = prepare_probe(cfg.dataset)
    results = {}
    for name in families:
        spec = spec_for_family(name, cfg.temporal)
        t0 = time.perf_counter()
        res = train(cfg.gan, spec, cfg.dataset, cfg.solver.generator_kwargs(), bundle, Path(cfg.output_dir) / name)
        res.wall_seconds = time.perf_counter() - t0
        results[name] = res
    return results


def summary_rows(results):
    rows = []
    for name, r in results.items():
        is0, _, fid0 = r.initial_metrics
        best = r.best_row
        rows.append((name, is0, float(best["is_mean"]), fid0, float(best["fid"]), int(best["step"]),
                     int(r.rows[-1]["step"]), r.seconds_per_step, r.wall_seconds))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default="configs/desk_moving_bar.json")
    ap.add_argument("--families", default=",".join(FAMILIES))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = ExperimentConfig.load(args.config)
    with threadpool_limits(limits=1):
        results = run(cfg, args.families.split(","))
    rows = summary_rows(results)
    out = Path(cfg.output_dir)
    write_csv(out / "summary.csv", HEADER, rows)
    for name, is0, is1, fid0, fid1, bstep, fstep, sps, wall in rows:
        print(f"{name:7s} IS {is0:.3f} -> {is1:.3f}   FID {fid0:.2f} -> {fid1:.2f}   "
              f"best step {bstep}/{fstep}   {sps:.3f} s/step   {wall / 60:.1f} min")


if __name__ == "__main__":
    main()
