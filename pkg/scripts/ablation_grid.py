#!/usr/bin/env python3
"""Ablation over f(x) shape, differential-equation family and order.

Baselines run first; then ODE/SDE variants with a single layer, two layers,
and a parameter budget matched to each baseline (with enough prepended
layers to equal its nonlinearity count).

    python scripts/ablation_grid.py configs/ablation_grid.json --out runs/ablation/report.csv
"""
import argparse
import logging
from dataclasses import replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from ndvgan.ablation import ablation_run, spec_for_family, write_report
from ndvgan.config import ExperimentConfig
from ndvgan.temporal import build_temporal_generator, count_parameters, prepend_depth_for


def grid(base):
    T = base.num_frames
    specs = [spec_for_family("conv1d", base), spec_for_family("lstm", base)]
    budgets = {b: count_parameters(build_temporal_generator(s)) for b, s in zip(("conv1d", "lstm"), specs)}
    for name in ("ode1", "ode2", "ode3", "sde"):
        fam = spec_for_family(name, base)
        specs.append(replace(fam, fx_shape="single_layer"))
        specs.append(replace(fam, fx_shape="two_layer"))
        for b, budget in budgets.items():
            specs.append(replace(fam, fx_shape="equal_params", param_budget=budget,
                                 prepend_fcn_depth=prepend_depth_for(b, T)))
    return specs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default="configs/ablation_grid.json")
    ap.add_argument("--out", default=None)
    ap.add_argument("--dry-run", action="store_true", help="list the grid with parameter counts and exit")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = ExperimentConfig.load(args.config)
    specs = grid(cfg.temporal)
    if args.dry_run:
        for s in specs:
            print(f"{s.label:7s} {s.fx_shape:13s} prepend={s.prepend_fcn_depth} "
                  f"params={count_parameters(build_temporal_generator(s))}")
        return
    out = Path(cfg.output_dir)
    with threadpool_limits(limits=1):
        # each spec gets its own subdirectory so equal_params variants don't overwrite each other
        reports = []
        for i, spec in enumerate(specs):
            sub = out / f"{i:02d}_{spec.label}_{spec.fx_shape}"
            reports += ablation_run([spec], cfg.gan, cfg.dataset, cfg.solver.generator_kwargs(), sub)
    write_report(args.out or out / "report.csv", reports)


if __name__ == "__main__":
    main()
