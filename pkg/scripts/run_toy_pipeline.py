#!/usr/bin/env python3
"""Full toy-image study driven through the CLI stages.

Generates the reference measurement and a 300-point design, registers,
fits the surrogate, calibrates, and pushes the posterior (and, for
comparison, the prior) forward into image space.  Everything lands under
--workdir and reruns are no-ops unless --force is given.
"""

import argparse
import sys
from pathlib import Path

from diffcal.cli import main as cli
from diffcal.config import default_config_yaml

TOY_CONFIG = """\
version: 1
seed: 20260809
kernel:
  lengthscale: 0.0625
shooting:
  num_steps: 15
  scheme: rk2
  step_size: 0.3
  max_iters: 150
  grad_clip_norm: 10.0
  tolerance: 1.0e-5
match:
  kind: l2_image
  weight: 4000.0
surrogate:
  filter_fraction: 0.10
  variance_fraction: 0.99
  holdout_fraction: 0.20
  gp_restarts: 5
likelihood:
  sigma: 0.1
  include_model_error: true
priors:
  beta:
    - {dist: uniform, lo: 0.0, hi: 0.5}
    - {dist: uniform, lo: 0.0, hi: 0.5}
    - {dist: uniform, lo: 0.0, hi: 0.7}
    - {dist: uniform, lo: 0.0, hi: 0.7}
mcmc:
  iterations: 20000
  burn_in: 5000
"""


def run(workdir: Path, n_design: int, jobs: int, force: bool) -> int:
    workdir.mkdir(parents=True, exist_ok=True)
    cfg = workdir / "config.yaml"
    if not cfg.exists() or force:
        cfg.write_text(TOY_CONFIG)
    forceflag = ["--force"] if force else []

    steps = [
        ["gen-toy", "--beta", "0.2", "0.3", "0.4", "0.8", "--out", str(workdir / "mes")],
        ["gen-toy", "--lhs", str(n_design), "--seed", "20260809", "--out", str(workdir / "sims")],
        ["register", "--mes", str(workdir / "mes" / "mes.grid"), "--sims", str(workdir / "sims"),
         "--config", str(cfg), "--out", str(workdir / "reg"), "--jobs", str(jobs)],
        ["fit-surrogate", "--reg", str(workdir / "reg"), "--betas", str(workdir / "sims" / "betas.csv"),
         "--config", str(cfg), "--out", str(workdir / "surrogate")],
        ["calibrate", "--model", str(workdir / "surrogate" / "model.json"),
         "--config", str(cfg), "--out", str(workdir / "posterior")],
        ["calibrate", "--model", str(workdir / "surrogate" / "model.json"),
         "--config", str(cfg), "--out", str(workdir / "prior"), "--prior-only"],
        ["predict-posterior", "--model", str(workdir / "surrogate" / "model.json"),
         "--chain", str(workdir / "posterior" / "chain.csv"),
         "--mes", str(workdir / "mes" / "mes.grid"), "--config", str(cfg),
         "--out", str(workdir / "predictive_posterior"), "--draws", "40"],
        ["predict-posterior", "--model", str(workdir / "surrogate" / "model.json"),
         "--chain", str(workdir / "prior" / "chain.csv"),
         "--mes", str(workdir / "mes" / "mes.grid"), "--config", str(cfg),
         "--out", str(workdir / "predictive_prior"), "--draws", "40"],
    ]
    for argv in steps:
        print(f"$ diffcal {' '.join(argv)}")
        rc = cli(argv + forceflag)
        if rc != 0:
            return rc
    print(f"\ndone; artifacts under {workdir}")
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", type=Path, default=Path("runs/toy"))
    parser.add_argument("--n-design", type=int, default=300)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--force", action="store_true")
    args = parser.parse_args()
    sys.exit(run(args.workdir, args.n_design, args.jobs, args.force))
