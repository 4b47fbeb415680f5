"""Batch command-line pipeline.

Stages are file-mediated and resumable: every command declares its outputs,
skips the work when they already exist (pass ``--force`` to redo), and is
deterministic given (inputs, config, seed).

Exit codes: 0 ok, 2 usage, 3 data problem, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import multiprocessing
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .calibration import (
    posterior_predictive,
    PosteriorChain,
    sample_posterior,
)
from .errors import IntegrationError, InvalidInputError, ModelFormatError, SamplerError
from . import fileio
from .prealign import apply_rigid, fit_mean_rigid, se_exp
from .shapes import GridImage
from .shooting import deformation_energy, initial_velocity, register
from .surrogate import (
    VelocityRecord,
    build_surrogate,
    filter_worst,
    load_model,
    save_model,
    validation_report,
)
from .toy import lhs_betas, toy_image

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _outputs_exist(paths) -> bool:
    return all(Path(p).exists() for p in paths)


def _skip_note(out_paths):
    print(f"outputs already present ({Path(out_paths[0]).parent}); use --force to redo")


def _read_shape(path):
    path = Path(path)
    if path.suffix == ".grid":
        return fileio.read_grid(path)
    if path.suffix == ".csv":
        return fileio.read_curve(path)
    raise InvalidInputError(f"{path}: unknown shape file type (expected .grid or .csv)")


def _sim_paths(sims_dir) -> list[Path]:
    sims_dir = Path(sims_dir)
    if not sims_dir.is_dir():
        raise InvalidInputError(f"{sims_dir}: not a directory")
    grids = sorted(p for p in sims_dir.iterdir() if p.suffix == ".grid")
    if grids:
        return grids
    curves = sorted(
        p for p in sims_dir.iterdir() if p.suffix == ".csv" and p.name != "betas.csv"
    )
    if not curves:
        raise InvalidInputError(f"{sims_dir}: no .grid or .csv simulation files")
    return curves


# ---------------------------------------------------------------------------
# gen-toy
# ---------------------------------------------------------------------------


def cmd_gen_toy(args) -> int:
    out = Path(args.out)
    betas_csv = out / "betas.csv"
    if args.beta is not None:
        outputs = [out / f"{args.name}.grid", betas_csv]
    else:
        outputs = [out / f"sim_{i:03d}.grid" for i in range(args.lhs)] + [betas_csv]
    if _outputs_exist(outputs) and not args.force:
        _skip_note(outputs)
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    if args.beta is not None:
        beta = np.asarray(args.beta, dtype=float)
        fileio.write_grid(out / f"{args.name}.grid", toy_image(beta, args.size))
        fileio.write_betas(betas_csv, [args.name], beta[None, :])
        print(f"wrote {args.name}.grid for beta={beta.tolist()}")
    else:
        lo, hi = _parse_bounds(args.bounds)
        betas = lhs_betas(args.lhs, lo, hi, seed=args.seed)
        names = [f"sim_{i:03d}" for i in range(args.lhs)]
        for name, beta in zip(names, betas):
            fileio.write_grid(out / f"{name}.grid", toy_image(beta, args.size))
        fileio.write_betas(betas_csv, names, betas)
        print(f"wrote {args.lhs} design images + betas.csv")
    return EXIT_OK


def _parse_bounds(text):
    if text is None:
        return None, None
    try:
        lo_s, hi_s = text.split(":")
        lo = [float(v) for v in lo_s.split(",")]
        hi = [float(v) for v in hi_s.split(",")]
    except ValueError:
        raise InvalidInputError(f"bad bounds {text!r}; expected 'lo1,lo2,..:hi1,hi2,..'")
    return lo, hi


# ---------------------------------------------------------------------------
# register
# ---------------------------------------------------------------------------


def _register_one(task):
    name, q_mes, q_sim, scfg = task
    sol = register(q_mes, q_sim, scfg)
    v0 = initial_velocity(q_mes, sol.pi0, scfg.kernel)
    return name, sol, v0


def cmd_register(args) -> int:
    cfg = cfgmod.load_config(args.config)
    out = Path(args.out)
    energies_csv = out / "energies.csv"
    sims = _sim_paths(args.sims)
    if _outputs_exist([energies_csv]) and not args.force:
        _skip_note([energies_csv])
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    q_mes = _read_shape(args.mes)
    dataset = [_read_shape(p) for p in sims]

    if cfg.prealign.enabled:
        if isinstance(q_mes, GridImage):
            raise InvalidInputError("pre-alignment requires point-based shapes")
        fit = fit_mean_rigid(q_mes, dataset, cfgmod.match_spec(cfg))
        transform = se_exp(fit.omega)
        dataset = [apply_rigid(q, transform) for q in dataset]
        fileio.write_table(
            out / "prealign.csv",
            [f"omega_{i + 1}" for i in range(fit.omega.size)],
            [list(map(float, fit.omega))],
        )
        print(f"pre-alignment: |omega|={np.linalg.norm(fit.omega):.3e} converged={fit.converged}")

    scfg = cfgmod.shooting_config(cfg)
    tasks = [(p.stem, q_mes, q, scfg) for p, q in zip(sims, dataset)]
    if args.jobs > 1:
        with multiprocessing.Pool(args.jobs) as pool:
            results = pool.map(_register_one, tasks)
    else:
        results = [_register_one(t) for t in tasks]

    rows = []
    for name, sol, v0 in results:
        rows.append(
            [
                name,
                deformation_energy(sol),
                sol.hamiltonian,
                sol.match_residual,
                int(sol.converged),
                sol.iterations,
            ]
        )
        if isinstance(q_mes, GridImage):
            fileio.write_grid(out / f"pi0_{name}.grid", GridImage(sol.pi0, q_mes.box))
            fileio.write_grid(out / f"v0_{name}_x.grid", GridImage(v0[..., 0], q_mes.box))
            fileio.write_grid(out / f"v0_{name}_y.grid", GridImage(v0[..., 1], q_mes.box))
        else:
            fileio.write_points(out / f"pi0_{name}.csv", sol.pi0, header=("pi_x", "pi_y"))
            fileio.write_points(out / f"v0_{name}.csv", v0, header=("v_x", "v_y"))
    fileio.write_table(
        energies_csv,
        ["name", "energy", "hamiltonian", "residual", "converged", "iterations"],
        rows,
    )
    n_conv = sum(r[4] for r in rows)
    print(f"registered {len(rows)} simulations ({n_conv} converged); energies in {energies_csv}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit-surrogate
# ---------------------------------------------------------------------------


def _load_records(reg_dir: Path, betas_path) -> list[VelocityRecord]:
    names, betas = fileio.read_betas(betas_path)
    beta_by_name = {n: b for n, b in zip(names, betas)}
    header, rows = fileio.read_table(reg_dir / "energies.csv")
    records = []
    for row in rows:
        name, energy = row[0], float(row[1])
        if name not in beta_by_name:
            raise InvalidInputError(f"betas file has no entry for simulation {name!r}")
        vx_grid = reg_dir / f"v0_{name}_x.grid"
        if vx_grid.exists():
            vx = fileio.read_grid(vx_grid).values
            vy = fileio.read_grid(reg_dir / f"v0_{name}_y.grid").values
            v0 = np.stack([vx, vy], axis=-1).ravel()
        else:
            v0 = fileio.read_points(reg_dir / f"v0_{name}.csv").ravel()
        records.append(VelocityRecord(beta=beta_by_name[name], v0_flat=v0, energy=energy))
    return records


def cmd_fit_surrogate(args) -> int:
    import json

    cfg = cfgmod.load_config(args.config)
    out = Path(args.out)
    model_path = out / "model.json"
    report_path = out / "validation.json"
    if _outputs_exist([model_path, report_path]) and not args.force:
        _skip_note([model_path])
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    records = _load_records(Path(args.reg), args.betas)
    records = filter_worst(records, cfg.surrogate.filter_fraction)
    rng = np.random.default_rng(cfg.seed)
    n = len(records)
    n_hold = max(int(round(cfg.surrogate.holdout_fraction * n)), 5)
    perm = rng.permutation(n)
    hold_idx = set(perm[:n_hold].tolist())
    train = [r for i, r in enumerate(records) if i not in hold_idx]
    held = [r for i, r in enumerate(records) if i in hold_idx]
    model = build_surrogate(
        train,
        variance_fraction=cfg.surrogate.variance_fraction,
        gp_restarts=cfg.surrogate.gp_restarts,
        seed=cfg.seed,
    )
    report = validation_report(model, held)
    save_model(model, model_path)
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2)
    print(
        f"surrogate: {model.n_components} components, {len(train)} train / {len(held)} held out; "
        f"Q2={report['Q2']:.3f} IAE={report['IAE']:.3f}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    cfg = cfgmod.load_config(args.config)
    out = Path(args.out)
    chain_csv = out / "chain.csv"
    summary_csv = out / "summary.csv"
    if _outputs_exist([chain_csv, summary_csv]) and not args.force:
        _skip_note([chain_csv])
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(args.model)
    prior = cfgmod.prior_spec(cfg)
    lik = None if args.prior_only else cfgmod.likelihood_spec(cfg)
    q_mes = _read_shape(args.mes) if args.mes else None
    shooting_cfg = cfgmod.shooting_config(cfg) if (lik and lik.include_data_term) else None
    if lik is not None and lik.include_data_term and q_mes is None:
        raise InvalidInputError("likelihood.include_data_term needs --mes")
    chain = sample_posterior(prior, lik, model, q_mes, cfgmod.mcmc_config(cfg), shooting_cfg)
    fileio.write_chain_csv(chain_csv, chain)
    rows = []
    for j, name in enumerate(chain.param_names):
        col = chain.samples[:, j]
        row = [
            name,
            float(col.mean()),
            float(col.std(ddof=1)),
            float(np.percentile(col, 2.5)),
            float(np.percentile(col, 97.5)),
        ]
        if chain.rhat is not None:
            row.append(float(chain.rhat[j]))
        rows.append(row)
    header = ["param", "mean", "sd", "p2.5", "p97.5"] + (["rhat"] if chain.rhat is not None else [])
    fileio.write_table(summary_csv, header, rows)
    print(
        f"sampled {chain.samples.shape[0]} draws (acceptance {chain.acceptance_rate:.3f}); "
        f"summary in {summary_csv}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict-posterior
# ---------------------------------------------------------------------------


def cmd_predict_posterior(args) -> int:
    cfg = cfgmod.load_config(args.config)
    out = Path(args.out)
    q_mes = _read_shape(args.mes)
    is_image = isinstance(q_mes, GridImage)
    mean_path = out / ("mean.grid" if is_image else "mean.csv")
    std_path = out / ("std.grid" if is_image else "std.csv")
    energies_path = out / "draw_energies.csv"
    outputs = [mean_path, std_path, energies_path]
    if _outputs_exist(outputs) and not args.force:
        _skip_note(outputs)
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(args.model)
    names, samples, logps = fileio.read_chain_csv(args.chain)
    n_beta = sum(1 for n in names if n.startswith("beta_"))
    chain = PosteriorChain(
        samples=samples,
        log_post=logps,
        acceptance_rate=float("nan"),
        seed=cfg.seed,
        burn_in=0,
        thinning=1,
        n_beta=n_beta,
        param_names=list(names),
    )
    summary = posterior_predictive(
        chain,
        model,
        q_mes,
        cfgmod.shooting_config(cfg),
        n_draws=min(args.draws, samples.shape[0]),
        seed=cfg.seed,
    )
    if is_image:
        fileio.write_grid(mean_path, summary.mean)
        fileio.write_grid(std_path, GridImage(summary.std, q_mes.box))

        def rescale(a):
            span = a.max() - a.min()
            return (a - a.min()) / span if span > 0 else np.zeros_like(a)

        fileio.write_grid(out / "mean_scaled.grid", GridImage(rescale(summary.mean.values), q_mes.box))
        fileio.write_grid(out / "std_scaled.grid", GridImage(rescale(summary.std), q_mes.box))
    else:
        fileio.write_points(mean_path, summary.mean.vertices, header=("x", "y"))
        fileio.write_points(std_path, summary.std, header=("sd_x", "sd_y"))
    fileio.write_table(
        energies_path,
        ["draw", "energy"],
        [[i, float(e)] for i, e in enumerate(summary.energies)],
    )
    print(
        f"pushforward of {summary.n_draws} draws ({summary.n_skipped} skipped); "
        f"mean/std written to {out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffcal",
        description="Diffeomorphic registration and Bayesian calibration pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-toy", help="generate toy images (one beta or an LHS design)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--beta", nargs=4, type=float, metavar=("B1", "B2", "B3", "B4"))
    group.add_argument("--lhs", type=int, metavar="N", help="number of design points")
    p.add_argument("--bounds", help="LHS bounds 'lo1,..,lo4:hi1,..,hi4' (default paper bounds)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--name", default="mes", help="file stem for --beta output")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_gen_toy)

    p = sub.add_parser("register", help="register the measurement to every simulation")
    p.add_argument("--mes", required=True)
    p.add_argument("--sims", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("fit-surrogate", help="fit the GP-PCA surrogate from registrations")
    p.add_argument("--reg", required=True, help="register output directory")
    p.add_argument("--betas", required=True, help="betas.csv with design parameters")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_fit_surrogate)

    p = sub.add_parser("calibrate", help="sample the posterior of the simulation parameters")
    p.add_argument("--model", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mes", help="measurement shape (needed for the data term)")
    p.add_argument("--prior-only", action="store_true", help="sample the prior (likelihood off)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict-posterior", help="push posterior draws into shape space")
    p.add_argument("--model", required=True)
    p.add_argument("--chain", required=True)
    p.add_argument("--mes", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--draws", type=int, default=50)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_predict_posterior)

    p = sub.add_parser("print-config", help="print a complete example configuration")
    p.set_defaults(func=lambda args: (print(cfgmod.default_config_yaml(), end=""), EXIT_OK)[1])

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInputError, ModelFormatError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (IntegrationError, SamplerError, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
