"""Command-line interface.

Subcommands::

    confsearch alkane --carbons N -o molecule.spec
    confsearch reference <molecule.spec> [ptmc flags] -o ref.json
    confsearch run <molecule.spec> --method vnd|ls|lsvnd|ptmc --solver exact|sa|remote ... -o out/
    confsearch sweep-s <molecule.spec> --sizes 30,60,90,120 [run flags] -o out/
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .harness import (
    ExperimentConfig,
    generate_reference,
    run_experiment,
    save_reference,
    sweep_neighbourhood_size,
)
from .molmodel import format_molecule, generate_alkane, parse_molecule
from .search import PtmcConfig, SearchConfig
from .solvers import SaConfig


def _add_ptmc_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--sweeps", type=int, default=None, help="PTMC sweep budget")
    parser.add_argument("--replicas", type=int, default=10)
    parser.add_argument("--tmin", type=float, default=0.5, help="coldest temperature (kcal/mol)")
    parser.add_argument("--tmax", type=float, default=100.0, help="hottest temperature (kcal/mol)")
    parser.add_argument("--exchange-interval", type=int, default=1)


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", choices=["vnd", "ls", "lsvnd", "ptmc"], default="vnd")
    parser.add_argument("--solver", choices=["exact", "sa", "remote"], default="exact")
    parser.add_argument("--d", type=int, default=16, help="discretization levels per torsion")
    parser.add_argument("--s", type=int, default=63, help="neighbourhood level budget")
    parser.add_argument("--max-iters", type=int, default=200)
    parser.add_argument("--max-no-improve", type=int, default=10)
    parser.add_argument("--penalty", default="auto", help="one-hot penalty: 'auto' or a value")
    parser.add_argument("--runs", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--reference", default=None, help="reference JSON produced by 'reference'")
    parser.add_argument("--remote-url", default=None)
    parser.add_argument("--remote-timeout", type=float, default=30.0)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--scale-14", type=float, default=1.0)
    parser.add_argument("--sa-reads", type=int, default=5000)
    parser.add_argument("--sa-sweeps", type=int, default=100)
    parser.add_argument("--success-threshold", type=float, default=1.0)
    parser.add_argument("--early-stop", type=float, default=0.1)
    _add_ptmc_flags(parser)


def _build_config(args, molecule: str, output: str | None) -> ExperimentConfig:
    penalty = None if args.penalty == "auto" else float(args.penalty)
    search = SearchConfig(
        d=args.d,
        s=args.s,
        max_iters=args.max_iters,
        max_no_improve=args.max_no_improve,
        penalty=penalty,
        solver=args.solver,
        scale_14=args.scale_14,
    )
    ptmc_cfg = PtmcConfig(
        replicas=args.replicas,
        sweeps=args.sweeps if args.sweeps is not None else 5000,
        t_min=args.tmin,
        t_max=args.tmax,
        exchange_interval=args.exchange_interval,
        d=args.d,
        scale_14=args.scale_14,
    )
    return ExperimentConfig(
        molecule=molecule,
        method=args.method,
        search=search,
        ptmc=ptmc_cfg,
        sa=SaConfig(reads=args.sa_reads, sweeps=args.sa_sweeps),
        runs=args.runs,
        reference=args.reference,
        output=output,
        base_seed=args.seed,
        workers=args.workers,
        success_threshold=args.success_threshold,
        early_stop=args.early_stop,
        remote_url=args.remote_url,
        remote_timeout=args.remote_timeout,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="confsearch",
        description="Conformational search over discretized torsions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_alkane = sub.add_parser("alkane", help="write an idealized n-alkane molecule spec")
    p_alkane.add_argument("--carbons", type=int, required=True)
    p_alkane.add_argument("-o", "--output", required=True)

    p_ref = sub.add_parser("reference", help="generate a reference conformer via PTMC")
    p_ref.add_argument("molecule")
    p_ref.add_argument("-o", "--output", required=True)
    p_ref.add_argument("--seed", type=int, default=0)
    p_ref.add_argument("--d", type=int, default=16)
    p_ref.add_argument("--scale-14", type=float, default=1.0)
    p_ref.add_argument(
        "--min-sweeps-per-torsion",
        type=int,
        default=100_000,
        help="floor on sweeps per torsion (lower only for toy systems)",
    )
    _add_ptmc_flags(p_ref)

    p_run = sub.add_parser("run", help="run a batch conformational-search experiment")
    p_run.add_argument("molecule")
    p_run.add_argument("-o", "--output", required=True)
    _add_run_flags(p_run)

    p_sweep = sub.add_parser("sweep-s", help="re-run an experiment over neighbourhood sizes")
    p_sweep.add_argument("molecule")
    p_sweep.add_argument("-o", "--output", required=True)
    p_sweep.add_argument("--sizes", required=True, help="comma-separated budgets, e.g. 30,60,90")
    _add_run_flags(p_sweep)

    args = parser.parse_args(argv)

    if args.command == "alkane":
        spec = generate_alkane(args.carbons)
        Path(args.output).write_text(format_molecule(spec))
        print(f"wrote {args.output}: {spec.n_atoms} atoms, {spec.n_torsions} torsions")
        return 0

    if args.command == "reference":
        path = Path(args.molecule)
        spec = parse_molecule(path.read_text(), name=path.stem)
        sweeps = args.sweeps
        if sweeps is None:
            sweeps = args.min_sweeps_per_torsion * max(1, spec.n_torsions)
        cfg = PtmcConfig(
            replicas=args.replicas,
            sweeps=sweeps,
            t_min=args.tmin,
            t_max=args.tmax,
            exchange_interval=args.exchange_interval,
            d=args.d,
            seed=args.seed,
            scale_14=args.scale_14,
        )
        record = generate_reference(
            spec, cfg, min_sweeps_per_torsion=args.min_sweeps_per_torsion
        )
        save_reference(record, args.output)
        print(f"reference energy {record.energy:.6f} kcal/mol -> {args.output}")
        return 0

    if args.command == "run":
        cfg = _build_config(args, args.molecule, args.output)
        metrics, _ = run_experiment(cfg)
        print(
            f"{cfg.method}: success {metrics.success_rate:.2f}, "
            f"median residual {metrics.residual_p50:.4f} kcal/mol, "
            f"mean evals {metrics.energy_evals_mean:.3g} "
            f"({metrics.n_runs} runs, {metrics.n_failed} failed)"
        )
        return 0

    if args.command == "sweep-s":
        sizes = [int(tok) for tok in args.sizes.split(",") if tok]
        cfg = _build_config(args, args.molecule, args.output)
        rows = sweep_neighbourhood_size(cfg, sizes)
        for s, metrics in rows:
            print(
                f"s={s}: success {metrics.success_rate:.2f}, "
                f"median residual {metrics.residual_p50:.4f} kcal/mol"
            )
        return 0

    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
