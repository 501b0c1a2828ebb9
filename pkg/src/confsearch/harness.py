"""Experiment harness: reference conformers, batch runs, metric tables.

A reference conformer for a molecule comes from a long parallel-tempering
run using the same energy model as the searches being scored.  Batch
experiments then run many independently seeded searches against that
reference and aggregate success rate (within 1 kcal/mol by default),
residual percentiles, mean energy-evaluation counts, and time-to-solution
percentiles.  Runs early-stop once they come within 0.1 kcal/mol of the
reference energy; both thresholds are configurable.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .energy import EnergyModel, EvalCounter
from .molmodel import MoleculeSpec, TorsionVector, parse_molecule
from .search import PtmcConfig, RunResult, SearchConfig, local_search, ls_vnd, ptmc, vnd
from .solvers import SaConfig, solve_exact, solve_remote, solve_sa

__all__ = [
    "ReferenceRecord",
    "Metrics",
    "ExperimentConfig",
    "generate_reference",
    "load_reference",
    "save_reference",
    "run_experiment",
    "sweep_neighbourhood_size",
    "HarnessError",
]

METHODS = ("vnd", "ls", "lsvnd", "ptmc")
DEFAULT_SUCCESS_THRESHOLD = 1.0  # kcal/mol, roughly chemical accuracy
DEFAULT_EARLY_STOP = 0.1  # kcal/mol above the reference energy
MIN_REFERENCE_SWEEPS_PER_TORSION = 100_000


class HarnessError(RuntimeError):
    """Configuration or I/O failure in the experiment harness."""


@dataclass(frozen=True)
class ReferenceRecord:
    """Best-known conformation of a molecule plus how it was produced."""

    angles: tuple[float, ...]
    energy: float
    n_atoms: int
    provenance: dict = field(default_factory=dict)

    def torsion_vector(self) -> TorsionVector:
        return TorsionVector(self.angles)


def generate_reference(
    spec: MoleculeSpec,
    cfg: PtmcConfig,
    min_sweeps_per_torsion: int = MIN_REFERENCE_SWEEPS_PER_TORSION,
) -> ReferenceRecord:
    """Long parallel-tempering run that stands in for the global minimum.

    ``cfg.sweeps`` must reach ``min_sweeps_per_torsion`` per torsion (lower
    the floor explicitly for small test systems).  The run uses the same
    energy model as every search scored against the result.
    """
    m = spec.n_torsions
    if m > 0 and cfg.sweeps < min_sweeps_per_torsion * m:
        raise HarnessError(
            f"reference generation needs at least {min_sweeps_per_torsion} sweeps "
            f"per torsion ({min_sweeps_per_torsion * m} total); got {cfg.sweeps}"
        )
    model = EnergyModel(spec, scale_14=cfg.scale_14)
    if m == 0:
        energy = model.total_energy(TorsionVector(()), EvalCounter())
        result_angles: tuple[float, ...] = ()
    else:
        run = ptmc(spec, cfg, model=model)
        energy = run.best_energy
        result_angles = run.best_t.angles
    provenance = {
        "method": "ptmc",
        "sweeps": cfg.sweeps,
        "replicas": cfg.replicas,
        "t_min": cfg.t_min,
        "t_max": cfg.t_max,
        "exchange_interval": cfg.exchange_interval,
        "d": cfg.d,
        "seed": cfg.seed,
        "scale_14": cfg.scale_14,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    return ReferenceRecord(result_angles, energy, spec.n_atoms, provenance)


def save_reference(record: ReferenceRecord, path: str | Path) -> None:
    doc = {
        "angles": list(record.angles),
        "energy": record.energy,
        "n_atoms": record.n_atoms,
        "provenance": record.provenance,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_reference(path: str | Path) -> ReferenceRecord:
    try:
        doc = json.loads(Path(path).read_text())
        return ReferenceRecord(
            tuple(float(a) for a in doc["angles"]),
            float(doc["energy"]),
            int(doc["n_atoms"]),
            dict(doc.get("provenance", {})),
        )
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise HarnessError(f"cannot load reference {path}: {exc}") from None


@dataclass(frozen=True)
class Metrics:
    """Aggregate statistics over the runs of one experiment."""

    success_rate: float
    energy_evals_mean: float
    residual_min: float
    residual_p50: float
    residual_p75: float
    normalized_residual_min: float
    normalized_residual_p50: float
    normalized_residual_p75: float
    tts_min: float
    tts_p50: float
    tts_p75: float
    n_runs: int
    n_failed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    """One batch experiment: molecule, method, per-run settings, seeds."""

    molecule: str | Path
    method: str = "vnd"
    search: SearchConfig = SearchConfig()
    ptmc: PtmcConfig = PtmcConfig()
    sa: SaConfig = SaConfig()
    runs: int = 1
    reference: str | Path | None = None
    output: str | Path | None = None
    base_seed: int = 0
    workers: int | None = None
    success_threshold: float = DEFAULT_SUCCESS_THRESHOLD
    early_stop: float = DEFAULT_EARLY_STOP
    remote_url: str | None = None
    remote_timeout: float = 30.0
    reference_min_sweeps_per_torsion: int = MIN_REFERENCE_SWEEPS_PER_TORSION

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("need at least one run")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")


def _resolve_workers(cfg_workers: int | None) -> int:
    if cfg_workers is not None:
        return max(1, cfg_workers)
    env = os.environ.get("CONFSEARCH_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _make_solver(cfg: ExperimentConfig, seed: int):
    name = cfg.search.solver
    if name == "exact":
        return solve_exact
    if name == "sa":
        sa_cfg = replace(cfg.sa, seed=seed)
        return lambda q: solve_sa(q, sa_cfg)
    if name == "remote":
        if not cfg.remote_url:
            raise HarnessError("remote solver selected but no remote URL configured")
        url, timeout = cfg.remote_url, cfg.remote_timeout
        return lambda q: solve_remote(q, url, timeout)
    raise HarnessError(f"unknown solver {name!r}")


def _execute_run(payload: tuple) -> dict:
    """One seeded run; returns a JSON-ready record (module-level for pickling)."""
    spec, cfg, run_index, target = payload
    seed = cfg.base_seed + run_index
    record: dict = {"run": run_index, "seed": seed, "method": cfg.method}
    try:
        rng = np.random.default_rng(seed)
        if cfg.method == "ptmc":
            pt = replace(cfg.ptmc, seed=seed, target_energy=target)
            result: RunResult = ptmc(spec, pt, rng=rng)
        else:
            search = replace(cfg.search, seed=seed, target_energy=target)
            if cfg.method == "vnd":
                result = vnd(spec, search, solver=_make_solver(cfg, seed), rng=rng)
            elif cfg.method == "ls":
                result = local_search(spec, search, rng=rng)
            else:
                result = ls_vnd(spec, search, solver=_make_solver(cfg, seed), rng=rng)
        record.update(
            best_energy=result.best_energy,
            best_angles=list(result.best_t.angles),
            energy_evals=result.energy_evals,
            wall_time=result.wall_time,
            tts=result.time_to_best,
            terminated_by=result.terminated_by,
            trajectory=[[it, e] for it, e in result.trajectory],
            error=None,
        )
    except (ValueError, HarnessError) as exc:
        record.update(error=f"{type(exc).__name__}: {exc}")
    return record


def _aggregate(records: list[dict], reference: ReferenceRecord, threshold: float) -> Metrics:
    good = [r for r in records if r.get("error") is None]
    n_failed = len(records) - len(good)
    if not good:
        raise HarnessError("all runs failed; no metrics to aggregate")
    residuals = np.array([r["best_energy"] - reference.energy for r in good])
    normalized = residuals / reference.n_atoms
    tts = np.array([r["tts"] for r in good])
    evals = np.array([r["energy_evals"] for r in good], dtype=float)
    success = float(np.mean(residuals <= threshold))
    return Metrics(
        success_rate=success,
        energy_evals_mean=float(evals.mean()),
        residual_min=float(residuals.min()),
        residual_p50=float(np.percentile(residuals, 50)),
        residual_p75=float(np.percentile(residuals, 75)),
        normalized_residual_min=float(normalized.min()),
        normalized_residual_p50=float(np.percentile(normalized, 50)),
        normalized_residual_p75=float(np.percentile(normalized, 75)),
        tts_min=float(tts.min()),
        tts_p50=float(np.percentile(tts, 50)),
        tts_p75=float(np.percentile(tts, 75)),
        n_runs=len(records),
        n_failed=n_failed,
    )


def _metrics_csv_row(method: str, model: str, metrics: Metrics) -> list:
    return [
        method,
        model,
        f"{metrics.success_rate:.2f}",
        f"{metrics.energy_evals_mean:.6g}",
        f"{metrics.residual_min:.6g}",
        f"{metrics.residual_p50:.6g}",
        f"{metrics.residual_p75:.6g}",
        f"{metrics.tts_min:.6g}",
        f"{metrics.tts_p50:.6g}",
        f"{metrics.tts_p75:.6g}",
    ]


_CSV_HEADER = [
    "method",
    "model",
    "success_rate",
    "num_energy_evaluations",
    "residual_min",
    "residual_50th",
    "residual_75th",
    "tts_min",
    "tts_50th",
    "tts_75th",
]


def run_experiment(
    cfg: ExperimentConfig,
    spec: MoleculeSpec | None = None,
    reference: ReferenceRecord | None = None,
) -> tuple[Metrics, list[dict]]:
    """Execute ``cfg.runs`` independently seeded runs and aggregate metrics.

    The reference is loaded from ``cfg.reference`` (or generated with the
    PTMC settings when absent).  Each run gets seed ``base_seed + index``
    and early-stops at ``reference energy + early_stop``.  When an output
    directory is configured, per-run records stream to ``runs.jsonl`` as
    they complete and the aggregate lands in ``metrics.csv`` /
    ``metrics.json``.
    """
    if spec is None:
        path = Path(cfg.molecule)
        spec = parse_molecule(path.read_text(), name=path.stem)
    if reference is None:
        if cfg.reference is not None:
            reference = load_reference(cfg.reference)
        else:
            reference = generate_reference(
                spec, cfg.ptmc,
                min_sweeps_per_torsion=cfg.reference_min_sweeps_per_torsion,
            )
    if reference.n_atoms != spec.n_atoms:
        raise HarnessError(
            f"reference has {reference.n_atoms} atoms, molecule has {spec.n_atoms}"
        )
    if len(reference.angles) != spec.n_torsions:
        raise HarnessError(
            f"reference has {len(reference.angles)} torsions, molecule has {spec.n_torsions}"
        )

    target = reference.energy + cfg.early_stop
    payloads = [(spec, cfg, k, target) for k in range(cfg.runs)]
    workers = min(_resolve_workers(cfg.workers), cfg.runs)

    out_dir = Path(cfg.output) if cfg.output is not None else None
    jsonl = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        jsonl = (out_dir / "runs.jsonl").open("w")

    records: list[dict] = []
    try:
        if workers == 1:
            for payload in payloads:
                record = _execute_run(payload)
                records.append(record)
                if jsonl:
                    jsonl.write(json.dumps(record) + "\n")
                    jsonl.flush()
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_execute_run, p) for p in payloads]
                for fut in as_completed(futures):
                    record = fut.result()
                    records.append(record)
                    if jsonl:
                        jsonl.write(json.dumps(record) + "\n")
                        jsonl.flush()
    finally:
        if jsonl:
            jsonl.close()

    records.sort(key=lambda r: r["run"])
    metrics = _aggregate(records, reference, cfg.success_threshold)

    if out_dir is not None:
        with (out_dir / "metrics.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_HEADER)
            writer.writerow(_metrics_csv_row(cfg.method, spec.name, metrics))
        meta = {
            "molecule": str(cfg.molecule),
            "model": spec.name,
            "method": cfg.method,
            "runs": cfg.runs,
            "base_seed": cfg.base_seed,
            "success_threshold_kcal_mol": cfg.success_threshold,
            "early_stop_kcal_mol": cfg.early_stop,
            "reference_energy": reference.energy,
            # Normalization divides by the full atom count, hydrogens included.
            "n_atoms": spec.n_atoms,
            "metrics": dataclasses.asdict(metrics),
        }
        (out_dir / "metrics.json").write_text(json.dumps(meta, indent=2) + "\n")
    return metrics, records


def sweep_neighbourhood_size(
    cfg: ExperimentConfig,
    sizes: list[int],
    spec: MoleculeSpec | None = None,
    reference: ReferenceRecord | None = None,
) -> list[tuple[int, Metrics]]:
    """Re-run the experiment for each neighbourhood budget in ``sizes``."""
    if not sizes:
        raise HarnessError("sweep needs at least one neighbourhood size")
    if spec is None:
        path = Path(cfg.molecule)
        spec = parse_molecule(path.read_text(), name=path.stem)
    if reference is None:
        if cfg.reference is not None:
            reference = load_reference(cfg.reference)
        else:
            reference = generate_reference(
                spec, cfg.ptmc,
                min_sweeps_per_torsion=cfg.reference_min_sweeps_per_torsion,
            )

    out_dir = Path(cfg.output) if cfg.output is not None else None
    rows: list[tuple[int, Metrics]] = []
    for s in sizes:
        sub = replace(
            cfg,
            search=replace(cfg.search, s=s),
            output=None if out_dir is None else out_dir / f"s{s}",
        )
        metrics, _ = run_experiment(sub, spec=spec, reference=reference)
        rows.append((s, metrics))

    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / "sweep.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["s"] + _CSV_HEADER)
            for s, metrics in rows:
                writer.writerow([s] + _metrics_csv_row(cfg.method, spec.name, metrics))
    return rows
