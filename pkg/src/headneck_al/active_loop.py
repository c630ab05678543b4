"""The active-learning loop: retrain, solve the task, replay in the oracle, append.

State lives on disk so a run can be stopped and resumed at any iteration
boundary.  The pool directory holds one sample CSV per trajectory plus a
manifest; the run directory holds the per-iteration models, the optimal
trajectories and the history CSV.  The history file is written last in every
iteration and is the commit record: anything belonging to an iteration
without a history row is discarded on resume.
"""

from __future__ import annotations

import csv
import logging
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import ORACLE, PROVENANCES, SampleTable, fmt, read_samples_csv, write_samples_csv
from .model import ModelParams
from .ocp import (OcpSpec, SolverOptions, Trajectory, default_task, read_trajectory_csv, solve,
                  transcribe, write_trajectory_csv)
from .oracle import FoamBed, replay
from .surrogate import (FORCE_DIMS, MOMENT_DIMS, MlpModel, SplitSpec, SurrogateContact, TrainConfig,
                        fit_wrench_model, load_model, save_model, split)

log = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["traj_id", "provenance", "sample_count", "source_iteration"]
HISTORY_COLUMNS = ["iteration", "force_rmse", "moment_rmse", "pool_size", "ocp_converged",
                   "train_epochs_force", "train_epochs_moment", "wall_time"]
EVAL_COLUMNS = ["time",
                "F_true_x", "F_true_y", "F_true_z", "F_pred_x", "F_pred_y", "F_pred_z",
                "M_true_x", "M_true_y", "M_true_z", "M_pred_x", "M_pred_y", "M_pred_z"]


class PoolError(ValueError):
    pass


def _write_rows_atomic(path: Path, header, rows) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    os.replace(tmp, path)


def _read_rows(path: Path, header) -> list[list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got != header:
            raise PoolError(f"{path}: unexpected header {got}")
        return list(reader)


@dataclass(frozen=True)
class ManifestEntry:
    traj_id: str
    provenance: str
    sample_count: int
    source_iteration: int


class DataPool:
    """Append-only sample pool stored as one CSV per trajectory plus a manifest."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.manifest: list[ManifestEntry] = []
        self._tables: dict[str, SampleTable] = {}

    @property
    def manifest_path(self) -> Path:
        return self.directory / "manifest.csv"

    def _sample_path(self, traj_id: str) -> Path:
        return self.directory / f"{traj_id}.csv"

    @classmethod
    def create(cls, directory) -> "DataPool":
        pool = cls(directory)
        pool.directory.mkdir(parents=True, exist_ok=True)
        pool._write_manifest()
        return pool

    @classmethod
    def load(cls, directory) -> "DataPool":
        pool = cls(directory)
        if not pool.manifest_path.exists():
            raise PoolError(f"no pool manifest in {pool.directory}")
        for row in _read_rows(pool.manifest_path, MANIFEST_COLUMNS):
            entry = ManifestEntry(row[0], row[1], int(row[2]), int(row[3]))
            table = read_samples_csv(pool._sample_path(entry.traj_id))
            if len(table) != entry.sample_count:
                raise PoolError(f"{entry.traj_id}: manifest says {entry.sample_count} samples, "
                                f"file has {len(table)}")
            pool.manifest.append(entry)
            pool._tables[entry.traj_id] = table
        return pool

    def _write_manifest(self) -> None:
        rows = [[e.traj_id, e.provenance, str(e.sample_count), str(e.source_iteration)]
                for e in self.manifest]
        _write_rows_atomic(self.manifest_path, MANIFEST_COLUMNS, rows)

    def __len__(self) -> int:
        return sum(e.sample_count for e in self.manifest)

    def __contains__(self, traj_id) -> bool:
        return traj_id in self._tables

    def append(self, table: SampleTable, source_iteration: int) -> None:
        """Add every trajectory of ``table``; ids already in the pool are rejected."""
        new = table.trajectory_ids()
        for traj_id in new:
            if traj_id in self._tables:
                raise PoolError(f"trajectory {traj_id!r} is already in the pool")
        for traj_id in new:
            part = table.take(np.flatnonzero(table.traj_id == traj_id))
            provenance = {str(p) for p in part.provenance}
            if len(provenance) != 1 or not provenance <= set(PROVENANCES):
                raise PoolError(f"trajectory {traj_id!r} must have a single known provenance")
            write_samples_csv(self._sample_path(traj_id), part)
            self._tables[traj_id] = part
            self.manifest.append(ManifestEntry(traj_id, provenance.pop(), len(part), source_iteration))
        self._write_manifest()

    def rollback(self, last_iteration: int) -> None:
        """Forget entries appended after ``last_iteration`` (uncommitted work after a crash)."""
        keep = [e for e in self.manifest if e.source_iteration <= last_iteration]
        if len(keep) == len(self.manifest):
            return
        for e in self.manifest:
            if e.source_iteration > last_iteration:
                self._tables.pop(e.traj_id, None)
        self.manifest = keep
        self._write_manifest()

    def samples(self) -> SampleTable:
        return SampleTable.concat([self._tables[e.traj_id] for e in self.manifest])


def rmse(predicted, truth) -> float:
    """Root mean squared error over all samples and components."""
    predicted = np.asarray(predicted, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if predicted.shape != truth.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {truth.shape}")
    if predicted.size == 0:
        raise ValueError("rmse of an empty set")
    return float(np.sqrt(np.mean((predicted - truth) ** 2)))


@dataclass(frozen=True)
class HistoryRow:
    iteration: int
    force_rmse: float
    moment_rmse: float
    pool_size: int
    ocp_converged: bool
    train_epochs_force: int
    train_epochs_moment: int
    wall_time: float

    def to_csv(self) -> list[str]:
        return [str(self.iteration), fmt(self.force_rmse), fmt(self.moment_rmse), str(self.pool_size),
                str(int(self.ocp_converged)), str(self.train_epochs_force), str(self.train_epochs_moment),
                fmt(self.wall_time)]

    @classmethod
    def from_csv(cls, row) -> "HistoryRow":
        return cls(int(row[0]), float(row[1]), float(row[2]), int(row[3]), bool(int(row[4])),
                   int(row[5]), int(row[6]), float(row[7]))


def write_history(path, rows) -> None:
    _write_rows_atomic(Path(path), HISTORY_COLUMNS, [r.to_csv() for r in rows])


def read_history(path) -> list[HistoryRow]:
    path = Path(path)
    if not path.exists():
        return []
    rows = [HistoryRow.from_csv(r) for r in _read_rows(path, HISTORY_COLUMNS)]
    for k, row in enumerate(rows, start=1):
        if row.iteration != k:
            raise PoolError(f"{path}: iterations are not contiguous from 1")
    return rows


@dataclass
class LoopConfig:
    """Settings of one loop run.

    ``record_wall_time = False`` writes 0 into the ``wall_time`` column so that
    repeated runs produce byte-identical history files.  ``warm_start`` adds
    the previous iteration's solution as a second starting point of the OCP.
    """

    pool_dir: Path
    run_dir: Path
    iterations: int = 200
    base_seed: int = 0
    task: OcpSpec = field(default_factory=default_task)
    bed: FoamBed = field(default_factory=FoamBed)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    solver: SolverOptions = field(default_factory=SolverOptions)
    force_dims: tuple = FORCE_DIMS
    moment_dims: tuple = MOMENT_DIMS
    record_wall_time: bool = True
    warm_start: bool = True

    def __post_init__(self):
        self.pool_dir = Path(self.pool_dir)
        self.run_dir = Path(self.run_dir)
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    @property
    def params(self) -> ModelParams:
        return self.task.params

    @property
    def history_path(self) -> Path:
        return self.run_dir / "history.csv"

    def model_path(self, iteration: int, kind: str) -> Path:
        return self.run_dir / "models" / f"iter-{iteration:04d}-{kind}.json"

    def trajectory_path(self, iteration: int) -> Path:
        return self.run_dir / "trajectories" / f"iter-{iteration:04d}.csv"


def oracle_trajectory_id(iteration: int) -> str:
    return f"oracle-{iteration:04d}"


def iteration_seeds(base_seed: int, iteration: int) -> tuple[int, int, int]:
    """Seeds for (split and batch order, force init, moment init)."""
    seed = base_seed + iteration
    return seed, 2 * seed + 1, 2 * seed + 2


@dataclass
class IterationResult:
    row: HistoryRow
    force_model: MlpModel
    moment_model: MlpModel
    trajectory: Trajectory
    oracle_samples: SampleTable


def train_surrogate(pool: SampleTable, cfg: LoopConfig, iteration: int):
    """Split the pool (seed ``base_seed + iteration``) and fit both networks from scratch."""
    seed, force_seed, moment_seed = iteration_seeds(cfg.base_seed, iteration)
    parts = split(pool, SplitSpec(cfg.split.test_fraction, cfg.split.val_fraction, seed))
    train_cfg = replace(cfg.train, seed=seed)
    force = fit_wrench_model(cfg.force_dims, parts.train, parts.val, "force", train_cfg, force_seed)
    moment = fit_wrench_model(cfg.moment_dims, parts.train, parts.val, "moment", train_cfg, moment_seed)
    return force, moment, parts


def _solve_task(nlp, cfg: LoopConfig, iteration: int, warm_start: Trajectory | None):
    """Solve from the default initial guess and, if enabled, from the previous solution.

    The converged result with the lower objective wins.  Starting only from
    the previous solution can keep the loop in a poor local minimum (the head
    held off the headrest by actuation), so the default start always runs.
    """
    starts = [None]
    if cfg.warm_start and warm_start is not None:
        starts.append(warm_start)
    best = None
    for start in starts:
        try:
            traj, report = solve(nlp, warm_start=start, tol=cfg.solver)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            log.warning("iteration %d: OCP failed (%s)", iteration, exc)
            continue
        log.info("iteration %d: OCP from %s start: %s (viol %.2e, stationarity %.2e, objective %.6g)",
                 iteration, "default" if start is None else "previous", report.message,
                 report.max_constraint_violation, report.stationarity_norm, report.objective_value)
        key = (not report.converged, report.objective_value)
        if best is None or key < best[0]:
            best = (key, traj, report.converged)
    if best is None:
        log.warning("iteration %d: replaying the default initial guess", iteration)
        return nlp.trajectory(nlp.initial_guess()), False
    return best[1], best[2]


def run_iteration(pool: DataPool, cfg: LoopConfig, iteration: int,
                  warm_start: Trajectory | None) -> IterationResult:
    """One pass of retrain, solve, replay and evaluate; does not touch the disk."""
    start = time.perf_counter()
    force, moment, _ = train_surrogate(pool.samples(), cfg, iteration)
    contact = SurrogateContact(force.model, moment.model, cfg.params)
    spec = replace(cfg.task, contact_model=contact)
    nlp = transcribe(spec)
    traj, converged = _solve_task(nlp, cfg, iteration, warm_start)
    data = replay(traj, cfg.bed, cfg.params, oracle_trajectory_id(iteration))
    samples = data.samples
    X = samples.features()
    force_rmse = rmse(force.model.predict(X), samples.force)
    moment_rmse = rmse(moment.model.predict(X), samples.moment)
    wall = time.perf_counter() - start if cfg.record_wall_time else 0.0
    row = HistoryRow(iteration, force_rmse, moment_rmse, len(pool) + len(samples), converged,
                     force.epochs_run, moment.epochs_run, wall)
    return IterationResult(row, force.model, moment.model, traj, samples)


def _commit(pool: DataPool, cfg: LoopConfig, result: IterationResult, history: list[HistoryRow]) -> None:
    i = result.row.iteration
    cfg.model_path(i, "force").parent.mkdir(parents=True, exist_ok=True)
    cfg.trajectory_path(i).parent.mkdir(parents=True, exist_ok=True)
    save_model(cfg.model_path(i, "force"), result.force_model)
    save_model(cfg.model_path(i, "moment"), result.moment_model)
    write_trajectory_csv(cfg.trajectory_path(i), result.trajectory)
    pool.append(result.oracle_samples, i)
    history.append(result.row)
    write_history(cfg.history_path, history)


def run_loop(cfg: LoopConfig, resume: bool = False, stop_after: int | None = None) -> list[HistoryRow]:
    """Run (or continue) the loop up to ``cfg.iterations``.

    With ``resume`` the committed history is kept and the loop continues after
    its last row; otherwise an existing history is an error.  ``stop_after``
    ends the call after that many new iterations (used to emulate an
    interrupted run).
    """
    pool = DataPool.load(cfg.pool_dir)
    history = read_history(cfg.history_path)
    if history and not resume:
        raise PoolError(f"{cfg.history_path} exists; pass resume=True to continue it")
    done = len(history)
    pool.rollback(done)
    if len(pool.samples().trajectory_ids()) < 2:
        raise PoolError("the pool needs at least two trajectories (run the preliminary stage first)")
    cfg.run_dir.mkdir(parents=True, exist_ok=True)
    warm = read_trajectory_csv(cfg.trajectory_path(done)) if done else None
    new = 0
    for i in range(done + 1, cfg.iterations + 1):
        if stop_after is not None and new >= stop_after:
            break
        result = run_iteration(pool, cfg, i, warm)
        _commit(pool, cfg, result, history)
        warm = result.trajectory
        new += 1
        r = result.row
        log.info("iteration %d: force rmse %.4g N, moment rmse %.4g Nm, pool %d", i, r.force_rmse,
                 r.moment_rmse, r.pool_size)
    return history


@dataclass
class EvaluationTable:
    time: np.ndarray
    force_true: np.ndarray
    force_pred: np.ndarray
    moment_true: np.ndarray
    moment_pred: np.ndarray

    def force_rmse(self) -> float:
        return rmse(self.force_pred, self.force_true)

    def moment_rmse(self) -> float:
        return rmse(self.moment_pred, self.moment_true)


def evaluate_final(force_model: MlpModel, moment_model: MlpModel, trajectory: Trajectory,
                   bed: FoamBed, params: ModelParams) -> EvaluationTable:
    """Predicted against oracle wrenches along the phase-1 replay of ``trajectory``."""
    samples = replay(trajectory, bed, params, "evaluation").samples
    X = samples.features()
    return EvaluationTable(samples.time.copy(), samples.force.copy(), force_model.predict(X),
                           samples.moment.copy(), moment_model.predict(X))


def write_evaluation_csv(path, table: EvaluationTable) -> None:
    rows = []
    for k in range(len(table.time)):
        rows.append([fmt(table.time[k])] + [fmt(x) for x in table.force_true[k]]
                    + [fmt(x) for x in table.force_pred[k]] + [fmt(x) for x in table.moment_true[k]]
                    + [fmt(x) for x in table.moment_pred[k]])
    _write_rows_atomic(Path(path), EVAL_COLUMNS, rows)


def read_evaluation_csv(path) -> EvaluationTable:
    num = np.array([[float(x) for x in r] for r in _read_rows(Path(path), EVAL_COLUMNS)])
    return EvaluationTable(num[:, 0], num[:, 1:4], num[:, 4:7], num[:, 7:10], num[:, 10:13])


def load_iteration_models(cfg: LoopConfig, iteration: int) -> tuple[MlpModel, MlpModel]:
    return load_model(cfg.model_path(iteration, "force")), load_model(cfg.model_path(iteration, "moment"))


__all__ = [
    "DataPool", "EvaluationTable", "HistoryRow", "LoopConfig", "ManifestEntry", "PoolError", "ORACLE",
    "evaluate_final", "iteration_seeds", "load_iteration_models", "oracle_trajectory_id", "read_evaluation_csv",
    "read_history", "rmse", "run_iteration", "run_loop", "train_surrogate", "write_evaluation_csv",
    "write_history",
]
