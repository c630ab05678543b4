"""Command-line entry points: ``headneck-al <command> ...``.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or configuration
error.  Failures print one JSON object ``{"error": kind, "message": ...}`` on
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import active_loop as al
from .aux_contact import preliminary_dataset
from .config import ConfigError, PipelineConfig, load_config, save_config
from .data import read_samples_csv, write_samples_csv
from .ocp import read_trajectory_csv, solve, transcribe, write_trajectory_csv
from .oracle import replay
from .surrogate import FORCE_DIMS, MOMENT_DIMS, SurrogateContact, load_model, save_model

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def _loop_config(cfg: PipelineConfig, pool: Path, run: Path, iterations: int | None) -> al.LoopConfig:
    return al.LoopConfig(
        pool_dir=pool, run_dir=run,
        iterations=iterations if iterations is not None else cfg.loop.iterations,
        base_seed=cfg.loop.base_seed, task=cfg.ocp_spec(), bed=cfg.foam_bed(), train=cfg.train_config(),
        split=cfg.split_spec(), solver=cfg.solver_options(), force_dims=FORCE_DIMS, moment_dims=MOMENT_DIMS,
        record_wall_time=cfg.loop.record_wall_time,
    )


def _ensure_empty(path: Path, force: bool) -> None:
    if path.exists() and any(path.iterdir()) and not force:
        raise UsageError(f"{path} exists and is not empty (use --force)")
    path.mkdir(parents=True, exist_ok=True)


def _run_dir(args) -> Path:
    return Path(args.run) if args.run else Path(args.pool).parent / "run"


# -- commands --------------------------------------------------------------------------


def cmd_prelim(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    _ensure_empty(out, args.force)
    if args.force and (out / "manifest.csv").exists():
        for f in out.glob("*.csv"):
            f.unlink()
    table = preliminary_dataset(cfg.lhs_spec(), cfg.aux_params(), cfg.model_params(), cfg.aux.chunk_size)
    pool = al.DataPool.create(out)
    pool.append(table, 0)
    save_config(out / "config.json", cfg)
    print(len(table))
    return EXIT_OK


def cmd_loop(args) -> int:
    cfg = load_config(args.config)
    pool_dir = Path(args.pool)
    if not (pool_dir / "manifest.csv").exists():
        raise UsageError(f"{pool_dir} holds no pool manifest; run 'prelim' first")
    pool = al.DataPool.load(pool_dir)
    if len(pool) == 0:
        raise UsageError(f"the pool in {pool_dir} is empty; run 'prelim' first")
    run = _run_dir(args)
    loop_cfg = _loop_config(cfg, pool_dir, run, args.iterations)
    if loop_cfg.history_path.exists() and not args.resume:
        raise UsageError(f"{loop_cfg.history_path} exists; pass --resume to continue")
    run.mkdir(parents=True, exist_ok=True)
    save_config(run / "config.json", cfg)
    try:
        history = al.run_loop(loop_cfg, resume=args.resume)
    except al.PoolError as exc:
        raise UsageError(str(exc)) from exc
    print(f"{len(history)} iterations in {loop_cfg.history_path}")
    return EXIT_OK


def _surrogate(cfg, args):
    if not args.force_model and not args.moment_model:
        return None
    if not (args.force_model and args.moment_model):
        raise UsageError("--force-model and --moment-model must be given together")
    return SurrogateContact(load_model(args.force_model), load_model(args.moment_model), cfg.model_params())


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    contact = None if args.no_contact else _surrogate(cfg, args)
    nlp = transcribe(cfg.ocp_spec(contact))
    warm = read_trajectory_csv(args.warm_start) if args.warm_start else None
    traj, report = solve(nlp, warm_start=warm, tol=cfg.solver_options())
    write_trajectory_csv(args.out, traj)
    print(json.dumps({"converged": report.converged, "iterations": report.iterations,
                      "max_constraint_violation": report.max_constraint_violation,
                      "stationarity_norm": report.stationarity_norm,
                      "objective_value": report.objective_value}))
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = load_config(args.config)
    traj = read_trajectory_csv(args.trajectory)
    try:
        data = replay(traj, cfg.foam_bed(), cfg.model_params(), args.id)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    write_samples_csv(args.out, data.samples)
    print(len(data.samples))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    pool = al.DataPool.load(args.pool).samples()
    seed = cfg.loop.base_seed if args.seed is None else args.seed
    loop_cfg = _loop_config(cfg, args.pool, Path(args.out), 1)
    loop_cfg.base_seed = seed - 1  # iteration 1 then uses ``seed``
    try:
        force, moment, parts = al.train_surrogate(pool, loop_cfg, 1)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "force.json", force.model)
    save_model(out / "moment.json", moment.model)
    test = parts.test
    X = test.features()
    print(json.dumps({"force_epochs": force.epochs_run, "moment_epochs": moment.epochs_run,
                      "force_test_rmse": al.rmse(force.model.predict(X), test.force),
                      "moment_test_rmse": al.rmse(moment.model.predict(X), test.moment)}))
    return EXIT_OK


def cmd_eval(args) -> int:
    truth = read_samples_csv(args.truth)
    if args.pred:
        pred = read_samples_csv(args.pred)
        F, M = pred.force, pred.moment
    elif args.force_model and args.moment_model:
        X = truth.features()
        F, M = load_model(args.force_model).predict(X), load_model(args.moment_model).predict(X)
    else:
        raise UsageError("give --pred, or both --force-model and --moment-model")
    try:
        result = {"force_rmse": al.rmse(F, truth.force), "moment_rmse": al.rmse(M, truth.moment)}
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(json.dumps(result))
    return EXIT_OK


def cmd_export_plots(args) -> int:
    """Write plot-ready CSV tables (trajectory, wrench prediction, RMSE history) for the last iteration."""
    cfg = load_config(args.config)
    run = Path(args.run)
    loop_cfg = _loop_config(cfg, run, run, 1)
    history = al.read_history(loop_cfg.history_path)
    if not history:
        raise UsageError(f"no history in {run}")
    last = history[-1].iteration
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traj = read_trajectory_csv(loop_cfg.trajectory_path(last))
    write_trajectory_csv(out / "trajectory.csv", traj)
    force, moment = al.load_iteration_models(loop_cfg, last)
    table = al.evaluate_final(force, moment, traj, cfg.foam_bed(), cfg.model_params())
    al.write_evaluation_csv(out / "wrench_prediction.csv", table)
    with open(out / "oracle_wrench.csv", "w") as fh:
        fh.write("time,fx,fy,fz,mx,my,mz\n")
        for k in range(len(table.time)):
            vals = [table.time[k], *table.force_true[k], *table.moment_true[k]]
            fh.write(",".join(format(float(v), ".17g") for v in vals) + "\n")
    al.write_history(out / "rmse_history.csv", history)
    print(str(out))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="headneck-al", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="JSON configuration file (defaults if omitted)")
        return sp

    sp = with_config(sub.add_parser("prelim", help="write the preliminary (auxiliary-model) dataset"))
    sp.add_argument("--out", required=True, help="pool directory to create")
    sp.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    sp.set_defaults(func=cmd_prelim)

    sp = with_config(sub.add_parser("loop", help="run or resume the active-learning loop"))
    sp.add_argument("--pool", required=True, help="pool directory written by 'prelim'")
    sp.add_argument("--run", help="run directory for models, trajectories and history (default: POOL/../run)")
    sp.add_argument("--iterations", type=int, help="total iterations (overrides loop.iterations)")
    sp.add_argument("--resume", action="store_true", help="continue after the last committed iteration")
    sp.set_defaults(func=cmd_loop)

    sp = with_config(sub.add_parser("solve", help="solve the configured optimal-control task"))
    sp.add_argument("--out", required=True, help="trajectory CSV to write")
    sp.add_argument("--force-model", help="force network JSON")
    sp.add_argument("--moment-model", help="moment network JSON")
    sp.add_argument("--no-contact", action="store_true", help="solve without a contact model")
    sp.add_argument("--warm-start", help="trajectory CSV used as the initial guess")
    sp.set_defaults(func=cmd_solve)

    sp = with_config(sub.add_parser("replay", help="replay a trajectory's first second in the oracle"))
    sp.add_argument("--trajectory", required=True, help="trajectory CSV covering [0, 1] s")
    sp.add_argument("--out", required=True, help="sample CSV to write")
    sp.add_argument("--id", default="replay", help="trajectory id stored in the samples")
    sp.set_defaults(func=cmd_replay)

    sp = with_config(sub.add_parser("train", help="train both networks on a pool"))
    sp.add_argument("--pool", required=True, help="pool directory")
    sp.add_argument("--out", required=True, help="directory for force.json and moment.json")
    sp.add_argument("--seed", type=int, help="split/initialisation seed (default loop.base_seed)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="RMSE of predicted against true wrenches")
    sp.add_argument("--truth", required=True, help="sample CSV with true wrenches")
    sp.add_argument("--pred", help="sample CSV with predicted wrenches (same row order)")
    sp.add_argument("--force-model", help="force network JSON to predict with")
    sp.add_argument("--moment-model", help="moment network JSON to predict with")
    sp.set_defaults(func=cmd_eval)

    sp = with_config(sub.add_parser("export-plots", help="write plot-ready CSV tables from a run"))
    sp.add_argument("--run", required=True, help="run directory of 'loop'")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_export_plots)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except (OSError, al.PoolError, ValueError) as exc:
        return _fail("runtime", str(exc), EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
