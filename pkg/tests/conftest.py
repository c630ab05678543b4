import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from headneck_al.data import ORACLE, PRELIMINARY, SampleTable


def make_table(n_traj=5, per_traj=20, seed=0, provenance=ORACLE, prefix="t"):
    """Random but valid sample table with ``n_traj`` trajectories of ``per_traj`` rows."""
    rng = np.random.default_rng(seed)
    n = n_traj * per_traj
    ids = np.array([f"{prefix}{i // per_traj:02d}" for i in range(n)], dtype=object)
    T = Rotation.random(n, random_state=seed).as_matrix()
    return SampleTable.from_kinematics(ids, np.tile(np.arange(per_traj) * 0.0025, n_traj),
                                       rng.normal(size=(n, 3)), rng.normal(size=(n, 3)), T,
                                       rng.normal(size=(n, 3)), rng.normal(size=(n, 3)),
                                       rng.normal(size=(n, 3)), provenance)


@pytest.fixture
def table():
    return make_table()


@pytest.fixture
def prelim_table():
    return make_table(provenance=PRELIMINARY, prefix="prelim-")


def small_loop_config(root, iterations=3, base_seed=0, **overrides):
    """A scaled-down loop (coarse OCP grid, small pool, few epochs) that runs in seconds."""
    from dataclasses import replace

    from headneck_al.active_loop import DataPool, LoopConfig
    from headneck_al.aux_contact import AuxParams, LhsSpec, preliminary_dataset
    from headneck_al.model import ModelParams
    from headneck_al.ocp import SolverOptions, default_task
    from headneck_al.oracle import FoamBed
    from headneck_al.surrogate import TrainConfig

    pool_dir = root / "pool"
    if not (pool_dir / "manifest.csv").exists():
        pool = DataPool.create(pool_dir)
        pool.append(preliminary_dataset(LhsSpec(K=802, seed=base_seed), AuxParams(), ModelParams()), 0)
    cfg = LoopConfig(pool_dir, root / "run", iterations=iterations, base_seed=base_seed,
                     task=default_task(h=0.05), bed=FoamBed(n_u=12, n_w=12),
                     train=TrainConfig(batch_size=256, max_epochs=8),
                     solver=SolverOptions(max_outer=12), record_wall_time=False)
    return replace(cfg, **overrides) if overrides else cfg


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
