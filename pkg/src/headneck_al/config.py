"""Pipeline configuration: one JSON document with a section per stage.

Every section is optional; missing keys take the defaults below, which encode
the reference task (2 s horizon split at 1 s, phase weights 1e-3/1e-4 and 1/1,
30 Nm torque bound, 0.232 rad initial tilt, 200 loop iterations, Adam with
lr 0.01 / batch 1024 / patience 6, 70/30 and 80/20 splits).  Unknown keys are
errors.  All randomness derives from ``loop.base_seed``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .aux_contact import AuxParams, LhsSpec
from .model import ModelParams, State
from .ocp import OcpSpec, Phase, SolverOptions, validate
from .oracle import FoamBed
from .surrogate import SplitSpec, TrainConfig


class ConfigError(ValueError):
    pass


MODEL_KEYS = ("head_mass", "cog_inertia", "cog_offset", "head_radius", "gravity", "q_min", "q_max",
              "tau_max", "contact_angle")


@dataclass
class TaskConfig:
    t0: float = 0.0
    tF: float = 2.0
    h: float = 0.01
    phases: list = field(default_factory=lambda: [[0.0, 1.0, 1e-3, 1e-4], [1.0, 2.0, 1.0, 1.0]])
    tau_bound: float = 30.0
    q_init: float = 0.232
    terminal_rest: bool = True
    use_contact: bool = True
    include_gravity: bool = True


@dataclass
class AuxConfig:
    stiffness: float = 6.0
    damping: float = 0.1
    p_ref: float = 2.0
    K: int = 2000
    q_range: list = field(default_factory=lambda: [0.02, 0.42])
    qdot_range: list = field(default_factory=lambda: [-5.0, 5.0])
    chunk_size: int = 401


@dataclass
class BedConfig:
    n_u: int = 40
    n_w: int = 40
    width: float = 0.24
    height: float = 0.24
    thickness: float = 0.06
    strain_knots: list = field(default_factory=lambda: [0.0, 0.1, 0.6, 0.9])
    stress_knots: list = field(default_factory=lambda: [0.0, 200e3, 300e3, 2400e3])
    damping: float = 40000.0


@dataclass
class TrainSection:
    learning_rate: float = 0.01
    batch_size: int = 1024
    patience: int = 6
    max_epochs: int = 500
    test_fraction: float = 0.30
    val_fraction: float = 0.20


@dataclass
class SolverSection:
    feas_tol: float = 1e-8
    stat_tol: float = 1e-4
    max_outer: int = 40
    max_inner: int = 60
    mu0: float = 10.0


@dataclass
class LoopSection:
    iterations: int = 200
    base_seed: int = 0
    record_wall_time: bool = True


@dataclass
class PipelineConfig:
    model: dict = field(default_factory=dict)
    task: TaskConfig = field(default_factory=TaskConfig)
    aux: AuxConfig = field(default_factory=AuxConfig)
    bed: BedConfig = field(default_factory=BedConfig)
    train: TrainSection = field(default_factory=TrainSection)
    solver: SolverSection = field(default_factory=SolverSection)
    loop: LoopSection = field(default_factory=LoopSection)

    # -- typed views -------------------------------------------------------------------

    def model_params(self) -> ModelParams:
        return ModelParams(**self.model)

    def ocp_spec(self, contact_model=None) -> OcpSpec:
        t = self.task
        params = self.model_params()
        spec = OcpSpec(t.t0, t.tF, t.h, [Phase(*p) for p in t.phases], t.tau_bound,
                       (params.q_min, params.q_max), State(t.q_init, 0.0), params, t.terminal_rest,
                       contact_model, t.include_gravity)
        return spec

    def aux_params(self) -> AuxParams:
        return AuxParams(self.aux.stiffness, self.aux.damping, self.aux.p_ref)

    def lhs_spec(self) -> LhsSpec:
        a = self.aux
        return LhsSpec(a.K, tuple(a.q_range), tuple(a.qdot_range), self.loop.base_seed)

    def foam_bed(self) -> FoamBed:
        b = self.bed
        return FoamBed(b.n_u, b.n_w, b.width, b.height, b.thickness, tuple(b.strain_knots),
                       tuple(b.stress_knots), b.damping)

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(t.learning_rate, t.batch_size, t.patience, t.max_epochs, self.loop.base_seed)

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.train.test_fraction, self.train.val_fraction, self.loop.base_seed)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(**dataclasses.asdict(self.solver))

    def validate(self) -> None:
        """Build every typed view once so invalid values surface as :class:`ConfigError`."""
        try:
            validate(self.ocp_spec())
            self.aux_params()
            self.lhs_spec()
            self.foam_bed()
            self.train_config()
            self.split_spec()
            self.solver_options()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.loop.iterations < 1:
            raise ConfigError("loop.iterations must be >= 1")
        if self.aux.chunk_size < 1:
            raise ConfigError("aux.chunk_size must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


SECTIONS = {"task": TaskConfig, "aux": AuxConfig, "bed": BedConfig, "train": TrainSection,
            "solver": SolverSection, "loop": LoopSection}


def _section(cls, data, name):
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - set(SECTIONS) - {"model"})
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    model = data.get("model", {})
    if not isinstance(model, dict):
        raise ConfigError("section 'model' must be an object")
    bad = sorted(set(model) - set(MODEL_KEYS))
    if bad:
        raise ConfigError(f"unknown key(s) in 'model': {', '.join(bad)}")
    cfg = PipelineConfig(model=dict(model),
                         **{name: _section(cls, data.get(name, {}), name) for name, cls in SECTIONS.items()})
    cfg.validate()
    return cfg


def load_config(path=None) -> PipelineConfig:
    """Read a JSON config; ``None`` gives the defaults."""
    if path is None:
        return config_from_dict({})
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def save_config(path, cfg: PipelineConfig) -> None:
    full = cfg.to_dict()
    full["model"] = {k: getattr(cfg.model_params(), k) for k in MODEL_KEYS}
    Path(path).write_text(json.dumps(full, indent=2, sort_keys=True) + "\n")
