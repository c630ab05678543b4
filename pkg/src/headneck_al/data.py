"""Contact samples, columnar sample tables and the sample CSV format."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kinematics import RelativeKinematics, encode_features_batch

PRELIMINARY = "preliminary"
ORACLE = "oracle"
PROVENANCES = (PRELIMINARY, ORACLE)

SAMPLE_COLUMNS = [
    "traj_id", "time",
    "rx", "ry", "rz", "vx", "vy", "vz",
    "t11", "t21", "t31", "t12", "t22", "t32",
    "wx", "wy", "wz",
    "fx", "fy", "fz", "mx", "my", "mz",
    "provenance",
]


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class ContactSample:
    rk: RelativeKinematics
    force: np.ndarray
    moment: np.ndarray
    provenance: str
    trajectory_id: str
    time: float

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")


def rotation_from_t6(t6: np.ndarray) -> np.ndarray:
    """Rebuild ``(n, 3, 3)`` rotations from their first two columns."""
    t6 = np.atleast_2d(t6)
    c1, c2 = t6[:, 0:3], t6[:, 3:6]
    return np.stack([c1, c2, np.cross(c1, c2)], axis=-1)


@dataclass
class SampleTable:
    """Column store of contact samples; row ``i`` is one :class:`ContactSample`."""

    traj_id: np.ndarray
    time: np.ndarray
    r: np.ndarray
    v: np.ndarray
    t6: np.ndarray
    w: np.ndarray
    force: np.ndarray
    moment: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        n = len(self.time)
        self.traj_id = np.asarray(self.traj_id, dtype=object).reshape(n)
        self.provenance = np.asarray(self.provenance, dtype=object).reshape(n)
        self.time = np.asarray(self.time, dtype=float).reshape(n)
        for name, width in (("r", 3), ("v", 3), ("t6", 6), ("w", 3), ("force", 3), ("moment", 3)):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(n, width))
        bad = set(self.provenance) - set(PROVENANCES)
        if bad:
            raise ValueError(f"unknown provenance {sorted(bad)}")

    def __len__(self) -> int:
        return len(self.time)

    @classmethod
    def empty(cls) -> "SampleTable":
        z = np.zeros((0,))
        return cls([], z, z, z, z, z, z, z, [])

    @classmethod
    def from_kinematics(cls, traj_id, time, r, v, T, w, force, moment, provenance) -> "SampleTable":
        T = np.asarray(T, dtype=float)
        t6 = np.concatenate([T[:, :, 0], T[:, :, 1]], axis=1)
        n = len(time)
        ids = np.full(n, traj_id, dtype=object) if isinstance(traj_id, str) else traj_id
        prov = np.full(n, provenance, dtype=object) if isinstance(provenance, str) else provenance
        return cls(ids, time, r, v, t6, w, force, moment, prov)

    @classmethod
    def from_samples(cls, samples) -> "SampleTable":
        samples = list(samples)
        if not samples:
            return cls.empty()
        return cls.from_kinematics(
            np.array([s.trajectory_id for s in samples], dtype=object),
            [s.time for s in samples],
            [s.rk.r_rel for s in samples],
            [s.rk.v_rel for s in samples],
            np.array([s.rk.T_rel for s in samples]),
            [s.rk.omega_rel for s in samples],
            [s.force for s in samples],
            [s.moment for s in samples],
            np.array([s.provenance for s in samples], dtype=object),
        )

    def rotations(self) -> np.ndarray:
        return rotation_from_t6(self.t6)

    def features(self) -> np.ndarray:
        return encode_features_batch(self.r, self.v, self.rotations(), self.w)

    def sample(self, i: int) -> ContactSample:
        rk = RelativeKinematics(self.r[i], self.v[i], self.rotations()[i], self.w[i])
        return ContactSample(rk, self.force[i].copy(), self.moment[i].copy(),
                             str(self.provenance[i]), str(self.traj_id[i]), float(self.time[i]))

    def take(self, idx) -> "SampleTable":
        idx = np.asarray(idx)
        return SampleTable(self.traj_id[idx], self.time[idx], self.r[idx], self.v[idx], self.t6[idx],
                           self.w[idx], self.force[idx], self.moment[idx], self.provenance[idx])

    def trajectory_ids(self) -> list[str]:
        """Distinct trajectory ids in order of first appearance."""
        seen = dict.fromkeys(str(t) for t in self.traj_id)
        return list(seen)

    @staticmethod
    def concat(tables) -> "SampleTable":
        tables = [t for t in tables if len(t)]
        if not tables:
            return SampleTable.empty()
        cat = np.concatenate
        return SampleTable(
            cat([t.traj_id for t in tables]), cat([t.time for t in tables]),
            cat([t.r for t in tables]), cat([t.v for t in tables]), cat([t.t6 for t in tables]),
            cat([t.w for t in tables]), cat([t.force for t in tables]),
            cat([t.moment for t in tables]), cat([t.provenance for t in tables]),
        )


def write_samples_csv(path, table: SampleTable) -> None:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SAMPLE_COLUMNS)
        for i in range(len(table)):
            row = [str(table.traj_id[i]), fmt(table.time[i])]
            for block in (table.r, table.v, table.t6, table.w, table.force, table.moment):
                row.extend(fmt(x) for x in block[i])
            row.append(str(table.provenance[i]))
            writer.writerow(row)
    os.replace(tmp, path)


def read_samples_csv(path) -> SampleTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SAMPLE_COLUMNS:
            raise ValueError(f"{path}: unexpected sample CSV header")
        rows = list(reader)
    if not rows:
        return SampleTable.empty()
    ids = np.array([r[0] for r in rows], dtype=object)
    prov = np.array([r[-1] for r in rows], dtype=object)
    num = np.array([[float(x) for x in r[1:-1]] for r in rows])
    return SampleTable(ids, num[:, 0], num[:, 1:4], num[:, 4:7], num[:, 7:13], num[:, 13:16],
                       num[:, 16:19], num[:, 19:22], prov)
