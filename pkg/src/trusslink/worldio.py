"""Config files (YAML) and plain-text trajectory logs.

World configs describe the physics parameters, terrain spec, force model and
initial links; trajectory logs are line-delimited records, one line per link
per sample, with positions rounded at 1e-9 so identical runs produce
byte-identical files.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .gaits import GaitPhase, GaitScript, Trajectory
from .magnets import ForceModel
from .sim.terrain import EnvironmentSpec, build_environment
from .sim.world import SimWorld, SpawnRegion, WorldConfig, spawn_link

TRAJECTORY_HEADER = (
    "# trusslink trajectory v1\n"
    "# sim_time link_id ax ay az bx by bz servo_a servo_b act_a act_b\n"
)


@dataclass
class WorldSpec:
    """Everything needed to build a reproducible world."""

    config: WorldConfig
    environment: EnvironmentSpec
    force_model: ForceModel
    links: list[dict]  # [{id, x, y, heading} ...] explicit placements
    spawn: Optional[dict] = None  # {count, x_range, y_range, drop_height}
    topology: Optional[str] = None  # assemble a named structure instead

    @classmethod
    def from_yaml(cls, path) -> "WorldSpec":
        data = yaml.safe_load(Path(path).read_text()) or {}
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "WorldSpec":
        cfg = WorldConfig(**data.get("world", {}))
        env = EnvironmentSpec.from_dict(data.get("environment", {"kind": "empty"}))
        force = ForceModel(**data.get("magnets", {}))
        return cls(
            config=cfg,
            environment=env,
            force_model=force,
            links=list(data.get("links", [])),
            spawn=data.get("spawn"),
            topology=data.get("topology"),
        )

    def to_dict(self) -> dict:
        out = {
            "world": asdict(self.config),
            "environment": asdict(self.environment),
            "magnets": asdict(self.force_model),
        }
        if self.links:
            out["links"] = self.links
        if self.spawn:
            out["spawn"] = self.spawn
        if self.topology:
            out["topology"] = self.topology
        return out

    def to_yaml(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def build_world(spec: WorldSpec):
    """Instantiate the world; returns (world, role_assignment or None)."""
    from . import structures

    world = SimWorld(
        config=spec.config,
        terrain=build_environment(spec.environment),
        force_model=spec.force_model,
    )
    roles = None
    if spec.topology:
        assemblers = {
            "single link": structures.assemble_single_link,
            "triangle": structures.assemble_triangle,
            "3-pointed star": structures.assemble_star,
            "diamond-with-tail": structures.assemble_diamond_with_tail,
            "tetrahedron": structures.assemble_tetrahedron,
            "ratchet tetrahedron": structures.assemble_ratchet_tetrahedron,
        }
        if spec.topology not in assemblers:
            raise ValueError(f"unknown topology {spec.topology!r}")
        n = len(structures.TOPOLOGY_ROLES[spec.topology])
        origin = tuple((spec.links[0].get(k, 0.0) for k in ("x", "y"))) if spec.links else (0.0, 0.0)
        roles = assemblers[spec.topology](world, list(range(1, n + 1)), origin=origin)
    else:
        for entry in spec.links:
            spawn_link(
                world,
                pose=((entry.get("x", 0.0), entry.get("y", 0.0), entry.get("z", 0.0)),
                      entry.get("heading", 0.0)),
                link_id=int(entry["id"]),
            )
        if spec.spawn:
            region = SpawnRegion(
                tuple(spec.spawn["x_range"]),
                tuple(spec.spawn["y_range"]),
                spec.spawn.get("drop_height", 0.05),
            )
            start = max(world.link_ids, default=0) + 1
            for k in range(int(spec.spawn["count"])):
                spawn_link(world, link_id=start + k, spawn_region=region)
    return world, roles


def format_trajectory_line(sim_time, link_id, tip_a, tip_b, exts, acts) -> str:
    fields = [f"{round(sim_time, 9):.9g}", str(link_id)]
    for value in (*tip_a, *tip_b, *exts, *acts):
        fields.append(f"{round(float(value), 9):.9g}")
    return " ".join(fields)


def write_trajectory(path, trajectory: Trajectory) -> None:
    """Line-delimited log: one line per link per sample."""
    with open(path, "w") as fh:
        fh.write(TRAJECTORY_HEADER)
        for s, (t, tips) in enumerate(trajectory.samples()):
            for idx, lid in enumerate(trajectory.link_ids):
                fh.write(
                    format_trajectory_line(
                        t, lid, tips[2 * idx], tips[2 * idx + 1],
                        trajectory.exts[s][idx], trajectory.acts[s][idx],
                    )
                    + "\n"
                )


@dataclass
class TrajectoryLog:
    """Parsed trajectory log."""

    times: np.ndarray  # (S,) unique sample times
    link_ids: list[int]
    tips: np.ndarray  # (S, 2L, 3)

    def centroids(self) -> np.ndarray:
        return self.tips.mean(axis=1)


def read_trajectory(path) -> TrajectoryLog:
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        rows.append(
            (float(parts[0]), int(parts[1]), [float(v) for v in parts[2:8]])
        )
    if not rows:
        raise ValueError(f"empty trajectory log {path}")
    link_ids = sorted({lid for _, lid, _ in rows})
    times = sorted({t for t, _, _ in rows})
    index = {t: i for i, t in enumerate(times)}
    tips = np.zeros((len(times), 2 * len(link_ids), 3))
    col = {lid: i for i, lid in enumerate(link_ids)}
    for t, lid, vals in rows:
        i, j = index[t], col[lid]
        tips[i, 2 * j] = vals[:3]
        tips[i, 2 * j + 1] = vals[3:]
    return TrajectoryLog(np.array(times), link_ids, tips)
