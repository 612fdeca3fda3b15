"""Terrain construction from shape primitives (boxes, cylinders, planes).

Environments are assembled from a handful of primitives instead of meshes:
staged ramps are chained tilted boxes, obstacles are cylinders, and the
default world is a bare ground plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

KIND_PLANE = 0
KIND_BOX = 1
KIND_CYLINDER = 2

_KIND_IDS = {"plane": KIND_PLANE, "box": KIND_BOX, "cylinder": KIND_CYLINDER}


def rotation_about_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rotation_about_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


@dataclass
class TerrainPrimitive:
    """One collision primitive posed in the world.

    dimensions: box = full extents (lx, ly, lz); cylinder = (radius, length)
    with the axis along local z; plane = () with local +z as the normal.
    """

    kind: str
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    dimensions: tuple = ()

    def __post_init__(self) -> None:
        if self.kind not in _KIND_IDS:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        self.position = np.asarray(self.position, dtype=float)
        self.rotation = np.asarray(self.rotation, dtype=float)
        dims = tuple(float(d) for d in self.dimensions)
        expected = {"plane": 0, "box": 3, "cylinder": 2}[self.kind]
        if len(dims) != expected:
            raise ValueError(f"{self.kind} needs {expected} dimensions, got {dims}")
        if any(d <= 0 for d in dims):
            raise ValueError("dimensions must be strictly positive")
        self.dimensions = dims

    def top_normal(self) -> np.ndarray:
        return self.rotation @ np.array([0.0, 0.0, 1.0])


def pack_terrain(primitives: list[TerrainPrimitive]):
    """Flatten primitives into the arrays the solver kernels consume."""
    n = len(primitives)
    kinds = np.zeros(n, dtype=np.int64)
    pos = np.zeros((n, 3))
    rot = np.zeros((n, 3, 3))
    dims = np.zeros((n, 3))
    for idx, prim in enumerate(primitives):
        kinds[idx] = _KIND_IDS[prim.kind]
        pos[idx] = prim.position
        rot[idx] = prim.rotation
        if prim.kind == "box":
            dims[idx] = np.asarray(prim.dimensions) / 2.0  # half extents
        elif prim.kind == "cylinder":
            dims[idx, 0] = prim.dimensions[0]
            dims[idx, 1] = prim.dimensions[1] / 2.0  # half length
    return kinds, pos, rot, dims


def surface_height_at(
    primitives: list[TerrainPrimitive], x: float, y: float,
    z_top: float = 5.0, resolution: float = 1e-4,
) -> float:
    """Highest terrain surface under (x, y), found by a vertical ray march."""
    from .solver import point_sdf_py  # local import avoids a cycle

    kinds, pos, rot, dims = pack_terrain(primitives)
    z = z_top
    step = 0.05
    while z > -5.0:
        sdf = point_sdf_py(kinds, pos, rot, dims, np.array([x, y, z]))
        if sdf < 0:
            lo, hi = z, z + step
            while hi - lo > resolution:
                mid = 0.5 * (lo + hi)
                if point_sdf_py(kinds, pos, rot, dims, np.array([x, y, mid])) < 0:
                    lo = mid
                else:
                    hi = mid
            return hi
        z -= min(step, max(sdf * 0.8, resolution))
    return -math.inf


@dataclass
class EnvironmentSpec:
    """Declarative description of a stage environment.

    kinds: ``empty`` (ground plane), ``slope`` (one inclined box), or
    ``four_stage`` (chained descending stages with a ledge and a cylindrical
    obstacle).
    """

    kind: str = "empty"
    slope_deg: float = 10.0
    stage_lengths: tuple = (1.2, 0.6, 0.6, 1.2)
    stage_slopes_deg: tuple = (10.0, 10.0, 10.0, 10.0)
    ledge_after_stage: int = 2  # 1-based stage index; 0 disables the ledge
    ledge_height: float = 0.30
    cylinder_stage: int = 3  # 0 disables the obstacle
    cylinder_radius: float = 0.08
    width: float = 0.9
    walls: bool = True
    wall_height: float = 0.25

    @classmethod
    def from_dict(cls, data: dict) -> "EnvironmentSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown environment keys: {sorted(unknown)}")
        coerced = {
            k: tuple(v) if isinstance(v, list) else v for k, v in data.items()
        }
        return cls(**coerced)


def _validate_no_contradictory_overlap(stages: list[tuple[TerrainPrimitive, float, float, float, float]]):
    """Reject stage boxes whose footprints overlap at different heights."""
    for i in range(len(stages)):
        for j in range(i + 1, len(stages)):
            _, y0a, y1a, za0, za1 = stages[i]
            _, y0b, y1b, zb0, zb1 = stages[j]
            overlap = min(y1a, y1b) - max(y0a, y0b)
            if overlap > 1e-6:
                # height of each surface inside the overlap region
                mid = max(y0a, y0b) + overlap / 2
                ha = za0 + (za1 - za0) * (mid - y0a) / max(y1a - y0a, 1e-12)
                hb = zb0 + (zb1 - zb0) * (mid - y0b) / max(y1b - y0b, 1e-12)
                if abs(ha - hb) > 1e-6:
                    raise ValueError(
                        "overlapping stage surfaces with contradictory heights"
                    )


def build_environment(spec: EnvironmentSpec) -> list[TerrainPrimitive]:
    """Realize an EnvironmentSpec as a list of primitives."""
    if spec.kind == "empty":
        return [TerrainPrimitive("plane")]
    if spec.kind == "slope":
        return _build_slope(spec)
    if spec.kind == "ledge":
        return _build_ledge(spec)
    if spec.kind == "four_stage":
        return _build_stages(spec)
    raise ValueError(f"unknown environment kind {spec.kind!r}")


def _build_ledge(spec: EnvironmentSpec) -> list[TerrainPrimitive]:
    """Upper plateau dropping by ledge_height to a lower floor at y = 0."""
    h = spec.ledge_height
    thick = 0.1
    upper = TerrainPrimitive(
        "box",
        position=np.array([0.0, -1.0, h - thick / 2]),
        dimensions=(max(spec.width, 2.0), 2.0, thick),
    )
    lower = TerrainPrimitive(
        "box",
        position=np.array([0.0, 1.0, -thick / 2]),
        dimensions=(max(spec.width, 2.0), 2.0, thick),
    )
    return [upper, lower]


def _build_slope(spec: EnvironmentSpec) -> list[TerrainPrimitive]:
    angle = math.radians(spec.slope_deg)
    length, width, thick = 6.0, max(spec.width, 2.0), 0.1
    rot = rotation_about_x(-angle)  # surface descends toward +y
    box = TerrainPrimitive(
        "box",
        position=np.array([0.0, 0.0, -thick / 2]),
        rotation=rot,
        dimensions=(width, length, thick),
    )
    prims = [box]
    if spec.walls:
        prims += _side_walls(width, length, rot, np.array([0.0, 0.0, 0.0]), spec)
    return prims


def _side_walls(width, length, rot, origin, spec) -> list[TerrainPrimitive]:
    walls = []
    for side in (-1.0, 1.0):
        local_center = np.array([side * (width / 2 + 0.02), 0.0, spec.wall_height / 2])
        walls.append(
            TerrainPrimitive(
                "box",
                position=origin + rot @ local_center,
                rotation=rot,
                dimensions=(0.04, length, spec.wall_height),
            )
        )
    return walls


def _build_stages(spec: EnvironmentSpec) -> list[TerrainPrimitive]:
    if len(spec.stage_lengths) != len(spec.stage_slopes_deg):
        raise ValueError("one slope per stage required")
    thick = 0.1
    prims: list[TerrainPrimitive] = []
    surfaces = []  # (prim, y_start, y_end, z_start, z_end) for overlap checks
    y, z = 0.0, 0.0
    stage_frames = []
    for idx, (length, slope_deg) in enumerate(
        zip(spec.stage_lengths, spec.stage_slopes_deg), start=1
    ):
        angle = math.radians(slope_deg)
        dy, dz = length * math.cos(angle), -length * math.sin(angle)
        rot = rotation_about_x(-angle)
        center_surface = np.array([0.0, y + dy / 2, z + dz / 2])
        center = center_surface + rot @ np.array([0.0, 0.0, -thick / 2])
        prim = TerrainPrimitive(
            "box", position=center, rotation=rot,
            dimensions=(spec.width, length, thick),
        )
        prims.append(prim)
        surfaces.append((prim, y, y + dy, z, z + dz))
        stage_frames.append((y, y + dy, z, z + dz, rot))
        y += dy
        z += dz
        if idx == spec.ledge_after_stage and spec.ledge_height > 0:
            z -= spec.ledge_height
    _validate_no_contradictory_overlap(surfaces)

    if spec.cylinder_stage:
        y0, y1, z0, z1, _ = stage_frames[spec.cylinder_stage - 1]
        frac = 0.45
        cy = y0 + (y1 - y0) * frac
        cz = z0 + (z1 - z0) * frac
        height = 0.5
        prims.append(
            TerrainPrimitive(
                "cylinder",
                position=np.array([0.0, cy, cz + height / 2]),
                dimensions=(spec.cylinder_radius, height),
            )
        )

    if spec.walls:
        total_y = sum(
            L * math.cos(math.radians(s))
            for L, s in zip(spec.stage_lengths, spec.stage_slopes_deg)
        )
        for side in (-1.0, 1.0):
            prims.append(
                TerrainPrimitive(
                    "box",
                    position=np.array(
                        [side * (spec.width / 2 + 0.02), total_y / 2, 0.3]
                    ),
                    dimensions=(0.04, total_y + 0.4, 1.8),
                )
            )
        # backstop behind stage one so nothing crawls off the start
        prims.append(
            TerrainPrimitive(
                "box",
                position=np.array([0.0, -0.12, 0.2]),
                dimensions=(spec.width + 0.2, 0.04, 1.2),
            )
        )
    return prims


def stage_one_region(spec: EnvironmentSpec) -> tuple:
    """x/y rectangle of the first stage surface, for randomized spawning."""
    margin = 0.18
    length = spec.stage_lengths[0] * math.cos(math.radians(spec.stage_slopes_deg[0]))
    return (
        (-spec.width / 2 + margin, spec.width / 2 - margin),
        (margin, length - margin),
    )
