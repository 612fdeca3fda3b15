from .terrain import EnvironmentSpec, TerrainPrimitive, build_environment
from .world import LinkState, SimWorld, SpawnRegion, WorldConfig, spawn_link, step_world

__all__ = [
    "EnvironmentSpec",
    "TerrainPrimitive",
    "build_environment",
    "LinkState",
    "SimWorld",
    "SpawnRegion",
    "WorldConfig",
    "spawn_link",
    "step_world",
]
