"""Randomized formation studies and scripted speed trials.

A formation run spawns links at random poses inside a walled pen, drives
every servo with a randomly parameterized Fourier series, and records the
set of catalog morphologies that ever occur.  Runs that start with links
already connected are discarded and do not count toward the total.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import FormationResult, SpeedRecord, estimate_speed
from .firmware import ServoController, bang_bang_step
from .gaits import Trajectory, compile_gait, run_gait
from .magnets import ForceModel
from .morphology import (
    MorphologyCatalog,
    default_catalog,
    match_morphology,
    structure_graph_from_scene,
)
from .sim.terrain import EnvironmentSpec, build_environment
from .sim.world import MAX_STROKE, SimWorld, SpawnRegion, WorldConfig, spawn_link
from . import structures

BODY_LENGTHS = {
    "single link": 0.28,
    "triangle": 0.245,
    "diamond-with-tail": 0.245,
    "tetrahedron": 0.245,
    "ratchet tetrahedron": 0.245,
}

_ASSEMBLERS = {
    "single link": structures.assemble_single_link,
    "triangle": structures.assemble_triangle,
    "diamond-with-tail": structures.assemble_diamond_with_tail,
    "tetrahedron": structures.assemble_tetrahedron,
    "ratchet tetrahedron": structures.assemble_ratchet_tetrahedron,
}


@dataclass(frozen=True)
class FourierRanges:
    """Sampling ranges for the random servo controllers.

    Defaults were tuned for formation activity: full-stroke amplitudes clip
    at the ends, producing bang-bang-like strokes with dwells.
    """

    harmonics: int = 3
    amplitude_max: float = MAX_STROKE
    period_range: tuple[float, float] = (12.0, 60.0)
    center_range: tuple[float, float] = (0.1 * MAX_STROKE, 0.7 * MAX_STROKE)


class RandomController:
    """Per-servo Fourier series target source, clamped to the stroke."""

    def __init__(self, n_servos: int, rng: np.random.Generator,
                 ranges: FourierRanges = FourierRanges()):
        h = ranges.harmonics
        self.center = rng.uniform(*ranges.center_range, size=n_servos)
        self.amplitude = rng.uniform(0.0, ranges.amplitude_max, size=(n_servos, h))
        self.period = rng.uniform(*ranges.period_range, size=(n_servos, h))
        self.phase = rng.uniform(0.0, 2 * math.pi, size=(n_servos, h))

    def targets(self, t: float) -> np.ndarray:
        value = self.center + np.sum(
            self.amplitude * np.sin(2 * math.pi * t / self.period + self.phase),
            axis=1,
        )
        return np.clip(value, 0.0, MAX_STROKE)


@dataclass
class ExperimentConfig:
    seed: int = 0
    n_runs: int = 200
    run_minutes: float = 20.0
    n_links: int = 6
    control: str = "random_fourier"
    walls_enabled: bool = True
    pen_size: tuple[float, float] = (1.1, 0.9)  # walled pen (y by x), meters
    # "staged" spawns jittered triads mimicking the physical experiment's
    # initial layout (the deliberate initialization bias); "uniform" draws
    # poses uniformly over spawn_size
    spawn_mode: str = "staged"
    spawn_size: tuple[float, float] = (0.52, 0.52)
    position_jitter: float = 0.035
    heading_jitter: float = 0.4  # radians
    slope_deg: float = 10.0
    sample_interval: float = 1.0
    fourier: FourierRanges = field(default_factory=FourierRanges)

    def __post_init__(self) -> None:
        if self.n_runs < 1 or self.run_minutes <= 0:
            raise ValueError("n_runs >= 1 and run_minutes > 0 required")


def _pen_environment(config: ExperimentConfig):
    spec = EnvironmentSpec(
        kind="slope", slope_deg=config.slope_deg, walls=False
    )
    prims = build_environment(spec)
    if config.walls_enabled:
        from .sim.terrain import TerrainPrimitive

        length, width = config.pen_size
        wall_h = 0.3
        for side in (-1.0, 1.0):
            prims.append(
                TerrainPrimitive(
                    "box",
                    position=np.array([side * (width / 2 + 0.03), 0.0, wall_h / 2 - 0.1]),
                    dimensions=(0.06, length + 0.4, wall_h + 0.2),
                )
            )
            prims.append(
                TerrainPrimitive(
                    "box",
                    position=np.array([0.0, side * (length / 2 + 0.03), wall_h / 2 - 0.1]),
                    dimensions=(width + 0.4, 0.06, wall_h + 0.2),
                )
            )
    return prims


def _staged_poses(gap: float = 0.045) -> list[tuple[float, float, float]]:
    """Two-triad template echoing the staged physical layout: a nearly
    closed triangle, and a star posed with two arms reaching toward two
    triangle corners (the merge that produces the diamond-with-tail).
    All tips start outside the connection distance but inside magnet reach.
    """
    poses = []
    tri_center = np.array([-0.21, 0.0])
    radius = 0.28 / math.sqrt(3)
    corners = [
        tri_center + (radius + gap) * np.array(
            [math.cos(math.radians(90 + 120 * k)),
             math.sin(math.radians(90 + 120 * k))]
        )
        for k in range(3)
    ]
    for k in range(3):
        a, b = corners[k], corners[(k + 1) % 3]
        mid = (a + b) / 2
        heading = math.atan2(*(b - a)[::-1])
        poses.append((float(mid[0]), float(mid[1]), float(heading)))
    # star hub beyond the triangle's right edge (corners 0 and 2, at 90 and
    # 330 degrees), arms aimed so their far tips stop short of the corners
    c_top, c_bot = corners[0], corners[2]
    edge_mid = (c_top + c_bot) / 2
    outward = edge_mid - tri_center
    outward = outward / np.linalg.norm(outward)
    reach = 0.28 + 0.05 + gap  # arm length + hub gap + approach gap
    half_edge = float(np.linalg.norm(c_top - c_bot)) / 2
    hub = edge_mid + outward * math.sqrt(max(reach**2 - half_edge**2, 0.01))
    for target in (c_top, c_bot):
        direction = target - hub
        direction = direction / np.linalg.norm(direction)
        mid = hub + (0.05 + 0.14) * direction
        poses.append(
            (float(mid[0]), float(mid[1]), float(math.atan2(direction[1], direction[0])))
        )
    tail_dir = outward
    mid = hub + (0.05 + 0.14) * tail_dir
    poses.append(
        (float(mid[0]), float(mid[1]), float(math.atan2(tail_dir[1], tail_dir[0])))
    )
    return poses


_STAGED_POSES = _staged_poses()


def _spawn_run_world(config: ExperimentConfig, rng_seed: int) -> SimWorld:
    world = SimWorld(
        config=WorldConfig(rng_seed=rng_seed),
        terrain=_pen_environment(config),
        force_model=ForceModel(),
    )
    if config.spawn_mode == "uniform":
        sy, sx = config.spawn_size
        region = SpawnRegion(
            (-sx / 2, sx / 2), (-sy / 2, sy / 2), drop_height=0.03
        )
        for lid in range(1, config.n_links + 1):
            spawn_link(world, link_id=lid, spawn_region=region)
        return world
    if config.spawn_mode != "staged":
        raise ValueError(f"unknown spawn mode {config.spawn_mode!r}")
    rng = world.rng
    for lid in range(1, config.n_links + 1):
        x, y, heading = _STAGED_POSES[(lid - 1) % len(_STAGED_POSES)]
        placed = False
        for _ in range(25):  # re-draw the jitter when links would overlap
            pose = (
                (
                    x + rng.uniform(-config.position_jitter, config.position_jitter),
                    y + rng.uniform(-config.position_jitter, config.position_jitter),
                    0.03,
                ),
                heading + rng.uniform(-config.heading_jitter, config.heading_jitter),
            )
            try:
                spawn_link(world, pose=pose, link_id=lid, clearance=0.03)
                placed = True
                break
            except RuntimeError:
                continue
        if not placed:
            raise RuntimeError(f"could not place staged link {lid}")
    return world


def _starts_connected(world: SimWorld) -> bool:
    # fewer clusters than magnets means some tips already touch
    graph = structure_graph_from_scene(world.tip_positions())
    return graph.n_vertices < 2 * world.n_links


def run_single_formation(
    config: ExperimentConfig, run_index: int,
    catalog: MorphologyCatalog | None = None,
) -> tuple[frozenset, int]:
    """One seeded run; returns (names observed, attempts discarded).

    Besides catalog matches, the sentinel name "connected" records that any
    two links were ever joined during the run.
    """
    catalog = catalog or default_catalog()
    discarded = 0
    while True:
        seed = hash((config.seed, run_index, discarded)) & 0x7FFFFFFF
        try:
            world = _spawn_run_world(config, seed)
        except RuntimeError:
            discarded += 1  # unplaceable draw: log and resample
            continue
        if _starts_connected(world):
            discarded += 1
            continue
        break

    rng = np.random.default_rng(seed + 1)
    controller = RandomController(2 * config.n_links, rng, config.fourier)
    servos = [ServoController() for _ in range(2 * config.n_links)]

    dt = world.config.timestep
    control_steps = 10  # 24 Hz control ticks
    control_dt = control_steps * dt
    duration = config.run_minutes * 60.0
    next_sample = 0.0
    names: set[str] = set()

    def sample():
        graph = structure_graph_from_scene(world.tip_positions())
        names.update(match_morphology(graph, catalog))
        if world.attachments:
            names.add("connected")

    while world.sim_time < duration:
        if world.sim_time >= next_sample:
            sample()
            next_sample += config.sample_interval
        targets = controller.targets(world.sim_time)
        for idx, lid in enumerate(world.link_ids):
            sa, sb = servos[2 * idx], servos[2 * idx + 1]
            sa.set_target(float(targets[2 * idx]))
            sb.set_target(float(targets[2 * idx + 1]))
            bang_bang_step(sa, control_dt)
            bang_bang_step(sb, control_dt)
            world.set_extensions(lid, sa.actual_ext, sb.actual_ext)
        world.step_magnets(control_steps)
    sample()
    return frozenset(names), discarded


def run_random_formation(
    config: ExperimentConfig,
    catalog: MorphologyCatalog | None = None,
    n_jobs: int = 1,
) -> FormationResult:
    """Aggregate morphology occurrence probabilities over seeded runs."""
    catalog = catalog or default_catalog()
    per_run: list[frozenset] = []
    discarded_total = 0
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [
                pool.submit(run_single_formation, config, k)
                for k in range(config.n_runs)
            ]
            for future in futures:
                names, discarded = future.result()
                per_run.append(names)
                discarded_total += discarded
    else:
        for k in range(config.n_runs):
            names, discarded = run_single_formation(config, k, catalog)
            per_run.append(names)
            discarded_total += discarded
    occurrences: dict[str, int] = {}
    for names in per_run:
        for name in names:
            occurrences[name] = occurrences.get(name, 0) + 1
    return FormationResult(
        n_runs=config.n_runs,
        sim_minutes=config.run_minutes,
        seed=config.seed,
        occurrences=occurrences,
        discarded_preconnected=discarded_total,
        per_run_names=per_run,
    )


def run_speed_trial(
    topology: str,
    n_cycles: int = 8,
    slope_deg: float = 10.0,
    seed: int = 0,
) -> tuple[SpeedRecord, Trajectory]:
    """Scripted gait on the decline; returns the estimate and trajectory."""
    if topology not in _ASSEMBLERS:
        raise ValueError(f"unknown topology {topology!r}")
    env = build_environment(
        EnvironmentSpec(kind="slope", slope_deg=slope_deg, walls=False)
    )
    world = SimWorld(config=WorldConfig(rng_seed=seed), terrain=env)
    n = len(structures.TOPOLOGY_ROLES[topology])
    roles = _ASSEMBLERS[topology](world, list(range(1, n + 1)), origin=(0.0, -1.8))
    world.step_magnets(240)
    script = compile_gait(topology, roles)
    trajectory = run_gait(world, script, roles, n_cycles=n_cycles, sample_period=1.0)
    centroids = np.array(trajectory.centroids)
    record = estimate_speed(
        trajectory.times,
        centroids[:, 1],
        cycle_time=script.cycle_time,
        body_length=BODY_LENGTHS[topology],
        heights=centroids[:, 2],
        z_threshold=-2.0,
        topology=topology,
    )
    return record, trajectory
