"""Open-loop gait scripts per topology and the driver that executes them.

A script is an ordered list of phases; each phase ramps selected roles'
servos to absolute extension targets over the phase duration.  Cycle time is
16 s for the ratchet tetrahedron and 36 s for every other topology.  The
waveforms themselves were tuned empirically against the simulator, the same
way the physical gaits were tuned by observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .firmware import LinkFirmware
from .rmlp import Command, Opcode, ServoSelect, encode
from .structures import TOPOLOGY_ROLES, RoleAssignment, ground_contact_vertices
from .sim.world import MAX_STROKE, SimWorld
from .toppling import achieved_expansion_ratio, min_expansion_ratio_for_topple

RATCHET_CYCLE_TIME = 16.0
DEFAULT_CYCLE_TIME = 36.0

_AMP = 0.055  # stroke amplitude that fits a 36 s three-stroke inchworm


@dataclass(frozen=True)
class GaitPhase:
    duration: float
    # role -> (target_a, target_b); None holds the current target
    targets: dict[str, tuple[Optional[float], Optional[float]]]


@dataclass
class GaitScript:
    topology: str
    phases: list[GaitPhase]
    cycle_time: float

    def __post_init__(self) -> None:
        total = sum(p.duration for p in self.phases)
        if abs(total - self.cycle_time) > 1e-9:
            raise ValueError(
                f"phase durations sum to {total}, expected {self.cycle_time}"
            )


def cycle_time_for(topology: str) -> float:
    return RATCHET_CYCLE_TIME if topology == "ratchet tetrahedron" else DEFAULT_CYCLE_TIME


def script_to_dict(script: GaitScript) -> dict:
    """Config-file form of a script (same YAML family as world specs)."""
    return {
        "topology": script.topology,
        "cycle_time": script.cycle_time,
        "phases": [
            {
                "duration": phase.duration,
                "targets": {
                    role: [ta, tb] for role, (ta, tb) in sorted(phase.targets.items())
                },
            }
            for phase in script.phases
        ],
    }


def script_from_dict(data: dict) -> GaitScript:
    phases = [
        GaitPhase(
            float(entry["duration"]),
            {
                role: (pair[0], pair[1])
                for role, pair in entry.get("targets", {}).items()
            },
        )
        for entry in data["phases"]
    ]
    return GaitScript(data["topology"], phases, float(data["cycle_time"]))


# Tuned phase tables.  Within each entry: (duration, {role: (a, b)}).
_SINGLE_CRAWL = [
    (11.0, {"body": (_AMP, None)}),
    (11.0, {"body": (0.0, _AMP)}),
    (11.0, {"body": (None, 0.0)}),
    (3.0, {}),
]

# legs stroke against the anchored front edge, staggered so the shared back
# vertex walks forward between leg strokes
_TRIANGLE_CRAWL = [
    (9.0, {"left": (_AMP, None), "right": (_AMP, None)}),
    (9.0, {"left": (0.0, _AMP), "right": (0.0, _AMP)}),
    (9.0, {"left": (None, 0.0), "right": (None, 0.0)}),
    (9.0, {}),
]

# antagonistic leg strokes: one leg inchworms forward while the other runs
# the mirrored stroke backward, torquing the triangle about its center
_TRIANGLE_ROTATE_CCW = [
    (9.0, {"right": (_AMP, None), "left": (None, _AMP)}),
    (9.0, {"right": (0.0, _AMP), "left": (_AMP, 0.0)}),
    (9.0, {"right": (None, 0.0), "left": (0.0, None)}),
    (9.0, {}),
]

_TRIANGLE_ROTATE_CW = [
    (9.0, {"left": (_AMP, None), "right": (None, _AMP)}),
    (9.0, {"left": (0.0, _AMP), "right": (_AMP, 0.0)}),
    (9.0, {"left": (None, 0.0), "right": (0.0, None)}),
    (9.0, {}),
]

_DIAMOND_CRAWL = [
    (9.0, {"front_left": (_AMP, None), "front_right": (_AMP, None),
           "tail": (_AMP, None)}),
    (9.0, {"front_left": (0.0, _AMP), "front_right": (0.0, _AMP),
           "tail": (0.0, _AMP)}),
    (9.0, {"front_left": (None, 0.0), "front_right": (None, 0.0),
           "tail": (None, 0.0)}),
    (9.0, {}),
]

# base legs inchworm while the upper rear link shifts the apex weight onto
# the anchoring side of the stroke
_TETRA_CRAWL = [
    (9.0, {"base_left": (_AMP, None), "base_right": (_AMP, None),
           "apex_back": (0.04, 0.04)}),
    (9.0, {"base_left": (0.0, _AMP), "base_right": (0.0, _AMP)}),
    (9.0, {"base_left": (None, 0.0), "base_right": (None, 0.0),
           "apex_back": (0.0, 0.0)}),
    (9.0, {}),
]

# short fast strides: the base legs run a compressed inchworm while the
# stick plants ahead on the expand stroke and sweeps back on the pull
_RATCHET_AMP = 0.024
_RATCHET_CRAWL = [
    (5.0, {"base_left": (_RATCHET_AMP, None), "base_right": (_RATCHET_AMP, None),
           "ratchet": (MAX_STROKE, None)}),
    (5.0, {"base_left": (0.0, _RATCHET_AMP), "base_right": (0.0, _RATCHET_AMP)}),
    (5.0, {"base_left": (None, 0.0), "base_right": (None, 0.0),
           "ratchet": (0.0, None)}),
    (1.0, {}),
]

_SCHEDULES: dict[tuple[str, int], list] = {
    ("single link", 0): _SINGLE_CRAWL,
    ("triangle", 0): _TRIANGLE_CRAWL,
    ("triangle", 1): _TRIANGLE_ROTATE_CCW,
    ("triangle", 2): _TRIANGLE_ROTATE_CW,
    ("diamond-with-tail", 0): _DIAMOND_CRAWL,
    ("tetrahedron", 0): _TETRA_CRAWL,
    ("ratchet tetrahedron", 0): _RATCHET_CRAWL,
}

GAIT_VARIANTS = {"crawl": 0, "rotate_ccw": 1, "rotate_cw": 2}


def compile_gait(
    topology: str, roles: RoleAssignment, variant: str = "crawl"
) -> GaitScript:
    """Emit the phase schedule for a topology; roles must be complete."""
    if topology not in TOPOLOGY_ROLES:
        raise ValueError(f"unknown topology {topology!r}")
    missing = set(TOPOLOGY_ROLES[topology]) - set(roles.roles)
    if missing:
        raise ValueError(f"incomplete roles for {topology}: missing {sorted(missing)}")
    key = (topology, GAIT_VARIANTS.get(variant, 0))
    table = _SCHEDULES.get(key)
    if table is None:
        raise ValueError(f"no {variant!r} gait for {topology!r}")
    phases = [GaitPhase(d, dict(t)) for d, t in table]
    return GaitScript(topology, phases, cycle_time_for(topology))


def topple_script(
    roles: RoleAssignment, direction: str = "forward", max_stroke: float = MAX_STROKE
) -> GaitScript:
    """Tip a tetrahedron over one base edge: widen the pivot edge while
    paying out the apex edge opposite it, so the apex swings down past the
    pivot; at a ledge or slope lip the center of mass crosses and the body
    rolls onto the new face, then contracts back into shape.

    Refuses when the configured stroke cannot reach the minimum expansion
    ratio the maneuver needs.
    """
    if roles.topology not in ("tetrahedron", "ratchet tetrahedron"):
        raise ValueError("topple requires an assembled tetrahedron")
    ratio = achieved_expansion_ratio(0.28, 0.28 + 2 * max_stroke)
    needed = min_expansion_ratio_for_topple()
    if ratio < needed:
        raise ValueError(
            f"expansion ratio {ratio:.3f} below the {needed:.3f} needed to topple"
        )
    pivots = {
        "forward": ("base_front", "apex_back"),
        "right": ("base_right", "apex_front_left"),
        "left": ("base_left", "apex_front_right"),
    }
    if direction not in pivots:
        raise ValueError(f"unknown topple direction {direction!r}")
    pivot_edge, far_apex = pivots[direction]
    full = MAX_STROKE
    half = full / 2
    phases = [
        GaitPhase(16.0, {pivot_edge: (full, full), far_apex: (half, half)}),
        GaitPhase(6.0, {}),
        GaitPhase(16.0, {pivot_edge: (0.0, 0.0), far_apex: (0.0, 0.0)}),
        GaitPhase(4.0, {}),
    ]
    return GaitScript(roles.topology, phases, 42.0)


@dataclass
class Trajectory:
    """Sampled gait run: per-sample time, tip positions, servo and magnet state."""

    link_ids: list[int]
    times: list[float] = field(default_factory=list)
    tips: list[np.ndarray] = field(default_factory=list)
    centroids: list[np.ndarray] = field(default_factory=list)
    exts: list[np.ndarray] = field(default_factory=list)
    acts: list[np.ndarray] = field(default_factory=list)
    events: list[tuple[float, str]] = field(default_factory=list)
    truncated: bool = False

    def samples(self):
        return zip(self.times, self.tips)

    def net_displacement(self) -> np.ndarray:
        if len(self.centroids) < 2:
            return np.zeros(3)
        return self.centroids[-1] - self.centroids[0]


def _phase_commands(
    phase: GaitPhase, roles: RoleAssignment
) -> list[tuple[int, Command]]:
    """Translate a phase into ramp commands on the wire encoding."""
    commands = []
    duration_ds = max(1, round(phase.duration * 10))
    for role, (ta, tb) in phase.targets.items():
        link_id, orientation = roles.roles[role]
        if orientation < 0:
            ta, tb = tb, ta
        for select, target in ((ServoSelect.A, ta), (ServoSelect.B, tb)):
            if target is None:
                continue
            commands.append(
                (
                    link_id,
                    Command(
                        opcode=Opcode.SET_TARGET,
                        servo_select=select,
                        target_tenths_mm=round(target * 10_000),
                        duration_ds=duration_ds,
                    ),
                )
            )
    return commands


def run_gait(
    world: SimWorld,
    script: GaitScript,
    roles: RoleAssignment,
    n_cycles: int = 1,
    sample_period: float = 0.5,
    control_period: float = 1.0 / 24.0,
    truncate_on_break: bool = True,
) -> Trajectory:
    """Execute a script open loop through per-link firmware emulators.

    Commands are issued at phase boundaries as closed-loop ramps; firmware
    bang-bang controllers chase the ramps and the world is stepped at the
    physics rate.  If a structural connection breaks mid-gait the trajectory
    is truncated with an event record.
    """
    firmwares: dict[int, LinkFirmware] = {}
    for link_id in world.link_ids:
        fw = LinkFirmware(link_id)
        state = world.link_state(link_id)
        fw.servo_a.actual_ext = state.servo_a_ext
        fw.servo_b.actual_ext = state.servo_b_ext
        fw.servo_a.set_target(state.servo_a_ext)
        fw.servo_b.set_target(state.servo_b_ext)
        firmwares[link_id] = fw

    trajectory = Trajectory(link_ids=list(world.link_ids))
    steps_per_control = max(1, round(control_period / world.config.timestep))
    next_sample = world.sim_time

    def record():
        trajectory.times.append(world.sim_time)
        trajectory.tips.append(world.tip_positions())
        trajectory.centroids.append(world.centroid().copy())
        trajectory.exts.append(world.exts.copy())
        trajectory.acts.append(world.activations.copy())

    baseline_attachments = world.attached_pairs()
    record()
    next_sample += sample_period

    for _ in range(n_cycles):
        for phase in script.phases:
            for link_id, command in _phase_commands(phase, roles):
                firmwares[link_id].on_bytes(encode(command), world.sim_time)
            phase_end = world.sim_time + phase.duration
            while world.sim_time < phase_end - 1e-9:
                now = world.sim_time
                for link_id, fw in firmwares.items():
                    fw.tick(now, control_period)
                    world.set_extensions(
                        link_id, fw.servo_a.actual_ext, fw.servo_b.actual_ext
                    )
                    world.set_activations(
                        link_id, fw.activation(0), fw.activation(1)
                    )
                world.step_magnets(steps_per_control)
                lost = baseline_attachments - world.attached_pairs()
                if lost:
                    trajectory.events.append(
                        (world.sim_time, f"connection lost: {sorted(lost)}")
                    )
                    if truncate_on_break:
                        trajectory.truncated = True
                        record()
                        return trajectory
                    baseline_attachments = world.attached_pairs()
                if world.sim_time >= next_sample - 1e-9:
                    record()
                    next_sample += sample_period
    if not trajectory.times or world.sim_time > trajectory.times[-1] + 1e-9:
        record()
    return trajectory


def run_topple(
    world: SimWorld,
    roles: RoleAssignment,
    direction: str = "forward",
    sample_period: float = 0.5,
) -> tuple[Trajectory, set[int], set[int]]:
    """Run a topple script; returns (trajectory, contacts before, after)."""
    before = ground_contact_vertices(world)
    script = topple_script(roles, direction)
    trajectory = run_gait(
        world, script, roles, n_cycles=1, sample_period=sample_period
    )
    # settle before reading the final support set
    world.step_magnets(int(2.0 / world.config.timestep))
    after = ground_contact_vertices(world)
    return trajectory, before, after
