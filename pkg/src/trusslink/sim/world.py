"""World state and stepping for three-particle truss links.

Particle layout: link i owns particles 3i (tip A), 3i+1 (center), 3i+2
(tip B).  Magnet index m maps to link m//2, end m%2.  Tips carry 35% of the
link mass each and the center 30%; the heavy, doubly-constrained center is
what anchors against friction while a tip is pushed, producing inchworm
locomotion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..magnets import PULL_AWAY_FORCE, ForceModel
from . import solver
from .terrain import TerrainPrimitive, pack_terrain, surface_height_at

BASE_LENGTH = 0.28  # contracted tip-to-tip length, meters
MAX_STROKE = 0.075  # effective per-servo stroke, meters
MAX_LENGTH = BASE_LENGTH + 2 * MAX_STROKE  # 0.43 m fully expanded
LINK_MASS = 0.28  # kg
# The center body (servo housings, controller, batteries) outweighs the
# shaft-and-connector tips, anchoring inchworm strokes, and differential
# servo extension slides it along the link for center-of-mass shifts.  The
# center must stay under twice the tip mass so the doubly driven middle
# stroke of the inchworm still out-races the tips.
TIP_MASS = 0.08
CENTER_MASS = LINK_MASS - 2 * TIP_MASS

SNAP_DISTANCE = 0.008  # magnets this close snap into a connection
RELEASE_ACTIVATION = 0.05  # connection lets go below this activation product
BREAK_SEPARATION = 0.003  # connection overloaded past this residual gap breaks
REARM_DISTANCE = 0.02  # a broken pair may re-snap only after separating this far
FORMATION_GRACE = 0.25  # seconds of bounce allowed while a fresh snap settles


def link_length(servo_a_ext: float, servo_b_ext: float) -> float:
    """Current rod length: base length plus both servo extensions."""
    for ext in (servo_a_ext, servo_b_ext):
        if not 0.0 <= ext <= MAX_STROKE + 1e-12:
            raise ValueError(f"servo extension {ext} outside [0, {MAX_STROKE}]")
    return BASE_LENGTH + servo_a_ext + servo_b_ext


@dataclass
class WorldConfig:
    timestep: float = 1.0 / 240.0
    gravity: float = 9.81
    lateral_friction: float = 0.89
    spinning_friction: float = 0.02  # no spin degree of freedom on particles
    rolling_friction: float = 0.003
    rng_seed: int = 0
    solver_iterations: int = 24
    surface_dither: float = 0.0005  # carpet texture amplitude, meters

    def __post_init__(self) -> None:
        if self.timestep <= 0:
            raise ValueError("timestep must be positive")
        for name in ("lateral_friction", "spinning_friction", "rolling_friction"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class LinkState:
    """Public view of one link's simulated state."""

    link_id: int
    end_a_pos: np.ndarray
    end_b_pos: np.ndarray
    center_pos: np.ndarray
    end_a_vel: np.ndarray
    end_b_vel: np.ndarray
    servo_a_ext: float
    servo_b_ext: float
    battery_v: float
    magnet_activation_a: float
    magnet_activation_b: float

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end_b_pos - self.end_a_pos))


@dataclass(frozen=True)
class SpawnRegion:
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    drop_height: float = 0.05


@dataclass
class Attachment:
    magnet_i: int
    magnet_j: int
    formed_at: float


class NonFiniteStateError(RuntimeError):
    pass


class SimWorld:
    """Fixed-timestep rod dynamics world; exclusive-access, stepped serially."""

    def __init__(
        self,
        config: WorldConfig | None = None,
        terrain: list[TerrainPrimitive] | None = None,
        force_model: ForceModel | None = None,
    ):
        self.config = config or WorldConfig()
        self.force_model = force_model or ForceModel()
        self.terrain = list(terrain) if terrain is not None else []
        self._terrain_arrays = pack_terrain(self.terrain)
        self.rng = np.random.default_rng(self.config.rng_seed)
        self.link_ids: list[int] = []
        self._index: dict[int, int] = {}
        self.pos = np.zeros((0, 3))
        self.vel = np.zeros((0, 3))
        self.inv_mass = np.zeros(0)
        self.exts = np.zeros((0, 2))
        self.activations = np.ones((0, 2))
        self.battery = np.zeros(0)
        self.attachments: list[Attachment] = []
        self._suppressed_pairs: set[tuple[int, int]] = set()
        self._last_break_check = 0.0
        self.sim_time = 0.0
        self.step_count = 0
        self._cons_dirty = True
        self._cons_i = np.zeros(0, np.int64)
        self._cons_j = np.zeros(0, np.int64)
        self._cons_rest = np.zeros(0)
        self._lam = np.zeros(0)
        self._attached_mask = np.zeros((0, 0), np.bool_)

    # --- indexing helpers -------------------------------------------------

    @property
    def n_links(self) -> int:
        return len(self.link_ids)

    def link_index(self, link_id: int) -> int:
        return self._index[link_id]

    def particle_slice(self, link_id: int) -> slice:
        i = self._index[link_id] * 3
        return slice(i, i + 3)

    def magnet_particles(self) -> np.ndarray:
        out = np.empty(2 * self.n_links, np.int64)
        for i in range(self.n_links):
            out[2 * i] = 3 * i
            out[2 * i + 1] = 3 * i + 2
        return out

    def tip_positions(self) -> np.ndarray:
        """(2L, 3) magnet positions: 2i is link i's A tip, 2i+1 its B tip."""
        return self.pos[self.magnet_particles()].copy()

    def link_state(self, link_id: int) -> LinkState:
        i = self._index[link_id]
        p = self.pos[3 * i : 3 * i + 3]
        v = self.vel[3 * i : 3 * i + 3]
        return LinkState(
            link_id=link_id,
            end_a_pos=p[0].copy(),
            end_b_pos=p[2].copy(),
            center_pos=p[1].copy(),
            end_a_vel=v[0].copy(),
            end_b_vel=v[2].copy(),
            servo_a_ext=float(self.exts[i, 0]),
            servo_b_ext=float(self.exts[i, 1]),
            battery_v=float(self.battery[i]),
            magnet_activation_a=float(self.activations[i, 0]),
            magnet_activation_b=float(self.activations[i, 1]),
        )

    def states(self) -> list[LinkState]:
        return [self.link_state(lid) for lid in self.link_ids]

    # --- construction -----------------------------------------------------

    def set_terrain(self, terrain: list[TerrainPrimitive]) -> None:
        self.terrain = list(terrain)
        self._terrain_arrays = pack_terrain(self.terrain)

    def add_link(
        self, link_id: int, end_a, end_b, battery_v: float = 8.4,
        activations: tuple[float, float] = (1.0, 1.0),
    ) -> None:
        """Insert a link with explicit tip positions (length must be valid)."""
        if link_id in self._index:
            raise ValueError(f"duplicate link id {link_id}")
        end_a = np.asarray(end_a, dtype=float)
        end_b = np.asarray(end_b, dtype=float)
        length = float(np.linalg.norm(end_b - end_a))
        if not BASE_LENGTH - 1e-6 <= length <= MAX_LENGTH + 1e-6:
            raise ValueError(f"tip separation {length:.4f} not a valid rod length")
        ext_total = max(0.0, length - BASE_LENGTH)
        self._index[link_id] = self.n_links
        self.link_ids.append(link_id)
        center = 0.5 * (end_a + end_b)
        self.pos = np.vstack([self.pos, end_a, center, end_b])
        self.vel = np.vstack([self.vel, np.zeros((3, 3))])
        self.inv_mass = np.concatenate(
            [self.inv_mass, [1 / TIP_MASS, 1 / CENTER_MASS, 1 / TIP_MASS]]
        )
        self.exts = np.vstack([self.exts, [ext_total / 2, ext_total / 2]])
        self.activations = np.vstack([self.activations, list(activations)])
        self.battery = np.concatenate([self.battery, [battery_v]])
        self._cons_dirty = True

    # --- servo and magnet state ------------------------------------------

    def set_extensions(self, link_id: int, ext_a: float, ext_b: float) -> None:
        link_length(ext_a, ext_b)  # validates range
        self.exts[self._index[link_id]] = (ext_a, ext_b)
        self._cons_dirty = True

    def set_activations(self, link_id: int, act_a: float, act_b: float) -> None:
        if not (0 <= act_a <= 1 and 0 <= act_b <= 1):
            raise ValueError("activations must be in [0, 1]")
        self.activations[self._index[link_id]] = (act_a, act_b)
        self._release_retracted()

    def set_battery(self, link_id: int, volts: float) -> None:
        self.battery[self._index[link_id]] = volts

    def magnet_activations(self) -> np.ndarray:
        return self.activations.reshape(-1).copy()

    # --- connections -------------------------------------------------------

    def attached_pairs(self) -> set[tuple[int, int]]:
        return {(a.magnet_i, a.magnet_j) for a in self.attachments}

    def attach(self, magnet_i: int, magnet_j: int) -> None:
        i, j = min(magnet_i, magnet_j), max(magnet_i, magnet_j)
        if i // 2 == j // 2:
            raise ValueError("cannot attach a link to itself")
        if (i, j) in self.attached_pairs():
            return
        self.attachments.append(Attachment(i, j, self.sim_time))
        self._cons_dirty = True

    def detach(self, magnet_i: int, magnet_j: int) -> None:
        i, j = min(magnet_i, magnet_j), max(magnet_i, magnet_j)
        self.attachments = [
            a for a in self.attachments if (a.magnet_i, a.magnet_j) != (i, j)
        ]
        self._cons_dirty = True

    def _release_retracted(self) -> None:
        acts = self.magnet_activations()
        keep = []
        for a in self.attachments:
            if acts[a.magnet_i] * acts[a.magnet_j] < RELEASE_ACTIVATION:
                self._cons_dirty = True
            else:
                keep.append(a)
        self.attachments = keep

    def _magnet_particle(self, magnet: int) -> int:
        return 3 * (magnet // 2) + 2 * (magnet % 2)

    def _rebuild_constraints(self) -> None:
        rows_i, rows_j, rest = [], [], []
        for idx in range(self.n_links):
            a, c, b = 3 * idx, 3 * idx + 1, 3 * idx + 2
            ext_a, ext_b = self.exts[idx]
            half = BASE_LENGTH / 2
            rows_i += [a, c, a]
            rows_j += [c, b, b]
            rest += [half + ext_a, half + ext_b, BASE_LENGTH + ext_a + ext_b]
        # connected magnets rest at the contact distance (touching spheres),
        # which keeps clusters from collapsing to singular points
        for att in self.attachments:
            rows_i.append(self._magnet_particle(att.magnet_i))
            rows_j.append(self._magnet_particle(att.magnet_j))
            rest.append(self.force_model.contact_distance)
        self._cons_i = np.asarray(rows_i, np.int64)
        self._cons_j = np.asarray(rows_j, np.int64)
        self._cons_rest = np.asarray(rest, float)
        self._lam = np.zeros(len(rest))
        n_mag = 2 * self.n_links
        mask = np.zeros((n_mag, n_mag), np.bool_)
        for att in self.attachments:
            mask[att.magnet_i, att.magnet_j] = True
            mask[att.magnet_j, att.magnet_i] = True
        self._attached_mask = mask
        block = mask.copy()
        for i, j in self._suppressed_pairs:
            block[i, j] = True
            block[j, i] = True
        self._snap_block_mask = block
        self._cons_dirty = False

    # --- stepping ----------------------------------------------------------

    def _check_finite(self) -> None:
        bad = ~np.isfinite(self.pos).all(axis=1)
        if bad.any():
            particle = int(np.argmax(bad))
            link = self.link_ids[particle // 3]
            part = ("end_a", "center", "end_b")[particle % 3]
            raise NonFiniteStateError(
                f"non-finite position on link {link} ({part}) at t={self.sim_time:.4f}"
            )

    def _run(self, n_steps: int, ext_forces: np.ndarray, use_magnets: bool) -> None:
        if self._cons_dirty:
            self._rebuild_constraints()
        cfg = self.config
        kinds, tpos, trot, tdims = self._terrain_arrays
        mag_particles = self.magnet_particles()
        remaining = n_steps
        while remaining > 0:
            done, status = solver.run_steps(
                self.pos, self.vel, self.inv_mass,
                self._cons_i, self._cons_j, self._cons_rest, self._lam,
                kinds, tpos, trot, tdims,
                ext_forces,
                mag_particles, self.magnet_activations(), self._attached_mask,
                self._snap_block_mask,
                self.force_model.k, self.force_model.cutoff**2,
                self.force_model.contact_distance**2,
                SNAP_DISTANCE**2 if use_magnets else 0.0,
                use_magnets,
                cfg.timestep, cfg.gravity, cfg.lateral_friction,
                cfg.rolling_friction, cfg.surface_dither,
                cfg.solver_iterations, remaining,
            )
            self.step_count += done
            self.sim_time = self.step_count * cfg.timestep
            remaining -= done
            if status == solver.STATUS_NONFINITE:
                self._check_finite()
            if status == solver.STATUS_SNAP:
                self._form_snapped()
                if self._cons_dirty:
                    self._rebuild_constraints()

    def _form_snapped(self) -> None:
        tips = self.tip_positions()
        acts = self.magnet_activations()
        attached = self.attached_pairs()
        self._rearm_broken(tips)
        n = len(tips)
        for i in range(n):
            if acts[i] < 0.5:
                continue
            for j in range(i + 1, n):
                if (
                    (i, j) in attached
                    or (i, j) in self._suppressed_pairs
                    or acts[j] < 0.5
                    or i // 2 == j // 2
                ):
                    continue
                d = tips[j] - tips[i]
                if float(d @ d) <= SNAP_DISTANCE**2:
                    self.attach(i, j)

    def _rearm_broken(self, tips) -> None:
        rearmed = {
            pair
            for pair in self._suppressed_pairs
            if np.linalg.norm(tips[pair[1]] - tips[pair[0]]) > REARM_DISTANCE
        }
        if rearmed:
            self._suppressed_pairs -= rearmed
            self._cons_dirty = True

    def check_breaks(self, steps: int) -> list[tuple[int, int]]:
        """Detach overloaded connections; returns the broken pairs.

        Two failure signals: (1) the fresh per-step violation corresponds to
        an impulse force beyond the pull-away strength (yanks, impacts), and
        (2) the solver left a residual tip separation, meaning the commanded
        geometry demands more than the magnets can transmit.  Both scale
        with the activation product, and broken pairs are suppressed from
        re-snapping until they separate past REARM_DISTANCE.
        """
        if steps <= 0 or not self.attachments:
            self._lam[:] = 0.0
            self._last_break_check = self.sim_time
            return []
        tips = self.tip_positions()
        acts = self.magnet_activations()
        dt2 = self.config.timestep**2
        n_rod = 3 * self.n_links
        broken = []
        rest = self.force_model.contact_distance
        window_start = self._last_break_check
        for k, att in enumerate(list(self.attachments)):
            if att.formed_at + FORMATION_GRACE > window_start:
                continue  # this window still overlaps the snap-in bounce
            strength = max(acts[att.magnet_i] * acts[att.magnet_j], 1e-3)
            force = self._lam[n_rod + k] / dt2
            gap = float(np.linalg.norm(tips[att.magnet_j] - tips[att.magnet_i]))
            stretch = gap - rest
            if force > PULL_AWAY_FORCE * strength or stretch > BREAK_SEPARATION * strength:
                broken.append((att.magnet_i, att.magnet_j))
        for pair in broken:
            self.detach(*pair)
            self._suppressed_pairs.add(pair)
        self._lam[:] = 0.0
        self._last_break_check = self.sim_time
        return broken

    def attachment_tension(self, index: int) -> float:
        """Worst per-step impulse-force estimate since the last break check."""
        return self._lam[3 * self.n_links + index] / self.config.timestep**2

    def step(self, external_forces=None, n_steps: int = 1) -> "SimWorld":
        """Advance with explicit per-magnet external forces, magnets off."""
        forces = np.zeros_like(self.pos)
        if external_forces is not None:
            for (link_id, end), vec in external_forces.items():
                forces[self.particle_slice(link_id)][2 * end] += np.asarray(vec)
        self._run(n_steps, forces, use_magnets=False)
        self._check_finite()
        return self

    def step_magnets(self, n_steps: int = 1, check_breaks: bool = True) -> "SimWorld":
        """Advance with the magnet model active; forms and breaks connections."""
        forces = np.zeros_like(self.pos)
        self._run(n_steps, forces, use_magnets=True)
        self._check_finite()
        if check_breaks:
            self.check_breaks(n_steps)
        return self

    # --- measurements ------------------------------------------------------

    def rod_violation(self) -> float:
        """Largest end-to-end rod length error across links."""
        worst = 0.0
        for idx, lid in enumerate(self.link_ids):
            a, b = self.pos[3 * idx], self.pos[3 * idx + 2]
            want = BASE_LENGTH + self.exts[idx].sum()
            worst = max(worst, abs(float(np.linalg.norm(b - a)) - want))
        return worst

    def max_penetration(self) -> float:
        """Deepest particle penetration into any terrain primitive."""
        if not self.terrain:
            return 0.0
        kinds, tpos, trot, tdims = self._terrain_arrays
        worst = 0.0
        for p in self.pos:
            sdf = solver.point_sdf_py(kinds, tpos, trot, tdims, p)
            worst = max(worst, max(0.0, -sdf))
        return worst

    def mechanical_energy(self) -> float:
        masses = 1.0 / self.inv_mass
        kinetic = 0.5 * float(np.sum(masses * np.sum(self.vel**2, axis=1)))
        potential = self.config.gravity * float(np.sum(masses * self.pos[:, 2]))
        return kinetic + potential

    def kinetic_energy(self) -> float:
        masses = 1.0 / self.inv_mass
        return 0.5 * float(np.sum(masses * np.sum(self.vel**2, axis=1)))

    def centroid(self) -> np.ndarray:
        return self.pos.mean(axis=0)

    def snapshot(self) -> "WorldSnapshot":
        return WorldSnapshot(
            sim_time=self.sim_time,
            links=self.states(),
            attachments=[(a.magnet_i, a.magnet_j) for a in self.attachments],
        )


@dataclass
class WorldSnapshot:
    """Immutable copy of the observable world state."""

    sim_time: float
    links: list[LinkState]
    attachments: list[tuple[int, int]]

    def tip_positions(self) -> np.ndarray:
        out = np.zeros((2 * len(self.links), 3))
        for i, st in enumerate(self.links):
            out[2 * i] = st.end_a_pos
            out[2 * i + 1] = st.end_b_pos
        return out


def step_world(world: SimWorld, external_forces=None) -> SimWorld:
    """Advance one timestep under gravity plus injected per-magnet forces.

    ``external_forces`` maps (link_id, end) to a force vector; end 0 is tip A.
    """
    return world.step(external_forces, n_steps=1)


def _segment_distance(p1, q1, p2, q2) -> float:
    """Minimum distance between segments p1-q1 and p2-q2."""
    d1, d2 = q1 - p1, q2 - p2
    r = p1 - p2
    a, e, f = float(d1 @ d1), float(d2 @ d2), float(d2 @ r)
    if a <= 1e-12 and e <= 1e-12:
        return float(np.linalg.norm(r))
    if a <= 1e-12:
        s, t = 0.0, np.clip(f / e, 0.0, 1.0)
    else:
        c = float(d1 @ r)
        if e <= 1e-12:
            t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-12 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
            elif t > 1.0:
                t, s = 1.0, np.clip((b - c) / a, 0.0, 1.0)
    closest1 = p1 + s * d1
    closest2 = p2 + t * d2
    return float(np.linalg.norm(closest1 - closest2))


def spawn_link(
    world: SimWorld,
    pose: Optional[tuple] = None,
    link_id: int = 0,
    spawn_region: Optional[SpawnRegion] = None,
    clearance: float = 0.05,
    retry_bound: int = 40,
) -> SimWorld:
    """Add a fully contracted link, either at an explicit (position, heading)
    pose or sampled uniformly from ``spawn_region`` with the world's rng.

    Placement is rejected (and resampled, when a region is given) while the
    new link would pass within ``clearance`` of an existing link.
    """
    if link_id in world._index:
        raise ValueError(f"duplicate link id {link_id}")
    if pose is None and spawn_region is None:
        raise ValueError("need a pose or a spawn region")

    def tips_for(center_xy, heading, height):
        direction = np.array([math.cos(heading), math.sin(heading), 0.0])
        surface = (
            surface_height_at(world.terrain, *center_xy) if world.terrain else 0.0
        )
        center = np.array([center_xy[0], center_xy[1], surface + height])
        half = (BASE_LENGTH / 2) * direction
        return center - half, center + half

    attempts = retry_bound if spawn_region is not None else 1
    for _ in range(attempts):
        if spawn_region is not None:
            x = world.rng.uniform(*spawn_region.x_range)
            y = world.rng.uniform(*spawn_region.y_range)
            heading = world.rng.uniform(0.0, 2 * math.pi)
            end_a, end_b = tips_for((x, y), heading, spawn_region.drop_height)
        else:
            position, heading = pose
            position = np.asarray(position, dtype=float)
            end_a, end_b = tips_for(position[:2], heading, 0.0)
            end_a = end_a + np.array([0.0, 0.0, position[2]])
            end_b = end_b + np.array([0.0, 0.0, position[2]])
        clear = True
        for other in world.link_ids:
            state = world.link_state(other)
            if (
                _segment_distance(end_a, end_b, state.end_a_pos, state.end_b_pos)
                < clearance
            ):
                clear = False
                break
        if clear:
            world.add_link(link_id, end_a, end_b)
            return world
    raise RuntimeError(
        f"could not place link {link_id} without overlap after {attempts} tries"
    )
