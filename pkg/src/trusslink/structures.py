"""Assemblers that place and connect links into named topologies.

Each assembler drops the links of a topology into a world with tips joined
at shared vertices, registers the magnetic connections, and returns the
role assignment used by the gait compiler.  Crawl gaits advance toward +y,
so structures are built facing that way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sim.terrain import surface_height_at
from .sim.world import BASE_LENGTH, SimWorld

_E = BASE_LENGTH  # contracted edge length
_H = _E * math.sqrt(3) / 2  # equilateral triangle height
_APEX_H = _E * math.sqrt(2.0 / 3.0)  # regular tetrahedron height


@dataclass(frozen=True)
class RoleAssignment:
    """Total, injective map from topology role to (link_id, orientation).

    Orientation +1 means the link's A tip sits at the role's leading vertex;
    -1 means the tips are swapped relative to the canonical construction.
    """

    topology: str
    roles: dict[str, tuple[int, int]]

    def __post_init__(self) -> None:
        ids = [link for link, _ in self.roles.values()]
        if len(set(ids)) != len(ids):
            raise ValueError("role assignment must be injective over links")

    def link(self, role: str) -> int:
        return self.roles[role][0]

    def orientation(self, role: str) -> int:
        return self.roles[role][1]


TOPOLOGY_ROLES = {
    "single link": ("body",),
    "triangle": ("front", "left", "right"),
    "3-pointed star": ("arm1", "arm2", "arm3"),
    "diamond-with-tail": (
        "front_left", "front_right", "middle",
        "back_left", "back_right", "tail",
    ),
    "tetrahedron": (
        "base_front", "base_left", "base_right",
        "apex_front_left", "apex_front_right", "apex_back",
    ),
    "ratchet tetrahedron": (
        "base_front", "base_left", "base_right",
        "apex_front_left", "apex_front_right", "apex_back", "ratchet",
    ),
}


def assign_roles(topology: str, link_ids) -> RoleAssignment:
    """Map the topology's canonical roles onto ascending link ids."""
    roles = TOPOLOGY_ROLES.get(topology)
    if roles is None:
        raise ValueError(f"unknown topology {topology!r}")
    ids = sorted(link_ids)
    if len(ids) != len(roles):
        raise ValueError(
            f"{topology} needs {len(roles)} links, got {len(ids)}"
        )
    return RoleAssignment(topology, {r: (i, 1) for r, i in zip(roles, ids)})


def _ground(world: SimWorld, x: float, y: float) -> float:
    if not world.terrain:
        return 0.0
    return surface_height_at(world.terrain, x, y)


def _add(world, link_id, tip_a, tip_b):
    world.add_link(link_id, np.asarray(tip_a, float), np.asarray(tip_b, float))


def _attach_cluster(world: SimWorld, magnet_indices) -> None:
    for i, a in enumerate(magnet_indices):
        for b in magnet_indices[i + 1 :]:
            world.attach(a, b)


def _magnet(world: SimWorld, link_id: int, end: int) -> int:
    return 2 * world.link_index(link_id) + end


def _lift(world, xy_points, clearance=0.002):
    zs = [_ground(world, x, y) for x, y in xy_points]
    return max(zs) + clearance


def assemble_single_link(world: SimWorld, link_ids, origin=(0.0, 0.0)) -> RoleAssignment:
    assignment = assign_roles("single link", link_ids)
    ox, oy = origin
    z = _lift(world, [(ox, oy)])
    # A tip leads (+y): crawl direction
    _add(world, assignment.link("body"), (ox, oy + _E / 2, z), (ox, oy - _E / 2, z))
    return assignment


def assemble_triangle(world: SimWorld, link_ids, origin=(0.0, 0.0)) -> RoleAssignment:
    """Equilateral triangle, front edge leading in +y."""
    assignment = assign_roles("triangle", link_ids)
    ox, oy = origin
    back = np.array([ox, oy, 0.0])
    fl = np.array([ox - _E / 2, oy + _H, 0.0])
    fr = np.array([ox + _E / 2, oy + _H, 0.0])
    z = _lift(world, [(p[0], p[1]) for p in (back, fl, fr)])
    for p in (back, fl, fr):
        p[2] = z
    _add(world, assignment.link("front"), fl, fr)  # A at FL
    _add(world, assignment.link("left"), fl, back)  # A at FL, B at back
    _add(world, assignment.link("right"), fr, back)
    front_id = assignment.link("front")
    left_id = assignment.link("left")
    right_id = assignment.link("right")
    _attach_cluster(world, [_magnet(world, front_id, 0), _magnet(world, left_id, 0)])
    _attach_cluster(world, [_magnet(world, front_id, 1), _magnet(world, right_id, 0)])
    _attach_cluster(world, [_magnet(world, left_id, 1), _magnet(world, right_id, 1)])
    return assignment


def assemble_star(world: SimWorld, link_ids, origin=(0.0, 0.0)) -> RoleAssignment:
    """Three links joined at a hub, arms 120 degrees apart (B tips at hub)."""
    assignment = assign_roles("3-pointed star", link_ids)
    ox, oy = origin
    z = _lift(world, [(ox, oy)])
    hub = np.array([ox, oy, z])
    hub_magnets = []
    for k, role in enumerate(("arm1", "arm2", "arm3")):
        ang = math.pi / 2 + 2 * math.pi * k / 3
        tip = hub + _E * np.array([math.cos(ang), math.sin(ang), 0.0])
        lid = assignment.link(role)
        _add(world, lid, tip, hub)
        hub_magnets.append(_magnet(world, lid, 1))
    _attach_cluster(world, hub_magnets)
    return assignment


def assemble_diamond_with_tail(
    world: SimWorld, link_ids, origin=(0.0, 0.0)
) -> RoleAssignment:
    """Two triangles sharing an edge plus a pendant tail; nose leads in +y."""
    assignment = assign_roles("diamond-with-tail", link_ids)
    ox, oy = origin
    nose = np.array([ox, oy + _H, 0.0])
    left = np.array([ox - _E / 2, oy, 0.0])
    right = np.array([ox + _E / 2, oy, 0.0])
    back = np.array([ox, oy - _H, 0.0])
    tail_end = np.array([ox, oy - _H - _E, 0.0])
    points = (nose, left, right, back, tail_end)
    z = _lift(world, [(p[0], p[1]) for p in points])
    for p in points:
        p[2] = z
    _add(world, assignment.link("front_left"), nose, left)
    _add(world, assignment.link("front_right"), nose, right)
    _add(world, assignment.link("middle"), left, right)
    _add(world, assignment.link("back_left"), left, back)
    _add(world, assignment.link("back_right"), right, back)
    _add(world, assignment.link("tail"), back, tail_end)
    m = lambda role, end: _magnet(world, assignment.link(role), end)
    _attach_cluster(world, [m("front_left", 0), m("front_right", 0)])
    _attach_cluster(world, [m("front_left", 1), m("middle", 0), m("back_left", 0)])
    _attach_cluster(world, [m("front_right", 1), m("middle", 1), m("back_right", 0)])
    _attach_cluster(world, [m("back_left", 1), m("back_right", 1), m("tail", 0)])
    return assignment


def assemble_tetrahedron(
    world: SimWorld, link_ids, origin=(0.0, 0.0)
) -> RoleAssignment:
    """Regular tetrahedron resting on its base triangle, apex up."""
    assignment = assign_roles("tetrahedron", link_ids)
    ox, oy = origin
    back = np.array([ox, oy, 0.0])
    fl = np.array([ox - _E / 2, oy + _H, 0.0])
    fr = np.array([ox + _E / 2, oy + _H, 0.0])
    centroid = (back + fl + fr) / 3
    z = _lift(world, [(p[0], p[1]) for p in (back, fl, fr)])
    for p in (back, fl, fr):
        p[2] = z
    apex = np.array([centroid[0], centroid[1], z + _APEX_H])
    _add(world, assignment.link("base_front"), fl, fr)
    _add(world, assignment.link("base_left"), fl, back)
    _add(world, assignment.link("base_right"), fr, back)
    _add(world, assignment.link("apex_front_left"), fl, apex)
    _add(world, assignment.link("apex_front_right"), fr, apex)
    _add(world, assignment.link("apex_back"), back, apex)
    m = lambda role, end: _magnet(world, assignment.link(role), end)
    _attach_cluster(
        world, [m("base_front", 0), m("base_left", 0), m("apex_front_left", 0)]
    )
    _attach_cluster(
        world, [m("base_front", 1), m("base_right", 0), m("apex_front_right", 0)]
    )
    _attach_cluster(
        world, [m("base_left", 1), m("base_right", 1), m("apex_back", 0)]
    )
    _attach_cluster(
        world,
        [m("apex_front_left", 1), m("apex_front_right", 1), m("apex_back", 1)],
    )
    return assignment


def assemble_ratchet_tetrahedron(
    world: SimWorld, link_ids, origin=(0.0, 0.0)
) -> RoleAssignment:
    """Tetrahedron with a seventh walking-stick link on the front-left vertex."""
    assignment = assign_roles("ratchet tetrahedron", link_ids)
    tetra_ids = [assignment.link(r) for r in TOPOLOGY_ROLES["tetrahedron"]]
    sub = assemble_tetrahedron(world, tetra_ids, origin)
    for role, pair in sub.roles.items():
        assert assignment.roles[role][0] == pair[0]
    ox, oy = origin
    fl = np.array([ox - _E / 2, oy + _H, 0.0])
    z = _lift(world, [(fl[0], fl[1])])
    fl[2] = z
    tip = fl + np.array([0.15, _E, 0.0]) / np.linalg.norm([0.15, _E, 0.0]) * _E
    ratchet_id = assignment.link("ratchet")
    _add(world, ratchet_id, tip, fl)
    world.attach(
        _magnet(world, ratchet_id, 1),
        _magnet(world, assignment.link("base_front"), 0),
    )
    return assignment


def ground_contact_vertices(world: SimWorld, tolerance: float = 0.02) -> set[int]:
    """Cluster indices (by sorted magnet membership) currently touching ground.

    Returns the set of magnet indices whose tip is within ``tolerance`` of
    the terrain surface; used to observe topple contact-face changes.
    """
    tips = world.tip_positions()
    touching = set()
    for idx, tip in enumerate(tips):
        surface = _ground(world, tip[0], tip[1])
        if tip[2] - surface <= tolerance:
            touching.add(idx)
    return touching
