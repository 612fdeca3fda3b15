"""Morphology tracking: grid-based connection detection, structure graphs,
per-component Weisfeiler-Lehman hashing, catalog matching and isomorphism maps.

Connector magnets are hashed by x/y into square occupancy cells; magnets in
the same or neighboring cells (and within a 3D distance gate) are considered
connected.  Clusters of connected magnets become graph vertices and links
become edges; the resulting structure graph is the canonical morphology
object.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from hashlib import blake2b
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import yaml

CELL_SIZE = 0.016  # meters, square occupancy cells

_CELL_EPS = 1e-9  # guards floor() against float noise on exact cell boundaries


@dataclass(frozen=True)
class OccupancyGrid:
    """2D occupancy hashing of magnet x/y positions.

    Cells are squares of ``cell_size``.  Same-or-adjacent cell membership
    implies connection, additionally gated by a full 3D distance bound of
    ``gate_factor * cell_size`` so vertically stacked magnets do not
    spuriously connect.
    """

    cell_size: float = CELL_SIZE
    gate_factor: float = 2.0

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        c = self.cell_size
        return (
            int(math.floor(x / c + _CELL_EPS)),
            int(math.floor(y / c + _CELL_EPS)),
        )


@dataclass
class MagnetContactGraph:
    """Undirected magnet contact graph, self-loop on every magnet."""

    n: int
    edges: set[tuple[int, int]]  # (i, j) with i <= j

    def neighbors(self) -> list[set[int]]:
        adj = [set() for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return adj


def detect_connections(positions, grid: OccupancyGrid | None = None) -> MagnetContactGraph:
    """Contact edges between magnets in the same or 8-neighboring cells.

    ``positions`` is (n, 3); only x and y feed the grid, the z coordinate
    participates in the 3D gate.  Every magnet gets a self-loop.
    """
    grid = grid or OccupancyGrid()
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    n = len(pos)
    if not np.all(np.isfinite(pos[:, :2])):
        raise ValueError("magnet x/y positions must be finite")
    cells: dict[tuple[int, int], list[int]] = defaultdict(list)
    for i in range(n):
        cells[grid.cell_of(pos[i, 0], pos[i, 1])].append(i)
    gate_sq = (grid.gate_factor * grid.cell_size) ** 2
    edges: set[tuple[int, int]] = {(i, i) for i in range(n)}
    for (cx, cy), members in cells.items():
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                others = cells.get((cx + dx, cy + dy))
                if not others:
                    continue
                for i in members:
                    for j in others:
                        if i < j:
                            d = pos[i] - pos[j]
                            if float(d @ d) <= gate_sq:
                                edges.add((i, j))
    return MagnetContactGraph(n, edges)


@dataclass(frozen=True)
class Cluster:
    """Connected component of the contact graph: one geometric vertex."""

    cluster_id: int
    members: tuple[int, ...]
    mean_position: tuple[float, float, float]


def cluster_vertices(
    contact_graph: MagnetContactGraph, positions=None
) -> list[Cluster]:
    """Partition magnets into connected components via breadth-first search."""
    adj = contact_graph.neighbors()
    pos = None
    if positions is not None:
        pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    seen = [False] * contact_graph.n
    clusters = []
    for start in range(contact_graph.n):
        if seen[start]:
            continue
        queue = deque([start])
        seen[start] = True
        members = []
        while queue:
            v = queue.popleft()
            members.append(v)
            for u in adj[v]:
                if not seen[u]:
                    seen[u] = True
                    queue.append(u)
        members.sort()
        mean = (
            tuple(pos[members].mean(axis=0)) if pos is not None else (0.0, 0.0, 0.0)
        )
        clusters.append(Cluster(len(clusters), tuple(members), mean))
    return clusters


@dataclass
class StructureGraph:
    """Vertices are magnet clusters, edges are links (a multigraph).

    A link whose two end magnets land in the same cluster is a degenerate
    fold; it is excluded from the edge set and reported in ``anomalies``.
    """

    n_vertices: int
    edges: list[tuple[int, int, int]]  # (link_id, u, v)
    vertex_positions: Optional[list[tuple[float, float, float]]] = None
    anomalies: list[int] = field(default_factory=list)

    def adjacency(self) -> list[list[int]]:
        adj = [[] for _ in range(self.n_vertices)]
        for _, u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def degree_multiset(self) -> tuple[int, ...]:
        return tuple(sorted(len(a) for a in self.adjacency()))

    def components(self) -> list[list[int]]:
        adj = self.adjacency()
        seen = [False] * self.n_vertices
        comps = []
        for start in range(self.n_vertices):
            if seen[start]:
                continue
            queue = deque([start])
            seen[start] = True
            comp = []
            while queue:
                v = queue.popleft()
                comp.append(v)
                for u in adj[v]:
                    if not seen[u]:
                        seen[u] = True
                        queue.append(u)
            comps.append(sorted(comp))
        return comps

    def subgraph(self, vertices: Sequence[int]) -> "StructureGraph":
        remap = {v: i for i, v in enumerate(vertices)}
        edges = [
            (lid, remap[u], remap[v])
            for lid, u, v in self.edges
            if u in remap and v in remap
        ]
        positions = None
        if self.vertex_positions is not None:
            positions = [self.vertex_positions[v] for v in vertices]
        return StructureGraph(len(vertices), edges, positions)


def build_structure_graph(
    link_ends: Sequence[tuple[int, int]],
    clusters: Sequence[Cluster],
    link_ids: Sequence[int] | None = None,
) -> StructureGraph:
    """One edge per link between the clusters holding its two end magnets.

    ``link_ends[i]`` gives the magnet indices of link i's A and B tips.
    """
    owner = {}
    for c in clusters:
        for m in c.members:
            if m in owner:
                raise ValueError(f"magnet {m} assigned to two clusters")
            owner[m] = c.cluster_id
    if link_ids is None:
        link_ids = list(range(len(link_ends)))
    edges = []
    anomalies = []
    for lid, (ma, mb) in zip(link_ids, link_ends):
        u, v = owner[ma], owner[mb]
        if u == v:
            anomalies.append(lid)
            continue
        edges.append((lid, u, v))
    positions = [c.mean_position for c in clusters]
    return StructureGraph(len(clusters), edges, positions, anomalies)


def structure_graph_from_scene(
    tip_positions, link_ids: Sequence[int] | None = None,
    grid: OccupancyGrid | None = None,
) -> StructureGraph:
    """Detect connections and build the structure graph for one snapshot.

    ``tip_positions`` is (2L, 3): magnets 2i and 2i+1 are link i's A/B tips.
    """
    pos = np.asarray(tip_positions, dtype=float).reshape(-1, 3)
    if len(pos) % 2:
        raise ValueError("tip_positions must hold two magnets per link")
    contact = detect_connections(pos, grid)
    clusters = cluster_vertices(contact, pos)
    ends = [(2 * i, 2 * i + 1) for i in range(len(pos) // 2)]
    return build_structure_graph(ends, clusters, link_ids)


# --- Weisfeiler-Lehman hashing -------------------------------------------

_EMPTY_HASH = blake2b(b"empty-structure", digest_size=16).hexdigest()


@dataclass(frozen=True)
class MorphologyHash:
    """Canonical morphology digest plus the per-component hash multiset."""

    canonical: str
    components: tuple[str, ...]


def _partition(labels: dict[int, str]) -> frozenset:
    groups = defaultdict(list)
    for v, lab in labels.items():
        groups[lab].append(v)
    return frozenset(frozenset(g) for g in groups.values())


def _wl_component_hash(vertices: Sequence[int], adj: dict[int, list[int]]) -> str:
    labels = {v: str(len(adj[v])) for v in vertices}
    part = _partition(labels)
    for _ in range(3 * len(vertices)):
        new = {}
        for v in vertices:
            sig = labels[v] + "|" + ",".join(sorted(labels[u] for u in adj[v]))
            new[v] = blake2b(sig.encode(), digest_size=8).hexdigest()
        new_part = _partition(new)
        labels = new
        if new_part == part:
            break
        part = new_part
    n_edges = sum(len(adj[v]) for v in vertices) // 2
    summary = ",".join(sorted(labels.values()))
    summary += f";v={len(vertices)};e={n_edges}"
    return blake2b(summary.encode(), digest_size=16).hexdigest()


def wl_hash_single_graph(graph: StructureGraph) -> str:
    """Whole-graph WL hash, collision-prone for disconnected graphs (a cycle
    of 2k links hashes equal to two disjoint k-cycles)."""
    if graph.n_vertices == 0:
        return _EMPTY_HASH
    adj = {v: list(ns) for v, ns in enumerate(graph.adjacency())}
    return _wl_component_hash(list(range(graph.n_vertices)), adj)


def wl_hash(graph: StructureGraph) -> MorphologyHash:
    """WL hash computed separately per connected component and combined as a
    sorted multiset, resolving the whole-graph collision class."""
    if graph.n_vertices == 0:
        return MorphologyHash(_EMPTY_HASH, ())
    adj = {v: list(ns) for v, ns in enumerate(graph.adjacency())}
    comp_hashes = sorted(
        _wl_component_hash(comp, adj) for comp in graph.components()
    )
    canonical = blake2b("+".join(comp_hashes).encode(), digest_size=16).hexdigest()
    return MorphologyHash(canonical, tuple(comp_hashes))


# --- isomorphism -----------------------------------------------------------


@dataclass(frozen=True)
class IsomorphismMap:
    vertex_map: dict[int, int]
    link_map: dict[int, int]


def _edge_multiplicity(graph: StructureGraph) -> dict[tuple[int, int], list[int]]:
    mult = defaultdict(list)
    for lid, u, v in graph.edges:
        mult[(min(u, v), max(u, v))].append(lid)
    for lids in mult.values():
        lids.sort()
    return mult


def _wl_colors(graph: StructureGraph, rounds: int) -> dict[int, str]:
    adj = {v: list(ns) for v, ns in enumerate(graph.adjacency())}
    labels = {v: str(len(adj[v])) for v in adj}
    for _ in range(rounds):
        labels = {
            v: blake2b(
                (labels[v] + "|" + ",".join(sorted(labels[u] for u in adj[v]))).encode(),
                digest_size=8,
            ).hexdigest()
            for v in adj
        }
    return labels


def isomorphism_map(g1: StructureGraph, g2: StructureGraph) -> Optional[IsomorphismMap]:
    """Vertex bijection inducing a link bijection, or None.

    Deterministic for fixed inputs: vertices are assigned in sorted order and
    candidates tried in sorted order.
    """
    if g1.n_vertices != g2.n_vertices or len(g1.edges) != len(g2.edges):
        return None
    if g1.degree_multiset() != g2.degree_multiset():
        return None
    if wl_hash(g1) != wl_hash(g2):
        return None
    rounds = max(2, g1.n_vertices)
    colors1 = _wl_colors(g1, rounds)
    colors2 = _wl_colors(g2, rounds)
    by_color2 = defaultdict(list)
    for v, c in sorted(colors2.items()):
        by_color2[c].append(v)
    mult1 = _edge_multiplicity(g1)
    mult2 = _edge_multiplicity(g2)

    order = sorted(range(g1.n_vertices))
    assignment: dict[int, int] = {}
    used: set[int] = set()

    def consistent(v1: int, v2: int) -> bool:
        for u1, u2 in assignment.items():
            k1 = (min(v1, u1), max(v1, u1))
            k2 = (min(v2, u2), max(v2, u2))
            if len(mult1.get(k1, ())) != len(mult2.get(k2, ())):
                return False
        return True

    def backtrack(idx: int) -> bool:
        if idx == len(order):
            return True
        v1 = order[idx]
        for v2 in by_color2.get(colors1[v1], ()):
            if v2 in used or not consistent(v1, v2):
                continue
            assignment[v1] = v2
            used.add(v2)
            if backtrack(idx + 1):
                return True
            del assignment[v1]
            used.discard(v2)
        return False

    if not backtrack(0):
        return None
    link_map: dict[int, int] = {}
    for key1, lids1 in mult1.items():
        u, v = key1
        key2 = (
            min(assignment[u], assignment[v]),
            max(assignment[u], assignment[v]),
        )
        for l1, l2 in zip(lids1, mult2[key2]):
            link_map[l1] = l2
    return IsomorphismMap(dict(assignment), link_map)


# --- catalog ---------------------------------------------------------------


@dataclass
class MorphologyCatalog:
    """Named reference structure graphs."""

    entries: dict[str, StructureGraph]

    def __post_init__(self) -> None:
        for name, graph in self.entries.items():
            if len(graph.components()) != 1:
                raise ValueError(f"catalog graph {name!r} must be connected")

    def names(self) -> list[str]:
        return list(self.entries)

    @classmethod
    def from_edge_lists(cls, named: dict[str, list[tuple[int, int]]]):
        entries = {}
        for name, pairs in named.items():
            n = max(max(u, v) for u, v in pairs) + 1
            edges = [(i, u, v) for i, (u, v) in enumerate(pairs)]
            entries[name] = StructureGraph(n, edges)
        return cls(entries)

    @classmethod
    def from_yaml(cls, path) -> "MorphologyCatalog":
        data = yaml.safe_load(Path(path).read_text())
        return cls.from_edge_lists(
            {name: [tuple(e) for e in edges] for name, edges in data.items()}
        )


_DEFAULT_CATALOG_EDGES = {
    # one link resting free: two single-magnet clusters
    "single link": [(0, 1)],
    # two links joined at one shared cluster
    "pair": [(0, 1), (1, 2)],
    "triangle": [(0, 1), (1, 2), (2, 0)],
    "3-pointed star": [(0, 1), (0, 2), (0, 3)],
    # two triangles sharing edge 1-2, pendant link hanging off vertex 3
    "diamond-with-tail": [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (3, 4)],
    "tetrahedron": [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
    # tetrahedron plus the walking-stick link on one vertex
    "ratchet tetrahedron": [
        (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (0, 4),
    ],
}


def default_catalog() -> MorphologyCatalog:
    path = Path(__file__).parent / "data" / "catalog.yaml"
    if path.exists():
        return MorphologyCatalog.from_yaml(path)
    return MorphologyCatalog.from_edge_lists(_DEFAULT_CATALOG_EDGES)


def match_morphology(graph: StructureGraph, catalog: MorphologyCatalog) -> list[str]:
    """Catalog names whose reference graph is isomorphic to some connected
    component; several names can match one snapshot simultaneously."""
    if not catalog.entries:
        raise ValueError("catalog must not be empty")
    found = []
    comps = [graph.subgraph(c) for c in graph.components()]
    for name, ref in catalog.entries.items():
        if any(isomorphism_map(comp, ref) is not None for comp in comps):
            found.append(name)
    return found


# --- trajectory recording ---------------------------------------------------


@dataclass
class MorphologyRecord:
    """First-occurrence times of hashes and catalog names over a trajectory."""

    first_seen: dict[str, float]
    names_first_seen: dict[str, float]
    samples: int = 0

    def names(self) -> set[str]:
        return set(self.names_first_seen)


def record_morphologies(
    snapshots: Iterable[tuple[float, np.ndarray]],
    catalog: MorphologyCatalog | None = None,
    grid: OccupancyGrid | None = None,
    sample_interval: float = 1.0,
) -> MorphologyRecord:
    """Union of morphology matches over time-ordered magnet snapshots.

    ``snapshots`` yields (sim_time, tip_positions); positions are sampled at
    ``sample_interval`` of sim time, and each hash/name is tagged with the
    earliest sim time at which it was observed.
    """
    catalog = catalog or default_catalog()
    record = MorphologyRecord({}, {})
    next_sample = None
    for sim_time, tips in snapshots:
        if next_sample is not None and sim_time < next_sample:
            continue
        next_sample = (sim_time if next_sample is None else next_sample) + sample_interval
        graph = structure_graph_from_scene(tips, grid=grid)
        digest = wl_hash(graph)
        record.samples += 1
        record.first_seen.setdefault(digest.canonical, sim_time)
        for name in match_morphology(graph, catalog):
            record.names_first_seen.setdefault(name, sim_time)
    return record
