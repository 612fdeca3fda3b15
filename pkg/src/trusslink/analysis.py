"""Locomotion-speed estimation and experiment result tables.

Speeds are estimated by fitting least-squares lines to along-track position
versus time over four-cycle windows advanced by two cycles, after dropping
samples below a z-height threshold (off-platform excursions), and are
normalized to body lengths per cycle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WINDOW_CYCLES = 4
ADVANCE_CYCLES = 2


@dataclass
class SpeedRecord:
    topology: str
    window_speeds: list[float]  # body lengths per cycle, one per window
    mean: float
    stdev: float
    insufficient_data: bool = False

    @classmethod
    def empty(cls, topology: str) -> "SpeedRecord":
        return cls(topology, [], float("nan"), float("nan"), True)


def estimate_speed(
    times,
    positions,
    cycle_time: float,
    body_length: float,
    heights=None,
    z_threshold: float = -0.05,
    topology: str = "",
    axis_positions_are_scalar: bool = True,
) -> SpeedRecord:
    """Windowed linear-regression speed in body lengths per cycle.

    ``positions`` is the along-track coordinate per sample (meters);
    ``heights`` (optional) is a z coordinate used to drop samples below
    ``z_threshold``.  Requires at least four cycles of surviving data.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(positions, dtype=float)
    if heights is not None:
        keep = np.asarray(heights, dtype=float) >= z_threshold
        t, y = t[keep], y[keep]
    if len(t) < 2:
        return SpeedRecord.empty(topology)
    t0 = t[0]
    cycles = (t - t0) / cycle_time
    total_cycles = cycles[-1]
    if total_cycles < WINDOW_CYCLES:
        return SpeedRecord.empty(topology)

    speeds = []
    start = 0.0
    while start + WINDOW_CYCLES <= total_cycles + 1e-9:
        mask = (cycles >= start - 1e-9) & (cycles <= start + WINDOW_CYCLES + 1e-9)
        if mask.sum() >= 2:
            slope = _least_squares_slope(t[mask], y[mask])
            speeds.append(slope * cycle_time / body_length)
        start += ADVANCE_CYCLES
    if not speeds:
        return SpeedRecord.empty(topology)
    mean = float(np.mean(speeds))
    stdev = float(np.std(speeds, ddof=0))
    return SpeedRecord(topology, speeds, mean, stdev)


def _least_squares_slope(t: np.ndarray, y: np.ndarray) -> float:
    t_mean, y_mean = t.mean(), y.mean()
    denom = float(((t - t_mean) ** 2).sum())
    if denom == 0.0:
        return 0.0
    return float(((t - t_mean) * (y - y_mean)).sum() / denom)


def speed_table(records: list[SpeedRecord]) -> str:
    """Fixed-format text table of speeds in body lengths per cycle."""
    lines = ["topology\tmean_bl_per_cycle\tstdev\twindows"]
    for rec in records:
        if rec.insufficient_data:
            lines.append(f"{rec.topology}\tinsufficient-data\t-\t0")
        else:
            lines.append(
                f"{rec.topology}\t{rec.mean:.6f}\t{rec.stdev:.6f}\t{len(rec.window_speeds)}"
            )
    return "\n".join(lines) + "\n"


@dataclass
class FormationResult:
    """Aggregate of a randomized formation study."""

    n_runs: int
    sim_minutes: float
    seed: int
    occurrences: dict[str, int]  # catalog name -> number of runs it appeared in
    discarded_preconnected: int = 0
    per_run_names: list[frozenset] = field(default_factory=list)

    def probability(self, name: str) -> float:
        return self.occurrences.get(name, 0) / self.n_runs


def formation_table(
    result: FormationResult, catalog_names: list[str], hashes: dict | None = None
) -> str:
    """Fixed-format text report: morphology, hash, occurrence probability."""
    hashes = hashes or {}
    lines = [
        f"# formation study: {result.n_runs} runs x {result.sim_minutes:g} sim-minutes, "
        f"seed {result.seed}, {result.discarded_preconnected} pre-connected runs discarded",
        "morphology\thash\tprobability\truns",
    ]
    for name in catalog_names:
        count = result.occurrences.get(name, 0)
        digest = hashes.get(name, "-")
        lines.append(f"{name}\t{digest}\t{count / result.n_runs:.4f}\t{count}")
    return "\n".join(lines) + "\n"


def catalog_hashes(catalog) -> dict:
    """Canonical reference hash per catalog morphology."""
    from .morphology import wl_hash

    return {name: wl_hash(graph).canonical for name, graph in catalog.entries.items()}
