"""Magnet interaction model for free-form truss connectors.

Forces between connector magnets follow an inverse-square attraction scaled
by per-magnet activations (1 = fully extended, 0 = fully retracted).  Pair
discovery, distance math and force accumulation are batched over position
arrays; interactions beyond the cutoff distance contribute exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAGNET_DIAMETER = 0.0127  # neodymium sphere diameter, meters
PULL_AWAY_FORCE = 13.7  # measured two-connector separation force, newtons
RETRACTION_FACTOR = 1.2  # full detachment retracts the magnet 1.2x its diameter
FULL_RETRACTION = RETRACTION_FACTOR * MAGNET_DIAMETER

_COINCIDENT_SQ = 1e-12  # below this squared distance, clamp to contact distance


def calibrate_k(contact_distance: float, target_force: float) -> float:
    """Force constant such that two fully active magnets at ``contact_distance``
    attract with ``target_force``: k = F * r^2."""
    if contact_distance <= 0 or target_force <= 0:
        raise ValueError("contact_distance and target_force must be positive")
    return target_force * contact_distance**2


DEFAULT_K = calibrate_k(MAGNET_DIAMETER, PULL_AWAY_FORCE)


@dataclass(frozen=True)
class ForceModel:
    """Parameters of the pairwise magnet force law."""

    k: float = DEFAULT_K  # N * m^2
    cutoff: float = 0.14  # meters; interactions beyond this are dropped
    contact_distance: float = MAGNET_DIAMETER  # meters; singularity clamp

    def __post_init__(self) -> None:
        if self.k <= 0:
            raise ValueError("k must be positive")
        if not self.cutoff > self.contact_distance > 0:
            raise ValueError("require cutoff > contact_distance > 0")


@dataclass
class MagnetState:
    """One connector magnet: position, activation in [0, 1], owning link end."""

    position: np.ndarray
    activation: float
    owner: tuple[int, int] = (-1, 0)  # (link_id, end); end 0 = A, 1 = B

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float)
        if self.position.shape != (3,) or not np.all(np.isfinite(self.position)):
            raise ValueError("position must be a finite 3-vector")
        if not 0.0 <= self.activation <= 1.0:
            raise ValueError("activation must be in [0, 1]")


@dataclass(frozen=True)
class InteractionPair:
    """Magnet pair within the cutoff, recorded once with index_i < index_j."""

    index_i: int
    index_j: int
    sq_distance: float


def fast_inv_sqrt(x):
    """Approximate x**-0.5 via the bit-shift initial guess plus one Newton step.

    Accepts a positive scalar or array; relative error stays below 0.2%.
    """
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("fast_inv_sqrt requires positive finite input")
    bits = np.atleast_1d(arr).astype(np.float32).view(np.int32)
    guess = (np.int32(0x5F3759DF) - (bits >> 1)).view(np.float32).astype(np.float64)
    flat = np.atleast_1d(arr)
    guess = guess * (1.5 - 0.5 * flat * guess * guess)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(guess[0])
    return guess.reshape(arr.shape)


def pairwise_sq_distance_matrix(positions) -> np.ndarray:
    """All squared inter-magnet distances as an n-by-n matrix.

    Built from the broadcast difference tensor X[:, None, :] - X, not a
    scalar double loop.
    """
    x = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    diff = x[:, None, :] - x[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _positions_activations(magnets):
    if len(magnets) == 0:
        return np.zeros((0, 3)), np.zeros(0)
    if isinstance(magnets[0], MagnetState):
        pos = np.array([m.position for m in magnets], dtype=float)
        act = np.array([m.activation for m in magnets], dtype=float)
        return pos, act
    return np.asarray(magnets, dtype=float).reshape(-1, 3), np.ones(len(magnets))


def pair_candidates(magnets, model: ForceModel) -> list[InteractionPair]:
    """Exactly the magnet pairs with distance <= cutoff, each once with i < j."""
    pos, _ = _positions_activations(magnets)
    n = len(pos)
    if n < 2:
        return []
    sq = pairwise_sq_distance_matrix(pos)
    ii, jj = np.triu_indices(n, k=1)
    keep = sq[ii, jj] <= model.cutoff**2
    return [
        InteractionPair(int(i), int(j), float(sq[i, j]))
        for i, j in zip(ii[keep], jj[keep])
    ]


def magnet_force(m1: MagnetState, m2: MagnetState, model: ForceModel) -> np.ndarray:
    """Attractive force on m1 toward m2: |F| = k * a1 * a2 / r^2 inside the cutoff.

    Polarity is not modeled (the physical magnet sphere self-aligns); the force
    is always attractive.  Coincident magnets are clamped to the contact
    distance so the magnitude stays finite.
    """
    d = m2.position - m1.position
    sq = float(d @ d)
    if sq > model.cutoff**2:
        return np.zeros(3)
    eff_sq = model.contact_distance**2 if sq < _COINCIDENT_SQ else sq
    magnitude = model.k * m1.activation * m2.activation / eff_sq
    norm = np.sqrt(sq)
    if norm == 0.0:
        return np.zeros(3)
    return magnitude * d / norm


def accumulate_forces(magnets, model: ForceModel, exclude_pairs=None) -> np.ndarray:
    """Net force on every magnet from all partners within the cutoff.

    Each pair is evaluated once and applied with opposite signs, so the
    action-reaction balance is exact.  Norm reciprocals come from
    fast_inv_sqrt applied to the squared-distance matrix.  ``exclude_pairs``
    (set of (i, j) with i < j) drops pairs handled elsewhere, e.g. magnets
    already held by a formed connection.
    """
    pos, act = _positions_activations(magnets)
    n = len(pos)
    forces = np.zeros((n, 3))
    if n < 2:
        return forces
    sq = pairwise_sq_distance_matrix(pos)
    ii, jj = np.triu_indices(n, k=1)
    keep = sq[ii, jj] <= model.cutoff**2
    ii, jj = ii[keep], jj[keep]
    if exclude_pairs:
        mask = np.array(
            [(int(i), int(j)) not in exclude_pairs for i, j in zip(ii, jj)],
            dtype=bool,
        )
        ii, jj = ii[mask], jj[mask]
    if len(ii) == 0:
        return forces
    s = sq[ii, jj]
    s = np.where(s < _COINCIDENT_SQ, model.contact_distance**2, s)
    # 1/r^3 = inv_sqrt(r^2) / r^2: one approximate factor, the rest exact,
    # keeping the per-pair error at the inverse-sqrt tolerance
    inv = fast_inv_sqrt(s)
    coef = model.k * act[ii] * act[jj] * inv / s
    pair_force = coef[:, None] * (pos[jj] - pos[ii])
    np.add.at(forces, ii, pair_force)
    np.add.at(forces, jj, -pair_force)
    return forces


def activation_from_retraction(
    retraction: float, magnet_diameter: float = MAGNET_DIAMETER
) -> float:
    """Linear activation ramp: 1 at zero retraction, 0 at 1.2x the diameter."""
    if retraction < 0:
        raise ValueError("retraction must be non-negative")
    full = RETRACTION_FACTOR * magnet_diameter
    return max(0.0, 1.0 - retraction / full)
