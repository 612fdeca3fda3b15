"""Toppling-feasibility geometry for a tetrahedron of extensible edges.

A tetrahedron sitting on its base triangle can tip itself over one base edge
(the pivot) by stretching members until its center of mass passes vertically
over that edge.  All six edges share the same contracted length and the same
maximum extension factor (1 + e); this module computes the minimal e for
which the tip-over becomes reachable.
"""

from __future__ import annotations

import math


def _com_overhang(e: float, margin: float) -> float:
    """Signed distance of the COM beyond the pivot edge, normalized units.

    Configuration that maximizes overhang (monotone in each length):
    pivot edge w and the apex edge to the far base vertex L expanded to
    (1 + e); the remaining four edges contracted at 1.  With uniform links
    the COM condition reduces to the sum of vertex offsets from the pivot
    line: the far base vertex sits at +q, the pivot ends at 0, and the apex
    at t, where q = sqrt(1 - w^2/4).
    """
    w = L = 1.0 + e
    under = 1.0 - w * w / 4.0
    if under <= 0.0:
        return math.inf  # pivot wider than the contracted side edges allow
    q = math.sqrt(under)
    t_air = q - L * L / (2.0 * q)
    if abs(t_air) <= q:
        t = t_air  # apex airborne on the sphere intersection
    else:
        t = q - L  # apex grounded beyond the pivot, edge taut
    return -(q + t) / 4.0 - margin


def min_expansion_ratio_for_topple(
    margin: float = 0.0, base_length: float = 1.0, tol: float = 1e-9
) -> float:
    """Minimal expansion ratio e such that the tetrahedron can tip over a
    base edge; with margin 0 the result is scale-free (base_length cancels).

    ``margin`` demands the COM clear the pivot by that fraction of the
    contracted edge length; any positive margin strictly increases e.
    """
    if base_length <= 0:
        raise ValueError("base_length must be positive")
    scaled_margin = margin * base_length / base_length  # dimensionless already
    lo, hi = 0.0, 0.999
    if _com_overhang(hi, scaled_margin) < 0:
        raise ValueError("no feasible ratio below 99.9% for this margin")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _com_overhang(mid, scaled_margin) >= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol:
            break
    return hi


def achieved_expansion_ratio(
    contracted: float = 0.28, expanded: float = 0.43
) -> float:
    """Design expansion ratio (max - min) / min for the built link."""
    if contracted <= 0 or expanded < contracted:
        raise ValueError("require expanded >= contracted > 0")
    return (expanded - contracted) / contracted


def topple_feasible(expansion_ratio: float, margin: float = 0.0) -> bool:
    return expansion_ratio >= min_expansion_ratio_for_topple(margin)
