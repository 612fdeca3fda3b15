"""Position-based dynamics kernels for three-particle rods with Coulomb
friction, terrain contact and magnet forces.

Each link is three particles (tip A, center, tip B) joined by three distance
constraints (the half segments and the full span).  A step integrates
gravity plus external forces, then iterates contact projection, a
budget-limited friction pass and the distance constraints.  The friction
budget per particle and step is mu * (accumulated normal correction), which
reproduces quasi-static stick/slip: a constraint pushing a lightly loaded
tip exhausts that tip's budget first, so the tip slides while the heavier,
more-connected side stays anchored.  That asymmetry is what turns reciprocal
servo cycles into net crawling.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .terrain import KIND_BOX, KIND_CYLINDER, KIND_PLANE

STATUS_OK = 0
STATUS_SNAP = 1  # a detached magnet pair moved inside the snap distance
STATUS_NONFINITE = 2

_TINY = 1e-12


@njit(cache=True)
def _surface_dither(px, py, amp):
    """Deterministic carpet-texture height modulation; regularizes flat,
    degenerate contact configurations without affecting determinism."""
    if amp <= 0.0:
        return 0.0
    return amp * np.sin(53.0 * px + 1.3) * np.sin(61.0 * py + 2.1)


@njit(cache=True)
def _point_sdf(kind, cpos, rot, dims, px, py, pz):
    """Signed distance and outward normal of one primitive at a point."""
    dx, dy, dz = px - cpos[0], py - cpos[1], pz - cpos[2]
    # local coordinates: q = R^T d
    qx = rot[0, 0] * dx + rot[1, 0] * dy + rot[2, 0] * dz
    qy = rot[0, 1] * dx + rot[1, 1] * dy + rot[2, 1] * dz
    qz = rot[0, 2] * dx + rot[1, 2] * dy + rot[2, 2] * dz

    if kind == KIND_PLANE:
        sdf = qz
        nx, ny, nz = 0.0, 0.0, 1.0
    elif kind == KIND_BOX:
        ax = abs(qx) - dims[0]
        ay = abs(qy) - dims[1]
        az = abs(qz) - dims[2]
        if ax <= 0.0 and ay <= 0.0 and az <= 0.0:
            # inside: closest face
            sdf = ax
            nx, ny, nz = (1.0 if qx >= 0 else -1.0), 0.0, 0.0
            if ay > sdf:
                sdf = ay
                nx, ny, nz = 0.0, (1.0 if qy >= 0 else -1.0), 0.0
            if az > sdf:
                sdf = az
                nx, ny, nz = 0.0, 0.0, (1.0 if qz >= 0 else -1.0)
        else:
            ox = ax if ax > 0.0 else 0.0
            oy = ay if ay > 0.0 else 0.0
            oz = az if az > 0.0 else 0.0
            sdf = np.sqrt(ox * ox + oy * oy + oz * oz)
            nx = ox * (1.0 if qx >= 0 else -1.0)
            ny = oy * (1.0 if qy >= 0 else -1.0)
            nz = oz * (1.0 if qz >= 0 else -1.0)
            inv = 1.0 / max(sdf, _TINY)
            nx, ny, nz = nx * inv, ny * inv, nz * inv
    else:  # KIND_CYLINDER, axis along local z
        rr = np.sqrt(qx * qx + qy * qy)
        dr = rr - dims[0]
        dzv = abs(qz) - dims[1]
        if dr <= 0.0 and dzv <= 0.0:
            if dr > dzv:
                sdf = dr
                inv = 1.0 / max(rr, _TINY)
                nx, ny, nz = qx * inv, qy * inv, 0.0
            else:
                sdf = dzv
                nx, ny, nz = 0.0, 0.0, (1.0 if qz >= 0 else -1.0)
        else:
            odr = dr if dr > 0.0 else 0.0
            odz = dzv if dzv > 0.0 else 0.0
            sdf = np.sqrt(odr * odr + odz * odz)
            inv_r = 1.0 / max(rr, _TINY)
            nx = qx * inv_r * odr
            ny = qy * inv_r * odr
            nz = (1.0 if qz >= 0 else -1.0) * odz
            inv = 1.0 / max(sdf, _TINY)
            nx, ny, nz = nx * inv, ny * inv, nz * inv

    # back to world frame: n_world = R n_local
    wx = rot[0, 0] * nx + rot[0, 1] * ny + rot[0, 2] * nz
    wy = rot[1, 0] * nx + rot[1, 1] * ny + rot[1, 2] * nz
    wz = rot[2, 0] * nx + rot[2, 1] * ny + rot[2, 2] * nz
    return sdf, wx, wy, wz


def point_sdf_py(kinds, tpos, trot, tdims, point) -> float:
    """Minimum signed distance over all primitives (python-side helper)."""
    best = np.inf
    for t in range(len(kinds)):
        sdf, _, _, _ = _point_sdf(
            kinds[t], tpos[t], trot[t], tdims[t], point[0], point[1], point[2]
        )
        best = min(best, sdf)
    return best


@njit(cache=True)
def _fast_inv_sqrt_scalar(x, f32buf, i32buf):
    f32buf[0] = x
    i = i32buf[0]
    i = np.int32(0x5F3759DF) - (i >> np.int32(1))
    i32buf[0] = i
    y = np.float64(f32buf[0])
    return y * (1.5 - 0.5 * x * y * y)


@njit(cache=True)
def _magnet_forces(
    forces, pos, mag_particle, mag_act, attached, k_const, cutoff_sq, contact_sq,
    f32buf, i32buf,
):
    """Pairwise inverse-square attraction accumulated per magnet particle.

    Mirrors the public batched kernel (same formula, same fast inverse
    square root); attached pairs are excluded because a formed connection
    holds them instead.
    """
    n = len(mag_particle)
    for a in range(n):
        pa = mag_particle[a]
        act_a = mag_act[a]
        if act_a <= 0.0:
            continue
        for b in range(a + 1, n):
            if attached[a, b]:
                continue
            act_b = mag_act[b]
            if act_b <= 0.0:
                continue
            pb = mag_particle[b]
            dx = pos[pb, 0] - pos[pa, 0]
            dy = pos[pb, 1] - pos[pa, 1]
            dz = pos[pb, 2] - pos[pa, 2]
            sq = dx * dx + dy * dy + dz * dz
            if sq > cutoff_sq:
                continue
            if sq < 1e-12:
                sq = contact_sq
            inv = _fast_inv_sqrt_scalar(sq, f32buf, i32buf)
            coef = k_const * act_a * act_b * inv / sq
            fx, fy, fz = coef * dx, coef * dy, coef * dz
            forces[pa, 0] += fx
            forces[pa, 1] += fy
            forces[pa, 2] += fz
            forces[pb, 0] -= fx
            forces[pb, 1] -= fy
            forces[pb, 2] -= fz


@njit(cache=True)
def run_steps(
    pos, vel, inv_mass,
    cons_i, cons_j, cons_rest, lam,
    t_kind, t_pos, t_rot, t_dims,
    ext_forces,
    mag_particle, mag_act, attached_mask, snap_block_mask,
    k_const, cutoff_sq, contact_sq, snap_sq,
    use_magnets,
    dt, gravity, mu_lat, mu_roll, dither_amp, n_iters, n_steps,
):
    """Advance up to n_steps; returns (steps_done, status).

    Stops early with STATUS_SNAP when an unattached magnet pair comes within
    the snap distance (the caller forms the connection and resumes), or with
    STATUS_NONFINITE if the state diverges.
    """
    n = pos.shape[0]
    n_cons = cons_i.shape[0]
    n_terr = t_kind.shape[0]
    prev = np.empty((n, 3))
    forces = np.zeros((n, 3))
    budget = np.empty(n)
    spent = np.empty(n)
    cn = np.empty((n, 3))
    in_contact = np.empty(n, np.bool_)
    nearest = np.empty(n, np.int64)
    f32buf = np.empty(1, np.float32)
    i32buf = f32buf.view(np.int32)

    for step in range(n_steps):
        # --- forces and prediction ---
        for i in range(n):
            forces[i, 0] = ext_forces[i, 0]
            forces[i, 1] = ext_forces[i, 1]
            forces[i, 2] = ext_forces[i, 2]
        if use_magnets:
            _magnet_forces(
                forces, pos, mag_particle, mag_act, attached_mask,
                k_const, cutoff_sq, contact_sq, f32buf, i32buf,
            )
        for i in range(n):
            w = inv_mass[i]
            if w > 0.0:
                vel[i, 0] += dt * forces[i, 0] * w
                vel[i, 1] += dt * forces[i, 1] * w
                vel[i, 2] += dt * (forces[i, 2] * w - gravity)
            prev[i, 0] = pos[i, 0]
            prev[i, 1] = pos[i, 1]
            prev[i, 2] = pos[i, 2]
            pos[i, 0] += dt * vel[i, 0]
            pos[i, 1] += dt * vel[i, 1]
            pos[i, 2] += dt * vel[i, 2]
            budget[i] = 0.0
            spent[i] = 0.0
            in_contact[i] = False
            nearest[i] = -1

        # --- projection iterations: contact normals, then distance
        # constraints, then the budget-limited friction pass.  Friction runs
        # last so it can veto constraint pushes on anchored particles; a
        # particle whose budget runs out first (the lightly loaded tip)
        # absorbs the remaining constraint motion and slides.
        for it in range(n_iters):
            for i in range(n):
                if inv_mass[i] == 0.0 or n_terr == 0:
                    continue
                if it == 0 or nearest[i] < 0:
                    best = 1e30
                    best_t = -1
                    for t in range(n_terr):
                        sdf, _, _, _ = _point_sdf(
                            t_kind[t], t_pos[t], t_rot[t], t_dims[t],
                            pos[i, 0], pos[i, 1], pos[i, 2],
                        )
                        if sdf < best:
                            best = sdf
                            best_t = t
                    nearest[i] = best_t
                t = nearest[i]
                sdf, nx, ny, nz = _point_sdf(
                    t_kind[t], t_pos[t], t_rot[t], t_dims[t],
                    pos[i, 0], pos[i, 1], pos[i, 2],
                )
                sdf -= _surface_dither(pos[i, 0], pos[i, 1], dither_amp)
                if sdf < 0.0:
                    pos[i, 0] -= sdf * nx
                    pos[i, 1] -= sdf * ny
                    pos[i, 2] -= sdf * nz
                    budget[i] += mu_lat * (-sdf)
                    in_contact[i] = True
                    cn[i, 0], cn[i, 1], cn[i, 2] = nx, ny, nz

            for c in range(n_cons):
                i = cons_i[c]
                j = cons_j[c]
                wi = inv_mass[i]
                wj = inv_mass[j]
                wsum = wi + wj
                if wsum == 0.0:
                    continue
                dx = pos[j, 0] - pos[i, 0]
                dy = pos[j, 1] - pos[i, 1]
                dz = pos[j, 2] - pos[i, 2]
                dist = np.sqrt(dx * dx + dy * dy + dz * dz)
                if dist < _TINY:
                    continue
                if it == 0:
                    # track the worst fresh per-step stretch: a tension
                    # impulse estimate uncontaminated by friction
                    # re-accumulation (compression cannot break magnets)
                    v = (dist - cons_rest[c]) / wsum
                    if v > lam[c]:
                        lam[c] = v
                corr = (dist - cons_rest[c]) / dist
                sx, sy, sz = corr * dx, corr * dy, corr * dz
                fi = wi / wsum
                fj = wj / wsum
                pos[i, 0] += fi * sx
                pos[i, 1] += fi * sy
                pos[i, 2] += fi * sz
                pos[j, 0] -= fj * sx
                pos[j, 1] -= fj * sy
                pos[j, 2] -= fj * sz

            for i in range(n):
                if not in_contact[i]:
                    continue
                avail = budget[i] - spent[i]
                if avail <= 0.0:
                    continue
                ux = pos[i, 0] - prev[i, 0]
                uy = pos[i, 1] - prev[i, 1]
                uz = pos[i, 2] - prev[i, 2]
                un = ux * cn[i, 0] + uy * cn[i, 1] + uz * cn[i, 2]
                tx = ux - un * cn[i, 0]
                ty = uy - un * cn[i, 1]
                tz = uz - un * cn[i, 2]
                tlen = np.sqrt(tx * tx + ty * ty + tz * tz)
                if tlen > _TINY:
                    take = tlen if tlen < avail else avail
                    scale = take / tlen
                    pos[i, 0] -= tx * scale
                    pos[i, 1] -= ty * scale
                    pos[i, 2] -= tz * scale
                    spent[i] += take

        # --- velocity update and rolling resistance ---
        finite = True
        inv_dt = 1.0 / dt
        for i in range(n):
            vel[i, 0] = (pos[i, 0] - prev[i, 0]) * inv_dt
            vel[i, 1] = (pos[i, 1] - prev[i, 1]) * inv_dt
            vel[i, 2] = (pos[i, 2] - prev[i, 2]) * inv_dt
            if in_contact[i] and mu_roll > 0.0:
                vn = (
                    vel[i, 0] * cn[i, 0]
                    + vel[i, 1] * cn[i, 1]
                    + vel[i, 2] * cn[i, 2]
                )
                tx = vel[i, 0] - vn * cn[i, 0]
                ty = vel[i, 1] - vn * cn[i, 1]
                tz = vel[i, 2] - vn * cn[i, 2]
                tlen = np.sqrt(tx * tx + ty * ty + tz * tz)
                if tlen > _TINY:
                    drop = mu_roll * gravity * dt
                    scale = 1.0 - (drop / tlen if drop < tlen else 1.0)
                    vel[i, 0] = vn * cn[i, 0] + tx * scale
                    vel[i, 1] = vn * cn[i, 1] + ty * scale
                    vel[i, 2] = vn * cn[i, 2] + tz * scale
            if not (
                np.isfinite(pos[i, 0])
                and np.isfinite(pos[i, 1])
                and np.isfinite(pos[i, 2])
            ):
                finite = False
        if not finite:
            return step + 1, STATUS_NONFINITE

        # --- snap detection: unattached magnet pair inside snap distance ---
        if use_magnets and snap_sq > 0.0:
            nm = len(mag_particle)
            for a in range(nm):
                if mag_act[a] < 0.5:
                    continue
                pa = mag_particle[a]
                for b in range(a + 1, nm):
                    if snap_block_mask[a, b] or mag_act[b] < 0.5:
                        continue
                    pb = mag_particle[b]
                    dx = pos[pb, 0] - pos[pa, 0]
                    dy = pos[pb, 1] - pos[pa, 1]
                    dz = pos[pb, 2] - pos[pa, 2]
                    if dx * dx + dy * dy + dz * dz <= snap_sq:
                        return step + 1, STATUS_SNAP

    return n_steps, STATUS_OK
