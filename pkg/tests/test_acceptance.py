"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s to see them).  Tolerances are pinned here.

The formation-study criterion runs 200 seeded runs of 20 simulated minutes
and takes tens of wall minutes (parallelized over the machine's cores); set
TRUSSLINK_ACCEPT_RUNS to shrink it during development.
"""

import json
import math
import os
import random
from pathlib import Path

import numpy as np
import pytest

from trusslink import rmlp
from trusslink.analysis import estimate_speed, speed_table
from trusslink.experiments import (
    BODY_LENGTHS,
    ExperimentConfig,
    run_random_formation,
    run_speed_trial,
)
from trusslink.firmware import BatteryModel, LinkFirmware, Phase, ServoController, bang_bang_step
from trusslink.magnets import (
    MAGNET_DIAMETER,
    ForceModel,
    MagnetState,
    accumulate_forces,
    calibrate_k,
    fast_inv_sqrt,
    magnet_force,
    pair_candidates,
)
from trusslink.morphology import (
    StructureGraph,
    structure_graph_from_scene,
    wl_hash,
    wl_hash_single_graph,
)
from trusslink.rmlp import Command, FrameParser, FramePackage, Hello, TimeEpoch, Update, decode, encode
from trusslink.server import ServerSession
from trusslink.sim.world import MAX_STROKE
from trusslink.toppling import achieved_expansion_ratio, min_expansion_ratio_for_topple

GOLDEN = json.loads(
    (Path(__file__).parent / "data" / "rmlp_golden.json").read_text()
)

ACCEPT_RUNS = int(os.environ.get("TRUSSLINK_ACCEPT_RUNS", "200"))
ACCEPT_JOBS = int(os.environ.get("TRUSSLINK_ACCEPT_JOBS", str(os.cpu_count() or 1)))


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {status}: {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


class TestMagnetForceLaw:
    def test_force_law(self):
        rng = np.random.default_rng(101)
        model = ForceModel()
        worst = 0.0
        for _ in range(1000):
            a1, a2 = rng.uniform(0.05, 1.0, 2)
            r = rng.uniform(model.contact_distance, 0.14)
            f = magnet_force(
                MagnetState([0, 0, 0], a1), MagnetState([r, 0, 0], a2), model
            )
            expected = model.k * a1 * a2 / r**2
            worst = max(worst, abs(np.linalg.norm(f) - expected) / expected)
        beyond = magnet_force(
            MagnetState([0, 0, 0], 1.0), MagnetState([0.1401, 0, 0], 1.0), model
        )
        calibrated = magnet_force(
            MagnetState([0, 0, 0], 1.0),
            MagnetState([MAGNET_DIAMETER, 0, 0], 1.0),
            ForceModel(k=calibrate_k(MAGNET_DIAMETER, 13.7)),
        )
        ok = (
            worst <= 0.005
            and np.all(beyond == 0.0)
            and abs(np.linalg.norm(calibrated) - 13.7) <= 1e-6
        )
        report(
            "magnet force law (1000 draws <=0.5%, zero beyond cutoff, 13.7 N at contact)",
            ok, f"worst rel err {worst:.2e}",
        )


class TestKernelOracle:
    def test_accumulate_and_pairs_match_oracles(self):
        rng = np.random.default_rng(77)
        model = ForceModel()
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(2, 101))
            mags = [
                MagnetState(rng.uniform(0, 0.5, 3), rng.uniform(0, 1), (i, 0))
                for i, n_ in zip(range(n), range(n))
            ]
            got = accumulate_forces(mags, model)
            want = np.zeros((n, 3))
            gross = np.zeros(n)
            for i in range(n):
                for j in range(i + 1, n):
                    d = mags[j].position - mags[i].position
                    dist = float(np.linalg.norm(d))
                    if dist > model.cutoff:
                        continue
                    eff = model.contact_distance if dist < 1e-6 else dist
                    f = model.k * mags[i].activation * mags[j].activation / eff**3 * d
                    want[i] += f
                    want[j] -= f
                    gross[i] += np.linalg.norm(f)
                    gross[j] += np.linalg.norm(f)
            scale = np.maximum(gross, 1e-12)[:, None]
            worst = max(worst, float((np.abs(got - want) / scale).max()))
            got_pairs = {
                (p.index_i, p.index_j) for p in pair_candidates(mags, model)
            }
            brute = {
                (i, j)
                for i in range(n)
                for j in range(i + 1, n)
                if np.linalg.norm(mags[i].position - mags[j].position) <= model.cutoff
            }
            assert got_pairs == brute
        report(
            "kernel oracle equivalence (100 scenes <=100 magnets, exact pair filter)",
            worst <= 0.005, f"worst component err {worst:.2e} of gross",
        )


class TestFastInvSqrt:
    def test_sweep(self):
        x = np.logspace(-4, 4, 10_000)
        rel = np.abs(fast_inv_sqrt(x) * np.sqrt(x) - 1.0)
        worst = float(rel.max())
        report("fast inverse sqrt (1e4 log points, rel err <=0.2%)",
               worst <= 0.002, f"max rel err {worst:.2e}")


class TestProtocol:
    def test_round_trip_flips_and_fuzz(self):
        rnd = random.Random(999)
        # 10^4 randomized packages of every type
        for _ in range(10_000):
            for pkg in (
                Hello(rnd.randrange(2**32)),
                TimeEpoch(rnd.randrange(2**64)),
                Update(rnd.randrange(2**16), rnd.randrange(2**16),
                       rnd.randrange(2**16), rnd.randrange(2**8)),
                Command(rnd.randrange(2**8), rnd.randrange(2**8),
                        rnd.randrange(2**16), rnd.randrange(2**16)),
            ):
                if decode(encode(pkg)) != pkg:
                    report("protocol", False, f"round trip failed for {pkg}")
        # exhaustive single-bit corruption of every golden vector
        detected = total = 0
        for entry in GOLDEN.values():
            frame = bytes.fromhex(entry["hex"])
            for bit in range(len(frame) * 8):
                corrupt = bytearray(frame)
                corrupt[bit // 8] ^= 1 << (bit % 8)
                total += 1
                try:
                    decode(bytes(corrupt))
                except rmlp.DecodeError:
                    detected += 1
        # framing fuzz: garbage prefixes and split boundaries
        recovered_all = True
        for trial in range(40):
            expected, stream = [], bytearray()
            garbage = bytearray()
            while len(garbage) < 120:
                size = rnd.randrange(0, 24)
                piece = bytearray([size, rnd.randrange(256)])
                piece += bytes(rnd.randrange(256) for _ in range(size + 2))
                garbage += piece
                if rnd.random() < 0.5:
                    break
            stream += garbage
            for _ in range(rnd.randrange(1, 6)):
                pkg = Hello(rnd.randrange(2**32))
                frame = bytearray(encode(pkg))
                if rnd.random() < 0.3:
                    frame[rnd.randrange(1, len(frame))] ^= 1 << rnd.randrange(8)
                else:
                    expected.append(pkg)
                stream += frame
            parser = FrameParser()
            got = []
            i = 0
            while i < len(stream):
                step = rnd.randrange(1, 7)
                for event in parser.feed(bytes(stream[i : i + step])):
                    if isinstance(event, FramePackage):
                        got.append(event.package)
                i += step
            if got != expected:
                recovered_all = False
        ok = detected == total and recovered_all
        report(
            "protocol (1e4 round trips/type, exhaustive bit-flip detection, framing fuzz)",
            ok, f"bit flips detected {detected}/{total}",
        )


class TestHandshakeAndDeath:
    def test_virtual_clock_session(self):
        # handshake to running
        session = ServerSession(epoch_unix=1_700_000_000, now=0.0)
        fw = LinkFirmware(device_id=11)
        reply = session.on_bytes(fw.on_connected(0.0), 0.0)
        fw.on_bytes(reply, 0.0)
        running = fw.phase == Phase.RUNNING and session.phase == "running"
        # 10 seconds of silence closes the session (virtual clock)
        silent = ServerSession(epoch_unix=0, now=0.0)
        silent.on_bytes(LinkFirmware(9).on_connected(0.0), 0.0)
        closed = silent.poll(9.99) and not silent.poll(10.01)
        # dead-link sequence: both activations to 0 and servos to 0
        dying = LinkFirmware(5, battery=BatteryModel(voltage=6.3))
        dying.servo_a.actual_ext = 0.06
        dying.servo_b.actual_ext = 0.04
        t = 0.0
        for _ in range(int(30 / 0.05)):
            dying.tick(t, 0.05)
            t += 0.05
        dead_ok = (
            dying.dead
            and dying.servo_a.actual_ext == 0.0
            and dying.servo_b.actual_ext == 0.0
            and dying.activation(0) == 0.0
            and dying.activation(1) == 0.0
        )
        report(
            "handshake conformance (running state, 10 s timeout, death sequence)",
            running and closed and dead_ok,
        )


class TestBangBang:
    def test_deadband_and_stroke_timing(self):
        servo = ServoController(actual_ext=0.030)
        servo.set_target(0.034)
        for _ in range(400):
            bang_bang_step(servo, 0.05)
        no_motion = servo.actual_ext == 0.030
        timer = ServoController(actual_ext=0.0)
        timer.set_target(MAX_STROKE)
        ticks = 0
        while timer.actual_ext < MAX_STROKE - 1e-12 and ticks < 24_000:
            bang_bang_step(timer, 1 / 240)
            ticks += 1
        duration = ticks / 240
        ok = no_motion and abs(duration - 15.0) <= 1.0
        report(
            "bang-bang semantics (5 mm deadband, 75 mm stroke in 15±1 s)",
            ok, f"stroke took {duration:.2f} s",
        )


class TestMorphologyAcceptance:
    def test_counts_invariance_collision(self):
        def graph_of(pairs, n):
            return StructureGraph(n, [(i, u, v) for i, (u, v) in enumerate(pairs)])

        triangle = graph_of([(0, 1), (1, 2), (2, 0)], 3)
        star = graph_of([(0, 1), (0, 2), (0, 3)], 4)
        tetra = graph_of(
            [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], 4
        )
        counts_ok = (
            (triangle.n_vertices, len(triangle.edges)) == (3, 3)
            and (star.n_vertices, len(star.edges)) == (4, 3)
            and (tetra.n_vertices, len(tetra.edges)) == (4, 6)
        )
        rnd = random.Random(7)
        invariant = True
        for graph in (triangle, star, tetra):
            base = wl_hash(graph)
            for _ in range(100):
                perm = list(range(graph.n_vertices))
                rnd.shuffle(perm)
                relabeled = StructureGraph(
                    graph.n_vertices,
                    [(lid, perm[u], perm[v]) for lid, u, v in graph.edges],
                )
                if wl_hash(relabeled) != base:
                    invariant = False
        hexagon = graph_of([(i, (i + 1) % 6) for i in range(6)], 6)
        two_triangles = graph_of(
            [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)], 6
        )
        collision = wl_hash_single_graph(hexagon) == wl_hash_single_graph(two_triangles)
        resolved = wl_hash(hexagon) != wl_hash(two_triangles)
        report(
            "morphology (structure counts, WL invariance x100, collision reproduced and resolved)",
            counts_ok and invariant and collision and resolved,
        )


class TestGeometryAcceptance:
    def test_topple_ratio(self):
        ratio = min_expansion_ratio_for_topple()
        achieved = achieved_expansion_ratio(0.28, 0.28 + 2 * MAX_STROKE)
        ok = abs(ratio - 0.415) <= 0.005 and abs(achieved - 0.536) <= 0.001 and achieved > 0.53
        report(
            "geometry (minimum ratio 0.415±0.005, achieved 0.536 over 53%)",
            ok, f"minimum {ratio:.4f}, achieved {achieved:.4f}",
        )


class TestSpeedMethod:
    def test_synthetic_and_windowing(self):
        t = np.arange(0.0, 12 * 36.0, 1.0)
        y = 0.01 * t
        rec = estimate_speed(t, y, cycle_time=36.0, body_length=0.28)
        # stdev is zero up to double-precision summation noise
        exact = abs(rec.mean - 1.2857) <= 2e-4 and rec.stdev <= 1e-12
        # windowing against a closed-form least-squares oracle
        rng = np.random.default_rng(3)
        ty = np.arange(0.0, 10 * 36.0, 0.5)
        yy = 0.004 * ty + rng.normal(0, 1e-3, len(ty))
        rec2 = estimate_speed(ty, yy, 36.0, 0.28)
        cycles = ty / 36.0
        windows_ok = True
        for speed, start in zip(rec2.window_speeds, np.arange(0, 7, 2.0)):
            mask = (cycles >= start - 1e-9) & (cycles <= start + 4 + 1e-9)
            tt, yv = ty[mask], yy[mask]
            n = len(tt)
            slope = (n * (tt * yv).sum() - tt.sum() * yv.sum()) / (
                n * (tt * tt).sum() - tt.sum() ** 2
            )
            if abs(speed - slope * 36.0 / 0.28) > 1e-9:
                windows_ok = False
        report(
            "speed method (synthetic 1.2857 BL/cycle exactly, windows match oracle)",
            exact and windows_ok, f"mean {rec.mean:.5f} ± {rec.stdev:.2e}",
        )

    def test_every_gait_positive_on_slope(self):
        records = []
        ok = True
        for topology in BODY_LENGTHS:
            cycles = 10 if topology == "ratchet tetrahedron" else 6
            record, trajectory = run_speed_trial(topology, n_cycles=cycles)
            records.append(record)
            if record.insufficient_data or record.mean <= 0.0:
                ok = False
        table = speed_table(records)
        print("\n" + table)
        report("speed trials (positive net displacement for every gait on the 10° slope)",
               ok)


class TestFormationStudy:
    def test_formation_ordering(self):
        config = ExperimentConfig(
            seed=2024, n_runs=ACCEPT_RUNS, run_minutes=20.0, sample_interval=0.5
        )
        result = run_random_formation(config, n_jobs=ACCEPT_JOBS)
        p_single = result.probability("single link")
        # "any two-link connection": two links ever joined during the run
        p_pair = result.probability("connected")
        p_diamond = result.probability("diamond-with-tail")
        p_tetra = result.probability("tetrahedron")
        simultaneous = sum(
            1
            for names in result.per_run_names
            if "3-pointed star" in names and "triangle" in names
        ) / result.n_runs
        detail = (
            f"single {p_single:.3f}, pair {p_pair:.3f}, diamond {p_diamond:.3f}, "
            f"star+triangle {simultaneous:.3f}, tetra {p_tetra:.3f}, "
            f"runs {result.n_runs}"
        )
        ok = (
            p_single == 1.0
            and p_pair >= 0.9
            and p_diamond > simultaneous
            and p_tetra <= 0.01
        )
        report("formation study (ordering over seeded runs)", ok, detail)


class TestDeterminism:
    def test_logs_and_tables_byte_identical(self, tmp_path):
        from trusslink.cli import main

        configs = Path(__file__).parent.parent / "configs"
        logs = []
        for name in ("a.log", "b.log"):
            out = tmp_path / name
            assert main(
                ["sim", "run", str(configs / "single_flat.yaml"), "crawl",
                 "--cycles", "2", "--out", str(out)]
            ) == 0
            logs.append(out.read_bytes())
        tables = []
        for name in ("a.tsv", "b.tsv"):
            out = tmp_path / name
            assert main(
                ["sim", "random", "--runs", "2", "--seed", "4",
                 "--minutes", "0.2", "--out", str(out)]
            ) == 0
            tables.append(out.read_bytes())
        ok = logs[0] == logs[1] and tables[0] == tables[1]
        report("end-to-end determinism (byte-identical logs and tables)", ok)
