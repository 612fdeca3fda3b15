"""Command-line interface.

Subcommands:
  sim run <world> <script>     headless gait run, writes a trajectory log
  sim random --runs N --seed S randomized formation study, writes a table
  analyze speed <log>          windowed-regression speed analysis
  serve --port P [--ws-port Q] control server (+ integrated sim with --world)
  links spawn N                launch N emulated link clients
  geometry topple-ratio        minimum expansion ratio for toppling
"""

from __future__ import annotations

import argparse
import signal
import sys
import time

from . import analysis, experiments, worldio
from .gaits import compile_gait, run_gait, topple_script
from .morphology import default_catalog
from .sim.world import MAX_STROKE
from .toppling import achieved_expansion_ratio, min_expansion_ratio_for_topple


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trusslink")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", help="headless simulation runs")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True)

    run = sim_sub.add_parser("run", help="run a gait script in a world")
    run.add_argument("world", help="world YAML file")
    run.add_argument("script", help="gait name (crawl|rotate_ccw|rotate_cw|topple)")
    run.add_argument("--cycles", type=int, default=3)
    run.add_argument("--out", default="trajectory.log")

    rand = sim_sub.add_parser("random", help="randomized formation study")
    rand.add_argument("--runs", type=int, default=200)
    rand.add_argument("--seed", type=int, default=0)
    rand.add_argument("--minutes", type=float, default=20.0)
    rand.add_argument("--links", type=int, default=6)
    rand.add_argument("--jobs", type=int, default=1)
    rand.add_argument("--out", default="formation.tsv")

    analyze = sub.add_parser("analyze", help="analysis of recorded data")
    analyze_sub = analyze.add_subparsers(dest="analyze_command", required=True)
    speed = analyze_sub.add_parser("speed", help="speed from a trajectory log")
    speed.add_argument("log")
    speed.add_argument("--cycle-time", type=float, default=36.0)
    speed.add_argument("--body-length", type=float, default=0.28)
    speed.add_argument("--z-threshold", type=float, default=-2.0)

    serve = sub.add_parser("serve", help="run the control server")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=9700)
    serve.add_argument("--ws-port", type=int, default=9701)
    serve.add_argument("--world", help="world YAML: run the integrated sim")
    serve.add_argument("--speed", type=float, default=1.0,
                       help="sim seconds per wall second in integrated mode")

    links = sub.add_parser("links", help="emulated link clients")
    links_sub = links.add_subparsers(dest="links_command", required=True)
    spawn = links_sub.add_parser("spawn", help="launch N emulated links")
    spawn.add_argument("count", type=int)
    spawn.add_argument("--host", default="127.0.0.1")
    spawn.add_argument("--port", type=int, default=9700)
    spawn.add_argument("--first-id", type=int, default=1)

    geometry = sub.add_parser("geometry", help="design geometry computations")
    geometry_sub = geometry.add_subparsers(dest="geometry_command", required=True)
    geometry_sub.add_parser("topple-ratio", help="minimum expansion ratio")

    return parser


def _cmd_sim_run(args) -> int:
    spec = worldio.WorldSpec.from_yaml(args.world)
    world, roles = worldio.build_world(spec)
    if roles is None:
        print("world file must declare a topology for a gait run", file=sys.stderr)
        return 2
    world.step_magnets(240)
    if args.script == "topple":
        script = topple_script(roles)
    else:
        script = compile_gait(roles.topology, roles, args.script)
    trajectory = run_gait(world, script, roles, n_cycles=args.cycles)
    worldio.write_trajectory(args.out, trajectory)
    displacement = trajectory.net_displacement()
    print(f"wrote {args.out}: {len(trajectory.times)} samples, "
          f"net displacement ({displacement[0]:+.3f}, {displacement[1]:+.3f}) m")
    if trajectory.truncated:
        print("trajectory truncated: " + "; ".join(e[1] for e in trajectory.events))
    return 0


def _cmd_sim_random(args) -> int:
    config = experiments.ExperimentConfig(
        seed=args.seed, n_runs=args.runs, run_minutes=args.minutes,
        n_links=args.links,
    )
    result = experiments.run_random_formation(config, n_jobs=args.jobs)
    catalog = default_catalog()
    table = analysis.formation_table(
        result, catalog.names(), analysis.catalog_hashes(catalog)
    )
    with open(args.out, "w") as fh:
        fh.write(table)
    print(table, end="")
    print(f"wrote {args.out}")
    return 0


def _cmd_analyze_speed(args) -> int:
    log = worldio.read_trajectory(args.log)
    centroids = log.centroids()
    record = analysis.estimate_speed(
        log.times, centroids[:, 1],
        cycle_time=args.cycle_time, body_length=args.body_length,
        heights=centroids[:, 2], z_threshold=args.z_threshold,
        topology=args.log,
    )
    print(analysis.speed_table([record]), end="")
    if record.insufficient_data:
        print("insufficient data: need at least four cycles", file=sys.stderr)
        return 1
    return 0


def _cmd_serve(args) -> int:
    from .serve import ServeRuntime
    from .server import RmlpServer

    if args.world:
        spec = worldio.WorldSpec.from_yaml(args.world)
        world, roles = worldio.build_world(spec)
        world.step_magnets(240)
        runtime = ServeRuntime(
            world, roles, rmlp_port=args.port, ws_port=args.ws_port,
            host=args.host, speed=args.speed,
        ).start()
        print(f"serving rmlp on {args.host}:{runtime.server.port}, "
              f"ws on {args.host}:{runtime.bridge.port}", flush=True)
        try:
            signal.pause()
        except (KeyboardInterrupt, AttributeError):
            pass
        finally:
            runtime.stop()
        return 0
    server = RmlpServer(host=args.host, port=args.port).start()
    print(f"serving rmlp on {args.host}:{server.port}", flush=True)
    try:
        signal.pause()
    except (KeyboardInterrupt, AttributeError):
        pass
    finally:
        server.stop()
    return 0


def _cmd_links_spawn(args) -> int:
    from .netclient import LinkClient

    clients = [
        LinkClient(args.first_id + k, host=args.host, port=args.port).start()
        for k in range(args.count)
    ]
    print(f"spawned {len(clients)} emulated links -> {args.host}:{args.port}", flush=True)
    try:
        while True:
            time.sleep(1.0)
    except KeyboardInterrupt:
        pass
    finally:
        for client in clients:
            client.stop()
    return 0


def _cmd_geometry_topple_ratio(_args) -> int:
    ratio = min_expansion_ratio_for_topple()
    achieved = achieved_expansion_ratio(0.28, 0.28 + 2 * MAX_STROKE)
    print(f"minimum expansion ratio for toppling: {ratio:.4f}")
    print(f"achieved design ratio (0.28 m -> 0.43 m): {achieved:.4f} (over 53%)")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "sim" and args.sim_command == "run":
        return _cmd_sim_run(args)
    if args.command == "sim" and args.sim_command == "random":
        return _cmd_sim_random(args)
    if args.command == "analyze" and args.analyze_command == "speed":
        return _cmd_analyze_speed(args)
    if args.command == "serve":
        return _cmd_serve(args)
    if args.command == "links" and args.links_command == "spawn":
        return _cmd_links_spawn(args)
    if args.command == "geometry" and args.geometry_command == "topple-ratio":
        return _cmd_geometry_topple_ratio(args)
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
