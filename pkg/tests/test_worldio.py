import numpy as np
import pytest

from trusslink.gaits import compile_gait, run_gait
from trusslink.sim import TerrainPrimitive
from trusslink.worldio import (
    WorldSpec,
    build_world,
    read_trajectory,
    write_trajectory,
)

WORLD_YAML = """
world:
  rng_seed: 3
  lateral_friction: 0.89
environment:
  kind: slope
  slope_deg: 10.0
  walls: false
magnets:
  cutoff: 0.14
topology: triangle
"""


class TestWorldSpec:
    def test_yaml_round_trip(self, tmp_path):
        path = tmp_path / "world.yaml"
        path.write_text(WORLD_YAML)
        spec = WorldSpec.from_yaml(path)
        assert spec.config.rng_seed == 3
        assert spec.environment.slope_deg == 10.0
        assert spec.topology == "triangle"
        out = tmp_path / "copy.yaml"
        spec.to_yaml(out)
        again = WorldSpec.from_yaml(out)
        assert again.config == spec.config
        assert again.environment == spec.environment

    def test_build_world_with_topology(self, tmp_path):
        path = tmp_path / "world.yaml"
        path.write_text(WORLD_YAML)
        world, roles = build_world(WorldSpec.from_yaml(path))
        assert world.n_links == 3
        assert roles.topology == "triangle"

    def test_build_world_with_explicit_links(self):
        spec = WorldSpec.from_dict(
            {
                "environment": {"kind": "empty"},
                "links": [
                    {"id": 1, "x": 0.0, "y": 0.0, "heading": 0.0},
                    {"id": 2, "x": 1.0, "y": 1.0, "heading": 1.0},
                ],
            }
        )
        world, roles = build_world(spec)
        assert world.link_ids == [1, 2]
        assert roles is None

    def test_unknown_topology_rejected(self):
        spec = WorldSpec.from_dict(
            {"environment": {"kind": "empty"}, "topology": "dodecahedron"}
        )
        with pytest.raises(ValueError):
            build_world(spec)


class TestTrajectoryLog:
    @staticmethod
    def small_trajectory():
        from trusslink.sim import SimWorld
        from trusslink.structures import assemble_single_link

        world = SimWorld(terrain=[TerrainPrimitive("plane")])
        roles = assemble_single_link(world, [1])
        world.step_magnets(120)
        script = compile_gait("single link", roles)
        return world, run_gait(world, script, roles, n_cycles=1, sample_period=2.0)

    def test_write_read_round_trip(self, tmp_path):
        world, trajectory = self.small_trajectory()
        path = tmp_path / "run.log"
        write_trajectory(path, trajectory)
        log = read_trajectory(path)
        assert log.link_ids == [1]
        assert len(log.times) == len(trajectory.times)
        for got_t, want_t in zip(log.times, trajectory.times):
            assert got_t == pytest.approx(want_t, abs=1e-9)
        want = np.round(np.array(trajectory.tips), 9)
        assert np.allclose(log.tips, want, atol=1e-9)

    def test_logs_are_byte_identical_for_identical_runs(self, tmp_path):
        path_a, path_b = tmp_path / "a.log", tmp_path / "b.log"
        _, first = self.small_trajectory()
        write_trajectory(path_a, first)
        _, second = self.small_trajectory()
        write_trajectory(path_b, second)
        assert path_a.read_bytes() == path_b.read_bytes()

    def test_header_and_format_documented(self, tmp_path):
        _, trajectory = self.small_trajectory()
        path = tmp_path / "run.log"
        write_trajectory(path, trajectory)
        lines = path.read_text().splitlines()
        assert lines[0] == "# trusslink trajectory v1"
        assert "sim_time link_id" in lines[1]
        assert len(lines[2].split()) == 12

    def test_empty_log_rejected(self, tmp_path):
        path = tmp_path / "empty.log"
        path.write_text("# trusslink trajectory v1\n")
        with pytest.raises(ValueError):
            read_trajectory(path)
