import math

import numpy as np
import pytest

from trusslink.sim.terrain import (
    EnvironmentSpec,
    TerrainPrimitive,
    _validate_no_contradictory_overlap,
    build_environment,
    rotation_about_x,
    stage_one_region,
    surface_height_at,
)


class TestPrimitives:
    def test_dimension_validation(self):
        with pytest.raises(ValueError):
            TerrainPrimitive("box", dimensions=(1, -1, 1))
        with pytest.raises(ValueError):
            TerrainPrimitive("cylinder", dimensions=(0, 1))
        with pytest.raises(ValueError):
            TerrainPrimitive("box", dimensions=(1, 1))
        with pytest.raises(ValueError):
            TerrainPrimitive("sphere", dimensions=(1,))

    def test_plane_has_up_normal(self):
        plane = TerrainPrimitive("plane")
        assert np.allclose(plane.top_normal(), [0, 0, 1])


class TestEmptyAndSlope:
    def test_empty_spec_is_ground_plane_only(self):
        prims = build_environment(EnvironmentSpec(kind="empty"))
        assert len(prims) == 1 and prims[0].kind == "plane"

    def test_slope_single_inclined_box(self):
        prims = build_environment(EnvironmentSpec(kind="slope", walls=False))
        boxes = [p for p in prims if p.kind == "box"]
        assert len(boxes) == 1
        normal = boxes[0].top_normal()
        tilt = math.degrees(math.acos(np.clip(normal @ [0, 0, 1], -1, 1)))
        assert tilt == pytest.approx(10.0, abs=0.01)

    def test_slope_descends_toward_positive_y(self):
        prims = build_environment(EnvironmentSpec(kind="slope", walls=False))
        near = surface_height_at(prims, 0.0, -1.0)
        far = surface_height_at(prims, 0.0, 1.0)
        assert far < near


class TestFourStage:
    def test_counts(self):
        prims = build_environment(EnvironmentSpec(kind="four_stage"))
        boxes = [p for p in prims if p.kind == "box"]
        cylinders = [p for p in prims if p.kind == "cylinder"]
        assert len(boxes) >= 6
        assert len(cylinders) == 1

    def test_monotonically_descending_stage_surfaces(self):
        spec = EnvironmentSpec(kind="four_stage", walls=False, cylinder_stage=0)
        prims = build_environment(spec)
        y = 0.05
        heights = []
        for length, slope in zip(spec.stage_lengths, spec.stage_slopes_deg):
            dy = length * math.cos(math.radians(slope))
            heights.append(surface_height_at(prims, 0.0, y + dy / 2))
            y += dy
        assert all(a > b for a, b in zip(heights, heights[1:]))

    def test_ledge_height_between_stage_two_and_three(self):
        spec = EnvironmentSpec(kind="four_stage", walls=False, cylinder_stage=0)
        prims = build_environment(spec)
        y2 = sum(
            L * math.cos(math.radians(s))
            for L, s in zip(spec.stage_lengths[:2], spec.stage_slopes_deg[:2])
        )
        before = surface_height_at(prims, 0.0, y2 - 0.02)
        after = surface_height_at(prims, 0.0, y2 + 0.02)
        drop = before - after
        assert drop == pytest.approx(spec.ledge_height, abs=0.02)

    def test_contradictory_overlap_rejected(self):
        a = TerrainPrimitive("box", position=np.zeros(3), dimensions=(1, 1, 0.1))
        b = TerrainPrimitive(
            "box", position=np.array([0, 0.2, 0.5]), dimensions=(1, 1, 0.1)
        )
        with pytest.raises(ValueError):
            _validate_no_contradictory_overlap(
                [(a, 0.0, 1.0, 0.0, 0.0), (b, 0.2, 1.2, 0.5, 0.5)]
            )

    def test_spec_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValueError):
            EnvironmentSpec.from_dict({"kind": "slope", "bogus": 1})

    def test_stage_one_region_inside_stage(self):
        spec = EnvironmentSpec(kind="four_stage")
        (x0, x1), (y0, y1) = stage_one_region(spec)
        assert -spec.width / 2 < x0 < x1 < spec.width / 2
        assert 0 < y0 < y1 < spec.stage_lengths[0]


class TestSurfaceQuery:
    def test_plane_height(self):
        prims = [TerrainPrimitive("plane")]
        assert surface_height_at(prims, 0.3, -0.2) == pytest.approx(0.0, abs=1e-3)

    def test_box_top(self):
        prims = [
            TerrainPrimitive(
                "box", position=np.array([0, 0, 0.25]), dimensions=(1, 1, 0.5)
            )
        ]
        assert surface_height_at(prims, 0.0, 0.0) == pytest.approx(0.5, abs=1e-3)

    def test_cylinder_top(self):
        prims = [
            TerrainPrimitive(
                "cylinder", position=np.array([0, 0, 0.25]), dimensions=(0.1, 0.5)
            )
        ]
        assert surface_height_at(prims, 0.0, 0.0) == pytest.approx(0.5, abs=1e-3)
        assert surface_height_at(prims, 0.5, 0.0) == -math.inf
