import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from screenlab.geometry import (BoundaryTag, BoxRegion, PatchLayout, PlateShape,
                                ProblemKind, classify_node, patch_area_fraction,
                                patch_contains, plate_contains)

REGION = (0.0, 1.0, 0.0, 1.0)


def layout(eps=0.5, delta=0.1, plate=None):
    return PatchLayout(plate or PlateShape.disk(1.0), eps, delta, REGION)


class TestPlateShape:
    def test_disk_contains_center(self):
        assert plate_contains(PlateShape.disk(1.0), (0.0, 0.0))

    def test_disk_outside(self):
        assert not plate_contains(PlateShape.disk(1.0), (2.0, 0.0))

    def test_square_boundary_is_open(self):
        assert not plate_contains(PlateShape.square(0.5), (0.5, 0.0))

    def test_polygon_contains(self):
        tri = PlateShape.polygon([(0.8, -0.5), (0.5, 0.8), (-0.9, -0.2)])
        assert tri.contains((0.0, 0.0))
        assert not tri.contains((0.9, 0.9))

    def test_polygon_rejects_clockwise(self):
        with pytest.raises(ValueError):
            PlateShape.polygon([(-0.9, -0.2), (0.5, 0.8), (0.8, -0.5)])

    def test_areas(self):
        assert PlateShape.disk(1.0).area == pytest.approx(math.pi)
        assert PlateShape.square(0.5).area == pytest.approx(1.0)
        sq = PlateShape.polygon([(0.5, -0.5), (0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5)])
        assert sq.area == pytest.approx(1.0)

    def test_nonfinite_point_rejected(self):
        with pytest.raises(ValueError):
            PlateShape.disk(1.0).contains((math.nan, 0.0))


class TestPatchContains:
    def test_lattice_center_inside(self):
        # x = (0.2, 0) is the lattice center (2*delta, 0)
        assert patch_contains(layout(), (0.2, 0.0))

    def test_offset_beyond_patch_radius(self):
        # offset 0.06 from the center exceeds delta*eps = 0.05
        assert not patch_contains(layout(), (0.26, 0.0))

    def test_outside_region_raises(self):
        with pytest.raises(ValueError, match="not on"):
            patch_contains(layout(), (2.0, 0.0))

    def test_montecarlo_density_matches_area_fraction(self):
        lay = layout()
        rng = np.random.default_rng(2024)
        n = 2_000_000
        xs = rng.uniform(0.0, 1.0, n)
        ys = rng.uniform(0.0, 1.0, n)
        frac = float(np.mean(lay.contains_many(xs, ys)))
        expected = patch_area_fraction(lay)
        se = math.sqrt(expected * (1 - expected) / n)
        assert abs(frac - expected) <= 3.5 * se

    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99),
           st.integers(-3, 3), st.integers(-3, 3))
    @settings(max_examples=200, deadline=None)
    def test_translation_periodicity(self, x, y, nx, ny):
        lay = layout(delta=0.05)
        tx, ty = x + 2 * lay.delta * nx, y + 2 * lay.delta * ny
        if not (0 <= tx <= 1 and 0 <= ty <= 1):
            return
        a = bool(lay.contains_many(np.array([x]), np.array([y]))[0])
        b = bool(lay.contains_many(np.array([tx]), np.array([ty]))[0])
        assert a == b


class TestAreaFraction:
    def test_disk_half_eps(self):
        assert patch_area_fraction(layout(eps=0.5)) == pytest.approx(math.pi / 16)

    def test_vanishes_with_eps(self):
        vals = [patch_area_fraction(layout(eps=e)) for e in (0.5, 0.1, 0.01)]
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] < 1e-4

    def test_independent_of_delta(self):
        assert patch_area_fraction(layout(delta=0.1)) == patch_area_fraction(layout(delta=0.25))


class TestBoxRegion:
    def test_spacing_must_divide(self):
        with pytest.raises(ValueError, match="does not divide"):
            BoxRegion.make((0, 0, -1), (2, 2, 0), 0.3)

    def test_volumes_sum_to_box_volume(self):
        box = BoxRegion.make((0, 0, -1), (2, 2, 0), 0.25)
        assert box.node_volumes().sum() == pytest.approx(4.0)

    def test_face_areas_sum(self):
        box = BoxRegion.make((0, 0, -1), (2, 2, 0), 0.25)
        assert box.top_face_areas().sum() == pytest.approx(4.0)

    def test_anisotropic_spacing(self):
        box = BoxRegion.make((0, 0, -1), (2, 2, 0), (0.25, 0.5, 0.125))
        assert box.shape == (9, 5, 9)


class TestClassifyNode:
    def setup_method(self):
        self.box = BoxRegion.make((0, 0, -1), (2, 2, 0), 0.1)
        self.lay = PatchLayout(PlateShape.disk(1.0), 0.5, 0.1, self.box.top_face_rect())

    def test_interior(self):
        tag = classify_node(self.lay, self.box, (5, 5, 5), ProblemKind.ALTERNATING)
        assert tag is BoundaryTag.INTERIOR

    def test_gamma2_is_outer_dirichlet(self):
        tag = classify_node(self.lay, self.box, (0, 5, 5), ProblemKind.ALTERNATING)
        assert tag is BoundaryTag.OUTER_DIRICHLET

    def test_lattice_center_window_in_neumann_screen_mode(self):
        nz = self.box.shape[2]
        # node (2, 2) * 0.1 = (0.2, 0.2) is the lattice center (2 delta, 2 delta)
        tag = classify_node(self.lay, self.box, (2, 2, nz - 1), ProblemKind.NEUMANN_SCREEN)
        assert tag is BoundaryTag.WINDOW_INTERIOR

    def test_patch_node_modes(self):
        nz = self.box.shape[2]
        assert classify_node(self.lay, self.box, (2, 2, nz - 1),
                             ProblemKind.ALTERNATING) is BoundaryTag.DIRICHLET_PATCH
        assert classify_node(self.lay, self.box, (2, 2, nz - 1),
                             ProblemKind.DIRICHLET_SCREEN) is BoundaryTag.DIRICHLET_PATCH

    def test_complement_modes(self):
        nz = self.box.shape[2]
        # (0.5, 0.5) sits between lattice centers, outside every patch
        node = (5, 5, nz - 1)
        assert classify_node(self.lay, self.box, node,
                             ProblemKind.ALTERNATING) is BoundaryTag.ROBIN_COMPLEMENT
        assert classify_node(self.lay, self.box, node,
                             ProblemKind.NEUMANN_SCREEN) is BoundaryTag.NEUMANN_SCREEN
        assert classify_node(self.lay, self.box, node,
                             ProblemKind.DIRICHLET_SCREEN) is BoundaryTag.WINDOW_INTERIOR

    def test_partition_is_exhaustive_on_top_face(self):
        nz = self.box.shape[2]
        xs = self.box.axis_nodes(0)
        for i in range(1, len(xs) - 1, 3):
            tag = classify_node(self.lay, self.box, (i, 7, nz - 1), ProblemKind.ALTERNATING)
            assert tag in (BoundaryTag.DIRICHLET_PATCH, BoundaryTag.ROBIN_COMPLEMENT)

    def test_top_face_requirement(self):
        shifted = BoxRegion.make((0, 0, -2), (2, 2, -1), 0.1)
        with pytest.raises(ValueError, match="configuration error"):
            classify_node(self.lay, shifted, (1, 1, 1), ProblemKind.ALTERNATING)
