import math

import numpy as np
import pytest

from screenlab.capacity import (PanelMesh, assemble_single_layer, far_field_probe,
                                mesh_plate, plate_capacity)
from screenlab.geometry import PlateShape

TWO_PI = 2.0 * math.pi

# Self-convergence golden value: Richardson extrapolation of the square plate
# (half-side 1) over levels {3, 4, 5}, frozen before the main build.
SQUARE_GOLDEN = 0.733739


class TestSelfIntegrals:
    def test_unit_panel_self_term_positive(self):
        mesh = mesh_plate(PlateShape.square(0.5), 0)
        assert np.all(mesh.self_integrals > 0)

    def test_rectangle_self_term_against_subdivision_oracle(self):
        # integral of 1/(2 pi r) over a rectangle about its centroid:
        # closed form vs brute-force midpoint quadrature
        from screenlab.capacity import _polygon_inv_r_integral
        a, b = 0.7, 0.3
        verts = np.array([[-a, -b], [a, -b], [a, b], [-a, b]])
        closed = _polygon_inv_r_integral(np.zeros(2), verts) / TWO_PI
        exact = 2.0 * (a * math.asinh(b / a) + b * math.asinh(a / b)) / math.pi
        assert closed == pytest.approx(exact, rel=1e-12)
        m = 600
        X, Y = np.meshgrid(2 * a * ((np.arange(m) + 0.5) / m - 0.5),
                           2 * b * ((np.arange(m) + 0.5) / m - 0.5))
        oracle = np.sum(1.0 / (TWO_PI * np.hypot(X, Y))) * (4 * a * b) / m ** 2
        assert closed == pytest.approx(oracle, rel=2e-3)

    def test_two_distant_panels_far_field(self):
        d = 50.0
        cents = np.array([[0.0, 0.0], [d, 0.0]])
        areas = np.array([1.0, 1.0])
        mesh = PanelMesh(cents, areas, np.full(2, 0.5))
        S = assemble_single_layer(mesh)
        assert S[0, 1] == pytest.approx(1.0 / (TWO_PI * d), rel=1e-12)

    def test_area_weighted_symmetry(self):
        mesh = mesh_plate(PlateShape.disk(1.0), 1)
        S = assemble_single_layer(mesh)
        a = mesh.areas
        left = a[:, None] * S
        assert np.max(np.abs(left - left.T)) <= 1e-12 * np.max(np.abs(left))

    def test_degenerate_panel_rejected(self):
        with pytest.raises(ValueError, match="zero-area"):
            PanelMesh(np.zeros((1, 2)), np.zeros(1), np.zeros(1))


class TestPlateCapacity:
    def test_disk_golden_value(self):
        res = plate_capacity(PlateShape.disk(1.0), 2)
        assert res.c_omega == pytest.approx(2.0 / math.pi, rel=0.01)

    def test_density_positive(self):
        res = plate_capacity(PlateShape.disk(1.0), 1)
        assert np.all(res.density > 0)

    def test_scaling_linearity(self):
        for plate, doubled in ((PlateShape.disk(1.0), PlateShape.disk(2.0)),
                               (PlateShape.square(1.0), PlateShape.square(2.0))):
            c1 = plate_capacity(plate, 2).c_omega
            c2 = plate_capacity(doubled, 2).c_omega
            assert abs(c2 - 2.0 * c1) <= 0.02 * c1

    def test_square_richardson_golden(self):
        cs = {n: plate_capacity(PlateShape.square(1.0), n).c_omega for n in (3, 4, 5)}
        d1, d2 = cs[4] - cs[3], cs[5] - cs[4]
        extrapolated = cs[5] + d2 * d2 / (d1 - d2)
        assert extrapolated == pytest.approx(SQUARE_GOLDEN, abs=2e-4)

    def test_monotone_in_domain(self):
        # unit disk sits inside the half-side-1 square
        c_disk = plate_capacity(PlateShape.disk(1.0), 2).c_omega
        c_square = plate_capacity(PlateShape.square(1.0), 2).c_omega
        assert c_disk <= c_square

    def test_refinement_differences_decreasing(self):
        cs = [plate_capacity(PlateShape.square(1.0), n).c_omega for n in (2, 3, 4, 5)]
        diffs = [abs(b - a) for a, b in zip(cs, cs[1:])]
        assert diffs[0] > diffs[1] > diffs[2]

    def test_on_plate_potential(self):
        res = plate_capacity(PlateShape.disk(1.0), 2)
        mesh = mesh_plate(PlateShape.disk(1.0), 2)
        S = assemble_single_layer(mesh)
        on_plate = S @ res.density
        assert np.max(np.abs(on_plate - 1.0)) <= 5.0 * res.error_estimate

    def test_level_zero_rejected(self):
        with pytest.raises(ValueError):
            plate_capacity(PlateShape.disk(1.0), 0)


class TestFarField:
    def test_axis_probe_monopole_only(self):
        res = plate_capacity(PlateShape.disk(1.0), 2)
        mesh = mesh_plate(PlateShape.disk(1.0), 2)
        value, resid = far_field_probe(res, mesh, (0.0, 0.0, -100.0))
        assert resid <= 1e-4 * res.c_omega

    def test_near_probe_rejected(self):
        res = plate_capacity(PlateShape.disk(1.0), 1)
        mesh = mesh_plate(PlateShape.disk(1.0), 1)
        c = mesh.centroids[0]
        with pytest.raises(ValueError, match="near-field"):
            far_field_probe(res, mesh, (c[0], c[1], 0.0))

    def test_upper_halfspace_rejected(self):
        res = plate_capacity(PlateShape.disk(1.0), 1)
        mesh = mesh_plate(PlateShape.disk(1.0), 1)
        with pytest.raises(ValueError, match="near-field"):
            far_field_probe(res, mesh, (0.0, 0.0, 50.0))

    def test_generic_polygon_two_term_expansion(self):
        plate = PlateShape.polygon([(0.9, 0.0), (0.0, 0.6), (-0.5, 0.0), (0.0, -0.4)])
        res = plate_capacity(plate, 4)
        mesh = mesh_plate(plate, 4)
        r = 50.0
        x = (r / math.sqrt(2), 0.0, -r / math.sqrt(2))
        _, resid = far_field_probe(res, mesh, x)
        dipole_mag = math.hypot(*res.dipole)
        assert resid <= dipole_mag / r ** 2 + 1e-5 * res.c_omega
