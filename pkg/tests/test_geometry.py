import numpy as np
import pytest

import sylfem as sf
from sylfem.exceptions import GeometryError
from sylfem.geometry import DomainKind, DomainSpec, ProfileFn

WAVY = ProfileFn(lambda y: 2.0 + np.cos(2 * np.pi * np.asarray(y, float)),
                 lambda y: -2 * np.pi * np.sin(2 * np.pi * np.asarray(y, float)),
                 name="wavy")
WAVY_DOMAIN = DomainSpec(DomainKind.XNORMAL, WAVY, name="wavy")

ALL_DOMAINS = [sf.SQUARE, sf.CAP_DOMAIN, sf.JAR_DOMAIN, WAVY_DOMAIN]


class TestMapToPhysical:
    def test_square_is_identity(self):
        assert np.allclose(sf.map_to_physical(sf.SQUARE, (0.3, 0.7)), (0.3, 0.7))

    def test_xnormal_rightmost_node(self):
        # width 3 at y = 0, so the right edge of the reference maps to x = 3
        assert np.allclose(sf.map_to_physical(WAVY_DOMAIN, (1.0, 0.0)), (3.0, 0.0))

    def test_symmetric_cap_top_corner(self):
        out = sf.map_to_physical(sf.CAP_DOMAIN, (0.5, 1.0))
        assert np.allclose(out, (0.5, 1.0))

    def test_symmetric_edge_tracks_half_width(self):
        y = np.linspace(0, 1, 11)
        out = sf.map_to_physical(sf.CAP_DOMAIN, (0.5 * np.ones_like(y), y))
        assert np.allclose(out[:, 0], 1.0 - y ** 2 / 2)

    def test_outside_rectangle_raises(self):
        with pytest.raises(GeometryError):
            sf.map_to_physical(sf.SQUARE, (1.5, 0.5))
        with pytest.raises(GeometryError):
            sf.map_to_physical(sf.CAP_DOMAIN, (0.7, 0.5))
        with pytest.raises(GeometryError):
            sf.map_to_physical(sf.SQUARE, (0.5, -0.2))

    @pytest.mark.parametrize("domain", ALL_DOMAINS, ids=lambda d: d.name)
    def test_round_trip(self, domain, rng):
        x0, x1 = domain.reference_x_interval
        pts = np.stack([rng.uniform(x0, x1, 1000), rng.uniform(0, 1, 1000)])
        phys = sf.map_to_physical(domain, pts)
        back = sf.map_to_reference(domain, (phys[..., 0], phys[..., 1]))
        assert np.max(np.abs(back - np.stack(np.broadcast_arrays(*pts), axis=-1))) < 1e-14


class TestHhat:
    def test_unit_profile_gives_identity(self, rng):
        for _ in range(20):
            p = (rng.uniform(0, 1), rng.uniform(0, 1))
            assert np.allclose(sf.hhat(sf.SQUARE, p), np.eye(2), atol=1e-15)

    def test_cap_center_value(self):
        H = sf.hhat(sf.CAP_DOMAIN, (0.0, 0.5))
        assert np.allclose(H, [[1 / 1.75, 0.0], [0.0, 1.75]])

    @pytest.mark.parametrize("domain", ALL_DOMAINS, ids=lambda d: d.name)
    def test_unit_determinant_and_spd(self, domain, rng):
        x0, x1 = domain.reference_x_interval
        for _ in range(200):
            p = (rng.uniform(x0, x1), rng.uniform(0, 1))
            H = sf.hhat(domain, p)
            assert abs(H[0, 1] - H[1, 0]) == 0.0
            assert abs(np.linalg.det(H) - 1.0) < 1e-12
            assert np.min(np.linalg.eigvalsh(H)) > 0.0

    def test_spd_at_quadrature_points(self):
        # the quadrature abscissae actually used by the assembly
        for name in ("cap", "jar", "square"):
            domain = sf.domain_from_name(name)
            basis = sf.build_basis(2, 8, sf.BCKind.DIRICHLET)
            xq, _, _, _ = basis.quad_tables()
            x0 = domain.x_offset
            for e in range(basis.n_elements):
                for xi in (e + xq) * basis.element_width:
                    H = sf.hhat(domain, (x0 + 0.3, xi))
                    assert np.min(np.linalg.eigvalsh(H)) > 0.0


class TestCylinderWrap:
    def test_origin(self):
        assert np.allclose(sf.wrap_to_cylinder((0.0, 0.0)),
                           (0.0, 0.0, 1 / (2 * np.pi)))

    def test_quarter_turn(self):
        assert np.allclose(sf.wrap_to_cylinder((0.5, 0.25)),
                           (0.5, 1 / (2 * np.pi), 0.0), atol=1e-16)

    def test_seam_closes(self, rng):
        for x in rng.uniform(-2, 2, 10):
            a = sf.wrap_to_cylinder((x, 0.0))
            b = sf.wrap_to_cylinder((x, 1.0))
            assert np.allclose(a, b, atol=1e-15)

    def test_y_out_of_range(self):
        with pytest.raises(GeometryError):
            sf.wrap_to_cylinder((0.0, 1.5))

    def test_vectorized(self, rng):
        pts = np.stack([rng.uniform(-1, 1, 50), rng.uniform(0, 1, 50)], axis=-1)
        out = sf.wrap_to_cylinder(pts)
        assert out.shape == (50, 3)
        rad = np.hypot(out[:, 1], out[:, 2])
        assert np.allclose(rad, 1 / (2 * np.pi))


class TestProfileValidation:
    def test_wrong_derivative_rejected(self):
        with pytest.raises(GeometryError, match="derivative"):
            ProfileFn(lambda y: 2.0 + y, lambda y: np.full_like(np.asarray(y, float), 3.0))

    def test_nonpositive_rejected(self):
        with pytest.raises(GeometryError, match="positive"):
            ProfileFn(lambda y: np.asarray(y, float) - 0.5,
                      lambda y: np.ones_like(np.asarray(y, float)))

    def test_builtin_profiles_pass(self):
        for prof in (sf.UNIT, sf.CAP, sf.JAR):
            assert prof(0.5) > 0


class TestDomainSpec:
    def test_square_equals_unit_xnormal_downstream(self):
        # same matrices, bit for bit
        other = DomainSpec(DomainKind.XNORMAL, sf.UNIT, name="unit-normal")
        for bc in (sf.BCKind.DIRICHLET, sf.BCKind.NEUMANN):
            xs, ys = sf.build_direction_sets(sf.SQUARE, 2, 8, bc)
            xo, yo = sf.build_direction_sets(other, 2, 8, bc)
            for a, b in ((xs, xo), (ys, yo)):
                for name, mat in a.mats.named().items():
                    assert np.array_equal(mat, b.mats.named()[name]), name

    def test_reference_intervals(self):
        assert sf.SQUARE.reference_x_interval == (0.0, 1.0)
        assert sf.CAP_DOMAIN.reference_x_interval == (-0.5, 0.5)
        assert WAVY_DOMAIN.reference_x_interval == (0.0, 1.0)

    def test_name_lookup_and_registry(self):
        assert sf.domain_from_name("square") is sf.SQUARE
        assert sf.domain_from_name("cap") is sf.CAP_DOMAIN
        assert sf.domain_from_name("jar") is sf.JAR_DOMAIN
        sf.register_domain("wavy", WAVY_DOMAIN)
        assert sf.domain_from_name("custom:wavy") is WAVY_DOMAIN
        with pytest.raises(GeometryError):
            sf.domain_from_name("blob")
        with pytest.raises(GeometryError):
            sf.domain_from_name("custom:missing")

    def test_area(self):
        assert abs(sf.CAP_DOMAIN.area() - 5.0 / 3.0) < 1e-13
        assert abs(sf.JAR_DOMAIN.area() - 2.0) < 1e-13
        assert abs(sf.SQUARE.area() - 1.0) < 1e-15
