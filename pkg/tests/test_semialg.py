import pytest
import numpy as np
from src.polyalg import Polynomial, VariableSpace, mono_basis, parse_polynomial
from src.quadrature import gauss_legendre_grid
from src.semialg import (GeometryError, SemialgebraicSet, box_domain, check_measure_preserving, interval_set,
                         lebesgue_integral, lebesgue_moments, read_sigma_table, stokes_defect, surface_moments)


class TestBoxDomain:
    def setup_method(self):
        """Set up test fixtures"""
        self.square = box_domain([0, 0], [1, 1])

    def test_faces_and_normals(self):
        """Test the four faces of the unit square"""
        names = [p.name for p in self.square.pieces]

        assert names == ['x1=lo', 'x1=hi', 'x2=lo', 'x2=hi']
        face = self.square.piece('x1=lo')
        assert face.normal_component(1).constant_term() == -1.0
        assert face.normal_component(2).is_zero()
        assert face.is_normal_unit

    def test_interval(self):
        """Test a one-dimensional box"""
        line = box_domain([0], [2])

        assert len(line.pieces) == 2
        assert line.volume == 2.0

    def test_degenerate_box(self):
        """Test that an empty side is rejected"""
        with pytest.raises(GeometryError):
            box_domain([0, 1], [1, 1])

    def test_piece_lookup(self):
        """Test lookup by index and unknown names"""
        assert self.square.piece(3).name == 'x2=lo'
        with pytest.raises(GeometryError):
            self.square.piece('x3=lo')

    def test_rectangle_volume(self):
        """Test the volume of the Burgers domain"""
        assert box_domain([0, 0], [5, 1]).volume == pytest.approx(5.0)

    def test_normals_do_not_vanish(self):
        """Test normal sampling on a face"""
        samples = np.random.default_rng(0).uniform(0, 1, (10, 2))

        assert all(p.check_normal(samples) for p in self.square.pieces)


class TestMoments:
    def setup_method(self):
        """Set up test fixtures"""
        self.square = box_domain([0, 0], [1, 1])

    def test_lebesgue_volume(self):
        """Test the zeroth moment"""
        assert lebesgue_moments(self.square, (0, 0)) == pytest.approx(1.0)

    def test_lebesgue_mixed(self):
        """Test the (1, 2) moment"""
        assert lebesgue_moments(self.square, (1, 2)) == pytest.approx(1.0 / 6.0)

    def test_lebesgue_one_dimensional(self):
        """Test 1/(k+1) moments on [0, 1]"""
        line = box_domain([0], [1])
        for k in range(6):
            assert lebesgue_moments(line, (k,)) == pytest.approx(1.0 / (k + 1))

    def test_lebesgue_matches_quadrature(self):
        """Test analytic moments against a tensor Gauss rule on a random box"""
        rng = np.random.default_rng(2)
        lo = rng.uniform(-1, 0, 2)
        hi = lo + rng.uniform(0.5, 2, 2)
        box = box_domain(lo, hi)
        points, weights = gauss_legendre_grid(lo, hi, 8, 1)
        for alpha in mono_basis(2, 10):
            numeric = weights @ np.prod(points ** np.array(alpha), axis=1)
            assert lebesgue_moments(box, alpha) == pytest.approx(numeric, rel=1e-12, abs=1e-12)

    def test_surface_on_fixed_face(self):
        """Test that x2 vanishes on the face x2=0"""
        assert surface_moments(self.square.piece('x2=lo'), (0, 1)) == 0.0

    def test_surface_on_top_face(self):
        """Test the x1^2 moment of the face x2=1"""
        assert surface_moments(self.square.piece('x2=hi'), (2, 0)) == pytest.approx(1.0 / 3.0)

    def test_face_length(self):
        """Test the mass of a face"""
        assert surface_moments(self.square.piece('x1=lo'), (0, 0)) == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        """Test moments with the wrong multi-index length"""
        with pytest.raises(GeometryError):
            lebesgue_moments(self.square, (1,))


class TestStokes:
    def test_divergence_theorem_on_random_boxes(self):
        """Test that boundary and interior integrals agree for random polynomials"""
        rng = np.random.default_rng(3)
        space = VariableSpace.standard(2)
        basis = mono_basis(space, 4)
        for _ in range(5):
            lo = rng.uniform(-1, 0, 2)
            box = box_domain(lo, lo + rng.uniform(0.5, 2, 2))
            p = Polynomial(space, {alpha: rng.normal() for alpha in basis})
            for m in (1, 2):
                assert abs(stokes_defect(box, p, m)) < 1e-10

    def test_three_dimensional_box(self):
        """Test the identity in three dimensions"""
        box = box_domain([0, -1, 2], [1, 1, 3])
        p = parse_polynomial('x1^2*x2*x3 + x3^3 - x1*x2', VariableSpace.standard(3))
        for m in (1, 2, 3):
            assert abs(stokes_defect(box, p, m)) < 1e-10


class TestSets:
    def test_interval_set_with_ball(self):
        """Test that bounded intervals add an Archimedean ball"""
        space = VariableSpace.standard(1, 1).subspace(['y1'])
        box = interval_set(space, {'y1': (-2.0, 1.0)})

        assert box.compact
        assert box.ball_radius == pytest.approx(2.0)
        assert len(box.constraints()) == 2
        assert box.contains([0.5]) and not box.contains([1.5])

    def test_unbounded_interval(self):
        """Test that a missing bound leaves the set unbounded"""
        space = VariableSpace.standard(1, 1).subspace(['y1'])
        box = interval_set(space, {'y1': (0.0, None)})

        assert box.is_unbounded
        assert box.contains([5.0]) and not box.contains([-1.0])

    def test_compact_needs_radius(self):
        """Test that compact sets require a ball"""
        with pytest.raises(GeometryError):
            SemialgebraicSet(VariableSpace.standard(1), (), None, compact=True)

    def test_empty_interval(self):
        """Test that an empty interval is rejected"""
        with pytest.raises(GeometryError):
            interval_set(VariableSpace.standard(1), {'x1': (1.0, 0.0)})


class TestPeriodicMaps:
    def setup_method(self):
        """Set up test fixtures"""
        self.square = box_domain([0, 0], [1, 1])
        self.space = VariableSpace.standard(2)

    def test_translation_preserves_surface_measure(self):
        """Test that the shift x2 -> x2 + 1 maps the bottom face onto the top face"""
        hmap = [parse_polynomial('x1', self.space), parse_polynomial('x2 + 1', self.space)]

        check_measure_preserving(self.square.piece('x2=lo'), self.square.piece('x2=hi'), hmap, 8)

    def test_reflection_preserves_surface_measure(self):
        """Test that x1 -> 1 - x1 also preserves the measure"""
        hmap = [parse_polynomial('1 - x1', self.space), parse_polynomial('1', self.space)]

        check_measure_preserving(self.square.piece('x2=lo'), self.square.piece('x2=hi'), hmap, 8)

    def test_compression_is_rejected(self):
        """Test that x1 -> x1/2 does not preserve the measure"""
        hmap = [parse_polynomial('x1/2', self.space), parse_polynomial('1', self.space)]

        with pytest.raises(GeometryError, match='does not preserve'):
            check_measure_preserving(self.square.piece('x2=lo'), self.square.piece('x2=hi'), hmap, 4)


class TestSigmaTable:
    def test_read_table(self, tmp_path):
        """Test parsing a surface-moment table"""
        path = tmp_path / 'sigma.txt'
        path.write_text("# piece alpha value\n1 0 0 6.283\n1 2 0 3.14  # comment\n\n2 0 0 1.0\n")

        table = read_sigma_table(str(path), 2)

        assert table[1][(2, 0)] == pytest.approx(3.14)
        assert table[2][(0, 0)] == 1.0

    def test_malformed_table(self, tmp_path):
        """Test that short lines are reported"""
        path = tmp_path / 'sigma.txt'
        path.write_text("1 0 6.283\n")

        with pytest.raises(GeometryError, match='expected 4 fields'):
            read_sigma_table(str(path), 2)

    def test_lebesgue_integral(self):
        """Test integration of a polynomial over the square"""
        p = parse_polynomial('x1*x2 + 1', VariableSpace.standard(2))

        assert lebesgue_integral(box_domain([0, 0], [1, 1]), p) == pytest.approx(1.25)
