import csv
import pytest
import numpy as np
from src.moments import (MeasureDecl, MeasureRole, MomentBasis, MomentError, MomentVector, localizing_matrix,
                         min_eigenvalue, moment_matrix, riesz, riesz_coeffs)
from src.polyalg import Polynomial, VariableSpace, parse_polynomial
from src.semialg import SemialgebraicSet, box_domain, lebesgue_moments


def lebesgue_vector(space, d, lo=0.0, hi=1.0):
    """Moments of the uniform measure on [lo, hi]^dim"""
    box = box_domain([lo] * space.dim, [hi] * space.dim)
    return MomentVector.from_function(MomentBasis(space, d), lambda alpha: lebesgue_moments(box, alpha))


class TestRiesz:
    def setup_method(self):
        """Set up test fixtures"""
        self.space = VariableSpace.standard(2)
        self.s = lebesgue_vector(self.space, 4)

    def test_integrates_polynomials(self):
        """Test the Riesz functional against exact integrals"""
        p = parse_polynomial('3*x1^2 - x1*x2 + 1', self.space)

        assert riesz(self.s, p) == pytest.approx(1.0 - 0.25 + 1.0)

    def test_coefficient_vector(self):
        """Test the coefficient vector layout"""
        c = riesz_coeffs(parse_polynomial('2 + x2', self.space), 1)

        np.testing.assert_allclose(c, [2.0, 0.0, 1.0])

    def test_degree_overflow(self):
        """Test that polynomials above the truncation are rejected"""
        with pytest.raises(MomentError):
            riesz(self.s, parse_polynomial('x1^5', self.space))

    def test_wrong_length(self):
        """Test that the vector length must match the basis"""
        with pytest.raises(MomentError):
            MomentVector(MomentBasis(self.space, 2), [1.0, 2.0])


class TestMomentMatrices:
    def setup_method(self):
        """Set up test fixtures"""
        self.space = VariableSpace.standard(1)

    def test_dirac_moment_matrix(self):
        """Test the rank-one moment matrix of a point mass at x = 2"""
        s = MomentVector.from_function(MomentBasis(self.space, 2), lambda alpha: 2.0 ** alpha[0])

        np.testing.assert_allclose(moment_matrix(s), [[1.0, 2.0], [2.0, 4.0]])

    def test_lebesgue_matrix_is_psd(self):
        """Test that moment matrices of the Lebesgue measure are PSD"""
        for d in (2, 4, 6, 8):
            s = lebesgue_vector(VariableSpace.standard(2), d)
            assert min_eigenvalue(moment_matrix(s)) > -1e-12

    def test_localizing_matrix(self):
        """Test the localizing matrix of x(1 - x) for the uniform measure"""
        s = lebesgue_vector(self.space, 4)
        g = parse_polynomial('x1 - x1^2', self.space)

        M = localizing_matrix(s, g)

        np.testing.assert_allclose(M, [[1.0 / 6.0, 1.0 / 12.0], [1.0 / 12.0, 1.0 / 20.0]])
        assert min_eigenvalue(M) > 0

    def test_outside_support_is_detected(self):
        """Test a point mass outside [0, 1] against the localizing constraint"""
        s = MomentVector.from_function(MomentBasis(self.space, 2), lambda alpha: 2.0 ** alpha[0])
        g = parse_polynomial('x1 - x1^2', self.space)

        assert min_eigenvalue(localizing_matrix(s, g)) == pytest.approx(-2.0)

    def test_odd_degree(self):
        """Test that odd degrees are rejected"""
        s = lebesgue_vector(self.space, 3)

        with pytest.raises(MomentError):
            moment_matrix(s)

    def test_z_capped_basis(self):
        """Test that a z-degree cap removes monomials"""
        space = VariableSpace.standard(1, 1)
        full = MomentBasis(space, 4)
        capped = MomentBasis(space, 4, z_cap=2)

        assert len(capped) < len(full)
        assert all(capped.z_degree(alpha) <= 2 for alpha in capped.monomials)


class TestMomentVector:
    def setup_method(self):
        """Set up test fixtures"""
        self.space = VariableSpace.standard(2)
        self.s = lebesgue_vector(self.space, 4, 0.0, 2.0)

    def test_marginal(self):
        """Test the x2 marginal of a product measure"""
        marginal = self.s.marginal(self.space.subspace(['x2']), 2)

        np.testing.assert_allclose(marginal.s, [4.0, 4.0, 16.0 / 3.0])

    def test_value_outside_truncation(self):
        """Test reading a moment above d"""
        with pytest.raises(MomentError):
            self.s.value((5, 0))

    def test_csv_export(self, tmp_path):
        """Test the moment CSV layout"""
        path = tmp_path / 'moments.csv'
        self.s.to_csv(str(path))

        with open(path) as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ['x1', 'x2', 'value']
        assert rows[1] == ['0', '0', '4.0']
        assert len(rows) == 1 + len(self.s.s)

    def test_scaled(self):
        """Test scaling a moment vector"""
        assert self.s.scaled(0.5).mass == pytest.approx(2.0)


class TestMeasureDecl:
    def test_control_measure_without_z(self):
        """Test that control measures cannot carry derivative variables"""
        space = VariableSpace.standard(1, 1)

        with pytest.raises(MomentError):
            MeasureDecl('nu1', SemialgebraicSet(space), MeasureRole.CONTROL, channel=1)

    def test_occupation_measure_with_z(self):
        """Test a valid occupation measure declaration"""
        space = VariableSpace.standard(1, 1)
        decl = MeasureDecl('mu', SemialgebraicSet(space), MeasureRole.OCCUPATION)

        assert decl.space.block('z') == ('z1_1',)

    def test_inputs_are_rejected(self):
        """Test that measures never carry inputs"""
        space = VariableSpace.standard(1, 1, z=[], n_u=1)

        with pytest.raises(MomentError):
            MeasureDecl('mu', SemialgebraicSet(space), MeasureRole.OCCUPATION)

    def test_constant_weight(self):
        """Test that the unit polynomial gives the moment matrix"""
        space = VariableSpace.standard(1)
        s = lebesgue_vector(space, 2)

        np.testing.assert_allclose(localizing_matrix(s, Polynomial.constant(space, 1.0)), moment_matrix(s))
