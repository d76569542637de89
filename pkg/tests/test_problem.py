import copy
import os
import pytest
import numpy as np
from src.polyalg import Polynomial, parse_polynomial
from src.problem import (BoundaryKind, ProblemFileError, Sense, load_problem, normalize_inputs, problem_from_dict,
                         rescale_to_unit_box)

PROBLEM_DIR = os.path.join(os.path.dirname(__file__), '..', 'data', 'problems')

BURGERS = {
    'name': 'burgers',
    'domain': {'box': {'lo': [0, 0], 'hi': [5, 1]}},
    'unknowns': {'n_y': 1},
    'pde': {'F': ['z1_1 + y1*z1_2']},
    'boundary': [
        {'piece': 'x1=lo', 'type': 'dirichlet', 'value': ['10*(x2*(1 - x2))^2']},
        {'piece': 'x1=hi', 'type': 'free'},
        {'piece': 'x2=lo', 'type': 'periodic', 'target': 'x2=hi', 'map': ['x1', 'x2 + 1']},
    ],
    'objective': {'L': 'y1^2'},
    'reductions': {'substitutions': {'z1_1': '-y1*z1_2'}},
    'relaxation': {'d': 4},
}


class TestProblemParsing:
    def setup_method(self):
        """Set up test fixtures"""
        self.data = copy.deepcopy(BURGERS)

    def test_burgers_instance(self):
        """Test parsing the Burgers analysis instance"""
        problem = problem_from_dict(self.data)

        assert problem.n == 2 and problem.n_y == 1
        assert problem.space.names == ('x1', 'x2', 'y1', 'z1_1', 'z1_2')
        assert problem.sense is Sense.BOTH
        assert problem.d == 4
        assert [bc.kind for bc in problem.boundary] == [BoundaryKind.DIRICHLET, BoundaryKind.FREE,
                                                         BoundaryKind.PERIODIC]
        assert problem.boundary[0].values[0].polynomial is not None
        assert not problem.is_controlled

    def test_unknown_key_reports_path(self):
        """Test that unknown keys are rejected with their location"""
        self.data['boundary'][0]['valeu'] = ['0']

        with pytest.raises(ProblemFileError) as excinfo:
            problem_from_dict(self.data)
        assert excinfo.value.field_path == 'boundary[0]'
        assert 'valeu' in str(excinfo.value)

    def test_uncovered_piece(self):
        """Test that every piece needs a condition or a free marker"""
        del self.data['boundary'][1]

        with pytest.raises(ProblemFileError, match='x1=hi'):
            problem_from_dict(self.data)

    def test_duplicate_condition(self):
        """Test that a piece cannot carry two conditions"""
        self.data['boundary'].append({'piece': 'x1=lo', 'type': 'free'})

        with pytest.raises(ProblemFileError, match='already has a condition'):
            problem_from_dict(self.data)

    def test_nonaffine_periodic_map(self):
        """Test that periodic maps must be affine"""
        self.data['boundary'][2]['map'] = ['x1^2', 'x2 + 1']

        with pytest.raises(ProblemFileError, match='affine'):
            problem_from_dict(self.data)

    def test_odd_degree(self):
        """Test that the relaxation degree must be even"""
        self.data['relaxation']['d'] = 5

        with pytest.raises(ProblemFileError, match='even'):
            problem_from_dict(self.data)

    def test_bad_polynomial(self):
        """Test a PDE row with an undeclared variable"""
        self.data['pde']['F'] = ['z1_1 + y2']

        with pytest.raises(ProblemFileError) as excinfo:
            problem_from_dict(self.data)
        assert excinfo.value.field_path == 'pde.F[0]'

    def test_non_polynomial_dirichlet(self):
        """Test that non-polynomial boundary data become callables"""
        self.data['boundary'][0]['value'] = ['sin(pi*x2)']

        problem = problem_from_dict(self.data)
        component = problem.boundary[0].values[0]

        assert component.polynomial is None
        np.testing.assert_allclose(component.evaluate(np.array([[0.0, 0.5]])), [1.0])

    def test_bounds(self):
        """Test Y and Z bounds"""
        self.data['bounds'] = {'y': [[0, 0.625]], 'z': {'z1_2': [-10, 10]}}

        problem = problem_from_dict(self.data)

        assert problem.y_bounds == {'y1': (0.0, 0.625)}
        assert problem.z_bounds == {'z1_2': (-10.0, 10.0)}

    def test_empty_bounds_interval(self):
        """Test that lo < hi is required"""
        self.data['bounds'] = {'y': [[1, 0]]}

        with pytest.raises(ProblemFileError, match='empty interval'):
            problem_from_dict(self.data)

    def test_substitution_must_target_derivative(self):
        """Test that only z variables can be substituted"""
        self.data['reductions']['substitutions'] = {'y1': 'x1'}

        with pytest.raises(ProblemFileError, match='not a derivative'):
            problem_from_dict(self.data)

    def test_control_problem_must_minimise(self):
        """Test that controlled problems reject 'sup'"""
        self.data['controls'] = {'n_u': 1, 'C': [['1']], 'bounds': [[-1, 1]]}
        self.data['sense'] = 'sup'

        with pytest.raises(ProblemFileError, match="must be 'inf'"):
            problem_from_dict(self.data)

    def test_second_order_entries(self):
        """Test parsing of second-order coefficients"""
        self.data['pde']['B'] = [{'row': 1, 'unknown': 1, 'i': 2, 'j': 2, 'coefficient': '-1'}]

        problem = problem_from_dict(self.data)

        assert problem.B[0].coefficient.constant_term() == -1.0

    def test_second_order_index_range(self):
        """Test that out-of-range second-order entries are rejected"""
        self.data['pde']['B'] = [{'row': 2, 'unknown': 1, 'i': 1, 'j': 1, 'coefficient': '1'}]

        with pytest.raises(ProblemFileError, match='out of range'):
            problem_from_dict(self.data)


class TestLoadProblem:
    def test_bundled_problems_parse(self):
        """Test that every bundled problem file parses"""
        for name in ('burgers_energy', 'burgers_x2y2', 'burgers_control', 'transport', 'heat'):
            problem = load_problem(os.path.join(PROBLEM_DIR, f"{name}.json"))
            assert problem.name == name

    def test_json_error_has_line(self, tmp_path):
        """Test that syntax errors report a line"""
        path = tmp_path / 'broken.json'
        path.write_text('{\n  "name": "x",\n  "domain": \n}\n')

        with pytest.raises(ProblemFileError) as excinfo:
            load_problem(str(path))
        assert excinfo.value.line == 4

    def test_missing_file(self, tmp_path):
        """Test reading a file that does not exist"""
        with pytest.raises(ProblemFileError, match='cannot read'):
            load_problem(str(tmp_path / 'missing.json'))


class TestPreparation:
    def setup_method(self):
        """Set up test fixtures"""
        self.problem = problem_from_dict(copy.deepcopy(BURGERS))

    def test_rescaling_moves_to_unit_box(self):
        """Test the affine map onto [0, 1]^2"""
        scaled = rescale_to_unit_box(self.problem)

        assert scaled.geometry.lo == (0.0, 0.0) and scaled.geometry.hi == (1.0, 1.0)
        assert scaled.scaling.length == (5.0, 1.0)
        assert scaled.scaling.volume == pytest.approx(5.0)

    def test_objective_absorbs_volume(self):
        """Test that the objective is multiplied by the Jacobian"""
        scaled = rescale_to_unit_box(self.problem)

        assert scaled.L.almost_equal(5.0 * parse_polynomial('y1^2', scaled.space))

    def test_derivatives_are_scaled(self):
        """Test that dy/dx1 picks up 1/L1 and substitutions L1"""
        scaled = rescale_to_unit_box(self.problem)

        assert scaled.F[0].almost_equal(parse_polynomial('0.2*z1_1 + y1*z1_2', scaled.space))
        assert scaled.substitutions['z1_1'].almost_equal(parse_polynomial('-5*y1*z1_2', scaled.space))

    def test_dirichlet_data_follow_the_map(self):
        """Test that boundary data are composed with the scaling"""
        scaled = rescale_to_unit_box(self.problem)
        component = scaled.boundary[0].values[0]

        np.testing.assert_allclose(component.evaluate(np.array([[0.0, 0.5]])), [0.625])

    def test_rescaling_is_idempotent(self):
        """Test that a rescaled problem is left alone"""
        scaled = rescale_to_unit_box(self.problem)

        assert rescale_to_unit_box(scaled) is scaled

    def test_normalize_inputs(self):
        """Test that inputs in [-1, 1] become [0, 1] with shifted rows"""
        data = copy.deepcopy(BURGERS)
        data['controls'] = {'n_u': 1, 'C': [['1']], 'bounds': [[-1, 1]]}
        data['reductions'] = {}
        problem = problem_from_dict(data)

        normalised = normalize_inputs(problem)

        assert normalised.input_bounds == ((0.0, 1.0),)
        assert normalised.physical_input_bounds == ((-1.0, 1.0),)
        assert normalised.C[0][0].constant_term() == pytest.approx(2.0)
        assert normalised.F[0].constant_term() == pytest.approx(1.0)

    def test_uncontrolled_inputs_untouched(self):
        """Test that problems without inputs pass through"""
        assert normalize_inputs(self.problem) is self.problem

    def test_data_degree(self):
        """Test the largest degree of the problem data"""
        assert self.problem.data_degree() == 2
        assert self.problem.objective == Polynomial.variable(self.problem.space, 'y1') ** 2
