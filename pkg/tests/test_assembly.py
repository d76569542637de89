import copy
import os
import pytest
import numpy as np
from src import assembly
from src.assembly import (AssemblyError, assemble_boundary, assemble_interior, assemble_marginals,
                          assemble_objective, assemble_slack, assemble_stokes, build_sdp, n_var, prepare_problem,
                          reduce_linear_derivatives)
from src.moments import MomentVector, describe_monomial
from src.polyalg import VariableSpace
from src.problem import load_problem, problem_from_dict
from src.sdpsolve import SolveStatus
from src.semialg import lebesgue_moments, surface_moments

PROBLEM_DIR = os.path.join(os.path.dirname(__file__), '..', 'data', 'problems')

SQUARE = {
    'name': 'square',
    'domain': {'box': {'lo': [0, 0], 'hi': [1, 1]}},
    'unknowns': {'n_y': 0},
    'boundary': [{'piece': name, 'type': 'free'} for name in ('x1=lo', 'x1=hi', 'x2=lo', 'x2=hi')],
    'relaxation': {'d': 4},
}


def bundled(name):
    return load_problem(os.path.join(PROBLEM_DIR, f"{name}.json"))


def geometric_moments(sdp):
    """Lebesgue moments for mu and surface moments for every face"""
    geometry = sdp.problem.geometry
    vectors = {'mu': MomentVector.from_function(sdp.layout.bases['mu'],
                                                lambda alpha: lebesgue_moments(geometry, alpha))}
    for piece in geometry.pieces:
        basis = sdp.layout.bases[f"mu_d{piece.index}"]
        positions = [int(v[1:]) - 1 for v in basis.space.names]

        def moment(alpha, piece=piece, positions=positions):
            full = [0] * geometry.n
            for pos, e in zip(positions, alpha):
                full[pos] = e
            return surface_moments(piece, tuple(full))

        vectors[f"mu_d{piece.index}"] = MomentVector.from_function(basis, moment)
    return sdp.stack(vectors)


class TestPreparation:
    def setup_method(self):
        """Set up test fixtures"""
        self.burgers = bundled('burgers_energy')

    def test_reduced_burgers_has_four_variables(self):
        """Test that eliminating z1_1 leaves (x1, x2, y1, z1_2)"""
        prepared = prepare_problem(self.burgers)

        assert n_var(self.burgers) == 5
        assert n_var(prepared) == 4
        assert prepared.z_names == ('z1_2',)

    def test_reduction_is_idempotent(self):
        """Test that a reduced problem is returned unchanged"""
        prepared = prepare_problem(self.burgers)

        assert reduce_linear_derivatives(prepared) is prepared

    def test_pde_row_vanishes_after_substitution(self):
        """Test that the substitution solves the Burgers row identically"""
        prepared = prepare_problem(self.burgers)

        assert prepared.F[0].almost_equal(0 * prepared.F[0])

    def test_chained_substitution_rejected(self):
        """Test that substitutions cannot reference each other"""
        data = copy.deepcopy(SQUARE)
        data['unknowns'] = {'n_y': 1}
        data['reductions'] = {'substitutions': {'z1_1': '-y1*z1_2', 'z1_2': 'z1_1'}}
        problem = problem_from_dict(data)

        with pytest.raises(AssemblyError, match='eliminated derivatives'):
            prepare_problem(problem)


class TestTestDegree:
    def test_burgers_family_degrees(self):
        """Test per-family test degrees of the reduced Burgers problem"""
        degrees = assembly.family_test_degrees(bundled('burgers_energy'), 4)

        assert degrees['stokes[x1]'] == 3
        assert degrees['stokes[x2]'] == 4
        assert degrees['dirichlet[x1=lo]'] == 4
        assert degrees['periodic[x2=lo->x2=hi]'] == 4
        assert 'interior[F1]' not in degrees

    def test_overall_test_degree(self):
        """Test that d' is the smallest family degree"""
        assert assembly.test_degree(bundled('burgers_energy'), 4) == 3
        assert assembly.test_degree(bundled('transport'), 4) == 3


class TestBuildSDP:
    def test_burgers_block_sizes(self):
        """Test the largest moment matrix against the tabulated sizes"""
        problem = bundled('burgers_energy')

        assert build_sdp(problem, 4).largest_block == 15
        assert build_sdp(problem, 6).largest_block == 35

    def test_burgers_measures(self):
        """Test the measure layout of the analysis problem"""
        sdp = build_sdp(bundled('burgers_energy'), 4)

        assert [m.name for m in sdp.measures] == ['mu', 'mu_d1', 'mu_d2', 'mu_d3', 'mu_d4']
        assert sdp.layout.bases['mu'].space.names == ('x1', 'x2', 'y1', 'z1_2')
        assert sdp.layout.bases['mu_d1'].space.names == ('x2', 'y1')
        assert not sdp.convergence_guaranteed
        assert sdp.A.shape == (len(sdp.b), sdp.n_columns)

    def test_objective_absorbs_volume(self):
        """Test that c carries the Jacobian of the rescaling"""
        sdp = build_sdp(bundled('burgers_energy'), 4)
        basis = sdp.layout.bases['mu']
        column = sdp.layout.offsets['mu'] + basis.index[(0, 0, 2, 0)]

        assert sdp.c[column] == pytest.approx(5.0)
        assert sdp.c.sum() == pytest.approx(5.0)

    def test_controlled_measures(self):
        """Test that inputs add a control and a slack measure"""
        sdp = build_sdp(bundled('burgers_control'), 6)

        assert [m.name for m in sdp.measures][-2:] == ['nu1', 'nuhat1']
        assert 'slack[u1]' in sdp.family_degrees
        assert sdp.layout.bases['nu1'].space.names == ('x1', 'x2', 'y1')

    def test_odd_degree(self):
        """Test that odd relaxation degrees are rejected"""
        with pytest.raises(AssemblyError, match='even'):
            build_sdp(bundled('transport'), 5)

    def test_degree_below_data(self):
        """Test that d must cover the data degree"""
        with pytest.raises(AssemblyError, match='data degree'):
            build_sdp(bundled('heat'), 0)

    def test_missing_degree(self):
        """Test that a degree must come from the file or the caller"""
        data = copy.deepcopy(SQUARE)
        del data['relaxation']

        with pytest.raises(AssemblyError, match='No relaxation degree'):
            build_sdp(problem_from_dict(data))

    def test_compressing_periodic_map(self):
        """Test that maps not preserving the surface measure are rejected"""
        data = copy.deepcopy(SQUARE)
        data['boundary'] = [
            {'piece': 'x1=lo', 'type': 'free'},
            {'piece': 'x1=hi', 'type': 'free'},
            {'piece': 'x2=lo', 'type': 'periodic', 'target': 'x2=hi', 'map': ['x1/2', 'x2 + 1']},
        ]

        with pytest.raises(AssemblyError, match='does not preserve'):
            build_sdp(problem_from_dict(data))


class TestRows:
    def test_stokes_and_marginals_hold_for_lebesgue(self):
        """Test that Lebesgue and surface moments satisfy every row"""
        sdp = build_sdp(problem_from_dict(copy.deepcopy(SQUARE)))
        s = geometric_moments(sdp)

        residuals = sdp.residuals(s)

        assert set(residuals) == {'stokes[x1]', 'stokes[x2]', 'marginal[x1=lo]', 'marginal[x1=hi]',
                                  'marginal[x2=lo]', 'marginal[x2=hi]', 'marginal[mu]'}
        assert max(residuals.values()) < 1e-12

    def test_mass_identities(self):
        """Test masses of the occupation and boundary measures"""
        sdp = build_sdp(problem_from_dict(copy.deepcopy(SQUARE)))

        masses = sdp.mass_identities(geometric_moments(sdp))

        for mass, expected in masses.values():
            assert mass == pytest.approx(expected)
        assert masses['mu'] == (pytest.approx(1.0), 1.0)

    def test_dirichlet_right_hand_side(self):
        """Test that the y-moment on x1=0 integrates the boundary data x2^2"""
        sdp = build_sdp(bundled('transport'), 4)
        test_space = VariableSpace.standard(2, 1).subspace(['x2', 'y1'])
        wanted = {describe_monomial(test_space, (0, 1)): 1.0 / 3.0,
                  describe_monomial(test_space, (1, 1)): 1.0 / 4.0,
                  describe_monomial(test_space, (0, 2)): 1.0 / 5.0}

        found = {tag.monomial: value for tag, value in zip(sdp.tags, sdp.b)
                 if tag.family == 'dirichlet[x1=lo]' and tag.monomial in wanted}

        assert found == pytest.approx(wanted)

    def test_stokes_rows_have_stokes_tags(self):
        """Test that partial assemblies stay within their families"""
        problem = bundled('transport')

        assert {row.tag.family for row in assemble_stokes(problem, 4)} == {'stokes[x1]', 'stokes[x2]'}
        assert {row.tag.family for row in assemble_boundary(problem, 4)} == {'dirichlet[x1=lo]', 'dirichlet[x2=lo]'}

    def test_duplicate_rows_are_removed(self):
        """Test that marginal rows repeated by Dirichlet rows are dropped"""
        sdp = build_sdp(bundled('transport'), 4)

        assert sdp.duplicates_removed > 0
        assert len(set(map(str, sdp.tags))) == len(sdp.tags)

    def test_conic_problem(self):
        """Test the hand-off to the solver"""
        sdp = build_sdp(problem_from_dict(copy.deepcopy(SQUARE)))
        conic = sdp.conic('sup')

        assert conic.n == sdp.n_columns
        assert conic.m == len(sdp.b)
        assert conic.total_psd_dimension == sdp.total_psd_dimension


class TestPartialAssembly:
    def setup_method(self):
        """Set up test fixtures"""
        self.square = problem_from_dict(copy.deepcopy(SQUARE))

    def test_interior_rows(self):
        """Test that interior rows exist only for PDE rows"""
        assert assemble_interior(self.square, 4) == []
        assert {row.tag.family for row in assemble_interior(bundled('transport'), 4)} == {'interior[F1]'}

    def test_marginal_rows(self):
        """Test one marginal family per face plus the x-marginal of mu"""
        families = {row.tag.family for row in assemble_marginals(self.square, 4)}

        assert families == {'marginal[x1=lo]', 'marginal[x1=hi]', 'marginal[x2=lo]', 'marginal[x2=hi]',
                            'marginal[mu]'}

    def test_occupation_marginal_is_lebesgue(self):
        """Test that mu rows pin every x-moment up to d to the unit-box moments"""
        sdp = build_sdp(bundled('burgers_x2y2'), 4)
        basis = sdp.layout.bases['mu']
        offset = sdp.layout.offsets['mu']
        rows = [k for k, tag in enumerate(sdp.tags) if tag.family == 'marginal[mu]']
        A = sdp.A.tocsr()

        assert len(rows) == 15
        for k in rows:
            columns = A.indices[A.indptr[k]:A.indptr[k + 1]]
            assert len(columns) == 1
            alpha = basis.monomials[columns[0] - offset]
            assert alpha[2:] == (0, 0)
            assert sdp.b[k] == pytest.approx(1.0 / ((alpha[0] + 1) * (alpha[1] + 1)))

    def test_slack_rows(self):
        """Test that slack rows appear with inputs only"""
        assert {row.tag.family for row in assemble_slack(bundled('burgers_control'), 6)} == {'slack[u1]'}
        assert assemble_slack(bundled('burgers_energy'), 4) == []

    def test_objective_matches_build(self):
        """Test that the standalone objective equals the assembled one"""
        problem = bundled('burgers_energy')

        np.testing.assert_allclose(assemble_objective(problem, 4), build_sdp(problem, 4).c)


class TestBurgersBounds:
    def solve_both(self, name, d):
        sdp = build_sdp(bundled(name), d)
        reports = {sense: sdp.solve(sense)[1].report for sense in ('inf', 'sup')}
        for report in reports.values():
            assert report.status not in (SolveStatus.INFEASIBLE, SolveStatus.UNBOUNDED)
        return reports['inf'].primal_objective, reports['sup'].primal_objective

    def test_energy_is_bracketed_tightly(self):
        """Test that both bounds on the integral of y^2 sit at 50/63"""
        lower, upper = self.solve_both('burgers_energy', 4)

        assert lower == pytest.approx(50.0 / 63.0, abs=1e-5)
        assert upper == pytest.approx(50.0 / 63.0, abs=1e-5)

    @pytest.mark.parametrize('d, expected', [(4, (0.206, 0.380)), (6, (0.263, 0.297))])
    def test_weighted_energy_bounds(self, d, expected):
        """Test the x2^2 y^2 bounds against the tabulated hierarchy values"""
        lower, upper = self.solve_both('burgers_x2y2', d)

        assert lower == pytest.approx(expected[0], abs=0.02)
        assert upper == pytest.approx(expected[1], abs=0.02)
        assert lower <= upper + 1e-6
