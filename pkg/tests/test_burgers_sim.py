import csv
import logging
import pytest
import numpy as np
from src.burgers_sim import SimulationBlowUp, functional_eval, simulate, write_summary, write_trajectory
from src.polyalg import Polynomial, VariableSpace, parse_polynomial


def smooth_profile(x):
    return 0.5 + 0.25 * np.sin(2 * np.pi * x)


class TestSimulate:
    def test_periodic_mass_is_conserved(self):
        """Test that the flux form conserves mass without a source"""
        sol = simulate(smooth_profile, T=0.5, nx=50, dt=0.01)
        mass = sol.mass()

        assert np.max(np.abs(mass - mass[0])) < 1e-12
        assert sol.y.shape == (51, 50)
        assert sol.T == pytest.approx(0.5)

    def test_energy_does_not_grow(self):
        """Test that the scheme dissipates energy"""
        energy = simulate(smooth_profile, T=1.0, nx=50, dt=0.01).energy()

        assert energy[-1] <= energy[0] + 1e-12

    def test_constant_source(self):
        """Test that u = 1 lifts a zero state linearly in x1"""
        sol = simulate(lambda x: np.zeros_like(x), controller=lambda p: np.ones(len(p)), T=0.5, nx=20, dt=0.01)

        np.testing.assert_allclose(sol.y[-1], 0.5, atol=1e-12)
        assert sol.u.shape == (51, 20)

    def test_controller_sees_time_space_and_state(self):
        """Test the point layout passed to a controller"""
        seen = []

        def controller(points):
            seen.append(points.copy())
            return np.zeros(len(points))

        simulate(lambda x: 0.1 * np.ones_like(x), controller=controller, T=0.02, nx=4, dt=0.01, t0=2.0)

        assert seen[0].shape == (4, 3)
        assert seen[1][0, 0] == pytest.approx(2.01)
        np.testing.assert_allclose(seen[0][:, 1], [0.125, 0.375, 0.625, 0.875])

    def test_cfl_halving(self, caplog):
        """Test that large speeds split the step"""
        with caplog.at_level(logging.WARNING):
            sol = simulate(lambda x: 3.0 * np.ones_like(x), T=0.02, nx=100, dt=0.01)

        assert sol.substeps == 4
        assert sol.max_cfl <= 1.0
        assert 'CFL number' in caplog.text

    def test_blow_up(self):
        """Test that a runaway source stops the simulation"""
        with pytest.raises(SimulationBlowUp) as excinfo:
            simulate(lambda x: np.zeros_like(x), controller=lambda p: 1e9 * np.ones(len(p)), T=0.1, nx=10, dt=0.01)
        assert excinfo.value.step == 1

    def test_horizon_must_match_step(self):
        """Test that T must be a multiple of dt"""
        with pytest.raises(ValueError, match='multiple'):
            simulate(smooth_profile, T=0.015, dt=0.01)

    def test_transmissive_boundary(self):
        """Test that a constant state is steady without periodicity"""
        sol = simulate(lambda x: 0.4 * np.ones_like(x), T=0.1, nx=10, dt=0.01, periodic=False)

        np.testing.assert_allclose(sol.y[-1], 0.4)


class TestFunctional:
    def setup_method(self):
        """Set up test fixtures"""
        self.space = VariableSpace.standard(2, 1, n_u=1)

    def test_energy_of_constant_state(self):
        """Test the integral of y^2 for y = 0.3 on the unit square"""
        sol = simulate(lambda x: 0.3 * np.ones_like(x), T=1.0, nx=20, dt=0.01)

        value = functional_eval(sol, parse_polynomial('y1^2', self.space))

        assert value == pytest.approx(0.09)

    def test_input_cost(self):
        """Test the input term for u = 1 and y growing linearly"""
        sol = simulate(lambda x: np.zeros_like(x), controller=lambda p: np.ones(len(p)), T=0.5, nx=20, dt=0.01)

        value = functional_eval(sol, parse_polynomial('y1^2', self.space), [Polynomial.constant(self.space, 2.0)])

        assert value == pytest.approx(1.0 + 1.0 / 24.0, abs=1e-4)

    def test_unknown_variable(self):
        """Test that only Burgers variables are available"""
        sol = simulate(smooth_profile, T=0.1, nx=10, dt=0.01)
        space = VariableSpace.standard(3)

        with pytest.raises(ValueError, match='not available'):
            functional_eval(sol, parse_polynomial('x3', space))


class TestOutputs:
    def test_trajectory_csv(self, tmp_path):
        """Test the trajectory layout"""
        sol = simulate(smooth_profile, T=0.02, nx=5, dt=0.01)

        path = write_trajectory(sol, str(tmp_path / 'traj.csv'))

        with open(path) as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ['t', 'x', 'y', 'u']
        assert len(rows) == 1 + 3 * 5

    def test_summary_merges_keys(self, tmp_path):
        """Test that summary rows may carry different keys"""
        path = write_summary([{'run': 'open', 'cost': 1.0}, {'run': 'closed', 'final_energy': 0.5}],
                             str(tmp_path / 'summary.csv'))

        with open(path) as handle:
            rows = list(csv.DictReader(handle))
        assert list(rows[0]) == ['run', 'cost', 'final_energy']
        assert rows[1]['final_energy'] == '0.5'
