#!/usr/bin/env python3
"""
Burgers Reproduction Script

Solves the Burgers energy instance at d=4 and checks both bounds against the
conserved value 50/63, then solves the controlled instance at d=6, extracts
a degree-3 feedback law and runs it in closed loop on a 100-point grid with
dt = 0.01. Prints a verdict banner.
"""

import os
import sys
import logging
from datetime import datetime

# Add the repository root to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.assembly import build_sdp
from src.burgers_sim import functional_eval, simulate
from src.cli import burgers_setup
from src.control_extract import extract_controllers, saturate, write_controller
from src.problem import load_problem

PROBLEM_DIR = os.path.join(os.path.dirname(__file__), '..', 'data', 'problems')
OUT_DIR = os.path.join(os.path.dirname(__file__), '..', 'out', 'burgers')
LOG_DIR = os.path.join(os.path.dirname(__file__), '..', 'logs')

ENERGY = 50.0 / 63.0
ENERGY_TOL = 1e-5
ENERGY_DECAY = 0.05
COST_SLACK = 1e-3

os.makedirs(LOG_DIR, exist_ok=True)

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(os.path.join(LOG_DIR, 'reproduce_burgers.log')),
        logging.StreamHandler(sys.stdout)
    ]
)


def check_energy_bounds() -> bool:
    """Lower and upper bounds of the energy instance must bracket 50/63 tightly"""
    problem = load_problem(os.path.join(PROBLEM_DIR, 'burgers_energy.json'))
    sdp = build_sdp(problem, 4)
    logging.info(f"Energy relaxation: largest block {sdp.largest_block}, {sdp.A.shape[0]} rows")
    ok = True
    for sense in ('inf', 'sup'):
        _, result = sdp.solve(sense)
        report = result.report
        error = abs(report.primal_objective - ENERGY)
        logging.info(f"{sense}: {report.primal_objective:.10f} ({report.status.value}), error {error:.2e}")
        ok &= error <= ENERGY_TOL
    return ok


def check_closed_loop() -> bool:
    """Extract the controller and simulate; the energy must fall below 5% and the cost stay above the bound"""
    problem = load_problem(os.path.join(PROBLEM_DIR, 'burgers_control.json'))
    sdp = build_sdp(problem, 6)
    vectors, result = sdp.solve('inf')
    logging.info(f"Control cost lower bound: {result.report.primal_objective:.6f} ({result.report.status.value})")
    controller = extract_controllers(sdp, vectors, degree=3)[0]
    write_controller(controller, OUT_DIR)
    y0, t0, T, x_lo, x_hi, periodic = burgers_setup(problem)
    closed = simulate(y0, saturate(controller), T, nx=100, dt=0.01, x_lo=x_lo, x_hi=x_hi, periodic=periodic, t0=t0)
    open_loop = simulate(y0, None, T, nx=100, dt=0.01, x_lo=x_lo, x_hi=x_hi, periodic=periodic, t0=t0)
    cost = functional_eval(closed, problem.objective)
    baseline = functional_eval(open_loop, problem.objective)
    energy = closed.energy()
    logging.info(f"Closed-loop cost {cost:.6f}, open-loop cost {baseline:.6f}, final energy {energy[-1]:.3e}")
    lower = result.report.primal_objective
    return cost < baseline and energy[-1] <= ENERGY_DECAY * energy[0] and lower - COST_SLACK <= cost


def main():
    """Main function for the reproduction script"""
    print(f"Burgers Reproduction - {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print("=" * 60)

    try:
        bounds_ok = check_energy_bounds()
        control_ok = check_closed_loop()
    except Exception as e:
        logging.error(f"Error during reproduction: {str(e)}")
        bounds_ok = control_ok = False

    print(f"Energy bounds within {ENERGY_TOL:g} of 50/63: {'PASS' if bounds_ok else 'FAIL'}")
    print(f"Closed-loop energy below 5%, cost above the bound: {'PASS' if control_ok else 'FAIL'}")
    print("=" * 60)
    sys.exit(0 if bounds_ok and control_ok else 1)


if __name__ == "__main__":
    main()
