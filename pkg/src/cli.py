"""
Command-line entry point: problem file -> relaxation -> solve -> extract -> simulate.

Commands: analyze, control, simulate, certify, sweep, export-sdpa. Every
command writes a human-readable report with ``=== SECTION ===`` headers
and a machine CSV into the output directory. Exit codes: 0 success, 2 parse
error, 3 solver failure, 4 invariant violation.
"""

import argparse
import csv
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from logging.handlers import RotatingFileHandler
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.assembly import AssembledSDP, AssemblyError, build_sdp
from src.burgers_sim import (SimulationBlowUp, functional_eval, simulate as simulate_grid, write_summary,
                             write_trajectory)
from src.config import LOG_DIRECTORY, OUTPUT_DIRECTORY
from src.control_extract import (ExtractionError, extract_controllers, read_controller, saturate,
                                 write_controller)
from src.oracle import GraphSolution, OracleError, graph_moments
from src.problem import BoundaryKind, PDEProblem, ProblemFileError, Sense, load_problem
from src.sdpa_format import export_sdpa
from src.sdpsolve import SolveReport, SolveStatus, SolverError, Tolerances, check_solution
from src.semialg import GeometryError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SOLVER = 3
EXIT_INVARIANT = 4

COMMANDS = ('analyze', 'control', 'simulate', 'export-sdpa', 'certify', 'sweep')
MASS_TOL = 1e-6
SANDWICH_TOL = 1e-6
CERTIFY_TOL = 1e-8
PSD_TOL = 1e-9


class ConfigError(ValueError):
    """Raised for invalid command-line configurations"""


def setup_logging(log_dir: Optional[str] = None) -> logging.Logger:
    """Configure application logging"""
    log_dir = log_dir or LOG_DIRECTORY
    os.makedirs(log_dir, exist_ok=True)

    logger = logging.getLogger()
    logger.setLevel(logging.INFO)

    # File handler with rotation (max 10MB per file, keep 5 backup files)
    file_handler = RotatingFileHandler(
        os.path.join(log_dir, 'pdemoments.log'),
        maxBytes=10 * 1024 * 1024,
        backupCount=5,
        encoding='utf-8'
    )
    file_handler.setLevel(logging.INFO)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.INFO)

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    file_handler.setFormatter(formatter)
    console_handler.setFormatter(formatter)

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)
    return logger


@dataclass
class RunConfig:
    command: str
    problem: str
    d: Optional[int] = None
    d_list: Tuple[int, ...] = ()
    d_tilde: Optional[int] = None
    out_dir: str = OUTPUT_DIRECTORY
    tol_gap: Optional[float] = None
    tol_feas: Optional[float] = None
    max_iter: Optional[int] = None
    psd_cap: Optional[int] = None
    export_sdpa: bool = False
    solution: Tuple[str, ...] = ()
    input_laws: Tuple[str, ...] = ()
    controller: Tuple[str, ...] = ()
    controller_degree: Optional[int] = None
    nx: Optional[int] = None
    dt: Optional[float] = None
    bounds: Optional[Tuple[float, float]] = None
    jobs: int = 1
    log_dir: Optional[str] = None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"Unknown command '{self.command}'; choose from {COMMANDS}")
        for d in ((self.d,) if self.d is not None else ()) + tuple(self.d_list):
            if d < 0 or d % 2:
                raise ConfigError(f"Relaxation degree must be even and nonnegative, got {d}")
        if self.command == 'sweep' and not self.d_list:
            raise ConfigError("sweep needs a degree list (--sweep 4,6,8)")
        if self.command == 'certify' and not self.solution:
            raise ConfigError("certify needs at least one --solution expression")
        os.makedirs(self.out_dir, exist_ok=True)
        if not os.access(self.out_dir, os.W_OK):
            raise ConfigError(f"Output directory {self.out_dir} is not writable")

    def tolerances(self) -> Tolerances:
        return Tolerances.from_config(tol_gap=self.tol_gap, tol_feas=self.tol_feas, max_iter=self.max_iter,
                                      psd_cap=self.psd_cap)


@dataclass
class CommandResult:
    exit_code: int
    report: str
    files: List[str] = field(default_factory=list)
    rows: List[Dict[str, object]] = field(default_factory=list)


# --- helpers ---------------------------------------------------------------

def _senses(problem: PDEProblem) -> List[str]:
    if problem.is_controlled or problem.sense is Sense.INF:
        return ['inf']
    if problem.sense is Sense.SUP:
        return ['sup']
    return ['inf', 'sup']


def _build(problem: PDEProblem, config: RunConfig, d: Optional[int] = None) -> AssembledSDP:
    return build_sdp(problem, config.d if d is None else d, config.d_tilde)


def _verdict(report: SolveReport) -> str:
    return report.status.value if report.is_verified else f"{report.status.value}, unverified estimate"


def _header(title: str, problem: PDEProblem, config: RunConfig) -> str:
    text = f"{title} for '{problem.name}'\n"
    text += f"Problem file: {config.problem}\n\n"
    return text


def _size_section(sdp: AssembledSDP) -> str:
    text = "=== RELAXATION ===\n"
    text += f"d={sdp.d}, test degree d'={sdp.d_prime}, z-degree cap={sdp.d_tilde}\n"
    text += f"Moments: {sdp.n_columns}, equality rows: {sdp.A.shape[0]}\n"
    text += f"PSD blocks: {len(sdp.blocks)} (largest {sdp.largest_block}, total size {sdp.total_psd_dimension})\n"
    text += f"Duplicate rows removed: {sdp.duplicates_removed}, z-capped rows: {sdp.capped_rows}\n"
    text += f"Convergence guaranteed: {'yes' if sdp.convergence_guaranteed else 'no (Y or Z unbounded)'}\n"
    return text


def _diagnostics(sense: str, report: SolveReport) -> str:
    text = f"{sense}: status {report.status.value}, objective {report.primal_objective!r}, "
    text += f"certificate {report.dual_objective!r}\n"
    text += f"  gap {report.gap:.3e}, residual {report.residual:.3e}, min eigenvalue {report.min_eigenvalue:.3e}, "
    text += f"iterations {report.iterations}, dropped rows {report.dropped_rows}\n"
    if report.message:
        text += f"  note: {report.message}\n"
    text += f"  time: {report.wall_time:.2f} s\n"
    return text


def _mass_checks(sdp: AssembledSDP, s: np.ndarray) -> Tuple[str, bool]:
    text = ""
    ok = True
    for name, (mass, expected) in sdp.mass_identities(s).items():
        good = abs(mass - expected) <= MASS_TOL * max(1.0, abs(expected))
        ok &= good
        text += f"mass {name}: {mass!r} (expected {expected!r}) {'ok' if good else 'VIOLATED'}\n"
    return text, ok


def _write_report(config: RunConfig, stem: str, text: str) -> str:
    path = os.path.join(config.out_dir, f"{stem}.txt")
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(text)
    logger.info(f"Wrote report {path}")
    return path


def _write_rows(config: RunConfig, stem: str, rows: Sequence[Dict[str, object]]) -> str:
    path = os.path.join(config.out_dir, f"{stem}.csv")
    keys = []
    for row in rows:
        keys += [k for k in row if k not in keys]
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.DictWriter(handle, fieldnames=keys)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def _bound_row(problem: PDEProblem, d: int, sense: str, report: SolveReport) -> Dict[str, object]:
    bound = '' if report.bound is None else repr(report.bound)
    return {'problem': problem.name, 'd': d, 'sense': sense, 'bound': bound,
            'estimate': repr(report.primal_objective),
            'certificate': repr(report.dual_objective), 'status': report.status.value,
            'verified': report.is_verified, 'gap': f"{report.gap:.3e}", 'residual': f"{report.residual:.3e}",
            'min_eigenvalue': f"{report.min_eigenvalue:.3e}", 'iterations': report.iterations,
            'solve_time': f"{report.wall_time:.3f}"}


def _failed(report: SolveReport) -> bool:
    return report.status in (SolveStatus.FAILURE, SolveStatus.INFEASIBLE, SolveStatus.UNBOUNDED)


# --- commands --------------------------------------------------------------

def analyze(config: RunConfig) -> CommandResult:
    """Lower and upper bounds on the objective of an uncontrolled problem"""
    problem = load_problem(config.problem)
    if problem.is_controlled:
        raise ConfigError("analyze needs a problem without controls; use 'control'")
    sdp = _build(problem, config)
    tol = config.tolerances()
    text = _header("Bounds report", problem, config) + _size_section(sdp)
    bounds_text = "\n=== BOUNDS ===\n"
    diag_text = "\n=== SOLVER DIAGNOSTICS ===\n"
    check_text = "\n=== INVARIANT CHECKS ===\n"
    rows, files = [], []
    reports = {}
    exit_code = EXIT_OK
    for sense in _senses(problem):
        vectors, result = sdp.solve(sense, tol)
        report = result.report
        reports[sense] = report
        label = 'lower (inf)' if sense == 'inf' else 'upper (sup)'
        bounds_text += f"{label}: {report.primal_objective!r} [{_verdict(report)}]\n"
        diag_text += _diagnostics(sense, report)
        rows.append(_bound_row(problem, sdp.d, sense, report))
        for name, vector in vectors.items():
            path = os.path.join(config.out_dir, f"moments_{sense}_{name}.csv")
            vector.to_csv(path)
            files.append(path)
        if _failed(report):
            exit_code = max(exit_code, EXIT_SOLVER)
            continue
        mass_text, ok = _mass_checks(sdp, result.s)
        check_text += f"[{sense}]\n" + mass_text
        if not ok:
            exit_code = EXIT_INVARIANT
        if config.export_sdpa:
            files.append(str(export_sdpa(sdp.conic(sense), os.path.join(
                config.out_dir, f"{problem.name}_d{sdp.d}_{sense}.dat-s"))))
    if 'inf' in reports and 'sup' in reports and not any(_failed(r) for r in reports.values()):
        lower, upper = reports['inf'].primal_objective, reports['sup'].primal_objective
        good = lower <= upper + SANDWICH_TOL
        check_text += f"lower <= upper: {'ok' if good else 'VIOLATED'}\n"
        if not good:
            exit_code = EXIT_INVARIANT
    text += bounds_text + diag_text + check_text
    files.insert(0, _write_report(config, 'analyze_report', text))
    files.insert(1, _write_rows(config, 'bounds', rows))
    return CommandResult(exit_code, text, files, rows)


def control(config: RunConfig) -> CommandResult:
    """Solve the control relaxation and extract polynomial feedback laws"""
    problem = load_problem(config.problem)
    if not problem.is_controlled:
        raise ConfigError("control needs a problem that declares controls")
    sdp = _build(problem, config)
    vectors, result = sdp.solve('inf', config.tolerances())
    report = result.report
    text = _header("Control report", problem, config) + _size_section(sdp)
    text += "\n=== COST BOUND ===\n"
    text += f"p_d lower bound: {report.primal_objective!r} [{_verdict(report)}]\n"
    text += "\n=== SOLVER DIAGNOSTICS ===\n" + _diagnostics('inf', report)
    rows = [_bound_row(problem, sdp.d, 'inf', report)]
    files = []
    if _failed(report):
        text += "\nController extraction skipped: the relaxation was not solved\n"
        files.append(_write_report(config, 'control_report', text))
        files.append(_write_rows(config, 'bounds', rows))
        return CommandResult(EXIT_SOLVER, text, files, rows)
    text += "\n=== CONTROLLERS ===\n"
    for controller in extract_controllers(sdp, vectors, config.controller_degree):
        text += f"{controller.label} (degree {controller.degree}, from {controller.source}): "
        text += f"residual {controller.residual:.3e}, condition {controller.condition:.3e}\n"
        text += f"  kappa = {controller.kappa}\n"
        files.extend(write_controller(controller, config.out_dir))
    mass_text, ok = _mass_checks(sdp, result.s)
    text += "\n=== INVARIANT CHECKS ===\n" + mass_text
    files.insert(0, _write_report(config, 'control_report', text))
    files.insert(1, _write_rows(config, 'bounds', rows))
    return CommandResult(EXIT_OK if ok else EXIT_INVARIANT, text, files, rows)


def burgers_setup(problem: PDEProblem):
    """Initial profile, horizon and boundary type of a Burgers-type problem on a box"""
    geometry = problem.geometry
    if not geometry.is_box or problem.n != 2 or problem.n_y != 1:
        raise ConfigError("simulate handles one unknown on a 2-D box (x1 = time, x2 = space)")
    try:
        initial = geometry.piece('x1=lo')
        x2_lo, x2_hi = geometry.piece('x2=lo'), geometry.piece('x2=hi')
    except GeometryError as e:
        raise ConfigError(str(e)) from e
    bc = problem.condition_for(initial.index)
    if bc is None or bc.kind is not BoundaryKind.DIRICHLET:
        raise ConfigError("simulate needs a Dirichlet condition on the piece x1=lo")
    component = bc.values[0]
    t0 = geometry.lo[0]

    def y0(x: np.ndarray) -> np.ndarray:
        return component.evaluate(np.column_stack([np.full(len(x), t0), x]))

    periodic = any(c.kind is BoundaryKind.PERIODIC and c.piece in (x2_lo.index, x2_hi.index)
                   for c in problem.boundary)
    return y0, t0, geometry.hi[0] - t0, geometry.lo[1], geometry.hi[1], periodic


def simulate(config: RunConfig) -> CommandResult:
    """Grid simulation of a Burgers-type problem, optionally in closed loop"""
    problem = load_problem(config.problem)
    y0, t0, T, x_lo, x_hi, periodic = burgers_setup(problem)
    saturated = None
    if config.controller:
        controller = read_controller(config.controller[0])
        saturated = saturate(controller)
    text = _header("Simulation report", problem, config)
    try:
        sol = simulate_grid(y0, saturated, T, config.nx, config.dt, x_lo, x_hi, periodic, t0)
    except SimulationBlowUp as e:
        logger.error(f"Simulation blew up: {e}")
        text += f"=== SIMULATION ===\nblow-up at step {e.step}: {e}\n"
        return CommandResult(EXIT_SOLVER, text, [_write_report(config, 'simulate_report', text)])
    value = functional_eval(sol, problem.objective, problem.L_u)
    text += "=== SIMULATION ===\n"
    text += f"nx={sol.nx}, dt={sol.dt}, periodic={sol.periodic}, max CFL {sol.max_cfl:.3f}, substeps {sol.substeps}\n"
    text += f"energy {sol.diagnostics['initial_energy']!r} -> {sol.diagnostics['final_energy']!r}\n"
    text += f"mass {sol.diagnostics['initial_mass']!r} -> {sol.diagnostics['final_mass']!r}\n"
    text += "\n=== FUNCTIONAL ===\n"
    text += f"value: {value!r}\n"
    row = {'problem': problem.name, 'nx': sol.nx, 'dt': sol.dt, 'functional': repr(value),
           'initial_energy': repr(sol.diagnostics['initial_energy']),
           'final_energy': repr(sol.diagnostics['final_energy'])}
    if saturated is not None:
        text += "\n=== CONTROLLER ===\n"
        text += f"raw range [{saturated.raw_range[0]:.4g}, {saturated.raw_range[1]:.4g}], "
        text += f"clamped range [{saturated.clamped_range[0]:.4g}, {saturated.clamped_range[1]:.4g}]\n"
        row.update(raw_min=saturated.raw_range[0], raw_max=saturated.raw_range[1],
                   clamped_min=saturated.clamped_range[0], clamped_max=saturated.clamped_range[1])
    exit_code = EXIT_OK
    if config.bounds is not None:
        lower, upper = config.bounds
        good = lower - 1e-3 <= value <= upper + 1e-3
        text += f"\n=== INVARIANT CHECKS ===\nsandwich [{lower!r}, {upper!r}]: {'ok' if good else 'VIOLATED'}\n"
        if not good:
            exit_code = EXIT_INVARIANT
    files = [_write_report(config, 'simulate_report', text)]
    files.append(write_trajectory(sol, os.path.join(config.out_dir, 'trajectory.csv')))
    files.append(write_summary([row], os.path.join(config.out_dir, 'simulation_summary.csv')))
    return CommandResult(exit_code, text, files, [row])


def certify(config: RunConfig) -> CommandResult:
    """Residuals of the graph moments of a closed-form candidate solution"""
    problem = load_problem(config.problem)
    sdp = _build(problem, config)
    solution = GraphSolution.from_expressions(config.solution, problem.n, config.input_laws)
    s = graph_moments(sdp, solution)
    check = check_solution(sdp.conic('inf'), s)
    families = sdp.residuals(s)
    text = _header("Certification report", problem, config) + _size_section(sdp)
    text += "\n=== CANDIDATE ===\n"
    for k, expr in enumerate(config.solution, start=1):
        text += f"y{k} = {expr}\n"
    for k, expr in enumerate(config.input_laws, start=1):
        text += f"u{k} = {expr}\n"
    text += "\n=== RESIDUALS ===\n"
    text += f"max |A s - b|: {check.residual:.3e}\n"
    rows = []
    for family, value in sorted(families.items()):
        flag = 'VIOLATED' if value > CERTIFY_TOL else 'ok'
        text += f"{family}: {value:.3e} {flag}\n"
        rows.append({'family': family, 'residual': f"{value:.3e}", 'ok': value <= CERTIFY_TOL})
    text += "\n=== PSD BLOCKS ===\n"
    text += f"min eigenvalue: {check.min_eigenvalue:.3e}\n"
    for label, value in check.block_min_eigenvalues.items():
        if value < -PSD_TOL:
            text += f"{label}: {value:.3e} VIOLATED\n"
    good = check.residual <= CERTIFY_TOL and check.min_eigenvalue >= -PSD_TOL
    text += f"\nverdict: {'feasible' if good else 'not feasible'}\n"
    files = [_write_report(config, 'certify_report', text), _write_rows(config, 'certify', rows)]
    return CommandResult(EXIT_OK if good else EXIT_INVARIANT, text, files, rows)


def _sweep_job(problem_path: str, d: int, d_tilde: Optional[int], tol: Dict[str, object]) -> Dict[str, object]:
    """One sweep entry; failures are returned as a marked row"""
    row = {'d': d}
    try:
        problem = load_problem(problem_path)
        start = time.perf_counter()
        sdp = build_sdp(problem, d, d_tilde)
        row['assembly_time'] = f"{time.perf_counter() - start:.3f}"
        row['largest_block'] = sdp.largest_block
        solve_time = 0.0
        for sense in _senses(problem):
            _, result = sdp.solve(sense, Tolerances(**tol))
            report = result.report
            key = 'lower' if sense == 'inf' else 'upper'
            row[key] = report.primal_objective
            row[f"{key}_status"] = report.status.value
            solve_time += report.wall_time
        row['solve_time'] = f"{solve_time:.3f}"
        row['failed'] = any(row.get(f"{k}_status") in (SolveStatus.FAILURE.value, SolveStatus.INFEASIBLE.value,
                                                      SolveStatus.UNBOUNDED.value) for k in ('lower', 'upper'))
    except (ProblemFileError, AssemblyError, SolverError) as e:
        logger.error(f"Sweep entry d={d} failed: {e}")
        row['failed'] = True
        row['error'] = str(e)
    return row


def _monotone(rows: Sequence[Dict[str, object]]) -> Tuple[bool, bool]:
    valid = [r for r in rows if not r.get('failed')]
    lower = [r['lower'] for r in valid if 'lower' in r]
    upper = [r['upper'] for r in valid if 'upper' in r]
    lower_ok = all(b >= a - SANDWICH_TOL for a, b in zip(lower, lower[1:]))
    upper_ok = all(b <= a + SANDWICH_TOL for a, b in zip(upper, upper[1:]))
    return lower_ok, upper_ok


def sweep(config: RunConfig) -> CommandResult:
    """Bounds across relaxation degrees with a monotonicity verdict"""
    problem = load_problem(config.problem)
    tol = asdict(config.tolerances())
    degrees = sorted(config.d_list)
    if config.jobs > 1 and len(degrees) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = [pool.submit(_sweep_job, config.problem, d, config.d_tilde, tol) for d in degrees]
            rows = [f.result() for f in futures]
    else:
        rows = [_sweep_job(config.problem, d, config.d_tilde, tol) for d in degrees]
    lower_ok, upper_ok = _monotone(rows)
    text = _header("Hierarchy sweep", problem, config)
    text += "=== BOUNDS BY DEGREE ===\n"
    text += f"{'d':>3} {'lower':>16} {'upper':>16} {'block':>6} {'assembly s':>11} {'solve s':>9}  status\n"
    for row in rows:
        if row.get('error'):
            text += f"{row['d']:>3} FAILED: {row['error']}\n"
            continue
        lower = f"{row['lower']:.10g}" if 'lower' in row else '-'
        upper = f"{row['upper']:.10g}" if 'upper' in row else '-'
        statuses = ', '.join(str(row[k]) for k in ('lower_status', 'upper_status') if k in row)
        if row.get('failed'):
            statuses += ' (FAILED)'
        text += (f"{row['d']:>3} {lower:>16} {upper:>16} {row['largest_block']:>6} "
                 f"{row['assembly_time']:>11} {row['solve_time']:>9}  {statuses}\n")
    text += "\n=== MONOTONICITY ===\n"
    text += f"lower nondecreasing: {'yes' if lower_ok else 'NO'}\n"
    text += f"upper nonincreasing: {'yes' if upper_ok else 'NO'}\n"
    files = [_write_report(config, 'sweep_report', text), _write_rows(config, 'sweep', rows)]
    exit_code = EXIT_OK if lower_ok and upper_ok else EXIT_INVARIANT
    if exit_code == EXIT_OK and rows and all(r.get('failed') for r in rows):
        exit_code = EXIT_SOLVER
    return CommandResult(exit_code, text, files, list(rows))


def export_sdpa_command(config: RunConfig) -> CommandResult:
    problem = load_problem(config.problem)
    sdp = _build(problem, config)
    files = []
    for sense in _senses(problem):
        path = os.path.join(config.out_dir, f"{problem.name}_d{sdp.d}_{sense}.dat-s")
        files.append(str(export_sdpa(sdp.conic(sense), path)))
    text = _header("SDPA export", problem, config) + _size_section(sdp)
    text += "\n=== FILES ===\n" + ''.join(f"{f}\n" for f in files)
    return CommandResult(EXIT_OK, text, files)


HANDLERS = {
    'analyze': analyze,
    'control': control,
    'simulate': simulate,
    'certify': certify,
    'sweep': sweep,
    'export-sdpa': export_sdpa_command,
}


def run(config: RunConfig) -> CommandResult:
    """Validate, dispatch and map failures onto exit codes"""
    try:
        config.validate()
        return HANDLERS[config.command](config)
    except (ProblemFileError, ConfigError, AssemblyError, GeometryError) as e:
        logger.error(f"Invalid input: {e}")
        return CommandResult(EXIT_PARSE, f"error: {e}\n")
    except (SolverError, ExtractionError, OracleError) as e:
        logger.error(f"Numerical failure: {e}")
        return CommandResult(EXIT_SOLVER, f"error: {e}\n")


def _degree_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(',') if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got '{text}'")


def _bounds(text: str) -> Tuple[float, float]:
    try:
        lower, upper = (float(v) for v in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lower,upper', got '{text}'")
    return lower, upper


def parse_args(argv: Optional[Sequence[str]] = None) -> RunConfig:
    parser = argparse.ArgumentParser(prog='pdemoments',
                                     description="Moment relaxations for bounds and control of polynomial PDEs")
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--problem', required=True, help="problem file (JSON)")
    parser.add_argument('--d', type=int, help="relaxation degree (even)")
    parser.add_argument('--d-tilde', type=int, help="degree cap on derivative variables")
    parser.add_argument('--sweep', type=_degree_list, default=(), help="degree list for sweep, e.g. 4,6,8")
    parser.add_argument('--out', default=OUTPUT_DIRECTORY, help="output directory")
    parser.add_argument('--tol-gap', type=float)
    parser.add_argument('--tol-feas', type=float)
    parser.add_argument('--max-iter', type=int)
    parser.add_argument('--psd-cap', type=int)
    parser.add_argument('--export-sdpa', action='store_true', help="also write SDPA files (analyze)")
    parser.add_argument('--solution', action='append', default=[], help="y_k(x) for certify, once per unknown")
    parser.add_argument('--input-law', action='append', default=[], help="u_k(x) for certify")
    parser.add_argument('--controller', action='append', default=[], help="controller file for simulate")
    parser.add_argument('--controller-degree', type=int)
    parser.add_argument('--nx', type=int)
    parser.add_argument('--dt', type=float)
    parser.add_argument('--bounds', type=_bounds, help="'lower,upper' checked against the simulated value")
    parser.add_argument('--jobs', type=int, default=1, help="parallel sweep workers")
    parser.add_argument('--log-dir', default=None)
    args = parser.parse_args(argv)
    config = RunConfig(
        command=args.command, problem=args.problem, d=args.d, d_list=tuple(args.sweep), d_tilde=args.d_tilde,
        out_dir=args.out, tol_gap=args.tol_gap, tol_feas=args.tol_feas, max_iter=args.max_iter,
        psd_cap=args.psd_cap, export_sdpa=args.export_sdpa, solution=tuple(args.solution),
        input_laws=tuple(args.input_law), controller=tuple(args.controller),
        controller_degree=args.controller_degree, nx=args.nx, dt=args.dt, bounds=args.bounds, jobs=args.jobs,
        log_dir=args.log_dir)
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        config = parse_args(argv)
    except SystemExit as e:
        return EXIT_PARSE if e.code else EXIT_OK
    setup_logging(config.log_dir)
    result = run(config)
    print(result.report)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
