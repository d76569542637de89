import os
from dotenv import load_dotenv

load_dotenv()

SOLVER_CONFIG = {
    'tol_gap': float(os.getenv('PDEMOM_TOL_GAP', '1e-8')),
    'tol_feas': float(os.getenv('PDEMOM_TOL_FEAS', '1e-8')),
    'tol_psd': float(os.getenv('PDEMOM_TOL_PSD', '1e-9')),
    'max_iter': int(os.getenv('PDEMOM_MAX_ITER', '200')),
    'psd_cap': int(os.getenv('PDEMOM_PSD_CAP', '500')),
    'step_fraction': float(os.getenv('PDEMOM_STEP_FRACTION', '0.95')),
    'near_optimal_gap': float(os.getenv('PDEMOM_NEAR_OPTIMAL_GAP', '1e-5')),
    'near_optimal_feas': float(os.getenv('PDEMOM_NEAR_OPTIMAL_FEAS', '1e-6')),
    'rank_tol': float(os.getenv('PDEMOM_RANK_TOL', '1e-10')),
    'fixed_psd_rel': float(os.getenv('PDEMOM_FIXED_PSD_REL', '1e-5')),
}

QUADRATURE_CONFIG = {
    'nodes': int(os.getenv('PDEMOM_QUAD_NODES', '12')),
    'tol': float(os.getenv('PDEMOM_QUAD_TOL', '1e-10')),
    'max_panels': int(os.getenv('PDEMOM_QUAD_MAX_PANELS', '16')),
}

SIMULATION_CONFIG = {
    'nx': int(os.getenv('PDEMOM_SIM_NX', '100')),
    'dt': float(os.getenv('PDEMOM_SIM_DT', '0.01')),
    'blowup': float(os.getenv('PDEMOM_SIM_BLOWUP', '1e6')),
}

EXTRACTION_CUTOFF = float(os.getenv('PDEMOM_EXTRACTION_CUTOFF', '1e-6'))

OUTPUT_DIRECTORY = os.getenv('PDEMOM_OUTPUT_DIR', './out')
LOG_DIRECTORY = os.getenv('PDEMOM_LOG_DIR', './logs')
