#!/usr/bin/env python3
"""
Pipeline Script for PDE Moment Relaxations

Runs analyze (or control, for problems with inputs) on every problem file in
data/problems and collects the bounds into one summary CSV. It can be
scheduled with cron like any other batch job.
"""

import glob
import os
import sys
import logging
from datetime import datetime

# Add the repository root to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.burgers_sim import write_summary
from src.cli import EXIT_OK, RunConfig, run
from src.config import OUTPUT_DIRECTORY
from src.problem import load_problem

PROBLEM_DIR = os.path.join(os.path.dirname(__file__), '..', 'data', 'problems')
LOG_DIR = os.path.join(os.path.dirname(__file__), '..', 'logs')

os.makedirs(LOG_DIR, exist_ok=True)

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(os.path.join(LOG_DIR, 'run_pipeline.log')),
        logging.StreamHandler(sys.stdout)
    ]
)


def run_pipeline(out_root: str = OUTPUT_DIRECTORY) -> bool:
    """Solve every bundled problem; returns False if any run failed"""
    rows = []
    ok = True
    for path in sorted(glob.glob(os.path.join(PROBLEM_DIR, '*.json'))):
        name = os.path.splitext(os.path.basename(path))[0]
        try:
            problem = load_problem(path)
            command = 'control' if problem.is_controlled else 'analyze'
            logging.info(f"Running {command} on {name}...")
            result = run(RunConfig(command=command, problem=path, out_dir=os.path.join(out_root, name)))
        except Exception as e:
            logging.error(f"Error while running {name}: {str(e)}")
            ok = False
            continue
        if result.exit_code != EXIT_OK:
            logging.error(f"{name} finished with exit code {result.exit_code}")
            ok = False
        for row in result.rows:
            rows.append(dict(row, exit_code=result.exit_code))
    if rows:
        write_summary(rows, os.path.join(out_root, 'pipeline_summary.csv'))
    return ok


def main():
    """Main function for the pipeline script"""
    print(f"PDE Moment Pipeline - {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print("=" * 60)

    success = run_pipeline()

    if success:
        print("Pipeline completed successfully!")
        sys.exit(0)
    else:
        print("Pipeline failed! Check logs for details.")
        sys.exit(1)


if __name__ == "__main__":
    main()
