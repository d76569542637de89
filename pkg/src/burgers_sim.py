"""
Finite-volume reference solver for the 1-D Burgers equation

    dy/dx1 + d(y^2/2)/dx2 = u(x1, x2, y)

with x1 playing the role of time. Local Lax-Friedrichs (Rusanov) fluxes,
forward Euler steps and explicit source splitting; periodic or transmissive
boundaries in x2.
"""

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from src.config import SIMULATION_CONFIG
from src.polyalg import Polynomial, poly_eval

logger = logging.getLogger(__name__)

Controller = Callable[[np.ndarray], np.ndarray]


class SimulationBlowUp(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class GridSolution:
    dt: float
    nx: int
    periodic: bool
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    x_lo: float = 0.0
    x_hi: float = 1.0
    substeps: int = 1
    max_cfl: float = 0.0
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.nx

    @property
    def T(self) -> float:
        return float(self.t[-1] - self.t[0])

    def mass(self) -> np.ndarray:
        """Integral of y over x2 at every recorded step"""
        return self.y.sum(axis=1) * self.dx

    def energy(self) -> np.ndarray:
        """Integral of y^2 over x2 at every recorded step"""
        return (self.y ** 2).sum(axis=1) * self.dx


def _rusanov(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    speed = np.maximum(np.abs(left), np.abs(right))
    return 0.25 * (left ** 2 + right ** 2) - 0.5 * speed * (right - left)


def _padded(y: np.ndarray, periodic: bool) -> np.ndarray:
    if periodic:
        return np.concatenate(([y[-1]], y, [y[0]]))
    return np.concatenate(([y[0]], y, [y[-1]]))


def _step(y: np.ndarray, dt: float, dx: float, periodic: bool, source: Optional[np.ndarray]) -> np.ndarray:
    padded = _padded(y, periodic)
    flux = _rusanov(padded[:-1], padded[1:])
    updated = y - dt / dx * (flux[1:] - flux[:-1])
    if source is not None:
        updated = updated + dt * source
    return updated


def simulate(y0: Callable[[np.ndarray], np.ndarray], controller: Optional[Controller] = None, T: float = 1.0,
             nx: Optional[int] = None, dt: Optional[float] = None, x_lo: float = 0.0, x_hi: float = 1.0,
             periodic: bool = True, t0: float = 0.0, blowup: Optional[float] = None) -> GridSolution:
    """March y from x1 = t0 to t0 + T, recording every dt; dt is split when the CFL number exceeds 1"""
    nx = SIMULATION_CONFIG['nx'] if nx is None else nx
    dt = SIMULATION_CONFIG['dt'] if dt is None else dt
    blowup = SIMULATION_CONFIG['blowup'] if blowup is None else blowup
    dx = (x_hi - x_lo) / nx
    x = x_lo + (np.arange(nx) + 0.5) * dx
    y = np.asarray(y0(x), dtype=float) * np.ones(nx)
    steps = int(round(T / dt))
    if not np.isclose(steps * dt, T):
        raise ValueError(f"Horizon {T} is not a multiple of the step {dt}")

    def control(t: float, values: np.ndarray) -> Optional[np.ndarray]:
        if controller is None:
            return None
        points = np.column_stack([np.full(nx, t), x, values])
        return np.asarray(controller(points), dtype=float)

    ys = [y.copy()]
    us = []
    max_substeps = 1
    max_cfl = 0.0
    warned = False
    for n in range(steps):
        t = t0 + n * dt
        u_now = control(t, y)
        us.append(np.zeros(nx) if u_now is None else u_now)
        remaining = dt
        h = dt
        substeps = 0
        source = u_now
        while remaining > 1e-12 * dt:
            speed = float(np.max(np.abs(y), initial=0.0))
            while speed * h / dx > 1.0:
                h /= 2
            h = min(h, remaining)
            if h < dt and not warned:
                logger.warning(f"CFL number {speed * dt / dx:.2f} > 1 at step {n}; halving dt to {h:.3g}")
                warned = True
            if substeps:
                source = control(t + dt - remaining, y)
            max_cfl = max(max_cfl, speed * h / dx)
            y = _step(y, h, dx, periodic, source)
            remaining -= h
            substeps += 1
        max_substeps = max(max_substeps, substeps)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > blowup:
            raise SimulationBlowUp(f"|y| exceeded {blowup:g}", n + 1)
        ys.append(y.copy())
    us.append(np.zeros(nx) if controller is None else control(t0 + steps * dt, y))

    solution = GridSolution(dt, nx, periodic, t0 + dt * np.arange(steps + 1), x, np.array(ys), np.array(us),
                            x_lo, x_hi, max_substeps, max_cfl)
    energy = solution.energy()
    mass = solution.mass()
    solution.diagnostics = {'initial_energy': float(energy[0]), 'final_energy': float(energy[-1]),
                            'initial_mass': float(mass[0]), 'final_mass': float(mass[-1]),
                            'max_cfl': max_cfl, 'substeps': float(max_substeps)}
    logger.info(f"Simulated {steps} steps (nx={nx}, dt={dt}, substeps {max_substeps}): "
                f"energy {energy[0]:.6g} -> {energy[-1]:.6g}")
    return solution


def _time_weights(t: np.ndarray) -> np.ndarray:
    if len(t) < 2:
        return np.zeros(len(t))
    h = np.diff(t)
    w = np.zeros(len(t))
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def _column(sol: GridSolution, name: str, n: int, warned: List[bool]) -> np.ndarray:
    if name == 'x1':
        return np.full(sol.nx, sol.t[n])
    if name == 'x2':
        return sol.x
    if name == 'y1':
        return sol.y[n]
    if name == 'u1':
        return sol.u[n]
    if name in ('z1_1', 'z1_2'):
        if not warned[0]:
            logger.warning(f"Derivative {name} approximated by central differences; reduced accuracy")
            warned[0] = True
        if name == 'z1_2':
            padded = _padded(sol.y[n], sol.periodic)
            return (padded[2:] - padded[:-2]) / (2 * sol.dx)
        return np.gradient(sol.y, sol.t, axis=0)[n] if len(sol.t) > 1 else np.zeros(sol.nx)
    raise ValueError(f"Variable '{name}' is not available on a Burgers grid")


def functional_eval(sol: GridSolution, L: Polynomial, L_u: Sequence[Polynomial] = ()) -> float:
    """Rectangle rule in x2 and trapezoid rule in x1 of L(x, y, Dy) plus sum_k L_u_k * u_k"""
    weights = _time_weights(sol.t)
    warned = [False]
    total = 0.0
    inputs = [f"u{k}" for k in range(1, len(L_u) + 1)]
    for n, w in enumerate(weights):
        if w == 0.0:
            continue
        integrand = _evaluate(L, sol, n, warned)
        for name, p in zip(inputs, L_u):
            integrand = integrand + _evaluate(p, sol, n, warned) * _column(sol, name, n, warned)
        total += w * float(integrand.sum()) * sol.dx
    return total


def _evaluate(p: Polynomial, sol: GridSolution, n: int, warned: List[bool]) -> np.ndarray:
    used = set(p.variables())
    columns = []
    for name in p.space.names:
        columns.append(_column(sol, name, n, warned) if name in used else np.zeros(sol.nx))
    return np.asarray(poly_eval(p, np.column_stack(columns))) * np.ones(sol.nx)


def write_trajectory(sol: GridSolution, path: str) -> str:
    """``t,x,y,u`` rows for every recorded step and cell"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(['t', 'x', 'y', 'u'])
        for n, t in enumerate(sol.t):
            for i, x in enumerate(sol.x):
                writer.writerow([repr(float(t)), repr(float(x)), repr(float(sol.y[n, i])), repr(float(sol.u[n, i]))])
    logger.info(f"Wrote trajectory with {len(sol.t)} steps to {path}")
    return path


def write_summary(rows: Sequence[Mapping[str, object]], path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    keys = []
    for row in rows:
        keys += [k for k in row if k not in keys]
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.DictWriter(handle, fieldnames=keys)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path
