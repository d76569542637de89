"""Composite Gauss-Legendre quadrature on boxes with a panel-doubling convergence check."""

import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from src.config import QUADRATURE_CONFIG

logger = logging.getLogger(__name__)


class QuadratureError(RuntimeError):
    """Raised when refinement does not reach the requested tolerance"""


def gauss_legendre_grid(lo: Sequence[float], hi: Sequence[float], nodes: int,
                        panels: int) -> Tuple[np.ndarray, np.ndarray]:
    """Tensor composite rule: points of shape (npts, k) and weights of shape (npts,)"""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    k = lo.size
    if k == 0:
        return np.zeros((1, 0)), np.ones(1)
    ref_x, ref_w = leggauss(nodes)
    axes_points = []
    axes_weights = []
    for a, b in zip(lo, hi):
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        axes_points.append((mid[:, None] + half[:, None] * ref_x[None, :]).ravel())
        axes_weights.append((half[:, None] * ref_w[None, :]).ravel())
    mesh = np.meshgrid(*axes_points, indexing='ij')
    wmesh = np.meshgrid(*axes_weights, indexing='ij')
    points = np.stack([m.ravel() for m in mesh], axis=1)
    weights = np.prod(np.stack([w.ravel() for w in wmesh], axis=1), axis=1)
    return points, weights


def monomial_table(values: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    """Rows: points; columns: prod(values ** exponent) for each exponent row"""
    values = np.atleast_2d(values)
    if exponents.size == 0:
        return np.ones((values.shape[0], exponents.shape[0]))
    table = np.ones((values.shape[0], exponents.shape[0]))
    for i in range(exponents.shape[1]):
        column = exponents[:, i]
        if np.any(column):
            table *= values[:, i:i + 1] ** column[None, :]
    return table


def converged_moments(field: Callable[[np.ndarray], np.ndarray], lo: Sequence[float], hi: Sequence[float],
                      exponents: Sequence[Sequence[int]], weight: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                      tol: Optional[float] = None, nodes: Optional[int] = None,
                      max_panels: Optional[int] = None) -> np.ndarray:
    """Integrals over the box of weight(t) * prod(field(t) ** e) for each exponent row e.

    ``field`` maps quadrature points (npts, k) to variable values (npts, dim).
    Panels are doubled until the largest change is below ``tol`` relative.
    """
    tol = QUADRATURE_CONFIG['tol'] if tol is None else tol
    nodes = QUADRATURE_CONFIG['nodes'] if nodes is None else nodes
    max_panels = QUADRATURE_CONFIG['max_panels'] if max_panels is None else max_panels
    exps = np.asarray(exponents, dtype=int)
    if exps.ndim == 1:
        exps = exps.reshape(len(exps), -1)

    def integrate(panels: int) -> np.ndarray:
        points, weights = gauss_legendre_grid(lo, hi, nodes, panels)
        if weight is not None:
            weights = weights * weight(points)
        return weights @ monomial_table(field(points), exps)

    panels = 1
    previous = integrate(panels)
    while True:
        panels *= 2
        current = integrate(panels)
        change = np.max(np.abs(current - previous) / np.maximum(1.0, np.abs(current)), initial=0.0)
        if change < tol:
            logger.debug(f"Quadrature converged with {panels} panels (change {change:.2e})")
            return current
        if panels >= max_panels:
            raise QuadratureError(f"Quadrature did not converge: change {change:.2e} with {panels} panels")
        previous = current
